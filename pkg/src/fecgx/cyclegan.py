"""Adversarial training system: weighted losses, update schedule, extraction.

Two generators (G1: abdominal 4-ch -> fetal 1-ch, G2: the reverse) and two
patch discriminators are trained with a least-squares adversarial objective
augmented by three signal-fidelity terms: a spectral term (PSD correlation),
a temporal term (sample correlation) and a power term (relative power
mismatch), weighted (p, q, r) = (2, 4, 1), plus a cycle-consistency
reconstruction loss tying the generators together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import engine as E
from .errors import ShapeError
from .signals import pearson_corr

__all__ = [
    "LossWeights", "TrainConfig", "SegmentDataset", "CycleGanModel",
    "l1_adversarial_loss", "spectral_loss", "temporal_loss", "power_loss",
    "combined_adversarial_loss", "cycle_loss", "discriminator_loss",
    "train_step", "train", "extract_fecg", "validation_pcc",
    "SPEC_CORR_FLOOR",
]

# Floor for the reference-correlation denominator of the spectral terms;
# keeps near-orthogonal reference spectra from blowing the loss up.
SPEC_CORR_FLOOR = 0.05

_DEGENERATE_STD = 1e-12


@dataclass
class LossWeights:
    """Weights of the combined adversarial objective (defaults from the
    ablation: p=2 spectral, q=4 temporal, r=1 power)."""

    p: float = 2.0
    q: float = 4.0
    r: float = 1.0
    cycle: float = 1.0

    def __post_init__(self):
        if min(self.p, self.q, self.r, self.cycle) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 1e-5
    batch_size: int = 16
    disc_steps: int = 1  # discriminator updates per generator update
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm needs it)")
        if self.disc_steps < 1:
            raise ValueError("disc_steps must be >= 1")


@dataclass
class SegmentDataset:
    """Aligned (mECG, fECG) segment pairs split into train and validation."""

    x_train: np.ndarray  # (N, 4, L)
    y_train: np.ndarray  # (N, 1, L)
    x_val: np.ndarray
    y_val: np.ndarray

    def __post_init__(self):
        if len(self.x_train) == 0 or len(self.x_val) == 0:
            raise ValueError("train/validation split must both be non-empty")
        if len(self.x_train) != len(self.y_train) or len(self.x_val) != len(self.y_val):
            raise ShapeError("paired batches must align")


class CycleGanModel:
    """The four networks plus their optimizers."""

    def __init__(self, n_blocks=13, seed=0, learning_rate=1e-5,
                 mecg_channels=4, fecg_channels=1, dtype=np.float32):
        ss = np.random.SeedSequence(seed)
        seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(4)]
        self.G1 = nn.build_generator(mecg_channels, fecg_channels,
                                     n_blocks=n_blocks, seed=seeds[0], dtype=dtype)
        self.G2 = nn.build_generator(fecg_channels, mecg_channels,
                                     n_blocks=n_blocks, seed=seeds[1], dtype=dtype)
        self.D1 = nn.build_discriminator(fecg_channels, seed=seeds[2], dtype=dtype)
        self.D2 = nn.build_discriminator(mecg_channels, seed=seeds[3], dtype=dtype)
        self.gen_opt = nn.Adam(self.G1.parameters() + self.G2.parameters(),
                               lr=learning_rate)
        self.disc_opt = nn.Adam(self.D1.parameters() + self.D2.parameters(),
                                lr=learning_rate)
        self.config = {
            "kind": "cyclegan", "n_blocks": n_blocks, "seed": seed,
            "mecg_channels": mecg_channels, "fecg_channels": fecg_channels,
        }

    def _nets(self):
        return (self.G1, self.G2, self.D1, self.D2)

    def train_mode(self):
        for net in self._nets():
            net.train()

    def eval_mode(self):
        for net in self._nets():
            net.eval()

    def state_tensors(self) -> list[np.ndarray]:
        out = []
        for net in self._nets():
            out.extend(p.data for p in net.parameters())
            out.extend(net.buffers())
        return out

    def save(self, path):
        nn.save_checkpoint(path, self.config, self.state_tensors())

    @classmethod
    def load(cls, path, learning_rate=1e-5) -> "CycleGanModel":
        arch, tensors = nn.load_checkpoint(path)
        if arch.get("kind") != "cyclegan":
            raise ValueError(f"checkpoint holds a {arch.get('kind')!r}, not a cyclegan model")
        model = cls(n_blocks=arch["n_blocks"], seed=arch["seed"],
                    learning_rate=learning_rate,
                    mecg_channels=arch["mecg_channels"],
                    fecg_channels=arch["fecg_channels"])
        it = iter(tensors)
        for net in model._nets():
            for p in net.parameters():
                arr = next(it)
                if arr.shape != p.data.shape:
                    raise ValueError("checkpoint tensor shape mismatch")
                p.data = arr.astype(p.data.dtype)
            for buf in net.buffers():
                buf[...] = next(it)
        return model


# ---------------------------------------------------------------------------
# PSD helpers shared by the spectral loss (all match signals.psd bin for bin)

def _np_psd(x: np.ndarray) -> np.ndarray:
    """Vectorized periodogram over the last axis (constant w.r.t. the graph)."""
    n = x.shape[-1]
    spec = np.fft.rfft(x, axis=-1)
    p = (spec.real**2 + spec.imag**2) / (n * n)
    p[..., 1:] *= 2.0
    if n % 2 == 0:
        p[..., -1] *= 0.5
    return p


def _as_batch(x, channels_first=True) -> np.ndarray:
    """Lift a single segment (L,) or (C, L) to (1, C, L)."""
    arr = x.data if isinstance(x, E.Tensor) else np.asarray(x)
    if arr.ndim == 1:
        return arr[None, None, :]
    if arr.ndim == 2:
        return arr[None, :, :]
    return arr


def _lift(x) -> E.Tensor:
    if isinstance(x, E.Tensor):
        if x.data.ndim == 3:
            return x
        out = E.Tensor(_as_batch(x))
        out._parents, out._backward = (x,), (lambda g: ((x, g.reshape(x.data.shape)),))
        return out
    return E.Tensor(_as_batch(x))


def _masked_mean(per_sample: E.Tensor, mask: np.ndarray) -> E.Tensor:
    m = mask.astype(per_sample.data.dtype)
    return E.tensor_sum(E.mul(per_sample, m)) * (1.0 / mask.sum())


def _batch_pearson(const: np.ndarray, tracked: E.Tensor, axes) -> tuple[E.Tensor, np.ndarray]:
    """Per-sample correlation of a constant batch against a tracked one.

    Returns a (B,) tensor and the validity mask (False where either side is
    constant and the coefficient is undefined).
    """
    b = const.shape[0]
    cc = const - const.mean(axis=axes, keepdims=True)
    norm_c = np.sqrt((cc * cc).sum(axis=axes))
    std_t = tracked.data.reshape(b, -1).std(axis=1)
    mask = (norm_c > 0) & (std_t > _DEGENERATE_STD)
    tc = E.sub(tracked, E.mean(tracked, axis=axes, keepdims=True))
    sq = E.tensor_sum(E.square(tc), axis=axes)
    # masked lanes get a harmless +1 inside the sqrt so no 0-derivative blowup
    safe = np.where(mask, 0.0, 1.0)
    denom = E.mul(E.sqrt(E.add(sq, safe)), np.where(mask, norm_c, 1.0))
    num = E.tensor_sum(E.mul(tc, cc), axis=axes)
    return E.div(num, denom), mask


def l1_adversarial_loss(d1_out_on_g1x, d2_out_on_g2y) -> E.Tensor:
    """Least-squares generator term: [1 - D1(G1(X))]^2 + [1 - D2(G2(Y))]^2.

    (Named after the loss it replaced; the form is quadratic, not absolute.)
    Inputs are the discriminators' patch-mean scalars, per sample.
    """
    d1 = d1_out_on_g1x if isinstance(d1_out_on_g1x, E.Tensor) else E.Tensor(np.asarray(d1_out_on_g1x, dtype=np.float64))
    d2 = d2_out_on_g2y if isinstance(d2_out_on_g2y, E.Tensor) else E.Tensor(np.asarray(d2_out_on_g2y, dtype=np.float64))
    return E.add(E.mean(E.square(E.sub(1.0, d1))),
                 E.mean(E.square(E.sub(1.0, d2))))


def _spectral_batch(target: np.ndarray, generated: E.Tensor,
                    input_ref: np.ndarray) -> tuple[E.Tensor | None, np.ndarray]:
    psd_t = _np_psd(target).mean(axis=1)           # (B, K)
    psd_ref = _np_psd(input_ref).mean(axis=1)      # (B, K) mean across channels
    psd_g = E.mean(E.power_spectrum(generated), axis=1)
    b = psd_t.shape[0]
    ref_mask = (psd_t.std(axis=1) > 0) & (psd_ref.std(axis=1) > 0)
    denom = np.empty(b)
    for i in range(b):
        if ref_mask[i]:
            denom[i] = max(pearson_corr(psd_t[i], psd_ref[i]), SPEC_CORR_FLOOR)
        else:
            denom[i] = 1.0
    corr, g_mask = _batch_pearson(psd_t, psd_g, axes=(1,))
    mask = ref_mask & g_mask
    if not mask.any():
        return None, mask
    per = E.div(E.sub(1.0, corr), denom)
    return _masked_mean(per, mask), mask


def spectral_loss(target, generated, input_ref):
    """Spectral fidelity: (1 - rho(PSD(target), PSD(generated))) scaled by the
    reference correlation rho(PSD(target), PSD(input)) (clamped at 0.05).

    ``input_ref`` may be multichannel; its PSD is averaged across channels.
    Returns None (skip-with-flag) when any involved PSD is degenerate.
    """
    loss, mask = _spectral_batch(_as_batch(target), _lift(generated),
                                 _as_batch(input_ref))
    return loss


def _temporal_batch(target: np.ndarray, generated: E.Tensor) -> tuple[E.Tensor | None, np.ndarray]:
    corr, mask = _batch_pearson(target, generated, axes=(1, 2))
    if not mask.any():
        return None, mask
    return _masked_mean(E.sub(1.0, corr), mask), mask


def temporal_loss(target, generated):
    """Waveform fidelity: 1 - rho(target, generated); in [0, 2].

    Shift-invariant like the correlation itself. Constant segments are
    skipped with a flag (None return) since rho is undefined there.
    """
    loss, mask = _temporal_batch(_as_batch(target), _lift(generated))
    return loss


def _power_batch(target: np.ndarray, generated: E.Tensor) -> tuple[E.Tensor | None, np.ndarray]:
    b = target.shape[0]
    p_t = (target.reshape(b, -1) ** 2).mean(axis=1)
    mask = p_t > 0
    if not mask.any():
        return None, mask
    p_g = E.mean(E.square(generated), axis=(1, 2))
    per = E.absolute(E.div(E.sub(p_t, p_g), np.where(mask, p_t, 1.0)))
    return _masked_mean(per, mask), mask


def power_loss(target, generated):
    """Relative power mismatch |(P_target - P_generated) / P_target|.

    Zero-power targets are skipped with a flag (None return).
    """
    loss, mask = _power_batch(_as_batch(target), _lift(generated))
    return loss


def combined_adversarial_loss(parts, weights: LossWeights | None = None):
    """Weighted sum: L1 + p*spectral + q*temporal + r*power.

    ``parts`` maps the four component names to scalars/tensors; None
    components (all-skipped batches) contribute nothing.
    """
    w = weights or LossWeights()

    def get(name):
        val = parts.get(name) if isinstance(parts, dict) else getattr(parts, name)
        return val

    total = get("l1")
    for name, weight in (("spec", w.p), ("temp", w.q), ("power", w.r)):
        val = get(name)
        if val is not None:
            total = E.add(total, E.mul(val, weight))
    return total


def _l1_mean(a: E.Tensor, b_const: np.ndarray) -> E.Tensor:
    return E.mean(E.absolute(E.sub(a, b_const)))


def cycle_loss(x_batch, y_batch, g1, g2) -> E.Tensor:
    """Reconstruction error of both cycles, mean absolute per element:
    |G2(G1(x)) - x| + |G1(G2(y)) - y|."""
    x = _as_batch(x_batch)
    y = _as_batch(y_batch)
    rec_x = g2(g1(E.Tensor(x)))
    rec_y = g1(g2(E.Tensor(y)))
    return E.add(_l1_mean(rec_x, x), _l1_mean(rec_y, y))


def discriminator_loss(d, real_batch, fake_batch) -> E.Tensor:
    """Least-squares real-vs-fake objective: (D(real)-1)^2 + D(fake)^2.

    The fake batch is detached so no gradient reaches the generator that
    produced it.
    """
    real = E.Tensor(_as_batch(real_batch))
    fake = fake_batch.detach() if isinstance(fake_batch, E.Tensor) else E.Tensor(_as_batch(fake_batch))
    d_real = d.scalar(real)
    d_fake = d.scalar(fake)
    return E.add(E.mean(E.square(E.sub(d_real, 1.0))),
                 E.mean(E.square(d_fake)))


def train_step(model: CycleGanModel, x_batch: np.ndarray, y_batch: np.ndarray,
               weights: LossWeights | None = None, disc_steps: int = 1) -> dict:
    """One training iteration: ``disc_steps`` discriminator updates on the
    batch, then a joint generator update with the full weighted objective.

    Returns every loss component for logging. Raises FloatingPointError on a
    non-finite loss.
    """
    w = weights or LossWeights()
    model.train_mode()
    dtype = model.G1.parameters()[0].data.dtype
    x_batch = np.ascontiguousarray(x_batch, dtype=dtype)
    y_batch = np.ascontiguousarray(y_batch, dtype=dtype)

    # Fakes are generated once per iteration; the discriminators see them
    # detached, the generator phase reuses the same graph after D updates.
    fake_y = model.G1(E.Tensor(x_batch))
    fake_x = model.G2(E.Tensor(y_batch))

    j_d = 0.0
    for _ in range(disc_steps):
        d_loss = E.add(discriminator_loss(model.D1, y_batch, fake_y),
                       discriminator_loss(model.D2, x_batch, fake_x))
        model.disc_opt.zero_grad()
        d_loss.backward()
        model.disc_opt.step()
        j_d = float(d_loss.data)

    adv = l1_adversarial_loss(model.D1.scalar(fake_y), model.D2.scalar(fake_x))
    rec_x = model.G2(fake_y)
    rec_y = model.G1(fake_x)
    cyc = E.add(_l1_mean(rec_x, x_batch), _l1_mean(rec_y, y_batch))

    spec_y, _ = _spectral_batch(y_batch, fake_y, x_batch)
    spec_x, _ = _spectral_batch(x_batch, fake_x, y_batch)
    temp_y, _ = _temporal_batch(y_batch, fake_y)
    temp_x, _ = _temporal_batch(x_batch, fake_x)
    pow_y, _ = _power_batch(y_batch, fake_y)
    pow_x, _ = _power_batch(x_batch, fake_x)

    def _pair(a, b):
        if a is None and b is None:
            return None
        if a is None:
            return b
        if b is None:
            return a
        return E.add(a, b)

    spec = _pair(spec_y, spec_x)
    temp = _pair(temp_y, temp_x)
    power = _pair(pow_y, pow_x)

    j_g = E.add(adv, E.mul(cyc, w.cycle))
    for term, weight in ((spec, w.p), (temp, w.q), (power, w.r)):
        if term is not None:
            j_g = E.add(j_g, E.mul(term, weight))

    model.gen_opt.zero_grad()
    j_g.backward()
    model.gen_opt.step()

    report = {
        "j_d": j_d,
        "j_g": float(j_g.data),
        "l_l1": float(adv.data),
        "l_spec": 0.0 if spec is None else float(spec.data),
        "l_temp": 0.0 if temp is None else float(temp.data),
        "l_power": 0.0 if power is None else float(power.data),
        "cycle": float(cyc.data),
    }
    for key, val in report.items():
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite loss component {key!r}")
    return report


def extract_fecg(model: CycleGanModel, mecg_batch: np.ndarray,
                 chunk: int = 64) -> np.ndarray:
    """Run the abdominal->fetal generator in eval mode.

    Input must be preprocessed, normalized (range [0, 1]) segments of shape
    (B, 4, L); output is (B, 1, L) in [0, 1]. Deterministic: eval mode uses
    running batch-norm statistics and no dropout.
    """
    mecg_batch = np.asarray(mecg_batch)
    if mecg_batch.ndim != 3:
        raise ShapeError("expected (B, channels, length) segments")
    lo, hi = float(mecg_batch.min()), float(mecg_batch.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(
            f"input range [{lo:.3g}, {hi:.3g}] is not normalized to [0, 1]; "
            "run the preprocessing chain first")
    model.eval_mode()
    dtype = model.G1.parameters()[0].data.dtype
    outs = []
    with E.no_grad():
        for i in range(0, len(mecg_batch), chunk):
            part = mecg_batch[i:i + chunk].astype(dtype, copy=False)
            outs.append(model.G1(E.Tensor(part)).data)
    return np.concatenate(outs, axis=0)


def validation_pcc(model: CycleGanModel, x_val: np.ndarray,
                   y_val: np.ndarray) -> float:
    """Mean per-segment correlation of extracted vs reference segments."""
    pred = extract_fecg(model, x_val)
    scores = []
    for i in range(len(pred)):
        a = pred[i, 0].astype(np.float64)
        b = y_val[i, 0].astype(np.float64)
        if a.std() > 0 and b.std() > 0:
            scores.append(pearson_corr(a, b))
    return float(np.mean(scores)) if scores else 0.0


def train(model: CycleGanModel, dataset: SegmentDataset, cfg: TrainConfig,
          weights: LossWeights | None = None, checkpoint_path=None,
          log_path=None) -> list[dict]:
    """Run the full schedule for ``cfg.epochs`` epochs.

    Tracks per-epoch validation correlation and persists the
    best-by-validation checkpoint when ``checkpoint_path`` is given. Returns
    the per-epoch history; also writes it as CSV to ``log_path`` if given.
    """
    w = weights or LossWeights()
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset.x_train)
    history = []
    best_pcc = -np.inf
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sums = None
        steps = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue  # batch norm cannot run on a single sample
            try:
                report = train_step(model, dataset.x_train[idx],
                                    dataset.y_train[idx], weights=w,
                                    disc_steps=cfg.disc_steps)
            except FloatingPointError as err:
                ref = checkpoint_path or "<no checkpoint persisted>"
                raise FloatingPointError(
                    f"{err} at epoch {epoch}; last good checkpoint: {ref}") from err
            sums = report if sums is None else \
                {k: sums[k] + v for k, v in report.items()}
            steps += 1
        if steps == 0:
            raise ValueError("training set smaller than one usable batch")
        row = {k: v / steps for k, v in sums.items()}
        row["epoch"] = epoch
        row["val_pcc"] = validation_pcc(model, dataset.x_val, dataset.y_val)
        history.append(row)
        if checkpoint_path is not None and row["val_pcc"] > best_pcc:
            best_pcc = row["val_pcc"]
            model.save(checkpoint_path)
    if log_path is not None:
        cols = ["epoch", "j_d", "j_g", "l_l1", "l_spec", "l_temp", "l_power",
                "cycle", "val_pcc"]
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in history:
                writer.writerow([row[c] for c in cols])
    return history
