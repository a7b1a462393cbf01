"""Fetal ECG extraction from abdominal recordings.

A numpy/scipy library covering the full pipeline: signal conditioning,
adversarial training of a 1D translation model, extraction, R-peak
detection, and heart-rate-variability analytics, with a synthetic-mixture
oracle for verification.
"""

__version__ = "0.1.0"

from .signals import (MultiSignal, SegmentBatch, Signal, mean_power,
                      minmax_normalize, pearson_corr, psd, resample)
from .preprocess import (FilterSpec, PreprocessConfig, butterworth_coeffs,
                         moving_average, preprocess_fecg, preprocess_mecg,
                         remove_baseline_poly, segment, stitch_segments,
                         zero_phase_filter)
from .analysis import (DetectionScore, EvalReport, HrvReport, PeakList,
                       compare_hrv, engzee_detect, eval_extraction,
                       hrv_report, match_peaks)
from .synth import (EcgTemplateParams, MixtureSpec, SyntheticRecording,
                    coincidence_fraction, gen_coincidence_stress,
                    gen_recording, gen_template_train)
from .cyclegan import (CycleGanModel, LossWeights, SegmentDataset,
                       TrainConfig, extract_fecg, train, train_step)
from .records import (FoldPlan, RecordFile, load_segment_batch, make_folds,
                      read_record, save_segment_batch, write_fold_manifests,
                      write_record)
