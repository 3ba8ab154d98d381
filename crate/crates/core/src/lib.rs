//! Enhancement of crowd-sourced recordings of one event.
//!
//! Clips are aligned by landmark fingerprinting, cut into segments of
//! constant coverage, and each time-frequency cell is rebuilt from the
//! recordings whose magnitude stays near the cross-clip median.

pub mod align;
pub mod audio;
pub mod baselines;
pub mod enhance;
pub mod error;
pub mod metrics;
pub mod spectral;
pub mod synth;
pub mod timeline;

pub use align::{align_all, align_pair, AlignConfig, Alignment, AlignmentResult};
pub use audio::{load_wav, resample, save_wav, AudioClip, WavFormat};
pub use baselines::Method;
pub use enhance::{enhance_segment, enhance_timeline, CellMask, EnhanceConfig, PhaseMode, Segment};
pub use error::{Error, Result};
pub use metrics::{aggregate_trials, si_snr, EvalReport, TrialMetadata};
pub use spectral::{istft, stft, Spectrogram, StftParams};
pub use synth::{synthesize_mixture, MixSpec, Mixture};
pub use timeline::{ClipReport, Timeline, TimelineEntry};
