//! Audio ↔ spectrogram conversions and the Griffin-Lim vocoder.

mod griffin_lim;
mod mel;
mod stft;
mod wav;

pub use griffin_lim::{griffin_lim, griffin_lim_with_trace, spectral_convergence, GriffinLimConfig};
pub use mel::{
    hz_to_mel, mel_filterbank, mel_to_audio, mel_to_hz, melspectrogram, MelConfig, MelFilterbank, MelInversion,
    MelSpectrogram, DEFAULT_LOG_FLOOR, DEFAULT_N_MELS,
};
pub use stft::{stft, AudioClip, MagnitudeSpectrogram, StftConfig, Window, DEFAULT_SAMPLE_RATE};
pub use wav::{read_wav, wav_from_bytes, wav_to_bytes, write_wav};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("clip too short: {len} samples, need at least n_fft = {n_fft}")]
    ClipTooShort { len: usize, n_fft: usize },
    #[error("invalid parameters: {0}")]
    InvalidConfig(String),
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
