use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::griffin_lim::{griffin_lim, GriffinLimConfig};
use super::stft::{stft, AudioClip, MagnitudeSpectrogram, StftConfig};
use super::SignalError;

pub const DEFAULT_N_MELS: usize = 80;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale, one row per band.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    n_fft: usize,
    sample_rate: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { n_mels: DEFAULT_N_MELS, sample_rate: 16_000, f_min: 0.0, f_max: 8_000.0 }
    }
}

pub fn mel_filterbank(
    n_fft: usize,
    n_mels: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank, SignalError> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels < 2 {
        return Err(SignalError::InvalidConfig(format!("n_mels {n_mels} < 2")));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(SignalError::InvalidConfig(format!(
            "need 0 ≤ f_min < f_max ≤ {nyquist}, got {f_min}..{f_max}"
        )));
    }
    if n_fft < 2 {
        return Err(SignalError::InvalidConfig(format!("n_fft {n_fft} too small")));
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        let row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let up = (f - left) / (center - left);
                let down = (right - f) / (right - center);
                up.min(down).max(0.0)
            })
            .collect();
        if row.iter().all(|&w| w == 0.0) {
            return Err(SignalError::InvalidConfig(format!(
                "mel band {m} ({left:.1}–{right:.1} Hz) falls between FFT bins; use fewer mels or a larger n_fft"
            )));
        }
        weights.push(row);
    }
    Ok(MelFilterbank { weights, centers_hz: points[1..=n_mels].to_vec(), n_fft, sample_rate })
}

impl MelFilterbank {
    pub fn from_config(n_fft: usize, cfg: &MelConfig) -> Result<Self, SignalError> {
        mel_filterbank(n_fft, cfg.n_mels, cfg.sample_rate, cfg.f_min, cfg.f_max)
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// `bank · spectrum` for one frame.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(spectrum).map(|(w, s)| w * s).sum())
            .collect()
    }

    /// Minimum-norm pseudo-inverse, `n_bins × n_mels`.
    pub fn pseudo_inverse(&self) -> Result<Vec<Vec<f64>>, SignalError> {
        let (m, n) = (self.n_mels(), self.n_bins());
        let bank = DMatrix::from_fn(m, n, |i, j| self.weights[i][j]);
        let pinv = bank
            .pseudo_inverse(1e-10)
            .map_err(|e| SignalError::InvalidConfig(format!("mel pseudo-inverse: {e}")))?;
        Ok((0..n).map(|i| (0..m).map(|j| pinv[(i, j)]).collect()).collect())
    }
}

/// `T_y × n_mels` log-amplitude frames, every entry ≥ `ln(log_floor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub frames: Vec<Vec<f64>>,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn new(frames: Vec<Vec<f64>>, n_mels: usize) -> Result<Self, SignalError> {
        for (t, f) in frames.iter().enumerate() {
            if f.len() != n_mels {
                return Err(SignalError::Shape(format!("frame {t} has {} bands, expected {n_mels}", f.len())));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(SignalError::Shape(format!("frame {t} is not finite")));
            }
        }
        Ok(Self { frames, n_mels })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Band with the largest mean linear energy.
    pub fn dominant_band(&self) -> usize {
        let mut totals = vec![0.0; self.n_mels];
        for f in &self.frames {
            for (t, v) in totals.iter_mut().zip(f) {
                *t += v.exp();
            }
        }
        totals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }
}

pub fn melspectrogram(
    audio: &AudioClip,
    cfg: &StftConfig,
    bank: &MelFilterbank,
    log_floor: f64,
) -> Result<MelSpectrogram, SignalError> {
    if bank.n_fft() != cfg.n_fft {
        return Err(SignalError::Shape(format!("bank built for n_fft {}, stft uses {}", bank.n_fft(), cfg.n_fft)));
    }
    if !(log_floor > 0.0) {
        return Err(SignalError::InvalidConfig("log floor must be positive".into()));
    }
    let mag = stft(audio, cfg)?;
    let frames = mag
        .frames
        .iter()
        .map(|f| bank.apply(f).into_iter().map(|e| e.max(log_floor).ln()).collect())
        .collect();
    Ok(MelSpectrogram { frames, n_mels: bank.n_mels() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelInversion {
    pub log_floor: f64,
    pub griffin_lim: GriffinLimConfig,
}

impl Default for MelInversion {
    fn default() -> Self {
        Self { log_floor: DEFAULT_LOG_FLOOR, griffin_lim: GriffinLimConfig::default() }
    }
}

/// Mel → linear magnitudes via the bank's pseudo-inverse clamped at zero,
/// then Griffin-Lim. Output samples are clamped to `[-1, 1]`.
pub fn mel_to_audio(
    mel: &MelSpectrogram,
    cfg: &StftConfig,
    bank: &MelFilterbank,
    inversion: &MelInversion,
) -> Result<AudioClip, SignalError> {
    if mel.n_mels != bank.n_mels() || bank.n_fft() != cfg.n_fft {
        return Err(SignalError::Shape(format!(
            "mel has {} bands, bank {} bands for n_fft {} (stft {})",
            mel.n_mels,
            bank.n_mels(),
            bank.n_fft(),
            cfg.n_fft
        )));
    }
    let pinv = bank.pseudo_inverse()?;
    let floor_cut = inversion.log_floor * (1.0 + 1e-9);
    let frames = mel
        .frames
        .iter()
        .map(|f| {
            let linear: Vec<f64> = f.iter().map(|&v| { let e = v.exp(); if e <= floor_cut { 0.0 } else { e } }).collect();
            pinv.iter().map(|row| row.iter().zip(&linear).map(|(p, l)| p * l).sum::<f64>().max(0.0)).collect()
        })
        .collect();
    let mag = MagnitudeSpectrogram::new(frames, bank.sample_rate())?;
    let audio = griffin_lim(&mag, cfg, &inversion.griffin_lim)?;
    let clamped = audio.samples().iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    AudioClip::new(clamped, audio.sample_rate())
}
