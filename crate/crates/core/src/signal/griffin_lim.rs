use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::stft::{istft, stft_complex, AudioClip, FftPair, MagnitudeSpectrogram, StftConfig};
use super::SignalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    /// Seed for the initial random phases.
    pub seed: u64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self { iterations: 64, seed: 0 }
    }
}

/// Weights that turn a half-spectrum sum into the full-spectrum sum.
fn bin_weight(k: usize, n_bins: usize) -> f64 {
    if k == 0 || k == n_bins - 1 {
        1.0
    } else {
        2.0
    }
}

/// `‖ |S| − target ‖_F / ‖target‖_F` over the full (two-sided) spectrum.
pub fn spectral_convergence(target: &MagnitudeSpectrogram, estimate: &MagnitudeSpectrogram) -> f64 {
    let n_bins = target.n_bins();
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in target.frames.iter().zip(&estimate.frames) {
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            let w = bin_weight(k, n_bins);
            num += w * (x - y) * (x - y);
            den += w * x * x;
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Griffin-Lim reconstruction, also returning the spectral-convergence
/// error measured after each iteration.
pub fn griffin_lim_with_trace(
    mag: &MagnitudeSpectrogram,
    cfg: &StftConfig,
    gl: &GriffinLimConfig,
) -> Result<(AudioClip, Vec<f64>), SignalError> {
    cfg.validate()?;
    if gl.iterations == 0 {
        return Err(SignalError::InvalidConfig("griffin-lim needs at least one iteration".into()));
    }
    if mag.n_bins() != cfg.n_bins() {
        return Err(SignalError::Shape(format!("{} bins for n_fft {}", mag.n_bins(), cfg.n_fft)));
    }
    if mag.n_frames() == 0 {
        return Ok((AudioClip::silence(0, mag.sample_rate), vec![0.0; gl.iterations]));
    }
    let fft = FftPair::new(cfg.n_fft);
    let mut rng = ChaCha8Rng::seed_from_u64(gl.seed);
    let mut spectrum: Vec<Vec<Complex64>> = mag
        .frames
        .iter()
        .map(|f| f.iter().map(|&m| Complex64::from_polar(m, rng.gen_range(0.0..std::f64::consts::TAU))).collect())
        .collect();
    let mut errors = Vec::with_capacity(gl.iterations);
    let mut signal = Vec::new();
    for _ in 0..gl.iterations {
        signal = istft(&spectrum, cfg, &fft);
        let rebuilt = stft_complex(&signal, cfg, &fft);
        let estimate = MagnitudeSpectrogram {
            frames: rebuilt.iter().map(|f| f.iter().map(|c| c.norm()).collect()).collect(),
            sample_rate: mag.sample_rate,
        };
        errors.push(spectral_convergence(mag, &estimate));
        for ((target, current), out) in mag.frames.iter().zip(&rebuilt).zip(spectrum.iter_mut()) {
            for ((m, c), o) in target.iter().zip(current).zip(out.iter_mut()) {
                let norm = c.norm();
                let phase = if norm > 0.0 { c / norm } else { Complex64::new(1.0, 0.0) };
                *o = phase * *m;
            }
        }
    }
    Ok((AudioClip::new(signal, mag.sample_rate)?, errors))
}

pub fn griffin_lim(mag: &MagnitudeSpectrogram, cfg: &StftConfig, gl: &GriffinLimConfig) -> Result<AudioClip, SignalError> {
    griffin_lim_with_trace(mag, cfg, gl).map(|(audio, _)| audio)
}
