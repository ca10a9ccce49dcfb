use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SignalError;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, SignalError> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::InvalidAudio(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Appends another clip recorded at the same rate.
    pub fn append(&mut self, other: &AudioClip) {
        self.samples.extend_from_slice(&other.samples);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    /// 50 ms frames with a 12.5 ms hop at 16 kHz.
    fn default() -> Self {
        Self { n_fft: 800, hop: 200, window: Window::Hann }
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, window: Window) -> Result<Self, SignalError> {
        let cfg = Self { n_fft, hop, window };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return Err(SignalError::InvalidConfig(format!("n_fft {} must be even and ≥ 2", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(SignalError::InvalidConfig(format!("hop {} outside 1..={}", self.hop, self.n_fft)));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced from `len` samples without padding.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }

    /// Samples covered by `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.n_fft
        }
    }
}

/// `T × (n_fft/2 + 1)` nonnegative magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub frames: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl MagnitudeSpectrogram {
    pub fn new(frames: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self, SignalError> {
        let bins = frames.first().map_or(0, Vec::len);
        for (t, f) in frames.iter().enumerate() {
            if f.len() != bins {
                return Err(SignalError::Shape(format!("frame {t} has {} bins, expected {bins}", f.len())));
            }
            if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SignalError::Shape(format!("frame {t} has a negative or non-finite magnitude")));
            }
        }
        Ok(Self { frames, sample_rate })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// Reusable forward/inverse FFT plans for one frame size.
pub(crate) struct FftPair {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    /// Half spectrum (bins `0..=n/2`) of a real frame.
    pub(crate) fn rfft(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n / 2 + 1);
        buf
    }

    /// Real signal whose spectrum is the Hermitian extension of `half`.
    pub(crate) fn irfft(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..half.len()].copy_from_slice(half);
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}

pub(crate) fn stft_complex(samples: &[f64], cfg: &StftConfig, fft: &FftPair) -> Vec<Vec<Complex64>> {
    let window = cfg.window.coefficients(cfg.n_fft);
    (0..cfg.frame_count(samples.len()))
        .map(|t| {
            let start = t * cfg.hop;
            let frame: Vec<f64> =
                samples[start..start + cfg.n_fft].iter().zip(&window).map(|(x, w)| x * w).collect();
            fft.rfft(&frame)
        })
        .collect()
}

/// Least-squares overlap-add inverse of a (possibly inconsistent) STFT.
pub(crate) fn istft(frames: &[Vec<Complex64>], cfg: &StftConfig, fft: &FftPair) -> Vec<f64> {
    let len = cfg.signal_len(frames.len());
    let window = cfg.window.coefficients(cfg.n_fft);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    for (t, spec) in frames.iter().enumerate() {
        let start = t * cfg.hop;
        let frame = fft.irfft(spec);
        for (i, (&y, &w)) in frame.iter().zip(&window).enumerate() {
            out[start + i] += w * y;
            norm[start + i] += w * w;
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > 1e-12 { *o / n } else { 0.0 };
    }
    out
}

/// Magnitude STFT without implicit padding.
pub fn stft(audio: &AudioClip, cfg: &StftConfig) -> Result<MagnitudeSpectrogram, SignalError> {
    cfg.validate()?;
    if audio.len() < cfg.n_fft {
        return Err(SignalError::ClipTooShort { len: audio.len(), n_fft: cfg.n_fft });
    }
    let fft = FftPair::new(cfg.n_fft);
    let frames = stft_complex(audio.samples(), cfg, &fft)
        .into_iter()
        .map(|f| f.iter().map(|c| c.norm()).collect())
        .collect();
    Ok(MagnitudeSpectrogram { frames, sample_rate: audio.sample_rate() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(n_fft: usize, hop: usize) -> StftConfig {
        StftConfig::new(n_fft, hop, Window::Rectangular).unwrap()
    }

    #[test]
    fn zero_clip_gives_zero_magnitudes() {
        let clip = AudioClip::silence(16_000, 16_000);
        let spec = stft(&clip, &StftConfig::default()).unwrap();
        assert_eq!(spec.n_frames(), (16_000 - 800) / 200 + 1);
        assert!(spec.frames.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn constant_signal_concentrates_in_dc() {
        let clip = AudioClip::new(vec![0.5; 1024], 16_000).unwrap();
        let spec = stft(&clip, &rect(256, 128)).unwrap();
        for frame in &spec.frames {
            assert!((frame[0] - 128.0).abs() < 1e-9, "{}", frame[0]);
            assert!(frame[1..].iter().all(|&m| m < 1e-9));
        }
    }

    #[test]
    fn on_bin_sine_peaks_at_its_bin() {
        let (n_fft, k, sr) = (256usize, 8usize, 16_000u32);
        let freq = k as f64 * sr as f64 / n_fft as f64;
        let samples = (0..2048).map(|n| (2.0 * PI * freq * n as f64 / sr as f64).sin()).collect();
        let spec = stft(&AudioClip::new(samples, sr).unwrap(), &rect(n_fft, 64)).unwrap();
        for frame in &spec.frames {
            let (peak, value) = frame
                .iter()
                .enumerate()
                .fold((0, 0.0), |best, (i, &m)| if m > best.1 { (i, m) } else { best });
            assert_eq!(peak, k);
            assert!((value - n_fft as f64 / 2.0).abs() < 1e-9, "{value}");
        }
    }

    #[test]
    fn short_clip_is_an_explicit_error() {
        let clip = AudioClip::new(vec![0.1; 100], 16_000).unwrap();
        assert!(matches!(stft(&clip, &rect(256, 64)), Err(SignalError::ClipTooShort { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(256, 0, Window::Hann).is_err());
        assert!(StftConfig::new(256, 257, Window::Hann).is_err());
        assert!(StftConfig::new(255, 64, Window::Hann).is_err());
        assert!(StftConfig::default().validate().is_ok());
    }

    #[test]
    fn audio_rejects_non_finite_samples() {
        assert!(AudioClip::new(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    fn energy_check(samples: &[f64], n_fft: usize) {
        let cfg = rect(n_fft, n_fft / 2);
        let fft = FftPair::new(n_fft);
        for (t, frame) in stft_complex(samples, &cfg, &fft).iter().enumerate() {
            // full-spectrum energy from the half spectrum
            let spectral: f64 = frame
                .iter()
                .enumerate()
                .map(|(k, c)| if k == 0 || k == n_fft / 2 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
                .sum();
            let start = t * cfg.hop;
            let time: f64 = samples[start..start + n_fft].iter().map(|x| x * x).sum();
            let rel = (spectral - n_fft as f64 * time).abs() / (n_fft as f64 * time).max(1e-300);
            assert!(rel < 1e-6, "frame {t}: rel {rel}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_holds_for_rectangular_window(samples in proptest::collection::vec(-1.0f64..1.0, 512..1500)) {
            energy_check(&samples, 256);
        }

        #[test]
        fn magnitude_is_sign_invariant(samples in proptest::collection::vec(-1.0f64..1.0, 300..700)) {
            let cfg = StftConfig::new(128, 32, Window::Hann).unwrap();
            let pos = stft(&AudioClip::new(samples.clone(), 16_000).unwrap(), &cfg).unwrap();
            let neg = stft(&AudioClip::new(samples.iter().map(|x| -x).collect(), 16_000).unwrap(), &cfg).unwrap();
            for (a, b) in pos.frames.iter().flatten().zip(neg.frames.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn istft_inverts_consistent_stft(samples in proptest::collection::vec(-1.0f64..1.0, 600..900)) {
            let cfg = StftConfig::new(128, 32, Window::Hann).unwrap();
            let fft = FftPair::new(128);
            let spec = stft_complex(&samples, &cfg, &fft);
            let back = istft(&spec, &cfg, &fft);
            // first sample sits under a zero window coefficient only
            for i in 1..back.len() {
                prop_assert!((back[i] - samples[i]).abs() < 1e-9, "sample {}", i);
            }
        }
    }
}
