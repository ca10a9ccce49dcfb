use serde::{Deserialize, Serialize};

use super::model::Direction;
use super::TtsError;
use crate::signal::MelSpectrogram;

/// Loss components. `total = l_fwd + l_bwd + l_postnet + lambda·l_consistency`;
/// the stop-gate term is reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TtsLoss {
    pub l_fwd: f64,
    pub l_bwd: f64,
    pub l_postnet: f64,
    pub l_consistency: f64,
    pub lambda: f64,
    pub total: f64,
    pub l_stop: f64,
}

impl TtsLoss {
    pub(crate) fn assemble(l_fwd: f64, l_bwd: f64, l_postnet: f64, l_consistency: f64, lambda: f64, l_stop: f64) -> Self {
        let total = l_fwd + l_bwd + l_postnet + lambda * l_consistency;
        Self { l_fwd, l_bwd, l_postnet, l_consistency, lambda, total, l_stop }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_fwd, self.l_bwd, self.l_postnet, self.l_consistency, self.total, self.l_stop].iter().all(|v| v.is_finite())
    }

    /// Component-wise mean over a batch.
    pub fn mean(items: &[TtsLoss]) -> TtsLoss {
        let n = items.len().max(1) as f64;
        let avg = |f: fn(&TtsLoss) -> f64| items.iter().map(f).sum::<f64>() / n;
        let lambda = items.first().map_or(0.0, |l| l.lambda);
        Self::assemble(avg(|l| l.l_fwd), avg(|l| l.l_bwd), avg(|l| l.l_postnet), avg(|l| l.l_consistency), lambda, avg(|l| l.l_stop))
    }
}

/// Outputs of one teacher-forced decoder pass, in decoding order: for the
/// backward decoder `frames[0]` predicts the last target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderRun {
    pub direction: Direction,
    pub frames: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    /// Stop logits in decoding order; may be empty.
    pub stop_logits: Vec<f64>,
}

impl DecoderRun {
    /// Rows re-indexed so position `t` refers to target frame `t`.
    pub fn in_time_order(rows: &[Vec<f64>], direction: Direction) -> Vec<Vec<f64>> {
        match direction {
            Direction::Forward => rows.to_vec(),
            Direction::Backward => rows.iter().rev().cloned().collect(),
        }
    }
}

fn mse(pred: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, y) in pred.iter().zip(target) {
        for (a, b) in p.iter().zip(y) {
            sum += (a - b) * (a - b);
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

fn check_shape(what: &str, rows: &[Vec<f64>], t_y: usize, width: usize) -> Result<(), TtsError> {
    if rows.len() != t_y || rows.iter().any(|r| r.len() != width) {
        return Err(TtsError::LengthMismatch(format!("{what}: expected {t_y} rows of width {width}")));
    }
    Ok(())
}

/// Stop targets: 0 for every frame but the last.
pub(crate) fn stop_targets(t_y: usize) -> Vec<f64> {
    (0..t_y).map(|t| if t + 1 == t_y { 1.0 } else { 0.0 }).collect()
}

fn bce_with_logits(logits: &[f64], targets: &[f64]) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum();
    sum / logits.len().max(1) as f64
}

/// Training loss from already-computed decoder outputs.
pub fn compute_loss(
    target: &MelSpectrogram,
    fwd: &DecoderRun,
    bwd: &DecoderRun,
    mel_after: &[Vec<f64>],
    lambda: f64,
) -> Result<TtsLoss, TtsError> {
    if fwd.direction != Direction::Forward || bwd.direction != Direction::Backward {
        return Err(TtsError::LengthMismatch("decoder runs passed in the wrong order".into()));
    }
    let t_y = target.n_frames();
    if t_y == 0 {
        return Err(TtsError::LengthMismatch("empty target".into()));
    }
    let n = target.n_mels;
    check_shape("forward frames", &fwd.frames, t_y, n)?;
    check_shape("backward frames", &bwd.frames, t_y, n)?;
    check_shape("post-net output", mel_after, t_y, n)?;
    let width = fwd.states.first().map_or(0, Vec::len);
    check_shape("forward states", &fwd.states, t_y, width)?;
    check_shape("backward states", &bwd.states, t_y, width)?;

    let y = &target.frames;
    let bwd_frames = DecoderRun::in_time_order(&bwd.frames, Direction::Backward);
    let bwd_states = DecoderRun::in_time_order(&bwd.states, Direction::Backward);
    let l_c = fwd
        .states
        .iter()
        .zip(&bwd_states)
        .map(|(a, b)| a.iter().zip(b).map(|(x, z)| (x - z) * (x - z)).sum::<f64>())
        .sum::<f64>()
        / t_y as f64;
    let l_stop = if fwd.stop_logits.len() == t_y { bce_with_logits(&fwd.stop_logits, &stop_targets(t_y)) } else { 0.0 };
    Ok(TtsLoss::assemble(mse(&fwd.frames, y), mse(&bwd_frames, y), mse(mel_after, y), l_c, lambda, l_stop))
}
