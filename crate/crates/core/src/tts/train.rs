use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::TrainingPair;
use super::loss::{stop_targets, DecoderRun, TtsLoss};
use super::model::{encode_graph, postnet_graph, run_teacher_forced, AttentionRecord, Direction, ModelVars};
use super::params::TtsModelParams;
use super::TtsError;
use crate::nn::{adam_step, AdamState, Graph, LrSchedule, Tensor, Var};

/// What `batch_gradients` differentiates: `total + stop_weight·l_stop`,
/// with teacher-forced previous frames zeroed at rate `frame_dropout`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub lambda: f64,
    pub stop_weight: f64,
    pub frame_dropout: f64,
}

impl Objective {
    /// Exactly `l_fwd + l_bwd + l_postnet + lambda·l_consistency`.
    pub fn composite(lambda: f64) -> Self {
        Self { lambda, stop_weight: 0.0, frame_dropout: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lambda: f64,
    /// Weight of the stop-gate cross-entropy added to the optimized objective.
    pub stop_weight: f64,
    /// Probability of replacing a teacher-forced previous frame with zeros.
    pub frame_dropout: f64,
    pub schedule: LrSchedule,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 32, lambda: 1.0, stop_weight: 1.0, frame_dropout: 0.5, schedule: LrSchedule::default(), grad_clip: Some(1.0), seed: 0 }
    }
}

struct GraphLoss {
    objective: Var,
    l_fwd: Var,
    l_bwd: Var,
    l_post: Var,
    l_c: Var,
    l_stop: Option<Var>,
}

fn example_loss(
    g: &mut Graph,
    vars: &ModelVars,
    pair: &TrainingPair,
    objective: &Objective,
    rng: &mut ChaCha8Rng,
) -> Result<GraphLoss, TtsError> {
    let (lambda, stop_weight) = (objective.lambda, objective.stop_weight);
    let t_y = pair.mel.n_frames();
    let mut mask = || -> Vec<bool> {
        (0..t_y).map(|_| objective.frame_dropout > 0.0 && rng.gen_bool(objective.frame_dropout.min(1.0))).collect()
    };
    let (fwd_mask, bwd_mask) = (mask(), mask());
    let enc = encode_graph(g, vars, &pair.text)?;
    let fwd = run_teacher_forced(g, vars, &enc, &pair.mel.frames, Direction::Forward, &fwd_mask)?;
    let bwd = run_teacher_forced(g, vars, &enc, &pair.mel.frames, Direction::Backward, &bwd_mask)?;
    let y = g.constant(Tensor::from_rows(&pair.mel.frames)?);
    let l_fwd = g.mse(fwd.frames, y)?;
    let l_bwd = g.mse(bwd.frames, y)?;
    let (_, after) = postnet_graph(g, vars, fwd.frames)?;
    let l_post = g.mse(after, y)?;
    let d = g.sub(fwd.states, bwd.states)?;
    let sq = g.mul(d, d)?;
    let sq = g.sum(sq)?;
    let l_c = g.scale(sq, 1.0 / t_y as f64)?;
    let mut total = g.add(l_fwd, l_bwd)?;
    total = g.add(total, l_post)?;
    let weighted = g.scale(l_c, lambda)?;
    total = g.add(total, weighted)?;
    let (objective, l_stop) = if stop_weight != 0.0 {
        let bce = g.bce_with_logits(fwd.stop_logits, &stop_targets(t_y))?;
        let w = g.scale(bce, stop_weight)?;
        (g.add(total, w)?, Some(bce))
    } else {
        (total, None)
    };
    Ok(GraphLoss { objective, l_fwd, l_bwd, l_post, l_c, l_stop })
}

fn read_loss(g: &Graph, l: &GraphLoss, lambda: f64) -> TtsLoss {
    let v = |x: Var| g.value(x).item();
    TtsLoss::assemble(v(l.l_fwd), v(l.l_bwd), v(l.l_post), v(l.l_c), lambda, l.l_stop.map_or(0.0, v))
}

fn check_batch(params: &TtsModelParams, batch: &[&TrainingPair]) -> Result<(), TtsError> {
    if batch.is_empty() {
        return Err(TtsError::Corpus("empty batch".into()));
    }
    for p in batch {
        if p.mel.n_mels != params.config.n_mels {
            return Err(TtsError::LengthMismatch(format!("target has {} bands, model {}", p.mel.n_mels, params.config.n_mels)));
        }
        if p.mel.n_frames() == 0 {
            return Err(TtsError::LengthMismatch("empty target".into()));
        }
    }
    Ok(())
}

/// Mean loss over a batch and the gradient of the mean objective with
/// respect to every parameter, in parameter order. `seed` drives the
/// frame-dropout masks.
pub fn batch_gradients(
    params: &TtsModelParams,
    batch: &[&TrainingPair],
    objective: &Objective,
    seed: u64,
) -> Result<(TtsLoss, Vec<Tensor>), TtsError> {
    check_batch(params, batch)?;
    let lambda = objective.lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(batch.len());
    let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let scale = 1.0 / batch.len() as f64;
    for pair in batch {
        let mut g = Graph::new();
        let (vars, leaves) = ModelVars::bind(&mut g, params, true);
        let l = example_loss(&mut g, &vars, pair, objective, &mut rng)?;
        losses.push(read_loss(&g, &l, lambda));
        g.backward(l.objective)?;
        for (acc, &leaf) in grads.iter_mut().zip(&leaves) {
            if let Some(gr) = g.grad(leaf) {
                acc.data_mut().iter_mut().zip(gr.data()).for_each(|(a, b)| *a += scale * b);
            }
        }
    }
    Ok((TtsLoss::mean(&losses), grads))
}

/// Mean teacher-forced loss without gradients.
pub fn batch_loss(params: &TtsModelParams, batch: &[&TrainingPair], lambda: f64) -> Result<TtsLoss, TtsError> {
    check_batch(params, batch)?;
    let objective = Objective { lambda, stop_weight: 1.0, frame_dropout: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut losses = Vec::with_capacity(batch.len());
    for pair in batch {
        let mut g = Graph::new();
        let (vars, _) = ModelVars::bind(&mut g, params, false);
        let l = example_loss(&mut g, &vars, pair, &objective, &mut rng)?;
        losses.push(read_loss(&g, &l, lambda));
    }
    Ok(TtsLoss::mean(&losses))
}

/// Every intermediate of a teacher-forced pass, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherForced {
    pub fwd: DecoderRun,
    pub bwd: DecoderRun,
    pub mel_after: Vec<Vec<f64>>,
    pub attention_fwd: AttentionRecord,
    pub attention_bwd: AttentionRecord,
}

pub fn teacher_forced(params: &TtsModelParams, pair: &TrainingPair) -> Result<TeacherForced, TtsError> {
    check_batch(params, &[pair])?;
    let mut g = Graph::new();
    let (vars, _) = ModelVars::bind(&mut g, params, false);
    let enc = encode_graph(&mut g, &vars, &pair.text)?;
    let fwd = run_teacher_forced(&mut g, &vars, &enc, &pair.mel.frames, Direction::Forward, &[])?;
    let bwd = run_teacher_forced(&mut g, &vars, &enc, &pair.mel.frames, Direction::Backward, &[])?;
    let (_, after) = postnet_graph(&mut g, &vars, fwd.frames)?;
    let rows = |v: Var| g.value(v).to_rows();
    let stops = |v: Var| g.value(v).data().to_vec();
    let record = |alphas: &[Var]| AttentionRecord {
        alpha: alphas.iter().map(|&a| g.value(a).data().to_vec()).collect(),
        energies: Vec::new(),
    };
    let reverse = |mut v: Vec<Vec<f64>>| {
        v.reverse();
        v
    };
    let mut bwd_stops = stops(bwd.stop_logits);
    bwd_stops.reverse();
    Ok(TeacherForced {
        fwd: DecoderRun { direction: Direction::Forward, frames: rows(fwd.frames), states: rows(fwd.states), stop_logits: stops(fwd.stop_logits) },
        bwd: DecoderRun {
            direction: Direction::Backward,
            frames: reverse(rows(bwd.frames)),
            states: reverse(rows(bwd.states)),
            stop_logits: bwd_stops,
        },
        mel_after: rows(after),
        attention_fwd: record(&fwd.alphas),
        attention_bwd: record(&bwd.alphas),
    })
}

fn clip(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= s));
    }
    norm
}

/// Mini-batch Adam training loop state.
pub struct Trainer {
    pub params: TtsModelParams,
    pub config: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(params: TtsModelParams, config: TrainConfig) -> Result<Self, TtsError> {
        if config.batch_size == 0 {
            return Err(TtsError::Config("batch size must be positive".into()));
        }
        if !(config.lambda >= 0.0) {
            return Err(TtsError::Config("lambda must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&config.frame_dropout) {
            return Err(TtsError::Config("frame dropout must lie in [0, 1)".into()));
        }
        let adam = AdamState::new(params.tensors());
        Ok(Self { params, config, adam, rng: ChaCha8Rng::seed_from_u64(config.seed) })
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.adam.step
    }

    /// Seeded sample of up to `batch_size` distinct pairs.
    pub fn sample_batch<'a>(&mut self, corpus: &'a [TrainingPair]) -> Vec<&'a TrainingPair> {
        corpus.choose_multiple(&mut self.rng, self.config.batch_size.min(corpus.len())).collect()
    }

    /// One update. Returns the loss measured before the update.
    pub fn train_step(&mut self, batch: &[&TrainingPair]) -> Result<TtsLoss, TtsError> {
        let step = self.adam.step + 1;
        let objective = Objective {
            lambda: self.config.lambda,
            stop_weight: self.config.stop_weight,
            frame_dropout: self.config.frame_dropout,
        };
        let seed = self.rng.gen();
        let (loss, mut grads) = batch_gradients(&self.params, batch, &objective, seed)
            .map_err(|e| match e {
                TtsError::Nn(inner) => TtsError::NonFinite { step, detail: inner.to_string() },
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(TtsError::NonFinite { step, detail: format!("{loss:?}") });
        }
        if let Some(max) = self.config.grad_clip {
            let norm = clip(&mut grads, max);
            if !norm.is_finite() {
                return Err(TtsError::NonFinite { step, detail: "gradient norm".into() });
            }
        }
        adam_step(self.params.tensors_mut(), &grads, &mut self.adam, &self.config.schedule)?;
        Ok(loss)
    }

    /// Training metadata stored alongside checkpoints.
    pub fn schedule_json(&self) -> serde_json::Value {
        serde_json::json!({ "step": self.adam.step, "train": self.config })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GradCheck;
    use crate::tts::params::{AudioSettings, TtsConfig};
    use crate::tts::vocab::TextSequence;
    use crate::tts::compute_loss;
    use crate::signal::MelSpectrogram;

    fn tiny_params(seed: u64) -> TtsModelParams {
        let c = TtsConfig { vocab_size: 10, d_emb: 4, d_enc: 5, d_dec: 6, d_att: 4, n_mels: 3, postnet_channels: 4, postnet_kernel: 3 };
        TtsModelParams::init(c, AudioSettings::default(), seed).unwrap()
    }

    fn pair(t_x: usize, t_y: usize, seed: u64) -> TrainingPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = (0..t_x).map(|_| rng.gen_range(2..10)).collect();
        let frames = (0..t_y).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        TrainingPair { id: format!("p{seed}"), text: TextSequence::new(ids, 10).unwrap(), mel: MelSpectrogram::new(frames, 3).unwrap() }
    }

    #[test]
    fn graph_loss_matches_value_loss() {
        let p = tiny_params(1);
        let pr = pair(4, 6, 2);
        let tf = teacher_forced(&p, &pr).unwrap();
        let value = compute_loss(&pr.mel, &tf.fwd, &tf.bwd, &tf.mel_after, 1.0).unwrap();
        let graph = batch_loss(&p, &[&pr], 1.0).unwrap();
        assert!((value.total - graph.total).abs() < 1e-12);
        assert!((value.l_consistency - graph.l_consistency).abs() < 1e-12);
        assert!((value.l_stop - graph.l_stop).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let p = tiny_params(3);
        let pr = pair(5, 7, 4);
        let (_, grads) = batch_gradients(&p, &[&pr], &Objective::composite(1.0), 0).unwrap();
        let analytic = Tensor::vector(grads.iter().flat_map(|g| g.data().iter().copied()).collect());
        let report = GradCheck::new(1e-5, 1e-3)
            .compare(|flat| Ok(batch_loss(&p.with_flat(flat).map_err(|e| crate::nn::NnError::Checkpoint(e.to_string()))?, &[&pr], 1.0).unwrap().total), &p.flatten(), &analytic)
            .unwrap();
        assert!(report.pass, "max relative error {} at {}", report.max_rel_err, report.worst_index);
    }

    #[test]
    fn training_is_reproducible() {
        let corpus: Vec<_> = (0..4).map(|i| pair(3, 4, i)).collect();
        let run = || {
            let mut t = Trainer::new(tiny_params(5), TrainConfig { batch_size: 2, ..Default::default() }).unwrap();
            for _ in 0..3 {
                let b = t.sample_batch(&corpus);
                t.train_step(&b).unwrap();
            }
            t.params
        };
        assert_eq!(run(), run());
    }
}
