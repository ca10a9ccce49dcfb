//! Encoder, content-based attention, forward/backward decoders and the
//! Post-Net, expressed on the differentiable graph.
//!
//! Every public value-level function here builds a throwaway graph of
//! constants, so training and inference share one implementation.

use serde::{Deserialize, Serialize};

use super::params::TtsModelParams;
use super::vocab::TextSequence;
use super::TtsError;
use crate::nn::{Axis, Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Hidden representations `h_1 … h_{T_x}`, one row per input symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutputs {
    pub h: Vec<Vec<f64>>,
}

impl EncoderOutputs {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub direction: Direction,
    pub s: Vec<f64>,
    /// The frame fed into the next step (`y_{t−1}` going forward).
    pub prev_frame: Vec<f64>,
}

impl DecoderState {
    pub fn initial(direction: Direction, params: &TtsModelParams) -> Self {
        let c = &params.config;
        Self { direction, s: vec![0.0; c.d_dec], prev_frame: vec![0.0; c.n_mels] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub s: Vec<f64>,
    pub frame: Vec<f64>,
    pub stop_logit: f64,
}

/// Alignments `α` and energies `e`, `T_y × T_x`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionRecord {
    pub alpha: Vec<Vec<f64>>,
    pub energies: Vec<Vec<f64>>,
}

impl AttentionRecord {
    /// Fraction of attention mass with `|t/T_y − k/T_x| < band`, using
    /// cell centres for both axes.
    pub fn diagonal_mass(&self, band: f64) -> f64 {
        let t_y = self.alpha.len();
        if t_y == 0 {
            return 0.0;
        }
        let mut mass = 0.0;
        for (t, row) in self.alpha.iter().enumerate() {
            let t_x = row.len();
            let tp = (t as f64 + 0.5) / t_y as f64;
            for (k, &a) in row.iter().enumerate() {
                if (tp - (k as f64 + 0.5) / t_x as f64).abs() < band {
                    mass += a;
                }
            }
        }
        mass / t_y as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutput {
    pub mel_before: Vec<Vec<f64>>,
    pub residual: Vec<Vec<f64>>,
    pub mel_after: Vec<Vec<f64>>,
    pub attention: AttentionRecord,
    /// Number of frames emitted before the stop gate fired (or the cap).
    pub stop_step: usize,
}

pub(crate) struct GruVars {
    wx: Var,
    wh: Var,
    b: Var,
    hidden: usize,
}

pub(crate) struct DecoderVars {
    query: Var,
    key: Var,
    attn_bias: Var,
    v: Var,
    gru: GruVars,
    frame_w: Var,
    frame_b: Var,
}

pub(crate) struct ModelVars {
    embedding: Var,
    encoder: GruVars,
    fwd: DecoderVars,
    bwd: DecoderVars,
    stop_w: Var,
    stop_b: Var,
    post1: Vec<Var>,
    post1_b: Var,
    post2: Vec<Var>,
    post2_b: Var,
    d_dec: usize,
    d_enc: usize,
    n_mels: usize,
}

impl ModelVars {
    /// Places every parameter on the graph. The returned vector follows the
    /// parameter order of `params`.
    pub(crate) fn bind(g: &mut Graph, params: &TtsModelParams, trainable: bool) -> (Self, Vec<Var>) {
        let all: Vec<Var> = params.tensors().iter().map(|t| g.leaf(t.clone(), trainable)).collect();
        let get = |name: &str| all[params.position(name)];
        let c = &params.config;
        let gru = |prefix: &str, hidden| GruVars {
            wx: get(&format!("{prefix}.wx")),
            wh: get(&format!("{prefix}.wh")),
            b: get(&format!("{prefix}.b")),
            hidden,
        };
        let decoder = |p: &str| DecoderVars {
            query: get(&format!("{p}.attn.query")),
            key: get(&format!("{p}.attn.key")),
            attn_bias: get(&format!("{p}.attn.bias")),
            v: get(&format!("{p}.attn.v")),
            gru: gru(&format!("{p}.gru"), c.d_dec),
            frame_w: get(&format!("{p}.frame.w")),
            frame_b: get(&format!("{p}.frame.b")),
        };
        let vars = Self {
            embedding: get("embedding"),
            encoder: gru("encoder", c.d_enc),
            fwd: decoder("fwd"),
            bwd: decoder("bwd"),
            stop_w: get("stop.w"),
            stop_b: get("stop.b"),
            post1: (0..c.postnet_kernel).map(|k| get(&format!("postnet.conv1.tap{k}"))).collect(),
            post1_b: get("postnet.conv1.b"),
            post2: (0..c.postnet_kernel).map(|k| get(&format!("postnet.conv2.tap{k}"))).collect(),
            post2_b: get("postnet.conv2.b"),
            d_dec: c.d_dec,
            d_enc: c.d_enc,
            n_mels: c.n_mels,
        };
        (vars, all)
    }

    fn decoder(&self, direction: Direction) -> &DecoderVars {
        match direction {
            Direction::Forward => &self.fwd,
            Direction::Backward => &self.bwd,
        }
    }
}

/// Gated recurrent update given the projected input `x·W_x + b` (`1 × 3d`).
fn gru_step(g: &mut Graph, gru: &GruVars, x_proj: Var, h: Var) -> Result<Var, TtsError> {
    let d = gru.hidden;
    let hu = g.matmul(h, gru.wh)?;
    let xz = g.slice(x_proj, Axis::Cols, 0, d)?;
    let xr = g.slice(x_proj, Axis::Cols, d, 2 * d)?;
    let xn = g.slice(x_proj, Axis::Cols, 2 * d, 3 * d)?;
    let hz = g.slice(hu, Axis::Cols, 0, d)?;
    let hr = g.slice(hu, Axis::Cols, d, 2 * d)?;
    let hn = g.slice(hu, Axis::Cols, 2 * d, 3 * d)?;
    let z = g.add(xz, hz)?;
    let z = g.sigmoid(z)?;
    let r = g.add(xr, hr)?;
    let r = g.sigmoid(r)?;
    let gated = g.mul(r, hn)?;
    let n = g.add(xn, gated)?;
    let n = g.tanh(n)?;
    // h' = (1 − z)·n + z·h = n + z·(h − n)
    let diff = g.sub(h, n)?;
    let keep = g.mul(z, diff)?;
    Ok(g.add(n, keep)?)
}

pub(crate) struct Encoded {
    pub h: Var,
}

pub(crate) fn encode_graph(g: &mut Graph, vars: &ModelVars, text: &TextSequence) -> Result<Encoded, TtsError> {
    let x = g.gather_rows(vars.embedding, text.ids())?;
    let xw = g.matmul(x, vars.encoder.wx)?;
    let xw = g.add_row(xw, vars.encoder.b)?;
    let mut h = g.constant(Tensor::zeros(&[1, vars.d_enc]));
    let mut rows = Vec::with_capacity(text.len());
    for t in 0..text.len() {
        let xt = g.slice(xw, Axis::Rows, t, t + 1)?;
        h = gru_step(g, &vars.encoder, xt, h)?;
        rows.push(h);
    }
    Ok(Encoded { h: g.concat(&rows, Axis::Rows)? })
}

/// Key projections `W_h h_k + b` for one decoder, reused by every step.
pub(crate) fn attention_keys(g: &mut Graph, dec: &DecoderVars, enc: &Encoded) -> Result<Var, TtsError> {
    let k = g.matmul(enc.h, dec.key)?;
    Ok(g.add_row(k, dec.attn_bias)?)
}

pub(crate) struct Attended {
    pub alpha: Var,
    pub energies: Var,
    pub context: Var,
}

/// `α = softmax(e)`, `c = Σ_k α_k h_k` for a `1 × T_x` energy row.
pub(crate) fn attend_energies(g: &mut Graph, energies: Var, enc: &Encoded) -> Result<Attended, TtsError> {
    let alpha = g.softmax(energies, Axis::Cols)?;
    let context = g.matmul(alpha, enc.h)?;
    Ok(Attended { alpha, energies, context })
}

/// Additive scoring `e_k = vᵀ tanh(W_s s + W_h h_k + b)`.
pub(crate) fn attend_graph(
    g: &mut Graph,
    dec: &DecoderVars,
    keys: Var,
    enc: &Encoded,
    s_prev: Var,
) -> Result<Attended, TtsError> {
    let q = g.matmul(s_prev, dec.query)?;
    let pre = g.add_row(keys, q)?;
    let act = g.tanh(pre)?;
    let e_col = g.matmul(act, dec.v)?;
    let energies = g.transpose(e_col)?;
    attend_energies(g, energies, enc)
}

pub(crate) struct Stepped {
    pub s: Var,
    pub frame: Var,
    pub stop: Var,
}

/// `s_t = decoder(s_{t−1}, y_{t−1}, c_t)` followed by the frame projection
/// and stop logit, both read from `[s_t, c_t]`.
pub(crate) fn decode_step_graph(
    g: &mut Graph,
    vars: &ModelVars,
    direction: Direction,
    s_prev: Var,
    y_prev: Var,
    context: Var,
) -> Result<Stepped, TtsError> {
    let dec = vars.decoder(direction);
    let input = g.concat(&[y_prev, context], Axis::Cols)?;
    let xp = g.matmul(input, dec.gru.wx)?;
    let xp = g.add(xp, dec.gru.b)?;
    let s = gru_step(g, &dec.gru, xp, s_prev)?;
    let sc = g.concat(&[s, context], Axis::Cols)?;
    let frame = g.matmul(sc, dec.frame_w)?;
    let frame = g.add(frame, dec.frame_b)?;
    let stop = g.matmul(sc, vars.stop_w)?;
    let stop = g.add(stop, vars.stop_b)?;
    Ok(Stepped { s, frame, stop })
}

/// Same-padded 1-D convolution over the frame axis.
fn conv_frames(g: &mut Graph, x: Var, taps: &[Var], bias: Var) -> Result<Var, TtsError> {
    let (t, c_in) = g.value(x).dims();
    let pad = taps.len() / 2;
    let padded = if pad > 0 {
        let z = g.constant(Tensor::zeros(&[pad, c_in]));
        g.concat(&[z, x, z], Axis::Rows)?
    } else {
        x
    };
    let mut acc: Option<Var> = None;
    for (j, &w) in taps.iter().enumerate() {
        let window = g.slice(padded, Axis::Rows, j, j + t)?;
        let term = g.matmul(window, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    Ok(g.add_row(acc.expect("kernel has at least one tap"), bias)?)
}

/// `ŷ_r = F(ŷ)`, `ŷ_p = ŷ + ŷ_r`.
pub(crate) fn postnet_graph(g: &mut Graph, vars: &ModelVars, mel: Var) -> Result<(Var, Var), TtsError> {
    let hidden = conv_frames(g, mel, &vars.post1, vars.post1_b)?;
    let hidden = g.tanh(hidden)?;
    let residual = conv_frames(g, hidden, &vars.post2, vars.post2_b)?;
    let after = g.add(mel, residual)?;
    Ok((residual, after))
}

/// Teacher-forced decoder pass; every output is indexed in forward time.
pub(crate) struct RunGraph {
    pub frames: Var,
    pub states: Var,
    pub stop_logits: Var,
    pub alphas: Vec<Var>,
}

pub(crate) fn run_teacher_forced(
    g: &mut Graph,
    vars: &ModelVars,
    enc: &Encoded,
    target: &[Vec<f64>],
    direction: Direction,
    dropped: &[bool],
) -> Result<RunGraph, TtsError> {
    let t_y = target.len();
    if t_y == 0 {
        return Err(TtsError::LengthMismatch("empty target".into()));
    }
    let dec = vars.decoder(direction);
    let keys = attention_keys(g, dec, enc)?;
    let go = vec![0.0; vars.n_mels];
    let mut s = g.constant(Tensor::zeros(&[1, vars.d_dec]));
    let mut frames = vec![None; t_y];
    let mut states = vec![None; t_y];
    let mut stops = vec![None; t_y];
    let mut alphas = vec![None; t_y];
    for step in 0..t_y {
        // backward decoding walks t = T_y−1 … 0 and is fed y_{t+1}
        let (t, prev) = match direction {
            Direction::Forward => (step, if step == 0 { &go } else { &target[step - 1] }),
            Direction::Backward => {
                let t = t_y - 1 - step;
                (t, if step == 0 { &go } else { &target[t + 1] })
            }
        };
        // a dropped step sees the go frame instead of the previous target
        let prev = if dropped.get(step).copied().unwrap_or(false) { &go } else { prev };
        let y_prev = g.constant(Tensor::matrix(1, vars.n_mels, prev.clone())?);
        let att = attend_graph(g, dec, keys, enc, s)?;
        let out = decode_step_graph(g, vars, direction, s, y_prev, att.context)?;
        s = out.s;
        frames[t] = Some(out.frame);
        states[t] = Some(out.s);
        stops[t] = Some(out.stop);
        alphas[t] = Some(att.alpha);
    }
    let collect = |v: Vec<Option<Var>>| v.into_iter().map(|x| x.expect("every step visited")).collect::<Vec<_>>();
    let frames = g.concat(&collect(frames), Axis::Rows)?;
    let states = g.concat(&collect(states), Axis::Rows)?;
    let stop_logits = g.concat(&collect(stops), Axis::Rows)?;
    Ok(RunGraph { frames, states, stop_logits, alphas: collect(alphas) })
}

fn row_var(g: &mut Graph, values: &[f64]) -> Result<Var, TtsError> {
    Ok(g.constant(Tensor::matrix(1, values.len(), values.to_vec())?))
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), TtsError> {
    if got != want {
        return Err(TtsError::LengthMismatch(format!("{what}: {got} values, expected {want}")));
    }
    Ok(())
}

fn encoded_from(g: &mut Graph, enc: &EncoderOutputs) -> Result<Encoded, TtsError> {
    if enc.h.is_empty() {
        return Err(TtsError::LengthMismatch("no encoder rows".into()));
    }
    Ok(Encoded { h: g.constant(Tensor::from_rows(&enc.h)?) })
}

pub fn encode(text: &TextSequence, params: &TtsModelParams) -> Result<EncoderOutputs, TtsError> {
    let mut g = Graph::new();
    let (vars, _) = ModelVars::bind(&mut g, params, false);
    let enc = encode_graph(&mut g, &vars, text)?;
    Ok(EncoderOutputs { h: g.value(enc.h).to_rows() })
}

/// Attention for the decoder named by `state.direction`; returns the
/// alignment row and the context vector.
pub fn attend(
    state: &DecoderState,
    enc: &EncoderOutputs,
    params: &TtsModelParams,
) -> Result<(Vec<f64>, Vec<f64>), TtsError> {
    check_len("decoder state", state.s.len(), params.config.d_dec)?;
    let mut g = Graph::new();
    let (vars, _) = ModelVars::bind(&mut g, params, false);
    let encoded = encoded_from(&mut g, enc)?;
    let dec = vars.decoder(state.direction);
    let keys = attention_keys(&mut g, dec, &encoded)?;
    let s = row_var(&mut g, &state.s)?;
    let att = attend_graph(&mut g, dec, keys, &encoded, s)?;
    Ok((g.value(att.alpha).data().to_vec(), g.value(att.context).data().to_vec()))
}

/// Softmax-normalizes given energies and forms the context vector.
pub fn attention_from_energies(energies: &[f64], enc: &EncoderOutputs) -> Result<(Vec<f64>, Vec<f64>), TtsError> {
    check_len("energies", energies.len(), enc.len())?;
    let mut g = Graph::new();
    let encoded = encoded_from(&mut g, enc)?;
    let e = row_var(&mut g, energies)?;
    let att = attend_energies(&mut g, e, &encoded)?;
    Ok((g.value(att.alpha).data().to_vec(), g.value(att.context).data().to_vec()))
}

pub fn decode_step(
    state: &DecoderState,
    context: &[f64],
    params: &TtsModelParams,
) -> Result<StepOutput, TtsError> {
    let c = &params.config;
    check_len("decoder state", state.s.len(), c.d_dec)?;
    check_len("previous frame", state.prev_frame.len(), c.n_mels)?;
    check_len("context", context.len(), c.d_enc)?;
    let mut g = Graph::new();
    let (vars, _) = ModelVars::bind(&mut g, params, false);
    let s = row_var(&mut g, &state.s)?;
    let y = row_var(&mut g, &state.prev_frame)?;
    let ctx = row_var(&mut g, context)?;
    let out = decode_step_graph(&mut g, &vars, state.direction, s, y, ctx)?;
    Ok(StepOutput {
        s: g.value(out.s).data().to_vec(),
        frame: g.value(out.frame).data().to_vec(),
        stop_logit: g.value(out.stop).item(),
    })
}

/// Returns `(ŷ_r, ŷ_p)` for a coarse mel `ŷ`.
pub fn postnet(
    mel_before: &[Vec<f64>],
    params: &TtsModelParams,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), TtsError> {
    if mel_before.is_empty() {
        return Err(TtsError::LengthMismatch("empty mel".into()));
    }
    for f in mel_before {
        check_len("mel frame", f.len(), params.config.n_mels)?;
    }
    let mut g = Graph::new();
    let (vars, _) = ModelVars::bind(&mut g, params, false);
    let mel = g.constant(Tensor::from_rows(mel_before)?);
    let (res, after) = postnet_graph(&mut g, &vars, mel)?;
    Ok((g.value(res).to_rows(), g.value(after).to_rows()))
}

/// Autoregressive synthesis with the forward decoder, feeding each
/// predicted frame back in. Stops once `sigmoid(stop) > 0.5` or after
/// `max_frames` frames.
pub fn synthesize(text: &TextSequence, params: &TtsModelParams, max_frames: usize) -> Result<SynthesisOutput, TtsError> {
    if max_frames == 0 {
        return Err(TtsError::Config("max_frames must be at least 1".into()));
    }
    let mut g = Graph::new();
    let (vars, _) = ModelVars::bind(&mut g, params, false);
    let enc = encode_graph(&mut g, &vars, text)?;
    let keys = attention_keys(&mut g, &vars.fwd, &enc)?;
    let mut s = g.constant(Tensor::zeros(&[1, vars.d_dec]));
    let mut y = g.constant(Tensor::zeros(&[1, vars.n_mels]));
    let mut frames = Vec::new();
    let mut attention = AttentionRecord::default();
    for _ in 0..max_frames {
        let att = attend_graph(&mut g, &vars.fwd, keys, &enc, s)?;
        let out = decode_step_graph(&mut g, &vars, Direction::Forward, s, y, att.context)?;
        attention.alpha.push(g.value(att.alpha).data().to_vec());
        attention.energies.push(g.value(att.energies).data().to_vec());
        frames.push(out.frame);
        s = out.s;
        y = out.frame;
        let logit = g.value(out.stop).item();
        if 1.0 / (1.0 + (-logit).exp()) > 0.5 {
            break;
        }
    }
    let stop_step = frames.len();
    let before = g.concat(&frames, Axis::Rows)?;
    let (res, after) = postnet_graph(&mut g, &vars, before)?;
    Ok(SynthesisOutput {
        mel_before: g.value(before).to_rows(),
        residual: g.value(res).to_rows(),
        mel_after: g.value(after).to_rows(),
        attention,
        stop_step,
    })
}
