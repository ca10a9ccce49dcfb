use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use super::TtsError;
use crate::nn::{init_uniform, Checkpoint, Tensor};
use crate::signal::{
    mel_filterbank, mel_to_audio, AudioClip, GriffinLimConfig, MelConfig, MelInversion, MelSpectrogram, StftConfig,
    DEFAULT_LOG_FLOOR,
};

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtsConfig {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub d_enc: usize,
    pub d_dec: usize,
    pub d_att: usize,
    pub n_mels: usize,
    pub postnet_channels: usize,
    /// Odd kernel width of both Post-Net convolutions.
    pub postnet_kernel: usize,
}

impl Default for TtsConfig {
    fn default() -> Self {
        Self {
            vocab_size: Vocab::default().len(),
            d_emb: 64,
            d_enc: 64,
            d_dec: 64,
            d_att: 64,
            n_mels: 80,
            postnet_channels: 64,
            postnet_kernel: 5,
        }
    }
}

impl TtsConfig {
    pub fn validate(&self) -> Result<(), TtsError> {
        let dims = [self.vocab_size, self.d_emb, self.d_enc, self.d_dec, self.d_att, self.n_mels, self.postnet_channels];
        if dims.contains(&0) {
            return Err(TtsError::Config("all dimensions must be positive".into()));
        }
        if self.postnet_kernel.is_multiple_of(2) {
            return Err(TtsError::Config(format!("postnet kernel {} must be odd", self.postnet_kernel)));
        }
        Ok(())
    }
}

/// Front-end settings that turn audio into training targets and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioSettings {
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub log_floor: f64,
}

impl Default for AudioSettings {
    fn default() -> Self {
        Self { stft: StftConfig::default(), mel: MelConfig::default(), log_floor: DEFAULT_LOG_FLOOR }
    }
}

impl AudioSettings {
    /// Inverts log-mel frames to a waveform with Griffin-Lim.
    pub fn vocode(&self, frames: &[Vec<f64>], griffin_lim: GriffinLimConfig) -> Result<AudioClip, TtsError> {
        let m = &self.mel;
        let bank = mel_filterbank(self.stft.n_fft, m.n_mels, m.sample_rate, m.f_min, m.f_max)?;
        let mel = MelSpectrogram::new(frames.to_vec(), m.n_mels)?;
        let inversion = MelInversion { log_floor: self.log_floor, griffin_lim };
        Ok(mel_to_audio(&mel, &self.stft, &bank, &inversion)?)
    }

    /// STFT frame count of a clip with `samples` samples.
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.stft.n_fft {
            0
        } else {
            1 + (samples - self.stft.n_fft) / self.stft.hop
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Uniform { fan_in: usize },
    Zeros,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn gru_specs(out: &mut Vec<ParamSpec>, prefix: &str, input: usize, hidden: usize) {
    let spec = |name: &str, shape: Vec<usize>, init| ParamSpec { name: format!("{prefix}.{name}"), shape, init };
    out.push(spec("wx", vec![input, 3 * hidden], Init::Uniform { fan_in: input }));
    out.push(spec("wh", vec![hidden, 3 * hidden], Init::Uniform { fan_in: hidden }));
    out.push(spec("b", vec![1, 3 * hidden], Init::Zeros));
}

fn decoder_specs(out: &mut Vec<ParamSpec>, prefix: &str, c: &TtsConfig) {
    let spec = |name: &str, shape: Vec<usize>, init| ParamSpec { name: format!("{prefix}.{name}"), shape, init };
    out.push(spec("attn.query", vec![c.d_dec, c.d_att], Init::Uniform { fan_in: c.d_dec }));
    out.push(spec("attn.key", vec![c.d_enc, c.d_att], Init::Uniform { fan_in: c.d_enc }));
    out.push(spec("attn.bias", vec![1, c.d_att], Init::Zeros));
    out.push(spec("attn.v", vec![c.d_att, 1], Init::Uniform { fan_in: c.d_att }));
    gru_specs(out, &format!("{prefix}.gru"), c.n_mels + c.d_enc, c.d_dec);
    out.push(spec("frame.w", vec![c.d_dec + c.d_enc, c.n_mels], Init::Uniform { fan_in: c.d_dec + c.d_enc }));
    out.push(spec("frame.b", vec![1, c.n_mels], Init::Zeros));
}

/// Every trainable tensor, in checkpoint order.
pub(crate) fn layout(c: &TtsConfig) -> Vec<ParamSpec> {
    let mut out = vec![ParamSpec {
        name: "embedding".into(),
        shape: vec![c.vocab_size, c.d_emb],
        init: Init::Uniform { fan_in: 1 },
    }];
    gru_specs(&mut out, "encoder", c.d_emb, c.d_enc);
    decoder_specs(&mut out, "fwd", c);
    decoder_specs(&mut out, "bwd", c);
    out.push(ParamSpec {
        name: "stop.w".into(),
        shape: vec![c.d_dec + c.d_enc, 1],
        init: Init::Uniform { fan_in: c.d_dec + c.d_enc },
    });
    out.push(ParamSpec { name: "stop.b".into(), shape: vec![1, 1], init: Init::Zeros });
    let k = c.postnet_kernel;
    for tap in 0..k {
        out.push(ParamSpec {
            name: format!("postnet.conv1.tap{tap}"),
            shape: vec![c.n_mels, c.postnet_channels],
            init: Init::Uniform { fan_in: c.n_mels * k },
        });
    }
    out.push(ParamSpec { name: "postnet.conv1.b".into(), shape: vec![1, c.postnet_channels], init: Init::Zeros });
    for tap in 0..k {
        out.push(ParamSpec {
            name: format!("postnet.conv2.tap{tap}"),
            shape: vec![c.postnet_channels, c.n_mels],
            init: Init::Uniform { fan_in: c.postnet_channels * k },
        });
    }
    out.push(ParamSpec { name: "postnet.conv2.b".into(), shape: vec![1, c.n_mels], init: Init::Zeros });
    out
}

/// All trainable tensors of the encoder, both decoders, attention,
/// stop gate and Post-Net.
#[derive(Debug, Clone, PartialEq)]
pub struct TtsModelParams {
    pub config: TtsConfig,
    pub audio: AudioSettings,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl TtsModelParams {
    /// Seeded uniform `±1/√fan_in` initialization; biases start at zero.
    pub fn init(config: TtsConfig, audio: AudioSettings, seed: u64) -> Result<Self, TtsError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = layout(&config);
        let tensors = specs
            .iter()
            .map(|s| match s.init {
                Init::Uniform { fan_in } => init_uniform(&s.shape, fan_in, &mut rng),
                Init::Zeros => Tensor::zeros(&s.shape),
            })
            .collect();
        Ok(Self::assemble(config, audio, specs.into_iter().map(|s| s.name).collect(), tensors))
    }

    fn assemble(config: TtsConfig, audio: AudioSettings, names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { config, audio, names, tensors, index }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub(crate) fn position(&self, name: &str) -> usize {
        self.index[name]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Sets every tensor whose name starts with `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (n, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            if n.starts_with(prefix) {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// All parameters concatenated into one vector.
    pub fn flatten(&self) -> Tensor {
        Tensor::vector(self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect())
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn with_flat(&self, flat: &Tensor) -> Result<Self, TtsError> {
        if flat.len() != self.parameter_count() {
            return Err(TtsError::Config(format!("{} values for {} parameters", flat.len(), self.parameter_count())));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors.iter_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat.data()[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self, schedule: serde_json::Value) -> Checkpoint {
        Checkpoint {
            meta: serde_json::json!({ "kind": "tts", "config": self.config, "audio": self.audio }),
            schedule,
            tensors: self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TtsError> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("tts") {
            return Err(TtsError::Checkpoint("not a tts checkpoint".into()));
        }
        let config: TtsConfig = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| TtsError::Checkpoint(format!("config: {e}")))?;
        let audio: AudioSettings = serde_json::from_value(ck.meta["audio"].clone())
            .map_err(|e| TtsError::Checkpoint(format!("audio settings: {e}")))?;
        config.validate()?;
        let specs = layout(&config);
        let mut tensors = Vec::with_capacity(specs.len());
        for s in &specs {
            let t = ck.tensor(&s.name).ok_or_else(|| TtsError::Checkpoint(format!("missing tensor {}", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(TtsError::Checkpoint(format!("{}: shape {:?}, expected {:?}", s.name, t.shape(), s.shape)));
            }
            tensors.push(t.clone());
        }
        Ok(Self::assemble(config, audio, specs.into_iter().map(|s| s.name).collect(), tensors))
    }

    pub fn save(&self, path: &Path, schedule: serde_json::Value) -> Result<(), TtsError> {
        Ok(self.to_checkpoint(schedule).save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, TtsError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TtsConfig {
        TtsConfig { vocab_size: 12, d_emb: 4, d_enc: 5, d_dec: 6, d_att: 3, n_mels: 2, postnet_channels: 3, postnet_kernel: 3 }
    }

    #[test]
    fn init_is_seeded() {
        let a = TtsModelParams::init(tiny(), AudioSettings::default(), 7).unwrap();
        let b = TtsModelParams::init(tiny(), AudioSettings::default(), 7).unwrap();
        let c = TtsModelParams::init(tiny(), AudioSettings::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn names_are_unique() {
        let specs = layout(&TtsConfig::default());
        let mut names: Vec<_> = specs.iter().map(|s| s.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), specs.len());
    }

    #[test]
    fn flatten_round_trip() {
        let p = TtsModelParams::init(tiny(), AudioSettings::default(), 1).unwrap();
        let q = p.with_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn checkpoint_round_trip_preserves_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = TtsModelParams::init(tiny(), AudioSettings::default(), 3).unwrap();
        p.save(&path, serde_json::json!({"step": 0})).unwrap();
        let q = TtsModelParams::load(&path).unwrap();
        assert_eq!(q.config, p.config);
        assert_eq!(q.audio, p.audio);
        for (a, b) in p.flatten().data().iter().zip(q.flatten().data()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn even_postnet_kernel_rejected() {
        let mut c = tiny();
        c.postnet_kernel = 4;
        assert!(TtsModelParams::init(c, AudioSettings::default(), 0).is_err());
    }
}
