use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::text::{featurize, tokenize, Language, SparseFeatures};
use super::NluError;
use crate::nn::{adam_step, init_uniform, AdamState, Checkpoint, Graph, LrSchedule, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    DiabetesCare,
    GlucoseMonitoring,
    Complications,
    SmallTalk,
    OutOfScope,
}

impl Topic {
    /// Topic implied by an intent id when none is given explicitly.
    pub fn infer(intent_id: &str) -> Topic {
        if intent_id.starts_with("out_of_scope") {
            Topic::OutOfScope
        } else if intent_id.starts_with("small_talk") {
            Topic::SmallTalk
        } else {
            Topic::DiabetesCare
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentLabel {
    pub id: String,
    pub topic: Topic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub text: String,
    pub language: Language,
    pub intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
}

impl TrainingExample {
    pub fn new(text: impl Into<String>, language: Language, intent: impl Into<String>) -> Self {
        Self { text: text.into(), language, intent: intent.into(), topic: None }
    }
}

/// Reads a JSON array of `{text, language, intent}` objects.
pub fn load_corpus(path: &Path) -> Result<Vec<TrainingExample>, NluError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text)
}

pub fn parse_corpus(json: &str) -> Result<Vec<TrainingExample>, NluError> {
    let examples: Vec<TrainingExample> = serde_json::from_str(json)
        .map_err(|e| NluError::Corpus(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    for (i, ex) in examples.iter().enumerate() {
        if ex.text.trim().is_empty() || ex.intent.trim().is_empty() {
            return Err(NluError::Corpus(format!("example {i} has empty text or intent")));
        }
    }
    Ok(examples)
}

/// A number mentioned in the input, e.g. a glucose reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericEntity {
    pub text: String,
    pub value: f64,
    /// Byte offsets into the original input.
    pub start: usize,
    pub end: usize,
}

pub fn extract_numbers(text: &str) -> Vec<NumericEntity> {
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let re = NUMBER.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("static pattern"));
    re.find_iter(text)
        .filter_map(|m| {
            m.as_str().parse().ok().map(|value| NumericEntity { text: m.as_str().into(), value, start: m.start(), end: m.end() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    /// `(intent id, confidence)` sorted by descending confidence.
    pub ranked: Vec<(String, f64)>,
    pub entities: Vec<NumericEntity>,
}

impl IntentPrediction {
    pub fn top(&self) -> (&str, f64) {
        let (id, p) = &self.ranked[0];
        (id, *p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NluTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for NluTrainConfig {
    fn default() -> Self {
        Self { epochs: 300, lr: 0.1, seed: 0 }
    }
}

/// Multinomial softmax regression over hashed n-gram features. Only the
/// feature buckets observed in training carry weights.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentClassifier {
    labels: Vec<IntentLabel>,
    features: HashMap<usize, usize>,
    feature_ids: Vec<usize>,
    weights: Tensor,
    bias: Tensor,
}

fn dense_rows(rows: &[SparseFeatures], features: &HashMap<usize, usize>) -> Tensor {
    let k = features.len();
    let mut data = vec![0.0; rows.len() * k];
    for (r, f) in rows.iter().enumerate() {
        for (&i, &v) in f.indices.iter().zip(&f.values) {
            if let Some(&col) = features.get(&i) {
                data[r * k + col] = v;
            }
        }
    }
    Tensor::new(vec![rows.len(), k], data).expect("sized to fit")
}

struct Prepared {
    labels: Vec<IntentLabel>,
    feature_ids: Vec<usize>,
    features: HashMap<usize, usize>,
    x: Tensor,
    targets: Vec<usize>,
}

fn prepare(examples: &[TrainingExample]) -> Result<Prepared, NluError> {
    let mut labels: Vec<IntentLabel> = Vec::new();
    let mut label_index: HashMap<&str, usize> = HashMap::new();
    for ex in examples {
        if ex.text.trim().is_empty() {
            return Err(NluError::Corpus(format!("empty text for intent {}", ex.intent)));
        }
        let idx = *label_index.entry(ex.intent.as_str()).or_insert_with(|| {
            labels.push(IntentLabel { id: ex.intent.clone(), topic: Topic::infer(&ex.intent) });
            labels.len() - 1
        });
        if let Some(t) = ex.topic {
            labels[idx].topic = t;
        }
    }
    if labels.len() < 2 {
        return Err(NluError::TooFewIntents(labels.len()));
    }
    let rows: Vec<SparseFeatures> = examples.iter().map(|e| featurize(&tokenize(&e.text, e.language))).collect();
    let mut feature_ids: Vec<usize> = rows.iter().flat_map(|r| r.indices.iter().copied()).collect();
    feature_ids.sort_unstable();
    feature_ids.dedup();
    let features: HashMap<usize, usize> = feature_ids.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    let x = dense_rows(&rows, &features);
    let targets = examples.iter().map(|e| label_index[e.intent.as_str()]).collect();
    Ok(Prepared { labels, feature_ids, features, x, targets })
}

impl IntentClassifier {
    /// Full-batch Adam on mean cross-entropy; seeded initialization.
    pub fn train(examples: &[TrainingExample], cfg: &NluTrainConfig) -> Result<Self, NluError> {
        Ok(Self::train_with_trace(examples, cfg)?.0)
    }

    /// Also returns the loss before the first update and after the last.
    pub fn train_with_trace(examples: &[TrainingExample], cfg: &NluTrainConfig) -> Result<(Self, f64, f64), NluError> {
        let prep = prepare(examples)?;
        let n = prep.labels.len();
        let k = prep.feature_ids.len().max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = vec![init_uniform(&[k, n], k * 100, &mut rng), Tensor::zeros(&[1, n])];
        let x = if prep.feature_ids.is_empty() { Tensor::zeros(&[examples.len(), 1]) } else { prep.x };
        let mut adam = AdamState::new(&params);
        let schedule = LrSchedule::constant(cfg.lr);
        let loss_of = |params: &[Tensor], grads: bool| -> Result<(f64, Vec<Tensor>), NluError> {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let w = g.leaf(params[0].clone(), grads);
            let b = g.leaf(params[1].clone(), grads);
            let logits = g.matmul(xv, w)?;
            let logits = g.add_row(logits, b)?;
            let loss = g.cross_entropy(logits, &prep.targets)?;
            let value = g.value(loss).item();
            if !grads {
                return Ok((value, Vec::new()));
            }
            g.backward(loss)?;
            let out = [w, b].iter().zip(params).map(|(&v, p)| g.grad(v).unwrap_or_else(|| Tensor::zeros(p.shape()))).collect();
            Ok((value, out))
        };
        let (initial, _) = loss_of(&params, false)?;
        for _ in 0..cfg.epochs {
            let (_, grads) = loss_of(&params, true)?;
            adam_step(&mut params, &grads, &mut adam, &schedule)?;
        }
        let (last, _) = loss_of(&params, false)?;
        let [weights, bias]: [Tensor; 2] = params.try_into().expect("two tensors");
        let clf = Self { labels: prep.labels, features: prep.features, feature_ids: prep.feature_ids, weights, bias };
        Ok((clf, initial, last))
    }

    pub fn labels(&self) -> &[IntentLabel] {
        &self.labels
    }

    pub fn label(&self, id: &str) -> Option<&IntentLabel> {
        self.labels.iter().find(|l| l.id == id)
    }

    pub fn bias(&self) -> &[f64] {
        self.bias.data()
    }

    /// Class probabilities in label order.
    pub fn probabilities(&self, features: &SparseFeatures) -> Vec<f64> {
        let n = self.labels.len();
        let mut logits = self.bias.data().to_vec();
        for (&i, &v) in features.indices.iter().zip(&features.values) {
            if let Some(&row) = self.features.get(&i) {
                for (l, w) in logits.iter_mut().zip(&self.weights.data()[row * n..(row + 1) * n]) {
                    *l += v * w;
                }
            }
        }
        crate::nn::softmax(&logits)
    }

    pub fn predict(&self, text: &str, language: Language) -> Result<IntentPrediction, NluError> {
        if text.trim().is_empty() {
            return Err(NluError::EmptyInput);
        }
        let probs = self.probabilities(&featurize(&tokenize(text, language)));
        let mut ranked: Vec<(String, f64)> = self.labels.iter().map(|l| l.id.clone()).zip(probs).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(IntentPrediction { ranked, entities: extract_numbers(text) })
    }

    /// Fraction of examples whose top prediction is their own label.
    pub fn accuracy(&self, examples: &[TrainingExample]) -> Result<f64, NluError> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for ex in examples {
            if self.predict(&ex.text, ex.language)?.top().0 == ex.intent {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: serde_json::json!({ "kind": "nlu", "labels": self.labels, "feature_ids": self.feature_ids }),
            schedule: serde_json::Value::Null,
            tensors: vec![("weights".into(), self.weights.clone()), ("bias".into(), self.bias.clone())],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NluError> {
        let bad = |m: &str| NluError::Checkpoint(m.to_string());
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("nlu") {
            return Err(bad("not an nlu checkpoint"));
        }
        let labels: Vec<IntentLabel> =
            serde_json::from_value(ck.meta["labels"].clone()).map_err(|e| bad(&format!("labels: {e}")))?;
        let feature_ids: Vec<usize> =
            serde_json::from_value(ck.meta["feature_ids"].clone()).map_err(|e| bad(&format!("feature ids: {e}")))?;
        let weights = ck.tensor("weights").ok_or_else(|| bad("missing weights"))?.clone();
        let bias = ck.tensor("bias").ok_or_else(|| bad("missing bias"))?.clone();
        let n = labels.len();
        if n < 2 || bias.shape() != [1, n] || weights.shape() != [feature_ids.len().max(1), n] {
            return Err(bad("tensor shapes disagree with labels and features"));
        }
        let features = feature_ids.iter().enumerate().map(|(c, &i)| (i, c)).collect();
        Ok(Self { labels, features, feature_ids, weights, bias })
    }

    pub fn save(&self, path: &Path) -> Result<(), NluError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, NluError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<TrainingExample> {
        let mk = |t: &str, i: &str| TrainingExample::new(t, Language::En, i);
        vec![
            mk("apple banana", "fruit"),
            mk("banana cherry", "fruit"),
            mk("car truck", "vehicle"),
            mk("truck bus", "vehicle"),
            mk("red blue", "colour"),
            mk("blue green", "colour"),
        ]
    }

    #[test]
    fn single_intent_rejected() {
        let ex = vec![TrainingExample::new("hello", Language::En, "greet")];
        assert!(matches!(IntentClassifier::train(&ex, &NluTrainConfig::default()), Err(NluError::TooFewIntents(1))));
    }

    #[test]
    fn fits_the_training_set_and_lowers_loss() {
        let (clf, before, after) = IntentClassifier::train_with_trace(&corpus(), &NluTrainConfig::default()).unwrap();
        assert!(after < before);
        assert_eq!(clf.accuracy(&corpus()).unwrap(), 1.0);
    }

    #[test]
    fn duplicates_are_harmless() {
        let mut c = corpus();
        c.extend(corpus());
        assert_eq!(IntentClassifier::train(&c, &NluTrainConfig::default()).unwrap().accuracy(&c).unwrap(), 1.0);
    }

    #[test]
    fn unseen_tokens_fall_back_to_the_bias() {
        let clf = IntentClassifier::train(&corpus(), &NluTrainConfig::default()).unwrap();
        let p = clf.predict("zzzz qqqq", Language::En).unwrap();
        let expected = crate::nn::softmax(clf.bias());
        for (id, conf) in &p.ranked {
            let pos = clf.labels().iter().position(|l| &l.id == id).unwrap();
            assert!((conf - expected[pos]).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let clf = IntentClassifier::train(&corpus(), &NluTrainConfig::default()).unwrap();
        assert!(matches!(clf.predict("  ", Language::En), Err(NluError::EmptyInput)));
    }

    #[test]
    fn numbers_are_extracted() {
        let e = extract_numbers("my sugar is 7.8 mmol/L after 2 hours");
        assert_eq!(e.iter().map(|n| n.value).collect::<Vec<_>>(), vec![7.8, 2.0]);
        assert_eq!(&"my sugar is 7.8"[e[0].start..e[0].end], "7.8");
    }

    #[test]
    fn checkpoint_round_trip_predicts_the_same() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nlu.ckpt");
        let clf = IntentClassifier::train(&corpus(), &NluTrainConfig::default()).unwrap();
        clf.save(&path).unwrap();
        let back = IntentClassifier::load(&path).unwrap();
        let a = clf.predict("banana truck", Language::En).unwrap();
        let b = back.predict("banana truck", Language::En).unwrap();
        assert_eq!(a.top().0, b.top().0);
        assert!((a.top().1 - b.top().1).abs() < 1e-5);
    }

    #[test]
    fn corpus_parse_errors_carry_position() {
        let err = parse_corpus("[{\"text\": \"hi\",").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
