use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const SUS_ITEMS: usize = 10;
/// Conventional average SUS score.
pub const SUS_BENCHMARK: f64 = 68.0;
/// Reported mean SUS score.
pub const REPORTED_SUS: f64 = 80.625;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SusResponse {
    pub participant_id: String,
    pub items: Vec<u8>,
}

impl SusResponse {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.items.len() != SUS_ITEMS {
            return Err(EvalError::Validation(format!(
                "participant {}: {} items, expected {SUS_ITEMS}",
                self.participant_id,
                self.items.len()
            )));
        }
        if let Some((i, v)) = self.items.iter().enumerate().find(|(_, v)| !(1..=5).contains(*v)) {
            return Err(EvalError::Validation(format!(
                "participant {}: item q{} = {v} outside 1-5",
                self.participant_id,
                i + 1
            )));
        }
        Ok(())
    }
}

/// Brooke's scoring: odd items contribute `score − 1`, even items
/// `5 − score`, and the sum is scaled by 2.5.
pub fn sus_score(resp: &SusResponse) -> Result<f64, EvalError> {
    resp.validate()?;
    let sum: u32 = resp
        .items
        .iter()
        .enumerate()
        .map(|(i, &v)| if i % 2 == 0 { v as u32 - 1 } else { 5 - v as u32 })
        .sum();
    Ok(2.5 * sum as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusSummary {
    pub n: usize,
    pub mean: f64,
    pub scores: Vec<(String, f64)>,
    /// Counts over `[0,10), [10,20), …, [90,100]`.
    pub histogram: [usize; 10],
    pub fraction_at_least_80: f64,
    pub above_benchmark: bool,
}

pub fn sus_summary(responses: &[SusResponse]) -> Result<SusSummary, EvalError> {
    if responses.is_empty() {
        return Err(EvalError::Validation("no SUS responses".into()));
    }
    let mut scores = Vec::with_capacity(responses.len());
    let mut histogram = [0usize; 10];
    for r in responses {
        let s = sus_score(r)?;
        histogram[((s / 10.0) as usize).min(9)] += 1;
        scores.push((r.participant_id.clone(), s));
    }
    let n = scores.len();
    let mean = scores.iter().map(|(_, s)| s).sum::<f64>() / n as f64;
    let high = scores.iter().filter(|(_, s)| *s >= 80.0).count();
    Ok(SusSummary { n, mean, scores, histogram, fraction_at_least_80: high as f64 / n as f64, above_benchmark: mean > SUS_BENCHMARK })
}

impl SusSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "participants: {}", self.n);
        let _ = writeln!(out, "mean SUS: {:.2} (benchmark {SUS_BENCHMARK:.0}, {})", self.mean, if self.above_benchmark { "above" } else { "not above" });
        let _ = writeln!(out, "score >= 80: {:.1}%", 100.0 * self.fraction_at_least_80);
        let _ = writeln!(out, "reported mean: {REPORTED_SUS}");
        for (i, count) in self.histogram.iter().enumerate() {
            let hi = if i == 9 { "100]".to_string() } else { format!("{})", (i + 1) * 10) };
            let _ = writeln!(out, "[{:>3},{hi:>5} {:>3} {}", i * 10, count, "#".repeat(*count));
        }
        for (id, s) in &self.scores {
            let _ = writeln!(out, "  {id:<16} {s:>6.2}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(items: &[u8]) -> SusResponse {
        SusResponse { participant_id: "p".into(), items: items.to_vec() }
    }

    #[test]
    fn reference_scores() {
        assert_eq!(sus_score(&r(&[3; 10])).unwrap(), 50.0);
        assert_eq!(sus_score(&r(&[5, 1, 5, 1, 5, 1, 5, 1, 5, 1])).unwrap(), 100.0);
        assert_eq!(sus_score(&r(&[1, 5, 1, 5, 1, 5, 1, 5, 1, 5])).unwrap(), 0.0);
        assert_eq!(sus_score(&r(&[4, 2, 4, 2, 4, 2, 4, 2, 4, 2])).unwrap(), 75.0);
    }

    #[test]
    fn invalid_responses_name_the_participant() {
        let e = sus_score(&SusResponse { participant_id: "nurse7".into(), items: vec![3; 9] }).unwrap_err();
        assert!(e.to_string().contains("nurse7"));
        assert!(sus_score(&r(&[3, 3, 3, 3, 6, 3, 3, 3, 3, 3])).unwrap_err().to_string().contains("q5"));
    }

    #[test]
    fn summary_histogram_and_threshold() {
        let s = sus_summary(&[r(&[3; 10]), r(&[5, 1, 5, 1, 5, 1, 5, 1, 5, 1]), r(&[4, 2, 4, 2, 4, 2, 4, 2, 4, 2])]).unwrap();
        assert_eq!(s.histogram[5], 1);
        assert_eq!(s.histogram[9], 1);
        assert_eq!(s.histogram[7], 1);
        assert!((s.fraction_at_least_80 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.mean, 75.0);
    }

    proptest! {
        #[test]
        fn score_range_and_monotonicity(items in proptest::collection::vec(1u8..=5, 10), k in 0usize..10) {
            let base = sus_score(&r(&items)).unwrap();
            prop_assert!((0.0..=100.0).contains(&base));
            if items[k] < 5 {
                let mut up = items.clone();
                up[k] += 1;
                let s = sus_score(&r(&up)).unwrap();
                if k % 2 == 0 { prop_assert!(s >= base) } else { prop_assert!(s <= base) }
            }
        }
    }
}
