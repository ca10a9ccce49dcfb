use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Exact,
    Similar,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Naturalness,
    Accent,
    Quality,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Exact, Condition::Similar, Condition::Unseen];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Exact => "exact",
            Condition::Similar => "similar",
            Condition::Unseen => "unseen",
        }
    }
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Naturalness, Measure::Accent, Measure::Quality];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Naturalness => "naturalness",
            Measure::Accent => "accent",
            Measure::Quality => "quality",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Condition::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s.trim())).ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Measure::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s.trim())).ok_or_else(|| format!("unknown measure {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosResponse {
    pub judge_id: String,
    pub sample_id: String,
    pub condition: Condition,
    pub measure: Measure,
    pub score: u8,
}

impl MosResponse {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(1..=5).contains(&self.score) {
            return Err(EvalError::Validation(format!(
                "judge {} sample {}: score {} outside 1-5",
                self.judge_id, self.sample_id, self.score
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 when `n == 1`.
    pub std: f64,
    pub single_response: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub measure: Measure,
    /// Unweighted mean of the present condition means.
    pub overall: f64,
    pub conditions_present: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosCell {
    pub measure: Measure,
    pub condition: Condition,
    /// `None` when no response falls in the cell.
    pub stats: Option<CellStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosTable {
    pub cells: Vec<MosCell>,
    pub overall: Vec<MeasureSummary>,
}

impl MosTable {
    pub fn cell(&self, measure: Measure, condition: Condition) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.measure == measure && c.condition == condition).and_then(|c| c.stats.as_ref())
    }

    pub fn overall(&self, measure: Measure) -> Option<f64> {
        self.overall.iter().find(|o| o.measure == measure).map(|o| o.overall)
    }
}

fn cell_stats(scores: &[f64]) -> CellStats {
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let std = if n > 1 { (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    CellStats { n, mean, std, single_response: n == 1 }
}

/// Per-cell mean ± sample std and the per-measure average of condition means.
pub fn mos_aggregate(responses: &[MosResponse]) -> Result<MosTable, EvalError> {
    let mut groups: BTreeMap<(Measure, Condition), Vec<f64>> = BTreeMap::new();
    for r in responses {
        r.validate()?;
        groups.entry((r.measure, r.condition)).or_default().push(r.score as f64);
    }
    let mut cells = Vec::new();
    let mut overall = Vec::new();
    for measure in Measure::ALL {
        let mut means = Vec::new();
        for condition in Condition::ALL {
            let stats = groups.get(&(measure, condition)).map(|s| cell_stats(s));
            if let Some(s) = &stats {
                means.push(s.mean);
            }
            cells.push(MosCell { measure, condition, stats });
        }
        if !means.is_empty() {
            overall.push(MeasureSummary {
                measure,
                overall: overall_from_means(&means),
                conditions_present: means.len(),
            });
        }
    }
    Ok(MosTable { cells, overall })
}

/// Unweighted mean of condition means.
pub fn overall_from_means(means: &[f64]) -> f64 {
    means.iter().sum::<f64>() / means.len() as f64
}

/// Reported overall score per measure.
pub const REPORTED_MOS: [(Measure, f64); 3] =
    [(Measure::Naturalness, 4.07), (Measure::Accent, 3.98), (Measure::Quality, 3.88)];

/// Reported condition means per measure, in exact/similar/unseen order.
pub const REPORTED_CELL_MEANS: [(Measure, [f64; 3]); 3] = [
    (Measure::Naturalness, [4.45, 4.3, 3.45]),
    (Measure::Accent, [4.05, 3.9, 3.65]),
    (Measure::Quality, [4.3, 4.15, 3.2]),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedComparison {
    pub measure: Measure,
    pub computed: f64,
    pub reported: f64,
    /// Whether both agree when rounded to two decimals.
    pub agrees: bool,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn compare_with_reported(table: &MosTable) -> Vec<ReportedComparison> {
    REPORTED_MOS
        .iter()
        .filter_map(|&(measure, reported)| {
            table.overall(measure).map(|computed| ReportedComparison {
                measure,
                computed,
                reported,
                agrees: format!("{computed:.2}") == format!("{reported:.2}"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosReport {
    pub table: MosTable,
    pub comparisons: Vec<ReportedComparison>,
}

impl MosReport {
    pub fn new(table: MosTable) -> Self {
        let comparisons = compare_with_reported(&table);
        Self { table, comparisons }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>16} {:>16} {:>16} {:>8}", "measure", "exact", "similar", "unseen", "overall");
        for m in Measure::ALL {
            let _ = write!(out, "{:<12}", m.name());
            for c in Condition::ALL {
                let cell = match self.table.cell(m, c) {
                    Some(s) if s.single_response => format!("{:.2} (n=1)", s.mean),
                    Some(s) => format!("{:.2} ± {:.2}", s.mean, s.std),
                    None => "absent".to_string(),
                };
                let _ = write!(out, " {cell:>16}");
            }
            let overall = self.table.overall(m).map_or("-".into(), |o| format!("{o:.2}"));
            let _ = writeln!(out, " {overall:>8}");
        }
        for c in &self.comparisons {
            let verdict = if c.agrees { "matches" } else { "DIFFERS from" };
            let _ = writeln!(out, "{}: computed {:.2} {verdict} reported {:.2}", c.measure.name(), c.computed, c.reported);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn resp(judge: usize, m: Measure, c: Condition, score: u8) -> MosResponse {
        MosResponse { judge_id: format!("j{judge}"), sample_id: "s".into(), condition: c, measure: m, score }
    }

    #[test]
    fn reported_cell_means_average_as_published() {
        let [nat, acc, qual] = REPORTED_CELL_MEANS.map(|(_, m)| overall_from_means(&m));
        assert_eq!(format!("{nat:.2}"), "4.07");
        assert_eq!(format!("{qual:.2}"), "3.88");
        assert_eq!(format!("{acc:.2}"), "3.87");
    }

    #[test]
    fn single_response_is_flagged() {
        let t = mos_aggregate(&[resp(0, Measure::Quality, Condition::Exact, 5)]).unwrap();
        let s = t.cell(Measure::Quality, Condition::Exact).unwrap();
        assert_eq!((s.mean, s.std, s.single_response), (5.0, 0.0, true));
        assert!(t.cell(Measure::Quality, Condition::Unseen).is_none());
        assert_eq!(t.overall(Measure::Quality), Some(5.0));
        assert_eq!(t.overall(Measure::Accent), None);
    }

    #[test]
    fn out_of_range_score_rejected() {
        assert!(mos_aggregate(&[resp(0, Measure::Accent, Condition::Exact, 6)]).is_err());
        assert!(mos_aggregate(&[resp(0, Measure::Accent, Condition::Exact, 0)]).is_err());
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let r: Vec<_> = [1, 2, 3, 4].iter().enumerate().map(|(j, &s)| resp(j, Measure::Accent, Condition::Similar, s)).collect();
        let s = *mos_aggregate(&r).unwrap().cell(Measure::Accent, Condition::Similar).unwrap();
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    fn arb_responses() -> impl Strategy<Value = Vec<MosResponse>> {
        proptest::collection::vec((0usize..3, 0usize..3, 1u8..=5), 1..80).prop_map(|v| {
            v.into_iter().enumerate().map(|(j, (m, c, s))| resp(j, Measure::ALL[m], Condition::ALL[c], s)).collect()
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(responses in arb_responses()) {
            let t = mos_aggregate(&responses).unwrap();
            for m in Measure::ALL {
                let mut cond_means = Vec::new();
                for c in Condition::ALL {
                    let mut total = 0u32;
                    let mut count = 0u32;
                    for r in &responses {
                        if r.measure == m && r.condition == c {
                            total += r.score as u32;
                            count += 1;
                        }
                    }
                    match t.cell(m, c) {
                        None => prop_assert_eq!(count, 0),
                        Some(s) => {
                            prop_assert_eq!(s.n as u32, count);
                            prop_assert!((s.mean - total as f64 / count as f64).abs() < 1e-12);
                            prop_assert!((1.0..=5.0).contains(&s.mean));
                            cond_means.push(total as f64 / count as f64);
                        }
                    }
                }
                match t.overall(m) {
                    None => prop_assert!(cond_means.is_empty()),
                    Some(o) => prop_assert!((o - cond_means.iter().sum::<f64>() / cond_means.len() as f64).abs() < 1e-12),
                }
            }
        }

        #[test]
        fn order_does_not_matter(responses in arb_responses(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = responses.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = mos_aggregate(&responses).unwrap();
            let b = mos_aggregate(&shuffled).unwrap();
            for m in Measure::ALL {
                for c in Condition::ALL {
                    match (a.cell(m, c), b.cell(m, c)) {
                        (Some(x), Some(y)) => {
                            prop_assert!((x.mean - y.mean).abs() < 1e-12 && (x.std - y.std).abs() < 1e-12);
                        }
                        (None, None) => {}
                        _ => prop_assert!(false),
                    }
                }
            }
        }
    }
}
