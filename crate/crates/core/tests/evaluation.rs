use amanda_core::evaluation::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 20 integer scores whose mean is exactly `mean` (which must be a multiple of 0.05).
fn scores_with_mean(mean: f64) -> Vec<u8> {
    let sum = (mean * 20.0).round() as u32;
    let base = sum / 20;
    let extra = (sum % 20) as usize;
    (0..20).map(|i| (base + u32::from(i < extra)) as u8).collect()
}

fn reported_cell_responses() -> Vec<MosResponse> {
    let mut out = Vec::new();
    for (measure, means) in REPORTED_CELL_MEANS {
        for (condition, mean) in Condition::ALL.into_iter().zip(means) {
            for (j, score) in scores_with_mean(mean).into_iter().enumerate() {
                out.push(MosResponse {
                    judge_id: format!("judge{j:02}"),
                    sample_id: format!("{}-{}", condition.name(), j % 5),
                    condition,
                    measure,
                    score,
                });
            }
        }
    }
    out
}

#[test]
fn reported_cells_and_overall_figures() {
    let table = mos_aggregate(&reported_cell_responses()).unwrap();
    for (measure, means) in REPORTED_CELL_MEANS {
        for (condition, mean) in Condition::ALL.into_iter().zip(means) {
            let cell = table.cell(measure, condition).unwrap();
            assert_eq!(cell.n, 20);
            assert!((cell.mean - mean).abs() < 1e-12, "{measure:?}/{condition:?}");
        }
    }
    let report = MosReport::new(table);
    let by = |m| *report.comparisons.iter().find(|c| c.measure == m).unwrap();
    assert!(by(Measure::Naturalness).agrees);
    assert!(by(Measure::Quality).agrees);
    let accent = by(Measure::Accent);
    assert!(!accent.agrees);
    assert_eq!(format!("{:.2}", accent.computed), "3.87");
    assert_eq!(accent.reported, 3.98);
    let text = report.to_text();
    assert!(text.contains("accent: computed 3.87 DIFFERS from reported 3.98"), "{text}");
    assert!(text.contains("naturalness: computed 4.07 matches reported 4.07"));
}

#[test]
fn report_json_marks_absent_cells() {
    let one = MosResponse {
        judge_id: "j".into(),
        sample_id: "s".into(),
        condition: Condition::Similar,
        measure: Measure::Accent,
        score: 4,
    };
    let report = MosReport::new(mos_aggregate(&[one]).unwrap());
    let json = serde_json::to_value(&report).unwrap();
    let cells = json["table"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 9);
    assert_eq!(cells.iter().filter(|c| c["stats"].is_null()).count(), 8);
    assert!(report.to_text().contains("absent"));
    assert!(report.to_text().contains("4.00 (n=1)"));
}

fn brute_force_sus(items: &[u8]) -> f64 {
    let mut total = 0.0;
    for (k, &v) in items.iter().enumerate() {
        let item_number = k + 1;
        total += if item_number % 2 == 1 { v as f64 - 1.0 } else { 5.0 - v as f64 };
    }
    total * 2.5
}

#[test]
fn sus_random_sets_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for set in 0..100 {
        let n = rng.gen_range(1..40);
        let responses: Vec<SusResponse> = (0..n)
            .map(|p| SusResponse { participant_id: format!("p{set}-{p}"), items: (0..10).map(|_| rng.gen_range(1..=5)).collect() })
            .collect();
        let summary = sus_summary(&responses).unwrap();
        let oracle: Vec<f64> = responses.iter().map(|r| brute_force_sus(&r.items)).collect();
        for ((_, got), want) in summary.scores.iter().zip(&oracle) {
            assert_eq!(got, want);
        }
        assert_eq!(summary.mean, oracle.iter().sum::<f64>() / n as f64);
        let high = oracle.iter().filter(|&&s| s >= 80.0).count();
        assert_eq!(summary.fraction_at_least_80, high as f64 / n as f64);
        assert_eq!(summary.histogram.iter().sum::<usize>(), n);
    }
}

#[test]
fn sus_csv_fixture() {
    let csv = "participant_id,q1,q2,q3,q4,q5,q6,q7,q8,q9,q10\n\
               a,3,3,3,3,3,3,3,3,3,3\n\
               b,3,3,3,3,3,3,3,3,3,3\n";
    let got = read_sus_csv(csv.as_bytes()).unwrap();
    assert!(got.errors.is_empty());
    assert_eq!(sus_summary(&got.rows).unwrap().mean, 50.0);
}

proptest! {
    #[test]
    fn mos_csv_round_trip(rows in proptest::collection::vec(("[a-z0-9 ,\"]{1,8}", "[a-z0-9]{1,6}", 0usize..3, 0usize..3, 1u8..=5), 0..30)) {
        let rows: Vec<MosResponse> = rows.into_iter().map(|(j, s, c, m, score)| MosResponse {
            judge_id: j.trim().to_string().replace(' ', "_") + "x",
            sample_id: s,
            condition: Condition::ALL[c],
            measure: Measure::ALL[m],
            score,
        }).collect();
        let mut buf = Vec::new();
        write_mos_csv(&mut buf, &rows).unwrap();
        let back = read_mos_csv(buf.as_slice()).unwrap();
        prop_assert!(back.errors.is_empty());
        prop_assert_eq!(back.rows, rows);
    }
}
