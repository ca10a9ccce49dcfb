use std::sync::OnceLock;

use amanda_core::dialogue::{
    bundled_kb, handle_message, switch_language, DialogueState, IntentModel, Phase, ReplyKind, Thresholds,
};
use amanda_core::nlu::{bundled_corpus, IntentClassifier, IntentPrediction, Language, NluError, NluTrainConfig, Topic};
use proptest::prelude::*;

/// Scripted classifier: the utterance names the outcome.
struct Stub;

impl IntentModel for Stub {
    fn predict(&self, text: &str, _: Language) -> Result<IntentPrediction, NluError> {
        let (top, conf) = match text {
            "high" => ("check_blood_glucose", 0.9),
            "mid" => ("foot_care", 0.5),
            "low" => ("hba1c", 0.2),
            "oos" => ("out_of_scope", 0.95),
            "chat" => ("small_talk_greeting", 0.9),
            _ => ("exercise", 0.1),
        };
        let rest = 1.0 - conf;
        Ok(IntentPrediction { ranked: vec![(top.into(), conf), ("diabetes_diet".into(), rest)], entities: vec![] })
    }

    fn topic(&self, id: &str) -> Option<Topic> {
        Some(Topic::infer(id))
    }
}

#[derive(Debug, Clone, Copy)]
enum Input {
    Affirmative,
    Negative,
    High,
    Mid,
    Low,
    OutOfScope,
    SmallTalk,
    Empty,
}

const INPUTS: [Input; 8] =
    [Input::Affirmative, Input::Negative, Input::High, Input::Mid, Input::Low, Input::OutOfScope, Input::SmallTalk, Input::Empty];

fn utterance(i: Input) -> &'static str {
    match i {
        Input::Affirmative => "yes",
        Input::Negative => "no",
        Input::High => "high",
        Input::Mid => "mid",
        Input::Low => "low",
        Input::OutOfScope => "oos",
        Input::SmallTalk => "chat",
        Input::Empty => "   ",
    }
}

fn awaiting(id: &str) -> Phase {
    Phase::AwaitingConfirmation { intent: id.into() }
}

/// The decision table, written out independently of the engine.
fn oracle(phase: &Phase, input: Input, th: &Thresholds) -> (ReplyKind, Phase) {
    let route = |intent: &str, conf: f64| {
        if conf < th.confirm {
            (ReplyKind::Handoff, Phase::Idle)
        } else if conf >= th.direct {
            (ReplyKind::Answer, Phase::Idle)
        } else {
            (ReplyKind::Confirmation, awaiting(intent))
        }
    };
    match (phase, input) {
        (_, Input::Empty) => (ReplyKind::Clarification, phase.clone()),
        (Phase::AwaitingConfirmation { .. }, Input::Affirmative) => (ReplyKind::Answer, Phase::Idle),
        (Phase::AwaitingConfirmation { .. }, Input::Negative) => (ReplyKind::Clarification, Phase::Idle),
        (_, Input::Affirmative | Input::Negative) => route("exercise", 0.1),
        (_, Input::OutOfScope) => (ReplyKind::Handoff, Phase::Idle),
        (_, Input::SmallTalk) => (ReplyKind::SmallTalk, Phase::Idle),
        (_, Input::High) => route("check_blood_glucose", 0.9),
        (_, Input::Mid) => route("foot_care", 0.5),
        (_, Input::Low) => route("hba1c", 0.2),
    }
}

#[test]
fn every_phase_and_input_matches_the_decision_table() {
    let kb = bundled_kb();
    let phases = [Phase::Idle, awaiting("foot_care")];
    let settings = [
        Thresholds::default(),
        Thresholds { direct: 0.8, confirm: 0.35 },
        Thresholds { direct: 0.0, confirm: 0.0 },
        Thresholds { direct: 0.5, confirm: 0.5 },
    ];
    let mut cases = 0;
    for th in &settings {
        for lang in [Language::En, Language::Zh] {
            for phase in &phases {
                for input in INPUTS {
                    let state = DialogueState { session_id: "s".into(), language: lang, phase: phase.clone(), turn_count: 3 };
                    let (next, reply) = handle_message(&state, utterance(input), &Stub, &kb, th).unwrap();
                    let (kind, next_phase) = oracle(phase, input, th);
                    assert_eq!((reply.kind, &next.phase), (kind, &next_phase), "{phase:?} {input:?} {th:?}");
                    assert_eq!(next.turn_count, 4);
                    assert_eq!(next.language, lang);
                    assert!(reply.suggestions.len() <= 3);
                    if reply.kind != ReplyKind::Answer {
                        assert!(reply.suggestions.is_empty());
                    }
                    match reply.kind {
                        ReplyKind::Answer => {
                            let id = reply.intent.as_deref().unwrap();
                            assert_eq!(Some(reply.text.as_str()), kb.answer(id, lang));
                        }
                        ReplyKind::Handoff if lang == Language::En => {
                            assert!(reply.text.contains("consult your nurse or a doctor"));
                        }
                        ReplyKind::Handoff => assert!(reply.text.contains("护士或医生")),
                        _ => {}
                    }
                    cases += 1;
                }
            }
        }
    }
    assert_eq!(cases, 4 * 2 * 2 * INPUTS.len());
}

#[test]
fn confirmed_answer_is_about_the_candidate() {
    let kb = bundled_kb();
    let state = DialogueState { phase: awaiting("foot_care"), ..DialogueState::new("s", Language::En) };
    let (_, reply) = handle_message(&state, "Yes!", &Stub, &kb, &Thresholds::default()).unwrap();
    assert_eq!(reply.intent.as_deref(), Some("foot_care"));
    assert_eq!(reply.suggestions, ["Can diabetes affect my eyes?", "Can diabetes damage my kidneys?"]);
}

#[test]
fn zero_direct_threshold_answers_immediately() {
    let kb = bundled_kb();
    let th = Thresholds { direct: 0.0, confirm: 0.0 };
    let (_, reply) = handle_message(&DialogueState::new("s", Language::En), "mid", &Stub, &kb, &th).unwrap();
    assert_eq!(reply.kind, ReplyKind::Answer);
    assert!(reply.suggestions.len() <= 3);
}

#[test]
fn inverted_thresholds_rejected() {
    let th = Thresholds { direct: 0.2, confirm: 0.5 };
    assert!(handle_message(&DialogueState::new("s", Language::En), "hi", &Stub, &bundled_kb(), &th).is_err());
}

#[test]
fn switching_language_keeps_the_phase() {
    let kb = bundled_kb();
    let state = DialogueState { phase: awaiting("hba1c"), ..DialogueState::new("s", Language::En) };
    let zh = switch_language(&state, Language::Zh);
    assert_eq!(zh.phase, state.phase);
    assert_eq!(switch_language(&zh, Language::Zh), zh);
    let (_, reply) = handle_message(&zh, "是的", &Stub, &kb, &Thresholds::default()).unwrap();
    assert_eq!(reply.kind, ReplyKind::Answer);
    assert_eq!(Some(reply.text.as_str()), kb.answer("hba1c", Language::Zh));
}

fn classifier() -> &'static IntentClassifier {
    static CLF: OnceLock<IntentClassifier> = OnceLock::new();
    CLF.get_or_init(|| IntentClassifier::train(&bundled_corpus(), &NluTrainConfig::default()).unwrap())
}

#[test]
fn out_of_scope_question_is_handed_off() {
    let (next, reply) = handle_message(
        &DialogueState::new("s", Language::En),
        "should I stop taking my medication",
        classifier(),
        &bundled_kb(),
        &Thresholds::default(),
    )
    .unwrap();
    assert_eq!(reply.kind, ReplyKind::Handoff);
    assert!(reply.text.contains("consult your nurse or a doctor"));
    assert_eq!(next.phase, Phase::Idle);
}

#[test]
fn no_after_confirmation_asks_to_rephrase() {
    let kb = bundled_kb();
    let th = Thresholds::default();
    let s0 = DialogueState::new("s", Language::En);
    let (s1, r1) = handle_message(&s0, "how do I check my blood glucose", classifier(), &kb, &th).unwrap();
    assert_eq!(r1.kind, ReplyKind::Confirmation);
    let (s2, r2) = handle_message(&s1, "no", classifier(), &kb, &th).unwrap();
    assert_eq!(r2.kind, ReplyKind::Clarification);
    assert!(r2.text.contains("rephrase"));
    assert_eq!(s2.phase, Phase::Idle);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn default_thresholds_confirm_before_every_answer(picks in proptest::collection::vec(0usize..1000, 1..12)) {
        let kb = bundled_kb();
        let corpus = bundled_corpus();
        let mut pool: Vec<(String, Language)> = corpus.iter().map(|e| (e.text.clone(), e.language)).collect();
        for extra in ["yes", "no", "", "ok", "/yes", "/no"] {
            pool.push((extra.to_string(), Language::En));
        }
        let mut state = DialogueState::new("p", Language::En);
        let mut previous = None;
        for p in picks {
            let (text, lang) = &pool[p % pool.len()];
            state = switch_language(&state, *lang);
            let (next, reply) = handle_message(&state, text, classifier(), &kb, &Thresholds::default()).unwrap();
            if reply.kind == ReplyKind::Answer {
                prop_assert_eq!(previous, Some(ReplyKind::Confirmation));
            }
            previous = Some(reply.kind);
            state = next;
        }
    }
}
