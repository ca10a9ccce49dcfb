use amanda_core::nlu::{bundled_corpus, bundled_heldout, disjoint_fixture, IntentClassifier, Language, NluTrainConfig};

#[test]
fn disjoint_vocabulary_corpus_is_learned() {
    let (train, held) = disjoint_fixture();
    let clf = IntentClassifier::train(&train, &NluTrainConfig::default()).unwrap();
    assert_eq!(clf.accuracy(&train).unwrap(), 1.0);
    assert!(clf.accuracy(&held).unwrap() >= 0.8);
}

#[test]
fn bundled_corpus_generalizes_to_paraphrases() {
    let clf = IntentClassifier::train(&bundled_corpus(), &NluTrainConfig::default()).unwrap();
    let train_acc = clf.accuracy(&bundled_corpus()).unwrap();
    let held_acc = clf.accuracy(&bundled_heldout()).unwrap();
    eprintln!("train {train_acc:.3} held-out {held_acc:.3}");
    for ex in bundled_heldout() {
        let p = clf.predict(&ex.text, ex.language).unwrap();
        if p.top().0 != ex.intent {
            eprintln!("miss: {:?} -> {} ({:.2}), want {}", ex.text, p.top().0, p.top().1, ex.intent);
        }
    }
    assert!(held_acc >= 0.8);
}

#[test]
fn training_is_deterministic() {
    let cfg = NluTrainConfig { seed: 4, ..Default::default() };
    let a = IntentClassifier::train(&bundled_corpus(), &cfg).unwrap();
    let b = IntentClassifier::train(&bundled_corpus(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn confidences_form_a_distribution() {
    let clf = IntentClassifier::train(&bundled_corpus(), &NluTrainConfig::default()).unwrap();
    for text in ["my sugar is 12", "血糖", "???", "HELLO", "  hello  "] {
        let p = clf.predict(text, Language::En).unwrap();
        let sum: f64 = p.ranked.iter().map(|(_, c)| c).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(p.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(p.ranked.iter().all(|(_, c)| (0.0..=1.0).contains(c)));
    }
    assert_eq!(clf.predict("HELLO", Language::En).unwrap(), clf.predict("  hello ", Language::En).unwrap());
}
