use amanda_core::nn::LrSchedule;
use amanda_core::tts::{
    attend, batch_gradients, batch_loss, encode, synthesize, AudioSettings, DecoderState, Direction, Objective,
    TextSequence, ToyCorpus, TrainConfig, Trainer, TtsConfig, TtsModelParams, Vocab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> TtsModelParams {
    let c = TtsConfig { d_emb: 16, d_enc: 16, d_dec: 16, d_att: 16, n_mels: 6, postnet_channels: 8, postnet_kernel: 3, ..Default::default() };
    TtsModelParams::init(c, AudioSettings::default(), seed).unwrap()
}

#[test]
fn two_hundred_steps_halve_the_loss_on_one_pair() {
    let toy = ToyCorpus::new(5, 4, 6, 3).unwrap();
    let pair = toy.pair(&[0, 3, 1]).unwrap();
    let cfg = TrainConfig { batch_size: 1, frame_dropout: 0.0, seed: 1, ..Default::default() };
    let mut trainer = Trainer::new(small(2), cfg).unwrap();
    let before = batch_loss(&trainer.params, &[&pair], 1.0).unwrap().total;
    for _ in 0..200 {
        trainer.train_step(&[&pair]).unwrap();
    }
    let after = batch_loss(&trainer.params, &[&pair], 1.0).unwrap().total;
    assert!(after <= 0.5 * before, "loss {before} -> {after}");
}

#[test]
fn dropping_the_consistency_weight_removes_exactly_l_c() {
    let toy = ToyCorpus::new(6, 4, 6, 9).unwrap();
    let pairs = toy.generate(3, 2, 4, 1).unwrap();
    let refs: Vec<_> = pairs.iter().collect();
    let p = small(4);
    let with = batch_loss(&p, &refs, 1.0).unwrap();
    let without = batch_loss(&p, &refs, 0.0).unwrap();
    assert!(with.l_consistency > 0.0);
    assert!((with.total - without.total - with.l_consistency).abs() < 1e-12);
    for l in [with, without] {
        assert!(l.l_fwd >= 0.0 && l.l_bwd >= 0.0 && l.l_postnet >= 0.0 && l.l_consistency >= 0.0);
    }
}

#[test]
fn zero_lambda_gradients_ignore_the_consistency_term() {
    let toy = ToyCorpus::new(6, 4, 6, 9).unwrap();
    let pair = toy.pair(&[1, 2]).unwrap();
    let p = small(5);
    let (_, a) = batch_gradients(&p, &[&pair], &Objective::composite(0.0), 0).unwrap();
    // scaling the consistency term by zero leaves every gradient untouched
    let mut q = p.clone();
    q.zero_prefix("bwd.");
    let (_, b) = batch_gradients(&q, &[&pair], &Objective::composite(0.0), 0).unwrap();
    let fwd_only = |params: &TtsModelParams, grads: &[amanda_core::nn::Tensor]| {
        params.names().iter().zip(grads).filter(|(n, _)| n.starts_with("fwd.")).map(|(_, g)| g.clone()).collect::<Vec<_>>()
    };
    assert_eq!(fwd_only(&p, &a), fwd_only(&q, &b));
}

#[test]
fn attention_is_normalized_over_random_decode_steps() {
    let p = small(6);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let len = rng.gen_range(1..12);
        let ids = (0..len).map(|_| rng.gen_range(0..p.config.vocab_size)).collect();
        let enc = encode(&TextSequence::new(ids, p.config.vocab_size).unwrap(), &p).unwrap();
        let direction = if rng.gen_bool(0.5) { Direction::Forward } else { Direction::Backward };
        let s = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (alpha, _) = attend(&DecoderState { direction, s, prev_frame: vec![0.0; 6] }, &enc, &p).unwrap();
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn synthesis_survives_a_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let p = small(7);
    p.save(&path, serde_json::json!({ "step": 0 })).unwrap();
    let loaded = TtsModelParams::load(&path).unwrap();
    let text = Vocab::default().encode("check your sugar").unwrap();
    let a = synthesize(&text, &loaded, 10).unwrap();
    let b = synthesize(&text, &loaded, 10).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mel_before.len(), a.stop_step);
    for ((x, r), y) in a.mel_before.iter().flatten().zip(a.residual.iter().flatten()).zip(a.mel_after.iter().flatten()) {
        assert_eq!(x + r, *y);
    }
}

#[test]
fn schedule_in_training_config_is_used() {
    let toy = ToyCorpus::new(4, 4, 6, 0).unwrap();
    let pair = toy.pair(&[0, 1]).unwrap();
    let frozen = TrainConfig { batch_size: 1, schedule: LrSchedule::constant(0.0), ..Default::default() };
    let mut t = Trainer::new(small(8), frozen).unwrap();
    let before = t.params.clone();
    t.train_step(&[&pair]).unwrap();
    assert_eq!(t.params, before);
    assert_eq!(t.step(), 1);
}
