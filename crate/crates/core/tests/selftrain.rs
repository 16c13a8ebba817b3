use boundloop_core::features::FeatureConfig;
use boundloop_core::predictor::{init_model, ModelSpec, TrainConfig};
use boundloop_core::selftrain::{self_train, self_train_with, Corpus, CorpusSegs, LoopConfig, MlpLearner, Role, StoppingMode};
use boundloop_core::synth::{corrupt_segmentation, synth_corpus, SynthSpec};

fn spec(seed: u64) -> SynthSpec {
    SynthSpec { n_utterances: 16, lexicon_size: 6, words_per_utterance: (3, 5), seed, ..SynthSpec::default() }
}

fn corpus(name: &str, seed: u64) -> (Corpus, CorpusSegs) {
    let s = synth_corpus(&spec(seed)).unwrap();
    let c = Corpus::from_synth(name, Role::Train, &s, &FeatureConfig::default(), false).unwrap();
    let gold = s.gold.to_segmentation(&s.vads).unwrap();
    let init = corrupt_segmentation(&gold, 0.04, 0.2, 0.2, seed).unwrap();
    (c, [(name.to_string(), init)].into())
}

fn model_spec() -> ModelSpec {
    ModelSpec { context_radius: 2, feature_dim: 40, hidden: vec![8] }
}

fn loop_cfg(stopping: StoppingMode) -> LoopConfig {
    LoopConfig {
        max_iterations: 2,
        train: TrainConfig { max_updates: 30, peak_lr: 1e-3, warmup_updates: 5, eval_every: 10, augment: false, ..TrainConfig::default() },
        stopping,
        seed: 21,
        ..LoopConfig::default()
    }
}

fn learner() -> MlpLearner {
    MlpLearner::new(model_spec(), None)
}

#[test]
fn gold_never_leaks_into_unsupervised_modes() {
    let (with_gold, init) = corpus("a", 4);
    let without = Corpus { gold: None, ..with_gold.clone() };
    for mode in [StoppingMode::Fixed, StoppingMode::SelfAgreement] {
        let cfg = loop_cfg(mode);
        let a = self_train(&[with_gold.clone()], &init, &cfg, &mut learner()).unwrap();
        let b = self_train(&[without.clone()], &init, &cfg, &mut learner()).unwrap();
        assert_eq!(a.segmentation, b.segmentation);
        assert_eq!(a.chosen_iteration, b.chosen_iteration);
        for (x, y) in a.reports.iter().zip(&b.reports) {
            assert_eq!((x.fit.clone(), x.peaks, x.self_agreement), (y.fit.clone(), y.peaks, y.self_agreement));
        }
        assert!(!a.reports[0].gold.is_empty() && b.reports[0].gold.is_empty());
    }
}

#[test]
fn every_iteration_starts_from_its_own_fresh_init() {
    let (c, init) = corpus("a", 5);
    let cfg = LoopConfig { train: TrainConfig { max_updates: 0, ..loop_cfg(StoppingMode::Fixed).train }, ..loop_cfg(StoppingMode::Fixed) };
    let mut seen = Vec::new();
    self_train_with(&[c], &init, &cfg, &mut learner(), |_, r, l| {
        assert_eq!(r.seed, cfg.iteration_seed(r.iteration));
        assert_eq!(l.model().unwrap(), &init_model(&model_spec(), r.seed).unwrap());
        seen.push(r.seed);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen.len(), 2);
    assert_ne!(seen[0], seen[1]);
}

#[test]
fn reruns_are_identical() {
    let (a, ia) = corpus("a", 6);
    let (b, ib) = corpus("b", 7);
    let init: CorpusSegs = ia.into_iter().chain(ib).collect();
    let cfg = loop_cfg(StoppingMode::DevGold);
    let x = self_train(&[a.clone(), b.clone()], &init, &cfg, &mut learner()).unwrap();
    let y = self_train(&[a, b], &init, &cfg, &mut learner()).unwrap();
    assert_eq!(x, y);
}
