//! The self-training loop: label frames from the current segmentation, train
//! a fresh predictor, fit peak detection against the pseudo-labels, re-segment
//! and repeat. Also the VAD and random baselines and leave-one-corpus-out runs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::eval::{self, CorpusMetrics, MatchCounts};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix};
use crate::labeling::labels_for_utterance;
use crate::peaks::{detect_peaks, fit_peak_params, peaks_to_times, FitObjective, PeakFit, PeakGrid, PeakParams};
use crate::predictor::{train, AudioSource, AugmentContext, CurvePoint, Mlp, ModelSpec, TrainConfig, TrainItem};
use crate::rng::{self, tag};
use crate::segmentation::{GoldAlignment, Segmentation, VadSegment, VadSet};
use crate::synth::{SynthCorpus, MIN_WORD_S};

/// Segmentations keyed by corpus name.
pub type CorpusSegs = BTreeMap<String, Segmentation>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Heldout,
}

/// One VAD slice: frame 0 of `features` and sample 0 of `audio` sit at the VAD start.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub features: FeatureMatrix,
    /// Raw audio, kept only when training re-augments it.
    pub audio: Option<AudioClip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub role: Role,
    pub vads: VadSet,
    pub utterances: BTreeMap<String, Utterance>,
    /// Used for monitoring and `dev_gold` stopping only.
    pub gold: Option<GoldAlignment>,
}

impl Corpus {
    /// Checks that every VAD has an utterance, all share one hop and the gold
    /// alignment (if any) covers the same ids.
    pub fn new(
        name: impl Into<String>,
        role: Role,
        vads: VadSet,
        utterances: BTreeMap<String, Utterance>,
        gold: Option<GoldAlignment>,
    ) -> Result<Self> {
        let name = name.into();
        if vads.is_empty() {
            return Err(Error::Empty("corpus VADs"));
        }
        for v in vads.iter() {
            if !utterances.contains_key(&v.utt_id) {
                return Err(Error::UnknownUtterance(format!("{name}/{}", v.utt_id)));
            }
        }
        if let Some(extra) = utterances.keys().find(|u| vads.get(u).is_none()) {
            return Err(Error::UtteranceMismatch(format!("{name}/{extra} has features but no VAD")));
        }
        let hop = utterances.values().next().map(|u| u.features.hop_s).unwrap_or_default();
        if let Some((id, _)) = utterances.iter().find(|(_, u)| u.features.hop_s != hop) {
            return Err(Error::Shape(format!("{name}/{id}: hop differs from the rest of the corpus")));
        }
        if let Some(g) = &gold {
            g.validate(&vads)?;
            if g.len() != vads.len() {
                return Err(Error::UtteranceMismatch(format!(
                    "{name}: gold covers {} of {} utterances",
                    g.len(),
                    vads.len()
                )));
            }
        }
        Ok(Self { name, role, vads, utterances, gold })
    }

    pub fn hop_s(&self) -> f64 {
        self.utterances.values().next().map(|u| u.features.hop_s).unwrap_or_default()
    }

    /// A synthetic corpus cut to its VADs, with features and gold.
    pub fn from_synth(
        name: impl Into<String>,
        role: Role,
        synth: &SynthCorpus,
        features: &FeatureConfig,
        keep_audio: bool,
    ) -> Result<Self> {
        let mut utterances = BTreeMap::new();
        for clip in &synth.clips {
            let v = synth.vads.require(&clip.utt_id)?;
            let slice = clip.slice_seconds(v.start_s, v.end_s)?;
            let f = extract_features(&slice, features)?;
            utterances.insert(clip.utt_id.clone(), Utterance { features: f, audio: keep_audio.then_some(slice) });
        }
        Self::new(name, role, synth.vads.clone(), utterances, Some(synth.gold.clone()))
    }
}

/// How the loop decides when to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoppingMode {
    /// Run exactly `max_iterations`.
    #[default]
    Fixed,
    /// Stop when dev-split token-F1 against gold decreases and keep the previous output.
    DevGold,
    /// Stop when successive outputs agree above the threshold.
    SelfAgreement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub dilation: usize,
    pub train: TrainConfig,
    pub peak_grid: PeakGrid,
    pub objective: FitObjective,
    pub stopping: StoppingMode,
    /// Boundary-F1 between successive outputs that ends a `SelfAgreement` run.
    pub agreement_threshold: f64,
    pub dev_fraction: f64,
    pub tolerance_s: f64,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            dilation: 1,
            train: TrainConfig::default(),
            peak_grid: PeakGrid::default(),
            objective: FitObjective::default(),
            stopping: StoppingMode::default(),
            agreement_threshold: 0.95,
            dev_fraction: 0.1,
            tolerance_s: eval::DEFAULT_TOLERANCE_S,
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("loop.max_iterations must be at least 1".into()));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction <= 0.5) {
            return Err(Error::InvalidConfig("loop.dev_fraction must be in (0, 0.5]".into()));
        }
        if !(self.tolerance_s > 0.0) {
            return Err(Error::InvalidConfig("eval.tolerance_s must be positive".into()));
        }
        self.train.validate()
    }

    /// Seed of iteration `iteration` (1-based). Model init, batch order and
    /// augmentation all derive from it.
    pub fn iteration_seed(&self, iteration: usize) -> u64 {
        rng::derive_seed(self.seed, tag::ITERATION, iteration as u64)
    }
}

/// Outcome of one training run as seen by the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub best_step: u64,
    pub best_dev_loss: f64,
    pub curve: Vec<CurvePoint>,
}

/// A boundary predictor the loop can reset, train and query.
pub trait Learner {
    /// Trains from scratch; any previous state is discarded.
    fn fit(&mut self, train: &[TrainItem], dev: &[TrainItem], cfg: &TrainConfig) -> Result<FitSummary>;
    /// Per-frame boundary probabilities.
    fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>>;
}

/// The windowed MLP predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLearner {
    pub spec: ModelSpec,
    pub augment: Option<AugmentContext>,
    model: Option<Mlp>,
}

impl MlpLearner {
    pub fn new(spec: ModelSpec, augment: Option<AugmentContext>) -> Self {
        Self { spec, augment, model: None }
    }

    pub fn model(&self) -> Option<&Mlp> {
        self.model.as_ref()
    }
}

impl Learner for MlpLearner {
    fn fit(&mut self, train_items: &[TrainItem], dev: &[TrainItem], cfg: &TrainConfig) -> Result<FitSummary> {
        self.model = None;
        let out = train(train_items, dev, &self.spec, cfg, self.augment.as_ref())?;
        self.model = Some(out.model);
        Ok(FitSummary { best_step: out.best_step, best_dev_loss: out.best_dev_loss, curve: out.curve })
    }

    fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        self.model.as_ref().ok_or(Error::Empty("trained model"))?.predict(features)
    }
}

/// Source of the iteration-0 segmentation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    /// VAD edges only.
    Vad,
    /// Normal(mean, std) durations truncated at 50 ms, packed left to right.
    Random { stats: Option<(f64, f64)>, seed: u64 },
    /// An existing segmentation, e.g. from another system.
    File(Segmentation),
}

pub fn make_initial_segmentation(kind: &InitKind, vads: &VadSet) -> Result<Segmentation> {
    match kind {
        InitKind::Vad => Ok(Segmentation::edges_only(vads)),
        InitKind::Random { stats, seed } => {
            let (mean, std) = stats.ok_or_else(|| {
                Error::InvalidConfig("random initialization needs duration mean and std".into())
            })?;
            if !(mean > 0.0 && std >= 0.0 && mean.is_finite() && std.is_finite()) {
                return Err(Error::InvalidConfig(format!("random initialization: mean {mean}, std {std}")));
            }
            let mut seg = Segmentation::new();
            for (idx, vad) in vads.iter().enumerate() {
                let mut r = rng::rng(rng::derive_seed(*seed, tag::INIT_RANDOM, idx as u64));
                seg.insert(vad, random_boundaries(vad, mean, std, &mut r));
            }
            Ok(seg)
        }
        InitKind::File(seg) => {
            seg.validate(vads)?;
            if seg.len() != vads.len() {
                return Err(Error::UtteranceMismatch(format!(
                    "segmentation covers {} of {} VADs",
                    seg.len(),
                    vads.len()
                )));
            }
            Ok(seg.clone())
        }
    }
}

fn random_boundaries(vad: &VadSegment, mean: f64, std: f64, r: &mut impl Rng) -> Vec<f64> {
    const EPS: f64 = 1e-9;
    let mut out = Vec::new();
    let mut t = vad.start_s;
    loop {
        let z: f64 = r.sample(StandardNormal);
        let d = (mean + std * z).max(MIN_WORD_S);
        if t + d > vad.end_s + EPS {
            // The last token would be cut short: merge it into its predecessor.
            out.pop();
            break;
        }
        if t + d >= vad.end_s - EPS {
            break;
        }
        t += d;
        out.push(t);
    }
    out
}

/// Development utterance ids per training corpus.
pub type DevSplits = BTreeMap<String, BTreeSet<String>>;

/// Seeded split of `fraction` of each training corpus (at least one
/// utterance, never all of them).
pub fn make_dev_splits(corpora: &[Corpus], fraction: f64, seed: u64) -> Result<DevSplits> {
    let mut out = DevSplits::new();
    for (ci, c) in corpora.iter().enumerate().filter(|(_, c)| c.role == Role::Train) {
        let mut ids: Vec<&String> = c.utterances.keys().collect();
        if ids.len() < 2 {
            return Err(Error::Invalid(format!("corpus `{}` needs at least 2 utterances to split", c.name)));
        }
        let n_dev = (libm::round(fraction * ids.len() as f64) as usize).clamp(1, ids.len() - 1);
        ids.shuffle(&mut rng::rng(rng::derive_seed(seed, tag::DEV_SPLIT, ci as u64)));
        out.insert(c.name.clone(), ids[..n_dev].iter().map(|s| (*s).clone()).collect());
    }
    Ok(out)
}

fn restrict_vads(vads: &VadSet, ids: &BTreeSet<String>) -> VadSet {
    let mut out = VadSet::default();
    for v in vads.iter().filter(|v| ids.contains(&v.utt_id)) {
        out.insert(v.clone());
    }
    out
}

/// Metrics of `corpus` against its gold alignment, restricted to `ids` when given.
pub fn gold_metrics(corpus: &Corpus, seg: &Segmentation, ids: Option<&BTreeSet<String>>, tol: f64) -> Result<Option<CorpusMetrics>> {
    let Some(gold) = &corpus.gold else { return Ok(None) };
    let m = match ids {
        None => eval::evaluate_corpus(&corpus.name, seg, gold, &corpus.vads, tol)?,
        Some(ids) => {
            eval::evaluate_corpus(
                &corpus.name,
                &seg.restrict(ids.iter().map(String::as_str)),
                &gold.restrict(ids.iter().map(String::as_str)),
                &restrict_vads(&corpus.vads, ids),
                tol,
            )?
        }
    };
    Ok(Some(m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// 1-based.
    pub iteration: usize,
    pub seed: u64,
    pub fit: FitSummary,
    pub peaks: PeakFit,
    /// Boundary-F1 between the new and the previous segmentation of the training corpora.
    pub self_agreement: f64,
    /// Per-corpus metrics on all utterances, for corpora with gold.
    pub gold: Vec<CorpusMetrics>,
    /// Per-corpus metrics on the development split, for training corpora with gold.
    pub dev_gold: Vec<CorpusMetrics>,
}

fn mean_token_f1(metrics: &[CorpusMetrics]) -> Option<f64> {
    if metrics.is_empty() {
        None
    } else {
        Some(metrics.iter().map(|m| m.token.f1).sum::<f64>() / metrics.len() as f64)
    }
}

impl IterationReport {
    pub fn dev_gold_token_f1(&self) -> Option<f64> {
        mean_token_f1(&self.dev_gold)
    }
}

const KEY_SEP: char = '\u{1f}';

fn train_items(corpus: &Corpus, seg: &Segmentation, ids: impl Iterator<Item = String>, dilation: usize, with_audio: bool) -> Result<Vec<TrainItem>> {
    ids.map(|id| {
        let u = &corpus.utterances[&id];
        let f = &u.features;
        let labels = labels_for_utterance(seg, &corpus.vads, &id, f.n_frames, f.hop_s, dilation)?.labels;
        let audio = match (&u.audio, with_audio) {
            (Some(clip), true) => {
                let start = corpus.vads.require(&id)?.start_s;
                let boundaries = seg.require(&id)?.iter().map(|t| t - start).collect();
                Some(AudioSource { clip: clip.clone(), boundaries })
            }
            _ => None,
        };
        Ok(TrainItem { features: f.clone(), labels, audio })
    })
    .collect()
}

/// Probability tracks keyed by (corpus, utterance).
pub type Tracks = BTreeMap<(String, String), Vec<f64>>;

fn training_corpora(corpora: &[Corpus]) -> Result<Vec<&Corpus>> {
    let training: Vec<&Corpus> = corpora.iter().filter(|c| c.role == Role::Train).collect();
    if training.is_empty() {
        return Err(Error::Empty("training corpora"));
    }
    Ok(training)
}

/// Common hop of all corpora.
pub fn shared_hop(corpora: &[Corpus]) -> Result<f64> {
    let hop_s = corpora.first().ok_or(Error::Empty("corpora"))?.hop_s();
    if let Some(c) = corpora.iter().find(|c| c.hop_s() != hop_s) {
        return Err(Error::Shape(format!("corpus `{}` uses a different hop", c.name)));
    }
    Ok(hop_s)
}

fn current_of<'a>(current: &'a CorpusSegs, c: &Corpus) -> Result<&'a Segmentation> {
    current.get(&c.name).ok_or_else(|| Error::UnknownUtterance(format!("segmentation of corpus `{}`", c.name)))
}

/// Training and development items of the training corpora, labelled from `current`.
pub fn training_data(
    corpora: &[Corpus],
    splits: &DevSplits,
    current: &CorpusSegs,
    dilation: usize,
) -> Result<(Vec<TrainItem>, Vec<TrainItem>)> {
    let mut train_set = Vec::new();
    let mut dev_set = Vec::new();
    for c in training_corpora(corpora)? {
        let seg = current_of(current, c)?;
        seg.validate(&c.vads)?;
        let dev = splits.get(&c.name).ok_or_else(|| Error::UnknownUtterance(format!("dev split of `{}`", c.name)))?;
        let is_train = |id: &&String| !dev.contains(*id);
        train_set.extend(train_items(c, seg, c.utterances.keys().filter(is_train).cloned(), dilation, true)?);
        dev_set.extend(train_items(c, seg, dev.iter().cloned(), dilation, false)?);
    }
    Ok((train_set, dev_set))
}

/// Runs the predictor over every utterance of every corpus.
pub fn predict_all<L: Learner>(corpora: &[Corpus], learner: &L) -> Result<Tracks> {
    let mut tracks = Tracks::new();
    for c in corpora {
        for (id, u) in &c.utterances {
            let p = learner.predict(&u.features)?;
            if p.len() != u.features.n_frames || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Shape(format!("{}/{id}: predictor returned an invalid track", c.name)));
            }
            tracks.insert((c.name.clone(), id.clone()), p);
        }
    }
    Ok(tracks)
}

fn track<'a>(tracks: &'a Tracks, corpus: &str, utt: &str) -> Result<&'a [f64]> {
    tracks
        .get(&(corpus.to_string(), utt.to_string()))
        .map(Vec::as_slice)
        .ok_or_else(|| Error::UnknownUtterance(format!("probabilities of {corpus}/{utt}")))
}

/// Fits peak parameters on the dev split of the training corpora against `reference`.
pub fn fit_peaks_on_dev(
    corpora: &[Corpus],
    splits: &DevSplits,
    reference: &CorpusSegs,
    tracks: &Tracks,
    cfg: &LoopConfig,
) -> Result<PeakFit> {
    let hop_s = shared_hop(corpora)?;
    let mut keyed_vads = VadSet::default();
    let mut keyed_ref = Segmentation::new();
    let mut keys = Vec::new();
    for c in training_corpora(corpora)? {
        let seg = current_of(reference, c)?;
        for id in splits.get(&c.name).into_iter().flatten() {
            let v = c.vads.require(id)?;
            let key = format!("{}{KEY_SEP}{id}", c.name);
            let kv = VadSegment::new(key.clone(), v.start_s, v.end_s)?;
            keyed_ref.insert(&kv, seg.require(id)?.iter().copied());
            keyed_vads.insert(kv);
            keys.push((key, track(tracks, &c.name, id)?));
        }
    }
    let fit_tracks: Vec<(&str, &[f64])> = keys.iter().map(|(k, t)| (k.as_str(), *t)).collect();
    fit_peak_params(&fit_tracks, &keyed_ref, &keyed_vads, &cfg.peak_grid, hop_s, cfg.tolerance_s, cfg.objective)
}

/// Detects boundaries in every utterance of every corpus.
pub fn segment_all(corpora: &[Corpus], tracks: &Tracks, params: PeakParams) -> Result<CorpusSegs> {
    let hop_s = shared_hop(corpora)?;
    let mut out = CorpusSegs::new();
    for c in corpora {
        let mut seg = Segmentation::new();
        for v in c.vads.iter() {
            let idx = detect_peaks(track(tracks, &c.name, &v.utt_id)?, params);
            seg.insert(v, peaks_to_times(&idx, hop_s, v.start_s, v.end_s));
        }
        out.insert(c.name.clone(), seg);
    }
    Ok(out)
}

/// One round of the loop. `current` must hold a segmentation for every
/// training corpus; held-out corpora are only segmented.
pub fn run_iteration<L: Learner>(
    corpora: &[Corpus],
    splits: &DevSplits,
    current: &CorpusSegs,
    cfg: &LoopConfig,
    iteration: usize,
    learner: &mut L,
) -> Result<(CorpusSegs, IterationReport)> {
    shared_hop(corpora)?;
    let (train_set, dev_set) = training_data(corpora, splits, current, cfg.dilation)?;

    // A fresh model every iteration.
    let seed = cfg.iteration_seed(iteration);
    let fit = learner.fit(&train_set, &dev_set, &TrainConfig { seed, ..cfg.train })?;

    // Probabilities everywhere, no augmentation; peaks fitted against the pseudo-labels.
    let tracks = predict_all(corpora, learner)?;
    let peaks = fit_peaks_on_dev(corpora, splits, current, &tracks, cfg)?;
    let next = segment_all(corpora, &tracks, peaks.params)?;

    let mut agree = MatchCounts::default();
    for c in training_corpora(corpora)? {
        agree.add(eval::boundary_counts(&next[&c.name], current_of(current, c)?, cfg.tolerance_s)?);
    }
    let mut gold = Vec::new();
    let mut dev_gold = Vec::new();
    for c in corpora {
        gold.extend(gold_metrics(c, &next[&c.name], None, cfg.tolerance_s)?);
        if c.role == Role::Train {
            dev_gold.extend(gold_metrics(c, &next[&c.name], Some(&splits[&c.name]), cfg.tolerance_s)?);
        }
    }
    let report = IterationReport { iteration, seed, fit, peaks, self_agreement: agree.prf().f1, gold, dev_gold };
    Ok((next, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainOutcome {
    /// Output of the chosen iteration.
    pub segmentation: CorpusSegs,
    /// 0 means the initial segmentation was kept.
    pub chosen_iteration: usize,
    pub reports: Vec<IterationReport>,
    /// Dev-split gold metrics of the initial segmentation.
    pub initial_dev_gold: Vec<CorpusMetrics>,
    pub splits: DevSplits,
}

/// Full loop with the default (no-op) per-iteration observer.
pub fn self_train<L: Learner>(corpora: &[Corpus], init: &CorpusSegs, cfg: &LoopConfig, learner: &mut L) -> Result<SelfTrainOutcome> {
    self_train_with(corpora, init, cfg, learner, |_, _, _| Ok(()))
}

/// Full loop. `observe` sees every iteration's output as soon as it exists,
/// together with the learner that produced it.
pub fn self_train_with<L: Learner>(
    corpora: &[Corpus],
    init: &CorpusSegs,
    cfg: &LoopConfig,
    learner: &mut L,
    mut observe: impl FnMut(&CorpusSegs, &IterationReport, &L) -> Result<()>,
) -> Result<SelfTrainOutcome> {
    cfg.validate()?;
    let mut names = BTreeSet::new();
    for c in corpora {
        if !names.insert(c.name.as_str()) {
            return Err(Error::InvalidConfig(format!("corpus `{}` listed twice", c.name)));
        }
    }
    let splits = make_dev_splits(corpora, cfg.dev_fraction, cfg.seed)?;
    let mut initial_dev_gold = Vec::new();
    for c in corpora.iter().filter(|c| c.role == Role::Train) {
        let seg = init.get(&c.name).ok_or_else(|| Error::UnknownUtterance(format!("segmentation of corpus `{}`", c.name)))?;
        initial_dev_gold.extend(gold_metrics(c, seg, Some(&splits[&c.name]), cfg.tolerance_s)?);
    }
    let n_train = corpora.iter().filter(|c| c.role == Role::Train).count();
    if cfg.stopping == StoppingMode::DevGold && initial_dev_gold.len() != n_train {
        return Err(Error::InvalidConfig("dev_gold stopping needs gold alignments for every training corpus".into()));
    }

    let mut current = init.clone();
    let mut chosen = 0;
    let mut best_dev = mean_token_f1(&initial_dev_gold);
    let mut reports = Vec::new();
    for iteration in 1..=cfg.max_iterations {
        let (next, report) = run_iteration(corpora, &splits, &current, cfg, iteration, learner)?;
        observe(&next, &report, learner)?;
        let stop = match cfg.stopping {
            StoppingMode::Fixed => false,
            StoppingMode::DevGold => {
                let f = report.dev_gold_token_f1();
                if f < best_dev {
                    true
                } else {
                    best_dev = f;
                    false
                }
            }
            StoppingMode::SelfAgreement => report.self_agreement > cfg.agreement_threshold,
        };
        let worse = cfg.stopping == StoppingMode::DevGold && stop;
        reports.push(report);
        if worse {
            break;
        }
        current = next;
        chosen = iteration;
        if stop {
            break;
        }
    }
    Ok(SelfTrainOutcome { segmentation: current, chosen_iteration: chosen, reports, initial_dev_gold, splits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOut {
    /// Held-out corpus metrics on all its utterances.
    pub heldout: Option<CorpusMetrics>,
    /// Training corpora metrics on all their utterances.
    pub in_training: Vec<CorpusMetrics>,
    pub outcome: SelfTrainOutcome,
}

/// Runs the loop with `heldout` excluded from every fitting step and
/// segmented with the final model and peak parameters.
pub fn leave_one_out<L: Learner>(
    corpora: &[Corpus],
    init: &CorpusSegs,
    cfg: &LoopConfig,
    heldout: &str,
    learner: &mut L,
) -> Result<LeaveOneOut> {
    if corpora.len() < 2 {
        return Err(Error::InvalidConfig("leave-one-out needs at least 2 corpora".into()));
    }
    if !corpora.iter().any(|c| c.name == heldout) {
        return Err(Error::InvalidConfig(format!("unknown held-out corpus `{heldout}`")));
    }
    let mut roles: Vec<Corpus> = corpora.to_vec();
    for c in &mut roles {
        c.role = if c.name == heldout { Role::Heldout } else { Role::Train };
    }
    let outcome = self_train(&roles, init, cfg, learner)?;
    let mut heldout_metrics = None;
    let mut in_training = Vec::new();
    for c in &roles {
        let Some(seg) = outcome.segmentation.get(&c.name) else { continue };
        match (c.role, gold_metrics(c, seg, None, cfg.tolerance_s)?) {
            (Role::Heldout, m) => heldout_metrics = m,
            (Role::Train, Some(m)) => in_training.push(m),
            (Role::Train, None) => {}
        }
    }
    Ok(LeaveOneOut { heldout: heldout_metrics, in_training, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn vads(spans: &[(&str, f64, f64)]) -> VadSet {
        VadSet::from_segments(spans.iter().map(|&(u, a, b)| VadSegment::new(u, a, b).unwrap())).unwrap()
    }

    #[test]
    fn vad_init_is_edges() {
        let v = vads(&[("a", 0.0, 1.0), ("b", 0.5, 2.0)]);
        let seg = make_initial_segmentation(&InitKind::Vad, &v).unwrap();
        assert_eq!(seg.token_count(), 2);
        let tps = eval::tokens_per_second(&seg, &v).unwrap();
        assert!((tps - 2.0 / 2.5).abs() < 1e-12);
    }

    #[test]
    fn random_init_with_zero_std_splits_evenly() {
        let v = vads(&[("a", 0.0, 1.2), ("b", 0.4, 1.2)]);
        for (id, mean) in [("a", 0.3), ("b", 0.2)] {
            let one = restrict_vads(&v, &[String::from(id)].into_iter().collect());
            let kind = InitKind::Random { stats: Some((mean, 0.0)), seed: 3 };
            let seg = make_initial_segmentation(&kind, &one).unwrap();
            let toks = seg.tokens(id).unwrap();
            assert_eq!(toks.len(), 4);
            assert!(toks.iter().all(|(a, b)| (b - a - mean).abs() < 1e-9));
        }
    }

    #[test]
    fn random_init_merges_partial_token() {
        let v = vads(&[("a", 0.0, 1.0)]);
        let seg = make_initial_segmentation(&InitKind::Random { stats: Some((0.3, 0.0)), seed: 0 }, &v).unwrap();
        assert_eq!(seg.get("a").unwrap(), &[0.0, 0.3, 0.6, 1.0]);
    }

    #[test]
    fn random_init_is_seeded_and_needs_stats() {
        let v = vads(&[("a", 0.0, 3.0), ("b", 1.0, 5.0)]);
        let k = |seed| InitKind::Random { stats: Some((0.25, 0.1)), seed };
        let s1 = make_initial_segmentation(&k(1), &v).unwrap();
        assert_eq!(s1, make_initial_segmentation(&k(1), &v).unwrap());
        assert_ne!(s1, make_initial_segmentation(&k(2), &v).unwrap());
        s1.validate(&v).unwrap();
        assert!(make_initial_segmentation(&InitKind::Random { stats: None, seed: 1 }, &v).is_err());
    }

    fn toy_corpus(name: &str, n: usize, role: Role) -> Corpus {
        let mut segs = Vec::new();
        let mut utts = BTreeMap::new();
        for i in 0..n {
            let id = format!("u{i}");
            segs.push(VadSegment::new(id.clone(), 0.0, 1.0).unwrap());
            let f = FeatureMatrix::new(id.clone(), 50, 1, 0.02, vec![0.0; 50]).unwrap();
            utts.insert(id, Utterance { features: f, audio: None });
        }
        Corpus::new(name, role, VadSet::from_segments(segs).unwrap(), utts, None).unwrap()
    }

    #[test]
    fn dev_split_is_seeded_and_bounded() {
        let cs = [toy_corpus("a", 20, Role::Train), toy_corpus("b", 3, Role::Train), toy_corpus("h", 5, Role::Heldout)];
        let s = make_dev_splits(&cs, 0.1, 4).unwrap();
        assert_eq!(s["a"].len(), 2);
        assert_eq!(s["b"].len(), 1);
        assert!(!s.contains_key("h"));
        assert_eq!(s, make_dev_splits(&cs, 0.1, 4).unwrap());
        assert!(make_dev_splits(&[toy_corpus("x", 1, Role::Train)], 0.1, 0).is_err());
    }

    /// Ignores the data and emits a fixed track shape per call.
    struct Scripted {
        calls: usize,
        tracks: Vec<Vec<f64>>,
    }

    impl Learner for Scripted {
        fn fit(&mut self, _: &[TrainItem], _: &[TrainItem], _: &TrainConfig) -> Result<FitSummary> {
            self.calls += 1;
            Ok(FitSummary { best_step: 0, best_dev_loss: 0.0, curve: Vec::new() })
        }
        fn predict(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
            let t = &self.tracks[(self.calls - 1).min(self.tracks.len() - 1)];
            assert_eq!(t.len(), f.n_frames);
            Ok(t.clone())
        }
    }

    fn bump(at: &[usize]) -> Vec<f64> {
        let mut t = vec![0.0; 50];
        for &i in at {
            t[i] = 0.9;
        }
        t
    }

    fn at(c: &Corpus, times: &[f64]) -> Segmentation {
        let mut seg = Segmentation::new();
        for v in c.vads.iter() {
            seg.insert(v, times.iter().copied());
        }
        seg
    }

    #[test]
    fn flat_probabilities_give_edges_only() {
        let cs = [toy_corpus("a", 10, Role::Train)];
        let init: CorpusSegs = [("a".into(), Segmentation::edges_only(&cs[0].vads))].into();
        let mut l = Scripted { calls: 0, tracks: vec![vec![0.5; 50]] };
        let cfg = LoopConfig { max_iterations: 1, ..LoopConfig::default() };
        let out = self_train(&cs, &init, &cfg, &mut l).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.segmentation["a"], Segmentation::edges_only(&cs[0].vads));
    }

    fn with_gold(mut c: Corpus) -> Corpus {
        let mut g = GoldAlignment::new();
        for v in c.vads.iter() {
            g.insert(
                v.utt_id.clone(),
                vec![
                    crate::AlignedWord::new("x", 0.0, 0.3),
                    crate::AlignedWord::new("y", 0.3, 0.6),
                    crate::AlignedWord::new("z", 0.6, 1.0),
                ],
            )
            .unwrap();
        }
        c.gold = Some(g);
        c
    }

    #[test]
    fn dev_gold_stops_on_first_decrease() {
        let cs = [with_gold(toy_corpus("a", 10, Role::Train))];
        let gold = cs[0].gold.as_ref().unwrap().to_segmentation(&cs[0].vads).unwrap();
        let init: CorpusSegs = [("a".into(), gold)].into();
        // Every iteration drifts further from gold.
        let mut l = Scripted { calls: 0, tracks: vec![bump(&[20]), bump(&[10]), bump(&[5])] };
        let cfg = LoopConfig { max_iterations: 3, stopping: StoppingMode::DevGold, ..LoopConfig::default() };
        let out = self_train(&cs, &init, &cfg, &mut l).unwrap();
        assert_eq!(out.chosen_iteration, 0);
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.segmentation, init);
    }

    #[test]
    fn self_agreement_stops_when_stable() {
        let cs = [toy_corpus("a", 10, Role::Train)];
        let init: CorpusSegs = [("a".into(), at(&cs[0], &[0.3]))].into();
        let mut l = Scripted { calls: 0, tracks: vec![bump(&[15, 30])] };
        let cfg = LoopConfig { max_iterations: 5, stopping: StoppingMode::SelfAgreement, ..LoopConfig::default() };
        let out = self_train(&cs, &init, &cfg, &mut l).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.chosen_iteration, 2);
        assert_eq!(out.segmentation["a"].get("u0").unwrap(), &[0.0, 0.3, 0.6, 1.0]);
    }

    #[test]
    fn fixed_mode_runs_every_iteration() {
        let cs = [toy_corpus("a", 10, Role::Train)];
        let init: CorpusSegs = [("a".into(), Segmentation::edges_only(&cs[0].vads))].into();
        let mut l = Scripted { calls: 0, tracks: vec![bump(&[15, 30])] };
        let cfg = LoopConfig { max_iterations: 3, ..LoopConfig::default() };
        let out = self_train(&cs, &init, &cfg, &mut l).unwrap();
        assert_eq!((out.reports.len(), out.chosen_iteration, l.calls), (3, 3, 3));
    }

    #[test]
    fn leave_one_out_checks_arguments() {
        let cs = [toy_corpus("a", 10, Role::Train), toy_corpus("b", 10, Role::Train)];
        let init: CorpusSegs = cs.iter().map(|c| (c.name.clone(), at(c, &[0.3]))).collect();
        let mut l = Scripted { calls: 0, tracks: vec![bump(&[15])] };
        let cfg = LoopConfig { max_iterations: 1, ..LoopConfig::default() };
        assert!(leave_one_out(&cs, &init, &cfg, "zzz", &mut l).is_err());
        assert!(leave_one_out(&cs[..1], &init, &cfg, "a", &mut l).is_err());
        let out = leave_one_out(&cs, &init, &cfg, "b", &mut l).unwrap();
        assert!(!out.outcome.splits.contains_key("b"));
        assert_eq!(out.outcome.segmentation["b"].get("u3").unwrap(), &[0.0, 0.3, 1.0]);
    }
}
