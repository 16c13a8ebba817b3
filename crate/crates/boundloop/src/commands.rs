//! One function per CLI subcommand. Each writes only under the run
//! directory and returns the text to print.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use boundloop_core::eval::{self, make_report, metric, EvalReport, MetricRecord};
use boundloop_core::peaks::{PeakFit, PeakParams};
use boundloop_core::predictor::{CurvePoint, TrainConfig};
use boundloop_core::rng::{derive_seed, tag};
use boundloop_core::selftrain::{
    fit_peaks_on_dev, make_dev_splits, predict_all, segment_all, self_train_with, training_data, CorpusSegs,
    IterationReport, Learner, MlpLearner, Tracks,
};
use boundloop_core::synth::{corrupt_segmentation, synth_corpus, SynthSpec};
use boundloop_core::FeatureMatrix;
use rayon::prelude::*;

use crate::config::{InitKindName, RunConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::{self, load_corpora, thread_pool};

pub const MANIFEST: &str = "manifest.txt";

/// The output directory of one command.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the directory and records the manifest in it.
    pub fn create(cfg: &RunConfig) -> Result<Self> {
        let root = cfg.out.clone();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let dir = Self { root };
        dir.write(MANIFEST, cfg.manifest().as_bytes())?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        io::write_bytes(&self.path(rel), bytes)
    }
}

fn seg_file(prefix: &str, corpus: &str) -> String {
    format!("{prefix}/{corpus}.txt")
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.require_seed()?;
    let dir = RunDir::create(cfg)?;
    let spec = SynthSpec { seed, ..cfg.synth.clone() };
    let corpus = synth_corpus(&spec)?;
    let pool = thread_pool(cfg.workers)?;
    pool.install(|| {
        corpus
            .clips
            .par_iter()
            .map(|c| io::write_wav(&pipeline::wav_path(&dir.path("audio"), &c.utt_id), c))
            .collect::<Result<Vec<()>>>()
    })?;
    io::write_vad(&dir.path("vad.txt"), &corpus.vads)?;
    io::write_alignment(&dir.path("alignment.txt"), &corpus.gold)?;
    let gold = corpus.gold.to_segmentation(&corpus.vads)?;
    let k = cfg.corrupt;
    let init = corrupt_segmentation(&gold, k.jitter_s, k.p_delete, k.p_insert, derive_seed(seed, tag::CORRUPT, 0))?;
    io::write_segmentation(&dir.path("init_corrupt.txt"), &init)?;
    io::write_segmentation(&dir.path("gold_segmentation.txt"), &gold)?;
    let root = dir.root().display();
    let snippet = format!(
        "corpus.synth.audio_dir = {root}/audio\ncorpus.synth.vad = {root}/vad.txt\ncorpus.synth.alignment = {root}/alignment.txt\n"
    );
    dir.write("corpus.conf", snippet.as_bytes())?;
    Ok(format!(
        "synth utterances={} tokens={} out={}\n",
        corpus.clips.len(),
        corpus.gold.token_count(),
        dir.root().display()
    ))
}

// ---------------------------------------------------------------- features

pub fn cmd_features(cfg: &RunConfig) -> Result<String> {
    let dir = RunDir::create(cfg)?;
    let pool = thread_pool(cfg.workers)?;
    let corpora = load_corpora(cfg, false, &pool)?;
    let mut out = String::new();
    for c in &corpora {
        pool.install(|| {
            c.utterances
                .par_iter()
                .map(|(id, u)| io::write_matrix(&dir.path(format!("features/{}/{id}.fmx", c.name)), &u.features))
                .collect::<Result<Vec<()>>>()
        })?;
        writeln!(out, "features corpus={} utterances={}", c.name, c.utterances.len()).unwrap();
    }
    Ok(out)
}

// ---------------------------------------------------------------- init-seg

pub fn cmd_init_seg(cfg: &RunConfig, kind: Option<InitKindName>) -> Result<String> {
    let mut cfg = cfg.clone();
    if let Some(k) = kind {
        cfg.init.kind = k;
        if k != InitKindName::File {
            for c in &mut cfg.corpora {
                c.init_seg = None;
            }
        }
    }
    let dir = RunDir::create(&cfg)?;
    let mut out = String::new();
    for (i, paths) in cfg.corpora.iter().enumerate() {
        let vads = io::read_vad_set(&paths.vad)?;
        let gold = paths.alignment.as_deref().map(io::read_alignment).transpose()?;
        let seg = pipeline::initial_segmentation(&cfg, paths, &vads, gold.as_ref(), i)?;
        io::write_segmentation(&dir.path(seg_file("init", &paths.name)), &seg)?;
        writeln!(out, "init corpus={} tokens={}", paths.name, seg.token_count()).unwrap();
    }
    Ok(out)
}

// ---------------------------------------------------------------- train / infer / fit-peaks / segment

fn format_curve(curve: &[CurvePoint]) -> String {
    let mut out = String::from("step\ttrain_loss\tdev_loss\n");
    for p in curve {
        writeln!(out, "{}\t{:.6}\t{:.6}", p.step, p.train_loss, p.dev_loss).unwrap();
    }
    out
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.require_seed()?;
    let dir = RunDir::create(cfg)?;
    let pool = thread_pool(cfg.workers)?;
    let corpora = load_corpora(cfg, cfg.augment_enabled, &pool)?;
    let init = pipeline::initial_segmentations(cfg, &corpora)?;
    let splits = make_dev_splits(&corpora, cfg.loop_cfg.dev_fraction, seed)?;
    let (train_set, dev_set) = training_data(&corpora, &splits, &init, cfg.loop_cfg.dilation)?;
    let mut learner = MlpLearner::new(cfg.model_spec.clone(), cfg.augment_context());
    let tc = TrainConfig { seed: cfg.loop_cfg.iteration_seed(1), ..cfg.loop_cfg.train };
    let fit = learner.fit(&train_set, &dev_set, &tc)?;
    let model = learner.model().ok_or(Error::Core(boundloop_core::Error::Empty("trained model")))?;
    io::write_model(&dir.path("model.mlp1"), model)?;
    dir.write("curve.tsv", format_curve(&fit.curve).as_bytes())?;
    Ok(format!(
        "train items={} dev={} best_step={} best_dev_loss={:.6}\n",
        train_set.len(),
        dev_set.len(),
        fit.best_step,
        fit.best_dev_loss
    ))
}

/// Wraps a loaded model so it can stand in for a trained learner.
struct Frozen(boundloop_core::predictor::Mlp);

impl Learner for Frozen {
    fn fit(&mut self, _: &[boundloop_core::predictor::TrainItem], _: &[boundloop_core::predictor::TrainItem], _: &TrainConfig) -> Result<boundloop_core::selftrain::FitSummary, boundloop_core::Error> {
        Err(boundloop_core::Error::Invalid("a loaded checkpoint cannot be retrained".into()))
    }

    fn predict(&self, f: &FeatureMatrix) -> Result<Vec<f64>, boundloop_core::Error> {
        self.0.predict(f)
    }
}

pub fn cmd_infer(cfg: &RunConfig, model: &Path) -> Result<String> {
    let dir = RunDir::create(cfg)?;
    let mlp = io::read_model(model)?;
    let pool = thread_pool(cfg.workers)?;
    let corpora = load_corpora(cfg, false, &pool)?;
    let tracks = pool.install(|| predict_all(&corpora, &Frozen(mlp)))?;
    let hop = boundloop_core::selftrain::shared_hop(&corpora)?;
    for ((corpus, utt), t) in &tracks {
        io::write_matrix(&dir.path(format!("probs/{corpus}/{utt}.fmx")), &FeatureMatrix::from_track(utt.clone(), hop, t))?;
    }
    Ok(format!("infer tracks={}\n", tracks.len()))
}

/// Reads `probs/CORPUS/UTT.fmx` tracks for every utterance, checking frame counts.
fn read_tracks(probs: &Path, corpora: &[boundloop_core::selftrain::Corpus]) -> Result<Tracks> {
    let mut out = Tracks::new();
    for c in corpora {
        for (id, u) in &c.utterances {
            let path = probs.join(&c.name).join(format!("{id}.fmx"));
            let m = io::read_matrix(&path)?;
            let t = m.to_track(Some(u.features.n_frames)).map_err(|e| Error::format(&path, e.to_string()))?;
            out.insert((c.name.clone(), id.clone()), t);
        }
    }
    Ok(out)
}

pub fn format_peaks(fit: &PeakFit) -> String {
    format!("min_height {}\nmin_distance {}\nscore {:.6}\n", fit.params.min_height, fit.params.min_distance, fit.score)
}

pub fn read_peaks(path: &Path) -> Result<PeakParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut fields = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) = line.split_once(' ').ok_or_else(|| Error::parse(path, i + 1, "expected `name value`"))?;
        fields.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::format(path, format!("missing `{k}`")));
    let (lh, h) = get("min_height")?;
    let (ld, d) = get("min_distance")?;
    let h: f64 = h.parse().map_err(|_| Error::parse(path, *lh, "min_height is not a number"))?;
    let d: usize = d.parse().map_err(|_| Error::parse(path, *ld, "min_distance is not an integer"))?;
    Ok(PeakParams::new(h, d)?)
}

pub fn cmd_fit_peaks(cfg: &RunConfig, probs: Option<&Path>) -> Result<String> {
    let seed = cfg.require_seed()?;
    let dir = RunDir::create(cfg)?;
    let pool = thread_pool(cfg.workers)?;
    let corpora = load_corpora(cfg, false, &pool)?;
    let probs = probs.map(Path::to_path_buf).unwrap_or_else(|| dir.path("probs"));
    let tracks = read_tracks(&probs, &corpora)?;
    let reference = pipeline::initial_segmentations(cfg, &corpora)?;
    let splits = make_dev_splits(&corpora, cfg.loop_cfg.dev_fraction, seed)?;
    let fit = fit_peaks_on_dev(&corpora, &splits, &reference, &tracks, &cfg.loop_cfg)?;
    dir.write("peaks.txt", format_peaks(&fit).as_bytes())?;
    Ok(format!("fit-peaks {}", format_peaks(&fit).replace('\n', " ").trim_end().to_string() + "\n"))
}

pub fn cmd_segment(cfg: &RunConfig, probs: Option<&Path>, peaks: Option<&Path>) -> Result<String> {
    let dir = RunDir::create(cfg)?;
    let pool = thread_pool(cfg.workers)?;
    let corpora = load_corpora(cfg, false, &pool)?;
    let probs = probs.map(Path::to_path_buf).unwrap_or_else(|| dir.path("probs"));
    let tracks = read_tracks(&probs, &corpora)?;
    let params = match peaks {
        Some(p) => read_peaks(p)?,
        None => cfg.segment_params,
    };
    let segs = segment_all(&corpora, &tracks, params)?;
    let mut out = String::new();
    for (name, seg) in &segs {
        io::write_segmentation(&dir.path(seg_file("segmentation", name)), seg)?;
        writeln!(out, "segment corpus={name} tokens={}", seg.token_count()).unwrap();
    }
    Ok(out)
}

// ---------------------------------------------------------------- selftrain

fn metrics_report(metrics: &[eval::CorpusMetrics]) -> Result<Option<EvalReport>> {
    if metrics.is_empty() {
        return Ok(None);
    }
    Ok(Some(make_report(metrics.iter().map(MetricRecord::from).collect(), None)?))
}

fn format_iteration(r: &IterationReport) -> Result<(String, Option<String>)> {
    let mut out = String::new();
    writeln!(out, "iteration {}", r.iteration).unwrap();
    writeln!(out, "seed {}", r.seed).unwrap();
    writeln!(out, "best_step {}", r.fit.best_step).unwrap();
    writeln!(out, "best_dev_loss {:.6}", r.fit.best_dev_loss).unwrap();
    writeln!(out, "peaks min_height {} min_distance {} score {:.6}", r.peaks.params.min_height, r.peaks.params.min_distance, r.peaks.score).unwrap();
    writeln!(out, "self_agreement_boundary_f1 {:.6}", r.self_agreement).unwrap();
    if let Some(f) = r.dev_gold_token_f1() {
        writeln!(out, "dev_gold_token_f1 {:.6}", f).unwrap();
    }
    let kv = match metrics_report(&r.gold)? {
        Some(rep) => {
            out.push('\n');
            out.push_str(&rep.render_table());
            Some(rep.render_kv())
        }
        None => None,
    };
    Ok((out, kv))
}

pub fn cmd_selftrain(cfg: &RunConfig) -> Result<String> {
    cfg.require_seed()?;
    let dir = RunDir::create(cfg)?;
    let pool = thread_pool(cfg.workers)?;
    let corpora = load_corpora(cfg, cfg.augment_enabled, &pool)?;
    let init: CorpusSegs = pipeline::initial_segmentations(cfg, &corpora)?;
    for (name, seg) in &init {
        io::write_segmentation(&dir.path(seg_file("init", name)), seg)?;
    }
    let mut learner = MlpLearner::new(cfg.model_spec.clone(), cfg.augment_context());
    let mut io_error = None;
    let outcome = self_train_with(&corpora, &init, &cfg.loop_cfg, &mut learner, |segs, report, l| {
        let res = (|| -> Result<()> {
            let it = format!("iter_{:02}", report.iteration);
            for (name, seg) in segs {
                io::write_segmentation(&dir.path(format!("{it}/{}", seg_file("segmentation", name))), seg)?;
            }
            dir.write(format!("{it}/peaks.txt"), format_peaks(&report.peaks).as_bytes())?;
            dir.write(format!("{it}/curve.tsv"), format_curve(&report.fit.curve).as_bytes())?;
            if let Some(m) = l.model() {
                io::write_model(&dir.path(format!("{it}/model.mlp1")), m)?;
            }
            let (text, kv) = format_iteration(report)?;
            dir.write(format!("{it}/report.txt"), text.as_bytes())?;
            if let Some(kv) = kv {
                dir.write(format!("{it}/metrics.txt"), kv.as_bytes())?;
            }
            Ok(())
        })();
        res.map_err(|e| {
            let msg = e.to_string();
            io_error = Some(e);
            boundloop_core::Error::Invalid(msg)
        })
    });
    let outcome = match (outcome, io_error) {
        (_, Some(e)) => return Err(e),
        (o, None) => o?,
    };

    let mut summary = String::new();
    writeln!(summary, "iterations_run {}", outcome.reports.len()).unwrap();
    writeln!(summary, "chosen_iteration {}", outcome.chosen_iteration).unwrap();
    for (name, seg) in &outcome.segmentation {
        io::write_segmentation(&dir.path(format!("final/{}", seg_file("segmentation", name))), seg)?;
    }
    for c in &corpora {
        if outcome.segmentation.get(&c.name).is_none() {
            continue;
        }
        writeln!(summary, "final_tokens {} {}", c.name, outcome.segmentation[&c.name].token_count()).unwrap();
    }
    let finals: Vec<eval::CorpusMetrics> = corpora
        .iter()
        .filter_map(|c| {
            let seg = outcome.segmentation.get(&c.name)?;
            boundloop_core::selftrain::gold_metrics(c, seg, None, cfg.loop_cfg.tolerance_s).transpose()
        })
        .collect::<Result<_, _>>()?;
    if let Some(rep) = metrics_report(&finals)? {
        summary.push('\n');
        summary.push_str(&rep.render_table());
        dir.write("final/metrics.txt", rep.render_kv().as_bytes())?;
    }
    dir.write("summary.txt", summary.as_bytes())?;
    Ok(summary)
}

// ---------------------------------------------------------------- eval / report

pub struct EvalInputs<'a> {
    pub hyp: &'a Path,
    pub corpus: Option<&'a str>,
    pub vad: Option<&'a Path>,
    pub gold: Option<&'a Path>,
}

pub fn cmd_eval(cfg: &RunConfig, args: &EvalInputs) -> Result<String> {
    let (name, vad, gold) = match (args.vad, args.gold) {
        (Some(v), Some(g)) => (args.corpus.unwrap_or("corpus").to_string(), v.to_path_buf(), g.to_path_buf()),
        (None, None) => {
            let name = match args.corpus {
                Some(n) => n.to_string(),
                None if cfg.corpora.len() == 1 => cfg.corpora[0].name.clone(),
                None => return Err(Error::Config("several corpora configured; pass --corpus".into())),
            };
            let p = cfg.corpus(&name)?;
            let gold = p.alignment.clone().ok_or_else(|| Error::Config(format!("corpus `{name}` has no alignment")))?;
            (name, p.vad.clone(), gold)
        }
        _ => return Err(Error::Config("--vad and --gold go together".into())),
    };
    let dir = RunDir::create(cfg)?;
    let vads = io::read_vad_set(&vad)?;
    let gold = io::read_alignment(&gold)?;
    let (hyp, clamped) = io::read_segmentation(args.hyp, &vads)?;
    let m = eval::evaluate_corpus(&name, &hyp, &gold, &vads, cfg.loop_cfg.tolerance_s)?;
    let rep = make_report(vec![MetricRecord::from(&m)], None)?;
    dir.write(format!("eval/{name}.metrics.txt"), rep.render_kv().as_bytes())?;
    let mut table = rep.render_table();
    if clamped > 0 {
        writeln!(table, "clamped_boundaries {clamped}").unwrap();
    }
    dir.write(format!("eval/{name}.report.txt"), table.as_bytes())?;
    Ok(table)
}

/// Parses `corpus metric value` lines; `average` and `improvement` lines are skipped.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_corpus: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() || f[0].starts_with('#') || f[0] == "average" || f[0] == "improvement" {
            continue;
        }
        if f.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected `corpus metric value`"));
        }
        let v: f64 = f[2].parse().map_err(|_| Error::parse(path, i + 1, format!("`{}` is not a number", f[2])))?;
        if !by_corpus.contains_key(f[0]) {
            order.push(f[0].to_string());
        }
        if by_corpus.entry(f[0].to_string()).or_default().insert(f[1].to_string(), v).is_some() {
            return Err(Error::parse(path, i + 1, format!("{} {} given twice", f[0], f[1])));
        }
    }
    Ok(order.into_iter().map(|c| MetricRecord { values: by_corpus.remove(&c).unwrap(), corpus: c }).collect())
}

pub enum Baseline<'a> {
    None,
    Value(f64),
    Files(&'a [PathBuf]),
}

/// Merges per-corpus metric files into one averaged table. Output files are
/// written only when `out` is given.
pub fn cmd_report(files: &[PathBuf], baseline: Baseline, out: Option<&Path>) -> Result<String> {
    let mut records = Vec::new();
    for f in files {
        records.extend(read_metrics(f)?);
    }
    let base = match baseline {
        Baseline::None => None,
        Baseline::Value(v) => Some(v),
        Baseline::Files(fs) => {
            let mut recs = Vec::new();
            for f in fs {
                recs.extend(read_metrics(f)?);
            }
            let r = make_report(recs, None)?;
            Some(*r.average.get(metric::TOKEN_F1).ok_or_else(|| Error::Config("baseline files carry no token_f1".into()))?)
        }
    };
    let rep = make_report(records, base)?;
    let table = rep.render_table();
    if let Some(dir) = out {
        io::write_bytes(&dir.join("report.txt"), table.as_bytes())?;
        io::write_bytes(&dir.join("report_metrics.txt"), rep.render_kv().as_bytes())?;
    }
    Ok(table)
}
