//! Loading corpora from disk into the in-memory form the loop consumes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use boundloop_core::features::{extract_features, FeatureConfig};
use boundloop_core::selftrain::{make_initial_segmentation, Corpus, InitKind, Role, Utterance};
use boundloop_core::{AudioClip, GoldAlignment, Segmentation, VadSet};
use rayon::prelude::*;

use crate::config::{CorpusPaths, InitKindName, RunConfig, StatsFrom};
use crate::error::{Error, Result};
use crate::io;

pub const WORKERS_ENV: &str = "BOUNDLOOP_WORKERS";

/// Worker count: explicit setting, else the environment, else rayon's default (0).
pub fn resolve_workers(configured: usize) -> usize {
    if configured > 0 {
        return configured;
    }
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

pub fn wav_path(audio_dir: &Path, utt_id: &str) -> PathBuf {
    audio_dir.join(format!("{utt_id}.wav"))
}

/// The VAD slice of an utterance's recording.
pub fn load_slice(paths: &CorpusPaths, vads: &VadSet, utt_id: &str, sample_rate: u32) -> Result<AudioClip> {
    let path = wav_path(&paths.audio_dir, utt_id);
    let clip = io::read_wav(&path)?;
    if clip.sample_rate != sample_rate {
        return Err(Error::format(&path, format!("sample_rate={} but features expect {sample_rate}", clip.sample_rate)));
    }
    let v = vads.require(utt_id)?;
    if v.end_s > clip.duration_s() + 1e-3 {
        return Err(Error::format(&path, format!("VAD ends at {:.3} s, audio lasts {:.3} s", v.end_s, clip.duration_s())));
    }
    Ok(clip.slice_seconds(v.start_s, v.end_s.min(clip.duration_s()))?)
}

/// Reads audio, VADs and gold of one corpus and extracts features in parallel.
pub fn load_corpus(
    paths: &CorpusPaths,
    features: &FeatureConfig,
    keep_audio: bool,
    pool: &rayon::ThreadPool,
) -> Result<Corpus> {
    let vads = io::read_vad_set(&paths.vad)?;
    let ids: Vec<&str> = vads.iter().map(|v| v.utt_id.as_str()).collect();
    let utts: Vec<(String, Utterance)> = pool.install(|| {
        ids.par_iter()
            .map(|id| {
                let clip = load_slice(paths, &vads, id, features.sample_rate)?;
                let f = extract_features(&clip, features).map_err(|e| Error::format(&wav_path(&paths.audio_dir, id), e.to_string()))?;
                Ok((id.to_string(), Utterance { features: f, audio: keep_audio.then_some(clip) }))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let gold = paths.alignment.as_deref().map(io::read_alignment).transpose()?;
    Ok(Corpus::new(paths.name.clone(), paths.role, vads, utts.into_iter().collect(), gold)?)
}

pub fn load_corpora(cfg: &RunConfig, keep_audio: bool, pool: &rayon::ThreadPool) -> Result<Vec<Corpus>> {
    if cfg.corpora.is_empty() {
        return Err(Error::Config("no corpus configured (add corpus.NAME.audio_dir and corpus.NAME.vad)".into()));
    }
    cfg.corpora.iter().map(|p| load_corpus(p, &cfg.features, keep_audio, pool)).collect()
}

/// Reads the configured initial segmentation file of a corpus.
pub fn read_init_file(paths: &CorpusPaths, vads: &VadSet) -> Result<Segmentation> {
    let path = paths
        .init_seg
        .as_deref()
        .ok_or_else(|| Error::Config(format!("corpus `{}` has no init_seg file", paths.name)))?;
    let (seg, _clamped) = io::read_segmentation(path, vads)?;
    Ok(make_initial_segmentation(&InitKind::File(seg), vads)?)
}

/// Initial segmentation of one corpus per `init.*`. A configured
/// `init_seg` file always wins over `init.kind`.
pub fn initial_segmentation(cfg: &RunConfig, paths: &CorpusPaths, vads: &VadSet, gold: Option<&GoldAlignment>, index: usize) -> Result<Segmentation> {
    if paths.init_seg.is_some() {
        return read_init_file(paths, vads);
    }
    let kind = match cfg.init.kind {
        InitKindName::Vad => InitKind::Vad,
        InitKindName::File => return read_init_file(paths, vads),
        InitKindName::Random => {
            let stats = match cfg.init.stats_from {
                StatsFrom::Config => cfg.init.stats,
                StatsFrom::Gold => gold
                    .ok_or_else(|| Error::Config(format!("init.stats_from = gold but corpus `{}` has no alignment", paths.name)))?
                    .duration_stats(),
            };
            let seed = boundloop_core::rng::derive_seed(cfg.require_seed()?, boundloop_core::rng::tag::INIT_RANDOM, index as u64);
            InitKind::Random { stats, seed }
        }
    };
    Ok(make_initial_segmentation(&kind, vads)?)
}

/// Initial segmentations of every training corpus.
pub fn initial_segmentations(cfg: &RunConfig, corpora: &[Corpus]) -> Result<BTreeMap<String, Segmentation>> {
    let mut out = BTreeMap::new();
    for (i, c) in corpora.iter().enumerate() {
        if c.role == Role::Heldout {
            continue;
        }
        let paths = cfg.corpus(&c.name)?;
        out.insert(c.name.clone(), initial_segmentation(cfg, paths, &c.vads, c.gold.as_ref(), i)?);
    }
    Ok(out)
}
