//! Line-oriented `section.key = value` configuration.
//!
//! Every key has a default (or is explicitly optional), unknown keys are
//! errors, and the fully resolved key set is what a manifest stores, so a
//! manifest can be fed back as `--config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use boundloop_core::features::{AugmentRanges, FeatureConfig};
use boundloop_core::peaks::{FitObjective, PeakGrid, PeakParams};
use boundloop_core::predictor::{AdamConfig, AugmentContext, ModelSpec, TrainConfig};
use boundloop_core::selftrain::{LoopConfig, Role, StoppingMode};
use boundloop_core::synth::SynthSpec;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Known keys and their defaults. An empty default means "unset".
pub const KEYS: &[(&str, &str)] = &[
    ("run.seed", ""),
    ("run.out", "run"),
    ("run.workers", "0"),
    ("features.sample_rate", "16000"),
    ("features.win_ms", "25"),
    ("features.hop_ms", "20"),
    ("features.n_mels", "40"),
    ("augment.enabled", "true"),
    ("augment.probability", "1"),
    ("augment.room_scale_min", "0"),
    ("augment.room_scale_max", "100"),
    ("augment.pitch_cents_min", "-300"),
    ("augment.pitch_cents_max", "300"),
    ("augment.stretch_min", "0.8"),
    ("augment.stretch_max", "1"),
    ("augment.timedrop_fraction", "0.05"),
    ("model.context_radius", "7"),
    ("model.hidden", "256,128"),
    ("train.batch_utterances", "12"),
    ("train.max_utterance_s", "20"),
    ("train.max_updates", "2000"),
    ("train.peak_lr", "0.0001"),
    ("train.warmup_updates", "200"),
    ("train.cosine_period", "1000"),
    ("train.dropout", "0.1"),
    ("train.mask_fraction", "0.15"),
    ("train.mask_span", "5"),
    ("train.keep_fraction", "0.5"),
    ("train.adam_beta1", "0.9"),
    ("train.adam_beta2", "0.999"),
    ("train.adam_eps", "0.00000001"),
    ("train.eval_every", "50"),
    ("loop.max_iterations", "3"),
    ("loop.dilation", "1"),
    ("loop.stopping", "fixed"),
    ("loop.agreement_threshold", "0.95"),
    ("loop.dev_fraction", "0.1"),
    ("peaks.heights", "0.05:0.95:0.05"),
    ("peaks.distances", "1:10"),
    ("peaks.objective", "boundary_f1"),
    ("peaks.min_height", "0.5"),
    ("peaks.min_distance", "1"),
    ("eval.tolerance_s", "0.03"),
    ("init.kind", "vad"),
    ("init.stats_from", "config"),
    ("init.mean_s", ""),
    ("init.std_s", ""),
    ("synth.n_utterances", "200"),
    ("synth.lexicon_size", "20"),
    ("synth.word_mean_s", "0.3"),
    ("synth.word_std_s", "0.1"),
    ("synth.words_min", "3"),
    ("synth.words_max", "8"),
    ("synth.sample_rate", "16000"),
    ("synth.noise_level", "0.01"),
    ("synth.lexicon_seed", ""),
    ("synth.id_prefix", "utt"),
    ("synth.corrupt_jitter_s", "0.04"),
    ("synth.corrupt_p_delete", "0.2"),
    ("synth.corrupt_p_insert", "0.2"),
];

const CORPUS_FIELDS: &[&str] = &["audio_dir", "vad", "alignment", "init_seg", "role"];
const PATH_KEYS: &[&str] = &["run.out"];

fn is_path_key(key: &str) -> bool {
    PATH_KEYS.contains(&key) || corpus_key(key).is_some_and(|(_, f)| f != "role")
}

/// Splits `corpus.NAME.FIELD`.
fn corpus_key(key: &str) -> Option<(&str, &str)> {
    let rest = key.strip_prefix("corpus.")?;
    let (name, field) = rest.rsplit_once('.')?;
    (!name.is_empty() && CORPUS_FIELDS.contains(&field)).then_some((name, field))
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) || corpus_key(key).is_some() {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key `{key}`")))
    }
}

/// Parses config text. Relative paths are resolved against `base`.
pub fn parse_text(text: &str, origin: &Path, base: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `section.key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        let v = if is_path_key(k) && !v.is_empty() { absolute(base, v) } else { v.to_string() };
        if out.insert(k.to_string(), v).is_some() {
            return Err(Error::parse(origin, i + 1, format!("key `{k}` set twice")));
        }
    }
    Ok(out)
}

fn absolute(base: &Path, v: &str) -> String {
    let p = Path::new(v);
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined).to_string_lossy().into_owned()
}

/// Key/value layers merged in order: defaults, config file, overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigBuilder {
    values: BTreeMap<String, String>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn load_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.values.extend(parse_text(&text, path, base)?);
        Ok(self)
    }

    pub fn load_text(mut self, text: &str, base: &Path) -> Result<Self> {
        self.values.extend(parse_text(text, Path::new("<text>"), base)?);
        Ok(self)
    }

    /// Command-line override; relative paths resolve against the working directory.
    pub fn set(mut self, key: &str, value: &str) -> Result<Self> {
        check_key(key)?;
        let v = if is_path_key(key) && !value.is_empty() { absolute(Path::new("."), value) } else { value.to_string() };
        self.values.insert(key.to_string(), v);
        Ok(self)
    }

    /// Path defaults that are still relative resolve against the working
    /// directory, so a manifest always records absolute paths.
    pub fn build(mut self) -> Result<RunConfig> {
        for (k, v) in self.values.iter_mut() {
            if is_path_key(k) && !v.is_empty() && Path::new(v.as_str()).is_relative() {
                *v = absolute(Path::new("."), v);
            }
        }
        RunConfig::from_values(self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPaths {
    pub name: String,
    pub audio_dir: PathBuf,
    pub vad: PathBuf,
    pub alignment: Option<PathBuf>,
    pub init_seg: Option<PathBuf>,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKindName {
    Vad,
    Random,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsFrom {
    Config,
    Gold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub kind: InitKindName,
    pub stats_from: StatsFrom,
    pub stats: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptConfig {
    pub jitter_s: f64,
    pub p_delete: f64,
    pub p_insert: f64,
}

/// Everything a command needs, resolved and typed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub workers: usize,
    pub corpora: Vec<CorpusPaths>,
    pub features: FeatureConfig,
    pub augment_enabled: bool,
    pub augment: AugmentRanges,
    pub model_spec: ModelSpec,
    pub loop_cfg: LoopConfig,
    pub segment_params: PeakParams,
    pub init: InitConfig,
    pub synth: SynthSpec,
    pub corrupt: CorruptConfig,
}

struct Values<'a>(&'a BTreeMap<String, String>);

impl Values<'_> {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`"))))
            .collect()
    }

    /// `a:b:step` inclusive float range or a comma list.
    fn float_grid(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.raw(key);
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() == 1 {
            return self.list(key);
        }
        let bad = || Error::Config(format!("`{key}`: expected `start:stop:step`, got `{v}`"));
        let [a, b, s] = parts[..] else { return Err(bad()) };
        let (a, b, s): (f64, f64, f64) =
            (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?);
        if !(s > 0.0 && a <= b) {
            return Err(bad());
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        // Snap to 1e-9 so that 0.05 * 6 prints as 0.3.
        Ok((0..=n).map(|k| ((a + k as f64 * s) * 1e9).round() / 1e9).collect())
    }

    /// `a:b` inclusive integer range or a comma list.
    fn int_grid(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.raw(key);
        match v.split_once(':') {
            None => self.list(key),
            Some((a, b)) => {
                let bad = || Error::Config(format!("`{key}`: expected `start:stop`, got `{v}`"));
                let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                Ok((a..=b).collect())
            }
        }
    }
}

impl RunConfig {
    fn from_values(values: BTreeMap<String, String>) -> Result<Self> {
        let v = Values(&values);
        let seed: Option<u64> = v.opt("run.seed")?;

        let mut corpora: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
        for (k, val) in &values {
            if let Some((name, field)) = corpus_key(k) {
                corpora.entry(name).or_default().insert(field, val.as_str());
            }
        }
        let corpora = corpora
            .into_iter()
            .map(|(name, f)| {
                let need = |field: &str| {
                    f.get(field)
                        .filter(|s| !s.is_empty())
                        .map(PathBuf::from)
                        .ok_or_else(|| Error::Config(format!("corpus `{name}` needs `corpus.{name}.{field}`")))
                };
                let opt = |field: &str| f.get(field).filter(|s| !s.is_empty()).map(PathBuf::from);
                let role = match f.get("role").copied().unwrap_or("train") {
                    "train" => Role::Train,
                    "heldout" => Role::Heldout,
                    r => return Err(Error::Config(format!("corpus `{name}`: role `{r}` is not train or heldout"))),
                };
                Ok(CorpusPaths {
                    name: name.to_string(),
                    audio_dir: need("audio_dir")?,
                    vad: need("vad")?,
                    alignment: opt("alignment"),
                    init_seg: opt("init_seg"),
                    role,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let features = FeatureConfig {
            sample_rate: v.parse("features.sample_rate")?,
            win_ms: v.parse("features.win_ms")?,
            hop_ms: v.parse("features.hop_ms")?,
            n_mels: v.parse("features.n_mels")?,
        };
        features.validate()?;
        let augment = AugmentRanges {
            room_scale: (v.parse("augment.room_scale_min")?, v.parse("augment.room_scale_max")?),
            pitch_cents: (v.parse("augment.pitch_cents_min")?, v.parse("augment.pitch_cents_max")?),
            stretch_rate: (v.parse("augment.stretch_min")?, v.parse("augment.stretch_max")?),
            timedrop_fraction: v.parse("augment.timedrop_fraction")?,
        };
        augment.validate()?;
        let augment_enabled = v.bool("augment.enabled")?;
        let model_spec = ModelSpec {
            context_radius: v.parse("model.context_radius")?,
            feature_dim: features.n_mels,
            hidden: v.list("model.hidden")?,
        };
        model_spec.validate()?;

        let train = TrainConfig {
            batch_utterances: v.parse("train.batch_utterances")?,
            max_utterance_s: v.parse("train.max_utterance_s")?,
            max_updates: v.parse("train.max_updates")?,
            peak_lr: v.parse("train.peak_lr")?,
            warmup_updates: v.parse("train.warmup_updates")?,
            cosine_period: v.parse("train.cosine_period")?,
            dropout: v.parse("train.dropout")?,
            mask_fraction: v.parse("train.mask_fraction")?,
            mask_span: v.parse("train.mask_span")?,
            keep_fraction: v.parse("train.keep_fraction")?,
            adam: AdamConfig {
                beta1: v.parse("train.adam_beta1")?,
                beta2: v.parse("train.adam_beta2")?,
                eps: v.parse("train.adam_eps")?,
            },
            eval_every: v.parse("train.eval_every")?,
            augment: augment_enabled,
            augment_probability: v.parse("augment.probability")?,
            seed: seed.unwrap_or(0),
        };
        let stopping = match v.raw("loop.stopping") {
            "fixed" => StoppingMode::Fixed,
            "dev_gold" => StoppingMode::DevGold,
            "self_agreement" => StoppingMode::SelfAgreement,
            s => return Err(Error::Config(format!("`loop.stopping`: unknown mode `{s}`"))),
        };
        let objective = match v.raw("peaks.objective") {
            "boundary_f1" => FitObjective::BoundaryF1,
            "token_f1" => FitObjective::TokenF1,
            s => return Err(Error::Config(format!("`peaks.objective`: unknown objective `{s}`"))),
        };
        let loop_cfg = LoopConfig {
            max_iterations: v.parse("loop.max_iterations")?,
            dilation: v.parse("loop.dilation")?,
            train,
            peak_grid: PeakGrid { heights: v.float_grid("peaks.heights")?, distances: v.int_grid("peaks.distances")? },
            objective,
            stopping,
            agreement_threshold: v.parse("loop.agreement_threshold")?,
            dev_fraction: v.parse("loop.dev_fraction")?,
            tolerance_s: v.parse("eval.tolerance_s")?,
            seed: seed.unwrap_or(0),
        };
        loop_cfg.validate()?;
        let segment_params = PeakParams::new(v.parse("peaks.min_height")?, v.parse("peaks.min_distance")?)?;

        let init = InitConfig {
            kind: match v.raw("init.kind") {
                "vad" => InitKindName::Vad,
                "random" => InitKindName::Random,
                "file" => InitKindName::File,
                s => return Err(Error::Config(format!("`init.kind`: unknown kind `{s}`"))),
            },
            stats_from: match v.raw("init.stats_from") {
                "config" => StatsFrom::Config,
                "gold" => StatsFrom::Gold,
                s => return Err(Error::Config(format!("`init.stats_from`: expected config or gold, got `{s}`"))),
            },
            stats: match (v.opt::<f64>("init.mean_s")?, v.opt::<f64>("init.std_s")?) {
                (Some(m), Some(s)) => Some((m, s)),
                (None, None) => None,
                _ => return Err(Error::Config("`init.mean_s` and `init.std_s` go together".into())),
            },
        };

        let synth = SynthSpec {
            n_utterances: v.parse("synth.n_utterances")?,
            lexicon_size: v.parse("synth.lexicon_size")?,
            word_duration_mean_s: v.parse("synth.word_mean_s")?,
            word_duration_std_s: v.parse("synth.word_std_s")?,
            words_per_utterance: (v.parse("synth.words_min")?, v.parse("synth.words_max")?),
            sample_rate: v.parse("synth.sample_rate")?,
            noise_level: v.parse("synth.noise_level")?,
            seed: seed.unwrap_or(0),
            lexicon_seed: v.opt("synth.lexicon_seed")?,
            id_prefix: v.raw("synth.id_prefix").to_string(),
        };
        synth.validate()?;
        let corrupt = CorruptConfig {
            jitter_s: v.parse("synth.corrupt_jitter_s")?,
            p_delete: v.parse("synth.corrupt_p_delete")?,
            p_insert: v.parse("synth.corrupt_p_insert")?,
        };

        Ok(RunConfig {
            seed,
            out: PathBuf::from(v.raw("run.out")),
            workers: v.parse("run.workers")?,
            corpora,
            features,
            augment_enabled,
            augment,
            model_spec,
            loop_cfg,
            segment_params,
            init,
            synth,
            corrupt,
            values,
        })
    }

    /// The seed, for commands whose output depends on it.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("`run.seed` is required (set it in the config or pass --seed)".into()))
    }

    pub fn augment_context(&self) -> Option<AugmentContext> {
        self.augment_enabled.then_some(AugmentContext {
            ranges: self.augment,
            features: self.features,
            dilation: self.loop_cfg.dilation,
        })
    }

    pub fn corpus(&self, name: &str) -> Result<&CorpusPaths> {
        self.corpora
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("no corpus named `{name}` in the config")))
    }

    /// The resolved keys, one `key = value` line each, in key order.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    /// Manifest text: hash and seed as comments, then the resolved keys.
    pub fn manifest(&self) -> String {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_else(|| "unset".into());
        format!("# boundloop manifest\n# config_sha256 = {}\n# seed = {seed}\n{}", self.sha256(), self.render())
    }
}
