//! Segmentation metrics: token-F1, boundary-F1, token rates, and report tables.
//!
//! Matching is one-to-one and greedy in time order: each hypothesis item, in
//! order, takes the earliest still-unmatched reference item within tolerance.
//! Both sides are strictly increasing sequences, so every hypothesis item is
//! compatible with a contiguous run of reference items whose ends move
//! monotonically; for such graphs the greedy rule yields a maximum matching.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::segmentation::{GoldAlignment, Segmentation, VadSet};

pub const DEFAULT_TOLERANCE_S: f64 = 0.03;
/// Slack added to the tolerance so that differences of exactly `tol` on the
/// millisecond grid still match despite floating-point rounding.
const TIME_EPS: f64 = 1e-9;

/// Raw matching counts; pooled across utterances before computing ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub matched: usize,
    pub n_hyp: usize,
    pub n_gold: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.matched += other.matched;
        self.n_hyp += other.n_hyp;
        self.n_gold += other.n_gold;
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(self.matched, self.n_hyp, self.n_gold)
    }
}

/// Precision, recall and F1, each in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(matched: usize, n_hyp: usize, n_gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, n_hyp);
        let recall = ratio(matched, n_gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Greedy one-to-one matching of sorted boundary times.
pub fn match_boundaries(hyp: &[f64], gold: &[f64], tol: f64) -> usize {
    let tol = tol + TIME_EPS;
    greedy_match(hyp, gold, |h| *h, |h, g| libm::fabs(h - g) <= tol, tol)
}

/// Greedy one-to-one matching of sorted tokens; a pair matches when both
/// edges are within tolerance.
pub fn match_tokens(hyp: &[(f64, f64)], gold: &[(f64, f64)], tol: f64) -> usize {
    let tol = tol + TIME_EPS;
    greedy_match(
        hyp,
        gold,
        |t| t.0,
        |h, g| libm::fabs(h.0 - g.0) <= tol && libm::fabs(h.1 - g.1) <= tol,
        tol,
    )
}

fn greedy_match<T>(
    hyp: &[T],
    gold: &[T],
    key: impl Fn(&T) -> f64,
    compatible: impl Fn(&T, &T) -> bool,
    tol: f64,
) -> usize {
    let mut used = vec![false; gold.len()];
    let mut lo = 0;
    let mut matched = 0;
    for h in hyp {
        let k = key(h);
        while lo < gold.len() && key(&gold[lo]) < k - tol {
            lo += 1;
        }
        let mut j = lo;
        while j < gold.len() && key(&gold[j]) <= k + tol {
            if !used[j] && compatible(h, &gold[j]) {
                used[j] = true;
                matched += 1;
                break;
            }
            j += 1;
        }
    }
    matched
}

fn check_same_utts<'a>(
    a: impl Iterator<Item = &'a str>,
    b: impl Iterator<Item = &'a str>,
) -> Result<()> {
    let a: BTreeSet<&str> = a.collect();
    let b: BTreeSet<&str> = b.collect();
    if let Some(x) = a.symmetric_difference(&b).next() {
        return Err(Error::UtteranceMismatch((*x).to_string()));
    }
    Ok(())
}

fn gold_tokens(gold: &GoldAlignment, utt: &str) -> Vec<(f64, f64)> {
    gold.get(utt)
        .map(|ws| ws.iter().map(|w| (w.start_s, w.end_s)).collect())
        .unwrap_or_default()
}

pub fn token_counts(hyp: &Segmentation, gold: &GoldAlignment, tol: f64) -> Result<MatchCounts> {
    check_same_utts(hyp.utt_ids(), gold.utt_ids())?;
    let mut total = MatchCounts::default();
    for (utt, _) in hyp.iter() {
        let h = hyp.tokens(utt).unwrap_or_default();
        let g = gold_tokens(gold, utt);
        total.add(MatchCounts { matched: match_tokens(&h, &g, tol), n_hyp: h.len(), n_gold: g.len() });
    }
    Ok(total)
}

pub fn token_f1(hyp: &Segmentation, gold: &GoldAlignment, tol: f64) -> Result<Prf> {
    token_counts(hyp, gold, tol).map(|c| c.prf())
}

/// Token-F1 against a reference segmentation instead of an alignment.
pub fn token_f1_segmentation(hyp: &Segmentation, reference: &Segmentation, tol: f64) -> Result<Prf> {
    check_same_utts(hyp.utt_ids(), reference.utt_ids())?;
    let mut total = MatchCounts::default();
    for (utt, _) in hyp.iter() {
        let h = hyp.tokens(utt).unwrap_or_default();
        let g = reference.tokens(utt).unwrap_or_default();
        total.add(MatchCounts { matched: match_tokens(&h, &g, tol), n_hyp: h.len(), n_gold: g.len() });
    }
    Ok(total.prf())
}

pub fn boundary_counts(hyp: &Segmentation, gold: &Segmentation, tol: f64) -> Result<MatchCounts> {
    check_same_utts(hyp.utt_ids(), gold.utt_ids())?;
    let mut total = MatchCounts::default();
    for (utt, h) in hyp.iter() {
        let g = gold.get(utt).unwrap_or_default();
        total.add(MatchCounts { matched: match_boundaries(h, g, tol), n_hyp: h.len(), n_gold: g.len() });
    }
    Ok(total)
}

/// Boundary-F1 with VAD edges counted as boundaries on both sides.
pub fn boundary_f1(hyp: &Segmentation, gold: &Segmentation, tol: f64) -> Result<Prf> {
    boundary_counts(hyp, gold, tol).map(|c| c.prf())
}

/// Token count divided by the total VAD duration of the segmented utterances.
pub fn tokens_per_second(seg: &Segmentation, vads: &VadSet) -> Result<f64> {
    let mut seconds = 0.0;
    for utt in seg.utt_ids() {
        seconds += vads.require(utt)?.duration_s();
    }
    if seconds <= 0.0 {
        return Err(Error::Invalid("total VAD duration is zero".into()));
    }
    Ok(seg.token_count() as f64 / seconds)
}

/// Transcribes each token as the gold words it covers for at least half of
/// their duration (`∅` when none).
pub fn transcribe_tokens(seg: &Segmentation, gold: &GoldAlignment) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(seg.token_count());
    for (utt, _) in seg.iter() {
        let words = gold.get(utt).ok_or_else(|| Error::UnknownUtterance(utt.into()))?;
        for (a, b) in seg.tokens(utt).unwrap_or_default() {
            let labels: Vec<&str> = words
                .iter()
                .filter(|w| {
                    let overlap = (b.min(w.end_s) - a.max(w.start_s)).max(0.0);
                    overlap >= 0.5 * w.duration_s() - 1e-9
                })
                .map(|w| w.label.as_str())
                .collect();
            out.push(if labels.is_empty() { "∅".to_string() } else { labels.join(" ") });
        }
    }
    Ok(out)
}

pub fn tokens_per_type(seg: &Segmentation, gold: &GoldAlignment) -> Result<f64> {
    let tx = transcribe_tokens(seg, gold)?;
    Ok(ratio_of_types(&tx))
}

pub fn ratio_of_types<S: AsRef<str>>(transcriptions: &[S]) -> f64 {
    let types: BTreeSet<&str> = transcriptions.iter().map(AsRef::as_ref).collect();
    if types.is_empty() {
        0.0
    } else {
        transcriptions.len() as f64 / types.len() as f64
    }
}

/// All metrics of one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMetrics {
    pub corpus: String,
    pub token: Prf,
    pub boundary: Prf,
    pub tokens_per_second: f64,
    pub tokens_per_type: f64,
}

pub fn evaluate_corpus(
    corpus: &str,
    hyp: &Segmentation,
    gold: &GoldAlignment,
    vads: &VadSet,
    tol: f64,
) -> Result<CorpusMetrics> {
    let gold_seg = gold.to_segmentation(vads)?;
    Ok(CorpusMetrics {
        corpus: corpus.into(),
        token: token_f1(hyp, gold, tol)?,
        boundary: boundary_f1(hyp, &gold_seg, tol)?,
        tokens_per_second: tokens_per_second(hyp, vads)?,
        tokens_per_type: tokens_per_type(hyp, gold)?,
    })
}

pub mod metric {
    pub const TOKEN_P: &str = "token_precision";
    pub const TOKEN_R: &str = "token_recall";
    pub const TOKEN_F1: &str = "token_f1";
    pub const BOUNDARY_P: &str = "boundary_precision";
    pub const BOUNDARY_R: &str = "boundary_recall";
    pub const BOUNDARY_F1: &str = "boundary_f1";
    pub const TOKENS_PER_SECOND: &str = "tokens_per_second";
    pub const TOKENS_PER_TYPE: &str = "tokens_per_type";

    /// Display order in tables.
    pub const ORDER: [&str; 8] =
        [TOKEN_P, TOKEN_R, TOKEN_F1, BOUNDARY_P, BOUNDARY_R, BOUNDARY_F1, TOKENS_PER_SECOND, TOKENS_PER_TYPE];

    pub fn is_percent(name: &str) -> bool {
        name.ends_with("precision") || name.ends_with("recall") || name.ends_with("f1")
    }
}

/// Metrics of one corpus in reported units (P/R/F1 × 100).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub corpus: String,
    pub values: BTreeMap<String, f64>,
}

impl From<&CorpusMetrics> for MetricRecord {
    fn from(m: &CorpusMetrics) -> Self {
        let mut values = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            values.insert(k.to_string(), v);
        };
        put(metric::TOKEN_P, 100.0 * m.token.precision);
        put(metric::TOKEN_R, 100.0 * m.token.recall);
        put(metric::TOKEN_F1, 100.0 * m.token.f1);
        put(metric::BOUNDARY_P, 100.0 * m.boundary.precision);
        put(metric::BOUNDARY_R, 100.0 * m.boundary.recall);
        put(metric::BOUNDARY_F1, 100.0 * m.boundary.f1);
        put(metric::TOKENS_PER_SECOND, m.tokens_per_second);
        put(metric::TOKENS_PER_TYPE, m.tokens_per_type);
        MetricRecord { corpus: m.corpus.clone(), values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
    /// Unweighted mean over the corpora carrying each metric.
    pub average: BTreeMap<String, f64>,
    pub baseline_token_f1: Option<f64>,
    pub improvement_pct: Option<f64>,
}

/// Rounds to the one-decimal precision tables are reported at.
pub fn round1(x: f64) -> f64 {
    libm::round(x * 10.0) / 10.0
}

/// Relative change in percent, computed on the values as reported (one decimal).
pub fn improvement_pct(new: f64, old: f64) -> Option<f64> {
    let (new, old) = (round1(new), round1(old));
    (old != 0.0).then(|| 100.0 * (new - old) / old)
}

pub fn make_report(records: Vec<MetricRecord>, baseline_token_f1: Option<f64>) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Empty("report needs at least one corpus"));
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &records {
        for (k, v) in &r.values {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let average: BTreeMap<String, f64> =
        sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let improvement_pct = match (baseline_token_f1, average.get(metric::TOKEN_F1)) {
        (Some(old), Some(&new)) => improvement_pct(new, old),
        _ => None,
    };
    Ok(EvalReport { records, average, baseline_token_f1, improvement_pct })
}

fn fmt_value(name: &str, v: f64) -> String {
    if metric::is_percent(name) {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

impl EvalReport {
    fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = metric::ORDER
            .iter()
            .filter(|m| self.average.contains_key(**m))
            .map(|m| m.to_string())
            .collect();
        for k in self.average.keys() {
            if !cols.contains(k) {
                cols.push(k.clone());
            }
        }
        cols
    }

    /// Aligned plain-text table with an `average` row and, when a baseline is
    /// known, an improvement line.
    pub fn render_table(&self) -> String {
        let cols = self.columns();
        let name_w = self.records.iter().map(|r| r.corpus.len()).chain([7]).max().unwrap_or(7);
        let widths: Vec<usize> = cols.iter().map(|c| c.len().max(6)).collect();
        let mut out = String::new();
        let row = |out: &mut String, name: &str, cells: Vec<String>| {
            out.push_str(&format!("{name:<name_w$}"));
            for (c, w) in cells.iter().zip(&widths) {
                out.push_str(&format!("  {c:>w$}"));
            }
            out.push('\n');
        };
        row(&mut out, "corpus", cols.clone());
        for r in &self.records {
            let cells = cols
                .iter()
                .map(|c| r.values.get(c).map(|v| fmt_value(c, *v)).unwrap_or_else(|| "-".into()))
                .collect();
            row(&mut out, &r.corpus, cells);
        }
        let cells = cols.iter().map(|c| fmt_value(c, self.average[c])).collect();
        row(&mut out, "average", cells);
        if let (Some(base), Some(imp)) = (self.baseline_token_f1, self.improvement_pct) {
            out.push_str(&format!("improvement token_f1 vs baseline {base:.1}: {imp:.1}%\n"));
        }
        out
    }

    /// Machine-readable `corpus metric value` lines.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            for (k, v) in &r.values {
                out.push_str(&format!("{} {k} {}\n", r.corpus, fmt_value(k, *v)));
            }
        }
        for (k, v) in &self.average {
            out.push_str(&format!("average {k} {}\n", fmt_value(k, *v)));
        }
        if let Some(imp) = self.improvement_pct {
            out.push_str(&format!("improvement token_f1_pct {imp:.1}\n"));
        }
        out
    }
}
