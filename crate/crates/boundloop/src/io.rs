//! On-disk formats: PCM WAV, the text tables (VAD, segmentation, alignment),
//! the FMX1 matrix format and MLP1 checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use boundloop_core::predictor::{Dense, Mlp};
use boundloop_core::{AlignedWord, AudioClip, FeatureMatrix, GoldAlignment, Segmentation, VadSegment, VadSet};

use crate::error::{Error, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor over a byte buffer that reports truncation against `path`.
struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        Self { path, buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.path, format!("truncated {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

// ---------------------------------------------------------------- WAV

/// Reads a mono 16-bit PCM WAV file. `utt_id` defaults to the file stem.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = read_bytes(path)?;
    let utt_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_wav(path, &bytes, utt_id)
}

fn parse_wav(path: &Path, bytes: &[u8], utt_id: String) -> Result<AudioClip> {
    let mut r = Reader::new(path, bytes);
    if r.take(4, "RIFF header")? != b"RIFF" {
        return Err(Error::format(path, "not a RIFF file"));
    }
    r.u32("RIFF size")?;
    if r.take(4, "RIFF header")? != b"WAVE" {
        return Err(Error::format(path, "RIFF form is not WAVE"));
    }
    let mut sample_rate = None;
    loop {
        if r.remaining() == 0 {
            return Err(Error::format(path, "missing data chunk"));
        }
        let id: [u8; 4] = r.take(4, "chunk header")?.try_into().unwrap();
        let size = r.u32("chunk header")? as usize;
        match &id {
            b"fmt " => {
                let body = r.take(size, "fmt chunk")?;
                let mut f = Reader::new(path, body);
                let format = f.u16("fmt chunk")?;
                let channels = f.u16("fmt chunk")?;
                let rate = f.u32("fmt chunk")?;
                f.u32("fmt chunk")?;
                f.u16("fmt chunk")?;
                let bits = f.u16("fmt chunk")?;
                if format != 1 {
                    return Err(Error::format(path, format!("format={format} unsupported")));
                }
                if channels != 1 {
                    return Err(Error::format(path, format!("channels={channels} unsupported")));
                }
                if bits != 16 {
                    return Err(Error::format(path, format!("bits_per_sample={bits} unsupported")));
                }
                if rate == 0 {
                    return Err(Error::format(path, "sample_rate=0 unsupported"));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate.ok_or_else(|| Error::format(path, "data chunk before fmt chunk"))?;
                if size > r.remaining() {
                    return Err(Error::format(
                        path,
                        format!("truncated data chunk: header says {size} bytes, {} present", r.remaining()),
                    ));
                }
                if size % 2 != 0 {
                    return Err(Error::format(path, "data chunk has an odd byte count"));
                }
                let samples: Vec<f32> = r
                    .take(size, "data chunk")?
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
                    .collect();
                return Ok(AudioClip::new(utt_id, rate, samples)?);
            }
            _ => {
                r.take(size + size % 2, "chunk")?;
            }
        }
    }
}

pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    write_bytes(path, &encode_wav(clip))
}

// ---------------------------------------------------------------- text tables

/// Non-empty, non-comment lines with their 1-based numbers, split on whitespace.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn number(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(path, line, format!("{field} `{s}` is not a finite number"))),
    }
}

fn arity(path: &Path, line: usize, fields: &[&str], n: usize, layout: &str) -> Result<()> {
    if fields.len() != n {
        return Err(Error::parse(path, line, format!("expected `{layout}`, got {} fields", fields.len())));
    }
    Ok(())
}

/// Reads `utt_id start_s end_s` lines, sorted by recording then start time.
/// Reversed spans and overlaps within one recording are errors.
pub fn read_vad(path: &Path) -> Result<Vec<VadSegment>> {
    let text = read_text(path)?;
    let mut rows: Vec<(usize, VadSegment)> = Vec::new();
    for (line, f) in records(&text) {
        arity(path, line, &f, 3, "utt_id start_s end_s")?;
        let (a, b) = (number(path, line, "start", f[1])?, number(path, line, "end", f[2])?);
        let seg = VadSegment::new(f[0], a, b).map_err(|e| Error::parse(path, line, e.to_string()))?;
        rows.push((line, seg));
    }
    rows.sort_by(|(_, x), (_, y)| x.utt_id.cmp(&y.utt_id).then(x.start_s.total_cmp(&y.start_s)));
    for w in rows.windows(2) {
        let ((_, a), (line, b)) = (&w[0], &w[1]);
        if a.utt_id == b.utt_id && b.start_s < a.end_s {
            return Err(Error::parse(path, *line, format!("span of `{}` overlaps an earlier span", b.utt_id)));
        }
    }
    Ok(rows.into_iter().map(|(_, s)| s).collect())
}

/// A VAD file as the pipeline uses it: one span per utterance id.
pub fn read_vad_set(path: &Path) -> Result<VadSet> {
    let segs = read_vad(path)?;
    for w in segs.windows(2) {
        if w[0].utt_id == w[1].utt_id {
            return Err(Error::format(
                path,
                format!("`{}` has several VAD spans; give each span its own utterance id", w[0].utt_id),
            ));
        }
    }
    Ok(VadSet::from_segments(segs)?)
}

pub fn write_vad(path: &Path, vads: &VadSet) -> Result<()> {
    let mut out = String::new();
    for v in vads.iter() {
        writeln!(out, "{} {:.3} {:.3}", v.utt_id, v.start_s, v.end_s).unwrap();
    }
    write_bytes(path, out.as_bytes())
}

/// Reads `utt_id time_s` lines. VAD edges are added, out-of-span times are
/// clamped; the second value counts the clamped times.
pub fn read_segmentation(path: &Path, vads: &VadSet) -> Result<(Segmentation, usize)> {
    let text = read_text(path)?;
    let mut times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (line, f) in records(&text) {
        arity(path, line, &f, 2, "utt_id time_s")?;
        if vads.get(f[0]).is_none() {
            return Err(Error::parse(path, line, format!("unknown utterance `{}`", f[0])));
        }
        times.entry(f[0].to_string()).or_default().push(number(path, line, "time", f[1])?);
    }
    let mut seg = Segmentation::new();
    let mut clamped = 0;
    for (utt, ts) in times {
        clamped += seg.insert(vads.require(&utt)?, ts);
    }
    Ok((seg, clamped))
}

pub fn format_segmentation(seg: &Segmentation) -> String {
    let mut out = String::new();
    for (utt, times) in seg.iter() {
        for t in times {
            writeln!(out, "{utt} {t:.3}").unwrap();
        }
    }
    out
}

pub fn write_segmentation(path: &Path, seg: &Segmentation) -> Result<()> {
    write_bytes(path, format_segmentation(seg).as_bytes())
}

/// Reads `utt_id word start_s end_s` lines.
pub fn read_alignment(path: &Path) -> Result<GoldAlignment> {
    let text = read_text(path)?;
    let mut per_utt: BTreeMap<String, Vec<(usize, AlignedWord)>> = BTreeMap::new();
    for (line, f) in records(&text) {
        arity(path, line, &f, 4, "utt_id word start_s end_s")?;
        let (a, b) = (number(path, line, "start", f[2])?, number(path, line, "end", f[3])?);
        let w = AlignedWord::new(f[1], a, b);
        if !(w.start_s >= 0.0 && w.start_s < w.end_s) {
            return Err(Error::parse(path, line, format!("word span [{a}, {b}] is empty or reversed")));
        }
        per_utt.entry(f[0].to_string()).or_default().push((line, w));
    }
    let mut gold = GoldAlignment::new();
    for (utt, mut words) in per_utt {
        words.sort_by(|(_, a), (_, b)| a.start_s.total_cmp(&b.start_s));
        if let Some(w) = words.windows(2).find(|w| w[1].1.start_s < w[0].1.end_s) {
            return Err(Error::parse(path, w[1].0, format!("word overlaps the previous word of `{utt}`")));
        }
        gold.insert(utt, words.into_iter().map(|(_, w)| w).collect())?;
    }
    Ok(gold)
}

pub fn write_alignment(path: &Path, gold: &GoldAlignment) -> Result<()> {
    let mut out = String::new();
    for (utt, words) in gold.iter() {
        for w in words {
            writeln!(out, "{utt} {} {:.3} {:.3}", w.label, w.start_s, w.end_s).unwrap();
        }
    }
    write_bytes(path, out.as_bytes())
}

// ---------------------------------------------------------------- FMX1 matrices

const MATRIX_MAGIC: &[u8; 4] = b"FMX1";

pub fn encode_matrix(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * m.data.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    out.extend_from_slice(&(m.hop_s as f32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a matrix. The stored f32 hop is snapped to whole microseconds so
/// that 0.02 reads back as the same f64 it was written from.
pub fn decode_matrix(path: &Path, bytes: &[u8], utt_id: &str) -> Result<FeatureMatrix> {
    let mut r = Reader::new(path, bytes);
    if r.take(4, "header")? != MATRIX_MAGIC {
        return Err(Error::format(path, "bad magic, expected FMX1"));
    }
    let n = r.u32("header")? as usize;
    let dim = r.u32("header")? as usize;
    let hop = r.f32("header")?;
    let expected = n.checked_mul(dim).and_then(|c| c.checked_mul(4));
    if expected != Some(r.remaining()) {
        return Err(Error::format(
            path,
            format!("header says {n}x{dim} values, payload has {} bytes", r.remaining()),
        ));
    }
    let data = r.take(r.remaining(), "payload")?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let hop_s = (hop as f64 * 1e6).round() / 1e6;
    FeatureMatrix::new(utt_id, n, dim, hop_s, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    write_bytes(path, &encode_matrix(m))
}

/// Reads a matrix; its utterance id is the file stem.
pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = read_bytes(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_matrix(path, &bytes, &stem)
}

// ---------------------------------------------------------------- MLP1 checkpoints

const MODEL_MAGIC: &[u8; 4] = b"MLP1";

/// `MLP1`, u32 layer count, u32 context radius, then per layer u32 in, u32
/// out, f64 weights (row-major, out × in) and f64 biases; all little-endian.
pub fn encode_model(m: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(m.layers.len() as u32).to_le_bytes());
    out.extend_from_slice(&(m.context_radius as u32).to_le_bytes());
    for l in &m.layers {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(path: &Path, bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader::new(path, bytes);
    if r.take(4, "header")? != MODEL_MAGIC {
        return Err(Error::format(path, "bad magic, expected MLP1"));
    }
    let n_layers = r.u32("header")? as usize;
    let context_radius = r.u32("header")? as usize;
    if n_layers == 0 {
        return Err(Error::format(path, "checkpoint has no layers"));
    }
    let mut layers: Vec<Dense> = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let in_dim = r.u32("layer header")? as usize;
        let out_dim = r.u32("layer header")? as usize;
        if let Some(prev) = layers.last().filter(|p| p.out_dim != in_dim) {
            return Err(Error::format(path, format!("layer {k} expects {in_dim} inputs, layer {} gives {}", k - 1, prev.out_dim)));
        }
        let mut read = |n: usize| (0..n).map(|_| r.f64("layer parameters")).collect::<Result<Vec<f64>>>();
        let weights = read(in_dim * out_dim)?;
        let bias = read(out_dim)?;
        layers.push(Dense { in_dim, out_dim, weights, bias });
    }
    if r.remaining() != 0 {
        return Err(Error::format(path, format!("{} trailing bytes after the last layer", r.remaining())));
    }
    let window = 2 * context_radius + 1;
    if layers[0].in_dim % window != 0 || layers[n_layers - 1].out_dim != 1 {
        return Err(Error::format(path, "layer sizes do not match a windowed single-output model"));
    }
    Ok(Mlp { context_radius, feature_dim: layers[0].in_dim / window, layers })
}

pub fn write_model(path: &Path, m: &Mlp) -> Result<()> {
    write_bytes(path, &encode_model(m))
}

pub fn read_model(path: &Path) -> Result<Mlp> {
    decode_model(path, &read_bytes(path)?)
}
