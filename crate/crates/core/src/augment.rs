//! Phoneme-dependent in-ear simulation.
//!
//! Relative transfer functions from the outer to the in-ear microphone are
//! estimated per phoneme from paired recordings of one talker. Clean outer
//! speech of another talker is then turned into an in-ear signal by applying,
//! frame by frame, the RTF of the phoneme spoken in that frame.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::Array2;
use rand::Rng;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};
use crate::io::{read_jsonl, write_json};
use crate::stft::{Spectrogram, Stft, StftConfig, Waveform};

/// Label of frames not covered by any interval.
pub const SILENCE: &str = "sil";
/// Reserved table name under which the all-phoneme RTF is stored.
pub const FALLBACK: &str = "*";
pub const DEFAULT_MIN_FRAMES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeInterval {
    pub start: f64,
    pub end: f64,
    pub phoneme: String,
}

/// Checks ordering and range of every interval. `duration_secs` bounds the
/// end times when known.
pub fn validate_intervals(intervals: &[PhonemeInterval], duration_secs: Option<f64>) -> Result<()> {
    for (i, iv) in intervals.iter().enumerate() {
        if !(iv.start.is_finite() && iv.end.is_finite()) || iv.start < 0.0 || iv.start >= iv.end {
            return Err(OvrError::Config(format!(
                "interval {i} ({}, {}) must satisfy 0 <= start < end",
                iv.start, iv.end
            )));
        }
        if let Some(d) = duration_secs {
            // one sample of slack for rounding in annotation tools
            if iv.end > d + 1e-4 {
                return Err(OvrError::Config(format!(
                    "interval {i} ends at {} s, past the signal end {d} s",
                    iv.end
                )));
            }
        }
        if iv.phoneme.is_empty() || iv.phoneme == FALLBACK {
            return Err(OvrError::Config(format!("interval {i} has invalid label {:?}", iv.phoneme)));
        }
    }
    Ok(())
}

pub fn read_intervals(path: &Path) -> Result<Vec<PhonemeInterval>> {
    let intervals: Vec<PhonemeInterval> = read_jsonl(path)?;
    validate_intervals(&intervals, None)?;
    Ok(intervals)
}

/// One phoneme label per STFT frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeTrack {
    labels: Vec<String>,
}

impl PhonemeTrack {
    pub fn new(labels: Vec<String>) -> Self {
        PhonemeTrack { labels }
    }

    pub fn silent(num_frames: usize) -> Self {
        PhonemeTrack {
            labels: vec![SILENCE.to_string(); num_frames],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_all_silent(&self) -> bool {
        self.labels.iter().all(|l| l == SILENCE)
    }
}

/// Labels each frame by the interval containing its center time.
///
/// Intervals are half-open `[start, end)`. When several intervals contain a
/// center, the one starting latest wins; equal starts go to the later entry.
pub fn intervals_to_track(
    intervals: &[PhonemeInterval],
    num_frames: usize,
    config: &StftConfig,
) -> PhonemeTrack {
    let mut order: Vec<&PhonemeInterval> = intervals.iter().collect();
    order.sort_by(|a, b| a.start.total_cmp(&b.start));
    let labels = (0..num_frames)
        .map(|l| {
            let t = config.frame_center_secs(l);
            order
                .iter()
                .rev()
                .find(|iv| iv.start <= t && t < iv.end)
                .map_or(SILENCE, |iv| iv.phoneme.as_str())
                .to_string()
        })
        .collect();
    PhonemeTrack { labels }
}

/// Per-phoneme RTFs of one talker, plus the RTF over all labeled frames.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfTable {
    pub talker_id: String,
    entries: BTreeMap<String, Vec<Complex64>>,
    fallback: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct RtfTableFile {
    talker_id: String,
    num_bins: usize,
    phonemes: Vec<String>,
    /// base64 of little-endian f32 (re, im) pairs, `num_bins` per phoneme
    data: String,
}

impl RtfTable {
    pub fn new(
        talker_id: impl Into<String>,
        entries: BTreeMap<String, Vec<Complex64>>,
        fallback: Vec<Complex64>,
    ) -> Result<Self> {
        let k = fallback.len();
        if k == 0 {
            return Err(OvrError::Empty("RTF fallback has no bins".into()));
        }
        for (name, h) in entries.iter().map(|(n, h)| (n.as_str(), h)).chain([(FALLBACK, &fallback)]) {
            if h.len() != k {
                return Err(OvrError::Shape(format!("RTF {name:?} has {} bins, expected {k}", h.len())));
            }
            if !h.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(OvrError::NonFinite("RTF table"));
            }
        }
        if entries.contains_key(FALLBACK) {
            return Err(OvrError::Config(format!("{FALLBACK:?} is reserved for the fallback")));
        }
        Ok(RtfTable {
            talker_id: talker_id.into(),
            entries,
            fallback,
        })
    }

    /// The same RTF for every phoneme.
    pub fn constant(talker_id: impl Into<String>, h: Vec<Complex64>) -> Result<Self> {
        Self::new(talker_id, BTreeMap::new(), h)
    }

    pub fn num_bins(&self) -> usize {
        self.fallback.len()
    }

    pub fn fallback(&self) -> &[Complex64] {
        &self.fallback
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, phoneme: &str) -> bool {
        self.entries.contains_key(phoneme)
    }

    /// RTF for `phoneme`, or the fallback when the phoneme has no entry.
    pub fn lookup(&self, phoneme: &str) -> &[Complex64] {
        self.entries.get(phoneme).unwrap_or(&self.fallback)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut phonemes: Vec<String> = self.entries.keys().cloned().collect();
        phonemes.push(FALLBACK.to_string());
        let mut bytes = Vec::with_capacity(phonemes.len() * self.num_bins() * 8);
        for h in self.entries.values().chain([&self.fallback]) {
            for c in h {
                bytes.extend_from_slice(&(c.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(c.im as f32).to_le_bytes());
            }
        }
        let file = RtfTableFile {
            talker_id: self.talker_id.clone(),
            num_bins: self.num_bins(),
            phonemes,
            data: BASE64.encode(bytes),
        };
        write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: RtfTableFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        let bytes = BASE64
            .decode(file.data.as_bytes())
            .map_err(|e| OvrError::Format(format!("RTF data is not base64: {e}")))?;
        let k = file.num_bins;
        if bytes.len() != file.phonemes.len() * k * 8 {
            return Err(OvrError::Format(format!(
                "RTF data holds {} bytes, expected {}",
                bytes.len(),
                file.phonemes.len() * k * 8
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let mut entries = BTreeMap::new();
        let mut fallback = None;
        for (name, pairs) in file.phonemes.into_iter().zip(values.chunks_exact(2 * k.max(1))) {
            let h: Vec<Complex64> = pairs.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            if name == FALLBACK {
                fallback = Some(h);
            } else {
                entries.insert(name, h);
            }
        }
        let fallback = fallback.ok_or_else(|| OvrError::Format("RTF file lacks the fallback entry".into()))?;
        Self::new(file.talker_id, entries, fallback)
    }
}

/// Accumulates cross and auto spectra per phoneme over any number of
/// recordings of one talker.
#[derive(Debug, Clone)]
pub struct RtfAccumulator {
    num_bins: usize,
    stats: BTreeMap<String, PhonemeStats>,
    total: PhonemeStats,
}

#[derive(Debug, Clone)]
struct PhonemeStats {
    cross: Vec<Complex64>,
    auto: Vec<f64>,
    frames: usize,
}

impl PhonemeStats {
    fn new(k: usize) -> Self {
        PhonemeStats {
            cross: vec![Complex64::new(0.0, 0.0); k],
            auto: vec![0.0; k],
            frames: 0,
        }
    }

    fn add_frame(&mut self, outer: &Array2<Complex64>, inear: &Array2<Complex64>, l: usize) {
        for k in 0..self.auto.len() {
            let so = outer[[k, l]];
            self.cross[k] += inear[[k, l]] * so.conj();
            self.auto[k] += so.norm_sqr();
        }
        self.frames += 1;
    }
}

impl RtfAccumulator {
    pub fn new(num_bins: usize) -> Self {
        RtfAccumulator {
            num_bins,
            stats: BTreeMap::new(),
            total: PhonemeStats::new(num_bins),
        }
    }

    /// Adds all labeled frames of one noise-free recording. Silent frames are
    /// skipped.
    pub fn add(&mut self, outer: &Spectrogram, inear: &Spectrogram, track: &PhonemeTrack) -> Result<()> {
        if !outer.same_shape(inear) {
            return Err(OvrError::Shape("outer and in-ear spectrograms differ in shape".into()));
        }
        if outer.num_bins() != self.num_bins {
            return Err(OvrError::Shape(format!(
                "spectrogram has {} bins, accumulator {}",
                outer.num_bins(),
                self.num_bins
            )));
        }
        if track.len() != outer.num_frames() {
            return Err(OvrError::Shape(format!(
                "track has {} labels for {} frames",
                track.len(),
                outer.num_frames()
            )));
        }
        let k = self.num_bins;
        for (l, label) in track.labels().iter().enumerate() {
            if label == SILENCE {
                continue;
            }
            self.stats
                .entry(label.clone())
                .or_insert_with(|| PhonemeStats::new(k))
                .add_frame(outer.bins(), inear.bins(), l);
            self.total.add_frame(outer.bins(), inear.bins(), l);
        }
        Ok(())
    }

    /// Least-squares RTF per phoneme and bin. Phonemes seen in fewer than
    /// `min_frames` frames are left out so lookups hit the fallback; bins
    /// without outer energy take the fallback value, and the fallback itself
    /// is zero there.
    pub fn finish(&self, talker_id: &str, min_frames: usize) -> Result<RtfTable> {
        if self.total.frames == 0 {
            return Err(OvrError::Empty("no labeled frames to estimate RTFs from".into()));
        }
        let ratio = |s: &PhonemeStats, k: usize| (s.auto[k] > 0.0).then(|| s.cross[k] / s.auto[k]);
        let fallback: Vec<Complex64> = (0..self.num_bins)
            .map(|k| ratio(&self.total, k).unwrap_or_default())
            .collect();
        let entries = self
            .stats
            .iter()
            .filter(|(_, s)| s.frames >= min_frames.max(1))
            .map(|(name, s)| {
                let h = (0..self.num_bins)
                    .map(|k| ratio(s, k).unwrap_or(fallback[k]))
                    .collect();
                (name.clone(), h)
            })
            .collect();
        RtfTable::new(talker_id, entries, fallback)
    }
}

pub fn estimate_rtfs(
    outer: &Spectrogram,
    inear: &Spectrogram,
    track: &PhonemeTrack,
    talker_id: &str,
    min_frames: usize,
) -> Result<RtfTable> {
    let mut acc = RtfAccumulator::new(outer.num_bins());
    acc.add(outer, inear, track)?;
    acc.finish(talker_id, min_frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSmoothing")]
pub struct SmoothingConfig {
    alpha: f64,
}

#[derive(Deserialize)]
struct RawSmoothing {
    alpha: f64,
}

impl TryFrom<RawSmoothing> for SmoothingConfig {
    type Error = OvrError;

    fn try_from(raw: RawSmoothing) -> Result<Self> {
        SmoothingConfig::new(raw.alpha)
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { alpha: 0.5 }
    }
}

impl SmoothingConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(OvrError::Config(format!("smoothing alpha must be in [0, 1), got {alpha}")));
        }
        Ok(SmoothingConfig { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Applies the frame's phoneme RTF to the outer spectrogram, with one-pole
/// smoothing of the RTF sequence across frames.
pub fn simulate_inear(
    outer: &Spectrogram,
    track: &PhonemeTrack,
    table: &RtfTable,
    smoothing: SmoothingConfig,
) -> Result<Spectrogram> {
    let (k_bins, frames) = outer.bins().dim();
    if track.len() != frames {
        return Err(OvrError::Shape(format!("track has {} labels for {frames} frames", track.len())));
    }
    if table.num_bins() != k_bins {
        return Err(OvrError::Shape(format!(
            "RTF table has {} bins, spectrogram {k_bins}",
            table.num_bins()
        )));
    }
    let a = smoothing.alpha();
    let mut out = Array2::zeros((k_bins, frames));
    let mut h: Vec<Complex64> = match track.labels().first() {
        Some(p) => table.lookup(p).to_vec(),
        None => Vec::new(),
    };
    for (l, label) in track.labels().iter().enumerate() {
        let target = table.lookup(label);
        for k in 0..k_bins {
            h[k] = h[k] * a + target[k] * (1.0 - a);
            out[[k, l]] = h[k] * outer.bins()[[k, l]];
        }
    }
    Spectrogram::new(out, *outer.config(), outer.num_samples())
}

/// Returns the `(outer, inear)` pair for one clean utterance.
pub fn augment_utterance(
    clean: &Waveform,
    intervals: &[PhonemeInterval],
    table: &RtfTable,
    smoothing: SmoothingConfig,
    stft: &Stft,
) -> Result<(Waveform, Waveform)> {
    validate_intervals(intervals, Some(clean.duration_secs()))?;
    let spec = stft.analyze(clean)?;
    let track = intervals_to_track(intervals, spec.num_frames(), stft.config());
    let inear = stft.synthesize(&simulate_inear(&spec, &track, table, smoothing)?)?;
    Ok((clean.clone(), inear))
}

/// Uniformly picks a table, skipping the given talker when others exist.
pub fn pick_table<'a, R: Rng>(
    tables: &'a [RtfTable],
    exclude_talker: Option<&str>,
    rng: &mut R,
) -> Result<&'a RtfTable> {
    let others: Vec<&RtfTable> = tables
        .iter()
        .filter(|t| Some(t.talker_id.as_str()) != exclude_talker)
        .collect();
    let pool: Vec<&RtfTable> = if others.is_empty() { tables.iter().collect() } else { others };
    if pool.is_empty() {
        return Err(OvrError::Empty("no RTF tables".into()));
    }
    Ok(pool[rng.gen_range(0..pool.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn iv(start: f64, end: f64, p: &str) -> PhonemeInterval {
        PhonemeInterval {
            start,
            end,
            phoneme: p.into(),
        }
    }

    fn random_spec(k: usize, frames: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = StftConfig::new(16_000, 2 * (k - 1)).unwrap();
        let bins = Array2::from_shape_simple_fn((k, frames), || c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        Spectrogram::new(bins, cfg, frames * (k - 1)).unwrap()
    }

    fn labels(v: &[&str]) -> PhonemeTrack {
        PhonemeTrack::new(v.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn frame_center_labeling() {
        let cfg = StftConfig::default();
        let track = intervals_to_track(&[iv(0.0, 0.032, "a")], 3, &cfg);
        // centers at 0, 16 ms, 32 ms; the interval is half-open
        assert_eq!(track.labels(), &["a", "a", "sil"]);
        assert!(intervals_to_track(&[], 4, &cfg).is_all_silent());
        let track = intervals_to_track(&[iv(0.0, 1.0, "a"), iv(0.5, 1.0, "b")], 60, &cfg);
        // 0.75 s is frame 46.875; frame 47 is at 0.752 s
        assert_eq!(track.labels()[47], "b");
        assert_eq!(track.labels()[30], "a");
        // later-starting wins regardless of list order
        let track = intervals_to_track(&[iv(0.5, 1.0, "b"), iv(0.0, 1.0, "a")], 60, &cfg);
        assert_eq!(track.labels()[47], "b");
    }

    #[test]
    fn invalid_intervals_are_rejected() {
        assert!(validate_intervals(&[iv(0.2, 0.1, "a")], None).is_err());
        assert!(validate_intervals(&[iv(-0.1, 0.1, "a")], None).is_err());
        assert!(validate_intervals(&[iv(0.0, 2.0, "a")], Some(1.0)).is_err());
        assert!(validate_intervals(&[iv(0.0, 0.1, "*")], None).is_err());
        assert!(validate_intervals(&[iv(0.0, 1.0, "a")], Some(1.0)).is_ok());
    }

    #[test]
    fn constant_ratio_is_recovered() {
        let outer = random_spec(9, 12, 1);
        let inear = Spectrogram::new(outer.bins().mapv(|v| v * 2.0), *outer.config(), outer.num_samples()).unwrap();
        let track = labels(&["a"; 12]);
        let table = estimate_rtfs(&outer, &inear, &track, "t", 5).unwrap();
        for h in table.lookup("a") {
            assert!((h - c(2.0, 0.0)).norm() < 1e-12);
        }
        assert_eq!(table.lookup("q"), table.fallback());
    }

    #[test]
    fn rare_phonemes_use_the_fallback() {
        let outer = random_spec(5, 8, 2);
        let track = labels(&["a", "a", "a", "a", "a", "a", "b", "b"]);
        let table = estimate_rtfs(&outer, &outer, &track, "t", 5).unwrap();
        assert!(table.contains("a"));
        assert!(!table.contains("b"));
        assert!(!table.contains(SILENCE));
    }

    #[test]
    fn all_silent_input_is_an_error() {
        let outer = random_spec(5, 4, 3);
        assert!(estimate_rtfs(&outer, &outer, &PhonemeTrack::silent(4), "t", 1).is_err());
    }

    #[test]
    fn empty_bin_takes_the_fallback() {
        let mut outer = random_spec(5, 10, 4);
        let track = labels(&["a", "a", "a", "a", "a", "b", "b", "b", "b", "b"]);
        // bin 2 silent during "a"
        for l in 0..5 {
            outer.bins_mut()[[2, l]] = c(0.0, 0.0);
        }
        let inear = Spectrogram::new(outer.bins().mapv(|v| v * c(0.0, 3.0)), *outer.config(), outer.num_samples()).unwrap();
        let table = estimate_rtfs(&outer, &inear, &track, "t", 5).unwrap();
        assert_eq!(table.lookup("a")[2], table.fallback()[2]);
        assert!((table.fallback()[2] - c(0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn smoothing_unrolls_by_hand() {
        let k = 3;
        let outer = Spectrogram::new(Array2::from_elem((k, 8), c(1.0, 0.0)), StftConfig::new(16_000, 4).unwrap(), 16).unwrap();
        let mut entries = BTreeMap::new();
        let ha = vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)];
        let hb = vec![c(-1.0, 0.5), c(3.0, 0.0), c(0.0, 0.0)];
        entries.insert("a".to_string(), ha.clone());
        entries.insert("b".to_string(), hb.clone());
        let table = RtfTable::new("t", entries, vec![c(0.0, 0.0); k]).unwrap();
        let track = labels(&["a", "a", "a", "a", "a", "b", "b", "b"]);
        let out = simulate_inear(&outer, &track, &table, SmoothingConfig::new(0.5).unwrap()).unwrap();
        for i in 0..k {
            assert_eq!(out.bins()[[i, 4]], ha[i]);
            assert!((out.bins()[[i, 5]] - (ha[i] * 0.5 + hb[i] * 0.5)).norm() < 1e-15);
            assert!((out.bins()[[i, 6]] - (ha[i] * 0.25 + hb[i] * 0.75)).norm() < 1e-15);
        }
    }

    #[test]
    fn unsmoothed_imaginary_rtf_rotates_every_bin() {
        let outer = random_spec(7, 5, 5);
        let table = RtfTable::constant("t", vec![c(0.0, 1.0); 7]).unwrap();
        let out = simulate_inear(&outer, &labels(&["a"; 5]), &table, SmoothingConfig::new(0.0).unwrap()).unwrap();
        for (y, x) in out.bins().iter().zip(outer.bins()) {
            assert_eq!(*y, c(-x.im, x.re));
        }
        let identity = RtfTable::constant("t", vec![c(1.0, 0.0); 7]).unwrap();
        let out = simulate_inear(&outer, &labels(&["a"; 5]), &identity, SmoothingConfig::default()).unwrap();
        assert_eq!(out.bins(), outer.bins());
    }

    #[test]
    fn smoothing_converges_geometrically() {
        let outer = Spectrogram::new(Array2::from_elem((2, 12), c(1.0, 0.0)), StftConfig::new(16_000, 2).unwrap(), 12).unwrap();
        let mut entries = BTreeMap::new();
        entries.insert("a".to_string(), vec![c(0.0, 0.0); 2]);
        entries.insert("b".to_string(), vec![c(1.0, 0.0); 2]);
        let table = RtfTable::new("t", entries, vec![c(0.0, 0.0); 2]).unwrap();
        let mut v = vec!["a"];
        v.extend(["b"; 11]);
        let alpha = 0.3;
        let out = simulate_inear(&outer, &labels(&v), &table, SmoothingConfig::new(alpha).unwrap()).unwrap();
        for l in 1..12 {
            let gap = 1.0 - out.bins()[[0, l]].re;
            assert!((gap - alpha.powi(l as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn smoothing_rejects_out_of_range_alpha() {
        assert!(SmoothingConfig::new(1.0).is_err());
        assert!(SmoothingConfig::new(-0.1).is_err());
        assert!(serde_json::from_str::<SmoothingConfig>(r#"{"alpha": 1.5}"#).is_err());
    }

    #[test]
    fn table_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut entries = BTreeMap::new();
        for p in ["a", "e", "sch"] {
            entries.insert(p.to_string(), (0..4).map(|_| c(rng.gen(), rng.gen())).collect());
        }
        let table = RtfTable::new("talker7", entries, vec![c(0.5, -0.25); 4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rtf.json");
        table.save(&path).unwrap();
        let back = RtfTable::load(&path).unwrap();
        assert_eq!(back.talker_id, "talker7");
        assert_eq!(back.phonemes().collect::<Vec<_>>(), vec!["a", "e", "sch"]);
        for p in ["a", "e", "sch", "zzz"] {
            for (x, y) in table.lookup(p).iter().zip(back.lookup(p)) {
                assert_eq!(x.re as f32 as f64, y.re);
                assert_eq!(x.im as f32 as f64, y.im);
            }
        }
        let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["phonemes"][3], "*");
        assert_eq!(raw["num_bins"], 4);
    }

    #[test]
    fn pick_table_prefers_other_talkers() {
        let t = |id: &str| RtfTable::constant(id, vec![c(1.0, 0.0)]).unwrap();
        let tables = vec![t("a"), t("b")];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(pick_table(&tables, Some("a"), &mut rng).unwrap().talker_id, "b");
        }
        assert_eq!(pick_table(&tables[..1], Some("a"), &mut rng).unwrap().talker_id, "a");
        assert!(pick_table(&[], None, &mut rng).is_err());
    }
}
