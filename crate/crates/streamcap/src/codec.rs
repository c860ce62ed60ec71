//! Timed events and their token encoding.
//!
//! Events are serialized for a text decoder over an augmented vocabulary:
//! word ids occupy `[0, |V|)` and time tokens occupy `[|V|, |V| + |T|)`,
//! where each time token names one uniform bin of the video duration. An
//! event becomes `[w_start, w_end, word...]` and an event list is the
//! concatenation of its events ordered by starting time.
//!
//! The decoder accepts arbitrary token sequences: malformed fragments are
//! dropped and counted rather than failing, since model output is
//! untrusted.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One temporally localized caption.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub start_sec: f64,
    pub end_sec: f64,
    /// Word ids over the base vocabulary.
    pub words: Vec<u32>,
}

impl TimedEvent {
    pub fn new(start_sec: f64, end_sec: f64, words: Vec<u32>) -> Result<Self> {
        if !(start_sec.is_finite() && end_sec.is_finite()) {
            return Err(Error::invalid("event times must be finite"));
        }
        if !(0.0 <= start_sec && start_sec < end_sec) {
            return Err(Error::invalid(format!(
                "event requires 0 <= start < end, got [{start_sec}, {end_sec}]"
            )));
        }
        Ok(Self { start_sec, end_sec, words })
    }
}

/// Augmented-vocabulary layout: `n_words` word ids followed by
/// `n_time_bins` time tokens covering `[0, duration_sec]` uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabSpec {
    pub n_words: u32,
    pub n_time_bins: u32,
    pub duration_sec: f64,
}

impl VocabSpec {
    pub fn new(n_words: u32, n_time_bins: u32, duration_sec: f64) -> Result<Self> {
        if n_words == 0 || n_time_bins == 0 {
            return Err(Error::invalid("vocabulary and time-bin counts must be positive"));
        }
        if !(duration_sec.is_finite() && duration_sec > 0.0) {
            return Err(Error::invalid(format!("duration must be positive, got {duration_sec}")));
        }
        Ok(Self { n_words, n_time_bins, duration_sec })
    }

    /// Total size of the augmented vocabulary.
    pub fn augmented_size(&self) -> u32 {
        self.n_words + self.n_time_bins
    }

    pub fn is_word(&self, id: u32) -> bool {
        id < self.n_words
    }

    pub fn is_time_token(&self, id: u32) -> bool {
        id >= self.n_words && id < self.augmented_size()
    }

    /// Width of one time bin in seconds.
    pub fn bin_width(&self) -> f64 {
        self.duration_sec / self.n_time_bins as f64
    }
}

/// Uniform bin index of a timestamp, clamped to the valid range.
pub fn time_bin(t_sec: f64, spec: &VocabSpec) -> Result<u32> {
    if !(t_sec.is_finite() && t_sec >= 0.0) {
        return Err(Error::invalid(format!("time must be nonnegative, got {t_sec}")));
    }
    let raw = (t_sec / spec.duration_sec * spec.n_time_bins as f64).floor();
    Ok((raw as i64).clamp(0, spec.n_time_bins as i64 - 1) as u32)
}

/// Time-token id for a timestamp.
pub fn quantize_time(t_sec: f64, spec: &VocabSpec) -> Result<u32> {
    Ok(spec.n_words + time_bin(t_sec, spec)?)
}

/// Center of the bin named by a time token, in seconds.
pub fn dequantize_time(token: u32, spec: &VocabSpec) -> Result<f64> {
    if !spec.is_time_token(token) {
        return Err(Error::invalid(format!(
            "token {token} is outside the time range [{}, {})",
            spec.n_words,
            spec.augmented_size()
        )));
    }
    let bin = (token - spec.n_words) as f64;
    Ok((bin + 0.5) / spec.n_time_bins as f64 * spec.duration_sec)
}

/// Serializes events as `[w_start, w_end, word...]` groups, ordered by
/// starting time (ties by end time, then input order).
///
/// An event whose endpoints quantize into the same bin is emitted with
/// adjacent bins so that the start token stays strictly below the end
/// token; in the last bin the start shifts down instead.
pub fn encode_events(events: &[TimedEvent], spec: &VocabSpec) -> Result<Vec<u32>> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        (events[a].start_sec, events[a].end_sec)
            .partial_cmp(&(events[b].start_sec, events[b].end_sec))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut out = Vec::new();
    for &idx in &order {
        let ev = &events[idx];
        if ev.end_sec > spec.duration_sec * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "event end {} exceeds duration {}",
                ev.end_sec, spec.duration_sec
            )));
        }
        for &w in &ev.words {
            if !spec.is_word(w) {
                return Err(Error::invalid(format!(
                    "word id {w} outside vocabulary of size {}",
                    spec.n_words
                )));
            }
        }
        let mut bin_s = time_bin(ev.start_sec, spec)?;
        let mut bin_e = time_bin(ev.end_sec, spec)?;
        if bin_s == bin_e {
            if spec.n_time_bins < 2 {
                return Err(Error::invalid(
                    "at least two time bins are needed to encode an event",
                ));
            }
            if bin_e + 1 < spec.n_time_bins {
                bin_e += 1;
            } else {
                bin_s -= 1;
            }
        }
        out.push(spec.n_words + bin_s);
        out.push(spec.n_words + bin_e);
        out.extend_from_slice(&ev.words);
    }
    Ok(out)
}

/// Counters for malformed model output seen while decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeDiagnostics {
    /// Fragments that could not form an event (lone time tokens, words
    /// with no time group, end bins at or below their start bin).
    pub dropped_fragments: usize,
    /// Emitted events whose start bin precedes the previous event's.
    pub reordered_times: usize,
}

/// Greedy left-to-right parse of an arbitrary token sequence into events.
///
/// A time token opens a group; a second, strictly larger time token fixes
/// the interval; following word tokens belong to the group until the next
/// time token or the end of input. Ids outside the augmented vocabulary
/// are skipped. Never fails.
pub fn decode_tokens(tokens: &[u32], spec: &VocabSpec) -> (Vec<TimedEvent>, DecodeDiagnostics) {
    enum State {
        Idle,
        /// Inside a fragment already counted as dropped; waiting for the
        /// next time token.
        Garbage,
        HaveStart(u32),
        InGroup(u32, u32, Vec<u32>),
    }

    let mut events = Vec::new();
    let mut diag = DecodeDiagnostics::default();
    let mut state = State::Idle;
    let mut last_start_bin: Option<u32> = None;

    let mut emit = |start_tok: u32, end_tok: u32, words: Vec<u32>, diag: &mut DecodeDiagnostics| {
        let start = dequantize_time(start_tok, spec).expect("start token validated");
        let end = dequantize_time(end_tok, spec).expect("end token validated");
        let bin = start_tok - spec.n_words;
        if let Some(prev) = last_start_bin {
            if bin < prev {
                diag.reordered_times += 1;
            }
        }
        last_start_bin = Some(bin);
        events.push(TimedEvent { start_sec: start, end_sec: end, words });
    };

    for &tok in tokens {
        if tok >= spec.augmented_size() {
            continue;
        }
        let is_time = spec.is_time_token(tok);
        state = match state {
            State::Idle => {
                if is_time {
                    State::HaveStart(tok)
                } else {
                    diag.dropped_fragments += 1;
                    State::Garbage
                }
            }
            State::Garbage => {
                if is_time {
                    State::HaveStart(tok)
                } else {
                    State::Garbage
                }
            }
            State::HaveStart(start) => {
                if is_time {
                    if tok > start {
                        State::InGroup(start, tok, Vec::new())
                    } else {
                        // end bin at or below start bin: drop the opener,
                        // retry with this token as a fresh start
                        diag.dropped_fragments += 1;
                        State::HaveStart(tok)
                    }
                } else {
                    diag.dropped_fragments += 1;
                    State::Garbage
                }
            }
            State::InGroup(start, end, mut words) => {
                if is_time {
                    emit(start, end, words, &mut diag);
                    State::HaveStart(tok)
                } else {
                    words.push(tok);
                    State::InGroup(start, end, words)
                }
            }
        };
    }
    match state {
        State::InGroup(start, end, words) => emit(start, end, words, &mut diag),
        State::HaveStart(_) => diag.dropped_fragments += 1,
        State::Idle | State::Garbage => {}
    }
    (events, diag)
}

/// One line of the events JSONL interchange format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EventRecord {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub caption: String,
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<EventRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_events_jsonl(path: &Path, records: &[EventRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Lowercases, strips punctuation, and splits on whitespace.
pub fn normalize_caption(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Word list loaded from a plain-text file, one token per line; the line
/// number (from zero) is the word id.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, index }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut words = Vec::new();
        for line in reader.lines() {
            words.push(line?.trim().to_owned());
        }
        while words.last().is_some_and(|w| w.is_empty()) {
            words.pop();
        }
        Ok(Self::from_words(words))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    /// Normalized caption text to word ids; words missing from the
    /// vocabulary are skipped.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        normalize_caption(text)
            .iter()
            .filter_map(|w| self.id(w))
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter_map(|&id| self.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
