//! Dense-captioning evaluation.
//!
//! Captions are scored with CIDEr-D (clipped tf-idf n-gram cosine with a
//! gaussian length penalty, n = 1..4, sigma = 6, scaled to [0, 10]) against
//! references matched by temporal IoU. Three views are reported:
//!
//! * IoU-thresholded CIDEr: many-to-many positive pairs at each threshold,
//!   unmatched predictions scoring zero, averaged over thresholds.
//! * Localization F1: greedy one-to-one matching in descending IoU order.
//! * A story-level score: an order-preserving one-to-one alignment between
//!   the start-sorted sequences, maximizing the sum of IoU-weighted CIDEr
//!   pair scores via dynamic programming.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use serde_json::json;

use crate::codec::TimedEvent;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
pub const CIDER_MAX_NGRAM: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_SCALE: f64 = 10.0;

/// A time interval with positive length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start_sec: f64,
    pub end_sec: f64,
}

impl Interval {
    pub fn new(start_sec: f64, end_sec: f64) -> Result<Self> {
        if !(start_sec.is_finite() && end_sec.is_finite() && start_sec < end_sec) {
            return Err(Error::invalid(format!(
                "interval requires start < end, got [{start_sec}, {end_sec}]"
            )));
        }
        Ok(Self { start_sec, end_sec })
    }
}

/// Intersection over union of two intervals; 0 when disjoint.
pub fn temporal_iou(a: &Interval, b: &Interval) -> f64 {
    let inter = (a.end_sec.min(b.end_sec) - a.start_sec.max(b.start_sec)).max(0.0);
    if inter == 0.0 {
        return 0.0;
    }
    let union = (a.end_sec.max(b.end_sec)) - (a.start_sec.min(b.start_sec));
    inter / union
}

/// An interval together with its caption tokens. The token type is
/// anything hashable: word ids for in-process pipelines, normalized word
/// strings for text interchange.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCaption<T> {
    pub interval: Interval,
    pub words: Vec<T>,
}

impl From<&TimedEvent> for EventCaption<u32> {
    fn from(ev: &TimedEvent) -> Self {
        EventCaption {
            interval: Interval { start_sec: ev.start_sec, end_sec: ev.end_sec },
            words: ev.words.clone(),
        }
    }
}

/// Document frequencies of reference n-grams (n = 1..4); one reference
/// caption is one document.
#[derive(Debug, Clone)]
pub struct IdfCorpus<T: Eq + Hash> {
    df: HashMap<Vec<T>, u32>,
    n_docs: usize,
}

impl<T: Eq + Hash + Clone> IdfCorpus<T> {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Documents containing the n-gram.
    pub fn df(&self, gram: &[T]) -> u32 {
        self.df.get(gram).copied().unwrap_or(0)
    }

    /// `ln(N / df)`, with unseen n-grams floored at df = 1.
    pub fn idf(&self, gram: &[T]) -> f64 {
        (self.n_docs as f64 / self.df(gram).max(1) as f64).ln()
    }
}

/// Builds corpus statistics from every reference caption of a split.
pub fn build_idf<T: Eq + Hash + Clone>(references: &[Vec<T>]) -> Result<IdfCorpus<T>> {
    if references.is_empty() {
        return Err(Error::invalid("idf corpus needs at least one reference caption"));
    }
    let mut df: HashMap<Vec<T>, u32> = HashMap::new();
    for doc in references {
        let mut seen: HashSet<Vec<T>> = HashSet::new();
        for n in 1..=CIDER_MAX_NGRAM {
            for gram in doc.windows(n) {
                seen.insert(gram.to_vec());
            }
        }
        for gram in seen {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    Ok(IdfCorpus { df, n_docs: references.len() })
}

/// Per-n tf-idf vector, its norm, and the unigram length of a caption.
fn tfidf_vectors<T: Eq + Hash + Clone>(
    words: &[T],
    corpus: &IdfCorpus<T>,
) -> (Vec<HashMap<Vec<T>, f64>>, Vec<f64>, usize) {
    let mut vecs = Vec::with_capacity(CIDER_MAX_NGRAM);
    let mut norms = Vec::with_capacity(CIDER_MAX_NGRAM);
    for n in 1..=CIDER_MAX_NGRAM {
        let mut counts: HashMap<Vec<T>, f64> = HashMap::new();
        for gram in words.windows(n) {
            *counts.entry(gram.to_vec()).or_insert(0.0) += 1.0;
        }
        for (gram, v) in counts.iter_mut() {
            *v *= corpus.idf(gram);
        }
        let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
        vecs.push(counts);
        norms.push(norm);
    }
    (vecs, norms, words.len())
}

/// CIDEr-D of a candidate caption against reference captions.
pub fn cider_d<T: Eq + Hash + Clone>(
    candidate: &[T],
    references: &[Vec<T>],
    corpus: &IdfCorpus<T>,
) -> f64 {
    if references.is_empty() {
        return 0.0;
    }
    let (cand_vecs, cand_norms, cand_len) = tfidf_vectors(candidate, corpus);
    let mut total = 0.0f64;
    for reference in references {
        let (ref_vecs, ref_norms, ref_len) = tfidf_vectors(reference, corpus);
        let delta = cand_len as f64 - ref_len as f64;
        let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
        for n in 0..CIDER_MAX_NGRAM {
            if cand_norms[n] == 0.0 || ref_norms[n] == 0.0 {
                continue;
            }
            let mut dot = 0.0f64;
            for (gram, rv) in &ref_vecs[n] {
                if let Some(cv) = cand_vecs[n].get(gram) {
                    dot += cv.min(*rv) * rv;
                }
            }
            total += dot / (cand_norms[n] * ref_norms[n]) * penalty;
        }
    }
    total / CIDER_MAX_NGRAM as f64 / references.len() as f64 * CIDER_SCALE
}

/// Positive prediction/ground-truth pairs at an IoU threshold,
/// many-to-many. Predictions with no positive pair appear once with no
/// partner.
pub fn match_at_threshold(
    preds: &[Interval],
    gts: &[Interval],
    threshold: f64,
) -> Result<Vec<(usize, Option<usize>)>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let mut pairs = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        let mut matched = false;
        for (j, g) in gts.iter().enumerate() {
            if temporal_iou(p, g) >= threshold {
                pairs.push((i, Some(j)));
                matched = true;
            }
        }
        if !matched {
            pairs.push((i, None));
        }
    }
    Ok(pairs)
}

/// Per-threshold scores plus their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdScores {
    pub by_threshold: Vec<f64>,
    pub avg: f64,
}

fn finish_scores(by_threshold: Vec<f64>) -> ThresholdScores {
    let avg = if by_threshold.is_empty() {
        0.0
    } else {
        by_threshold.iter().sum::<f64>() / by_threshold.len() as f64
    };
    ThresholdScores { by_threshold, avg }
}

/// IoU-thresholded CIDEr: at each threshold, the mean CIDEr-D over all
/// positive pairs, unmatched predictions contributing zero.
pub fn dense_cider<T: Eq + Hash + Clone>(
    preds: &[EventCaption<T>],
    gts: &[EventCaption<T>],
    thresholds: &[f64],
    corpus: &IdfCorpus<T>,
) -> Result<ThresholdScores> {
    let pred_iv: Vec<Interval> = preds.iter().map(|e| e.interval).collect();
    let gt_iv: Vec<Interval> = gts.iter().map(|e| e.interval).collect();
    let mut by_threshold = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        let pairs = match_at_threshold(&pred_iv, &gt_iv, thr)?;
        if pairs.is_empty() {
            by_threshold.push(0.0);
            continue;
        }
        let mut total = 0.0f64;
        for (i, j) in &pairs {
            if let Some(j) = j {
                total += cider_d(&preds[*i].words, &[gts[*j].words.clone()], corpus);
            }
        }
        by_threshold.push(total / pairs.len() as f64);
    }
    Ok(finish_scores(by_threshold))
}

/// Greedy one-to-one matched pairs at a threshold, in descending IoU order.
fn greedy_matches(preds: &[Interval], gts: &[Interval], threshold: f64) -> usize {
    let mut candidates = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let iou = temporal_iou(p, g);
            if iou >= threshold {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_pred = vec![false; preds.len()];
    let mut used_gt = vec![false; gts.len()];
    let mut matched = 0usize;
    for (_, i, j) in candidates {
        if !used_pred[i] && !used_gt[j] {
            used_pred[i] = true;
            used_gt[j] = true;
            matched += 1;
        }
    }
    matched
}

fn f1_from_counts(matched: usize, n_pred: usize, n_gt: usize) -> f64 {
    if n_pred == 0 && n_gt == 0 {
        return 1.0;
    }
    if n_pred == 0 || n_gt == 0 {
        return 0.0;
    }
    let precision = matched as f64 / n_pred as f64;
    let recall = matched as f64 / n_gt as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Localization F1 from greedy one-to-one IoU matching, per threshold.
pub fn f1_localization<T>(
    preds: &[EventCaption<T>],
    gts: &[EventCaption<T>],
    thresholds: &[f64],
) -> Result<ThresholdScores> {
    let pred_iv: Vec<Interval> = preds.iter().map(|e| e.interval).collect();
    let gt_iv: Vec<Interval> = gts.iter().map(|e| e.interval).collect();
    let mut by_threshold = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        if !(thr > 0.0 && thr <= 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1], got {thr}")));
        }
        let matched = greedy_matches(&pred_iv, &gt_iv, thr);
        by_threshold.push(f1_from_counts(matched, preds.len(), gts.len()));
    }
    Ok(finish_scores(by_threshold))
}

fn soda_pair_score<T: Eq + Hash + Clone>(
    pred: &EventCaption<T>,
    gt: &EventCaption<T>,
    corpus: &IdfCorpus<T>,
) -> f64 {
    let iou = temporal_iou(&pred.interval, &gt.interval);
    if iou == 0.0 {
        return 0.0;
    }
    iou * cider_d(&pred.words, &[gt.words.clone()], corpus)
}

/// Story-level score: the order-preserving one-to-one alignment between
/// the start-sorted prediction and ground-truth sequences that maximizes
/// the summed IoU-weighted CIDEr, turned into an F-measure.
pub fn soda_c<T: Eq + Hash + Clone>(
    preds: &[EventCaption<T>],
    gts: &[EventCaption<T>],
    corpus: &IdfCorpus<T>,
) -> f64 {
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let mut preds = preds.to_vec();
    let mut gts = gts.to_vec();
    preds.sort_by(|a, b| {
        (a.interval.start_sec, a.interval.end_sec)
            .partial_cmp(&(b.interval.start_sec, b.interval.end_sec))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    gts.sort_by(|a, b| {
        (a.interval.start_sec, a.interval.end_sec)
            .partial_cmp(&(b.interval.start_sec, b.interval.end_sec))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let n = preds.len();
    let m = gts.len();
    let mut dp = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let take = dp[i - 1][j - 1] + soda_pair_score(&preds[i - 1], &gts[j - 1], corpus);
            dp[i][j] = dp[i - 1][j].max(dp[i][j - 1]).max(take);
        }
    }
    let total = dp[n][m];
    let precision = total / n as f64;
    let recall = total / m as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Scores of one prediction set against one ground-truth set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub cider_by_threshold: Vec<f64>,
    pub cider_avg: f64,
    pub f1_by_threshold: Vec<f64>,
    pub f1_avg: f64,
    pub soda_c: f64,
    pub n_pred: usize,
    pub n_gt: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> serde_json::Value {
        let mut cider = serde_json::Map::new();
        let mut f1 = serde_json::Map::new();
        for (i, thr) in self.thresholds.iter().enumerate() {
            cider.insert(format!("{thr}"), json!(self.cider_by_threshold[i]));
            f1.insert(format!("{thr}"), json!(self.f1_by_threshold[i]));
        }
        cider.insert("avg".into(), json!(self.cider_avg));
        f1.insert("avg".into(), json!(self.f1_avg));
        json!({
            "cider": cider,
            "f1": f1,
            "soda_c": self.soda_c,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
        })
    }
}

/// Evaluates a single prediction set (one video, or one pooled set).
pub fn evaluate<T: Eq + Hash + Clone>(
    preds: &[EventCaption<T>],
    gts: &[EventCaption<T>],
    thresholds: &[f64],
    corpus: &IdfCorpus<T>,
) -> Result<EvalReport> {
    let cider = dense_cider(preds, gts, thresholds, corpus)?;
    let f1 = f1_localization(preds, gts, thresholds)?;
    let soda = soda_c(preds, gts, corpus);
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        cider_by_threshold: cider.by_threshold,
        cider_avg: cider.avg,
        f1_by_threshold: f1.by_threshold,
        f1_avg: f1.avg,
        soda_c: soda,
        n_pred: preds.len(),
        n_gt: gts.len(),
    })
}

/// Evaluates per-video prediction/ground-truth sets as one dataset.
///
/// The idf corpus is built from every ground-truth caption; CIDEr pairs
/// pool across videos, F1 counts micro-average, and the story score is
/// the per-video mean over the union of video ids.
pub fn evaluate_dataset<T: Eq + Hash + Clone>(
    preds_by_video: &BTreeMap<String, Vec<EventCaption<T>>>,
    gts_by_video: &BTreeMap<String, Vec<EventCaption<T>>>,
    thresholds: &[f64],
) -> Result<EvalReport> {
    let references: Vec<Vec<T>> = gts_by_video
        .values()
        .flat_map(|evs| evs.iter().map(|e| e.words.clone()))
        .collect();
    let corpus = build_idf(&references)?;

    let empty: Vec<EventCaption<T>> = Vec::new();
    let videos: std::collections::BTreeSet<&String> =
        preds_by_video.keys().chain(gts_by_video.keys()).collect();

    let mut n_pred = 0usize;
    let mut n_gt = 0usize;
    let mut cider_by_threshold = vec![0.0f64; thresholds.len()];
    let mut pair_counts = vec![0usize; thresholds.len()];
    let mut matched = vec![0usize; thresholds.len()];
    let mut soda_sum = 0.0f64;

    for vid in &videos {
        let preds = preds_by_video.get(*vid).unwrap_or(&empty);
        let gts = gts_by_video.get(*vid).unwrap_or(&empty);
        n_pred += preds.len();
        n_gt += gts.len();
        let pred_iv: Vec<Interval> = preds.iter().map(|e| e.interval).collect();
        let gt_iv: Vec<Interval> = gts.iter().map(|e| e.interval).collect();
        for (t, &thr) in thresholds.iter().enumerate() {
            let pairs = match_at_threshold(&pred_iv, &gt_iv, thr)?;
            for (i, j) in &pairs {
                if let Some(j) = j {
                    cider_by_threshold[t] += cider_d(&preds[*i].words, &[gts[*j].words.clone()], &corpus);
                }
            }
            pair_counts[t] += pairs.len();
            matched[t] += greedy_matches(&pred_iv, &gt_iv, thr);
        }
        soda_sum += soda_c(preds, gts, &corpus);
    }

    for (t, count) in pair_counts.iter().enumerate() {
        cider_by_threshold[t] = if *count == 0 { 0.0 } else { cider_by_threshold[t] / *count as f64 };
    }
    let f1_by_threshold: Vec<f64> = matched
        .iter()
        .map(|&m| f1_from_counts(m, n_pred, n_gt))
        .collect();
    let cider = finish_scores(cider_by_threshold);
    let f1 = finish_scores(f1_by_threshold);
    let soda = if videos.is_empty() { 0.0 } else { soda_sum / videos.len() as f64 };
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        cider_by_threshold: cider.by_threshold,
        cider_avg: cider.avg,
        f1_by_threshold: f1.by_threshold,
        f1_avg: f1.avg,
        soda_c: soda,
        n_pred,
        n_gt,
    })
}
