//! Decoding points and the training/inference examples built around them.
//!
//! A decoding point is a frame index at which captions are produced for
//! every event that has already finished. During training the finished
//! events are split into a prefix (context fed to the decoder) and a
//! target (what it must predict), with optional augmentation that moves
//! random prefix events back into the target. During inference the
//! predictions of earlier points accumulate into the prefix of later ones.

use rand::Rng;

use crate::codec::{self, EventRecord, TimedEvent, VocabSpec};
use crate::error::{Error, Result};

/// Frame indices (1-based, ending at the final frame) where decoding runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodingSchedule {
    pub points: Vec<usize>,
    pub stride_frames: usize,
}

/// Uniform decoding points with a fixed stride: `S, 2S, ...`, with the last
/// point moved to the final frame so the whole video is always decoded.
pub fn make_decoding_points(t: usize, stride: usize) -> Result<DecodingSchedule> {
    if stride < 1 || stride > t {
        return Err(Error::invalid(format!(
            "stride must satisfy 1 <= S <= T, got S = {stride}, T = {t}"
        )));
    }
    let mut points: Vec<usize> = (1..=t / stride).map(|k| k * stride).collect();
    if let Some(last) = points.last_mut() {
        if *last < t {
            *last = t;
        }
    }
    Ok(DecodingSchedule { points, stride_frames: stride })
}

/// Count-based alternative: `m` points at `floor(k * T / m)`, ending at `T`.
pub fn decoding_points_by_count(t: usize, count: usize) -> Result<DecodingSchedule> {
    if count < 1 || count > t {
        return Err(Error::invalid(format!(
            "count must satisfy 1 <= m <= T, got m = {count}, T = {t}"
        )));
    }
    let points: Vec<usize> = (1..=count).map(|k| k * t / count).collect();
    let stride = (t / count).max(1);
    Ok(DecodingSchedule { points, stride_frames: stride })
}

/// Anything with a temporal extent in seconds.
pub trait Timed {
    fn start_sec(&self) -> f64;
    fn end_sec(&self) -> f64;
}

impl Timed for TimedEvent {
    fn start_sec(&self) -> f64 {
        self.start_sec
    }
    fn end_sec(&self) -> f64 {
        self.end_sec
    }
}

impl Timed for EventRecord {
    fn start_sec(&self) -> f64 {
        self.start
    }
    fn end_sec(&self) -> f64 {
        self.end
    }
}

fn sort_by_start<E: Timed>(events: &mut [E]) {
    events.sort_by(|a, b| {
        (a.start_sec(), a.end_sec())
            .partial_cmp(&(b.start_sec(), b.end_sec()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Events finished by decoding point `d_i`: everything with
/// `end_sec <= d_i / fps`, ordered by starting time.
pub fn target_set<E: Timed + Clone>(events: &[E], point_frame: usize, fps: f64) -> Vec<E> {
    let horizon = point_frame as f64 / fps;
    let mut out: Vec<E> = events.iter().filter(|e| e.end_sec() <= horizon).cloned().collect();
    sort_by_start(&mut out);
    out
}

/// Draws a splitting index `j` uniformly from `{1..n}` and partitions the
/// events into a prefix of `j - 1` events and a never-empty target.
pub fn split_prefix_target<E: Clone, R: Rng>(events: &[E], rng: &mut R) -> (Vec<E>, Vec<E>) {
    if events.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let j = rng.gen_range(1..=events.len());
    (events[..j - 1].to_vec(), events[j - 1..].to_vec())
}

/// Independently moves each prefix event into the target with probability
/// `drop_prob`; the target is re-sorted by start time.
pub fn augment_prefix<E: Timed + Clone, R: Rng>(
    prefix: &[E],
    target: &[E],
    drop_prob: f64,
    rng: &mut R,
) -> Result<(Vec<E>, Vec<E>)> {
    if !(0.0..=1.0).contains(&drop_prob) {
        return Err(Error::invalid(format!("drop_prob must lie in [0, 1], got {drop_prob}")));
    }
    let mut kept = Vec::new();
    let mut moved = target.to_vec();
    for ev in prefix {
        if rng.gen::<f64>() < drop_prob {
            moved.push(ev.clone());
        } else {
            kept.push(ev.clone());
        }
    }
    sort_by_start(&mut moved);
    Ok((kept, moved))
}

/// How much of earlier predictions later decoding points see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixMode {
    /// No context.
    None,
    /// Caption words only, events ordered by start time.
    Captions,
    /// Full event encoding including time tokens.
    CaptionsAndTime,
}

impl PrefixMode {
    pub fn name(&self) -> &'static str {
        match self {
            PrefixMode::None => "none",
            PrefixMode::Captions => "captions",
            PrefixMode::CaptionsAndTime => "captions_and_time",
        }
    }
}

/// Token sequence handed to the decoder as context.
pub fn build_prefix_tokens(
    predictions: &[TimedEvent],
    mode: PrefixMode,
    spec: &VocabSpec,
) -> Result<Vec<u32>> {
    match mode {
        PrefixMode::None => Ok(Vec::new()),
        PrefixMode::Captions => {
            let mut sorted = predictions.to_vec();
            sort_by_start(&mut sorted);
            Ok(sorted.iter().flat_map(|e| e.words.iter().copied()).collect())
        }
        PrefixMode::CaptionsAndTime => codec::encode_events(predictions, spec),
    }
}

/// Start-sorted union of earlier and new predictions. Exact duplicates —
/// identical words and identical quantized start/end — keep only their
/// earliest occurrence; overlapping near-duplicates are all kept.
pub fn accumulate_predictions(
    previous: &[TimedEvent],
    new: &[TimedEvent],
    spec: &VocabSpec,
) -> Result<Vec<TimedEvent>> {
    let mut seen = std::collections::HashSet::new();
    let mut merged = Vec::new();
    for ev in previous.iter().chain(new.iter()) {
        let key = (
            codec::time_bin(ev.start_sec, spec)?,
            codec::time_bin(ev.end_sec, spec)?,
            ev.words.clone(),
        );
        if seen.insert(key) {
            merged.push(ev.clone());
        }
    }
    sort_by_start(&mut merged);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(start: f64, end: f64, words: Vec<u32>) -> TimedEvent {
        TimedEvent::new(start, end, words).unwrap()
    }

    #[test]
    fn stride_points_match_reference_configurations() {
        assert_eq!(make_decoding_points(64, 32).unwrap().points, vec![32, 64]);
        assert_eq!(make_decoding_points(64, 21).unwrap().points, vec![21, 42, 64]);
        assert_eq!(make_decoding_points(64, 64).unwrap().points, vec![64]);
        assert_eq!(make_decoding_points(10, 7).unwrap().points, vec![10]);
    }

    #[test]
    fn stride_bounds_enforced() {
        assert!(make_decoding_points(10, 0).is_err());
        assert!(make_decoding_points(10, 11).is_err());
    }

    #[test]
    fn count_points_end_at_final_frame() {
        assert_eq!(decoding_points_by_count(64, 2).unwrap().points, vec![32, 64]);
        assert_eq!(decoding_points_by_count(64, 1).unwrap().points, vec![64]);
        assert_eq!(decoding_points_by_count(5, 5).unwrap().points, vec![1, 2, 3, 4, 5]);
        assert!(decoding_points_by_count(5, 6).is_err());
    }

    #[test]
    fn points_strictly_increasing() {
        for t in 1..=80usize {
            for s in 1..=t {
                let p = make_decoding_points(t, s).unwrap().points;
                assert!(p.windows(2).all(|w| w[0] < w[1]), "T={t} S={s}: {p:?}");
                assert_eq!(*p.last().unwrap(), t);
            }
        }
    }

    #[test]
    fn target_set_filters_by_end_time() {
        let events = vec![ev(0.0, 10.0, vec![1]), ev(20.0, 30.0, vec![2]), ev(40.0, 50.0, vec![3])];
        let got = target_set(&events, 32, 1.0);
        assert_eq!(got.len(), 2);
        assert_eq!(target_set(&events, 64, 1.0).len(), 3);
        assert!(target_set(&events, 5, 1.0).is_empty());
    }

    #[test]
    fn split_single_event_forces_empty_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let events = vec![ev(0.0, 1.0, vec![1])];
        let (prefix, target) = split_prefix_target(&events, &mut rng);
        assert!(prefix.is_empty());
        assert_eq!(target.len(), 1);
    }

    #[test]
    fn split_draw_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let events: Vec<TimedEvent> = (0..4).map(|i| ev(i as f64, i as f64 + 0.5, vec![i])).collect();
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let (prefix, _) = split_prefix_target(&events, &mut rng);
            counts[prefix.len()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.25).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn split_is_a_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let events: Vec<TimedEvent> = (0..7).map(|i| ev(i as f64, i as f64 + 0.5, vec![i])).collect();
        for _ in 0..100 {
            let (prefix, target) = split_prefix_target(&events, &mut rng);
            let rebuilt: Vec<TimedEvent> = prefix.iter().chain(target.iter()).cloned().collect();
            assert_eq!(rebuilt, events);
            assert!(!target.is_empty());
        }
    }

    #[test]
    fn split_empty_input_returns_empty_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (p, t) = split_prefix_target::<TimedEvent, _>(&[], &mut rng);
        assert!(p.is_empty() && t.is_empty());
    }

    #[test]
    fn augment_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let prefix = vec![ev(0.0, 1.0, vec![1]), ev(2.0, 3.0, vec![2])];
        let target = vec![ev(4.0, 5.0, vec![3])];

        let (p, t) = augment_prefix(&prefix, &target, 0.0, &mut rng).unwrap();
        assert_eq!(p, prefix);
        assert_eq!(t, target);

        let (p, t) = augment_prefix(&prefix, &target, 1.0, &mut rng).unwrap();
        assert!(p.is_empty());
        assert_eq!(t.len(), 3);
        assert!(t.windows(2).all(|w| w[0].start_sec <= w[1].start_sec));
    }

    #[test]
    fn augment_preserves_union() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let prefix: Vec<TimedEvent> = (0..5).map(|i| ev(i as f64, i as f64 + 0.5, vec![i])).collect();
        let target: Vec<TimedEvent> = (5..8).map(|i| ev(i as f64, i as f64 + 0.5, vec![i])).collect();
        for _ in 0..1000 {
            let (p, t) = augment_prefix(&prefix, &target, 0.5, &mut rng).unwrap();
            assert_eq!(p.len() + t.len(), 8);
            let mut ids: Vec<u32> = p.iter().chain(t.iter()).map(|e| e.words[0]).collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn augment_rejects_bad_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        assert!(augment_prefix::<TimedEvent, _>(&[], &[], 1.5, &mut rng).is_err());
    }

    #[test]
    fn determinism_under_seed() {
        let events: Vec<TimedEvent> = (0..6).map(|i| ev(i as f64, i as f64 + 0.5, vec![i])).collect();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let (p, t) = split_prefix_target(&events, &mut rng);
            augment_prefix(&p, &t, 0.5, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn prefix_tokens_by_mode() {
        let spec = VocabSpec::new(100, 100, 100.0).unwrap();
        let preds = vec![ev(50.0, 60.0, vec![7, 8]), ev(10.0, 20.0, vec![3])];

        assert!(build_prefix_tokens(&preds, PrefixMode::None, &spec).unwrap().is_empty());
        assert_eq!(
            build_prefix_tokens(&preds, PrefixMode::Captions, &spec).unwrap(),
            vec![3, 7, 8]
        );

        let full = build_prefix_tokens(&preds, PrefixMode::CaptionsAndTime, &spec).unwrap();
        let (decoded, diag) = codec::decode_tokens(&full, &spec);
        assert_eq!(diag, codec::DecodeDiagnostics::default());
        assert_eq!(decoded.len(), 2);
        assert_eq!(decoded[0].words, vec![3]);
        assert_eq!(decoded[1].words, vec![7, 8]);
    }

    #[test]
    fn accumulate_dedups_exact_matches_only() {
        let spec = VocabSpec::new(100, 100, 100.0).unwrap();
        let previous = vec![ev(10.0, 20.0, vec![1]), ev(30.0, 40.0, vec![2])];
        let new = vec![
            ev(10.2, 20.3, vec![1]),  // same bins, same words: duplicate
            ev(12.0, 22.0, vec![1]),  // different bins: kept
            ev(50.0, 60.0, vec![3]),
        ];
        let merged = accumulate_predictions(&previous, &new, &spec).unwrap();
        assert_eq!(merged.len(), 4);
        assert!(merged.windows(2).all(|w| w[0].start_sec <= w[1].start_sec));
        // the earlier occurrence won
        assert!(merged.iter().any(|e| e.start_sec == 10.0));
        assert!(!merged.iter().any(|e| e.start_sec == 10.2));
    }

    #[test]
    fn accumulate_disjoint_is_sorted_union() {
        let spec = VocabSpec::new(100, 100, 100.0).unwrap();
        let previous = vec![ev(30.0, 40.0, vec![2])];
        let new = vec![ev(10.0, 20.0, vec![1])];
        let merged = accumulate_predictions(&previous, &new, &spec).unwrap();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].words, vec![1]);
    }

    #[test]
    fn causality_and_coverage_over_random_event_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let t = rng.gen_range(8..100usize);
            let fps = 1.0;
            let n = rng.gen_range(1..8usize);
            let events: Vec<TimedEvent> = (0..n)
                .map(|i| {
                    let s = rng.gen_range(0.0..(t as f64 - 1.0));
                    let e = rng.gen_range(s + 0.25..t as f64);
                    ev(s, e, vec![i as u32])
                })
                .collect();
            let schedule = make_decoding_points(t, rng.gen_range(1..=t)).unwrap();
            let mut prev_len = 0usize;
            for &point in &schedule.points {
                let finished = target_set(&events, point, fps);
                // causality
                assert!(finished.iter().all(|e| e.end_sec <= point as f64 / fps));
                // monotonicity
                assert!(finished.len() >= prev_len);
                prev_len = finished.len();
                // partition at this point
                let (prefix, target) = split_prefix_target(&finished, &mut rng);
                assert_eq!(prefix.len() + target.len(), finished.len());
            }
            // coverage at the final point
            assert_eq!(target_set(&events, t, fps).len(), n);
        }
    }
}
