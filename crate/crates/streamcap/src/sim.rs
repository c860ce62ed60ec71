//! Synthetic planted-cluster streams and a desk-scale end-to-end pipeline.
//!
//! Frames are noisy copies of known concept centers, one active concept at
//! a time, so the whole streaming stack — memory update, decoding points,
//! prefix accumulation, evaluation — can run and be scored without any
//! learned model. The caption decoder is replaced by a nearest-concept
//! lookup against a codebook, which is analytically predictable under the
//! separation invariant enforced by [`StreamSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{TimedEvent, VocabSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::memory::{MemoryConfig, MemoryState, StreamMemory};
use crate::metrics::{self, EvalReport, EventCaption};
use crate::scheduler::{self, DecodingSchedule};
use crate::stream::{TokenFrame, TokenStream};

/// One planted event: frames `start_frame..=end_frame` (1-based) emit
/// noisy copies of one concept center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedEvent {
    pub start_frame: usize,
    pub end_frame: usize,
    pub concept: usize,
}

/// Full description of a synthetic stream.
#[derive(Debug, Clone)]
pub struct StreamSpec {
    pub t: usize,
    pub n_f: usize,
    pub dim: usize,
    pub fps: f64,
    pub events: Vec<PlantedEvent>,
    /// Concept centers, index = concept id.
    pub concepts: Vec<Vec<f32>>,
    /// Emitted when no event is active.
    pub background: Vec<f32>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.n_f == 0 || self.dim == 0 {
            return Err(Error::invalid("stream shape must be positive"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::invalid("fps must be positive"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise sigma must be nonnegative"));
        }
        if self.concepts.is_empty() {
            return Err(Error::invalid("at least one concept is required"));
        }
        for (i, c) in self.concepts.iter().enumerate() {
            if c.len() != self.dim {
                return Err(Error::invalid(format!("concept {i} has wrong dimension")));
            }
        }
        if self.background.len() != self.dim {
            return Err(Error::invalid("background center has wrong dimension"));
        }
        let min_gap = self.min_concept_gap();
        if min_gap <= 6.0 * self.noise_sigma {
            return Err(Error::invalid(format!(
                "concept separation {min_gap} must exceed 6 * noise_sigma = {}",
                6.0 * self.noise_sigma
            )));
        }
        let mut sorted = self.events.clone();
        sorted.sort_by_key(|e| e.start_frame);
        for (i, ev) in sorted.iter().enumerate() {
            if ev.start_frame < 1 || ev.start_frame > ev.end_frame || ev.end_frame > self.t {
                return Err(Error::invalid(format!(
                    "event {i} frames [{}, {}] outside [1, {}]",
                    ev.start_frame, ev.end_frame, self.t
                )));
            }
            if ev.concept >= self.concepts.len() {
                return Err(Error::invalid(format!("event {i} names unknown concept {}", ev.concept)));
            }
            if i > 0 && sorted[i - 1].end_frame >= ev.start_frame {
                return Err(Error::invalid("events must not overlap"));
            }
        }
        Ok(())
    }

    /// Smallest pairwise distance among concept centers (and background).
    pub fn min_concept_gap(&self) -> f64 {
        let mut all: Vec<&Vec<f32>> = self.concepts.iter().collect();
        all.push(&self.background);
        let mut min = f64::INFINITY;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let d: f64 = all[i]
                    .iter()
                    .zip(all[j].iter())
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min = min.min(d);
            }
        }
        min
    }

    pub fn duration_sec(&self) -> f64 {
        self.t as f64 / self.fps
    }

    fn active_concept(&self, frame: usize) -> Option<usize> {
        self.events
            .iter()
            .find(|e| e.start_frame <= frame && frame <= e.end_frame)
            .map(|e| e.concept)
    }
}

const CONCEPT_NAMES: [&str; 26] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
];

/// Concept centers paired one-to-one with caption word sequences.
#[derive(Debug, Clone)]
pub struct OracleCodebook {
    pub centers: Vec<Vec<f32>>,
    pub captions: Vec<Vec<u32>>,
    pub vocab: Vocabulary,
}

impl OracleCodebook {
    /// Builds captions of the form "the <name> event occurs" per concept.
    pub fn for_concepts(centers: Vec<Vec<f32>>) -> Result<Self> {
        if centers.len() > CONCEPT_NAMES.len() {
            return Err(Error::invalid(format!(
                "at most {} concepts supported",
                CONCEPT_NAMES.len()
            )));
        }
        let mut words: Vec<String> = vec!["the".into(), "event".into(), "occurs".into()];
        for name in CONCEPT_NAMES.iter().take(centers.len()) {
            words.push((*name).into());
        }
        let vocab = Vocabulary::from_words(words);
        let captions: Vec<Vec<u32>> = (0..centers.len())
            .map(|i| vec![0, 3 + i as u32, 1, 2])
            .collect();
        Ok(Self { centers, captions, vocab })
    }

    pub fn n_concepts(&self) -> usize {
        self.centers.len()
    }

    pub fn caption_text(&self, concept: usize) -> String {
        self.vocab.detokenize(&self.captions[concept])
    }

    /// Concept whose caption exactly matches the given words.
    pub fn concept_of_caption(&self, words: &[u32]) -> Option<usize> {
        self.captions.iter().position(|c| c == words)
    }

    /// Nearest concept to a vector, if within `radius`.
    pub fn nearest_within(&self, v: &[f64], radius: f64) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centers.iter().enumerate() {
            let d: f64 = c
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (*a as f64 - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best.filter(|_| best_d <= radius)
    }
}

/// Detection radius: three noise standard deviations scaled by the
/// dimension, plus half the smallest gap among the concept centers
/// (background included, since it acts as the idle concept).
pub fn detection_radius(spec: &StreamSpec) -> f64 {
    3.0 * spec.noise_sigma * (spec.dim as f64).sqrt() + spec.min_concept_gap() / 2.0
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; the lower bound keeps ln() finite.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Draws the stream and its ground-truth events. Deterministic in the seed.
pub fn gen_stream(spec: &StreamSpec) -> Result<(TokenStream, Vec<TimedEvent>)> {
    spec.validate()?;
    let codebook = OracleCodebook::for_concepts(spec.concepts.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(spec.t);
    for t in 1..=spec.t {
        let center = match spec.active_concept(t) {
            Some(c) => &spec.concepts[c],
            None => &spec.background,
        };
        let mut data = Vec::with_capacity(spec.n_f * spec.dim);
        for _ in 0..spec.n_f {
            for d in 0..spec.dim {
                data.push((center[d] as f64 + spec.noise_sigma * gaussian(&mut rng)) as f32);
            }
        }
        frames.push(TokenFrame::from_flat(spec.n_f, spec.dim, data)?);
    }
    let stream = TokenStream::new(frames, spec.fps)?;

    let mut gt = Vec::new();
    let mut events = spec.events.clone();
    events.sort_by_key(|e| e.start_frame);
    for ev in &events {
        gt.push(TimedEvent::new(
            (ev.start_frame - 1) as f64 / spec.fps,
            ev.end_frame as f64 / spec.fps,
            codebook.captions[ev.concept].clone(),
        )?);
    }
    Ok((stream, gt))
}

/// Per-concept first/last frame whose tokens matched, maintained by the
/// stream driver and consulted by the oracle decoder for event times.
#[derive(Debug, Clone)]
pub struct ConceptActivity {
    first_last: Vec<Option<(usize, usize)>>,
}

impl ConceptActivity {
    pub fn new(n_concepts: usize) -> Self {
        Self { first_last: vec![None; n_concepts] }
    }

    /// Assigns the frame's mean token to a concept, if close enough.
    pub fn observe(&mut self, frame_idx: usize, frame: &TokenFrame, codebook: &OracleCodebook, radius: f64) {
        let dim = frame.dim();
        let mut mean = vec![0.0f64; dim];
        for row in frame.tokens.rows() {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += *v as f64;
            }
        }
        for m in mean.iter_mut() {
            *m /= frame.n_tokens() as f64;
        }
        if let Some(c) = codebook.nearest_within(&mean, radius) {
            let entry = &mut self.first_last[c];
            *entry = match *entry {
                None => Some((frame_idx, frame_idx)),
                Some((first, _)) => Some((first, frame_idx)),
            };
        }
    }

    pub fn span(&self, concept: usize) -> Option<(usize, usize)> {
        self.first_last[concept]
    }
}

/// Emits one event per concept visible in the memory that has finished by
/// the decoding point and is not already in the history. Event times come
/// from the driver-tracked activity spans.
pub fn oracle_decode(
    memory: &MemoryState,
    codebook: &OracleCodebook,
    point_frame: usize,
    history: &[TimedEvent],
    activity: &ConceptActivity,
    radius: f64,
    fps: f64,
    is_final_point: bool,
) -> Vec<TimedEvent> {
    let mut detected = vec![false; codebook.n_concepts()];
    for row in memory.centers.rows() {
        let v: Vec<f64> = row.iter().map(|x| *x as f64).collect();
        if let Some(c) = codebook.nearest_within(&v, radius) {
            detected[c] = true;
        }
    }
    let mut out = Vec::new();
    for (c, hit) in detected.iter().enumerate() {
        if !hit {
            continue;
        }
        let Some((first, last)) = activity.span(c) else { continue };
        // an event still running at a non-final point is left for later
        if !is_final_point && last >= point_frame {
            continue;
        }
        if history.iter().any(|e| e.words == codebook.captions[c]) {
            continue;
        }
        if let Ok(ev) = TimedEvent::new(
            (first - 1) as f64 / fps,
            last as f64 / fps,
            codebook.captions[c].clone(),
        ) {
            out.push(ev);
        }
    }
    out.sort_by(|a, b| a.start_sec.partial_cmp(&b.start_sec).unwrap_or(std::cmp::Ordering::Equal));
    out
}

/// Everything produced by one variant's end-to-end run.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: String,
    pub predictions: Vec<TimedEvent>,
    pub report: EvalReport,
    /// Fraction of ground-truth events whose caption was recovered.
    pub concept_recall: f64,
    pub decoding_points: Vec<usize>,
    pub fallback_frames: u64,
}

/// Streams the spec through one memory variant, decoding at the scheduled
/// points with prefix accumulation, and scores the result.
pub fn run_variant(
    spec: &StreamSpec,
    cfg: &MemoryConfig,
    schedule: &DecodingSchedule,
) -> Result<VariantOutcome> {
    let (stream, gt) = gen_stream(spec)?;
    let codebook = OracleCodebook::for_concepts(spec.concepts.clone())?;
    let radius = detection_radius(spec);
    let dedup_spec = VocabSpec::new(codebook.vocab.len() as u32, 100, spec.duration_sec())?;

    let mut memory = StreamMemory::new(cfg.clone());
    let mut activity = ConceptActivity::new(codebook.n_concepts());
    let mut history: Vec<TimedEvent> = Vec::new();
    let mut point_iter = schedule.points.iter().peekable();

    for (idx, frame) in stream.frames.iter().enumerate() {
        let frame_no = idx + 1;
        memory.push(frame)?;
        activity.observe(frame_no, frame, &codebook, radius);
        if point_iter.peek() == Some(&&frame_no) {
            point_iter.next();
            if let Some(state) = memory.state() {
                let new_events = oracle_decode(
                    state,
                    &codebook,
                    frame_no,
                    &history,
                    &activity,
                    radius,
                    spec.fps,
                    frame_no == spec.t,
                );
                history = scheduler::accumulate_predictions(&history, &new_events, &dedup_spec)?;
            }
        }
    }

    let gt_caps: Vec<EventCaption<u32>> = gt.iter().map(EventCaption::from).collect();
    let pred_caps: Vec<EventCaption<u32>> = history.iter().map(EventCaption::from).collect();
    let corpus = metrics::build_idf(&gt_caps.iter().map(|e| e.words.clone()).collect::<Vec<_>>())?;
    let report = metrics::evaluate(&pred_caps, &gt_caps, &metrics::DEFAULT_THRESHOLDS, &corpus)?;

    let recovered = gt
        .iter()
        .filter(|g| history.iter().any(|p| p.words == g.words))
        .count();
    let concept_recall = if gt.is_empty() { 1.0 } else { recovered as f64 / gt.len() as f64 };

    Ok(VariantOutcome {
        variant: cfg.variant.name().to_string(),
        predictions: history,
        report,
        concept_recall,
        decoding_points: schedule.points.clone(),
        fallback_frames: memory.state().map(|s| s.fallback_frames).unwrap_or(0),
    })
}

/// Runs several memory variants over the same stream and collects their
/// scores side by side.
pub fn run_experiment(
    spec: &StreamSpec,
    variants: &[MemoryConfig],
    schedule: &DecodingSchedule,
) -> Result<Vec<VariantOutcome>> {
    variants.iter().map(|cfg| run_variant(spec, cfg, schedule)).collect()
}

/// Standard planted-stream layout used by the comparison experiments:
/// axis-aligned concept centers at distance 3 from a zero background, and
/// one event per concept with seeded lengths and gaps.
pub fn planted_spec(
    seed: u64,
    t: usize,
    n_f: usize,
    dim: usize,
    n_concepts: usize,
    noise_sigma: f64,
) -> Result<StreamSpec> {
    if n_concepts > dim {
        return Err(Error::invalid(format!(
            "this layout needs dim >= n_concepts, got {dim} < {n_concepts}"
        )));
    }
    let concepts: Vec<Vec<f32>> = (0..n_concepts)
        .map(|i| {
            let mut c = vec![0.0f32; dim];
            c[i] = 3.0;
            c
        })
        .collect();
    let mut layout_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut events = Vec::new();
    let mut cursor = layout_rng.gen_range(1..=2usize);
    for concept in 0..n_concepts {
        let len = layout_rng.gen_range(6..=8usize);
        let end = (cursor + len - 1).min(t);
        if cursor > t {
            break;
        }
        events.push(PlantedEvent { start_frame: cursor, end_frame: end, concept });
        cursor = end + 1 + layout_rng.gen_range(1..=2usize);
    }
    if events.len() < n_concepts {
        return Err(Error::invalid(format!(
            "t = {t} too short to place {n_concepts} events"
        )));
    }
    let spec = StreamSpec {
        t,
        n_f,
        dim,
        fps: 1.0,
        events,
        concepts,
        background: vec![0.0; dim],
        noise_sigma,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryVariant;
    use crate::scheduler::make_decoding_points;

    fn small_spec(noise: f64, seed: u64) -> StreamSpec {
        StreamSpec {
            t: 24,
            n_f: 2,
            dim: 4,
            fps: 1.0,
            events: vec![
                PlantedEvent { start_frame: 3, end_frame: 8, concept: 0 },
                PlantedEvent { start_frame: 12, end_frame: 18, concept: 1 },
            ],
            concepts: vec![vec![3.0, 0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0, 0.0]],
            background: vec![0.0; 4],
            noise_sigma: noise,
            seed,
        }
    }

    #[test]
    fn zero_noise_tokens_equal_centers() {
        let spec = small_spec(0.0, 1);
        let (stream, gt) = gen_stream(&spec).unwrap();
        assert_eq!(gt.len(), 2);
        for (idx, frame) in stream.frames.iter().enumerate() {
            let t = idx + 1;
            let expect: Vec<f32> = match spec.active_concept(t) {
                Some(c) => spec.concepts[c].clone(),
                None => spec.background.clone(),
            };
            for row in frame.tokens.rows() {
                assert_eq!(row.to_vec(), expect, "frame {t}");
            }
        }
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let spec = small_spec(0.1, 7);
        let (a, _) = gen_stream(&spec).unwrap();
        let (b, _) = gen_stream(&spec).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.tokens, fb.tokens);
        }
    }

    #[test]
    fn overlapping_events_rejected() {
        let mut spec = small_spec(0.0, 1);
        spec.events[1].start_frame = 8;
        assert!(matches!(gen_stream(&spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn separation_invariant_enforced() {
        let mut spec = small_spec(0.6, 1);
        // gap between concepts is 3*sqrt(2) ~ 4.24 < 6 * 0.75
        spec.noise_sigma = 0.75;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn segment_means_obey_law_of_large_numbers() {
        let spec = small_spec(0.2, 5);
        let (stream, _) = gen_stream(&spec).unwrap();
        for ev in &spec.events {
            let n_frames = ev.end_frame - ev.start_frame + 1;
            let n_tokens = (n_frames * spec.n_f) as f64;
            let center = &spec.concepts[ev.concept];
            for d in 0..spec.dim {
                let mut mean = 0.0f64;
                for t in ev.start_frame..=ev.end_frame {
                    for row in stream.frames[t - 1].tokens.rows() {
                        mean += row[d] as f64;
                    }
                }
                mean /= n_tokens;
                let bound = 3.0 * spec.noise_sigma / n_tokens.sqrt();
                assert!(
                    (mean - center[d] as f64).abs() < bound,
                    "dim {d}: mean {mean} vs center {} (bound {bound})",
                    center[d]
                );
            }
        }
    }

    #[test]
    fn oracle_detects_exact_center_and_ignores_background() {
        let spec = small_spec(0.05, 2);
        let codebook = OracleCodebook::for_concepts(spec.concepts.clone()).unwrap();
        let radius = detection_radius(&spec);

        let mut activity = ConceptActivity::new(2);
        activity.first_last[0] = Some((3, 8));

        let mem = MemoryState::from_parts(
            ndarray::arr2(&[[3.0f32, 0.0, 0.0, 0.0]]),
            vec![1.0],
            1,
        )
        .unwrap();
        let events = oracle_decode(&mem, &codebook, 20, &[], &activity, radius, 1.0, false);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].words, codebook.captions[0]);
        assert_eq!(events[0].start_sec, 2.0);
        assert_eq!(events[0].end_sec, 8.0);

        let bg = MemoryState::from_parts(ndarray::arr2(&[[0.0f32, 0.0, 0.0, 0.0]]), vec![1.0], 1).unwrap();
        assert!(oracle_decode(&bg, &codebook, 20, &[], &activity, radius, 1.0, false).is_empty());
    }

    #[test]
    fn history_suppresses_duplicates() {
        let spec = small_spec(0.05, 2);
        let codebook = OracleCodebook::for_concepts(spec.concepts.clone()).unwrap();
        let radius = detection_radius(&spec);
        let mut activity = ConceptActivity::new(2);
        activity.first_last[0] = Some((3, 8));
        let mem = MemoryState::from_parts(ndarray::arr2(&[[3.0f32, 0.0, 0.0, 0.0]]), vec![1.0], 1).unwrap();
        let history = vec![TimedEvent::new(2.0, 8.0, codebook.captions[0].clone()).unwrap()];
        let events = oracle_decode(&mem, &codebook, 20, &history, &activity, radius, 1.0, false);
        assert!(events.is_empty());
    }

    #[test]
    fn three_event_stream_recovered_end_to_end() {
        let spec = StreamSpec {
            t: 64,
            n_f: 2,
            dim: 8,
            fps: 1.0,
            events: vec![
                PlantedEvent { start_frame: 4, end_frame: 14, concept: 0 },
                PlantedEvent { start_frame: 20, end_frame: 32, concept: 1 },
                PlantedEvent { start_frame: 40, end_frame: 52, concept: 2 },
            ],
            concepts: (0..3)
                .map(|i| {
                    let mut c = vec![0.0f32; 8];
                    c[i] = 3.0;
                    c
                })
                .collect(),
            background: vec![0.0; 8],
            noise_sigma: 0.05,
            seed: 11,
        };
        let cfg = MemoryConfig::clustering(8, 2);
        let schedule = make_decoding_points(64, 32).unwrap();
        let out = run_variant(&spec, &cfg, &schedule).unwrap();
        assert_eq!(out.concept_recall, 1.0, "predictions: {:?}", out.predictions);
        assert_eq!(out.predictions.len(), 3);
    }

    #[test]
    fn zero_noise_memory_contains_concepts_exactly() {
        let spec = small_spec(0.0, 3);
        let (stream, _) = gen_stream(&spec).unwrap();
        let cfg = MemoryConfig::clustering(8, 2);
        let mut mem = StreamMemory::new(cfg);
        for frame in &stream.frames {
            mem.push(frame).unwrap();
        }
        let state = mem.state().unwrap();
        for concept in &spec.concepts {
            let found = state.centers.rows().into_iter().any(|row| {
                row.iter().zip(concept.iter()).all(|(a, b)| a == b)
            });
            assert!(found, "concept {concept:?} not held exactly; centers: {:?}", state.centers);
        }
    }

    #[test]
    fn single_long_event_perfect_for_all_variants() {
        let spec = StreamSpec {
            t: 64,
            n_f: 4,
            dim: 8,
            fps: 1.0,
            events: vec![PlantedEvent { start_frame: 2, end_frame: 57, concept: 0 }],
            concepts: vec![{
                let mut c = vec![0.0f32; 8];
                c[0] = 3.0;
                c
            }],
            background: vec![0.0; 8],
            noise_sigma: 0.05,
            seed: 21,
        };
        let schedule = make_decoding_points(64, 32).unwrap();
        let variants = [
            MemoryConfig { k: 16, tau: 2, momentum: true, variant: MemoryVariant::Clustering },
            MemoryConfig { k: 16, tau: 1, momentum: true, variant: MemoryVariant::Ema { decay: 0.9 } },
            MemoryConfig { k: 16, tau: 1, momentum: true, variant: MemoryVariant::SpatialPool },
            MemoryConfig { k: 16, tau: 1, momentum: true, variant: MemoryVariant::TemporalPool },
            MemoryConfig { k: 16, tau: 1, momentum: true, variant: MemoryVariant::PairwiseMerge },
            MemoryConfig { k: 16, tau: 1, momentum: true, variant: MemoryVariant::None },
        ];
        for out in run_experiment(&spec, &variants, &schedule).unwrap() {
            assert_eq!(out.concept_recall, 1.0, "variant {} failed", out.variant);
        }
    }

    #[test]
    fn experiment_is_reproducible() {
        let spec = planted_spec(42, 64, 4, 8, 5, 0.05).unwrap();
        let schedule = make_decoding_points(64, 32).unwrap();
        let cfg = MemoryConfig::clustering(16, 2);
        let a = run_variant(&spec, &cfg, &schedule).unwrap();
        let b = run_variant(&spec, &cfg, &schedule).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn clustering_beats_temporal_pooling_on_planted_streams() {
        let schedule = make_decoding_points(64, 32).unwrap();
        let clustering = MemoryConfig::clustering(16, 2);
        let pooling = MemoryConfig { k: 16, tau: 1, momentum: true, variant: MemoryVariant::TemporalPool };
        let mut strict = 0;
        for seed in 0..5u64 {
            let spec = planted_spec(seed, 64, 4, 8, 5, 0.05).unwrap();
            let c = run_variant(&spec, &clustering, &schedule).unwrap();
            let p = run_variant(&spec, &pooling, &schedule).unwrap();
            assert!(
                c.concept_recall >= p.concept_recall,
                "seed {seed}: clustering {} < pooling {}",
                c.concept_recall,
                p.concept_recall
            );
            if c.concept_recall > p.concept_recall {
                strict += 1;
            }
        }
        assert!(strict >= 3, "clustering strictly better on only {strict}/5 seeds");
    }
}
