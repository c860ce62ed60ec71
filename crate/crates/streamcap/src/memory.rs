//! Fixed-size clustering memory over token streams.
//!
//! The memory summarizes everything seen so far as `K` weighted cluster
//! centers. Each incoming frame is merged by a few weighted K-means
//! iterations over the concatenation of the current centers and the new
//! tokens; per-center weights count how many tokens were merged into each
//! center, so heavily populated centers move slowly. The per-frame cost
//! depends only on `(K, N_f, D, tau)`, never on how much has been seen.
//!
//! Baseline memories used for comparison (EMA, spatial/temporal pooling,
//! pairwise merging, unbounded concatenation) live here too, along with a
//! deliberately naive reference implementation of the clustering update
//! ([`oracle_weighted_kmeans`]) used by the test suites.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::stream::TokenFrame;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SMEM";

/// Which memory mechanism a stream uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryVariant {
    /// Weighted K-means clustering memory; fixed size `K`.
    Clustering,
    /// Exponential moving average of frame tokens; size `N_f`.
    Ema { decay: f64 },
    /// One mean token appended per frame; grows with the stream.
    SpatialPool,
    /// Positionwise running mean over frames; size `N_f`.
    TemporalPool,
    /// Greedy closest-pair merging bank; fixed size `K`.
    PairwiseMerge,
    /// No compression: all tokens kept.
    None,
}

impl MemoryVariant {
    pub fn name(&self) -> &'static str {
        match self {
            MemoryVariant::Clustering => "clustering",
            MemoryVariant::Ema { .. } => "ema",
            MemoryVariant::SpatialPool => "spatial_pool",
            MemoryVariant::TemporalPool => "temporal_pool",
            MemoryVariant::PairwiseMerge => "pairwise_merge",
            MemoryVariant::None => "none",
        }
    }
}

/// Configuration of a memory instance.
#[derive(Debug, Clone)]
pub struct MemoryConfig {
    /// Memory size in tokens. For the clustering variant this must be a
    /// positive multiple of the per-frame token count.
    pub k: usize,
    /// Number of K-means iterations per update.
    pub tau: usize,
    /// Weighted-mean centroids when true (the default). When false the
    /// centroid numerator ignores per-token weights while the denominator
    /// still uses them, which reproduces the unweighted update for
    /// comparison runs.
    pub momentum: bool,
    pub variant: MemoryVariant,
}

impl MemoryConfig {
    pub fn clustering(k: usize, tau: usize) -> Self {
        Self { k, tau, momentum: true, variant: MemoryVariant::Clustering }
    }

    /// Checks the config against a frame shape.
    pub fn validate(&self, n_f: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("memory size K must be positive"));
        }
        if self.tau == 0 {
            return Err(Error::invalid("tau must be a positive iteration count"));
        }
        match self.variant {
            MemoryVariant::Clustering => {
                if self.k % n_f != 0 {
                    return Err(Error::invalid(format!(
                        "K = {} must be a positive multiple of N_f = {n_f}",
                        self.k
                    )));
                }
            }
            MemoryVariant::Ema { decay } => {
                if !(decay > 0.0 && decay < 1.0) {
                    return Err(Error::invalid(format!("EMA decay must lie in (0, 1), got {decay}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Frames needed before the clustering memory is initialized.
    pub fn init_frames(&self, n_f: usize) -> usize {
        self.k / n_f
    }
}

/// Cluster centers plus per-center weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    /// Center matrix, shape `(K, D)`.
    pub centers: Array2<f32>,
    /// Nonnegative per-center weights, length `K`.
    pub weights: Vec<f32>,
    /// Frames consumed so far, including the initialization frames.
    pub frames_seen: usize,
    /// Number of updates in which at least one empty-cluster fallback fired.
    pub fallback_frames: u64,
}

impl MemoryState {
    pub fn from_parts(centers: Array2<f32>, weights: Vec<f32>, frames_seen: usize) -> Result<Self> {
        if centers.nrows() != weights.len() {
            return Err(Error::invalid(format!(
                "{} centers but {} weights",
                centers.nrows(),
                weights.len()
            )));
        }
        if !centers.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("centers contain non-finite values"));
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(Self { centers, weights, frames_seen, fallback_frames: 0 })
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().map(|w| *w as f64).sum()
    }

    /// Writes the `SMEM` snapshot layout: magic, u32 `K`, u32 `D`,
    /// `K * D` f32 centers, `K` f32 weights. All little-endian.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(self.k() as u32).to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        for v in self.centers.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.weights {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot written by [`MemoryState::write_snapshot`].
    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("snapshot too short for magic".into()))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format(format!(
                "bad snapshot magic {:?}, expected {:?}",
                magic, SNAPSHOT_MAGIC
            )));
        }
        let k = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; (k * d + k) * 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("snapshot payload truncated".into()))?;
        let vals: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let centers = Array2::from_shape_vec((k, d), vals[..k * d].to_vec())
            .map_err(|e| Error::Format(format!("bad snapshot shape: {e}")))?;
        MemoryState::from_parts(centers, vals[k * d..].to_vec(), 0)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("snapshot header truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

/// Initializes a clustering memory by stacking the first `K / N_f` frames
/// verbatim, with unit weights.
pub fn init_memory(frames: &[TokenFrame], cfg: &MemoryConfig) -> Result<MemoryState> {
    if frames.is_empty() {
        return Err(Error::invalid("initialization requires at least one frame"));
    }
    let n_f = frames[0].n_tokens();
    let dim = frames[0].dim();
    cfg.validate(n_f)?;
    let need = cfg.init_frames(n_f);
    if frames.len() != need {
        return Err(Error::invalid(format!(
            "initialization needs exactly {need} frames (K = {}, N_f = {n_f}), got {}",
            cfg.k,
            frames.len()
        )));
    }
    let mut centers = Array2::<f32>::zeros((cfg.k, dim));
    for (i, frame) in frames.iter().enumerate() {
        if frame.n_tokens() != n_f || frame.dim() != dim {
            return Err(Error::invalid(format!("frame {i} shape differs from frame 0")));
        }
        centers
            .slice_mut(ndarray::s![i * n_f..(i + 1) * n_f, ..])
            .assign(&frame.tokens);
    }
    Ok(MemoryState {
        centers,
        weights: vec![1.0; cfg.k],
        frames_seen: need,
        fallback_frames: 0,
    })
}

/// Squared Euclidean distances between every row of `x` and every row of
/// `c`; entry `(i, k)` is `|x_i - c_k|^2`. Accumulates in f64.
pub fn pairwise_sq_dist(x: &ArrayView2<f32>, c: &ArrayView2<f32>) -> Result<Array2<f64>> {
    if x.ncols() != c.ncols() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.ncols(),
            c.ncols()
        )));
    }
    let mut d = Array2::<f64>::zeros((x.nrows(), c.nrows()));
    for (i, xi) in x.rows().into_iter().enumerate() {
        for (k, ck) in c.rows().into_iter().enumerate() {
            let mut acc = 0.0f64;
            for (a, b) in xi.iter().zip(ck.iter()) {
                let diff = *a as f64 - *b as f64;
                acc += diff * diff;
            }
            d[(i, k)] = acc;
        }
    }
    Ok(d)
}

/// One-hot assignment of each row to its nearest center. Ties break toward
/// the lowest column index.
pub fn assign(dist: &ArrayView2<f64>) -> Array2<f64> {
    let mut onehot = Array2::<f64>::zeros(dist.dim());
    for (i, row) in dist.rows().into_iter().enumerate() {
        let mut best = 0usize;
        let mut best_v = f64::INFINITY;
        for (k, v) in row.iter().enumerate() {
            if *v < best_v {
                best_v = *v;
                best = k;
            }
        }
        onehot[(i, best)] = 1.0;
    }
    onehot
}

/// Per-iteration record of a clustering update: the assignment of each of
/// the `K + N_f` tokens and which centers kept their previous value because
/// nothing was assigned to them.
#[derive(Debug, Clone)]
pub(crate) struct IterationPlan {
    pub assign: Vec<usize>,
    pub fallback: Vec<bool>,
}

pub(crate) struct UpdateOutcome {
    pub centers: Array2<f64>,
    pub weights: Vec<f64>,
    pub plan: Vec<IterationPlan>,
}

/// Shared forward pass of the clustering update, in f64.
///
/// Distances are evaluated through the expansion `|x|^2 + |c|^2 - 2 x.c`
/// so the inner loop is a single matrix product; only `|c|^2 - 2 x.c`
/// matters for the argmin.
pub(crate) fn clustering_forward(
    x: &Array2<f64>,
    token_weights: &[f64],
    init_centers: &Array2<f64>,
    init_center_weights: &[f64],
    tau: usize,
    momentum: bool,
) -> UpdateOutcome {
    let k = init_centers.nrows();
    let dim = init_centers.ncols();
    let n = x.nrows();
    let mut centers = init_centers.clone();
    let mut cur_weights = init_center_weights.to_vec();
    let mut plan = Vec::with_capacity(tau);

    for _ in 0..tau {
        let gram = x.dot(&centers.t()); // (n, K)
        let center_norms: Vec<f64> = centers
            .rows()
            .into_iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        let mut assignment = vec![0usize; n];
        for i in 0..n {
            let mut best = 0usize;
            let mut best_v = f64::INFINITY;
            for (j, cn) in center_norms.iter().enumerate() {
                let score = cn - 2.0 * gram[(i, j)];
                if score < best_v {
                    best_v = score;
                    best = j;
                }
            }
            assignment[i] = best;
        }

        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut wsum = vec![0.0f64; k];
        for (i, &a) in assignment.iter().enumerate() {
            let w = token_weights[i];
            wsum[a] += w;
            let coef = if momentum { w } else { 1.0 };
            let mut row = sums.row_mut(a);
            for (s, v) in row.iter_mut().zip(x.row(i).iter()) {
                *s += coef * v;
            }
        }

        let mut fallback = vec![false; k];
        let mut next = Array2::<f64>::zeros((k, dim));
        let mut next_weights = vec![0.0f64; k];
        for j in 0..k {
            if wsum[j] == 0.0 {
                fallback[j] = true;
                next.row_mut(j).assign(&centers.row(j));
                next_weights[j] = cur_weights[j];
            } else {
                let inv = 1.0 / wsum[j];
                let mut row = next.row_mut(j);
                for (t, s) in row.iter_mut().zip(sums.row(j).iter()) {
                    *t = s * inv;
                }
                next_weights[j] = wsum[j];
            }
        }
        centers = next;
        cur_weights = next_weights;
        plan.push(IterationPlan { assign: assignment, fallback });
    }

    UpdateOutcome { centers, weights: cur_weights, plan }
}

pub(crate) fn concat_input(state: &MemoryState, frame: &TokenFrame) -> (Array2<f64>, Vec<f64>) {
    let k = state.k();
    let n_f = frame.n_tokens();
    let dim = state.dim();
    let mut x = Array2::<f64>::zeros((k + n_f, dim));
    for (i, row) in state.centers.rows().into_iter().enumerate() {
        for (t, v) in x.row_mut(i).iter_mut().zip(row.iter()) {
            *t = *v as f64;
        }
    }
    for (i, row) in frame.tokens.rows().into_iter().enumerate() {
        for (t, v) in x.row_mut(k + i).iter_mut().zip(row.iter()) {
            *t = *v as f64;
        }
    }
    let mut w = Vec::with_capacity(k + n_f);
    w.extend(state.weights.iter().map(|v| *v as f64));
    w.extend(std::iter::repeat(1.0).take(n_f));
    (x, w)
}

pub(crate) fn validate_update(state: &MemoryState, frame: &TokenFrame, cfg: &MemoryConfig) -> Result<()> {
    if cfg.k != state.k() {
        return Err(Error::invalid(format!(
            "config K = {} does not match state K = {}",
            cfg.k,
            state.k()
        )));
    }
    if frame.dim() != state.dim() {
        return Err(Error::invalid(format!(
            "frame dimension {} does not match memory dimension {}",
            frame.dim(),
            state.dim()
        )));
    }
    if cfg.tau == 0 {
        return Err(Error::invalid("tau must be a positive iteration count"));
    }
    if state.frames_seen * frame.n_tokens() < cfg.k {
        return Err(Error::State(format!(
            "memory not initialized: {} frames seen, need {}",
            state.frames_seen,
            cfg.init_frames(frame.n_tokens())
        )));
    }
    if !frame.tokens.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("frame contains non-finite values"));
    }
    Ok(())
}

/// Merges one frame into a clustering memory.
///
/// Runs `tau` weighted K-means iterations over the concatenation of the
/// current centers (carrying their weights) and the frame tokens (weight 1
/// each). Centers that attract no token keep their previous value and
/// weight for that iteration.
pub fn update_memory(state: &MemoryState, frame: &TokenFrame, cfg: &MemoryConfig) -> Result<MemoryState> {
    validate_update(state, frame, cfg)?;
    let (x, w) = concat_input(state, frame);
    let init64 = state.centers.mapv(|v| v as f64);
    let init_w: Vec<f64> = state.weights.iter().map(|v| *v as f64).collect();
    let out = clustering_forward(&x, &w, &init64, &init_w, cfg.tau, cfg.momentum);
    let fallback_fired = out.plan.iter().any(|p| p.fallback.iter().any(|f| *f));
    if fallback_fired {
        log::debug!("empty-cluster fallback at frame {}", state.frames_seen + 1);
    }
    Ok(MemoryState {
        centers: out.centers.mapv(|v| v as f32),
        weights: out.weights.iter().map(|v| *v as f32).collect(),
        frames_seen: state.frames_seen + 1,
        fallback_frames: state.fallback_frames + u64::from(fallback_fired),
    })
}

/// Naive reference implementation of the clustering update loop, written
/// as explicit scalar loops. Used by the test suites to cross-check
/// [`update_memory`]; not intended for production streams.
pub fn oracle_weighted_kmeans(
    x: &Array2<f32>,
    w: &[f32],
    init_centers: &Array2<f32>,
    tau: usize,
    momentum: bool,
) -> (Array2<f32>, Vec<f32>) {
    let n = x.nrows();
    let k = init_centers.nrows();
    let dim = init_centers.ncols();
    let mut centers: Vec<Vec<f64>> = init_centers
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| *v as f64).collect())
        .collect();
    // Entering weights; only consulted when a cluster goes empty. The first
    // iteration falls back to the weights of the matching input rows.
    let mut weights: Vec<f64> = (0..k).map(|j| w[j] as f64).collect();

    for _ in 0..tau {
        let mut assignment = vec![0usize; n];
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let mut d = 0.0f64;
                for t in 0..dim {
                    let diff = x[(i, t)] as f64 - c[t];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assignment[i] = best;
        }

        let mut new_centers = vec![vec![0.0f64; dim]; k];
        let mut wsum = vec![0.0f64; k];
        for i in 0..n {
            let j = assignment[i];
            let wi = w[i] as f64;
            wsum[j] += wi;
            let coef = if momentum { wi } else { 1.0 };
            for t in 0..dim {
                new_centers[j][t] += coef * x[(i, t)] as f64;
            }
        }
        for j in 0..k {
            if wsum[j] == 0.0 {
                new_centers[j] = centers[j].clone();
            } else {
                for t in 0..dim {
                    new_centers[j][t] /= wsum[j];
                }
                weights[j] = wsum[j];
            }
        }
        centers = new_centers;
    }

    let mut out = Array2::<f32>::zeros((k, dim));
    for j in 0..k {
        for t in 0..dim {
            out[(j, t)] = centers[j][t] as f32;
        }
    }
    (out, weights.iter().map(|v| *v as f32).collect())
}

/// Exponential-moving-average baseline: one shadow token per frame token.
pub fn ema_update(state: &MemoryState, frame: &TokenFrame, decay: f64) -> Result<MemoryState> {
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::invalid(format!("decay must lie in (0, 1), got {decay}")));
    }
    if state.k() != frame.n_tokens() || state.dim() != frame.dim() {
        return Err(Error::invalid(format!(
            "EMA memory must match the frame shape: memory ({}, {}), frame ({}, {})",
            state.k(),
            state.dim(),
            frame.n_tokens(),
            frame.dim()
        )));
    }
    let mut centers = state.centers.clone();
    for (mut c, f) in centers.rows_mut().into_iter().zip(frame.tokens.rows()) {
        for (cv, fv) in c.iter_mut().zip(f.iter()) {
            *cv = (decay * *cv as f64 + (1.0 - decay) * *fv as f64) as f32;
        }
    }
    Ok(MemoryState {
        centers,
        weights: state.weights.clone(),
        frames_seen: state.frames_seen + 1,
        fallback_frames: state.fallback_frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Spatial,
    Temporal,
}

/// Pooling baselines: spatial appends the mean token of the frame,
/// temporal keeps a positionwise running mean across frames.
pub fn pool_update(state: &MemoryState, frame: &TokenFrame, mode: PoolMode) -> Result<MemoryState> {
    match mode {
        PoolMode::Spatial => {
            if state.k() > 0 && state.dim() != frame.dim() {
                return Err(Error::invalid("frame dimension does not match memory"));
            }
            let mean = frame.tokens.map_axis(Axis(0), |col| {
                (col.iter().map(|v| *v as f64).sum::<f64>() / col.len() as f64) as f32
            });
            let mut centers = Array2::<f32>::zeros((state.k() + 1, frame.dim()));
            if state.k() > 0 {
                centers.slice_mut(ndarray::s![..state.k(), ..]).assign(&state.centers);
            }
            centers.row_mut(state.k()).assign(&mean);
            let mut weights = state.weights.clone();
            weights.push(1.0);
            Ok(MemoryState {
                centers,
                weights,
                frames_seen: state.frames_seen + 1,
                fallback_frames: state.fallback_frames,
            })
        }
        PoolMode::Temporal => {
            if state.k() != frame.n_tokens() || state.dim() != frame.dim() {
                return Err(Error::invalid(
                    "temporal pooling memory must match the frame shape",
                ));
            }
            let n = state.frames_seen as f64;
            let mut centers = state.centers.clone();
            for (mut c, f) in centers.rows_mut().into_iter().zip(frame.tokens.rows()) {
                for (cv, fv) in c.iter_mut().zip(f.iter()) {
                    *cv = ((*cv as f64 * n + *fv as f64) / (n + 1.0)) as f32;
                }
            }
            Ok(MemoryState {
                centers,
                weights: state.weights.clone(),
                frames_seen: state.frames_seen + 1,
                fallback_frames: state.fallback_frames,
            })
        }
    }
}

/// Greedy token-merging baseline: appends incoming tokens one at a time
/// and, whenever the bank exceeds `k` rows, replaces the closest pair with
/// its weight-weighted mean.
pub fn pairwise_merge_update(
    state: &MemoryState,
    frame: Option<&TokenFrame>,
    k: usize,
) -> Result<MemoryState> {
    if k == 0 {
        return Err(Error::invalid("bank size must be positive"));
    }
    if let Some(f) = frame {
        if state.k() > 0 && f.dim() != state.dim() {
            return Err(Error::invalid("frame dimension does not match memory"));
        }
    }
    let dim = frame.map(|f| f.dim()).unwrap_or(state.dim());
    let mut bank: Vec<Vec<f64>> = state
        .centers
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| *v as f64).collect())
        .collect();
    let mut weights: Vec<f64> = state.weights.iter().map(|v| *v as f64).collect();

    let absorb = |bank: &mut Vec<Vec<f64>>, weights: &mut Vec<f64>| {
        while bank.len() > k {
            let (a, b) = closest_pair(bank);
            let (wa, wb) = (weights[a], weights[b]);
            let total = wa + wb;
            for t in 0..dim {
                bank[a][t] = (wa * bank[a][t] + wb * bank[b][t]) / total;
            }
            weights[a] = total;
            bank.remove(b);
            weights.remove(b);
        }
    };

    if let Some(f) = frame {
        for row in f.tokens.rows() {
            bank.push(row.iter().map(|v| *v as f64).collect());
            weights.push(1.0);
            absorb(&mut bank, &mut weights);
        }
    }
    absorb(&mut bank, &mut weights);

    let mut centers = Array2::<f32>::zeros((bank.len(), dim));
    for (i, row) in bank.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            centers[(i, t)] = *v as f32;
        }
    }
    Ok(MemoryState {
        centers,
        weights: weights.iter().map(|v| *v as f32).collect(),
        frames_seen: state.frames_seen + usize::from(frame.is_some()),
        fallback_frames: state.fallback_frames,
    })
}

/// Lowest-index pair with minimal squared distance.
fn closest_pair(bank: &[Vec<f64>]) -> (usize, usize) {
    let mut best = (0usize, 1usize);
    let mut best_d = f64::INFINITY;
    for i in 0..bank.len() {
        for j in i + 1..bank.len() {
            let d: f64 = bank[i]
                .iter()
                .zip(bank[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}

/// Owns one stream's memory and hides per-variant initialization:
/// clustering buffers the first `K / N_f` frames, the other variants
/// bootstrap from the first frame.
#[derive(Debug, Clone)]
pub struct StreamMemory {
    cfg: MemoryConfig,
    buffer: Vec<TokenFrame>,
    state: Option<MemoryState>,
    frames_pushed: usize,
}

impl StreamMemory {
    pub fn new(cfg: MemoryConfig) -> Self {
        Self { cfg, buffer: Vec::new(), state: None, frames_pushed: 0 }
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.cfg
    }

    pub fn frames_pushed(&self) -> usize {
        self.frames_pushed
    }

    /// The memory state, once initialization has completed.
    pub fn state(&self) -> Option<&MemoryState> {
        self.state.as_ref()
    }

    pub fn push(&mut self, frame: &TokenFrame) -> Result<()> {
        if self.frames_pushed == 0 {
            self.cfg.validate(frame.n_tokens())?;
        }
        match self.cfg.variant {
            MemoryVariant::Clustering => match self.state.take() {
                Some(state) => {
                    self.state = Some(update_memory(&state, frame, &self.cfg)?);
                }
                None => {
                    self.buffer.push(frame.clone());
                    if self.buffer.len() == self.cfg.init_frames(frame.n_tokens()) {
                        self.state = Some(init_memory(&self.buffer, &self.cfg)?);
                        self.buffer.clear();
                    }
                }
            },
            MemoryVariant::Ema { decay } => match self.state.take() {
                Some(state) => self.state = Some(ema_update(&state, frame, decay)?),
                None => {
                    self.state = Some(MemoryState::from_parts(
                        frame.tokens.clone(),
                        vec![1.0; frame.n_tokens()],
                        1,
                    )?);
                }
            },
            MemoryVariant::SpatialPool => {
                let state = match self.state.take() {
                    Some(s) => s,
                    None => MemoryState::from_parts(Array2::zeros((0, frame.dim())), vec![], 0)?,
                };
                self.state = Some(pool_update(&state, frame, PoolMode::Spatial)?);
            }
            MemoryVariant::TemporalPool => match self.state.take() {
                Some(state) => self.state = Some(pool_update(&state, frame, PoolMode::Temporal)?),
                None => {
                    self.state = Some(MemoryState::from_parts(
                        frame.tokens.clone(),
                        vec![1.0; frame.n_tokens()],
                        1,
                    )?);
                }
            },
            MemoryVariant::PairwiseMerge => {
                let state = match self.state.take() {
                    Some(s) => s,
                    None => MemoryState::from_parts(Array2::zeros((0, frame.dim())), vec![], 0)?,
                };
                self.state = Some(pairwise_merge_update(&state, Some(frame), self.cfg.k)?);
            }
            MemoryVariant::None => {
                let state = match self.state.take() {
                    Some(s) => s,
                    None => MemoryState::from_parts(Array2::zeros((0, frame.dim())), vec![], 0)?,
                };
                let mut centers = Array2::<f32>::zeros((state.k() + frame.n_tokens(), frame.dim()));
                if state.k() > 0 {
                    centers.slice_mut(ndarray::s![..state.k(), ..]).assign(&state.centers);
                }
                centers
                    .slice_mut(ndarray::s![state.k().., ..])
                    .assign(&frame.tokens);
                let mut weights = state.weights;
                weights.extend(std::iter::repeat(1.0).take(frame.n_tokens()));
                self.state = Some(MemoryState {
                    centers,
                    weights,
                    frames_seen: state.frames_seen + 1,
                    fallback_frames: state.fallback_frames,
                });
            }
        }
        self.frames_pushed += 1;
        Ok(())
    }
}
