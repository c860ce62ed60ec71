//! Backward semantics of the clustering update.
//!
//! Once the per-iteration assignments are fixed, the update is a linear map
//! from the concatenated input `X = [centers; frame]` to the new centers:
//! `centers_out = A X`. Gradients flow through that map only — never
//! through the assignments or the per-center weights. This module builds
//! the composed `A` across all iterations, applies its transpose to
//! cotangents, and checks the whole construction against central finite
//! differences evaluated with the assignments frozen.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::memory::{self, MemoryConfig, MemoryState};
use crate::stream::TokenFrame;

/// The update seen as a single linear map over the original input.
#[derive(Debug, Clone)]
pub struct LinearizedUpdate {
    /// Composed weight matrix across all iterations, shape `(K, K + N_f)`.
    /// With weighted means and no empty clusters each row is a convex
    /// combination: nonnegative entries summing to 1.
    pub a: Array2<f64>,
    /// Concatenated input `[centers; frame tokens]`, shape `(K + N_f, D)`.
    pub x: Array2<f64>,
}

/// Runs the memory update and additionally returns the composed linear map,
/// such that `A X` reproduces the updated centers.
pub fn forward_linearized(
    state: &MemoryState,
    frame: &TokenFrame,
    cfg: &MemoryConfig,
) -> Result<(MemoryState, LinearizedUpdate)> {
    memory::validate_update(state, frame, cfg)?;
    let (x, w) = memory::concat_input(state, frame);
    let init64 = state.centers.mapv(|v| v as f64);
    let init_w: Vec<f64> = state.weights.iter().map(|v| *v as f64).collect();
    let out = memory::clustering_forward(&x, &w, &init64, &init_w, cfg.tau, cfg.momentum);

    let k = state.k();
    let n = x.nrows();
    // G maps the fixed input X to the centers after each iteration. Before
    // the loop the centers are the first K rows of X. Every iteration
    // recomputes its centers as weighted means of X rows, so a row of G is
    // simply that iteration's mean coefficients; a center that attracted
    // nothing keeps its previous row.
    let mut g = Array2::<f64>::zeros((k, n));
    for j in 0..k {
        g[(j, j)] = 1.0;
    }
    for plan in &out.plan {
        let mut wsum = vec![0.0f64; k];
        for (i, &a) in plan.assign.iter().enumerate() {
            wsum[a] += w[i];
        }
        let mut next = Array2::<f64>::zeros((k, n));
        for j in 0..k {
            if plan.fallback[j] {
                next.row_mut(j).assign(&g.row(j));
            }
        }
        for (i, &a) in plan.assign.iter().enumerate() {
            if plan.fallback[a] {
                continue;
            }
            let coef = if cfg.momentum { w[i] } else { 1.0 };
            next[(a, i)] = coef / wsum[a];
        }
        g = next;
    }

    let fallback_fired = out.plan.iter().any(|p| p.fallback.iter().any(|f| *f));
    let new_state = MemoryState {
        centers: out.centers.mapv(|v| v as f32),
        weights: out.weights.iter().map(|v| *v as f32).collect(),
        frames_seen: state.frames_seen + 1,
        fallback_frames: state.fallback_frames + u64::from(fallback_fired),
    };
    Ok((new_state, LinearizedUpdate { a: g, x }))
}

/// Pulls a cotangent on the output centers back onto the concatenated
/// input: returns `A^T v`. The map `A` is held constant.
pub fn memory_vjp(lin: &LinearizedUpdate, cotangent: &Array2<f64>) -> Result<Array2<f64>> {
    if cotangent.nrows() != lin.a.nrows() || cotangent.ncols() != lin.x.ncols() {
        return Err(Error::invalid(format!(
            "cotangent shape ({}, {}) does not match centers ({}, {})",
            cotangent.nrows(),
            cotangent.ncols(),
            lin.a.nrows(),
            lin.x.ncols()
        )));
    }
    Ok(lin.a.t().dot(cotangent))
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Trials discarded because the perturbation changed an assignment.
    pub flipped_assignments: usize,
}

/// Compares [`memory_vjp`] against central finite differences of the
/// frozen-assignment forward pass.
///
/// Each trial perturbs one random entry of `X` by `±epsilon`, recomputes
/// the centers with the original assignments, and differentiates a random
/// scalar projection. Trials whose perturbation would flip an assignment
/// (checked by re-running the unfrozen pass) are discarded and counted.
pub fn finite_diff_check<R: Rng>(
    state: &MemoryState,
    frame: &TokenFrame,
    cfg: &MemoryConfig,
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<FdReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let (_, lin) = forward_linearized(state, frame, cfg)?;
    let (x, w) = memory::concat_input(state, frame);
    let init64 = state.centers.mapv(|v| v as f64);
    let init_w: Vec<f64> = state.weights.iter().map(|v| *v as f64).collect();
    let base = memory::clustering_forward(&x, &w, &init64, &init_w, cfg.tau, cfg.momentum);

    let k = state.k();
    let dim = state.dim();
    let cotangent = Array2::from_shape_fn((k, dim), |_| rng.gen_range(-1.0f64..1.0));
    let pullback = memory_vjp(&lin, &cotangent)?;

    let mut max_rel: f64 = 0.0;
    let mut flipped = 0usize;
    let mut compared = 0usize;
    for _ in 0..trials {
        let i = rng.gen_range(0..x.nrows());
        let d = rng.gen_range(0..dim);
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[(i, d)] += epsilon;
        minus[(i, d)] -= epsilon;

        let out_p = memory::clustering_forward(&plus, &w, &init64, &init_w, cfg.tau, cfg.momentum);
        let out_m = memory::clustering_forward(&minus, &w, &init64, &init_w, cfg.tau, cfg.momentum);
        if !same_plan(&base, &out_p) || !same_plan(&base, &out_m) {
            flipped += 1;
            continue;
        }

        let j_p = project(&apply_frozen(&plus, &w, &base, cfg.momentum, k, dim), &cotangent);
        let j_m = project(&apply_frozen(&minus, &w, &base, cfg.momentum, k, dim), &cotangent);
        let fd = (j_p - j_m) / (2.0 * epsilon);
        let analytic = pullback[(i, d)];
        let rel = (fd - analytic).abs() / analytic.abs().max(fd.abs()).max(1e-12);
        max_rel = max_rel.max(rel);
        compared += 1;
    }

    if compared == 0 {
        return Err(Error::Degenerate(
            "every finite-difference trial flipped an assignment".into(),
        ));
    }
    Ok(FdReport { max_rel_error: max_rel, flipped_assignments: flipped })
}

fn same_plan(a: &memory::UpdateOutcome, b: &memory::UpdateOutcome) -> bool {
    a.plan.len() == b.plan.len()
        && a.plan
            .iter()
            .zip(&b.plan)
            .all(|(p, q)| p.assign == q.assign && p.fallback == q.fallback)
}

/// Applies the recorded per-iteration assignments to a (perturbed) input.
fn apply_frozen(
    x: &Array2<f64>,
    w: &[f64],
    base: &memory::UpdateOutcome,
    momentum: bool,
    k: usize,
    dim: usize,
) -> Array2<f64> {
    let mut centers = x.slice(ndarray::s![..k, ..]).to_owned();
    for plan in &base.plan {
        let mut wsum = vec![0.0f64; k];
        for (i, &a) in plan.assign.iter().enumerate() {
            wsum[a] += w[i];
        }
        let mut next = Array2::<f64>::zeros((k, dim));
        for j in 0..k {
            if plan.fallback[j] {
                next.row_mut(j).assign(&centers.row(j));
            }
        }
        for (i, &a) in plan.assign.iter().enumerate() {
            if plan.fallback[a] {
                continue;
            }
            let coef = if momentum { w[i] } else { 1.0 };
            let val = coef / wsum[a];
            let mut row = next.row_mut(a);
            for (t, s) in row.iter_mut().zip(x.row(i).iter()) {
                *t += val * s;
            }
        }
        centers = next;
    }
    centers
}

fn project(centers: &Array2<f64>, cotangent: &Array2<f64>) -> f64 {
    centers.iter().zip(cotangent.iter()).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hand_state() -> (MemoryState, TokenFrame, MemoryConfig) {
        let state = MemoryState::from_parts(array![[0.0f32], [10.0]], vec![1.0, 1.0], 1).unwrap();
        let frame = TokenFrame::new(array![[2.0f32], [12.0]]).unwrap();
        let cfg = MemoryConfig::clustering(2, 1);
        (state, frame, cfg)
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (MemoryState, TokenFrame, MemoryConfig) {
        let k = rng.gen_range(1..=8usize);
        let n_f = rng.gen_range(1..=8usize);
        let d = rng.gen_range(1..=4usize);
        let tau = rng.gen_range(1..=3usize);
        let centers = Array2::from_shape_fn((k, d), |_| rng.gen_range(-1.0f32..1.0));
        let weights: Vec<f32> = (0..k).map(|_| rng.gen_range(0.5f32..5.0)).collect();
        let state = MemoryState::from_parts(centers, weights, k.max(n_f)).unwrap();
        let tokens = Array2::from_shape_fn((n_f, d), |_| rng.gen_range(-1.0f32..1.0));
        let cfg = MemoryConfig { k, tau, momentum: true, variant: crate::memory::MemoryVariant::Clustering };
        (state, TokenFrame::new(tokens).unwrap(), cfg)
    }

    #[test]
    fn hand_instance_linear_map() {
        let (state, frame, cfg) = hand_state();
        let (new_state, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
        assert_eq!(lin.a, array![[0.5, 0.0, 0.5, 0.0], [0.0, 0.5, 0.0, 0.5]]);
        let ax = lin.a.dot(&lin.x);
        assert_eq!(ax, array![[1.0], [11.0]]);
        assert_eq!(new_state.centers, array![[1.0], [11.0]]);
    }

    #[test]
    fn forward_matches_update_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (state, frame, cfg) = random_instance(&mut rng);
            let direct = memory::update_memory(&state, &frame, &cfg).unwrap();
            let (via_lin, _) = forward_linearized(&state, &frame, &cfg).unwrap();
            assert_eq!(direct.centers, via_lin.centers);
            assert_eq!(direct.weights, via_lin.weights);
        }
    }

    #[test]
    fn composed_map_reproduces_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let (state, frame, cfg) = random_instance(&mut rng);
            let (new_state, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
            let ax = lin.a.dot(&lin.x);
            for (got, want) in ax.iter().zip(new_state.centers.iter()) {
                let rel = (got - *want as f64).abs() / (*want as f64).abs().max(1e-6);
                assert!(rel < 1e-5, "A·X {got} vs centers {want}");
            }
        }
    }

    #[test]
    fn rows_sum_to_one_without_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut checked = 0;
        while checked < 20 {
            let (state, frame, cfg) = random_instance(&mut rng);
            let (new_state, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
            if new_state.fallback_frames > 0 {
                continue;
            }
            for row in lin.a.rows() {
                let sum: f64 = row.sum();
                assert!((sum - 1.0).abs() < 1e-9, "row sum {sum}");
                assert!(row.iter().all(|v| *v >= 0.0));
            }
            checked += 1;
        }
    }

    #[test]
    fn centers_stay_in_convex_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..30 {
            let (state, frame, cfg) = random_instance(&mut rng);
            let (new_state, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
            for t in 0..state.dim() {
                let col: Vec<f64> = lin.x.column(t).to_vec();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-6;
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-6;
                for j in 0..state.k() {
                    let v = new_state.centers[(j, t)] as f64;
                    assert!(v >= lo && v <= hi, "center {v} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn vjp_hand_instance() {
        let (state, frame, cfg) = hand_state();
        let (_, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
        let ct = array![[1.0], [0.0]];
        let back = memory_vjp(&lin, &ct).unwrap();
        assert_eq!(back, array![[0.5], [0.0], [0.5], [0.0]]);
    }

    #[test]
    fn vjp_zero_cotangent_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (state, frame, cfg) = random_instance(&mut rng);
        let (_, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
        let zero = Array2::<f64>::zeros((state.k(), state.dim()));
        assert!(memory_vjp(&lin, &zero).unwrap().iter().all(|v| *v == 0.0));

        let v1 = Array2::from_shape_fn((state.k(), state.dim()), |_| rng.gen_range(-1.0f64..1.0));
        let v2 = Array2::from_shape_fn((state.k(), state.dim()), |_| rng.gen_range(-1.0f64..1.0));
        let combo = memory_vjp(&lin, &(2.5 * &v1 + &v2)).unwrap();
        let parts = 2.5 * &memory_vjp(&lin, &v1).unwrap() + &memory_vjp(&lin, &v2).unwrap();
        for (a, b) in combo.iter().zip(parts.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_shape_mismatch_rejected() {
        let (state, frame, cfg) = hand_state();
        let (_, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
        let bad = Array2::<f64>::zeros((3, 1));
        assert!(memory_vjp(&lin, &bad).is_err());
    }

    #[test]
    fn transpose_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..20 {
            let (state, frame, cfg) = random_instance(&mut rng);
            let (_, lin) = forward_linearized(&state, &frame, &cfg).unwrap();
            let u = Array2::from_shape_fn(lin.x.dim(), |_| rng.gen_range(-1.0f64..1.0));
            let v = Array2::from_shape_fn((state.k(), state.dim()), |_| rng.gen_range(-1.0f64..1.0));
            let lhs: f64 = lin.a.dot(&u).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(memory_vjp(&lin, &v).unwrap().iter()).map(|(a, b)| a * b).sum();
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-9);
            assert!(rel < 1e-6, "<Au,v> = {lhs} vs <u,Atv> = {rhs}");
        }
    }

    #[test]
    fn finite_diff_hand_instance() {
        let (state, frame, cfg) = hand_state();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let report = finite_diff_check(&state, &frame, &cfg, 1e-4, 16, &mut rng).unwrap();
        assert!(report.max_rel_error < 1e-4, "max rel {}", report.max_rel_error);
    }

    #[test]
    fn finite_diff_rejects_zero_epsilon() {
        let (state, frame, cfg) = hand_state();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        assert!(matches!(
            finite_diff_check(&state, &frame, &cfg, 0.0, 4, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn finite_diff_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut max_rel: f64 = 0.0;
        for _ in 0..40 {
            let (state, frame, cfg) = random_instance(&mut rng);
            match finite_diff_check(&state, &frame, &cfg, 1e-4, 8, &mut rng) {
                Ok(report) => max_rel = max_rel.max(report.max_rel_error),
                Err(Error::Degenerate(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(max_rel < 1e-3, "max rel {max_rel}");
    }
}
