//! Acceptance suite: ten numbered criteria covering feasibility of the
//! projection, analytic-gradient correctness, geometric extremal properties,
//! optimizer sanity, desk-scale end-to-end training quality, robustness to
//! rate-target mismatch, runtime ordering, and an informational trend table.
//!
//! Expensive artifacts (the 10^5-sample training run and the nets trained on
//! it) are built once in lazily initialized fixtures shared across tests.

use std::sync::LazyLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srnet_core::baselines::ViolationMeasure;
use srnet_core::geometry::backward::{
    jac_boundary_wrt_interior, jac_boundary_wrt_raw, jac_interior_wrt_distance,
    jac_scale_wrt_boundary,
};
use srnet_core::geometry::l2::l2_projection_detailed;
use srnet_core::geometry::projection::segment_hit;
use srnet_core::harness::{bench_methods, evaluate, Method};
use srnet_core::scenario::dataset::{generate_dataset, Dataset, GenConfig};
use srnet_core::scenario::{EdgeRegion, RateSpec, ScenarioConfig};
use srnet_core::srnet::model::{Mlp, MlpGrads};
use srnet_core::srnet::train::{train, TrainConfig};
use srnet_core::srnet::{
    forward_training, backward_training, mean_neg_sum_rate, PowerControlNet, SampleRef, Variant,
};
use srnet_core::{
    grad_neg_sum_rate, project_forward, projection_backward, sum_rate, ConstraintSet,
    ProjectionTape,
};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn gen(
    k: usize,
    rho: (f64, f64),
    rate: RateSpec,
    count: usize,
    seed: u64,
) -> Dataset {
    let region = EdgeRegion::new(rho.0, rho.1).expect("region");
    let scenario = ScenarioConfig::new(k, region, rate);
    generate_dataset(&GenConfig::new(scenario, count, seed))
        .expect("dataset")
        .0
}

fn build_sets(ds: &Dataset) -> Vec<ConstraintSet> {
    ds.samples
        .iter()
        .map(|ch| ConstraintSet::build(ch).expect("constraint set"))
        .collect()
}

fn fd_jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(
    f: F,
    x: &DVector<f64>,
    h_scale: f64,
) -> DMatrix<f64> {
    let fx = f(x);
    let mut j = DMatrix::zeros(fx.len(), x.len());
    for c in 0..x.len() {
        let h = h_scale * (1.0 + x[c].abs());
        let mut xp = x.clone();
        xp[c] += h;
        let mut xm = x.clone();
        xm[c] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        for r in 0..fx.len() {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

fn rel_mat_err(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (analytic - fd).norm() / fd.norm().max(1e-9)
}

/// Discrete selections made by the projection; finite-difference steps must
/// not flip any of them for the comparison to be meaningful. `None` (a
/// failed forward, e.g. a nudge leaving the power box) also counts as a flip.
fn selection(
    cs: &ConstraintSet,
    p_hat: &DVector<f64>,
    d: &DVector<f64>,
) -> Option<(Option<usize>, Vec<usize>, usize, bool)> {
    project_forward(cs, p_hat, d)
        .ok()
        .map(|t| (t.k_eps, t.active, t.k_max, t.feasible_input))
}

/// Random infeasible-input instance whose selections are stable under the
/// finite-difference steps used by the gradient suite.
fn stable_instance(
    rng: &mut ChaCha8Rng,
    k: usize,
) -> (ConstraintSet, DVector<f64>, DVector<f64>, ProjectionTape) {
    use srnet_core::ChannelRealization;
    loop {
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                g[(i, j)] = if i == j {
                    rng.random_range(1.0..4.0)
                } else {
                    rng.random_range(0.01..0.25)
                };
            }
        }
        let gm = DVector::from_fn(k, |_, _| rng.random_range(0.2..1.0));
        let Ok(ch) = ChannelRealization::new(g, gm, rng.random_range(0.05..0.5), 1.0) else {
            continue;
        };
        let Ok(cs) = ConstraintSet::build(&ch) else { continue };
        if !cs.feasible() || cs.d_max_star() <= 1e-3 {
            continue;
        }
        // Interior draw keeps every finite-difference nudge inside the box.
        let p_hat = DVector::from_fn(k, |_, _| rng.random_range(0.01..0.99));
        let d = DVector::from_fn(k, |_, _| rng.random_range(0.05..0.95) * cs.d_max_star());
        let Ok(tape) = project_forward(&cs, &p_hat, &d) else { continue };
        if tape.feasible_input {
            continue;
        }
        let base = selection(&cs, &p_hat, &d);
        assert!(base.is_some());
        let mut stable = true;
        'outer: for c in 0..k {
            for s in [-1.0, 1.0] {
                let h = 1e-6 * (1.0 + p_hat[c].abs());
                let mut ph = p_hat.clone();
                ph[c] += s * h;
                if selection(&cs, &ph, &d) != base {
                    stable = false;
                    break 'outer;
                }
                let hd = 1e-6 * (1.0 + d[c].abs());
                let mut dd = d.clone();
                dd[c] += s * hd;
                if dd[c] < 0.0
                    || dd[c] > cs.d_max_star()
                    || selection(&cs, &p_hat, &dd) != base
                {
                    stable = false;
                    break 'outer;
                }
            }
        }
        if stable {
            return (cs, p_hat, d, tape);
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 1 — feasibility of the projected output at scale
// ---------------------------------------------------------------------------

/// 10^5 random feasible K=3 instances across mixed edge regions with mixed
/// per-user rate targets, random raw points in the power box and random
/// distances in [0, d_max_star]: every output satisfies the rate rows within
/// 1e-8 relative and tops out exactly at the power budget within 1e-12.
#[test]
fn criterion_01_projection_feasibility_at_scale() {
    let t0 = Instant::now();
    let regions = [(0.0, 3.0), (1.0, 4.0), (2.0, 5.0), (3.0, 6.0), (4.0, 7.0)];
    let per_region = 20_000;
    let mut total = 0usize;
    for (ri, rho) in regions.iter().enumerate() {
        let ds = gen(3, *rho, RateSpec::Random, per_region, 1_000 + ri as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(1_100 + ri as u64);
        for ch in &ds.samples {
            let cs = ConstraintSet::build(ch).expect("constraint set");
            assert!(cs.feasible());
            let k = cs.k();
            let p_hat = DVector::from_fn(k, |_, _| rng.random::<f64>() * cs.p_max());
            let d = DVector::from_fn(k, |_, _| rng.random::<f64>() * cs.d_max_star());
            let tape = project_forward(&cs, &p_hat, &d).expect("forward");
            let bp = cs.b() * &tape.p_e;
            for i in 0..k {
                assert!(
                    bp[i] >= cs.q()[i] - 1e-8 * (1.0 + cs.q()[i].abs()),
                    "rate row {i} violated: {} < {}",
                    bp[i],
                    cs.q()[i]
                );
            }
            let top = tape.p_e.max();
            assert!(
                (top - cs.p_max()).abs() <= 1e-12 * cs.p_max(),
                "power cap missed: {top} vs {}",
                cs.p_max()
            );
            for i in 0..k {
                assert!(tape.p_e[i] >= 0.0 && tape.p_e[i] <= cs.p_max() * (1.0 + 1e-12));
            }
            total += 1;
        }
    }
    assert_eq!(total, 100_000);
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 60.0, "feasibility suite took {secs:.1}s (budget 60s)");
}

// ---------------------------------------------------------------------------
// Criterion 2 — analytic gradients against finite differences
// ---------------------------------------------------------------------------

/// On 10^3 selection-stable instances, each Jacobian factor (sum-rate
/// gradient, scaling, boundary-vs-raw, boundary-vs-interior,
/// interior-vs-distance) and the composed chain match central finite
/// differences to 1e-5 relative; a toy end-to-end network matches to 1e-4.
#[test]
fn criterion_02_gradient_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2_000);
    for n in 0..1_000 {
        let k = [2, 3, 3, 5][n % 4];
        let (cs, p_hat, d, tape) = stable_instance(&mut rng, k);

        let j_w = jac_interior_wrt_distance(&cs);
        let interior = |dd: &DVector<f64>| cs.p0() + cs.dist_to_power() * dd;
        let err_w = rel_mat_err(&j_w, &fd_jacobian(interior, &d, 1e-6));
        assert!(err_w <= 1e-5, "interior/distance factor err {err_w:e} (#{n})");

        let j_raw = jac_boundary_wrt_raw(&tape, &cs).expect("factor");
        let boundary_raw = |ph: &DVector<f64>| {
            let hit = segment_hit(&cs, ph, &tape.p_c).expect("hit");
            ph + (&tape.p_c - ph) * hit.eps_star
        };
        let err_raw = rel_mat_err(&j_raw, &fd_jacobian(boundary_raw, &p_hat, 1e-6));
        assert!(err_raw <= 1e-5, "boundary/raw factor err {err_raw:e} (#{n})");

        let j_int = jac_boundary_wrt_interior(&tape, &cs).expect("factor");
        let boundary_int = |pc: &DVector<f64>| {
            let hit = segment_hit(&cs, &p_hat, pc).expect("hit");
            &p_hat + (pc - &p_hat) * hit.eps_star
        };
        let err_int = rel_mat_err(&j_int, &fd_jacobian(boundary_int, &tape.p_c, 1e-6));
        assert!(err_int <= 1e-5, "boundary/interior factor err {err_int:e} (#{n})");

        let j_scale = jac_scale_wrt_boundary(&tape, &cs);
        let scale_fn = |pd: &DVector<f64>| {
            let mut kk = 0;
            for i in 1..pd.len() {
                if pd[i] > pd[kk] {
                    kk = i;
                }
            }
            pd * (cs.p_max() / pd[kk])
        };
        let err_scale = rel_mat_err(&j_scale, &fd_jacobian(scale_fn, &tape.p_d, 1e-6));
        assert!(err_scale <= 1e-5, "scaling factor err {err_scale:e} (#{n})");

        // Composed chain: full output Jacobian in [p_hat; d] at once.
        let full = |x: &DVector<f64>| {
            let (ph, dd) = (x.rows(0, k).into_owned(), x.rows(k, k).into_owned());
            project_forward(&cs, &ph, &dd).expect("forward").p_e
        };
        let mut x = DVector::zeros(2 * k);
        x.rows_mut(0, k).copy_from(&p_hat);
        x.rows_mut(k, k).copy_from(&d);
        let mut chained = DMatrix::zeros(k, 2 * k);
        chained
            .view_mut((0, 0), (k, k))
            .copy_from(&(&j_scale * &j_raw));
        chained
            .view_mut((0, k), (k, k))
            .copy_from(&(&j_scale * &j_int * &j_w));
        let err_chain = rel_mat_err(&chained, &fd_jacobian(full, &x, 1e-6));
        assert!(err_chain <= 1e-5, "composed chain err {err_chain:e} (#{n})");
    }

    // Fifth factor on its own inputs: rate gradient on random channels, and
    // the backward pass driven by it (scalar loss chain).
    let mut rng = ChaCha8Rng::seed_from_u64(2_500);
    for n in 0..1_000 {
        let k = [2, 3, 4][n % 3];
        let (cs, p_hat, d, tape) = stable_instance(&mut rng, k);
        let ds = gen(k, (0.0, 3.0), RateSpec::Fixed(0.2), 1, 2_600 + n as u64);
        let ch = &ds.samples[0];
        assert_eq!(ch.k(), k);
        let g = grad_neg_sum_rate(ch, &tape.p_e);
        let loss_p = |p: &DVector<f64>| DVector::from_element(1, -sum_rate(ch, p));
        let g_fd = fd_jacobian(loss_p, &tape.p_e, 1e-6);
        let err = (DMatrix::from_rows(&[g.transpose()]) - &g_fd).norm() / g_fd.norm().max(1e-9);
        assert!(err <= 1e-5, "rate gradient err {err:e} (#{n})");

        let (g_phat, g_d) = projection_backward(&tape, &cs, &g).expect("backward");
        let loss_full = |x: &DVector<f64>| {
            let (ph, dd) = (x.rows(0, k).into_owned(), x.rows(k, k).into_owned());
            let t = project_forward(&cs, &ph, &dd).expect("forward");
            DVector::from_element(1, -sum_rate(ch, &t.p_e))
        };
        let mut x = DVector::zeros(2 * k);
        x.rows_mut(0, k).copy_from(&p_hat);
        x.rows_mut(k, k).copy_from(&d);
        let fd = fd_jacobian(loss_full, &x, 1e-6);
        let mut analytic = DVector::zeros(2 * k);
        analytic.rows_mut(0, k).copy_from(&g_phat);
        analytic.rows_mut(k, k).copy_from(&g_d);
        let err = (analytic.transpose() - fd.row(0)).norm() / fd.norm().max(1e-9);
        assert!(err <= 1e-5, "scalar chain err {err:e} (#{n})");
    }

    whole_net_toy_check();
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 300.0, "gradient suite took {secs:.1}s (budget 300s)");
}

/// Canonical parameter flattening shared by the nudge and gradient walks:
/// per hidden layer w, b, gamma, beta (column-major), then out_w, out_b.
fn param_count(mlp: &Mlp) -> usize {
    let mut n = 0;
    for l in &mlp.hidden {
        n += l.w.len() + l.b.len() + l.bn.gamma.len() + l.bn.beta.len();
    }
    n + mlp.out_w.len() + mlp.out_b.len()
}

fn nudge_param(mlp: &mut Mlp, idx: usize, delta: f64) {
    let mut i = idx;
    for l in &mut mlp.hidden {
        if i < l.w.len() {
            l.w[i] += delta;
            return;
        }
        i -= l.w.len();
        if i < l.b.len() {
            l.b[i] += delta;
            return;
        }
        i -= l.b.len();
        if i < l.bn.gamma.len() {
            l.bn.gamma[i] += delta;
            return;
        }
        i -= l.bn.gamma.len();
        if i < l.bn.beta.len() {
            l.bn.beta[i] += delta;
            return;
        }
        i -= l.bn.beta.len();
    }
    if i < mlp.out_w.len() {
        mlp.out_w[i] += delta;
        return;
    }
    i -= mlp.out_w.len();
    mlp.out_b[i] += delta;
}

fn flat_grads(g: &MlpGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &g.layers {
        out.extend(l.dw.iter());
        out.extend(l.db.iter());
        out.extend(l.dgamma.iter());
        out.extend(l.dbeta.iter());
    }
    out.extend(g.d_out_w.iter());
    out.extend(g.d_out_b.iter());
    out
}

/// End-to-end parameter gradients of a toy projected network against finite
/// differences, 1e-4 tolerance. Seeds are searched for a configuration whose
/// discrete selections are stable under every parameter nudge.
fn whole_net_toy_check() {
    let ds = gen(2, (0.0, 3.0), RateSpec::Fixed(0.2), 8, 2_900);
    let css = build_sets(&ds);
    let refs: Vec<SampleRef> = ds
        .samples
        .iter()
        .zip(&css)
        .map(|(ch, cs)| SampleRef { ch, cs })
        .collect();
    let h = 1e-5;

    'seed: for seed in 30..60u64 {
        let trained = train(
            &ds,
            Variant::Srnet,
            &TrainConfig {
                hidden: vec![6, 5],
                batch_size: 8,
                steps: 5,
                ..TrainConfig::default()
            },
            seed,
        )
        .expect("toy train");
        let mut net = trained.net;
        let mut feats = DMatrix::zeros(net.stats.feature_dim(), refs.len());
        for (j, ch) in ds.samples.iter().enumerate() {
            feats.set_column(j, &net.stats.featurize(ch));
        }

        let (tapes, cache, z) = forward_training(&mut net, &feats, &refs).expect("fwd");
        let base_sel: Vec<_> = tapes
            .iter()
            .map(|t| (t.k_eps, t.active.clone(), t.k_max, t.feasible_input))
            .collect();
        let grads = backward_training(&net, &cache, &z, &tapes, &refs).expect("bwd");
        let analytic = flat_grads(&grads);
        let n_params = param_count(&net.mlp);
        assert_eq!(analytic.len(), n_params);

        let mut fd = vec![0.0; n_params];
        for idx in 0..n_params {
            let mut sels = Vec::new();
            let mut vals = [0.0; 2];
            for (s, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                let mut m = net.clone();
                nudge_param(&mut m.mlp, idx, sign * h);
                let (t2, _, _) = forward_training(&mut m, &feats, &refs).expect("fwd");
                sels.push(
                    t2.iter()
                        .map(|t| (t.k_eps, t.active.clone(), t.k_max, t.feasible_input))
                        .collect::<Vec<_>>(),
                );
                vals[s] = mean_neg_sum_rate(&t2, &refs);
            }
            if sels[0] != base_sel || sels[1] != base_sel {
                continue 'seed; // selection flipped: try the next seed
            }
            fd[idx] = (vals[0] - vals[1]) / (2.0 * h);
        }

        let fd_norm = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut num = 0.0;
        let mut den = 0.0;
        for idx in 0..n_params {
            let e = analytic[idx] - fd[idx];
            num += e * e;
            den += fd[idx] * fd[idx];
            assert!(
                e.abs() <= 1e-4 * fd[idx].abs().max(1e-3 * fd_norm),
                "param {idx}: analytic {} vs fd {}",
                analytic[idx],
                fd[idx]
            );
        }
        let rel = num.sqrt() / den.sqrt().max(1e-9);
        assert!(rel <= 1e-4, "whole-net aggregate err {rel:e}");
        return;
    }
    panic!("no seed in 30..60 gave selection-stable finite differences");
}

// ---------------------------------------------------------------------------
// Criterion 3 — extremality of d_max_star and eps_star
// ---------------------------------------------------------------------------

/// d = d_max_star 1 touches the power cap exactly and 1.01x violates it;
/// the boundary point is active at its chosen row and 0.99 eps_star is
/// still infeasible. 10^4 instances, zero failures.
#[test]
fn criterion_03_extremal_distance_and_segment() {
    let ds = gen(3, (0.0, 3.0), RateSpec::Random, 10_000, 3_000);
    let mut rng = ChaCha8Rng::seed_from_u64(3_100);
    for (n, ch) in ds.samples.iter().enumerate() {
        let cs = ConstraintSet::build(ch).expect("constraint set");
        let k = cs.k();
        let dstar = cs.d_max_star();
        assert!(dstar > 0.0, "instance {n} has no interior");

        let p_cap = cs.p0() + cs.dist_to_power() * DVector::from_element(k, dstar);
        let top = p_cap.max();
        assert!(
            (top - cs.p_max()).abs() <= 1e-12 * cs.p_max(),
            "cap not touched at d_max_star: {top} vs {} (#{n})",
            cs.p_max()
        );
        assert!(p_cap.iter().all(|&v| v <= cs.p_max() * (1.0 + 1e-12)));

        let p_over = cs.p0() + cs.dist_to_power() * DVector::from_element(k, 1.01 * dstar);
        assert!(
            p_over.max() > cs.p_max() * (1.0 + 1e-12),
            "1.01 d_max_star did not violate the cap (#{n})"
        );

        // Guaranteed-infeasible raw point: one transmitter muted entirely.
        let mut p_hat = DVector::from_fn(k, |_, _| rng.random::<f64>() * cs.p_max());
        p_hat[n % k] = 0.0;
        let d = DVector::from_fn(k, |_, _| (0.2 + 0.6 * rng.random::<f64>()) * dstar);
        let tape = project_forward(&cs, &p_hat, &d).expect("forward");
        assert!(!tape.feasible_input);
        let kr = tape.k_eps.expect("hit row");
        let row_val = cs.b().row(kr).transpose().dot(&tape.p_d) - cs.q()[kr];
        assert!(
            row_val.abs() <= 1e-8 * (1.0 + cs.q()[kr].abs()),
            "row {kr} not active at the boundary point: {row_val} (#{n})"
        );
        let p99 = &p_hat + (&tape.p_c - &p_hat) * (0.99 * tape.eps_star);
        assert!(
            !cs.satisfies_rate_constraints(&p99),
            "0.99 eps_star already feasible (#{n})"
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 4 — monotonicity of the interior point in the distances
// ---------------------------------------------------------------------------

/// Element-wise: d' >= d implies p_C(d') >= p_C(d), over 10^4 random pairs.
#[test]
fn criterion_04_interior_point_monotonicity() {
    let ds = gen(3, (0.0, 3.0), RateSpec::Random, 2_000, 4_000);
    let css = build_sets(&ds);
    let mut rng = ChaCha8Rng::seed_from_u64(4_100);
    let mut pairs = 0;
    'outer: loop {
        for cs in &css {
            let k = cs.k();
            let hi = 1.5 * cs.d_max_star();
            let u1 = DVector::from_fn(k, |_, _| rng.random::<f64>() * hi);
            let u2 = DVector::from_fn(k, |_, _| rng.random::<f64>() * hi);
            let lo_d = u1.zip_map(&u2, f64::min);
            let hi_d = u1.zip_map(&u2, f64::max);
            let p_lo = cs.p0() + cs.dist_to_power() * &lo_d;
            let p_hi = cs.p0() + cs.dist_to_power() * &hi_d;
            for i in 0..k {
                assert!(
                    p_hi[i] >= p_lo[i] - 1e-12 * cs.p_max(),
                    "monotonicity violated at coordinate {i}"
                );
            }
            pairs += 1;
            if pairs == 10_000 {
                break 'outer;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 5 — the uniform maximum distance wins the max-min grid search
// ---------------------------------------------------------------------------

/// On 10^3 two-cell instances, a 200x200 grid search over distance pairs
/// confirms that the max-min-distance point inside the power box is
/// d = d_max_star 1 within one grid step.
#[test]
fn criterion_05_heuristic_distance_optimality() {
    let ds = gen(2, (0.0, 3.0), RateSpec::Random, 1_000, 5_000);
    for (n, ch) in ds.samples.iter().enumerate() {
        let cs = ConstraintSet::build(ch).expect("constraint set");
        let dstar = cs.d_max_star();
        assert!(dstar > 0.0);
        let hi = 1.2 * dstar;
        let step = hi / 199.0;
        let w = cs.dist_to_power();
        let (w00, w01, w10, w11) = (w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]);
        let (p00, p01) = (cs.p0()[0], cs.p0()[1]);
        let cap = cs.p_max() * (1.0 + 1e-12);
        let mut best = f64::NEG_INFINITY;
        for i in 0..200 {
            let d1 = i as f64 * step;
            for j in 0..200 {
                let d2 = j as f64 * step;
                let x = p00 + w00 * d1 + w01 * d2;
                let y = p01 + w10 * d1 + w11 * d2;
                if x <= cap && y <= cap && x >= -1e-12 && y >= -1e-12 {
                    let m = d1.min(d2);
                    if m > best {
                        best = m;
                    }
                }
            }
        }
        assert!(
            (best - dstar).abs() <= step + 1e-12 * dstar,
            "grid max-min {best} vs d_max_star {dstar} (step {step}, #{n})"
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 6 — boundary point vs the true Euclidean projection
// ---------------------------------------------------------------------------

/// The segment boundary point is never closer to the raw input than the
/// exact l2 projection; the l2 oracle's KKT residual stays at or below 1e-9
/// on box-scale inputs; feasible inputs map to themselves. 10^4 instances.
#[test]
fn criterion_06_l2_dominance_and_oracle_sanity() {
    let ds = gen(3, (0.0, 3.0), RateSpec::Random, 10_000, 6_000);
    let mut rng = ChaCha8Rng::seed_from_u64(6_100);
    for (n, ch) in ds.samples.iter().enumerate() {
        let cs = ConstraintSet::build(ch).expect("constraint set");
        let k = cs.k();
        let mut p_hat = DVector::from_fn(k, |_, _| rng.random::<f64>() * cs.p_max());
        if n % 2 == 1 {
            p_hat[n % k] = 0.0; // force infeasibility on odd draws
        }
        let sol = l2_projection_detailed(&cs, &p_hat).expect("l2");
        assert!(
            sol.kkt_residual <= 1e-9,
            "KKT residual {} (#{n})",
            sol.kkt_residual
        );
        let d = DVector::from_fn(k, |_, _| (0.05 + 0.9 * rng.random::<f64>()) * cs.d_max_star());
        let tape = project_forward(&cs, &p_hat, &d).expect("forward");
        let dist_d = (&tape.p_d - &p_hat).norm();
        let dist_l2 = (&sol.p - &p_hat).norm();
        assert!(
            dist_d >= dist_l2 - 1e-8,
            "boundary point closer than the l2 projection: {dist_d} < {dist_l2} (#{n})"
        );
        if cs.satisfies_rate_constraints(&p_hat) && p_hat.max() <= cs.p_max() {
            assert!(
                (&sol.p - &p_hat).amax() <= 1e-12 * (1.0 + cs.p_max()),
                "feasible input moved by the l2 projection (#{n})"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Criteria 7–10 — desk-scale training, mismatch, runtime, trend
// ---------------------------------------------------------------------------

struct TrainedFixture {
    test_set: Dataset,
    srnet: PowerControlNet,
    srnet_heu: PowerControlNet,
    penalty: PowerControlNet,
    /// Wall time for dataset generation plus all training runs.
    build_secs: f64,
}

/// Desk-scale run shared by criteria 7, 8, and 9: K=3, (0,3) dB edge region,
/// 0.1 b/s/Hz targets, 10^5 training samples, hidden [128, 64], batch 512,
/// 2e4 Adam steps.
static DESK: LazyLock<TrainedFixture> = LazyLock::new(|| {
    let t0 = Instant::now();
    let train_set = gen(3, (0.0, 3.0), RateSpec::Fixed(0.1), 100_000, 11);
    let test_set = gen(3, (0.0, 3.0), RateSpec::Fixed(0.1), 10_000, 12);
    let cfg = TrainConfig {
        hidden: vec![128, 64],
        batch_size: 512,
        steps: 20_000,
        violation_measure: ViolationMeasure::SinrShortfall,
        ..TrainConfig::default()
    };
    let srnet = train(&train_set, Variant::Srnet, &cfg, 1).expect("train srnet").net;
    let srnet_heu = train(&train_set, Variant::SrnetHeu, &cfg, 1)
        .expect("train srnet-heu")
        .net;
    // Penalty weight picked from the default grid on a validation split.
    let penalty = train(&train_set, Variant::PenaltyAdd, &cfg, 1)
        .expect("train penalty")
        .net;
    TrainedFixture {
        test_set,
        srnet,
        srnet_heu,
        penalty,
        build_secs: t0.elapsed().as_secs_f64(),
    }
});

/// Trained SRNet satisfies every constraint on 10^4 fresh samples, beats the
/// closed-form vertex by at least 5% mean sum rate, and beats the
/// penalty-trained baseline (with fallback); everything fits in 30 minutes.
#[test]
fn criterion_07_desk_scale_training_quality() {
    let fx = &*DESK;
    let t0 = Instant::now();
    let methods = vec![
        Method::P0,
        Method::Net { name: "srnet".into(), net: fx.srnet.clone(), fallback: false },
        Method::Net { name: "penalty".into(), net: fx.penalty.clone(), fallback: true },
    ];
    let (report, _) = evaluate(&fx.test_set, &methods).expect("evaluate");
    let p0 = report.method("p0").unwrap();
    let srnet = report.method("srnet").unwrap();
    let penalty = report.method("penalty").unwrap();

    assert_eq!(
        srnet.satisfaction_final, 1.0,
        "srnet satisfaction {}",
        srnet.satisfaction_final
    );
    assert!(
        srnet.mean_sum_rate >= 1.05 * p0.mean_sum_rate,
        "srnet {} vs 1.05 x vertex {}",
        srnet.mean_sum_rate,
        1.05 * p0.mean_sum_rate
    );
    assert!(
        srnet.mean_sum_rate >= penalty.mean_sum_rate,
        "srnet {} vs penalty {}",
        srnet.mean_sum_rate,
        penalty.mean_sum_rate
    );
    assert_eq!(penalty.satisfaction_final, 1.0); // fallback guarantees this

    let total = fx.build_secs + t0.elapsed().as_secs_f64();
    assert!(total < 1_800.0, "desk-scale pipeline took {total:.0}s (budget 1800s)");
    println!(
        "criterion 7: srnet {:.4} b/s/Hz, penalty {:.4}, vertex {:.4} ({total:.0}s)",
        srnet.mean_sum_rate, penalty.mean_sum_rate, p0.mean_sum_rate
    );
}

/// Models trained for 0.1 b/s/Hz targets evaluated on 0.5 b/s/Hz instances:
/// the projected network still satisfies everything; the penalty network
/// without fallback satisfies less than half.
#[test]
fn criterion_08_rate_target_mismatch() {
    let fx = &*DESK;
    let shifted = gen(3, (0.0, 3.0), RateSpec::Fixed(0.5), 10_000, 13);
    let methods = vec![
        Method::Net { name: "srnet".into(), net: fx.srnet.clone(), fallback: false },
        Method::Net { name: "penalty".into(), net: fx.penalty.clone(), fallback: false },
    ];
    let (report, _) = evaluate(&shifted, &methods).expect("evaluate");
    let srnet = report.method("srnet").unwrap();
    let penalty = report.method("penalty").unwrap();
    assert_eq!(
        srnet.satisfaction_final, 1.0,
        "projected net broke under target shift: {}",
        srnet.satisfaction_final
    );
    assert!(
        penalty.satisfaction_final < 0.5,
        "penalty net unexpectedly robust: {}",
        penalty.satisfaction_final
    );
    println!(
        "criterion 8: srnet satisfaction {:.4}, penalty (no fallback) {:.4}",
        srnet.satisfaction_final, penalty.satisfaction_final
    );
}

/// Mean inference time: the projected network runs at least 10x faster than
/// 8-start local search; the heuristic variant is no slower than the learned
/// one (1% measurement-noise allowance on the directional claim).
#[test]
fn criterion_09_runtime_ordering() {
    let fx = &*DESK;
    let bench_set = gen(3, (0.0, 3.0), RateSpec::Fixed(0.1), 200, 14);
    let methods = vec![
        Method::Net { name: "srnet".into(), net: fx.srnet.clone(), fallback: false },
        Method::Net { name: "srnet-heu".into(), net: fx.srnet_heu.clone(), fallback: false },
        Method::LocalOpt { name: "local-opt".into(), starts: 8, seed: 14 },
    ];
    let table = bench_methods(&bench_set, &methods, 2, 9).expect("bench");
    let mean = |col: usize| -> f64 {
        table.rows.iter().map(|(_, t)| t[col]).sum::<f64>() / table.rows.len() as f64
    };
    let (t_srnet, t_heu, t_local) = (mean(0), mean(1), mean(2));
    assert!(
        t_srnet <= t_local / 10.0,
        "srnet {t_srnet:.2}us vs local search {t_local:.2}us: less than 10x apart"
    );
    assert!(
        t_heu <= t_srnet * 1.01,
        "heuristic variant slower: {t_heu:.3}us vs {t_srnet:.3}us"
    );
    println!(
        "criterion 9: srnet {t_srnet:.2}us, srnet-heu {t_heu:.2}us, local-opt {t_local:.2}us"
    );
}

/// Informational: matched-target sum rate across the rate-target grid. The
/// table is printed for inspection; only structural sanity is asserted.
#[test]
fn criterion_10_rate_target_trend_report() {
    let mut lines = Vec::new();
    for (i, tenths) in [1u64, 2, 3, 4, 5].iter().enumerate() {
        let lambda = *tenths as f64 / 10.0;
        let train_set = gen(3, (0.0, 3.0), RateSpec::Fixed(lambda), 20_000, 1_500 + i as u64);
        let test_set = gen(3, (0.0, 3.0), RateSpec::Fixed(lambda), 2_000, 1_600 + i as u64);
        let cfg = TrainConfig {
            hidden: vec![128, 64],
            batch_size: 256,
            steps: 4_000,
            ..TrainConfig::default()
        };
        let net = train(&train_set, Variant::Srnet, &cfg, 2).expect("train").net;
        let methods = vec![
            Method::P0,
            Method::Net { name: "srnet".into(), net, fallback: false },
        ];
        let (report, _) = evaluate(&test_set, &methods).expect("evaluate");
        let srnet = report.method("srnet").unwrap();
        let p0 = report.method("p0").unwrap();
        assert_eq!(srnet.satisfaction_final, 1.0);
        assert!(srnet.mean_sum_rate.is_finite() && srnet.mean_sum_rate > 0.0);
        lines.push(format!(
            "lambda {lambda:.1}: srnet {:.4} b/s/Hz (vertex {:.4})",
            srnet.mean_sum_rate, p0.mean_sum_rate
        ));
    }
    println!("criterion 10 trend report:");
    for l in &lines {
        println!("  {l}");
    }
}
