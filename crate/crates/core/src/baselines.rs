//! Reference methods the learned models are compared against: the
//! constraint vertex itself, penalty-trained networks (violation measures
//! and fallback logic live here), best-of-ensemble selection, and a
//! multistart projected-gradient local optimizer.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::l2::l2_projection;
use crate::geometry::metrics::{grad_neg_sum_rate, sinr, sum_rate};
use crate::geometry::ConstraintSet;
use crate::scenario::ChannelRealization;
use crate::srnet::{infer_projected, infer_raw, PowerControlNet, Variant};

/// The vertex `p0 = B^{-1} q` used directly as the transmit power.
pub fn baseline_p0(cs: &ConstraintSet) -> Result<DVector<f64>> {
    if !cs.feasible() {
        return Err(Error::Infeasible("p0 lies outside the power box".into()));
    }
    Ok(cs.p0().clone())
}

/// How constraint violation is measured inside the penalty losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationMeasure {
    /// Sum of SINR shortfalls `max(0, gamma_min_i - SINR_i)` (default).
    SinrShortfall,
    /// Sum of rate shortfalls `max(0, r_min_i - log2(1 + SINR_i))`.
    RateShortfall,
}

impl ViolationMeasure {
    pub fn tag(self) -> &'static str {
        match self {
            ViolationMeasure::SinrShortfall => "sinr",
            ViolationMeasure::RateShortfall => "rate",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "sinr" => ViolationMeasure::SinrShortfall,
            "rate" => ViolationMeasure::RateShortfall,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown violation measure {other:?} (sinr|rate)"
                )))
            }
        })
    }
}

pub fn violation(ch: &ChannelRealization, p: &DVector<f64>, m: ViolationMeasure) -> f64 {
    let g = sinr(ch, p);
    (0..ch.k())
        .map(|i| match m {
            ViolationMeasure::SinrShortfall => (ch.gamma_min[i] - g[i]).max(0.0),
            ViolationMeasure::RateShortfall => {
                ((1.0 + ch.gamma_min[i]).log2() - (1.0 + g[i]).log2()).max(0.0)
            }
        })
        .sum()
}

/// Gradient of the violation measure with respect to the powers. The hinge
/// uses the zero subgradient exactly at the kink.
pub fn violation_grad(
    ch: &ChannelRealization,
    p: &DVector<f64>,
    m: ViolationMeasure,
) -> DVector<f64> {
    let k = ch.k();
    let g = sinr(ch, p);
    let ln2 = std::f64::consts::LN_2;
    let mut out = DVector::zeros(k);
    for i in 0..k {
        if g[i] >= ch.gamma_min[i] {
            continue;
        }
        // d SINR_i / dp: own power raises it, interferers lower it.
        let mut interference = ch.noise_power;
        for j in 0..k {
            if j != i {
                interference += ch.gains[(i, j)] * p[j];
            }
        }
        let scale = match m {
            ViolationMeasure::SinrShortfall => -1.0,
            ViolationMeasure::RateShortfall => -1.0 / (ln2 * (1.0 + g[i])),
        };
        out[i] += scale * ch.gains[(i, i)] / interference;
        for j in 0..k {
            if j != i {
                out[j] += scale
                    * (-ch.gains[(i, i)] * p[i] * ch.gains[(i, j)]
                        / (interference * interference));
            }
        }
    }
    out
}

/// Per-sample penalty objective from the rate term `neg_rate = -sum_rate`
/// and the violation value.
pub fn penalty_objective(neg_rate: f64, violation: f64, weight: f64, variant: Variant) -> f64 {
    match variant {
        Variant::PenaltyAdd => neg_rate + weight * violation,
        Variant::PenaltyMul => neg_rate * (1.0 + weight * violation),
        _ => unreachable!("penalty objective applies to penalty variants only"),
    }
}

/// Outcome of running a penalty network on one channel.
#[derive(Debug, Clone)]
pub struct PenaltyOutcome {
    pub p: DVector<f64>,
    /// Whether the raw output satisfied every rate constraint (exact check).
    pub raw_feasible: bool,
    /// Whether the vertex was substituted for an infeasible raw output.
    pub fell_back: bool,
}

/// Run a penalty network; when `fallback` is set, an output violating any
/// rate constraint (exact comparison) is replaced by the vertex `p0`.
pub fn penalty_infer(
    net: &PowerControlNet,
    ch: &ChannelRealization,
    cs: &ConstraintSet,
    fallback: bool,
) -> Result<PenaltyOutcome> {
    if !net.variant.is_penalty() {
        return Err(Error::InvalidArgument(
            "penalty_infer needs a penalty-variant model".into(),
        ));
    }
    let raw = infer_raw(net, ch)?;
    let raw_feasible = cs.satisfies_rate_constraints(&raw);
    if raw_feasible || !fallback {
        return Ok(PenaltyOutcome { p: raw, raw_feasible, fell_back: false });
    }
    Ok(PenaltyOutcome { p: baseline_p0(cs)?, raw_feasible, fell_back: true })
}

/// Best-of-`nets` selection: run every candidate, keep the feasible output
/// with the highest sum rate (first wins ties); fall back to the vertex if
/// no candidate is feasible.
pub fn ensemble_select(
    nets: &[PowerControlNet],
    ch: &ChannelRealization,
    cs: &ConstraintSet,
) -> Result<DVector<f64>> {
    if nets.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for net in nets {
        let p = if net.variant.uses_projection() {
            infer_projected(net, ch, cs)?.p_e
        } else {
            let out = penalty_infer(net, ch, cs, false)?;
            if !out.raw_feasible {
                continue;
            }
            out.p
        };
        let r = sum_rate(ch, &p);
        if best.as_ref().map_or(true, |(br, _)| r > *br) {
            best = Some((r, p));
        }
    }
    match best {
        Some((_, p)) => Ok(p),
        None => baseline_p0(cs),
    }
}

#[derive(Debug, Clone)]
pub struct LocalOptResult {
    pub p: DVector<f64>,
    pub sum_rate: f64,
    /// False when the best run stopped at the iteration cap instead of the
    /// step-size tolerance.
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after every accepted iteration of the best run.
    pub trace: Vec<f64>,
}

const LOCAL_OPT_MAX_ITER: usize = 10_000;
const LOCAL_OPT_STEP_TOL: f64 = 1e-8;

/// Projected gradient ascent on the sum rate with Armijo backtracking, from
/// the vertex plus `starts - 1` random feasible perturbations of it.
pub fn multistart_local_opt(
    ch: &ChannelRealization,
    cs: &ConstraintSet,
    starts: usize,
    seed: u64,
) -> Result<LocalOptResult> {
    if starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    if !cs.feasible() {
        return Err(Error::Infeasible("local search needs a feasible set".into()));
    }
    let k = cs.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut start_points = vec![cs.p0().clone()];
    while start_points.len() < starts {
        let mut accepted = false;
        for _ in 0..50 {
            let cand = DVector::from_fn(k, |i, _| {
                let u: f64 = rng.random();
                cs.p0()[i] + u * (cs.p_max() - cs.p0()[i])
            });
            if cs.satisfies_rate_constraints(&cand) {
                start_points.push(cand);
                accepted = true;
                break;
            }
        }
        if !accepted {
            start_points.push(cs.p0().clone());
        }
    }

    let mut best: Option<LocalOptResult> = None;
    for start in start_points {
        let run = ascend(ch, cs, start)?;
        if best.as_ref().map_or(true, |b| run.sum_rate > b.sum_rate) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

fn ascend(
    ch: &ChannelRealization,
    cs: &ConstraintSet,
    start: DVector<f64>,
) -> Result<LocalOptResult> {
    let mut x = start;
    let mut fx = sum_rate(ch, &x);
    let mut trace = vec![fx];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < LOCAL_OPT_MAX_ITER {
        iterations += 1;
        let g = -grad_neg_sum_rate(ch, &x); // ascent direction
        let mut t = (step * 2.0).min(1e6);
        let mut accepted: Option<(DVector<f64>, f64)> = None;
        for _ in 0..60 {
            let cand = l2_projection(cs, &(&x + &g * t))?;
            let fc = sum_rate(ch, &cand);
            let along = g.dot(&(&cand - &x));
            if fc >= fx + 1e-4 * along && fc >= fx {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // No productive step at any scale: stationary for our purposes.
            converged = true;
            break;
        };
        step = t;
        let delta = (&cand - &x).norm();
        x = cand;
        fx = fc;
        trace.push(fx);
        if delta < LOCAL_OPT_STEP_TOL {
            converged = true;
            break;
        }
    }

    Ok(LocalOptResult { p: x, sum_rate: fx, converged, iterations, trace })
}
