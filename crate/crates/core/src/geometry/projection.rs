//! Forward projection: pull a raw network output back to the feasible set
//! along the segment to an interior point, then scale the binding coordinate
//! up to the power budget.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{argmax_first, ConstraintSet, DIV_GUARD};

/// Result of the segment intersection with the violated constraint set.
#[derive(Debug, Clone)]
pub struct SegmentHit {
    /// Fraction of the way from `p_hat` toward `p_c` (0 when already feasible).
    pub eps_star: f64,
    /// Row attaining the max ratio; `None` when the input was feasible.
    pub k_eps: Option<usize>,
    /// Rows with a positive segment component `[B (p_c - p_hat)]_i > 0`.
    pub active: Vec<usize>,
    /// Whether `p_hat` already satisfied all rate constraints.
    pub feasible_input: bool,
}

/// Smallest step toward `p_c` that restores all rate constraints:
/// `eps_star = max over i in active of [q - B p_hat]_i / [B (p_c - p_hat)]_i`.
/// A feasible `p_hat` short-circuits to `eps_star = 0`. Ties on the max take
/// the smallest row. Errors with `GeometryViolated` when the input is
/// infeasible yet no row has a positive segment component.
pub fn segment_hit(
    cs: &ConstraintSet,
    p_hat: &DVector<f64>,
    p_c: &DVector<f64>,
) -> Result<SegmentHit> {
    let k = cs.k();
    let viol = cs.q() - cs.b() * p_hat; // positive entries: violated rows
    if (0..k).all(|i| viol[i] <= 0.0) {
        return Ok(SegmentHit {
            eps_star: 0.0,
            k_eps: None,
            active: Vec::new(),
            feasible_input: true,
        });
    }
    let seg = cs.b() * (p_c - p_hat);
    let active: Vec<usize> = (0..k).filter(|&i| seg[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::GeometryViolated);
    }
    let mut eps_star = f64::NEG_INFINITY;
    let mut k_eps = active[0];
    for &i in &active {
        let r = viol[i] / seg[i];
        if r > eps_star {
            eps_star = r;
            k_eps = i;
        }
    }
    debug_assert!(eps_star > 0.0 && eps_star <= 1.0 + 1e-12);
    Ok(SegmentHit {
        eps_star,
        k_eps: Some(k_eps),
        active,
        feasible_input: false,
    })
}

/// Every intermediate of one projection, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ProjectionTape {
    pub p_hat: DVector<f64>,
    pub d: DVector<f64>,
    pub p_c: DVector<f64>,
    pub eps_star: f64,
    pub k_eps: Option<usize>,
    pub active: Vec<usize>,
    pub feasible_input: bool,
    /// Boundary point `p_hat + eps_star (p_c - p_hat)`.
    pub p_d: DVector<f64>,
    /// Coordinate scaled up to the power budget (smallest index on ties).
    pub k_max: usize,
    /// Final output `(p_max / p_d[k_max]) p_d`.
    pub p_e: DVector<f64>,
    /// True when `d` was pinned at `d_max_star 1` (treated constant backward).
    pub heuristic_d: bool,
}

fn check_power_box(p_hat: &DVector<f64>, p_max: f64) -> Result<()> {
    let tol = 1e-12 * (1.0 + p_max);
    for i in 0..p_hat.len() {
        if !(p_hat[i] >= -tol && p_hat[i] <= p_max + tol) {
            return Err(Error::InvalidArgument(format!(
                "p_hat[{i}] = {} outside [0, {p_max}]",
                p_hat[i]
            )));
        }
    }
    Ok(())
}

fn finish(
    cs: &ConstraintSet,
    p_hat: DVector<f64>,
    d: DVector<f64>,
    heuristic_d: bool,
) -> Result<ProjectionTape> {
    check_power_box(&p_hat, cs.p_max())?;
    let p_c = cs.interior_point(&d)?;
    let hit = segment_hit(cs, &p_hat, &p_c)?;
    let p_d = if hit.feasible_input {
        p_hat.clone()
    } else {
        &p_hat + (&p_c - &p_hat) * hit.eps_star
    };
    let k_max = argmax_first(&p_d);
    if p_d[k_max] <= DIV_GUARD {
        return Err(Error::DegenerateScale { index: k_max, value: p_d[k_max] });
    }
    let p_e = &p_d * (cs.p_max() / p_d[k_max]);
    Ok(ProjectionTape {
        p_hat,
        d,
        p_c,
        eps_star: hit.eps_star,
        k_eps: hit.k_eps,
        active: hit.active,
        feasible_input: hit.feasible_input,
        p_d,
        k_max,
        p_e,
        heuristic_d,
    })
}

/// Full projection with learned per-hyperplane distances `d`.
pub fn project_forward(
    cs: &ConstraintSet,
    p_hat: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<ProjectionTape> {
    finish(cs, p_hat.clone(), d.clone(), false)
}

/// Projection with `d` pinned at the uniform maximum `d_max_star 1`;
/// the distance input carries no gradient.
pub fn project_forward_heuristic(
    cs: &ConstraintSet,
    p_hat: &DVector<f64>,
) -> Result<ProjectionTape> {
    let d = DVector::from_element(cs.k(), cs.d_max_star());
    finish(cs, p_hat.clone(), d, true)
}
