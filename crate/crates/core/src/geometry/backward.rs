//! Analytic Jacobians of the projection stages and the chained backward
//! pass. All Jacobians use numerator layout: `J[(i, j)] = d out_i / d in_j`,
//! so upstream gradients propagate as `g_in = J^T g_out`.
//!
//! Index-selection steps (the binding row of the segment hit, the scaled
//! coordinate) are locally constant and treated as such; the derivatives
//! below are exact wherever those selections do not change.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::projection::ProjectionTape;
use crate::geometry::{ConstraintSet, DIV_GUARD};

/// Jacobian of the budget scaling `p_e = (p_max / p_d[k]) p_d`, `k = k_max`,
/// with respect to `p_d`. Row `k_max` is zero (that coordinate is pinned at
/// `p_max`); for `i != k`: `J[(i, i)] = p_max / p_d[k]` and
/// `J[(i, k)] -= p_max p_d[i] / p_d[k]^2`.
pub fn jac_scale_wrt_boundary(tape: &ProjectionTape, cs: &ConstraintSet) -> DMatrix<f64> {
    let k = cs.k();
    let km = tape.k_max;
    let pk = tape.p_d[km];
    let mut j = DMatrix::zeros(k, k);
    for i in 0..k {
        if i == km {
            continue;
        }
        j[(i, i)] += cs.p_max() / pk;
        j[(i, km)] -= cs.p_max() * tape.p_d[i] / (pk * pk);
    }
    j
}

/// Jacobian of the boundary point `p_d` with respect to the raw output
/// `p_hat`, holding `p_c` fixed. Identity for a feasible input. Otherwise,
/// with binding row `k = k_eps`, numerator `n = [B p_c - q]_k`, and
/// denominator `m = [B (p_c - p_hat)]_k`:
/// `J = (n/m) I + (n/m^2) (p_hat - p_c) b_k^T`.
pub fn jac_boundary_wrt_raw(tape: &ProjectionTape, cs: &ConstraintSet) -> Result<DMatrix<f64>> {
    let k = cs.k();
    if tape.feasible_input {
        return Ok(DMatrix::identity(k, k));
    }
    let kb = tape.k_eps.expect("infeasible input always has a binding row");
    let b_row = cs.b().row(kb);
    let m = (b_row * (&tape.p_c - &tape.p_hat))[0];
    if m.abs() <= DIV_GUARD {
        return Err(Error::DegenerateGradient { row: kb, value: m });
    }
    let n = (b_row * &tape.p_c)[0] - cs.q()[kb];
    let mut j = DMatrix::identity(k, k) * (n / m);
    let diff = &tape.p_hat - &tape.p_c;
    let coef = n / (m * m);
    for r in 0..k {
        for c in 0..k {
            j[(r, c)] += coef * diff[r] * b_row[c];
        }
    }
    Ok(j)
}

/// Jacobian of the boundary point `p_d` with respect to the interior point
/// `p_c`, holding `p_hat` fixed. Zero for a feasible input. Otherwise, with
/// binding row `k`, violation `v = [q - B p_hat]_k`, and the same
/// denominator `m`:
/// `J = eps_star I - (v/m^2) (p_c - p_hat) b_k^T`.
pub fn jac_boundary_wrt_interior(
    tape: &ProjectionTape,
    cs: &ConstraintSet,
) -> Result<DMatrix<f64>> {
    let k = cs.k();
    if tape.feasible_input {
        return Ok(DMatrix::zeros(k, k));
    }
    let kb = tape.k_eps.expect("infeasible input always has a binding row");
    let b_row = cs.b().row(kb);
    let m = (b_row * (&tape.p_c - &tape.p_hat))[0];
    if m.abs() <= DIV_GUARD {
        return Err(Error::DegenerateGradient { row: kb, value: m });
    }
    let v = cs.q()[kb] - (b_row * &tape.p_hat)[0];
    let mut j = DMatrix::identity(k, k) * tape.eps_star;
    let diff = &tape.p_c - &tape.p_hat;
    let coef = v / (m * m);
    for r in 0..k {
        for c in 0..k {
            j[(r, c)] -= coef * diff[r] * b_row[c];
        }
    }
    Ok(j)
}

/// Jacobian of the interior point with respect to the distance vector:
/// the constant map `W = B^{-1} diag(BB^T)^{1/2}`.
pub fn jac_interior_wrt_distance(cs: &ConstraintSet) -> DMatrix<f64> {
    cs.dist_to_power().clone()
}

/// Pull an upstream gradient on the final output `p_e` back to gradients on
/// the raw output `p_hat` and the distance vector `d`.
///
/// For a feasible input the segment map is the identity in `p_hat` and
/// ignores `p_c`, so `g_d = 0`. A heuristic tape pins `d`, so `g_d = 0`
/// there as well.
pub fn projection_backward(
    tape: &ProjectionTape,
    cs: &ConstraintSet,
    upstream: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = cs.k();
    let g_pd = jac_scale_wrt_boundary(tape, cs).tr_mul(upstream);
    if tape.feasible_input {
        // d(p_d)/d(p_hat) = I, no dependence on p_c.
        return Ok((g_pd, DVector::zeros(k)));
    }
    let g_phat = jac_boundary_wrt_raw(tape, cs)?.tr_mul(&g_pd);
    let g_d = if tape.heuristic_d {
        DVector::zeros(k)
    } else {
        let g_pc = jac_boundary_wrt_interior(tape, cs)?.tr_mul(&g_pd);
        cs.dist_to_power().tr_mul(&g_pc)
    };
    Ok((g_phat, g_d))
}
