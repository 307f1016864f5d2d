//! Euclidean projection onto the feasible set, used as a reference and
//! inside the local-search baseline — never in the training path.
//!
//! Solves `min 0.5 ||p - p_hat||^2  s.t.  B p >= q,  p <= p_max 1` with a
//! primal active-set method. Dimensions are tiny (K <= 8, so at most 2K
//! inequalities), which keeps the dense subproblems trivial.
//!
//! The lower bound `p >= 0` is implied: any point satisfying the rate rows
//! has `g_ii p_i >= q_i + gamma_i sum_j g_ij p_j > 0` whenever the rate
//! targets are positive, so it is not added as an explicit constraint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;

const MAX_ITER: usize = 1000;
/// Accepted KKT residual, relative to the optimization scale. For inputs on
/// the order of the power box this is an absolute 1e-9; projecting a point
/// megawatts away (the local-search line probe does) scales the bound with
/// it, since stationarity roundoff grows with `||p_hat - x||`.
const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct L2Solution {
    pub p: DVector<f64>,
    /// Max of stationarity, primal feasibility, and complementarity residuals.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// All inequality rows as `a_i . p >= c_i`: K rate rows then K upper bounds.
/// Rows are normalized to unit Euclidean norm (the feasible set is
/// unchanged) so KKT residuals are meaningful at any gain scale.
struct Rows {
    a: Vec<DVector<f64>>,
    c: Vec<f64>,
}

impl Rows {
    fn build(cs: &ConstraintSet) -> Self {
        let k = cs.k();
        let mut a = Vec::with_capacity(2 * k);
        let mut c = Vec::with_capacity(2 * k);
        for i in 0..k {
            let n = cs.row_norms()[i];
            a.push(cs.b().row(i).transpose() / n);
            c.push(cs.q()[i] / n);
        }
        for i in 0..k {
            let mut e = DVector::zeros(k);
            e[i] = -1.0;
            a.push(e);
            c.push(-cs.p_max());
        }
        Rows { a, c }
    }

    fn value(&self, i: usize, p: &DVector<f64>) -> f64 {
        self.a[i].dot(p) - self.c[i]
    }
}

/// Euclidean projection of `p_hat` onto the feasible set. Requires a
/// feasible instance. A feasible `p_hat` is returned unchanged.
pub fn l2_projection(cs: &ConstraintSet, p_hat: &DVector<f64>) -> Result<DVector<f64>> {
    l2_projection_detailed(cs, p_hat).map(|s| s.p)
}

pub fn l2_projection_detailed(cs: &ConstraintSet, p_hat: &DVector<f64>) -> Result<L2Solution> {
    if !cs.feasible() {
        return Err(Error::Infeasible(
            "l2 projection target set is empty".into(),
        ));
    }
    let k = cs.k();
    if p_hat.len() != k {
        return Err(Error::InvalidArgument(format!(
            "p_hat length {} does not match {k} cells",
            p_hat.len()
        )));
    }
    let rows = Rows::build(cs);
    let scale = cs.p_max().max(p_hat.amax()).max(1.0);

    // Start strictly inside when possible so the first unconstrained step
    // walks straight toward p_hat; fall back to the vertex when the set has
    // no interior along the uniform direction.
    let mut x = if cs.d_max_star() > 0.0 {
        let d = DVector::from_element(k, 0.5 * cs.d_max_star());
        cs.interior_point(&d)?
    } else {
        cs.p0().clone()
    };
    let mut working: Vec<usize> = Vec::new();

    // Set after an unblocked full step: the iterate then minimizes over the
    // current working set by construction, so the next pass must check
    // multipliers rather than re-derive stationarity from the step norm
    // (which is pure roundoff when the active rows are ill-conditioned and
    // never clears a norm gate, stalling the loop).
    let mut at_minimizer = false;

    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > MAX_ITER {
            let res = kkt_residual(&rows, &x, p_hat, &working, &DVector::zeros(working.len()));
            return Err(Error::NoConvergence { iterations: MAX_ITER, residual: res });
        }

        // Step within the current working set: project (p_hat - x) onto the
        // null space of the active rows.
        let want = p_hat - &x;
        let step = if working.is_empty() {
            want.clone()
        } else {
            let m = working.len();
            let aw = DMatrix::from_fn(m, k, |r, c| rows.a[working[r]][c]);
            let gram = &aw * aw.transpose();
            let rhs = &aw * &want;
            let y = solve_spd(&gram, &rhs)?;
            &want - aw.transpose() * y
        };

        if at_minimizer || step.norm() <= 1e-13 * scale {
            at_minimizer = false;
            // Stationary on the working set; check multipliers.
            if working.is_empty() {
                return finish(rows, x, p_hat, working, iterations, scale);
            }
            let m = working.len();
            let aw = DMatrix::from_fn(m, k, |r, c| rows.a[working[r]][c]);
            let gram = &aw * aw.transpose();
            let rhs = &aw * (&x - p_hat);
            let lambda = solve_spd(&gram, &rhs)?;
            let (mut worst, mut worst_val) = (usize::MAX, -1e-11);
            for (r, l) in lambda.iter().enumerate() {
                if *l < worst_val {
                    worst_val = *l;
                    worst = r;
                }
            }
            if worst == usize::MAX {
                return finish(rows, x, p_hat, working, iterations, scale);
            }
            working.remove(worst);
            continue;
        }

        // Longest step along `step` that stays feasible; add the first
        // blocking row (smallest index on ties within tolerance).
        let mut alpha = 1.0;
        let mut blocker: Option<usize> = None;
        for i in 0..rows.a.len() {
            if working.contains(&i) {
                continue;
            }
            let dir = rows.a[i].dot(&step);
            if dir >= -1e-15 * scale {
                continue; // moving away from or along this boundary
            }
            let slack = rows.value(i, &x).max(0.0);
            let a_i = slack / (-dir);
            if a_i < alpha - 1e-15 {
                alpha = a_i;
                blocker = Some(i);
            }
        }
        x += step * alpha;
        if let Some(b) = blocker {
            working.push(b);
            working.sort_unstable();
        } else {
            at_minimizer = true;
        }
    }
}

/// Polish the candidate onto the working hyperplanes (one refinement step of
/// `x <- x + A' (A A')^-1 (c - A x)`, removing the roundoff accumulated by
/// the iterates), recompute the multipliers there, and gate on the KKT
/// residual.
fn finish(
    rows: Rows,
    mut x: DVector<f64>,
    p_hat: &DVector<f64>,
    working: Vec<usize>,
    iterations: usize,
    scale: f64,
) -> Result<L2Solution> {
    let k = x.len();
    let mut lambda = DVector::zeros(0);
    if !working.is_empty() {
        let m = working.len();
        let aw = DMatrix::from_fn(m, k, |r, c| rows.a[working[r]][c]);
        let gram = &aw * aw.transpose();
        let gap = DVector::from_fn(m, |r, _| rows.c[working[r]]) - &aw * &x;
        x += aw.transpose() * solve_spd(&gram, &gap)?;
        lambda = solve_spd(&gram, &(&aw * (&x - p_hat)))?;
    }
    let res = kkt_residual(&rows, &x, p_hat, &working, &lambda);
    if !(res <= KKT_TOL * scale) {
        return Err(Error::NoConvergence { iterations, residual: res });
    }
    Ok(L2Solution { p: x, kkt_residual: res, iterations })
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    // Dependent active rows: fall back to a pseudo-inverse solve.
    let svd = gram.clone().svd(true, true);
    svd.solve(rhs, 1e-13)
        .map_err(|e| Error::SingularGeometry(format!("active-set subproblem: {e}")))
}

fn kkt_residual(
    rows: &Rows,
    x: &DVector<f64>,
    p_hat: &DVector<f64>,
    working: &[usize],
    lambda: &DVector<f64>,
) -> f64 {
    // Stationarity: (x - p_hat) - sum lambda_i a_i = 0 over the working set.
    let mut stat = x - p_hat;
    for (r, &i) in working.iter().enumerate() {
        if r < lambda.len() {
            stat -= &rows.a[i] * lambda[r];
        }
    }
    let mut res: f64 = stat.amax();
    for i in 0..rows.a.len() {
        res = res.max(-rows.value(i, x)); // primal violation
    }
    for (r, &i) in working.iter().enumerate() {
        if r < lambda.len() {
            res = res.max((lambda[r] * rows.value(i, x)).abs()); // complementarity
        }
    }
    res
}
