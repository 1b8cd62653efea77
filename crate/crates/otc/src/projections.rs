//! Euclidean projection operators used by the saddle-point solver.
//!
//! Three sets appear in the compression problem:
//!
//! * the probability simplex under a diagonal transformation,
//!   `{x : x .* eps in Delta}` — solved exactly in O(d log d) by a sorted
//!   breakpoint scan over the ratios `y_j / eps_j`;
//! * the dual-feasible slab intersection `T_{F,c} = {t : -c <= Ft <= c}` —
//!   solved iteratively (dual proximal gradient, with Dykstra's alternating
//!   projections as fallback);
//! * the budgeted box `E_k = {eps in [0,1]^d : sum eps <= k}` — solved
//!   exactly by a breakpoint scan on the threshold.

use thiserror::Error;

use crate::graph::IncidenceMatrix;

/// Entries of eps at or below this are treated as exact zeros when forming
/// the fixed-coordinate set (avoids division blow-ups in y_j / eps_j).
pub const EPS_ZERO: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("diagonal weight vector is all zero: feasible set is empty")]
    AllZeroWeights,
    #[error("weight entry {index} = {value} outside [0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("dimension {got} too large for the brute-force oracle (max {max})")]
    OracleTooLarge { got: usize, max: usize },
    #[error("budget k = {k} outside 1..=|V| = {dim}")]
    BadBudget { k: usize, dim: usize },
    #[error(
        "slab projection did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    SlabNonConvergence { residual: f64, iterations: usize },
    #[error("input length {got} does not match expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Weight vector for the diagonally transformed simplex, with its index
/// partition into positive and zero entries.
#[derive(Debug, Clone)]
pub struct DiagonalWeights {
    epsilon: Vec<f64>,
    positive: Vec<usize>,
    zero: Vec<usize>,
}

impl DiagonalWeights {
    pub fn new(epsilon: Vec<f64>) -> Result<Self, ProjectionError> {
        for (i, &e) in epsilon.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(ProjectionError::WeightOutOfRange { index: i, value: e });
            }
        }
        let positive: Vec<usize> = (0..epsilon.len())
            .filter(|&j| epsilon[j] > EPS_ZERO)
            .collect();
        if positive.is_empty() {
            return Err(ProjectionError::AllZeroWeights);
        }
        let zero = (0..epsilon.len())
            .filter(|&j| epsilon[j] <= EPS_ZERO)
            .collect();
        Ok(DiagonalWeights {
            epsilon,
            positive,
            zero,
        })
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn positive_indices(&self) -> &[usize] {
        &self.positive
    }

    pub fn zero_indices(&self) -> &[usize] {
        &self.zero
    }

    pub fn len(&self) -> usize {
        self.epsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilon.is_empty()
    }
}

/// Projection onto `{x : x .* eps in Delta}`: minimize (1/2)||x - y||^2
/// subject to the transformed simplex constraint.
///
/// Coordinates with eps_j = 0 are unconstrained and pass through unchanged.
/// Over the positive coordinates, the positive support of the optimum is a
/// prefix of the indices sorted by y_j / eps_j in non-increasing order; the
/// prefix length is the largest j whose running multiplier keeps x_j > 0.
pub fn project_diag_simplex(y: &[f64], eps: &DiagonalWeights) -> Result<Vec<f64>, ProjectionError> {
    if y.len() != eps.len() {
        return Err(ProjectionError::LengthMismatch {
            got: y.len(),
            expected: eps.len(),
        });
    }
    let mut x = y.to_vec();

    // sort positive-eps indices by y_j / eps_j, non-increasing; ties keep
    // original index order (stable sort)
    let mut order: Vec<usize> = eps.positive_indices().to_vec();
    order.sort_by(|&a, &b| {
        let ra = y[a] / eps.epsilon()[a];
        let rb = y[b] / eps.epsilon()[b];
        rb.partial_cmp(&ra).expect("non-finite ratio in projection")
    });

    let mut sum_ey = 0.0;
    let mut sum_ee = 0.0;
    let mut ell = 0;
    for (j, &idx) in order.iter().enumerate() {
        let e = eps.epsilon()[idx];
        sum_ey += e * y[idx];
        sum_ee += e * e;
        let b = y[idx] + e * (1.0 - sum_ey) / sum_ee;
        if b > 0.0 {
            ell = j + 1;
        }
        if j == 0 {
            // the optimum has at least one positive coordinate
            assert!(b > 0.0, "b_1 <= 0: no positive coordinate candidate");
        }
    }
    debug_assert!(ell >= 1);

    let mut sum_ey = 0.0;
    let mut sum_ee = 0.0;
    for &idx in order.iter().take(ell) {
        let e = eps.epsilon()[idx];
        sum_ey += e * y[idx];
        sum_ee += e * e;
    }
    let alpha = (1.0 - sum_ey) / sum_ee;

    for &idx in eps.positive_indices() {
        x[idx] = (y[idx] + alpha * eps.epsilon()[idx]).max(0.0);
    }
    Ok(x)
}

/// Brute-force oracle for [`project_diag_simplex`]: enumerate every candidate
/// positive support among the positive-eps coordinates, solve the
/// equality-constrained problem in closed form, and keep the feasible
/// candidate closest to `y`. Exponential; restricted to small dimensions.
pub fn project_diag_simplex_oracle(
    y: &[f64],
    eps: &DiagonalWeights,
) -> Result<Vec<f64>, ProjectionError> {
    const MAX_DIM: usize = 12;
    if y.len() != eps.len() {
        return Err(ProjectionError::LengthMismatch {
            got: y.len(),
            expected: eps.len(),
        });
    }
    let pos = eps.positive_indices();
    if pos.len() > MAX_DIM {
        return Err(ProjectionError::OracleTooLarge {
            got: pos.len(),
            max: MAX_DIM,
        });
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << pos.len()) {
        let support: Vec<usize> = (0..pos.len())
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| pos[j])
            .collect();
        let sum_ey: f64 = support.iter().map(|&j| eps.epsilon()[j] * y[j]).sum();
        let sum_ee: f64 = support
            .iter()
            .map(|&j| eps.epsilon()[j] * eps.epsilon()[j])
            .sum();
        let alpha = (1.0 - sum_ey) / sum_ee;
        let mut x = y.to_vec();
        for &j in pos {
            x[j] = 0.0;
        }
        let mut feasible = true;
        for &j in &support {
            let xj = y[j] + alpha * eps.epsilon()[j];
            if xj < 0.0 {
                feasible = false;
                break;
            }
            x[j] = xj;
        }
        if !feasible {
            continue;
        }
        let dist: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    Ok(best.expect("at least one feasible support exists").1)
}

/// Projection onto the budgeted box `{v in [0,1]^d : sum v <= k}`.
///
/// If clipping to the box already satisfies the budget that clip is the
/// projection; otherwise the budget is tight and the answer is
/// `clip(y - tau, 0, 1)` for the unique tau > 0 making the sum equal k,
/// found by an exact scan over the sorted breakpoints `y_j` and `y_j - 1`.
pub fn project_capped_box(y: &[f64], k: usize) -> Result<Vec<f64>, ProjectionError> {
    let d = y.len();
    if k < 1 || k > d {
        return Err(ProjectionError::BadBudget { k, dim: d });
    }
    let clipped: Vec<f64> = y.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    let total: f64 = clipped.iter().sum();
    let kf = k as f64;
    if total <= kf {
        return Ok(clipped);
    }

    // g(tau) = sum clip(y_j - tau, 0, 1) is piecewise linear, non-increasing;
    // slope changes at y_j - 1 (entry leaves the cap) and y_j (entry hits 0)
    let mut breaks: Vec<f64> = Vec::with_capacity(2 * d);
    for &v in y {
        breaks.push(v);
        breaks.push(v - 1.0);
    }
    breaks.retain(|&b| b > 0.0);
    breaks.push(0.0);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    // walk segments from the largest breakpoint down; g(max break) <= ...;
    // find the segment containing g = k and interpolate
    let g = |tau: f64| -> f64 { y.iter().map(|&v| (v - tau).clamp(0.0, 1.0)).sum() };
    let mut hi = *breaks.last().unwrap();
    let mut ghi = g(hi);
    debug_assert!(ghi <= kf);
    for &b in breaks.iter().rev().skip(1) {
        let gb = g(b);
        if gb >= kf {
            // crossing lies in [b, hi]; g is linear there
            let tau = if (gb - ghi).abs() < 1e-300 {
                b
            } else {
                b + (gb - kf) * (hi - b) / (gb - ghi)
            };
            return Ok(y.iter().map(|&v| (v - tau).clamp(0.0, 1.0)).collect());
        }
        hi = b;
        ghi = gb;
    }
    // g(0) = total > k, so the crossing is always found above
    unreachable!("capped-box breakpoint scan failed to bracket the threshold");
}

/// Options for the iterative slab projection. The residual tolerance is
/// relative: the accepted violation is `residual_tol * (1 + ||y||_inf)`,
/// since rounding alone contributes violations proportional to the scale of
/// the point being projected.
#[derive(Debug, Clone, Copy)]
pub struct SlabOptions {
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for SlabOptions {
    fn default() -> Self {
        SlabOptions {
            residual_tol: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// Projection onto `T_{F,c} = {t : -c <= Ft <= c}`.
///
/// Primary method: proximal gradient on the dual edge-multiplier problem
/// (an l1-regularized quadratic) with step 1/lambda_max(F F^T) from power
/// iteration. If it stalls, Dykstra's alternating projections over the
/// per-edge slabs is run as a verified fallback; failure of both is an error
/// carrying the final residual.
pub fn project_slabs(
    y: &[f64],
    incidence: &IncidenceMatrix,
    costs: &[f64],
    options: SlabOptions,
) -> Result<Vec<f64>, ProjectionError> {
    if y.len() != incidence.num_nodes() {
        return Err(ProjectionError::LengthMismatch {
            got: y.len(),
            expected: incidence.num_nodes(),
        });
    }
    debug_assert_eq!(costs.len(), incidence.num_rows());
    if slab_residual(y, incidence, costs) == 0.0 {
        return Ok(y.to_vec());
    }
    let scale = 1.0 + y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let options = SlabOptions {
        residual_tol: options.residual_tol * scale,
        ..options
    };
    let (t, converged) = slab_dual_prox_gradient(y, incidence, costs, options);
    if converged {
        return Ok(t);
    }
    if let Some(polished) = active_set_polish(y, &t, incidence, costs, options.residual_tol) {
        return Ok(polished);
    }
    log::debug!("slab projection: dual proximal gradient stalled, trying Dykstra");
    let (t, residual, iterations) = slab_dykstra(y, incidence, costs, options);
    if residual <= options.residual_tol {
        return Ok(t);
    }
    if let Some(polished) = active_set_polish(y, &t, incidence, costs, options.residual_tol) {
        return Ok(polished);
    }
    Err(ProjectionError::SlabNonConvergence {
        residual,
        iterations,
    })
}

/// max over edges of the slab violation |Ft(e)| - c(e), clamped at 0.
pub fn slab_residual(t: &[f64], incidence: &IncidenceMatrix, costs: &[f64]) -> f64 {
    (0..incidence.num_rows())
        .map(|e| (incidence.apply_row(e, t).abs() - costs[e]).max(0.0))
        .fold(0.0, f64::max)
}

fn slab_dual_prox_gradient(
    y: &[f64],
    incidence: &IncidenceMatrix,
    costs: &[f64],
    options: SlabOptions,
) -> (Vec<f64>, bool) {
    let m = incidence.num_rows();
    let lipschitz = power_iteration_fft(incidence).max(1e-12);
    let step = 1.0 / lipschitz;
    let mut mu = vec![0.0; m];
    // primal iterate t = y - F^T mu, kept incrementally in sync with mu
    let mut t = y.to_vec();
    for _ in 0..options.max_iterations {
        // dual objective: mu^T F y - (1/2)||F^T mu||^2 - sum c_e |mu_e|;
        // smooth-part gradient is F(y - F^T mu) = F t
        let mut max_delta = 0.0f64;
        for e in 0..m {
            let grad = incidence.apply_row(e, &t);
            let new = soft_threshold(mu[e] + step * grad, step * costs[e]);
            let delta = new - mu[e];
            if delta != 0.0 {
                let [(u, a), (v, b)] = incidence.row(e);
                t[u] -= a * delta;
                t[v] -= b * delta;
                max_delta = max_delta.max(delta.abs());
            }
            mu[e] = new;
        }
        if max_delta <= 1e-14 && slab_residual(&t, incidence, costs) <= options.residual_tol {
            return (t, true);
        }
    }
    let converged = slab_residual(&t, incidence, costs) <= options.residual_tol;
    (t, converged)
}

/// Snap a near-converged slab iterate to the exact projection by solving the
/// KKT system of the active constraints.
///
/// The projection satisfies t = y - F_A^T mu with F_A t on its active bounds,
/// where A is the active set; mu solves (F_A F_A^T) mu = F_A y - s .* c with
/// s the active side signs. The active set is guessed from `approx`, then
/// refined: constraints whose multiplier sign disagrees with the active side
/// are dropped, newly violated constraints are added, and the system is
/// re-solved. Returns None if the refinement fails to validate.
fn active_set_polish(
    y: &[f64],
    approx: &[f64],
    incidence: &IncidenceMatrix,
    costs: &[f64],
    tol: f64,
) -> Option<Vec<f64>> {
    let m = incidence.num_rows();
    // active guess: rows at (or numerically beyond) their bound
    let mut active: Vec<(usize, f64)> = (0..m)
        .filter_map(|e| {
            let z = incidence.apply_row(e, approx);
            (z.abs() >= costs[e] - 1e-7 * (1.0 + costs[e]))
                .then(|| (e, if z >= 0.0 { 1.0 } else { -1.0 }))
        })
        .collect();
    for _ in 0..2 * m + 2 {
        if active.is_empty() {
            return None;
        }
        let rhs: Vec<f64> = active
            .iter()
            .map(|&(e, s)| incidence.apply_row(e, y) - s * costs[e])
            .collect();
        let (mut mu, inconsistent) = solve_active_system(incidence, &active, &rhs);
        if !inconsistent.is_empty() {
            // the guessed equalities cannot hold simultaneously: the rows the
            // elimination found dependent have genuine slack — drop them
            for &r in inconsistent.iter().rev() {
                active.remove(r);
            }
            continue;
        }
        let candidate = |mu: &[f64]| -> Vec<f64> {
            let mut t = y.to_vec();
            for (&(e, _), &mu_e) in active.iter().zip(mu) {
                let [(u, a), (v, b)] = incidence.row(e);
                t[u] -= a * mu_e;
                t[v] -= b * mu_e;
            }
            t
        };
        let mut t = candidate(&mu);
        // iterative refinement: kill linear-algebra rounding on the
        // near-singular active system
        for _ in 0..3 {
            let defect: Vec<f64> = active
                .iter()
                .map(|&(e, s)| incidence.apply_row(e, &t) - s * costs[e])
                .collect();
            if defect.iter().all(|d| d.abs() <= 1e-15) {
                break;
            }
            let (delta, bad) = solve_active_system(incidence, &active, &defect);
            if !bad.is_empty() {
                break;
            }
            for (mu_e, d) in mu.iter_mut().zip(&delta) {
                *mu_e += d;
            }
            t = candidate(&mu);
        }
        // multipliers must push against the active side; drop violators
        let keep: Vec<(usize, f64)> = active
            .iter()
            .zip(&mu)
            .filter(|(&(_, s), &mu_e)| mu_e * s >= -1e-12)
            .map(|(&pair, _)| pair)
            .collect();
        if keep.len() < active.len() {
            active = keep;
            continue;
        }
        // add any constraint the candidate violates
        let mut grew = false;
        for e in 0..m {
            if active.iter().any(|&(ae, _)| ae == e) {
                continue;
            }
            let z = incidence.apply_row(e, &t);
            if z.abs() > costs[e] + 1e-14 * (1.0 + costs[e]) {
                active.push((e, if z >= 0.0 { 1.0 } else { -1.0 }));
                grew = true;
            }
        }
        if grew {
            active.sort_by_key(|&(e, _)| e);
            continue;
        }
        if slab_residual(&t, incidence, costs) <= tol {
            return Some(t);
        }
        return None;
    }
    None
}

/// Solve (F_A F_A^T) mu = rhs by Gaussian elimination with partial pivoting.
/// Linearly dependent active rows get mu = 0; rows that are dependent *and*
/// inconsistent are reported back by position so the caller can drop them.
fn solve_active_system(
    incidence: &IncidenceMatrix,
    active: &[(usize, f64)],
    rhs: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    let a = active.len();
    let row_dot = |e1: usize, e2: usize| -> f64 {
        let r1 = incidence.row(e1);
        let r2 = incidence.row(e2);
        let mut acc = 0.0;
        for &(n1, v1) in &r1 {
            for &(n2, v2) in &r2 {
                if n1 == n2 {
                    acc += v1 * v2;
                }
            }
        }
        acc
    };
    let mut aug: Vec<Vec<f64>> = active
        .iter()
        .zip(rhs)
        .map(|(&(ei, _), &ri)| {
            let mut row: Vec<f64> = active.iter().map(|&(ej, _)| row_dot(ei, ej)).collect();
            row.push(ri);
            row
        })
        .collect();
    let mut pivot_col_of_row: Vec<Option<usize>> = vec![None; a];
    let mut used = vec![false; a];
    for col in 0..a {
        let Some(pivot_row) = (0..a)
            .filter(|&r| !used[r])
            .max_by(|&r1, &r2| aug[r1][col].abs().partial_cmp(&aug[r2][col].abs()).unwrap())
        else {
            break;
        };
        if aug[pivot_row][col].abs() < 1e-10 {
            continue; // dependent column: mu for this constraint stays 0
        }
        used[pivot_row] = true;
        pivot_col_of_row[pivot_row] = Some(col);
        let pivot = aug[pivot_row][col];
        for r in 0..a {
            if r != pivot_row && aug[r][col].abs() > 0.0 {
                let factor = aug[r][col] / pivot;
                for k in col..=a {
                    let upd = factor * aug[pivot_row][k];
                    aug[r][k] -= upd;
                }
            }
        }
    }
    let mut mu = vec![0.0; a];
    let mut inconsistent = Vec::new();
    for r in 0..a {
        match pivot_col_of_row[r] {
            Some(col) => mu[col] = aug[r][a] / aug[r][col],
            // a zeroed-out row with nonzero right-hand side has real slack
            None if aug[r][a].abs() > 1e-15 => inconsistent.push(r),
            None => {}
        }
    }
    (mu, inconsistent)
}

fn soft_threshold(v: f64, thresh: f64) -> f64 {
    if v > thresh {
        v - thresh
    } else if v < -thresh {
        v + thresh
    } else {
        0.0
    }
}

fn slab_dykstra(
    y: &[f64],
    incidence: &IncidenceMatrix,
    costs: &[f64],
    options: SlabOptions,
) -> (Vec<f64>, f64, usize) {
    let m = incidence.num_rows();
    let mut t = y.to_vec();
    // per-slab corrections; each slab only touches its two endpoints
    let mut corrections = vec![[0.0f64; 2]; m];
    let mut iterations = 0;
    loop {
        let mut cycle_delta = 0.0f64;
        for e in 0..m {
            let [(u, _), (v, _)] = incidence.row(e);
            let shifted = [t[u] + corrections[e][0], t[v] + corrections[e][1]];
            t[u] = shifted[0];
            t[v] = shifted[1];
            project_single_slab(&mut t, incidence, e, costs[e]);
            let new_corr = [shifted[0] - t[u], shifted[1] - t[v]];
            cycle_delta = cycle_delta
                .max((new_corr[0] - corrections[e][0]).abs())
                .max((new_corr[1] - corrections[e][1]).abs());
            corrections[e] = new_corr;
        }
        iterations += 1;
        let residual = slab_residual(&t, incidence, costs);
        if (residual <= options.residual_tol && cycle_delta <= 1e-12)
            || iterations >= options.max_iterations
        {
            return (t, residual, iterations);
        }
    }
}

/// Project `t` onto the single slab |Ft(e)| <= c in place.
fn project_single_slab(t: &mut [f64], incidence: &IncidenceMatrix, e: usize, c: f64) {
    let [(u, a), (v, b)] = incidence.row(e);
    let z = a * t[u] + b * t[v];
    if z.abs() <= c {
        return;
    }
    let target = if z > 0.0 { c } else { -c };
    let scale = (z - target) / (a * a + b * b);
    t[u] -= a * scale;
    t[v] -= b * scale;
}

/// Largest eigenvalue of F F^T by power iteration (deterministic start).
fn power_iteration_fft(incidence: &IncidenceMatrix) -> f64 {
    let m = incidence.num_rows();
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64 % 7.0) * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let ftv = incidence.apply_transpose(&v);
        let w = incidence.apply(&ftv);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        v = w.iter().map(|x| x / norm).collect();
    }
    // one Rayleigh quotient for accuracy
    let ftv = incidence.apply_transpose(&v);
    let w = incidence.apply(&ftv);
    let num: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().map(|x| x * x).sum();
    if den > 0.0 {
        lambda = num / den;
    }
    lambda
}
