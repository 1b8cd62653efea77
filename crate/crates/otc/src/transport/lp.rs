//! Small dense LP solver: two-phase tableau simplex with Bland's rule.
//!
//! Solves min c^T x s.t. A x = b, x >= 0 and reports primal solution, dual
//! values, or infeasibility. Intended for tiny instances (the unsigned
//! incidence convention and the test-only transportation oracle); nothing
//! here is tuned for scale.

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        value: f64,
        /// dual value per constraint row
        duals: Vec<f64>,
    },
    Infeasible,
    Unbounded,
}

/// Solve min c^T x subject to A x = b, x >= 0.
pub fn solve_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), m);

    // tableau: m rows x (n originals + m artificials + rhs)
    let width = n + m + 1;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut row_sign = vec![1.0f64; m];
    for i in 0..m {
        let mut row = vec![0.0; width];
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        row_sign[i] = flip;
        for j in 0..n {
            row[j] = flip * a[i][j];
        }
        row[n + i] = 1.0;
        row[width - 1] = flip * b[i];
        tab.push(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase 1: minimize the sum of artificials
    let mut reduced = vec![0.0; n + m];
    let mut value = 0.0;
    for j in 0..n + m {
        let cj = if j >= n { 1.0 } else { 0.0 };
        let sum: f64 = tab.iter().map(|row| row[j]).sum();
        reduced[j] = cj - sum;
    }
    for row in &tab {
        value += row[width - 1];
    }
    if !pivot_until_optimal(&mut tab, &mut basis, &mut reduced, &mut value, n + m) {
        return LpOutcome::Unbounded; // phase 1 is bounded below by 0; defensive
    }
    if value > 1e-7 {
        return LpOutcome::Infeasible;
    }

    // phase 2 over the original columns; artificials stay in the tableau so
    // B^{-1} remains readable from their columns, but may not enter
    let cost_of = |j: usize| if j < n { c[j] } else { 0.0 };
    for j in 0..n + m {
        let cb_dot: f64 = basis
            .iter()
            .zip(&tab)
            .map(|(&bj, row)| cost_of(bj) * row[j])
            .sum();
        reduced[j] = cost_of(j) - cb_dot;
    }
    value = basis
        .iter()
        .zip(&tab)
        .map(|(&bj, row)| cost_of(bj) * row[width - 1])
        .sum();
    if !pivot_until_optimal(&mut tab, &mut basis, &mut reduced, &mut value, n) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = tab[i][width - 1];
        }
    }
    // y^T = c_B^T B^{-1}; the artificial columns hold B^{-1}
    let mut duals = vec![0.0; m];
    for i in 0..m {
        let yi: f64 = basis
            .iter()
            .zip(&tab)
            .map(|(&bj, row)| cost_of(bj) * row[n + i])
            .sum();
        duals[i] = row_sign[i] * yi;
    }
    LpOutcome::Optimal { x, value, duals }
}

/// Bland's-rule simplex iterations; entering columns restricted to < `cols`.
/// Returns false on unboundedness.
fn pivot_until_optimal(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    reduced: &mut [f64],
    value: &mut f64,
    cols: usize,
) -> bool {
    let m = tab.len();
    let width = tab[0].len();
    loop {
        let Some(enter) = (0..cols).find(|&j| reduced[j] < -PIVOT_TOL) else {
            return true;
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if tab[i][enter] > PIVOT_TOL {
                let ratio = tab[i][width - 1] / tab[i][enter];
                if ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12
                        && leave.map_or(true, |l| basis[i] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return false;
        };
        // pivot on (leave, enter)
        let pivot = tab[leave][enter];
        for v in tab[leave].iter_mut() {
            *v /= pivot;
        }
        for i in 0..m {
            if i != leave && tab[i][enter].abs() > 0.0 {
                let factor = tab[i][enter];
                let (pivot_row, row) = if i < leave {
                    let (a, b) = tab.split_at_mut(leave);
                    (&b[0], &mut a[i])
                } else {
                    let (a, b) = tab.split_at_mut(i);
                    (&a[leave], &mut b[0])
                };
                for (rv, pv) in row.iter_mut().zip(pivot_row.iter()) {
                    *rv -= factor * pv;
                }
            }
        }
        let factor = reduced[enter];
        for (rv, pv) in reduced.iter_mut().zip(tab[leave].iter()) {
            *rv -= factor * pv;
        }
        *value += factor * tab[leave][width - 1];
        basis[leave] = enter;
    }
}
