//! Support selection by saddle-point optimization.
//!
//! Compressing a prior rho0 onto at most k nodes means solving
//!
//! ```text
//! min_{rho1 in Delta(V), ||rho1||_0 <= k}  W(rho0, rho1) + (lambda/2) ||rho1||^2
//! ```
//!
//! After a Boolean relaxation of the support selector eps and Lagrangian
//! elimination of rho1, this becomes a convex-concave saddle problem over
//! (eps, t, zeta):
//!
//! ```text
//! psi(eps, t, zeta) = -(1/2 lambda) sum_{v: t(v) <= -zeta} (eps(v)(t(v)+zeta)^2
//!                       + 2 lambda t(v) rho0(v))
//!                     - sum_{v: t(v) > -zeta} t(v) rho0(v) - zeta
//! ```
//!
//! minimized over eps in the capped box, maximized over slab-feasible t and
//! free zeta. A projected extragradient method drives the relaxation; the
//! averaged eps is rounded to a support, the target is recovered from the
//! dual variables via `rho1(v) = (eps(v)/lambda) max(-(t(v)+zeta), 0)`, and
//! a separation certificate can prove the rounded support exactly optimal.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_incidence, Convention, Graph, GraphError, IncidenceMatrix, NodeDistribution};
use crate::projections::{
    project_capped_box, project_slabs, ProjectionError, SlabOptions,
};
use crate::transport::{ot_distance, TransportError};

/// Divergence guard for the unprojected scalar dual variable.
pub const ZETA_ABORT: f64 = 1e6;

/// Margin below which the certificate's strict separation is not trusted.
pub const CERTIFICATE_MARGIN_TOL: f64 = 1e-6;

/// Relative mass window within which a recovered target is renormalized
/// instead of re-solved.
pub const RECOVERY_MASS_TOL: f64 = 0.05;

const BRUTEFORCE_MAX_NODES: usize = 10;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("lambda must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("budget k = {k} out of range for {num_nodes} nodes")]
    BadBudget { k: usize, num_nodes: usize },
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("non-finite {component} at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        component: &'static str,
    },
    #[error("scalar dual diverged at iteration {iteration}: |zeta| = {zeta:.3e}")]
    ZetaDiverged { iteration: usize, zeta: f64 },
    #[error("dual ascent stalled at residual {residual:.3e}")]
    AscentNonConvergence { residual: f64 },
    #[error("brute-force oracle limited to {max} nodes, got {num_nodes}")]
    TooLarge { num_nodes: usize, max: usize },
    #[error("support must be nonempty")]
    EmptySupport,
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// One iterate of the saddle solver.
#[derive(Debug, Clone)]
pub struct SaddleState {
    pub epsilon: Vec<f64>,
    pub t: Vec<f64>,
    pub zeta: f64,
}

/// Per-variable step sizes (alpha for eps, beta for t, gamma for zeta).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepSizes {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            alpha: 0.1,
            beta: 0.1,
            gamma: 0.1,
        }
    }
}

/// Saddle objective value. The quadratic branch is active where
/// `t(v) + zeta <= 0`; both branches agree on the boundary, so psi is C^1
/// there.
pub fn psi_value(
    epsilon: &[f64],
    t: &[f64],
    zeta: f64,
    rho0: &[f64],
    lambda: f64,
) -> Result<f64, CompressError> {
    if lambda <= 0.0 {
        return Err(CompressError::NonpositiveLambda(lambda));
    }
    let mut acc = 0.0;
    for v in 0..t.len() {
        let s = t[v] + zeta;
        if s <= 0.0 {
            acc -= (epsilon[v] * s * s + 2.0 * lambda * t[v] * rho0[v]) / (2.0 * lambda);
        } else {
            acc -= t[v] * rho0[v];
        }
    }
    Ok(acc - zeta)
}

/// Gradient of psi in each block. Linear in eps; concave piecewise
/// quadratic in (t, zeta).
pub fn psi_gradients(
    epsilon: &[f64],
    t: &[f64],
    zeta: f64,
    rho0: &[f64],
    lambda: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    debug_assert!(lambda > 0.0);
    let n = t.len();
    let mut grad_eps = vec![0.0; n];
    let mut grad_t = vec![0.0; n];
    let mut grad_zeta = -1.0;
    for v in 0..n {
        let s = t[v] + zeta;
        if s <= 0.0 {
            grad_eps[v] = -s * s / (2.0 * lambda);
            grad_t[v] = -epsilon[v] * s / lambda - rho0[v];
            grad_zeta -= epsilon[v] * s / lambda;
        } else {
            grad_t[v] = -rho0[v];
        }
    }
    (grad_eps, grad_t, grad_zeta)
}

#[derive(Debug, Clone)]
pub struct SaddleOptions {
    pub k: usize,
    pub lambda: f64,
    /// extragradient iterations T; the loop runs T + 1 times and the
    /// average skips the first round
    pub iterations: usize,
    pub steps: StepSizes,
    pub convention: Convention,
    pub slab: SlabOptions,
}

impl SaddleOptions {
    pub fn new(k: usize) -> Self {
        SaddleOptions {
            k,
            lambda: 1.0,
            iterations: 25,
            steps: StepSizes::default(),
            convention: Convention::Oriented,
            slab: SlabOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleOutput {
    pub state: SaddleState,
    /// step-weighted average of the gradient-step eps iterates
    pub epsilon_avg: Vec<f64>,
    /// psi at the main iterate, one entry per outer round
    pub objective_trace: Vec<f64>,
}

/// Projected extragradient on psi: descent in eps over the capped box,
/// ascent in t over the slab set, ascent in unprojected zeta.
pub fn mirror_prox(
    graph: &Graph,
    rho0: &NodeDistribution,
    options: &SaddleOptions,
) -> Result<SaddleOutput, CompressError> {
    let n = graph.num_nodes();
    rho0.check_len(graph)?;
    if options.lambda <= 0.0 {
        return Err(CompressError::NonpositiveLambda(options.lambda));
    }
    if options.k == 0 || options.k > n {
        return Err(CompressError::BadBudget {
            k: options.k,
            num_nodes: n,
        });
    }
    if options.iterations == 0 {
        return Err(CompressError::NoIterations);
    }
    let incidence = build_incidence(graph, options.convention);
    let costs = graph.costs();
    let rho = rho0.values();
    let lambda = options.lambda;
    let StepSizes { alpha, beta, gamma } = options.steps;

    let kf = options.k as f64;
    let mut eps: Vec<f64> = vec![kf / n as f64; n];
    let mut t = vec![0.0; n];
    let mut zeta = 0.0;

    let mut avg = vec![0.0; n];
    let mut weight = 0.0;
    let mut trace = Vec::with_capacity(options.iterations + 1);

    for iter in 0..=options.iterations {
        trace.push(psi_value(&eps, &t, zeta, rho, lambda)?);

        let (ge, gt, gz) = psi_gradients(&eps, &t, zeta, rho, lambda);
        let eps_hat = project_capped_box(&sub_scaled(&eps, alpha, &ge), options.k)?;
        let t_hat = project_slabs(
            &add_scaled(&t, beta, &gt),
            &incidence,
            &costs,
            options.slab,
        )?;
        let zeta_hat = zeta + gamma * gz;
        check_iterate(iter, &eps_hat, &t_hat, zeta_hat)?;

        let (ge, gt, gz) = psi_gradients(&eps_hat, &t_hat, zeta_hat, rho, lambda);
        eps = project_capped_box(&sub_scaled(&eps, alpha, &ge), options.k)?;
        t = project_slabs(
            &add_scaled(&t, beta, &gt),
            &incidence,
            &costs,
            options.slab,
        )?;
        zeta += gamma * gz;
        check_iterate(iter, &eps, &t, zeta)?;

        if iter >= 1 {
            for v in 0..n {
                avg[v] += alpha * eps_hat[v];
            }
            weight += alpha;
        }
    }

    for v in avg.iter_mut() {
        *v /= weight;
    }
    Ok(SaddleOutput {
        state: SaddleState {
            epsilon: eps,
            t,
            zeta,
        },
        epsilon_avg: avg,
        objective_trace: trace,
    })
}

fn check_iterate(
    iteration: usize,
    eps: &[f64],
    t: &[f64],
    zeta: f64,
) -> Result<(), CompressError> {
    let bad = |component| CompressError::NonFinite {
        iteration,
        component,
    };
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(bad("epsilon"));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(bad("t"));
    }
    if !zeta.is_finite() {
        return Err(bad("zeta"));
    }
    if zeta.abs() > ZETA_ABORT {
        return Err(CompressError::ZetaDiverged { iteration, zeta });
    }
    Ok(())
}

fn add_scaled(x: &[f64], s: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(&a, &b)| a + s * b).collect()
}

fn sub_scaled(x: &[f64], s: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(&a, &b)| a - s * b).collect()
}

/// Indices of the k largest averaged-selector entries, returned sorted.
/// Ties break toward larger prior mass, then smaller id; exact zeros are
/// never selected, so the result may be shorter than k.
pub fn round_topk(epsilon_avg: &[f64], k: usize, rho0: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..epsilon_avg.len())
        .filter(|&v| epsilon_avg[v] > 0.0)
        .collect();
    order.sort_by(|&a, &b| {
        epsilon_avg[b]
            .partial_cmp(&epsilon_avg[a])
            .unwrap()
            .then(rho0[b].partial_cmp(&rho0[a]).unwrap())
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Options for the restricted concave maximization of psi over (t, zeta)
/// at a fixed selector.
#[derive(Debug, Clone)]
pub struct AscentOptions {
    /// infinity-norm bound on the projected-gradient residual
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub slab: SlabOptions,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            residual_tol: 1e-8,
            max_iterations: 200_000,
            // inner projections must be much tighter than the outer
            // residual target
            slab: SlabOptions {
                residual_tol: 1e-13,
                max_iterations: 100_000,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub t: Vec<f64>,
    pub zeta: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Maximize psi over slab-feasible t and free zeta for a fixed eps, by
/// accelerated projected gradient with function-value restarts. Requires
/// some positive eps mass (otherwise psi is unbounded above in t).
pub fn ascend_t_zeta(
    epsilon: &[f64],
    rho0: &[f64],
    lambda: f64,
    incidence: &IncidenceMatrix,
    costs: &[f64],
    options: &AscentOptions,
) -> Result<AscentResult, CompressError> {
    if lambda <= 0.0 {
        return Err(CompressError::NonpositiveLambda(lambda));
    }
    let sum_eps: f64 = epsilon.iter().sum();
    let max_eps = epsilon.iter().cloned().fold(0.0, f64::max);
    if sum_eps <= 0.0 {
        return Err(CompressError::EmptySupport);
    }
    // curvature of psi in (t, zeta) is bounded by (max eps + sum eps)/lambda
    let step = lambda / (max_eps + sum_eps);
    let n = rho0.len();

    let mut t = vec![0.0; n];
    let mut zeta = 0.0;
    let mut yt = t.clone();
    let mut yz = zeta;
    let mut momentum = 1.0f64;
    let mut value = psi_value(epsilon, &t, zeta, rho0, lambda)?;
    let mut residual = f64::INFINITY;

    // any maximizer lives within the cost/regularization scale; an iterate
    // far beyond it means the slab set has a recession direction along which
    // the objective is unbounded (no finite maximizer exists)
    let drift_bound = 50.0 * (1.0 + costs.iter().sum::<f64>() + lambda * n as f64);

    for iter in 0..options.max_iterations {
        let (_, gt, gz) = psi_gradients(epsilon, &yt, yz, rho0, lambda);
        let nt = project_slabs(&add_scaled(&yt, step, &gt), incidence, costs, options.slab)?;
        let nz = yz + step * gz;
        if nz.abs() > drift_bound || nt.iter().any(|v| v.abs() > drift_bound) {
            return Err(CompressError::AscentNonConvergence { residual });
        }

        residual = (nz - yz).abs() / step;
        for v in 0..n {
            residual = residual.max((nt[v] - yt[v]).abs() / step);
        }
        if residual <= options.residual_tol {
            let value = psi_value(epsilon, &nt, nz, rho0, lambda)?;
            return Ok(AscentResult {
                t: nt,
                zeta: nz,
                value,
                iterations: iter + 1,
            });
        }

        let new_value = psi_value(epsilon, &nt, nz, rho0, lambda)?;
        if new_value < value - 1e-14 * (1.0 + value.abs()) {
            // restart momentum from the best point so far
            momentum = 1.0;
            yt.copy_from_slice(&t);
            yz = zeta;
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let mix = (momentum - 1.0) / next_momentum;
        for v in 0..n {
            yt[v] = nt[v] + mix * (nt[v] - t[v]);
        }
        yz = nz + mix * (nz - zeta);
        momentum = next_momentum;
        t = nt;
        zeta = nz;
        value = new_value;
    }
    Err(CompressError::AscentNonConvergence { residual })
}

/// Recovered target distribution plus the diagnostics of how it was
/// obtained.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub rho1: NodeDistribution,
    /// mass of the raw formula output before any normalization
    pub raw_mass: f64,
    pub renormalized: bool,
    /// true when the raw mass was out of range and the dual pair was
    /// re-solved at the fixed selector
    pub resolved: bool,
    /// true when the raw formula output was identically zero
    pub degenerate: bool,
}

fn rho1_formula(epsilon: &[f64], t: &[f64], zeta: f64, lambda: f64) -> Vec<f64> {
    epsilon
        .iter()
        .zip(t)
        .map(|(&e, &tv)| e / lambda * (-(tv + zeta)).max(0.0))
        .collect()
}

/// Rebuild the target distribution from the dual pair at a binary
/// selector: `rho1(v) = (eps(v)/lambda) (-(t(v)+zeta))_+`. Raw mass within
/// 5% of one is renormalized; anything else triggers a high-accuracy
/// re-solve of (t, zeta) at the fixed selector.
pub fn recover_rho1(
    graph: &Graph,
    rho0: &NodeDistribution,
    epsilon: &[f64],
    t: &[f64],
    zeta: f64,
    lambda: f64,
    convention: Convention,
) -> Result<Recovery, CompressError> {
    let raw = rho1_formula(epsilon, t, zeta, lambda);
    let raw_mass: f64 = raw.iter().sum();
    let degenerate = raw_mass == 0.0;
    let in_window = (raw_mass - 1.0).abs() <= RECOVERY_MASS_TOL;

    if !degenerate && in_window {
        return Ok(Recovery {
            rho1: normalize(raw, raw_mass),
            raw_mass,
            renormalized: true,
            resolved: false,
            degenerate: false,
        });
    }

    let incidence = build_incidence(graph, convention);
    let costs = graph.costs();
    let ascent = ascend_t_zeta(
        epsilon,
        rho0.values(),
        lambda,
        &incidence,
        &costs,
        &AscentOptions::default(),
    )?;
    let raw2 = rho1_formula(epsilon, &ascent.t, ascent.zeta, lambda);
    let mass2: f64 = raw2.iter().sum();
    if mass2 <= 0.0 {
        return Err(CompressError::AscentNonConvergence { residual: 1.0 });
    }
    Ok(Recovery {
        rho1: normalize(raw2, mass2),
        raw_mass,
        renormalized: true,
        resolved: true,
        degenerate,
    })
}

fn normalize(mut v: Vec<f64>, mass: f64) -> NodeDistribution {
    for x in v.iter_mut() {
        *x /= mass;
    }
    // pin the sum to exactly one against roundoff
    let sum: f64 = v.iter().sum();
    let top = (0..v.len())
        .max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap())
        .unwrap();
    v[top] += 1.0 - sum;
    NodeDistribution::simplex(v).expect("normalized vector is on the simplex")
}

/// Outcome of the support-exactness test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Certificate {
    /// the separation condition holds with this margin; the relaxation
    /// provably recovers the given support
    Exact { margin: f64 },
    NotCertified { reason: String },
}

impl Certificate {
    pub fn is_exact(&self) -> bool {
        matches!(self, Certificate::Exact { .. })
    }
}

/// Decide whether a support is provably the optimal one. Solves the
/// restricted concave dual at the support indicator, forms the separation
/// value `h(v) = (-(t(v)+zeta))_+` for every node, and certifies when the
/// in-support values strictly dominate the out-of-support values.
pub fn certify(
    graph: &Graph,
    rho0: &NodeDistribution,
    support: &[usize],
    lambda: f64,
    convention: Convention,
) -> Result<Certificate, CompressError> {
    if support.is_empty() {
        return Err(CompressError::EmptySupport);
    }
    let n = graph.num_nodes();
    let mut eps = vec![0.0; n];
    for &v in support {
        eps[v] = 1.0;
    }
    let incidence = build_incidence(graph, convention);
    let costs = graph.costs();
    let ascent = match ascend_t_zeta(
        &eps,
        rho0.values(),
        lambda,
        &incidence,
        &costs,
        &AscentOptions::default(),
    ) {
        Ok(a) => a,
        Err(CompressError::AscentNonConvergence { residual }) => {
            return Ok(Certificate::NotCertified {
                reason: format!("dual ascent stalled at residual {residual:.3e}"),
            })
        }
        Err(e) => return Err(e),
    };
    let h: Vec<f64> = (0..n)
        .map(|v| (-(ascent.t[v] + ascent.zeta)).max(0.0))
        .collect();
    let min_in = support
        .iter()
        .map(|&v| h[v])
        .fold(f64::INFINITY, f64::min);
    let max_out = (0..n)
        .filter(|v| eps[*v] == 0.0)
        .map(|v| h[v])
        .fold(0.0, f64::max);
    if min_in - max_out >= CERTIFICATE_MARGIN_TOL {
        Ok(Certificate::Exact {
            margin: (min_in + max_out) / 2.0,
        })
    } else {
        Ok(Certificate::NotCertified {
            reason: format!(
                "separation gap {:.3e} below threshold (in-support min {:.3e}, out-of-support max {:.3e})",
                min_in - max_out,
                min_in,
                max_out
            ),
        })
    }
}

/// Full output of one compression run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionReport {
    pub support: Vec<usize>,
    /// recovered target over all nodes; zero off the support
    pub rho1: Vec<f64>,
    pub epsilon_avg: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub certificate: Certificate,
    /// exact transport cost from the prior to the recovered target; absent
    /// when the chosen convention admits no feasible routing
    pub transport_cost: Option<f64>,
    pub raw_mass: f64,
    pub renormalized: bool,
    pub resolved: bool,
    pub degenerate: bool,
    pub k: usize,
    pub lambda: f64,
    pub iterations: usize,
    /// excluded from serialized reports so identical runs emit identical
    /// bytes
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// End-to-end pipeline: saddle solve, round to a support, recover the
/// target, compute its exact transport cost, and attempt a certificate.
pub fn compress(
    graph: &Graph,
    rho0: &NodeDistribution,
    options: &SaddleOptions,
) -> Result<CompressionReport, CompressError> {
    let start = Instant::now();
    let out = mirror_prox(graph, rho0, options)?;
    let support = round_topk(&out.epsilon_avg, options.k, rho0.values());
    if support.is_empty() {
        return Err(CompressError::EmptySupport);
    }
    let n = graph.num_nodes();
    let mut eps_bin = vec![0.0; n];
    for &v in &support {
        eps_bin[v] = 1.0;
    }
    let recovery = recover_rho1(
        graph,
        rho0,
        &eps_bin,
        &out.state.t,
        out.state.zeta,
        options.lambda,
        options.convention,
    )?;
    let transport_cost = match ot_distance(graph, rho0, &recovery.rho1, options.convention) {
        Ok(sol) => Some(sol.primal_value),
        Err(TransportError::Infeasible(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let certificate = certify(graph, rho0, &support, options.lambda, options.convention)?;
    Ok(CompressionReport {
        support,
        rho1: recovery.rho1.values().to_vec(),
        epsilon_avg: out.epsilon_avg,
        objective_trace: out.objective_trace,
        certificate,
        transport_cost,
        raw_mass: recovery.raw_mass,
        renormalized: recovery.renormalized,
        resolved: recovery.resolved,
        degenerate: recovery.degenerate,
        k: options.k,
        lambda: options.lambda,
        iterations: options.iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Exhaustive oracle: enumerate every support of size at most k, solve the
/// restricted concave dual exactly at each, and return the support with
/// the smallest optimal value. Small graphs only.
pub fn compress_bruteforce(
    graph: &Graph,
    rho0: &NodeDistribution,
    k: usize,
    lambda: f64,
    convention: Convention,
) -> Result<(Vec<usize>, f64), CompressError> {
    let n = graph.num_nodes();
    if n > BRUTEFORCE_MAX_NODES {
        return Err(CompressError::TooLarge {
            num_nodes: n,
            max: BRUTEFORCE_MAX_NODES,
        });
    }
    if k == 0 || k > n {
        return Err(CompressError::BadBudget { k, num_nodes: n });
    }
    let incidence = build_incidence(graph, convention);
    let costs = graph.costs();
    let opts = AscentOptions::default();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let support: Vec<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
        let mut eps = vec![0.0; n];
        for &v in &support {
            eps[v] = 1.0;
        }
        let ascent = ascend_t_zeta(&eps, rho0.values(), lambda, &incidence, &costs, &opts)?;
        match &best {
            Some((_, value)) if ascent.value >= value - 1e-12 => {}
            _ => best = Some((support, ascent.value)),
        }
    }
    Ok(best.expect("at least one support was evaluated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// independent reformulation: psi = -(1/2L) sum eps_v (r_v)_+^2
    /// - t.rho0 - zeta with r = -(t + zeta 1)
    fn psi_oracle(eps: &[f64], t: &[f64], zeta: f64, rho0: &[f64], lambda: f64) -> f64 {
        let quad: f64 = eps
            .iter()
            .zip(t)
            .map(|(&e, &tv)| {
                let r = (-(tv + zeta)).max(0.0);
                e * r * r
            })
            .sum();
        let lin: f64 = t.iter().zip(rho0).map(|(&tv, &r)| tv * r).sum();
        -quad / (2.0 * lambda) - lin - zeta
    }

    fn simplex(v: &[f64]) -> NodeDistribution {
        NodeDistribution::simplex(v.to_vec()).unwrap()
    }

    fn star5() -> Graph {
        Graph::new(
            5,
            (1..5).map(|v| Edge::undirected(0, v, 1.0)).collect(),
        )
        .unwrap()
    }

    fn path(n: usize) -> Graph {
        Graph::new(
            n,
            (1..n).map(|v| Edge::undirected(v - 1, v, 1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn psi_trivial_points() {
        let rho0 = [0.25, 0.25, 0.5];
        let eps = [0.3, 0.9, 0.1];
        let t = [0.0; 3];
        assert_eq!(psi_value(&eps, &t, 0.0, &rho0, 1.0).unwrap(), 0.0);
        assert_eq!(psi_value(&eps, &t, 1.0, &rho0, 1.0).unwrap(), -1.0);
        assert!(psi_value(&eps, &t, 0.0, &rho0, -1.0).is_err());
    }

    #[test]
    fn psi_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = 4;
            let eps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let zeta = rng.gen_range(-2.0..2.0);
            let rho0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let lambda = rng.gen_range(0.2..3.0);
            let a = psi_value(&eps, &t, zeta, &rho0, lambda).unwrap();
            let b = psi_oracle(&eps, &t, zeta, &rho0, lambda);
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn gradients_trivial_points() {
        let rho0 = [0.2, 0.3, 0.5];
        let eps = [0.4, 0.8, 0.2];
        let (ge, gt, gz) = psi_gradients(&eps, &[0.0; 3], 1.0, &rho0, 1.0);
        assert_eq!(ge, vec![0.0; 3]);
        assert_eq!(gt, vec![-0.2, -0.3, -0.5]);
        assert_eq!(gz, -1.0);
        // zero selector: quadratic terms vanish on every branch
        let (_, gt, gz) = psi_gradients(&[0.0; 3], &[-1.0, 0.5, -0.2], 0.1, &rho0, 1.0);
        assert_eq!(gt, vec![-0.2, -0.3, -0.5]);
        assert_eq!(gz, -1.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 100 {
            let n = 6;
            let eps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let zeta = rng.gen_range(-1.0..1.0);
            if t.iter().any(|&tv| (tv + zeta).abs() < 1e-4) {
                continue; // kink-adjacent states excluded
            }
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let rho0: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let lambda = rng.gen_range(0.5..2.0);
            let (ge, gt, gz) = psi_gradients(&eps, &t, zeta, &rho0, lambda);
            let psi = |eps: &[f64], t: &[f64], zeta: f64| {
                psi_value(eps, t, zeta, &rho0, lambda).unwrap()
            };
            for v in 0..n {
                let mut ep = eps.clone();
                ep[v] += h;
                let mut em = eps.clone();
                em[v] -= h;
                let fd = (psi(&ep, &t, zeta) - psi(&em, &t, zeta)) / (2.0 * h);
                assert!((fd - ge[v]).abs() <= 1e-5, "eps[{v}]: {fd} vs {}", ge[v]);
                let mut tp = t.clone();
                tp[v] += h;
                let mut tm = t.clone();
                tm[v] -= h;
                let fd = (psi(&eps, &tp, zeta) - psi(&eps, &tm, zeta)) / (2.0 * h);
                assert!((fd - gt[v]).abs() <= 1e-5, "t[{v}]: {fd} vs {}", gt[v]);
            }
            let fd = (psi(&eps, &t, zeta + h) - psi(&eps, &t, zeta - h)) / (2.0 * h);
            assert!((fd - gz).abs() <= 1e-5, "zeta: {fd} vs {gz}");
            checked += 1;
        }
    }

    #[test]
    fn psi_concave_in_duals_linear_in_selector() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = 5;
            let rho0: Vec<f64> = vec![0.2; n];
            let lambda = 1.0;
            let eps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let ta: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let tb: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let za = rng.gen_range(-2.0..2.0);
            let zb = rng.gen_range(-2.0..2.0);
            let tm: Vec<f64> = ta.iter().zip(&tb).map(|(&a, &b)| (a + b) / 2.0).collect();
            let mid = psi_value(&eps, &tm, (za + zb) / 2.0, &rho0, lambda).unwrap();
            let avg = (psi_value(&eps, &ta, za, &rho0, lambda).unwrap()
                + psi_value(&eps, &tb, zb, &rho0, lambda).unwrap())
                / 2.0;
            assert!(mid >= avg - 1e-12);

            let ea: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let eb: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let em: Vec<f64> = ea.iter().zip(&eb).map(|(&a, &b)| (a + b) / 2.0).collect();
            let mid = psi_value(&em, &ta, za, &rho0, lambda).unwrap();
            let avg = (psi_value(&ea, &ta, za, &rho0, lambda).unwrap()
                + psi_value(&eb, &ta, za, &rho0, lambda).unwrap())
                / 2.0;
            assert!((mid - avg).abs() <= 1e-12 * (1.0 + avg.abs()));
        }
    }

    #[test]
    fn round_topk_examples() {
        assert_eq!(round_topk(&[0.9, 0.2, 0.7], 2, &[0.3, 0.3, 0.4]), vec![0, 2]);
        assert_eq!(round_topk(&[1.0, 0.0, 1.0], 2, &[0.3, 0.3, 0.4]), vec![0, 2]);
        // tie broken by larger prior mass
        assert_eq!(round_topk(&[0.5, 0.5, 0.0], 1, &[0.2, 0.3, 0.5]), vec![1]);
        // zeros never selected even under budget
        assert_eq!(round_topk(&[0.4, 0.0, 0.0], 2, &[0.3, 0.3, 0.4]), vec![0]);
    }

    #[test]
    fn recover_direct_formula() {
        let g = path(3);
        let rho0 = simplex(&[0.25, 0.5, 0.25]);
        let rec = recover_rho1(
            &g,
            &rho0,
            &[1.0, 1.0, 1.0],
            &[-0.6, -0.4, 0.3],
            0.0,
            1.0,
            Convention::Oriented,
        )
        .unwrap();
        assert!(!rec.resolved && !rec.degenerate);
        assert!((rec.raw_mass - 1.0).abs() < 1e-12);
        let v = rec.rho1.values();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.4).abs() < 1e-12);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn recover_degenerate_falls_back() {
        let g = path(3);
        let rho0 = simplex(&[0.25, 0.5, 0.25]);
        // t = -zeta 1 exactly: raw formula gives zero mass
        let rec = recover_rho1(
            &g,
            &rho0,
            &[1.0, 1.0, 1.0],
            &[-0.5, -0.5, -0.5],
            0.5,
            1.0,
            Convention::Oriented,
        )
        .unwrap();
        assert!(rec.degenerate);
        assert!(rec.resolved);
        assert!((rec.rho1.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ascent_value_matches_primal_restricted_optimum() {
        // max_{t,zeta} psi at a binary selector equals
        // min_{rho1 on the support} W(rho0, rho1) + (lambda/2)||rho1||^2
        let g = star5();
        let rho0 = crate::graph::stationary_prior(&g).unwrap();
        let incidence = build_incidence(&g, Convention::Oriented);
        let costs = g.costs();
        for support in [vec![0], vec![1], vec![0, 2]] {
            let mut eps = vec![0.0; 5];
            for &v in &support {
                eps[v] = 1.0;
            }
            let ascent =
                ascend_t_zeta(&eps, rho0.values(), 1.0, &incidence, &costs, &AscentOptions::default())
                    .unwrap();
            let raw = rho1_formula(&eps, &ascent.t, ascent.zeta, 1.0);
            let mass: f64 = raw.iter().sum();
            assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
            let rho1 = normalize(raw, mass);
            let w = ot_distance(&g, &rho0, &rho1, Convention::Oriented)
                .unwrap()
                .primal_value;
            let sq: f64 = rho1.values().iter().map(|x| x * x).sum();
            let primal = w + 0.5 * sq;
            assert!(
                (ascent.value - primal).abs() < 1e-5,
                "dual {} vs primal {primal} on {support:?}",
                ascent.value
            );
        }
    }

    #[test]
    fn bruteforce_star_selects_hub() {
        let g = star5();
        let rho0 = crate::graph::stationary_prior(&g).unwrap();
        let (support, _) = compress_bruteforce(&g, &rho0, 1, 1.0, Convention::Oriented).unwrap();
        assert_eq!(support, vec![0]);
    }

    #[test]
    fn bruteforce_symmetric_pair_values_match() {
        let g = Graph::new(2, vec![Edge::undirected(0, 1, 1.0)]).unwrap();
        let rho0 = simplex(&[0.5, 0.5]);
        let incidence = build_incidence(&g, Convention::Oriented);
        let costs = g.costs();
        let mut values = Vec::new();
        for v in 0..2 {
            let mut eps = vec![0.0; 2];
            eps[v] = 1.0;
            let a = ascend_t_zeta(
                &eps,
                rho0.values(),
                1.0,
                &incidence,
                &costs,
                &AscentOptions::default(),
            )
            .unwrap();
            values.push(a.value);
        }
        assert!((values[0] - values[1]).abs() < 1e-7);
        let (support, _) = compress_bruteforce(&g, &rho0, 1, 1.0, Convention::Oriented).unwrap();
        assert_eq!(support, vec![0]); // deterministic tie-break
    }

    #[test]
    fn mirror_prox_budget_not_binding() {
        let g = path(4);
        let rho0 = crate::graph::stationary_prior(&g).unwrap();
        let options = SaddleOptions::new(4);
        let out = mirror_prox(&g, &rho0, &options).unwrap();
        assert!(out.epsilon_avg.iter().all(|&e| e > 0.0));
        let support = round_topk(&out.epsilon_avg, 4, rho0.values());
        assert_eq!(support, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mirror_prox_symmetric_tie_selects_node_zero() {
        let g = Graph::new(2, vec![Edge::undirected(0, 1, 1.0)]).unwrap();
        let rho0 = simplex(&[0.5, 0.5]);
        let out = mirror_prox(&g, &rho0, &SaddleOptions::new(1)).unwrap();
        assert!((out.epsilon_avg[0] - out.epsilon_avg[1]).abs() < 1e-9);
        assert_eq!(round_topk(&out.epsilon_avg, 1, rho0.values()), vec![0]);
    }

    #[test]
    fn mirror_prox_iterates_stay_feasible() {
        let g = star5();
        let rho0 = crate::graph::stationary_prior(&g).unwrap();
        let mut options = SaddleOptions::new(2);
        options.iterations = 40;
        let out = mirror_prox(&g, &rho0, &options).unwrap();
        let s: f64 = out.state.epsilon.iter().sum();
        assert!(s <= 2.0 + 1e-10);
        assert!(out.state.epsilon.iter().all(|&e| (0.0..=1.0).contains(&e)));
        let f = build_incidence(&g, Convention::Oriented);
        for (e, edge) in g.edges().iter().enumerate() {
            assert!(f.apply_row(e, &out.state.t).abs() <= edge.cost + 1e-8);
        }
        assert_eq!(out.objective_trace.len(), 41);
    }

    #[test]
    fn compress_star_k1_selects_hub() {
        let g = star5();
        let rho0 = crate::graph::stationary_prior(&g).unwrap();
        let report = compress(&g, &rho0, &SaddleOptions::new(1)).unwrap();
        assert_eq!(report.support, vec![0]);
        assert!((report.rho1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(report.rho1[0] > 0.99);
    }

    #[test]
    fn certify_full_support() {
        let g = path(3);
        let rho0 = simplex(&[0.25, 0.5, 0.25]);
        let cert = certify(&g, &rho0, &[0, 1, 2], 1.0, Convention::Oriented).unwrap();
        let Certificate::Exact { margin } = cert else {
            panic!("full support with all-positive target must certify");
        };
        assert!(margin > 0.0);
    }

    #[test]
    fn compress_agrees_with_bruteforce_when_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut certified = 0;
        for trial in 0..12 {
            let n = rng.gen_range(3..=6);
            let mut edges = Vec::new();
            for v in 1..n {
                let u = rng.gen_range(0..v);
                edges.push(Edge::undirected(u, v, rng.gen_range(0.1..1.5)));
            }
            let g = Graph::new(n, edges).unwrap();
            let rho0 = crate::graph::stationary_prior(&g).unwrap();
            let k = rng.gen_range(1..=n);
            let mut options = SaddleOptions::new(k);
            options.iterations = 200;
            let report = compress(&g, &rho0, &options).unwrap();
            if report.certificate.is_exact() {
                let (oracle, _) = compress_bruteforce(&g, &rho0, k, 1.0, Convention::Oriented).unwrap();
                assert_eq!(report.support, oracle, "trial {trial}");
                certified += 1;
            }
        }
        assert!(certified > 0, "no instance certified; suite is vacuous");
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let g = path(3);
        let rho0 = simplex(&[0.25, 0.5, 0.25]);
        let mut options = SaddleOptions::new(0);
        assert!(matches!(
            mirror_prox(&g, &rho0, &options),
            Err(CompressError::BadBudget { .. })
        ));
        options.k = 4;
        assert!(matches!(
            mirror_prox(&g, &rho0, &options),
            Err(CompressError::BadBudget { .. })
        ));
        options.k = 2;
        options.lambda = 0.0;
        assert!(matches!(
            mirror_prox(&g, &rho0, &options),
            Err(CompressError::NonpositiveLambda(_))
        ));
        assert!(matches!(
            compress_bruteforce(&g, &rho0, 5, 1.0, Convention::Oriented),
            Err(CompressError::BadBudget { .. })
        ));
    }
    #[test]
    fn certify_never_accepts_partial_support() {
        // the restricted dual prices every out-of-support node at a
        // neighbor's value plus the edge cost, so strict separation can
        // only hold when the complement is empty; no proper subset may
        // ever be certified, under either incidence convention
        let g = Graph::new(
            4,
            vec![
                Edge::undirected(0, 1, 0.2),
                Edge::undirected(1, 2, 1.0),
                Edge::undirected(2, 3, 0.2),
                Edge::undirected(0, 3, 1.5),
            ],
        )
        .unwrap();
        let rho0 = crate::graph::stationary_prior(&g).unwrap();
        let (oracle, _) = compress_bruteforce(&g, &rho0, 2, 1.0, Convention::Oriented).unwrap();
        assert_eq!(oracle.len(), 2);
        for s in [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]] {
            for conv in [Convention::Oriented, Convention::AsWritten] {
                let cert = certify(&g, &rho0, &s, 1.0, conv).unwrap();
                assert!(!cert.is_exact(), "partial support {s:?} certified under {conv:?}");
            }
        }
        let cert = certify(&g, &rho0, &[0, 1, 2, 3], 1.0, Convention::Oriented).unwrap();
        assert!(cert.is_exact(), "full support must certify: {cert:?}");
    }

}
