//! Exact optimal transport on mixed graphs.
//!
//! The primal problem routes mass from rho0 to rho1 along edges, paying the
//! edge cost per unit in either direction:
//!
//! ```text
//! W(rho0, rho1) = min  sum_e c(e) (J+(e) + J-(e))
//!                 s.t. net flow balances rho1 - rho0,   J+, J- >= 0
//! ```
//!
//! with J-(e) forced to zero on directed edges. The dual maximizes
//! t^T (rho1 - rho0) over potentials t with -c <= Ft <= c. The oriented
//! (signed) convention is solved exactly by min-cost flow; the unsigned
//! as-written convention has no flow structure and goes through a small
//! dense simplex LP.

mod lp;
mod mcf;

pub use lp::{solve_lp, LpOutcome};
pub use mcf::MASS_SCALE;

use thiserror::Error;

use crate::graph::{
    build_incidence, Convention, EdgeKind, Graph, GraphError, IncidenceMatrix, NodeDistribution,
};

/// An edge is active when its total flow exceeds this fraction of the unit
/// total mass.
pub const ACTIVE_TOL: f64 = 1e-9;

/// Tightness tolerance for |Ft(e)| = c(e) on active edges.
pub const TIGHTNESS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("transport problem is infeasible under the {0:?} convention")]
    Infeasible(Convention),
    #[error("potentials violate the slab on edge {edge}: |Ft| = {value:.6} > c = {cost:.6}")]
    DualInfeasible { edge: usize, value: f64, cost: f64 },
}

/// Optimal flow pair, dual potentials, and both objective values.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub jplus: Vec<f64>,
    pub jminus: Vec<f64>,
    pub potentials: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub active_edges: Vec<usize>,
    pub convention: Convention,
}

impl TransportSolution {
    /// max-norm violation of the balance constraint against the true
    /// (unquantized) distributions.
    pub fn feasibility_residual(
        &self,
        graph: &Graph,
        rho0: &NodeDistribution,
        rho1: &NodeDistribution,
    ) -> f64 {
        let f = build_incidence(graph, self.convention);
        let signed: Vec<f64> = match self.convention {
            // J+ follows the stored orientation, so its net inflow is F^T J+
            Convention::Oriented => (0..graph.num_edges())
                .map(|e| self.jplus[e] - self.jminus[e])
                .collect(),
            // the unsigned constraint is written with J- - J+
            Convention::AsWritten => (0..graph.num_edges())
                .map(|e| self.jminus[e] - self.jplus[e])
                .collect(),
        };
        let net = f.apply_transpose(&signed);
        (0..graph.num_nodes())
            .map(|v| (net[v] - (rho1.get(v) - rho0.get(v))).abs())
            .fold(0.0, f64::max)
    }

    /// max over edges of min(J+, J-): zero by Theorem-style complementarity.
    pub fn complementarity_residual(&self) -> f64 {
        self.jplus
            .iter()
            .zip(&self.jminus)
            .map(|(&p, &m)| p.min(m))
            .fold(0.0, f64::max)
    }
}

/// Exact transport distance with primal flows and dual potentials.
pub fn ot_distance(
    graph: &Graph,
    rho0: &NodeDistribution,
    rho1: &NodeDistribution,
    convention: Convention,
) -> Result<TransportSolution, TransportError> {
    rho0.check_len(graph)?;
    rho1.check_len(graph)?;
    match convention {
        Convention::Oriented => {
            let sol = mcf::solve(graph, rho0.values(), rho1.values())
                .ok_or(TransportError::Infeasible(convention))?;
            log::debug!(
                "flow solve: per-node quantization error bounded by {:.1e}",
                sol.quantization_error
            );
            let m = graph.num_edges();
            let mut jplus = vec![0.0; m];
            let mut jminus = vec![0.0; m];
            for e in 0..m {
                let net = sol.edge_net_flow[e];
                if net >= 0.0 {
                    jplus[e] = net;
                } else {
                    jminus[e] = -net;
                }
            }
            let primal_value = sol.cost;
            let dual_value: f64 = (0..graph.num_nodes())
                .map(|v| sol.potentials[v] * (rho1.get(v) - rho0.get(v)))
                .sum();
            let active_edges = (0..m)
                .filter(|&e| jplus[e] + jminus[e] > ACTIVE_TOL)
                .collect();
            Ok(TransportSolution {
                jplus,
                jminus,
                potentials: sol.potentials,
                primal_value,
                dual_value,
                active_edges,
                convention,
            })
        }
        Convention::AsWritten => as_written_lp(graph, rho0, rho1),
    }
}

/// The unsigned convention as a dense LP. Variables are stacked [J+; J-]
/// with the J- column omitted for directed edges.
fn as_written_lp(
    graph: &Graph,
    rho0: &NodeDistribution,
    rho1: &NodeDistribution,
) -> Result<TransportSolution, TransportError> {
    let n = graph.num_nodes();
    let m = graph.num_edges();
    let f = build_incidence(graph, Convention::AsWritten);

    let mut columns: Vec<(usize, f64, bool)> = Vec::new(); // (edge, cost, is_minus)
    for (e, edge) in graph.edges().iter().enumerate() {
        columns.push((e, edge.cost, false));
        if edge.kind == EdgeKind::Undirected {
            columns.push((e, edge.cost, true));
        }
    }
    let costs: Vec<f64> = columns.iter().map(|&(_, c, _)| c).collect();
    let mut a = vec![vec![0.0; columns.len()]; n];
    for (j, &(e, _, is_minus)) in columns.iter().enumerate() {
        let sign = if is_minus { 1.0 } else { -1.0 };
        let [(u, fu), (v, fv)] = f.row(e);
        a[u][j] = sign * fu;
        a[v][j] = sign * fv;
    }
    let b: Vec<f64> = (0..n).map(|v| rho1.get(v) - rho0.get(v)).collect();

    match lp::solve_lp(&costs, &a, &b) {
        LpOutcome::Optimal { x, value, duals } => {
            let mut jplus = vec![0.0; m];
            let mut jminus = vec![0.0; m];
            for (j, &(e, _, is_minus)) in columns.iter().enumerate() {
                if is_minus {
                    jminus[e] += x[j];
                } else {
                    jplus[e] += x[j];
                }
            }
            let dual_value: f64 = duals.iter().zip(&b).map(|(y, bb)| y * bb).sum();
            let active_edges = (0..m)
                .filter(|&e| jplus[e] + jminus[e] > ACTIVE_TOL)
                .collect();
            Ok(TransportSolution {
                jplus,
                jminus,
                potentials: duals,
                primal_value: value,
                dual_value,
                active_edges,
                convention: Convention::AsWritten,
            })
        }
        LpOutcome::Infeasible => Err(TransportError::Infeasible(Convention::AsWritten)),
        LpOutcome::Unbounded => unreachable!("transport primal is bounded below by zero"),
    }
}

/// Dual objective t^T (rho1 - rho0) after checking slab feasibility. For
/// directed edges only the upper slab Ft <= c applies (J- is fixed to zero,
/// so the lower multiplier never exists).
pub fn dual_objective(
    graph: &Graph,
    t: &[f64],
    rho0: &NodeDistribution,
    rho1: &NodeDistribution,
    convention: Convention,
) -> Result<f64, TransportError> {
    let f = build_incidence(graph, convention);
    const FEAS_TOL: f64 = 1e-9;
    for (e, edge) in graph.edges().iter().enumerate() {
        let ft = f.apply_row(e, t);
        let violated = match edge.kind {
            EdgeKind::Undirected => ft.abs() > edge.cost + FEAS_TOL,
            EdgeKind::Directed => ft > edge.cost + FEAS_TOL,
        };
        if violated {
            return Err(TransportError::DualInfeasible {
                edge: e,
                value: ft.abs(),
                cost: edge.cost,
            });
        }
    }
    Ok((0..graph.num_nodes())
        .map(|v| t[v] * (rho1.get(v) - rho0.get(v)))
        .sum())
}

/// Test oracle: Wasserstein-1 under the shortest-path metric, solved as a
/// dense transportation LP. Equals the oriented-convention transport
/// distance; meant for small instances only.
pub fn w1_oracle(graph: &Graph, rho0: &NodeDistribution, rho1: &NodeDistribution) -> f64 {
    let n = graph.num_nodes();
    let dist = all_pairs_shortest_paths(graph);
    // variables P(u, v) row-major; row sums rho0, column sums rho1 (one
    // redundant constraint is harmless for the two-phase solver)
    let mut costs = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            costs.push(dist[u][v]);
        }
    }
    let mut a = vec![vec![0.0; n * n]; 2 * n];
    for u in 0..n {
        for v in 0..n {
            a[u][u * n + v] = 1.0;
            a[n + v][u * n + v] = 1.0;
        }
    }
    let mut b = vec![0.0; 2 * n];
    for v in 0..n {
        b[v] = rho0.get(v);
        b[n + v] = rho1.get(v);
    }
    match lp::solve_lp(&costs, &a, &b) {
        LpOutcome::Optimal { value, .. } => value,
        other => panic!("transportation LP must be solvable: {other:?}"),
    }
}

/// Shortest-path distances under edge costs, honoring edge directions.
fn all_pairs_shortest_paths(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.num_nodes();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (s, row) in dist.iter_mut().enumerate() {
        row[s] = 0.0;
        // Bellman-Ford is plenty at oracle sizes
        for _ in 0..n {
            let mut changed = false;
            for (e, edge) in graph.edges().iter().enumerate() {
                let (tail, head) = graph.orientation(e);
                if row[tail] + edge.cost < row[head] - 1e-15 {
                    row[head] = row[tail] + edge.cost;
                    changed = true;
                }
                if edge.kind == EdgeKind::Undirected && row[head] + edge.cost < row[tail] - 1e-15 {
                    row[tail] = row[head] + edge.cost;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    dist
}

/// Per-edge tightness check on active edges: |Ft(e)| must equal c(e).
#[derive(Debug, Clone)]
pub struct TightnessReport {
    /// (edge, |Ft(e)|, c(e)) for every active edge violating tightness
    pub violations: Vec<(usize, f64, f64)>,
    pub checked_edges: usize,
}

impl TightnessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify that every active edge in an optimal solution has |Ft(e)| = c(e)
/// within [`TIGHTNESS_TOL`]. Zero-flow solutions pass vacuously.
pub fn check_active_tightness(solution: &TransportSolution, graph: &Graph) -> TightnessReport {
    let f = build_incidence(graph, solution.convention);
    let mut violations = Vec::new();
    for &e in &solution.active_edges {
        let ft = f.apply_row(e, &solution.potentials);
        let c = graph.edge(e).cost;
        if (ft.abs() - c).abs() > TIGHTNESS_TOL {
            violations.push((e, ft.abs(), c));
        }
    }
    TightnessReport {
        violations,
        checked_edges: solution.active_edges.len(),
    }
}

/// Incidence matrix accessor shared by callers that need F alongside the
/// transport routines.
pub fn incidence(graph: &Graph, convention: Convention) -> IncidenceMatrix {
    build_incidence(graph, convention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn simplex(v: &[f64]) -> NodeDistribution {
        NodeDistribution::simplex(v.to_vec()).unwrap()
    }

    fn k2(c: f64) -> Graph {
        Graph::new(2, vec![Edge::undirected(0, 1, c)]).unwrap()
    }

    #[test]
    fn single_edge_unit_mass() {
        let g = k2(1.0);
        let sol = ot_distance(
            &g,
            &simplex(&[1.0, 0.0]),
            &simplex(&[0.0, 1.0]),
            Convention::Oriented,
        )
        .unwrap();
        assert!((sol.primal_value - 1.0).abs() < 1e-9);
        assert!((sol.jplus[0] - 1.0).abs() < 1e-9);
        assert_eq!(sol.jminus[0], 0.0);
        assert_eq!(sol.active_edges, vec![0]);
    }

    #[test]
    fn identical_distributions_zero_distance() {
        let g = Graph::new(
            4,
            vec![
                Edge::undirected(0, 1, 0.5),
                Edge::undirected(1, 2, 0.7),
                Edge::undirected(2, 3, 0.9),
            ],
        )
        .unwrap();
        let rho = simplex(&[0.1, 0.2, 0.3, 0.4]);
        let sol = ot_distance(&g, &rho, &rho, Convention::Oriented).unwrap();
        assert_eq!(sol.primal_value, 0.0);
        assert!(sol.jplus.iter().all(|&f| f == 0.0));
        assert!(sol.jminus.iter().all(|&f| f == 0.0));
        assert!(sol.active_edges.is_empty());
    }

    #[test]
    fn path_distance_matches_oracle() {
        let g = Graph::new(
            3,
            vec![Edge::undirected(0, 1, 1.0), Edge::undirected(1, 2, 1.0)],
        )
        .unwrap();
        let r0 = simplex(&[1.0, 0.0, 0.0]);
        let r1 = simplex(&[0.0, 0.0, 1.0]);
        let sol = ot_distance(&g, &r0, &r1, Convention::Oriented).unwrap();
        assert!((sol.primal_value - 2.0).abs() < 1e-9);
        assert!((w1_oracle(&g, &r0, &r1) - 2.0).abs() < 1e-9);
        let report = check_active_tightness(&sol, &g);
        assert!(report.passed());
        assert_eq!(report.checked_edges, 2);
    }

    #[test]
    fn w1_oracle_partial_mass_move() {
        let g = k2(0.5);
        let w = w1_oracle(&g, &simplex(&[1.0, 0.0]), &simplex(&[0.25, 0.75]));
        assert!((w - 0.375).abs() < 1e-9);
    }

    #[test]
    fn dual_objective_examples() {
        let g = k2(1.0);
        let r0 = simplex(&[1.0, 0.0]);
        let r1 = simplex(&[0.0, 1.0]);
        assert_eq!(
            dual_objective(&g, &[0.0, 0.0], &r0, &r1, Convention::Oriented).unwrap(),
            0.0
        );
        let v = dual_objective(&g, &[0.0, 1.0], &r0, &r1, Convention::Oriented).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = dual_objective(&g, &[0.3, 0.9], &r0, &r0, Convention::Oriented).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn dual_objective_rejects_infeasible_potentials() {
        let g = k2(1.0);
        let err = dual_objective(
            &g,
            &[0.0, 2.0],
            &simplex(&[1.0, 0.0]),
            &simplex(&[0.0, 1.0]),
            Convention::Oriented,
        )
        .unwrap_err();
        match err {
            TransportError::DualInfeasible { edge, .. } => assert_eq!(edge, 0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn as_written_convention_solves_even_cases() {
        // path 0-1-2: moving one unit 0 -> 2 is feasible in the unsigned
        // convention (net terms can telescope through the middle node)
        let g = Graph::new(
            3,
            vec![Edge::undirected(0, 1, 1.0), Edge::undirected(1, 2, 1.0)],
        )
        .unwrap();
        let r0 = simplex(&[0.75, 0.0, 0.25]);
        let r1 = simplex(&[0.25, 0.0, 0.75]);
        let sol = ot_distance(&g, &r0, &r1, Convention::AsWritten);
        match sol {
            Ok(sol) => {
                assert!(sol.feasibility_residual(&g, &r0, &r1) < 1e-8);
                assert!(
                    (sol.primal_value - sol.dual_value).abs()
                        <= 1e-6 * sol.primal_value.max(1.0)
                );
            }
            Err(TransportError::Infeasible(_)) => {
                // acceptable: the unsigned constraint set can be empty
            }
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn as_written_single_edge_is_infeasible_for_unit_swap() {
        // unsigned row (1,1): both endpoints receive the same net term, so
        // moving mass from node 0 to node 1 has no solution
        let g = k2(1.0);
        let out = ot_distance(
            &g,
            &simplex(&[1.0, 0.0]),
            &simplex(&[0.0, 1.0]),
            Convention::AsWritten,
        );
        assert!(matches!(out, Err(TransportError::Infeasible(_))));
    }

    fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
        let mut edges = Vec::new();
        for v in 1..n {
            let u = rng.gen_range(0..v);
            edges.push(Edge::undirected(u, v, rng.gen_range(0.1..2.0)));
        }
        let extra = rng.gen_range(0..=n);
        for _ in 0..extra {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u != v {
                edges.push(Edge::undirected(u, v, rng.gen_range(0.1..2.0)));
            }
        }
        Graph::new(n, edges).unwrap()
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> NodeDistribution {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64)).collect();
        let total: f64 = raw.iter().sum();
        let mut v: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let sum: f64 = v.iter().sum();
        v[0] += 1.0 - sum;
        NodeDistribution::simplex(v).unwrap()
    }

    #[test]
    fn oracle_equivalence_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let n = rng.gen_range(2..=8);
            let g = random_connected_graph(&mut rng, n);
            let r0 = random_simplex(&mut rng, n);
            let r1 = random_simplex(&mut rng, n);
            let sol = ot_distance(&g, &r0, &r1, Convention::Oriented).unwrap();
            let oracle = w1_oracle(&g, &r0, &r1);
            assert!(
                (sol.primal_value - oracle).abs() <= 1e-6,
                "flow {} vs oracle {}",
                sol.primal_value,
                oracle
            );
            assert!(sol.complementarity_residual() <= 1e-12);
            assert!(sol.feasibility_residual(&g, &r0, &r1) < 1e-9);
            assert!(
                (sol.primal_value - sol.dual_value).abs() <= 1e-6 * sol.primal_value.max(1.0)
            );
            assert!(check_active_tightness(&sol, &g).passed());
        }
    }

    #[test]
    fn triangle_inequality_on_sampled_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.gen_range(3..=7);
            let g = random_connected_graph(&mut rng, n);
            let r0 = random_simplex(&mut rng, n);
            let r1 = random_simplex(&mut rng, n);
            let r2 = random_simplex(&mut rng, n);
            let w = |a: &NodeDistribution, b: &NodeDistribution| {
                ot_distance(&g, a, b, Convention::Oriented)
                    .unwrap()
                    .primal_value
            };
            assert!(w(&r0, &r2) <= w(&r0, &r1) + w(&r1, &r2) + 1e-8);
        }
    }

    #[test]
    fn cost_scaling_scales_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let g = random_connected_graph(&mut rng, n);
            let r0 = random_simplex(&mut rng, n);
            let r1 = random_simplex(&mut rng, n);
            let s = rng.gen_range(0.5..3.0);
            let scaled = Graph::new(
                n,
                g.edges()
                    .iter()
                    .map(|e| Edge {
                        cost: e.cost * s,
                        ..*e
                    })
                    .collect(),
            )
            .unwrap();
            let w1 = ot_distance(&g, &r0, &r1, Convention::Oriented)
                .unwrap()
                .primal_value;
            let w2 = ot_distance(&scaled, &r0, &r1, Convention::Oriented)
                .unwrap()
                .primal_value;
            assert!((w2 - s * w1).abs() < 1e-7 * (1.0 + w2.abs()));
        }
    }

    #[test]
    fn mixed_graph_directed_constraint() {
        // directed 0 -> 1, undirected 1 - 2; move mass 0 -> 2 uses both
        let g = Graph::new(
            3,
            vec![Edge::directed(0, 1, 0.4), Edge::undirected(1, 2, 0.6)],
        )
        .unwrap();
        let sol = ot_distance(
            &g,
            &simplex(&[1.0, 0.0, 0.0]),
            &simplex(&[0.0, 0.0, 1.0]),
            Convention::Oriented,
        )
        .unwrap();
        assert!((sol.primal_value - 1.0).abs() < 1e-9);
        assert_eq!(sol.jminus[0], 0.0);
    }
}
