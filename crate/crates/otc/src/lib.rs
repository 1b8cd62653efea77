//! Graph distribution compression via optimal transport.
//!
//! This crate computes exact transport distances between probability
//! distributions on the nodes of a mixed graph, and compresses a
//! distribution onto a small node support by solving a regularized
//! saddle-point problem with a primal-dual extragradient method. The
//! pieces compose as:
//!
//! - [`graph`]: mixed graphs, incidence matrices, node distributions;
//! - [`transport`]: the exact transport distance, its dual, and
//!   optimality diagnostics;
//! - [`projections`]: the Euclidean projections the solver needs
//!   (weighted simplex, dual slab set, capped box);
//! - [`compressor`]: the saddle objective, the extragradient solver,
//!   support rounding, target recovery, and exactness certificates;
//! - [`io`]: edge-list and benchmark-dataset parsing, report emission,
//!   and a reference tree generator;
//! - [`cli`]: the command-line interface built on all of the above.

pub mod cli;
pub mod compressor;
pub mod guide;
pub mod graph;
pub mod io;
pub mod projections;
pub mod transport;
