//! Exact Wasserstein distances on weighted trees.
//!
//! On a rooted metric tree the earthmover distance between two probability
//! measures has the closed form `sum_e w_e |mu(T_e) - nu(T_e)|`, where `T_e`
//! is the set of vertices below edge `e`. This crate provides
//!
//! - [`tree`]: immutable rooted metric trees with path and subtree queries;
//! - [`measure`]: finitely supported probability measures and pushforwards;
//! - [`tree_ot`]: the closed formula, the isometric edge embedding into `l1`,
//!   and an explicit optimal coupling built by a two-sweep mass transport;
//! - [`oracle`]: an exact transportation solver and a Kantorovich–Rubinstein
//!   dual solver on arbitrary finite metrics, for cross-checking;
//! - [`stochastic`]: FRT tree sampling and the induced `l1` embedding of the
//!   Wasserstein space of a finite metric, with distortion audits;
//! - [`io`]: JSON and CSV formats.
//!
//! Everything is generic over [`Scalar`]: `f64` for speed, [`Exact`]
//! (arbitrary-precision rationals) when results must match without tolerance.
//!
//! ```
//! use wasstree::{FloatMeasure, FloatTree, tree_ot::tree_wasserstein};
//!
//! // star with root 0 and leaves 1, 2, 3 at distances 1, 2, 3
//! let t = FloatTree::from_edges(&[(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0)], 0).unwrap();
//! let mu = FloatMeasure::from_pairs([(1, 0.5), (2, 0.5)]).unwrap();
//! let nu = FloatMeasure::dirac(3);
//! assert_eq!(tree_wasserstein(&t, &mu, &nu).unwrap(), 4.5);
//! ```

pub mod io;
pub mod measure;
pub mod oracle;
pub mod random;
pub mod scalar;
pub mod stochastic;
pub mod tree;
pub mod tree_ot;

pub use measure::{DiscreteMeasure, MeasureError, PointId};
pub use oracle::{FiniteMetric, OracleError};
pub use scalar::Scalar;
pub use stochastic::{DistortionReport, EmbeddingError, StochasticTreeEmbedding};
pub use tree::{Edge, MetricTree, TreeError, Vertex};
pub use tree_ot::{Coupling, EmbeddingVector, TreeOtError};

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;

pub type FloatTree = MetricTree<f64>;
pub type ExactTree = MetricTree<Exact>;
pub type FloatMeasure = DiscreteMeasure<f64>;
pub type ExactMeasure = DiscreteMeasure<Exact>;
pub type FloatCoupling = Coupling<f64>;
pub type ExactCoupling = Coupling<Exact>;
pub type FloatMetric = FiniteMetric<f64>;
pub type ExactMetric = FiniteMetric<Exact>;
pub type FloatEmbedding = StochasticTreeEmbedding<f64>;
pub type ExactEmbedding = StochasticTreeEmbedding<Exact>;
