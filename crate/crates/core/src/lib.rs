//! Threat propagation on graphs: harmonic and random-walk solvers over
//! spatial and space-time graphs, spectral baselines, covert-network
//! generators and ROC evaluation.

pub mod eigen;
pub mod experiment;
pub mod generators;
pub mod error;
pub mod graph;
pub mod laplacian;
pub mod linsolve;
pub mod observation;
pub mod plot;
pub mod priors;
pub mod rng;
pub mod roc;
pub mod sparse;
pub mod spacetime;
pub mod spatial;
pub mod spectral;
pub mod validate;

pub use error::{Error, Result};
pub use graph::{Edge, Graph, GraphBuilder};
pub use observation::{Observation, ObservationModel, ObservationSet};
