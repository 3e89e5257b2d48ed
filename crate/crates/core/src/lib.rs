//! Numerical laboratory for random Schrödinger operators `H = A + λV` on
//! finite graphs.

pub mod asymptotics;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod operator;
pub mod parallel;
pub mod resolvent;
pub mod resonance;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Graph, Sphere, TopologySpec, TreeShape, VertexId};
pub use num_complex::Complex64;
pub use operator::{check_density_condition, DensityCondition, Distribution, Hopping, OperatorModel, PotentialSample};
pub use resolvent::{ComplexEnergy, DenseResolvent, EtaLadder, GreenColumn, SchurData, TreeBoundary, TreeResolvent};
pub use resonance::{CutoffFunction, ResonanceReport, ResonanceSettings};
pub use asymptotics::{DecaySettings, LyapunovEstimate, Phase, PhaseVerdict};
pub use verify::{CheckRecord, CheckStatus, SpectralDecomposition};
