//! Direct numerical checks of exact statements about rank-one and rank-two
//! perturbations, the Möbius dichotomy, the delta-function principle and
//! simplicity of spectrum.

pub mod area;
pub mod delta;
pub mod mobius;
pub mod rank_one;
pub mod simplicity;
pub mod suite;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use area::{two_site_area_bound, AreaBoundReport, AreaParams};
pub use delta::{delta_principle, DeltaReport};
pub use mobius::{mobius_dichotomy, MobiusScan};
pub use rank_one::{verify_rank_one_eigen, RankOneReport};
pub use simplicity::{spectral_null_average, spectrum_simplicity, CouplingLaw, NullAverageReport, SimplicityReport};
pub use suite::{run_suite, SuiteSettings};

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub min_gap: f64,
    pub residual: f64,
    pub orthonormality: f64,
}

impl SpectralDecomposition {
    /// Decompose and validate: `‖Hφ − Eφ‖ ≤ 1e−9 ‖H‖` and orthonormality to
    /// `1e−10`, otherwise an integrity error.
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if n == 0 || h.ncols() != n {
            return Err(Error::invalid("need a nonempty square matrix"));
        }
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let scale = h.amax().max(f64::MIN_POSITIVE) * n as f64;
        let mut residual: f64 = 0.0;
        for (k, &e) in eigenvalues.iter().enumerate() {
            let phi = eigenvectors.column(k);
            residual = residual.max((h * phi - phi * e).norm());
        }
        let gram = eigenvectors.transpose() * &eigenvectors - DMatrix::identity(n, n);
        let orthonormality = gram.amax();
        if residual > 1e-9 * scale || orthonormality > 1e-10 {
            return Err(Error::integrity(
                "eigendecomposition",
                format!("residual {residual:.3e}, orthonormality defect {orthonormality:.3e}"),
            ));
        }
        let min_gap = eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        Ok(SpectralDecomposition {
            eigenvalues,
            eigenvectors,
            min_gap,
            residual,
            orthonormality,
        })
    }

    /// Distance from `e` to the spectrum with the index of the closest eigenvalue.
    pub fn nearest(&self, e: f64) -> (usize, f64) {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| (i, (l - e).abs()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// Number of eigenvalues strictly below `e`.
    pub fn count_below(&self, e: f64) -> usize {
        self.eigenvalues.partition_point(|&l| l < e)
    }
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub observed: f64,
    pub bound: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
}

impl CheckRecord {
    /// `observed ≤ bound + tolerance`.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        let ok = observed <= bound + tolerance;
        CheckRecord {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            observed,
            bound,
            tolerance,
            detail: None,
        }
    }

    /// `observed ≥ bound − tolerance`.
    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        let ok = observed >= bound - tolerance;
        CheckRecord {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            observed,
            bound,
            tolerance,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Random real symmetric matrix with standard normal entries, scaled by
/// `1/√n` so the spectrum stays of order one.
pub fn random_symmetric(rng: &mut impl rand::Rng, n: usize) -> DMatrix<f64> {
    let s = 1.0 / (n as f64).sqrt();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.sample(StandardNormal);
            m[(i, j)] = v * s;
            m[(j, i)] = v * s;
        }
    }
    m
}

/// Random unit vector.
pub fn random_unit(rng: &mut impl rand::Rng, n: usize) -> DVector<f64> {
    let v: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let norm = v.norm();
    v / norm
}
