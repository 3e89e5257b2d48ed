//! Rank-one eigenvalue placement: `E` is an eigenvalue of `H0 + v|ψ⟩⟨ψ|`
//! exactly when `v = −1/⟨ψ, (H0 − E)^{-1} ψ⟩`, with eigenvector
//! `(H0 − E)^{-1} ψ` and spectral mass `v^{-2} / ‖(H0 − E)^{-1} ψ‖²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CheckRecord, SpectralDecomposition};
use crate::error::{Error, Result};

pub const EIGEN_TOL: f64 = 1e-8;
pub const ANGLE_TOL: f64 = 1e-6;
pub const MASS_TOL: f64 = 1e-8;
/// Relative perturbation of the coupling for the uniqueness check.
pub const PERTURBATION: f64 = 1e-3;
/// Absolute spectral distance expected after the perturbation on
/// well-coupled instances.
pub const MOVED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankOneReport {
    pub e: f64,
    pub v: f64,
    /// `dist(E, spec H_v)`.
    pub eigen_distance: f64,
    /// Sine of the angle between the eigenvector and `(H0 − E)^{-1} ψ`.
    pub sine: f64,
    pub mass: f64,
    pub predicted_mass: f64,
    /// `dist(E, spec H_{v'})` with `v' = v(1 + 1e−3)`.
    pub perturbed_distance: f64,
    /// First-order shift `|v' − v| μ_{v,ψ}({E})` of the eigenvalue at `E`.
    pub expected_shift: f64,
    pub checks: Vec<CheckRecord>,
}

impl RankOneReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::passed)
    }
}

fn rank_one(h0: &DMatrix<f64>, psi: &DVector<f64>, v: f64) -> DMatrix<f64> {
    h0 + psi * psi.transpose() * v
}

pub fn verify_rank_one_eigen(h0: &DMatrix<f64>, psi: &DVector<f64>, e: f64) -> Result<RankOneReport> {
    let n = h0.nrows();
    if h0.ncols() != n || psi.len() != n || n == 0 {
        return Err(Error::invalid("H0 must be square and match ψ"));
    }
    if (h0 - h0.transpose()).amax() > 1e-12 * h0.amax().max(1.0) {
        return Err(Error::invalid("H0 must be symmetric"));
    }
    if ((psi.norm() - 1.0).abs()) > 1e-12 {
        return Err(Error::invalid("ψ must be a unit vector"));
    }
    let base = SpectralDecomposition::new(h0)?;
    let scale = h0.amax().max(1.0);
    if base.nearest(e).1 <= 1e-10 * scale {
        return Err(Error::invalid(format!("E = {e} is an eigenvalue of H0")));
    }
    let shifted = h0 - DMatrix::identity(n, n) * e;
    let g0 = shifted
        .lu()
        .solve(psi)
        .ok_or_else(|| Error::SolverBreakdown("H0 − E is singular".into()))?;
    let overlap = psi.dot(&g0);
    if overlap.abs() < 1e-14 * g0.norm() {
        return Err(Error::invalid("⟨ψ, (H0 − E)^{-1} ψ⟩ vanishes"));
    }
    let v = -1.0 / overlap;

    let hv = SpectralDecomposition::new(&rank_one(h0, psi, v))?;
    let (k, eigen_distance) = hv.nearest(e);
    let phi = hv.eigenvector(k);
    let g_unit = &g0 / g0.norm();
    let cos = phi.dot(&g_unit).abs().min(1.0);
    let sine = (1.0 - cos * cos).max(0.0).sqrt();
    let mass = phi.dot(psi).powi(2);
    let predicted_mass = 1.0 / (v * v * g0.norm_squared());

    let perturbed = SpectralDecomposition::new(&rank_one(h0, psi, v * (1.0 + PERTURBATION)))?;
    let perturbed_distance = perturbed.nearest(e).1;
    let expected_shift = (v * PERTURBATION).abs() * predicted_mass;

    let checks = vec![
        CheckRecord::at_most("rank_one.eigenvalue", eigen_distance, 0.0, EIGEN_TOL),
        CheckRecord::at_most("rank_one.eigenvector", sine, 0.0, ANGLE_TOL),
        CheckRecord::at_most("rank_one.mass", (mass - predicted_mass).abs(), 0.0, MASS_TOL),
        CheckRecord::at_least("rank_one.uniqueness", perturbed_distance / expected_shift, 0.5, 0.0)
            .with_detail("spectral distance after perturbation over the first-order shift"),
    ];
    Ok(RankOneReport {
        e,
        v,
        eigen_distance,
        sine,
        mass,
        predicted_mass,
        perturbed_distance,
        expected_shift,
        checks,
    })
}
