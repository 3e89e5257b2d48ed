//! Simplicity of the spectrum under continuous disorder, and the spectral
//! null average: a fixed countable set of energies is almost surely missed
//! by the spectrum of `H0 + v|ψ⟩⟨ψ|` when `v` has a continuous law.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SpectralDecomposition;
use crate::error::{Error, Result};
use crate::operator::{Distribution, OperatorModel};
use crate::parallel::try_ordered_map;
use crate::rng::{stream, Domain};

/// Default gap below which two eigenvalues count as one.
pub const GAP_TOL: f64 = 1e-8;
/// Spectral distance counted as a hit.
pub const HIT_TOL: f64 = 1e-8;
/// Largest operator accepted for full eigendecompositions.
pub const MAX_SIZE: usize = 512;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub replicates: usize,
    pub gap_tol: f64,
    pub degenerate: usize,
    pub frac_degenerate: f64,
    /// Smallest eigenvalue gap per replicate.
    pub min_gaps: Vec<f64>,
}

pub fn spectrum_simplicity(model: &OperatorModel, replicates: usize, gap_tol: f64) -> Result<SimplicityReport> {
    if model.vertex_count() > MAX_SIZE {
        return Err(Error::invalid(format!("simplicity check limited to N ≤ {MAX_SIZE}")));
    }
    if model.vertex_count() < 2 {
        return Err(Error::invalid("need at least two sites"));
    }
    if replicates == 0 || !(gap_tol > 0.0) {
        return Err(Error::invalid("need replicates > 0 and gap_tol > 0"));
    }
    let min_gaps = try_ordered_map(replicates, |r| {
        let h = model.hamiltonian(&model.sample_potential(r as u64))?;
        Ok(SpectralDecomposition::new(&h)?.min_gap)
    })?;
    let degenerate = min_gaps.iter().filter(|&&g| g < gap_tol).count();
    Ok(SimplicityReport {
        replicates,
        gap_tol,
        degenerate,
        frac_degenerate: degenerate as f64 / replicates as f64,
        min_gaps,
    })
}

/// Law of the coupling `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingLaw {
    Continuous(Distribution),
    /// A point mass; violates the continuity hypothesis.
    Atom(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullAverageReport {
    pub energies: Vec<f64>,
    /// The coupling making each energy an eigenvalue, if one exists.
    pub exceptional: Vec<Option<f64>>,
    pub replicates: usize,
    pub hits: usize,
    pub frac_hitting: f64,
    /// Set when the coupling law has an atom.
    pub hypothesis_violated: bool,
}

/// Fraction of sampled couplings for which some energy of the set lies
/// within `1e−8` of the spectrum of `H0 + v|ψ⟩⟨ψ|`.
pub fn spectral_null_average(
    h0: &DMatrix<f64>,
    psi: &DVector<f64>,
    energies: &[f64],
    law: &CouplingLaw,
    replicates: usize,
    seed: u64,
) -> Result<NullAverageReport> {
    let n = h0.nrows();
    if h0.ncols() != n || psi.len() != n || n == 0 {
        return Err(Error::invalid("H0 must be square and match ψ"));
    }
    if energies.is_empty() || replicates == 0 {
        return Err(Error::invalid("need energies and replicates"));
    }
    if let CouplingLaw::Continuous(d) = law {
        d.validate()?;
        d.require_density()?;
    }
    let exceptional = energies
        .iter()
        .map(|&e| {
            let shifted = h0 - DMatrix::identity(n, n) * e;
            shifted.lu().solve(psi).and_then(|g| {
                let overlap = psi.dot(&g);
                (overlap != 0.0).then(|| -1.0 / overlap)
            })
        })
        .collect();
    let projector = psi * psi.transpose();
    let hit = try_ordered_map(replicates, |r| {
        let v = match law {
            CouplingLaw::Continuous(d) => d.sample(&mut stream(seed, Domain::Verification, r as u64)),
            CouplingLaw::Atom(v) => *v,
        };
        let d = SpectralDecomposition::new(&(h0 + &projector * v))?;
        Ok(energies.iter().any(|&e| d.nearest(e).1 <= HIT_TOL))
    })?;
    let hits = hit.iter().filter(|&&h| h).count();
    Ok(NullAverageReport {
        energies: energies.to_vec(),
        exceptional,
        replicates,
        hits,
        frac_hitting: hits as f64 / replicates as f64,
        hypothesis_violated: matches!(law, CouplingLaw::Atom(_)),
    })
}
