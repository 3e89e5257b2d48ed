//! Green functions of `H − z` and the rank-one / rank-two Schur data derived
//! from them.
//!
//! Dense LU solves serve arbitrary finite graphs; [`tree`] holds the
//! linear-time recursion for rooted regular trees.

pub mod tree;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::operator::{OperatorModel, PotentialSample};

pub use tree::{free_tree_gamma, TreeBoundary, TreeResolvent};

/// `z = E + iη` with `η > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy {
    pub e: f64,
    pub eta: f64,
}

impl ComplexEnergy {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite() && e.is_finite()) {
            return Err(Error::invalid(format!("need finite E and eta > 0, got ({e}, {eta})")));
        }
        Ok(ComplexEnergy { e, eta })
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }
}

/// Geometric ladder `η_k = η_0 2^{-k}`, `k = 0..rungs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaLadder {
    pub eta0: f64,
    pub rungs: usize,
}

impl Default for EtaLadder {
    fn default() -> Self {
        EtaLadder {
            eta0: 0.1,
            rungs: 14,
        }
    }
}

impl EtaLadder {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::invalid("eta0 must be positive"));
        }
        if self.rungs < 2 {
            return Err(Error::invalid("ladder needs at least 2 rungs"));
        }
        Ok(())
    }

    pub fn etas(&self) -> Vec<f64> {
        (0..self.rungs)
            .map(|k| self.eta0 * 0.5f64.powi(k as i32))
            .collect()
    }

    pub fn eta_min(&self) -> f64 {
        self.eta0 * 0.5f64.powi(self.rungs as i32 - 1)
    }
}

/// Column `G(·, x; z)` with the residual of its defining linear system.
#[derive(Debug, Clone)]
pub struct GreenColumn {
    pub source: VertexId,
    pub z: ComplexEnergy,
    pub values: Vec<Complex64>,
    pub residual_norm: f64,
}

impl GreenColumn {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ_y |G(x, y; z)|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn diagonal(&self) -> Complex64 {
        self.values[self.source]
    }
}

/// Rank-one and rank-two Schur data at a pair of sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurData {
    pub x: VertexId,
    pub y: VertexId,
    pub z: ComplexEnergy,
    /// Effective potentials at `x` and `y`.
    pub v_x: f64,
    pub v_y: f64,
    /// Single-site self-energy `Σ(x; z)`.
    pub self_energy_x: Complex64,
    pub sigma_x: Complex64,
    pub sigma_y: Complex64,
    pub tau_xy: Complex64,
    pub tau_yx: Complex64,
}

impl SchurData {
    /// `σ(x) + τ(x,y)τ(y,x)/(V(y) − σ(y))`, which must equal `Σ(x)`.
    pub fn reduced_self_energy(&self) -> Complex64 {
        self.sigma_x + self.tau_xy * self.tau_yx / (self.v_y - self.sigma_y)
    }

    /// `G(y, x)/G(y, y) = τ(y, x)/(V(x) − σ(x))`.
    pub fn ratio_from_y(&self) -> Complex64 {
        self.tau_yx / (self.v_x - self.sigma_x)
    }

    /// The 2×2 Green block at `(x, y)` rebuilt from the Schur data.
    pub fn green_block(&self) -> [[Complex64; 2]; 2] {
        let a = self.v_x - self.sigma_x;
        let d = self.v_y - self.sigma_y;
        let det = a * d - self.tau_xy * self.tau_yx;
        [[d / det, self.tau_xy / det], [self.tau_yx / det, a / det]]
    }
}

/// Relative closeness used by integrity checks.
pub fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

fn relative_gap(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / (1.0 + a.norm().max(b.norm()))
}

/// LU factorization of `H − z` for a dense real symmetric `H = A + V`.
pub struct DenseResolvent {
    h: DMatrix<f64>,
    potential: Vec<f64>,
    z: ComplexEnergy,
    lu: LU<Complex64, Dyn, Dyn>,
}

impl DenseResolvent {
    /// `a` is the hopping part, `potential` the diagonal `V`.
    pub fn new(a: &DMatrix<f64>, potential: &[f64], z: ComplexEnergy) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || potential.len() != n {
            return Err(Error::invalid("hopping and potential sizes differ"));
        }
        let mut h = a.clone();
        for (i, v) in potential.iter().enumerate() {
            h[(i, i)] += v;
        }
        let zc = z.z();
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { zc } else { Complex64::new(0.0, 0.0) };
            Complex64::new(h[(i, j)], 0.0) - d
        });
        Ok(DenseResolvent {
            h,
            potential: potential.to_vec(),
            z,
            lu: shifted.lu(),
        })
    }

    /// Build from a full matrix `H`, treating its diagonal as the potential.
    pub fn from_hamiltonian(h: &DMatrix<f64>, z: ComplexEnergy) -> Result<Self> {
        let mut a = h.clone();
        let v: Vec<f64> = (0..h.nrows()).map(|i| h[(i, i)]).collect();
        a.fill_diagonal(0.0);
        Self::new(&a, &v, z)
    }

    pub fn for_model(model: &OperatorModel, sample: &PotentialSample, z: ComplexEnergy) -> Result<Self> {
        Self::new(&model.hopping_matrix()?, &sample.values, z)
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn z(&self) -> ComplexEnergy {
        self.z
    }

    pub fn hamiltonian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Solves `(H − z)g = δ_x` and records the residual.
    pub fn column(&self, x: VertexId) -> Result<GreenColumn> {
        let n = self.dim();
        if x >= n {
            return Err(Error::invalid(format!("vertex {x} out of range")));
        }
        let mut rhs = DVector::<Complex64>::zeros(n);
        rhs[x] = Complex64::new(1.0, 0.0);
        let g = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SolverBreakdown(format!("singular H − z at z = {:?}", self.z)))?;
        let zc = self.z.z();
        let mut res = 0.0;
        for i in 0..n {
            let mut acc = -zc * g[i] - rhs[i];
            for j in 0..n {
                let hij = self.h[(i, j)];
                if hij != 0.0 {
                    acc += g[j] * hij;
                }
            }
            res += acc.norm_sqr();
        }
        let col = GreenColumn {
            source: x,
            z: self.z,
            values: g.iter().copied().collect(),
            residual_norm: res.sqrt(),
        };
        let gn = col.norm();
        if !(col.residual_norm <= 1e-10 * gn.max(1.0)) {
            return Err(Error::SolverBreakdown(format!(
                "residual {:.3e} for column {x} (‖g‖ = {gn:.3e}, condition ≳ {:.3e})",
                col.residual_norm,
                gn * (self.h.amax() + zc.norm())
            )));
        }
        Ok(col)
    }

    /// `Σ(x; z) = V(x) − 1/G(x, x; z)`.
    pub fn self_energy(&self, x: VertexId) -> Result<Complex64> {
        let g = self.column(x)?.diagonal();
        Ok(self.potential[x] - 1.0 / g)
    }

    /// Schur data at `(x, y)` from the 2×2 Green block.
    pub fn schur_two_site(&self, x: VertexId, y: VertexId) -> Result<SchurData> {
        if x == y {
            return Err(Error::invalid("two-site Schur data needs x != y"));
        }
        let cx = self.column(x)?;
        let cy = self.column(y)?;
        let (gxx, gxy, gyx, gyy) = (cx.values[x], cy.values[x], cx.values[y], cy.values[y]);
        let det = gxx * gyy - gxy * gyx;
        if det.norm() == 0.0 {
            return Err(Error::integrity("schur_two_site", "singular 2x2 Green block"));
        }
        // Inverse of [[gxx, gxy], [gyx, gyy]].
        let s00 = gyy / det;
        let s01 = -gxy / det;
        let s10 = -gyx / det;
        let s11 = gxx / det;
        let (vx, vy) = (self.potential[x], self.potential[y]);
        Ok(SchurData {
            x,
            y,
            z: self.z,
            v_x: vx,
            v_y: vy,
            self_energy_x: vx - 1.0 / gxx,
            sigma_x: vx - s00,
            sigma_y: vy - s11,
            tau_xy: -s01,
            tau_yx: -s10,
        })
    }

    /// `G(0, x)/G(0, 0)` with `origin` playing the role of 0.
    pub fn g_ratio(&self, origin: VertexId, x: VertexId) -> Result<Complex64> {
        let c = self.column(origin)?;
        Ok(c.values[x] / c.values[origin])
    }
}

/// `S = H_pp − z − Bᵀ (H_rest − z)^{-1} B` for the sites `p`, computed by
/// eliminating every other vertex directly.
pub fn eliminate_onto(h: &DMatrix<f64>, sites: &[VertexId], z: ComplexEnergy) -> Result<DMatrix<Complex64>> {
    let n = h.nrows();
    let rest: Vec<usize> = (0..n).filter(|i| !sites.contains(i)).collect();
    let zc = z.z();
    let m = rest.len();
    let p = sites.len();
    let mut s = DMatrix::from_fn(p, p, |i, j| {
        let d = if i == j { zc } else { Complex64::new(0.0, 0.0) };
        Complex64::new(h[(sites[i], sites[j])], 0.0) - d
    });
    if m == 0 {
        return Ok(s);
    }
    let hr = DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { zc } else { Complex64::new(0.0, 0.0) };
        Complex64::new(h[(rest[i], rest[j])], 0.0) - d
    });
    let b = DMatrix::from_fn(m, p, |i, j| Complex64::new(h[(rest[i], sites[j])], 0.0));
    let x = hr
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SolverBreakdown("singular restricted resolvent".into()))?;
    s -= b.transpose() * x;
    Ok(s)
}

/// `Σ(x; z)` via the restricted resolvent on the graph with `x` removed.
pub fn self_energy_restricted(h: &DMatrix<f64>, potential_x: f64, x: VertexId, z: ComplexEnergy) -> Result<Complex64> {
    let s = eliminate_onto(h, &[x], z)?;
    // The 1x1 Schur complement is 1/G(x, x).
    Ok(potential_x - s[(0, 0)])
}

/// Solve for `G(·, x)`, rebuilding the factorization from the model.
pub fn green_column(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    z: ComplexEnergy,
) -> Result<GreenColumn> {
    DenseResolvent::for_model(model, sample, z)?.column(x)
}

/// `Σ(x; z)`, cross-checked against the restricted-resolvent computation.
pub fn self_energy(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    z: ComplexEnergy,
) -> Result<Complex64> {
    let r = DenseResolvent::for_model(model, sample, z)?;
    let sigma = r.self_energy(x)?;
    let alt = self_energy_restricted(r.hamiltonian(), sample.values[x], x, z)?;
    if !close(sigma, alt, 1e-10) {
        return Err(Error::integrity(
            "self_energy",
            format!("rank-one route {sigma} vs restricted route {alt}"),
        ));
    }
    Ok(sigma)
}

/// Two-site Schur data, cross-checked against direct elimination and the
/// reduction identity `Σ(x) = σ(x) + τ(x,y)τ(y,x)/(V(y) − σ(y))`.
pub fn schur_two_site(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    y: VertexId,
    z: ComplexEnergy,
) -> Result<SchurData> {
    let r = DenseResolvent::for_model(model, sample, z)?;
    let d = r.schur_two_site(x, y)?;
    verify_schur(r.hamiltonian(), &d)?;
    Ok(d)
}

/// Compare Schur data with direct elimination; integrity error on mismatch.
pub fn verify_schur(h: &DMatrix<f64>, d: &SchurData) -> Result<f64> {
    let s = eliminate_onto(h, &[d.x, d.y], d.z)?;
    let pairs = [
        (d.v_x - d.sigma_x, s[(0, 0)]),
        (d.v_y - d.sigma_y, s[(1, 1)]),
        (-d.tau_xy, s[(0, 1)]),
        (-d.tau_yx, s[(1, 0)]),
        (d.self_energy_x, d.reduced_self_energy()),
    ];
    let worst = pairs
        .iter()
        .map(|&(a, b)| relative_gap(a, b))
        .fold(0.0, f64::max);
    if worst > 1e-10 {
        return Err(Error::integrity(
            "schur_two_site",
            format!("direct elimination disagrees by {worst:.3e}"),
        ));
    }
    Ok(worst)
}

/// `g(x; z) = G(0, x)/G(0, 0)`, cross-checked against `τ(0,x)/(V(x) − σ(x))`.
pub fn g_ratio(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    z: ComplexEnergy,
) -> Result<Complex64> {
    let origin = model.graph.origin();
    let r = DenseResolvent::for_model(model, sample, z)?;
    let g = r.g_ratio(origin, x)?;
    if x == origin {
        return Ok(g);
    }
    let d = r.schur_two_site(x, origin)?;
    let alt = d.ratio_from_y();
    if !close(g, alt, 1e-10) {
        return Err(Error::integrity("g_ratio", format!("{g} vs {alt}")));
    }
    Ok(g)
}
