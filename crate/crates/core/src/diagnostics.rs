//! Spectral diagnostics at a site: `γ_x` and `κ_x` along an η ladder,
//! divergence verdicts, density of states and energy classification.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::operator::{OperatorModel, PotentialSample};
use crate::parallel::try_ordered_map;
use crate::resolvent::{ComplexEnergy, DenseResolvent, EtaLadder, TreeBoundary, TreeResolvent};
use crate::stats::{Estimate, LinearFit};

/// Offset applied to scanned energy grids so they avoid exact eigenvalues
/// of `A`.
pub fn grid_offset() -> f64 {
    1e-4 * std::f64::consts::SQRT_2
}

/// `n` evenly spaced energies on `[lo, hi]`, shifted by [`grid_offset`].
pub fn energy_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo + grid_offset()];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64 + grid_offset())
        .collect()
}

/// Which solver produces Green functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GreenEngine {
    Dense,
    Tree { boundary: TreeBoundary },
}

impl GreenEngine {
    /// Tree recursion on trees, dense solves elsewhere.
    pub fn for_model(model: &OperatorModel, boundary: TreeBoundary) -> Self {
        if model.graph.is_tree() && model.adjacency_scale() == Some(1.0) {
            GreenEngine::Tree { boundary }
        } else {
            GreenEngine::Dense
        }
    }
}

/// `G(x, x; z)` together with `Σ_y |G(x, y; z)|²`.
pub fn diagonal_and_norm(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    z: ComplexEnergy,
    engine: GreenEngine,
) -> Result<(Complex64, f64)> {
    match engine {
        GreenEngine::Dense => {
            let col = DenseResolvent::for_model(model, sample, z)?.column(x)?;
            Ok((col.diagonal(), col.norm_sqr()))
        }
        GreenEngine::Tree { boundary } => {
            if x != model.graph.origin() {
                return Err(Error::Unsupported("tree engine computes γ at the root only".into()));
            }
            let t = TreeResolvent::new(model, sample, z, boundary)?;
            Ok((t.green_diag(0)?, t.root_norm_sqr()?))
        }
    }
}

/// One ladder rung.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub eta: f64,
    /// `Σ_y |G(x, y; E + iη)|²`.
    pub gamma_sum: f64,
    /// `Im G(x, x; E + iη)/η`.
    pub gamma_im: f64,
    /// `−Im(1/G(x, x))/η`.
    pub kappa: f64,
    pub im_g: f64,
    pub green: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTrace {
    pub x: VertexId,
    pub e: f64,
    pub points: Vec<GammaPoint>,
}

impl GammaTrace {
    pub fn etas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eta).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gamma_sum).collect()
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.kappa).collect()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `γ_x` and `κ_x` along the ladder, with both γ routes, the κ identity
/// and monotonicity in η checked.
pub fn gamma_trace(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    e: f64,
    ladder: &EtaLadder,
    engine: GreenEngine,
) -> Result<GammaTrace> {
    ladder.validate()?;
    let mut points = Vec::with_capacity(ladder.rungs);
    for eta in ladder.etas() {
        let (g, sum) = diagonal_and_norm(model, sample, x, ComplexEnergy::new(e, eta)?, engine)?;
        points.push(point_from(eta, g, sum)?);
    }
    check_monotone(&points)?;
    Ok(GammaTrace { x, e, points })
}

fn point_from(eta: f64, g: Complex64, sum: f64) -> Result<GammaPoint> {
    let gamma_im = g.im / eta;
    let kappa = -(1.0 / g).im / eta;
    if !(g.im > 0.0) {
        return Err(Error::integrity("herglotz", format!("Im G = {} at eta = {eta}", g.im)));
    }
    let mismatch = rel(sum, gamma_im);
    if mismatch > 1e-8 {
        return Err(Error::integrity(
            "gamma_routes",
            format!("sum {sum:e} vs Im G/eta {gamma_im:e} at eta = {eta:e}"),
        ));
    }
    if rel(kappa * g.norm_sqr(), gamma_im) > 1e-10 {
        return Err(Error::integrity(
            "kappa_identity",
            format!("kappa |G|^2 = {:e} vs gamma {gamma_im:e}", kappa * g.norm_sqr()),
        ));
    }
    Ok(GammaPoint {
        eta,
        gamma_sum: sum,
        gamma_im,
        kappa,
        im_g: g.im,
        green: g,
    })
}

fn check_monotone(points: &[GammaPoint]) -> Result<()> {
    for w in points.windows(2) {
        // Ladder runs towards smaller η, where γ can only grow.
        if w[1].eta < w[0].eta && w[1].gamma_sum < w[0].gamma_sum * (1.0 - 1e-9) {
            return Err(Error::integrity(
                "gamma_monotonicity",
                format!(
                    "gamma fell from {:e} to {:e} as eta went {:e} -> {:e}",
                    w[0].gamma_sum, w[1].gamma_sum, w[0].eta, w[1].eta
                ),
            ));
        }
    }
    Ok(())
}

/// Verdict thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_exponent: f64,
    pub min_r_squared: f64,
    pub fit_rungs: usize,
    pub plateau_tolerance: f64,
    pub plateau_rungs: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_exponent: 0.5,
            min_r_squared: 0.99,
            fit_rungs: 6,
            plateau_tolerance: 0.01,
            plateau_rungs: 4,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if self.fit_rungs < 3 || self.plateau_rungs < 2 {
            return Err(Error::invalid("fit_rungs >= 3 and plateau_rungs >= 2 required"));
        }
        if !(self.plateau_tolerance > 0.0) || !(0.0..=1.0).contains(&self.min_r_squared) {
            return Err(Error::invalid("threshold values out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverging,
    Finite,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Diverging => "diverging",
            Verdict::Finite => "finite",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceVerdict {
    pub verdict: Verdict,
    /// `p` in `γ(η) ~ η^{-p}` over the last `fit_rungs` rungs.
    pub exponent: f64,
    pub r_squared: f64,
    pub plateau: Option<f64>,
}

/// Classify a ladder of `(η, γ)` values, ordered from large to small η.
pub fn divergence_verdict_from(etas: &[f64], gammas: &[f64], th: &Thresholds) -> Result<DivergenceVerdict> {
    let n = etas.len();
    if n != gammas.len() || n < th.fit_rungs.max(th.plateau_rungs) {
        return Err(Error::Insufficient(format!(
            "ladder of {n} rungs is shorter than the verdict windows"
        )));
    }
    let lx: Vec<f64> = etas[n - th.fit_rungs..].iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = gammas[n - th.fit_rungs..].iter().map(|g| g.ln()).collect();
    let fit = LinearFit::fit(&lx, &ly).ok_or_else(|| Error::Insufficient("degenerate η ladder".into()))?;
    let exponent = -fit.slope;
    let last = gammas[n - 1];
    let anchor = gammas[n - th.plateau_rungs];
    let flat = (last - anchor).abs() / last.abs() < th.plateau_tolerance;
    let verdict = if exponent >= th.min_exponent && fit.r_squared >= th.min_r_squared {
        Verdict::Diverging
    } else if flat {
        Verdict::Finite
    } else {
        Verdict::Inconclusive
    };
    Ok(DivergenceVerdict {
        verdict,
        exponent,
        r_squared: fit.r_squared,
        plateau: (verdict == Verdict::Finite).then_some(last),
    })
}

pub fn divergence_verdict(trace: &GammaTrace, th: &Thresholds) -> Result<DivergenceVerdict> {
    divergence_verdict_from(&trace.etas(), &trace.gammas(), th)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosMethod {
    /// `(1/π) mean Im G(0, 0; E + iη)`.
    Direct,
    /// Same mean with `V(0)` integrated out exactly given `Σ(0; z)`.
    SpectralAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosEstimate {
    pub e: f64,
    pub eta: f64,
    pub n_hat: f64,
    pub stderr: f64,
    pub replicates: usize,
    /// `‖ρ‖∞` of `λV`; absent at `λ = 0`.
    pub wegner_bound: Option<f64>,
    pub wegner_ok: bool,
}

/// Density-of-states scan over `energies` at fixed `η`.
pub fn dos_scan(
    model: &OperatorModel,
    energies: &[f64],
    eta: f64,
    replicates: usize,
    engine: GreenEngine,
    method: DosMethod,
) -> Result<Vec<DosEstimate>> {
    model.dist.require_density()?;
    if replicates < 100 {
        return Err(Error::invalid("density of states needs at least 100 replicates"));
    }
    let zs: Vec<ComplexEnergy> = energies
        .iter()
        .map(|&e| ComplexEnergy::new(e, eta))
        .collect::<Result<_>>()?;
    let origin = model.graph.origin();
    let eff = model.dist.scaled(model.lambda);
    // Each replicate contributes one value per energy.
    let rows: Vec<Vec<f64>> = try_ordered_map(replicates, |r| {
        let sample = model.sample_potential(r as u64);
        let v0 = sample.values[origin];
        let greens: Vec<Complex64> = match engine {
            GreenEngine::Dense => origin_greens_dense(model, &sample, origin, &zs)?,
            GreenEngine::Tree { boundary } => zs
                .iter()
                .map(|&z| TreeResolvent::new(model, &sample, z, boundary)?.green_diag(0))
                .collect::<Result<_>>()?,
        };
        Ok(greens
            .iter()
            .map(|&g| match method {
                DosMethod::Direct => g.im / std::f64::consts::PI,
                DosMethod::SpectralAverage => {
                    let sigma = v0 - 1.0 / g;
                    if model.lambda == 0.0 {
                        (1.0 / (0.0 - sigma)).im / std::f64::consts::PI
                    } else {
                        eff.poisson_smoothed(sigma)
                    }
                }
            })
            .collect())
    })?;
    let bound = if model.lambda > 0.0 {
        Some(model.effective_density_sup()?)
    } else {
        None
    };
    Ok(energies
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let xs: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let est = Estimate::from_samples(&xs);
            DosEstimate {
                e,
                eta,
                n_hat: est.mean,
                stderr: est.stderr,
                replicates,
                wegner_bound: bound,
                wegner_ok: bound.map_or(true, |b| est.mean <= b + 3.0 * est.stderr),
            }
        })
        .collect())
}

pub fn dos(
    model: &OperatorModel,
    e: f64,
    eta: f64,
    replicates: usize,
    engine: GreenEngine,
    method: DosMethod,
) -> Result<DosEstimate> {
    Ok(dos_scan(model, &[e], eta, replicates, engine, method)?[0])
}

/// `G(0, 0; z)` at many `z` from one eigendecomposition.
fn origin_greens_dense(
    model: &OperatorModel,
    sample: &PotentialSample,
    origin: VertexId,
    zs: &[ComplexEnergy],
) -> Result<Vec<Complex64>> {
    let h = model.hamiltonian(sample)?;
    let eig = SymmetricEigen::new(h);
    let weights: Vec<f64> = (0..eig.eigenvalues.len())
        .map(|k| eig.eigenvectors[(origin, k)].powi(2))
        .collect();
    Ok(zs
        .iter()
        .map(|z| {
            let zc = z.z();
            eig.eigenvalues
                .iter()
                .zip(&weights)
                .map(|(&l, &w)| w / (l - zc))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyClassification {
    pub e: f64,
    pub frac_diverging: f64,
    pub frac_finite: f64,
    pub frac_inconclusive: f64,
    pub frac_ac: f64,
    pub replicates: usize,
}

/// Per-replicate outcome used by [`classify_energy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateClass {
    pub trace: GammaTrace,
    pub verdict: DivergenceVerdict,
    pub ac: bool,
}

/// `Im G` floor for the a.c. proxy: ten times the level spacing `‖A‖/N`.
pub fn ac_floor(model: &OperatorModel) -> f64 {
    10.0 * model.hopping_norm() / model.vertex_count() as f64
}

pub fn classify_replicate(
    model: &OperatorModel,
    replicate: u64,
    e: f64,
    ladder: &EtaLadder,
    th: &Thresholds,
    engine: GreenEngine,
) -> Result<ReplicateClass> {
    let sample = model.sample_potential(replicate);
    let trace = gamma_trace(model, &sample, model.graph.origin(), e, ladder, engine)?;
    let verdict = divergence_verdict(&trace, th)?;
    let floor = ac_floor(model);
    let ac = trace.points.iter().rev().take(2).all(|p| p.im_g > floor);
    Ok(ReplicateClass { trace, verdict, ac })
}

pub fn classify_energy(
    model: &OperatorModel,
    e: f64,
    replicates: usize,
    ladder: &EtaLadder,
    th: &Thresholds,
    engine: GreenEngine,
) -> Result<EnergyClassification> {
    if replicates < 100 {
        return Err(Error::invalid("classification needs at least 100 replicates"));
    }
    th.validate()?;
    let per = try_ordered_map(replicates, |r| {
        classify_replicate(model, r as u64, e, ladder, th, engine)
    })?;
    Ok(summarize_classes(e, &per))
}

pub fn summarize_classes(e: f64, per: &[ReplicateClass]) -> EnergyClassification {
    let n = per.len() as f64;
    let count = |v: Verdict| per.iter().filter(|c| c.verdict.verdict == v).count() as f64 / n;
    EnergyClassification {
        e,
        frac_diverging: count(Verdict::Diverging),
        frac_finite: count(Verdict::Finite),
        frac_inconclusive: count(Verdict::Inconclusive),
        frac_ac: per.iter().filter(|c| c.ac).count() as f64 / n,
        replicates: per.len(),
    }
}
