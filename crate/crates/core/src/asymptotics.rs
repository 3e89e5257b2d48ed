//! Decay rates of `τ(0, x)` on trees: the Lyapunov exponents `L0`, `L1`,
//! the moment free energy `φ(s)` and the delocalization / localization tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::parallel::try_ordered_map;
use crate::resolvent::{ComplexEnergy, TreeBoundary, TreeResolvent};
use crate::rng::derive_seed;
use crate::stats::{batch_ranges, Estimate, LinearFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySettings {
    pub eta: f64,
    pub d_min: usize,
    pub d_max: usize,
    pub replicates: usize,
    pub boundary: TreeBoundary,
    /// Batches used for standard errors of ratio-of-means estimators.
    pub batches: usize,
    pub s_grid: Vec<f64>,
    /// Moment used by the localization sum.
    pub s: f64,
    /// Fits below this `R²` are flagged.
    pub min_r_squared: f64,
}

impl Default for DecaySettings {
    fn default() -> Self {
        DecaySettings {
            eta: 1e-6,
            d_min: 6,
            d_max: 12,
            replicates: 100,
            boundary: TreeBoundary::FreeTree,
            batches: 20,
            s_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
            s: 0.5,
            min_r_squared: 0.98,
        }
    }
}

impl DecaySettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta must be positive"));
        }
        if self.d_min < 1 || self.d_max < self.d_min + 3 {
            return Err(Error::invalid("distance window needs at least 4 distances"));
        }
        if self.replicates == 0 || self.batches == 0 {
            return Err(Error::invalid("replicates and batches must be positive"));
        }
        if self.s_grid.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::invalid("s grid must lie in (0, 1]"));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::invalid("localization moment s must lie in (0, 1)"));
        }
        Ok(())
    }

    fn distances(&self) -> Vec<usize> {
        (self.d_min..=self.d_max).collect()
    }
}

/// Shell means of one replicate, indexed by distance in the window.
#[derive(Debug, Clone)]
struct ShellMeans {
    log_tau: Vec<f64>,
    trunc: Vec<f64>,
    /// `[s index][distance]` of `min{|τ|,1}^s`.
    trunc_pow: Vec<Vec<f64>>,
    /// `|τ|^s` at the localization moment.
    pow_s: Vec<f64>,
    sigma0: Complex64,
}

/// Per-replicate shell statistics of `|τ(0, x)|` over a distance window.
#[derive(Debug, Clone)]
pub struct DecaySamples {
    pub e: f64,
    pub lambda: f64,
    pub k: usize,
    pub distances: Vec<usize>,
    pub sphere_sizes: Vec<usize>,
    batches: usize,
    shells: Vec<ShellMeans>,
    dos: Vec<f64>,
}

/// Sample the window statistics for every replicate.
pub fn decay_samples(model: &OperatorModel, e: f64, settings: &DecaySettings) -> Result<DecaySamples> {
    settings.validate()?;
    let shape = model
        .graph
        .tree_shape()
        .ok_or_else(|| Error::Unsupported("decay rates need a tree topology".into()))?
        .clone();
    if settings.d_max + 2 > shape.depth {
        return Err(Error::invalid(format!(
            "window end {} must stay two shells inside depth {}",
            settings.d_max, shape.depth
        )));
    }
    let z = ComplexEnergy::new(e, settings.eta)?;
    let distances = settings.distances();
    let eff = model.dist.scaled(model.lambda);
    let shells = try_ordered_map(settings.replicates, |r| {
        let t = TreeResolvent::sampled(model, r as u64, z, settings.boundary, settings.d_max)?;
        let mut m = ShellMeans {
            log_tau: Vec::with_capacity(distances.len()),
            trunc: Vec::with_capacity(distances.len()),
            trunc_pow: vec![Vec::with_capacity(distances.len()); settings.s_grid.len()],
            pow_s: Vec::with_capacity(distances.len()),
            sigma0: t.self_energy(0)?,
        };
        for &d in &distances {
            let taus: Vec<f64> = t.tau_root_shell(d)?.iter().map(|c| c.norm()).collect();
            let n = taus.len() as f64;
            m.log_tau.push(taus.iter().map(|a| a.ln()).sum::<f64>() / n);
            m.trunc.push(taus.iter().map(|a| a.min(1.0)).sum::<f64>() / n);
            for (j, &s) in settings.s_grid.iter().enumerate() {
                m.trunc_pow[j].push(taus.iter().map(|a| a.min(1.0).powf(s)).sum::<f64>() / n);
            }
            m.pow_s.push(taus.iter().map(|a| a.powf(settings.s)).sum::<f64>() / n);
        }
        Ok(m)
    })?;
    let dos = shells
        .iter()
        .map(|m| {
            if model.lambda == 0.0 {
                (1.0 / (-m.sigma0)).im / std::f64::consts::PI
            } else {
                eff.poisson_smoothed(m.sigma0)
            }
        })
        .collect();
    Ok(DecaySamples {
        e,
        lambda: model.lambda,
        k: shape.k,
        sphere_sizes: distances.iter().map(|&d| shape.shell_size(d)).collect(),
        distances,
        batches: settings.batches,
        shells,
        dos,
    })
}

/// Slope with a standard error and the `R²` of the pooled fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub flagged: bool,
}

impl DecaySamples {
    pub fn replicates(&self) -> usize {
        self.shells.len()
    }

    fn xs(&self) -> Vec<f64> {
        self.distances.iter().map(|&d| d as f64).collect()
    }

    /// `χ(d) = ln |S_d|`.
    fn chis(&self) -> Vec<f64> {
        self.sphere_sizes.iter().map(|&s| (s as f64).ln()).collect()
    }

    /// Slope of `f(mean over replicates)` against `xs`, with batch-means
    /// standard errors.
    fn ratio_slope(
        &self,
        xs: &[f64],
        column: impl Fn(&ShellMeans) -> &[f64],
        transform: impl Fn(f64, usize) -> f64,
        min_r2: f64,
    ) -> Result<SlopeEstimate> {
        let fit_of = |range: std::ops::Range<usize>| -> Option<LinearFit> {
            let n = range.len() as f64;
            let ys: Vec<f64> = (0..xs.len())
                .map(|i| transform(self.shells[range.clone()].iter().map(|m| column(m)[i]).sum::<f64>() / n, i))
                .collect();
            if ys.iter().all(|y| y.is_finite()) {
                LinearFit::fit(xs, &ys)
            } else {
                None
            }
        };
        let all = fit_of(0..self.replicates())
            .ok_or_else(|| Error::Insufficient("degenerate decay fit".into()))?;
        let batches = batch_ranges(self.replicates(), self.batches);
        let slopes: Vec<f64> = batches.into_iter().filter_map(|b| fit_of(b).map(|f| f.slope)).collect();
        let stderr = if slopes.len() > 1 {
            Estimate::from_samples(&slopes).stderr
        } else {
            all.slope_stderr
        };
        Ok(SlopeEstimate {
            value: all.slope,
            stderr,
            r_squared: all.r_squared,
            flagged: all.r_squared < min_r2,
        })
    }

    /// `L0 = −d/dd E[ln|τ|]`; errors from per-replicate slopes.
    pub fn l0(&self, min_r2: f64) -> Result<SlopeEstimate> {
        let xs = self.xs();
        let per: Vec<f64> = self
            .shells
            .iter()
            .filter_map(|m| LinearFit::fit(&xs, &m.log_tau).map(|f| -f.slope))
            .collect();
        let pooled = self.ratio_slope(&xs, |m| &m.log_tau, |y, _| y, min_r2)?;
        let est = Estimate::from_samples(&per);
        Ok(SlopeEstimate {
            value: -pooled.value,
            stderr: if per.len() > 1 { est.stderr } else { pooled.stderr },
            ..pooled
        })
    }

    /// `L1 = −d/dd ln E[min{|τ|, 1}]`.
    pub fn l1(&self, min_r2: f64) -> Result<SlopeEstimate> {
        let s = self.ratio_slope(&self.xs(), |m| &m.trunc, |y, _| y.ln(), min_r2)?;
        Ok(SlopeEstimate { value: -s.value, ..s })
    }

    /// `φ(s)`: slope of `ln E[min{|τ|,1}^s]` against `χ(d)`.
    fn phi(&self, j: usize, min_r2: f64) -> Result<SlopeEstimate> {
        self.ratio_slope(&self.chis(), |m| &m.trunc_pow[j], |y, _| y.ln(), min_r2)
    }

    /// Slope in `d` of `ln(|S_d| E[|τ|^s])`, the log of the partial-sum
    /// increments of the localization sum.
    fn increment_slope(&self, min_r2: f64) -> Result<SlopeEstimate> {
        let sizes = self.sphere_sizes.clone();
        self.ratio_slope(&self.xs(), |m| &m.pow_s, move |y, i| (sizes[i] as f64 * y).ln(), min_r2)
    }

    /// Partial-sum increments `|S_d| E[|τ|^s]` over the window.
    pub fn increments(&self) -> Vec<f64> {
        let n = self.replicates() as f64;
        (0..self.distances.len())
            .map(|i| self.sphere_sizes[i] as f64 * self.shells.iter().map(|m| m.pow_s[i]).sum::<f64>() / n)
            .collect()
    }

    pub fn dos(&self) -> Estimate {
        Estimate::from_samples(&self.dos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub e: f64,
    pub lambda: f64,
    pub l0: SlopeEstimate,
    pub l1: SlopeEstimate,
    pub d_min: usize,
    pub d_max: usize,
    pub replicates: usize,
    /// `L1 ≤ L0 + 3 stderr`.
    pub ordered: bool,
    /// `L1 ≥ ln √K − 3 stderr`.
    pub above_half_log_k: bool,
}

pub fn lyapunov_from(samples: &DecaySamples, settings: &DecaySettings) -> Result<LyapunovEstimate> {
    let l0 = samples.l0(settings.min_r_squared)?;
    let l1 = samples.l1(settings.min_r_squared)?;
    let half = 0.5 * (samples.k as f64).ln();
    let se = (l0.stderr.powi(2) + l1.stderr.powi(2)).sqrt();
    Ok(LyapunovEstimate {
        e: samples.e,
        lambda: samples.lambda,
        ordered: l1.value <= l0.value + 3.0 * se + 1e-12,
        above_half_log_k: l1.value >= half - 3.0 * l1.stderr - 1e-12,
        l0,
        l1,
        d_min: settings.d_min,
        d_max: settings.d_max,
        replicates: samples.replicates(),
    })
}

pub fn lyapunov(model: &OperatorModel, e: f64, settings: &DecaySettings) -> Result<LyapunovEstimate> {
    lyapunov_from(&decay_samples(model, e, settings)?, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyCurve {
    pub e: f64,
    pub lambda: f64,
    pub s: Vec<f64>,
    pub phi: Vec<SlopeEstimate>,
    /// Second differences on the grid are all `≥ −3 stderr`.
    pub convex: bool,
}

pub fn free_energy_from(samples: &DecaySamples, settings: &DecaySettings) -> Result<FreeEnergyCurve> {
    let phi: Vec<SlopeEstimate> = (0..settings.s_grid.len())
        .map(|j| samples.phi(j, settings.min_r_squared))
        .collect::<Result<_>>()?;
    let s = &settings.s_grid;
    let mut convex = true;
    for j in 1..phi.len().saturating_sub(1) {
        // Second divided difference on a possibly uneven grid.
        let (h0, h1) = (s[j] - s[j - 1], s[j + 1] - s[j]);
        let dd = (phi[j + 1].value - phi[j].value) / h1 - (phi[j].value - phi[j - 1].value) / h0;
        let se = (phi[j - 1].stderr + 2.0 * phi[j].stderr + phi[j + 1].stderr) / h0.min(h1);
        if dd < -3.0 * se - 1e-9 {
            convex = false;
        }
    }
    Ok(FreeEnergyCurve {
        e: samples.e,
        lambda: samples.lambda,
        s: s.clone(),
        phi,
        convex,
    })
}

pub fn free_energy(model: &OperatorModel, e: f64, settings: &DecaySettings) -> Result<FreeEnergyCurve> {
    free_energy_from(&decay_samples(model, e, settings)?, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    DelocalizationTestPassed,
    LocalizationTestPassed,
    Inconclusive,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::DelocalizationTestPassed => "delocalization-test-passed",
            Phase::LocalizationTestPassed => "localization-test-passed",
            Phase::Inconclusive => "inconclusive",
        }
    }
}

/// Smallest density of states accepted as positive by the delocalization test.
pub const DOS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVerdict {
    pub e: f64,
    pub lambda: f64,
    pub verdict: Phase,
    pub lyapunov: LyapunovEstimate,
    pub log_k: f64,
    pub dos: Estimate,
    pub s: f64,
    /// `|S_d| E[|τ|^s]` over the window.
    pub increments: Vec<f64>,
    pub increment_slope: SlopeEstimate,
    pub delocalization_test: bool,
    pub localization_test: bool,
}

pub fn phase_verdict_from(samples: &DecaySamples, settings: &DecaySettings) -> Result<PhaseVerdict> {
    let lyapunov = lyapunov_from(samples, settings)?;
    let log_k = (samples.k as f64).ln();
    let dos = samples.dos();
    let deloc = lyapunov.l0.value + 3.0 * lyapunov.l0.stderr < log_k
        && dos.mean > 3.0 * dos.stderr
        && dos.mean >= DOS_FLOOR;
    let inc = samples.increment_slope(settings.min_r_squared)?;
    let loc = inc.value + 3.0 * inc.stderr < 0.0;
    let verdict = match (deloc, loc) {
        (true, false) => Phase::DelocalizationTestPassed,
        (false, true) => Phase::LocalizationTestPassed,
        _ => Phase::Inconclusive,
    };
    Ok(PhaseVerdict {
        e: samples.e,
        lambda: samples.lambda,
        verdict,
        lyapunov,
        log_k,
        dos,
        s: settings.s,
        increments: samples.increments(),
        increment_slope: inc,
        delocalization_test: deloc,
        localization_test: loc,
    })
}

pub fn phase_verdict(model: &OperatorModel, e: f64, settings: &DecaySettings) -> Result<PhaseVerdict> {
    phase_verdict_from(&decay_samples(model, e, settings)?, settings)
}

/// One `(E, λ)` cell; a failed cell keeps its error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub e: f64,
    pub lambda: f64,
    pub result: std::result::Result<PhaseVerdict, String>,
}

/// Phase verdicts on an `(E, λ)` grid. Cell `(i, j)` uses its own seed
/// derived from the model seed and `(i, j)`.
pub fn phase_scan(
    model: &OperatorModel,
    energies: &[f64],
    lambdas: &[f64],
    settings: &DecaySettings,
) -> Result<Vec<PhaseCell>> {
    if energies.is_empty() || lambdas.is_empty() {
        return Err(Error::invalid("phase scan grids must be nonempty"));
    }
    settings.validate()?;
    let mut out = Vec::with_capacity(energies.len() * lambdas.len());
    for (j, &lambda) in lambdas.iter().enumerate() {
        for (i, &e) in energies.iter().enumerate() {
            let result = model
                .with_lambda(lambda)
                .map(|m| m.with_seed(derive_seed(model.seed, &[i as u64, j as u64])))
                .and_then(|m| phase_verdict(&m, e, settings))
                .map_err(|err| err.to_string());
            out.push(PhaseCell { e, lambda, result });
        }
    }
    Ok(out)
}
