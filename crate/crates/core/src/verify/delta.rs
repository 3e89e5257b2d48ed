//! Delta-function principle: for `V` independent of `Ξ_n = X + i/n`,
//! `lim E[(1/π) Im 1/(V − Ξ_n)] ≤ c(δ) inf_ε (2ε)^{-1} P(|V − X| ≤ ε)`
//! whenever the density of `V` satisfies the pointwise smoothing bound.
//!
//! The expectation over `V` is done in closed form (Poisson smoothing of
//! its law); only `X` is sampled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_density_condition, Distribution};
use crate::resolvent::EtaLadder;
use crate::rng::{stream, Domain};
use crate::stats::{Estimate, LinearFit};

/// Rungs used for the `η → 0` extrapolation.
const LIMIT_RUNGS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaReport {
    pub delta: f64,
    /// Smoothing constant `c(δ)` of the law of `V`.
    pub c: f64,
    pub etas: Vec<f64>,
    pub lhs_trace: Vec<Estimate>,
    /// Extrapolated `η → 0` value of the left side.
    pub lhs: Estimate,
    /// Distance between the extrapolated value and the smallest rung.
    pub extrapolation_error: f64,
    /// `inf_ε (2ε)^{-1} P(|V − X| ≤ ε)` and the minimizing `ε`.
    pub smoothed: Estimate,
    pub eps_star: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl DeltaReport {
    /// Right side for another smoothing constant; linear in `c`.
    pub fn rhs_with_constant(&self, c: f64) -> f64 {
        c * self.smoothed.mean
    }
}

/// Default `ε` grid `δ 2^{-k}`, `k = 0..12`.
pub fn default_eps_grid(delta: f64) -> Vec<f64> {
    (0..12).map(|k| delta * 0.5f64.powi(k)).collect()
}

pub fn delta_principle(
    v_law: &Distribution,
    x_law: &Distribution,
    delta: f64,
    ladder: &EtaLadder,
    eps_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<DeltaReport> {
    v_law.validate()?;
    x_law.validate()?;
    ladder.validate()?;
    let cond = check_density_condition(v_law, delta)?;
    if !cond.holds {
        return Err(Error::invalid(format!(
            "{} density fails the smoothing condition at δ = {delta}",
            v_law.name()
        )));
    }
    if replicates < 2 {
        return Err(Error::invalid("need at least 2 replicates"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0 && e <= delta)) {
        return Err(Error::invalid("ε grid must be nonempty and lie in (0, δ]"));
    }
    let etas = ladder.etas();
    if etas.len() < LIMIT_RUNGS {
        return Err(Error::invalid("ladder too short for the η → 0 limit"));
    }

    let xs: Vec<f64> = (0..replicates)
        .map(|r| x_law.sample(&mut stream(seed, Domain::Verification, r as u64)))
        .collect();

    let per_eta: Vec<Vec<f64>> = etas
        .iter()
        .map(|&eta| {
            xs.iter()
                .map(|&x| v_law.poisson_smoothed(num_complex::Complex64::new(x, eta)))
                .collect()
        })
        .collect();
    let lhs_trace: Vec<Estimate> = per_eta.iter().map(|s| Estimate::from_samples(s)).collect();

    let tail = &etas[etas.len() - LIMIT_RUNGS..];
    let limits: Vec<f64> = (0..replicates)
        .map(|r| {
            let ys: Vec<f64> = per_eta[etas.len() - LIMIT_RUNGS..].iter().map(|s| s[r]).collect();
            LinearFit::fit(tail, &ys).map_or(ys[LIMIT_RUNGS - 1], |f| f.intercept)
        })
        .collect();
    let lhs = Estimate::from_samples(&limits);
    let extrapolation_error = (lhs.mean - lhs_trace[etas.len() - 1].mean).abs();

    let (smoothed, eps_star) = eps_grid
        .iter()
        .map(|&eps| {
            let s: Vec<f64> = xs.iter().map(|&x| v_law.mass(x - eps, x + eps) / (2.0 * eps)).collect();
            (Estimate::from_samples(&s), eps)
        })
        .min_by(|a, b| a.0.mean.total_cmp(&b.0.mean))
        .unwrap();
    let rhs = cond.c * smoothed.mean;
    let se = (lhs.stderr.powi(2) + (cond.c * smoothed.stderr).powi(2)).sqrt();
    Ok(DeltaReport {
        delta,
        c: cond.c,
        etas,
        lhs_trace,
        lhs,
        smoothed,
        eps_star,
        rhs,
        extrapolation_error,
        holds: lhs.mean <= rhs + 3.0 * se + extrapolation_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_uniforms() {
        let u = Distribution::uniform(0.0, 1.0);
        let r = delta_principle(&u, &u, 0.1, &EtaLadder::default(), &default_eps_grid(0.1), 4000, 3).unwrap();
        // Density of V − X at 0 is 1.
        assert!((r.lhs.mean - 1.0).abs() < 4.0 * r.lhs.stderr + 1e-3, "{:?}", r.lhs);
        assert!((r.c - 2.0).abs() < 1e-3);
        assert!(r.rhs > 1.8 && r.holds);
        assert!((r.rhs_with_constant(2.0 * r.c) - 2.0 * r.rhs).abs() <= 1e-15 * r.rhs);
    }

    #[test]
    fn gaussian_at_zero() {
        let g = Distribution::gaussian(0.0, 1.0);
        let zero = Distribution::Bernoulli { p: 0.5, v0: 0.0, v1: 0.0 };
        let ladder = EtaLadder { eta0: 0.01, rungs: 6 };
        let r = delta_principle(&g, &zero, 0.1, &ladder, &default_eps_grid(0.1), 4, 1).unwrap();
        let rho0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.lhs.mean - rho0).abs() < 1e-6, "{}", r.lhs.mean);
        assert!(r.holds && r.rhs >= rho0 - 1e-12, "{} {}", r.rhs, r.c);
    }

    #[test]
    fn rejects_atoms() {
        let b = Distribution::Bernoulli { p: 0.5, v0: -1.0, v1: 1.0 };
        let u = Distribution::uniform(0.0, 1.0);
        assert!(delta_principle(&b, &u, 0.1, &EtaLadder::default(), &[0.1], 10, 0).is_err());
    }
}
