//! Area bound for two simultaneously large diagonal Green functions.
//!
//! With `p = u − σ_x`, `q = v − σ_y` and `γ = τ(x,y) τ(y,x)`, the two-site
//! Schur complement gives `|G(x,x)| > 1/a ⟺ |p − γ/q| < a` and
//! `|G(y,y)| > 1/b ⟺ |q − γ/p| < b`. For fixed `v` both conditions are
//! explicit in `u`: the first is an interval, the second a quadratic
//! inequality. The inner integral is therefore exact (distribution mass of
//! at most two intervals); the outer one is a midpoint rule in the
//! probability coordinate of `v`, doubled until it settles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Distribution;

pub const START_NODES: usize = 1024;
pub const MAX_NODES: usize = 1 << 20;
/// Required agreement of successive refinements, relative to the bound.
pub const HALVING_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaParams {
    pub sigma_x: Complex64,
    pub sigma_y: Complex64,
    pub gamma: Complex64,
    pub a: f64,
    pub b: f64,
}

impl AreaParams {
    pub fn validate(&self) -> Result<()> {
        let finite = |c: Complex64| c.re.is_finite() && c.im.is_finite();
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::invalid("a and b must be positive"));
        }
        if !(finite(self.sigma_x) && finite(self.sigma_y) && finite(self.gamma)) {
            return Err(Error::invalid("σ and γ must be finite"));
        }
        Ok(())
    }

    fn swapped(&self) -> Self {
        AreaParams {
            sigma_x: self.sigma_y,
            sigma_y: self.sigma_x,
            gamma: self.gamma,
            a: self.b,
            b: self.a,
        }
    }

    /// `min{|U|, |V|}` never exceeds this on the solution set.
    pub fn w_bound(&self) -> f64 {
        self.gamma.norm().sqrt() + (self.a * self.b).sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaBoundReport {
    pub params: AreaParams,
    pub rho_sup: f64,
    pub lhs: f64,
    /// `|L_N − L_{2N}|` at the accepted refinement.
    pub quadrature_error: f64,
    pub nodes: usize,
    pub rhs: f64,
    pub holds: bool,
    /// Quadrature slices (in either direction) with a nonempty solution set.
    pub solution_slices: usize,
    pub w_bound_violations: usize,
    pub interval_violations: usize,
}

impl AreaBoundReport {
    pub fn passed(&self) -> bool {
        self.holds && self.w_bound_violations == 0 && self.interval_violations == 0
    }
}

/// Right-hand side `4‖ρ‖²√(ab) min{2(√(ab) + √|γ|), max(√(a/b), √(b/a))}`.
pub fn area_rhs(rho_sup: f64, p: &AreaParams) -> f64 {
    let s = (p.a * p.b).sqrt();
    let first = 2.0 * (s + p.gamma.norm().sqrt());
    let second = (p.a / p.b).sqrt().max((p.b / p.a).sqrt());
    4.0 * rho_sup * rho_sup * s * first.min(second)
}

/// Real `u` with both conditions holding at fixed `v`, as disjoint open
/// intervals.
fn slice(p: &AreaParams, v: f64) -> Vec<(f64, f64)> {
    let q = v - p.sigma_y;
    let q2 = q.norm_sqr();
    if q2 == 0.0 {
        return Vec::new();
    }
    let c = p.sigma_x + p.gamma / q;
    if c.im.abs() >= p.a {
        return Vec::new();
    }
    let h = (p.a * p.a - c.im * c.im).sqrt();
    let (lo, hi) = (c.re - h, c.re + h);

    // |q|²|u − c|² < b²|u − σ_x|², i.e. A u² − 2 B u + C < 0.
    let b2 = p.b * p.b;
    let s = p.sigma_x;
    let qa = q2 - b2;
    let qb = q2 * c.re - b2 * s.re;
    let qc = q2 * c.norm_sqr() - b2 * s.norm_sqr();
    let second: Vec<(f64, f64)> = if qa == 0.0 {
        if qb > 0.0 {
            vec![(qc / (2.0 * qb), f64::INFINITY)]
        } else if qb < 0.0 {
            vec![(f64::NEG_INFINITY, qc / (2.0 * qb))]
        } else if qc < 0.0 {
            vec![(f64::NEG_INFINITY, f64::INFINITY)]
        } else {
            Vec::new()
        }
    } else {
        let disc = qb * qb - qa * qc;
        if disc <= 0.0 {
            if qa < 0.0 {
                vec![(f64::NEG_INFINITY, f64::INFINITY)]
            } else {
                Vec::new()
            }
        } else {
            let r = disc.sqrt();
            // Stable roots of A u² − 2 B u + C.
            let t = qb + qb.signum() * r;
            let (r1, r2) = if t != 0.0 { (t / qa, qc / t) } else { (-r / qa, r / qa) };
            let (m, n) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            if qa > 0.0 {
                vec![(m, n)]
            } else {
                vec![(f64::NEG_INFINITY, m), (n, f64::INFINITY)]
            }
        }
    };
    second
        .into_iter()
        .filter_map(|(l, r)| {
            let (l, r) = (l.max(lo), r.min(hi));
            (l < r).then_some((l, r))
        })
        .collect()
}

struct SliceAudit {
    nonempty: bool,
    w_violations: usize,
    interval_violation: bool,
}

/// Check the interval-length fact and the `min{|U|,|V|}` bound on one slice.
fn audit(p: &AreaParams, v: f64, parts: &[(f64, f64)]) -> SliceAudit {
    let ua = (p.b / p.a).sqrt();
    let va = (p.a / p.b).sqrt();
    let s = (p.a * p.b).sqrt();
    let w = p.w_bound();
    let total: f64 = parts.iter().map(|(l, r)| r - l).sum();
    let interval_violation = ua * total > 2.0 * s * (1.0 + 1e-9) + 1e-12;
    let big_v = va * (v - p.sigma_y).norm();
    let mut w_violations = 0;
    for &(l, r) in parts {
        for t in [0.999_999, 0.5, 0.000_001] {
            let u = l + (r - l) * t;
            let big_u = ua * (u - p.sigma_x).norm();
            if big_u.min(big_v) > w * (1.0 + 1e-9) + 1e-12 {
                w_violations += 1;
            }
        }
    }
    SliceAudit {
        nonempty: !parts.is_empty(),
        w_violations,
        interval_violation,
    }
}

fn interval_mass(dist: &Distribution, parts: &[(f64, f64)]) -> f64 {
    parts.iter().map(|&(l, r)| dist.mass(l, r)).sum()
}

/// `∫ ρ2(v) ρ1(slice(v)) dv` by an `n`-node midpoint rule in `t = F2(v)`.
fn integrate(p: &AreaParams, rho1: &Distribution, rho2: &Distribution, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let v = rho2.quantile((i as f64 + 0.5) * h);
            interval_mass(rho1, &slice(p, v))
        })
        .sum::<f64>()
        * h
}

/// Measure under `ρ1 ⊗ ρ2` of the set where both diagonal Green functions
/// are large, against the area bound.
pub fn two_site_area_bound(rho1: &Distribution, rho2: &Distribution, params: &AreaParams) -> Result<AreaBoundReport> {
    params.validate()?;
    rho1.validate()?;
    rho2.validate()?;
    let rho_sup = rho1.density_sup()?.max(rho2.density_sup()?);
    let rhs = area_rhs(rho_sup, params);

    let mut n = START_NODES;
    let mut coarse = integrate(params, rho1, rho2, n);
    let (lhs, quadrature_error) = loop {
        if 2 * n > MAX_NODES {
            return Err(Error::SolverBreakdown(format!(
                "area quadrature did not settle within {MAX_NODES} nodes"
            )));
        }
        let fine = integrate(params, rho1, rho2, 2 * n);
        let err = (fine - coarse).abs();
        n *= 2;
        if err <= HALVING_TOL * rhs {
            break (fine, err);
        }
        coarse = fine;
    };

    let swapped = params.swapped();
    let mut solution_slices = 0;
    let mut w_bound_violations = 0;
    let mut interval_violations = 0;
    let h = 1.0 / n as f64;
    for (pp, dist) in [(params, rho2), (&swapped, rho1)] {
        for i in 0..n {
            let v = dist.quantile((i as f64 + 0.5) * h);
            let parts = slice(pp, v);
            let a = audit(pp, v, &parts);
            solution_slices += a.nonempty as usize;
            w_bound_violations += a.w_violations;
            interval_violations += a.interval_violation as usize;
        }
    }

    Ok(AreaBoundReport {
        params: *params,
        rho_sup,
        lhs,
        quadrature_error,
        nodes: n,
        rhs,
        holds: lhs <= rhs + quadrature_error,
        solution_slices,
        w_bound_violations,
        interval_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: Complex64, a: f64, b: f64) -> AreaParams {
        AreaParams {
            sigma_x: Complex64::new(0.5, 0.0),
            sigma_y: Complex64::new(0.4, 0.0),
            gamma,
            a,
            b,
        }
    }

    #[test]
    fn decoupled_case_is_a_box() {
        let u = Distribution::uniform(0.0, 1.0);
        let p = params(Complex64::new(0.0, 0.0), 0.1, 0.1);
        let r = two_site_area_bound(&u, &u, &p).unwrap();
        // |u − 0.5| < 0.1 and |v − 0.4| < 0.1.
        assert!((r.lhs - 0.04).abs() < 1e-4, "{}", r.lhs);
        assert!(r.passed());
    }

    #[test]
    fn slice_matches_brute_force() {
        let p = AreaParams {
            sigma_x: Complex64::new(0.2, 0.05),
            sigma_y: Complex64::new(-0.1, 0.02),
            gamma: Complex64::new(0.3, -0.1),
            a: 0.4,
            b: 0.7,
        };
        for v in [-1.0, -0.3, 0.0, 0.25, 0.9] {
            let parts = slice(&p, v);
            let q = Complex64::new(v, 0.0) - p.sigma_y;
            for i in 0..4000 {
                let u = -3.0 + 6.0 * (i as f64 + 0.5) / 4000.0;
                let pu = Complex64::new(u, 0.0) - p.sigma_x;
                let inside = (pu - p.gamma / q).norm() < p.a && (q - p.gamma / pu).norm() < p.b;
                let listed = parts.iter().any(|&(l, r)| l < u && u < r);
                assert_eq!(inside, listed, "v = {v}, u = {u}");
            }
        }
    }

    #[test]
    fn strong_coupling_still_bounded() {
        let g = Distribution::gaussian(0.0, 0.5);
        let p = params(Complex64::new(2.0, 0.5), 0.3, 0.05);
        let r = two_site_area_bound(&g, &g, &p).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
