//! The full verification suite behind `verify-all`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::area::{two_site_area_bound, AreaParams};
use super::delta::{default_eps_grid, delta_principle};
use super::mobius::mobius_dichotomy;
use super::rank_one::{verify_rank_one_eigen, ANGLE_TOL, EIGEN_TOL, MASS_TOL};
use super::simplicity::{spectral_null_average, spectrum_simplicity, CouplingLaw};
use super::{random_symmetric, random_unit, CheckRecord, SpectralDecomposition};
use crate::diagnostics::Thresholds;
use crate::error::{Error, Result};
use crate::graph::{Graph, TopologySpec};
use crate::operator::{Distribution, Hopping, OperatorModel};
use crate::parallel::try_ordered_map;
use crate::resolvent::EtaLadder;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSettings {
    pub rank_one_instances: usize,
    pub mobius_scans: usize,
    pub mobius_grid: usize,
    pub area_draws: usize,
    pub delta_replicates: usize,
    pub delta: f64,
    pub simplicity_replicates: usize,
    pub null_replicates: usize,
    pub gap_tol: f64,
    pub ladder: EtaLadder,
    pub thresholds: Thresholds,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            rank_one_instances: 50,
            mobius_scans: 10,
            mobius_grid: 121,
            area_draws: 50,
            delta_replicates: 2000,
            delta: 0.1,
            simplicity_replicates: 1000,
            null_replicates: 10_000,
            gap_tol: 1e-8,
            ladder: EtaLadder::default(),
            thresholds: Thresholds::default(),
        }
    }
}

impl SuiteSettings {
    pub fn validate(&self) -> Result<()> {
        self.ladder.validate()?;
        self.thresholds.validate()?;
        if self.mobius_grid < super::mobius::MIN_GRID {
            return Err(Error::invalid("mobius_grid must be at least 100"));
        }
        if !(self.gap_tol > 0.0) || !(self.delta > 0.0) {
            return Err(Error::invalid("gap_tol and delta must be positive"));
        }
        if self.delta_replicates < 2 || self.simplicity_replicates == 0 || self.null_replicates == 0 {
            return Err(Error::invalid("replicate counts must be positive"));
        }
        Ok(())
    }
}

fn rng(seed: u64, aux: u32, i: usize) -> ChaCha8Rng {
    stream(seed, Domain::Auxiliary(aux), i as u64)
}

/// Random symmetric `H0` of size 10..=40, a unit `ψ` and `E` midway
/// between two consecutive eigenvalues.
pub fn rank_one_case(seed: u64, i: usize) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let mut r = rng(seed, 1, i);
    let n = r.random_range(10..=40);
    let h0 = random_symmetric(&mut r, n);
    let psi = if i % 2 == 0 {
        let mut p = DVector::zeros(n);
        p[r.random_range(0..n)] = 1.0;
        p
    } else {
        random_unit(&mut r, n)
    };
    let d = SpectralDecomposition::new(&h0)?;
    let k = r.random_range(0..n - 1);
    Ok((h0, psi, 0.5 * (d.eigenvalues[k] + d.eigenvalues[k + 1])))
}

pub fn rank_one_checks(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let reports = try_ordered_map(instances, |i| {
        let (h0, psi, e) = rank_one_case(seed, i)?;
        verify_rank_one_eigen(&h0, &psi, e)
    })?;
    let worst = |f: &dyn Fn(&super::RankOneReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let least_moved = reports
        .iter()
        .map(|r| r.perturbed_distance / r.expected_shift)
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        CheckRecord::at_most("rank_one.eigenvalue", worst(&|r| r.eigen_distance), 0.0, EIGEN_TOL),
        CheckRecord::at_most("rank_one.eigenvector_sine", worst(&|r| r.sine), 0.0, ANGLE_TOL),
        CheckRecord::at_most("rank_one.mass", worst(&|r| (r.mass - r.predicted_mass).abs()), 0.0, MASS_TOL),
        CheckRecord::at_least("rank_one.uniqueness", least_moved, 0.5, 0.0)
            .with_detail("min spectral distance over first-order shift"),
    ])
}

/// A scan with a built-in crossing: `E` is an eigenvalue of `H` with site
/// `x = 0` removed and `V(u = 1) = w*`, where `w*` sits on the grid.
pub struct MobiusCase {
    pub h: DMatrix<f64>,
    pub grid: Vec<f64>,
    pub crossing: f64,
    pub e: f64,
}

pub fn mobius_case(seed: u64, i: usize, grid_len: usize) -> Result<MobiusCase> {
    let mut r = rng(seed, 2, i);
    let n = r.random_range(6..=16);
    let h = random_symmetric(&mut r, n);
    let step = 6.0 / (grid_len - 1) as f64;
    let grid: Vec<f64> = (0..grid_len).map(|j| -3.0 + step * j as f64).collect();
    let crossing = grid[r.random_range(grid_len / 5..4 * grid_len / 5)];
    let mut reduced = h.clone().remove_row(0).remove_column(0);
    reduced[(0, 0)] = crossing;
    let d = SpectralDecomposition::new(&reduced)?;
    // The level most visible from both x and u.
    let k = (0..n - 1)
        .max_by(|&a, &b| {
            let weight = |k: usize| {
                let phi = d.eigenvector(k);
                let hop: f64 = (1..n).map(|y| h[(0, y)] * phi[y - 1]).sum();
                (phi[0] * hop).abs()
            };
            weight(a).total_cmp(&weight(b))
        })
        .unwrap();
    Ok(MobiusCase {
        h,
        grid,
        crossing,
        e: d.eigenvalues[k],
    })
}

pub fn mobius_checks(seed: u64, settings: &SuiteSettings) -> Result<Vec<CheckRecord>> {
    let scans = try_ordered_map(settings.mobius_scans, |i| {
        let c = mobius_case(seed, i, settings.mobius_grid)?;
        let s = mobius_dichotomy(&c.h, 0, 1, c.e, &c.grid, &settings.ladder, &settings.thresholds)?;
        Ok((c, s))
    })?;
    let step = 6.0 / (settings.mobius_grid - 1) as f64;
    let max_clusters = scans.iter().map(|(_, s)| s.clusters.len()).max().unwrap_or(0);
    let mut max_miss: f64 = 0.0;
    let mut max_predict: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    for (c, s) in &scans {
        max_defect = max_defect.max(s.cross_ratio_defect);
        if let Some(cl) = s.clusters.first() {
            max_miss = max_miss.max((cl.peak - c.crossing).abs() / step);
            let p = s.predicted.unwrap_or(f64::INFINITY);
            max_predict = max_predict.max((p - cl.peak).abs() / step);
        }
    }
    let far = mobius_case(seed, settings.mobius_scans, settings.mobius_grid)?;
    let far_scan = mobius_dichotomy(&far.h, 0, 1, 40.0, &far.grid, &settings.ladder, &settings.thresholds)?;
    Ok(vec![
        CheckRecord::at_most("mobius.clusters", max_clusters as f64, 1.0, 0.0),
        CheckRecord::at_most("mobius.cluster_at_crossing", max_miss, 1.0, 0.0)
            .with_detail("distance in grid steps"),
        CheckRecord::at_most("mobius.cross_ratio_prediction", max_predict, 1.0, 0.0)
            .with_detail("distance in grid steps"),
        CheckRecord::at_most("mobius.cross_ratio_invariance", max_defect, 0.0, 1e-8),
        CheckRecord::at_most("mobius.far_energy_clusters", far_scan.clusters.len() as f64, 0.0, 0.0),
    ])
}

/// Random `(σ_x, σ_y, γ, a, b)` with `a, b` log-uniform on `[0.01, 1]`.
pub fn area_params(seed: u64, i: usize) -> AreaParams {
    let mut r = rng(seed, 3, i);
    let mut c = |re: (f64, f64), im: (f64, f64)| {
        Complex64::new(r.random_range(re.0..re.1), r.random_range(im.0..im.1))
    };
    let sigma_x = c((-0.5, 1.5), (0.0, 0.3));
    let sigma_y = c((-0.5, 1.5), (0.0, 0.3));
    let gamma = c((-1.0, 1.0), (-1.0, 1.0));
    let a = 10f64.powf(r.random_range(-2.0..0.0));
    let b = 10f64.powf(r.random_range(-2.0..0.0));
    AreaParams {
        sigma_x,
        sigma_y,
        gamma,
        a,
        b,
    }
}

pub fn area_checks(seed: u64, draws: usize) -> Result<Vec<CheckRecord>> {
    let rho = Distribution::uniform(0.0, 1.0);
    let mut cases = vec![AreaParams {
        sigma_x: Complex64::new(0.5, 0.0),
        sigma_y: Complex64::new(0.5, 0.0),
        gamma: Complex64::new(0.0, 0.0),
        a: 0.1,
        b: 0.1,
    }];
    cases.extend((0..draws).map(|i| area_params(seed, i)));
    let reports = try_ordered_map(cases.len(), |i| two_site_area_bound(&rho, &rho, &cases[i]))?;
    let excess = reports
        .iter()
        .map(|r| (r.lhs - r.rhs - r.quadrature_error) / r.rhs)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: usize = reports.iter().map(|r| r.w_bound_violations).sum();
    let iv: usize = reports.iter().map(|r| r.interval_violations).sum();
    Ok(vec![
        CheckRecord::at_most("area.bound", excess, 0.0, 0.0).with_detail("max (lhs − rhs − err)/rhs"),
        CheckRecord::at_most("area.w_bound_violations", w as f64, 0.0, 0.0),
        CheckRecord::at_most("area.interval_violations", iv as f64, 0.0, 0.0),
    ])
}

/// The three `(V, X)` pairs exercised by the delta-function principle.
pub fn delta_pairs() -> [(&'static str, Distribution, Distribution); 3] {
    [
        ("uniform_uniform", Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)),
        (
            "gaussian_point",
            Distribution::gaussian(0.0, 1.0),
            Distribution::Bernoulli { p: 0.5, v0: 0.0, v1: 0.0 },
        ),
        ("cauchy_uniform", Distribution::cauchy(0.0, 1.0), Distribution::uniform(-1.0, 1.0)),
    ]
}

pub fn delta_checks(seed: u64, settings: &SuiteSettings) -> Result<Vec<CheckRecord>> {
    delta_pairs()
        .iter()
        .map(|(name, v, x)| {
            let r = delta_principle(
                v,
                x,
                settings.delta,
                &settings.ladder,
                &default_eps_grid(settings.delta),
                settings.delta_replicates,
                seed,
            )?;
            let se = (r.lhs.stderr.powi(2) + (r.c * r.smoothed.stderr).powi(2)).sqrt();
            Ok(CheckRecord::at_most(
                format!("delta.{name}"),
                r.lhs.mean,
                r.rhs,
                3.0 * se + r.extrapolation_error,
            ))
        })
        .collect()
}

pub fn simplicity_checks(seed: u64, settings: &SuiteSettings) -> Result<Vec<CheckRecord>> {
    let path = OperatorModel::new(
        Graph::build(&TopologySpec::path(8))?,
        Distribution::uniform(0.0, 1.0),
        1.0,
        seed,
    )?;
    let cont = spectrum_simplicity(&path, settings.simplicity_replicates, settings.gap_tol)?;
    let pair = OperatorModel::new(
        Graph::build(&TopologySpec::path(2))?,
        Distribution::Bernoulli { p: 0.5, v0: -1.0, v1: 1.0 },
        1.0,
        seed,
    )?
    .with_hopping(Hopping::Adjacency { scale: 0.0 })?;
    let atoms = spectrum_simplicity(&pair, settings.simplicity_replicates, settings.gap_tol)?;

    let mut r = rng(seed, 4, 0);
    let h0 = random_symmetric(&mut r, 10);
    let psi = random_unit(&mut r, 10);
    let energies = [0.1234, -0.4321];
    let law = CouplingLaw::Continuous(Distribution::uniform(-5.0, 5.0));
    let null = spectral_null_average(&h0, &psi, &energies, &law, settings.null_replicates, seed)?;
    let v = null.exceptional[0].ok_or_else(|| Error::integrity("null_average", "no exceptional coupling"))?;
    let atom = spectral_null_average(&h0, &psi, &energies[..1], &CouplingLaw::Atom(v), 100, seed)?;
    Ok(vec![
        CheckRecord::at_most("simplicity.continuous", cont.frac_degenerate, 0.0, 0.0),
        CheckRecord::at_most("simplicity.bernoulli_pair", (atoms.frac_degenerate - 0.5).abs(), 0.0, 0.05),
        CheckRecord::at_most("null_average.continuous", null.frac_hitting, 0.0, 0.0),
        CheckRecord::at_least("null_average.atom", atom.frac_hitting, 1.0, 0.0)
            .with_detail("point-mass coupling violates the continuity hypothesis"),
    ])
}

/// Run every verification with the given settings.
pub fn run_suite(seed: u64, settings: &SuiteSettings) -> Result<Vec<CheckRecord>> {
    settings.validate()?;
    let mut out = rank_one_checks(seed, settings.rank_one_instances)?;
    out.extend(mobius_checks(seed, settings)?);
    out.extend(area_checks(seed, settings.area_draws)?);
    out.extend(delta_checks(seed, settings)?);
    out.extend(simplicity_checks(seed, settings)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let s = SuiteSettings {
            rank_one_instances: 6,
            mobius_scans: 3,
            area_draws: 5,
            delta_replicates: 200,
            simplicity_replicates: 200,
            null_replicates: 500,
            ..Default::default()
        };
        let records = run_suite(11, &s).unwrap();
        for r in &records {
            assert!(r.passed(), "{r:?}");
        }
    }
}
