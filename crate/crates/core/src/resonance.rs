//! Resonant delocalization: cutoff calibration, the tunneling / resonance /
//! non-degeneracy events, sphere counts `N_R` and their moment bounds.
//!
//! All Green data are taken at `E + iη` with a small `η`; on open tree
//! truncations `Im Σ` is then of order `η` and the real-energy picture is
//! recovered up to that slack.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::operator::{OperatorModel, PotentialSample};
use crate::parallel::try_ordered_map;
use crate::resolvent::{ComplexEnergy, DenseResolvent, EtaLadder, SchurData, TreeBoundary, TreeResolvent};
use crate::rng::{derive_seed, stream, Domain};
use crate::stats::{lower_quantile, Estimate, LinearFit};

const CALIBRATION_TAG: u64 = 0xca1b;
/// Replicates processed per parallel batch before folding into totals.
const BATCH: usize = 256;

/// Knobs shared by calibration, event detection and the sphere reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceSettings {
    /// Calibration level: `t(d)` is the lower `δ`-quantile of `|τ(0,x)|`.
    pub delta: f64,
    pub eta: f64,
    pub calibration_replicates: usize,
    pub boundary: TreeBoundary,
    /// Lower bound enforced on `|g|` when all three events hold.
    pub g_floor: f64,
    /// Spheres up to this size use every partner for `C_T`.
    pub full_pair_limit: usize,
    pub partner_samples: usize,
    /// Test hook: multiplies every `g` before the bound is checked.
    #[serde(skip)]
    pub fault_g_scale: Option<f64>,
}

impl Default for ResonanceSettings {
    fn default() -> Self {
        ResonanceSettings {
            delta: 0.1,
            eta: EtaLadder::default().eta_min(),
            calibration_replicates: 1000,
            boundary: TreeBoundary::Open,
            g_floor: 0.49,
            full_pair_limit: 512,
            partner_samples: 64,
            fault_g_scale: None,
        }
    }
}

impl ResonanceSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::invalid("delta must lie in (0, 0.5)"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta must be positive"));
        }
        if self.calibration_replicates == 0 || self.partner_samples == 0 {
            return Err(Error::invalid("replicate and partner counts must be positive"));
        }
        if !(self.g_floor > 0.0 && self.g_floor <= 0.5) {
            return Err(Error::invalid("g_floor must lie in (0, 0.5]"));
        }
        Ok(())
    }
}

/// Distance-dependent cutoff `t(d)`, `t(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    pub e: f64,
    pub delta: f64,
    pub t: Vec<f64>,
    /// Fraction of calibration samples with `|τ| ≥ t(d)`.
    pub coverage: Vec<f64>,
    pub replicates: usize,
}

impl CutoffFunction {
    pub fn at(&self, d: usize) -> Result<f64> {
        self.t.get(d).copied().ok_or_else(|| {
            Error::invalid(format!("cutoff calibrated up to distance {} only", self.t.len() - 1))
        })
    }

    pub fn r_max(&self) -> usize {
        self.t.len() - 1
    }
}

/// Per-replicate Green data source: tree recursion or dense LU.
enum Backend {
    Tree(TreeResolvent),
    Dense {
        res: DenseResolvent,
        hopping: DMatrix<f64>,
        origin: VertexId,
    },
}

impl Backend {
    fn for_sample(
        model: &OperatorModel,
        sample: &PotentialSample,
        z: ComplexEnergy,
        boundary: TreeBoundary,
    ) -> Result<Self> {
        if use_tree(model) {
            Ok(Backend::Tree(TreeResolvent::new(model, sample, z, boundary)?))
        } else {
            let hopping = model.hopping_matrix()?;
            Ok(Backend::Dense {
                res: DenseResolvent::new(&hopping, &sample.values, z)?,
                hopping,
                origin: model.graph.origin(),
            })
        }
    }

    fn for_replicate(
        model: &OperatorModel,
        replicate: u64,
        z: ComplexEnergy,
        boundary: TreeBoundary,
        kept: usize,
    ) -> Result<Self> {
        if use_tree(model) {
            Ok(Backend::Tree(TreeResolvent::sampled(model, replicate, z, boundary, kept)?))
        } else {
            Self::for_sample(model, &model.sample_potential(replicate), z, boundary)
        }
    }

    fn origin(&self) -> VertexId {
        match self {
            Backend::Tree(_) => 0,
            Backend::Dense { origin, .. } => *origin,
        }
    }

    fn pair(&self, x: VertexId, y: VertexId) -> Result<SchurData> {
        match self {
            Backend::Tree(t) => t.pair(x, y),
            Backend::Dense { res, .. } => res.schur_two_site(x, y),
        }
    }

    fn tau_origin(&self, x: VertexId) -> Result<Complex64> {
        match self {
            Backend::Tree(t) => t.tau_root(x),
            Backend::Dense { res, origin, .. } => Ok(res.schur_two_site(*origin, x)?.tau_xy),
        }
    }

    fn origin_self_energy(&self) -> Result<Complex64> {
        match self {
            Backend::Tree(t) => t.self_energy(0),
            Backend::Dense { res, origin, .. } => res.self_energy(*origin),
        }
    }

    fn g(&self, x: VertexId) -> Result<Complex64> {
        match self {
            Backend::Tree(t) => t.g_ratio(x),
            Backend::Dense { res, origin, .. } => res.g_ratio(*origin, x),
        }
    }

    /// `g` after setting the potential at `x` to `value`.
    fn g_with(&self, x: VertexId, value: f64) -> Result<Complex64> {
        match self {
            Backend::Tree(t) => t.g_ratio_with(x, value),
            Backend::Dense { res, hopping, origin } => {
                let mut v = res.potential().to_vec();
                v[x] = value;
                DenseResolvent::new(hopping, &v, res.z())?.g_ratio(*origin, x)
            }
        }
    }
}

fn use_tree(model: &OperatorModel) -> bool {
    model.graph.is_tree() && model.adjacency_scale() == Some(1.0)
}

fn check_sites(model: &OperatorModel, r_max: usize) -> Result<()> {
    for d in 0..=r_max {
        if model.graph.origin_sphere_size(d) == 0 {
            return Err(Error::EmptySphere(d));
        }
    }
    Ok(())
}

/// Calibrate `t(d)` for `d = 0..=r_max` on a stream disjoint from the one
/// used by the reports.
pub fn calibrate_cutoff(
    model: &OperatorModel,
    e: f64,
    r_max: usize,
    settings: &ResonanceSettings,
) -> Result<CutoffFunction> {
    settings.validate()?;
    check_sites(model, r_max)?;
    let z = ComplexEnergy::new(e, settings.eta)?;
    let cal = model.with_seed(derive_seed(model.seed, &[CALIBRATION_TAG]));
    let spheres: Vec<Vec<VertexId>> = (1..=r_max).map(|d| model.graph.origin_sphere(d)).collect();
    let per_rep: Vec<Vec<Vec<f64>>> = try_ordered_map(settings.calibration_replicates, |r| {
        let b = Backend::for_replicate(&cal, r as u64, z, settings.boundary, r_max)?;
        spheres
            .iter()
            .map(|s| s.iter().map(|&x| Ok(b.tau_origin(x)?.norm())).collect())
            .collect()
    })?;
    let mut t = vec![1.0];
    let mut coverage = vec![1.0];
    for d in 0..r_max {
        let mut pool: Vec<f64> = per_rep.iter().flat_map(|r| r[d].iter().copied()).collect();
        let q = lower_quantile(&mut pool, settings.delta).unwrap_or(1.0);
        let td = q.clamp(f64::MIN_POSITIVE, 1.0);
        coverage.push(pool.iter().filter(|&&a| a >= td).count() as f64 / pool.len() as f64);
        t.push(td);
    }
    Ok(CutoffFunction {
        e,
        delta: settings.delta,
        t,
        coverage,
        replicates: settings.calibration_replicates,
    })
}

/// Indicators and witnesses of the three events at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceEvents {
    pub x: VertexId,
    pub t: f64,
    pub tunneling: bool,
    pub resonance: bool,
    pub non_degenerate: bool,
    /// `|τ(0,x)|`
    pub tau_origin_x: f64,
    /// `|V(x) − Σ(x)|`
    pub detuning: f64,
    /// `|V(0) − σ(0)|`
    pub origin_gap: f64,
    /// `|τ(x,0)|`
    pub tau_x_origin: f64,
    /// `|g(x)|`, present when all three events hold.
    pub g_abs: Option<f64>,
}

impl ResonanceEvents {
    pub fn all(&self) -> bool {
        self.tunneling && self.resonance && self.non_degenerate
    }

    /// Recompute the indicators from the witnesses.
    pub fn consistent(&self) -> bool {
        self.tunneling == (self.tau_origin_x >= self.t)
            && self.resonance == (self.detuning <= self.t)
            && self.non_degenerate == (self.origin_gap >= self.tau_x_origin)
    }
}

fn events_from(d: &SchurData, t: f64, v_x: f64) -> ResonanceEvents {
    // `d` is the pair (x, origin).
    let tau_origin_x = d.tau_yx.norm();
    let detuning = (v_x - d.self_energy_x).norm();
    let origin_gap = (d.v_y - d.sigma_y).norm();
    let tau_x_origin = d.tau_xy.norm();
    ResonanceEvents {
        x: d.x,
        t,
        tunneling: tau_origin_x >= t,
        resonance: detuning <= t,
        non_degenerate: origin_gap >= tau_x_origin,
        tau_origin_x,
        detuning,
        origin_gap,
        tau_x_origin,
        g_abs: None,
    }
}

fn enforce_g(ev: &mut ResonanceEvents, g: Complex64, settings: &ResonanceSettings) -> Result<()> {
    let g = g * settings.fault_g_scale.unwrap_or(1.0);
    let a = g.norm();
    ev.g_abs = Some(a);
    if !(a >= settings.g_floor) {
        return Err(Error::integrity(
            "g_bound",
            format!(
                "|g({})| = {a:.6} < {} with |τ(0,x)| = {:.3e}, |V(x) − Σ(x)| = {:.3e}, t = {:.3e}",
                ev.x, settings.g_floor, ev.tau_origin_x, ev.detuning, ev.t
            ),
        ));
    }
    Ok(())
}

fn natural_events(b: &Backend, x: VertexId, t: f64, settings: &ResonanceSettings) -> Result<ResonanceEvents> {
    let d = b.pair(x, b.origin())?;
    let mut ev = events_from(&d, t, d.v_x);
    if ev.all() {
        enforce_g(&mut ev, b.g(x)?, settings)?;
    }
    Ok(ev)
}

/// Events at `x` for one potential sample; an integrity error if all three
/// hold while `|g(x)| < g_floor`.
pub fn detect_events(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    e: f64,
    cutoff: &CutoffFunction,
    settings: &ResonanceSettings,
) -> Result<ResonanceEvents> {
    if x == model.graph.origin() {
        return Err(Error::invalid("events are defined for x away from the origin"));
    }
    let t = cutoff.at(model.graph.depth(x))?;
    let z = ComplexEnergy::new(e, settings.eta)?;
    let b = Backend::for_sample(model, sample, z, settings.boundary)?;
    natural_events(&b, x, t, settings)
}

/// Events after the potential at `x` is moved onto `Re Σ(x)`, so the
/// resonance witness is `|Im Σ(x)|`.
pub fn forced_events(
    model: &OperatorModel,
    sample: &PotentialSample,
    x: VertexId,
    e: f64,
    cutoff: &CutoffFunction,
    settings: &ResonanceSettings,
) -> Result<ResonanceEvents> {
    if x == model.graph.origin() {
        return Err(Error::invalid("events are defined for x away from the origin"));
    }
    let t = cutoff.at(model.graph.depth(x))?;
    let z = ComplexEnergy::new(e, settings.eta)?;
    let b = Backend::for_sample(model, sample, z, settings.boundary)?;
    forced_at(&b, x, t, settings)
}

fn forced_at(b: &Backend, x: VertexId, t: f64, settings: &ResonanceSettings) -> Result<ResonanceEvents> {
    let d = b.pair(x, b.origin())?;
    let v = d.self_energy_x.re;
    let mut ev = events_from(&d, t, v);
    if ev.all() {
        enforce_g(&mut ev, b.g_with(x, v)?, settings)?;
    }
    Ok(ev)
}

/// Tally of triple-event occurrences checked against the `|g|` floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBoundSummary {
    pub natural: u64,
    pub forced: u64,
    pub min_g: f64,
    pub g_floor: f64,
}

impl GBoundSummary {
    pub fn occurrences(&self) -> u64 {
        self.natural + self.forced
    }
}

/// Natural and forced triple events over every site at distance `1..=r_max`.
/// Any violation is returned as an integrity error.
pub fn g_bound_sweep(
    model: &OperatorModel,
    e: f64,
    cutoff: &CutoffFunction,
    replicates: usize,
    settings: &ResonanceSettings,
) -> Result<GBoundSummary> {
    settings.validate()?;
    let r_max = cutoff.r_max();
    check_sites(model, r_max)?;
    let z = ComplexEnergy::new(e, settings.eta)?;
    let sites: Vec<(VertexId, f64)> = (1..=r_max)
        .flat_map(|d| model.graph.origin_sphere(d).into_iter().map(move |x| (x, d)))
        .map(|(x, d)| (x, cutoff.t[d]))
        .collect();
    let per: Vec<(u64, u64, f64)> = try_ordered_map(replicates, |r| {
        let b = Backend::for_replicate(model, r as u64, z, settings.boundary, r_max)?;
        let mut acc = (0u64, 0u64, f64::INFINITY);
        for &(x, t) in &sites {
            let n = natural_events(&b, x, t, settings)?;
            if let Some(g) = n.g_abs {
                acc.0 += 1;
                acc.2 = acc.2.min(g);
            }
            let f = forced_at(&b, x, t, settings)?;
            if let Some(g) = f.g_abs {
                acc.1 += 1;
                acc.2 = acc.2.min(g);
            }
        }
        Ok(acc)
    })?;
    Ok(GBoundSummary {
        natural: per.iter().map(|p| p.0).sum(),
        forced: per.iter().map(|p| p.1).sum(),
        min_g: per.iter().map(|p| p.2).fold(f64::INFINITY, f64::min),
        g_floor: settings.g_floor,
    })
}

/// `E[min{|τ(x,y)|, 1}]` with its standard error.
pub fn truncated_mean_t(
    model: &OperatorModel,
    x: VertexId,
    y: VertexId,
    e: f64,
    replicates: usize,
    settings: &ResonanceSettings,
) -> Result<Estimate> {
    if replicates < 100 {
        return Err(Error::invalid("truncated mean needs at least 100 replicates"));
    }
    let z = ComplexEnergy::new(e, settings.eta)?;
    let kept = model.graph.depth(x).max(model.graph.depth(y));
    let vals = try_ordered_map(replicates, |r| {
        let b = Backend::for_replicate(model, r as u64, z, settings.boundary, kept)?;
        Ok(b.pair(x, y)?.tau_xy.norm().min(1.0))
    })?;
    Ok(Estimate::from_samples(&vals))
}

/// Partners `y ≠ x` used for `Σ_y T(x,y)` on one sphere, with the factor
/// that scales their sum up to the whole sphere.
fn partners(
    model: &OperatorModel,
    members: &[VertexId],
    x: VertexId,
    settings: &ResonanceSettings,
    r: usize,
) -> (Vec<VertexId>, f64) {
    let others: Vec<VertexId> = members.iter().copied().filter(|&y| y != x).collect();
    if others.len() <= settings.full_pair_limit || others.len() <= settings.partner_samples {
        return (others, 1.0);
    }
    let mut rng = stream(model.seed, Domain::PartnerSubsample, r as u64);
    let mut idx = sample_indices(&mut rng, others.len(), settings.partner_samples).into_vec();
    idx.sort_unstable();
    let scale = others.len() as f64 / idx.len() as f64;
    (idx.into_iter().map(|i| others[i]).collect(), scale)
}

struct SphereSetup {
    r: usize,
    members: Vec<VertexId>,
    t: f64,
    rep: VertexId,
    partners: Vec<VertexId>,
    partner_scale: f64,
}

impl SphereSetup {
    fn new(model: &OperatorModel, r: usize, cutoff: &CutoffFunction, settings: &ResonanceSettings) -> Result<Self> {
        let members = model.graph.origin_sphere(r);
        if members.is_empty() {
            return Err(Error::EmptySphere(r));
        }
        let rep = members[0];
        let (partners, partner_scale) = partners(model, &members, rep, settings, r);
        Ok(SphereSetup {
            r,
            t: cutoff.at(r)?,
            members,
            rep,
            partners,
            partner_scale,
        })
    }
}

struct SphereOutcome {
    n_r: u32,
    /// `min{|τ(x,0)|, 1}` per sphere member, when requested.
    t_to_origin: Vec<f64>,
    /// Estimated `Σ_y T(rep, y)` for this replicate.
    partner_sum: f64,
}

struct ReplicateOutcome {
    spheres: Vec<SphereOutcome>,
    sigma0: Complex64,
    g_checks: u64,
    min_g: f64,
}

fn sweep_replicate(
    b: &Backend,
    setups: &[SphereSetup],
    keep_origin_t: bool,
    settings: &ResonanceSettings,
) -> Result<ReplicateOutcome> {
    let mut g_checks = 0;
    let mut min_g = f64::INFINITY;
    let mut spheres = Vec::with_capacity(setups.len());
    for s in setups {
        let mut n_r = 0;
        let mut t_to_origin = Vec::new();
        for &x in &s.members {
            let ev = natural_events(b, x, s.t, settings)?;
            if let Some(g) = ev.g_abs {
                n_r += 1;
                g_checks += 1;
                min_g = min_g.min(g);
            }
            if keep_origin_t {
                t_to_origin.push(ev.tau_x_origin.min(1.0));
            }
        }
        let mut partner_sum = 0.0;
        for &y in &s.partners {
            partner_sum += b.pair(s.rep, y)?.tau_xy.norm().min(1.0);
        }
        spheres.push(SphereOutcome {
            n_r,
            t_to_origin,
            partner_sum: partner_sum * s.partner_scale,
        });
    }
    Ok(ReplicateOutcome {
        spheres,
        sigma0: b.origin_self_energy()?,
        g_checks,
        min_g,
    })
}

/// Density-of-states sample from `Σ(0)`, with `V(0)` integrated out.
fn dos_sample(model: &OperatorModel, sigma0: Complex64) -> f64 {
    if model.lambda == 0.0 {
        (1.0 / (-sigma0)).im / std::f64::consts::PI
    } else {
        model.dist.scaled(model.lambda).poisson_smoothed(sigma0)
    }
}

/// Streaming reduction of replicate outcomes in index order.
struct Accumulator {
    n_r: Vec<Vec<u32>>,
    origin_t_sum: Vec<Vec<f64>>,
    partner: Vec<Vec<f64>>,
    dos: Vec<f64>,
    im_sigma0: Vec<f64>,
    g_checks: u64,
    min_g: f64,
}

fn run_spheres(
    model: &OperatorModel,
    e: f64,
    setups: &[SphereSetup],
    replicates: usize,
    keep_origin_t: bool,
    settings: &ResonanceSettings,
) -> Result<Accumulator> {
    let z = ComplexEnergy::new(e, settings.eta)?;
    let kept = setups.iter().map(|s| s.r).max().unwrap_or(0);
    let mut acc = Accumulator {
        n_r: vec![Vec::with_capacity(replicates); setups.len()],
        origin_t_sum: setups
            .iter()
            .map(|s| if keep_origin_t { vec![0.0; s.members.len()] } else { Vec::new() })
            .collect(),
        partner: vec![Vec::with_capacity(replicates); setups.len()],
        dos: Vec::with_capacity(replicates),
        im_sigma0: Vec::with_capacity(replicates),
        g_checks: 0,
        min_g: f64::INFINITY,
    };
    let mut start = 0;
    while start < replicates {
        let end = (start + BATCH).min(replicates);
        let batch = try_ordered_map(end - start, |i| {
            let b = Backend::for_replicate(model, (start + i) as u64, z, settings.boundary, kept)?;
            sweep_replicate(&b, setups, keep_origin_t, settings)
        })?;
        for out in batch {
            for (k, s) in out.spheres.into_iter().enumerate() {
                acc.n_r[k].push(s.n_r);
                acc.partner[k].push(s.partner_sum);
                for (sum, v) in acc.origin_t_sum[k].iter_mut().zip(&s.t_to_origin) {
                    *sum += v;
                }
            }
            acc.dos.push(dos_sample(model, out.sigma0));
            acc.im_sigma0.push(out.sigma0.im.abs());
            acc.g_checks += out.g_checks;
            acc.min_g = acc.min_g.min(out.min_g);
        }
        start = end;
    }
    Ok(acc)
}

/// One Paley–Zygmund comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PzPoint {
    pub theta: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `P(N ≥ θ E[N])` against `(1−θ)² E[N]²/E[N²]` for `θ = 0.1, …, 0.9`.
pub fn paley_zygmund(samples: &[f64]) -> Vec<PzPoint> {
    let n = samples.len() as f64;
    let m1 = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    (1..=9)
        .map(|k| {
            let theta = k as f64 / 10.0;
            let p = samples.iter().filter(|&&v| v >= theta * m1).count() as f64 / n;
            let stderr = (p * (1.0 - p) / n).sqrt();
            let bound = if m2 > 0.0 { (1.0 - theta).powi(2) * m1 * m1 / m2 } else { 0.0 };
            PzPoint {
                theta,
                empirical: p,
                stderr,
                bound,
                holds: p >= bound - 3.0 * stderr,
            }
        })
        .collect()
}

/// `E[N(N−1)]/E[N]²` with a delta-method standard error.
pub fn second_moment_ratio(samples: &[f64]) -> Option<(f64, f64)> {
    let n = samples.len() as f64;
    let m1 = samples.iter().sum::<f64>() / n;
    if !(m1 > 0.0) {
        return None;
    }
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let ratio = (m2 - m1) / (m1 * m1);
    let d1 = -(2.0 * m2 - m1) / m1.powi(3);
    let d2 = 1.0 / (m1 * m1);
    let mut c11 = 0.0;
    let mut c12 = 0.0;
    let mut c22 = 0.0;
    for &v in samples {
        let a = v - m1;
        let b = v * v - m2;
        c11 += a * a;
        c12 += a * b;
        c22 += b * b;
    }
    let var = (d1 * d1 * c11 + 2.0 * d1 * d2 * c12 + d2 * d2 * c22) / (n * (n - 1.0).max(1.0));
    Some((ratio, var.max(0.0).sqrt()))
}

/// Sphere count statistics with the first- and second-moment comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub r: usize,
    pub e: f64,
    pub eta: f64,
    pub replicates: usize,
    pub sphere_size: usize,
    pub cutoff: f64,
    pub n_r: Vec<u32>,
    pub mean_n: Estimate,
    /// `n(E)` from the same replicates.
    pub dos: Estimate,
    /// Median of `|Im Σ(0; E + iη)|`.
    pub median_abs_im_sigma0: f64,
    /// `Σ_{x ∈ S_R} t(0,x)`.
    pub sum_t: f64,
    pub first_moment_bound: f64,
    pub first_moment_holds: bool,
    pub degenerate: bool,
    pub second_moment_ratio: Option<f64>,
    pub second_moment_stderr: Option<f64>,
    /// `8 ‖ρ_λ‖∞² (1 + C_T)`.
    pub second_moment_bound: Option<f64>,
    pub second_moment_holds: Option<bool>,
    pub c_t: Estimate,
    pub partners: usize,
    pub pz: Vec<PzPoint>,
    pub pz_holds: bool,
    pub g_checks: u64,
    pub min_g: Option<f64>,
}

/// Count `N_R` per replicate and compare its moments with the bounds.
pub fn resonance_report(
    model: &OperatorModel,
    e: f64,
    r: usize,
    replicates: usize,
    cutoff: &CutoffFunction,
    settings: &ResonanceSettings,
) -> Result<ResonanceReport> {
    settings.validate()?;
    if r == 0 {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    if replicates < 2 {
        return Err(Error::invalid("need at least two replicates"));
    }
    let setup = SphereSetup::new(model, r, cutoff, settings)?;
    let acc = run_spheres(model, e, std::slice::from_ref(&setup), replicates, false, settings)?;
    let counts: Vec<f64> = acc.n_r[0].iter().map(|&c| c as f64).collect();
    let mean_n = Estimate::from_samples(&counts);
    let dos = Estimate::from_samples(&acc.dos);
    let sum_t = setup.t * setup.members.len() as f64;
    let first_moment_bound = dos.mean / 2.0 * sum_t;
    let c_samples: Vec<f64> = acc.partner[0].iter().map(|p| p / sum_t).collect();
    let c_t = Estimate::from_samples(&c_samples);
    let degenerate = !(mean_n.mean > 0.0);
    let rho = if model.lambda > 0.0 {
        Some(model.effective_density_sup()?)
    } else {
        None
    };
    let (ratio, ratio_se) = match second_moment_ratio(&counts) {
        Some((a, b)) if !degenerate => (Some(a), Some(b)),
        _ => (None, None),
    };
    let second_moment_bound = match (rho, degenerate) {
        (Some(rho), false) => Some(8.0 * rho * rho * (1.0 + c_t.mean)),
        _ => None,
    };
    let second_moment_holds = match (ratio, ratio_se, second_moment_bound) {
        (Some(a), Some(se), Some(b)) => Some(a <= b + 3.0 * se),
        _ => None,
    };
    let pz = if degenerate { Vec::new() } else { paley_zygmund(&counts) };
    Ok(ResonanceReport {
        r,
        e,
        eta: settings.eta,
        replicates,
        sphere_size: setup.members.len(),
        cutoff: setup.t,
        mean_n,
        dos,
        median_abs_im_sigma0: lower_quantile(&mut acc.im_sigma0.clone(), 0.5).unwrap_or(f64::NAN),
        sum_t,
        first_moment_bound,
        first_moment_holds: mean_n.mean >= first_moment_bound - 3.0 * (mean_n.stderr + sum_t / 2.0 * dos.stderr),
        degenerate,
        second_moment_ratio: ratio,
        second_moment_stderr: ratio_se,
        second_moment_bound,
        second_moment_holds,
        c_t,
        partners: setup.partners.len(),
        pz_holds: pz.iter().all(|p| p.holds),
        pz,
        g_checks: acc.g_checks,
        min_g: if acc.g_checks > 0 { Some(acc.min_g) } else { None },
        n_r: acc.n_r.into_iter().next().unwrap_or_default(),
    })
}

/// One radius of the condition trends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionsRow {
    pub r: usize,
    pub sphere_size: usize,
    pub sum_t: f64,
    /// `max_x E[min{|τ(x,0)|, 1}]` over the sphere.
    pub max_t_to_origin: f64,
    pub c_t: Estimate,
}

/// Finite-R trends of the three conditions. Trends are reported, not judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub e: f64,
    pub rows: Vec<ConditionsRow>,
    /// Slope of `ln Σ_x t(0,x)` against `R`; positive means growth.
    pub sum_t_log_slope: Option<f64>,
    /// Slope of `ln max_x T(x,0)` against `R`; negative means decay.
    pub max_t_log_slope: Option<f64>,
    pub c_t_max: f64,
    pub dos: Estimate,
    pub dos_positive: bool,
}

pub fn check_conditions(
    model: &OperatorModel,
    e: f64,
    radii: &[usize],
    replicates: usize,
    cutoff: &CutoffFunction,
    settings: &ResonanceSettings,
) -> Result<ConditionsReport> {
    settings.validate()?;
    if radii.is_empty() || radii.contains(&0) {
        return Err(Error::invalid("radii must be nonempty and positive"));
    }
    if replicates < 2 {
        return Err(Error::invalid("need at least two replicates"));
    }
    let setups: Vec<SphereSetup> = radii
        .iter()
        .map(|&r| SphereSetup::new(model, r, cutoff, settings))
        .collect::<Result<_>>()?;
    let acc = run_spheres(model, e, &setups, replicates, true, settings)?;
    let rows: Vec<ConditionsRow> = setups
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let sum_t = s.t * s.members.len() as f64;
            let c: Vec<f64> = acc.partner[k].iter().map(|p| p / sum_t).collect();
            ConditionsRow {
                r: s.r,
                sphere_size: s.members.len(),
                sum_t,
                max_t_to_origin: acc.origin_t_sum[k]
                    .iter()
                    .map(|v| v / replicates as f64)
                    .fold(0.0, f64::max),
                c_t: Estimate::from_samples(&c),
            }
        })
        .collect();
    let rs: Vec<f64> = rows.iter().map(|r| r.r as f64).collect();
    let log_of = |f: &dyn Fn(&ConditionsRow) -> f64| -> Option<f64> {
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        if ys.iter().all(|y| y.is_finite()) {
            LinearFit::fit(&rs, &ys).map(|l| l.slope)
        } else {
            None
        }
    };
    let dos = Estimate::from_samples(&acc.dos);
    Ok(ConditionsReport {
        e,
        sum_t_log_slope: log_of(&|r| r.sum_t),
        max_t_log_slope: log_of(&|r| r.max_t_to_origin),
        c_t_max: rows.iter().map(|r| r.c_t.mean).fold(0.0, f64::max),
        dos_positive: dos.mean > 3.0 * dos.stderr,
        dos,
        rows,
    })
}
