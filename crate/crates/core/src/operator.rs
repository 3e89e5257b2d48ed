//! Single-site distributions, potential sampling and the operator H = A + λV.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::rng::{Domain, StreamKey};

/// Dense Hamiltonians are refused beyond this many vertices.
pub const DENSE_LIMIT: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// Bounded density with heavy tails: `E[V]` does not exist.
    Cauchy { loc: f64, scale: f64 },
    /// Takes `v1` with probability `p`, otherwise `v0`. Has no density.
    Bernoulli { p: f64, v0: f64, v1: f64 },
}

impl Distribution {
    pub fn uniform(a: f64, b: f64) -> Self {
        Distribution::Uniform { a, b }
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        Distribution::Gaussian { mean, sd }
    }

    pub fn cauchy(loc: f64, scale: f64) -> Self {
        Distribution::Cauchy { loc, scale }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Uniform { .. } => "uniform",
            Distribution::Gaussian { .. } => "gaussian",
            Distribution::Cauchy { .. } => "cauchy",
            Distribution::Bernoulli { .. } => "bernoulli",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            Distribution::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Distribution::Cauchy { loc, scale } => {
                loc.is_finite() && scale.is_finite() && scale > 0.0
            }
            Distribution::Bernoulli { p, v0, v1 } => {
                (0.0..=1.0).contains(&p) && v0.is_finite() && v1.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad parameters for {self:?}")))
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, Distribution::Bernoulli { .. })
    }

    pub fn require_density(&self) -> Result<()> {
        if self.has_density() {
            Ok(())
        } else {
            Err(Error::NoDensity(self.name()))
        }
    }

    fn normal(mean: f64, sd: f64) -> Normal {
        Normal::new(mean, sd).expect("validated gaussian parameters")
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Distribution::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Distribution::Gaussian { mean, sd } => Self::normal(mean, sd).pdf(x),
            Distribution::Cauchy { loc, scale } => {
                let t = (x - loc) / scale;
                1.0 / (std::f64::consts::PI * scale * (1.0 + t * t))
            }
            Distribution::Bernoulli { .. } => return Err(Error::NoDensity(self.name())),
        })
    }

    /// `‖ρ‖∞`.
    pub fn density_sup(&self) -> Result<f64> {
        Ok(match *self {
            Distribution::Uniform { a, b } => 1.0 / (b - a),
            Distribution::Gaussian { sd, .. } => 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt()),
            Distribution::Cauchy { scale, .. } => 1.0 / (std::f64::consts::PI * scale),
            Distribution::Bernoulli { .. } => return Err(Error::NoDensity(self.name())),
        })
    }

    /// A point where the density attains its supremum.
    pub fn mode(&self) -> f64 {
        match *self {
            Distribution::Uniform { a, b } => 0.5 * (a + b),
            Distribution::Gaussian { mean, .. } => mean,
            Distribution::Cauchy { loc, .. } => loc,
            Distribution::Bernoulli { p, v0, v1 } => {
                if p >= 0.5 {
                    v1
                } else {
                    v0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Distribution::Gaussian { mean, sd } => Self::normal(mean, sd).cdf(x),
            Distribution::Cauchy { loc, scale } => {
                0.5 + ((x - loc) / scale).atan() / std::f64::consts::PI
            }
            Distribution::Bernoulli { p, v0, v1 } => {
                let (lo, hi, p_lo) = if v0 <= v1 { (v0, v1, 1.0 - p) } else { (v1, v0, p) };
                if x < lo {
                    0.0
                } else if x < hi {
                    p_lo
                } else {
                    1.0
                }
            }
        }
    }

    /// Probability of `[lo, hi]`, computed on the tail side with less cancellation.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Distribution::Gaussian { mean, sd } if lo > mean => {
                let n = Self::normal(mean, sd);
                n.sf(lo) - n.sf(hi)
            }
            Distribution::Cauchy { loc, scale } => {
                let (a, b) = ((lo - loc) / scale, (hi - loc) / scale);
                let w = 1.0 + a * b;
                // atan b − atan a = atan((b − a)/(1 + ab)) while 1 + ab > 0.
                let d = if w > 0.0 { ((b - a) / w).atan() } else { b.atan() - a.atan() };
                d / std::f64::consts::PI
            }
            _ => self.cdf(hi) - self.cdf(lo),
        }
    }

    /// Inverse CDF on `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Distribution::Uniform { a, b } => a + (b - a) * u,
            Distribution::Gaussian { mean, sd } => Self::normal(mean, sd).inverse_cdf(u),
            Distribution::Cauchy { loc, scale } => {
                loc + scale * (std::f64::consts::PI * (u - 0.5)).tan()
            }
            Distribution::Bernoulli { p, v0, v1 } => {
                if u < p {
                    v1
                } else {
                    v0
                }
            }
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match *self {
            Distribution::Uniform { a, b } => Some(0.5 * (a + b)),
            Distribution::Gaussian { mean, .. } => Some(mean),
            Distribution::Cauchy { .. } => None,
            Distribution::Bernoulli { p, v0, v1 } => Some(p * v1 + (1.0 - p) * v0),
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match *self {
            Distribution::Uniform { a, b } => Some((b - a).powi(2) / 12.0),
            Distribution::Gaussian { sd, .. } => Some(sd * sd),
            Distribution::Cauchy { .. } => None,
            Distribution::Bernoulli { p, v0, v1 } => Some(p * (1.0 - p) * (v1 - v0).powi(2)),
        }
    }

    /// Law of `λV` when `V` follows `self`.
    pub fn scaled(&self, lambda: f64) -> Distribution {
        match *self {
            Distribution::Uniform { a, b } if lambda < 0.0 => Distribution::uniform(lambda * b, lambda * a),
            Distribution::Uniform { a, b } => Distribution::uniform(lambda * a, lambda * b),
            Distribution::Gaussian { mean, sd } => Distribution::gaussian(lambda * mean, lambda.abs() * sd),
            Distribution::Cauchy { loc, scale } => Distribution::cauchy(lambda * loc, lambda.abs() * scale),
            Distribution::Bernoulli { p, v0, v1 } => Distribution::Bernoulli {
                p,
                v0: lambda * v0,
                v1: lambda * v1,
            },
        }
    }

    /// `(1/π) E[Im 1/(V − s)]` for `Im s > 0`: the density smoothed by a
    /// Poisson kernel of width `Im s`, evaluated at `Re s`.
    pub fn poisson_smoothed(&self, s: Complex64) -> f64 {
        use std::f64::consts::PI;
        let (sr, si) = (s.re, s.im);
        match *self {
            Distribution::Uniform { a, b } => {
                (((b - sr) / si).atan() - ((a - sr) / si).atan()) / (PI * (b - a))
            }
            Distribution::Cauchy { loc, scale } => {
                let w = scale + si;
                w / (PI * ((sr - loc).powi(2) + w * w))
            }
            Distribution::Gaussian { mean, sd } => {
                // u = Re s + Im s sinh t turns the kernel into 1/(π cosh t), smooth
                // on every scale from Im s up to sd.
                let reach = ((12.0 * sd + (sr - mean).abs()) / si).asinh() + 2.0;
                let n = (reach / 0.01).ceil() as usize * 2;
                let h = 2.0 * reach / n as f64;
                (0..n)
                    .map(|i| {
                        let t = -reach + (i as f64 + 0.5) * h;
                        self.density(sr + si * t.sinh()).unwrap_or(0.0) / t.cosh()
                    })
                    .sum::<f64>()
                    * h
                    / PI
            }
            Distribution::Bernoulli { p, v0, v1 } => {
                let k = |v: f64| (1.0 / (Complex64::new(v, 0.0) - s)).im / PI;
                p * k(v1) + (1.0 - p) * k(v0)
            }
        }
    }

    /// One draw from a single 64-bit word (inverse transform).
    pub fn sample(&self, rng: &mut impl RngCore) -> f64 {
        self.quantile(unit_open(rng.next_u64()))
    }
}

/// Map 64 random bits to the open interval (0, 1).
///
/// 52 bits keep `k + 1/2` exact, so the top value stays below 1.
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Outcome of the pointwise comparison `ρ ≤ c · inf_ε (1_ε * ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityCondition {
    pub delta: f64,
    pub c: f64,
    pub holds: bool,
}

/// Smallest `c` with `ρ(v) ≤ c · inf_{0<ε≤δ} (2ε)^{-1} P(|V − v| ≤ ε)` on a
/// grid of 10^4 points spanning the 1e-6..1-1e-6 quantile range.
pub fn check_density_condition(dist: &Distribution, delta: f64) -> Result<DensityCondition> {
    dist.validate()?;
    dist.require_density()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta must be positive"));
    }
    let lo = dist.quantile(1e-6);
    let hi = dist.quantile(1.0 - 1e-6);
    let n = 10_000;
    let mut eps: Vec<f64> = (0..40).map(|j| delta * 0.5f64.powi(j)).collect();
    eps.extend((1..32).map(|j| delta * j as f64 / 32.0));
    let mut c: f64 = 0.0;
    let points = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .chain(std::iter::once(dist.mode()));
    for v in points {
        let rho = dist.density(v)?;
        if rho == 0.0 {
            continue;
        }
        // Widths below the float spacing at v are not representable.
        let smoothed = eps
            .iter()
            .filter_map(|&e| {
                let (lo, hi) = (v - e, v + e);
                (hi > lo).then(|| dist.mass(lo, hi) / (hi - lo))
            })
            .fold(f64::INFINITY, f64::min);
        let ratio = if smoothed > 0.0 {
            rho / smoothed
        } else {
            f64::INFINITY
        };
        c = c.max(ratio);
    }
    Ok(DensityCondition {
        delta,
        c,
        holds: c.is_finite(),
    })
}

/// The hopping part `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum Hopping {
    /// `scale` times the graph adjacency matrix.
    Adjacency { scale: f64 },
    Dense(DMatrix<f64>),
}

impl Default for Hopping {
    fn default() -> Self {
        Hopping::Adjacency { scale: 1.0 }
    }
}

/// One random operator family `H(ω) = A + λV(ω)`.
#[derive(Debug, Clone)]
pub struct OperatorModel {
    pub graph: Arc<Graph>,
    pub hopping: Hopping,
    pub dist: Distribution,
    pub lambda: f64,
    pub seed: u64,
}

impl OperatorModel {
    pub fn new(graph: Graph, dist: Distribution, lambda: f64, seed: u64) -> Result<Self> {
        Self::shared(Arc::new(graph), dist, lambda, seed)
    }

    pub fn shared(graph: Arc<Graph>, dist: Distribution, lambda: f64, seed: u64) -> Result<Self> {
        dist.validate()?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(OperatorModel {
            graph,
            hopping: Hopping::default(),
            dist,
            lambda,
            seed,
        })
    }

    pub fn with_hopping(mut self, hopping: Hopping) -> Result<Self> {
        if let Hopping::Dense(a) = &hopping {
            let n = self.graph.vertex_count();
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::invalid("hopping matrix size does not match graph"));
            }
            if (a - a.transpose()).amax() > 0.0 {
                return Err(Error::invalid("hopping matrix must be symmetric"));
            }
        }
        self.hopping = hopping;
        Ok(self)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut m = self.clone();
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        m.lambda = lambda;
        Ok(m)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut m = self.clone();
        m.seed = seed;
        m
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    /// Adjacency hopping scale, if `A` is a multiple of the adjacency matrix.
    pub fn adjacency_scale(&self) -> Option<f64> {
        match self.hopping {
            Hopping::Adjacency { scale } => Some(scale),
            Hopping::Dense(_) => None,
        }
    }

    /// Upper bound on `‖A‖`.
    pub fn hopping_norm(&self) -> f64 {
        match &self.hopping {
            Hopping::Adjacency { scale } => match self.graph.tree_shape() {
                Some(t) => scale.abs() * 2.0 * (t.k as f64).sqrt(),
                None => scale.abs() * self.graph.max_degree() as f64,
            },
            Hopping::Dense(a) => a
                .row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    /// Sup of the density of the effective potential `λV`.
    pub fn effective_density_sup(&self) -> Result<f64> {
        if self.lambda == 0.0 {
            return Err(Error::invalid("λV has no density at lambda = 0"));
        }
        Ok(self.dist.density_sup()? / self.lambda)
    }

    pub fn stream_key(&self, replicate: u64) -> StreamKey {
        StreamKey::new(self.seed, Domain::Potential, replicate)
    }

    /// Effective potential `λV(v)` for `v` in `start..start + out.len()`.
    ///
    /// Vertex `v` always consumes word `v` of the replicate stream, so any
    /// block can be generated independently of the others.
    pub fn fill_potential(&self, rng: &mut ChaCha8Rng, start: usize, out: &mut [f64]) {
        rng.set_word_pos(2 * start as u128);
        for slot in out.iter_mut() {
            *slot = self.lambda * self.dist.sample(rng);
        }
    }

    pub fn sample_potential(&self, replicate: u64) -> PotentialSample {
        let key = self.stream_key(replicate);
        let mut values = vec![0.0; self.vertex_count()];
        self.fill_potential(&mut key.rng(), 0, &mut values);
        PotentialSample {
            values,
            replicate,
            seed_path: key,
        }
    }

    pub fn hopping_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.vertex_count();
        match &self.hopping {
            Hopping::Dense(a) => Ok(a.clone()),
            Hopping::Adjacency { scale } => {
                if n > DENSE_LIMIT {
                    return Err(Error::invalid(format!(
                        "dense operators are limited to {DENSE_LIMIT} vertices"
                    )));
                }
                let mut a = DMatrix::zeros(n, n);
                for v in 0..n {
                    for w in self.graph.neighbors(v) {
                        a[(v, w)] = *scale;
                    }
                }
                Ok(a)
            }
        }
    }

    /// `H = A + λV` as a dense real symmetric matrix.
    pub fn hamiltonian(&self, sample: &PotentialSample) -> Result<DMatrix<f64>> {
        let mut h = self.hopping_matrix()?;
        if sample.values.len() != h.nrows() {
            return Err(Error::invalid("potential sample does not match model size"));
        }
        for (i, v) in sample.values.iter().enumerate() {
            h[(i, i)] += v;
        }
        Ok(h)
    }
}

/// One disorder realization of the effective potential `λV`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSample {
    pub values: Vec<f64>,
    pub replicate: u64,
    pub seed_path: StreamKey,
}

impl PotentialSample {
    pub fn from_values(values: Vec<f64>) -> Self {
        PotentialSample {
            values,
            replicate: 0,
            seed_path: StreamKey::new(0, Domain::Auxiliary(0), 0),
        }
    }

    /// Copy with the effective potential at `x` replaced by `value`.
    pub fn conditional_resample(&self, x: VertexId, value: f64) -> Result<Self> {
        if x >= self.values.len() {
            return Err(Error::invalid(format!("vertex {x} out of range")));
        }
        let mut out = self.clone();
        out.values[x] = value;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
