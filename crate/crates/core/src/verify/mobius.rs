//! Scan of `κ_x = Im F_x` as the potential at a second site `u` varies.
//!
//! `F(V) = −1/(η G(x, x; E + iη))` is a fractional linear function of
//! `V = V(u)`, so at most one value of `V` can make `κ_x` diverge as
//! `η ↓ 0`. The scan counts diverging grid clusters and predicts the
//! exceptional value from three finite points through the cross ratio.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SpectralDecomposition;
use crate::diagnostics::{divergence_verdict_from, Thresholds, Verdict};
use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::resolvent::EtaLadder;

/// Smallest accepted grid.
pub const MIN_GRID: usize = 100;

/// A maximal run of consecutive diverging grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub start: usize,
    pub end: usize,
    /// Grid value with the largest `κ` at the smallest `η`.
    pub peak: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobiusScan {
    pub x: VertexId,
    pub u: VertexId,
    pub e: f64,
    pub grid: Vec<f64>,
    pub exponents: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// `κ` at the smallest rung.
    pub kappa_min_eta: Vec<f64>,
    pub clusters: Vec<Cluster>,
    /// The three finite points used for the prediction.
    pub reference: [f64; 3],
    /// Solution of `g(V; V1, V2, V3) = target`, or `None` when the image
    /// circle is degenerate.
    pub predicted: Option<f64>,
    /// Relative mismatch of the cross ratio of a fourth point computed from
    /// `V` values and from `F` images, at the largest `η`.
    pub cross_ratio_defect: f64,
}

impl MobiusScan {
    pub fn at_most_one_cluster(&self) -> bool {
        self.clusters.len() <= 1
    }
}

/// `g(V; V1, V2, V3) = (V − V1)(V2 − V3) / ((V − V2)(V1 − V3))`.
pub fn cross_ratio<T>(v: T, v1: T, v2: T, v3: T) -> T
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<Output = T> + std::ops::Div<Output = T>,
{
    (v - v1) * (v2 - v3) / ((v - v2) * (v1 - v3))
}

/// Center and radius of the circle through three points, `None` if they
/// are (numerically) collinear.
fn circle(a: Complex64, b: Complex64, c: Complex64) -> Option<(Complex64, f64)> {
    let d = 2.0 * (a.re * (b.im - c.im) + b.re * (c.im - a.im) + c.re * (a.im - b.im));
    let scale = (a - c).norm().max((b - c).norm()).powi(2);
    if d.abs() <= 1e-14 * scale {
        return None;
    }
    let (a2, b2, c2) = (a.norm_sqr(), b.norm_sqr(), c.norm_sqr());
    let ux = (a2 * (b.im - c.im) + b2 * (c.im - a.im) + c2 * (a.im - b.im)) / d;
    let uy = (a2 * (c.re - b.re) + b2 * (a.re - c.re) + c2 * (b.re - a.re)) / d;
    let center = Complex64::new(ux, uy);
    Some((center, (a - center).norm()))
}

/// Predicted exceptional value from three points and their images, using
/// the sign and height of each image above the circle's lowest point.
pub fn predict_exceptional(v: [f64; 3], f: [Complex64; 3]) -> Option<f64> {
    let (center, radius) = circle(f[0], f[1], f[2])?;
    let lowest = center - Complex64::new(0.0, radius);
    let w: Vec<f64> = f
        .iter()
        .map(|&fj| {
            let d = fj - lowest;
            let sigma = if d.re >= 0.0 { 1.0 } else { -1.0 };
            sigma * d.im.max(0.0).sqrt()
        })
        .collect();
    let target = (w[1] - w[2]) / (w[0] - w[2]);
    let r = target * (v[0] - v[2]) / (v[1] - v[2]);
    if !r.is_finite() || (1.0 - r).abs() < 1e-300 {
        return None;
    }
    Some((v[0] - r * v[1]) / (1.0 - r))
}

/// Scan `V(u)` over `grid` (ascending, at least 100 points) with `x`
/// observed, classifying each `κ_x` ladder with the diagnostics thresholds.
pub fn mobius_dichotomy(
    h: &DMatrix<f64>,
    x: VertexId,
    u: VertexId,
    e: f64,
    grid: &[f64],
    ladder: &EtaLadder,
    th: &Thresholds,
) -> Result<MobiusScan> {
    let n = h.nrows();
    if h.ncols() != n || x >= n || u >= n || x == u {
        return Err(Error::invalid("need distinct sites x, u of a square H"));
    }
    if grid.len() < MIN_GRID {
        return Err(Error::invalid(format!("V grid needs at least {MIN_GRID} points")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("V grid must be strictly increasing"));
    }
    ladder.validate()?;
    th.validate()?;
    let etas = ladder.etas();

    let mut exponents = Vec::with_capacity(grid.len());
    let mut verdicts = Vec::with_capacity(grid.len());
    let mut kappa_min_eta = Vec::with_capacity(grid.len());
    // F at the smallest and the largest rung.
    let mut f_min = Vec::with_capacity(grid.len());
    let mut f_max = Vec::with_capacity(grid.len());
    let mut hv = h.clone();
    for &v in grid {
        hv[(u, u)] = v;
        let d = SpectralDecomposition::new(&hv)?;
        let weights: Vec<f64> = (0..n).map(|k| d.eigenvectors[(x, k)].powi(2)).collect();
        let f_at = |eta: f64| {
            let z = Complex64::new(e, eta);
            let g: Complex64 = d
                .eigenvalues
                .iter()
                .zip(&weights)
                .map(|(&l, &w)| w / (l - z))
                .sum();
            -1.0 / (g * eta)
        };
        let kappas: Vec<f64> = etas.iter().map(|&eta| f_at(eta).im).collect();
        let verdict = divergence_verdict_from(&etas, &kappas, th)?;
        exponents.push(verdict.exponent);
        verdicts.push(verdict.verdict);
        kappa_min_eta.push(*kappas.last().unwrap());
        f_min.push(f_at(etas[etas.len() - 1]));
        f_max.push(f_at(etas[0]));
    }

    let mut clusters = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if verdicts[i] != Verdict::Diverging {
            i += 1;
            continue;
        }
        let start = i;
        while i < grid.len() && verdicts[i] == Verdict::Diverging {
            i += 1;
        }
        let peak = (start..i)
            .max_by(|&a, &b| kappa_min_eta[a].total_cmp(&kappa_min_eta[b]))
            .unwrap();
        clusters.push(Cluster {
            start,
            end: i - 1,
            peak: grid[peak],
        });
    }

    let finite: Vec<usize> = (0..grid.len()).filter(|&i| verdicts[i] == Verdict::Finite).collect();
    if finite.len() < 3 {
        return Err(Error::Insufficient(format!(
            "only {} finite-limit grid points",
            finite.len()
        )));
    }
    let (i1, i2) = (finite[0], finite[finite.len() - 1]);
    let mid = 0.5 * (grid[i1] + grid[i2]);
    let i3 = *finite[1..finite.len() - 1]
        .iter()
        .min_by(|&&a, &&b| (grid[a] - mid).abs().total_cmp(&(grid[b] - mid).abs()))
        .unwrap();
    let reference = [grid[i1], grid[i2], grid[i3]];
    let predicted = predict_exceptional(reference, [f_min[i1], f_min[i2], f_min[i3]]);

    let i4 = (0..grid.len())
        .filter(|&i| i != i1 && i != i2 && i != i3)
        .min_by(|&a, &b| (grid[a] - 0.5 * (grid[i1] + grid[i3])).abs().total_cmp(&(grid[b] - 0.5 * (grid[i1] + grid[i3])).abs()))
        .unwrap();
    let g_v = cross_ratio(grid[i4], grid[i1], grid[i2], grid[i3]);
    let g_f = cross_ratio(f_max[i4], f_max[i1], f_max[i2], f_max[i3]);
    let cross_ratio_defect = (g_f - g_v).norm() / g_v.abs().max(1.0);

    Ok(MobiusScan {
        x,
        u,
        e,
        grid: grid.to_vec(),
        exponents,
        verdicts,
        kappa_min_eta,
        clusters,
        reference,
        predicted,
        cross_ratio_defect,
    })
}
