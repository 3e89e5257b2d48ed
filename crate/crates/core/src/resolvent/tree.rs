//! Forward self-energy recursion on rooted regular trees.
//!
//! `fwd[v]` is the Green function at `v` of the subtree hanging below `v`;
//! `up[v]` is the Green function at `parent(v)` of the tree with the subtree
//! of `v` removed. Every directional quantity `Γ_{u→w}` (Green function at
//! `w` with the edge `u–w` cut, on `w`'s side) is one of the two, and all
//! Schur data along a path follow from a single sweep along it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{TreeShape, VertexId};
use crate::operator::{OperatorModel, PotentialSample};
use crate::resolvent::{ComplexEnergy, SchurData};

/// How the truncated tree ends below depth D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeBoundary {
    /// Plain truncation; identical to a dense solve on the finite tree.
    #[default]
    Open,
    /// Each leaf sees `K` disorder-free infinite subtrees through the
    /// self-energy `K Γ∞(z)`.
    FreeTree,
}

/// Root `Γ` of `K Γ² + z Γ + 1 = 0` that is the Green function of the
/// disorder-free rooted tree, i.e. `Im Γ > 0` for `Im z > 0`.
pub fn free_tree_gamma(k: usize, z: Complex64) -> Complex64 {
    let kf = k as f64;
    let d = (z * z - 4.0 * kf).sqrt();
    let r1 = (-z + d) / (2.0 * kf);
    let r2 = (-z - d) / (2.0 * kf);
    match (r1.im > 0.0, r2.im > 0.0) {
        (true, false) => r1,
        (false, true) => r2,
        _ => {
            if r1.norm() <= r2.norm() {
                r1
            } else {
                r2
            }
        }
    }
}

/// Blocks of the deep, unstored shells are sized to about this many leaves.
const BLOCK_LEAVES: usize = 1 << 16;

/// Tree Green function data for one disorder realization at one `z`.
#[derive(Debug, Clone)]
pub struct TreeResolvent {
    shape: TreeShape,
    energy: ComplexEnergy,
    boundary: TreeBoundary,
    gamma_inf: Complex64,
    /// Shells `0..=kept` are stored.
    kept: usize,
    v: Vec<f64>,
    inv_fwd: Vec<Complex64>,
    fwd: Vec<Complex64>,
    up: Vec<Complex64>,
}

fn require_tree(model: &OperatorModel) -> Result<TreeShape> {
    let shape = model
        .graph
        .tree_shape()
        .cloned()
        .ok_or_else(|| Error::Unsupported("tree recursion needs a tree topology".into()))?;
    match model.adjacency_scale() {
        Some(s) if s == 1.0 => Ok(shape),
        _ => Err(Error::Unsupported(
            "tree recursion needs the plain adjacency hopping".into(),
        )),
    }
}

impl TreeResolvent {
    /// Full recursion for a given potential sample.
    pub fn new(
        model: &OperatorModel,
        sample: &PotentialSample,
        energy: ComplexEnergy,
        boundary: TreeBoundary,
    ) -> Result<Self> {
        let shape = require_tree(model)?;
        if sample.len() != shape.vertex_count() {
            return Err(Error::invalid("potential sample does not match tree size"));
        }
        let kept = shape.depth;
        let mut t = Self::empty(shape, energy, boundary, kept);
        t.v.copy_from_slice(&sample.values);
        t.sweep(None);
        Ok(t)
    }

    /// Recursion drawing replicate `replicate` of the model's potential,
    /// storing only shells `0..=kept`. Deeper shells are swept in blocks, so
    /// memory stays proportional to the stored part.
    pub fn sampled(
        model: &OperatorModel,
        replicate: u64,
        energy: ComplexEnergy,
        boundary: TreeBoundary,
        kept: usize,
    ) -> Result<Self> {
        let shape = require_tree(model)?;
        let kept = kept.min(shape.depth);
        let mut t = Self::empty(shape, energy, boundary, kept);
        let mut rng = model.stream_key(replicate).rng();
        model.fill_potential(&mut rng, 0, &mut t.v);
        let below = if kept < t.shape.depth {
            let shell = t.shape.shell(kept + 1);
            let per_vertex = t.shape.k.pow((t.shape.depth - kept - 1) as u32).max(1);
            let chunk = (BLOCK_LEAVES / per_vertex).max(1);
            let mut out = Vec::with_capacity(shell.len());
            let mut start = shell.start;
            while start < shell.end {
                let end = (start + chunk).min(shell.end);
                out.extend(t.block_gammas(model, &mut rng, kept + 1, start..end));
                start = end;
            }
            Some(out)
        } else {
            None
        };
        t.sweep(below.as_deref());
        Ok(t)
    }

    fn empty(shape: TreeShape, energy: ComplexEnergy, boundary: TreeBoundary, kept: usize) -> Self {
        let n = shape.shell(kept).end;
        let gamma_inf = free_tree_gamma(shape.k, energy.z());
        let zero = Complex64::new(0.0, 0.0);
        TreeResolvent {
            shape,
            energy,
            boundary,
            gamma_inf,
            kept,
            v: vec![0.0; n],
            inv_fwd: vec![zero; n],
            fwd: vec![zero; n],
            up: vec![zero; n],
        }
    }

    fn leaf_term(&self) -> Complex64 {
        match self.boundary {
            TreeBoundary::Open => Complex64::new(0.0, 0.0),
            TreeBoundary::FreeTree => self.gamma_inf * self.shape.k as f64,
        }
    }

    /// Forward Green functions of a contiguous block of shell `d`, computed
    /// from freshly generated potentials of the whole block subtree.
    fn block_gammas(
        &self,
        model: &OperatorModel,
        rng: &mut rand_chacha::ChaCha8Rng,
        d: usize,
        range: std::ops::Range<usize>,
    ) -> Vec<Complex64> {
        let z = self.energy.z();
        let mut v = vec![0.0; range.len()];
        model.fill_potential(rng, range.start, &mut v);
        let k = self.shape.k;
        if d == self.shape.depth {
            let leaf = self.leaf_term();
            return v.iter().map(|&vi| 1.0 / (vi - z - leaf)).collect();
        }
        let first = self.shape.children(range.start).start;
        let kids = self.block_gammas(model, rng, d + 1, first..first + range.len() * k);
        v.iter()
            .enumerate()
            .map(|(i, &vi)| {
                let s: Complex64 = kids[i * k..(i + 1) * k].iter().sum();
                1.0 / (vi - z - s)
            })
            .collect()
    }

    /// Leaf-to-root forward sweep over the stored shells, then the
    /// root-to-leaf sweep for `up`.
    fn sweep(&mut self, below: Option<&[Complex64]>) {
        let z = self.energy.z();
        let leaf = self.leaf_term();
        let next_start = self.shape.shell(self.kept + 1).start;
        for d in (0..=self.kept).rev() {
            for v in self.shape.shell(d) {
                let kids = self.shape.children(v);
                let s = if kids.is_empty() {
                    leaf
                } else if d == self.kept {
                    let b = below.expect("deep shells swept");
                    kids.map(|c| b[c - next_start]).sum()
                } else {
                    kids.map(|c| self.fwd[c]).sum()
                };
                self.inv_fwd[v] = self.v[v] - z - s;
                self.fwd[v] = 1.0 / self.inv_fwd[v];
            }
        }
        for d in 1..=self.kept {
            for v in self.shape.shell(d) {
                let p = self.shape.parent(v).unwrap();
                let above = if p == 0 { Complex64::new(0.0, 0.0) } else { self.up[p] };
                self.up[v] = 1.0 / (self.inv_fwd[p] + self.fwd[v] - above);
            }
        }
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn energy(&self) -> ComplexEnergy {
        self.energy
    }

    pub fn kept_depth(&self) -> usize {
        self.kept
    }

    pub fn gamma_inf(&self) -> Complex64 {
        self.gamma_inf
    }

    pub fn potential(&self, v: VertexId) -> f64 {
        self.v[v]
    }

    /// Forward Green function of the subtree below `v`.
    pub fn forward(&self, v: VertexId) -> Complex64 {
        self.fwd[v]
    }

    fn check(&self, v: VertexId) -> Result<()> {
        if v < self.v.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "vertex {v} lies beyond the stored depth {}",
                self.kept
            )))
        }
    }

    /// `Γ_{u→w}` for adjacent `u`, `w`, returned with its reciprocal.
    fn directional(&self, u: VertexId, w: VertexId) -> (Complex64, Complex64) {
        if self.shape.parent(w) == Some(u) {
            (self.fwd[w], self.inv_fwd[w])
        } else {
            (self.up[u], 1.0 / self.up[u])
        }
    }

    /// `Σ(x; z)`.
    pub fn self_energy(&self, x: VertexId) -> Result<Complex64> {
        self.check(x)?;
        let up = if x == 0 { Complex64::new(0.0, 0.0) } else { self.up[x] };
        Ok(self.v[x] - self.inv_fwd[x] + up)
    }

    pub fn green_diag(&self, x: VertexId) -> Result<Complex64> {
        Ok(1.0 / (self.v[x] - self.self_energy(x)?))
    }

    /// Sweep from `path[0]` towards `path.last()`; returns `B_1` (Green
    /// function at `path[1]` of the graph without both endpoints, along the
    /// path component) and `Π B_j` with its sign, i.e. `τ(path[0], end)`.
    fn path_sweep(&self, path: &[VertexId]) -> (Complex64, Complex64) {
        let m = path.len() - 2;
        let mut b = Complex64::new(0.0, 0.0);
        let mut prod = Complex64::new(1.0, 0.0);
        for j in (1..=m).rev() {
            let (_, inv_in) = self.directional(path[j - 1], path[j]);
            let (g_out, _) = self.directional(path[j], path[j + 1]);
            b = 1.0 / (inv_in + g_out - b);
            prod *= b;
        }
        let sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
        (b, prod * sign)
    }

    /// Two-site Schur data at `(x, y)`.
    pub fn pair(&self, x: VertexId, y: VertexId) -> Result<SchurData> {
        self.check(x)?;
        self.check(y)?;
        if x == y {
            return Err(Error::invalid("two-site Schur data needs x != y"));
        }
        let path = self.shape.path(x, y);
        let m = path.len() - 2;
        let sx = self.self_energy(x)?;
        let sy = self.self_energy(y)?;
        let (sigma_x, sigma_y, tau_xy, tau_yx) = if m == 0 {
            let (gxy, _) = self.directional(x, y);
            let (gyx, _) = self.directional(y, x);
            let minus_one = Complex64::new(-1.0, 0.0);
            (sx - gxy, sy - gyx, minus_one, minus_one)
        } else {
            let (b1, tau_xy) = self.path_sweep(&path);
            let rev: Vec<VertexId> = path.iter().rev().copied().collect();
            let (c1, tau_yx) = self.path_sweep(&rev);
            let (gx, _) = self.directional(x, path[1]);
            let (gy, _) = self.directional(y, path[m]);
            (sx - gx + b1, sy - gy + c1, tau_xy, tau_yx)
        };
        Ok(SchurData {
            x,
            y,
            z: self.energy,
            v_x: self.v[x],
            v_y: self.v[y],
            self_energy_x: sx,
            sigma_x,
            sigma_y,
            tau_xy,
            tau_yx,
        })
    }

    /// `τ(0, x; z)` from forward data only; `τ(0, 0) = 1` by convention.
    pub fn tau_root(&self, x: VertexId) -> Result<Complex64> {
        self.check(x)?;
        if x == 0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let mut prod = Complex64::new(1.0, 0.0);
        let mut child = x;
        let mut b = Complex64::new(0.0, 0.0);
        let mut steps = 0usize;
        while let Some(u) = self.shape.parent(child) {
            if u == 0 {
                break;
            }
            b = 1.0 / (self.inv_fwd[u] + self.fwd[child] - b);
            prod *= b;
            steps += 1;
            child = u;
        }
        // Path 0, u_1..u_m, x has m = steps intermediate vertices.
        Ok(if steps % 2 == 0 { -prod } else { prod })
    }

    /// `τ(0, x)` for every `x` in shell `d` of the stored part.
    pub fn tau_root_shell(&self, d: usize) -> Result<Vec<Complex64>> {
        if d > self.kept {
            return Err(Error::invalid(format!("shell {d} beyond stored depth {}", self.kept)));
        }
        self.shape.shell(d).map(|x| self.tau_root(x)).collect()
    }

    /// `G(0, x)/G(0, 0) = Π_{v on the path, v ≠ 0} (−Γ_v)`.
    pub fn g_ratio(&self, x: VertexId) -> Result<Complex64> {
        self.check(x)?;
        let mut g = Complex64::new(1.0, 0.0);
        let mut cur = x;
        while cur != 0 {
            g *= -self.fwd[cur];
            cur = self.shape.parent(cur).unwrap();
        }
        Ok(g)
    }

    /// `G(0, x)/G(0, 0)` after replacing the potential at `x` by `value`.
    ///
    /// Only the forward functions on the path from `x` to the root change,
    /// so this costs O(depth).
    pub fn g_ratio_with(&self, x: VertexId, value: f64) -> Result<Complex64> {
        self.check(x)?;
        if x == 0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let mut gamma = 1.0 / (self.inv_fwd[x] + value - self.v[x]);
        let mut g = -gamma;
        let mut cur = x;
        while let Some(u) = self.shape.parent(cur) {
            if u == 0 {
                break;
            }
            gamma = 1.0 / (self.inv_fwd[u] + self.fwd[cur] - gamma);
            g *= -gamma;
            cur = u;
        }
        Ok(g)
    }

    /// `Σ_y |G(0, y; z)|²` including the free-tree tails below the leaves.
    pub fn root_norm_sqr(&self) -> Result<f64> {
        if self.kept < self.shape.depth {
            return Err(Error::Unsupported(
                "root norm needs the full tree stored".into(),
            ));
        }
        let n = self.v.len();
        let mut g2 = vec![0.0f64; n];
        g2[0] = 1.0;
        let mut total = 1.0;
        for v in 1..n {
            let p = self.shape.parent(v).unwrap();
            g2[v] = g2[p] * self.fwd[v].norm_sqr();
            total += g2[v];
        }
        if self.boundary == TreeBoundary::FreeTree {
            let q = self.shape.k as f64 * self.gamma_inf.norm_sqr();
            let leaf_sum: f64 = self.shape.shell(self.shape.depth).map(|l| g2[l]).sum();
            total += leaf_sum * q / (1.0 - q);
        }
        let g00 = self.green_diag(0)?;
        Ok(total * g00.norm_sqr())
    }
}
