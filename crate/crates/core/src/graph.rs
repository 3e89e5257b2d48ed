//! Finite graphs: boxes of Z^d with free boundaries, rooted regular trees,
//! complete graphs and custom edge lists.
//!
//! Regular trees are stored implicitly. Vertices are numbered shell by shell
//! in BFS order, so every sphere around the root is a contiguous index range
//! and parents/children follow from arithmetic. Trees with millions of
//! vertices therefore cost O(depth) memory.

use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;

/// Distances are only materialized as a full matrix up to this size.
pub const FULL_DISTANCE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Box { dims: Vec<usize> },
    /// Root has `k + 1` children, every other inner vertex has `k`.
    Tree { k: usize, depth: usize },
    Complete { n: usize },
    Custom { n: usize, edges: Vec<(usize, usize)> },
}

impl TopologySpec {
    pub fn tree(k: usize, depth: usize) -> Self {
        TopologySpec::Tree { k, depth }
    }

    pub fn boxed(dims: &[usize]) -> Self {
        TopologySpec::Box {
            dims: dims.to_vec(),
        }
    }

    pub fn path(n: usize) -> Self {
        TopologySpec::Box { dims: vec![n] }
    }
}

/// Shell layout of a rooted (K+1)-regular tree truncated at depth D.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeShape {
    pub k: usize,
    pub depth: usize,
    /// `shell_start[d]..shell_start[d + 1]` are the vertices at distance `d`.
    shell_start: Vec<usize>,
}

impl TreeShape {
    fn new(k: usize, depth: usize) -> Result<Self> {
        let mut shell_start = vec![0usize, 1];
        let mut size = 1usize;
        for d in 1..=depth {
            size = if d == 1 {
                k + 1
            } else {
                size.checked_mul(k)
                    .ok_or_else(|| Error::invalid("tree too large"))?
            };
            let last = *shell_start.last().unwrap();
            shell_start.push(
                last.checked_add(size)
                    .ok_or_else(|| Error::invalid("tree too large"))?,
            );
        }
        Ok(TreeShape {
            k,
            depth,
            shell_start,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.shell_start[self.depth + 1]
    }

    pub fn shell(&self, d: usize) -> Range<usize> {
        if d > self.depth {
            let n = self.vertex_count();
            return n..n;
        }
        self.shell_start[d]..self.shell_start[d + 1]
    }

    pub fn shell_size(&self, d: usize) -> usize {
        self.shell(d).len()
    }

    pub fn depth_of(&self, v: VertexId) -> usize {
        // partition_point gives the first shell start strictly above v.
        self.shell_start.partition_point(|&s| s <= v) - 1
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        match self.depth_of(v) {
            0 => None,
            1 => Some(0),
            d => {
                let i = v - self.shell_start[d];
                Some(self.shell_start[d - 1] + i / self.k)
            }
        }
    }

    pub fn children(&self, v: VertexId) -> Range<VertexId> {
        let d = self.depth_of(v);
        if d >= self.depth {
            return v..v;
        }
        if d == 0 {
            return 1..self.k + 2;
        }
        let i = v - self.shell_start[d];
        let s = self.shell_start[d + 1] + i * self.k;
        s..s + self.k
    }

    /// Ancestors of `v` from `v` itself up to and including the root.
    pub fn path_to_root(&self, v: VertexId) -> Vec<VertexId> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Vertex sequence of the unique path from `x` to `y`, endpoints included.
    pub fn path(&self, x: VertexId, y: VertexId) -> Vec<VertexId> {
        let mut px = self.path_to_root(x);
        let mut py = self.path_to_root(y);
        // Strip the common suffix, keep the lowest common ancestor once.
        let mut lca = 0;
        while let (Some(&a), Some(&b)) = (px.last(), py.last()) {
            if a != b {
                break;
            }
            lca = a;
            px.pop();
            py.pop();
        }
        px.push(lca);
        px.extend(py.into_iter().rev());
        px
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Tree(TreeShape),
    Csr {
        offsets: Vec<usize>,
        targets: Vec<VertexId>,
    },
}

/// Validated, immutable topology with its origin and BFS distances from it.
#[derive(Debug, Clone)]
pub struct Graph {
    spec: TopologySpec,
    n: usize,
    origin: VertexId,
    layout: Layout,
    /// BFS distances from the origin; empty for trees (shells give them).
    origin_dist: Vec<u32>,
    /// Vertices sorted by distance from the origin, grouped by `sphere_start`.
    by_distance: Vec<VertexId>,
    sphere_start: Vec<usize>,
}

/// Exact graph-distance sphere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sphere {
    pub center: VertexId,
    pub radius: usize,
    pub members: Vec<VertexId>,
}

pub enum Neighbors<'a> {
    Tree {
        parent: Option<VertexId>,
        children: Range<VertexId>,
    },
    Csr(std::slice::Iter<'a, VertexId>),
}

impl Iterator for Neighbors<'_> {
    type Item = VertexId;

    fn next(&mut self) -> Option<VertexId> {
        match self {
            Neighbors::Tree { parent, children } => parent.take().or_else(|| children.next()),
            Neighbors::Csr(it) => it.next().copied(),
        }
    }
}

impl Graph {
    pub fn build(spec: &TopologySpec) -> Result<Self> {
        match spec {
            TopologySpec::Tree { k, depth } => {
                if *k < 1 || *depth < 1 {
                    return Err(Error::invalid("tree needs K >= 1 and D >= 1"));
                }
                let shape = TreeShape::new(*k, *depth)?;
                Ok(Graph {
                    spec: spec.clone(),
                    n: shape.vertex_count(),
                    origin: 0,
                    layout: Layout::Tree(shape),
                    origin_dist: Vec::new(),
                    by_distance: Vec::new(),
                    sphere_start: Vec::new(),
                })
            }
            TopologySpec::Box { dims } => {
                if dims.is_empty() || dims.contains(&0) {
                    return Err(Error::invalid("box dimensions must be positive"));
                }
                let n: usize = dims.iter().product();
                let mut edges = Vec::new();
                let mut stride = 1;
                // Row-major: the last coordinate varies fastest.
                let strides: Vec<usize> = dims
                    .iter()
                    .rev()
                    .map(|&l| {
                        let s = stride;
                        stride *= l;
                        s
                    })
                    .collect::<Vec<_>>()
                    .into_iter()
                    .rev()
                    .collect();
                for v in 0..n {
                    for (axis, &l) in dims.iter().enumerate() {
                        let c = (v / strides[axis]) % l;
                        if c + 1 < l {
                            edges.push((v, v + strides[axis]));
                        }
                    }
                }
                let origin = dims
                    .iter()
                    .zip(&strides)
                    .map(|(&l, &s)| (l / 2) * s)
                    .sum();
                Self::from_edges(spec.clone(), n, &edges, origin)
            }
            TopologySpec::Complete { n } => {
                if *n == 0 {
                    return Err(Error::invalid("complete graph needs N >= 1"));
                }
                let edges: Vec<_> = (0..*n)
                    .flat_map(|i| (i + 1..*n).map(move |j| (i, j)))
                    .collect();
                Self::from_edges(spec.clone(), *n, &edges, 0)
            }
            TopologySpec::Custom { n, edges } => {
                if *n == 0 {
                    return Err(Error::invalid("custom graph needs N >= 1"));
                }
                for &(a, b) in edges {
                    if a >= *n || b >= *n {
                        return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
                    }
                    if a == b {
                        return Err(Error::invalid(format!("self loop at {a}")));
                    }
                }
                Self::from_edges(spec.clone(), *n, edges, 0)
            }
        }
    }

    fn from_edges(
        spec: TopologySpec,
        n: usize,
        edges: &[(usize, usize)],
        origin: VertexId,
    ) -> Result<Self> {
        let mut adj: Vec<Vec<VertexId>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for list in &adj {
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        let mut g = Graph {
            spec,
            n,
            origin,
            layout: Layout::Csr { offsets, targets },
            origin_dist: Vec::new(),
            by_distance: Vec::new(),
            sphere_start: Vec::new(),
        };
        let dist = g.bfs(origin);
        let reached = dist.iter().filter(|&&d| d != u32::MAX).count();
        if reached != n {
            return Err(Error::Disconnected { reached, total: n });
        }
        let mut order: Vec<VertexId> = (0..n).collect();
        order.sort_by_key(|&v| (dist[v], v));
        let max_d = dist.iter().copied().max().unwrap_or(0) as usize;
        let mut starts = vec![0usize; max_d + 2];
        for &d in &dist {
            starts[d as usize + 1] += 1;
        }
        for i in 1..starts.len() {
            starts[i] += starts[i - 1];
        }
        g.origin_dist = dist;
        g.by_distance = order;
        g.sphere_start = starts;
        Ok(g)
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn origin(&self) -> VertexId {
        self.origin
    }

    pub fn tree_shape(&self) -> Option<&TreeShape> {
        match &self.layout {
            Layout::Tree(t) => Some(t),
            Layout::Csr { .. } => None,
        }
    }

    pub fn is_tree(&self) -> bool {
        self.tree_shape().is_some()
    }

    pub fn neighbors(&self, v: VertexId) -> Neighbors<'_> {
        match &self.layout {
            Layout::Tree(t) => Neighbors::Tree {
                parent: t.parent(v),
                children: t.children(v),
            },
            Layout::Csr { offsets, targets } => {
                Neighbors::Csr(targets[offsets[v]..offsets[v + 1]].iter())
            }
        }
    }

    pub fn degree(&self, v: VertexId) -> usize {
        match &self.layout {
            Layout::Tree(t) => t.children(v).len() + usize::from(v != 0),
            Layout::Csr { offsets, .. } => offsets[v + 1] - offsets[v],
        }
    }

    pub fn max_degree(&self) -> usize {
        match &self.layout {
            Layout::Tree(t) => t.k + 1,
            Layout::Csr { .. } => (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0),
        }
    }

    pub fn edge_count(&self) -> usize {
        match &self.layout {
            Layout::Tree(_) => self.n - 1,
            Layout::Csr { targets, .. } => targets.len() / 2,
        }
    }

    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        (0..self.n)
            .flat_map(|v| self.neighbors(v).filter(move |&w| w > v).map(move |w| (v, w)))
            .collect()
    }

    /// BFS distances from `source`; `u32::MAX` marks unreachable vertices.
    pub fn bfs(&self, source: VertexId) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v];
            for w in self.neighbors(v) {
                if dist[w] == u32::MAX {
                    dist[w] = dv + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Graph distance from the origin.
    pub fn depth(&self, v: VertexId) -> usize {
        match &self.layout {
            Layout::Tree(t) => t.depth_of(v),
            Layout::Csr { .. } => self.origin_dist[v] as usize,
        }
    }

    pub fn distance(&self, x: VertexId, y: VertexId) -> usize {
        match &self.layout {
            Layout::Tree(t) => t.path(x, y).len() - 1,
            Layout::Csr { .. } if x == self.origin => self.origin_dist[y] as usize,
            Layout::Csr { .. } if y == self.origin => self.origin_dist[x] as usize,
            Layout::Csr { .. } => self.bfs(x)[y] as usize,
        }
    }

    /// Full distance matrix, only for graphs up to `FULL_DISTANCE_LIMIT`.
    pub fn distance_matrix(&self) -> Result<Vec<Vec<u32>>> {
        if self.n > FULL_DISTANCE_LIMIT {
            return Err(Error::invalid(format!(
                "distance matrix limited to {FULL_DISTANCE_LIMIT} vertices"
            )));
        }
        Ok((0..self.n).map(|v| self.bfs(v)).collect())
    }

    /// Largest distance from the origin.
    pub fn radius(&self) -> usize {
        match &self.layout {
            Layout::Tree(t) => t.depth,
            Layout::Csr { .. } => self.sphere_start.len() - 2,
        }
    }

    /// Index range of the origin sphere of radius `r` within `origin_order`.
    fn origin_range(&self, r: usize) -> Range<usize> {
        match &self.layout {
            Layout::Tree(t) => t.shell(r),
            Layout::Csr { .. } => {
                if r + 1 >= self.sphere_start.len() {
                    self.n..self.n
                } else {
                    self.sphere_start[r]..self.sphere_start[r + 1]
                }
            }
        }
    }

    pub fn origin_sphere_size(&self, r: usize) -> usize {
        self.origin_range(r).len()
    }

    /// Members of the origin sphere of radius `r`, ascending.
    pub fn origin_sphere(&self, r: usize) -> Vec<VertexId> {
        let range = self.origin_range(r);
        match &self.layout {
            Layout::Tree(_) => range.collect(),
            Layout::Csr { .. } => {
                let mut m = self.by_distance[range].to_vec();
                m.sort_unstable();
                m
            }
        }
    }

    pub fn sphere(&self, center: VertexId, r: usize) -> Result<Sphere> {
        if center >= self.n {
            return Err(Error::invalid(format!(
                "center {center} out of range for {} vertices",
                self.n
            )));
        }
        let members = if center == self.origin {
            self.origin_sphere(r)
        } else {
            let d = self.bfs(center);
            (0..self.n).filter(|&v| d[v] as usize == r).collect()
        };
        Ok(Sphere {
            center,
            radius: r,
            members,
        })
    }

    /// Natural log of the origin sphere cardinality.
    pub fn chi(&self, r: usize) -> Result<f64> {
        let s = self.origin_sphere_size(r);
        if s == 0 {
            return Err(Error::EmptySphere(r));
        }
        Ok((s as f64).ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_counts() {
        let g = Graph::build(&TopologySpec::tree(2, 3)).unwrap();
        assert_eq!(g.vertex_count(), 22);
        let sizes: Vec<_> = (0..=3).map(|r| g.origin_sphere_size(r)).collect();
        assert_eq!(sizes, [1, 3, 6, 12]);
        assert_eq!(g.origin_sphere_size(4), 0);
    }

    #[test]
    fn tree_parent_child_consistent() {
        let g = Graph::build(&TopologySpec::tree(3, 4)).unwrap();
        let t = g.tree_shape().unwrap();
        for v in 0..g.vertex_count() {
            for c in t.children(v) {
                assert_eq!(t.parent(c), Some(v));
                assert_eq!(t.depth_of(c), t.depth_of(v) + 1);
            }
        }
    }

    #[test]
    fn tree_paths() {
        let g = Graph::build(&TopologySpec::tree(2, 3)).unwrap();
        let t = g.tree_shape().unwrap();
        assert_eq!(t.path(5, 5), vec![5]);
        assert_eq!(t.path(0, 4), vec![0, 1, 4]);
        assert_eq!(t.path(4, 0), vec![4, 1, 0]);
        let p = t.path(4, 6);
        assert_eq!(p, vec![4, 1, 0, 2, 6]);
        let d = g.bfs(4);
        assert_eq!(d[6] as usize, p.len() - 1);
    }

    #[test]
    fn box_structure() {
        let g = Graph::build(&TopologySpec::boxed(&[4, 4])).unwrap();
        assert_eq!(g.vertex_count(), 16);
        assert_eq!(g.max_degree(), 4);
        assert_eq!(g.edge_count(), 24);
        let s = g.sphere(0, 6).unwrap();
        assert_eq!(s.members, vec![15]);
    }

    #[test]
    fn complete_edges() {
        let g = Graph::build(&TopologySpec::Complete { n: 5 }).unwrap();
        assert_eq!(g.edge_count(), 10);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Graph::build(&TopologySpec::boxed(&[3, 0])).is_err());
        let e = Graph::build(&TopologySpec::Custom {
            n: 4,
            edges: vec![(0, 1), (2, 3)],
        })
        .unwrap_err();
        assert!(matches!(e, Error::Disconnected { reached: 2, total: 4 }));
    }
}
