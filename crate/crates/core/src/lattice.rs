//! Cubic lattices in D dimensions as weighted graphs.
//!
//! Vertices are numbered row-major over their integer coordinates (the last
//! axis varies fastest). Every vertex keeps, per axis, a link to its lower and
//! upper neighbour or to a wall carrying the boundary condition. Edges, self
//! loops and the axis chains used by the higher-order assemblers are all
//! derived from that neighbour table.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary tag for one face of the grid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Dirichlet,
    Neumann,
    Periodic,
}

/// Boundary condition on a wall: an outer face or the rim of a hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Lo,
    Hi,
}

/// Grid description: per-axis vertex counts, spacing and face tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extent: Vec<usize>,
    pub spacing: f64,
    /// `faces[d] = [lower, upper]`. Periodic must be set on both faces.
    pub faces: Vec<[Face; 2]>,
    /// Physical position of the vertex with coordinate zero. Empty means the origin.
    #[serde(default)]
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(extent: Vec<usize>, spacing: f64, faces: Vec<[Face; 2]>) -> Result<Self> {
        let spec = GridSpec { extent, spacing, faces, origin: Vec::new() };
        spec.validate()?;
        Ok(spec)
    }

    /// Same tag on every face.
    pub fn uniform(extent: Vec<usize>, spacing: f64, face: Face) -> Result<Self> {
        let faces = vec![[face, face]; extent.len()];
        Self::new(extent, spacing, faces)
    }

    pub fn with_origin(mut self, origin: Vec<f64>) -> Result<Self> {
        self.origin = origin;
        self.validate()?;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.extent.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent.is_empty() {
            return Err(Error::Config("grid dimension must be at least 1".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::Config(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.faces.len() != self.extent.len() {
            return Err(Error::Config(format!(
                "{} face pairs given for a {}-dimensional grid",
                self.faces.len(),
                self.extent.len()
            )));
        }
        if !self.origin.is_empty() && self.origin.len() != self.extent.len() {
            return Err(Error::Config("origin length must match the grid dimension".into()));
        }
        for (d, (&n, faces)) in self.extent.iter().zip(&self.faces).enumerate() {
            let periodic = faces.iter().filter(|f| **f == Face::Periodic).count();
            if periodic == 1 {
                return Err(Error::Config(format!("axis {d}: periodic must tag both faces")));
            }
            let min = if periodic == 2 { 3 } else { 2 };
            if n < min {
                return Err(Error::Config(format!("axis {d}: extent {n} is below the minimum {min}")));
            }
        }
        Ok(())
    }

    pub fn axis_periodic(&self, axis: usize) -> bool {
        self.faces[axis][0] == Face::Periodic
    }

    /// Side lengths of the continuum box the lattice discretizes.
    ///
    /// A Dirichlet wall sits one spacing beyond the last vertex, a Neumann
    /// wall half a spacing beyond it, and a periodic axis has length `n·a`.
    pub fn side_lengths(&self) -> Vec<f64> {
        self.extent
            .iter()
            .zip(&self.faces)
            .map(|(&n, faces)| {
                let pad: f64 = faces
                    .iter()
                    .map(|f| match f {
                        Face::Dirichlet => 1.0,
                        Face::Neumann | Face::Periodic => 0.5,
                    })
                    .sum();
                (n as f64 - 1.0 + pad) * self.spacing
            })
            .collect()
    }

    /// Diameter of the continuum box.
    pub fn diameter(&self) -> f64 {
        self.side_lengths().iter().map(|l| l * l).sum::<f64>().sqrt()
    }
}

/// Vertices removed from the grid, with the condition imposed on the rim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererMask {
    pub removed: BTreeSet<Vec<usize>>,
    pub condition: Wall,
}

impl ScattererMask {
    pub fn new(removed: impl IntoIterator<Item = Vec<usize>>, condition: Wall) -> Self {
        ScattererMask { removed: removed.into_iter().collect(), condition }
    }

    /// Axis-aligned box `lo..=hi` of removed vertices.
    pub fn cuboid(lo: &[usize], hi: &[usize], condition: Wall) -> Self {
        let mut removed = BTreeSet::new();
        let mut cur = lo.to_vec();
        if lo.iter().zip(hi).all(|(l, h)| l <= h) {
            loop {
                removed.insert(cur.clone());
                let mut d = cur.len();
                loop {
                    if d == 0 {
                        return ScattererMask { removed, condition };
                    }
                    d -= 1;
                    if cur[d] < hi[d] {
                        cur[d] += 1;
                        break;
                    }
                    cur[d] = lo[d];
                }
            }
        }
        ScattererMask { removed, condition }
    }
}

/// Neighbour slot of a vertex along one axis direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Vertex(usize),
    Wall(Wall),
}

/// Weighted edge. `src < dst` always holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub axis: usize,
    /// Whether `dst` is the upper neighbour of `src` along `axis`
    /// (false only for periodic wraparound edges).
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfLoop {
    pub vertex: usize,
    pub weight: f64,
    /// Missing neighbour directions that this loop stands in for.
    pub walls: Vec<(usize, Side)>,
}

/// Maximal run of vertices along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub axis: usize,
    pub vertices: Vec<usize>,
    /// True for a periodic cycle, in which case `ends` is `None`.
    pub closed: bool,
    pub ends: Option<(Wall, Wall)>,
}

/// Row of the edge-list export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub is_self_loop: bool,
}

#[derive(Debug, Clone)]
pub struct LatticeGraph {
    extent: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
    coords: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    links: Vec<Vec<[Link; 2]>>,
    edges: Vec<Edge>,
    self_loops: Vec<SelfLoop>,
}

fn wall_of(face: Face) -> Wall {
    match face {
        Face::Dirichlet => Wall::Dirichlet,
        _ => Wall::Neumann,
    }
}

/// Build the lattice graph of a grid spec.
pub fn build_grid(spec: &GridSpec) -> Result<LatticeGraph> {
    spec.validate()?;
    let dim = spec.dimension();
    let total: usize = spec.extent.iter().product();
    let mut coords = Vec::with_capacity(total);
    let mut cur = vec![0usize; dim];
    for _ in 0..total {
        coords.push(cur.clone());
        for d in (0..dim).rev() {
            cur[d] += 1;
            if cur[d] < spec.extent[d] {
                break;
            }
            cur[d] = 0;
        }
    }
    let index: HashMap<Vec<usize>, usize> = coords.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();

    let mut links = Vec::with_capacity(total);
    for c in &coords {
        let mut row = Vec::with_capacity(dim);
        for d in 0..dim {
            let n = spec.extent[d];
            let periodic = spec.axis_periodic(d);
            let neighbour = |delta: isize| -> Link {
                let pos = c[d] as isize + delta;
                if (0..n as isize).contains(&pos) || periodic {
                    let mut nc = c.clone();
                    nc[d] = pos.rem_euclid(n as isize) as usize;
                    Link::Vertex(index[&nc])
                } else {
                    let face = if delta < 0 { spec.faces[d][0] } else { spec.faces[d][1] };
                    Link::Wall(wall_of(face))
                }
            };
            row.push([neighbour(-1), neighbour(1)]);
        }
        links.push(row);
    }

    let origin = if spec.origin.is_empty() { vec![0.0; dim] } else { spec.origin.clone() };
    let mut graph = LatticeGraph {
        extent: spec.extent.clone(),
        spacing: spec.spacing,
        origin,
        coords,
        index,
        links,
        edges: Vec::new(),
        self_loops: Vec::new(),
    };
    graph.derive_edges();
    Ok(graph)
}

/// Remove the masked vertices and realize the mask condition on the rim.
pub fn apply_scatterer(graph: &LatticeGraph, mask: &ScattererMask) -> Result<LatticeGraph> {
    if mask.removed.is_empty() {
        return Ok(graph.clone());
    }
    let mut gone = vec![false; graph.num_vertices()];
    for c in &mask.removed {
        match graph.index.get(c) {
            Some(&v) => gone[v] = true,
            None => return Err(Error::Config(format!("mask vertex {c:?} is not in the grid"))),
        }
    }
    let mut renumber = vec![usize::MAX; graph.num_vertices()];
    let mut coords = Vec::new();
    for (v, c) in graph.coords.iter().enumerate() {
        if !gone[v] {
            renumber[v] = coords.len();
            coords.push(c.clone());
        }
    }
    if coords.is_empty() {
        return Err(Error::Topology("mask removes every vertex".into()));
    }
    let links = graph
        .links
        .iter()
        .enumerate()
        .filter(|(v, _)| !gone[*v])
        .map(|(_, row)| {
            row.iter()
                .map(|pair| {
                    pair.map(|l| match l {
                        Link::Vertex(u) if gone[u] => Link::Wall(mask.condition),
                        Link::Vertex(u) => Link::Vertex(renumber[u]),
                        w => w,
                    })
                })
                .collect()
        })
        .collect();
    let index = coords.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let mut out = LatticeGraph {
        extent: graph.extent.clone(),
        spacing: graph.spacing,
        origin: graph.origin.clone(),
        coords,
        index,
        links,
        edges: Vec::new(),
        self_loops: Vec::new(),
    };
    if !out.is_connected() {
        return Err(Error::Topology("mask disconnects the lattice".into()));
    }
    out.derive_edges();
    Ok(out)
}

impl LatticeGraph {
    fn derive_edges(&mut self) {
        let mut edges = Vec::new();
        let mut loops = Vec::new();
        for (v, row) in self.links.iter().enumerate() {
            let mut walls = Vec::new();
            for (d, pair) in row.iter().enumerate() {
                if let Link::Vertex(u) = pair[1] {
                    edges.push(Edge { src: v.min(u), dst: v.max(u), weight: 1.0, axis: d, forward: u > v });
                }
                for (side, link) in [(Side::Lo, pair[0]), (Side::Hi, pair[1])] {
                    if link == Link::Wall(Wall::Dirichlet) {
                        walls.push((d, side));
                    }
                }
            }
            if !walls.is_empty() {
                loops.push(SelfLoop { vertex: v, weight: walls.len() as f64, walls });
            }
        }
        self.edges = edges;
        self.self_loops = loops;
    }

    fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for pair in &self.links[v] {
                for link in pair {
                    if let Link::Vertex(u) = *link {
                        if !seen[u] {
                            seen[u] = true;
                            count += 1;
                            queue.push_back(u);
                        }
                    }
                }
            }
        }
        count == n
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn dimension(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn coordinate(&self, v: usize) -> &[usize] {
        &self.coords[v]
    }

    pub fn vertex_at(&self, coord: &[usize]) -> Option<usize> {
        self.index.get(coord).copied()
    }

    /// Physical position of a (possibly fractional or virtual) lattice coordinate.
    pub fn position_of(&self, coord: &[f64]) -> Vec<f64> {
        coord.iter().zip(&self.origin).map(|(c, o)| o + c * self.spacing).collect()
    }

    pub fn position(&self, v: usize) -> Vec<f64> {
        let c: Vec<f64> = self.coords[v].iter().map(|&x| x as f64).collect();
        self.position_of(&c)
    }

    pub fn links(&self, v: usize) -> &[[Link; 2]] {
        &self.links[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn self_loops(&self) -> &[SelfLoop] {
        &self.self_loops
    }

    /// Weighted degree plus self-loop weight of a vertex.
    pub fn total_weight(&self, v: usize) -> f64 {
        let degree: f64 =
            self.links[v].iter().flat_map(|p| p.iter()).filter(|l| matches!(l, Link::Vertex(_))).count() as f64;
        let loops: f64 = self.self_loops.iter().filter(|l| l.vertex == v).map(|l| l.weight).sum();
        degree + loops
    }

    /// Maximal vertex runs along `axis`, in order of their first vertex.
    pub fn chains(&self, axis: usize) -> Vec<Chain> {
        let n = self.num_vertices();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            if let Link::Wall(lo) = self.links[start][axis][0] {
                let mut vertices = vec![start];
                seen[start] = true;
                let mut v = start;
                let hi = loop {
                    match self.links[v][axis][1] {
                        Link::Vertex(u) => {
                            seen[u] = true;
                            vertices.push(u);
                            v = u;
                        }
                        Link::Wall(w) => break w,
                    }
                };
                out.push(Chain { axis, vertices, closed: false, ends: Some((lo, hi)) });
            }
        }
        for start in 0..n {
            if seen[start] {
                continue;
            }
            // Only cycles are left; begin at the smallest coordinate along the axis.
            let mut v = start;
            while let Link::Vertex(u) = self.links[v][axis][0] {
                if self.coords[u][axis] > self.coords[v][axis] {
                    break;
                }
                v = u;
            }
            let first = v;
            let mut vertices = Vec::new();
            loop {
                seen[v] = true;
                vertices.push(v);
                match self.links[v][axis][1] {
                    Link::Vertex(u) if u != first => v = u,
                    _ => break,
                }
            }
            out.push(Chain { axis, vertices, closed: true, ends: None });
        }
        out.sort_by_key(|c| c.vertices[0]);
        out
    }

    /// Edge list with self loops appended, for CSV export.
    pub fn edge_list(&self) -> Vec<EdgeRecord> {
        let mut rows: Vec<EdgeRecord> = self
            .edges
            .iter()
            .map(|e| EdgeRecord { src: e.src, dst: e.dst, weight: e.weight, is_self_loop: false })
            .collect();
        rows.extend(self.self_loops.iter().map(|l| EdgeRecord {
            src: l.vertex,
            dst: l.vertex,
            weight: l.weight,
            is_self_loop: true,
        }));
        rows
    }
}
