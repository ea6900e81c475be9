//! Eager construction of the soft random geometric graph and its components.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::model::{dist, BoxSpec, ConnectionFunction, PalmPointSet, Point, PointSet, VertexSet};
use crate::rng::EdgeMarks;

/// A vertex set that knows its box and its edge-mark stream.
pub trait Configuration: VertexSet {
    fn bounds(&self) -> BoxSpec;
    fn edge_marks(&self) -> EdgeMarks;
}

impl Configuration for PointSet {
    fn bounds(&self) -> BoxSpec {
        self.bounds
    }

    fn edge_marks(&self) -> EdgeMarks {
        self.stream().edge_marks()
    }
}

impl Configuration for PalmPointSet {
    fn bounds(&self) -> BoxSpec {
        self.base.bounds
    }

    fn edge_marks(&self) -> EdgeMarks {
        self.base.stream().edge_marks()
    }
}

/// Square-cell spatial hash over a fixed vertex list, stored in CSR form.
#[derive(Clone, Debug)]
pub struct CellList {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl CellList {
    /// Buckets the vertices of `v` into cells of side `cell`.
    pub fn build<V: VertexSet + ?Sized>(v: &V, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell side must be positive");
        let n = v.len();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for i in 0..n {
            let p = v.position(i);
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if n == 0 {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let nx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let mut list = Self {
            origin: lo,
            cell,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            items: vec![0; n],
        };
        let cells: Vec<usize> = (0..n).map(|i| list.cell_of(v.position(i))).collect();
        for &c in &cells {
            list.start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            list.start[c + 1] += list.start[c];
        }
        let mut fill = list.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            list.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        list
    }

    fn cell_of(&self, p: Point) -> usize {
        let cx = (((p[0] - self.origin[0]) / self.cell).floor() as usize).min(self.nx - 1);
        let cy = (((p[1] - self.origin[1]) / self.cell).floor() as usize).min(self.ny - 1);
        cy * self.nx + cx
    }

    /// Calls `f` on every stored vertex in the 3x3 block of cells around `p`.
    /// This is a superset of the vertices within distance `cell` of `p`.
    pub fn for_each_near(&self, p: Point, mut f: impl FnMut(usize)) {
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let (x0, x1) = (fx - 1.0, fx + 1.0);
        let (y0, y1) = (fy - 1.0, fy + 1.0);
        if x1 < 0.0 || y1 < 0.0 || x0 > (self.nx - 1) as f64 || y0 > (self.ny - 1) as f64 {
            return;
        }
        let x0 = x0.max(0.0) as usize;
        let y0 = y0.max(0.0) as usize;
        let x1 = (x1 as usize).min(self.nx - 1);
        let y1 = (y1 as usize).min(self.ny - 1);
        for cy in y0..=y1 {
            let row = cy * self.nx;
            let (a, b) = (self.start[row + x0] as usize, self.start[row + x1 + 1] as usize);
            for &i in &self.items[a..b] {
                f(i as usize);
            }
        }
    }
}

/// All pairs `i < j` at distance at most `r`, found with a cell list.
pub fn candidate_pairs<V: VertexSet + ?Sized>(v: &V, r: f64) -> Vec<(usize, usize)> {
    let cells = CellList::build(v, r);
    let mut out = Vec::new();
    for i in 0..v.len() {
        let p = v.position(i);
        cells.for_each_near(p, |j| {
            if j > i && dist(p, v.position(j)) <= r {
                out.push((i, j));
            }
        });
    }
    out.sort_unstable();
    out
}

/// Quadratic reference enumeration of the pairs at distance at most `r`.
pub fn brute_force_pairs<V: VertexSet + ?Sized>(v: &V, r: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if dist(v.position(i), v.position(j)) <= r {
                out.push((i, j));
            }
        }
    }
    out
}

/// Edges `(i, j)` with `i < j`, sorted lexicographically.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeSet {
    pub vertex_count: usize,
    pub edges: Vec<(u32, u32)>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0; self.vertex_count];
        for &(i, j) in &self.edges {
            deg[i as usize] += 1;
            deg[j as usize] += 1;
        }
        deg
    }

    /// Adjacency lists, used by the breadth-first oracle.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(i, j) in &self.edges {
            adj[i as usize].push(j as usize);
            adj[j as usize].push(i as usize);
        }
        adj
    }

    /// Text dump: one `i j` line per edge, lexicographic order.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        for &(i, j) in &self.edges {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Realizes every edge of `G(v, phi)` with the given mark stream.
pub fn build_edges_with<V: VertexSet + ?Sized>(
    v: &V,
    phi: &ConnectionFunction,
    marks: &EdgeMarks,
) -> EdgeSet {
    let range = phi.range();
    let cells = CellList::build(v, range);
    let mut edges = Vec::new();
    for i in 0..v.len() {
        let p = v.position(i);
        let ki = v.key(i);
        cells.for_each_near(p, |j| {
            if j <= i {
                return;
            }
            let d = dist(p, v.position(j));
            if d <= range && marks.is_open(ki, v.key(j), phi.eval_unchecked(d)) {
                edges.push((i as u32, j as u32));
            }
        });
    }
    edges.sort_unstable();
    EdgeSet {
        vertex_count: v.len(),
        edges,
    }
}

/// Realizes `G(pts, phi)` using the configuration's own edge-mark stream.
pub fn build_edges<C: Configuration + ?Sized>(pts: &C, phi: &ConnectionFunction) -> EdgeSet {
    build_edges_with(pts, phi, &pts.edge_marks())
}

/// Weighted union-find with path halving.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }
}

/// Component labels where each label is the smallest vertex index of its
/// component.
pub fn component_labels(edges: &EdgeSet) -> Vec<usize> {
    let n = edges.vertex_count;
    let mut ds = DisjointSet::new(n);
    for &(i, j) in &edges.edges {
        ds.union(i as usize, j as usize);
    }
    min_index_labels(&mut ds)
}

fn min_index_labels(ds: &mut DisjointSet) -> Vec<usize> {
    let n = ds.parent.len();
    let mut min_of_root = vec![usize::MAX; n];
    for v in 0..n {
        let r = ds.find(v);
        min_of_root[r] = min_of_root[r].min(v);
    }
    (0..n).map(|v| min_of_root[ds.find(v)]).collect()
}

/// Component statistics of a finite graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentSummary {
    /// Component orders, largest first.
    pub sizes: Vec<usize>,
    pub size_histogram: BTreeMap<usize, usize>,
    pub labels: Option<Vec<usize>>,
}

impl ComponentSummary {
    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    /// Order of the `j`-th largest component (1-based), zero if absent.
    pub fn l(&self, j: usize) -> usize {
        assert!(j >= 1, "components are ranked from 1");
        self.sizes.get(j - 1).copied().unwrap_or(0)
    }

    pub fn l1(&self) -> usize {
        self.l(1)
    }

    pub fn l2(&self) -> usize {
        self.l(2)
    }

    pub fn vertex_count(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Exact component partition of a graph on `n` vertices.
///
/// Panics if an edge refers to a vertex `>= n`.
pub fn connected_components(edges: &EdgeSet, n: usize, keep_labels: bool) -> ComponentSummary {
    let mut ds = DisjointSet::new(n);
    for &(i, j) in &edges.edges {
        assert!((i as usize) < n && (j as usize) < n, "edge ({i}, {j}) out of range");
        ds.union(i as usize, j as usize);
    }
    let mut sizes = Vec::new();
    for v in 0..n {
        if ds.find(v) == v {
            sizes.push(ds.size[v] as usize);
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut size_histogram = BTreeMap::new();
    for &k in &sizes {
        *size_histogram.entry(k).or_insert(0) += 1;
    }
    let labels = keep_labels.then(|| min_index_labels(&mut ds));
    ComponentSummary {
        sizes,
        size_histogram,
        labels,
    }
}

/// `(L1 / s^2, L2 / s^2)` for `G(pts, phi)`.
pub fn giant_fraction<C: Configuration + ?Sized>(pts: &C, phi: &ConnectionFunction) -> (f64, f64) {
    let edges = build_edges(pts, phi);
    let summary = connected_components(&edges, pts.len(), false);
    let area = pts.bounds().area();
    (summary.l1() as f64 / area, summary.l2() as f64 / area)
}

/// Vertices of the component containing `root`, in increasing index order.
pub fn component_of(edges: &EdgeSet, root: usize) -> Vec<usize> {
    let labels = component_labels(edges);
    let target = labels[root];
    (0..labels.len()).filter(|&v| labels[v] == target).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_points, KeyedPoints};
    use crate::rng::StreamKey;
    use std::collections::VecDeque;

    fn two_points(d: f64) -> KeyedPoints {
        let mut v = KeyedPoints::default();
        v.push([0.0, 0.0], 0);
        v.push([d, 0.0], 1);
        v
    }

    /// Independent breadth-first labelling, smallest vertex as label.
    fn bfs_labels(edges: &EdgeSet) -> Vec<usize> {
        let adj = edges.adjacency();
        let mut label = vec![usize::MAX; edges.vertex_count];
        for s in 0..edges.vertex_count {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = s;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &w in &adj[u] {
                    if label[w] == usize::MAX {
                        label[w] = s;
                        q.push_back(w);
                    }
                }
            }
        }
        label
    }

    #[test]
    fn hard_disk_pair_examples() {
        let disk = ConnectionFunction::unit_disk();
        let marks = StreamKey::new(0, 0).edge_marks();
        assert_eq!(build_edges_with(&two_points(0.5), &disk, &marks).edges, vec![(0, 1)]);
        assert!(build_edges_with(&two_points(1.5), &disk, &marks).is_empty());
    }

    #[test]
    fn half_probability_edge_frequency() {
        let phi = ConnectionFunction::step_table(vec![(1.0, 0.5)]).unwrap();
        let v = two_points(0.5);
        let hits = (0..10_000u64)
            .filter(|&seed| !build_edges_with(&v, &phi, &StreamKey::new(seed, 0).edge_marks()).is_empty())
            .count();
        let freq = hits as f64 / 1e4;
        assert!((freq - 0.5).abs() <= 0.015, "freq = {freq}");
    }

    #[test]
    fn component_examples() {
        let path = EdgeSet {
            vertex_count: 3,
            edges: vec![(0, 1), (1, 2)],
        };
        let s = connected_components(&path, 3, false);
        assert_eq!((s.l1(), s.l2(), s.num_components()), (3, 0, 1));

        let empty = connected_components(&EdgeSet::default(), 0, false);
        assert_eq!((empty.l1(), empty.l2(), empty.num_components()), (0, 0, 0));

        let tie = EdgeSet {
            vertex_count: 5,
            edges: vec![(0, 1), (2, 3)],
        };
        let s = connected_components(&tie, 5, true);
        assert_eq!((s.l1(), s.l2()), (2, 2));
        assert_eq!(s.size_histogram, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(s.labels.unwrap(), vec![0, 0, 2, 2, 4]);
    }

    #[test]
    fn union_find_matches_bfs_on_random_instance() {
        let b = BoxSpec::new(8.0).unwrap();
        let pts = sample_points(1.0, b, 11, 3).unwrap();
        let edges = build_edges(&pts, &ConnectionFunction::unit_disk());
        assert_eq!(component_labels(&edges), bfs_labels(&edges));
        let s = connected_components(&edges, pts.len(), false);
        assert_eq!(s.vertex_count(), pts.len());
        assert!(s.l1() >= s.l2());
    }

    #[test]
    fn cell_list_matches_brute_force() {
        for rep in 0..20 {
            let b = BoxSpec::new(6.0).unwrap();
            let pts = sample_points(2.0, b, 5, rep).unwrap();
            for r in [0.3, 1.0, 2.5] {
                assert_eq!(candidate_pairs(&pts, r), brute_force_pairs(&pts, r));
            }
        }
    }

    #[test]
    fn giant_fraction_examples() {
        let disk = ConnectionFunction::unit_disk();
        let b = BoxSpec::new(10.0).unwrap();
        let empty = sample_points(0.0, b, 0, 0).unwrap();
        assert_eq!(giant_fraction(&empty, &disk), (0.0, 0.0));
        let single = PalmPointSet::with_origin(empty);
        assert_eq!(giant_fraction(&single, &disk), (0.01, 0.0));
    }

    #[test]
    fn edge_list_dump_is_sorted() {
        let b = BoxSpec::new(5.0).unwrap();
        let pts = sample_points(2.0, b, 1, 1).unwrap();
        let edges = build_edges(&pts, &ConnectionFunction::unit_disk());
        let mut buf = Vec::new();
        edges.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<(u32, u32)> = text
            .lines()
            .map(|l| {
                let mut it = l.split(' ').map(|t| t.parse().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect();
        let mut sorted = parsed.clone();
        sorted.sort_unstable();
        assert_eq!(parsed, sorted);
        assert_eq!(parsed, edges.edges);
    }

    #[test]
    fn query_far_outside_is_empty() {
        let b = BoxSpec::new(4.0).unwrap();
        let pts = sample_points(1.0, b, 1, 1).unwrap();
        let cells = CellList::build(&pts, 1.0);
        let mut hit = false;
        cells.for_each_near([100.0, 0.0], |_| hit = true);
        assert!(!hit);
    }
}
