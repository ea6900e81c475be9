//! Sequential cluster growth with lazy edge revelation.
//!
//! A cluster is explored breadth-first from a seed set. The Bernoulli mark
//! of a pair is looked up only when the pair is first examined, and the
//! marks come from the same per-pair stream the eager builder uses, so a
//! lazily grown cluster coincides with the corresponding eager component.
//!
//! Two vertex sources are provided: a fixed configuration in a box, and the
//! whole-plane model, whose Poisson points are generated tile by tile as the
//! frontier approaches them.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::graph::{CellList, Configuration};
use crate::model::{dist, norm, poisson_rect, ConnectionFunction, Point, PALM_TAG};
use crate::rng::{EdgeMarks, StreamKey, StreamTag};

/// Default memory bound on the number of cluster vertices.
pub const DEFAULT_MAX_VERTICES: usize = 50_000_000;

/// Truncation of an exploration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Stop once the cluster holds this many vertices.
    pub max_size: usize,
    /// Stop once a cluster vertex has norm at least this. May be infinite
    /// for boxed sources.
    pub escape_radius: f64,
}

impl StoppingRule {
    pub fn new(max_size: usize, escape_radius: f64) -> Result<Self> {
        if max_size == 0 {
            return Err(invalid("kmax", "must be at least 1"));
        }
        if escape_radius.is_nan() || escape_radius <= 0.0 {
            return Err(invalid("rmax_escape", format!("must be > 0, got {escape_radius}")));
        }
        Ok(Self {
            max_size,
            escape_radius,
        })
    }

    /// No escape radius; only the size cap applies.
    pub fn size_only(max_size: usize) -> Result<Self> {
        Self::new(max_size, f64::INFINITY)
    }
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_size: 10_000,
            escape_radius: 60.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterStatus {
    Exhausted,
    SizeCapped,
    Escaped,
}

impl ClusterStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClusterStatus::Exhausted => "exhausted",
            ClusterStatus::SizeCapped => "size-capped",
            ClusterStatus::Escaped => "escaped",
        }
    }

    /// Escaped and capped runs both count as reaching infinity.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self, ClusterStatus::Exhausted)
    }
}

/// One revealed pair of a traced exploration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reveal {
    pub from: u64,
    pub to: u64,
    pub distance: f64,
    pub open: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub vertices: Vec<Point>,
    pub keys: Vec<u64>,
    pub status: ClusterStatus,
    /// Largest norm among cluster vertices (zero for an empty cluster).
    pub explored_radius: f64,
    /// Number of pair marks looked up.
    pub revealed_pairs: u64,
    pub trace: Option<Vec<Reveal>>,
}

impl ClusterResult {
    pub fn size(&self) -> usize {
        self.vertices.len()
    }

    /// Trace dump: one `from to distance mark` line per revealed pair.
    pub fn write_trace<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in self.trace.iter().flatten() {
            writeln!(w, "{} {} {:.12} {}", r.from, r.to, r.distance, u8::from(r.open))?;
        }
        Ok(())
    }
}

/// Where an exploration starts.
#[derive(Clone, Debug, PartialEq)]
pub enum SeedRegion {
    /// Explicit source vertex ids (for example a Palm point).
    Vertices(Vec<usize>),
    /// Every source vertex in the closed disk.
    Disk { center: Point, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthOptions {
    pub max_vertices: usize,
    pub trace: bool,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            max_vertices: DEFAULT_MAX_VERTICES,
            trace: false,
        }
    }
}

/// A lazily queried vertex population.
pub trait ClusterSource {
    /// Number of vertex ids handed out so far; ids are dense from zero.
    fn known(&self) -> usize;
    fn position(&self, id: usize) -> Point;
    fn key(&self, id: usize) -> u64;
    fn marks(&self) -> EdgeMarks;
    fn seeds(&mut self, region: &SeedRegion) -> Result<Vec<usize>>;
    /// Appends a superset of the vertices within `range` of vertex `id`.
    fn candidates(&mut self, id: usize, out: &mut Vec<usize>);
}

/// A fixed configuration in `B(s)`, pre-sampled in full.
pub struct BoxedSource<'a, C: Configuration + ?Sized> {
    config: &'a C,
    cells: CellList,
}

impl<'a, C: Configuration + ?Sized> BoxedSource<'a, C> {
    pub fn new(config: &'a C, phi: &ConnectionFunction) -> Self {
        Self {
            config,
            cells: CellList::build(config, phi.range()),
        }
    }
}

impl<C: Configuration + ?Sized> ClusterSource for BoxedSource<'_, C> {
    fn known(&self) -> usize {
        self.config.len()
    }

    fn position(&self, id: usize) -> Point {
        self.config.position(id)
    }

    fn key(&self, id: usize) -> u64 {
        self.config.key(id)
    }

    fn marks(&self) -> EdgeMarks {
        self.config.edge_marks()
    }

    fn seeds(&mut self, region: &SeedRegion) -> Result<Vec<usize>> {
        match region {
            SeedRegion::Vertices(ids) => {
                if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.len()) {
                    return Err(invalid("seed", format!("vertex {bad} does not exist")));
                }
                Ok(ids.clone())
            }
            SeedRegion::Disk { center, radius } => {
                require_nonnegative("K", *radius)?;
                let b = self.config.bounds();
                let h = b.half();
                let nearest = [center[0].clamp(-h, h), center[1].clamp(-h, h)];
                if dist(nearest, *center) > *radius {
                    return Err(invalid("seed", "seed disk misses the box"));
                }
                Ok((0..self.config.len())
                    .filter(|&i| dist(self.config.position(i), *center) <= *radius)
                    .collect())
            }
        }
    }

    fn candidates(&mut self, id: usize, out: &mut Vec<usize>) {
        self.cells
            .for_each_near(self.config.position(id), |j| out.push(j));
    }
}

const TILE_COORD_BITS: u32 = 20;
const TILE_INDEX_BITS: u32 = 23;
const TILE_COORD_LIMIT: i64 = 1 << (TILE_COORD_BITS - 1);

/// The whole-plane model `H_lambda`, optionally with a Palm point at the
/// origin (vertex id 0). Poisson points are generated per square tile of
/// side `range`, each tile from its own keyed stream, so the realization
/// does not depend on the order in which tiles are visited.
pub struct PlaneSource {
    intensity: f64,
    tile: f64,
    stream: StreamKey,
    marks: EdgeMarks,
    positions: Vec<Point>,
    keys: Vec<u64>,
    tiles: HashMap<(i64, i64), (usize, usize)>,
}

impl PlaneSource {
    pub fn new(intensity: f64, phi: &ConnectionFunction, stream: StreamKey) -> Result<Self> {
        require_nonnegative("lambda", intensity)?;
        Ok(Self {
            intensity,
            tile: phi.range(),
            stream,
            marks: stream.edge_marks(),
            positions: Vec::new(),
            keys: Vec::new(),
            tiles: HashMap::new(),
        })
    }

    /// `H_lambda ∪ {o}` with the origin as vertex 0.
    pub fn with_origin(intensity: f64, phi: &ConnectionFunction, stream: StreamKey) -> Result<Self> {
        let mut src = Self::new(intensity, phi, stream)?;
        src.positions.push([0.0, 0.0]);
        src.keys.push(PALM_TAG);
        Ok(src)
    }

    /// Number of tiles generated so far.
    pub fn tiles_generated(&self) -> usize {
        self.tiles.len()
    }

    fn tile_of(&self, p: Point) -> (i64, i64) {
        (
            (p[0] / self.tile).floor() as i64,
            (p[1] / self.tile).floor() as i64,
        )
    }

    fn materialize(&mut self, t: (i64, i64)) -> (usize, usize) {
        if let Some(&r) = self.tiles.get(&t) {
            return r;
        }
        assert!(
            t.0.abs() < TILE_COORD_LIMIT && t.1.abs() < TILE_COORD_LIMIT,
            "tile {t:?} outside the addressable plane"
        );
        let mut rng = self
            .stream
            .rng(StreamTag::PlaneTile, &[t.0 as u64, t.1 as u64]);
        let lo = [t.0 as f64 * self.tile, t.1 as f64 * self.tile];
        let hi = [lo[0] + self.tile, lo[1] + self.tile];
        let pts = poisson_rect(&mut rng, self.intensity, lo, hi);
        assert!(pts.len() < 1 << TILE_INDEX_BITS, "tile overfull");
        let start = self.positions.len();
        let tx = (t.0 + TILE_COORD_LIMIT) as u64;
        let ty = (t.1 + TILE_COORD_LIMIT) as u64;
        let prefix = (tx << (TILE_COORD_BITS + TILE_INDEX_BITS)) | (ty << TILE_INDEX_BITS);
        for (k, p) in pts.into_iter().enumerate() {
            self.positions.push(p);
            self.keys.push(prefix | k as u64);
        }
        let r = (start, self.positions.len());
        self.tiles.insert(t, r);
        r
    }
}

impl ClusterSource for PlaneSource {
    fn known(&self) -> usize {
        self.positions.len()
    }

    fn position(&self, id: usize) -> Point {
        self.positions[id]
    }

    fn key(&self, id: usize) -> u64 {
        self.keys[id]
    }

    fn marks(&self) -> EdgeMarks {
        self.marks
    }

    fn seeds(&mut self, region: &SeedRegion) -> Result<Vec<usize>> {
        match region {
            SeedRegion::Vertices(ids) => {
                if let Some(&bad) = ids.iter().find(|&&i| i >= self.positions.len()) {
                    return Err(invalid("seed", format!("vertex {bad} does not exist")));
                }
                Ok(ids.clone())
            }
            SeedRegion::Disk { center, radius } => {
                require_nonnegative("K", *radius)?;
                let lo = self.tile_of([center[0] - radius, center[1] - radius]);
                let hi = self.tile_of([center[0] + radius, center[1] + radius]);
                let mut out = Vec::new();
                for ty in lo.1..=hi.1 {
                    for tx in lo.0..=hi.0 {
                        let (a, b) = self.materialize((tx, ty));
                        out.extend((a..b).filter(|&i| dist(self.positions[i], *center) <= *radius));
                    }
                }
                // tiles never contain the Palm origin
                Ok(out)
            }
        }
    }

    fn candidates(&mut self, id: usize, out: &mut Vec<usize>) {
        let (tx, ty) = self.tile_of(self.positions[id]);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (a, b) = self.materialize((tx + dx, ty + dy));
                out.extend(a..b);
            }
        }
        // The origin is not stored in any tile.
        if self.keys.first() == Some(&PALM_TAG) && id != 0 {
            out.push(0);
        }
    }
}

/// Grows `∪_{x in seeds} C_x` breadth-first (FIFO), revealing each pair's
/// mark at most once, until exhaustion, the size cap or escape.
pub fn grow_cluster<S: ClusterSource + ?Sized>(
    source: &mut S,
    seeds: &SeedRegion,
    phi: &ConnectionFunction,
    rule: &StoppingRule,
    options: &GrowthOptions,
) -> Result<ClusterResult> {
    if rule.max_size > options.max_vertices {
        return Err(Error::MemoryBound {
            requested: rule.max_size,
            limit: options.max_vertices,
        });
    }
    require_positive("phi.range", phi.range())?;
    let range = phi.range();
    let marks = source.marks();
    let seed_ids = source.seeds(seeds)?;

    let mut in_cluster = vec![false; source.known()];
    let mut result = ClusterResult {
        vertices: Vec::new(),
        keys: Vec::new(),
        status: ClusterStatus::Exhausted,
        explored_radius: 0.0,
        revealed_pairs: 0,
        trace: options.trace.then(Vec::new),
    };
    let mut queue = VecDeque::new();

    // Returns true when a stopping condition fires.
    let admit = |id: usize, result: &mut ClusterResult, queue: &mut VecDeque<usize>, p: Point, key: u64| {
        result.vertices.push(p);
        result.keys.push(key);
        queue.push_back(id);
        let r = norm(p);
        result.explored_radius = result.explored_radius.max(r);
        if r >= rule.escape_radius {
            result.status = ClusterStatus::Escaped;
            true
        } else if result.vertices.len() >= rule.max_size {
            result.status = ClusterStatus::SizeCapped;
            true
        } else {
            false
        }
    };

    for id in seed_ids {
        if in_cluster.len() < source.known() {
            in_cluster.resize(source.known(), false);
        }
        if in_cluster[id] {
            continue;
        }
        in_cluster[id] = true;
        if admit(id, &mut result, &mut queue, source.position(id), source.key(id)) {
            return Ok(result);
        }
    }

    let mut buf = Vec::new();
    while let Some(x) = queue.pop_front() {
        buf.clear();
        source.candidates(x, &mut buf);
        if in_cluster.len() < source.known() {
            in_cluster.resize(source.known(), false);
        }
        let px = source.position(x);
        let kx = source.key(x);
        for &y in &buf {
            if in_cluster[y] || y == x {
                continue;
            }
            let py = source.position(y);
            let d = dist(px, py);
            if d > range {
                continue;
            }
            let ky = source.key(y);
            let open = marks.is_open(kx, ky, phi.eval_unchecked(d));
            result.revealed_pairs += 1;
            if let Some(t) = result.trace.as_mut() {
                t.push(Reveal {
                    from: kx,
                    to: ky,
                    distance: d,
                    open,
                });
            }
            if open {
                in_cluster[y] = true;
                if admit(y, &mut result, &mut queue, py, ky) {
                    return Ok(result);
                }
            }
        }
    }
    Ok(result)
}

/// Grows the union of the clusters of every point of `pts` in `D_K`.
pub fn grow_from_region<C: Configuration + ?Sized>(
    radius: f64,
    pts: &C,
    phi: &ConnectionFunction,
    rule: &StoppingRule,
    options: &GrowthOptions,
) -> Result<ClusterResult> {
    require_nonnegative("K", radius)?;
    if radius >= pts.bounds().half() {
        return Err(invalid("K", format!("must be < s/2 = {}", pts.bounds().half())));
    }
    let mut source = BoxedSource::new(pts, phi);
    grow_cluster(
        &mut source,
        &SeedRegion::Disk {
            center: [0.0, 0.0],
            radius,
        },
        phi,
        rule,
        options,
    )
}

/// Explores the cluster of the Palm origin in the whole-plane model for
/// replicate `replicate` of `seed`.
pub fn grow_origin_in_plane(
    intensity: f64,
    phi: &ConnectionFunction,
    rule: &StoppingRule,
    stream: StreamKey,
    options: &GrowthOptions,
) -> Result<ClusterResult> {
    if !rule.escape_radius.is_finite() && rule.max_size > options.max_vertices {
        return Err(invalid("rmax_escape", "whole-plane exploration needs a finite bound"));
    }
    let mut source = PlaneSource::with_origin(intensity, phi, stream)?;
    grow_cluster(&mut source, &SeedRegion::Vertices(vec![0]), phi, rule, options)
}
