//! Renormalization events and the coarse-grained block field.
//!
//! `U_{K,L}`: exactly one component of `G(H ∩ D_{L+1})` meets both `D_K`
//! and the complement of `D_L`.
//!
//! `F_{K,M}`: `D_K` and `D_K(M e)` are joined by a path of
//! `G(H ∩ D_{3M})`, with `e = (1, 0)`.
//!
//! The block field sets `X_x = 1` at lattice site `x` when `U_{K,M/3}`
//! holds around `Mx` and `F` holds from `Mx` towards each of the four
//! neighbours, all evaluated inside `D_{3M}(Mx)`.

use std::collections::HashSet;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::estimators::par_replicates;
use crate::graph::{build_edges_with, component_labels};
use crate::model::{dist, poisson_rect, ConnectionFunction, KeyedPoints, Point, VertexSet};
use crate::rng::{EdgeMarks, StreamKey, StreamTag};
use crate::stats::{mean_var, EstimateWithCI};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpecU {
    pub k: f64,
    pub l: f64,
    pub intensity: f64,
}

impl EventSpecU {
    pub fn new(k: f64, l: f64, intensity: f64) -> Result<Self> {
        require_positive("K", k)?;
        require_positive("L", l)?;
        require_nonnegative("lambda", intensity)?;
        if l <= k {
            return Err(invalid("L", format!("must exceed K = {k}, got {l}")));
        }
        Ok(Self { k, l, intensity })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpecF {
    pub k: f64,
    pub m: f64,
    pub intensity: f64,
}

impl EventSpecF {
    pub fn new(k: f64, m: f64, intensity: f64) -> Result<Self> {
        require_positive("K", k)?;
        require_positive("M", m)?;
        require_nonnegative("lambda", intensity)?;
        if m <= 2.0 * k {
            return Err(invalid("M", format!("must exceed 2K = {}, got {m}", 2.0 * k)));
        }
        Ok(Self { k, m, intensity })
    }
}

/// Poisson points of intensity `intensity` in the closed disk.
fn sample_disk<R: rand::Rng>(rng: &mut R, intensity: f64, center: Point, radius: f64) -> KeyedPoints {
    let lo = [center[0] - radius, center[1] - radius];
    let hi = [center[0] + radius, center[1] + radius];
    let mut out = KeyedPoints::default();
    for (i, p) in poisson_rect(rng, intensity, lo, hi).into_iter().enumerate() {
        if dist(p, center) <= radius {
            out.push(p, i as u64);
        }
    }
    out
}

/// Evaluates `U` centred at `center` on the vertices of `v` (which must
/// include every point of `D_{L+1}(center)`).
pub fn event_u_occurs<V: VertexSet + ?Sized>(
    v: &V,
    marks: &EdgeMarks,
    phi: &ConnectionFunction,
    center: Point,
    k: f64,
    l: f64,
) -> bool {
    let local = KeyedPoints::select(v, |p| dist(p, center) <= l + 1.0);
    let labels = component_labels(&build_edges_with(&local, phi, marks));
    let inner: HashSet<usize> = (0..local.len())
        .filter(|&i| dist(local.positions[i], center) <= k)
        .map(|i| labels[i])
        .collect();
    let crossing: HashSet<usize> = (0..local.len())
        .filter(|&i| dist(local.positions[i], center) > l && inner.contains(&labels[i]))
        .map(|i| labels[i])
        .collect();
    crossing.len() == 1
}

/// Evaluates `D_K(from) <-> D_K(to)` in `G(H ∩ D_window(from))`.
pub fn event_f_occurs<V: VertexSet + ?Sized>(
    v: &V,
    marks: &EdgeMarks,
    phi: &ConnectionFunction,
    from: Point,
    to: Point,
    k: f64,
    window: f64,
) -> bool {
    let local = KeyedPoints::select(v, |p| dist(p, from) <= window);
    let labels = component_labels(&build_edges_with(&local, phi, marks));
    joined(&local, &labels, from, &[to], k)[0]
}

/// For each target, whether some component meets `D_k(from)` and `D_k(target)`.
fn joined(local: &KeyedPoints, labels: &[usize], from: Point, targets: &[Point], k: f64) -> Vec<bool> {
    let source: HashSet<usize> = (0..local.len())
        .filter(|&i| dist(local.positions[i], from) <= k)
        .map(|i| labels[i])
        .collect();
    targets
        .iter()
        .map(|&t| (0..local.len()).any(|i| dist(local.positions[i], t) <= k && source.contains(&labels[i])))
        .collect()
}

/// Frequency of `U_{K,L,lambda}` over independent samples of `H ∩ D_{L+1}`.
pub fn estimate_event_u(
    spec: &EventSpecU,
    phi: &ConnectionFunction,
    replicates: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    let hits = par_replicates(replicates, |r| {
        let stream = StreamKey::new(seed, r);
        let pts = sample_disk(&mut stream.rng(StreamTag::Window, &[]), spec.intensity, [0.0, 0.0], spec.l + 1.0);
        Ok(event_u_occurs(&pts, &stream.edge_marks(), phi, [0.0, 0.0], spec.k, spec.l))
    })?;
    EstimateWithCI::from_indicators(&hits, seed)
}

/// Frequency of `F_{K,M,lambda}` over independent samples of `H ∩ D_{3M}`.
pub fn estimate_event_f(
    spec: &EventSpecF,
    phi: &ConnectionFunction,
    replicates: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    let hits = par_replicates(replicates, |r| {
        let stream = StreamKey::new(seed, r);
        let window = 3.0 * spec.m;
        let pts = sample_disk(&mut stream.rng(StreamTag::Window, &[]), spec.intensity, [0.0, 0.0], window);
        Ok(event_f_occurs(
            &pts,
            &stream.edge_marks(),
            phi,
            [0.0, 0.0],
            [spec.m, 0.0],
            spec.k,
            window,
        ))
    })?;
    EstimateWithCI::from_indicators(&hits, seed)
}

/// `U_{K,L}` estimates along a grid of `L`.
pub fn search_u(
    k: f64,
    l_grid: &[f64],
    intensity: f64,
    phi: &ConnectionFunction,
    replicates: usize,
    seed: u64,
) -> Result<Vec<(EventSpecU, EstimateWithCI)>> {
    l_grid
        .iter()
        .map(|&l| {
            let spec = EventSpecU::new(k, l, intensity)?;
            Ok((spec, estimate_event_u(&spec, phi, replicates, seed)?))
        })
        .collect()
}

/// `F_{K,M}` estimates along a grid of `M`.
pub fn search_f(
    k: f64,
    m_grid: &[f64],
    intensity: f64,
    phi: &ConnectionFunction,
    replicates: usize,
    seed: u64,
) -> Result<Vec<(EventSpecF, EstimateWithCI)>> {
    m_grid
        .iter()
        .map(|&m| {
            let spec = EventSpecF::new(k, m, intensity)?;
            Ok((spec, estimate_event_f(&spec, phi, replicates, seed)?))
        })
        .collect()
}

/// Parameters of the block field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub k: f64,
    pub m: f64,
    pub intensity: f64,
}

impl BlockParams {
    /// `U_{K,M/3}` needs `M/3 > K`, which also gives `M > 2K`.
    pub fn new(k: f64, m: f64, intensity: f64) -> Result<Self> {
        EventSpecF::new(k, m, intensity)?;
        EventSpecU::new(k, m / 3.0, intensity)?;
        Ok(Self { k, m, intensity })
    }
}

/// Best `(K, M)` on a grid by the smaller of `U_{K,M/3}` and `F_{K,M}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedBlock {
    pub params: BlockParams,
    pub u: EstimateWithCI,
    pub f: EstimateWithCI,
}

pub fn tune_block_params(
    k_grid: &[f64],
    m_grid: &[f64],
    intensity: f64,
    phi: &ConnectionFunction,
    replicates: usize,
    seed: u64,
) -> Result<TunedBlock> {
    let mut best: Option<TunedBlock> = None;
    for &k in k_grid {
        for &m in m_grid {
            let Ok(params) = BlockParams::new(k, m, intensity) else {
                continue;
            };
            let u = estimate_event_u(&EventSpecU::new(k, m / 3.0, intensity)?, phi, replicates, seed)?;
            let f = estimate_event_f(&EventSpecF::new(k, m, intensity)?, phi, replicates, seed)?;
            let score = u.value.min(f.value);
            if best.as_ref().is_none_or(|b| score > b.u.value.min(b.f.value)) {
                best = Some(TunedBlock { params, u, f });
            }
        }
    }
    best.ok_or_else(|| invalid("M", "no grid point satisfies M > 3K"))
}

/// Rectangle of lattice sites `x0..x0+nx` by `y0..y0+ny`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridExtent {
    pub x0: i64,
    pub y0: i64,
    pub nx: usize,
    pub ny: usize,
}

impl GridExtent {
    pub fn square(n: usize) -> Self {
        Self { x0: 0, y0: 0, nx: n, ny: n }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sites in row-major order.
    pub fn sites(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.ny as i64).flat_map(move |j| (0..self.nx as i64).map(move |i| (self.x0 + i, self.y0 + j)))
    }
}

/// One shared configuration over a rectangular window.
#[derive(Clone, Debug)]
pub struct BlockConfiguration {
    pub points: KeyedPoints,
    pub marks: EdgeMarks,
    pub lo: Point,
    pub hi: Point,
    cell: f64,
    buckets: std::collections::HashMap<(i64, i64), Vec<usize>>,
}

impl BlockConfiguration {
    pub fn new(points: KeyedPoints, marks: EdgeMarks, lo: Point, hi: Point, cell: f64) -> Self {
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
        for (i, p) in points.positions.iter().enumerate() {
            let c = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            buckets.entry(c).or_default().push(i);
        }
        Self {
            points,
            marks,
            lo,
            hi,
            cell,
            buckets,
        }
    }

    /// The points in the closed disk, keys preserved.
    pub fn restrict(&self, center: Point, radius: f64) -> KeyedPoints {
        let c0 = (((center[0] - radius) / self.cell).floor() as i64, ((center[1] - radius) / self.cell).floor() as i64);
        let c1 = (((center[0] + radius) / self.cell).floor() as i64, ((center[1] + radius) / self.cell).floor() as i64);
        let mut idx = Vec::new();
        for cy in c0.1..=c1.1 {
            for cx in c0.0..=c1.0 {
                if let Some(b) = self.buckets.get(&(cx, cy)) {
                    idx.extend(b.iter().copied().filter(|&i| dist(self.points.positions[i], center) <= radius));
                }
            }
        }
        idx.sort_unstable();
        let mut out = KeyedPoints::default();
        for i in idx {
            out.push(self.points.positions[i], self.points.keys[i]);
        }
        out
    }

    fn covers_disk(&self, center: Point, radius: f64) -> bool {
        center[0] - radius >= self.lo[0]
            && center[0] + radius <= self.hi[0]
            && center[1] - radius >= self.lo[1]
            && center[1] + radius <= self.hi[1]
    }
}

/// Bounding rectangle of the union of `D_{3M}(Mx)` over the grid.
pub fn block_window(params: &BlockParams, grid: &GridExtent) -> (Point, Point) {
    let m = params.m;
    let lo = [grid.x0 as f64 * m - 3.0 * m, grid.y0 as f64 * m - 3.0 * m];
    let hi = [
        (grid.x0 + grid.nx as i64 - 1) as f64 * m + 3.0 * m,
        (grid.y0 + grid.ny as i64 - 1) as f64 * m + 3.0 * m,
    ];
    (lo, hi)
}

/// Samples the shared configuration for `grid`.
pub fn sample_block_configuration(params: &BlockParams, grid: &GridExtent, seed: u64) -> BlockConfiguration {
    let (lo, hi) = block_window(params, grid);
    let stream = StreamKey::new(seed, 0);
    let pts = poisson_rect(&mut stream.rng(StreamTag::Window, &[1]), params.intensity, lo, hi);
    let mut points = KeyedPoints::default();
    for (i, p) in pts.into_iter().enumerate() {
        points.push(p, i as u64);
    }
    BlockConfiguration::new(points, stream.edge_marks(), lo, hi, params.m)
}

/// `X_x` for one site, reading only the points in `D_{3M}(Mx)`.
pub fn site_value(
    config: &BlockConfiguration,
    params: &BlockParams,
    phi: &ConnectionFunction,
    site: (i64, i64),
) -> Result<bool> {
    let m = params.m;
    let center = [site.0 as f64 * m, site.1 as f64 * m];
    if !config.covers_disk(center, 3.0 * m) {
        return Err(Error::WindowTooSmall(format!("D_3M around site {site:?}")));
    }
    let local = config.restrict(center, 3.0 * m);
    if !event_u_occurs(&local, &config.marks, phi, center, params.k, m / 3.0) {
        return Ok(false);
    }
    let labels = component_labels(&build_edges_with(&local, phi, &config.marks));
    let neighbours = [
        [center[0] + m, center[1]],
        [center[0] - m, center[1]],
        [center[0], center[1] + m],
        [center[0], center[1] - m],
    ];
    Ok(joined(&local, &labels, center, &neighbours, params.k).into_iter().all(|b| b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockFieldSample {
    pub grid: GridExtent,
    pub params: BlockParams,
    pub seed: u64,
    /// Row-major, `values[j * nx + i]` for site `(x0 + i, y0 + j)`.
    pub values: Vec<u8>,
}

impl BlockFieldSample {
    pub fn value(&self, i: usize, j: usize) -> u8 {
        self.values[j * self.grid.nx + i]
    }

    pub fn density(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }

    /// Text dump: a parameter header, then one row of 0/1 per lattice row.
    pub fn write_grid<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# K={} M={} lambda={} x0={} y0={} nx={} ny={} seed={}",
            self.params.k,
            self.params.m,
            self.params.intensity,
            self.grid.x0,
            self.grid.y0,
            self.grid.nx,
            self.grid.ny,
            self.seed
        )?;
        for j in 0..self.grid.ny {
            let row: Vec<String> = (0..self.grid.nx).map(|i| self.value(i, j).to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Samples the block field on `grid` from one shared configuration.
pub fn block_field_sample(
    params: &BlockParams,
    phi: &ConnectionFunction,
    grid: &GridExtent,
    seed: u64,
) -> Result<BlockFieldSample> {
    if grid.is_empty() {
        return Err(invalid("grid", "must contain at least one site"));
    }
    let config = sample_block_configuration(params, grid, seed);
    block_field_from(&config, params, phi, grid, seed)
}

/// Evaluates the field on an existing configuration.
pub fn block_field_from(
    config: &BlockConfiguration,
    params: &BlockParams,
    phi: &ConnectionFunction,
    grid: &GridExtent,
    seed: u64,
) -> Result<BlockFieldSample> {
    use rayon::prelude::*;
    let sites: Vec<(i64, i64)> = grid.sites().collect();
    let values = sites
        .par_iter()
        .map(|&s| site_value(config, params, phi, s).map(u8::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockFieldSample {
        grid: *grid,
        params: *params,
        seed,
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub distance: usize,
    pub pairs_per_sample: usize,
    pub samples_used: usize,
    pub correlation: f64,
    /// Mean of the statistic under random relabelling of sites, the
    /// finite-grid value expected under independence.
    pub null_correlation: f64,
    pub sigma: f64,
    /// `|correlation - null_correlation| <= 3 sigma`.
    pub within_three_sigma: bool,
    /// For every pair beyond `distance`, the disks `D_{3M}` around the two
    /// sites are disjoint.
    pub regions_disjoint: bool,
}

/// Pearson correlation of `X_x, X_y` over site pairs at L-infinity
/// distance greater than `distance`, each pair counted in both orders.
///
/// A single sample is centred on its own mean and compared with the same
/// statistic over random permutations of its sites. Self-centring makes
/// the centred products over all pairs sum to minus the total variance, so
/// positive near-site correlation pushes the far-pair value below the
/// permutation reference; prefer several samples. Several independent
/// samples are centred on their pooled mean, with zero as the reference
/// and the spread across samples as the error bar.
pub fn dependence_check(samples: &[BlockFieldSample], distance: usize) -> Result<DependenceReport> {
    let first = samples.first().ok_or_else(|| invalid("samples", "need at least one sample"))?;
    let grid = first.grid;
    if samples.iter().any(|s| s.grid != grid || s.params != first.params) {
        return Err(invalid("samples", "samples must share grid and parameters"));
    }
    let sites: Vec<(i64, i64)> = (0..grid.ny as i64)
        .flat_map(|j| (0..grid.nx as i64).map(move |i| (i, j)))
        .collect();
    let mut pairs = Vec::new();
    for (a, &(xa, ya)) in sites.iter().enumerate() {
        for (b, &(xb, yb)) in sites.iter().enumerate().skip(a + 1) {
            if (xa - xb).abs().max((ya - yb).abs()) as usize > distance {
                pairs.push((a, b));
            }
        }
    }
    if pairs.len() < MIN_PAIRS {
        return Err(invalid(
            "grid",
            format!("{} site pairs beyond distance {distance}, need {MIN_PAIRS}", pairs.len()),
        ));
    }
    let m = first.params.m;
    let regions_disjoint = pairs.iter().all(|&(a, b)| {
        let (pa, pb) = (sites[a], sites[b]);
        let d = ((pa.0 - pb.0) as f64 * m).hypot((pa.1 - pb.1) as f64 * m);
        d > 6.0 * m
    });

    let fields: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.values.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let weights = pair_weights(grid.len(), &pairs);
    let (correlation, null_correlation, sigma, used) = if fields.len() == 1 {
        permutation_reference(&fields[0], &weights, &pairs, first.seed, distance)
    } else {
        pooled_reference(&fields, &weights, &pairs)
    };
    Ok(DependenceReport {
        distance,
        pairs_per_sample: pairs.len(),
        samples_used: used,
        correlation,
        null_correlation,
        sigma,
        within_three_sigma: (correlation - null_correlation).abs() <= 3.0 * sigma,
        regions_disjoint,
    })
}

const PERMUTATIONS: usize = 200;
const MIN_PAIRS: usize = 1_000;

fn pair_weights(sites: usize, pairs: &[(usize, usize)]) -> Vec<f64> {
    let mut weight = vec![0.0; sites];
    for &(a, b) in pairs {
        weight[a] += 1.0;
        weight[b] += 1.0;
    }
    weight
}

/// Weighted mean and variance of site values, each site weighted by its
/// number of far partners.
fn weighted_moments<X: AsRef<[f64]>>(fields: &[X], weights: &[f64]) -> (f64, f64) {
    let total = weights.iter().sum::<f64>() * fields.len() as f64;
    let mean = fields
        .iter()
        .map(|x| x.as_ref().iter().zip(weights).map(|(v, w)| v * w).sum::<f64>())
        .sum::<f64>()
        / total;
    let var = fields
        .iter()
        .map(|x| x.as_ref().iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>())
        .sum::<f64>()
        / total;
    (mean, var)
}

/// Pair correlation around a given centre and scale.
fn centred_correlation(x: &[f64], pairs: &[(usize, usize)], mean: f64, var: f64) -> f64 {
    let cov = pairs.iter().map(|&(a, b)| (x[a] - mean) * (x[b] - mean)).sum::<f64>() / pairs.len() as f64;
    cov / var
}

/// One sample: the statistic centred on its own mean, referenced to its
/// distribution under random relabelling of the sites.
fn permutation_reference(
    x: &[f64],
    weights: &[f64],
    pairs: &[(usize, usize)],
    seed: u64,
    distance: usize,
) -> (f64, f64, f64, usize) {
    let own = |v: &[f64]| {
        let (mean, var) = weighted_moments(&[v], weights);
        (var > 0.0).then(|| centred_correlation(v, pairs, mean, var))
    };
    let Some(r) = own(x) else {
        return (0.0, 0.0, 0.0, 0);
    };
    let mut rng = StreamKey::new(seed, distance as u64).rng(StreamTag::Window, &[2]);
    let mut shuffled = x.to_vec();
    let null: Vec<f64> = (0..PERMUTATIONS)
        .filter_map(|_| {
            shuffled.shuffle(&mut rng);
            own(&shuffled)
        })
        .collect();
    let (null_mean, null_var) = mean_var(&null);
    (r, null_mean, null_var.sqrt(), 1)
}

/// Several independent samples: the statistic centred on the pooled mean,
/// with the spread across samples as its error bar.
fn pooled_reference(fields: &[Vec<f64>], weights: &[f64], pairs: &[(usize, usize)]) -> (f64, f64, f64, usize) {
    let (mean, var) = weighted_moments(fields, weights);
    if var <= 0.0 {
        return (0.0, 0.0, 0.0, 0);
    }
    let per_sample: Vec<f64> = fields.iter().map(|x| centred_correlation(x, pairs, mean, var)).collect();
    let (r, spread) = mean_var(&per_sample);
    (r, 0.0, (spread / per_sample.len() as f64).sqrt(), per_sample.len())
}

/// Chi-square test that `P[X_x = 1]` is the same at every site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

pub fn site_homogeneity(samples: &[BlockFieldSample]) -> Result<HomogeneityReport> {
    let first = samples.first().ok_or_else(|| invalid("samples", "need at least one sample"))?;
    let sites = first.values.len();
    if sites < 2 || samples.len() < 2 {
        return Err(invalid("samples", "need two sites and two samples"));
    }
    let n = samples.len() as f64;
    let ones: Vec<f64> = (0..sites)
        .map(|i| samples.iter().map(|s| f64::from(s.values[i])).sum())
        .collect();
    let p = ones.iter().sum::<f64>() / (n * sites as f64);
    let dof = sites - 1;
    if p == 0.0 || p == 1.0 {
        return Ok(HomogeneityReport {
            chi_square: 0.0,
            degrees_of_freedom: dof,
            p_value: 1.0,
        });
    }
    let chi_square: f64 = ones
        .iter()
        .map(|&o| {
            let e1 = n * p;
            let e0 = n * (1.0 - p);
            (o - e1).powi(2) / e1 + ((n - o) - e0).powi(2) / e0
        })
        .sum();
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid("samples", e.to_string()))?;
    Ok(HomogeneityReport {
        chi_square,
        degrees_of_freedom: dof,
        p_value: 1.0 - dist.cdf(chi_square),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn disk() -> ConnectionFunction {
        ConnectionFunction::unit_disk()
    }

    #[test]
    fn spec_validation() {
        assert!(EventSpecU::new(2.0, 2.0, 1.0).is_err());
        assert!(EventSpecU::new(0.0, 2.0, 1.0).is_err());
        assert!(EventSpecF::new(2.0, 4.0, 1.0).is_err());
        assert!(EventSpecF::new(2.0, 4.5, 1.0).is_ok());
        assert!(BlockParams::new(2.0, 5.0, 1.0).is_err());
        assert!(BlockParams::new(2.0, 7.0, 1.0).is_ok());
    }

    #[test]
    fn zero_intensity_events() {
        let u = estimate_event_u(&EventSpecU::new(2.0, 6.0, 0.0).unwrap(), &disk(), 20, 1).unwrap();
        let f = estimate_event_f(&EventSpecF::new(2.0, 6.0, 0.0).unwrap(), &disk(), 20, 1).unwrap();
        assert_eq!((u.value, f.value), (0.0, 0.0));
        let field = block_field_sample(&BlockParams::new(1.0, 4.0, 0.0).unwrap(), &disk(), &GridExtent::square(3), 1).unwrap();
        assert!(field.values.iter().all(|&v| v == 0));
    }

    #[test]
    fn u_counts_crossing_components() {
        let marks = StreamKey::new(0, 0).edge_marks();
        let mut chain = KeyedPoints::default();
        for i in 0..7 {
            chain.push([0.6 + i as f64 * 0.9, 0.0], i);
        }
        assert!(event_u_occurs(&chain, &marks, &disk(), [0.0, 0.0], 1.0, 4.0));
        // a second crossing chain, more than one unit away from the first
        let mut two = chain.clone();
        for i in 0..7 {
            two.push([-0.6 - i as f64 * 0.9, 0.0], 100 + i);
        }
        let labels = component_labels(&build_edges_with(&two, &disk(), &marks));
        assert_ne!(labels[0], labels[7]);
        assert!(!event_u_occurs(&two, &marks, &disk(), [0.0, 0.0], 1.0, 4.0));
        // no crossing at all
        let mut short = KeyedPoints::default();
        short.push([0.0, 0.0], 0);
        assert!(!event_u_occurs(&short, &marks, &disk(), [0.0, 0.0], 1.0, 4.0));
    }

    #[test]
    fn u_is_not_increasing() {
        // A: crossing chain along +x; B: chain from D_1 along -x that stops
        // short of radius L. Adding one point extends B beyond L and creates
        // a second crossing component, so U flips from 1 to 0.
        let marks = StreamKey::new(0, 0).edge_marks();
        let mut pts = KeyedPoints::default();
        for i in 0..6 {
            pts.push([0.6 + i as f64 * 0.9, 0.0], i);
        }
        for i in 0..4 {
            pts.push([-0.6 - i as f64 * 0.9, 0.0], 10 + i);
        }
        let (k, l) = (1.0, 4.0);
        assert!(event_u_occurs(&pts, &marks, &disk(), [0.0, 0.0], k, l));
        pts.push([-4.2, 0.0], 99);
        assert!(!event_u_occurs(&pts, &marks, &disk(), [0.0, 0.0], k, l));
    }

    #[test]
    fn f_is_increasing_under_added_points() {
        let phi = ConnectionFunction::linear_ramp(1.0).unwrap();
        let spec = EventSpecF::new(1.0, 4.0, 2.2).unwrap();
        for r in 0..40 {
            let stream = StreamKey::new(17, r);
            let window = 3.0 * spec.m;
            let mut pts = sample_disk(&mut stream.rng(StreamTag::Window, &[]), spec.intensity, [0.0, 0.0], window);
            let marks = stream.edge_marks();
            let before = event_f_occurs(&pts, &marks, &phi, [0.0, 0.0], [spec.m, 0.0], spec.k, window);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(r);
            for extra in 0..20u64 {
                let p = [rng.random_range(-1.0..5.0), rng.random_range(-2.0..2.0)];
                pts.push(p, 1_000_000 + extra);
                let after = event_f_occurs(&pts, &marks, &phi, [0.0, 0.0], [spec.m, 0.0], spec.k, window);
                assert!(!before || after, "F flipped from 1 to 0");
            }
        }
    }

    #[test]
    fn site_value_is_local() {
        let params = BlockParams::new(1.5, 6.0, 1.8).unwrap();
        let grid = GridExtent::square(3);
        let config = sample_block_configuration(&params, &grid, 5);
        let site = (1, 1);
        let center = [6.0, 6.0];
        let before = site_value(&config, &params, &disk(), site).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut perturbed = KeyedPoints::default();
        for (i, &p) in config.points.positions.iter().enumerate() {
            if dist(p, center) <= 18.0 {
                perturbed.push(p, config.points.keys[i]);
            } else if rng.random::<f64>() < 0.5 {
                // move outside points around, keep them outside the disk
                let q = [p[0] + rng.random_range(-0.3..0.3), p[1] + rng.random_range(-0.3..0.3)];
                if dist(q, center) > 18.0 {
                    perturbed.push(q, config.points.keys[i] + 7_000_000);
                }
            }
        }
        for extra in 0..500u64 {
            let q = [rng.random_range(config.lo[0]..config.hi[0]), rng.random_range(config.lo[1]..config.hi[1])];
            if dist(q, center) > 18.0 {
                perturbed.push(q, 9_000_000 + extra);
            }
        }
        let other = BlockConfiguration::new(perturbed, config.marks, config.lo, config.hi, params.m);
        assert_eq!(site_value(&other, &params, &disk(), site).unwrap(), before);
    }

    #[test]
    fn window_too_small_is_rejected() {
        let params = BlockParams::new(1.0, 4.0, 1.0).unwrap();
        let config = sample_block_configuration(&params, &GridExtent::square(2), 0);
        assert!(matches!(
            site_value(&config, &params, &disk(), (5, 5)),
            Err(Error::WindowTooSmall(_))
        ));
        assert!(block_field_sample(&params, &disk(), &GridExtent { x0: 0, y0: 0, nx: 0, ny: 3 }, 0).is_err());
    }

    #[test]
    fn dependence_structure() {
        let params = BlockParams::new(1.0, 4.0, 1.6).unwrap();
        let grid = GridExtent::square(12);
        let sample = block_field_sample(&params, &disk(), &grid, 3).unwrap();
        let far = dependence_check(std::slice::from_ref(&sample), 7).unwrap();
        assert!(far.regions_disjoint);
        assert!(far.pairs_per_sample >= 1000);
        let near = dependence_check(std::slice::from_ref(&sample), 0).unwrap();
        assert!(!near.regions_disjoint);
        let mut buf = Vec::new();
        sample.write_grid(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# K=1 M=4"));
        assert_eq!(text.lines().count(), 13);
    }
}
