//! Monte Carlo estimators built on the graph and growth engines.
//!
//! Every estimator is a pure function of its arguments. Replicates run in
//! parallel on the ambient rayon pool; each replicate draws only from its
//! own keyed streams and results are collected in replicate order, so the
//! output does not depend on the number of worker threads.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::graph::{build_edges, component_labels, connected_components, giant_fraction};
use crate::growth::{grow_origin_in_plane, ClusterStatus, GrowthOptions, StoppingRule};
use crate::model::{norm, sample_points, BoxSpec, ConnectionFunction, PalmPointSet, PointSet, VertexSet};
use crate::rng::{hash_str, hash_words, StreamKey};
use crate::stats::{combined_sigma, mean_var, median, EstimateWithCI};

/// Seed of an independent sub-experiment, keyed by a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    hash_words(&[seed, hash_str(label)])
}

pub(crate) fn par_replicates<T, F>(replicates: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..replicates as u64).into_par_iter().map(f).collect()
}

/// Outcome of one origin-cluster exploration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaOutcome {
    pub replicate: u64,
    pub status: ClusterStatus,
    pub cluster_size: usize,
}

/// Percolation probability estimate and the finite-cluster size law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub intensity: f64,
    pub rule: StoppingRule,
    /// Frequency of escaped or size-capped explorations.
    pub theta_hat: EstimateWithCI,
    pub escaped_frequency: f64,
    pub capped_frequency: f64,
    /// `k -> frequency` of exhausted clusters of order exactly `k`.
    pub pi_hat: BTreeMap<usize, f64>,
    pub outcomes: Vec<ThetaOutcome>,
}

impl ThetaEstimate {
    /// `pi_hat(k)` for `k <= k_report`.
    pub fn pi_up_to(&self, k_report: usize) -> BTreeMap<usize, f64> {
        self.pi_hat.range(..=k_report).map(|(&k, &v)| (k, v)).collect()
    }
}

/// Estimates `theta(phi, lambda)` from Palm-origin explorations of the
/// whole-plane model, counting escaped and capped runs as infinite.
pub fn estimate_theta(
    phi: &ConnectionFunction,
    intensity: f64,
    rule: &StoppingRule,
    replicates: usize,
    seed: u64,
) -> Result<ThetaEstimate> {
    require_nonnegative("lambda", intensity)?;
    if replicates < 100 {
        return Err(invalid("replicates", format!("need at least 100, got {replicates}")));
    }
    if !rule.escape_radius.is_finite() {
        return Err(invalid("rmax_escape", "must be finite for whole-plane exploration"));
    }
    let options = GrowthOptions::default();
    let outcomes = par_replicates(replicates, |r| {
        let res = grow_origin_in_plane(intensity, phi, rule, StreamKey::new(seed, r), &options)?;
        Ok(ThetaOutcome {
            replicate: r,
            status: res.status,
            cluster_size: res.size(),
        })
    })?;
    let n = replicates as f64;
    let unbounded: Vec<bool> = outcomes.iter().map(|o| o.status.is_unbounded()).collect();
    let escaped = outcomes.iter().filter(|o| o.status == ClusterStatus::Escaped).count();
    let capped = outcomes.iter().filter(|o| o.status == ClusterStatus::SizeCapped).count();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.status == ClusterStatus::Exhausted) {
        *counts.entry(o.cluster_size).or_insert(0) += 1;
    }
    Ok(ThetaEstimate {
        intensity,
        rule: *rule,
        theta_hat: EstimateWithCI::from_indicators(&unbounded, seed)?,
        escaped_frequency: escaped as f64 / n,
        capped_frequency: capped as f64 / n,
        pi_hat: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        outcomes,
    })
}

/// Per-replicate normalized component orders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiantRow {
    pub replicate: u64,
    pub l1_frac: f64,
    pub l2_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiantStatistics {
    pub intensity: f64,
    pub side: f64,
    pub rows: Vec<GiantRow>,
    /// Absent when fewer than two replicates were run.
    pub l1: Option<EstimateWithCI>,
    pub l2: Option<EstimateWithCI>,
    pub median_l1: f64,
}

/// Runs `giant_fraction` over independent replicates of `H_{lambda,s}`.
pub fn giant_statistics(
    phi: &ConnectionFunction,
    intensity: f64,
    side: f64,
    replicates: usize,
    seed: u64,
) -> Result<GiantStatistics> {
    let bounds = BoxSpec::new(side)?;
    require_nonnegative("lambda", intensity)?;
    if replicates == 0 {
        return Err(invalid("replicates", "must be at least 1"));
    }
    let rows = par_replicates(replicates, |r| {
        let pts = sample_points(intensity, bounds, seed, r)?;
        let (l1_frac, l2_frac) = giant_fraction(&pts, phi);
        Ok(GiantRow {
            replicate: r,
            l1_frac,
            l2_frac,
        })
    })?;
    let l1s: Vec<f64> = rows.iter().map(|r| r.l1_frac).collect();
    let l2s: Vec<f64> = rows.iter().map(|r| r.l2_frac).collect();
    Ok(GiantStatistics {
        intensity,
        side,
        median_l1: median(&l1s),
        l1: EstimateWithCI::from_samples(&l1s, seed).ok(),
        l2: EstimateWithCI::from_samples(&l2s, seed).ok(),
        rows,
    })
}

/// Two-sided Monte Carlo comparison of the sides of a Mecke identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeckeReport {
    pub lhs: EstimateWithCI,
    pub rhs: EstimateWithCI,
    /// Combined standard error of `lhs - rhs`.
    pub sigma: f64,
    pub compatible: bool,
}

impl MeckeReport {
    fn new(lhs: EstimateWithCI, rhs: EstimateWithCI, allowance: f64) -> Self {
        let sigma = combined_sigma(&lhs, &rhs);
        Self {
            compatible: (lhs.value - rhs.value).abs() <= 3.0 * sigma + allowance,
            lhs,
            rhs,
            sigma,
        }
    }

    /// `lhs - rhs` in units of the combined standard error.
    pub fn z_score(&self) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            (self.lhs.value - self.rhs.value) / self.sigma
        }
    }
}

fn check_box_and_radius(side: f64, radius: f64) -> Result<BoxSpec> {
    let b = BoxSpec::new(side)?;
    require_nonnegative("K", radius)?;
    if radius >= b.half() {
        return Err(invalid("K", format!("must be < s/2 = {}", b.half())));
    }
    Ok(b)
}

/// Vertices of `v` whose component contains a vertex in `D_radius`.
fn connected_to_disk<V: VertexSet>(v: &V, labels: &[usize], radius: f64) -> Vec<bool> {
    let hit: HashSet<usize> = (0..v.len())
        .filter(|&i| norm(v.position(i)) <= radius)
        .map(|i| labels[i])
        .collect();
    labels.iter().map(|l| hit.contains(l)).collect()
}

/// First-order Mecke check with `f(x, G) = 1{{x} <-> D_K}`:
/// `E N_s` against `lambda s^2 P[{V_s} <-> D_K in G(H^{V_s})]`.
pub fn mecke_check_ns(
    phi: &ConnectionFunction,
    intensity: f64,
    radius: f64,
    side: f64,
    replicates: usize,
    seed: u64,
) -> Result<MeckeReport> {
    let bounds = check_box_and_radius(side, radius)?;
    require_nonnegative("lambda", intensity)?;
    let lhs_seed = derive_seed(seed, "mecke-ns-lhs");
    let rhs_seed = derive_seed(seed, "mecke-ns-rhs");
    let counts = par_replicates(replicates, |r| {
        let pts = sample_points(intensity, bounds, lhs_seed, r)?;
        let labels = component_labels(&build_edges(&pts, phi));
        Ok(connected_to_disk(&pts, &labels, radius).into_iter().filter(|&b| b).count() as f64)
    })?;
    let hits = par_replicates(replicates, |r| {
        let palm = PalmPointSet::with_uniform(sample_points(intensity, bounds, rhs_seed, r)?, 1)?;
        let labels = component_labels(&build_edges(&palm, phi));
        Ok(connected_to_disk(&palm, &labels, radius)[palm.added_index(0)])
    })?;
    let lhs = EstimateWithCI::from_samples(&counts, lhs_seed)?;
    let rhs = EstimateWithCI::from_indicators(&hits, rhs_seed)?.scaled(intensity * bounds.area());
    Ok(MeckeReport::new(lhs, rhs, 0.0))
}

/// Second-order Mecke check plus the asymptotic factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondMeckeReport {
    /// `E[N'_s (N'_s - 1)]` against `lambda^2 s^4 P[both Palm clusters >= s^{1/2}]`.
    pub identity: MeckeReport,
    /// `P[|C_{V_s}| >= s^{1/2}]` from an independent single-Palm run.
    pub theta_s: EstimateWithCI,
    /// `P[both >= s^{1/2}]`, i.e. the right side divided by `lambda^2 s^4`.
    pub joint: EstimateWithCI,
    /// `|joint - theta_s^2|`.
    pub factorization_gap: f64,
    pub factorization_sigma: f64,
    pub factorization_ok: bool,
}

/// Finite-size allowance on the factorization `P[both] ≈ theta_s^2`.
pub const FACTORIZATION_ALLOWANCE: f64 = 0.02;

pub fn mecke_check_second(
    phi: &ConnectionFunction,
    intensity: f64,
    side: f64,
    replicates: usize,
    seed: u64,
) -> Result<SecondMeckeReport> {
    let bounds = BoxSpec::new(side)?;
    require_nonnegative("lambda", intensity)?;
    let threshold = side.sqrt();
    let lhs_seed = derive_seed(seed, "mecke-second-lhs");
    let rhs_seed = derive_seed(seed, "mecke-second-rhs");
    let single_seed = derive_seed(seed, "mecke-second-single");

    let pair_counts = par_replicates(replicates, |r| {
        let pts = sample_points(intensity, bounds, lhs_seed, r)?;
        let summary = connected_components(&build_edges(&pts, phi), pts.len(), false);
        let n: usize = summary.sizes.iter().filter(|&&k| k as f64 >= threshold).sum();
        Ok(n as f64 * (n as f64 - 1.0).max(0.0))
    })?;
    let both = par_replicates(replicates, |r| {
        let palm = PalmPointSet::with_uniform(sample_points(intensity, bounds, rhs_seed, r)?, 2)?;
        let sizes = palm_cluster_sizes(&palm, phi);
        Ok(sizes.iter().all(|&k| k as f64 >= threshold))
    })?;
    let single = par_replicates(replicates, |r| {
        let palm = PalmPointSet::with_uniform(sample_points(intensity, bounds, single_seed, r)?, 1)?;
        Ok(palm_cluster_sizes(&palm, phi)[0] as f64 >= threshold)
    })?;

    let scale = (intensity * bounds.area()).powi(2);
    let lhs = EstimateWithCI::from_samples(&pair_counts, lhs_seed)?;
    let joint = EstimateWithCI::from_indicators(&both, rhs_seed)?;
    let theta_s = EstimateWithCI::from_indicators(&single, single_seed)?;
    let identity = MeckeReport::new(lhs, joint.scaled(scale), 0.0);

    let gap = (joint.value - theta_s.value * theta_s.value).abs();
    let sigma = joint.std_error.hypot(2.0 * theta_s.value * theta_s.std_error);
    Ok(SecondMeckeReport {
        identity,
        theta_s,
        joint,
        factorization_gap: gap,
        factorization_sigma: sigma,
        factorization_ok: gap <= 3.0 * sigma + FACTORIZATION_ALLOWANCE,
    })
}

/// Orders of the components containing each Palm point.
fn palm_cluster_sizes(palm: &PalmPointSet, phi: &ConnectionFunction) -> Vec<usize> {
    let labels = component_labels(&build_edges(palm, phi));
    let mut size_of: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in &labels {
        *size_of.entry(l).or_insert(0) += 1;
    }
    (0..palm.added.len())
        .map(|j| size_of[&labels[palm.added_index(j)]])
        .collect()
}

/// An increasing functional of the graph on `H_{lambda,s}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum GraphEvent {
    /// `{L_1 >= min_order}`.
    LargestAtLeast { min_order: usize },
    /// `{D_radius <-> boundary}`: a component meets both `D_radius` and the
    /// strip of width `r_max` along the box boundary.
    DiskToBoundary { radius: f64 },
}

impl GraphEvent {
    fn evaluate(&self, pts: &PointSet, phi: &ConnectionFunction, labels: &[usize]) -> bool {
        match *self {
            GraphEvent::LargestAtLeast { min_order } => {
                let mut count: BTreeMap<usize, usize> = BTreeMap::new();
                for &l in labels {
                    *count.entry(l).or_insert(0) += 1;
                }
                let l1 = count.values().copied().max().unwrap_or(0);
                l1 >= min_order
            }
            GraphEvent::DiskToBoundary { radius } => {
                let inside = connected_to_disk(pts, labels, radius);
                (0..pts.len()).any(|i| {
                    inside[i] && pts.bounds.distance_to_boundary(pts.points[i]) <= phi.range()
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub first: GraphEvent,
    pub second: GraphEvent,
    pub p_first: f64,
    pub p_second: f64,
    pub covariance: f64,
    pub std_error: f64,
    /// `covariance >= -3 std_error`.
    pub nonnegative: bool,
}

/// Empirical covariance of pairs of increasing events; positive association
/// predicts each is nonnegative.
pub fn fkg_sanity(
    phi: &ConnectionFunction,
    intensity: f64,
    side: f64,
    pairs: &[(GraphEvent, GraphEvent)],
    replicates: usize,
    seed: u64,
) -> Result<Vec<CovarianceReport>> {
    let bounds = BoxSpec::new(side)?;
    require_nonnegative("lambda", intensity)?;
    if replicates < 2 {
        return Err(invalid("replicates", "need at least 2"));
    }
    let rows = par_replicates(replicates, |r| {
        let pts = sample_points(intensity, bounds, seed, r)?;
        let labels = component_labels(&build_edges(&pts, phi));
        Ok(pairs
            .iter()
            .map(|(a, b)| (a.evaluate(&pts, phi, &labels), b.evaluate(&pts, phi, &labels)))
            .collect::<Vec<_>>())
    })?;
    let n = replicates as f64;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let xs: Vec<f64> = rows.iter().map(|row| f64::from(u8::from(row[k].0))).collect();
            let ys: Vec<f64> = rows.iter().map(|row| f64::from(u8::from(row[k].1))).collect();
            let (mx, _) = mean_var(&xs);
            let (my, _) = mean_var(&ys);
            let prods: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect();
            let covariance = prods.iter().sum::<f64>() / (n - 1.0);
            let (_, var_prod) = mean_var(&prods);
            let std_error = (var_prod / n).sqrt();
            CovarianceReport {
                first: *a,
                second: *b,
                p_first: mx,
                p_second: my,
                covariance,
                std_error,
                nonnegative: covariance >= -3.0 * std_error,
            }
        })
        .collect())
}

/// Finite-size criterion located by `estimate_lambda_c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "kebab-case")]
pub enum CrossingCriterion {
    /// `theta_hat` with escape radius `s/2` crossing `tau`.
    Theta { tau: f64, max_size: usize },
    /// Probability that some component meets both the left and the right
    /// boundary strips of `B(s)` crossing `target`.
    Spanning { target: f64 },
}

impl Default for CrossingCriterion {
    fn default() -> Self {
        CrossingCriterion::Spanning { target: 0.5 }
    }
}

impl CrossingCriterion {
    pub fn target(&self) -> f64 {
        match *self {
            CrossingCriterion::Theta { tau, .. } => tau,
            CrossingCriterion::Spanning { target } => target,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            CrossingCriterion::Theta { tau, max_size } => {
                format!("theta_hat(lambda; R_max = s/2, k_max = {max_size}) = {tau}")
            }
            CrossingCriterion::Spanning { target } => {
                format!("P[left-right spanning component in B(s)] = {target}")
            }
        }
    }

    /// One replicate's indicator at intensity `lambda` and box side `side`.
    fn indicator(&self, phi: &ConnectionFunction, intensity: f64, side: f64, stream: StreamKey) -> Result<bool> {
        match *self {
            CrossingCriterion::Theta { max_size, .. } => {
                let rule = StoppingRule::new(max_size, 0.5 * side)?;
                let res = grow_origin_in_plane(intensity, phi, &rule, stream, &GrowthOptions::default())?;
                Ok(res.status.is_unbounded())
            }
            CrossingCriterion::Spanning { .. } => {
                let pts = sample_points(intensity, BoxSpec::new(side)?, stream.seed, stream.replicate)?;
                Ok(spans_left_right(&pts, phi))
            }
        }
    }
}

/// Whether a component meets both vertical boundary strips of width `r_max`.
pub fn spans_left_right(pts: &PointSet, phi: &ConnectionFunction) -> bool {
    let labels = component_labels(&build_edges(pts, phi));
    let edge = pts.bounds.half() - phi.range();
    let left: HashSet<usize> = (0..pts.len())
        .filter(|&i| pts.points[i][0] <= -edge)
        .map(|i| labels[i])
        .collect();
    (0..pts.len()).any(|i| pts.points[i][0] >= edge && left.contains(&labels[i]))
}

/// Search settings for `estimate_lambda_c`. Intensities and the stopping
/// width are in units of `1 / r_max^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub max_iterations: usize,
    pub replicates: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self {
            lower: 0.5,
            upper: 3.0,
            width: 0.05,
            max_iterations: 12,
            replicates: 400,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionPoint {
    pub intensity: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeCrossing {
    pub side: f64,
    pub lower: f64,
    pub upper: f64,
    pub evaluations: Vec<CriterionPoint>,
}

impl SizeCrossing {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCBracket {
    pub lower: f64,
    pub upper: f64,
    pub criterion: String,
    pub per_size: Vec<SizeCrossing>,
    /// Crossing midpoints across sizes agree within the largest width.
    pub sizes_agree: bool,
}

impl LambdaCBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Brackets the critical intensity by bisecting a finite-size criterion at
/// each box side in `s_grid` and merging the per-size brackets.
pub fn estimate_lambda_c(
    phi: &ConnectionFunction,
    s_grid: &[f64],
    criterion: &CrossingCriterion,
    seed: u64,
    options: &BisectionOptions,
) -> Result<LambdaCBracket> {
    if s_grid.len() < 2 {
        return Err(invalid("s", "need at least two box sizes"));
    }
    for &s in s_grid {
        require_positive("s", s)?;
    }
    let target = criterion.target();
    if !(0.0 < target && target < 1.0) {
        return Err(invalid("tau", format!("must lie in (0, 1), got {target}")));
    }
    if !(options.lower > 0.0 && options.lower < options.upper) {
        return Err(invalid("lambda", "initial bracket must satisfy 0 < lower < upper"));
    }
    if options.replicates < 2 {
        return Err(invalid("replicates", "need at least 2"));
    }
    let unit = 1.0 / (phi.range() * phi.range());

    let mut per_size = Vec::with_capacity(s_grid.len());
    for &side in s_grid {
        let size_seed = hash_words(&[seed, side.to_bits()]);
        let evaluate = |intensity: f64| -> Result<CriterionPoint> {
            let hits = par_replicates(options.replicates, |r| {
                criterion.indicator(phi, intensity, side, StreamKey::new(size_seed, r))
            })?;
            let est = EstimateWithCI::from_indicators(&hits, size_seed)?;
            Ok(CriterionPoint {
                intensity,
                value: est.value,
                std_error: est.std_error,
            })
        };
        let (mut lo, mut hi) = (options.lower * unit, options.upper * unit);
        let mut evaluations = vec![evaluate(lo)?, evaluate(hi)?];
        if evaluations[0].value >= target || evaluations[1].value <= target {
            return Err(Error::NonMonotone(format!(
                "s = {side}: criterion does not cross {target} on [{lo}, {hi}] ({} -> {})",
                evaluations[0].value, evaluations[1].value
            )));
        }
        let mut iterations = 0;
        while hi - lo > options.width * unit && iterations < options.max_iterations {
            let mid = 0.5 * (lo + hi);
            let point = evaluate(mid)?;
            if point.value < target {
                lo = mid;
            } else {
                hi = mid;
            }
            evaluations.push(point);
            iterations += 1;
        }
        check_monotone(side, &evaluations)?;
        per_size.push(SizeCrossing {
            side,
            lower: lo,
            upper: hi,
            evaluations,
        });
    }

    let lower = per_size.iter().map(|c| c.lower).fold(f64::INFINITY, f64::min);
    let upper = per_size.iter().map(|c| c.upper).fold(f64::NEG_INFINITY, f64::max);
    let max_width = per_size.iter().map(SizeCrossing::width).fold(0.0, f64::max);
    let mids: Vec<f64> = per_size.iter().map(SizeCrossing::midpoint).collect();
    let spread = mids.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - mids.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LambdaCBracket {
        lower,
        upper,
        criterion: criterion.describe(),
        per_size,
        sizes_agree: spread <= max_width,
    })
}

fn check_monotone(side: f64, evaluations: &[CriterionPoint]) -> Result<()> {
    let mut sorted = evaluations.to_vec();
    sorted.sort_by(|a, b| a.intensity.total_cmp(&b.intensity));
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            let tol = 3.0 * a.std_error.hypot(b.std_error);
            if a.value > b.value + tol {
                return Err(Error::NonMonotone(format!(
                    "s = {side}: value {} at lambda {} exceeds {} at lambda {}",
                    a.value, a.intensity, b.value, b.intensity
                )));
            }
        }
    }
    Ok(())
}
