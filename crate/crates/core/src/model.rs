//! Connection functions, box geometry and Poisson sampling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::rng::{StreamKey, StreamTag};

/// Key bit marking Palm (added) vertices, keeping them disjoint from base
/// vertex indices.
pub const PALM_TAG: u64 = 1 << 63;

pub type Point = [f64; 2];

#[inline]
pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The square `B(s) = [-s/2, s/2]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    side: f64,
}

impl BoxSpec {
    pub fn new(side: f64) -> Result<Self> {
        require_positive("s", side)?;
        Ok(Self { side })
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn half(&self) -> f64 {
        0.5 * self.side
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn contains(&self, p: Point) -> bool {
        let h = self.half();
        p[0].abs() <= h && p[1].abs() <= h
    }

    /// L-infinity distance from `p` to the box boundary (for points inside).
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.half() - p[0].abs().max(p[1].abs())
    }
}

/// Serialized form of a connection function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhiKind {
    /// `1{r <= radius}`.
    HardDisk { radius: f64 },
    /// `max(0, 1 - r / range)`.
    LinearRamp { range: f64 },
    /// `amplitude * exp(-r / scale)` for `r <= cutoff`, zero beyond.
    TruncatedExponential {
        amplitude: f64,
        scale: f64,
        cutoff: f64,
    },
    /// Piecewise constant: value `v_i` on `(b_{i-1}, b_i]` with `b_0 = 0`
    /// (the first value also covers `r = 0`), zero beyond the last breakpoint.
    StepTable { steps: Vec<(f64, f64)> },
}

/// A validated nonincreasing connection function with finite range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhiKind", into = "PhiKind")]
pub struct ConnectionFunction {
    kind: PhiKind,
    range: f64,
}

impl ConnectionFunction {
    pub fn hard_disk(radius: f64) -> Result<Self> {
        Self::new(PhiKind::HardDisk { radius })
    }

    /// The Gilbert disk model `1_{[0,1]}`.
    pub fn unit_disk() -> Self {
        Self::hard_disk(1.0).expect("unit disk is valid")
    }

    pub fn linear_ramp(range: f64) -> Result<Self> {
        Self::new(PhiKind::LinearRamp { range })
    }

    pub fn truncated_exponential(amplitude: f64, scale: f64, cutoff: f64) -> Result<Self> {
        Self::new(PhiKind::TruncatedExponential {
            amplitude,
            scale,
            cutoff,
        })
    }

    pub fn step_table(steps: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(PhiKind::StepTable { steps })
    }

    pub fn new(kind: PhiKind) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConnectionFunction(msg);
        let range = match &kind {
            PhiKind::HardDisk { radius } => {
                require_positive("phi.radius", *radius)?;
                *radius
            }
            PhiKind::LinearRamp { range } => {
                require_positive("phi.range", *range)?;
                *range
            }
            PhiKind::TruncatedExponential {
                amplitude,
                scale,
                cutoff,
            } => {
                if !(amplitude.is_finite() && *amplitude > 0.0 && *amplitude <= 1.0) {
                    return Err(bad(format!("amplitude must lie in (0, 1], got {amplitude}")));
                }
                require_positive("phi.scale", *scale)?;
                require_positive("phi.cutoff", *cutoff)?;
                *cutoff
            }
            PhiKind::StepTable { steps } => {
                if steps.is_empty() {
                    return Err(bad("step table is empty".into()));
                }
                let mut prev_b = 0.0;
                let mut prev_v = 1.0;
                let mut range = 0.0;
                for &(b, v) in steps {
                    if !b.is_finite() || b <= prev_b {
                        return Err(bad(format!(
                            "breakpoints must be finite, positive and strictly increasing (at {b})"
                        )));
                    }
                    if !(0.0..=1.0).contains(&v) {
                        return Err(bad(format!("value {v} outside [0, 1]")));
                    }
                    if v > prev_v {
                        return Err(bad(format!("not nonincreasing: {v} follows {prev_v}")));
                    }
                    if v > 0.0 {
                        range = b;
                    }
                    prev_b = b;
                    prev_v = v;
                }
                if range == 0.0 {
                    return Err(bad("range is empty: every value is zero".into()));
                }
                range
            }
        };
        let phi = Self { kind, range };
        if !matches!(phi.kind, PhiKind::StepTable { .. }) {
            phi.check_monotone_on_grid(4096)?;
        }
        Ok(phi)
    }

    fn check_monotone_on_grid(&self, n: usize) -> Result<()> {
        let mut prev = self.eval_unchecked(0.0);
        if !(0.0..=1.0).contains(&prev) {
            return Err(Error::InvalidConnectionFunction(format!("phi(0) = {prev}")));
        }
        for i in 1..=n {
            let r = 1.25 * self.range * i as f64 / n as f64;
            let v = self.eval_unchecked(r);
            if v > prev || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConnectionFunction(format!(
                    "grid check failed at r = {r}"
                )));
            }
            prev = v;
        }
        Ok(())
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    /// `sup{r : phi(r) > 0}`.
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Evaluates `phi(r)`; rejects negative or non-finite `r`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        require_nonnegative("r", r)?;
        Ok(self.eval_unchecked(r))
    }

    /// `phi(r)` without input validation; `r` must be a distance.
    #[inline]
    pub fn eval_unchecked(&self, r: f64) -> f64 {
        if r > self.range {
            return 0.0;
        }
        match &self.kind {
            PhiKind::HardDisk { .. } => 1.0,
            PhiKind::LinearRamp { range } => (1.0 - r / range).max(0.0),
            PhiKind::TruncatedExponential {
                amplitude, scale, ..
            } => amplitude * (-r / scale).exp(),
            PhiKind::StepTable { steps } => {
                let i = steps.partition_point(|&(b, _)| b < r);
                steps.get(i).map_or(0.0, |&(_, v)| v)
            }
        }
    }

    /// `2 pi * integral_0^range phi(r) r dr`, the integral of `phi(|x|)` over the plane.
    pub fn integral(&self) -> f64 {
        let radial = match &self.kind {
            PhiKind::HardDisk { radius } => 0.5 * radius * radius,
            PhiKind::LinearRamp { range } => range * range / 6.0,
            PhiKind::TruncatedExponential {
                amplitude,
                scale,
                cutoff,
            } => {
                let t = cutoff / scale;
                amplitude * scale * scale * (1.0 - (-t).exp() * (1.0 + t))
            }
            PhiKind::StepTable { steps } => {
                let mut prev = 0.0;
                let mut acc = 0.0;
                for &(b, v) in steps {
                    acc += 0.5 * v * (b * b - prev * prev);
                    prev = b;
                }
                acc
            }
        };
        2.0 * PI * radial
    }

    /// Returns `phi(r / c)`, whose range is `c` times this one's.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        require_positive("scale factor", c)?;
        let kind = match &self.kind {
            PhiKind::HardDisk { radius } => PhiKind::HardDisk { radius: radius * c },
            PhiKind::LinearRamp { range } => PhiKind::LinearRamp { range: range * c },
            PhiKind::TruncatedExponential {
                amplitude,
                scale,
                cutoff,
            } => PhiKind::TruncatedExponential {
                amplitude: *amplitude,
                scale: scale * c,
                cutoff: cutoff * c,
            },
            PhiKind::StepTable { steps } => PhiKind::StepTable {
                steps: steps.iter().map(|&(b, v)| (b * c, v)).collect(),
            },
        };
        Self::new(kind)
    }
}

impl TryFrom<PhiKind> for ConnectionFunction {
    type Error = Error;

    fn try_from(kind: PhiKind) -> Result<Self> {
        Self::new(kind)
    }
}

impl From<ConnectionFunction> for PhiKind {
    fn from(phi: ConnectionFunction) -> Self {
        phi.kind
    }
}

impl fmt::Display for ConnectionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PhiKind::HardDisk { radius } => write!(f, "hard-disk:{radius}"),
            PhiKind::LinearRamp { range } => write!(f, "linear-ramp:{range}"),
            PhiKind::TruncatedExponential {
                amplitude,
                scale,
                cutoff,
            } => write!(f, "truncated-exponential:{amplitude},{scale},{cutoff}"),
            PhiKind::StepTable { steps } => {
                write!(f, "step-table:")?;
                for (i, (b, v)) in steps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{b}={v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses the compact form used on the command line, e.g. `hard-disk`,
/// `hard-disk:2`, `linear-ramp:1`, `truncated-exponential:0.9,0.5,1`,
/// `step-table:0.5=1,1=0.5`.
impl FromStr for ConnectionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (s.trim(), ""),
        };
        let bad = |msg: &str| Error::InvalidConnectionFunction(format!("`{s}`: {msg}"));
        let numbers = |a: &str| -> Result<Vec<f64>> {
            if a.is_empty() {
                return Ok(Vec::new());
            }
            a.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad("bad number")))
                .collect()
        };
        match name {
            "hard-disk" => match numbers(args)?.as_slice() {
                [] => Self::hard_disk(1.0),
                [r] => Self::hard_disk(*r),
                _ => Err(bad("expected at most one parameter")),
            },
            "linear-ramp" => match numbers(args)?.as_slice() {
                [] => Self::linear_ramp(1.0),
                [r] => Self::linear_ramp(*r),
                _ => Err(bad("expected at most one parameter")),
            },
            "truncated-exponential" => match numbers(args)?.as_slice() {
                [a, l, c] => Self::truncated_exponential(*a, *l, *c),
                _ => Err(bad("expected amplitude,scale,cutoff")),
            },
            "step-table" => {
                let steps = args
                    .split(',')
                    .map(|pair| {
                        let (b, v) = pair.split_once('=').ok_or_else(|| bad("expected b=v"))?;
                        let b = b.trim().parse().map_err(|_| bad("bad breakpoint"))?;
                        let v = v.trim().parse().map_err(|_| bad("bad value"))?;
                        Ok((b, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::step_table(steps)
            }
            _ => Err(bad("unknown kind")),
        }
    }
}

/// Mean degree of a typical vertex of the whole-plane model:
/// `lambda * integral of phi(|x|) dx`.
pub fn expected_degree(phi: &ConnectionFunction, intensity: f64) -> Result<f64> {
    require_nonnegative("lambda", intensity)?;
    Ok(intensity * phi.integral())
}

/// Something that carries a vertex list with stable keys.
pub trait VertexSet {
    fn len(&self) -> usize;
    fn position(&self, i: usize) -> Point;
    fn key(&self, i: usize) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A Poisson configuration in `B(s)` together with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub bounds: BoxSpec,
    pub intensity: f64,
    pub seed: u64,
    pub replicate: u64,
}

impl PointSet {
    pub fn stream(&self) -> StreamKey {
        StreamKey::new(self.seed, self.replicate)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl VertexSet for PointSet {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn position(&self, i: usize) -> Point {
        self.points[i]
    }

    fn key(&self, i: usize) -> u64 {
        i as u64
    }
}

/// A base configuration plus up to two deterministic extra vertices.
///
/// Vertex `i < base.len()` is base point `i`; the added points follow in
/// order and carry keys `PALM_TAG | j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PalmPointSet {
    pub base: PointSet,
    pub added: Vec<Point>,
}

impl PalmPointSet {
    pub fn new(base: PointSet, added: Vec<Point>) -> Result<Self> {
        if added.len() > 2 {
            return Err(invalid("added_points", "at most two Palm points"));
        }
        if let Some(p) = added.iter().find(|p| !base.bounds.contains(**p)) {
            return Err(invalid("added_points", format!("{p:?} lies outside B(s)")));
        }
        Ok(Self { base, added })
    }

    /// `H ∪ {o}`.
    pub fn with_origin(base: PointSet) -> Self {
        Self {
            base,
            added: vec![[0.0, 0.0]],
        }
    }

    /// Adds `count` independent uniform points of `B(s)`, drawn from the
    /// replicate's Palm stream.
    pub fn with_uniform(base: PointSet, count: usize) -> Result<Self> {
        let mut rng = base.stream().rng(StreamTag::Palm, &[]);
        let side = base.bounds.side();
        let added = (0..count)
            .map(|_| uniform_in_box(&mut rng, side))
            .collect();
        Self::new(base, added)
    }

    /// Vertex index of the `j`-th added point.
    pub fn added_index(&self, j: usize) -> usize {
        self.base.len() + j
    }
}

impl VertexSet for PalmPointSet {
    fn len(&self) -> usize {
        self.base.len() + self.added.len()
    }

    fn position(&self, i: usize) -> Point {
        let n = self.base.len();
        if i < n {
            self.base.points[i]
        } else {
            self.added[i - n]
        }
    }

    fn key(&self, i: usize) -> u64 {
        let n = self.base.len();
        if i < n {
            i as u64
        } else {
            PALM_TAG | (i - n) as u64
        }
    }
}

/// An arbitrary keyed vertex list (sub-windows, perturbed configurations).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyedPoints {
    pub positions: Vec<Point>,
    pub keys: Vec<u64>,
}

impl KeyedPoints {
    pub fn push(&mut self, p: Point, key: u64) {
        self.positions.push(p);
        self.keys.push(key);
    }

    /// The vertices of `source` satisfying `keep`, with their keys preserved.
    pub fn select<V: VertexSet + ?Sized>(source: &V, mut keep: impl FnMut(Point) -> bool) -> Self {
        let mut out = Self::default();
        for i in 0..source.len() {
            let p = source.position(i);
            if keep(p) {
                out.push(p, source.key(i));
            }
        }
        out
    }
}

impl VertexSet for KeyedPoints {
    fn len(&self) -> usize {
        self.positions.len()
    }

    fn position(&self, i: usize) -> Point {
        self.positions[i]
    }

    fn key(&self, i: usize) -> u64 {
        self.keys[i]
    }
}

fn uniform_in_box<R: Rng>(rng: &mut R, side: f64) -> Point {
    let x = (rng.random::<f64>() - 0.5) * side;
    let y = (rng.random::<f64>() - 0.5) * side;
    [x, y]
}

/// Draws a Poisson(`mean`) count; zero mean gives zero.
pub(crate) fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    draw as u64
}

/// Poisson process of the given intensity on the axis-aligned rectangle
/// `[x0, x1) x [y0, y1)`.
pub(crate) fn poisson_rect<R: Rng>(rng: &mut R, intensity: f64, lo: Point, hi: Point) -> Vec<Point> {
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let n = poisson_count(rng, intensity * w * h);
    (0..n)
        .map(|_| {
            let x = lo[0] + rng.random::<f64>() * w;
            let y = lo[1] + rng.random::<f64>() * h;
            [x, y]
        })
        .collect()
}

/// Samples a homogeneous Poisson process of intensity `intensity` in `B(s)`.
///
/// The result is a pure function of the arguments.
pub fn sample_points(intensity: f64, bounds: BoxSpec, seed: u64, replicate: u64) -> Result<PointSet> {
    require_nonnegative("lambda", intensity)?;
    require_positive("s", bounds.side())?;
    let key = StreamKey::new(seed, replicate);
    let mut rng = key.rng(StreamTag::Points, &[]);
    let n = poisson_count(&mut rng, intensity * bounds.area());
    let points = (0..n)
        .map(|_| uniform_in_box(&mut rng, bounds.side()))
        .collect();
    Ok(PointSet {
        points,
        bounds,
        intensity,
        seed,
        replicate,
    })
}
