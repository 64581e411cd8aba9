//! Data and extrapolation domains with quadrature-induced inner products.
//!
//! Inner products are continuous `L²` integrals approximated by quadrature:
//! composite Gauss–Legendre on interval unions, Gauss–Legendre in `cos θ`
//! times a trapezoid rule in `φ` on spherical bands. Sums always run in
//! ascending node order so results are bit-reproducible.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bases::{BasisFamily, FunctionHandle, Point};
use crate::error::{Error, Result};

pub const DEFAULT_SEGMENT_NODES: usize = 32;
pub const DEFAULT_SPHERE_THETA_NODES: usize = 64;
pub const DEFAULT_SPHERE_PHI_NODES: usize = 128;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Newton iteration on `P_n` from the Chebyshev-like initial guess; nodes are
/// returned in ascending order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // p1 = P_n(x), p2 = P_{n-1}(x)
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * x * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (x * p1 - p2) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// One segment `[start, end]` (`closed_end`) or `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub closed_end: bool,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && (x < self.end || (self.closed_end && x == self.end))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    IntervalUnion { segments: Vec<Segment> },
    /// `z = cos θ ∈ [z_min, z_max]`, full azimuth.
    SphereBand { z_min: f64, z_max: f64 },
}

/// Quadrature resolution used when building a [`Domain`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub segment_nodes: usize,
    pub theta_nodes: usize,
    pub phi_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            segment_nodes: DEFAULT_SEGMENT_NODES,
            theta_nodes: DEFAULT_SPHERE_THETA_NODES,
            phi_nodes: DEFAULT_SPHERE_PHI_NODES,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Domain {
    region: Region,
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.region == other.region && self.weights == other.weights
    }
}

impl Domain {
    /// Closed interval `[a, b]`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_region(Region::IntervalUnion {
            segments: vec![Segment {
                start: a,
                end: b,
                closed_end: true,
            }],
        })
    }

    /// Half-open interval `[a, b)`.
    pub fn half_open(a: f64, b: f64) -> Result<Self> {
        Self::from_region(Region::IntervalUnion {
            segments: vec![Segment {
                start: a,
                end: b,
                closed_end: false,
            }],
        })
    }

    pub fn sphere_band(z_min: f64, z_max: f64) -> Result<Self> {
        Self::from_region(Region::SphereBand { z_min, z_max })
    }

    pub fn from_region(region: Region) -> Result<Self> {
        Self::with_quadrature(region, QuadratureSpec::default())
    }

    pub fn with_quadrature(region: Region, q: QuadratureSpec) -> Result<Self> {
        let (nodes, weights) = match &region {
            Region::IntervalUnion { segments } => {
                validate_segments(segments)?;
                if q.segment_nodes == 0 {
                    return Err(Error::InvalidArgument("zero quadrature nodes".into()));
                }
                let (gx, gw) = gauss_legendre(q.segment_nodes);
                let mut nodes = Vec::with_capacity(segments.len() * gx.len());
                let mut weights = Vec::with_capacity(nodes.capacity());
                for s in segments {
                    let (mid, half) = (0.5 * (s.start + s.end), 0.5 * s.len());
                    for (x, w) in gx.iter().zip(&gw) {
                        nodes.push(Point::Line(mid + half * x));
                        weights.push(half * w);
                    }
                }
                (nodes, weights)
            }
            Region::SphereBand { z_min, z_max } => {
                validate_band(*z_min, *z_max)?;
                if q.theta_nodes == 0 || q.phi_nodes == 0 {
                    return Err(Error::InvalidArgument("zero quadrature nodes".into()));
                }
                let (gz, gw) = gauss_legendre(q.theta_nodes);
                let (mid, half) = (0.5 * (z_min + z_max), 0.5 * (z_max - z_min));
                let dphi = 2.0 * PI / q.phi_nodes as f64;
                let mut nodes = Vec::with_capacity(gz.len() * q.phi_nodes);
                let mut weights = Vec::with_capacity(nodes.capacity());
                // dz = sin θ dθ carries the area element.
                for (z, w) in gz.iter().zip(&gw) {
                    let theta = (mid + half * z).clamp(-1.0, 1.0).acos();
                    for j in 0..q.phi_nodes {
                        nodes.push(Point::Sphere {
                            theta,
                            phi: j as f64 * dphi,
                        });
                        weights.push(half * w * dphi);
                    }
                }
                (nodes, weights)
            }
        };
        Ok(Domain {
            region,
            nodes,
            weights,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_spherical(&self) -> bool {
        matches!(self.region, Region::SphereBand { .. })
    }

    /// Length of an interval union, area of a spherical band.
    pub fn measure(&self) -> f64 {
        match &self.region {
            Region::IntervalUnion { segments } => segments.iter().map(Segment::len).sum(),
            Region::SphereBand { z_min, z_max } => 2.0 * PI * (z_max - z_min),
        }
    }

    pub fn segments(&self) -> Option<&[Segment]> {
        match &self.region {
            Region::IntervalUnion { segments } => Some(segments),
            Region::SphereBand { .. } => None,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match (&self.region, p) {
            (Region::IntervalUnion { segments }, Point::Line(x)) => {
                segments.iter().any(|s| s.contains(x))
            }
            (Region::SphereBand { z_min, z_max }, Point::Sphere { theta, .. }) => {
                let z = theta.cos();
                let tol = 1e-12;
                z >= z_min - tol && z <= z_max + tol
            }
            _ => false,
        }
    }

    /// Union of two interval domains.
    pub fn union(&self, other: &Domain) -> Result<Domain> {
        match (&self.region, &other.region) {
            (Region::IntervalUnion { segments: a }, Region::IntervalUnion { segments: b }) => {
                let mut segments: Vec<Segment> = a.iter().chain(b).copied().collect();
                segments.sort_by(|x, y| x.start.total_cmp(&y.start));
                Domain::from_region(Region::IntervalUnion { segments })
            }
            _ => Err(Error::InvalidArgument(
                "union is only defined for interval domains".into(),
            )),
        }
    }

    /// Translates every segment by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Domain> {
        match &self.region {
            Region::IntervalUnion { segments } => Domain::from_region(Region::IntervalUnion {
                segments: segments
                    .iter()
                    .map(|s| Segment {
                        start: s.start + offset,
                        end: s.end + offset,
                        closed_end: s.closed_end,
                    })
                    .collect(),
            }),
            Region::SphereBand { .. } => Err(Error::InvalidArgument(
                "spherical bands cannot be translated".into(),
            )),
        }
    }

    /// `∫ f` over the domain.
    pub fn integrate<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(Point) -> Result<f64>,
    {
        let mut acc = 0.0;
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(*p)?;
        }
        Ok(acc)
    }
}

fn validate_segments(segments: &[Segment]) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::DegenerateDomain("no segments".into()));
    }
    for s in segments {
        if !(s.start.is_finite() && s.end.is_finite()) {
            return Err(Error::DegenerateDomain("non-finite segment bound".into()));
        }
        if s.start >= s.end {
            return Err(Error::DegenerateDomain(format!(
                "segment [{}, {}] has non-positive length",
                s.start, s.end
            )));
        }
    }
    let mut sorted = segments.to_vec();
    sorted.sort_by(|x, y| x.start.total_cmp(&y.start));
    for pair in sorted.windows(2) {
        if pair[0].end > pair[1].start {
            return Err(Error::DegenerateDomain("segments overlap".into()));
        }
    }
    Ok(())
}

fn validate_band(z_min: f64, z_max: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&z_min) || !(-1.0..=1.0).contains(&z_max) || z_min >= z_max {
        return Err(Error::DegenerateDomain(format!(
            "spherical band z ∈ [{z_min}, {z_max}] is empty or outside [-1, 1]"
        )));
    }
    Ok(())
}

fn parse_bound(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid domain bound `{s}`"));
    if let Some(mult) = s.strip_suffix("pi") {
        let m = match mult.trim() {
            "" => 1.0,
            "-" => -1.0,
            m => m.parse::<f64>().map_err(|_| bad())?,
        };
        return Ok(m * PI);
    }
    s.parse::<f64>().map_err(|_| bad())
}

impl FromStr for Domain {
    type Err = Error;

    /// `interval:a:b` (closed), `interval:a:b)` (right-open), unions joined
    /// with `+`, and `sphere-z:zmin:zmax`. Bounds accept a `pi` suffix.
    fn from_str(s: &str) -> Result<Domain> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("sphere-z:") {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected sphere-z:zmin:zmax, got `{s}`")))?;
            return Domain::sphere_band(parse_bound(a)?, parse_bound(b)?);
        }
        let mut segments = Vec::new();
        for part in s.split('+') {
            let rest = part
                .trim()
                .strip_prefix("interval:")
                .ok_or_else(|| Error::Parse(format!("unknown domain descriptor `{part}`")))?;
            let (body, closed_end) = match rest.strip_suffix(')') {
                Some(body) => (body, false),
                None => (rest.strip_suffix(']').unwrap_or(rest), true),
            };
            let (a, b) = body
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected interval:a:b, got `{part}`")))?;
            segments.push(Segment {
                start: parse_bound(a)?,
                end: parse_bound(b)?,
                closed_end,
            });
        }
        Domain::from_region(Region::IntervalUnion { segments })
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.region {
            Region::IntervalUnion { segments } => {
                for (i, s) in segments.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "interval:{:?}:{:?}", s.start, s.end)?;
                    if !s.closed_end {
                        f.write_str(")")?;
                    }
                }
                Ok(())
            }
            Region::SphereBand { z_min, z_max } => write!(f, "sphere-z:{z_min:?}:{z_max:?}"),
        }
    }
}

impl Serialize for Domain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `⟨f, g⟩` over `dom`.
pub fn inner_product(dom: &Domain, f: &FunctionHandle, g: &FunctionHandle) -> Result<f64> {
    dom.integrate(|p| Ok(f.eval(p)? * g.eval(p)?))
}

/// Symmetric matrix of pairwise inner products of a family over a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument("Gram matrix must be square".into()));
        }
        Ok(GramMatrix(m))
    }

    pub fn identity(d: usize) -> Self {
        GramMatrix(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.0 + self.0.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `uᵀ G v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.0[(i, j)] * v[j];
            }
            acc += u[i] * row;
        }
        acc
    }

    /// `G v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(v)).iter().copied().collect()
    }
}

/// `G_{kj} = ⟨φ_k, φ_j⟩` over `dom`.
pub fn gram_matrix(dom: &Domain, family: &BasisFamily) -> Result<GramMatrix> {
    let d = family.dim();
    let mut values = vec![0.0; d];
    let mut g = DMatrix::<f64>::zeros(d, d);
    for (p, w) in dom.nodes().iter().zip(dom.weights()) {
        family.eval_all(*p, &mut values)?;
        for i in 0..d {
            let wi = w * values[i];
            for j in i..d {
                g[(i, j)] += wi * values[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix"));
    }
    Ok(GramMatrix(g))
}

/// Coefficients `Q` (row `j` holds the mixing weights of new member `j`) such
/// that the members `Σ_i Q_{ji} φ_i` are orthonormal over `dom`.
pub fn orthonormal_mixing(dom: &Domain, family: &BasisFamily) -> Result<Vec<Vec<f64>>> {
    let gram = gram_matrix(dom, family)?;
    let ev = gram.eigenvalues();
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if hi <= 0.0 || lo <= 1e-10 * hi {
        return Err(Error::RankDeficient(format!(
            "Gram eigenvalues span [{lo:e}, {hi:e}]; members are linearly dependent on the domain"
        )));
    }
    let d = family.dim();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = vec![0.0; d];
        v[j] = 1.0;
        // Modified Gram–Schmidt, two passes.
        for _ in 0..2 {
            for q in &basis {
                let proj = gram.bilinear(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = gram.bilinear(&v, &v).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::RankDeficient(format!("member {j} vanished during Gram–Schmidt")));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(basis)
}

/// Gram–Schmidt against the `dom` inner product.
pub fn orthogonalize(family: &BasisFamily, dom: &Domain) -> Result<BasisFamily> {
    let mixing = orthonormal_mixing(dom, family)?;
    let members = mixing
        .iter()
        .map(|q| FunctionHandle::combination(q, family.members()))
        .collect();
    BasisFamily::combination(members)
}

/// Equispaced points covering the domain.
///
/// Interval unions split `n` across segments in proportion to length; each
/// segment includes its right end only if it is closed. Spherical bands give
/// an `n × n` grid: `θ` spans the band inclusive, `φ ∈ [0, 2π)`.
pub fn grid_points(dom: &Domain, n: usize) -> Result<Vec<Point>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 2 points per dimension, got {n}"
        )));
    }
    match dom.region() {
        Region::IntervalUnion { segments } => {
            let counts = allocate(n, segments);
            let mut out = Vec::with_capacity(n);
            for (s, &count) in segments.iter().zip(&counts) {
                if count == 0 {
                    continue;
                }
                let denom = if s.closed_end {
                    (count.max(2) - 1) as f64
                } else {
                    count as f64
                };
                let step = s.len() / denom;
                out.extend((0..count).map(|i| Point::Line(s.start + i as f64 * step)));
            }
            Ok(out)
        }
        Region::SphereBand { z_min, z_max } => {
            let (t0, t1) = (z_max.acos(), z_min.acos());
            let dt = (t1 - t0) / (n - 1) as f64;
            let dphi = 2.0 * PI / n as f64;
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                let theta = t0 + i as f64 * dt;
                for j in 0..n {
                    out.push(Point::Sphere {
                        theta,
                        phi: j as f64 * dphi,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// Largest-remainder split of `n` points proportional to segment length.
fn allocate(n: usize, segments: &[Segment]) -> Vec<usize> {
    let total: f64 = segments.iter().map(Segment::len).sum();
    let exact: Vec<f64> = segments.iter().map(|s| n as f64 * s.len() / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}
