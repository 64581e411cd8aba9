//! Basis and frame families spanning the prior function space.
//!
//! A [`BasisFamily`] is an ordered list of [`FunctionHandle`]s. Handles are
//! symbolic (a tag plus parameters) so families can be embedded in model and
//! report files and rebuilt exactly. Indices are zero-based throughout: member
//! `0` of a Chebyshev family is `T_0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever member ordering of a built-in family changes.
pub const ORDERING_VERSION: u32 = 1;

/// A point of `Ω ∪ Ξ`: a real abscissa or spherical coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Line(f64),
    /// Polar angle `theta ∈ [0, π]`, azimuth `phi ∈ [0, 2π)`.
    Sphere { theta: f64, phi: f64 },
}

impl Point {
    pub fn line(self) -> Result<f64> {
        match self {
            Point::Line(x) => Ok(x),
            Point::Sphere { .. } => Err(Error::InadmissiblePoint(
                "spherical point passed to a function of one real variable",
            )),
        }
    }

    pub fn sphere(self) -> Result<(f64, f64)> {
        match self {
            Point::Sphere { theta, phi } => Ok((theta, phi)),
            Point::Line(_) => Err(Error::InadmissiblePoint(
                "scalar point passed to a spherical function",
            )),
        }
    }
}

/// Symbolic description of a real function drawn from a fixed catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum FunctionHandle {
    Constant { value: f64 },
    /// `x`
    Identity,
    /// `base^x`
    Exponential { base: f64 },
    /// `sin(freq·x)`
    Sin { freq: f64 },
    /// `cos(freq·x)`
    Cos { freq: f64 },
    /// `sin²(x)`
    SinSquared,
    /// `1/(x+1)`
    ShiftedReciprocal,
    /// `sin(x)/(x+1)`
    SinOverShift,
    /// `log²(x+1)`
    LogSquared,
    /// Chebyshev polynomial of the first kind `T_degree`.
    Chebyshev { degree: usize },
    /// Real spherical harmonic `Y_{lm}`.
    RealHarmonic { l: usize, m: i64 },
    Scaled {
        factor: f64,
        inner: Box<FunctionHandle>,
    },
    Sum { terms: Vec<FunctionHandle> },
}

impl FunctionHandle {
    pub fn scaled(self, factor: f64) -> Self {
        FunctionHandle::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn plus(self, other: FunctionHandle) -> Self {
        match self {
            FunctionHandle::Sum { mut terms } => {
                terms.push(other);
                FunctionHandle::Sum { terms }
            }
            first => FunctionHandle::Sum {
                terms: vec![first, other],
            },
        }
    }

    /// `Σ c_k h_k`, skipping exact zeros.
    pub fn combination(coefficients: &[f64], handles: &[FunctionHandle]) -> Self {
        let terms = coefficients
            .iter()
            .zip(handles)
            .filter(|(c, _)| **c != 0.0)
            .map(|(&c, h)| h.clone().scaled(c))
            .collect();
        FunctionHandle::Sum { terms }
    }

    pub fn is_spherical(&self) -> bool {
        match self {
            FunctionHandle::RealHarmonic { .. } => true,
            FunctionHandle::Scaled { inner, .. } => inner.is_spherical(),
            FunctionHandle::Sum { terms } => terms.iter().any(|t| t.is_spherical()),
            _ => false,
        }
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        use FunctionHandle::*;
        let v = match self {
            Constant { value } => *value,
            Identity => p.line()?,
            Exponential { base } => base.powf(p.line()?),
            Sin { freq } => (freq * p.line()?).sin(),
            Cos { freq } => (freq * p.line()?).cos(),
            SinSquared => p.line()?.sin().powi(2),
            ShiftedReciprocal => {
                let x = p.line()?;
                if x <= -1.0 {
                    return Err(Error::InadmissiblePoint("1/(x+1) requires x > -1"));
                }
                1.0 / (x + 1.0)
            }
            SinOverShift => {
                let x = p.line()?;
                if x <= -1.0 {
                    return Err(Error::InadmissiblePoint("sin(x)/(x+1) requires x > -1"));
                }
                x.sin() / (x + 1.0)
            }
            LogSquared => {
                let x = p.line()?;
                if x <= -1.0 {
                    return Err(Error::InadmissiblePoint("log(x+1) requires x > -1"));
                }
                x.ln_1p().powi(2)
            }
            Chebyshev { degree } => chebyshev_t(*degree, p.line()?),
            RealHarmonic { l, m } => {
                let (theta, phi) = p.sphere()?;
                real_spherical_harmonic(*l, *m, theta, phi)?
            }
            Scaled { factor, inner } => factor * inner.eval(p)?,
            Sum { terms } => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(p)?;
                }
                acc
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("function evaluation"))
        }
    }
}

/// `T_k(x)` by the three-term recurrence.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for _ in 1..k {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Fills `out[k] = T_k(x)` for every `k < out.len()`.
pub fn chebyshev_all(x: f64, out: &mut [f64]) {
    for k in 0..out.len() {
        out[k] = match k {
            0 => 1.0,
            1 => x,
            _ => 2.0 * x * out[k - 1] - out[k - 2],
        };
    }
}

/// Associated Legendre function `P_l^m(t)` including the Condon–Shortley phase.
///
/// Seeds the diagonal `P_m^m = (-1)^m (2m-1)!! (1-t²)^{m/2}` and recurs upward in `l`.
pub fn assoc_legendre(l: usize, m: usize, t: f64) -> Result<f64> {
    if m > l {
        return Err(Error::InvalidArgument(format!(
            "associated Legendre order m={m} exceeds degree l={l}"
        )));
    }
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "associated Legendre argument {t} outside [-1, 1]"
        )));
    }
    let somx2 = ((1.0 - t) * (1.0 + t)).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return Ok(pmm);
    }
    let mut pmmp1 = t * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return Ok(pmmp1);
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = ((2 * ll - 1) as f64 * t * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    Ok(pll)
}

/// Orthonormal real spherical harmonic.
///
/// `m > 0` takes `√2·N·P_l^m(cos θ)·cos(mφ)`, `m < 0` takes
/// `√2·N·P_l^{|m|}(cos θ)·sin(|m|φ)`, `m = 0` the zonal harmonic, with
/// `N = sqrt((2l+1)/(4π) · (l-|m|)!/(l+|m|)!)`.
pub fn real_spherical_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> Result<f64> {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return Err(Error::InvalidArgument(format!(
            "spherical harmonic order |m|={am} exceeds degree l={l}"
        )));
    }
    // (l-|m|)!/(l+|m|)! as a product to stay finite for moderate l.
    let mut ratio = 1.0;
    for k in (l - am + 1)..=(l + am) {
        ratio /= k as f64;
    }
    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
    let p = assoc_legendre(l, am, theta.cos().clamp(-1.0, 1.0))?;
    Ok(match m {
        0 => norm * p,
        m if m > 0 => std::f64::consts::SQRT_2 * norm * p * (am as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * norm * p * (am as f64 * phi).sin(),
    })
}

/// `(l, m)` pairs of the harmonic family up to `l_max`: (0,0), (1,1), (1,0), (1,-1), (2,2), …
pub fn harmonic_order(l_max: usize) -> Vec<(usize, i64)> {
    (0..=l_max)
        .flat_map(|l| (-(l as i64)..=l as i64).rev().map(move |m| (l, m)))
        .collect()
}

/// Member `index` of the trigonometric ordering 1, sin x, cos x, sin 2x, cos 2x, …
pub fn trig_member(index: usize) -> FunctionHandle {
    if index == 0 {
        return FunctionHandle::Constant { value: 1.0 };
    }
    let freq = index.div_ceil(2) as f64;
    if index % 2 == 1 {
        FunctionHandle::Sin { freq }
    } else {
        FunctionHandle::Cos { freq }
    }
}

/// Bounded trigonometric filler functions.
///
/// With `include_constant` the first `count` members of the trigonometric
/// ordering are taken; without it the ordering starts at `sin x`.
pub fn trig_fillers(count: usize, include_constant: bool) -> Vec<FunctionHandle> {
    let start = usize::from(!include_constant);
    (start..start + count).map(trig_member).collect()
}

/// How a family was constructed; this is what gets serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// `T_0 … T_degree`.
    Chebyshev { degree: usize },
    /// First `count` members of the trigonometric ordering.
    Trigonometric { count: usize },
    /// Real harmonics with `l ≤ l_max`, `(l_max+1)²` members.
    SphericalHarmonic { l_max: usize },
    /// Anchors first, fillers after.
    AnchorFrame {
        anchors: Vec<FunctionHandle>,
        fillers: Vec<FunctionHandle>,
    },
    /// Arbitrary members, e.g. the output of Gram–Schmidt.
    Combination { members: Vec<FunctionHandle> },
}

/// Serialized form of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub ordering_version: u32,
    #[serde(flatten)]
    pub spec: FamilySpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisFamily {
    spec: FamilySpec,
    members: Vec<FunctionHandle>,
}

impl BasisFamily {
    pub fn chebyshev(degree: usize) -> Self {
        Self::from_spec(FamilySpec::Chebyshev { degree }).expect("chebyshev family is always valid")
    }

    pub fn trigonometric(count: usize) -> Result<Self> {
        Self::from_spec(FamilySpec::Trigonometric { count })
    }

    pub fn spherical_harmonic(l_max: usize) -> Self {
        Self::from_spec(FamilySpec::SphericalHarmonic { l_max })
            .expect("harmonic family is always valid")
    }

    pub fn combination(members: Vec<FunctionHandle>) -> Result<Self> {
        Self::from_spec(FamilySpec::Combination { members })
    }

    pub fn from_spec(spec: FamilySpec) -> Result<Self> {
        let members: Vec<FunctionHandle> = match &spec {
            FamilySpec::Chebyshev { degree } => (0..=*degree)
                .map(|degree| FunctionHandle::Chebyshev { degree })
                .collect(),
            FamilySpec::Trigonometric { count } => (0..*count).map(trig_member).collect(),
            FamilySpec::SphericalHarmonic { l_max } => harmonic_order(*l_max)
                .into_iter()
                .map(|(l, m)| FunctionHandle::RealHarmonic { l, m })
                .collect(),
            FamilySpec::AnchorFrame { anchors, fillers } => {
                if anchors.is_empty() {
                    return Err(Error::InvalidArgument(
                        "anchor frame needs at least one anchor".into(),
                    ));
                }
                anchors.iter().chain(fillers).cloned().collect()
            }
            FamilySpec::Combination { members } => members.clone(),
        };
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty basis family".into()));
        }
        Ok(BasisFamily { spec, members })
    }

    pub fn from_descriptor(desc: &FamilyDescriptor) -> Result<Self> {
        if desc.ordering_version != ORDERING_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported ordering version {}",
                desc.ordering_version
            )));
        }
        Self::from_spec(desc.spec.clone())
    }

    pub fn descriptor(&self) -> FamilyDescriptor {
        FamilyDescriptor {
            ordering_version: ORDERING_VERSION,
            spec: self.spec.clone(),
        }
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[FunctionHandle] {
        &self.members
    }

    pub fn is_spherical(&self) -> bool {
        matches!(self.spec, FamilySpec::SphericalHarmonic { .. })
            || self.members.iter().any(|m| m.is_spherical())
    }

    /// `φ_index(p)`.
    pub fn eval(&self, index: usize, p: Point) -> Result<f64> {
        self.members
            .get(index)
            .ok_or(Error::IndexOutOfRange {
                index,
                dim: self.dim(),
            })?
            .eval(p)
    }

    /// Writes every member at `p` into `out` (length `dim`).
    pub fn eval_all(&self, p: Point, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: out.len(),
            });
        }
        match self.spec {
            FamilySpec::Chebyshev { .. } => chebyshev_all(p.line()?, out),
            _ => {
                for (o, m) in out.iter_mut().zip(&self.members) {
                    *o = m.eval(p)?;
                }
            }
        }
        Ok(())
    }

    /// `Σ_k c_k φ_k(p)`.
    pub fn eval_function(&self, coefficients: &[f64], p: Point) -> Result<f64> {
        if coefficients.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: coefficients.len(),
            });
        }
        let mut values = vec![0.0; self.dim()];
        self.eval_all(p, &mut values)?;
        Ok(values.iter().zip(coefficients).map(|(v, c)| v * c).sum())
    }

    /// Row-major `points.len() × dim` matrix of member values.
    pub fn design_matrix(&self, points: &[Point]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = vec![0.0; points.len() * d];
        for (row, p) in out.chunks_exact_mut(d).zip(points) {
            self.eval_all(*p, row)?;
        }
        Ok(out)
    }
}

/// Anchors first, then fillers, in the order given.
pub fn make_anchor_frame(
    anchors: Vec<FunctionHandle>,
    fillers: Vec<FunctionHandle>,
) -> Result<BasisFamily> {
    BasisFamily::from_spec(FamilySpec::AnchorFrame { anchors, fillers })
}
