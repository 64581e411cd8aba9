//! Anchor catalogs around the reference target and shifted extrapolation
//! domains.

use serde::{Deserialize, Serialize};

use crate::bases::{make_anchor_frame, trig_fillers, BasisFamily, FunctionHandle};
use crate::domains::{Domain, Region};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorSet {
    Decaying,
    NonDecaying,
}

impl AnchorSet {
    pub fn name(self) -> &'static str {
        match self {
            AnchorSet::Decaying => "decaying",
            AnchorSet::NonDecaying => "non-decaying",
        }
    }
}

impl std::str::FromStr for AnchorSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decaying" => Ok(AnchorSet::Decaying),
            "non-decaying" => Ok(AnchorSet::NonDecaying),
            other => Err(Error::Parse(format!("unknown anchor set `{other}`"))),
        }
    }
}

/// `f(x) = 0.8^x − cos x + 2 sin 2x + 1/(x+1)`.
pub fn target_function() -> FunctionHandle {
    FunctionHandle::Sum {
        terms: vec![
            FunctionHandle::Exponential { base: 0.8 },
            FunctionHandle::Cos { freq: 1.0 }.scaled(-1.0),
            FunctionHandle::Sin { freq: 2.0 }.scaled(2.0),
            FunctionHandle::ShiftedReciprocal,
        ],
    }
}

/// The three anchors of a set, each the target plus a known perturbation.
pub fn build_anchor_catalog(which: AnchorSet) -> Vec<FunctionHandle> {
    let perturbations = match which {
        AnchorSet::Decaying => vec![
            FunctionHandle::ShiftedReciprocal.scaled(2.0),
            FunctionHandle::SinOverShift.scaled(3.0),
            FunctionHandle::Exponential { base: 0.9 },
        ],
        AnchorSet::NonDecaying => vec![
            FunctionHandle::Identity.scaled(0.1),
            FunctionHandle::SinSquared,
            FunctionHandle::LogSquared.scaled(0.2),
        ],
    };
    perturbations
        .into_iter()
        .map(|p| target_function().plus(p))
        .collect()
}

/// Anchors of `which`, optionally followed by trigonometric fillers.
pub fn anchor_frame(which: AnchorSet, fillers: usize, include_constant: bool) -> Result<BasisFamily> {
    make_anchor_frame(
        build_anchor_catalog(which),
        trig_fillers(fillers, include_constant),
    )
}

/// `Ξ` moved so that it starts `distance` past the right end of `Ω`,
/// keeping its width.
pub fn far_domain_shift(omega: &Domain, base_xi: &Domain, distance: f64) -> Result<Domain> {
    if !(distance >= 0.0) || !distance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be finite and nonnegative, got {distance}"
        )));
    }
    let omega_end = match omega.region() {
        Region::IntervalUnion { segments } => segments.last().unwrap().end,
        Region::SphereBand { .. } => {
            return Err(Error::InvalidArgument("far domains need intervals".into()))
        }
    };
    let xi_start = match base_xi.region() {
        Region::IntervalUnion { segments } => segments[0].start,
        Region::SphereBand { .. } => {
            return Err(Error::InvalidArgument("far domains need intervals".into()))
        }
    };
    base_xi.shifted(omega_end + distance - xi_start)
}
