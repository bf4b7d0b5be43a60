//! Method-of-lines discretization of the flow on one-dimensional grids.
//!
//! Three domains are supported: the periodic circle, a Dirichlet arc
//! `[0, π/k]` with zero boundary values, and the colatitude interval `[0, π]`
//! of an axisymmetric profile on Sⁿ. The unknown is either the radial
//! function ρ or its transform γ = Γ(ρ).

mod rhs;
mod stepper;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::warp::{GammaTransform, Interval, WarpFunction};

pub use rhs::{rhs, rhs_gamma, rhs_rho};
pub use stepper::{
    run_flow, stable_dt, step, BlowupSignal, RunOptions, StepOptions, Termination, Trajectory,
};

/// Smallest accepted number of grid segments.
pub const MIN_SEGMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Periodic circle of circumference 2π; node N is identified with node 0.
    Circle,
    /// `[0, π/k]` with zero Dirichlet data at both ends.
    Arc { k: u64 },
    /// Colatitude `[0, π]` of an axisymmetric profile, even about both poles.
    Colatitude,
}

impl Domain {
    pub fn length(&self) -> f64 {
        match self {
            Domain::Circle => 2.0 * PI,
            Domain::Arc { k } => PI / *k as f64,
            Domain::Colatitude => PI,
        }
    }

    /// Number of stored nodes for `n` segments.
    pub fn node_count(&self, n: usize) -> usize {
        match self {
            Domain::Circle => n,
            _ => n + 1,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Circle)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Circle => write!(f, "circle"),
            Domain::Arc { k } => write!(f, "arc(k={k})"),
            Domain::Colatitude => write!(f, "colatitude"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Rho,
    Gamma,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Rho => "rho",
            Representation::Gamma => "gamma",
        })
    }
}

/// Samples of ρ or γ on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    domain: Domain,
    segments: usize,
    values: Vec<f64>,
    repr: Representation,
}

impl Profile {
    pub fn new(domain: Domain, repr: Representation, values: Vec<f64>) -> Result<Self> {
        let segments = match domain {
            Domain::Circle => values.len(),
            _ => values.len().saturating_sub(1),
        };
        if segments < MIN_SEGMENTS {
            return Err(Error::Contract(format!(
                "grid has {segments} segments, at least {MIN_SEGMENTS} are required"
            )));
        }
        if let Domain::Arc { k } = domain {
            if k == 0 {
                return Err(Error::Contract("arc parameter k must be positive".into()));
            }
            if values[0] != 0.0 || values[segments] != 0.0 {
                return Err(Error::Contract(format!(
                    "arc profile must vanish at both ends, got {} and {}",
                    values[0], values[segments]
                )));
            }
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite sample {v} at node {i}")));
        }
        Ok(Profile {
            domain,
            segments,
            values,
            repr,
        })
    }

    /// Samples `f(θ)` at the grid nodes of `segments` segments.
    pub fn from_fn(
        domain: Domain,
        repr: Representation,
        segments: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let h = domain.length() / segments as f64;
        let mut values: Vec<f64> = (0..domain.node_count(segments)).map(|j| f(j as f64 * h)).collect();
        if let Domain::Arc { .. } = domain {
            // θ = N·h can miss π/k by an ulp; the boundary data are exact zeros.
            values[0] = 0.0;
            values[segments] = 0.0;
        }
        Profile::new(domain, repr, values)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn spacing(&self) -> f64 {
        self.domain.length() / self.segments as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        if j == self.segments && !self.domain.is_periodic() {
            self.domain.length()
        } else {
            j as f64 * self.spacing()
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.theta(j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn repr(&self) -> Representation {
        self.repr
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Profile {
        Profile {
            values,
            ..self.clone()
        }
    }

    /// Maps every sample through `f` and retags the representation.
    pub fn map(&self, repr: Representation, f: impl Fn(f64) -> Result<f64>) -> Result<Profile> {
        let values = self.values.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        let mut p = self.with_values(values);
        p.repr = repr;
        Ok(p)
    }
}

/// What the flow needs to know about the ambient warped product.
#[derive(Debug, Clone)]
pub enum Geometry {
    Rho(WarpFunction),
    Gamma(Arc<GammaTransform>),
}

impl Geometry {
    pub fn repr(&self) -> Representation {
        match self {
            Geometry::Rho(_) => Representation::Rho,
            Geometry::Gamma(_) => Representation::Gamma,
        }
    }

    /// Admissible range of the unknown: I for ρ, J for γ.
    pub fn range(&self) -> Interval {
        match self {
            Geometry::Rho(w) => w.interval(),
            Geometry::Gamma(t) => t.image(),
        }
    }

    pub fn warp(&self) -> &WarpFunction {
        match self {
            Geometry::Rho(w) => w,
            Geometry::Gamma(t) => t.warp(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    profile: Profile,
    t: f64,
    n: u32,
    geometry: Geometry,
}

impl FlowState {
    pub fn new(profile: Profile, t: f64, n: u32, geometry: Geometry) -> Result<Self> {
        if profile.repr() != geometry.repr() {
            return Err(Error::Contract(format!(
                "profile holds {} samples but the geometry expects {}",
                profile.repr(),
                geometry.repr()
            )));
        }
        if n == 0 {
            return Err(Error::Contract("dimension n must be at least 1".into()));
        }
        if n > 1 && profile.domain() != Domain::Colatitude {
            return Err(Error::Contract(format!(
                "dimension n = {n} needs the colatitude domain, got {}",
                profile.domain()
            )));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Contract(format!("invalid start time {t}")));
        }
        check_range(profile.values(), geometry.range())?;
        Ok(FlowState {
            profile,
            t,
            n,
            geometry,
        })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub(crate) fn advanced(&self, values: Vec<f64>, t: f64) -> FlowState {
        FlowState {
            profile: self.profile.with_values(values),
            t,
            n: self.n,
            geometry: self.geometry.clone(),
        }
    }
}

pub(crate) fn check_range(values: &[f64], range: Interval) -> Result<()> {
    match values.iter().position(|&v| !range.contains(v)) {
        None => Ok(()),
        Some(node) => Err(Error::Range {
            node,
            value: values[node],
            lo: range.lo,
            hi: range.hi,
        }),
    }
}

/// Discrete sup of |∂_θ v|: centered differences inside, one-sided at
/// Dirichlet ends, zero at the poles of a colatitude grid.
pub fn gradient_sup(p: &Profile) -> f64 {
    gradient_sup_at(p).0
}

/// [`gradient_sup`] together with the first node attaining it.
pub fn gradient_sup_at(p: &Profile) -> (f64, usize) {
    gradient_sup_raw(p.domain(), p.values(), p.spacing())
}

pub(crate) fn gradient_sup_raw(domain: Domain, v: &[f64], h: f64) -> (f64, usize) {
    let len = v.len();
    let mut best = (0.0, 0);
    let mut consider = |g: f64, j: usize| {
        let g = g.abs();
        if g > best.0 {
            best = (g, j);
        }
    };
    match domain {
        Domain::Circle => {
            for j in 0..len {
                let next = v[(j + 1) % len];
                let prev = v[(j + len - 1) % len];
                consider((next - prev) / (2.0 * h), j);
            }
        }
        Domain::Arc { .. } | Domain::Colatitude => {
            let last = len - 1;
            if let Domain::Arc { .. } = domain {
                consider((v[1] - v[0]) / h, 0);
            }
            for j in 1..last {
                consider((v[j + 1] - v[j - 1]) / (2.0 * h), j);
            }
            if let Domain::Arc { .. } = domain {
                consider((v[last] - v[last - 1]) / h, last);
            }
        }
    }
    best
}

/// Tiles the circle with 2k alternately reflected copies of an arc profile:
/// copy j is `v(θ − jπ/k)` for even j and `−v((j+1)π/k − θ)` for odd j.
pub fn extend_odd(arc: &Profile, k: u64) -> Result<Profile> {
    match arc.domain() {
        Domain::Arc { k: ka } if ka == k => {}
        other => {
            return Err(Error::Contract(format!(
                "odd extension needs an arc profile with k = {k}, got {other}"
            )))
        }
    }
    let v = arc.values();
    let n = arc.segments();
    if v[0] != 0.0 || v[n] != 0.0 {
        return Err(Error::Contract("odd extension needs zero endpoint values".into()));
    }
    let total = 2 * k as usize * n;
    let values = (0..total)
        .map(|m| {
            let (j, i) = (m / n, m % n);
            if j % 2 == 0 {
                v[i]
            } else {
                -v[n - i]
            }
        })
        .collect();
    Profile::new(Domain::Circle, arc.repr(), values)
}
