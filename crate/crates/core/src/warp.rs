//! Warping functions φ of the metric φ(ρ)² g_{Sⁿ} + dρ², the curvature-type
//! condition φ′² − φφ″ ≥ 0, and the change of unknown γ = Γ(ρ) = ∫_ρ̄^ρ ds/φ
//! with ψ = φ∘Γ⁻¹.

use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::{quintic_hermite, CumulativeIntegral, QuadOptions};

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Contract(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `count` equally spaced points, both ends included.
    pub fn grid(&self, count: usize) -> impl Iterator<Item = f64> + '_ {
        let last = count.max(2) - 1;
        (0..=last).map(move |i| {
            if i == last {
                self.hi
            } else {
                self.lo + self.width() * i as f64 / last as f64
            }
        })
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                value: x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WarpKind {
    /// φ = sin ρ (round sphere).
    SphereSine,
    /// φ = sinh ρ (hyperbolic space).
    HyperbolicSinh,
    /// φ = ρ (Euclidean space).
    EuclideanIdentity,
    /// φ = cosh ρ.
    Cosh,
    /// φ ≡ c.
    Constant(f64),
    /// φ = Σ cᵢ ρ^{2i}.
    EvenPolynomial(Vec<f64>),
}

impl WarpKind {
    pub fn name(&self) -> &'static str {
        match self {
            WarpKind::SphereSine => "sphere-sine",
            WarpKind::HyperbolicSinh => "hyperbolic-sinh",
            WarpKind::EuclideanIdentity => "euclidean-identity",
            WarpKind::Cosh => "cosh",
            WarpKind::Constant(_) => "constant",
            WarpKind::EvenPolynomial(_) => "even-polynomial",
        }
    }
}

/// φ, φ′, φ″ at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpValues {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
}

const POSITIVITY_GRID: usize = 10_001;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpFunction {
    kind: WarpKind,
    interval: Interval,
}

impl WarpFunction {
    /// Builds a catalog warp; φ must be positive on a dense grid of the interval.
    pub fn new(kind: WarpKind, interval: Interval) -> Result<Self> {
        if let WarpKind::EvenPolynomial(c) = &kind {
            if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Contract(
                    "even-polynomial warp needs finite coefficients".into(),
                ));
            }
        }
        let w = WarpFunction { kind, interval };
        for x in interval.grid(POSITIVITY_GRID) {
            let p = w.phi(x);
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Contract(format!(
                    "{} warp is not positive on {interval}: φ({x}) = {p}",
                    w.kind.name()
                )));
            }
        }
        Ok(w)
    }

    pub fn kind(&self) -> &WarpKind {
        &self.kind
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// φ, φ′, φ″ at ρ ∈ I.
    pub fn eval(&self, rho: f64) -> Result<WarpValues> {
        self.interval.check(rho)?;
        Ok(self.derivs(rho))
    }

    /// φ without the domain check.
    #[inline]
    pub fn phi(&self, rho: f64) -> f64 {
        match &self.kind {
            WarpKind::SphereSine => rho.sin(),
            WarpKind::HyperbolicSinh => rho.sinh(),
            WarpKind::EuclideanIdentity => rho,
            WarpKind::Cosh => rho.cosh(),
            WarpKind::Constant(c) => *c,
            WarpKind::EvenPolynomial(c) => {
                let r2 = rho * rho;
                c.iter().rev().fold(0.0, |acc, ci| acc * r2 + ci)
            }
        }
    }

    /// (φ, φ′) without the domain check.
    #[inline]
    pub fn phi_dphi(&self, rho: f64) -> (f64, f64) {
        match &self.kind {
            WarpKind::SphereSine => rho.sin_cos(),
            WarpKind::HyperbolicSinh => (rho.sinh(), rho.cosh()),
            WarpKind::EuclideanIdentity => (rho, 1.0),
            WarpKind::Cosh => (rho.cosh(), rho.sinh()),
            WarpKind::Constant(c) => (*c, 0.0),
            WarpKind::EvenPolynomial(_) => {
                let v = self.derivs(rho);
                (v.phi, v.dphi)
            }
        }
    }

    /// φ, φ′, φ″ without the domain check.
    pub fn derivs(&self, rho: f64) -> WarpValues {
        let (phi, dphi, ddphi) = match &self.kind {
            WarpKind::SphereSine => {
                let (s, c) = rho.sin_cos();
                (s, c, -s)
            }
            WarpKind::HyperbolicSinh => (rho.sinh(), rho.cosh(), rho.sinh()),
            WarpKind::EuclideanIdentity => (rho, 1.0, 0.0),
            WarpKind::Cosh => (rho.cosh(), rho.sinh(), rho.cosh()),
            WarpKind::Constant(c) => (*c, 0.0, 0.0),
            WarpKind::EvenPolynomial(c) => {
                let r2 = rho * rho;
                let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
                // p = Σ c_i r^{2i}; accumulate powers explicitly so the
                // derivative coefficients stay readable.
                let mut pow = 1.0; // r^{2i}
                for (i, ci) in c.iter().enumerate() {
                    let e = 2.0 * i as f64;
                    p += ci * pow;
                    if i > 0 {
                        dp += ci * e * pow / rho;
                        ddp += ci * e * (e - 1.0) * pow / r2;
                    }
                    pow *= r2;
                }
                if rho == 0.0 {
                    // The generic formula divides by ρ; at the origin only the
                    // quadratic term survives in φ″.
                    dp = 0.0;
                    ddp = if c.len() > 1 { 2.0 * c[1] } else { 0.0 };
                }
                (p, dp, ddp)
            }
        };
        WarpValues { phi, dphi, ddphi }
    }

    /// sup_I φ on a dense grid.
    pub fn sup_phi(&self) -> f64 {
        self.interval
            .grid(POSITIVITY_GRID)
            .map(|x| self.phi(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// inf_I φ on a dense grid.
    pub fn inf_phi(&self) -> f64 {
        self.interval
            .grid(POSITIVITY_GRID)
            .map(|x| self.phi(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Grid verdict on φ′² − φφ″ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition2 {
    pub holds: bool,
    pub min_value: f64,
    pub argmin: f64,
}

pub const CONDITION2_TOL: f64 = 1e-12;
pub const CONDITION2_GRID: usize = 10_000;

/// Minimizes φ′² − φφ″ over a uniform grid of `grid_size` points.
pub fn check_condition2(w: &WarpFunction, grid_size: usize) -> Result<Condition2> {
    check_condition2_with_tol(w, grid_size, CONDITION2_TOL)
}

pub fn check_condition2_with_tol(w: &WarpFunction, grid_size: usize, tol: f64) -> Result<Condition2> {
    if grid_size < 2 {
        return Err(Error::Contract("condition check needs at least 2 grid points".into()));
    }
    let (mut min_value, mut argmin) = (f64::INFINITY, w.interval.lo);
    for x in w.interval.grid(grid_size) {
        let v = w.derivs(x);
        let q = v.dphi * v.dphi - v.phi * v.ddphi;
        if q < min_value {
            min_value = q;
            argmin = x;
        }
    }
    Ok(Condition2 {
        holds: min_value >= -tol,
        min_value,
        argmin,
    })
}

/// Panels used to tabulate Γ on I.
const TRANSFORM_PANELS: usize = 2048;

/// The pair (Γ, Γ⁻¹) for a fixed base point ρ̄, together with ψ = φ∘Γ⁻¹.
///
/// Γ is tabulated once by adaptive quadrature at panel breakpoints; each
/// evaluation adds a Gauss–Legendre rule on the partial panel. Γ⁻¹ has two
/// routes: [`GammaTransform::inverse`] solves Γ(ρ) = γ by safeguarded Newton
/// iteration inside the bracketing panel, and
/// [`GammaTransform::inverse_interp`] evaluates a quintic Hermite interpolant
/// built from the exact derivatives (Γ⁻¹)′ = φ and (Γ⁻¹)″ = φφ′. The flow
/// solvers use the interpolant; everything that certifies a value uses the
/// root finder.
#[derive(Debug, Clone)]
pub struct GammaTransform {
    warp: WarpFunction,
    base: f64,
    tol: f64,
    table: CumulativeIntegral,
    // (γ_j, ρ_j, φ(ρ_j), φ(ρ_j)φ′(ρ_j)) at breakpoints, increasing in γ.
    nodes: Vec<[f64; 4]>,
    image: Interval,
}

impl GammaTransform {
    pub fn new(warp: &WarpFunction, base: f64, tol: f64) -> Result<Self> {
        let interval = warp.interval();
        interval.check(base)?;
        if !(tol > 0.0) {
            return Err(Error::Contract(format!("tolerance must be positive, got {tol}")));
        }
        let w = warp.clone();
        let integrand = move |s: f64| 1.0 / w.phi(s);
        let opts = QuadOptions {
            abs_tol: tol / TRANSFORM_PANELS as f64,
            ..QuadOptions::default()
        };
        let table = CumulativeIntegral::new(&integrand, interval.lo, interval.hi, base, TRANSFORM_PANELS, opts)?;
        let nodes: Vec<[f64; 4]> = table
            .breakpoints()
            .into_iter()
            .map(|(rho, gamma)| {
                let (p, dp) = warp.phi_dphi(rho);
                [gamma, rho, p, p * dp]
            })
            .collect();
        let image = Interval::new(nodes[0][0], nodes[nodes.len() - 1][0])?;
        Ok(GammaTransform {
            warp: warp.clone(),
            base,
            tol,
            table,
            nodes,
            image,
        })
    }

    pub fn warp(&self) -> &WarpFunction {
        &self.warp
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// J = Γ(I).
    pub fn image(&self) -> Interval {
        self.image
    }

    /// Γ(ρ) without the domain check.
    #[inline]
    pub fn forward_unchecked(&self, rho: f64) -> f64 {
        let w = &self.warp;
        self.table.eval(&|s: f64| 1.0 / w.phi(s), rho)
    }

    pub fn forward(&self, rho: f64) -> Result<f64> {
        self.warp.interval().check(rho)?;
        Ok(self.forward_unchecked(rho))
    }

    fn panel(&self, gamma: f64) -> usize {
        let i = self.nodes.partition_point(|n| n[0] <= gamma);
        i.clamp(1, self.nodes.len() - 1) - 1
    }

    /// Γ⁻¹(γ) from the Hermite table, no domain check.
    #[inline]
    pub fn inverse_interp_unchecked(&self, gamma: f64) -> f64 {
        let j = self.panel(gamma);
        let (a, b) = (&self.nodes[j], &self.nodes[j + 1]);
        if gamma == a[0] {
            return a[1];
        }
        quintic_hermite(a[0], b[0], [a[1], a[2], a[3]], [b[1], b[2], b[3]], gamma)
    }

    pub fn inverse_interp(&self, gamma: f64) -> Result<f64> {
        self.image.check(gamma)?;
        Ok(self.inverse_interp_unchecked(gamma))
    }

    /// Γ⁻¹(γ) by Newton iteration (Γ′ = 1/φ) seeded from the Hermite table and
    /// safeguarded by bisection inside the bracketing panel.
    pub fn inverse(&self, gamma: f64) -> Result<f64> {
        self.image.check(gamma)?;
        let j = self.panel(gamma);
        let (a, b) = (&self.nodes[j], &self.nodes[j + 1]);
        if gamma == a[0] {
            return Ok(a[1]);
        }
        if gamma == b[0] {
            return Ok(b[1]);
        }
        let (mut lo, mut hi) = (a[1], b[1]);
        let mut rho = self.inverse_interp_unchecked(gamma).clamp(lo, hi);
        for _ in 0..100 {
            let r = self.forward_unchecked(rho) - gamma;
            if r == 0.0 {
                return Ok(rho);
            }
            if r > 0.0 {
                hi = rho;
            } else {
                lo = rho;
            }
            let mut next = rho - r * self.warp.phi(rho);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - rho).abs();
            rho = next;
            if step <= self.tol * rho.abs().max(1e-300) || hi - lo <= self.tol * rho.abs().max(1e-300) {
                return Ok(rho);
            }
        }
        Err(Error::Numeric(format!("inversion of Γ at {gamma} did not converge")))
    }

    /// ψ(γ) = φ(Γ⁻¹(γ)).
    pub fn psi(&self, gamma: f64) -> Result<f64> {
        Ok(self.warp.phi(self.inverse(gamma)?))
    }

    /// ψ′(γ) = (φφ′)(Γ⁻¹(γ)), because (Γ⁻¹)′ = φ∘Γ⁻¹.
    pub fn psi_prime(&self, gamma: f64) -> Result<f64> {
        let (p, dp) = self.warp.phi_dphi(self.inverse(gamma)?);
        Ok(p * dp)
    }

    /// (ψ, ψ′) through the root-finding inverse.
    pub fn psi_pair(&self, gamma: f64) -> Result<(f64, f64)> {
        let (p, dp) = self.warp.phi_dphi(self.inverse(gamma)?);
        Ok((p, p * dp))
    }

    /// (ψ, ψ′) through the interpolated inverse, for inner loops.
    #[inline]
    pub fn psi_pair_interp(&self, gamma: f64) -> (f64, f64) {
        let (p, dp) = self.warp.phi_dphi(self.inverse_interp_unchecked(gamma));
        (p, p * dp)
    }
}

/// Pointwise Γ.
pub fn transform_profile(t: &GammaTransform, values: &[f64]) -> Result<Vec<f64>> {
    values.iter().map(|&v| t.forward(v)).collect()
}

/// Pointwise Γ⁻¹.
pub fn inverse_profile(t: &GammaTransform, values: &[f64]) -> Result<Vec<f64>> {
    values.iter().map(|&v| t.inverse(v)).collect()
}
