//! One-dimensional quadrature.
//!
//! [`adaptive`] is a globally adaptive Gauss–Kronrod (7/15) integrator that
//! bisects the panel with the largest error estimate until the summed estimate
//! falls below the absolute tolerance. [`CumulativeIntegral`] uses it once to
//! tabulate `∫_anchor^x f` at panel breakpoints, after which any point is
//! evaluated with a single 10-point Gauss–Legendre rule on the partial panel.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const XGL10: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];

const WGL10: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// One Gauss–Kronrod 7/15 panel: returns (Kronrod estimate, |K − G|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = r * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * r, ((kron - gauss) * r).abs())
}

/// Fixed 10-point Gauss–Legendre rule on `[a, b]` (orientation respected).
pub fn gauss_legendre10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..5 {
        let dx = r * XGL10[i];
        acc += WGL10[i] * (f(c - dx) + f(c + dx));
    }
    acc * r
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            max_panels: 4096,
        }
    }
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// Returns the integral and the final error estimate. Fails if the error
/// estimate is still above tolerance once `max_panels` panels are in use, or
/// if the integrand produces a non-finite value.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: QuadOptions) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(f, lo, hi);
    let mut panels = vec![(lo, hi, v, e)];
    loop {
        let (total, err) = panels
            .iter()
            .fold((0.0, 0.0), |(s, t), p| (s + p.2, t + p.3));
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        if err <= opts.abs_tol {
            return Ok((sign * total, err));
        }
        if panels.len() >= opts.max_panels {
            return Err(Error::Numeric(format!(
                "quadrature on [{lo}, {hi}] did not reach {} (estimate {err:e})",
                opts.abs_tol
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            return Err(Error::Numeric(format!(
                "quadrature panel [{pa}, {pb}] cannot be split further"
            )));
        }
        let (v1, e1) = gk15(f, pa, m);
        let (v2, e2) = gk15(f, m, pb);
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
    }
}

/// Tabulated antiderivative `x ↦ ∫_anchor^x f(s) ds` on a closed interval.
///
/// The interval is cut into uniform panels on each side of the anchor (the
/// anchor is always a breakpoint, so points next to it are integrated directly
/// from it and keep full relative accuracy). The integrand is not stored; it
/// is passed again to [`CumulativeIntegral::eval`].
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    anchor: f64,
    lo: f64,
    hi: f64,
    left_width: f64,
    right_width: f64,
    // Breakpoints left of the anchor, ordered outward: left[0] = anchor.
    left: Vec<(f64, f64)>,
    // Breakpoints right of the anchor, ordered outward: right[0] = anchor.
    right: Vec<(f64, f64)>,
}

impl CumulativeIntegral {
    pub fn new<F: Fn(f64) -> f64>(
        f: &F,
        lo: f64,
        hi: f64,
        anchor: f64,
        panels: usize,
        opts: QuadOptions,
    ) -> Result<Self> {
        if !(lo < hi) || !(lo..=hi).contains(&anchor) {
            return Err(Error::Contract(format!(
                "anchor {anchor} must lie in a non-degenerate interval [{lo}, {hi}]"
            )));
        }
        let panels = panels.max(2);
        let len = hi - lo;
        let n_left = ((anchor - lo) / len * panels as f64).ceil() as usize;
        let n_right = ((hi - anchor) / len * panels as f64).ceil() as usize;
        let side = |end: f64, count: usize| -> Result<(Vec<(f64, f64)>, f64)> {
            let mut pts = vec![(anchor, 0.0)];
            if count == 0 {
                return Ok((pts, 0.0));
            }
            let width = (end - anchor) / count as f64;
            let mut acc = 0.0;
            let mut prev = anchor;
            for i in 1..=count {
                let x = if i == count { end } else { anchor + width * i as f64 };
                let (v, _) = adaptive(f, prev, x, opts)?;
                acc += v;
                pts.push((x, acc));
                prev = x;
            }
            Ok((pts, width.abs()))
        };
        let (left, left_width) = side(lo, n_left)?;
        let (right, right_width) = side(hi, n_right)?;
        Ok(CumulativeIntegral {
            anchor,
            lo,
            hi,
            left_width,
            right_width,
            left,
            right,
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// Breakpoints with their cumulative values, in increasing order of x.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.left.iter().rev().copied().collect();
        out.extend(self.right.iter().skip(1).copied());
        out
    }

    /// The breakpoint nearest the anchor whose panel contains `x`.
    fn base(&self, x: f64) -> (f64, f64) {
        let (pts, width, dist) = if x >= self.anchor {
            (&self.right, self.right_width, x - self.anchor)
        } else {
            (&self.left, self.left_width, self.anchor - x)
        };
        if width == 0.0 {
            return pts[0];
        }
        let i = ((dist / width).floor() as usize).min(pts.len() - 1);
        pts[i]
    }

    /// `∫_anchor^x f`. The caller guarantees `x` lies in the table's interval.
    pub fn eval<F: Fn(f64) -> f64>(&self, f: &F, x: f64) -> f64 {
        let (x0, c0) = self.base(x);
        if x == x0 {
            c0
        } else {
            c0 + gauss_legendre10(f, x0, x)
        }
    }
}

/// Quintic Hermite interpolation on `[x0, x1]` from value, first and second
/// derivative at both ends.
pub fn quintic_hermite(x0: f64, x1: f64, a: [f64; 3], b: [f64; 3], x: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
    h00 * a[0] + h10 * h * a[1] + h20 * h * h * a[2] + h01 * b[0] + h11 * h * b[1] + h21 * h * h * b[2]
}
