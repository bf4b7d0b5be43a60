use crate::error::{Error, Result};

use super::{check_range, Domain, FlowState, Geometry, Representation};

/// Precomputed grid data for evaluating the semi-discrete right-hand side.
///
/// The divergence term is written in flux form,
/// `(1/w) ∂_θ(w F)` with `w = sin^{n−1} θ` on colatitude grids and `w ≡ 1`
/// otherwise, and differenced as `(w_{j+½}F_{j+½} − w_{j−½}F_{j−½}) / (h w_j)`
/// with face slopes `(v_{j+1} − v_j)/h`. In ρ-form the face value of φ is the
/// mean of the two node values. At a pole the quotient tends to
/// `n ∂_θF(0)`, approximated by `±2n F_{½}/h`.
#[derive(Debug, Clone)]
pub(crate) struct Operator {
    geometry: Geometry,
    domain: Domain,
    n: f64,
    h: f64,
    len: usize,
    face_w: Vec<f64>,
    inv_node_w: Vec<f64>,
}

impl Operator {
    pub(crate) fn new(state: &FlowState) -> Self {
        let p = state.profile();
        let domain = p.domain();
        let len = p.values().len();
        let h = p.spacing();
        let faces = if domain.is_periodic() { len } else { len - 1 };
        let (face_w, inv_node_w) = if domain == Domain::Colatitude && state.n() > 1 {
            let e = state.n() as i32 - 1;
            let fw = (0..faces).map(|j| ((j as f64 + 0.5) * h).sin().powi(e)).collect();
            let nw = (0..len)
                .map(|j| {
                    let s = p.theta(j).sin();
                    if j == 0 || j == len - 1 {
                        0.0
                    } else {
                        1.0 / s.powi(e)
                    }
                })
                .collect();
            (fw, nw)
        } else {
            (vec![1.0; faces], vec![1.0; len])
        };
        Operator {
            geometry: state.geometry().clone(),
            domain,
            n: state.n() as f64,
            h,
            len,
            face_w,
            inv_node_w,
        }
    }

    pub(crate) fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub(crate) fn spacing(&self) -> f64 {
        self.h
    }

    pub(crate) fn domain(&self) -> Domain {
        self.domain
    }

    fn face_count(&self) -> usize {
        self.face_w.len()
    }

    #[inline]
    fn right(&self, j: usize) -> usize {
        if j + 1 == self.len {
            0
        } else {
            j + 1
        }
    }

    /// Writes ∂_t v into `out`; `scratch` holds per-node coefficients and face fluxes.
    pub(crate) fn eval(&self, v: &[f64], out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
        debug_assert_eq!(v.len(), self.len);
        check_range(v, self.geometry.range())?;
        let h = self.h;
        let faces = self.face_count();
        let Scratch { coef, flux } = scratch;
        // (ψ, ψ′) at γ-nodes or (φ, φ′) at ρ-nodes.
        coef.clear();
        match &self.geometry {
            Geometry::Gamma(t) => coef.extend(v.iter().map(|&x| t.psi_pair_interp(x))),
            Geometry::Rho(w) => coef.extend(v.iter().map(|&x| w.phi_dphi(x))),
        }
        flux.clear();
        match &self.geometry {
            Geometry::Gamma(_) => {
                for f in 0..faces {
                    let d = (v[self.right(f)] - v[f]) / h;
                    flux.push(self.face_w[f] * d / (1.0 + d * d).sqrt());
                }
            }
            Geometry::Rho(_) => {
                for f in 0..faces {
                    let r = self.right(f);
                    let d = (v[r] - v[f]) / h;
                    let pf = 0.5 * (coef[f].0 + coef[r].0);
                    flux.push(self.face_w[f] * d / (pf * pf + d * d).sqrt());
                }
            }
        }

        let n = self.n;
        let gamma = matches!(self.geometry, Geometry::Gamma(_));
        let node = |j: usize, div: f64, g: f64| -> f64 {
            let (c, dc) = coef[j];
            if gamma {
                div / c + n * dc / (c * c) * g * g / (1.0 + g * g).sqrt()
            } else {
                div + n * dc / c * g * g / (c * c + g * g).sqrt()
            }
        };

        match self.domain {
            Domain::Circle => {
                for j in 0..self.len {
                    let left = if j == 0 { self.len - 1 } else { j - 1 };
                    let div = (flux[j] - flux[left]) / h;
                    let g = (v[self.right(j)] - v[left]) / (2.0 * h);
                    out[j] = node(j, div, g);
                }
            }
            Domain::Arc { .. } | Domain::Colatitude => {
                let last = self.len - 1;
                for j in 1..last {
                    let div = (flux[j] - flux[j - 1]) / h * self.inv_node_w[j];
                    let g = (v[j + 1] - v[j - 1]) / (2.0 * h);
                    out[j] = node(j, div, g);
                }
                if self.domain == Domain::Colatitude {
                    // Face weights vanish like sin^{n−1}; the unweighted flux
                    // at the first face is what enters the pole limit.
                    let f0 = flux[0] / self.face_w[0];
                    let fl = flux[last - 1] / self.face_w[last - 1];
                    out[0] = node(0, 2.0 * n * f0 / h, 0.0);
                    out[last] = node(last, -2.0 * n * fl / h, 0.0);
                } else {
                    out[0] = 0.0;
                    out[last] = 0.0;
                }
            }
        }
        Ok(())
    }
}

/// Reusable buffers for [`Operator::eval`].
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch {
    pub(crate) coef: Vec<(f64, f64)>,
    flux: Vec<f64>,
}

/// Semi-discrete ∂_t of the state's unknown, in whichever representation it holds.
pub fn rhs(state: &FlowState) -> Result<Vec<f64>> {
    let op = Operator::new(state);
    let mut out = vec![0.0; state.profile().values().len()];
    op.eval(state.profile().values(), &mut out, &mut Scratch::default())?;
    Ok(out)
}

/// ∂_t γ = (1/ψ) div(∇γ/√(1+|∇γ|²)) + n ψ′/ψ² |∇γ|²/√(1+|∇γ|²).
pub fn rhs_gamma(state: &FlowState) -> Result<Vec<f64>> {
    if state.profile().repr() != Representation::Gamma {
        return Err(Error::Contract("rhs_gamma needs a γ-form state".into()));
    }
    rhs(state)
}

/// ∂_t ρ = div(∇ρ/W) + n φ′/φ |∇ρ|²/W with W = √(φ² + |∇ρ|²).
pub fn rhs_rho(state: &FlowState) -> Result<Vec<f64>> {
    if state.profile().repr() != Representation::Rho {
        return Err(Error::Contract("rhs_rho needs a ρ-form state".into()));
    }
    rhs(state)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::flow::Profile;
    use crate::warp::{GammaTransform, Interval, WarpFunction, WarpKind};

    fn warp(kind: WarpKind, lo: f64, hi: f64) -> WarpFunction {
        WarpFunction::new(kind, Interval::new(lo, hi).unwrap()).unwrap()
    }

    fn gamma_state(kind: WarpKind, lo: f64, hi: f64, base: f64, p: Profile, n: u32) -> FlowState {
        let t = GammaTransform::new(&warp(kind, lo, hi), base, 1e-12).unwrap();
        FlowState::new(p, 0.0, n, Geometry::Gamma(Arc::new(t))).unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        for domain in [Domain::Circle, Domain::Colatitude] {
            let p = Profile::from_fn(domain, Representation::Rho, 64, |_| 1.2).unwrap();
            let s = FlowState::new(p, 0.0, 1, Geometry::Rho(warp(WarpKind::SphereSine, 0.3, 2.8))).unwrap();
            assert!(rhs_rho(&s).unwrap().iter().all(|&r| r == 0.0));
        }
        let p = Profile::from_fn(Domain::Colatitude, Representation::Gamma, 64, |_| 0.2).unwrap();
        let s = gamma_state(WarpKind::Cosh, -1.0, 1.0, 0.0, p, 3);
        assert!(rhs_gamma(&s).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn unit_warp_sine_curvature() {
        let p = Profile::from_fn(Domain::Circle, Representation::Gamma, 256, f64::sin).unwrap();
        let s = gamma_state(WarpKind::Constant(1.0), -2.0, 2.0, 0.0, p, 1);
        let r = rhs_gamma(&s).unwrap();
        // θ = π/2 is node 64.
        let h = s.profile().spacing();
        assert!((r[64] + 1.0).abs() < h * h, "{}", r[64]);
    }

    #[test]
    fn representation_mismatch_is_a_contract_error() {
        let p = Profile::from_fn(Domain::Circle, Representation::Gamma, 32, |_| 0.0).unwrap();
        let s = gamma_state(WarpKind::Cosh, -1.0, 1.0, 0.0, p, 1);
        assert!(rhs_rho(&s).is_err());
    }

    #[test]
    fn dirichlet_ends_do_not_move() {
        let p = Profile::from_fn(Domain::Arc { k: 2 }, Representation::Gamma, 64, |t| 0.1 * (2.0 * t).sin()).unwrap();
        let s = gamma_state(WarpKind::Cosh, -1.0, 1.0, 0.0, p, 1);
        let r = rhs_gamma(&s).unwrap();
        assert_eq!((r[0], r[64]), (0.0, 0.0));
    }

    #[test]
    fn out_of_range_state_is_reported() {
        let p = Profile::from_fn(Domain::Circle, Representation::Rho, 32, |t| 1.0 + t.cos()).unwrap();
        let w = warp(WarpKind::Cosh, -1.0, 1.5);
        assert!(matches!(
            FlowState::new(p.clone(), 0.0, 1, Geometry::Rho(w.clone())),
            Err(Error::Range { .. })
        ));
    }

    /// ∂_t ρ on colatitude for ρ = c + a cos θ, n = 2, from the continuum
    /// formula (sin θ)^{−1}∂_θ(sin θ ρ_θ/W) + 2 φ′/φ ρ_θ²/W, with the pole
    /// value taken as the θ → 0 limit 2 ρ_θθ/φ.
    fn colatitude_oracle(w: &WarpFunction, c: f64, a: f64, theta: f64) -> f64 {
        let rho = c + a * theta.cos();
        let r1 = -a * theta.sin();
        let r2 = -a * theta.cos();
        let v = w.derivs(rho);
        let wsq = v.phi * v.phi + r1 * r1;
        let big_w = wsq.sqrt();
        // d/dθ (r1 / W) = r2/W − r1 (φφ′ r1 + r1 r2)/W³
        let dflux = r2 / big_w - r1 * (v.phi * v.dphi * r1 + r1 * r2) / (wsq * big_w);
        let cot_term = if theta.sin().abs() < 1e-300 {
            r2 / big_w
        } else {
            theta.cos() / theta.sin() * r1 / big_w
        };
        dflux + cot_term + 2.0 * v.dphi / v.phi * r1 * r1 / big_w
    }

    #[test]
    fn colatitude_pole_values_match_the_limit() {
        let w = warp(WarpKind::SphereSine, 0.3, 2.8);
        let (c, a) = (1.2, 0.01);
        let p = Profile::from_fn(Domain::Colatitude, Representation::Rho, 1024, |t| c + a * t.cos()).unwrap();
        let s = FlowState::new(p, 0.0, 2, Geometry::Rho(w.clone())).unwrap();
        let r = rhs_rho(&s).unwrap();
        assert!(r.iter().all(|x| x.is_finite()));
        for (j, theta) in [(0usize, 0.0), (1024, PI)] {
            assert!((r[j] - colatitude_oracle(&w, c, a, theta)).abs() < 1e-6, "node {j}: {}", r[j]);
        }
        // Interior nodes agree to second order as well.
        for j in [1usize, 100, 512, 1000] {
            let theta = j as f64 * PI / 1024.0;
            assert!((r[j] - colatitude_oracle(&w, c, a, theta)).abs() < 1e-6);
        }
    }
}
