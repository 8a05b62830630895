//! The standard examples: genus-one tori over w^2 = (z^2 + lambda^2)(z^2 + lambda^-2)
//! with a Moebius Gauss map parametrized by three angles.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::curve::{continue_to, continue_w, cycle_around_pair, Chart, CurvePoint, HyperellipticCurve, LiftedCycle};
use crate::error::{Error, Result};
use crate::numerics::{c64, elliptic_k, Contour, QuadratureConfig, C64, I};
use crate::periods::{Form, MarkedDatum, Mobius, SphereValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyAngles {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

const ANGLE_SLACK: f64 = 1e-12;

impl FamilyAngles {
    pub fn new(theta: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::Domain(format!("theta must lie in (0, pi/2), got {theta}")));
        }
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(-ANGLE_SLACK..=FRAC_PI_2 + ANGLE_SLACK).contains(&v) {
                return Err(Error::Domain(format!("{name} must lie in [0, pi/2], got {v}")));
            }
        }
        if alpha.abs() < ANGLE_SLACK && (beta - theta).abs() < ANGLE_SLACK {
            return Err(Error::SingularParameter("(alpha, beta) = (0, theta) is excluded".into()));
        }
        Ok(FamilyAngles { theta, alpha: alpha.clamp(0.0, FRAC_PI_2), beta: beta.clamp(0.0, FRAC_PI_2) })
    }

    pub fn lambda(&self) -> f64 {
        1.0 / (0.5 * self.theta).tan()
    }

    /// The Gauss map before the normalizing rotation.
    pub fn mobius(&self) -> Mobius {
        let am = 0.5 * (self.alpha - self.beta);
        let ap = 0.5 * (self.alpha + self.beta);
        Mobius {
            a: c64(ap.cos(), am.cos()),
            b: c64(am.sin(), ap.sin()),
            c: -c64(ap.sin(), am.sin()),
            d: c64(am.cos(), ap.cos()),
        }
    }
}

/// pi / (sin(theta) K(sin^2 theta)).
pub fn mu(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Err(Error::Domain(format!("theta must lie in (0, pi/2), got {theta}")));
    }
    let s = theta.sin();
    Ok(PI / (s * elliptic_k(s * s)?))
}

/// Principal value of [cos^2 alpha + csc^2 theta (sin alpha cos beta - i sin beta)^2]^(-1/2).
pub fn e_factor(angles: &FamilyAngles) -> Result<C64> {
    let (t, a, b) = (angles.theta, angles.alpha, angles.beta);
    let inner = c64(a.sin() * b.cos(), -b.sin());
    let bracket = a.cos().powi(2) + inner * inner / t.sin().powi(2);
    if bracket.norm() < 1e-14 {
        return Err(Error::SingularParameter(format!("E bracket vanishes at {angles:?}")));
    }
    Ok(1.0 / bracket.sqrt())
}

/// g at a curve point of the unrotated example.
pub fn gauss_map(angles: &FamilyAngles, p: &CurvePoint) -> SphereValue {
    let m = angles.mobius();
    match p.chart {
        Chart::Standard => m.apply(p.z),
        Chart::Reciprocal if p.z.norm() > 0.0 => m.apply(1.0 / p.z),
        Chart::Reciprocal => m.apply_sphere(SphereValue::Infinity),
    }
}

fn rot_x1(t: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]]
}

fn rot_x2(t: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]]
}

/// Stereographic projection from the north pole.
pub fn stereographic(n: [f64; 3]) -> SphereValue {
    if (1.0 - n[2]).abs() < 1e-15 {
        SphereValue::Infinity
    } else {
        SphereValue::Finite(c64(n[0], n[1]) / (1.0 - n[2]))
    }
}

/// [D, D', D'', D'''] on the tilted great circle; D'' = -D and D''' = -D'.
/// The alpha tilt about the x2-axis is taken clockwise so that the
/// projections coincide with the branch values of the Gauss map.
pub fn spherical_configuration(angles: &FamilyAngles) -> [[f64; 3]; 4] {
    let north = [0.0, 0.0, 1.0];
    let at = |t: f64| rot_x2(-angles.alpha, rot_x1(t, north));
    let d = at(angles.beta - angles.theta);
    let d1 = at(angles.beta + angles.theta);
    [d, d1, d.map(|x| -x), d1.map(|x| -x)]
}

/// (P_A, F_A) = (pi mu (iE, 0), pi mu (E, 0)).
pub fn end_period_flux(angles: &FamilyAngles) -> Result<([f64; 3], [f64; 3])> {
    let e = e_factor(angles)? * (PI * mu(angles.theta)?);
    let p = I * e;
    Ok(([p.re, p.im, 0.0], [e.re, e.im, 0.0]))
}

/// Deck transformation (z, w) -> (z, -w).
pub fn involution_d(p: &CurvePoint) -> CurvePoint {
    p.deck()
}

/// The lift (z, w) -> (-1/conj z, -conj w / conj z^2) of the antipodal map.
/// In charts it swaps (z, w) with (zeta, W) = (-conj z, -conj w).
pub fn involution_e(p: &CurvePoint) -> CurvePoint {
    let (z, w) = (-p.z.conj(), -p.w.conj());
    match p.chart {
        Chart::Standard => CurvePoint::reciprocal(z, w),
        Chart::Reciprocal => CurvePoint::standard(z, w),
    }
}

/// Express a quartic-curve point in the standard chart when |z| <= 1, else reciprocal.
pub fn preferred_chart(p: &CurvePoint) -> CurvePoint {
    match p.chart {
        Chart::Standard if p.z.norm() > 1.0 => {
            let zeta = 1.0 / p.z;
            CurvePoint::reciprocal(zeta, p.w * zeta * zeta)
        }
        Chart::Reciprocal if p.z.norm() > 1.0 => {
            let z = 1.0 / p.z;
            CurvePoint::standard(z, p.w * z * z)
        }
        _ => *p,
    }
}

pub fn conjugate_parameters(angles: &FamilyAngles) -> Result<FamilyAngles> {
    FamilyAngles::new(FRAC_PI_2 - angles.theta, angles.alpha, FRAC_PI_2 - angles.beta)
}

/// Conformal factor 1/2 (|g| + 1/|g|) |mu / w| of the induced metric against |dz|.
pub fn metric_factor(angles: &FamilyAngles, p: &CurvePoint) -> Result<f64> {
    let g = match gauss_map(angles, p) {
        SphereValue::Finite(g) if g.norm() > 0.0 => g.norm(),
        _ => return Err(Error::Invalid("metric factor requested at an end".into())),
    };
    if p.chart != Chart::Standard || p.w.norm() == 0.0 {
        return Err(Error::Invalid("metric factor needs a standard-chart point off the branch locus".into()));
    }
    Ok(0.5 * (g + 1.0 / g) * (mu(angles.theta)? / p.w).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaussValue {
    Zero,
    Pole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndPoint {
    pub point: CurvePoint,
    pub gauss_value: GaussValue,
    pub limit_normal: [f64; 3],
    pub side: Side,
    /// Res(dh/g) at zeros, Res(g dh) at poles, for the unrotated Gauss map.
    pub residue: C64,
    /// Horizontal flux of the unrotated surface at this end.
    pub flux: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardExample {
    pub angles: FamilyAngles,
    pub lambda: f64,
    pub mu: f64,
    pub curve: HyperellipticCurve,
    pub mobius: Mobius,
    pub e_factor: C64,
    /// A, A', A'', A''' with A'' = D(A), A''' = E(A), A' = D(A''').
    pub ends: Vec<EndPoint>,
}

impl StandardExample {
    pub fn new(angles: FamilyAngles) -> Result<Self> {
        let lambda = angles.lambda();
        let mu = mu(angles.theta)?;
        let e_factor = e_factor(&angles)?;
        let curve = HyperellipticCurve::rectangular(lambda)?;
        let mobius = angles.mobius();
        let mut ex = StandardExample { angles, lambda, mu, curve, mobius, e_factor, ends: vec![] };
        let a = ex.end_a()?;
        let a3 = preferred_chart(&involution_e(&a));
        let pts = [a, a3.deck(), a.deck(), a3];
        ex.ends = pts.iter().map(|p| ex.end_point(*p)).collect::<Result<Vec<_>>>()?;
        Ok(ex)
    }

    pub fn from_angles(theta: f64, alpha: f64, beta: f64) -> Result<Self> {
        StandardExample::new(FamilyAngles::new(theta, alpha, beta)?)
    }

    pub fn base_point(&self) -> CurvePoint {
        CurvePoint::standard(c64(0.0, 0.0), c64(1.0, 0.0))
    }

    /// The pole of g whose sheet is continued from (0, +1) along a straight segment.
    pub fn end_a(&self) -> Result<CurvePoint> {
        match self.mobius.pole() {
            SphereValue::Infinity => Ok(CurvePoint::reciprocal(c64(0.0, 0.0), c64(1.0, 0.0))),
            SphereValue::Finite(zq) => {
                let p = continue_to(&self.curve, &self.base_point(), zq)?;
                Ok(preferred_chart(&p))
            }
        }
    }

    /// Rotation angle psi for which e^{i psi} g has real end residues.
    pub fn rotation(&self) -> f64 {
        -self.e_factor.arg()
    }

    pub fn rotated_mobius(&self) -> Mobius {
        self.mobius.rotated(self.rotation())
    }

    fn end_point(&self, p: CurvePoint) -> Result<EndPoint> {
        let gv = gauss_map(&self.angles, &p);
        let is_zero = matches!(gv, SphereValue::Finite(g) if g.norm() < 1e-8);
        let residue = self.analytic_residue(&p, &self.mobius, is_zero)?;
        let flux = if is_zero { PI * residue.conj() } else { -PI * residue };
        let rotated = flux * C64::from_polar(1.0, self.rotation());
        Ok(EndPoint {
            point: p,
            gauss_value: if is_zero { GaussValue::Zero } else { GaussValue::Pole },
            limit_normal: if is_zero { [0.0, 0.0, -1.0] } else { [0.0, 0.0, 1.0] },
            side: if rotated.re >= 0.0 { Side::Right } else { Side::Left },
            residue,
            flux,
        })
    }

    /// Res(mu dz/(g w)) at a zero or Res(g mu dz/w) at a pole, in closed form.
    fn analytic_residue(&self, p: &CurvePoint, m: &Mobius, at_zero: bool) -> Result<C64> {
        let p = match p.chart {
            Chart::Reciprocal if p.z.norm() == 0.0 => {
                // pole at infinity: g phi = -mu (a + b zeta) / (d zeta W) dzeta
                return Ok(-self.mu * m.a / (m.d * p.w));
            }
            Chart::Reciprocal => self.curve.to_standard(p).expect("finite point"),
            Chart::Standard => *p,
        };
        if at_zero {
            Ok(self.mu / (m.derivative(p.z) * p.w))
        } else {
            Ok(self.mu * (m.a * p.z + m.b) / (m.c * p.w))
        }
    }

    /// The lift of |z| = 1 (radius nudged to 1 +- 1e-3 if an end lies on it),
    /// starting at z = r with w continued along the positive real axis.
    pub fn gamma2(&self) -> Result<LiftedCycle> {
        let end_z: Vec<C64> = [self.mobius.zero(), self.mobius.pole()].iter().filter_map(|v| v.finite()).collect();
        let clear = |r: f64| end_z.iter().all(|z| (z.norm() - r).abs() > 1e-9);
        let radius = [1.0, 1.0 + 1e-3, 1.0 - 1e-3]
            .into_iter()
            .find(|r| clear(*r))
            .ok_or_else(|| Error::DegenerateCycle("no clear radius for gamma2".into()))?;
        let circle = Contour::circle(c64(0.0, 0.0), radius)?;
        let w0 = self.curve.eval_q(c64(radius, 0.0)).sqrt();
        continue_w(&self.curve, &circle, w0)
    }

    /// Ellipse around i/lambda and i lambda avoiding the ends; sheet continued from (0, +1).
    pub fn gamma1(&self) -> Result<LiftedCycle> {
        let avoid: Vec<C64> = [self.mobius.zero(), self.mobius.pole()].iter().filter_map(|v| v.finite()).collect();
        let base = self.base_point();
        cycle_around_pair(
            &self.curve,
            c64(0.0, 1.0 / self.lambda),
            c64(0.0, self.lambda),
            None,
            &avoid,
            Some(&base),
        )
    }

    /// Phi = (1/2 (1/g - g), i/2 (1/g + g), 1) mu/w as coefficients of dz.
    pub fn weierstrass_form(&self, p: &CurvePoint) -> Result<[C64; 3]> {
        let p = self
            .curve
            .to_standard(p)
            .ok_or_else(|| Error::Invalid("Weierstrass form needs finite z".into()))?;
        let g = match self.mobius.apply(p.z) {
            SphereValue::Finite(g) if g.norm() > 0.0 => g,
            _ => return Err(Error::Invalid("Weierstrass form requested at an end".into())),
        };
        let dh = self.mu / p.w;
        Ok([0.5 * (1.0 / g - g) * dh, 0.5 * I * (1.0 / g + g) * dh, dh])
    }

    /// Zeros then poles, each ordered so the first has Re(rotated residue) > 0
    /// for the zero and < 0 for the pole.
    fn ordered_ends(&self, m: &Mobius) -> Result<Vec<CurvePoint>> {
        let mut zeros: Vec<CurvePoint> = vec![];
        let mut poles: Vec<CurvePoint> = vec![];
        for e in &self.ends {
            match e.gauss_value {
                GaussValue::Zero => zeros.push(e.point),
                GaussValue::Pole => poles.push(e.point),
            }
        }
        let rz = self.analytic_residue(&zeros[0], m, true)?;
        if rz.re < 0.0 {
            zeros.swap(0, 1);
        }
        let rp = self.analytic_residue(&poles[0], m, false)?;
        if rp.re > 0.0 {
            poles.swap(0, 1);
        }
        Ok(zeros.into_iter().chain(poles).collect())
    }

    /// The rotated example as a marked datum in the z-coordinate, marked by gamma2.
    pub fn marked_datum(&self, cfg: &QuadratureConfig) -> Result<MarkedDatum> {
        let m = self.rotated_mobius();
        let ends = self.ordered_ends(&m)?;
        MarkedDatum::new(self.curve.clone(), m, ends, self.gamma2()?, cfg)
    }

    /// The rotated example pushed forward to the g-coordinate:
    /// w~ = kappa w / (cz + d)^2 with kappa^2 = det^4 / prod(c r + d), and the
    /// marked cycle the image circle of gamma2.
    pub fn gauss_datum(&self, cfg: &QuadratureConfig) -> Result<MarkedDatum> {
        let m = self.rotated_mobius();
        let det = m.det();
        let roots = &self.curve.finite_roots;
        let mut prod = c64(1.0, 0.0);
        let mut images = vec![];
        for r in roots {
            let den = m.c * r + m.d;
            if den.norm() < 1e-12 {
                return Err(Error::SingularParameter("Gauss map has a pole at a branch point".into()));
            }
            prod *= den;
            images.push((m.a * r + m.b) / den);
        }
        let kappa = (det.powu(4) / prod).sqrt();
        let curve = HyperellipticCurve::new(images, vec![], c64(1.0, 0.0))?;
        let push = |p: &CurvePoint| -> CurvePoint {
            match p.chart {
                Chart::Standard => {
                    let den = m.c * p.z + m.d;
                    if den.norm() < 1e-14 {
                        CurvePoint::reciprocal(c64(0.0, 0.0), kappa * p.w / (m.a * p.z + m.b).powu(2))
                    } else {
                        let num = m.a * p.z + m.b;
                        if num.norm() < 1e-14 {
                            CurvePoint::standard(c64(0.0, 0.0), kappa * p.w / den.powu(2))
                        } else {
                            CurvePoint::standard(num / den, kappa * p.w / den.powu(2))
                        }
                    }
                }
                // only the point over z = infinity is used here
                Chart::Reciprocal => CurvePoint::reciprocal(c64(0.0, 0.0), kappa * p.w / (m.a * m.a)),
            }
        };
        let ends: Vec<CurvePoint> = self
            .ordered_ends(&m)?
            .iter()
            .map(|p| match p.chart {
                Chart::Reciprocal if p.z.norm() > 0.0 => push(&self.curve.to_standard(p).expect("finite")),
                _ => push(p),
            })
            .collect();
        let g2 = self.gamma2()?;
        let r = g2.base.start().re;
        let pts: Vec<C64> = [c64(r, 0.0), c64(0.0, r), c64(-r, 0.0)]
            .iter()
            .map(|z| m.apply(*z).finite().ok_or_else(|| Error::DegenerateCycle("pole on gamma2".into())))
            .collect::<Result<_>>()?;
        let (center, radius, orientation) = circumcircle(pts[0], pts[1], pts[2])?;
        let start = pts[0];
        let circle = Contour::circle_with(center, radius, orientation, (start - center).arg())?;
        let start_w = push(&CurvePoint::standard(c64(r, 0.0), g2.start_w)).w;
        let cycle = continue_w(&curve, &circle, start_w)?;
        MarkedDatum::new(curve, Mobius::identity(), ends, cycle, cfg)
    }

    /// Res(g dh) at A and the flux -pi R there.
    pub fn flux_at_a(&self) -> C64 {
        self.ends[0].flux
    }
}

/// Flux along gamma1 against the flux at A, and the real period along gamma2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxCheck {
    pub flux_gamma1: C64,
    pub flux_end_a: C64,
    pub period_gamma2: [f64; 3],
}

impl FluxCheck {
    /// |F_gamma1 + F_A| and max |P_gamma2|.
    pub fn errors(&self) -> (f64, f64) {
        let p = self.period_gamma2.iter().map(|x| x.abs()).fold(0.0, f64::max);
        ((self.flux_gamma1 + self.flux_end_a).norm(), p)
    }
}

pub fn flux_check(ex: &StandardExample, cfg: &QuadratureConfig) -> Result<FluxCheck> {
    let p1 = family_period(ex, &ex.gamma1()?, cfg)?;
    let p2 = family_period(ex, &ex.gamma2()?, cfg)?;
    Ok(FluxCheck {
        flux_gamma1: c64(p1[0].im, p1[1].im),
        flux_end_a: ex.flux_at_a(),
        period_gamma2: [p2[0].re, p2[1].re, p2[2].re],
    })
}

/// Center, radius and orientation of the circle through three points.
pub fn circumcircle(a: C64, b: C64, c: C64) -> Result<(C64, f64, i8)> {
    let d = 2.0 * (a.re * (b.im - c.im) + b.re * (c.im - a.im) + c.re * (a.im - b.im));
    if d.abs() < 1e-12 {
        return Err(Error::DegenerateCycle("image of gamma2 is not a circle".into()));
    }
    let (na, nb, nc) = (a.norm_sqr(), b.norm_sqr(), c.norm_sqr());
    let ux = (na * (b.im - c.im) + nb * (c.im - a.im) + nc * (a.im - b.im)) / d;
    let uy = (na * (c.re - b.re) + nb * (a.re - c.re) + nc * (b.re - a.re)) / d;
    let center = c64(ux, uy);
    let orientation = if ((b - a).conj() * (c - b)).im > 0.0 { 1 } else { -1 };
    Ok((center, (a - center).norm(), orientation))
}

/// Weierstrass period of the unrotated example along a lifted cycle.
pub fn family_period(ex: &StandardExample, cycle: &LiftedCycle, cfg: &QuadratureConfig) -> Result<[C64; 3]> {
    let d = MarkedDatum {
        curve: ex.curve.clone(),
        gauss: ex.mobius,
        phi_coeff: c64(ex.mu, 0.0),
        ends: vec![],
        marked_cycle: cycle.clone(),
    };
    let ginv = d.cycle_integral(Form::GInvPhi, cycle, cfg)?;
    let g = d.cycle_integral(Form::GPhi, cycle, cfg)?;
    let h = d.cycle_integral(Form::Phi, cycle, cfg)?;
    Ok([0.5 * (ginv - g), 0.5 * I * (ginv + g), h])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::integrate_lifted;
    use crate::periods::{closes_periods, ligature};
    use std::f64::consts::FRAC_PI_4;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn mu_values() {
        assert!((mu(FRAC_PI_4).unwrap() - 2.396280469471185).abs() < 1e-13);
        assert!((mu(PI / 6.0).unwrap() - 3.7272335664897933).abs() < 1e-12);
        assert!((mu(PI / 3.0).unwrap() - 1.6821573878559286).abs() < 1e-13);
        assert!(mu(FRAC_PI_2 - 1e-6).unwrap() < mu(FRAC_PI_2 - 1e-3).unwrap());
        assert!(mu(FRAC_PI_2 - 1e-6).unwrap() < 0.5);
        assert!(matches!(mu(0.0), Err(Error::Domain(_))));
        assert!(matches!(mu(FRAC_PI_2), Err(Error::Domain(_))));
    }

    #[test]
    fn mu_normalizes_gamma2() {
        for theta in [PI / 6.0, FRAC_PI_4, PI / 3.0] {
            let ex = StandardExample::from_angles(theta, 0.0, 0.0).unwrap();
            let g2 = ex.gamma2().unwrap();
            let v = integrate_lifted(&ex.curve, &g2.base, g2.start_w, |_, w| 1.0 / w, &cfg()).unwrap();
            let r = v * ex.mu / c64(0.0, 2.0 * PI);
            assert!((r - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn gauss_map_examples() {
        let z = c64(0.3, -0.2);
        let p = CurvePoint::standard(z, c64(1.0, 0.0));
        let id = FamilyAngles::new(0.7, 0.0, 0.0).unwrap();
        assert!((gauss_map(&id, &p).finite().unwrap() - z).norm() < 1e-15);
        let q = FamilyAngles::new(0.7, FRAC_PI_2, 0.0).unwrap();
        let expected = (z + 1.0) / (1.0 - z);
        assert!((gauss_map(&q, &p).finite().unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn e_factor_examples() {
        let t = 0.6;
        assert!((e_factor(&FamilyAngles::new(t, 0.0, 0.0).unwrap()).unwrap() - 1.0).norm() < 1e-15);
        let e = e_factor(&FamilyAngles::new(t, FRAC_PI_2, 0.0).unwrap()).unwrap();
        assert!((e - t.sin()).norm() < 1e-14);
        assert!(matches!(FamilyAngles::new(t, 0.0, t), Err(Error::SingularParameter(_))));
        let near = FamilyAngles { theta: t, alpha: 0.0, beta: t };
        assert!(matches!(e_factor(&near), Err(Error::SingularParameter(_))));
    }

    #[test]
    fn end_values_at_pi_over_4() {
        let a = FamilyAngles::new(FRAC_PI_4, 0.0, 0.0).unwrap();
        let (p, f) = end_period_flux(&a).unwrap();
        assert!(p[0].abs() < 1e-14 && (p[1] - 7.528137118831375).abs() < 1e-12);
        let pm = (p[0].powi(2) + p[1].powi(2)).sqrt();
        let fm = (f[0].powi(2) + f[1].powi(2)).sqrt();
        assert!((pm - fm).abs() < 1e-13);
    }

    #[test]
    fn conjugation() {
        let a = FamilyAngles::new(FRAC_PI_4, 0.4, FRAC_PI_4).unwrap();
        assert_eq!(conjugate_parameters(&a).unwrap(), a);
        let b = FamilyAngles::new(PI / 6.0, 0.3, 0.1).unwrap();
        let c = conjugate_parameters(&b).unwrap();
        assert!((c.theta - PI / 3.0).abs() < 1e-15 && c.alpha == 0.3 && (c.beta - (FRAC_PI_2 - 0.1)).abs() < 1e-15);
        let back = conjugate_parameters(&c).unwrap();
        assert!((back.theta - b.theta).abs() < 1e-15 && (back.beta - b.beta).abs() < 1e-15);
    }

    #[test]
    fn spherical_configuration_matches_branch_values() {
        for (t, a, b) in [(0.4, 0.0, 0.0), (FRAC_PI_4, 0.3, 0.2), (1.2, 1.4, 0.7), (0.9, 0.1, 1.5)] {
            let angles = FamilyAngles::new(t, a, b).unwrap();
            let config = spherical_configuration(&angles);
            for i in 0..2 {
                for j in 0..3 {
                    assert_eq!(config[i + 2][j], -config[i][j]);
                }
            }
            let m = angles.mobius();
            let lambda = angles.lambda();
            for r in [c64(0.0, lambda), c64(0.0, -lambda), c64(0.0, 1.0 / lambda), c64(0.0, -1.0 / lambda)] {
                let g = m.apply(r).finite().unwrap();
                let best = config
                    .iter()
                    .map(|n| (stereographic(*n).finite().unwrap() - g).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-10, "{t} {a} {b}: {best}");
            }
        }
    }

    #[test]
    fn involutions() {
        let ex = StandardExample::from_angles(0.8, 0.3, 0.6).unwrap();
        let z = c64(0.4, 0.7);
        let p = ex.curve.point_near(z, c64(1.0, 0.0));
        assert_eq!(involution_d(&involution_d(&p)), p);
        let e = involution_e(&p);
        assert!(ex.curve.on_curve(&e));
        assert_eq!(involution_e(&e), p);
        // E^* Phi = -conj(Phi): Phi(E p) conj(dz)/conj(z)^2 = -conj(Phi(p) dz)
        let ep = ex.curve.to_standard(&e).unwrap();
        let lhs = ex.weierstrass_form(&ep).unwrap();
        let rhs = ex.weierstrass_form(&p).unwrap();
        for i in 0..3 {
            assert!((lhs[i] / z.conj().powu(2) + rhs[i].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn end_bookkeeping() {
        let ex = StandardExample::from_angles(FRAC_PI_4, 0.3, 0.2).unwrap();
        let kinds: Vec<GaussValue> = ex.ends.iter().map(|e| e.gauss_value).collect();
        assert_eq!(kinds, vec![GaussValue::Pole, GaussValue::Zero, GaussValue::Pole, GaussValue::Zero]);
        for e in &ex.ends {
            assert!(ex.curve.on_curve(&e.point));
            assert!((e.flux.norm() - PI * ex.mu * ex.e_factor.norm()).abs() < 1e-10);
        }
        assert_eq!(ex.ends[0].side, Side::Right);
        let r = ex.ends[0].residue;
        assert!((-PI * r - PI * ex.mu * ex.e_factor).norm() < 1e-10 || (-PI * r + PI * ex.mu * ex.e_factor).norm() < 1e-10);
    }

    #[test]
    fn rotated_ligature_closes() {
        let ex = StandardExample::from_angles(FRAC_PI_4, 0.3, 0.2).unwrap();
        let d = ex.marked_datum(&cfg()).unwrap();
        let l = ligature(&d, &cfg()).unwrap();
        assert!((l.entries[0] - 2.363873356391649).norm() < 1e-9);
        assert!((l.entries[2] - c64(-0.5958485729248261, -0.9259346776153112)).norm() < 1e-9);
        let cv = closes_periods(&d, 1e-8, &cfg()).unwrap().unwrap();
        assert!((cv.a - ex.mu * ex.e_factor.norm()).abs() < 1e-9);
        // the same tuple in the g-coordinate
        let dg = ex.gauss_datum(&cfg()).unwrap();
        let lg = ligature(&dg, &cfg()).unwrap();
        assert!(l.distance(&lg) < 1e-9, "{:?} {:?}", l.entries, lg.entries);
    }

    #[test]
    fn flux_identities() {
        for (t, a, b) in [(FRAC_PI_4, 0.0, 0.0), (FRAC_PI_4, 0.3, 0.2), (PI / 6.0, 1.4, 0.1), (PI / 3.0, 0.75, 1.4)] {
            let ex = StandardExample::from_angles(t, a, b).unwrap();
            let (f, p) = flux_check(&ex, &cfg()).unwrap().errors();
            assert!(f < 1e-8 && p < 1e-8, "{t} {a} {b}: {f} {p}");
        }
    }

    #[test]
    fn metric_factor_positive() {
        let a = FamilyAngles::new(0.5, 0.2, 0.3).unwrap();
        let ex = StandardExample::new(a).unwrap();
        let p = ex.curve.point_near(c64(0.2, 0.1), c64(1.0, 0.0));
        assert!(metric_factor(&a, &p).unwrap() > 0.0);
    }
}
