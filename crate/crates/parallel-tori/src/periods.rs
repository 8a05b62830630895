//! Marked Weierstrass data, the normalized differential, the ligature map
//! and the classifying map.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::{continue_to, continue_w, integrate_lifted, Chart, CurvePoint, HyperellipticCurve, LiftedCycle};
use crate::error::{Error, Result};
use crate::numerics::{c64, is_finite, sqrt_near, Contour, QuadratureConfig, C64, I};

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SphereValue {
    Finite(C64),
    Infinity,
}

impl SphereValue {
    pub fn finite(self) -> Option<C64> {
        match self {
            SphereValue::Finite(z) => Some(z),
            SphereValue::Infinity => None,
        }
    }

    /// Unit normal N = (2 Re g, 2 Im g, |g|^2 - 1) / (|g|^2 + 1).
    pub fn normal(self) -> [f64; 3] {
        match self {
            SphereValue::Infinity => [0.0, 0.0, 1.0],
            SphereValue::Finite(g) => {
                let n2 = g.norm_sqr();
                if n2 > 1e200 {
                    return [0.0, 0.0, 1.0];
                }
                let d = n2 + 1.0;
                [2.0 * g.re / d, 2.0 * g.im / d, (n2 - 1.0) / d]
            }
        }
    }
}

/// g(z) = (a z + b) / (c z + d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl Mobius {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Result<Self> {
        let m = Mobius { a, b, c, d };
        if m.det().norm() < 1e-14 {
            return Err(Error::Invalid("Moebius transformation is singular".into()));
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Mobius { a: c64(1.0, 0.0), b: c64(0.0, 0.0), c: c64(0.0, 0.0), d: c64(1.0, 0.0) }
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: C64) -> SphereValue {
        let den = self.c * z + self.d;
        if den.norm() == 0.0 {
            SphereValue::Infinity
        } else {
            SphereValue::Finite((self.a * z + self.b) / den)
        }
    }

    pub fn apply_sphere(&self, z: SphereValue) -> SphereValue {
        match z {
            SphereValue::Finite(z) => self.apply(z),
            SphereValue::Infinity if self.c.norm() == 0.0 => SphereValue::Infinity,
            SphereValue::Infinity => SphereValue::Finite(self.a / self.c),
        }
    }

    /// g as a function of zeta = 1/z.
    pub fn eval_reciprocal(&self, zeta: C64) -> C64 {
        (self.a + self.b * zeta) / (self.c + self.d * zeta)
    }

    /// g at a curve point; may be non-finite at a pole.
    pub fn eval_point(&self, p: &CurvePoint) -> C64 {
        match p.chart {
            Chart::Standard => (self.a * p.z + self.b) / (self.c * p.z + self.d),
            Chart::Reciprocal => self.eval_reciprocal(p.z),
        }
    }

    pub fn derivative(&self, z: C64) -> C64 {
        self.det() / (self.c * z + self.d).powu(2)
    }

    pub fn zero(&self) -> SphereValue {
        self.inverse().apply(c64(0.0, 0.0))
    }

    pub fn pole(&self) -> SphereValue {
        if self.c.norm() == 0.0 {
            SphereValue::Infinity
        } else {
            SphereValue::Finite(-self.d / self.c)
        }
    }

    pub fn inverse(&self) -> Mobius {
        Mobius { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// e^{i psi} g.
    pub fn rotated(&self, psi: f64) -> Mobius {
        let r = C64::from_polar(1.0, psi);
        Mobius { a: self.a * r, b: self.b * r, ..*self }
    }
}

/// The three differentials assembled from g and phi.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Phi,
    GInvPhi,
    GPhi,
}

/// (curve, g, p_1..p_2k, q_1..q_2k, [gamma]) with phi = phi_coeff dz/w
/// normalized so that its integral over the marked cycle is 2 pi i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedDatum {
    pub curve: HyperellipticCurve,
    pub gauss: Mobius,
    pub phi_coeff: C64,
    pub ends: Vec<CurvePoint>,
    pub marked_cycle: LiftedCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LigatureTuple {
    pub k: usize,
    pub entries: Vec<C64>,
}

impl LigatureTuple {
    pub fn distance(&self, other: &LigatureTuple) -> f64 {
        self.entries.iter().zip(other.entries.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| is_finite(*e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyingValue {
    pub a: f64,
    pub b: C64,
}

/// The coefficient c with the integral of c dz/w over the cycle equal to 2 pi i.
pub fn normalize_phi(curve: &HyperellipticCurve, cycle: &LiftedCycle, cfg: &QuadratureConfig) -> Result<C64> {
    if !cycle.base.is_closed() || !cycle.closes() {
        return Err(Error::DegenerateCycle("marked cycle is not closed on the curve".into()));
    }
    let period = integrate_lifted(curve, &cycle.base, cycle.start_w, |_, w| 1.0 / w, cfg)?;
    if period.norm() < 1e-12 {
        return Err(Error::DegenerateCycle(format!("period of dz/w is {period}")));
    }
    Ok(c64(0.0, 2.0 * PI) / period)
}

impl MarkedDatum {
    pub fn new(
        curve: HyperellipticCurve,
        gauss: Mobius,
        ends: Vec<CurvePoint>,
        marked_cycle: LiftedCycle,
        cfg: &QuadratureConfig,
    ) -> Result<Self> {
        if ends.is_empty() || !ends.len().is_multiple_of(4) {
            return Err(Error::Invalid(format!("need 4k ends, got {}", ends.len())));
        }
        let half = ends.len() / 2;
        for (i, p) in ends.iter().enumerate() {
            if !curve.on_curve(p) {
                return Err(Error::Invalid(format!("end {i} is not on the curve")));
            }
            let g = gauss.eval_point(p);
            let ok = if i < half { g.norm() < 1e-9 } else { !is_finite(g) || g.norm() > 1e9 };
            if !ok {
                return Err(Error::Invalid(format!("end {i} is not a {} of g", if i < half { "zero" } else { "pole" })));
            }
        }
        let phi_coeff = normalize_phi(&curve, &marked_cycle, cfg)?;
        Ok(MarkedDatum { curve, gauss, phi_coeff, ends, marked_cycle })
    }

    pub fn k(&self) -> usize {
        self.ends.len() / 4
    }

    pub fn zeros(&self) -> &[CurvePoint] {
        &self.ends[..self.ends.len() / 2]
    }

    pub fn poles(&self) -> &[CurvePoint] {
        &self.ends[self.ends.len() / 2..]
    }

    /// Coefficient of d(chart coordinate) for the given form.
    pub fn form_coefficient(&self, form: Form, chart: Chart, x: C64, w: C64) -> C64 {
        let (g, base) = match chart {
            Chart::Standard => (self.gauss.eval_point(&CurvePoint::standard(x, w)), self.phi_coeff / w),
            Chart::Reciprocal => {
                let m = self.curve.degree() as i32 / 2;
                (self.gauss.eval_reciprocal(x), -self.phi_coeff * x.powi(m - 2) / w)
            }
        };
        match form {
            Form::Phi => base,
            Form::GInvPhi => base / g,
            Form::GPhi => base * g,
        }
    }

    fn chart_curve(&self, chart: Chart) -> HyperellipticCurve {
        match chart {
            Chart::Standard => self.curve.clone(),
            Chart::Reciprocal => reciprocal_curve(&self.curve),
        }
    }

    /// Projections of ends and branch points, expressed in the given chart.
    fn obstacles(&self, chart: Chart) -> Vec<C64> {
        let mut pts: Vec<Option<C64>> = self.curve.branch_points();
        for e in &self.ends {
            pts.push(match e.chart {
                Chart::Standard => Some(e.z),
                Chart::Reciprocal if e.z.norm() > 0.0 => Some(1.0 / e.z),
                Chart::Reciprocal => None,
            });
        }
        pts.into_iter()
            .filter_map(|p| match (chart, p) {
                (Chart::Standard, Some(z)) => Some(z),
                (Chart::Reciprocal, Some(z)) if z.norm() > 0.0 => Some(1.0 / z),
                (Chart::Reciprocal, Some(_)) => None,
                (Chart::Reciprocal, None) => Some(c64(0.0, 0.0)),
                (Chart::Standard, None) => None,
            })
            .collect()
    }

    /// Residue of the form at a point of the curve, by quadrature over a
    /// circle of a quarter of the distance to the nearest other end or branch point.
    pub fn residue_at_point(&self, form: Form, p: &CurvePoint, cfg: &QuadratureConfig) -> Result<C64> {
        let curve = self.chart_curve(p.chart);
        let clearance = self
            .obstacles(p.chart)
            .into_iter()
            .map(|q| (q - p.z).norm())
            .filter(|d| *d > 1e-12)
            .fold(f64::INFINITY, f64::min);
        let radius = if clearance.is_finite() { 0.25 * clearance } else { 0.25 };
        let circle = Contour::circle(p.z, radius)?;
        let start = continue_to(&curve, &CurvePoint::standard(p.z, p.w), circle.start())?;
        let chart = p.chart;
        let v = integrate_lifted(&curve, &circle, start.w, |x, w| self.form_coefficient(form, chart, x, w), cfg)?;
        Ok(v / c64(0.0, 2.0 * PI))
    }

    pub fn end_residue(&self, form: Form, index: usize, cfg: &QuadratureConfig) -> Result<C64> {
        let p = self.ends.get(index).ok_or_else(|| Error::Invalid(format!("no end {index}")))?;
        self.residue_at_point(form, p, cfg)
    }

    /// Integral of the form along a lifted cycle in the standard chart.
    pub fn cycle_integral(&self, form: Form, cycle: &LiftedCycle, cfg: &QuadratureConfig) -> Result<C64> {
        integrate_lifted(&self.curve, &cycle.base, cycle.start_w, |z, w| self.form_coefficient(form, Chart::Standard, z, w), cfg)
    }

    /// The Weierstrass period of Phi = (1/2 (1/g - g), i/2 (1/g + g), 1) phi.
    pub fn weierstrass_period(&self, cycle: &LiftedCycle, cfg: &QuadratureConfig) -> Result<[C64; 3]> {
        let ginv = self.cycle_integral(Form::GInvPhi, cycle, cfg)?;
        let g = self.cycle_integral(Form::GPhi, cycle, cfg)?;
        let h = self.cycle_integral(Form::Phi, cycle, cfg)?;
        Ok([0.5 * (ginv - g), 0.5 * I * (ginv + g), h])
    }

    /// The same marked data over a nearby curve: ends keep their
    /// projections, every sheet is chosen nearest to the current one.
    pub fn rebuild(&self, curve: HyperellipticCurve, cfg: &QuadratureConfig) -> Result<MarkedDatum> {
        let recip = reciprocal_curve(&curve);
        let ends = self
            .ends
            .iter()
            .map(|e| {
                let q = match e.chart {
                    Chart::Standard => curve.eval_q(e.z),
                    Chart::Reciprocal => recip.eval_q(e.z),
                };
                CurvePoint { w: sqrt_near(q, e.w), ..*e }
            })
            .collect();
        let base = &self.marked_cycle.base;
        let w0 = sqrt_near(curve.eval_q(base.start()), self.marked_cycle.start_w);
        let cycle = continue_w(&curve, base, w0)?;
        MarkedDatum::new(curve, self.gauss, ends, cycle, cfg)
    }
}

/// The curve W^2 = zeta^n Q(1/zeta) as a curve in its own right.
pub fn reciprocal_curve(curve: &HyperellipticCurve) -> HyperellipticCurve {
    HyperellipticCurve {
        finite_roots: curve.far_roots.clone(),
        far_roots: curve.finite_roots.clone(),
        leading_scale: curve.leading_scale,
    }
}

/// (Res_{p_1..p_{2k-1}}(phi/g), Res_{q_1..q_{2k-1}}(g phi), int_gamma phi/g, int_gamma g phi).
pub fn ligature(d: &MarkedDatum, cfg: &QuadratureConfig) -> Result<LigatureTuple> {
    let k = d.k();
    let mut entries = Vec::with_capacity(4 * k);
    for i in 0..2 * k - 1 {
        entries.push(d.end_residue(Form::GInvPhi, i, cfg)?);
    }
    for i in 0..2 * k - 1 {
        entries.push(d.end_residue(Form::GPhi, 2 * k + i, cfg)?);
    }
    entries.push(d.cycle_integral(Form::GInvPhi, &d.marked_cycle, cfg)?);
    entries.push(d.cycle_integral(Form::GPhi, &d.marked_cycle, cfg)?);
    Ok(LigatureTuple { k, entries })
}

/// The tuple L_(a,b): blocks of a, -a, -a, a of lengths k, k-1, k, k-1, then b and conj(b).
pub fn target_tuple(a: f64, b: C64, k: usize) -> Result<LigatureTuple> {
    if k < 1 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if a == 0.0 || !a.is_finite() || !is_finite(b) {
        return Err(Error::Invalid("a must be a nonzero real and b finite".into()));
    }
    let a = c64(a, 0.0);
    let mut entries = Vec::with_capacity(4 * k);
    entries.extend(std::iter::repeat_n(a, k));
    entries.extend(std::iter::repeat_n(-a, k - 1));
    entries.extend(std::iter::repeat_n(-a, k));
    entries.extend(std::iter::repeat_n(a, k - 1));
    entries.push(b);
    entries.push(b.conj());
    Ok(LigatureTuple { k, entries })
}

/// Best-matching (a, b) for a tuple together with the max entrywise deviation.
pub fn best_target(tuple: &LigatureTuple) -> (ClassifyingValue, f64) {
    let n = tuple.entries.len();
    let first = tuple.entries[0];
    let cv = ClassifyingValue { a: first.re, b: tuple.entries[n - 2] };
    let residual = match target_tuple(cv.a, cv.b, tuple.k) {
        Ok(t) => tuple.distance(&t),
        Err(_) => f64::INFINITY,
    };
    (cv, residual)
}

/// (a, b) when the tuple matches a target within tol, with a required real.
pub fn match_target(tuple: &LigatureTuple, tol: f64) -> Option<ClassifyingValue> {
    let first = tuple.entries[0];
    if first.im.abs() >= tol * (1.0 + first.norm()) {
        return None;
    }
    let (cv, residual) = best_target(tuple);
    (residual < tol).then_some(cv)
}

pub fn closes_periods(d: &MarkedDatum, tol: f64, cfg: &QuadratureConfig) -> Result<Option<ClassifyingValue>> {
    Ok(match_target(&ligature(d, cfg)?, tol))
}

/// Horizontal flux i * int g phi along the cycle.
pub fn horizontal_flux(d: &MarkedDatum, cycle: &LiftedCycle, cfg: &QuadratureConfig) -> Result<C64> {
    Ok(I * d.cycle_integral(Form::GPhi, cycle, cfg)?)
}

/// (a, b) with a = Res_{p_1}(phi/g) and the flux along gamma equal to (i conj(b), 2 pi).
pub fn classify(d: &MarkedDatum, tol: f64, cfg: &QuadratureConfig) -> Result<ClassifyingValue> {
    let tuple = ligature(d, cfg)?;
    let (_, residual) = best_target(&tuple);
    if match_target(&tuple, tol).is_none() {
        return Err(Error::NotClosed(residual));
    }
    let a = tuple.entries[0].re;
    let flux = horizontal_flux(d, &d.marked_cycle, cfg)?;
    Ok(ClassifyingValue { a, b: I * flux.conj() })
}

/// Horizontal flux and period at an end from its residue:
/// zeros of g give F = pi conj(r), P = -i pi conj(r) with r = Res(phi/g);
/// poles give F = -pi R, P = -i pi R with R = Res(g phi).
pub fn end_flux_period(d: &MarkedDatum, index: usize, cfg: &QuadratureConfig) -> Result<(C64, C64)> {
    if index < d.ends.len() / 2 {
        let r = d.end_residue(Form::GInvPhi, index, cfg)?.conj();
        Ok((PI * r, -I * PI * r))
    } else {
        let r = d.end_residue(Form::GPhi, index, cfg)?;
        Ok((-PI * r, -I * PI * r))
    }
}
