//! The curve w^2 = Q(z), sheet tracking along contours and cycles around
//! pairs of branch points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    c64, is_finite, segment_distance, sqrt_near, Contour, QuadratureConfig, C64, GL_NODES, GL_WEIGHTS,
};

/// Branch points closer than this to a contour are rejected.
pub const BRANCH_CLEARANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Standard,
    /// zeta = 1/z, W = w zeta^(n/2) for a curve with n branch points
    Reciprocal,
}

/// A point of the curve in chart-local coordinates: (z, w) in the standard
/// chart, (zeta, W) in the reciprocal chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: C64,
    pub w: C64,
    pub chart: Chart,
}

impl CurvePoint {
    pub fn standard(z: C64, w: C64) -> Self {
        CurvePoint { z, w, chart: Chart::Standard }
    }

    pub fn reciprocal(zeta: C64, w: C64) -> Self {
        CurvePoint { z: zeta, w, chart: Chart::Reciprocal }
    }

    /// Deck transformation (z, w) -> (z, -w).
    pub fn deck(&self) -> CurvePoint {
        CurvePoint { w: -self.w, ..*self }
    }

    pub fn is_infinite(&self) -> bool {
        self.chart == Chart::Reciprocal && self.z.norm() == 0.0
    }
}

/// w^2 = leading_scale * prod(z - r) * prod(1 - s z), where `far_roots` holds
/// the inverses s of branch points near infinity (s = 0 is a branch point at
/// infinity itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperellipticCurve {
    pub finite_roots: Vec<C64>,
    pub far_roots: Vec<C64>,
    pub leading_scale: C64,
}

impl HyperellipticCurve {
    pub fn new(finite_roots: Vec<C64>, far_roots: Vec<C64>, leading_scale: C64) -> Result<Self> {
        let n = finite_roots.len() + far_roots.len();
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Invalid(format!("branch count must be even and positive, got {n}")));
        }
        if leading_scale.norm() == 0.0 || !is_finite(leading_scale) {
            return Err(Error::Invalid("leading scale must be finite and nonzero".into()));
        }
        if finite_roots.iter().chain(far_roots.iter()).any(|r| !is_finite(*r)) {
            return Err(Error::Invalid("branch points must be finite".into()));
        }
        for list in [&finite_roots, &far_roots] {
            for i in 0..list.len() {
                for j in 0..i {
                    if (list[i] - list[j]).norm() < 1e-12 {
                        return Err(Error::BranchCollision(format!("{} and {}", list[i], list[j])));
                    }
                }
            }
        }
        for r in &finite_roots {
            for s in &far_roots {
                if (r * s - 1.0).norm() < 1e-12 {
                    return Err(Error::BranchCollision(format!("{r} and 1/{s}")));
                }
            }
        }
        Ok(HyperellipticCurve { finite_roots, far_roots, leading_scale })
    }

    /// The rectangular torus with branch points +-i lambda, +-i/lambda.
    pub fn rectangular(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || (lambda - 1.0).abs() < 1e-14 {
            return Err(Error::Domain(format!("lambda must be positive and not 1, got {lambda}")));
        }
        let roots = vec![c64(0.0, lambda), c64(0.0, -lambda), c64(0.0, 1.0 / lambda), c64(0.0, -1.0 / lambda)];
        HyperellipticCurve::new(roots, vec![], c64(1.0, 0.0))
    }

    pub fn degree(&self) -> usize {
        self.finite_roots.len() + self.far_roots.len()
    }

    pub fn roots_at_infinity(&self) -> usize {
        self.far_roots.len()
    }

    /// Branch points projected to the z-plane (None for a branch point at infinity).
    pub fn branch_points(&self) -> Vec<Option<C64>> {
        let far = self.far_roots.iter().map(|s| if s.norm() > 0.0 { Some(1.0 / s) } else { None });
        self.finite_roots.iter().map(|r| Some(*r)).chain(far).collect()
    }

    pub fn finite_branch_points(&self) -> Vec<C64> {
        self.branch_points().into_iter().flatten().collect()
    }

    pub fn is_branch_point(&self, z: C64) -> bool {
        self.finite_branch_points().iter().any(|r| (r - z).norm() <= 1e-9 * (1.0 + r.norm()))
    }

    pub fn eval_q(&self, z: C64) -> C64 {
        let mut q = self.leading_scale;
        for r in &self.finite_roots {
            q *= z - r;
        }
        for s in &self.far_roots {
            q *= 1.0 - s * z;
        }
        q
    }

    pub fn eval_q_prime(&self, z: C64) -> C64 {
        let factors: Vec<(C64, C64)> = self
            .finite_roots
            .iter()
            .map(|r| (z - r, c64(1.0, 0.0)))
            .chain(self.far_roots.iter().map(|s| (1.0 - s * z, -s)))
            .collect();
        product_rule(&factors) * self.leading_scale
    }

    /// zeta^n Q(1/zeta).
    pub fn eval_reciprocal(&self, zeta: C64) -> C64 {
        let mut q = self.leading_scale;
        for r in &self.finite_roots {
            q *= 1.0 - r * zeta;
        }
        for s in &self.far_roots {
            q *= zeta - s;
        }
        q
    }

    pub fn eval_reciprocal_prime(&self, zeta: C64) -> C64 {
        let factors: Vec<(C64, C64)> = self
            .finite_roots
            .iter()
            .map(|r| (1.0 - r * zeta, -r))
            .chain(self.far_roots.iter().map(|s| (zeta - s, c64(1.0, 0.0))))
            .collect();
        product_rule(&factors) * self.leading_scale
    }

    pub fn eval_in_chart(&self, chart: Chart, x: C64) -> C64 {
        match chart {
            Chart::Standard => self.eval_q(x),
            Chart::Reciprocal => self.eval_reciprocal(x),
        }
    }

    /// The same point in the standard chart, when it has finite z.
    pub fn to_standard(&self, p: &CurvePoint) -> Option<CurvePoint> {
        match p.chart {
            Chart::Standard => Some(*p),
            Chart::Reciprocal if p.z.norm() > 0.0 => {
                let z = 1.0 / p.z;
                Some(CurvePoint::standard(z, p.w * z.powu(self.degree() as u32 / 2)))
            }
            Chart::Reciprocal => None,
        }
    }

    pub fn to_reciprocal(&self, p: &CurvePoint) -> Option<CurvePoint> {
        match p.chart {
            Chart::Reciprocal => Some(*p),
            Chart::Standard if p.z.norm() > 0.0 => {
                let zeta = 1.0 / p.z;
                Some(CurvePoint::reciprocal(zeta, p.w * zeta.powu(self.degree() as u32 / 2)))
            }
            Chart::Standard => None,
        }
    }

    pub fn on_curve(&self, p: &CurvePoint) -> bool {
        let q = self.eval_in_chart(p.chart, p.z);
        (p.w * p.w - q).norm() <= 1e-9 * (1.0 + q.norm())
    }

    /// The point over z whose w is closest to `reference`.
    pub fn point_near(&self, z: C64, reference: C64) -> CurvePoint {
        CurvePoint::standard(z, sqrt_near(self.eval_q(z), reference))
    }

    pub fn min_branch_distance(&self, c: &Contour) -> (f64, C64) {
        self.finite_branch_points()
            .into_iter()
            .map(|r| (c.distance_to(r), r))
            .fold((f64::INFINITY, c64(0.0, 0.0)), |a, b| if b.0 < a.0 { b } else { a })
    }

    fn check_clearance(&self, c: &Contour) -> Result<()> {
        let (d, r) = self.min_branch_distance(c);
        if d < BRANCH_CLEARANCE {
            return Err(Error::BranchTooClose { point: format!("{r}"), distance: d });
        }
        Ok(())
    }
}

fn product_rule(factors: &[(C64, C64)]) -> C64 {
    let mut total = c64(0.0, 0.0);
    for i in 0..factors.len() {
        let mut term = factors[i].1;
        for (j, f) in factors.iter().enumerate() {
            if j != i {
                term *= f.0;
            }
        }
        total += term;
    }
    total
}

/// A contour together with a sheet-continuous choice of w along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedCycle {
    pub base: Contour,
    pub start_w: C64,
    pub samples: Vec<CurvePoint>,
}

impl LiftedCycle {
    pub fn end_w(&self) -> C64 {
        self.samples.last().map(|p| p.w).unwrap_or(self.start_w)
    }

    /// Whether the continued w returns to its start value.
    pub fn closes(&self) -> bool {
        (self.end_w() - self.start_w).norm() <= 1e-8 * self.start_w.norm().max(1e-300)
    }

    pub fn start_point(&self) -> CurvePoint {
        CurvePoint::standard(self.base.start(), self.start_w)
    }

    pub fn reversed(&self) -> LiftedCycle {
        let mut samples = self.samples.clone();
        samples.reverse();
        let start_w = samples.first().map(|p| p.w).unwrap_or(self.start_w);
        LiftedCycle { base: self.base.reversed(), start_w, samples }
    }
}

fn guard_ok(prev: C64, next: C64) -> bool {
    (next - prev).norm() < 0.25 * prev.norm()
}

/// Analytic continuation of w along the contour starting from `w0`.
pub fn continue_w(curve: &HyperellipticCurve, c: &Contour, w0: C64) -> Result<LiftedCycle> {
    curve.check_clearance(c)?;
    let q0 = curve.eval_q(c.start());
    if (w0 * w0 - q0).norm() > 1e-8 * (1.0 + q0.norm()) {
        return Err(Error::Invalid(format!("start value {w0} is not a square root of Q = {q0}")));
    }
    let mut samples = vec![CurvePoint::standard(c.start(), w0)];
    let (mut t, mut w) = (0.0f64, w0);
    let max_dt = 1.0 / 128.0;
    let mut dt = max_dt;
    while t < 1.0 {
        let t1 = (t + dt).min(1.0);
        let z1 = c.point(t1);
        let w1 = sqrt_near(curve.eval_q(z1), w);
        if guard_ok(w, w1) {
            samples.push(CurvePoint::standard(z1, w1));
            t = t1;
            w = w1;
            dt = (dt * 1.5).min(max_dt);
        } else {
            dt *= 0.5;
            if dt < 1e-13 {
                return Err(Error::SheetJump(format!("continuation stalled at t = {t}")));
            }
        }
    }
    Ok(LiftedCycle { base: c.clone(), start_w: w0, samples })
}

/// w at the end of the straight segment from `from` to `to`.
pub fn continue_to(curve: &HyperellipticCurve, from: &CurvePoint, to: C64) -> Result<CurvePoint> {
    let from = curve
        .to_standard(from)
        .ok_or_else(|| Error::Invalid("continuation must start at a finite point".into()))?;
    if (to - from.z).norm() == 0.0 {
        return Ok(from);
    }
    let lifted = continue_w(curve, &Contour::segment(from.z, to), from.w)?;
    Ok(CurvePoint::standard(to, lifted.end_w()))
}

/// Integral of f(z, w) dz along the lifted contour, with w continued from `w0`.
/// Periodic contours must have trivial monodromy.
pub fn integrate_lifted<F>(
    curve: &HyperellipticCurve,
    c: &Contour,
    w0: C64,
    f: F,
    cfg: &QuadratureConfig,
) -> Result<C64>
where
    F: Fn(C64, C64) -> C64,
{
    cfg.validate()?;
    curve.check_clearance(c)?;
    if c.is_periodic() {
        lifted_trapezoid(curve, c, w0, &f, cfg)
    } else {
        let pieces: Vec<Contour> = match c {
            Contour::Polyline { vertices, .. } => {
                vertices.windows(2).map(|s| Contour::segment(s[0], s[1])).collect()
            }
            other => vec![other.clone()],
        };
        let mut total = c64(0.0, 0.0);
        let mut w = w0;
        for piece in &pieces {
            let (v, w_end) = lifted_gauss(curve, piece, w, &f, cfg)?;
            total += v;
            w = w_end;
        }
        Ok(total)
    }
}

fn lifted_trapezoid<F>(curve: &HyperellipticCurve, c: &Contour, w0: C64, f: &F, cfg: &QuadratureConfig) -> Result<C64>
where
    F: Fn(C64, C64) -> C64,
{
    // establish a guarded uniform sampling first
    let mut n = 64usize;
    let mut ws: Vec<C64>;
    loop {
        ws = Vec::with_capacity(n + 1);
        ws.push(w0);
        let mut ok = true;
        for k in 1..=n {
            let prev = ws[k - 1];
            let next = sqrt_near(curve.eval_q(c.point(k as f64 / n as f64)), prev);
            if !guard_ok(prev, next) {
                ok = false;
                break;
            }
            ws.push(next);
        }
        if ok {
            break;
        }
        n *= 2;
        if n > 1 << 22 {
            return Err(Error::SheetJump("could not resolve sheet along periodic contour".into()));
        }
    }
    if (ws[n] - w0).norm() > 1e-6 * w0.norm() {
        return Err(Error::DegenerateCycle("contour has nontrivial monodromy on the curve".into()));
    }
    ws.pop();
    let term = |t: f64, w: C64| f(c.point(t), w) * c.derivative(t);
    let mut sum: C64 = ws.iter().enumerate().map(|(k, w)| term(k as f64 / n as f64, *w)).sum();
    let mut prev = sum / n as f64;
    for _ in 0..cfg.max_refinements {
        let mut refined = Vec::with_capacity(2 * n);
        let mut mid_sum = c64(0.0, 0.0);
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            let wm = sqrt_near(curve.eval_q(c.point(t)), ws[k]);
            mid_sum += term(t, wm);
            refined.push(ws[k]);
            refined.push(wm);
        }
        sum += mid_sum;
        n *= 2;
        ws = refined;
        let cur = sum / n as f64;
        if !is_finite(cur) {
            return Err(Error::NonConvergence("non-finite integrand on lifted contour".into()));
        }
        if n >= 128 && cfg.accepts((cur - prev).norm(), cur.norm()) {
            return Ok(cur);
        }
        prev = cur;
        if n > 1 << 22 {
            break;
        }
    }
    Err(Error::NonConvergence(format!("lifted trapezoid unconverged at {n} samples")))
}

/// Sheet-chained Gauss panel on [a, b] of a segment; returns (value, w at b).
fn chained_panel<F>(curve: &HyperellipticCurve, seg: &Contour, a: f64, b: f64, wa: C64, f: &F) -> Result<(C64, C64)>
where
    F: Fn(C64, C64) -> C64,
{
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let mut w = wa;
    let mut total = c64(0.0, 0.0);
    for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        let t = m + h * x;
        let next = sqrt_near(curve.eval_q(seg.point(t)), w);
        if !guard_ok(w, next) {
            return Err(Error::SheetJump(String::new()));
        }
        w = next;
        total += f(seg.point(t), w) * seg.derivative(t) * *wt;
    }
    let wb = sqrt_near(curve.eval_q(seg.point(b)), w);
    if !guard_ok(w, wb) {
        return Err(Error::SheetJump(String::new()));
    }
    Ok((total * h, wb))
}

fn lifted_gauss<F>(curve: &HyperellipticCurve, seg: &Contour, w0: C64, f: &F, cfg: &QuadratureConfig) -> Result<(C64, C64)>
where
    F: Fn(C64, C64) -> C64,
{
    // panels are processed left to right so that the sheet is carried along
    let mut total = c64(0.0, 0.0);
    let mut w = w0;
    let mut stack: Vec<(f64, f64, u32)> = vec![(0.0, 1.0, 0)];
    let mut scale = 0.0f64;
    while let Some((a, b, depth)) = stack.pop() {
        let mid = 0.5 * (a + b);
        let whole = chained_panel(curve, seg, a, b, w, f);
        let halves = chained_panel(curve, seg, a, mid, w, f)
            .and_then(|(l, wm)| chained_panel(curve, seg, mid, b, wm, f).map(|(r, wb)| (l + r, wb)));
        match (whole, halves) {
            (Ok((est, _)), Ok((refined, wb))) if depth >= 2 => {
                scale = scale.max(refined.norm());
                if cfg.accepts((refined - est).norm(), scale) {
                    total += refined;
                    w = wb;
                    continue;
                }
                if depth >= cfg.max_refinements + 8 {
                    return Err(Error::NonConvergence("lifted segment quadrature too deep".into()));
                }
                stack.push((mid, b, depth + 1));
                stack.push((a, mid, depth + 1));
            }
            _ => {
                if depth >= 48 {
                    return Err(Error::SheetJump("segment continuation failed".into()));
                }
                stack.push((mid, b, depth + 1));
                stack.push((a, mid, depth + 1));
            }
        }
    }
    Ok((total, w))
}

/// A closed lifted cycle enclosing exactly the branch points r1, r2: an
/// ellipse with these foci whose semi-minor axis is the margin. The margin
/// defaults to half the distance from the focal segment to the nearest other
/// branch point or avoided point. The lift starts at the minor-axis vertex;
/// with a base point, its w is continued along the straight segment from there.
pub fn cycle_around_pair(
    curve: &HyperellipticCurve,
    r1: C64,
    r2: C64,
    margin: Option<f64>,
    avoid: &[C64],
    base: Option<&CurvePoint>,
) -> Result<LiftedCycle> {
    for r in [r1, r2] {
        if !curve.is_branch_point(r) {
            return Err(Error::Invalid(format!("{r} is not a branch point")));
        }
    }
    let d = (r2 - r1).norm();
    if d == 0.0 {
        return Err(Error::Invalid("pair must consist of two distinct branch points".into()));
    }
    let others: Vec<C64> = curve
        .finite_branch_points()
        .into_iter()
        .filter(|r| (r - r1).norm() > 1e-12 && (r - r2).norm() > 1e-12)
        .chain(avoid.iter().cloned())
        .collect();
    let clearance = others.iter().map(|p| segment_distance(*p, r1, r2)).fold(f64::INFINITY, f64::min);
    let minor = margin.unwrap_or(0.5 * clearance);
    if !(minor > BRANCH_CLEARANCE) || minor >= clearance {
        return Err(Error::BranchTooClose { point: "pair neighbourhood".into(), distance: clearance });
    }
    let major = (minor * minor + 0.25 * d * d).sqrt();
    let axis = (r2 - r1) / d;
    let ellipse = Contour::ellipse(0.5 * (r1 + r2), major, minor, axis, 1, std::f64::consts::FRAC_PI_2)?;
    let start = ellipse.start();
    let w0 = match base {
        Some(b) => continue_to(curve, b, start)?.w,
        None => curve.eval_q(start).sqrt(),
    };
    continue_w(curve, &ellipse, w0)
}
