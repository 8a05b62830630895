//! Complex scalars, contour quadrature, the AGM elliptic integral and
//! Richardson-extrapolated finite differences.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const I: C64 = Complex::new(0.0, 1.0);

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn two_pi_i() -> C64 {
    c64(0.0, 2.0 * PI)
}

pub fn is_finite(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Square root of `v` on the sheet closest to `reference`.
pub fn sqrt_near(v: C64, reference: C64) -> C64 {
    let s = v.sqrt();
    if (s - reference).norm() <= (s + reference).norm() {
        s
    } else {
        -s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_refinements: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { abs_tol: 1e-10, rel_tol: 1e-10, max_refinements: 24 }
    }
}

impl QuadratureConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_refinements: u32) -> Result<Self> {
        let cfg = QuadratureConfig { abs_tol, rel_tol, max_refinements };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Invalid("quadrature tolerances must be positive".into()));
        }
        if self.max_refinements < 4 {
            return Err(Error::Invalid("max_refinements must be at least 4".into()));
        }
        Ok(())
    }

    pub(crate) fn accepts(&self, diff: f64, value: f64) -> bool {
        diff <= self.abs_tol.max(self.rel_tol * value)
    }
}

/// Integration paths. Circles and ellipses are periodic and use the
/// trapezoid rule; segments and polylines use adaptive Gauss panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Contour {
    /// `center + radius * exp(i (phase + orientation * 2 pi t))`
    Circle { center: C64, radius: f64, orientation: i8, phase: f64 },
    /// Ellipse with unit major-axis direction `axis`.
    Ellipse { center: C64, semi_major: f64, semi_minor: f64, axis: C64, orientation: i8, phase: f64 },
    Segment { start: C64, end: C64 },
    Polyline { vertices: Vec<C64>, closed: bool },
}

impl Contour {
    pub fn circle(center: C64, radius: f64) -> Result<Self> {
        Self::circle_with(center, radius, 1, 0.0)
    }

    pub fn circle_with(center: C64, radius: f64, orientation: i8, phase: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Invalid(format!("circle radius must be positive, got {radius}")));
        }
        if orientation != 1 && orientation != -1 {
            return Err(Error::Invalid("orientation must be +1 or -1".into()));
        }
        Ok(Contour::Circle { center, radius, orientation, phase })
    }

    pub fn ellipse(
        center: C64,
        semi_major: f64,
        semi_minor: f64,
        axis: C64,
        orientation: i8,
        phase: f64,
    ) -> Result<Self> {
        if !(semi_major > 0.0 && semi_minor > 0.0) {
            return Err(Error::Invalid("ellipse axes must be positive".into()));
        }
        if axis.norm() == 0.0 || (orientation != 1 && orientation != -1) {
            return Err(Error::Invalid("bad ellipse axis or orientation".into()));
        }
        Ok(Contour::Ellipse { center, semi_major, semi_minor, axis: axis / axis.norm(), orientation, phase })
    }

    pub fn segment(start: C64, end: C64) -> Self {
        Contour::Segment { start, end }
    }

    pub fn polyline(vertices: Vec<C64>, closed: bool) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Invalid("polyline needs at least two vertices".into()));
        }
        if closed && vertices.first() != vertices.last() {
            return Err(Error::Invalid("closed polyline must repeat its first vertex".into()));
        }
        Ok(Contour::Polyline { vertices, closed })
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Contour::Circle { .. } | Contour::Ellipse { .. } => true,
            Contour::Segment { .. } => false,
            Contour::Polyline { closed, .. } => *closed,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Contour::Circle { .. } | Contour::Ellipse { .. })
    }

    /// Point at parameter `t` in [0, 1].
    pub fn point(&self, t: f64) -> C64 {
        match self {
            Contour::Circle { center, radius, orientation, phase } => {
                center + C64::from_polar(*radius, phase + *orientation as f64 * 2.0 * PI * t)
            }
            Contour::Ellipse { center, semi_major, semi_minor, axis, orientation, phase } => {
                let s = phase + *orientation as f64 * 2.0 * PI * t;
                center + axis * c64(semi_major * s.cos(), semi_minor * s.sin())
            }
            Contour::Segment { start, end } => start + (end - start) * t,
            Contour::Polyline { vertices, .. } => {
                let n = vertices.len() - 1;
                let x = (t * n as f64).clamp(0.0, n as f64);
                let k = (x.floor() as usize).min(n - 1);
                vertices[k] + (vertices[k + 1] - vertices[k]) * (x - k as f64)
            }
        }
    }

    /// dz/dt at parameter `t`.
    pub fn derivative(&self, t: f64) -> C64 {
        match self {
            Contour::Circle { radius, orientation, phase, .. } => {
                let o = *orientation as f64;
                I * o * 2.0 * PI * C64::from_polar(*radius, phase + o * 2.0 * PI * t)
            }
            Contour::Ellipse { semi_major, semi_minor, axis, orientation, phase, .. } => {
                let o = *orientation as f64;
                let s = phase + o * 2.0 * PI * t;
                axis * c64(-semi_major * s.sin(), semi_minor * s.cos()) * (o * 2.0 * PI)
            }
            Contour::Segment { start, end } => end - start,
            Contour::Polyline { vertices, .. } => {
                let n = vertices.len() - 1;
                let k = ((t * n as f64).floor() as usize).min(n - 1);
                (vertices[k + 1] - vertices[k]) * n as f64
            }
        }
    }

    pub fn start(&self) -> C64 {
        self.point(0.0)
    }

    pub fn end(&self) -> C64 {
        self.point(1.0)
    }

    pub fn reversed(&self) -> Self {
        match self.clone() {
            Contour::Circle { center, radius, orientation, phase } => {
                Contour::Circle { center, radius, orientation: -orientation, phase }
            }
            Contour::Ellipse { center, semi_major, semi_minor, axis, orientation, phase } => {
                Contour::Ellipse { center, semi_major, semi_minor, axis, orientation: -orientation, phase }
            }
            Contour::Segment { start, end } => Contour::Segment { start: end, end: start },
            Contour::Polyline { mut vertices, closed } => {
                vertices.reverse();
                Contour::Polyline { vertices, closed }
            }
        }
    }

    /// Distance from `p` to the trace (ellipses are sampled densely).
    pub fn distance_to(&self, p: C64) -> f64 {
        match self {
            Contour::Circle { center, radius, .. } => ((p - center).norm() - radius).abs(),
            Contour::Segment { start, end } => segment_distance(p, *start, *end),
            Contour::Polyline { vertices, .. } => vertices
                .windows(2)
                .map(|s| segment_distance(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min),
            Contour::Ellipse { .. } => {
                let n = 4096;
                (0..n).map(|k| (self.point(k as f64 / n as f64) - p).norm()).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Whether `p` lies in the region enclosed by a circle or ellipse.
    pub fn encloses(&self, p: C64) -> bool {
        match self {
            Contour::Circle { center, radius, .. } => (p - center).norm() < *radius,
            Contour::Ellipse { center, semi_major, semi_minor, axis, .. } => {
                let q = (p - center) / axis;
                (q.re / semi_major).powi(2) + (q.im / semi_minor).powi(2) < 1.0
            }
            _ => false,
        }
    }

    fn pieces(&self) -> Vec<Contour> {
        match self {
            Contour::Polyline { vertices, .. } => {
                vertices.windows(2).map(|s| Contour::segment(s[0], s[1])).collect()
            }
            other => vec![other.clone()],
        }
    }
}

pub fn segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    if d.norm_sqr() == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a) * d.conj()).re / d.norm_sqr();
    (p - (a + d * s.clamp(0.0, 1.0))).norm()
}

/// Contour integral of `f(z) dz`.
pub fn integrate<F: Fn(C64) -> C64>(f: F, c: &Contour, cfg: &QuadratureConfig) -> Result<C64> {
    cfg.validate()?;
    if c.is_periodic() {
        trapezoid(|t| f(c.point(t)) * c.derivative(t), cfg)
    } else {
        let mut total = C64::new(0.0, 0.0);
        for piece in c.pieces() {
            total += gauss_adaptive(|t| f(piece.point(t)) * piece.derivative(t), 0.0, 1.0, cfg)?;
        }
        Ok(total)
    }
}

/// (1/2 pi i) times the integral over the circle of the given radius.
pub fn residue_at<F: Fn(C64) -> C64>(f: F, center: C64, radius: f64, cfg: &QuadratureConfig) -> Result<C64> {
    let circle = Contour::circle(center, radius)?;
    Ok(integrate(f, &circle, cfg)? / two_pi_i())
}

const MIN_TRAPEZOID: usize = 64;

/// Trapezoid rule on [0,1) for a 1-periodic integrand, doubling until stable.
pub fn trapezoid<F: Fn(f64) -> C64>(g: F, cfg: &QuadratureConfig) -> Result<C64> {
    let mut n = 8usize;
    let mut sum: C64 = (0..n).map(|k| g(k as f64 / n as f64)).sum();
    let mut prev = sum / n as f64;
    for _ in 0..cfg.max_refinements {
        let mid: C64 = (0..n).map(|k| g((k as f64 + 0.5) / n as f64)).sum();
        sum += mid;
        n *= 2;
        let cur = sum / n as f64;
        if !is_finite(cur) {
            return Err(Error::NonConvergence("non-finite integrand on periodic contour".into()));
        }
        if n >= MIN_TRAPEZOID && cfg.accepts((cur - prev).norm(), cur.norm()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!("trapezoid rule unconverged after {n} samples")))
}

/// 10-point Gauss-Legendre nodes and weights on [-1, 1].
pub(crate) const GL_NODES: [f64; 10] = [
    -0.9739065285171717,
    -0.8650633666889845,
    -0.6794095682990244,
    -0.4333953941292472,
    -0.1488743389816312,
    0.1488743389816312,
    0.4333953941292472,
    0.6794095682990244,
    0.8650633666889845,
    0.9739065285171717,
];
pub(crate) const GL_WEIGHTS: [f64; 10] = [
    0.0666713443086881,
    0.1494513491505806,
    0.219_086_362_515_982,
    0.2692667193099963,
    0.2955242247147529,
    0.2955242247147529,
    0.2692667193099963,
    0.219_086_362_515_982,
    0.1494513491505806,
    0.0666713443086881,
];

pub(crate) fn gauss_panel<F: Fn(f64) -> C64>(g: &F, a: f64, b: f64) -> C64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(|(x, w)| g(m + h * x) * *w).sum::<C64>() * h
}

/// Adaptive bisection with a Gauss-Legendre rule per panel.
pub fn gauss_adaptive<F: Fn(f64) -> C64>(g: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<C64> {
    let whole = gauss_panel(&g, a, b);
    let scale = whole.norm();
    let mut total = C64::new(0.0, 0.0);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut panels = 0usize;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gauss_panel(&g, lo, mid);
        let right = gauss_panel(&g, mid, hi);
        let refined = left + right;
        if !is_finite(refined) {
            return Err(Error::NonConvergence("non-finite integrand on segment".into()));
        }
        if cfg.accepts((refined - est).norm(), scale) {
            total += refined;
        } else if depth >= cfg.max_refinements || panels > 200_000 {
            return Err(Error::NonConvergence(format!("segment quadrature exceeded depth {depth}")));
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
        panels += 1;
    }
    Ok(total)
}

/// Complete elliptic integral of the first kind, K(m) = pi / (2 AGM(1, sqrt(1-m))).
pub fn elliptic_k(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain(format!("elliptic_k needs 0 <= m < 1, got {m}")));
    }
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    Ok(PI / (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    Central,
    Forward,
    Backward,
}

pub const DEFAULT_FD_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Debug, Clone, PartialEq)]
pub struct FdEstimate {
    pub value: Vec<C64>,
    /// Difference between the last two extrapolation levels (max over components).
    pub residual: f64,
}

/// Richardson-extrapolated difference quotient of a vector-valued map along
/// the real direction of its (complex) argument.
pub fn fd_derivative<F>(f: F, at: C64, steps: &[f64], stencil: Stencil, tol: Option<f64>) -> Result<FdEstimate>
where
    F: Fn(C64) -> Result<Vec<C64>>,
{
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Invalid("steps must be positive".into()));
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("steps must be strictly decreasing".into()));
    }
    let quotient = |h: f64| -> Result<Vec<C64>> {
        let pair = match stencil {
            Stencil::Central => (f(at + h)?, f(at - h)?, 2.0 * h),
            Stencil::Forward => (f(at + h)?, f(at)?, h),
            Stencil::Backward => (f(at)?, f(at - h)?, h),
        };
        Ok(pair.0.iter().zip(pair.1.iter()).map(|(p, m)| (p - m) / pair.2).collect())
    };
    let order = |level: usize| -> i32 {
        match stencil {
            Stencil::Central => 2 * level as i32,
            _ => level as i32,
        }
    };

    let mut table: Vec<Vec<Vec<C64>>> = Vec::new();
    for (i, &h) in steps.iter().enumerate() {
        let mut row = vec![quotient(h)?];
        for j in 1..=i {
            let ratio = (steps[i - j] / h).powi(order(j));
            let (newer, older) = (&row[j - 1], &table[i - 1][j - 1]);
            row.push(newer.iter().zip(older.iter()).map(|(n, o)| n + (n - o) / (ratio - 1.0)).collect());
        }
        table.push(row);
    }
    let last = table.last().unwrap();
    let value = last.last().unwrap().clone();
    let residual = if steps.len() == 1 {
        // no extrapolation possible: compare against the doubled step instead
        let coarse = quotient(2.0 * steps[0])?;
        max_diff(&value, &coarse)
    } else {
        max_diff(&value, &last[last.len() - 2])
    };
    if let Some(t) = tol {
        if residual > t {
            return Err(Error::NonConvergence(format!("extrapolation residual {residual:.3e} exceeds {t:.3e}")));
        }
    }
    Ok(FdEstimate { value, residual })
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn determinant(m: &DMatrix<C64>) -> C64 {
    m.clone().determinant()
}

/// Ratio of extreme singular values (infinite when singular).
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn solve_linear(a: &DMatrix<C64>, b: &[C64]) -> Option<Vec<C64>> {
    let rhs = nalgebra::DVector::from_column_slice(b);
    a.clone().lu().solve(&rhs).map(|x| x.iter().cloned().collect())
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
