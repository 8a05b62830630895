//! Boundary charts of the moduli space: the Scherk chart near 2k singly
//! periodic Scherk surfaces and the catenoid chart near 2k vertical catenoids.
//!
//! Away from the nodal loci a k = 1 chart point is turned into an honest torus
//! (`build_k1_torus`) and everything is computed by quadrature on that curve.
//! On the loci the same quantities come from an explicit sheet of the
//! square root on copy 1, which factorizes per branch pair and stays
//! holomorphic when a pair collapses.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{continue_w, CurvePoint, HyperellipticCurve, BRANCH_CLEARANCE};
use crate::error::{Error, Result};
use crate::numerics::{
    c64, determinant, fd_derivative, integrate, is_finite, residue_at, two_pi_i, Contour, QuadratureConfig, Stencil, C64, I,
};
use crate::periods::{ligature, Form, MarkedDatum, Mobius};

/// Default polydisk radius of both charts.
pub const CHART_RADIUS: f64 = 0.1;

const NODAL_TOL: f64 = 1e-13;

/// Minimal clearance between the marked circle and the branch points.
const CIRCLE_CLEARANCE: f64 = 0.02;

/// g = z, dh = c dz / ((z - rho)(rho z + 1)) with c = rho^2 + 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScherkDatum {
    pub rho: f64,
    pub c: f64,
}

impl ScherkDatum {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Domain(format!("rho must lie in (0, 1], got {rho}")));
        }
        Ok(ScherkDatum { rho, c: rho * rho + 1.0 })
    }

    /// dh / dz.
    pub fn height_coefficient(&self, z: C64) -> C64 {
        self.c / ((z - self.rho) * (self.rho * z + 1.0))
    }

    /// Residues of dh at rho, -1/rho and infinity, by quadrature.
    pub fn height_residues(&self, cfg: &QuadratureConfig) -> Result<[C64; 3]> {
        let gap = self.rho + 1.0 / self.rho;
        let at_rho = residue_at(|z| self.height_coefficient(z), c64(self.rho, 0.0), 0.25 * gap, cfg)?;
        let at_neg = residue_at(|z| self.height_coefficient(z), c64(-1.0 / self.rho, 0.0), 0.25 * gap, cfg)?;
        let big = 2.0 / self.rho + 1.0;
        let at_inf = -residue_at(|z| self.height_coefficient(z), c64(0.0, 0.0), big, cfg)?;
        Ok([at_rho, at_neg, at_inf])
    }
}

/// (Res_0(dh/g), Res_inf(g dh)) of the Scherk datum, both by quadrature.
pub fn scherk_residues(rho: f64, cfg: &QuadratureConfig) -> Result<(C64, C64)> {
    let d = ScherkDatum::new(rho)?;
    let res_zero = residue_at(|z| d.height_coefficient(z) / z, c64(0.0, 0.0), 0.5 * rho, cfg)?;
    let big = 2.0 / rho + 1.0;
    let res_pole = -residue_at(|z| d.height_coefficient(z) * z, c64(0.0, 0.0), big, cfg)?;
    Ok((res_zero, res_pole))
}

/// Normalization of the height differential on the double sphere that
/// appears when x_1 moves off rho: c(x) = -w(-1/rho) with
/// w = sqrt(z^2 - 2 x z + rho^2) on the sheet w ~ z - rho.
pub fn scherk_normalization(rho: f64, x: C64) -> C64 {
    let q = c64(-1.0 / rho, 0.0);
    -scherk_factor(q, x, c64(rho, 0.0))
}

/// (z - x) sqrt(1 - (x^2 - y^2)/(z - x)^2): the sheet of sqrt(z^2 - 2xz + y^2)
/// asymptotic to z - x, holomorphic off the segment joining its roots.
fn scherk_factor(z: C64, x: C64, y: C64) -> C64 {
    let u = z - x;
    u * (1.0 - (x * x - y * y) / (u * u)).sqrt()
}

/// z sqrt(1 - 2x/z + y/z^2), the sheet of sqrt(z^2 - 2xz + y) asymptotic to z.
fn inner_factor(z: C64, x: C64, y: C64) -> C64 {
    z * (1.0 - 2.0 * x / z + y / (z * z)).sqrt()
}

/// sqrt(1 - 2xz + y z^2) with value 1 at the origin.
fn outer_factor(z: C64, x: C64, y: C64) -> C64 {
    (1.0 - 2.0 * x * z + y * z * z).sqrt()
}

fn quadratic_roots(x: C64, q: C64) -> [C64; 2] {
    // roots of t^2 - 2 x t + q
    let d = (x * x - q).sqrt();
    [x + d, x - d]
}

/// (x_1, y_1, ..., x_2k, y_2k) with x_i = (a_i + b_i)/2 and y_i = sqrt(a_i b_i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScherkChartPoint {
    pub coords: Vec<C64>,
}

impl ScherkChartPoint {
    pub fn new(coords: Vec<C64>) -> Result<Self> {
        if coords.is_empty() || !coords.len().is_multiple_of(4) {
            return Err(Error::Invalid(format!("Scherk chart needs 4k coordinates, got {}", coords.len())));
        }
        Ok(ScherkChartPoint { coords })
    }

    /// (rho, rho, -1/rho, 1/rho) repeated k times: 2k copies of the Scherk surface.
    pub fn nodal(rho: f64, k: usize) -> Result<Self> {
        ScherkDatum::new(rho)?;
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        let block = [c64(rho, 0.0), c64(rho, 0.0), c64(-1.0 / rho, 0.0), c64(1.0 / rho, 0.0)];
        Ok(ScherkChartPoint { coords: block.iter().cycle().take(4 * k).cloned().collect() })
    }

    /// Branch data of a degree-two map: pair i is (a_i, b_i).
    pub fn from_branch_pairs(pairs: &[[C64; 2]]) -> Result<Self> {
        let coords = pairs.iter().flat_map(|[a, b]| [0.5 * (a + b), (a * b).sqrt()]).collect();
        ScherkChartPoint::new(coords)
    }

    pub fn k(&self) -> usize {
        self.coords.len() / 4
    }

    pub fn pair(&self, i: usize) -> (C64, C64) {
        (self.coords[2 * i], self.coords[2 * i + 1])
    }

    pub fn branch_pair(&self, i: usize) -> [C64; 2] {
        let (x, y) = self.pair(i);
        quadratic_roots(x, y * y)
    }

    /// Pairs with x_i^2 = y_i^2.
    pub fn nodal_pairs(&self) -> Vec<usize> {
        (0..2 * self.k())
            .filter(|&i| {
                let (x, y) = self.pair(i);
                (x * x - y * y).norm() <= NODAL_TOL * (1.0 + x.norm_sqr())
            })
            .collect()
    }

    pub fn is_nodal(&self) -> bool {
        !self.nodal_pairs().is_empty()
    }

    /// Within the polydisk of the given radius around the nodal point of rho.
    pub fn in_chart(&self, rho: f64, radius: f64) -> bool {
        match ScherkChartPoint::nodal(rho, self.k()) {
            Ok(p) => p.coords.iter().zip(&self.coords).all(|(a, b)| (a - b).norm() < radius),
            Err(_) => false,
        }
    }

    pub fn shifted(&self, index: usize, h: C64) -> Self {
        let mut coords = self.coords.clone();
        coords[index] += h;
        ScherkChartPoint { coords }
    }

    /// The copy-1 sheet for k = 1.
    fn sheet(&self, z: C64) -> C64 {
        let (x1, y1) = self.pair(0);
        let (x2, y2) = self.pair(1);
        scherk_factor(z, x1, y1) * scherk_factor(z, x2, y2)
    }
}

/// (x_1..x_2k, y_1..y_2k), all near 0. Odd pairs are branch values near 0
/// (x = (a+b)/2, y = ab), even pairs their reciprocals near infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatenoidChartPoint {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
}

impl CatenoidChartPoint {
    pub fn new(x: Vec<C64>, y: Vec<C64>) -> Result<Self> {
        if x.is_empty() || !x.len().is_multiple_of(2) || x.len() != y.len() {
            return Err(Error::Invalid(format!("catenoid chart needs 2k x and 2k y values, got {} and {}", x.len(), y.len())));
        }
        Ok(CatenoidChartPoint { x, y })
    }

    pub fn origin(k: usize) -> Result<Self> {
        CatenoidChartPoint::new(vec![C64::new(0.0, 0.0); 2 * k], vec![C64::new(0.0, 0.0); 2 * k])
    }

    /// From branch values: pair 1 near 0 and pair 2 near infinity (k = 1).
    pub fn from_branch_values(near_zero: [C64; 2], near_infinity: [C64; 2]) -> Result<Self> {
        let [a, b] = near_zero;
        let [c, d] = near_infinity.map(|v| 1.0 / v);
        CatenoidChartPoint::new(vec![0.5 * (a + b), 0.5 * (c + d)], vec![a * b, c * d])
    }

    /// Coordinates in the order (x_1..x_2k, y_1..y_2k).
    pub fn flat(&self) -> Vec<C64> {
        self.x.iter().chain(self.y.iter()).cloned().collect()
    }

    pub fn from_flat(v: &[C64]) -> Result<Self> {
        let n = v.len() / 2;
        CatenoidChartPoint::new(v[..n].to_vec(), v[n..].to_vec())
    }

    pub fn k(&self) -> usize {
        self.x.len() / 2
    }

    /// Branch values of pair j (0-based); for odd pairs (1-based even) these
    /// are the reciprocals s = 1/a.
    pub fn roots(&self, j: usize) -> [C64; 2] {
        quadratic_roots(self.x[j], self.y[j])
    }

    /// Pairs on the locus y_j = x_j^2 (coinciding branch values).
    pub fn on_collision_locus(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&j| (self.y[j] - self.x[j] * self.x[j]).norm() <= NODAL_TOL).collect()
    }

    /// Pairs with y_j = 0 (a branch value at the end).
    pub fn on_end_locus(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&j| self.y[j].norm() <= NODAL_TOL).collect()
    }

    pub fn is_nodal(&self) -> bool {
        !self.on_collision_locus().is_empty() || !self.on_end_locus().is_empty()
    }

    pub fn in_chart(&self, radius: f64) -> bool {
        self.flat().iter().all(|v| v.norm() < radius)
    }

    pub fn shifted(&self, index: usize, h: C64) -> Self {
        let mut v = self.flat();
        v[index] += h;
        CatenoidChartPoint::from_flat(&v).expect("same shape")
    }

    /// Pairs with (x_j, y_j) != (0, 0).
    fn active_pairs(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&j| self.x[j].norm() > 0.0 || self.y[j].norm() > 0.0).collect()
    }

    /// The copy-1 sheet for k = 1: w ~ z on |z| = 1.
    fn sheet(&self, z: C64) -> C64 {
        inner_factor(z, self.x[0], self.y[0]) * outer_factor(z, self.x[1], self.y[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChartPoint {
    Scherk(ScherkChartPoint),
    Catenoid(CatenoidChartPoint),
}

/// A circle separating `inside` from `outside` with the origin inside:
/// |z| = 1 when its clearance allows, otherwise the better of the unit
/// circle and the circle of radius 1 about 1/4.
fn separating_circle(inside: &[C64], outside: &[C64]) -> Result<Contour> {
    let clearance = |center: C64| -> f64 {
        let mut worst = f64::INFINITY;
        for p in inside {
            worst = worst.min(1.0 - (p - center).norm());
        }
        for p in outside {
            worst = worst.min((p - center).norm() - 1.0);
        }
        worst.min(1.0 - center.norm())
    };
    let candidates = [c64(0.0, 0.0), c64(0.25, 0.0)];
    let unit = clearance(candidates[0]);
    let center = if unit >= CIRCLE_CLEARANCE {
        candidates[0]
    } else {
        let shifted = clearance(candidates[1]);
        if shifted.max(unit) <= 10.0 * BRANCH_CLEARANCE {
            return Err(Error::DegenerateCycle("no circle separates the two branch pairs".into()));
        }
        if shifted > unit {
            candidates[1]
        } else {
            candidates[0]
        }
    };
    Contour::circle(center, 1.0)
}

fn scherk_circle(p: &ScherkChartPoint) -> Result<Contour> {
    separating_circle(&p.branch_pair(0), &p.branch_pair(1))
}

/// The marked torus of a k = 1 chart point: g = z, ends over 0 and infinity,
/// phi normalized over the lift of the separating circle on copy 1.
pub fn build_k1_torus(chart: &ChartPoint, cfg: &QuadratureConfig) -> Result<MarkedDatum> {
    match chart {
        ChartPoint::Scherk(p) => {
            if p.k() != 1 {
                return Err(Error::Invalid("tori are built for k = 1 only".into()));
            }
            if let Some(i) = p.nodal_pairs().first() {
                return Err(Error::NodalPoint(format!("x^2 = y^2 in pair {}", i + 1)));
            }
            let roots: Vec<C64> = p.branch_pair(0).into_iter().chain(p.branch_pair(1)).collect();
            let curve = HyperellipticCurve::new(roots, vec![], c64(1.0, 0.0))?;
            let circle = scherk_circle(p)?;
            let cycle = continue_w(&curve, &circle, p.sheet(circle.start()))?;
            let zero = C64::new(0.0, 0.0);
            if curve.is_branch_point(zero) {
                return Err(Error::BranchCollision("a branch point lies over z = 0".into()));
            }
            // z = 0 may sit on a cut of the copy-1 sheet, where either root is copy 1
            let w0 = Some(p.sheet(zero)).filter(|w| is_finite(*w)).unwrap_or_else(|| curve.eval_q(zero).sqrt());
            let p1 = CurvePoint::standard(zero, w0);
            let q1 = CurvePoint::reciprocal(zero, c64(1.0, 0.0));
            let ends = vec![p1, p1.deck(), q1, q1.deck()];
            MarkedDatum::new(curve, Mobius::identity(), ends, cycle, cfg)
        }
        ChartPoint::Catenoid(p) => {
            if p.k() != 1 {
                return Err(Error::Invalid("tori are built for k = 1 only".into()));
            }
            if let Some(j) = p.on_collision_locus().first() {
                return Err(Error::NodalPoint(format!("y = x^2 in pair {}", j + 1)));
            }
            if let Some(j) = p.on_end_locus().first() {
                return Err(Error::NodalPoint(format!("y = 0 in pair {}", j + 1)));
            }
            let curve = HyperellipticCurve::new(p.roots(0).to_vec(), p.roots(1).to_vec(), c64(1.0, 0.0))?;
            let circle = Contour::circle(C64::new(0.0, 0.0), 1.0)?;
            let far: Vec<C64> = p.roots(1).iter().map(|s| 1.0 / s).collect();
            let (gap, _) = curve.min_branch_distance(&circle);
            if gap <= 10.0 * BRANCH_CLEARANCE || p.roots(0).iter().any(|r| r.norm() >= 1.0) || far.iter().any(|r| r.norm() <= 1.0) {
                return Err(Error::DegenerateCycle("|z| = 1 does not separate the branch pairs".into()));
            }
            let cycle = continue_w(&curve, &circle, p.sheet(circle.start()))?;
            let zero = C64::new(0.0, 0.0);
            let p1 = CurvePoint::standard(zero, p.y[0].sqrt());
            let q1 = CurvePoint::reciprocal(zero, p.y[1].sqrt());
            let ends = vec![p1, p1.deck(), q1, q1.deck()];
            MarkedDatum::new(curve, Mobius::identity(), ends, cycle, cfg)
        }
    }
}

/// The symmetrized ligature (Res_{0_1}(phi/g), Res_{inf_1}(g phi),
/// int_Gamma phi/g, int_Gamma g phi) of a k = 1 Scherk chart point, from the
/// copy-1 sheet. Valid on the nodal locus, where it reduces to the Scherk datum.
pub fn scherk_lhat(p: &ScherkChartPoint, cfg: &QuadratureConfig) -> Result<Vec<C64>> {
    if p.k() != 1 {
        return Err(Error::Invalid("the closed-form sheet is implemented for k = 1".into()));
    }
    let circle = scherk_circle(p)?;
    let period = integrate(|z| 1.0 / p.sheet(z), &circle, cfg)?;
    let c = two_pi_i() / period;
    let zero = C64::new(0.0, 0.0);
    // 1/w = z^-2 (1 + O(1/z)), so Res_inf(c z dz/w) = -c
    Ok(vec![
        c / p.sheet(zero),
        -c,
        integrate(|z| c / (z * p.sheet(z)), &circle, cfg)?,
        integrate(|z| c * z / p.sheet(z), &circle, cfg)?,
    ])
}

/// The k = 1 L-hat at any chart point: torus quadrature off the nodal
/// locus, the copy-1 sheet on it.
pub fn lhat_k1(p: &ScherkChartPoint, cfg: &QuadratureConfig) -> Result<Vec<C64>> {
    if p.is_nodal() {
        scherk_lhat(p, cfg)
    } else {
        Ok(ligature(&build_k1_torus(&ChartPoint::Scherk(p.clone()), cfg)?, cfg)?.entries)
    }
}

/// Derivatives of L-hat at the 2k-fold Scherk point: row r is the derivative
/// along coordinate r (x_1, y_1, x_2, y_2, ...), with the columns of L-hat
/// ordered as (Res_{0_{2j-1}}, Res_{inf_{2j-1}})_j then the cycle integrals.
pub fn scherk_lhat_rows(rho: f64, k: usize) -> Result<(DMatrix<C64>, f64)> {
    ScherkDatum::new(rho)?;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let n = 4 * k;
    let q = rho * rho + 1.0;
    let r2 = rho * rho;
    let tau = c64(0.0, 2.0 * PI);
    let one = c64(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    // entries in the slots (2j-1, 2j, 2k+2j-1, 2k+2j)
    let blocks: [(f64, [C64; 4]); 4] = [
        (1.0 / q, [-one, -one, zero, tau]),
        (r2 / q, [c64(q * q / (r2 * r2) - 1.0, 0.0), -one, zero, tau]),
        (r2 / q, [one, one, tau, zero]),
        ((q * q - 1.0) / q, [one, c64(1.0 / (1.0 - q * q), 0.0), tau, zero]),
    ];
    let mut m = DMatrix::from_element(n, n, zero);
    for j in 0..k {
        let cols = [2 * j, 2 * j + 1, 2 * k + 2 * j, 2 * k + 2 * j + 1];
        for (r, (scale, entries)) in blocks.iter().enumerate() {
            for (col, e) in cols.iter().zip(entries) {
                m[(4 * j + r, *col)] = *scale * e;
            }
        }
    }
    let det = determinant(&m).norm();
    Ok((m, det))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdJacobian {
    /// Row r: derivative along chart coordinate r.
    pub matrix: DMatrix<C64>,
    /// Largest extrapolation residual over all rows.
    pub residual: f64,
}

impl FdJacobian {
    pub fn determinant(&self) -> C64 {
        determinant(&self.matrix)
    }

    /// Largest entrywise deviation relative to the largest entry of `other`.
    pub fn relative_error(&self, other: &DMatrix<C64>) -> f64 {
        let scale = other.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.matrix.iter().zip(other.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
    }
}

fn fd_rows<F>(n: usize, steps: &[f64], stencil: Stencil, f: F) -> Result<FdJacobian>
where
    F: Fn(usize, C64) -> Result<Vec<C64>> + Sync,
{
    let rows: Vec<_> = (0..n)
        .into_par_iter()
        .map(|r| fd_derivative(|t| f(r, t), C64::new(0.0, 0.0), steps, stencil, None))
        .collect::<Result<_>>()?;
    let mut m = DMatrix::from_element(n, rows[0].value.len(), C64::new(0.0, 0.0));
    for (r, est) in rows.iter().enumerate() {
        for (c, v) in est.value.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    let residual = rows.iter().map(|e| e.residual).fold(0.0, f64::max);
    Ok(FdJacobian { matrix: m, residual })
}

/// One-sided extrapolated Jacobian of L-hat at (rho, rho, -1/rho, 1/rho):
/// forward steps leave the nodal locus, the base value comes from the
/// nodal sheet.
pub fn fd_lhat_jacobian(rho: f64, steps: &[f64], cfg: &QuadratureConfig) -> Result<FdJacobian> {
    let base = ScherkChartPoint::nodal(rho, 1)?;
    fd_rows(4, steps, Stencil::Forward, |r, t| lhat_k1(&base.shifted(r, t), cfg))
}

/// (A_1..A_2k, 1/B_1..1/B_2k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaValue {
    pub entries: Vec<C64>,
}

impl ThetaValue {
    pub fn k(&self) -> usize {
        self.entries.len() / 4
    }

    /// The closing target (b, conj b, ..., t, ..., t) with t = -1/a^2.
    pub fn closing_target(a: f64, b: C64, k: usize) -> Self {
        let t = c64(-1.0 / (a * a), 0.0);
        let mut entries: Vec<C64> = (0..k).flat_map(|_| [b, b.conj()]).collect();
        entries.extend(std::iter::repeat_n(t, 2 * k));
        ThetaValue { entries }
    }

    pub fn distance(&self, other: &ThetaValue) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// A_j and B~_j = y_j B_j for all j (both 0-based vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct CatenoidFunctions {
    pub a: Vec<C64>,
    pub b_tilde: Vec<C64>,
}

/// Quadrature on the torus of an off-locus k = 1 point.
fn catenoid_functions_torus(p: &CatenoidChartPoint, cfg: &QuadratureConfig) -> Result<CatenoidFunctions> {
    let d = build_k1_torus(&ChartPoint::Catenoid(p.clone()), cfg)?;
    let a1 = d.cycle_integral(Form::GInvPhi, &d.marked_cycle, cfg)?;
    let a2 = d.cycle_integral(Form::GPhi, &d.marked_cycle, cfg)?;
    let b1 = d.end_residue(Form::GInvPhi, 0, cfg)? * d.end_residue(Form::GInvPhi, 1, cfg)?;
    let b2 = d.end_residue(Form::GPhi, 2, cfg)? * d.end_residue(Form::GPhi, 3, cfg)?;
    Ok(CatenoidFunctions { a: vec![a1, a2], b_tilde: vec![p.y[0] * b1, p.y[1] * b2] })
}

/// The copy-1 sheet for k = 1, valid on and off the loci. The residues of
/// phi/g over z = 0 are +-c/w(0) with w(0)^2 = y_1, so B~_1 = -c^2, and the
/// same holds at infinity.
fn catenoid_functions_sheet(p: &CatenoidChartPoint, cfg: &QuadratureConfig) -> Result<CatenoidFunctions> {
    let circle = Contour::circle(C64::new(0.0, 0.0), 1.0)?;
    let c = two_pi_i() / integrate(|z| 1.0 / p.sheet(z), &circle, cfg)?;
    let a1 = integrate(|z| c / (z * p.sheet(z)), &circle, cfg)?;
    let a2 = integrate(|z| c * z / p.sheet(z), &circle, cfg)?;
    Ok(CatenoidFunctions { a: vec![a1, a2], b_tilde: vec![-c * c, -c * c] })
}

/// Nodal configurations for any k with at most one pair j off the origin:
/// 2k - 1 spheres, the simple ones with g = z and phi = +-dz/z, the double
/// one with w = sqrt(z^2 - 2x z + y) (j odd) or sqrt(1/z^2 - 2x/z + y) (j even).
fn catenoid_functions_nodal(p: &CatenoidChartPoint, cfg: &QuadratureConfig) -> Result<CatenoidFunctions> {
    let n = p.x.len();
    let active = p.active_pairs();
    if active.len() > 1 {
        return Err(Error::Invalid("for k > 1 only configurations with a single pair off the origin are evaluated".into()));
    }
    let circle = Contour::circle(C64::new(0.0, 0.0), 1.0)?;
    // phi/dz on odd copy m (0-based even index), where Gamma_m is positive
    let phi_on_odd_copy = |m: usize| -> Box<dyn Fn(C64) -> C64 + '_> {
        match active.first() {
            // pair j odd (0-based even) lives on copies j-1, j; copy j has w ~ z
            Some(&j) if j % 2 == 0 && m == j => Box::new(move |z| 1.0 / inner_factor(z, p.x[j], p.y[j])),
            // pair j even joins copy j-1 (odd) where w ~ -1/z and phi = -dz/(z^2 w)
            Some(&j) if j % 2 == 1 && m + 1 == j => Box::new(move |z| 1.0 / (z * outer_factor(z, p.x[j], p.y[j]))),
            _ => Box::new(|z| 1.0 / z),
        }
    };
    let mut a = Vec::with_capacity(n);
    for m in 0..n {
        let v = if m % 2 == 0 {
            let phi = phi_on_odd_copy(m);
            integrate(|z| phi(z) / z, &circle, cfg)?
        } else {
            // A_m for even m is taken over Gamma_{m+1}, an odd copy
            let phi = phi_on_odd_copy((m + 1) % n);
            integrate(|z| phi(z) * z, &circle, cfg)?
        };
        a.push(v);
    }
    // residues +-1/sqrt(y) on the double sphere, and the limit -1 on simple spheres
    Ok(CatenoidFunctions { a, b_tilde: vec![c64(-1.0, 0.0); n] })
}

/// A_j and B~_j at a chart point: k = 1 uses the torus off the loci and the
/// copy-1 sheet on them; k > 1 is evaluated at nodal configurations only.
pub fn catenoid_functions(p: &CatenoidChartPoint, cfg: &QuadratureConfig) -> Result<CatenoidFunctions> {
    if p.k() == 1 {
        if p.is_nodal() {
            catenoid_functions_sheet(p, cfg)
        } else {
            catenoid_functions_torus(p, cfg)
        }
    } else {
        catenoid_functions_nodal(p, cfg)
    }
}

fn check_index(p: &CatenoidChartPoint, j: usize) -> Result<usize> {
    if j == 0 || j > p.x.len() {
        return Err(Error::Invalid(format!("index {j} outside 1..={}", p.x.len())));
    }
    Ok(j - 1)
}

/// A_j for 1-based j.
pub fn a_j(p: &CatenoidChartPoint, j: usize, cfg: &QuadratureConfig) -> Result<C64> {
    let j = check_index(p, j)?;
    Ok(catenoid_functions(p, cfg)?.a[j])
}

/// B~_j = y_j B_j for 1-based j.
pub fn b_tilde_j(p: &CatenoidChartPoint, j: usize, cfg: &QuadratureConfig) -> Result<C64> {
    let j = check_index(p, j)?;
    Ok(catenoid_functions(p, cfg)?.b_tilde[j])
}

pub fn theta_map(p: &CatenoidChartPoint, cfg: &QuadratureConfig) -> Result<ThetaValue> {
    let f = catenoid_functions(p, cfg)?;
    let mut entries = f.a.clone();
    for (j, bt) in f.b_tilde.iter().enumerate() {
        if bt.norm() < 1e-6 {
            return Err(Error::BExploded(format!("|B~_{}| = {:.3e}", j + 1, bt.norm())));
        }
        entries.push(p.y[j] / bt);
    }
    Ok(ThetaValue { entries })
}

/// Jacobian of Theta at the origin: dA_{j-1}/dx_j = 2 pi i, d(1/B_j)/dy_i = -delta_ij.
pub fn theta_jacobian_at_origin(k: usize) -> DMatrix<C64> {
    let n = 2 * k;
    let mut m = DMatrix::from_element(2 * n, 2 * n, C64::new(0.0, 0.0));
    for j in 0..n {
        m[(j, (j + n - 1) % n)] = 2.0 * PI * I;
        m[(n + j, n + j)] = c64(-1.0, 0.0);
    }
    m
}

/// Central extrapolated Jacobian of Theta at a chart point, rows ordered as
/// (x_1..x_2k, y_1..y_2k).
pub fn fd_theta_jacobian(base: &CatenoidChartPoint, steps: &[f64], cfg: &QuadratureConfig) -> Result<FdJacobian> {
    let n = base.flat().len();
    fd_rows(n, steps, Stencil::Central, |r, t| Ok(theta_map(&base.shifted(r, t), cfg)?.entries))
}
