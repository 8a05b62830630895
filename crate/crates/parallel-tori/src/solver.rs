//! Newton solution of the period-closing system ligature = L_(a,b) for k = 1.
//!
//! A datum is encoded by the symmetric coordinates (x_1, y_1, x_2, y_2) of its
//! two branch pairs in the g-coordinate, x = (a+b)/2, y = sqrt(ab), pair 1
//! being the branch values inside the marked circle. A template datum fixes
//! the marked circle and the sheets; nearby coordinates are rebuilt from it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::HyperellipticCurve;
use crate::error::{Error, Result};
use crate::family::{spherical_configuration, stereographic, FamilyAngles, StandardExample};
use crate::numerics::{c64, condition_number, is_finite, norm, solve_linear, sqrt_near, QuadratureConfig, C64};
use crate::periods::{best_target, ligature, target_tuple, ClassifyingValue, LigatureTuple, MarkedDatum};

/// Branch points closer than this to the marked circle end an evaluation;
/// such iterates are far outside the basin and only cost quadrature time.
const MIN_CIRCLE_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub a: f64,
    pub b: C64,
    pub k: usize,
}

impl TargetSpec {
    pub fn new(a: f64, b: C64, k: usize) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !is_finite(b) {
            return Err(Error::Invalid(format!("target needs a finite nonzero a and finite b, got a = {a}, b = {b}")));
        }
        if k != 1 {
            return Err(Error::Invalid("only k = 1 targets can be solved".into()));
        }
        Ok(TargetSpec { a, b, k })
    }

    pub fn tuple(&self) -> Result<LigatureTuple> {
        target_tuple(self.a, self.b, self.k)
    }

    /// The target a fraction t of the way towards `other`.
    pub fn lerp(&self, other: &TargetSpec, t: f64) -> Result<TargetSpec> {
        TargetSpec::new(self.a + t * (other.a - self.a), self.b + t * (other.b - self.b), self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Relative step of the difference Jacobian.
    pub fd_step: f64,
    /// Initial step length of the line search.
    pub damping: f64,
    /// Jacobians with a larger condition estimate are rejected.
    pub max_condition: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { residual_tol: 1e-11, max_iter: 30, fd_step: 1e-6, damping: 1.0, max_condition: 1e12 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0 && self.fd_step > 0.0 && self.max_condition > 1.0) {
            return Err(Error::Invalid("newton tolerances must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
    pub jacobian_condition: f64,
    /// Residual before each iteration and after the last one.
    pub history: Vec<f64>,
    /// (a, b) read off the ligature at the solution.
    pub classifying: ClassifyingValue,
}

impl SolveReport {
    /// max r_{n+1} / r_n^2 over the last three steps.
    pub fn quadratic_constant(&self) -> Option<f64> {
        let h = &self.history;
        if h.len() < 3 {
            return None;
        }
        let tail = &h[h.len().saturating_sub(4)..];
        tail.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / (w[0] * w[0])).reduce(f64::max)
    }
}

fn pair_coords(a: C64, b: C64, reference: Option<C64>) -> [C64; 2] {
    let y = match reference {
        Some(r) => sqrt_near(a * b, r),
        None => (a * b).sqrt(),
    };
    [0.5 * (a + b), y]
}

fn pair_roots(x: C64, y: C64) -> [C64; 2] {
    let d = (x * x - y * y).sqrt();
    [x + d, x - d]
}

/// Chart coordinates of branch values split by the marked circle; `reference`
/// picks the sign of each y.
pub fn coords_from_branch_values(inside: [C64; 2], outside: [C64; 2], reference: Option<&[C64]>) -> Vec<C64> {
    let r = |i: usize| reference.map(|v| v[i]);
    let p1 = pair_coords(inside[0], inside[1], r(1));
    let p2 = pair_coords(outside[0], outside[1], r(3));
    vec![p1[0], p1[1], p2[0], p2[1]]
}

pub fn branch_values_from_coords(u: &[C64]) -> Vec<C64> {
    pair_roots(u[0], u[1]).into_iter().chain(pair_roots(u[2], u[3])).collect()
}

/// Moves each of the four branch values by an independent offset drawn
/// uniformly from the square of half-width `size`, and returns chart
/// coordinates with the sign of each y chosen nearest to `u`.
pub fn perturb_branch_data<R: rand::Rng>(u: &[C64], size: f64, rng: &mut R) -> Vec<C64> {
    let mut v = branch_values_from_coords(u);
    for p in v.iter_mut() {
        *p += c64(rng.gen_range(-size..=size), rng.gen_range(-size..=size));
    }
    coords_from_branch_values([v[0], v[1]], [v[2], v[3]], Some(u))
}

/// The period problem around a template datum in the g-coordinate.
#[derive(Debug, Clone)]
pub struct PeriodProblem {
    pub template: MarkedDatum,
    pub quad: QuadratureConfig,
}

impl PeriodProblem {
    /// Template and coordinates of the rotated standard example. The start
    /// values come from the branch values of the spherical configuration.
    pub fn from_family(angles: &FamilyAngles, quad: QuadratureConfig) -> Result<(Self, Vec<C64>)> {
        let ex = StandardExample::new(*angles)?;
        let template = ex.gauss_datum(&quad)?;
        let rot = C64::from_polar(1.0, ex.rotation());
        let values: Vec<C64> = spherical_configuration(angles)
            .iter()
            .map(|n| stereographic(*n).finite().map(|g| rot * g).ok_or_else(|| Error::SingularParameter("branch value at infinity".into())))
            .collect::<Result<_>>()?;
        let circle = &template.marked_cycle.base;
        let (inside, outside): (Vec<C64>, Vec<C64>) = values.iter().partition(|v| circle.encloses(**v));
        if inside.len() != 2 {
            return Err(Error::DegenerateCycle("marked circle does not split the branch values in pairs".into()));
        }
        let u = coords_from_branch_values([inside[0], inside[1]], [outside[0], outside[1]], None);
        Ok((PeriodProblem { template, quad }, u))
    }

    pub fn datum(&self, u: &[C64]) -> Result<MarkedDatum> {
        if u.len() != 4 || u.iter().any(|v| !is_finite(*v)) {
            return Err(Error::Invalid("chart coordinates must be 4 finite values".into()));
        }
        let curve = HyperellipticCurve::new(branch_values_from_coords(u), vec![], c64(1.0, 0.0))?;
        let (gap, near) = curve.min_branch_distance(&self.template.marked_cycle.base);
        if gap < MIN_CIRCLE_GAP {
            return Err(Error::BranchTooClose { point: near.to_string(), distance: gap });
        }
        if let Some(r) = curve.finite_roots.iter().find(|r| r.norm() < MIN_CIRCLE_GAP) {
            return Err(Error::BranchTooClose { point: r.to_string(), distance: r.norm() });
        }
        self.template.rebuild(curve, &self.quad)
    }

    pub fn ligature(&self, u: &[C64]) -> Result<LigatureTuple> {
        ligature(&self.datum(u)?, &self.quad)
    }

    fn residual_vector(&self, u: &[C64], target: &LigatureTuple) -> Result<Vec<C64>> {
        Ok(self.ligature(u)?.entries.iter().zip(&target.entries).map(|(l, t)| l - t).collect())
    }

    /// Central difference Jacobian, column j along coordinate j.
    pub fn jacobian(&self, u: &[C64], h: f64) -> Result<DMatrix<C64>> {
        let n = u.len();
        let cols: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let step = h * u[j].norm().max(1.0);
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[j] += step;
                dn[j] -= step;
                let fp = self.ligature(&up)?.entries;
                let fm = self.ligature(&dn)?.entries;
                Ok(fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * step)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(cols[0].len(), n, |i, j| cols[j][i]))
    }

    pub fn newton_solve(&self, target: &TargetSpec, init: &[C64], cfg: &NewtonConfig) -> Result<SolveReport> {
        cfg.validate()?;
        let goal = target.tuple()?;
        let mut u = init.to_vec();
        let mut f = self.residual_vector(&u, &goal)?;
        let mut r = norm(&f);
        let mut history = vec![r];
        let mut condition = f64::NAN;
        let mut iterations = 0;
        while r >= cfg.residual_tol {
            if iterations == cfg.max_iter {
                return Err(Error::Diverged(format!("residual {r:.3e} after {iterations} iterations")));
            }
            let j = self.jacobian(&u, cfg.fd_step)?;
            condition = condition_number(&j);
            if !(condition <= cfg.max_condition) {
                return Err(Error::SingularJacobian(condition));
            }
            let rhs: Vec<C64> = f.iter().map(|v| -v).collect();
            let du = solve_linear(&j, &rhs).ok_or(Error::SingularJacobian(condition))?;
            let mut t = cfg.damping;
            let mut accepted = None;
            for _ in 0..30 {
                let trial: Vec<C64> = u.iter().zip(&du).map(|(a, d)| a + t * d).collect();
                if let Ok(ft) = self.residual_vector(&trial, &goal) {
                    let rt = norm(&ft);
                    if rt < r {
                        accepted = Some((trial, ft, rt));
                        break;
                    }
                }
                t *= 0.5;
            }
            let (nu, nf, nr) = accepted.ok_or_else(|| Error::Diverged(format!("line search stalled at residual {r:.3e}")))?;
            u = nu;
            f = nf;
            r = nr;
            history.push(r);
            iterations += 1;
        }
        if condition.is_nan() {
            condition = condition_number(&self.jacobian(&u, cfg.fd_step)?);
        }
        let (classifying, _) = best_target(&self.ligature(&u)?);
        Ok(SolveReport { solution: u, residual: r, iterations, jacobian_condition: condition, history, classifying })
    }

    /// Tracks solutions along a path of targets, starting from coordinates
    /// solving (or near) the first target. A step that fails is bisected up to
    /// 8 times before the chain stops.
    pub fn continuation(&self, path: &[TargetSpec], start: &[C64], cfg: &NewtonConfig) -> ContinuationOutcome {
        let mut reports: Vec<SolveReport> = vec![];
        let Some(first) = path.first() else {
            return ContinuationOutcome { reports, error: None };
        };
        let mut u = start.to_vec();
        let mut current = *first;
        for (i, target) in path.iter().enumerate() {
            let mut fraction = 1.0;
            let mut halvings = 0;
            let report = loop {
                let trial = if fraction == 1.0 { Ok(*target) } else { current.lerp(target, fraction) };
                let solved = trial.and_then(|t| self.newton_solve(&t, &u, cfg).map(|r| (t, r)));
                match solved {
                    Ok((t, report)) => {
                        u = report.solution.clone();
                        current = t;
                        if fraction == 1.0 {
                            break report;
                        }
                        // an intermediate target was reached: aim at the full target again
                        fraction = 1.0;
                    }
                    Err(e) => {
                        halvings += 1;
                        if halvings > 8 {
                            let error = Error::StepTooLarge(format!("target {i} not reached after 8 bisections: {e}"));
                            return ContinuationOutcome { reports, error: Some(error) };
                        }
                        fraction *= 0.5;
                    }
                }
            };
            reports.push(report);
        }
        ContinuationOutcome { reports, error: None }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub reports: Vec<SolveReport>,
    pub error: Option<Error>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub angles: FamilyAngles,
    pub a: f64,
    pub b: C64,
    pub residual: f64,
    pub error: Option<String>,
}

/// Ligature deviation from the best target for each rotated standard example.
pub fn family_residual_sweep(grid: &[FamilyAngles], quad: &QuadratureConfig) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|angles| {
            let outcome = StandardExample::new(*angles).and_then(|ex| ligature(&ex.marked_datum(quad)?, quad));
            match outcome {
                Ok(tuple) => {
                    let (cv, residual) = best_target(&tuple);
                    SweepRow { angles: *angles, a: cv.a, b: cv.b, residual, error: None }
                }
                Err(e) => SweepRow { angles: *angles, a: f64::NAN, b: c64(f64::NAN, f64::NAN), residual: f64::INFINITY, error: Some(e.to_string()) },
            }
        })
        .collect()
}

/// n points per axis over theta in [t0, t1], alpha and beta in [s0, s1],
/// skipping the excluded (0, theta) line.
pub fn angle_grid(n: usize, theta: (f64, f64), alpha: (f64, f64), beta: (f64, f64)) -> Vec<FamilyAngles> {
    let axis = |(lo, hi): (f64, f64), i: usize| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let mut out = vec![];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if let Ok(a) = FamilyAngles::new(axis(theta, i), axis(alpha, j), axis(beta, k)) {
                    out.push(a);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periods::closes_periods;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup() -> (PeriodProblem, Vec<C64>, TargetSpec) {
        let angles = FamilyAngles::new(PI / 4.0, 0.3, 0.2).unwrap();
        let (p, u0) = PeriodProblem::from_family(&angles, QuadratureConfig::default()).unwrap();
        let (cv, res) = best_target(&p.ligature(&u0).unwrap());
        assert!(res < 1e-9);
        (p, u0, TargetSpec::new(cv.a, cv.b, 1).unwrap())
    }

    #[test]
    fn seed_matches_template_curve() {
        let (p, u0, _) = setup();
        let d = p.datum(&u0).unwrap();
        let mut roots = p.template.curve.finite_roots.clone();
        for r in branch_values_from_coords(&u0) {
            let (i, dist) = roots.iter().enumerate().map(|(i, s)| (i, (s - r).norm())).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            assert!(dist < 1e-12);
            roots.remove(i);
        }
        assert!((d.phi_coeff - p.template.phi_coeff).norm() < 1e-10);
    }

    #[test]
    fn exact_start_converges_immediately() {
        let (p, u0, target) = setup();
        let r = p.newton_solve(&target, &u0, &NewtonConfig::default()).unwrap();
        assert!(r.iterations <= 2 && r.residual < 1e-10);
        // solving again from the solution leaves it unchanged
        let again = p.newton_solve(&target, &r.solution, &NewtonConfig::default()).unwrap();
        assert!(again.solution.iter().zip(&r.solution).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn perturbed_start_recovers() {
        let (p, u0, target) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let noisy: Vec<C64> = u0.iter().map(|v| v + c64(rng.gen_range(-1e-2..1e-2), rng.gen_range(-1e-2..1e-2))).collect();
            let r = p.newton_solve(&target, &noisy, &NewtonConfig::default()).unwrap();
            let err = r.solution.iter().zip(&u0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
            assert!(r.quadratic_constant().is_some());
        }
    }

    #[test]
    fn continuation_in_b() {
        let (p, u0, target) = setup();
        let path: Vec<TargetSpec> = (0..4).map(|i| TargetSpec::new(target.a, target.b + 0.01 * i as f64, 1).unwrap()).collect();
        let out = p.continuation(&path, &u0, &NewtonConfig::default());
        assert!(out.error.is_none());
        assert_eq!(out.reports.len(), 4);
        for (rep, t) in out.reports.iter().zip(&path) {
            let d = p.datum(&rep.solution).unwrap();
            let cv = closes_periods(&d, 1e-8, &p.quad).unwrap().unwrap();
            assert!((cv.a - t.a).abs() < 1e-8 && (cv.b - t.b).norm() < 1e-8);
        }
        let jumps: Vec<f64> = out.reports.windows(2).map(|w| norm(&w[0].solution.iter().zip(&w[1].solution).map(|(a, b)| a - b).collect::<Vec<_>>())).collect();
        assert!(jumps.iter().all(|j| *j < 0.05));
    }

    #[test]
    fn continuation_through_zero_a_fails() {
        let (p, u0, target) = setup();
        let path = [target, TargetSpec::new(-target.a, target.b, 1).unwrap()];
        let cfg = NewtonConfig { max_iter: 8, ..Default::default() };
        let out = p.continuation(&path, &u0, &cfg);
        assert!(matches!(out.error, Some(Error::StepTooLarge(_))));
        assert_eq!(out.reports.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig { damping: 0.0, ..Default::default() }.validate().is_err());
        assert!(NewtonConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(TargetSpec::new(0.0, c64(0.0, 0.0), 1).is_err());
        assert!(TargetSpec::new(1.0, c64(0.0, 0.0), 2).is_err());
    }

    #[test]
    fn sweep_small_grid() {
        let grid = angle_grid(2, (PI / 6.0, PI / 3.0), (0.1, 1.4), (0.1, 1.4));
        let rows = family_residual_sweep(&grid, &QuadratureConfig::default());
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.residual < 1e-8 && r.error.is_none()));
    }
}
