#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;
use parallel_tori::boundary::{
    catenoid_functions, fd_lhat_jacobian, fd_theta_jacobian, scherk_lhat_rows, scherk_normalization,
    scherk_residues, theta_jacobian_at_origin, CatenoidChartPoint,
};
use parallel_tori::curve::{continue_to, continue_w, integrate_lifted, CurvePoint, HyperellipticCurve};
use parallel_tori::family::{flux_check, involution_e, FamilyAngles, StandardExample};
use parallel_tori::mesh::{boundary_identification, catenoid_fit, level_section, GridDomain, Immersion};
use parallel_tori::numerics::{
    c64, elliptic_k, segment_distance, fd_derivative, gauss_adaptive, integrate, condition_number, Contour, QuadratureConfig, Stencil,
    DEFAULT_FD_STEPS,
};
use parallel_tori::periods::{best_target, classify, ligature};
use parallel_tori::solver::{angle_grid, perturb_branch_data, NewtonConfig, PeriodProblem, TargetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn grid() -> Vec<FamilyAngles> {
    angle_grid(3, (PI / 6.0, PI / 3.0), (0.1, 1.4), (0.1, 1.4))
}

pub fn elliptic_kernel() -> Check {
    let cfg = QuadratureConfig::new(1e-14, 1e-14, 30).map_err(|e| e.to_string())?;
    let agm = elliptic_k(0.5).map_err(|e| e.to_string())?;
    let direct = gauss_adaptive(|t| c64(1.0 / (1.0 - 0.5 * t.sin().powi(2)).sqrt(), 0.0), 0.0, PI / 2.0, &cfg)
        .map_err(|e| e.to_string())?
        .re;
    let dk = (agm - direct).abs();
    let mut worst: f64 = 0.0;
    for theta in [PI / 6.0, FRAC_PI_4, PI / 3.0] {
        let ex = StandardExample::from_angles(theta, 0.0, 0.0).map_err(|e| e.to_string())?;
        let g2 = ex.gamma2().map_err(|e| e.to_string())?;
        let period = integrate_lifted(&ex.curve, &g2.base, g2.start_w, |_, w| 1.0 / w, &quad()).map_err(|e| e.to_string())?;
        let target = c64(0.0, 2.0 * PI);
        worst = worst.max((ex.mu * period - target).norm() / target.norm());
    }
    ensure(dk < 1e-10 && worst < 1e-9, format!("|K_agm - K_quad| = {dk:.2e}, max rel |mu int dz/w - 2 pi i| = {worst:.2e}"))
}

pub fn family_closes() -> Check {
    let mut worst_res: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for angles in grid() {
        let ex = StandardExample::new(angles).map_err(|e| e.to_string())?;
        let tuple = ligature(&ex.marked_datum(&quad()).map_err(|e| e.to_string())?, &quad()).map_err(|e| e.to_string())?;
        let (cv, residual) = best_target(&tuple);
        let res_p1 = tuple.entries[0];
        worst_res = worst_res.max(residual);
        worst_a = worst_a.max(res_p1.im.abs()).max((cv.a - res_p1.re).abs());
    }
    ensure(worst_res < 1e-8 && worst_a < 1e-8, format!("27 points: max residual {worst_res:.2e}, max |a - Res_p1| incl. Im {worst_a:.2e}"))
}

pub fn flux_identities() -> Check {
    let (mut wf, mut wp): (f64, f64) = (0.0, 0.0);
    for angles in grid() {
        let ex = StandardExample::new(angles).map_err(|e| e.to_string())?;
        let (f, p) = flux_check(&ex, &quad()).map_err(|e| e.to_string())?.errors();
        wf = wf.max(f);
        wp = wp.max(p);
    }
    ensure(wf < 1e-8 && wp < 1e-8, format!("max |F_g1 + F_A| = {wf:.2e}, max |P_g2| = {wp:.2e}"))
}

pub fn scherk_chart() -> Check {
    let mut det_err: f64 = 0.0;
    for k in 1..=3 {
        let (_, det) = scherk_lhat_rows(0.5, k).map_err(|e| e.to_string())?;
        det_err = det_err.max((det / (2.0 * PI).powi(2 * k as i32) - 1.0).abs());
    }
    let (mut fd_err, mut fd_det, mut c_err, mut dc_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for rho in [0.3, 0.5, 0.9] {
        let (rows, _) = scherk_lhat_rows(rho, 1).map_err(|e| e.to_string())?;
        let fd = fd_lhat_jacobian(rho, &DEFAULT_FD_STEPS, &quad()).map_err(|e| e.to_string())?;
        // entrywise relative to the largest entry of each row
        for r in 0..rows.nrows() {
            let scale = (0..rows.ncols()).map(|c| rows[(r, c)].norm()).fold(0.0, f64::max);
            for c in 0..rows.ncols() {
                fd_err = fd_err.max((fd.matrix[(r, c)] - rows[(r, c)]).norm() / scale);
            }
        }
        fd_det = fd_det.max((fd.determinant().norm() / (2.0 * PI).powi(2) - 1.0).abs());
        let (res0, _) = scherk_residues(rho, &quad()).map_err(|e| e.to_string())?;
        c_err = c_err.max((-res0 - (rho * rho + 1.0) / rho).norm());
        let dc = fd_derivative(
            |t| Ok(vec![scherk_normalization(rho, c64(rho, 0.0) + t)]),
            c64(0.0, 0.0),
            &DEFAULT_FD_STEPS,
            Stencil::Central,
            None,
        )
        .map_err(|e| e.to_string())?;
        dc_err = dc_err.max((dc.value[0] - 1.0 / (rho * rho + 1.0)).norm());
    }
    ensure(
        det_err < 1e-12 && fd_err < 1e-3 && fd_det < 0.01 && c_err < 1e-6 && dc_err < 1e-4,
        format!(
            "|det|/(2pi)^2k - 1 = {det_err:.1e}, fd rows {fd_err:.1e}, fd det {fd_det:.1e}, c {c_err:.1e}, c' {dc_err:.1e}"
        ),
    )
}

pub fn catenoid_chart() -> Check {
    let origin = CatenoidChartPoint::origin(1).map_err(|e| e.to_string())?;
    let f = catenoid_functions(&origin, &quad()).map_err(|e| e.to_string())?;
    let a0 = f.a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let b0 = f.b_tilde.iter().map(|z| (z + 1.0).norm()).fold(0.0, f64::max);
    let exact = theta_jacobian_at_origin(1);
    let fd = fd_theta_jacobian(&origin, &DEFAULT_FD_STEPS, &quad()).map_err(|e| e.to_string())?;
    let (mut da, mut db): (f64, f64) = (0.0, 0.0);
    for r in 0..exact.nrows() {
        for c in 0..exact.ncols() {
            let err = (fd.matrix[(r, c)] - exact[(r, c)]).norm();
            if r < 2 {
                da = da.max(err / (2.0 * PI));
            } else {
                db = db.max(err);
            }
        }
    }
    let two_pi_i = (0..2).all(|j| (exact[((j + 1) % 2, j)] - c64(0.0, 2.0 * PI)).norm() < 1e-15);
    let cond = condition_number(&fd.matrix);
    ensure(
        a0 < 1e-12 && b0 < 1e-12 && two_pi_i && da < 1e-3 && db < 1e-3 && cond < 100.0,
        format!("|A(0)| {a0:.1e}, |B~(0) + 1| {b0:.1e}, dA/dx rel {da:.1e}, d(1/B)/dy {db:.1e}, cond {cond:.3}"),
    )
}

pub fn local_uniqueness(trials: usize, seed: u64) -> Check {
    let angles = FamilyAngles::new(FRAC_PI_4, 0.3, 0.2).map_err(|e| e.to_string())?;
    let (problem, u0) = PeriodProblem::from_family(&angles, quad()).map_err(|e| e.to_string())?;
    let (cv, _) = best_target(&problem.ligature(&u0).map_err(|e| e.to_string())?);
    let target = TargetSpec::new(cv.a, cv.b, 1).map_err(|e| e.to_string())?;
    let cfg = NewtonConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ok, mut worst): (usize, f64) = (0, 0.0);
    let mut stray = 0;
    for _ in 0..trials {
        let init = perturb_branch_data(&u0, 1e-2, &mut rng);
        if let Ok(rep) = problem.newton_solve(&target, &init, &cfg) {
            ok += 1;
            let d = rep.solution.iter().zip(&u0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            worst = worst.max(d);
            stray += usize::from(d >= 1e-8);
        }
    }
    ensure(
        ok * 10 >= trials * 9 && stray == 0,
        format!("{ok}/{trials} converged, {stray} off the original point, max distance {worst:.2e}"),
    )
}

pub fn mesh_closure() -> Check {
    let mut lines = vec![];
    let mut pass = true;
    for (theta, alpha, beta) in [(FRAC_PI_4, 0.0, 0.0), (0.7, 0.3, 0.2)] {
        let ex = StandardExample::from_angles(theta, alpha, beta).map_err(|e| e.to_string())?;
        let im = Immersion::from_example(&ex, &quad()).map_err(|e| e.to_string())?;
        let mesh = im.mesh(&GridDomain::flat(48, 48).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let bm = boundary_identification(&mesh).max();
        let mut heights = mesh.end_heights.clone();
        heights.sort_by(f64::total_cmp);
        let generic = 0.5 * (heights[0] + heights[heights.len() - 1]) + 0.0123;
        let flux = im.level_flux(generic, &mesh.end_heights).map_err(|e| e.to_string())?;
        let sec = level_section(&mesh, generic).map_err(|e| e.to_string())?;
        let h_norm = PI * ex.mu * ex.e_factor.norm();
        let h = mesh.lattice.h;
        let dh = (h[0].powi(2) + (h[1] - h_norm).powi(2) + h[2].powi(2)).sqrt() / h_norm;
        let ok = bm < 1e-6 && (flux[2] - 2.0 * PI).abs() < 1e-6 && dh < 1e-6 && sec.components >= 1;
        pass &= ok;
        lines.push(format!(
            "({theta:.3},{alpha},{beta}): boundary {bm:.1e}|H|, flux-2pi {:.1e}, |H - pi mu|E| e_y|/|H| {dh:.1e}",
            flux[2] - 2.0 * PI
        ));
    }
    ensure(pass, lines.join("; "))
}

pub fn degeneration() -> Check {
    let ex = StandardExample::from_angles(0.05, 0.0, 0.0).map_err(|e| e.to_string())?;
    let cv = classify(&ex.marked_datum(&quad()).map_err(|e| e.to_string())?, 1e-6, &quad()).map_err(|e| e.to_string())?;
    let da = (cv.a * 0.05 / 2.0 - 1.0).abs();
    let im = Immersion::from_example(&ex, &quad()).map_err(|e| e.to_string())?;
    let dom = GridDomain::annulus(1.0 / 3.0, 3.0, 48, 48).map_err(|e| e.to_string())?;
    let fit = catenoid_fit(&im.mesh(&dom).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rel = fit.hausdorff / fit.neck_radius;
    ensure(
        da < 0.01 && cv.b.norm() < 1e-6 && rel < 0.02,
        format!("|a theta/2 - 1| = {da:.2e}, |b| = {:.1e}, Hausdorff/neck = {rel:.2e}", cv.b.norm()),
    )
}

// Property cases shared by the proptest suites and the acceptance run.

/// sum c_k/(z - p_k) + d_k/(z - p_k)^2 + z^2 around the unit circle.
pub fn residue_case(poles: &[C64], simple: &[C64], double: &[C64]) -> Result<(), String> {
    let f = |z: C64| -> C64 {
        let mut s = z * z;
        for ((p, c), d) in poles.iter().zip(simple).zip(double) {
            let u = z - p;
            s += c / u + d / (u * u);
        }
        s
    };
    let circle = Contour::circle(c64(0.0, 0.0), 1.0).map_err(|e| e.to_string())?;
    let got = integrate(f, &circle, &quad()).map_err(|e| e.to_string())?;
    let expected: C64 = poles.iter().zip(simple).filter(|(p, _)| p.norm() < 1.0).map(|(_, c)| c * c64(0.0, 2.0 * PI)).sum();
    let scale: f64 = 1.0 + simple.iter().chain(double).map(|c| c.norm()).sum::<f64>();
    let err = (got - expected).norm();
    if err < 1e-8 * scale {
        Ok(())
    } else {
        Err(format!("poles {poles:?}: got {got}, expected {expected}"))
    }
}

/// Continuing w around the unit circle returns to the start iff it encloses
/// an even number of roots.
pub fn monodromy_case(roots: &[C64]) -> Result<(), String> {
    let curve = HyperellipticCurve::new(roots.to_vec(), vec![], c64(1.0, 0.0)).map_err(|e| e.to_string())?;
    let circle = Contour::circle(c64(0.0, 0.0), 1.0).map_err(|e| e.to_string())?;
    let w0 = curve.eval_q(circle.start()).sqrt();
    let lifted = continue_w(&curve, &circle, w0).map_err(|e| e.to_string())?;
    let inside = roots.iter().filter(|r| r.norm() < 1.0).count();
    let flipped = (lifted.end_w() + w0).norm() < 1e-8 * w0.norm();
    if lifted.closes() == (inside % 2 == 0) && lifted.closes() != flipped {
        Ok(())
    } else {
        Err(format!("roots {roots:?}: {inside} inside, closes {}", lifted.closes()))
    }
}

/// A circle or ellipse around 0 homotopic to gamma2 in the curve minus the
/// ends, or None if the sample separates an end or comes near a branch point.
/// Its start is joined to that of gamma2 by a segment, so the tilt stays
/// within pi/4 of the real axis.
pub fn deformed_gamma2(ex: &StandardExample, center: C64, a: f64, b: f64, tilt: f64) -> Option<Contour> {
    let c = if (a - b).abs() < 1e-3 {
        Contour::circle(center, a).ok()?
    } else {
        Contour::ellipse(center, a.max(b), a.min(b), C64::from_polar(1.0, tilt), 1, 0.0).ok()?
    };
    let lambda = ex.angles.lambda();
    for r in [c64(0.0, 1.0 / lambda), c64(0.0, -1.0 / lambda)] {
        if !c.encloses(r) || c.distance_to(r) < 0.05 {
            return None;
        }
    }
    for r in [c64(0.0, lambda), c64(0.0, -lambda)] {
        if c.encloses(r) || c.distance_to(r) < 0.05 {
            return None;
        }
    }
    if tilt.abs() > FRAC_PI_4 {
        return None;
    }
    let g2 = ex.gamma2().ok()?;
    let branch = [1.0 / lambda, -1.0 / lambda, lambda, -lambda].map(|y| c64(0.0, y));
    let ends: Vec<C64> = ex.ends.iter().filter_map(|e| ex.curve.to_standard(&e.point)).map(|p| p.z).collect();
    for z in &ends {
        if c.encloses(*z) != g2.base.encloses(*z) || c.distance_to(*z) < 0.05 {
            return None;
        }
    }
    if branch.iter().chain(&ends).any(|z| segment_distance(*z, g2.base.start(), c.start()) < 0.05) {
        return None;
    }
    Some(c)
}

pub fn deformation_case(ex: &StandardExample, contour: &Contour) -> Result<(), String> {
    let d = ex.marked_datum(&quad()).map_err(|e| e.to_string())?;
    let reference = classify(&d, 1e-6, &quad()).map_err(|e| e.to_string())?;
    let from = CurvePoint::standard(d.marked_cycle.base.start(), d.marked_cycle.start_w);
    let start = continue_to(&ex.curve, &from, contour.start()).map_err(|e| e.to_string())?;
    let mut moved = d.clone();
    moved.marked_cycle = continue_w(&ex.curve, contour, start.w).map_err(|e| e.to_string())?;
    let cv = classify(&moved, 1e-6, &quad()).map_err(|e| e.to_string())?;
    let err = (cv.a - reference.a).abs().max((cv.b - reference.b).norm());
    if err < 1e-8 {
        Ok(())
    } else {
        Err(format!("{:?} deformed by {contour:?}: classify moved by {err:.2e}", ex.angles))
    }
}

/// D*Phi = -Phi and E*Phi = -conj(Phi) at the point over z on the sheet near w_ref.
pub fn pullback_case(ex: &StandardExample, z: C64) -> Result<(), String> {
    let p = ex.curve.point_near(z, c64(1.0, 0.0));
    let phi = ex.weierstrass_form(&p).map_err(|e| e.to_string())?;
    let scale = 1.0 + phi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let deck = ex.weierstrass_form(&p.deck()).map_err(|e| e.to_string())?;
    let e = ex.curve.to_standard(&involution_e(&p)).ok_or("E p not finite")?;
    let phi_e = ex.weierstrass_form(&e).map_err(|e| e.to_string())?;
    for i in 0..3 {
        let d_err = (deck[i] + phi[i]).norm();
        // dz pulls back by conj(dz)/conj(z)^2 under z -> -1/conj(z)
        let e_err = (phi_e[i] / z.conj().powu(2) + phi[i].conj()).norm();
        if d_err > 1e-10 * scale || e_err > 1e-10 * scale * (1.0 + 1.0 / z.norm_sqr()) {
            return Err(format!("{:?} at {z}: D {d_err:.1e}, E {e_err:.1e}", ex.angles));
        }
    }
    Ok(())
}

/// Whether z is a usable sample point: away from branch points and ends.
pub fn clear_point(ex: &StandardExample, z: C64) -> bool {
    let lambda = ex.angles.lambda();
    let branch = [c64(0.0, lambda), c64(0.0, -lambda), c64(0.0, 1.0 / lambda), c64(0.0, -1.0 / lambda)];
    let ends: Vec<C64> = ex.ends.iter().filter_map(|e| ex.curve.to_standard(&e.point)).map(|p| p.z).collect();
    z.norm() > 0.05 && branch.iter().chain(&ends).all(|b| (z - b).norm() > 0.05)
}

pub fn pullback_triples() -> [(f64, f64, f64); 5] {
    [(FRAC_PI_4, 0.0, 0.0), (FRAC_PI_4, 0.3, 0.2), (PI / 6.0, 1.4, 0.1), (PI / 3.0, 0.75, 1.4), (0.9, 0.5, 1.1)]
}

fn random_c<R: Rng>(rng: &mut R, r: f64) -> C64 {
    c64(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// The four property suites with seeded samples: (failures, cases) per suite.
pub fn property_suites(seed: u64) -> Vec<(&'static str, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![];

    let mut fails = 0;
    let mut cases = 0;
    while cases < 200 {
        let n = rng.gen_range(1..=4);
        let poles: Vec<C64> = (0..n).map(|_| random_c(&mut rng, 2.0)).collect();
        if poles.iter().any(|p| (p.norm() - 1.0).abs() < 0.1) {
            continue;
        }
        let simple: Vec<C64> = (0..n).map(|_| random_c(&mut rng, 2.0)).collect();
        let double: Vec<C64> = (0..n).map(|_| random_c(&mut rng, 1.0)).collect();
        cases += 1;
        fails += usize::from(residue_case(&poles, &simple, &double).is_err());
    }
    out.push(("residue theorem", fails, cases));

    let (mut fails, mut cases) = (0, 0);
    while cases < 200 {
        let roots: Vec<C64> = (0..4).map(|_| random_c(&mut rng, 2.0)).collect();
        if roots.iter().any(|r| (r.norm() - 1.0).abs() < 0.1) {
            continue;
        }
        cases += 1;
        fails += usize::from(monodromy_case(&roots).is_err());
    }
    out.push(("monodromy parity", fails, cases));

    let (mut fails, mut cases) = (0, 0);
    while cases < 100 {
        let angles = (rng.gen_range(PI / 6.0..PI / 3.0), rng.gen_range(0.0..1.5), rng.gen_range(0.0..1.5));
        let Ok(ex) = StandardExample::from_angles(angles.0, angles.1, angles.2) else { continue };
        let center = random_c(&mut rng, 0.1);
        let (a, b) = (rng.gen_range(0.7..1.4), rng.gen_range(0.7..1.4));
        let Some(contour) = deformed_gamma2(&ex, center, a, b, rng.gen_range(-FRAC_PI_4..FRAC_PI_4)) else { continue };
        cases += 1;
        fails += usize::from(deformation_case(&ex, &contour).is_err());
    }
    out.push(("contour deformation", fails, cases));

    let (mut fails, mut cases) = (0, 0);
    for (t, a, b) in pullback_triples() {
        let ex = StandardExample::from_angles(t, a, b).expect("valid triple");
        let mut taken = 0;
        while taken < 32 {
            let z = C64::from_polar(rng.gen_range(0.2..3.0), rng.gen_range(0.0..2.0 * PI));
            if !clear_point(&ex, z) {
                continue;
            }
            taken += 1;
            cases += 1;
            fails += usize::from(pullback_case(&ex, z).is_err());
        }
    }
    out.push(("pullbacks D, E", fails, cases));
    out
}
