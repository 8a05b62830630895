// Newton solve of the period problem from perturbed branch data, then a short
// continuation in the target a.
use parallel_tori::family::FamilyAngles;
use parallel_tori::numerics::QuadratureConfig;
use parallel_tori::solver::{perturb_branch_data, NewtonConfig, PeriodProblem, TargetSpec};
use rand::SeedableRng;

fn main() -> parallel_tori::error::Result<()> {
    let angles = FamilyAngles::new(std::f64::consts::FRAC_PI_4, 0.3, 0.2)?;
    let (problem, u0) = PeriodProblem::from_family(&angles, QuadratureConfig::default())?;
    let own = problem.ligature(&u0)?;
    let (cv, _) = parallel_tori::periods::best_target(&own);
    let target = TargetSpec::new(cv.a, cv.b, 1)?;
    let cfg = NewtonConfig::default();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let init = perturb_branch_data(&u0, 1e-2, &mut rng);
    let report = problem.newton_solve(&target, &init, &cfg)?;
    println!("residual per iteration: {:?}", report.history);
    println!("recovered a = {:.12}, b = {:.12}", report.classifying.a, report.classifying.b);

    let path: Vec<TargetSpec> =
        (0..=4).map(|i| TargetSpec::new(cv.a + 0.05 * i as f64, cv.b, 1)).collect::<Result<_, _>>()?;
    let outcome = problem.continuation(&path, &report.solution, &cfg);
    for r in &outcome.reports {
        println!("a = {:.4}: residual {:.2e} in {} steps", r.classifying.a, r.residual, r.iterations);
    }
    if let Some(e) = outcome.error {
        println!("stopped: {e}");
    }
    Ok(())
}
