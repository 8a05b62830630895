// Ligature tuple and classifying value of a family member and of a torus
// built from a Scherk chart point.
use parallel_tori::boundary::{build_k1_torus, ChartPoint, ScherkChartPoint};
use parallel_tori::family::StandardExample;
use parallel_tori::numerics::{c64, QuadratureConfig};
use parallel_tori::periods::{best_target, ligature};

fn main() -> parallel_tori::error::Result<()> {
    let quad = QuadratureConfig::default();

    let ex = StandardExample::from_angles(std::f64::consts::FRAC_PI_4, 0.3, 0.2)?;
    let tuple = ligature(&ex.marked_datum(&quad)?, &quad)?;
    let (cv, residual) = best_target(&tuple);
    println!("family L = {:?}", tuple.entries);
    println!("  a = {:.12}, b = {:.12}, residual {residual:.2e}", cv.a, cv.b);

    // A generic chart point does not close its periods: the residual is the distance to the nearest target.
    let point = ScherkChartPoint::nodal(0.5, 1)?.shifted(0, c64(0.05, 0.02)).shifted(2, c64(-0.03, 0.04));
    let datum = build_k1_torus(&ChartPoint::Scherk(point), &quad)?;
    let (cv, residual) = best_target(&ligature(&datum, &quad)?);
    println!("scherk chart: a = {:.6}, b = {:.6}, residual {residual:.3e}", cv.a, cv.b);
    Ok(())
}
