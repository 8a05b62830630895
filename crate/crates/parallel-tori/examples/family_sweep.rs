// How well the rotated standard examples close their periods across a grid
// of angles.
use std::f64::consts::PI;

use parallel_tori::numerics::QuadratureConfig;
use parallel_tori::solver::{angle_grid, family_residual_sweep};

fn main() {
    let grid = angle_grid(3, (PI / 6.0, PI / 3.0), (0.1, 1.4), (0.1, 1.4));
    let rows = family_residual_sweep(&grid, &QuadratureConfig::default());
    println!("theta,alpha,beta,a,residual");
    for r in rows {
        match r.error {
            None => println!("{:.4},{:.4},{:.4},{:.10},{:.2e}", r.angles.theta, r.angles.alpha, r.angles.beta, r.a, r.residual),
            Some(e) => println!("{:.4},{:.4},{:.4},,{e}", r.angles.theta, r.angles.alpha, r.angles.beta),
        }
    }
}
