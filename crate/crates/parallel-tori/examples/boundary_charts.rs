// Boundary charts: the Scherk chart Jacobian against finite differences and
// the catenoid chart Jacobian at the origin.
use std::f64::consts::PI;

use parallel_tori::boundary::{
    fd_lhat_jacobian, fd_theta_jacobian, scherk_lhat_rows, theta_jacobian_at_origin, CatenoidChartPoint,
};
use parallel_tori::numerics::{QuadratureConfig, DEFAULT_FD_STEPS};

fn main() -> parallel_tori::error::Result<()> {
    let quad = QuadratureConfig::default();
    for k in 1..=3 {
        let (_, det) = scherk_lhat_rows(0.5, k)?;
        println!("scherk k={k}: |det| / (2pi)^2k = {:.12}", det / (2.0 * PI).powi(2 * k as i32));
    }
    let (rows, _) = scherk_lhat_rows(0.5, 1)?;
    let fd = fd_lhat_jacobian(0.5, &DEFAULT_FD_STEPS, &quad)?;
    println!("scherk k=1: fd relative error {:.2e}", fd.relative_error(&rows));

    let exact = theta_jacobian_at_origin(1);
    let fd = fd_theta_jacobian(&CatenoidChartPoint::origin(1)?, &DEFAULT_FD_STEPS, &quad)?;
    println!("catenoid k=1: fd relative error {:.2e}", fd.relative_error(&exact));
    println!("{exact}");
    Ok(())
}
