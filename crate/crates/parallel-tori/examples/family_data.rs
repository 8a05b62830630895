// Weierstrass data of one standard example: mu, E, the Gauss map at the
// ends and the flux/period check.
use parallel_tori::family::{flux_check, gauss_map, StandardExample};
use parallel_tori::numerics::QuadratureConfig;

fn main() -> parallel_tori::error::Result<()> {
    let quad = QuadratureConfig::default();
    let ex = StandardExample::from_angles(0.7, 0.3, 0.2)?;
    println!("lambda = {:.12}", ex.angles.lambda());
    println!("mu     = {:.12}", ex.mu);
    println!("E      = {:.12}", ex.e_factor);
    for (i, end) in ex.ends.iter().enumerate() {
        println!("end {i}: normal {:?}", gauss_map(&ex.angles, &end.point).normal());
    }
    let check = flux_check(&ex, &quad)?;
    let (flux, period) = check.errors();
    println!("|F(gamma1) + F(A)| = {flux:.3e}, max |P(gamma2)| = {period:.3e}");
    Ok(())
}
