// Mesh a fundamental piece, report how well it closes up, and write a 2x2
// patch of translates to OBJ.
use parallel_tori::family::StandardExample;
use parallel_tori::mesh::{boundary_identification, export_obj, gauss_deviation, GridDomain, Immersion, Translates};
use parallel_tori::numerics::QuadratureConfig;

fn main() -> parallel_tori::error::Result<()> {
    let quad = QuadratureConfig::default();
    let ex = StandardExample::from_angles(0.7, 0.3, 0.2)?;
    let immersion = Immersion::from_example(&ex, &quad)?;
    let mesh = immersion.mesh(&GridDomain::flat(48, 48)?)?;
    println!("H = {:?}\nT = {:?}", mesh.lattice.h, mesh.lattice.t);
    println!("boundary mismatch {:.2e}", boundary_identification(&mesh).max());
    println!("gauss deviation max {:.3e} rad", gauss_deviation(&mesh).max);

    let path = std::env::temp_dir().join("parallel_tori_patch.obj");
    let n = export_obj(&mesh, &Translates { m: (0, 1), n: (0, 1) }, &path)?;
    println!("wrote {n} vertices to {}", path.display());
    Ok(())
}
