//! Norms and the normalized duality map in l^p.

use semifix::{vector, LpSpace};

fn main() -> semifix::Result<()> {
    let x = vector(&[3.0, -4.0, 1.0]);
    for p in [1.5, 2.0, 3.0, 6.0] {
        let sp = LpSpace::new(3, p)?;
        let jx = sp.duality_map(&x)?;
        println!(
            "p = {p:<3}  |x| = {:.6}  J(x) = {:>9.5?}  <x, Jx> = {:.6}  |Jx|_q = {:.6}",
            sp.norm(&x)?,
            jx.as_slice(),
            semifix::lp_space::pairing(&x, &jx)?,
            sp.dual_norm(&jx)?,
        );
    }

    // The operator-norm bound used to certify affine maps.
    let sp = LpSpace::new(2, 3.0)?;
    let shear = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
    println!("bound on |A|_3 for [[1, 1], [0, 0]]: {:.6}", sp.operator_norm_bound(&shear)?);
    Ok(())
}
