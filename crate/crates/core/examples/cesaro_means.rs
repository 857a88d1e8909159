//! Cesaro box means on N^k: regularity defect and the averaged operator T_mu.

use semifix::{
    apply_mean, cesaro_mean, regularity_defect, vector, Domain, LpSpace, NonexpansiveMap, Representation,
    SemigroupElement,
};

fn main() -> semifix::Result<()> {
    for n in [1, 2, 10, 100] {
        let mu = cesaro_mean(n, 1)?;
        let d = regularity_defect(&mu, &SemigroupElement::unit(1, 0))?;
        println!("n = {n:>3}  |l_1 mu - mu| = {d}");
    }
    let mu = cesaro_mean(10, 2)?;
    let shift = SemigroupElement::new(vec![1, 2])?;
    println!("box n = 10, shift (1, 2): {:.4}", regularity_defect(&mu, &shift)?);

    // Clamp to the unit square and swap: T_mu pulls points toward the diagonal.
    let rep = Representation::new(
        LpSpace::hilbert(2)?,
        vec![NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0]))?, NonexpansiveMap::swap(2, 0, 1)?],
        Domain::Whole,
    )?;
    let x = vector(&[2.0, -1.0]);
    for n in [1, 2, 5, 50, 51] {
        let y = apply_mean(&rep, &cesaro_mean(n, 2)?, &x)?;
        println!("T_mu x with n = {n:>2}: ({:.5}, {:.5})", y[0], y[1]);
    }
    Ok(())
}
