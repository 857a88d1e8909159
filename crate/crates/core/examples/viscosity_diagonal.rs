//! The viscosity scheme on the clamp + swap family, compared with the
//! metric projection onto the diagonal segment.

use semifix::verify::{gamma_estimate, projection_oracle};
use semifix::{run_viscosity, vector, Contraction, Domain, LpSpace, NonexpansiveMap, Representation, SchemeConfig};

fn main() -> semifix::Result<()> {
    let rep = Representation::certified(
        LpSpace::hilbert(2)?,
        vec![NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0]))?, NonexpansiveMap::swap(2, 0, 1)?],
        Domain::Whole,
        128,
        7,
    )?;
    let u = vector(&[1.0, 0.0]);
    let trace = run_viscosity(&rep, &SchemeConfig::default(), &Contraction::constant(u.clone()))?;
    let sp = *rep.space();
    let pu = projection_oracle(&sp, &rep.fixed_set_oracle()?, &u)?;

    println!("   n   epsilon       z_1        z_2      |z - Pu|  inner");
    for s in trace.steps.iter().filter(|s| s.n.is_power_of_two() || s.n == trace.len()) {
        println!(
            "{:>4}  {:.5}  {:.8}  {:.8}  {:.3e}  {:>5}",
            s.n,
            s.epsilon,
            s.z[0],
            s.z[1],
            sp.dist(&s.z, &pu)?,
            s.inner_iterations
        );
    }
    // The exact iterate is ((1 + eps)/2, (1 - eps)/2).
    let last = trace.steps.last().unwrap();
    println!("closed form at n = {}: ({:.8}, {:.8})", last.n, (1.0 + last.epsilon) / 2.0, (1.0 - last.epsilon) / 2.0);
    println!("gamma over the last 10 steps: {:.3e}", gamma_estimate(&sp, &trace, &u, &pu, 10)?);
    Ok(())
}
