//! The diagonal family in l^p for several p. Without a projection oracle the
//! limit is judged by the variational inequality with the duality map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semifix::verify::variational_inequality;
use semifix::{run_viscosity, vector, Contraction, Domain, LpSpace, NonexpansiveMap, Representation, SchemeConfig};

fn main() -> semifix::Result<()> {
    let u = vector(&[1.0, 0.0]);
    for p in [1.5, 2.0, 3.0, 8.0] {
        let rep = Representation::certified(
            LpSpace::new(2, p)?,
            vec![NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0]))?, NonexpansiveMap::swap(2, 0, 1)?],
            Domain::Whole,
            128,
            3,
        )?;
        let trace = run_viscosity(&rep, &SchemeConfig::default(), &Contraction::constant(u.clone()))?;
        let z = trace.limit().unwrap();
        let samples = rep.fixed_set_oracle()?.sample(50, &mut ChaCha8Rng::seed_from_u64(9))?;
        let vi = variational_inequality(rep.space(), z, &u, &samples, 1e-4)?;
        println!(
            "p = {p:<3}  z_200 = ({:.6}, {:.6})  VI max = {:>10.3e}  max residual = {:.2e}",
            z[0],
            z[1],
            vi.checks[0].value,
            trace.steps.last().unwrap().generator_residuals.iter().copied().fold(0.0, f64::max)
        );
    }
    Ok(())
}
