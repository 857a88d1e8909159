//! The anchor scheme z_n = x/n + (1 - 1/n) T_mu z_n with a fixed Cesaro mean,
//! for two anchors. Each limit is the retraction value of its anchor.

use semifix::verify::{projection_oracle, variational_inequality};
use semifix::{cesaro_mean, run_anchor, vector, Domain, LpSpace, NonexpansiveMap, Representation};

fn main() -> semifix::Result<()> {
    let rep = Representation::new(
        LpSpace::hilbert(2)?,
        vec![NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0]))?, NonexpansiveMap::swap(2, 0, 1)?],
        Domain::Whole,
    )?;
    let sp = *rep.space();
    let fixed = rep.fixed_set_oracle()?;
    let samples = fixed.sample(50, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1))?;
    let mu = cesaro_mean(64, 2)?;

    for x in [vector(&[1.0, 0.0]), vector(&[-0.5, 2.0])] {
        let trace = run_anchor(&rep, &mu, &x, 200, 1e-10)?;
        let z = trace.limit().unwrap();
        let px = projection_oracle(&sp, &fixed, &x)?;
        let vi = variational_inequality(&sp, z, &x, &samples, 1e-4)?;
        println!("anchor {:?}", x.as_slice());
        for n in [1, 2, 10, 50, 200] {
            let s = &trace.steps[n - 1];
            println!("  n = {n:>3}  z = ({:.6}, {:.6})  |z - T_mu z| = {:.3e}", s.z[0], s.z[1], s.mean_residual);
        }
        println!("  projection ({:.6}, {:.6}), VI max {:.3e}", px[0], px[1], vi.checks[0].value);
    }
    Ok(())
}
