//! Checking a candidate retraction value. The variational inequality alone
//! accepts a candidate pushed off Fix(S) along x - Px; adding the membership
//! test rejects it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semifix::verify::{projection_oracle, retraction_check, variational_inequality};
use semifix::{vector, Domain, LpSpace, NonexpansiveMap, Representation};

fn main() -> semifix::Result<()> {
    let rep = Representation::new(
        LpSpace::hilbert(2)?,
        vec![NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0]))?, NonexpansiveMap::swap(2, 0, 1)?],
        Domain::Whole,
    )?;
    let sp = *rep.space();
    let fixed = rep.fixed_set_oracle()?;
    let samples = fixed.sample(50, &mut ChaCha8Rng::seed_from_u64(5))?;
    let x = vector(&[1.0, 0.0]);
    let px = projection_oracle(&sp, &fixed, &x)?;
    let lever = &x - &px;

    let candidates = [
        ("projection", px.clone()),
        ("shifted along the diagonal", &px + vector(&[0.1, 0.1])),
        ("pushed toward x", &px + &lever * (0.05 / lever.norm())),
        ("pulled away from x", &px - &lever * (0.05 / lever.norm())),
    ];
    for (name, c) in candidates {
        let vi = variational_inequality(&sp, &c, &x, &samples, 1e-4)?;
        let full = retraction_check(&rep, &c, &x, &samples, 1e-4, 1e-9)?;
        println!(
            "{name:<28} VI max {:>10.3e}  VI {}  VI + membership {}",
            vi.checks[0].value,
            if vi.passed() { "pass" } else { "fail" },
            if full.passed() { "pass" } else { "fail" },
        );
    }
    Ok(())
}
