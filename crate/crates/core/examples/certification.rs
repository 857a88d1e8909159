//! Certifying generators: a commuting pair, a quarter turn with a clamp, and
//! an expansive matrix.

use nalgebra::DMatrix;
use semifix::{vector, Domain, Error, LpSpace, NonexpansiveMap, Representation};

fn main() -> semifix::Result<()> {
    let sp = LpSpace::hilbert(2)?;
    let clamp = NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0]))?;

    let pair = Representation::new(sp, vec![clamp.clone(), NonexpansiveMap::swap(2, 0, 1)?], Domain::Whole)?;
    let report = pair.certify(256, 1)?;
    println!("clamp + swap: passed = {}, max commutator defect = {:e}", report.passed, report.max_commutator_defect);

    let turn =
        NonexpansiveMap::affine(&sp, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), vector(&[0.0, 0.0]))?;
    match Representation::certified(sp, vec![turn, clamp], Domain::Whole, 256, 1) {
        Err(Error::Certification { reason, .. }) => println!("quarter turn + clamp: {reason}"),
        other => println!("unexpected: {:?}", other.map(|_| ())),
    }

    let stretch = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, 0.0, 1.0]);
    match NonexpansiveMap::affine(&sp, stretch, vector(&[0.0, 0.0])) {
        Err(e) => println!("diag(1.1, 1): {e}"),
        Ok(_) => println!("diag(1.1, 1) unexpectedly accepted"),
    }

    // Translations commute and are isometries, but have no fixed points.
    let shift = NonexpansiveMap::affine(&sp, DMatrix::identity(2, 2), vector(&[1.0, 0.0]))?;
    let report = Representation::new(sp, vec![shift], Domain::Whole)?.certify(64, 1)?;
    println!("translation: passed = {}, warnings = {:?}", report.passed, report.warnings);
    Ok(())
}
