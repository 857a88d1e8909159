//! Building an experiment from TOML in code, running it and printing the
//! first rows of its trace file.

use semifix::cli::{write_trace_csv, Experiment, ExperimentConfig};

const CONFIG: &str = r#"
seed = 1

[space]
d = 1
p = 2.0

[[generators]]
kind = "affine"
a = [[-1.0]]
b = [0.0]

[scheme]
kind = "viscosity"
outer_steps = 12
epsilon = { rule = "power", gamma = 0.5 }

[contraction]
kind = "scaled"
alpha = 0.5
u = [2.0]
"#;

fn main() -> semifix::Result<()> {
    let exp = Experiment::new("negation", ExperimentConfig::from_toml(CONFIG)?, None)?;
    let mut trace = exp.run_scheme()?;
    let eval = exp.evaluate(&trace)?;
    exp.annotate(&mut trace, &eval)?;
    print!("{}", write_trace_csv(&trace, 1, 1));
    // Twelve steps are far from the limit: the trace inequalities hold while
    // the residual, oracle and gamma checks do not yet.
    for c in &eval.report.checks {
        println!("{:<24} {:>11.3e}  {}", c.name, c.value, if c.passed { "pass" } else { "fail" });
    }
    Ok(())
}
