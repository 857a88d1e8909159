use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn semifix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semifix")).args(args).output().expect("binary runs")
}

fn run_in(cfg: &Path, out: &Path) -> Output {
    semifix(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
}

fn verify_in(cfg: &Path, out: &Path) -> Output {
    semifix(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn write_variant(dir: &Path, base: &str, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(config(base)).unwrap();
    assert!(text.contains(from), "{from:?} not in {base}");
    let path = dir.join(format!("variant_{base}"));
    fs::write(&path, text.replacen(from, to, 1)).unwrap();
    path
}

#[test]
fn diagonal_run_reaches_the_projection() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(&config("diagonal.cfg"), tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(tmp.path());
    assert_eq!(s["verdict"], true);
    assert_eq!(s["steps"], 200);
    let limit: Vec<f64> = serde_json::from_value(s["limit"].clone()).unwrap();
    assert!((limit[0] - 0.5).abs() < 5e-3 && (limit[1] - 0.5).abs() < 5e-3);
    let oracle: Vec<f64> = serde_json::from_value(s["oracle"].clone()).unwrap();
    assert!((oracle[0] - 0.5).abs() < 1e-12 && (oracle[1] - 0.5).abs() < 1e-12);
}

#[test]
fn trace_file_layout() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run_in(&config("diagonal.cfg"), tmp.path())), 0);
    let bytes = fs::read(tmp.path().join("trace.csv")).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,epsilon,inner_iters,inner_residual,z_1,z_2,res_1,res_2,mean_residual,vi_value,bound6_slack,gbh_slack"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 200);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 12);
        assert_eq!(r[0], (i + 1).to_string());
        assert!(r[1..].iter().all(|c| c.parse::<f64>().is_ok_and(f64::is_finite)));
    }
    assert_eq!(rows[0][1], "0.5");
}

#[test]
fn verify_passes_and_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("diagonal.cfg");
    assert_eq!(code(&run_in(&cfg, tmp.path())), 0);
    assert_eq!(code(&verify_in(&cfg, tmp.path())), 0);

    let path = tmp.path().join("trace.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let mut cells: Vec<String> = line.split(',').map(String::from).collect();
            for c in &mut cells[4..6] {
                *c = (c.parse::<f64>().unwrap() + 0.1).to_string();
            }
            out.push_str(&cells.join(","));
        }
        out.push('\n');
    }
    fs::write(&path, out).unwrap();
    assert_eq!(code(&verify_in(&cfg, tmp.path())), 1);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    let bound = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "quadratic_bound").unwrap();
    assert_eq!(bound["passed"], false);
}

#[test]
fn verify_rejects_missing_or_empty_traces() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("diagonal.cfg");
    assert_eq!(code(&verify_in(&cfg, tmp.path())), 2);
    fs::write(tmp.path().join("trace.csv"), "").unwrap();
    assert_eq!(code(&verify_in(&cfg, tmp.path())), 2);
    fs::write(
        tmp.path().join("trace.csv"),
        "n,epsilon,inner_iters,inner_residual,z_1,z_2,res_1,res_2,mean_residual,vi_value,bound6_slack,gbh_slack\n",
    )
    .unwrap();
    assert_eq!(code(&verify_in(&cfg, tmp.path())), 2);
}

#[test]
fn exit_codes_for_invalid_configs() {
    let tmp = TempDir::new().unwrap();
    let p1 = write_variant(tmp.path(), "diagonal.cfg", "p = 2.0", "p = 1.0");
    let o = run_in(&p1, &tmp.path().join("p1"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exponent"));

    let o = run_in(&config("noncommuting.cfg"), &tmp.path().join("nc"));
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("witness point"));

    let o = run_in(&tmp.path().join("absent.cfg"), &tmp.path().join("absent"));
    assert_eq!(code(&o), 2);
    assert_eq!(code(&semifix(&["run"])), 2);
}

#[test]
fn inner_failure_keeps_a_partial_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_variant(tmp.path(), "diagonal.cfg", "inner_tol = 1e-10", "inner_tol = 1e-10\ninner_max = 3");
    let out = tmp.path().join("run");
    let o = run_in(&cfg, &out);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(out.join("trace.csv")).unwrap().lines().count() - 1;
    assert!((1..200).contains(&rows), "{rows} rows");
    let s = summary(&out);
    assert_eq!(s["complete"], false);
    assert_eq!(s["verdict"], false);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let tmp = TempDir::new().unwrap();
    for name in ["diagonal.cfg", "anchor_diagonal.cfg"] {
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        assert_eq!(code(&run_in(&config(name), &a)), 0);
        assert_eq!(code(&run_in(&config(name), &b)), 0);
        assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
    }
}

#[test]
fn sweep_gamma_and_outer_steps() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("diagonal.cfg");
    let args = |param: &str, values: &str| -> Output {
        semifix(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
            "--quiet",
            "--param",
            param,
            "--values",
            values,
        ])
    };
    let read_rows = || -> Vec<Vec<String>> {
        fs::read_to_string(tmp.path().join("sweep.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect()
    };

    assert_eq!(code(&args("gamma", "0.5,1.0")), 0);
    let rows = read_rows();
    assert_eq!(rows.len(), 2);
    let dist: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    // Both runs head for (0.5, 0.5); the slower schedule is further behind.
    assert!(dist[1] < dist[0] && dist[0] < 0.1);

    assert_eq!(code(&args("outer_steps", "50,200")), 0);
    let dist: Vec<f64> = read_rows().iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(dist[1] <= dist[0]);

    assert_eq!(code(&args("gamma", "")), 2);
    assert_eq!(code(&args("alpha", "0.5")), 2);
}

#[test]
fn certify_reports_json() {
    let o = semifix(&["certify", "--config", config("diagonal.cfg").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(code(&semifix(&["certify", "--config", config("noncommuting.cfg").to_str().unwrap()])), 3);
}

#[test]
fn bundled_configs_round_trip() {
    let tmp = TempDir::new().unwrap();
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        if name == "noncommuting" {
            continue;
        }
        let out = tmp.path().join(&name);
        let start = std::time::Instant::now();
        let o = run_in(&path, &out);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(summary(&out)["verdict"], true, "{name}");
        assert_eq!(code(&verify_in(&path, &out)), 0, "{name}");
        assert!(start.elapsed().as_secs() < 60, "{name}");
    }
}
