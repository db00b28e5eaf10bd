use std::fs;
use std::path::Path;
use std::process::Command;

use logdiff::experiment::{self, ExperimentConfig, RunOptions};

const SMALL: &str = r#"
[grid]
n_interior = 31

[noise]
k_max = 4
n_paths = 30

[solver]
dt = 0.01
t_final = 0.2
epsilons = [0.1, 0.03, 0.01]

[verify]
epsilons = [0.1, 0.01, 0.001]
"#;

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        ..RunOptions::default()
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logdiff"))
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    experiment::cmd_simulate(&cfg, &opts(a.path())).unwrap();
    experiment::cmd_simulate(&cfg, &opts(b.path())).unwrap();
    let sa = fs::read(a.path().join("summary.csv")).unwrap();
    let sb = fs::read(b.path().join("summary.csv")).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(String::from_utf8(sa).unwrap().lines().count(), 31);
}

#[test]
fn simulate_with_no_paths_writes_header_only() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut o = opts(dir.path());
    o.paths = Some(0);
    let out = experiment::cmd_simulate(&cfg, &o).unwrap();
    assert_eq!(out.exit_code(), 0);
    let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        text,
        "path,seed,final_l2,final_hminus1,newton_iters_total,newton_iters_max,max_residual\n"
    );
}

#[test]
fn zero_problem_has_zero_norms_and_passes_verify() {
    let text = format!("{SMALL}\n[initial]\nprofile = \"zero\"\n").replace("n_paths = 30", "n_paths = 30\ngamma0 = 0.0");
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    experiment::cmd_simulate(&cfg, &opts(dir.path())).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[2], "0");
        assert_eq!(&rec[3], "0");
    }
    let out = experiment::cmd_verify(&cfg, &opts(dir.path())).unwrap();
    assert!(out.passed, "{}", out.summary);
    let sup = fs::read_to_string(dir.path().join("sup_norm.csv")).ok();
    assert!(sup.is_none());
    let nc = experiment::cmd_noise_check(&cfg, &opts(dir.path())).unwrap();
    assert!(nc.passed);
    let sup = fs::read_to_string(dir.path().join("sup_norm.csv")).unwrap();
    assert!(sup.lines().skip(1).all(|l| l.ends_with(",0")), "{sup}");
}

#[test]
fn verify_default_checks_pass_and_write_reports() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = experiment::cmd_verify(&cfg, &opts(dir.path())).unwrap();
    assert!(out.passed, "{}", out.summary);
    for check in experiment::Check::ALL {
        let path = dir.path().join(format!("report_{}.csv", check.name()));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("check_name,t,lhs,rhs,margin,pass\n"), "{}", path.display());
    }
}

#[test]
fn ito_check_is_live() {
    // Scaling γ by 100 widens the relative margin (the bound grows like γ²
    // while diffusion damps the paths), so liveness is shown by checking
    // loud-noise paths against the quiet-noise bound instead.
    use logdiff::{grid, noise, solver, verifier};
    use std::sync::Arc;
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let g = cfg.grid_spec().unwrap();
    let eig = grid::eigensystem(&g, cfg.noise.k_max).unwrap();
    let scfg = cfg.solver_config(cfg.solver.epsilon).unwrap();
    let x0 = g.zeros();
    let quiet = cfg.noise_spec(0).unwrap();
    let ensemble: Vec<_> = (0..30)
        .map(|i| {
            let mut spec = cfg.noise_spec(i).unwrap();
            spec.gamma_rule = spec.gamma_rule.scaled(100.0);
            let w = Arc::new(noise::synthesize(&spec, &g, &eig).unwrap());
            solver::solve_path(&x0, &w, &scfg).unwrap()
        })
        .collect();
    let mut loud = quiet.clone();
    loud.gamma_rule = quiet.gamma_rule.scaled(100.0);
    assert!(verifier::ito_l2_bound(&ensemble, &loud, &eig).unwrap().passed());
    assert!(!verifier::ito_l2_bound(&ensemble, &quiet, &eig).unwrap().passed());
}

#[test]
fn sweep_writes_matrix_and_curve() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = experiment::cmd_sweep_eps(&cfg, &opts(dir.path())).unwrap();
    assert!(out.passed, "{}", out.summary);
    let m = fs::read_to_string(dir.path().join("sweep_matrix.csv")).unwrap();
    assert!(m.starts_with("eps_i,eps_j,sup_hminus1_distance\n"));
    assert_eq!(m.lines().count(), 1 + 9);
    let c = fs::read_to_string(dir.path().join("sweep_curve.csv")).unwrap();
    assert_eq!(c.lines().count(), 1 + 2);
}

#[test]
fn sweep_rejects_non_decreasing_list() {
    let cfg = ExperimentConfig::from_toml_str(&SMALL.replace("[0.1, 0.03, 0.01]", "[0.1, 0.1]")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = experiment::cmd_sweep_eps(&cfg, &opts(dir.path())).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn csv_initial_datum_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::from("node,value\n");
    for j in 1..=31 {
        data.push_str(&format!("{j},{}\n", 0.1 * j as f64));
    }
    fs::write(dir.path().join("x0.csv"), data).unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, format!("{SMALL}\n[initial]\nprofile = \"csv\"\nfile = \"x0.csv\"\n")).unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let x0 = cfg.initial_datum().unwrap();
    assert_eq!(x0.values()[9], 1.0);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("sim"))
        .args(["--paths", "2", "--dump-trajectories"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let traj = fs::read_to_string(dir.path().join("sim/trajectory_42.csv")).unwrap();
    assert!(traj.starts_with("step,time,node,Y,X\n"));
    let diag = fs::read_to_string(dir.path().join("sim/diagnostics_42.csv")).unwrap();
    assert!(diag.starts_with("step,newton_iters,residual\n"));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "[solver]\nnewton_tolerance = 1e-8\n").unwrap();
    let status = bin().args(["verify", "--config"]).arg(&typo).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let rough = dir.path().join("rough.toml");
    fs::write(&rough, SMALL.replace("k_max = 4", "k_max = 4\nexponent = 4.0")).unwrap();
    let status = bin()
        .args(["noise-check", "--config"])
        .arg(&rough)
        .arg("--out")
        .arg(dir.path().join("nc"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    let out = bin().arg("--version").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("config schema 1"), "{text}");
}
