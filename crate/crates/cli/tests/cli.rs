use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pcnroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcnroute")).args(args).env_remove("PCNROUTE_OUT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Triangle with symmetric unit-rate demand and a config naming both files.
fn triangle(dir: &Path, extra: &str) -> String {
    fs::write(dir.join("topology.csv"), "u,v,capacity\nA,B,3\nB,C,3\nA,C,3\n").unwrap();
    fs::write(dir.join("demand.csv"), "src,dst,rate\nA,B,0.3\nB,A,0.3\nB,C,0.3\nC,B,0.3\nA,C,0.3\nC,A,0.3\n").unwrap();
    let cfg = dir.join("run.cfg");
    fs::write(
        &cfg,
        format!("graph.file = topology.csv\nworkload.demand = demand.csv\npolicy.kind = exact\npolicy.m = 4\nsim.horizon = 500\n{extra}"),
    )
    .unwrap();
    cfg.display().to_string()
}

#[test]
fn simulate_writes_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "");
    let out = dir.path().join("out");
    let o = pcnroute(&["simulate", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("policy=exact"), "{}", stdout(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.contains("success_ratio"));
    assert!(out.join("series.csv").exists());
    assert!(out.join("final_state.csv").exists());
}

#[test]
fn seed_flag_controls_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = pcnroute(&["simulate", "-c", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("series.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}

#[test]
fn unknown_policy_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "");
    let o = pcnroute(&["simulate", "-c", &cfg, "--set", "policy.kind=greedy"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["exact", "heuristic", "waterfilling", "fluid"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unknown_key_names_the_key_and_line() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "sim.horizn = 10\n");
    let o = pcnroute(&["simulate", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("sim.horizn"), "{err}");
    assert!(err.contains(":6"), "{err}");
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "");
    fs::remove_file(dir.path().join("demand.csv")).unwrap();
    let o = pcnroute(&["simulate", "-c", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn infeasible_demand_yields_a_certificate() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("topology.csv"), "A,B,1\n").unwrap();
    fs::write(dir.path().join("demand.csv"), "A,B,1.5\nB,A,1.5\n").unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "graph.file = topology.csv\nworkload.demand = demand.csv\n").unwrap();
    let out = dir.path().join("out");
    let o = pcnroute(&["check-capacity", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("infeasible certificate="), "{}", stdout(&o));
    let cert = fs::read_to_string(out.join("certificate.csv")).unwrap();
    assert!(cert.contains("objective"));
}

#[test]
fn feasible_demand_yields_an_allocation() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "");
    let out = dir.path().join("out");
    let o = pcnroute(&["check-capacity", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("feasible allocation="), "{}", stdout(&o));
    assert!(out.join("allocation.csv").exists());
}

#[test]
fn fluid_solve_writes_paths_and_duals() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "");
    let out = dir.path().join("out");
    let o = pcnroute(&["fluid-solve", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("fluid_paths.csv")).unwrap().lines().count() > 1);
    assert!(out.join("fluid_duals.csv").exists());
}

#[test]
fn generated_workload_runs_as_is() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("gen.cfg");
    fs::write(
        &cfg,
        "graph.random.nodes = 6\ngraph.random.channels = 8\nworkload.total_rate = 3\nworkload.load = 0.8\npolicy.kind = heuristic\npolicy.m = 11\nsim.horizon = 300\n",
    )
    .unwrap();
    let gen = dir.path().join("gen");
    let o = pcnroute(&["gen-workload", "-c", cfg.to_str().unwrap(), "--out", gen.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let generated = gen.join("workload.cfg");
    let text = fs::read_to_string(&generated).unwrap();
    assert!(text.contains("policy.kind = heuristic"), "{text}");
    let o = pcnroute(&["simulate", "-c", generated.to_str().unwrap(), "--out", dir.path().join("sim").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("policy=heuristic"));
}

#[test]
fn sweep_is_independent_of_job_count() {
    let dir = TempDir::new().unwrap();
    let cfg = triangle(dir.path(), "sweep.sim.seed = 1,2,3\nsweep.policy.delta = 0.1,0.4\n");
    let run = |jobs: &str, name: &str| {
        let out = dir.path().join(name);
        let o = pcnroute(&["sweep", "-c", &cfg, "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("sweep.csv")).unwrap()
    };
    let one = run("1", "one");
    assert_eq!(one, run("4", "four"));
    assert!(one.starts_with("policy.delta,sim.seed,metric,value"), "{}", one.lines().next().unwrap());
}
