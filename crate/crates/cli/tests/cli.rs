use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grapheur_core::io::{parse_edge_list, parse_grapheur, EdgeListOptions};
use serde_json::Value;
use tempfile::TempDir;

const GRAPH: &str = "# src dst weight\n1 2 0.5\n2 3 1\n3 1 0.25\n1 1 0.1\n4 2 0.3\n";
const ATOMIC: &str = r#"{"E": [[0.4, 0.1], [0.2, 0.3]]}"#;
const MIXED: &str = r#"{"E": [[0.3, 0.1], [0.0, 0.2]], "sigma": [0.1], "theta": 0.2, "vartheta": 0.1}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.tsv"), GRAPH).unwrap();
        std::fs::write(dir.path().join("atomic.json"), ATOMIC).unwrap();
        std::fs::write(dir.path().join("mixed.json"), MIXED).unwrap();
        std::fs::write(dir.path().join("theta.json"), r#"{"theta": 1.0}"#).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_grapheur"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        serde_json::from_str(&self.ok(args)).unwrap()
    }

    fn code(&self, args: &[&str]) -> i32 {
        self.run(args).status.code().unwrap()
    }
}

fn read_graph(path: &Path) -> grapheur_core::WeightedDigraph {
    parse_edge_list(std::fs::File::open(path).unwrap(), &EdgeListOptions::default()).unwrap()
}

#[test]
fn identical_invocations_are_bit_identical() {
    let fx = Fixture::new();
    let runs: [&[&str]; 5] = [
        &["quotient", "--input", "g.tsv", "--k", "3", "--seed", "9"],
        &["densities", "--grapheur", "mixed.json", "--pattern", "edge", "--pattern", "K2", "--method", "mc", "--samples", "500", "--seed", "4"],
        &["sample-edges", "--grapheur", "atomic.json", "--experiment-ns", "16,64", "--trials", "30", "--seed", "2"],
        &["dist", "--a", "atomic.json", "--b", "theta.json", "--ks", "2,4", "--samples", "60", "--coupled-trials", "10", "--grid", "16", "--seed", "1"],
        &["eqp-check", "--grapheur", "atomic.json", "--samples", "300", "--seed", "5"],
    ];
    for args in runs {
        let first = fx.ok(args);
        assert_eq!(first, fx.ok(args), "{args:?}");
        let mut threaded = args.to_vec();
        threaded.extend(["--threads", "3"]);
        assert_eq!(first, fx.ok(&threaded), "{args:?} with 3 threads");
    }
    let a = fx.ok(&["quotient", "--input", "g.tsv", "--k", "3", "--seed", "1"]);
    let b = fx.ok(&["quotient", "--input", "g.tsv", "--k", "3", "--seed", "2"]);
    assert_ne!(a, b);
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    std::fs::write(fx.path("bad.tsv"), "1 2 0.5\n1 2 abc\n").unwrap();
    let out = fx.run(&["quotient", "--input", "bad.tsv", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    assert_eq!(fx.code(&["quotient", "--k", "2"]), 2);
    assert_eq!(fx.code(&["quotient", "--input", "missing.tsv", "--k", "2"]), 2);
    assert_eq!(fx.code(&["quotient", "--input", "g.tsv", "--k", "3", "--map", "equipartition"]), 2);
    assert_eq!(fx.code(&["densities", "--pattern", "edge"]), 2);
    assert_eq!(fx.code(&["densities", "--input", "g.tsv", "--pattern", "nonsense"]), 2);
    assert_eq!(fx.code(&["hubs", "--input", "g.tsv", "--epsilon", "2"]), 2);
    assert_eq!(fx.code(&["sample-edges", "--grapheur", "mixed.json", "--experiment-ns", "16", "--trials", "5"]), 2);
    std::fs::write(fx.path("heavy.json"), r#"{"E": [[0.9]], "theta": 0.5}"#).unwrap();
    assert_eq!(fx.code(&["estimate", "--input", "g.tsv", "--tau-e", "0"]), 2);
    assert_eq!(fx.code(&["dist", "--a", "heavy.json", "--b", "theta.json"]), 2);

    // Exact enumeration beyond its cap is a budget failure.
    let args = ["densities", "--input", "g.tsv", "--pattern", "edge", "--method", "exact", "--cap", "10"];
    assert_eq!(fx.code(&args), 3);
    assert_eq!(fx.code(&["hom", "--input", "g.tsv", "--pattern", "path:3", "--cap", "5"]), 3);
    // The automatic method falls back to Monte Carlo instead.
    let v = fx.json(&["densities", "--input", "g.tsv", "--pattern", "edge", "--cap", "10", "--samples", "200"]);
    assert_eq!(v["densities"][0]["method"], "mc");
}

#[test]
fn quotient_outputs() {
    let fx = Fixture::new();
    let v = fx.json(&["quotient", "--input", "g.tsv", "--k", "2", "--map", "equipartition", "--out", "q.tsv", "--dot", "q.dot"]);
    assert_eq!(v["map"], serde_json::json!([0, 0, 1, 1]));
    let rows: Vec<Vec<f64>> = serde_json::from_value(v["quotient"].clone()).unwrap();
    let total: f64 = rows.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let q = read_graph(&fx.path("q.tsv"));
    assert_eq!(q.to_rows(), rows);
    let dot = std::fs::read_to_string(fx.path("q.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("penwidth").count(), q.nnz());
}

#[test]
fn densities_and_hom_agree() {
    let fx = Fixture::new();
    let d = fx.json(&["densities", "--input", "g.tsv", "--pattern", "edge", "--pattern", r#"{"k": 2, "counts": [[0,1],[1,0]]}"#]);
    let h = fx.json(&["hom", "--input", "g.tsv", "--pattern", "edge", "--pattern", "K2"]);
    for i in 0..2 {
        let exact = d["densities"][i]["value"].as_f64().unwrap();
        let from_inj = h["patterns"][i]["t_q"].as_f64().unwrap();
        assert!((exact - from_inj).abs() < 1e-10, "{exact} vs {from_inj}");
        assert_eq!(d["densities"][i]["method"], "exact");
    }
    // Any normalized graph has hom(edge) = 1.
    assert!((h["patterns"][0]["hom"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let pure = fx.json(&["densities", "--grapheur", "theta.json", "--pattern", "edge"]);
    assert!((pure["densities"][0]["value"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn sample_edges_writes_normalized_graph() {
    let fx = Fixture::new();
    let v = fx.json(&["sample-edges", "--input", "g.tsv", "--n", "400", "--seed", "7", "--out", "s.tsv"]);
    assert_eq!(v["edges"], 400);
    let s = read_graph(&fx.path("s.tsv"));
    assert_eq!(s.n() as u64, v["vertices"].as_u64().unwrap());
    assert!((s.total() - 1.0).abs() < 1e-12);
    for (_, _, w) in s.entries() {
        assert!(((w * 400.0).round() - w * 400.0).abs() < 1e-9);
    }

    let v = fx.json(&["sample-edges", "--grapheur", "mixed.json", "--n", "300", "--seed", "1"]);
    let counts: u64 = v["components"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, 300);
}

#[test]
fn discrepancy_experiment_csv() {
    let fx = Fixture::new();
    let text = fx.ok(&["sample-edges", "--grapheur", "atomic.json", "--experiment-ns", "16,64", "--trials", "20", "--seed", "3"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,mean,std,bound"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 16.0);
    assert_eq!(rows[0][3], 174.0 / 4.0);
    assert!(rows.iter().all(|r| r[1] <= r[3]));
    let grid = fx.ok(&["sample-edges", "--grapheur", "mixed.json", "--experiment-ns", "16", "--trials", "5", "--grid", "16"]);
    assert_eq!(grid.lines().count(), 2);
}

#[test]
fn hubs_report() {
    let fx = Fixture::new();
    let v = fx.json(&["hubs", "--input", "g.tsv", "--edges", "1000", "--seed", "3", "--epsilon", "0.1", "--full"]);
    let est = v["estimate"].as_f64().unwrap();
    assert!((v["lower_bound_Wsq"].as_f64().unwrap() - est / 8.0).abs() < 1e-15);
    let full = v["full_value"].as_f64().unwrap();
    assert!((est / full - 1.0).abs() < 0.2, "{est} vs {full}");
    let cert = &v["certificate"];
    assert_eq!(cert["edges"], 1000);
    assert_eq!(cert["seed"], 3);
    assert_eq!(cert["lipschitz"], 8.0);
    // Far fewer edges than required, so no guarantee is claimed.
    assert!(cert["required_edges"].as_u64().unwrap() > 1000);
    assert!(cert["guarantee"].is_null());
}

#[test]
fn dist_bracket() {
    let fx = Fixture::new();
    let v = fx.json(&["dist", "--a", "atomic.json", "--b", "theta.json", "--ks", "2,4,8", "--samples", "100", "--coupled-trials", "30", "--grid", "16", "--seed", "1"]);
    let (lo, hi) = (v["bracket"]["lower"].as_f64().unwrap(), v["bracket"]["upper"].as_f64().unwrap());
    assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    assert_eq!(v["bracket"]["per_k"].as_array().unwrap().len(), 3);
    assert!(v["coupled_upper"]["mean"].as_f64().unwrap() >= lo);
    assert_eq!(v["hub_free"], serde_json::json!([false, true]));
    let same = fx.json(&["dist", "--a", "theta.json", "--b", "theta.json", "--ks", "4", "--samples", "100"]);
    assert!(same["coupled_upper"].is_null());
    assert!(same["bracket"]["lower"].as_f64().unwrap() < 0.05);
}

#[test]
fn converge_csv() {
    let fx = Fixture::new();
    let text = fx.ok(&["converge", "--grapheur", "theta.json", "--pattern", "edge", "--pattern", "path:2", "--ns", "10,20,40"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,param,estimate,se"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    let edge: Vec<f64> = rows.iter().filter(|r| r[1] == "edge").map(|r| r[2].parse().unwrap()).collect();
    // The complete graph converges to 1/4 for the edge pattern.
    let gaps: Vec<f64> = edge.iter().map(|x| (x - 0.25).abs()).collect();
    assert!(gaps[2] < gaps[1] && gaps[1] < gaps[0], "{gaps:?}");
    // Up to 10^8 maps are enumerated exactly; 3^20 and 2^40 are not.
    let se = |r: &Vec<String>| r[3].parse::<f64>().unwrap();
    assert!(rows[..3].iter().all(|r| se(r) == 0.0));
    assert!(rows[3..].iter().all(|r| se(r) > 0.0));
}

#[test]
fn eqp_check_separates_models() {
    let fx = Fixture::new();
    let good = fx.json(&["eqp-check", "--grapheur", "atomic.json", "--k", "2", "--n", "2", "--samples", "3000", "--seed", "5"]);
    assert_eq!(good["consistent"], true);
    let bad = fx.json(&["eqp-check", "--model", "independent-rows", "--k", "2", "--n", "3", "--samples", "3000", "--seed", "5"]);
    assert_eq!(bad["consistent"], false);
    assert!(bad["max_z"].as_f64().unwrap() > 10.0);
}

#[test]
fn estimate_round_trips_through_json() {
    let fx = Fixture::new();
    let text = fx.ok(&["estimate", "--input", "g.tsv", "--tau-e", "0.2", "--tau-d", "0.2"]);
    let m = parse_grapheur(&text).unwrap();
    assert!((m.total_mass() - 1.0).abs() < 1e-9);
    fx.ok(&["estimate", "--input", "g.tsv", "--tau-e", "0.2", "--tau-d", "0.2", "--out", "m.json"]);
    let from_file = parse_grapheur(&std::fs::read_to_string(fx.path("m.json")).unwrap()).unwrap();
    assert_eq!(from_file, m);
    // The estimate is itself a valid input for the other commands.
    fx.json(&["densities", "--grapheur", "m.json", "--pattern", "edge"]);
}
