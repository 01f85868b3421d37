use std::process::{Command, Output};

fn sort3lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sort3lab"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn run_sorts() {
    let o = sort3lab(&["run", "listing1.s", "--in", "3,1,2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("1 2 3"));
    let o = sort3lab(&["run", "listing2.s", "--in", "0,0,0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("0 0 0"));
    assert!(stderr(&o).contains("unsigned"));
}

#[test]
fn run_fuel() {
    // The sorted fast path retires 10 instructions.
    let o = sort3lab(&["run", "listing1.s", "--in", "1,2,3", "--fuel", "5"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("fuel exhausted"));
    let o = sort3lab(&["--json", "run", "listing1.s", "--in", "1,2,3", "--fuel", "10"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["output"], serde_json::json!([1, 2, 3]));
    assert_eq!(v["executed"], 10);
    assert_eq!(v["halt"], "fell-off-end");
}

#[test]
fn run_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.s");
    std::fs::write(&bad, "# target sort3\n frob %[a], %[b]\n").unwrap();
    assert_eq!(code(&sort3lab(&["run", bad.to_str().unwrap(), "--in", "1,2,3"])), 2);
    assert_eq!(code(&sort3lab(&["run", "missing.s", "--in", "1,2,3"])), 2);
    assert_eq!(code(&sort3lab(&["run", "listing1", "--in", "1,2"])), 2);
    let fault = dir.path().join("fault.s");
    std::fs::write(&fault, "# target sort3\n mov 12(%[p]), %[a]\n").unwrap();
    let o = sort3lab(&["run", fault.to_str().unwrap(), "--in", "1,2,3"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("memory fault"));
}

#[test]
fn verify_verdicts() {
    let o = sort3lab(&["verify", "listing2.s", "--domain", "grid:0:3", "--ordering", "unsigned"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = sort3lab(&["verify", "listing2.s", "--domain", "extremes", "--ordering", "signed"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("counterexample"));
    let o = sort3lab(&["verify", "network", "--domain", "patterns"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("13/13"));
    let o = sort3lab(&["--json", "verify", "loop"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["summary"]["cases"], 13 + 125 + 343);
    assert_eq!(code(&sort3lab(&["verify", "network", "--domain", "grid:3"])), 2);
    assert_eq!(code(&sort3lab(&["verify"])), 2);
}

#[test]
fn verify_external_program() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.s");
    std::fs::write(&path, isa_text()).unwrap();
    let o = sort3lab(&["verify", "--program", path.to_str().unwrap(), "--domain", "patterns"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("copy: pass"));
}

fn isa_text() -> &'static str {
    sort3lab::isa::assets::LISTING1
}

#[test]
fn bench_runs() {
    let o = sort3lab(&["bench", "--kernels", "network", "--n", "1", "--reps", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = sort3lab(&["bench", "--kernels", "network,loop,table", "--n", "2048", "--reps", "3", "--seed", "0"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("Platform"));
    assert!(header.contains("Scanning"));
    assert!(header.contains("Ratio"));
    let o = sort3lab(&["--json", "bench", "--kernels", "network,loop", "--n", "512", "--reps", "3"]);
    let v = json(&o);
    assert_eq!(v["baseline"], "network");
    assert_eq!(v["ratios"][0]["kernel"], "loop");
    let o = sort3lab(&["bench", "--kernels", "network", "--n", "64", "--reps", "3", "--format", "csv"]);
    assert!(stdout(&o).starts_with("platform,kernel,scanning_ns,total_ns,adjusted_ratio_vs_network"));
}

#[test]
fn bench_errors() {
    assert_eq!(code(&sort3lab(&["bench", "--kernels", "nope"])), 2);
    assert_eq!(code(&sort3lab(&["bench", "--kernels", "network", "--reps", "1", "--n", "8"])), 3);
    assert_eq!(code(&sort3lab(&["bench", "--kernels", "network", "--n", "0"])), 3);
    assert_eq!(code(&sort3lab(&["bench", "--kernels", "sort2", "--n", "8", "--reps", "3"])), 3);
    assert_eq!(
        code(&sort3lab(&["bench", "--kernels", "network", "--n", "8", "--reps", "3", "--baseline", "x"])),
        2
    );
}

#[test]
fn bench_published_ratios() {
    let o = sort3lab(&["bench", "--check-paper-ratios"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("1.06"));
    assert!(text.contains("1.24"));
    assert!(!text.contains("MISMATCH"));
    let v = json(&sort3lab(&["--json", "bench", "--check-paper-ratios"]));
    assert_eq!(v["passed"], true);
    assert_eq!(v["checks"][0]["recomputed"], 1.06);
    assert_eq!(v["checks"][1]["recomputed"], 1.24);
}

#[test]
fn search_commands() {
    let o = sort3lab(&["search", "--target", "sort3", "--max-len", "2", "--quiet"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("no programs; space exhausted"));
    let o = sort3lab(&["search", "--target", "sort2", "--max-len", "8", "--branchless"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("minimal length 8"));
    assert!(text.contains("cmovgl"));
    assert!(stderr(&o).contains("cand/s"));
    let o = sort3lab(&["--json", "search", "--target", "sort3", "--max-len", "13", "--budget", "1s"]);
    let v = json(&o);
    assert_eq!(v["exhausted"], false);
    assert_eq!(code(&sort3lab(&["search", "--max-len", "0"])), 2);
    assert_eq!(code(&sort3lab(&["search", "--vocab", "nope"])), 2);
    assert_eq!(code(&sort3lab(&["search", "--budget", "0s"])), 2);
}

#[test]
fn search_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cursor = dir.path().join("cursor.json");
    let c = cursor.to_str().unwrap();
    let o = sort3lab(&["search", "--max-len", "5", "--cursor-out", c, "--quiet"]);
    assert_eq!(code(&o), 0);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cursor).unwrap()).unwrap();
    assert_eq!(saved["next_length"], 6);
    let o = sort3lab(&["--json", "search", "--resume", c, "--max-len", "8", "--quiet"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["minimal_length"], 8);
    assert_eq!(v["found"].as_array().unwrap().len(), 416);
    std::fs::write(&cursor, "{}").unwrap();
    assert_eq!(code(&sort3lab(&["search", "--resume", c])), 2);
}

#[test]
fn refute_default_and_negative_control() {
    let o = sort3lab(&["refute"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let row = |name: &str| {
        text.lines()
            .find(|l| l.starts_with(name))
            .unwrap()
            .split_whitespace()
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    assert_eq!(row("listing1"), ["listing1", "14", "branches", "signed", "pass"]);
    assert_eq!(row("listing2"), ["listing2", "15", "branchless", "unsigned", "pass"]);
    assert!(text.contains("claim_refuted=true"));

    let v = json(&sort3lab(&["--json", "refute"]));
    assert_eq!(v["claim_refuted"], true);
    assert_eq!(v["listings"][1]["instruction_count"], 15);

    let dir = tempfile::tempdir().unwrap();
    let corrupt = dir.path().join("listing1.s");
    let text = sort3lab::isa::assets::LISTING1.replace("cmovg %[c], %[b]", "mov %[c], %[b]");
    std::fs::write(&corrupt, text).unwrap();
    let o = sort3lab(&["refute", "--listing1", corrupt.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("claim_refuted=false"));
    std::fs::write(&corrupt, "garbage garbage\n").unwrap();
    assert_eq!(code(&sort3lab(&["refute", "--listing1", corrupt.to_str().unwrap()])), 1);
}

#[test]
fn help_and_usage() {
    let o = sort3lab(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("refute"));
    assert_eq!(code(&sort3lab(&[])), 2);
    assert_eq!(code(&sort3lab(&["frobnicate"])), 2);
}

#[test]
fn in_process_run() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let status = sort3lab::cli::run(["sort3lab", "run", "listing1", "--in", "-5,7,-5"], &mut out, &mut err);
    assert_eq!(status.code(), 0);
    assert!(String::from_utf8(out).unwrap().starts_with("-5 -5 7\n"));
}
