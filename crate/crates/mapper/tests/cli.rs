//! End-to-end tests of the command-line surface: exit codes, file formats,
//! and the external-solver pipe mode.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cgra-mapper"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn write_temp(dir: &tempfile::TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn map_running_example_exits_zero_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let output = bin()
        .args(["map", "--dfg"])
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = stdout_of(&output);
    assert!(stdout.contains("II   3: mapped"));
    assert!(stdout.contains("kernel at II=3 on 2x2 mesh"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["version"], 1);
    assert_eq!(report["status"], "mapped");
    assert_eq!(report["ii"], 3);
    assert_eq!(
        report["mapping"]["placements"].as_array().unwrap().len(),
        11
    );

    // The emitted report round-trips through `validate`.
    let output = bin()
        .args(["validate", "--report"])
        .arg(&report_path)
        .arg("--dfg")
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout_of(&output).contains("ok: mapping at II 3"));
}

#[test]
fn validate_rejects_a_tampered_report() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let status = bin()
        .args(["map", "--dfg"])
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .arg("--out")
        .arg(&report_path)
        .status()
        .unwrap();
    assert!(status.success());

    // Move one node onto an occupied cell.
    let mut report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let placements = report["mapping"]["placements"].as_array_mut().unwrap();
    let stolen = placements[0].clone();
    placements[1]["pe"] = stolen["pe"].clone();
    placements[1]["slot"] = stolen["slot"].clone();
    fs::write(&report_path, report.to_string()).unwrap();

    let output = bin()
        .args(["validate", "--report"])
        .arg(&report_path)
        .arg("--dfg")
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = stdout_of(&output);
    assert!(
        stdout.contains("E_"),
        "machine-readable codes expected: {stdout}"
    );
}

#[test]
fn usage_errors_exit_64() {
    let output = bin().args(["map", "--dfg", "x.json"]).output().unwrap();
    assert_eq!(output.status.code(), Some(64));
    let output = bin().args(["totally-unknown"]).output().unwrap();
    assert_eq!(output.status.code(), Some(64));
}

#[test]
fn help_exits_zero() {
    let output = bin().args(["--help"]).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn data_errors_exit_65_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cyclic = write_temp(
        &dir,
        "cyclic.json",
        r#"{"nodes":[{"id":1,"opcode":"a"},{"id":2,"opcode":"b"}],
            "edges":[{"src":1,"dst":2},{"src":2,"dst":1}]}"#,
    );
    let output = bin()
        .args(["map", "--dfg"])
        .arg(&cyclic)
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(65));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("zero-distance cycle"),
        "diagnostic names the cycle: {stderr}"
    );
    assert!(stderr.contains("1 -> 2 -> 1") || stderr.contains("2 -> 1 -> 2"));

    let output = bin()
        .args(["schedule", "--dfg"])
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(65));
}

#[test]
fn no_mapping_up_to_cap_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let pair = write_temp(
        &dir,
        "pair.json",
        r#"{"nodes":[{"id":1,"opcode":"a"},{"id":2,"opcode":"b"}],"edges":[]}"#,
    );
    let arch = write_temp(&dir, "one.json", r#"{"rows":1,"cols":1}"#);
    let output = bin()
        .args(["map", "--dfg"])
        .arg(&pair)
        .arg("--arch")
        .arg(&arch)
        .args(["--ii-max", "3"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn encode_writes_dimacs_that_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cnf_path = dir.path().join("f.cnf");
    let output = bin()
        .args(["encode", "--dfg"])
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .args(["--ii", "3", "--out"])
        .arg(&cnf_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = stdout_of(&output);
    assert!(stdout.contains("vars: 472"), "{stdout}");

    let text = fs::read_to_string(&cnf_path).unwrap();
    let parsed = cnfsat::read_dimacs(&text).unwrap();
    assert_eq!(parsed.num_vars(), 472);
    assert_eq!(
        cnfsat::read_dimacs(&cnfsat::write_dimacs(&parsed)).unwrap(),
        parsed
    );
    assert!(text.contains("c var 1 = node 1 pe 0 slot 0 iter 0"));
    assert!(text.contains("c sel "));
}

#[test]
fn encode_trivially_unsat_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let pair = write_temp(
        &dir,
        "pair.json",
        r#"{"nodes":[{"id":1,"opcode":"a"},{"id":2,"opcode":"b"}],"edges":[]}"#,
    );
    let arch = write_temp(&dir, "one.json", r#"{"rows":1,"cols":1}"#);
    let output = bin()
        .args(["encode", "--dfg"])
        .arg(&pair)
        .arg("--arch")
        .arg(&arch)
        .args(["--ii", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no candidate placements"), "{stderr}");
}

#[test]
fn schedule_with_large_ii_prints_identity_fold() {
    let output = bin()
        .args(["schedule", "--dfg"])
        .arg(data("running_example.dfg.json"))
        .args(["--ii", "5"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = stdout_of(&output);
    assert!(stdout.contains("KMS (II=5, iterations=1)"));
    // Identity fold: every label is iteration 0.
    let kms_lines: Vec<&str> = stdout
        .lines()
        .skip_while(|l| !l.starts_with("KMS"))
        .collect();
    assert!(!kms_lines.iter().any(|l| l.contains("^1")), "{stdout}");
}

#[test]
fn solver_env_var_supplies_the_default() {
    // A command that is not a solver at all: the run must fail loudly
    // instead of silently falling back to the internal engine.
    let output = bin()
        .args(["map", "--dfg"])
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .env("CGRA_MAPPER_SOLVER", "cmd:definitely-not-a-solver-binary")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(70));
    // An explicit --solver internal overrides the environment.
    let output = bin()
        .args(["map", "--dfg"])
        .arg(data("running_example.dfg.json"))
        .arg("--arch")
        .arg(data("arch_2x2.json"))
        .args(["--solver", "internal"])
        .env("CGRA_MAPPER_SOLVER", "cmd:definitely-not-a-solver-binary")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
}

/// Pipe mode against a scripted DIMACS solver; verdicts must agree with the
/// embedded engine. Skipped when no shell utilities are available.
#[test]
fn external_solver_pipe_mode_agrees() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("skipping: python3 not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    // A minimal complete DPLL solver reading DIMACS, printing competition
    // output. Good enough for the small formulas below.
    let script = write_temp(
        &dir,
        "dpll.py",
        r#"
import sys

def parse(path):
    clauses = []
    nv = 0
    cur = []
    for line in open(path):
        line = line.strip()
        if not line or line.startswith('c'):
            continue
        if line.startswith('p'):
            nv = int(line.split()[2]); continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(cur); cur = []
            else:
                cur.append(lit)
    return nv, clauses

def dpll(clauses, assign):
    while True:
        unit = None
        for c in clauses:
            unassigned = [l for l in c if -l not in assign and l not in assign]
            if any(l in assign for l in c):
                continue
            if not unassigned:
                return None
            if len(unassigned) == 1:
                unit = unassigned[0]
                break
        if unit is None:
            break
        assign = assign | {unit}
    for c in clauses:
        if not any(l in assign for l in c) and all(-l in assign for l in c):
            return None
    free = set()
    for c in clauses:
        if any(l in assign for l in c):
            continue
        for l in c:
            if l not in assign and -l not in assign:
                free.add(abs(l))
    if not free:
        return assign
    v = min(free)
    for lit in (v, -v):
        result = dpll(clauses, assign | {lit})
        if result is not None:
            return result
    return None

nv, clauses = parse(sys.argv[1])
model = dpll(clauses, frozenset())
if model is None:
    print("s UNSATISFIABLE")
else:
    values = [(v if v in model else -v) for v in range(1, nv + 1)]
    print("s SATISFIABLE")
    print("v " + " ".join(map(str, values)) + " 0")
"#,
    );
    let solver_flag = format!("cmd:python3 {}", script.display());

    // Satisfiable: 3-node chain on a 2x2 mesh at II=1.
    let chain = write_temp(
        &dir,
        "chain.json",
        r#"{"nodes":[{"id":1,"opcode":"a"},{"id":2,"opcode":"b"},{"id":3,"opcode":"c"}],
            "edges":[{"src":1,"dst":2},{"src":2,"dst":3}]}"#,
    );
    let mesh = write_temp(&dir, "mesh.json", r#"{"rows":2,"cols":2}"#);
    for solver in ["internal", solver_flag.as_str()] {
        let output = bin()
            .args(["map", "--dfg"])
            .arg(&chain)
            .arg("--arch")
            .arg(&mesh)
            .args(["--ii-max", "2", "--solver", solver])
            .output()
            .unwrap();
        assert_eq!(
            output.status.code(),
            Some(0),
            "solver {solver}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(
            stdout_of(&output).contains("II   1: mapped"),
            "solver {solver}"
        );
    }

    // Unsatisfiable at every tried II: rigid diamond on one PE.
    let diamond = write_temp(
        &dir,
        "diamond.json",
        r#"{"nodes":[{"id":1,"opcode":"a"},{"id":2,"opcode":"b"},
                     {"id":3,"opcode":"c"},{"id":4,"opcode":"d"}],
            "edges":[{"src":1,"dst":2},{"src":1,"dst":3},
                     {"src":2,"dst":4},{"src":3,"dst":4}]}"#,
    );
    let one = write_temp(&dir, "one.json", r#"{"rows":1,"cols":1}"#);
    for solver in ["internal", solver_flag.as_str()] {
        let output = bin()
            .args(["map", "--dfg"])
            .arg(&diamond)
            .arg("--arch")
            .arg(&one)
            .args(["--ii-start", "4", "--ii-max", "5", "--solver", solver])
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(2), "solver {solver}");
    }
}
