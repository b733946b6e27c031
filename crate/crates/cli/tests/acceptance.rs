//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use csgnn_core::robustness::{evaluate_robustness, PROTOCOL_SEEDS};
use csgnn_core::verify::{self, SuiteResult, VerifyConfig};
use csgnn_core::{gen_sbm, AttackKind, AttackSpec, GcnConfig, ModelConfig, SbmConfig};

const CONTRACTION_BUDGET: Duration = Duration::from_secs(10);
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const ROBUSTNESS_BUDGET: Duration = Duration::from_secs(300);
const CLEAN_ACCURACY_FLOOR: f64 = 0.9;
const ATTACK_EDGE_RATIO: f64 = 1.0;

/// Library tolerances pinned to their required values.
fn pinned_tolerances() -> Result<(), String> {
    let pins = [
        ("contraction slack", verify::CONTRACTION_SLACK, 1e-9),
        ("equivariance tolerance", verify::EQUIVARIANCE_TOL, 1e-10),
        ("T consistency tolerance", verify::T_CONSISTENCY_TOL, 1e-10),
        ("T norm slack", verify::T_NORM_SLACK, 1e-12),
        ("probe slack", verify::PROBE_SLACK, 1e-6),
        ("feature slack", verify::FEATURE_SLACK, 1e-9),
        ("gradient tolerance", verify::GRADIENT_TOL, 1e-5),
    ];
    let counts = [
        ("contraction trials", verify::CONTRACTION_TRIALS, 1000),
        ("equivariance trials", verify::EQUIVARIANCE_TRIALS, 1000),
        ("T trials", verify::T_MATRIX_TRIALS, 200),
        ("probe points", verify::PROBE_POINTS, 100),
        ("feature trials", verify::FEATURE_TRIALS, 1000),
        ("gradient trials", verify::GRADIENT_TRIALS, 50),
        ("expansivity trials", verify::EXPANSIVITY_TRIALS, 200),
    ];
    for (name, got, want) in pins {
        if got != want {
            return Err(format!("{name} is {got:e}, expected {want:e}"));
        }
    }
    for (name, got, want) in counts {
        if got != want {
            return Err(format!("{name} is {got}, expected {want}"));
        }
    }
    Ok(())
}

type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn suites(results: &[SuiteResult]) -> Outcome {
    Outcome {
        passed: results.iter().all(|r| r.passed),
        detail: results
            .iter()
            .map(|r| {
                format!(
                    "{}: {} trials, {} violations, worst {:.3e}",
                    r.id, r.trials, r.violations, r.worst
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn timed(budget: Duration, run: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = run();
    let elapsed = start.elapsed();
    out.passed &= elapsed < budget;
    out.detail = format!("{}; {:.2}s of {}s", out.detail, elapsed.as_secs_f64(), budget.as_secs());
    out
}

fn run_suite(suite: fn(&VerifyConfig) -> csgnn_core::Result<SuiteResult>) -> SuiteResult {
    suite(&VerifyConfig::default()).expect("suite runs")
}

fn criterion_robustness() -> Outcome {
    let g = gen_sbm(&SbmConfig::default(), 0).expect("benchmark graph");
    let csgnn = ModelConfig::Csgnn(Box::default());
    let gcn = ModelConfig::Gcn(GcnConfig::default());
    let clean = AttackSpec::new(AttackKind::RandomEdges, 0.0, 0.0, 0).expect("spec");
    let attacked = AttackSpec::new(AttackKind::RandomEdges, ATTACK_EDGE_RATIO, 0.0, 0).expect("spec");
    let clean_rows =
        evaluate_robustness(&g, &[clean], std::slice::from_ref(&csgnn), &PROTOCOL_SEEDS).expect("clean runs");
    let rows = evaluate_robustness(&g, &[attacked], &[csgnn, gcn], &PROTOCOL_SEEDS).expect("attacked runs");
    let clean_acc = clean_rows[0].mean_acc;
    let clean_min = clean_rows[0].accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let (c, b) = (&rows[0], &rows[1]);
    let threshold = b.mean_acc - b.std_acc;
    Outcome {
        passed: clean_acc >= CLEAN_ACCURACY_FLOOR && c.mean_acc >= threshold,
        detail: format!(
            "clean csgnn mean {:.4} (min {:.4}, floor {}); edge_ratio {}: csgnn {:.4}±{:.4} vs gcn {:.4}±{:.4}, need ≥ {:.4}",
            clean_acc, clean_min, CLEAN_ACCURACY_FLOOR, ATTACK_EDGE_RATIO, c.mean_acc, c.std_acc, b.mean_acc, b.std_acc, threshold
        ),
    }
}

/// Runs the binary and returns its stdout plus every output file.
fn run_cli(out: &Path, args: &[&str]) -> (Vec<u8>, Vec<(String, Vec<u8>)>) {
    let output = Command::new(env!("CARGO_BIN_EXE_csgnn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).expect("read"),
            )
        })
        .collect();
    files.sort();
    (output.stdout, files)
}

fn criterion_determinism() -> Outcome {
    let commands: [(&str, &[&str]); 3] = [
        ("verify", &["verify", "--seed", "7"]),
        ("train", &["train", "--seed", "3", "--set", "epochs=40"]),
        (
            "attack-sweep",
            &[
                "attack-sweep",
                "--seed",
                "1",
                "--set",
                "edge_ratios=0.5",
                "--set",
                "seed_count=2",
                "--set",
                "epochs=30",
                "--set",
                "gcn_epochs=30",
            ],
        ),
    ];
    let mut passed = true;
    let mut notes = Vec::new();
    for (name, args) in commands {
        let dir = tempfile::tempdir().expect("tempdir");
        let first = run_cli(&dir.path().join("a"), args);
        let second = run_cli(&dir.path().join("b"), args);
        let same = first == second && !first.1.is_empty();
        passed &= same;
        notes.push(format!(
            "{name}: {} files {}",
            first.1.len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    Outcome {
        passed,
        detail: notes.join("; "),
    }
}

fn main() {
    if let Err(e) = pinned_tolerances() {
        println!("tolerance pin FAIL: {e}");
        std::process::exit(1);
    }
    let criteria: Vec<Criterion> = vec![
        (
            "adjacency l1 contraction",
            Box::new(|| {
                timed(CONTRACTION_BUDGET, || {
                    suites(&[run_suite(verify::adjacency_l1_contraction)])
                })
            }),
        ),
        (
            "equivariance and symmetry",
            Box::new(|| {
                suites(&[
                    run_suite(verify::adjacency_equivariance),
                    run_suite(verify::adjacency_symmetry),
                ])
            }),
        ),
        (
            "T-matrix consistency and norm bound",
            Box::new(|| {
                suites(&[
                    run_suite(verify::t_matrix_consistency),
                    run_suite(verify::t_matrix_norm_bound),
                ])
            }),
        ),
        (
            "Jacobian l1 probe",
            Box::new(|| suites(&[run_suite(verify::adjacency_jacobian_probe)])),
        ),
        (
            "feature contraction and energy descent",
            Box::new(|| {
                suites(&[
                    run_suite(verify::feature_contraction),
                    run_suite(verify::feature_energy_descent),
                ])
            }),
        ),
        (
            "gradient check",
            Box::new(|| timed(GRADIENT_BUDGET, || suites(&[run_suite(verify::gradient_check_suite)]))),
        ),
        (
            "expansivity bound",
            Box::new(|| suites(&[run_suite(verify::expansivity_bound_trials)])),
        ),
        (
            "SBM robustness",
            Box::new(|| timed(ROBUSTNESS_BUDGET, criterion_robustness)),
        ),
        ("determinism", Box::new(criterion_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let out = check();
        if !out.passed {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} ({})",
            i + 1,
            name,
            if out.passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
