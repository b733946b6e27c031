use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use csgnn_core::io::{read_graph, write_checkpoint};
use csgnn_core::verify::SUITES;
use csgnn_core::{
    expansivity_bound, AdjacencyStepConfig, EquivariantCoeffs, LayerBlock, LayerParams, LeakyRelu, NetworkParams,
    PerturbationBudget,
};
use ndarray::{Array1, Array2};

fn csgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csgnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    let out = dir.to_str().expect("utf-8 path");
    full.extend(["--out", out]);
    csgnn(&full)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_sbm_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&run_in(&a, &["gen-sbm", "--seed", "5"])), 0);
    assert_eq!(code(&run_in(&b, &["gen-sbm", "--seed", "5"])), 0);
    assert_eq!(code(&run_in(&c, &["gen-sbm", "--seed", "6"])), 0);
    for f in ["edges.txt", "features.csv", "labels.csv", "masks.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        fs::read(a.join("edges.txt")).unwrap(),
        fs::read(c.join("edges.txt")).unwrap()
    );
}

#[test]
fn gen_sbm_full_and_empty_blocks_give_cliques() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["gen-sbm", "--set", "n=10", "--set", "p_in=1", "--set", "p_out=0"],
    );
    assert_eq!(code(&o), 0);
    let g = read_graph(dir.path()).unwrap();
    assert_eq!(g.undirected_edges().len(), 2 * 10);
    for (i, j) in g.undirected_edges() {
        assert_eq!(i < 5, j < 5);
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&csgnn(&["train", "--set", "no_such_key=1"])), 2);
    assert_eq!(code(&csgnn(&["train", "--set", "epochs=many"])), 2);
    assert_eq!(code(&csgnn(&["train", "--set", "novalue"])), 2);
    assert_eq!(code(&csgnn(&["gen-sbm", "--set", "p_in=0.1", "--set", "p_out=0.2"])), 2);
    assert_eq!(code(&csgnn(&["train", "--config", "/nonexistent/cfg.txt"])), 2);
    assert_eq!(code(&csgnn(&["certify"])), 2);
    assert_eq!(code(&csgnn(&["no-such-command"])), 2);
    assert_eq!(code(&csgnn(&["verify", "--seed", "minus-one"])), 2);
    assert_eq!(code(&run_in(dir.path(), &["attack-sweep", "--set", "models=mlp"])), 2);
    assert_eq!(code(&csgnn(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g");
    fs::create_dir_all(&graph).unwrap();
    fs::write(graph.join("features.csv"), "1,2\n3,x\n").unwrap();
    let arg = format!("graph={}", graph.display());
    assert_eq!(code(&run_in(&dir.path().join("o"), &["train", "--set", &arg])), 3);
    let ckpt = dir.path().join("bad.txt");
    fs::write(&ckpt, "csgnn-checkpoint 1\nnum_layers two\n").unwrap();
    let arg = format!("checkpoint={}", ckpt.display());
    assert_eq!(code(&run_in(&dir.path().join("o"), &["certify", "--set", &arg])), 3);
}

#[test]
fn verify_reports_every_suite_and_fails_on_fault() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_in(&dir.path().join("ok"), &["verify"]);
    assert_eq!(code(&ok), 0);
    let report = fs::read_to_string(dir.path().join("ok").join("verify.txt")).unwrap();
    assert_eq!(report, stdout(&ok));
    for (id, _) in SUITES {
        assert!(
            report.lines().any(|l| l.starts_with(&format!("PASS {id} "))),
            "{id} missing"
        );
    }
    let faulty = run_in(&dir.path().join("bad"), &["verify", "--set", "fault_step_scale=10"]);
    assert_eq!(code(&faulty), 1);
    assert!(stdout(&faulty).contains("FAIL adjacency-l1-contraction"));
}

#[test]
fn config_file_then_overrides_then_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.cfg");
    fs::write(&cfg, "# short run\nepochs = 5\nseed = 11\nhidden = 8\n").unwrap();
    let out = dir.path().join("o");
    let o = run_in(&out, &["train", "--config", cfg.to_str().unwrap(), "--set", "epochs=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("epoch,train_loss,val_acc,test_acc"));
    assert_eq!(metrics.lines().count(), 4);
    assert!(stdout(&o).starts_with("epochs_run=3\n"));

    let flag = dir.path().join("flag");
    let from_file = dir.path().join("file");
    let explicit = ["train", "--config", cfg.to_str().unwrap(), "--seed", "11"];
    assert_eq!(code(&run_in(&flag, &explicit)), 0);
    assert_eq!(code(&run_in(&from_file, &explicit[..3])), 0);
    assert_eq!(
        fs::read(flag.join("checkpoint.txt")).unwrap(),
        fs::read(from_file.join("checkpoint.txt")).unwrap()
    );
}

fn parse_certificate(text: &str) -> (Vec<(f64, f64)>, f64, f64, f64) {
    let field = |line: &str, key: &str| -> f64 {
        line.split_whitespace()
            .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| panic!("{key} missing in {line:?}"))
    };
    let mut layers = Vec::new();
    let (mut eps_feat, mut eps_adj, mut bound) = (f64::NAN, f64::NAN, f64::NAN);
    for line in text.lines() {
        if line.starts_with("layer ") {
            layers.push((field(line, "h"), field(line, "lipschitz_upper")));
        } else if line.starts_with("eps_feat_embedded=") {
            eps_feat = field(line, "eps_feat_embedded");
        } else if line.starts_with("eps_adj=") {
            eps_adj = field(line, "eps_adj");
        } else if line.starts_with("bound=") {
            bound = field(line, "bound");
        }
    }
    (layers, eps_feat, eps_adj, bound)
}

#[test]
fn certify_trained_network_matches_in_process_bound() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("t");
    assert_eq!(code(&run_in(&train_dir, &["train", "--set", "epochs=20"])), 0);
    let ckpt = format!("checkpoint={}", train_dir.join("checkpoint.txt").display());

    let zero = run_in(&dir.path().join("z"), &["certify", "--set", &ckpt]);
    assert_eq!(code(&zero), 0);
    assert_eq!(parse_certificate(&stdout(&zero)).3, 0.0);

    let o = run_in(
        &dir.path().join("c"),
        &["certify", "--set", &ckpt, "--set", "eps_feat=0.3", "--set", "eps_adj=2"],
    );
    assert_eq!(code(&o), 0);
    let (layers, eps_feat, eps_adj, bound) = parse_certificate(&stdout(&o));
    assert_eq!(layers.len(), 2);
    let (hs, lips): (Vec<f64>, Vec<f64>) = layers.into_iter().unzip();
    let recomputed = expansivity_bound(&hs, &lips, &PerturbationBudget::new(eps_feat, eps_adj).unwrap()).unwrap();
    assert!(
        (recomputed - bound).abs() <= 1e-12 * bound.abs().max(1.0),
        "{recomputed} vs {bound}"
    );
}

#[test]
fn zero_coefficient_network_certifies_sum_of_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let c = 16;
    let act = LeakyRelu::default();
    let params = NetworkParams {
        encoder: Array2::eye(c),
        layers: vec![LayerBlock {
            feature: LayerParams::learn_w(Array2::zeros((c, c)), 1.0, 0.5).unwrap(),
            adjacency: AdjacencyStepConfig::new(EquivariantCoeffs::zero(), 0.5, act).unwrap(),
            step_cap: 0.5,
        }],
        num_layers: 1,
        classifier: Array2::eye(c),
        classifier_bias: Array1::zeros(c),
        dropout_p: 0.0,
        share_weights: false,
    };
    let path = dir.path().join("zero.txt");
    write_checkpoint(&path, &params).unwrap();
    let ckpt = format!("checkpoint={}", path.display());
    let o = run_in(
        &dir.path().join("c"),
        &[
            "certify",
            "--set",
            &ckpt,
            "--set",
            "eps_feat=0.25",
            "--set",
            "eps_adj=0.5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("h_adj_max=unbounded"));
    assert!((parse_certificate(&text).3 - 0.75).abs() < 1e-12, "{text}");
}

#[test]
fn attack_sweep_writes_one_row_per_model_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &[
            "attack-sweep",
            "--set",
            "attack_kind=both",
            "--set",
            "edge_ratios=0,0.5",
            "--set",
            "feat_eps=0.1",
            "--set",
            "seed_count=2",
            "--set",
            "epochs=5",
            "--set",
            "gcn_epochs=5",
            "--set",
            "n=40",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,attack_kind,budget,seed_count,mean_acc,std_acc");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("csgnn,both,0+0.1,2,"));
    assert!(lines[4].starts_with("gcn,both,0.5+0.1,2,"));
}
