//! Subcommand implementations. Configuration problems map to exit code 2,
//! failures while running to 3, failed verification to 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use csgnn_core::io::{
    read_checkpoint, read_graph, train_config_from_kv, write_checkpoint, write_graph, KvConfig, TRAIN_KEYS,
};
use csgnn_core::robustness::{evaluate_robustness, results_csv};
use csgnn_core::train::history_csv;
use csgnn_core::verify::run_all;
use csgnn_core::{
    certify as certify_params, gen_sbm as generate_sbm, train as train_network, AttackKind, AttackSpec, CsgnnError,
    GcnConfig, Graph, ModelConfig, PerturbationBudget, SbmConfig, TrainConfig, VerifyConfig,
};

use crate::CommonArgs;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const RESULTS_FILE: &str = "results.csv";
pub const VERIFY_FILE: &str = "verify.txt";
pub const CERTIFICATE_FILE: &str = "certificate.txt";

const SBM_KEYS: &[&str] = &["n", "classes", "p_in", "p_out", "feat_dim", "signal"];
const GCN_KEYS: &[&str] = &[
    "gcn_hidden",
    "gcn_lr",
    "gcn_weight_decay",
    "gcn_dropout_p",
    "gcn_epochs",
    "gcn_patience",
];
const SWEEP_KEYS: &[&str] = &["attack_kind", "edge_ratios", "feat_eps", "models", "seed_count"];
const CERTIFY_KEYS: &[&str] = &["checkpoint", "eps_feat", "eps_adj"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] CsgnnError),
    #[error("{failed} verification suite(s) failed")]
    VerificationFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerificationFailed { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parsed flags: merged config, resolved seed and output directory.
pub struct Invocation {
    kv: KvConfig,
    seed: u64,
    out: PathBuf,
}

pub fn invocation(args: &CommonArgs) -> CliResult<Invocation> {
    let mut kv = match &args.config {
        Some(path) if !path.is_file() => return Err(usage(format!("config file {} not found", path.display()))),
        Some(path) => KvConfig::load(path).map_err(usage)?,
        None => KvConfig::new(),
    };
    for pair in &args.overrides {
        kv.set_pair(pair).map_err(usage)?;
    }
    let seed = match args.seed {
        Some(s) => s,
        None => kv.get_or("seed", 0u64).map_err(usage)?,
    };
    kv.set("seed", &seed.to_string());
    Ok(Invocation {
        kv,
        seed,
        out: args.out.clone(),
    })
}

fn allowed(groups: &[&[&'static str]]) -> Vec<&'static str> {
    let mut keys = vec!["seed", "graph"];
    for g in groups {
        keys.extend(g.iter().copied());
    }
    keys
}

fn sbm_config(kv: &KvConfig) -> CliResult<SbmConfig> {
    let d = SbmConfig::default();
    let cfg = SbmConfig {
        n: kv.get_or("n", d.n).map_err(usage)?,
        classes: kv.get_or("classes", d.classes).map_err(usage)?,
        p_in: kv.get_or("p_in", d.p_in).map_err(usage)?,
        p_out: kv.get_or("p_out", d.p_out).map_err(usage)?,
        feat_dim: kv.get_or("feat_dim", d.feat_dim).map_err(usage)?,
        signal: kv.get_or("signal", d.signal).map_err(usage)?,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

/// The graph named by `graph`, or a stochastic block model drawn with the
/// command seed.
fn input_graph(inv: &Invocation) -> CliResult<Graph> {
    match inv.kv.get_str("graph") {
        Some(dir) => {
            let dir = Path::new(dir);
            if !dir.is_dir() {
                return Err(usage(format!("graph directory {} not found", dir.display())));
            }
            Ok(read_graph(dir)?)
        }
        None => Ok(generate_sbm(&sbm_config(&inv.kv)?, inv.seed)?),
    }
}

fn write_output(inv: &Invocation, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(&inv.out).map_err(CsgnnError::from)?;
    fs::write(inv.out.join(name), contents).map_err(CsgnnError::from)?;
    Ok(())
}

fn train_config(inv: &Invocation) -> CliResult<TrainConfig> {
    let cfg = train_config_from_kv(&inv.kv).map_err(usage)?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn gen_sbm(inv: &Invocation) -> CliResult<()> {
    inv.kv.check_known(&allowed(&[SBM_KEYS])).map_err(usage)?;
    let cfg = sbm_config(&inv.kv)?;
    let g = generate_sbm(&cfg, inv.seed)?;
    write_graph(&inv.out, &g)?;
    println!(
        "nodes={} edges={} classes={} feat_dim={} seed={}",
        g.num_nodes(),
        g.undirected_edges().len(),
        cfg.classes,
        cfg.feat_dim,
        inv.seed
    );
    Ok(())
}

pub fn train(inv: &Invocation) -> CliResult<()> {
    inv.kv.check_known(&allowed(&[SBM_KEYS, TRAIN_KEYS])).map_err(usage)?;
    let cfg = train_config(inv)?;
    let g = input_graph(inv)?;
    let out = train_network(&g, &cfg)?;
    write_output(inv, METRICS_FILE, &history_csv(&out.history))?;
    fs::create_dir_all(&inv.out).map_err(CsgnnError::from)?;
    write_checkpoint(&inv.out.join(CHECKPOINT_FILE), &out.params)?;
    let mut summary = format!("epochs_run={}\nbest_epoch={}\n", out.history.len(), out.best_epoch);
    if out.best_epoch > 0 {
        let m = &out.history[out.best_epoch - 1];
        let _ = writeln!(summary, "val_acc={}\ntest_acc={}", m.val_acc, m.test_acc);
    }
    write_output(inv, SUMMARY_FILE, &summary)?;
    print!("{summary}");
    Ok(())
}

fn gcn_config(kv: &KvConfig) -> CliResult<GcnConfig> {
    let d = GcnConfig::default();
    Ok(GcnConfig {
        hidden: kv.get_or("gcn_hidden", d.hidden).map_err(usage)?,
        lr: kv.get_or("gcn_lr", d.lr).map_err(usage)?,
        weight_decay: kv.get_or("gcn_weight_decay", d.weight_decay).map_err(usage)?,
        dropout_p: kv.get_or("gcn_dropout_p", d.dropout_p).map_err(usage)?,
        epochs: kv.get_or("gcn_epochs", d.epochs).map_err(usage)?,
        patience: kv.get_or("gcn_patience", d.patience).map_err(usage)?,
        seed: d.seed,
    })
}

fn attack_specs(kv: &KvConfig) -> CliResult<Vec<AttackSpec>> {
    let kind = AttackKind::parse(kv.get_str("attack_kind").unwrap_or("random_edges")).map_err(usage)?;
    let ratios: Vec<f64> = kv
        .get_list("edge_ratios")
        .map_err(usage)?
        .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 1.0]);
    let eps: Vec<f64> = kv.get_list("feat_eps").map_err(usage)?.unwrap_or_else(|| vec![0.0]);
    let pairs: Vec<(f64, f64)> = match kind {
        AttackKind::RandomEdges => ratios.iter().map(|&r| (r, 0.0)).collect(),
        AttackKind::FeatureNoise => eps.iter().map(|&e| (0.0, e)).collect(),
        AttackKind::Both => ratios.iter().flat_map(|&r| eps.iter().map(move |&e| (r, e))).collect(),
    };
    pairs
        .into_iter()
        .map(|(r, e)| AttackSpec::new(kind, r, e, 0).map_err(usage))
        .collect()
}

pub fn attack_sweep(inv: &Invocation) -> CliResult<()> {
    inv.kv
        .check_known(&allowed(&[SBM_KEYS, TRAIN_KEYS, GCN_KEYS, SWEEP_KEYS]))
        .map_err(usage)?;
    let specs = attack_specs(&inv.kv)?;
    let names: Vec<String> = inv
        .kv
        .get_list("models")
        .map_err(usage)?
        .unwrap_or_else(|| vec!["csgnn".to_string(), "gcn".to_string()]);
    let mut models = Vec::with_capacity(names.len());
    for name in &names {
        models.push(match name.as_str() {
            "csgnn" => ModelConfig::Csgnn(Box::new(train_config(inv)?)),
            "gcn" => ModelConfig::Gcn(gcn_config(&inv.kv)?),
            other => return Err(usage(format!("unknown model {other:?}, expected csgnn or gcn"))),
        });
    }
    let seed_count: u64 = inv.kv.get_or("seed_count", 10).map_err(usage)?;
    if seed_count == 0 {
        return Err(usage("seed_count must be positive"));
    }
    let seeds: Vec<u64> = (inv.seed..inv.seed + seed_count).collect();
    let g = input_graph(inv)?;
    let rows = evaluate_robustness(&g, &specs, &models, &seeds)?;
    let csv = results_csv(&rows);
    write_output(inv, RESULTS_FILE, &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn verify(inv: &Invocation) -> CliResult<()> {
    inv.kv.check_known(&allowed(&[&["fault_step_scale"]])).map_err(usage)?;
    let fault_step_scale: f64 = inv.kv.get_or("fault_step_scale", 1.0).map_err(usage)?;
    if !(fault_step_scale > 0.0 && fault_step_scale.is_finite()) {
        return Err(usage("fault_step_scale must be positive"));
    }
    let report = run_all(&VerifyConfig {
        seed: inv.seed,
        fault_step_scale,
    })?;
    let text = report.to_string();
    write_output(inv, VERIFY_FILE, &text)?;
    print!("{text}");
    match report.suites.iter().filter(|s| !s.passed).count() {
        0 => Ok(()),
        failed => Err(CliError::VerificationFailed { failed }),
    }
}

pub fn certify(inv: &Invocation) -> CliResult<()> {
    inv.kv.check_known(&allowed(&[SBM_KEYS, CERTIFY_KEYS])).map_err(usage)?;
    let path = inv
        .kv
        .get_str("checkpoint")
        .ok_or_else(|| usage("certify needs --set checkpoint=PATH"))?;
    let path = Path::new(path);
    if !path.is_file() {
        return Err(usage(format!("checkpoint {} not found", path.display())));
    }
    let budget = PerturbationBudget::new(
        inv.kv.get_or("eps_feat", 0.0).map_err(usage)?,
        inv.kv.get_or("eps_adj", 0.0).map_err(usage)?,
    )
    .map_err(usage)?;
    let params = read_checkpoint(path)?;
    let g = input_graph(inv)?;
    let cert = certify_params(&g, &params, &budget)?;
    let text = certificate_text(&cert);
    write_output(inv, CERTIFICATE_FILE, &text)?;
    print!("{text}");
    Ok(())
}

fn certificate_text(cert: &csgnn_core::Certificate) -> String {
    let mut out = String::new();
    for (l, c) in cert.layers.iter().enumerate() {
        let (h_max, margin) = match c.h_adj_max {
            Some(m) => (m.to_string(), (m - c.h).to_string()),
            None => ("unbounded".to_string(), "unbounded".to_string()),
        };
        let _ = writeln!(
            out,
            "layer {} h={} h_adj_max={} h_adj_margin={} h_feature_safe={} adj_bound={} lipschitz_upper={}",
            l + 1,
            c.h,
            h_max,
            margin,
            c.h_feature_safe,
            c.adj_bound,
            c.lipschitz_upper
        );
    }
    let _ = writeln!(out, "eps_feat_embedded={}", cert.eps_feat_embedded);
    let _ = writeln!(out, "eps_adj={}", cert.eps_adj);
    let _ = writeln!(out, "contractive_setting={}", cert.contractive_setting);
    let _ = writeln!(out, "bound={}", cert.bound);
    out
}
