//! Text formats: graph files, key-value configs and network checkpoints.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value read back is bit-identical to the value written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::activation::LeakyRelu;
use crate::adjacency::{AdjacencyStepConfig, EquivariantCoeffs};
use crate::error::{parse_err, CsgnnError, Result};
use crate::features::{LayerParams, Parameterization};
use crate::graph::Graph;
use crate::network::{ArchConfig, LayerBlock, NetworkParams};
use crate::train::{AdamConfig, GroupValues, TrainConfig};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MASKS_FILE: &str = "masks.csv";

pub const CHECKPOINT_MAGIC: &str = "csgnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

fn parse_value<T: FromStr>(s: &str, location: impl Into<String>) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(location, format!("cannot parse {s:?}")))
}

// ---------------------------------------------------------------- graphs

/// Edge list `i j` with `i ≤ j`, one undirected edge per line.
pub fn edge_list(g: &Graph) -> Result<String> {
    if !(g.is_binary() && g.is_symmetric()) {
        return Err(CsgnnError::InvalidParameter(
            "edge lists need a binary symmetric adjacency".into(),
        ));
    }
    let n = g.num_nodes();
    let mut out = String::new();
    for i in 0..n {
        for j in i..n {
            if g.adjacency[[i, j]] != 0.0 {
                let _ = writeln!(out, "{i} {j}");
            }
        }
    }
    Ok(out)
}

pub fn parse_edge_list(text: &str, n: usize) -> Result<Array2<f64>> {
    let mut a = Array2::zeros((n, n));
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("{EDGES_FILE}:{}", lineno + 1);
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(parse_err(loc(), "expected two node indices"));
        }
        let i: usize = parse_value(parts[0], loc())?;
        let j: usize = parse_value(parts[1], loc())?;
        if i >= n || j >= n {
            return Err(parse_err(loc(), format!("node index out of range 0..{n}")));
        }
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    Ok(a)
}

pub fn features_csv(f: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in f.rows() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_features_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{FEATURES_FILE}:{}", lineno + 1);
        let row = line
            .split(',')
            .map(|c| parse_value::<f64>(c, loc.clone()))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    loc,
                    format!("expected {} columns, got {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let c = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), c), flat).map_err(|e| parse_err(FEATURES_FILE, e.to_string()))
}

pub fn labels_csv(labels: &[i64]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<i64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_value(l, format!("{LABELS_FILE}:{}", i + 1)))
        .collect()
}

/// `train,val,test` header, then one `0/1` triple per node.
pub fn masks_csv(g: &Graph) -> String {
    let mut out = String::from("train,val,test\n");
    for i in 0..g.num_nodes() {
        let _ = writeln!(
            out,
            "{},{},{}",
            g.train_mask[i] as u8, g.val_mask[i] as u8, g.test_mask[i] as u8
        );
    }
    out
}

pub fn parse_masks_csv(text: &str) -> Result<(Vec<bool>, Vec<bool>, Vec<bool>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "train,val,test" => {}
        _ => return Err(parse_err(format!("{MASKS_FILE}:1"), "expected header train,val,test")),
    }
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in lines {
        let loc = || format!("{MASKS_FILE}:{}", lineno + 1);
        let bits: Vec<&str> = line.split(',').map(str::trim).collect();
        if bits.len() != 3 {
            return Err(parse_err(loc(), "expected three columns"));
        }
        let mut flags = [false; 3];
        for (flag, b) in flags.iter_mut().zip(&bits) {
            *flag = match *b {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(loc(), format!("expected 0 or 1, got {other:?}"))),
            };
        }
        tr.push(flags[0]);
        va.push(flags[1]);
        te.push(flags[2]);
    }
    Ok((tr, va, te))
}

/// Writes the four graph files into `dir`.
pub fn write_graph(dir: &Path, g: &Graph) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(EDGES_FILE), edge_list(g)?)?;
    fs::write(dir.join(FEATURES_FILE), features_csv(&g.features))?;
    fs::write(dir.join(LABELS_FILE), labels_csv(&g.labels))?;
    fs::write(dir.join(MASKS_FILE), masks_csv(g))?;
    Ok(())
}

/// Reads a graph written by [`write_graph`]. The node count comes from the
/// feature file.
pub fn read_graph(dir: &Path) -> Result<Graph> {
    let features = parse_features_csv(&fs::read_to_string(dir.join(FEATURES_FILE))?)?;
    let n = features.nrows();
    let adjacency = parse_edge_list(&fs::read_to_string(dir.join(EDGES_FILE))?, n)?;
    let labels = parse_labels_csv(&fs::read_to_string(dir.join(LABELS_FILE))?)?;
    let (tr, va, te) = parse_masks_csv(&fs::read_to_string(dir.join(MASKS_FILE))?)?;
    Graph::new(adjacency, features, labels, tr, va, te, true)
}

// ---------------------------------------------------------------- configs

/// `key = value` lines; `#` starts a comment. Later entries win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_pair(line)
                .map_err(|_| parse_err(format!("{source}:{}", lineno + 1), "expected key = value"))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.trim().to_string(), value.trim().to_string());
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        match pair.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                self.set(k, v);
                Ok(())
            }
            _ => Err(parse_err("override", format!("expected key=value, got {pair:?}"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.entries
            .get(key)
            .map(|v| parse_value(v, format!("config key {key}")))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.entries
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| parse_value(x, format!("config key {key}")))
                    .collect::<Result<Vec<T>>>()
            })
            .transpose()
    }

    /// Rejects keys outside `allowed`.
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(CsgnnError::InvalidParameter(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

/// Keys read by [`train_config_from_kv`].
pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "patience",
    "seed",
    "hidden",
    "layers",
    "parameterization",
    "lambda",
    "h",
    "alpha",
    "leaky_slope",
    "share_weights",
    "dropout_p",
    "k_init",
    "k2",
    "k3",
    "k4",
    "k5",
    "k6",
    "k7",
    "k8",
    "k9",
    "lr_embedding",
    "lr_node",
    "lr_adjacency",
    "wd_embedding",
    "wd_node",
    "wd_adjacency",
];

const K_KEYS: [&str; 8] = ["k2", "k3", "k4", "k5", "k6", "k7", "k8", "k9"];

/// Builds a [`TrainConfig`]; absent keys keep their defaults. Explicit
/// `k2..k9` (all eight or none) fix the initial adjacency coefficients.
pub fn train_config_from_kv(kv: &KvConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let a = &d.arch;
    let parameterization = match kv.get_str("parameterization") {
        Some(s) => Parameterization::parse(s)?,
        None => a.parameterization,
    };
    let given: Vec<Option<f64>> = K_KEYS.iter().map(|k| kv.get(k)).collect::<Result<_>>()?;
    let ks_init = match given.iter().filter(|v| v.is_some()).count() {
        0 => None,
        8 => {
            let mut ks = [0.0; 8];
            for (k, v) in ks.iter_mut().zip(&given) {
                *k = v.expect("all present");
            }
            Some(ks)
        }
        _ => return Err(CsgnnError::InvalidParameter("give all of k2..k9 or none".into())),
    };
    let arch = ArchConfig {
        hidden: kv.get_or("hidden", a.hidden)?,
        layers: kv.get_or("layers", a.layers)?,
        parameterization,
        lambda: kv.get_or("lambda", a.lambda)?,
        h: kv.get_or("h", a.h)?,
        alpha: kv.get_or("alpha", a.alpha)?,
        leaky_slope: kv.get_or("leaky_slope", a.leaky_slope)?,
        share_weights: kv.get_or("share_weights", a.share_weights)?,
        dropout_p: kv.get_or("dropout_p", a.dropout_p)?,
        k_init: kv.get_or("k_init", a.k_init)?,
        ks_init,
    };
    let o = &d.optimizer;
    let optimizer = AdamConfig {
        lr: GroupValues {
            embedding: kv.get_or("lr_embedding", o.lr.embedding)?,
            node: kv.get_or("lr_node", o.lr.node)?,
            adjacency: kv.get_or("lr_adjacency", o.lr.adjacency)?,
        },
        weight_decay: GroupValues {
            embedding: kv.get_or("wd_embedding", o.weight_decay.embedding)?,
            node: kv.get_or("wd_node", o.weight_decay.node)?,
            adjacency: kv.get_or("wd_adjacency", o.weight_decay.adjacency)?,
        },
        ..*o
    };
    Ok(TrainConfig {
        arch,
        optimizer,
        epochs: kv.get_or("epochs", d.epochs)?,
        patience: kv.get_or("patience", d.patience)?,
        seed: kv.get_or("seed", d.seed)?,
    })
}

// ---------------------------------------------------------------- checkpoints

fn push_values<'a>(out: &mut String, key: &str, dims: &[usize], values: impl Iterator<Item = &'a f64>) {
    out.push_str(key);
    for d in dims {
        let _ = write!(out, " {d}");
    }
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

/// Serializes `params`; the field order is listed in the README.
pub fn checkpoint_to_string(params: &NetworkParams) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
    let _ = writeln!(out, "num_layers {}", params.num_layers);
    let _ = writeln!(out, "share_weights {}", params.share_weights);
    let _ = writeln!(out, "dropout_p {}", params.dropout_p);
    let _ = writeln!(out, "leaky_slope {}", params.activation().slope());
    push_values(
        &mut out,
        "encoder",
        &[params.encoder.nrows(), params.encoder.ncols()],
        params.encoder.iter(),
    );
    push_values(
        &mut out,
        "classifier",
        &[params.classifier.nrows(), params.classifier.ncols()],
        params.classifier.iter(),
    );
    push_values(
        &mut out,
        "classifier_bias",
        &[params.classifier_bias.len()],
        params.classifier_bias.iter(),
    );
    let _ = writeln!(out, "blocks {}", params.layers.len());
    for (i, b) in params.layers.iter().enumerate() {
        let _ = writeln!(out, "block {i}");
        let _ = writeln!(out, "parameterization {}", b.feature.parameterization.as_str());
        let _ = writeln!(out, "h {}", b.h());
        let _ = writeln!(out, "step_cap {}", b.step_cap);
        let _ = writeln!(out, "alpha {}", b.adjacency.coeffs.alpha());
        let _ = writeln!(out, "coeff_slope {}", b.adjacency.coeffs.slope());
        push_values(&mut out, "ks", &[], b.adjacency.coeffs.ks().iter());
        push_values(
            &mut out,
            "w",
            &[b.feature.w.nrows(), b.feature.w.ncols()],
            b.feature.w.iter(),
        );
        push_values(
            &mut out,
            "k",
            &[b.feature.k.nrows(), b.feature.k.ncols()],
            b.feature.k.iter(),
        );
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line, which must start with `key`; returns the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<(String, Vec<&'a str>)> {
        let (i, line) = self
            .inner
            .next()
            .ok_or_else(|| parse_err("checkpoint", format!("unexpected end, expected {key}")))?;
        let loc = format!("checkpoint line {}", i + 1);
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == key => Ok((loc, tokens.collect())),
            other => Err(parse_err(loc, format!("expected {key}, got {other:?}"))),
        }
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (loc, toks) = self.expect(key)?;
        match toks.as_slice() {
            [v] => parse_value(v, loc),
            _ => Err(parse_err(loc, format!("{key} takes one value"))),
        }
    }

    fn values(&mut self, key: &str, n_dims: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let (loc, toks) = self.expect(key)?;
        if toks.len() < n_dims {
            return Err(parse_err(loc, format!("{key} needs {n_dims} dimensions")));
        }
        let dims = toks[..n_dims]
            .iter()
            .map(|t| parse_value::<usize>(t, loc.clone()))
            .collect::<Result<Vec<_>>>()?;
        let values = toks[n_dims..]
            .iter()
            .map(|t| parse_value::<f64>(t, loc.clone()))
            .collect::<Result<Vec<_>>>()?;
        let expected: usize = dims.iter().product();
        if n_dims > 0 && values.len() != expected {
            return Err(parse_err(
                loc,
                format!("{key}: expected {expected} values, got {}", values.len()),
            ));
        }
        Ok((dims, values))
    }

    fn matrix(&mut self, key: &str) -> Result<Array2<f64>> {
        let (dims, values) = self.values(key, 2)?;
        Array2::from_shape_vec((dims[0], dims[1]), values).map_err(|e| parse_err("checkpoint", e.to_string()))
    }
}

pub fn checkpoint_from_str(text: &str) -> Result<NetworkParams> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (loc, toks) = lines.expect(CHECKPOINT_MAGIC)?;
    let version: u32 = match toks.as_slice() {
        [v] => parse_value(v, loc.clone())?,
        _ => return Err(parse_err(loc, "missing version")),
    };
    if version != CHECKPOINT_VERSION {
        return Err(parse_err(loc, format!("unsupported checkpoint version {version}")));
    }
    let num_layers: usize = lines.scalar("num_layers")?;
    let share_weights: bool = lines.scalar("share_weights")?;
    let dropout_p: f64 = lines.scalar("dropout_p")?;
    let act = LeakyRelu::new(lines.scalar("leaky_slope")?)?;
    let encoder = lines.matrix("encoder")?;
    let classifier = lines.matrix("classifier")?;
    let (_, bias) = lines.values("classifier_bias", 1)?;
    let blocks: usize = lines.scalar("blocks")?;
    let mut layers = Vec::with_capacity(blocks);
    for i in 0..blocks {
        let idx: usize = lines.scalar("block")?;
        if idx != i {
            return Err(parse_err("checkpoint", format!("expected block {i}, got {idx}")));
        }
        let parameterization = Parameterization::parse(&lines.scalar::<String>("parameterization")?)?;
        let h: f64 = lines.scalar("h")?;
        let step_cap: f64 = lines.scalar("step_cap")?;
        let alpha: f64 = lines.scalar("alpha")?;
        let slope: f64 = lines.scalar("coeff_slope")?;
        let (_, ks) = lines.values("ks", 0)?;
        let ks: [f64; 8] = ks
            .try_into()
            .map_err(|_| parse_err("checkpoint", "ks needs eight values"))?;
        let w = lines.matrix("w")?;
        let k = lines.matrix("k")?;
        let feature = LayerParams {
            w,
            k,
            h,
            parameterization,
        };
        feature.validate()?;
        let coeffs = EquivariantCoeffs::with_slope(ks, alpha, slope)?;
        layers.push(LayerBlock {
            feature,
            adjacency: AdjacencyStepConfig::new(coeffs, h, act)?,
            step_cap,
        });
    }
    lines.expect("end")?;
    let params = NetworkParams {
        encoder,
        layers,
        num_layers,
        classifier,
        classifier_bias: Array1::from(bias),
        dropout_p,
        share_weights,
    };
    params.validate()?;
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &NetworkParams) -> Result<()> {
    fs::write(path, checkpoint_to_string(params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkParams> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}
