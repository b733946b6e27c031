//! Poisoning attacks, a two-layer GCN baseline and the robustness sweep.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{shape_err, CsgnnError, Result};
use crate::graph::Graph;
use crate::linalg::frobenius_norm;
use crate::train::{
    masked_accuracy, masked_cross_entropy, masked_cross_entropy_with_grad, train, AdamConfig, AdamState, GroupValues,
    ParamGroup, TrainConfig,
};

/// Seeds of the robustness protocol.
pub const PROTOCOL_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Feature noise lands strictly inside the budget by this relative margin.
pub const FEATURE_NOISE_SHRINK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    RandomEdges,
    FeatureNoise,
    Both,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::RandomEdges => "random_edges",
            AttackKind::FeatureNoise => "feature_noise",
            AttackKind::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random_edges" => Ok(AttackKind::RandomEdges),
            "feature_noise" => Ok(AttackKind::FeatureNoise),
            "both" => Ok(AttackKind::Both),
            other => Err(CsgnnError::InvalidParameter(format!(
                "unknown attack kind {other:?}, expected random_edges, feature_noise or both"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Added edges as a fraction of the current undirected edge count.
    pub edge_ratio: f64,
    /// Frobenius budget of the feature noise.
    pub feat_eps: f64,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, edge_ratio: f64, feat_eps: f64, seed: u64) -> Result<Self> {
        if !(edge_ratio >= 0.0 && edge_ratio.is_finite() && feat_eps >= 0.0 && feat_eps.is_finite()) {
            return Err(CsgnnError::InvalidParameter(format!(
                "attack budgets must be finite and non-negative, got ratio {edge_ratio}, eps {feat_eps}"
            )));
        }
        Ok(Self {
            kind,
            edge_ratio,
            feat_eps,
            seed,
        })
    }

    /// The budget column of the results table.
    pub fn budget_label(&self) -> String {
        match self.kind {
            AttackKind::RandomEdges => format!("{}", self.edge_ratio),
            AttackKind::FeatureNoise => format!("{}", self.feat_eps),
            AttackKind::Both => format!("{}+{}", self.edge_ratio, self.feat_eps),
        }
    }
}

/// Adds `⌊edge_ratio·m⌋` distinct undirected non-edges, chosen uniformly
/// without self-loops.
pub fn random_edge_attack(g: &Graph, spec: &AttackSpec) -> Result<Graph> {
    if !(g.is_binary() && g.is_symmetric()) {
        return Err(CsgnnError::InvalidParameter(
            "edge attack needs a binary symmetric graph".into(),
        ));
    }
    if !(spec.edge_ratio >= 0.0 && spec.edge_ratio.is_finite()) {
        return Err(CsgnnError::InvalidParameter(format!(
            "edge ratio {} out of range",
            spec.edge_ratio
        )));
    }
    let n = g.num_nodes();
    let m = g.undirected_edges().len();
    let requested = (spec.edge_ratio * m as f64).floor() as usize;
    if requested == 0 {
        return Ok(g.clone());
    }
    let mut non_edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if g.adjacency[[i, j]] == 0.0 {
                non_edges.push((i, j));
            }
        }
    }
    if requested > non_edges.len() {
        return Err(CsgnnError::NotEnoughNonEdges {
            requested,
            available: non_edges.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picks = sample(&mut rng, non_edges.len(), requested).into_vec();
    picks.sort_unstable();
    let mut a = g.adjacency.clone();
    for p in picks {
        let (i, j) = non_edges[p];
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    g.with_adjacency(a)
}

/// Adds a uniformly random direction scaled to Frobenius norm
/// `feat_eps·(1 − 1e−9)`.
pub fn feature_noise_attack<R: Rng + ?Sized>(g: &Graph, spec: &AttackSpec, rng: &mut R) -> Result<Graph> {
    if !(spec.feat_eps >= 0.0 && spec.feat_eps.is_finite()) {
        return Err(CsgnnError::InvalidParameter(format!(
            "feature budget {} out of range",
            spec.feat_eps
        )));
    }
    if spec.feat_eps == 0.0 {
        return Ok(g.clone());
    }
    let mut dir = Array2::from_shape_simple_fn(g.features.dim(), || rng.sample::<f64, _>(StandardNormal));
    let norm = frobenius_norm(&dir.view());
    if norm == 0.0 || g.features.is_empty() {
        return Ok(g.clone());
    }
    dir *= spec.feat_eps * (1.0 - FEATURE_NOISE_SHRINK) / norm;
    g.with_features(&g.features + &dir)
}

/// Applies `spec` to `g`: edges first, then feature noise.
pub fn apply_attack(g: &Graph, spec: &AttackSpec) -> Result<Graph> {
    // A separate stream keeps the feature noise independent of how many
    // draws the edge sampler used.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    match spec.kind {
        AttackKind::RandomEdges => random_edge_attack(g, spec),
        AttackKind::FeatureNoise => feature_noise_attack(g, spec, &mut noise_rng),
        AttackKind::Both => feature_noise_attack(&random_edge_attack(g, spec)?, spec, &mut noise_rng),
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}`.
pub fn normalized_adjacency(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = crate::linalg::ensure_square("normalized_adjacency", a)?;
    let mut tilde = a.to_owned() + Array2::<f64>::eye(n);
    let deg: Array1<f64> = tilde.sum_axis(ndarray::Axis(1));
    if deg.iter().any(|&d| !(d > 0.0)) {
        return Err(CsgnnError::InvalidParameter(
            "normalized adjacency needs positive degrees".into(),
        ));
    }
    let inv_sqrt = deg.mapv(|d| 1.0 / d.sqrt());
    for ((i, j), v) in tilde.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    Ok(tilde)
}

/// Weights of the two-layer GCN baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout_p: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            lr: 1e-2,
            weight_decay: 5e-4,
            dropout_p: 0.5,
            epochs: 200,
            patience: 50,
            seed: 0,
        }
    }
}

/// `Â · ReLU(Â F W₁) · W₂`.
pub fn gcn_baseline_forward(g: &Graph, weights: &GcnParams) -> Result<Array2<f64>> {
    let a_hat = normalized_adjacency(&g.adjacency.view())?;
    gcn_logits(&a_hat.view(), &g.features.view(), weights)
}

fn check_gcn(f: &ArrayView2<f64>, w: &GcnParams) -> Result<()> {
    if f.ncols() != w.w1.nrows() || w.w1.ncols() != w.w2.nrows() {
        return Err(shape_err(
            "gcn weights",
            format!("{} x h, h x c", f.ncols()),
            format!("{:?}, {:?}", w.w1.dim(), w.w2.dim()),
        ));
    }
    Ok(())
}

fn gcn_logits(a_hat: &ArrayView2<f64>, f: &ArrayView2<f64>, w: &GcnParams) -> Result<Array2<f64>> {
    check_gcn(f, w)?;
    let hidden = a_hat.dot(&f.dot(&w.w1)).mapv(|x| x.max(0.0));
    Ok(a_hat.dot(&hidden.dot(&w.w2)))
}

struct GcnTrace {
    ax: Array2<f64>,
    pre: Array2<f64>,
    dropped: Array2<f64>,
    mask: Option<Array2<f64>>,
}

fn gcn_forward_train<R: Rng + ?Sized>(
    a_hat: &ArrayView2<f64>,
    f: &ArrayView2<f64>,
    w: &GcnParams,
    p: f64,
    rng: &mut R,
) -> Result<(Array2<f64>, GcnTrace)> {
    check_gcn(f, w)?;
    let ax = a_hat.dot(f);
    let pre = ax.dot(&w.w1);
    let relu = pre.mapv(|x| x.max(0.0));
    let (dropped, mask) = if p > 0.0 {
        let keep = 1.0 - p;
        let mask = relu.mapv(|_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 });
        (&relu * &mask, Some(mask))
    } else {
        (relu, None)
    };
    let logits = a_hat.dot(&dropped.dot(&w.w2));
    Ok((logits, GcnTrace { ax, pre, dropped, mask }))
}

fn gcn_backward(a_hat: &ArrayView2<f64>, w: &GcnParams, t: &GcnTrace, g_logits: &ArrayView2<f64>) -> GcnParams {
    // Z = Â R W₂, so dW₂ = (Â R)ᵀ G and dR = Âᵀ G W₂ᵀ.
    let ag = a_hat.t().dot(g_logits);
    let w2 = t.dropped.t().dot(&ag);
    let mut g_hidden = ag.dot(&w.w2.t());
    if let Some(m) = &t.mask {
        g_hidden *= m;
    }
    Zip::from(&mut g_hidden).and(&t.pre).for_each(|g, &s| {
        if s <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = t.ax.t().dot(&g_hidden);
    GcnParams { w1, w2 }
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    crate::sampling::random_matrix(rng, rows, cols, s)
}

/// Trains the baseline with Adam and early stopping on validation accuracy.
/// Returns the best-validation weights.
pub fn train_gcn(g: &Graph, cfg: &GcnConfig) -> Result<GcnParams> {
    if !(0.0..1.0).contains(&cfg.dropout_p) || cfg.hidden == 0 {
        return Err(CsgnnError::InvalidParameter(
            "gcn needs hidden > 0 and dropout in [0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes = g.num_classes().max(2);
    let mut w = GcnParams {
        w1: glorot(&mut rng, g.feature_dim(), cfg.hidden),
        w2: glorot(&mut rng, cfg.hidden, classes),
    };
    let a_hat = normalized_adjacency(&g.adjacency.view())?;
    let opt = AdamConfig {
        lr: GroupValues::uniform(cfg.lr),
        weight_decay: GroupValues::uniform(cfg.weight_decay),
        ..AdamConfig::default()
    };
    let mut state = AdamState::new();
    let mut best = w.clone();
    let (mut best_val, mut best_loss, mut since) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for epoch in 1..=cfg.epochs {
        let (logits, trace) = gcn_forward_train(&a_hat.view(), &g.features.view(), &w, cfg.dropout_p, &mut rng)?;
        let (loss, grad) = masked_cross_entropy_with_grad(&logits.view(), &g.labels, &g.train_mask)?;
        if !loss.is_finite() {
            return Err(CsgnnError::NonFinite(format!("gcn loss at epoch {epoch}")));
        }
        let gw = gcn_backward(&a_hat.view(), &w, &trace, &grad.view());
        let params = vec![
            (ParamGroup::Embedding, w.w1.as_slice_mut().expect("standard layout")),
            (ParamGroup::Embedding, w.w2.as_slice_mut().expect("standard layout")),
        ];
        state.update(
            params,
            vec![
                gw.w1.as_slice().expect("standard layout"),
                gw.w2.as_slice().expect("standard layout"),
            ],
            &opt,
        )?;
        let eval = gcn_logits(&a_hat.view(), &g.features.view(), &w)?;
        let val = masked_accuracy(&eval.view(), &g.labels, &g.val_mask)?;
        let val_loss = masked_cross_entropy(&eval.view(), &g.labels, &g.val_mask)?;
        if val > best_val || (val == best_val && val_loss < best_loss) {
            best_val = val;
            best_loss = val_loss;
            best = w.clone();
            since = 0;
        } else {
            since += 1;
            if cfg.patience > 0 && since >= cfg.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// A model entering the robustness sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Csgnn(Box<TrainConfig>),
    Gcn(GcnConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Csgnn(_) => "csgnn",
            ModelConfig::Gcn(_) => "gcn",
        }
    }

    /// Trains on `g` with `seed` and returns the test accuracy.
    pub fn train_and_test(&self, g: &Graph, seed: u64) -> Result<f64> {
        match self {
            ModelConfig::Csgnn(cfg) => {
                let cfg = TrainConfig {
                    seed,
                    ..(**cfg).clone()
                };
                let out = train(g, &cfg)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (logits, _) = crate::network::forward(g, &out.params, crate::network::Mode::Eval, &mut rng)?;
                masked_accuracy(&logits.view(), &g.labels, &g.test_mask)
            }
            ModelConfig::Gcn(cfg) => {
                let cfg = GcnConfig { seed, ..cfg.clone() };
                let w = train_gcn(g, &cfg)?;
                let logits = gcn_baseline_forward(g, &w)?;
                masked_accuracy(&logits.view(), &g.labels, &g.test_mask)
            }
        }
    }
}

/// One aggregated row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub attack_kind: AttackKind,
    pub budget: String,
    pub seed_count: usize,
    pub mean_acc: f64,
    /// Population standard deviation over seeds.
    pub std_acc: f64,
    pub accuracies: Vec<f64>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// For every spec, model and seed: attack the clean graph with that seed,
/// train on the attacked graph, record test accuracy. Cells run in
/// parallel; rows come out in `(spec, model)` order.
pub fn evaluate_robustness(
    clean: &Graph,
    specs: &[AttackSpec],
    models: &[ModelConfig],
    seeds: &[u64],
) -> Result<Vec<ResultRow>> {
    let mut cells = Vec::new();
    for (si, _) in specs.iter().enumerate() {
        for (mi, _) in models.iter().enumerate() {
            for &seed in seeds {
                cells.push((si, mi, seed));
            }
        }
    }
    let accs: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(si, mi, seed)| {
            let spec = AttackSpec { seed, ..specs[si] };
            let attacked = apply_attack(clean, &spec)?;
            models[mi].train_and_test(&attacked, seed)
        })
        .collect();
    let accs: Vec<f64> = accs.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(specs.len() * models.len());
    let mut k = 0;
    for spec in specs {
        for model in models {
            let chunk = accs[k..k + seeds.len()].to_vec();
            k += seeds.len();
            let (mean_acc, std_acc) = mean_std(&chunk);
            rows.push(ResultRow {
                model: model.name().to_string(),
                attack_kind: spec.kind,
                budget: spec.budget_label(),
                seed_count: seeds.len(),
                mean_acc,
                std_acc,
                accuracies: chunk,
            });
        }
    }
    Ok(rows)
}

/// `model,attack_kind,budget,seed_count,mean_acc,std_acc` with a header.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("model,attack_kind,budget,seed_count,mean_acc,std_acc\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model,
            r.attack_kind.as_str(),
            r.budget,
            r.seed_count,
            r.mean_acc,
            r.std_acc
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{frobenius_distance, l0_distance, l1_vec_distance, Permutation};
    use crate::sampling::{random_binary_symmetric, random_matrix};
    use ndarray::array;

    fn path_graph(n: usize) -> Graph {
        let mut a = Array2::zeros((n, n));
        for i in 0..n - 1 {
            a[[i, i + 1]] = 1.0;
            a[[i + 1, i]] = 1.0;
        }
        let f = Array2::from_shape_fn((n, 2), |(i, j)| (i + j) as f64);
        let labels = (0..n).map(|i| (i % 2) as i64).collect();
        let train = (0..n).map(|i| i < 2).collect();
        let val = (0..n).map(|i| i == 2).collect();
        let test = (0..n).map(|i| i > 2).collect();
        Graph::new(a, f, labels, train, val, test, true).unwrap()
    }

    fn edges(ratio: f64) -> AttackSpec {
        AttackSpec::new(AttackKind::RandomEdges, ratio, 0.0, 5).unwrap()
    }

    #[test]
    fn zero_ratio_is_identity() {
        let g = path_graph(6);
        let h = random_edge_attack(&g, &edges(0.0)).unwrap();
        assert_eq!(l0_distance(&g.adjacency.view(), &h.adjacency.view()).unwrap(), 0);
    }

    #[test]
    fn full_ratio_on_five_edges_changes_ten_entries() {
        let g = path_graph(6);
        assert_eq!(g.undirected_edges().len(), 5);
        let h = random_edge_attack(&g, &edges(1.0)).unwrap();
        assert_eq!(l0_distance(&g.adjacency.view(), &h.adjacency.view()).unwrap(), 10);
        assert!(h.is_binary() && h.is_symmetric());
        assert!(h.adjacency.diag().iter().all(|&x| x == 0.0));
        // Never removes edges.
        assert!(g.adjacency.iter().zip(h.adjacency.iter()).all(|(a, b)| *b >= *a));
        assert_eq!(
            (h.labels.clone(), h.train_mask.clone()),
            (g.labels.clone(), g.train_mask.clone())
        );
    }

    #[test]
    fn edge_budget_is_exact_for_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(4..12);
            let a = random_binary_symmetric(&mut rng, n, 0.3);
            let g = Graph::unlabeled(a, Array2::zeros((n, 1))).unwrap();
            let m = g.undirected_edges().len();
            let ratio = rng.random_range(0.0..1.0);
            let spec = AttackSpec::new(AttackKind::RandomEdges, ratio, 0.0, rng.random()).unwrap();
            match random_edge_attack(&g, &spec) {
                Ok(h) => {
                    let expected = 2 * (ratio * m as f64).floor() as usize;
                    assert_eq!(l0_distance(&g.adjacency.view(), &h.adjacency.view()).unwrap(), expected);
                    assert_eq!(
                        l1_vec_distance(&g.adjacency.view(), &h.adjacency.view()).unwrap(),
                        expected as f64
                    );
                }
                Err(CsgnnError::NotEnoughNonEdges { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn too_many_edges_requested() {
        let mut a = Array2::from_elem((3, 3), 1.0);
        a[[0, 1]] = 0.0;
        a[[1, 0]] = 0.0;
        for i in 0..3 {
            a[[i, i]] = 0.0;
        }
        let g = Graph::unlabeled(a, Array2::zeros((3, 1))).unwrap();
        assert!(matches!(
            random_edge_attack(&g, &edges(1.0)),
            Err(CsgnnError::NotEnoughNonEdges {
                requested: 2,
                available: 1
            })
        ));
        let weighted = Graph::unlabeled(array![[0.0, 0.5], [0.5, 0.0]], Array2::zeros((2, 1))).unwrap();
        assert!(random_edge_attack(&weighted, &edges(1.0)).is_err());
    }

    #[test]
    fn feature_noise_budget() {
        let g = path_graph(5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = AttackSpec::new(AttackKind::FeatureNoise, 0.0, 0.0, 0).unwrap();
        assert_eq!(feature_noise_attack(&g, &zero, &mut rng).unwrap(), g);
        for eps in [1e-3, 0.5, 7.0] {
            let spec = AttackSpec::new(AttackKind::FeatureNoise, 0.0, eps, 0).unwrap();
            let h = feature_noise_attack(&g, &spec, &mut rng).unwrap();
            let d = frobenius_distance(&g.features.view(), &h.features.view()).unwrap();
            assert!(d < eps);
            assert!((d - eps * (1.0 - FEATURE_NOISE_SHRINK)).abs() <= 1e-12 * eps);
            assert_eq!(h.adjacency, g.adjacency);
        }
        let spec = AttackSpec::new(AttackKind::FeatureNoise, 0.0, 1.0, 3).unwrap();
        assert_eq!(apply_attack(&g, &spec).unwrap(), apply_attack(&g, &spec).unwrap());
        assert!(AttackSpec::new(AttackKind::Both, -0.1, 0.0, 0).is_err());
    }

    #[test]
    fn gcn_single_node_identity() {
        let g = Graph::unlabeled(array![[0.0]], array![[0.5, 2.0]]).unwrap();
        let w = GcnParams {
            w1: Array2::eye(2),
            w2: Array2::eye(2),
        };
        assert_eq!(gcn_baseline_forward(&g, &w).unwrap(), array![[0.5, 2.0]]);
    }

    #[test]
    fn gcn_matches_dense_oracle_and_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let a = random_binary_symmetric(&mut rng, n, 0.4);
        let g = Graph::unlabeled(a.clone(), random_matrix(&mut rng, n, 3, 1.0)).unwrap();
        let w = GcnParams {
            w1: random_matrix(&mut rng, 3, 4, 1.0),
            w2: random_matrix(&mut rng, 4, 2, 1.0),
        };
        // Oracle with explicit loops.
        let deg: Vec<f64> = (0..n).map(|i| 1.0 + a.row(i).sum()).collect();
        let mut a_hat = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let aij = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
                a_hat[[i, j]] = aij / (deg[i] * deg[j]).sqrt();
            }
        }
        let mut h = Array2::<f64>::zeros((n, 4));
        for i in 0..n {
            for k in 0..4 {
                let mut s = 0.0;
                for j in 0..n {
                    for c in 0..3 {
                        s += a_hat[[i, j]] * g.features[[j, c]] * w.w1[[c, k]];
                    }
                }
                h[[i, k]] = s.max(0.0);
            }
        }
        let oracle = a_hat.dot(&h).dot(&w.w2);
        let got = gcn_baseline_forward(&g, &w).unwrap();
        assert!((&got - &oracle).iter().all(|d| d.abs() < 1e-12));

        let p = Permutation::random(n, &mut rng);
        let pg = crate::graph::permute_graph(&g, &p).unwrap();
        let lhs = gcn_baseline_forward(&pg, &w).unwrap();
        let rhs = p.permute_rows(&got.view()).unwrap();
        assert!((&lhs - &rhs).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn gcn_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5;
        let a_hat = normalized_adjacency(&random_binary_symmetric(&mut rng, n, 0.5).view()).unwrap();
        let f = random_matrix(&mut rng, n, 3, 1.0);
        let w = GcnParams {
            w1: random_matrix(&mut rng, 3, 4, 1.0),
            w2: random_matrix(&mut rng, 4, 2, 1.0),
        };
        let labels = vec![0, 1, 1, 0, 1];
        let mask = vec![true; n];
        let loss = |w: &GcnParams| {
            let z = gcn_logits(&a_hat.view(), &f.view(), w).unwrap();
            masked_cross_entropy(&z.view(), &labels, &mask).unwrap()
        };
        let (z, t) = gcn_forward_train(&a_hat.view(), &f.view(), &w, 0.0, &mut rng).unwrap();
        let (_, g) = masked_cross_entropy_with_grad(&z.view(), &labels, &mask).unwrap();
        let grads = gcn_backward(&a_hat.view(), &w, &t, &g.view());
        let step = 1e-6;
        for (which, analytic) in [(0, &grads.w1), (1, &grads.w2)] {
            for idx in 0..analytic.len() {
                let mut plus = w.clone();
                let mut minus = w.clone();
                let (p, m) = if which == 0 {
                    (&mut plus.w1, &mut minus.w1)
                } else {
                    (&mut plus.w2, &mut minus.w2)
                };
                p.as_slice_mut().unwrap()[idx] += step;
                m.as_slice_mut().unwrap()[idx] -= step;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
                let an = analytic.as_slice().unwrap()[idx];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn empty_spec_list_gives_header_only() {
        let g = path_graph(6);
        let rows = evaluate_robustness(&g, &[], &[ModelConfig::Gcn(GcnConfig::default())], &PROTOCOL_SEEDS).unwrap();
        assert!(rows.is_empty());
        assert_eq!(
            results_csv(&rows),
            "model,attack_kind,budget,seed_count,mean_acc,std_acc\n"
        );
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
