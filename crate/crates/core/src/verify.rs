//! Randomized property suites over the adjacency step, the feature step,
//! the coupled network and the gradients. Each suite draws from its own
//! seeded stream, so results do not depend on execution order.

use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::activation::LeakyRelu;
use crate::adjacency::{
    adjacency_step_unchecked, build_t, equivariant_linear, jacobian_l1_probe, max_step_adjacency, operator_l1_norm,
    vec_col_major, AdjacencyStepConfig,
};
use crate::error::{CsgnnError, Result};
use crate::features::{energy, feature_step, safe_feature_step, LayerParams};
use crate::graph::{l0_distance, l1_vec_distance, Permutation, PerturbationBudget};
use crate::linalg::{frobenius_norm, l1_norm};
use crate::network::{
    expansivity_bound, mixed_lipschitz_upper, propagate, weighted_distance, LayerBlock, NetworkParams,
};
use crate::sampling::{random_binary_symmetric, random_coeffs, random_matrix, random_spd, random_symmetric};
use crate::train::gradcheck::gradient_check_trials;

pub const CONTRACTION_TRIALS: usize = 1000;
pub const EQUIVARIANCE_TRIALS: usize = 1000;
pub const T_MATRIX_TRIALS: usize = 200;
pub const PROBE_POINTS: usize = 100;
pub const FEATURE_TRIALS: usize = 1000;
pub const DISTANCE_TRIALS: usize = 1000;
pub const COUPLED_TRIALS: usize = 200;
pub const EXPANSIVITY_TRIALS: usize = 200;
pub const GRADIENT_TRIALS: usize = 50;

pub const CONTRACTION_SLACK: f64 = 1e-9;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const T_CONSISTENCY_TOL: f64 = 1e-10;
pub const T_NORM_SLACK: f64 = 1e-12;
pub const PROBE_SLACK: f64 = 1e-6;
pub const FEATURE_SLACK: f64 = 1e-9;
pub const EXPANSIVITY_SLACK: f64 = 1e-7;
pub const GRADIENT_TOL: f64 = 1e-5;
/// Largest tolerated failure fraction of the coupled weighted-distance check.
pub const COUPLED_FAILURE_FRACTION: f64 = 0.05;

/// Exponents `j` of the weights `10^j` searched by the coupled check.
const WEIGHT_EXPONENTS: std::ops::RangeInclusive<i32> = -3..=3;

/// Activation slope used by every suite.
const SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Multiplies the adjacency step in the contraction and probe suites.
    /// Values above 1 step past the contractive bound.
    pub fault_step_scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fault_step_scale: 1.0,
        }
    }
}

impl VerifyConfig {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Outcome of one suite. `worst` is the largest observed value of the
/// checked quantity; a trial violates when it exceeds `limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub id: &'static str,
    pub trials: usize,
    pub violations: usize,
    pub worst: f64,
    pub limit: f64,
    pub passed: bool,
    pub note: String,
}

impl SuiteResult {
    fn from_values(id: &'static str, values: &[f64], limit: f64, note: String) -> Self {
        let violations = values.iter().filter(|&&v| !(v <= limit)).count();
        let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            id,
            trials: values.len(),
            violations,
            worst,
            limit,
            passed: violations == 0 && !values.is_empty(),
            note,
        }
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} trials={} violations={} worst={:.6e} limit={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.trials,
            self.violations,
            self.worst,
            self.limit
        )?;
        if !self.note.is_empty() {
            write!(f, " {}", self.note)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub fault_step_scale: f64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn suite(&self, id: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.id == id)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed={} fault_step_scale={}", self.seed, self.fault_step_scale)?;
        for s in &self.suites {
            writeln!(f, "{s}")?;
        }
        let failed = self.suites.iter().filter(|s| !s.passed).count();
        writeln!(f, "summary suites={} failed={}", self.suites.len(), failed)
    }
}

type Suite = fn(&VerifyConfig) -> Result<SuiteResult>;

/// Every suite in report order.
pub const SUITES: &[(&str, Suite)] = &[
    ("adjacency-l1-contraction", adjacency_l1_contraction),
    ("adjacency-equivariance", adjacency_equivariance),
    ("adjacency-symmetry", adjacency_symmetry),
    ("t-matrix-consistency", t_matrix_consistency),
    ("t-matrix-norm-bound", t_matrix_norm_bound),
    ("adjacency-jacobian-probe", adjacency_jacobian_probe),
    ("feature-contraction", feature_contraction),
    ("feature-energy-descent", feature_energy_descent),
    ("binary-l0-equals-l1", binary_l0_equals_l1),
    ("l1-min-gap-bound", l1_min_gap_bound),
    ("coupled-weighted-contraction", coupled_weighted_contraction),
    ("expansivity-bound", expansivity_bound_trials),
    ("gradient-check", gradient_check_suite),
];

/// Runs every suite, in parallel across suites.
pub fn run_all(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let suites = SUITES
        .par_iter()
        .map(|(_, suite)| suite(cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        seed: cfg.seed,
        fault_step_scale: cfg.fault_step_scale,
        suites,
    })
}

fn activation() -> LeakyRelu {
    LeakyRelu::new(SLOPE).expect("valid slope")
}

/// Random admissible adjacency step with `h = scale · ĥ`. The guard is
/// bypassed so that `scale > 1` can be exercised.
fn random_step_config<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> AdjacencyStepConfig {
    let k_scale = rng.random_range(0.05..=1.0);
    let coeffs = random_coeffs(rng, k_scale, -2.0, SLOPE);
    let h_max = max_step_adjacency(&coeffs).expect("nonzero coefficients");
    AdjacencyStepConfig {
        coeffs,
        h: h_max * scale,
        activation: activation(),
    }
}

fn relative(diff: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    frobenius_norm(&diff.view()) / frobenius_norm(&reference.view()).max(1e-300)
}

/// `‖Ψ(A) − Ψ(A*)‖₁ − ‖A − A*‖₁` at `h = ĥ`.
pub fn adjacency_l1_contraction(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(1);
    let mut values = Vec::with_capacity(CONTRACTION_TRIALS);
    for _ in 0..CONTRACTION_TRIALS {
        let n = rng.random_range(3..=8);
        let step = random_step_config(&mut rng, cfg.fault_step_scale);
        let a = random_symmetric(&mut rng, n, 1.0);
        let gap = 10f64.powf(rng.random_range(-3.0..=0.0));
        let a_star = &a + &random_symmetric(&mut rng, n, gap);
        let out = adjacency_step_unchecked(&a.view(), &step)?;
        let out_star = adjacency_step_unchecked(&a_star.view(), &step)?;
        values.push(l1_norm(&(&out - &out_star).view()) - l1_norm(&(&a - &a_star).view()));
    }
    Ok(SuiteResult::from_values(
        "adjacency-l1-contraction",
        &values,
        CONTRACTION_SLACK,
        String::new(),
    ))
}

/// `‖Ψ(PAPᵀ) − PΨ(A)Pᵀ‖_F / ‖PΨ(A)Pᵀ‖_F`.
pub fn adjacency_equivariance(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(2);
    let mut values = Vec::with_capacity(EQUIVARIANCE_TRIALS);
    for _ in 0..EQUIVARIANCE_TRIALS {
        let n = rng.random_range(2..=10);
        let step = random_step_config(&mut rng, 1.0);
        let a = random_matrix(&mut rng, n, n, 1.0);
        let p = Permutation::random(n, &mut rng);
        let lhs = adjacency_step_unchecked(&p.conjugate(&a.view())?.view(), &step)?;
        let rhs = p.conjugate(&adjacency_step_unchecked(&a.view(), &step)?.view())?;
        values.push(relative(&(&lhs - &rhs), &rhs));
    }
    Ok(SuiteResult::from_values(
        "adjacency-equivariance",
        &values,
        EQUIVARIANCE_TOL,
        String::new(),
    ))
}

/// `‖Ψ(A) − Ψ(A)ᵀ‖_F / ‖Ψ(A)‖_F` for symmetric `A`.
pub fn adjacency_symmetry(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(3);
    let mut values = Vec::with_capacity(EQUIVARIANCE_TRIALS);
    for _ in 0..EQUIVARIANCE_TRIALS {
        let n = rng.random_range(2..=10);
        let step = random_step_config(&mut rng, 1.0);
        let a = random_symmetric(&mut rng, n, 1.0);
        let out = adjacency_step_unchecked(&a.view(), &step)?;
        values.push(relative(&(&out - &out.t()), &out));
    }
    Ok(SuiteResult::from_values(
        "adjacency-symmetry",
        &values,
        EQUIVARIANCE_TOL,
        String::new(),
    ))
}

/// `‖vec(M(A)) − T·vec(A)‖_∞`, `n ∈ 2..=5`.
pub fn t_matrix_consistency(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(4);
    let mut values = Vec::with_capacity(T_MATRIX_TRIALS);
    for _ in 0..T_MATRIX_TRIALS {
        let n = rng.random_range(2..=5);
        let coeffs = random_coeffs(&mut rng, 1.0, -2.0, SLOPE);
        let a = random_matrix(&mut rng, n, n, 1.0);
        let m = equivariant_linear(&a.view(), &coeffs)?;
        let t = build_t(&coeffs, n)?;
        let tv = t.dot(&vec_col_major(&a.view()));
        let err = (&vec_col_major(&m.view()) - &tv)
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        values.push(err);
    }
    Ok(SuiteResult::from_values(
        "t-matrix-consistency",
        &values,
        T_CONSISTENCY_TOL,
        String::new(),
    ))
}

/// `‖T − k1·I‖₁ − Σ|k_i|`.
pub fn t_matrix_norm_bound(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(5);
    let mut values = Vec::with_capacity(T_MATRIX_TRIALS);
    for _ in 0..T_MATRIX_TRIALS {
        let n = rng.random_range(2..=5);
        let coeffs = random_coeffs(&mut rng, 1.0, -2.0, SLOPE);
        let t = build_t(&coeffs, n)?;
        let off = &t - &(Array2::<f64>::eye(n * n) * coeffs.k1());
        values.push(operator_l1_norm(&off.view()) - coeffs.abs_sum());
    }
    Ok(SuiteResult::from_values(
        "t-matrix-norm-bound",
        &values,
        T_NORM_SLACK,
        String::new(),
    ))
}

/// Finite-difference `‖DΨ‖₁ − 1` at smooth random points, `h = ĥ`.
/// Points within the kink tolerance are redrawn.
pub fn adjacency_jacobian_probe(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(6);
    let mut values = Vec::with_capacity(PROBE_POINTS);
    let mut redrawn = 0;
    while values.len() < PROBE_POINTS {
        let n = rng.random_range(3..=8);
        let step = random_step_config(&mut rng, cfg.fault_step_scale);
        let a = random_symmetric(&mut rng, n, 1.0);
        match jacobian_l1_probe(&a.view(), &step) {
            Ok(norm) => values.push(norm - 1.0),
            Err(CsgnnError::NonSmoothPoint { .. }) => redrawn += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(SuiteResult::from_values(
        "adjacency-jacobian-probe",
        &values,
        PROBE_SLACK,
        format!("redrawn={redrawn}"),
    ))
}

/// Random graph for the feature suites: binary or real-weighted.
fn random_feature_graph<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Array2<f64> {
    let a = random_binary_symmetric(rng, n, 0.5);
    if rng.random_bool(0.5) {
        a
    } else {
        let w = random_symmetric(rng, n, 1.0).mapv(f64::abs);
        a * w
    }
}

/// `‖Ψ(F + δ) − Ψ(F)‖_F − ‖δ‖_F` for `learn_w` layers with `K = λI` and
/// `h = h_safe`.
pub fn feature_contraction(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(7);
    let act = activation();
    let mut values = Vec::with_capacity(FEATURE_TRIALS);
    for _ in 0..FEATURE_TRIALS {
        let n = rng.random_range(2..=8);
        let c = rng.random_range(1..=4);
        let a = random_feature_graph(&mut rng, n);
        let lambda = rng.random_range(0.1..=2.0);
        let w = random_matrix(&mut rng, c, c, 1.0);
        let mut layer = LayerParams::learn_w(w, lambda, 0.0)?;
        layer.h = safe_feature_step(&a.view(), &layer)? * cfg.fault_step_scale;
        let f = random_matrix(&mut rng, n, c, 1.0);
        let gap = 10f64.powf(rng.random_range(-3.0..=0.0));
        let df = random_matrix(&mut rng, n, c, gap);
        let base = feature_step(&f.view(), &a.view(), &layer, act)?;
        let moved = feature_step(&(&f + &df).view(), &a.view(), &layer, act)?;
        values.push(frobenius_norm(&(&moved - &base).view()) - frobenius_norm(&df.view()));
    }
    Ok(SuiteResult::from_values(
        "feature-contraction",
        &values,
        FEATURE_SLACK,
        String::new(),
    ))
}

/// `E(Ψ(F)) − E(F)` under `h = h_safe`, alternating `learn_w` layers with
/// `K = λI` and `learn_k` layers with a random positive definite `K`.
pub fn feature_energy_descent(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(8);
    let act = activation();
    let mut values = Vec::with_capacity(FEATURE_TRIALS);
    for trial in 0..FEATURE_TRIALS {
        let n = rng.random_range(2..=8);
        let c = rng.random_range(1..=4);
        let a = random_feature_graph(&mut rng, n);
        let mut layer = if trial % 2 == 0 {
            let lambda = rng.random_range(0.1..=2.0);
            LayerParams::learn_w(random_matrix(&mut rng, c, c, 1.0), lambda, 0.0)?
        } else {
            let shift = rng.random_range(0.05..=1.0);
            LayerParams::learn_k(random_spd(&mut rng, c, shift), 0.0)?
        };
        layer.h = safe_feature_step(&a.view(), &layer)?;
        let f = random_matrix(&mut rng, n, c, 1.0);
        let next = feature_step(&f.view(), &a.view(), &layer, act)?;
        let before = energy(&a.view(), &f.view(), &layer.w.view(), act)?;
        let after = energy(&a.view(), &next.view(), &layer.w.view(), act)?;
        values.push(after - before);
    }
    Ok(SuiteResult::from_values(
        "feature-energy-descent",
        &values,
        FEATURE_SLACK,
        String::new(),
    ))
}

/// `|ℓ⁰ − ℓ¹|` on random binary pairs, `n ≤ 10`.
pub fn binary_l0_equals_l1(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(9);
    let mut values = Vec::with_capacity(DISTANCE_TRIALS);
    for _ in 0..DISTANCE_TRIALS {
        let n = rng.random_range(1..=10);
        let p = rng.random_range(0.0..=1.0);
        let a = Array2::from_shape_fn((n, n), |_| if rng.random_bool(p) { 1.0 } else { 0.0 });
        let b = Array2::from_shape_fn((n, n), |_| if rng.random_bool(p) { 1.0 } else { 0.0 });
        let l0 = l0_distance(&a.view(), &b.view())? as f64;
        values.push((l0 - l1_vec_distance(&a.view(), &b.view())?).abs());
    }
    Ok(SuiteResult::from_values(
        "binary-l0-equals-l1",
        &values,
        0.0,
        String::new(),
    ))
}

/// `|I|·min_{I}|A − A*| − ‖A − A*‖₁` on random real pairs, where `I` is
/// the set of differing entries.
pub fn l1_min_gap_bound(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(10);
    let mut values = Vec::with_capacity(DISTANCE_TRIALS);
    for _ in 0..DISTANCE_TRIALS {
        let n = rng.random_range(1..=10);
        let a = random_matrix(&mut rng, n, n, 1.0);
        let mut b = a.clone();
        for x in b.iter_mut() {
            if rng.random_bool(0.5) {
                *x += rng.random_range(-1.0..=1.0);
            }
        }
        let gaps: Vec<f64> = a
            .iter()
            .zip(b.iter())
            .filter(|(x, y)| x != y)
            .map(|(x, y)| (x - y).abs())
            .collect();
        let lower = gaps
            .iter()
            .copied()
            .reduce(f64::min)
            .map_or(0.0, |g| g * gaps.len() as f64);
        values.push(lower - l1_vec_distance(&a.view(), &b.view())?);
    }
    Ok(SuiteResult::from_values(
        "l1-min-gap-bound",
        &values,
        1e-12,
        String::new(),
    ))
}

fn contractive_block(feature: LayerParams, adjacency: AdjacencyStepConfig, h: f64) -> LayerBlock {
    let mut block = LayerBlock {
        feature,
        adjacency,
        step_cap: h,
    };
    block.set_step(h);
    block
}

fn single_layer_network(block: LayerBlock, c: usize) -> NetworkParams {
    multi_layer_network(vec![block], c)
}

fn multi_layer_network(layers: Vec<LayerBlock>, c: usize) -> NetworkParams {
    NetworkParams {
        encoder: Array2::eye(c),
        num_layers: layers.len(),
        layers,
        classifier: Array2::eye(c),
        classifier_bias: ndarray::Array1::zeros(c),
        dropout_p: 0.0,
        share_weights: false,
    }
}

/// Whether some weighting `d_{m1,m2}` with `m1, m2 ∈ {10^j}` decreases across
/// one coupled layer on all but a small fraction of trials. Layers use
/// `α < 0`, `K = λI` and half the smaller of the two step bounds.
pub fn coupled_weighted_contraction(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(11);
    let act = activation();
    let weights: Vec<f64> = WEIGHT_EXPONENTS.map(|j| 10f64.powi(j)).collect();
    let pairs: Vec<(f64, f64)> = weights
        .iter()
        .flat_map(|&m1| weights.iter().map(move |&m2| (m1, m2)))
        .collect();
    let mut successes = vec![0usize; pairs.len()];
    for _ in 0..COUPLED_TRIALS {
        let n = rng.random_range(3..=7);
        let c = rng.random_range(1..=4);
        let k_scale = rng.random_range(0.05..=1.0);
        let mut coeffs = random_coeffs(&mut rng, k_scale, -2.0, SLOPE);
        if coeffs.alpha() > -0.1 {
            coeffs = crate::adjacency::EquivariantCoeffs::with_slope(*coeffs.ks(), -0.1, SLOPE)?;
        }
        let a = random_feature_graph(&mut rng, n);
        let a_star = &a + &random_symmetric(&mut rng, n, 0.1);
        let lambda = rng.random_range(0.1..=2.0);
        let feature = LayerParams::learn_w(random_matrix(&mut rng, c, c, 1.0), lambda, 0.0)?;
        let h = 0.5
            * max_step_adjacency(&coeffs)?
                .min(safe_feature_step(&a.view(), &feature)?)
                .min(safe_feature_step(&a_star.view(), &feature)?);
        let block = contractive_block(
            feature,
            AdjacencyStepConfig {
                coeffs,
                h,
                activation: act,
            },
            h,
        );
        let net = single_layer_network(block, c);
        let f = random_matrix(&mut rng, n, c, 1.0);
        let f_star = &f + &random_matrix(&mut rng, n, c, 0.1);
        let (fs, as_) = propagate(&f.view(), &a.view(), &net)?;
        let (fs_star, as_star) = propagate(&f_star.view(), &a_star.view(), &net)?;
        for (slot, &(m1, m2)) in successes.iter_mut().zip(&pairs) {
            let before = weighted_distance(m1, m2, (&f.view(), &a.view()), (&f_star.view(), &a_star.view()))?;
            let after = weighted_distance(
                m1,
                m2,
                (&fs[1].view(), &as_[1].view()),
                (&fs_star[1].view(), &as_star[1].view()),
            )?;
            if after <= before {
                *slot += 1;
            }
        }
    }
    // First pair with the most successes, so ties resolve deterministically.
    let (best, best_count) = successes
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let violations = COUPLED_TRIALS - best_count;
    let fraction = violations as f64 / COUPLED_TRIALS as f64;
    Ok(SuiteResult {
        id: "coupled-weighted-contraction",
        trials: COUPLED_TRIALS,
        violations,
        worst: fraction,
        limit: COUPLED_FAILURE_FRACTION,
        passed: fraction <= COUPLED_FAILURE_FRACTION,
        note: format!("m1={:e} m2={:e}", pairs[best].0, pairs[best].1),
    })
}

/// Result of one end-to-end perturbation trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansivityTrial {
    /// `d_{1,1}` between the clean and perturbed outputs of the dynamics.
    pub distance: f64,
    pub bound: f64,
}

/// Draws a contractive `learn_w` network of depth `1..=3` and a perturbed
/// input, then compares the measured output distance with
/// `ε₁ + ε₂(1 + Σ h_l Lip_l)`. Each `h_l = min(ĥ, h_safe(A*^(l−1)))`, built
/// layer by layer along the perturbed trajectory.
pub fn expansivity_trial<R: Rng + ?Sized>(rng: &mut R) -> Result<ExpansivityTrial> {
    let act = activation();
    let n = rng.random_range(3..=7);
    let c = rng.random_range(1..=4);
    let depth = rng.random_range(1..=3);
    let a = random_binary_symmetric(rng, n, 0.5);
    let a_star = if rng.random_bool(0.5) {
        let mut flipped = a.clone();
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        flipped[[i, j]] = 1.0 - flipped[[i, j]];
        flipped[[j, i]] = flipped[[i, j]];
        flipped
    } else {
        &a + &random_symmetric(rng, n, 0.2)
    };
    let f = random_matrix(rng, n, c, 1.0);
    let f_star = &f + &random_matrix(rng, n, c, 0.2);

    let mut layers = Vec::with_capacity(depth);
    let (mut fc, mut ac) = (f.clone(), a.clone());
    let (mut fp, mut ap) = (f_star.clone(), a_star.clone());
    let eps_adj = l1_norm(&(&a - &a_star).view());
    let mut lips = Vec::with_capacity(depth);
    for _ in 0..depth {
        let k_scale = rng.random_range(0.05..=1.0);
        let coeffs = random_coeffs(rng, k_scale, -2.0, SLOPE);
        let lambda = rng.random_range(0.1..=2.0);
        let feature = LayerParams::learn_w(random_matrix(rng, c, c, 1.0), lambda, 0.0)?;
        let h = max_step_adjacency(&coeffs)?.min(safe_feature_step(&ap.view(), &feature)?);
        let block = contractive_block(
            feature,
            AdjacencyStepConfig {
                coeffs,
                h,
                activation: act,
            },
            h,
        );
        let adj_bound = ac.iter().fold(0.0f64, |m, x| m.max(x.abs())) + eps_adj;
        lips.push(mixed_lipschitz_upper(&fc.view(), &block.feature, adj_bound)?);
        let net = single_layer_network(block.clone(), c);
        let (fs, as_) = propagate(&fc.view(), &ac.view(), &net)?;
        let (fs_star, as_star) = propagate(&fp.view(), &ap.view(), &net)?;
        fc = fs[1].clone();
        ac = as_[1].clone();
        fp = fs_star[1].clone();
        ap = as_star[1].clone();
        layers.push(block);
    }
    let net = multi_layer_network(layers, c);
    let (fs, as_) = propagate(&f.view(), &a.view(), &net)?;
    let (fs_star, as_star) = propagate(&f_star.view(), &a_star.view(), &net)?;
    let distance = weighted_distance(
        1.0,
        1.0,
        (&fs[depth].view(), &as_[depth].view()),
        (&fs_star[depth].view(), &as_star[depth].view()),
    )?;
    let budget = PerturbationBudget::new(frobenius_norm(&(&f - &f_star).view()), eps_adj)?;
    let bound = expansivity_bound(&net.steps(), &lips, &budget)?;
    Ok(ExpansivityTrial { distance, bound })
}

/// `d_{1,1}(𝒟(F,A), 𝒟(F*,A*)) − bound` over random contractive networks.
pub fn expansivity_bound_trials(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(12);
    let mut values = Vec::with_capacity(EXPANSIVITY_TRIALS);
    for _ in 0..EXPANSIVITY_TRIALS {
        let t = expansivity_trial(&mut rng)?;
        values.push(t.distance - t.bound);
    }
    Ok(SuiteResult::from_values(
        "expansivity-bound",
        &values,
        EXPANSIVITY_SLACK,
        String::new(),
    ))
}

/// Largest per-tensor relative error of reverse mode against central
/// differences, `n ≤ 8`, `L ≤ 3`.
pub fn gradient_check_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = cfg.rng(13);
    let (reports, redrawn) = gradient_check_trials(&mut rng, GRADIENT_TRIALS, 8, 3)?;
    let values: Vec<f64> = reports.iter().map(|r| r.max_rel_error).collect();
    Ok(SuiteResult::from_values(
        "gradient-check",
        &values,
        GRADIENT_TOL,
        format!("redrawn={redrawn}"),
    ))
}
