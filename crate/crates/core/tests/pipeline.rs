use csgnn_core::graph::permute_graph;
use csgnn_core::io::{checkpoint_from_str, checkpoint_to_string, read_graph, write_graph};
use csgnn_core::robustness::apply_attack;
use csgnn_core::{
    forward, gen_sbm, run_all, ArchConfig, AttackKind, AttackSpec, Mode, NetworkParams, Parameterization, Permutation,
    SbmConfig, VerifyConfig,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_sbm(n: usize, seed: u64) -> csgnn_core::Graph {
    let cfg = SbmConfig {
        n,
        feat_dim: 6,
        ..SbmConfig::default()
    };
    gen_sbm(&cfg, seed).unwrap()
}

fn init_params(g: &csgnn_core::Graph, parameterization: Parameterization, seed: u64) -> NetworkParams {
    let arch = ArchConfig {
        hidden: 5,
        parameterization,
        ..ArchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetworkParams::init(&arch, g.feature_dim(), g.num_classes(), &g.adjacency.view(), &mut rng).unwrap()
}

fn eval_logits(g: &csgnn_core::Graph, params: &NetworkParams) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    forward(g, params, Mode::Eval, &mut rng).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_graph_survives_disk_round_trip(n in 4usize..40, seed in any::<u64>()) {
        let g = small_sbm(n, seed);
        let dir = tempfile::tempdir().unwrap();
        write_graph(dir.path(), &g).unwrap();
        prop_assert_eq!(read_graph(dir.path()).unwrap(), g);
    }

    #[test]
    fn checkpoint_round_trip_preserves_logits(seed in any::<u64>(), learn_k in any::<bool>()) {
        let g = small_sbm(20, seed);
        let p = if learn_k { Parameterization::IdentityWLearnK } else { Parameterization::LearnWIdentityK };
        let params = init_params(&g, p, seed);
        let restored = checkpoint_from_str(&checkpoint_to_string(&params)).unwrap();
        prop_assert_eq!(&restored, &params);
        prop_assert_eq!(eval_logits(&g, &restored), eval_logits(&g, &params));
    }

    #[test]
    fn edge_attack_adds_exactly_the_budgeted_edges(
        n in 10usize..40,
        ratio in 0.0f64..1.5,
        seed in any::<u64>(),
    ) {
        let g = small_sbm(n, seed);
        let before = g.undirected_edges();
        let spec = AttackSpec::new(AttackKind::RandomEdges, ratio, 0.0, seed).unwrap();
        let attacked = apply_attack(&g, &spec).unwrap();
        let after = attacked.undirected_edges();
        let added = (ratio * before.len() as f64).floor() as usize;
        prop_assert_eq!(after.len(), before.len() + added);
        prop_assert!(before.iter().all(|e| after.contains(e)));
        prop_assert!(attacked.is_symmetric() && attacked.is_binary());
        prop_assert!((0..n).all(|i| attacked.adjacency[[i, i]] == 0.0));
        prop_assert_eq!(&attacked.features, &g.features);
    }

    #[test]
    fn feature_attack_stays_inside_budget(eps in 0.0f64..3.0, seed in any::<u64>()) {
        let g = small_sbm(15, seed);
        let spec = AttackSpec::new(AttackKind::FeatureNoise, 0.0, eps, seed).unwrap();
        let attacked = apply_attack(&g, &spec).unwrap();
        let moved = (&attacked.features - &g.features).mapv(|x| x * x).sum().sqrt();
        prop_assert!(moved <= eps);
        prop_assert_eq!(&attacked.adjacency, &g.adjacency);
    }

    #[test]
    fn network_commutes_with_node_relabeling(seed in any::<u64>(), learn_k in any::<bool>()) {
        let g = small_sbm(18, seed);
        let p = if learn_k { Parameterization::IdentityWLearnK } else { Parameterization::LearnWIdentityK };
        let params = init_params(&g, p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let perm = Permutation::random(g.num_nodes(), &mut rng);
        let moved = eval_logits(&permute_graph(&g, &perm).unwrap(), &params);
        let expected = perm.permute_rows(&eval_logits(&g, &params).view()).unwrap();
        let gap = (&moved - &expected).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(gap <= 1e-10, "gap {}", gap);
    }
}

#[test]
fn every_verify_suite_passes_on_two_seeds() {
    for seed in [0, 1] {
        let report = run_all(&VerifyConfig {
            seed,
            ..VerifyConfig::default()
        })
        .unwrap();
        assert!(report.passed(), "{report}");
    }
}
