//! Property tests over randomly drawn scenes and filters.

use idanse::danse::{assemble_observation, fuse, DanseState};
use idanse::idanse::{idanse_cycle, network_wide_filter, theorem1_gap};
use idanse::linalg::{self, CMat, C64};
use idanse::metrics::expected_mse;
use idanse::scene::{generate_scene, NodeLayout, SceneConfig};
use idanse::scm::OnlineScm;
use idanse::wola::{self, WolaConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cnormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn scene_config() -> impl Strategy<Value = SceneConfig> {
    (2usize..=4, 1usize..=2, 0usize..=2, any::<u64>()).prop_flat_map(|(k, s, n, seed)| {
        let j = s + n;
        (
            prop::collection::vec(j..=6, k),
            prop::collection::vec(0usize..=2, k),
            prop::collection::vec(0usize..=2, k),
        )
            .prop_map(move |(sensors, ld, ln)| SceneConfig {
                sensors,
                global_desired: s,
                local_desired: ld,
                global_noise: n,
                local_noise: ln,
                target_channels: j,
                target_snr_db: 0.0,
                sensor_noise_frac: 0.1,
                seed,
                frame_len: 1,
                frames: 1,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_shot_reaches_centralized(cfg in scene_config()) {
        let j = cfg.target_channels;
        let gap = theorem1_gap(&cfg, j).unwrap();
        prop_assert!(gap.max < 1e-8, "gap {}", gap.max);
    }

    #[test]
    fn cycle_has_no_hidden_state(cfg in scene_config()) {
        let scene = generate_scene(&cfg).unwrap();
        let scms = scene.true_scms();
        let a = idanse_cycle(&scms, scene.targets(), cfg.target_channels).unwrap();
        let b = idanse_cycle(&scms, scene.targets(), cfg.target_channels).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.network_wide, &y.network_wide);
        }
    }

    #[test]
    fn fused_route_equals_network_wide_route(
        sizes in prop::collection::vec(2usize..=5, 2..=4),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = NodeLayout::new(sizes);
        let j = 2;
        let fusion: Vec<CMat> = layout.sizes().iter().map(|&m| cnormal(&mut rng, m, j)).collect();
        let y = cnormal(&mut rng, layout.total(), 3);
        let locals: Vec<CMat> = (0..layout.nodes()).map(|q| layout.node_rows(q, &y)).collect();
        let fused: Vec<CMat> = locals.iter().zip(&fusion).map(|(l, p)| fuse(p, l).unwrap()).collect();
        for k in 0..layout.nodes() {
            let tilde = cnormal(&mut rng, layout.size(k) + j * (layout.nodes() - 1), j);
            let nw = network_wide_filter(&layout, k, &fusion, &tilde).unwrap();
            let obs = assemble_observation(k, &locals[k], &fused).unwrap();
            let diff = tilde.ad_mul(&obs) - nw.ad_mul(&y);
            prop_assert!(diff.norm() < 1e-12 * y.norm());
        }
    }

    #[test]
    fn danse_updates_never_hurt_the_updating_node(cfg in scene_config()) {
        let scene = generate_scene(&cfg).unwrap();
        let scms = scene.true_scms();
        let layout = scene.layout().clone();
        let targets = scene.targets().to_vec();
        let mse = |state: &DanseState, k: usize| {
            expected_mse(&state.network_wide(k), &scms, &targets[k].network(&layout, k))
        };
        let mut state = DanseState::new(layout.clone(), targets.clone(), cfg.target_channels).unwrap();
        for _ in 0..5 * layout.nodes() {
            let k = state.next_node();
            let before = mse(&state, k);
            state.step_true(&scms).unwrap();
            prop_assert!(mse(&state, k) <= before * (1.0 + 1e-9));
        }
    }

    #[test]
    fn online_innovation_scales_with_squared_gain(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = cnormal(&mut rng, 3, 4);
        let mut plain = OnlineScm::new(3, 0.9);
        let mut scaled = OnlineScm::new(3, 0.9);
        plain.update(&frame).unwrap();
        scaled.update(&(&frame * C64::new(c, 0.0))).unwrap();
        let expected = plain.state() * C64::new(c * c, 0.0);
        prop_assert!(linalg::rel_frobenius(scaled.state(), &expected) < 1e-12);
    }

    #[test]
    fn wola_reconstructs_interior(seed in any::<u64>(), frames in 4usize..20, quarter in any::<bool>()) {
        let cfg = WolaConfig { frame_len: 64, overlap: if quarter { 0.75 } else { 0.5 } };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = frames * 64;
        let x = DMatrix::<f64>::from_fn(2, n, |_, _| rng.sample(StandardNormal));
        let y = wola::synthesize(&wola::analyze(&x, &cfg).unwrap()).unwrap();
        for c in 0..2 {
            for t in 64..y.ncols() - 64 {
                prop_assert!((y[(c, t)] - x[(c, t)]).abs() < 1e-10);
            }
        }
    }
}

/// Without global noise and local desired sources, each node's block of the
/// centralized filter lies in the column space of that node's fusion filter.
#[test]
fn centralized_blocks_share_fusion_column_space() {
    let cfg = SceneConfig::uniform(3, 5, 2, 0, 0, 2, 2).with_seed(31);
    let scene = generate_scene(&cfg).unwrap();
    let scms = scene.true_scms();
    let layout = scene.layout();
    let results = idanse_cycle(&scms, scene.targets(), 2).unwrap();
    for k in 0..3 {
        let central = idanse::filters::centralized_filter(&scms, k, &scene.targets()[k]).unwrap().w;
        for q in (0..3).filter(|&q| q != k) {
            let block = layout.node_rows(q, &central);
            let angle = linalg::max_principal_angle(&block, &results[q].fusion);
            assert!(angle < 1e-6, "node {k}, block {q}: {angle}");
        }
    }
}

/// With fewer fused channels than global sources the one-shot result is not
/// optimal on a generic scene.
#[test]
fn too_few_fused_channels_leave_a_gap() {
    let cfg = SceneConfig::uniform(3, 4, 1, 1, 1, 1, 2).with_seed(32);
    let gap = theorem1_gap(&cfg, 1).unwrap();
    assert!(gap.max > 1e-6, "gap {}", gap.max);
}

/// Sample SCMs of generated frames converge to the analytic ones.
#[test]
fn scene_statistics_match_true_scms() {
    let mut cfg = SceneConfig::uniform(2, 3, 1, 1, 1, 1, 1).with_seed(33);
    cfg.frame_len = 200_000;
    let scene = generate_scene(&cfg).unwrap();
    let frame = scene.frame(0);
    let n = C64::new(cfg.frame_len as f64, 0.0);
    let scms = scene.true_scms();
    let rss = linalg::gram(&frame.desired()) / n;
    let rnn = linalg::gram(&frame.noise()) / n;
    assert!(linalg::rel_frobenius(&rss, &scms.rss) < 2e-2);
    assert!(linalg::rel_frobenius(&rnn, &scms.rnn) < 2e-2);
}
