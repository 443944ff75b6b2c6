mod common;

use proptest::prelude::*;

mod scenario {
    use super::*;
    use tvfl_core::scenario::{generate_dataset, terrain_height, ScenarioConfig, LABEL_DIM};

    fn small(seed: u64, num_su: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::with_num_su(num_su);
        c.num_samples = 24;
        c.train_count = 16;
        c.minislots_per_slot = 20;
        c.rng_seed = seed;
        c
    }

    proptest! {
        #[test]
        fn terrain_is_bounded(x in -1e4f64..1e4, y in -1e4f64..1e4) {
            let h = terrain_height(x, y);
            prop_assert!((-20.0..=20.0).contains(&h));
        }

        #[test]
        fn labels_and_rss_respect_the_world(seed in any::<u64>(), num_su in 1usize..6) {
            let ds = generate_dataset(&small(seed, num_su)).unwrap();
            let side = ds.config.area_side;
            for i in 0..ds.len() {
                let y = ds.labels.row(i);
                prop_assert_eq!(y.len(), LABEL_DIM);
                for p in &y[..2] {
                    prop_assert!(ds.config.power_levels.contains(p));
                }
                for pu in 0..2 {
                    let (px, py, pz) = (y[2 + 3 * pu], y[3 + 3 * pu], y[4 + 3 * pu]);
                    prop_assert!((0.0..=side).contains(&px) && (0.0..=side).contains(&py));
                    prop_assert_eq!(pz, terrain_height(px, py));
                }
                for k in 0..num_su {
                    let f = ds.features[k].row(i);
                    prop_assert_eq!(f[2], terrain_height(f[0], f[1]));
                    prop_assert!(f[3..].iter().all(|&r| r > 0.0));
                }
            }
        }

        #[test]
        fn generation_is_pure(seed in any::<u64>()) {
            let c = small(seed, 3);
            prop_assert_eq!(generate_dataset(&c).unwrap(), generate_dataset(&c).unwrap());
        }

        #[test]
        fn stats_ignore_the_test_rows(seed in any::<u64>()) {
            let c = small(seed, 2);
            let full = generate_dataset(&c).unwrap();
            let mut shorter = c.clone();
            shorter.num_samples = c.train_count + 1;
            let cut = generate_dataset(&shorter).unwrap();
            prop_assert_eq!(&full.stats, &cut.stats);
            prop_assert_eq!(full.test_count(), c.num_samples - c.train_count);
        }
    }
}

mod nn {
    use super::*;
    use rand::seq::SliceRandom;
    use tvfl_core::nn::{grad_block_weights, loss, mse, Activation, LossSpec, NetSpec, SplitNet};

    proptest! {
        #[test]
        fn block_weights_form_a_distribution(norms in prop::collection::vec(0.0f64..1e6, 1..9)) {
            match grad_block_weights(&norms) {
                None => prop_assert!(norms.iter().all(|&n| n == 0.0)),
                Some(w) => {
                    prop_assert!(w.iter().all(|&v| v >= 0.0));
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn loss_ignores_sample_order(seed in any::<u64>(), rows in 1usize..12) {
            let mut rng = common::rng(seed);
            let spec = common::random_small_spec(&mut rng);
            let net = SplitNet::new(spec.clone(), seed).unwrap();
            let x = common::random_features(&spec, rows, &mut rng);
            let y = common::random_matrix(rows, spec.output_dim(), 2.0, &mut rng);
            let mut order: Vec<usize> = (0..rows).collect();
            order.shuffle(&mut rng);
            let xs: Vec<_> = x.iter().map(|m| m.select_rows(&order)).collect();
            let ys = y.select_rows(&order);
            let spec_l = LossSpec { lambda: 0.01 };
            let a = loss(&net.predict(&x).unwrap(), &y, &net, &spec_l).unwrap();
            let b = loss(&net.predict(&xs).unwrap(), &ys, &net, &spec_l).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn tiny_steps_do_not_increase_the_loss() {
        let mut increases = 0;
        let trials = 200;
        for seed in 0..trials {
            let mut rng = common::rng(seed);
            let mut spec = common::random_small_spec(&mut rng);
            spec.hidden = Activation::Identity;
            let mut net = SplitNet::new(spec.clone(), seed).unwrap();
            let x = common::random_features(&spec, 8, &mut rng);
            let y = common::random_matrix(8, spec.output_dim(), 2.0, &mut rng);
            let (before, g) = net.gradient(&x, &y, &LossSpec::default()).unwrap();
            net.apply(&g, 1e-6);
            let after = mse(&net.predict(&x).unwrap(), &y).unwrap();
            if after > before {
                increases += 1;
            }
        }
        assert_eq!(increases, 0, "{increases}/{trials} trials increased the loss");
    }

    #[test]
    fn presets_chain_widths() {
        for k in [1, 4, 8] {
            for spec in [NetSpec::network_i(k, 64), NetSpec::network_ii(k)] {
                spec.validate().unwrap();
                assert_eq!(spec.central_arch[0], k * spec.local_output_dim());
            }
        }
    }
}

mod channel {
    use super::*;
    use tvfl_core::channel::{
        align_to_weakest, exp_integral_e1, inv_exp_integral, received_power, truncated_inversion,
        uplink_rate,
    };

    proptest! {
        #[test]
        fn inversion_hits_the_target_power(
            rho in 1e-14f64..1e-6,
            h2 in 0.0f64..20.0,
            g in 0.01f64..5.0,
            p in 0.01f64..10.0,
        ) {
            let inv = truncated_inversion(rho, h2, g, p).unwrap();
            prop_assert_eq!(inv.active, h2 >= g);
            if inv.active {
                let target = received_power(rho, p, g).unwrap();
                let got = inv.power_sq * rho * h2;
                prop_assert!((got - target).abs() <= 4.0 * f64::EPSILON * target);
            } else {
                prop_assert_eq!(inv.power_sq, 0.0);
            }
        }

        #[test]
        fn aligned_rates_agree(
            rho in prop::collection::vec(1e-10f64..1e-8, 1..10),
            g in 0.05f64..4.0,
        ) {
            let (w, gs) = align_to_weakest(&rho, g).unwrap();
            prop_assert_eq!(gs[w], g);
            let rates: Vec<f64> = rho
                .iter()
                .zip(&gs)
                .map(|(&r, &gk)| uplink_rate(1e6, received_power(r, 0.1, gk).unwrap(), 1e-11))
                .collect();
            for r in &rates {
                prop_assert!((r - rates[w]).abs() <= 1e-10 * rates[w]);
            }
            for (k, &gk) in gs.iter().enumerate() {
                prop_assert!(gk <= g || k == w);
            }
        }

        #[test]
        fn e1_round_trips(g in 0.05f64..5.0) {
            let back = inv_exp_integral(exp_integral_e1(g).unwrap()).unwrap();
            prop_assert!((back - g).abs() < 1e-6);
        }

        #[test]
        fn e1_is_decreasing(a in 1e-4f64..40.0, b in 1e-4f64..40.0) {
            prop_assume!(a < b);
            prop_assert!(exp_integral_e1(a).unwrap() > exp_integral_e1(b).unwrap());
        }
    }
}

mod trainer {
    use super::*;
    use tvfl_core::bounds::empirical_v;
    use tvfl_core::experiment::{init_network, uplink_channel, ScaleProfile};
    use tvfl_core::nn::{LossSpec, SplitNet};
    use tvfl_core::scenario::generate_dataset;
    use tvfl_core::trainer::{run_round, train, Batch, StaleCache};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn silenced_sus_keep_their_parameters(seed in any::<u64>(), mask in 0u8..8) {
            let mut rng = common::rng(seed);
            let mut spec = common::random_small_spec(&mut rng);
            spec.num_su = 3;
            spec.central_arch[0] = 3 * spec.local_output_dim();
            let mut net = SplitNet::new(spec.clone(), seed).unwrap();
            let rows = 6;
            let features = common::random_features(&spec, rows, &mut rng);
            let labels = common::random_matrix(rows, spec.output_dim(), 2.0, &mut rng);
            let batch = Batch { rows: (0..rows).collect(), features, labels };
            let mut cache = StaleCache::new(3, rows, spec.local_output_dim());
            run_round(&mut net, &batch, &[true; 3], &mut cache, 0, 1e-2, &LossSpec::default(), false).unwrap();
            let active: Vec<bool> = (0..3).map(|k| mask & (1 << k) != 0).collect();
            let before = net.clone();
            let step = run_round(&mut net, &batch, &active, &mut cache, 1, 1e-2, &LossSpec::default(), true).unwrap();
            for (k, &on) in active.iter().enumerate() {
                if !on {
                    prop_assert_eq!(&net.locals[k], &before.locals[k]);
                    prop_assert_eq!(cache.refreshed_at(k, 0), Some(0));
                } else {
                    prop_assert_eq!(cache.refreshed_at(k, 0), Some(1));
                }
            }
            if let Some(w) = step.block_weights {
                prop_assert_eq!(w.len(), 4);
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn logged_runs_satisfy_the_round_invariants() {
        let profile = ScaleProfile::by_name("ci").unwrap();
        let mut scenario = profile.scenario(4, 3);
        scenario.num_samples = 90;
        scenario.train_count = 60;
        let ds = generate_dataset(&scenario).unwrap();
        for (alpha, seed) in [(0.9, 1), (0.3, 2), (0.1, 3)] {
            let mut cfg = profile.train_config(alpha, seed);
            cfg.rounds = 60;
            cfg.v_probe_every = 1;
            let mut net = init_network(profile.spec(&tvfl_core::experiment::Preset::NetworkII, 4), &ds, seed).unwrap();
            let report = train(&ds, &mut net, &cfg, &uplink_channel(4)).unwrap();
            let ev = empirical_v(&report.metrics);
            let mut last = 0.0;
            for (m, &(round, v)) in report.metrics.iter().zip(&ev.series) {
                assert_eq!(m.round, round);
                let w = m.block_weights.as_ref().unwrap();
                let expect: f64 = w[0]
                    + (0..4).filter(|&k| m.active[k]).map(|k| w[k + 1]).sum::<f64>();
                assert!((v - expect).abs() <= 1e-12);
                assert!((m.v_measured.unwrap() - expect).abs() <= 1e-12);
                assert!((0.0..=1.0 + 1e-12).contains(&v));
                assert!(m.t_comp > 0.0);
                assert!(m.t_cum > last);
                last = m.t_cum;
            }
            assert_eq!(ev.series.len(), report.metrics.len());
        }
    }
}

mod bounds {
    use super::*;
    use tvfl_core::bounds::{comm_latency, convergence_gap_bound, expected_rounds, BoundParams};
    use tvfl_core::channel::{received_power, uplink_rate};

    fn params(l: f64, mu_frac: f64, c: f64, v: f64, acc: f64) -> BoundParams {
        BoundParams {
            smoothness: l,
            convexity: l * mu_frac,
            loss_range: 1.0,
            grad_variance: c,
            step_size: 1.0 / l,
            accuracy: acc,
            activation_level: v,
        }
    }

    proptest! {
        #[test]
        fn full_activation_bound_is_tightest(
            l in 0.1f64..10.0,
            mu in 0.001f64..1.0,
            c in 0.0f64..1.0,
            v in 0.01f64..1.0,
            t in 0usize..500,
        ) {
            let full = convergence_gap_bound(t, &params(l, mu, c, 1.0, 1.0), 1.0).unwrap();
            let part = convergence_gap_bound(t, &params(l, mu, c, v, 1.0), 1.0).unwrap();
            prop_assert!(full <= part);
        }

        #[test]
        fn expected_rounds_is_monotone(
            mu in 0.001f64..0.5,
            v1 in 0.05f64..1.0,
            v2 in 0.05f64..1.0,
            acc1 in 1e-4f64..0.9,
            acc2 in 1e-4f64..0.9,
        ) {
            prop_assume!(v1 < v2 && acc1 < acc2);
            let n = |v: f64, acc: f64| expected_rounds(&params(1.0, mu, 0.0, v, acc)).unwrap();
            prop_assert!(n(v1, acc1) >= n(v2, acc1));
            prop_assert!(n(v1, acc1) >= n(v1, acc2));
            let closed = acc1.ln() / (1.0 - mu * v1).ln();
            prop_assert!((n(v1, acc1) - closed).abs() <= 1e-9 * closed.abs().max(1.0));
        }

        #[test]
        fn comm_latency_matches_the_channel_rate(
            rho in 1e-13f64..1e-8,
            g in 0.05f64..4.0,
            m in 1usize..10000,
            d in 1usize..64,
        ) {
            let t = comm_latency(32.0, m, d, 1e6, 0.1, 1e-11, rho, g).unwrap();
            let rate = uplink_rate(1e6, received_power(rho, 0.1, g).unwrap(), 1e-11);
            let expect = 32.0 * m as f64 * d as f64 / rate;
            prop_assert!((t - expect).abs() <= 1e-12 * expect);
        }
    }
}
