use proptest::prelude::*;
use rand::Rng;
use rdmest::baselines::pf_rd_run;
use rdmest::channel::{delay_probabilities, simulate_channel};
use rdmest::models::simulate_truth;
use rdmest::rng::seeded;
use rdmest::smc::{smc_run, systematic_indices, Bootstrap, SmcConfig};
use rdmest::{DelayProfile, GrowthModel, ParticleSet};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smc_pass_keeps_invariants(seed in any::<u64>(), lambda in 0.05f64..3.0, n in 0usize..5, particles in 20usize..200) {
        let model = GrowthModel::default();
        let profile = DelayProfile::constant(lambda, n).unwrap();
        let steps = 30;
        let truth = simulate_truth(&model, steps, &mut seeded(seed)).unwrap();
        let events = simulate_channel(&profile, &truth.measurements, &mut seeded(seed.wrapping_add(1)));
        let trace = smc_run(&model, &profile, &events, steps, SmcConfig::new(particles), &mut seeded(seed.wrapping_add(2))).unwrap();
        prop_assert_eq!(trace.invariants.violations(), 0);
        prop_assert_eq!(trace.estimates.len(), steps);
        for (d, e) in trace.steps.iter().zip(&events) {
            prop_assert!(d.ess >= 1.0 - 1e-9 && d.ess <= particles as f64 + 1e-9);
            match e.measurement() {
                Some(_) => {
                    prop_assert_eq!(d.group_counts.iter().sum::<usize>(), particles);
                    let post = d.delay.as_ref().unwrap();
                    prop_assert!((post.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(post.map_estimate <= profile.effective_max_delay(e.step));
                }
                None => prop_assert!(d.delay.is_none()),
            }
        }
    }

    #[test]
    fn pf_rd_pass_keeps_invariants(seed in any::<u64>(), lambda in 0.05f64..3.0, n in 0usize..5) {
        let model = GrowthModel::default();
        let profile = DelayProfile::constant(lambda, n).unwrap();
        let truth = simulate_truth(&model, 30, &mut seeded(seed)).unwrap();
        let events = simulate_channel(&profile, &truth.measurements, &mut seeded(seed.wrapping_add(1)));
        let trace = pf_rd_run(&model, &profile, &events, 30, SmcConfig::new(100), &mut seeded(seed.wrapping_add(2))).unwrap();
        prop_assert_eq!(trace.invariants.violations(), 0);
    }

    #[test]
    fn assigned_delays_respect_history(seed in any::<u64>(), lambda in 0.1f64..3.0, n in 1usize..5) {
        let model = GrowthModel::default();
        let profile = DelayProfile::constant(lambda, n).unwrap();
        let mut rng = seeded(seed);
        let mut set = ParticleSet::from_prior(&model, 64, n, &mut rng).unwrap();
        let mut proposal = Bootstrap::default();
        let mut history: Vec<Vec<Option<usize>>> = vec![Vec::new(); 64];
        for k in 1..=12 {
            set.propagate(&model, &mut proposal, None, &mut rng);
            if rng.random::<f64>() < 0.25 {
                set.handle_dropout();
                history.iter_mut().for_each(|h| h.push(None));
                continue;
            }
            let probs = delay_probabilities(&profile, k).unwrap();
            let stats = set.assign_delays(&probs, &mut rng).unwrap();
            prop_assert_eq!(stats.exclusion_violations, 0);
            for (i, h) in history.iter_mut().enumerate() {
                let j = set.delay(i).unwrap();
                prop_assert!(j <= profile.effective_max_delay(k));
                // Measurement k - j must not have been claimed by an earlier delivery.
                for (tau, past) in h.iter().rev().enumerate() {
                    if let Some(d) = past {
                        prop_assert_ne!(k - j, k - (tau + 1) - d);
                    }
                }
                h.push(Some(j));
            }
            prop_assert_eq!(set.group_sizes().iter().sum::<usize>(), 64);
            // No resampling, so particle histories stay aligned with `history`.
        }
    }

    #[test]
    fn systematic_counts_within_one_of_expectation(raw in prop::collection::vec(0.0f64..1.0, 1..60), u in 0.0f64..1.0) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let idx = systematic_indices(&w, u);
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        let mut counts = vec![0usize; w.len()];
        idx.iter().for_each(|&i| counts[i] += 1);
        for (c, wi) in counts.iter().zip(&w) {
            let expected = wi * w.len() as f64;
            prop_assert!((*c as f64 - expected).abs() < 1.0 + 1e-9, "count {} expected {}", c, expected);
        }
    }
}
