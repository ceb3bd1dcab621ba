//! Randomized property checks on the pure numerical layer: photon statistics,
//! the perception model, prior draws, rank quantiles, intervals and the
//! likelihood, over generated inputs instead of hand-picked cases.

use proptest::prelude::*;

use scotopic::analysis::hdi;
use scotopic::mcmc::log_likelihood;
use scotopic::nmax::inverse_cdf;
use scotopic::perception::{ensemble_accuracy, PerceptionModel};
use scotopic::prior::{log_prior_density, sample_prior, PriorSpec};
use scotopic::rng::stream_rng;
use scotopic::source::PhotonProbMatrix;

fn product_pmf(nbar: f64, n: u32) -> f64 {
    (1..=n).fold((-nbar).exp(), |acc, k| acc * nbar / k as f64)
}

proptest! {
    /// Every photon-probability row is a subdistribution whose missing mass
    /// is exactly the upper Poisson tail, and the augmented variant closes
    /// the row to a full distribution.
    #[test]
    fn photon_rows_are_subdistributions_with_tail_gap(
        nbar in 0.1f64..8.0,
        n_max in 1usize..12,
    ) {
        let rho = PhotonProbMatrix::from_grid(&[nbar], n_max, false).unwrap();
        let row = rho.row(0);
        prop_assert_eq!(row.len(), n_max + 1);
        for &p in row {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        let sum: f64 = row.iter().sum();
        prop_assert!(sum <= 1.0 + 1e-12);
        let tail = 1.0 - (0..=n_max as u32).map(|n| product_pmf(nbar, n)).sum::<f64>();
        prop_assert!((1.0 - sum - tail).abs() <= 1e-12);

        // The augmented column holds the probability of exactly n_max + 1
        // photons, so the row closes to the Poisson CDF at n_max + 1.
        let aug = PhotonProbMatrix::from_grid(&[nbar], n_max, true).unwrap();
        prop_assert_eq!(aug.row(0).len(), n_max + 2);
        let aug_sum: f64 = aug.row(0).iter().sum();
        let cdf: f64 = (0..=n_max as u32 + 1).map(|n| product_pmf(nbar, n)).sum();
        prop_assert!((aug_sum - cdf).abs() <= 1e-12);
    }

    /// The detection law matches its closed form and accuracies strictly
    /// increase with the photon number until they saturate at certainty
    /// within f64.
    #[test]
    fn detection_accuracies_rise_with_photon_number(
        p1 in 0.01f64..0.99,
        n_max in 1usize..50,
    ) {
        let model = PerceptionModel::from_p1(p1, n_max).unwrap();
        let a = model.accuracies();
        prop_assert_eq!(a[0], 0.5);
        for w in a.windows(2) {
            if w[0] < 1.0 {
                prop_assert!(w[1] > w[0]);
            } else {
                prop_assert_eq!(w[1], 1.0);
            }
        }
        for (n, &an) in a.iter().enumerate() {
            let direct = 1.0 - 0.5 * (1.0 - p1).powi(n as i32);
            prop_assert!((an - direct).abs() <= 1e-12);
        }
    }

    /// Marginalizing accuracies over any photon-number subdistribution stays
    /// between chance and certainty and responds monotonically to raising a
    /// single accuracy.
    #[test]
    fn ensemble_accuracy_bounded_and_monotone(
        nbar in 0.2f64..6.0,
        n_max in 1usize..10,
        raw in prop::collection::vec(0.0f64..1.0, 10),
        bump_at in 0usize..10,
        bump in 0.0f64..0.2,
    ) {
        let rho = PhotonProbMatrix::from_grid(&[nbar], n_max, false).unwrap();
        let mut a: Vec<f64> = raw[..=n_max].iter().map(|r| 0.5 + 0.5 * r).collect();
        a[0] = 0.5;
        let base = ensemble_accuracy(&a, rho.row(0)).unwrap();
        prop_assert!((0.5..=1.0).contains(&base));

        let at = (bump_at % n_max) + 1;
        let mut raised = a.clone();
        raised[at] = (raised[at] + bump).min(1.0);
        let lifted = ensemble_accuracy(&raised, rho.row(0)).unwrap();
        prop_assert!(lifted >= base - 1e-15);
    }

    /// Prior draws always honor the support: strict ordering above an exact
    /// zero, an extension at or above the floor, and a finite density.
    #[test]
    fn prior_draws_keep_order_floor_and_finite_density(
        n_max in 1usize..=17,
        p_min in 0.0f64..0.9,
        seed in any::<u64>(),
    ) {
        let spec = PriorSpec::new(n_max, p_min).unwrap();
        let draw = sample_prior(&spec, &mut stream_rng(seed, &[0])).unwrap();
        prop_assert_eq!(draw.p_tilde[0], 0.0);
        for w in draw.p_tilde.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
        let ext = draw.extension.unwrap();
        prop_assert!((p_min..=1.0).contains(&ext));
        prop_assert!(log_prior_density(&draw, &spec).is_finite());
    }

    /// The rank quantile returns exactly the element at the rounded rank,
    /// clamped to the chain.
    #[test]
    fn rank_quantiles_follow_the_rounding_rule(
        mut values in prop::collection::vec(-1e3f64..1e3, 1..200),
        q in 0.001f64..=1.0,
    ) {
        values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let got = inverse_cdf(&values, q).unwrap();
        let rank = ((q * values.len() as f64).round() as usize).clamp(1, values.len());
        prop_assert_eq!(got, values[rank - 1]);
    }

    /// The interval estimator returns the narrowest window holding the
    /// requested sample count, and its empirical mass is never below the
    /// requested mass.
    #[test]
    fn hdi_is_the_narrowest_window_at_mass(
        mut chain in prop::collection::vec(-50f64..50.0, 100..400),
        mass in 0.5f64..0.99,
    ) {
        let (lo, hi) = hdi(&chain, mass).unwrap();
        let inside = chain.iter().filter(|&&x| lo <= x && x <= hi).count();
        let needed = (mass * chain.len() as f64).ceil() as usize;
        prop_assert!(inside >= needed);

        chain.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        for w in chain.windows(needed) {
            prop_assert!(hi - lo <= w[needed - 1] - w[0] + 1e-9);
        }
    }

    /// The likelihood is finite whenever counts are feasible and every
    /// ensemble accuracy is interior, and rejects counts above the trial
    /// budget.
    #[test]
    fn likelihood_finite_on_feasible_counts(
        nbar in 0.2f64..5.0,
        trials in 1u32..2000,
        frac in 0.0f64..=1.0,
    ) {
        let rho = PhotonProbMatrix::from_grid(&[nbar], 17, true).unwrap();
        let a = vec![0.75; 19];
        let sigma = [(frac * trials as f64).round() as u32];
        let ll = log_likelihood(&sigma, trials, &rho, &a).unwrap();
        prop_assert!(ll.is_finite());
        prop_assert!(ll <= 0.0);
        prop_assert!(log_likelihood(&[trials + 1], trials, &rho, &a).is_err());
    }
}
