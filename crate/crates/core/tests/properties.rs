use proptest::prelude::*;

use d2d_effcap::channel::{Duplex, SiLaw};
use d2d_effcap::effcap::{characteristic, lambda_truncated_n1, lambda_truncated_n2, perron_root, quadratic_root};
use d2d_effcap::harq::{decoding_error_conditional, TruncatedTerms};
use d2d_effcap::markov::{overlay_row, underlay_row};
use d2d_effcap::mode_selection::map_to_hypotheses;
use d2d_effcap::montecarlo::empirical_ec_point;
use d2d_effcap::{LinkBudget, OutageMode, SystemParams, ThresholdRule};

fn params(rate: f64, beta: f64, half: bool) -> SystemParams<f64> {
    SystemParams {
        bandwidth: 1.0,
        noise: 1e-12,
        p_dt: 0.5,
        p_micro: 5.0,
        p_macro: 50.0,
        p_ut: 0.5,
        si_alpha: 1e-5,
        si_beta: beta,
        si_law: SiLaw::Quality,
        block_len: 50,
        rate,
        theta: 0.01,
        max_tx: 2,
        duplex: if half { Duplex::Half } else { Duplex::Full },
    }
}

proptest! {
    #[test]
    fn root_solves_characteristic(b in prop::collection::vec(0.0f64..2.0, 1..6)) {
        prop_assume!(b.iter().any(|&x| x > 1e-6));
        let (root, d) = perron_root(&b).unwrap();
        prop_assert!(root > 0.0);
        prop_assert!(d.residual <= 1e-9 * (1.0 + root.powi(b.len() as i32)));
        prop_assert!(characteristic(&b, root * (1.0 + 1e-9)) >= 0.0);
        let total: f64 = b.iter().sum();
        prop_assert_eq!(root < 1.0, total < 1.0);
    }

    #[test]
    fn quadratic_matches_bisection(b1 in 0.0f64..2.0, b2 in 1e-9f64..2.0) {
        let (root, _) = perron_root(&[b1, b2]).unwrap();
        prop_assert!((root - quadratic_root(b1, b2)).abs() <= 1e-12 * root.max(1.0));
    }

    #[test]
    fn closed_forms_order(phi in 0.0f64..1.0, vt in 0.0f64..0.5, extra in 0.0f64..0.2, off_u in 0.0f64..0.3, off_o in 0.0f64..0.3, eps in 0.0f64..0.3, e in 0.01f64..1.0) {
        let t = TruncatedTerms { e, phi, vartheta: vt, varrho: vt + extra, p_u_off: off_u, p_o_off: off_o, eps_ac: eps };
        let l1 = lambda_truncated_n1(&t);
        let l2 = lambda_truncated_n2(&t);
        // n2 carries varrho >= vartheta and no eps_ac
        prop_assert_eq!(l1 <= l2, e * vt + eps <= e * (vt + extra));
    }

    #[test]
    fn decoding_error_is_a_probability_and_grows_with_rate(g in prop::collection::vec(0.0f64..100.0, 1..4), l in 1.0f64..500.0, r in 0.01f64..6.0, dr in 0.0f64..2.0) {
        let z1 = decoding_error_conditional(&g, l, r).unwrap();
        let z2 = decoding_error_conditional(&g, l, r + dr).unwrap();
        prop_assert!((0.0..=1.0).contains(&z1));
        prop_assert!(z2 >= z1);
    }

    #[test]
    fn detection_rows_are_distributions(a in 60.0f64..120.0, d1 in 0.1f64..20.0, d2 in 0.1f64..20.0, sigma in 0.0f64..10.0) {
        let p = map_to_hypotheses([a + d1, a, a + d1 + d2], sigma, ThresholdRule::Midpoint).unwrap();
        for row in p.confusion {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        for h in 0..3 {
            prop_assert!((p.pd[h] + p.pe[h] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_keep_hypothesis_mass(rate in 0.05f64..8.0, beta in 0.0f64..1.0, half in any::<bool>(), h0 in 0.0f64..1.0, h1 in 0.0f64..1.0) {
        let p = params(rate, beta, half);
        let b = LinkBudget::from_db([90.7, 80.9, 83.0, 85.4, 107.0, 110.0, 108.0, 105.0]);
        let h = [h0 * (1.0 - h1), h1, (1.0 - h0) * (1.0 - h1)];
        for row in [overlay_row(&p, &b, &h), underlay_row(&p, &b, &h, OutageMode::Exact)] {
            for i in 0..3 {
                prop_assert!((row.mass(i) - h[i]).abs() < 1e-14);
                prop_assert!(row.on(i) >= 0.0 && row.off(i) >= 0.0);
            }
        }
    }

    #[test]
    fn empirical_ec_between_extremes(s in prop::collection::vec(0.0f64..1000.0, 2..50), theta in 1e-4f64..1.0) {
        let t = 10;
        let ec = empirical_ec_point(&s, theta, t);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min) / t as f64;
        let mean = s.iter().sum::<f64>() / (s.len() * t) as f64;
        prop_assert!(ec >= lo - 1e-9 && ec <= mean + 1e-9);
    }
}
