use mstd::targets::{
    mstd_target, multi_step_target, q_average_generated, q_average_loaded, single_step_target, soft_q_average, ActionMode, QEval,
};
use proptest::prelude::*;

mod common;
use common::{flags, oracle};

fn qs(values: &[f64]) -> Vec<QEval> {
    values.iter().map(|&v| QEval::new(v)).collect()
}

fn window() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..=5).prop_flat_map(|l| {
        (
            prop::collection::vec(-10.0..10.0f64, l),
            prop::collection::vec(-50.0..50.0f64, l),
            0.05..0.999f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn mean_of_multi_step_targets((r, q, gamma) in window(), terminal in any::<bool>()) {
        let l = r.len();
        let pads = vec![false; l];
        let got = mstd_target(&r, &pads, &qs(&q), gamma, terminal);
        let mean = (1..=l)
            .map(|h| multi_step_target(&r[..h], &pads[..h], QEval::new(q[h - 1]), gamma, terminal && h == l))
            .sum::<f64>() / l as f64;
        prop_assert!((got - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }

    #[test]
    fn single_horizon_is_single_step(r in -10.0..10.0f64, q in -50.0..50.0f64, gamma in 0.05..0.999f64, terminal in any::<bool>()) {
        let a = mstd_target(&[r], &[false], &[QEval::new(q)], gamma, terminal);
        let b = single_step_target(r, QEval::new(q), gamma, terminal);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn padding_matches_direct_evaluation((r, q, gamma) in window(), real_frac in 0.0..1.0f64) {
        let l = r.len();
        let real = 1 + ((l - 1) as f64 * real_frac) as usize;
        let pads = flags(l, real);
        let terminal = real < l;
        let got = mstd_target(&r, &pads, &qs(&q), gamma, terminal);
        let want = oracle(&r, real, &q, gamma, terminal);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn fully_masked_window_is_truncated_return((r, q, gamma) in window(), real_frac in 0.0..1.0f64) {
        // a terminal window: the Q value at every real intermediate state
        // still counts, so compare the Q-free part only by zeroing q
        let l = r.len();
        let real = 1 + ((l - 1) as f64 * real_frac) as usize;
        let pads = flags(l, real);
        let zero = vec![0.0; l];
        let got = mstd_target(&r, &pads, &qs(&zero), gamma, true);
        let mut want = 0.0;
        for h in 1..=l {
            want += (0..h.min(real)).map(|i| gamma.powi(i as i32) * r[i]).sum::<f64>();
        }
        want /= l as f64;
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        let _ = q;
    }

    #[test]
    fn affine_in_each_q((r, q, gamma) in window(), which in 0usize..5, delta in -3.0..3.0f64) {
        let l = r.len();
        let k = which % l;
        let pads = vec![false; l];
        let base = mstd_target(&r, &pads, &qs(&q), gamma, false);
        let mut shifted = q.clone();
        shifted[k] += delta;
        let moved = mstd_target(&r, &pads, &qs(&shifted), gamma, false);
        let coeff = gamma.powi(k as i32 + 1) / l as f64;
        prop_assert!((moved - base - coeff * delta).abs() <= 1e-10);
    }

    #[test]
    fn modes_agree_on_equal_evaluations(q in prop::collection::vec(-50.0..50.0f64, 1..=5), gamma in 0.05..0.999f64) {
        let evals = qs(&q);
        let (last, loaded) = evals.split_last().unwrap();
        let a = q_average_loaded(loaded, *last, gamma);
        let b = q_average_generated(&evals, gamma);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        // without entropy the soft averages coincide too
        let sl = soft_q_average(ActionMode::Loaded, &evals.iter().map(|e| QEval::with_log_prob(e.value, 0.0)).collect::<Vec<_>>(), gamma, 0.3).unwrap();
        prop_assert!((sl - a).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn averaging_versus_multi_step(
        (l, reward, gamma) in (2usize..=5, 0.0..5.0f64, 0.05..0.999f64),
        q in 0.0..100.0f64,
    ) {
        // Equal rewards r and equal Q at every horizon: each l-step term is
        // r/(1-γ) + γ^l (q - r/(1-γ)), so averaging moves the target towards
        // the fixed value r/(1-γ). The multi-state target lies below the
        // L-step one exactly when q < r/(1-γ).
        let r = vec![reward; l];
        let pads = vec![false; l];
        let ms = mstd_target(&r, &pads, &qs(&vec![q; l]), gamma, false);
        let mp = multi_step_target(&r, &pads, QEval::new(q), gamma, false);
        let direct = (1..=l)
            .map(|h| (0..h).map(|i| gamma.powi(i as i32) * reward).sum::<f64>() + gamma.powi(h as i32) * q)
            .sum::<f64>() / l as f64;
        prop_assert!((ms - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        let gap = q - reward / (1.0 - gamma);
        let slack = 1e-9 * direct.abs().max(1.0);
        if gap < -1e-6 {
            prop_assert!(ms <= mp + slack);
        } else if gap > 1e-6 {
            prop_assert!(ms >= mp - slack);
        }
    }
}
