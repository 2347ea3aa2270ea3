mod common;

use std::sync::Arc;

use common::*;
use postratio::applications::{
    autocorr_distance, direction_cosine, extract_local_linear, fit_ar, plugin_score, pre_score, roc_auc, roc_curve,
    sliding_scores, sst_distance, surrogate_baseline, DetectionConfig, ScoreConvention,
};
use postratio::estimator::{objective, FitOptions};
use postratio::model::ProbabilityFn;
use postratio::simharness::rng::stream_rng;
use postratio::simharness::{gen_ar_sequence, gen_prior_bank, ArSettings};
use postratio::{fit, FeatureKind, FeatureMap, PriorSampleSet};
use rand::Rng;

fn bank(alpha_mean: f64, alpha_sd: f64, n: usize, window: usize, seed: u64) -> Arc<PriorSampleSet> {
    let settings = ArSettings {
        steps: window,
        ..ArSettings::default()
    };
    Arc::new(gen_prior_bank(alpha_mean, alpha_sd, n, &settings, seed, 0).unwrap())
}

fn config(window: usize, p: Arc<PriorSampleSet>, q: Arc<PriorSampleSet>) -> DetectionConfig {
    let feature = FeatureMap::new(FeatureKind::AutoCorr { max_lag: 3 }, window).unwrap();
    DetectionConfig::new(window, 1, feature, 1.0, p, q).unwrap()
}

fn ar_series(alpha: f64, len: usize, seed: u64) -> Vec<f64> {
    let settings = ArSettings {
        steps: len,
        ..ArSettings::default()
    };
    gen_ar_sequence(alpha, &settings, &mut stream_rng(seed, 0, 9)).unwrap().observed
}

#[test]
fn identical_windows_and_priors_give_symmetric_optimum() {
    let prior = bank(0.3, 0.3, 150, 8, 1);
    let cfg = config(8, prior.clone(), prior);
    let y = ar_series(0.5, 8, 2);
    let problem = cfg.window_problem(&y, &y).unwrap();
    let f = fit(&problem, &cfg.fit).unwrap();
    assert!(norm(&f.delta_hat) < 1e-8);
    let score = pre_score(&y, &y, &cfg).unwrap();
    assert!((score - objective(&problem, &vec![0.0; problem.dim()]).unwrap()).abs() < 1e-10);
    // The divergence convention vanishes at the symmetric optimum.
    let div = cfg.clone().with_convention(ScoreConvention::Divergence);
    assert!(pre_score(&y, &y, &div).unwrap().abs() < 1e-10);
    assert!((plugin_score(&y, &y, &cfg).unwrap() - score).abs() < 1e-10);
}

#[test]
fn single_sample_priors_are_legal() {
    // One shared prior draw; distinct draws would make the objective linear.
    let prior = bank(0.5, 0.1, 1, 8, 3);
    let cfg = config(8, prior.clone(), prior);
    let s = pre_score(&ar_series(0.5, 8, 5), &ar_series(0.5, 8, 6), &cfg).unwrap();
    assert!(s.is_finite());
}

#[test]
fn divergence_scores_are_nonnegative() {
    let cfg = config(8, bank(0.5, 0.2, 100, 8, 7), bank(0.0, 0.3, 100, 8, 8))
        .with_convention(ScoreConvention::Divergence);
    for seed in 0..5 {
        let s = pre_score(&ar_series(0.5, 8, 10 + seed), &ar_series(-0.2, 8, 20 + seed), &cfg).unwrap();
        assert!(s >= -1e-12, "{s}");
    }
}

#[test]
fn flat_likelihoods_make_plugin_match_pre() {
    let window = 8;
    let feature = FeatureMap::new(FeatureKind::AutoCorr { max_lag: 3 }, window).unwrap();
    // At this scale both Gaussian likelihoods are constant to ~1e-13.
    let cfg = DetectionConfig::new(window, 1, feature, 1e6, bank(0.5, 0.2, 120, 8, 11), bank(-0.1, 0.3, 90, 8, 12))
        .unwrap();
    let y_p = ar_series(0.5, 8, 13);
    let y_q = ar_series(-0.2, 8, 14);
    let a = pre_score(&y_p, &y_q, &cfg).unwrap();
    let b = plugin_score(&y_p, &y_q, &cfg).unwrap();
    assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn sliding_window_counts() {
    let prior = bank(0.3, 0.3, 50, 8, 15);
    let cfg = config(8, prior.clone(), prior.clone());
    let s = sliding_scores(&ar_series(0.5, 16, 16), &cfg).unwrap();
    assert_eq!(s.positions, vec![0]);
    assert_eq!(s.scores.len(), 1);
    let mut strided = config(8, prior.clone(), prior);
    strided.stride = 2;
    let s = sliding_scores(&ar_series(0.5, 21, 17), &strided).unwrap();
    assert_eq!(s.positions, vec![0, 2, 4]);
    assert!(sliding_scores(&ar_series(0.5, 15, 18), &strided).is_err());
}

#[test]
fn constant_series_has_flat_scores() {
    let cfg = config(8, bank(0.5, 0.2, 80, 8, 19), bank(0.0, 0.3, 80, 8, 20));
    let s = sliding_scores(&[0.7; 40], &cfg).unwrap();
    let vals: Vec<f64> = s.scores.iter().map(|v| v.unwrap()).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max - min <= 1e-6);
}

#[test]
fn change_point_is_localised() {
    let w = 20;
    let prior = bank(0.0, 0.6, 3000, w, 21);
    let feature = FeatureMap::new(FeatureKind::AutoCorr { max_lag: 5 }, w).unwrap();
    let cfg = DetectionConfig::new(w, 1, feature, 0.5, prior.clone(), prior)
        .unwrap()
        .with_convention(ScoreConvention::Divergence);
    let runs: Vec<Vec<f64>> = (0..20)
        .map(|seed| {
            let mut series = ar_series(0.9, 80, 30 + seed);
            series.extend(ar_series(-0.9, 80, 40 + seed));
            let s = sliding_scores(&series, &cfg).unwrap();
            s.scores.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
        })
        .collect();
    // Median over runs at each position.
    let curve: Vec<f64> = (0..runs[0].len())
        .map(|t| {
            let mut col: Vec<f64> = runs.iter().map(|r| r[t]).filter(|v| v.is_finite()).collect();
            col.sort_by(f64::total_cmp);
            col[col.len() / 2]
        })
        .collect();
    let best = (0..curve.len()).max_by(|&a, &b| curve[a].total_cmp(&curve[b])).unwrap();
    // The windows straddle the change when t + w = 80.
    assert!((best as i64 - 60).abs() <= w as i64, "peak at {best}");
}

#[test]
fn sliding_scores_do_not_depend_on_thread_count() {
    let cfg = config(8, bank(0.5, 0.2, 60, 8, 22), bank(0.0, 0.3, 60, 8, 23));
    let series = ar_series(0.4, 40, 24);
    let run = |t: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
            .install(|| sliding_scores(&series, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

fn logistic(x0: f64, n: usize) -> Vec<f64> {
    let mut x = x0;
    (0..n)
        .map(|_| {
            x = 3.9 * x * (1.0 - x);
            x
        })
        .collect()
}

#[test]
fn ar_fits_match_numpy_lstsq() {
    // Values from tests/oracles/baselines_np.py.
    let a = logistic(0.31, 60);
    let b = logistic(0.47, 60);
    let fa = fit_ar(&a, 3).unwrap();
    let fb = fit_ar(&b, 3).unwrap();
    assert!(rel_err(&fa, &[-0.7594166033180028, -0.528326706257796, 0.06590929709951183], 1e-2) < 1e-10);
    assert!(rel_err(&fb, &[-0.7122628945980246, -0.4091340381549739, 0.09067524849468929], 1e-2) < 1e-10);
    assert!((autocorr_distance(&a, &b, 3).unwrap() - 0.13055158644775763).abs() < 1e-10);
    assert_eq!(autocorr_distance(&a, &a, 3).unwrap(), 0.0);
}

#[test]
fn ar_distance_separates_opposite_coefficients() {
    let settings = ArSettings {
        steps: 5000,
        burn_in: 100,
        process_sd: 1.0,
        obs_sd: 0.0,
    };
    let mut r = rng(25);
    let a = gen_ar_sequence(0.9, &settings, &mut r).unwrap().observed;
    let b = gen_ar_sequence(-0.9, &settings, &mut r).unwrap().observed;
    assert!((autocorr_distance(&a, &b, 1).unwrap() - 1.8).abs() < 0.05);
}

#[test]
fn ar_order_must_fit_the_window() {
    let a = logistic(0.2, 10);
    assert!(fit_ar(&a, 10).is_err());
    assert!(fit_ar(&a, 0).is_err());
    assert!(fit_ar(&[1.0; 12], 2).is_err());
}

#[test]
fn sst_matches_numpy_svd() {
    let a = logistic(0.31, 60);
    let b = logistic(0.47, 60);
    for (rank, expected) in [(3, 9.32990244907339e-05), (1, 0.00048263603669262967), (2, 0.0004593097570555482)] {
        let got = sst_distance(&a[..40], &b[..40], 10, rank).unwrap();
        assert!((got - expected).abs() < 1e-10, "rank {rank}: {got}");
    }
    let s1: Vec<f64> = (0..40).map(|t| (0.5 * t as f64).sin()).collect();
    let s2: Vec<f64> = (0..40).map(|t| (1.3 * t as f64).sin()).collect();
    assert!((sst_distance(&s1, &s2, 10, 2).unwrap() - 0.7694832047054656).abs() < 1e-10);
}

#[test]
fn sst_extremes() {
    let a = logistic(0.31, 40);
    assert!(sst_distance(&a, &a, 10, 3).unwrap().abs() < 1e-12);
    // Trajectories spanned by (1, 1) and (1, -1).
    let flat = [1.0; 12];
    let alternating: Vec<f64> = (0..12).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert!((sst_distance(&flat, &alternating, 2, 1).unwrap() - 1.0).abs() < 1e-12);
    assert!(sst_distance(&a, &a, 10, 11).is_err());
    assert!(sst_distance(&flat, &flat, 2, 2).is_err());
}

fn bayes_blackbox() -> ProbabilityFn {
    // Classes N((-1, 0), I) and N((1, 0), I) with equal priors.
    Arc::new(|x: &[f64]| 1.0 / (1.0 + (-2.0 * x[0]).exp()))
}

fn local_sample(n: usize, seed: u64) -> PriorSampleSet {
    let mut r = rng(seed);
    normal_samples(n, 2, 0.0, 1.0, &mut r)
}

#[test]
fn constant_blackbox_gives_zero_delta() {
    let bb: ProbabilityFn = Arc::new(|_: &[f64]| 0.5);
    let e = extract_local_linear(&bb, &local_sample(200, 26), FeatureMap::identity(2), &FitOptions::default()).unwrap();
    assert!(norm(&e.delta) < 1e-10);
    assert!(e.warning.is_some());
    assert!(!e.intercept_known);
}

#[test]
fn bayes_rule_recovers_the_class_log_ratio() {
    let e = extract_local_linear(&bayes_blackbox(), &local_sample(2000, 27), FeatureMap::identity(2), &FitOptions::default())
        .unwrap();
    assert!(e.converged);
    // log N(x; (-1,0), I) - log N(x; (1,0), I) = -2 x_1.
    assert!(direction_cosine(&e.delta, &[-1.0, 0.0]) >= 0.99);
    assert!((e.delta[0] + 2.0).abs() < 0.1 && e.delta[1].abs() < 0.1, "{:?}", e.delta);
    assert_eq!(e.feature_magnitudes[0].0, 0);
    assert!(e.feature_magnitudes[0].1 >= e.feature_magnitudes[1].1);
}

#[test]
fn single_local_row_is_legal() {
    let x = PriorSampleSet::from_rows(vec![vec![0.3, -0.2]]).unwrap();
    let e = extract_local_linear(&bayes_blackbox(), &x, FeatureMap::identity(2), &FitOptions::default()).unwrap();
    assert!(e.delta.iter().all(|v| v.is_finite()));
}

#[test]
fn extraction_ignores_row_duplication() {
    let x = local_sample(150, 28);
    let doubled = x.concat(&x).unwrap();
    let a = extract_local_linear(&bayes_blackbox(), &x, FeatureMap::identity(2), &FitOptions::default()).unwrap();
    let b = extract_local_linear(&bayes_blackbox(), &doubled, FeatureMap::identity(2), &FitOptions::default()).unwrap();
    assert!(rel_err(&a.delta, &b.delta, 1e-3) < 1e-8);
}

#[test]
fn invalid_blackbox_output_is_rejected() {
    let bb: ProbabilityFn = Arc::new(|_: &[f64]| 1.5);
    assert!(extract_local_linear(&bb, &local_sample(10, 29), FeatureMap::identity(2), &FitOptions::default()).is_err());
}

#[test]
fn surrogate_follows_an_axis_aligned_boundary() {
    let mut r = rng(30);
    let rows: Vec<Vec<f64>> = (0..1000).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
    let x = PriorSampleSet::from_rows(rows).unwrap();
    let bb: ProbabilityFn = Arc::new(|x: &[f64]| if x[1] > 0.2 { 0.9 } else { 0.1 });
    let s = surrogate_baseline(&bb, &x, FeatureMap::identity(2)).unwrap();
    // Negated slope: the positive class lies towards +x_2.
    assert!(direction_cosine(&s.delta, &[0.0, -1.0]) >= 0.99, "{:?}", s.delta);
    assert!(s.warning.is_some());
}

#[test]
fn surrogate_flags_single_class_labels() {
    let bb: ProbabilityFn = Arc::new(|_: &[f64]| 0.5);
    let s = surrogate_baseline(&bb, &local_sample(50, 31), FeatureMap::identity(2)).unwrap();
    assert!(s.delta.iter().all(|v| *v == 0.0));
    assert!(s.warning.unwrap().contains("degenerate"));
}

#[test]
fn surrogate_and_pre_agree_without_outliers() {
    let x = local_sample(2000, 32);
    let bb = bayes_blackbox();
    let pre = extract_local_linear(&bb, &x, FeatureMap::identity(2), &FitOptions::default()).unwrap();
    let sur = surrogate_baseline(&bb, &x, FeatureMap::identity(2)).unwrap();
    assert!(direction_cosine(&pre.delta, &sur.delta) >= 5f64.to_radians().cos());
}

#[test]
fn roc_examples() {
    assert_eq!(roc_auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
    assert_eq!(roc_auc(&[2.0, 0.0], &[1.0]).unwrap(), 0.5);
    assert!(roc_auc(&[], &[1.0]).is_err());
    assert!(check_roc_complement(&[0.1, 0.7, 0.7], &[0.2, 0.7]).is_ok());
}

#[test]
fn roc_curve_runs_corner_to_corner() {
    let c = roc_curve(&[0.9, 0.4, 0.6], &[0.1, 0.5]).unwrap();
    assert_eq!((c[0].fpr, c[0].tpr), (0.0, 0.0));
    let last = c.last().unwrap();
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    for w in c.windows(2) {
        assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
    }
}
