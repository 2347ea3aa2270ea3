mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use postratio::model::{
    autocorrelation, p_side_weights, q_side_weights, ClassSide, Design, ProbabilityFn, WeightVector,
};
use postratio::{FeatureKind, FeatureMap, LogLikelihood, PreError, PreProblem, PriorSampleSet};

fn samples(rows: &[&[f64]]) -> PriorSampleSet {
    PriorSampleSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

#[test]
fn identity_feature_returns_input() {
    let f = FeatureMap::identity(2);
    assert_eq!(f.eval(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
}

#[test]
fn poly2_appends_squares() {
    let f = FeatureMap::new(FeatureKind::PolynomialDeg2, 2).unwrap();
    assert_eq!(f.eval(&[2.0, 3.0]).unwrap(), vec![2.0, 3.0, 4.0, 9.0]);
}

#[test]
fn output_dims_follow_kind() {
    assert_eq!(FeatureMap::new(FeatureKind::Identity, 5).unwrap().output_dim(), 5);
    assert_eq!(FeatureMap::new(FeatureKind::PolynomialDeg2, 5).unwrap().output_dim(), 10);
    assert_eq!(FeatureMap::new(FeatureKind::AutoCorr { max_lag: 3 }, 5).unwrap().output_dim(), 3);
    assert_eq!(FeatureMap::new(FeatureKind::Lag1Products, 5).unwrap().output_dim(), 4);
}

#[test]
fn lag1_products() {
    let f = FeatureMap::new(FeatureKind::Lag1Products, 4).unwrap();
    assert_eq!(f.eval(&[1.0, 2.0, 3.0, -1.0]).unwrap(), vec![2.0, 6.0, -3.0]);
}

#[test]
fn autocorr_alternating_sequence() {
    // Biased estimator: mean 0, c0 = 8/8, c1 = -7/8.
    let x: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let f = FeatureMap::new(FeatureKind::AutoCorr { max_lag: 1 }, 8).unwrap();
    let v = f.eval(&x).unwrap();
    assert!((v[0] + 0.875).abs() < 1e-15, "{v:?}");
}

#[test]
fn autocorr_matches_direct_formula() {
    let x = [0.3, -1.2, 0.8, 2.1, -0.4, 0.0, 1.1];
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let c = |l: usize| (0..x.len() - l).map(|t| (x[t] - m) * (x[t + l] - m)).sum::<f64>() / n;
    let acf = autocorrelation(&x, 3).unwrap();
    for l in 1..=3 {
        assert!((acf[l - 1] - c(l) / c(0)).abs() < 1e-14);
    }
}

#[test]
fn autocorr_of_constant_is_degenerate() {
    let f = FeatureMap::new(FeatureKind::AutoCorr { max_lag: 2 }, 6).unwrap();
    assert!(matches!(f.eval(&[1.5; 6]), Err(PreError::DegenerateInput(_))));
}

#[test]
fn feature_dimension_mismatch_is_rejected() {
    let f = FeatureMap::identity(3);
    assert!(matches!(f.eval(&[1.0, 2.0]), Err(PreError::DimensionMismatch { .. })));
}

#[test]
fn poly2_restricted_to_first_coordinates_is_identity() {
    let x = [0.4, -1.7, 2.2];
    let p = FeatureMap::new(FeatureKind::PolynomialDeg2, 3).unwrap().eval(&x).unwrap();
    assert_eq!(&p[..3], FeatureMap::identity(3).eval(&x).unwrap().as_slice());
}

#[test]
fn unit_likelihood_is_zero() {
    assert_eq!(LogLikelihood::Unit.eval(&[7.0, -3.0]).unwrap(), 0.0);
}

#[test]
fn gaussian_with_zero_residual() {
    let sigma = 1.7;
    let ll = LogLikelihood::gaussian(vec![0.5, 0.5, -1.0, -1.0], Design::Replicate { times: 2 }, sigma).unwrap();
    let expected = -2.0 * (2.0 * PI * sigma * sigma).ln();
    assert!((ll.eval(&[0.5, -1.0]).unwrap() - expected).abs() < 1e-13);
}

#[test]
fn gaussian_scalar_log_density() {
    let ll = LogLikelihood::gaussian(vec![1.0], Design::Identity, 1.0).unwrap();
    let oracle = (1.0 / (2.0 * PI).sqrt() * (-0.5_f64).exp()).ln();
    assert!((ll.eval(&[0.0]).unwrap() - oracle).abs() < 1e-15);
    assert!((ll.eval(&[0.0]).unwrap() - (-0.5 * (2.0 * PI).ln() - 0.5)).abs() < 1e-15);
}

#[test]
fn blackbox_out_of_range_is_rejected() {
    let bad: ProbabilityFn = Arc::new(|_| 1.5);
    let nan: ProbabilityFn = Arc::new(|_| f64::NAN);
    for f in [bad, nan] {
        let ll = LogLikelihood::blackbox(f, ClassSide::Positive);
        assert!(matches!(ll.eval(&[0.0]), Err(PreError::InvalidBlackbox { .. })));
    }
}

#[test]
fn blackbox_probabilities_are_clamped() {
    let one: ProbabilityFn = Arc::new(|_| 1.0);
    let neg = LogLikelihood::blackbox(one, ClassSide::Negative).eval(&[0.0]).unwrap();
    assert!(neg.is_finite());
    assert!((neg - 1e-12_f64.ln()).abs() < 1e-9);
}

fn unit_problem(xp: &[&[f64]], xq: &[&[f64]]) -> PreProblem {
    let d = xp[0].len();
    PreProblem::new(LogLikelihood::Unit, LogLikelihood::Unit, samples(xp), samples(xq), FeatureMap::identity(d)).unwrap()
}

#[test]
fn equal_likelihoods_give_uniform_p_weights() {
    let p = unit_problem(&[&[0.0], &[1.0], &[5.0], &[2.0]], &[&[0.0]]);
    let (w, log_ev) = p_side_weights(&p);
    assert!(w.as_slice().iter().all(|&v| v == 0.25));
    assert_eq!(log_ev, 0.0);
}

#[test]
fn p_weights_from_logits_zero_and_log3() {
    let prob: ProbabilityFn = Arc::new(|x: &[f64]| if x[0] > 0.0 { 0.75 } else { 0.25 });
    let p = PreProblem::new(
        LogLikelihood::blackbox(prob, ClassSide::Positive),
        LogLikelihood::Unit,
        samples(&[&[-1.0], &[1.0]]),
        samples(&[&[0.0]]),
        FeatureMap::identity(1),
    )
    .unwrap();
    let (w, _) = p_side_weights(&p);
    assert!((w.as_slice()[0] - 0.25).abs() < 1e-15);
    assert!((w.as_slice()[1] - 0.75).abs() < 1e-15);
    let direct = WeightVector::from_logits(&[0.0, 3.0_f64.ln()], "p").unwrap();
    assert!((direct.as_slice()[0] - 0.25).abs() < 1e-15);
}

#[test]
fn gaussian_p_weights_match_direct_normalisation() {
    let y = vec![0.3, -0.2];
    let sigma = 0.9;
    let xs: [&[f64]; 3] = [&[0.1, 0.0], &[-0.5, 0.4], &[1.0, -1.0]];
    let p = PreProblem::new(
        LogLikelihood::gaussian(y.clone(), Design::Identity, sigma).unwrap(),
        LogLikelihood::Unit,
        samples(&xs),
        samples(&[&[0.0, 0.0]]),
        FeatureMap::identity(2),
    )
    .unwrap();
    // Raw densities at benign scale, no log domain.
    let dens: Vec<f64> = xs
        .iter()
        .map(|x| {
            let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
        })
        .collect();
    let total: f64 = dens.iter().sum();
    let (w, log_ev) = p_side_weights(&p);
    for (a, b) in w.as_slice().iter().zip(&dens) {
        assert!((a - b / total).abs() < 1e-14);
    }
    assert!((log_ev - (total / 3.0).ln()).abs() < 1e-13);
}

#[test]
fn total_underflow_is_degenerate_evidence() {
    let err = PreProblem::new(
        LogLikelihood::gaussian(vec![1e200], Design::Identity, 1.0).unwrap(),
        LogLikelihood::Unit,
        samples(&[&[0.0], &[1.0]]),
        samples(&[&[0.0]]),
        FeatureMap::identity(1),
    )
    .unwrap_err();
    assert_eq!(err, PreError::DegenerateEvidence { side: "p" });
}

#[test]
fn q_weights_uniform_at_zero_with_unit_likelihood() {
    let p = unit_problem(&[&[0.0]], &[&[0.3], &[-2.0], &[1.0]]);
    let v = q_side_weights(&p, &[0.0]).unwrap();
    assert!(v.as_slice().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn q_weights_at_zero_follow_likelihood() {
    let y = vec![0.4];
    let lq = LogLikelihood::gaussian(y, Design::Identity, 1.3).unwrap();
    let xq: [&[f64]; 3] = [&[0.0], &[0.5], &[2.0]];
    let p = PreProblem::new(LogLikelihood::Unit, lq.clone(), samples(&[&[0.0]]), samples(&xq), FeatureMap::identity(1))
        .unwrap();
    let l: Vec<f64> = xq.iter().map(|x| lq.eval(x).unwrap().exp()).collect();
    let s: f64 = l.iter().sum();
    let v = q_side_weights(&p, &[0.0]).unwrap();
    for (a, b) in v.as_slice().iter().zip(&l) {
        assert!((a - b / s).abs() < 1e-14);
    }
}

#[test]
fn q_weights_tilted_by_log3() {
    let p = unit_problem(&[&[0.5]], &[&[0.0], &[1.0]]);
    let v = q_side_weights(&p, &[3.0_f64.ln()]).unwrap();
    assert!((v.as_slice()[0] - 0.25).abs() < 1e-15);
    assert!((v.as_slice()[1] - 0.75).abs() < 1e-15);
}

#[test]
fn softmax_is_shift_invariant() {
    let logits = [0.3, -1.2, 4.0, 2.5];
    let a = WeightVector::from_logits(&logits, "q").unwrap();
    let shifted: Vec<f64> = logits.iter().map(|v| v + 700.0).collect();
    let b = WeightVector::from_logits(&shifted, "q").unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn mismatched_prior_dimension_is_rejected() {
    let err = PreProblem::new(
        LogLikelihood::Unit,
        LogLikelihood::Unit,
        samples(&[&[0.0, 1.0]]),
        samples(&[&[0.0]]),
        FeatureMap::identity(2),
    )
    .unwrap_err();
    assert!(matches!(err, PreError::DimensionMismatch { .. }));
}

#[test]
fn csv_loading_accepts_header_and_rejects_ragged_rows() {
    let ok = PriorSampleSet::from_csv_reader("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
    assert_eq!((ok.len(), ok.dim()), (2, 2));
    assert_eq!(ok.row(1), &[3.0, 4.0]);
    let err = PriorSampleSet::from_csv_reader("1,2\n3\n".as_bytes()).unwrap_err();
    assert_eq!(err, PreError::Csv { row: 2, message: "expected 2 columns, found 1".into() });
    let bad = PriorSampleSet::from_csv_reader("1,2\n3,x\n".as_bytes()).unwrap_err();
    assert!(matches!(bad, PreError::Csv { row: 2, .. }));
}

#[test]
fn non_finite_samples_are_rejected() {
    assert!(PriorSampleSet::from_rows(vec![vec![1.0, f64::NAN]]).is_err());
}
