use saliency_core::gradcheck::{
    finite_difference_report, run_suite, suite_input, GradientCorruption, DEFAULT_STEP, DEFAULT_TOLERANCE,
};
use saliency_core::losses::{
    bce_loss, ct_loss, ea_loss, ea_loss_with_contours, evaluate, fbeta_loss, weighted_fbeta_loss,
    LossConfig, LossId,
};
use saliency_core::{extract_contour, BinaryMask, ContourMask, Grid, SaliencyMap};

const SEEDS: std::ops::Range<u64> = 0..20;

#[test]
fn every_loss_passes_on_twenty_seeds() {
    let seeds: Vec<u64> = SEEDS.collect();
    let rows = run_suite(&LossId::ALL, &seeds, &[8], &LossConfig::default(), DEFAULT_TOLERANCE, None).unwrap();
    assert_eq!(rows.len(), 8 * 20);
    for r in &rows {
        assert!(r.passed, "{} seed {}: {:?}", r.loss, r.seed, r.report);
    }
}

#[test]
fn non_default_configs_also_pass() {
    let cfg = LossConfig {
        beta2: 1.0,
        k: 2.5,
        lambda: 0.3,
        ..Default::default()
    };
    let rows = run_suite(&[LossId::Ct, LossId::Fbeta, LossId::Fc, LossId::Ea], &[3, 4], &[5, 8], &cfg, DEFAULT_TOLERANCE, None)
        .unwrap();
    assert!(rows.iter().all(|r| r.passed));
}

#[test]
fn one_percent_corruption_is_caught() {
    let corruption = Some(GradientCorruption { scale: 1.01 });
    for id in LossId::ALL {
        let rows = run_suite(&[id], &[0, 1, 2], &[8], &LossConfig::default(), DEFAULT_TOLERANCE, corruption).unwrap();
        assert!(rows.iter().all(|r| !r.passed), "{id} corruption slipped through");
    }
}

#[test]
fn fc_with_empty_contour_is_constant() {
    let (x, _) = suite_input(7, 8, 8).unwrap();
    let y = BinaryMask::new(8, 8, vec![false; 64]).unwrap();
    let r = finite_difference_report(LossId::Fc, &x, &y, DEFAULT_STEP, &LossConfig::default(), None).unwrap();
    assert_eq!((r.max_error, r.analytic, r.numeric), (0.0, 0.0, 0.0));
}

#[test]
fn reduction_identities_are_exact() {
    for seed in 0..10 {
        let (x, y) = suite_input(100 + seed, 8, 8).unwrap();
        let cfg = LossConfig::default();
        let xc = extract_contour(&x);
        let yc = extract_contour(&y);

        let k0 = LossConfig { k: 0.0, ..cfg };
        assert_eq!(ct_loss(&x, &y, &xc, &yc, &k0).unwrap(), bce_loss(&x, &y, &k0).unwrap());

        let l0 = LossConfig { lambda: 0.0, ..cfg };
        assert_eq!(
            ea_loss_with_contours(&x, &y, &xc, &yc, &l0).unwrap(),
            ct_loss(&x, &y, &xc, &yc, &l0).unwrap()
        );

        let ones = ContourMask::ones(x.width(), x.height()).unwrap();
        assert_eq!(weighted_fbeta_loss(&x, &y, &ones, &cfg).unwrap(), fbeta_loss(&x, &y, &cfg).unwrap());
    }
}

#[test]
fn edge_aware_loss_matches_parts() {
    let (x, y) = suite_input(42, 8, 8).unwrap();
    let cfg = LossConfig::default();
    let ea = ea_loss(&x, &y, &cfg).unwrap();
    let ct = evaluate(LossId::Ct, &x, &y, &cfg).unwrap();
    let fc = evaluate(LossId::Fc, &x, &y, &cfg).unwrap();
    assert_eq!(ea.value, ct.value + cfg.lambda * fc.value);
    for i in 0..ea.gradient.len() {
        assert_eq!(ea.gradient[i], ct.gradient[i] + cfg.lambda * fc.gradient[i]);
    }
}

#[test]
fn binary_prediction_reaches_minimum() {
    let y = BinaryMask::from_bits(6, 6, &[
        0, 0, 0, 0, 0, 0, //
        0, 1, 1, 1, 0, 0, //
        0, 1, 1, 1, 0, 0, //
        0, 1, 1, 1, 1, 0, //
        0, 0, 0, 1, 1, 0, //
        0, 0, 0, 0, 0, 0,
    ])
    .unwrap();
    let x: SaliencyMap = y.to_saliency_map();
    let cfg = LossConfig::default();
    for id in [LossId::Dice, LossId::Iou, LossId::Fbeta, LossId::Fc, LossId::Ssim] {
        assert_eq!(evaluate(id, &x, &y, &cfg).unwrap().value, 0.0, "{id}");
    }
}
