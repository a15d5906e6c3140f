use std::f64::consts::PI;

use patchflow_core::corpus::*;
use patchflow_core::diagnostics::interp_terms;
use patchflow_core::spectral::SpectralOps;
use patchflow_core::Grid;

fn ops() -> SpectralOps {
    SpectralOps::new(Grid::new(CORPUS_GRID, 2.0 * PI).unwrap())
}

#[test]
fn committed_constants_reproduce_from_their_seed() {
    let fresh = calibrate(CALIBRATION_SEED, 1).unwrap();
    assert_eq!(fresh, Constants::committed(), "regenerate data/constants.json");
    assert_eq!(fresh.to_json(), COMMITTED_CONSTANTS);
}

#[test]
fn ratios_do_not_depend_on_worker_count() {
    for kind in [CorpusKind::InterpLq, CorpusKind::Clms] {
        let a: Vec<_> = corpus_ratios(kind, 3, 40, 1).into_iter().map(|r| r.unwrap()).collect();
        let b: Vec<_> = corpus_ratios(kind, 3, 40, 4).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn calibration_seed_is_not_a_fresh_corpus() {
    let c = Constants::committed();
    assert!(check_corpus(CorpusKind::Clms, &c, c.seed, 10, 1).is_err());
}

#[test]
fn shrunken_constant_is_reported_as_violation() {
    let mut c = Constants::committed();
    c.clms.value = 0.5 * c.clms.max_ratio;
    let r = check_corpus(CorpusKind::Clms, &c, 11, 200, 1).unwrap();
    assert!(!r.passed);
    assert!(!r.violations.is_empty());
    assert!(r.min_margin < 0.0);
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"kind\":\"clms\""));
}

#[test]
fn velocity_inside_vacuum_is_carried_by_the_gradient_term() {
    let ops = ops();
    // variant 2 puts v inside the first vacuum pocket
    let s = interp_sample(&ops, 5, 2);
    assert_eq!(s.rho.zip_map(&s.v, |r, v| r * v).linf(), 0.0);
    let t = interp_terms(&ops, &s.v, &s.rho, s.rho_tilde, INTERP_P, INTERP_Q).unwrap();
    assert!(t.lhs_l2 > 0.0);
    assert!(t.ratio_l2() <= Constants::committed().interp_l2.value);
}

#[test]
fn band_limited_fields_are_real_zero_mean_and_normalized() {
    let ops = ops();
    let mut rng = sample_rng(1, 2, 3);
    let f = band_limited(&ops, &mut rng, 5, 1.0);
    assert!(f.mean().abs() < 1e-14);
    assert!((f.linf() - 1.0).abs() < 1e-14);
    let s = ops.forward(&f);
    let n = CORPUS_GRID;
    for j in 0..n {
        for i in 0..n {
            let m = |k: usize| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
            if m(i).abs() > 5 || m(j).abs() > 5 {
                assert!(s.data[j * n + i].norm() < 1e-10);
            }
        }
    }
}

#[test]
fn spectral_identities_hold() {
    for r in spectral_identities(17, 100, 2) {
        assert!(r.passed, "{r:?}");
    }
}
