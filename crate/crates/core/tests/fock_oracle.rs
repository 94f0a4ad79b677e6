//! Fock-basis oracle against the closed-form heralding model.

use vpsub_core::fock::{apply_detector_loss, build_split_tmsv, condition_on_count, oracle_for_source, Herald};
use vpsub_core::subtraction::{covariance_subtracted, Scheme, SourceSpec};

fn cutoff_for(v: f64) -> usize {
    if v <= 2.0 {
        60
    } else {
        100
    }
}

#[test]
fn oracle_matches_closed_forms_on_grid() {
    for v in [2.0, 6.0] {
        for t in [0.5, 0.8] {
            for k in [0u32, 1, 2] {
                for eta in [1.0, 0.8, 0.5] {
                    let src = SourceSpec::k_photon(v, t, k).unwrap().with_detector_efficiency(eta).unwrap();
                    let closed = covariance_subtracted(&src).unwrap();
                    let oracle = oracle_for_source(&src, cutoff_for(v)).unwrap();
                    let tag = format!("V={v} T={t} k={k} eta={eta}");
                    assert!((closed.success_prob - oracle.probability).abs() < 1e-8, "{tag}: prob");
                    for (a, b) in [
                        (closed.cov.v1, oracle.cov.v1),
                        (closed.cov.v2, oracle.cov.v2),
                        (closed.cov.phi, oracle.cov.phi),
                    ] {
                        assert!((a - b).abs() < 1e-6, "{tag}: {a} vs {b}");
                    }
                    let (pa, pb, pab) = oracle.p_moments;
                    assert!((pa - oracle.cov.v1).abs() < 1e-9 && (pb - oracle.cov.v2).abs() < 1e-9, "{tag}");
                    assert!((pab + oracle.cov.phi).abs() < 1e-9, "{tag}");
                    assert!(oracle.mean_x.0.abs() < 1e-10 && oracle.mean_x.1.abs() < 1e-10, "{tag}");
                }
            }
        }
    }
}

#[test]
fn onoff_oracle_matches_closed_form() {
    for eta in [1.0, 0.5] {
        let src = SourceSpec::new(6.0, 0.8, Scheme::OnOff).unwrap().with_detector_efficiency(eta).unwrap();
        let closed = covariance_subtracted(&src).unwrap();
        let oracle = oracle_for_source(&src, 100).unwrap();
        assert!((closed.success_prob - oracle.probability).abs() < 1e-8);
        assert!((closed.cov.v1 - oracle.cov.v1).abs() < 1e-6);
        assert!((closed.cov.v2 - oracle.cov.v2).abs() < 1e-6);
        assert!((closed.cov.phi - oracle.cov.phi).abs() < 1e-6);
    }
}

#[test]
fn lossy_single_photon_example() {
    let src = SourceSpec::k_photon(6.0, 0.8, 1).unwrap().with_detector_efficiency(0.5).unwrap();
    let closed = covariance_subtracted(&src).unwrap();
    let state = build_split_tmsv(6.0, 0.8, 100).unwrap();
    let ens = apply_detector_loss(&state, 0.5).unwrap();
    let oracle = condition_on_count(&ens, Herald::Count(1)).unwrap();
    assert!((closed.cov.v1 - oracle.cov.v1).abs() < 1e-6);
    assert!((closed.cov.v2 - oracle.cov.v2).abs() < 1e-6);
    assert!((closed.cov.phi - oracle.cov.phi).abs() < 1e-6);
}

#[test]
fn doubling_cutoff_is_converged() {
    let src = SourceSpec::k_photon(6.0, 0.8, 1).unwrap().with_detector_efficiency(0.8).unwrap();
    let a = oracle_for_source(&src, 100).unwrap();
    let b = oracle_for_source(&src, 200).unwrap();
    assert!((a.cov.v1 - b.cov.v1).abs() < 1e-8);
    assert!((a.cov.v2 - b.cov.v2).abs() < 1e-8);
    assert!((a.cov.phi - b.cov.phi).abs() < 1e-8);
    assert!((a.probability - b.probability).abs() < 1e-10);
}
