use std::f64::consts::TAU;

use stirsap_core::harness::*;
use stirsap_core::pulse_synthesis::Protocol;

#[test]
fn dressed_beats_plain_and_optimised_beats_dressed_at_short_times() {
    let cfg = ExperimentConfig::default();
    let spec = TimeSweepSpec::new(vec![30.0, 40.0, 50.0], TAU * 0.02).unwrap();
    let rows = sweep_total_time(&cfg, &spec, &Protocol::ALL).unwrap();
    for chunk in rows.chunks(3) {
        let [r, s, o] = chunk else { unreachable!() };
        assert_eq!((r.variant, s.variant, o.variant), (Protocol::Stirap, Protocol::Stirsap, Protocol::StirsapOpt));
        assert!(r.fidelity < s.fidelity && s.fidelity < o.fidelity, "T = {}: {} {} {}", r.total_time, r.fidelity, s.fidelity, o.fidelity);
        assert!(o.control.is_some());
    }
    // Each T gets its own optimum.
    assert_ne!(rows[2].control, rows[5].control);
}

#[test]
fn stirap_improves_with_total_time() {
    let cfg = ExperimentConfig::default();
    let spec = TimeSweepSpec::range(100.0, 500.0, 100.0, TAU * 0.02).unwrap();
    let rows = sweep_total_time(&cfg, &spec, &[Protocol::Stirap]).unwrap();
    assert_eq!(rows.len(), 5);
    for w in rows.windows(2) {
        assert!(w[1].fidelity >= w[0].fidelity - 0.005, "{} -> {}", w[0].fidelity, w[1].fidelity);
    }
    assert!(rows[4].fidelity >= 0.995);
}

#[test]
fn calibration_reproduces_the_frozen_t1() {
    let t1 = calibrate_uniform_t1(&ExperimentConfig::default(), 1.0).unwrap();
    assert!((t1 - CALIBRATED_T1_NS).abs() / CALIBRATED_T1_NS < 0.01, "{t1}");
}

#[test]
fn fixed_seed_optimisation_is_bit_identical() {
    let mut cfg = ExperimentConfig { protocol: Protocol::StirsapOpt, ..ExperimentConfig::default() };
    cfg.optimizer.as_mut().unwrap().max_evaluations = 200;
    let (a, ra) = optimize_protocol(&cfg).unwrap();
    let (b, rb) = optimize_protocol(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    cfg.seed = 2;
    assert_ne!(optimize_protocol(&cfg).unwrap().1.history[1].candidates, ra.history[1].candidates);
}
