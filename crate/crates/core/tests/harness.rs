use dvbt_core::channel::OffsetDirection;
use dvbt_core::harness::{run_point, snr_to_ebn0_db, sweep, theory_ber_qpsk, EstimatorMode, ExperimentSpec};
use dvbt_core::{make_2k_config, Error, GuardFraction};

fn spec(mode: EstimatorMode, seed: u64) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(make_2k_config(GuardFraction::Quarter), vec![6.0], vec![0], mode);
    s.min_bits = 200_000;
    s.max_bits = 500_000;
    s.seed = seed;
    s
}

/// Three-sigma band of the difference of two binomial estimates.
fn within_3_sigma(a: (u64, u64), b: (u64, u64)) -> bool {
    let (pa, pb) = (a.1 as f64 / a.0 as f64, b.1 as f64 / b.0 as f64);
    let p = (a.1 + b.1) as f64 / (a.0 + b.0) as f64;
    let sigma = (p * (1.0 - p) * (1.0 / a.0 as f64 + 1.0 / b.0 as f64)).sqrt();
    (pa - pb).abs() <= 3.0 * sigma
}

#[test]
fn noiseless_aligned_point_has_no_errors() {
    let mut s = spec(EstimatorMode::Off, 1);
    s.min_bits = 10_000;
    let r = run_point(&s, f64::INFINITY, 0).unwrap();
    assert_eq!(r.errors, 0);
    assert_eq!(r.ber, 0.0);
}

#[test]
fn oracle_matches_aligned_reference() {
    let reference = run_point(&spec(EstimatorMode::Off, 7), 6.0, 0).unwrap();
    for offset in [1, 5, 15, 400] {
        let r = run_point(&spec(EstimatorMode::Oracle, 8), 6.0, offset).unwrap();
        assert!(
            within_3_sigma((r.bits, r.errors), (reference.bits, reference.errors)),
            "offset {offset}: {} vs {}",
            r.ber,
            reference.ber
        );
    }
}

#[test]
fn different_seeds_agree_binomially() {
    let a = run_point(&spec(EstimatorMode::On, 100), 6.0, 5).unwrap();
    let b = run_point(&spec(EstimatorMode::On, 200), 6.0, 5).unwrap();
    assert!(
        within_3_sigma((a.bits, a.errors), (b.bits, b.errors)),
        "{} vs {}",
        a.ber,
        b.ber
    );
}

#[test]
fn aligned_ber_tracks_theory() {
    let r = run_point(&spec(EstimatorMode::Off, 3), 6.0, 0).unwrap();
    let theory = theory_ber_qpsk(snr_to_ebn0_db(&make_2k_config(GuardFraction::Quarter), 6.0));
    assert!((r.ber - theory).abs() / theory < 0.1, "{} vs {theory}", r.ber);
}

#[test]
fn estimator_never_worse_than_uncorrected() {
    for direction in [OffsetDirection::Delay, OffsetDirection::Advance] {
        for offset in [1, 5, 15] {
            for snr in [4.0, 10.0] {
                let mut on = spec(EstimatorMode::On, 9);
                let mut off = spec(EstimatorMode::Off, 9);
                on.direction = direction;
                off.direction = direction;
                let (r_on, r_off) = (
                    run_point(&on, snr, offset).unwrap(),
                    run_point(&off, snr, offset).unwrap(),
                );
                assert!(
                    r_on.ber <= r_off.ber,
                    "{direction:?} offset {offset} snr {snr}: {} > {}",
                    r_on.ber,
                    r_off.ber
                );
            }
        }
    }
}

#[test]
fn estimator_failures_counted_only_in_on_mode() {
    let on = run_point(&spec(EstimatorMode::On, 4), -8.0, 15).unwrap();
    let oracle = run_point(&spec(EstimatorMode::Oracle, 4), -8.0, 15).unwrap();
    assert!(on.est_failures > 0);
    assert_eq!(oracle.est_failures, 0);
}

#[test]
fn empty_grids_rejected() {
    let mut s = spec(EstimatorMode::On, 0);
    s.offsets.clear();
    assert!(matches!(sweep(&s, Vec::new()), Err(Error::InvalidSpec(_))));
    let mut s = spec(EstimatorMode::On, 0);
    s.snr_grid_db.clear();
    assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
}

#[test]
fn sweep_is_byte_reproducible() {
    let mut s = spec(EstimatorMode::On, 42);
    s.snr_grid_db = vec![4.0, 8.0];
    s.offsets = vec![1, 5];
    s.min_bits = 10_000;
    s.max_bits = 100_000;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let ra = sweep(&s, &mut a).unwrap();
    sweep(&s, &mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.len(), 4);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("snr_db,offset,mode,bits,errors,ber,est_failures,seed\n"));
    assert!(ra.iter().all(|r| r.bits <= s.max_bits && r.bits >= s.min_bits));
}
