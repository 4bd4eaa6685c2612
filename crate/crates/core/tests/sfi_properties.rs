use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rydchip::atom::{BasisState, QuantumDefectTable};
use rydchip::sfi::*;

fn st(n: u32, l: u32, j2: u32, mj2: i32) -> BasisState {
    BasisState::new(n, l, j2, mj2).unwrap()
}

fn ramp_grid(points: usize) -> Vec<f64> {
    (0..=points).map(|i| 7.2 + (210.0 - 7.2) * i as f64 / points as f64).collect()
}

// mj = 1/2 block around the 48D / n = 47 region and tracks along the standard ramp
struct Real {
    d48: RateTrack,
    high_l: Vec<RateTrack>,
}

fn real() -> &'static Real {
    static CELL: OnceLock<Real> = OnceLock::new();
    CELL.get_or_init(|| {
        let blk = SfiBlock::new(44, 52, None, 1, &QuantumDefectTable::rb87()).unwrap();
        let grid = ramp_grid(150);
        let cap = IonizationModel::cap();
        let d48 = blk.track(&st(48, 2, 5, 1), &grid, &cap).unwrap();
        let high_l = [(6, 13), (20, 41)]
            .iter()
            .map(|&(l, j2)| blk.track(&st(47, l, j2, 1), &grid, &cap).unwrap())
            .collect();
        Real { d48, high_l }
    })
}

fn half_time(ev: &Evolution) -> f64 {
    let k = ev.survival.iter().position(|s| *s < 0.5).expect("state ionizes");
    ev.times[k]
}

fn peak_time(ev: &Evolution) -> f64 {
    let k = (0..ev.flux.len()).max_by(|&a, &b| ev.flux[a].total_cmp(&ev.flux[b])).unwrap();
    0.5 * (ev.times[k] + ev.times[k + 1])
}

fn classical_half_time(state: &BasisState) -> f64 {
    let d = QuantumDefectTable::rb87();
    let tr = RateTrack::classical(state, &d, &IonizationModel::classical(), &ramp_grid(2000)).unwrap();
    half_time(&evolve_through_ramp(&tr, &RampProfile::standard(), 0.002).unwrap())
}

#[test]
fn survival_and_ionized_add_to_one() {
    let r = real();
    for tr in std::iter::once(&r.d48).chain(&r.high_l) {
        let ev = evolve_through_ramp(tr, &RampProfile::standard(), 0.002).unwrap();
        for k in 0..ev.times.len() {
            assert!((ev.survival[k] + ev.ionized[k] - 1.0).abs() < 1e-9);
            if k > 0 {
                assert!(ev.survival[k] <= ev.survival[k - 1]);
            }
        }
        assert!(ev.flux.iter().all(|f| *f >= 0.0));
    }
}

#[test]
fn halving_the_step_barely_moves_the_histogram() {
    let tr = &real().d48;
    let edges: Vec<f64> = (0..=60).map(|i| 1.5 + 0.01 * i as f64).collect();
    let hist = |step: f64| {
        let ev = evolve_through_ramp(tr, &RampProfile::standard(), step).unwrap();
        arrival_histogram(&[(&ev, 1.0)], &edges, DEFAULT_TOF_DELAY).unwrap()
    };
    let (a, b) = (hist(0.002), hist(0.001));
    let peak = a.counts.iter().cloned().fold(0.0, f64::max);
    for (x, y) in a.counts.iter().zip(&b.counts) {
        if *x > 0.01 * peak {
            assert!((x - y).abs() / x < 0.01, "{x} vs {y}");
        }
    }
}

#[test]
fn classical_ordering_in_n_and_mj() {
    // higher n earlier
    assert!(classical_half_time(&st(49, 2, 5, 1)) < classical_half_time(&st(48, 2, 5, 1)));
    assert!(classical_half_time(&st(48, 3, 7, 1)) < classical_half_time(&st(47, 3, 7, 1)));
    assert!(classical_half_time(&st(48, 10, 21, 5)) < classical_half_time(&st(47, 10, 21, 5)));
    // higher |mj| later
    assert!(classical_half_time(&st(48, 2, 5, 5)) > classical_half_time(&st(48, 2, 5, 1)));
    assert!(classical_half_time(&st(47, 10, 21, 9)) > classical_half_time(&st(47, 10, 21, 3)));
    assert!(classical_half_time(&st(47, 10, 21, -7)) > classical_half_time(&st(47, 10, 21, 1)));
}

#[test]
fn hydrogenic_onset_near_saddle_point_formula() {
    // F = 1/(16 n⁴) in atomic units for |m| = 0
    let h = QuantumDefectTable::hydrogenic();
    for n in [40u32, 44, 48] {
        let tr = RateTrack::classical(&st(n, 5, 11, 1), &h, &IonizationModel::classical(), &ramp_grid(4000)).unwrap();
        let onset = tr.fields[tr.rates.iter().position(|r| *r > 5e9).unwrap()];
        let expected = 5.142_206_747_63e9 / (16.0 * (n as f64).powi(4));
        assert!((onset - expected).abs() / expected < 0.01, "n={n}: {onset} vs {expected}");
    }
}

#[test]
fn d48_becomes_ionized_within_the_ramp() {
    let tr = &real().d48;
    assert!(tr.rates.iter().any(|r| *r > 1e6));
    assert!(tr.rates[0] < 1e3);
}

#[test]
fn d48_flux_peaks_before_n47_high_l() {
    let r = real();
    let ramp = RampProfile::standard();
    let d = peak_time(&evolve_through_ramp(&r.d48, &ramp, 0.002).unwrap());
    for tr in &r.high_l {
        let h = peak_time(&evolve_through_ramp(tr, &ramp, 0.002).unwrap());
        assert!(d < h, "48D peak at {d} μs, n=47 high-l at {h} μs");
    }
}

#[test]
fn constant_low_field_does_not_ionize() {
    let tr = &real().d48;
    let flat = RampProfile::linear(7.2, 7.2, 1.0).unwrap();
    let ev = evolve_through_ramp(tr, &flat, 0.002).unwrap();
    assert!(1.0 - ev.survival.last().unwrap() < 1e-6);
    assert!(ev.flux.iter().all(|f| *f < 1e-6));
}

#[test]
fn tracking_notes_get_time_stamps() {
    let tr = &real().d48;
    let ev = evolve_through_ramp(tr, &RampProfile::standard(), 0.002).unwrap();
    assert_eq!(ev.notes.len(), tr.notes.len());
    for n in &ev.notes {
        let t = n.time.unwrap();
        assert!((RampProfile::standard().field_at(t) - n.field).abs() < 1e-6);
    }
}

#[test]
fn cap_rate_vanishes_for_low_n_and_grows_with_field() {
    let blk = SfiBlock::new(10, 14, None, 1, &QuantumDefectTable::rb87()).unwrap();
    let k = blk.basis().index_of(&st(12, 0, 1, 1)).unwrap();
    let mut c = vec![0.0; blk.basis().len()];
    c[k] = 1.0;
    assert_eq!(blk.cap_rate(&c, 0.0, 1.52e-10, 0.8).unwrap(), 0.0);
    assert!(blk.cap_rate(&c, 1.0, 1.52e-10, 0.8).unwrap() < 1e-12);
    let mut last = 0.0;
    for i in 0..200 {
        let r = blk.cap_rate(&c, 10.0 * 1.05f64.powi(i), 1.52e-10, 0.8).unwrap();
        assert!(r >= last);
        last = r;
    }
    assert!(last > 0.0);
}

#[test]
fn delta_flux_lands_in_one_bin() {
    // all population lost in one 2 ns step starting at 0.4 μs
    let times: Vec<f64> = (0..=500).map(|i| i as f64 * 0.002).collect();
    let survival: Vec<f64> = times.iter().map(|t| if *t > 0.4001 { 0.0 } else { 1.0 }).collect();
    let ionized: Vec<f64> = survival.iter().map(|s| 1.0 - s).collect();
    let flux = (0..500).map(|k| (ionized[k + 1] - ionized[k]) / 0.002).collect();
    let ev = Evolution { times, survival, ionized, flux, notes: vec![] };
    let edges: Vec<f64> = (0..=100).map(|i| 1.5 + 0.01 * i as f64).collect();
    let h = arrival_histogram(&[(&ev, 3.0)], &edges, DEFAULT_TOF_DELAY).unwrap();
    let occupied: Vec<usize> = (0..h.counts.len()).filter(|&i| h.counts[i] > 0.0).collect();
    assert_eq!(occupied.len(), 1);
    let i = occupied[0];
    assert!(edges[i] <= 0.401 + 1.53 && 0.401 + 1.53 < edges[i + 1]);
    assert!((h.total() - 3.0).abs() < 1e-12);
    assert!(arrival_histogram(&[(&ev, -1.0)], &edges, 1.53).is_err());
}

#[test]
fn histogram_total_is_weighted_ionized_fraction() {
    let r = real();
    let ramp = RampProfile::standard();
    let evs: Vec<Evolution> = std::iter::once(&r.d48)
        .chain(&r.high_l)
        .map(|t| evolve_through_ramp(t, &ramp, 0.002).unwrap())
        .collect();
    let w = [0.5, 0.3, 0.2];
    let runs: Vec<(&Evolution, f64)> = evs.iter().zip(w).collect();
    let edges: Vec<f64> = (0..=400).map(|i| 1.0 + 0.005 * i as f64).collect();
    let h = arrival_histogram(&runs, &edges, DEFAULT_TOF_DELAY).unwrap();
    let expected: f64 = runs.iter().map(|(e, w)| w * (1.0 - e.survival.last().unwrap())).sum();
    assert!((h.total() - expected).abs() < 1e-9);
    assert!(h.total() <= 1.0 + 1e-12);
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("bin_start_us,bin_end_us,counts"));
    assert_eq!(text.lines().count(), 401);
}

#[test]
fn without_microwaves_nothing_reaches_t2() {
    // r1 and r_x are both 48D-dominant; equal weights
    let ramp = RampProfile::standard();
    let ev = evolve_through_ramp(&real().d48, &ramp, 0.002).unwrap();
    let edges: Vec<f64> = (0..=300).map(|i| 1.5 + 0.005 * i as f64).collect();
    let h = arrival_histogram(&[(&ev, 1.0), (&ev, 1.0)], &edges, DEFAULT_TOF_DELAY).unwrap();
    let (t1, t2) = BinWindows::default().window_counts(&h);
    assert!(t1 > 0.9 * h.total(), "{t1} of {}", h.total());
    assert!(t2 < 1e-3 * t1, "{t2}");
}

#[test]
fn pi_pulse_ratio_and_round_trip() {
    let w = BinWindows::default();
    let (t1, t2) = w.expected_counts(0.9, 10_000.0).unwrap();
    let ratio = t1 / t2;
    // counting error of the ratio for these means
    let sigma = ratio * (1.0 / t1 + 1.0 / t2).sqrt();
    assert!((ratio - 5.6).abs() < 2.0 * sigma, "{ratio} ± {sigma}");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut inside = 0;
    let trials = 400;
    for _ in 0..trials {
        let n1 = Poisson::new(t1).unwrap().sample(&mut rng);
        let n2 = Poisson::new(t2).unwrap().sample(&mut rng);
        let est = infer_population(n1, n2, &w).unwrap();
        if (est.rho22 - 0.9).abs() < 2.0 * est.std_error {
            inside += 1;
        }
    }
    // about 95 % of two-sigma intervals should cover the truth
    assert!(inside as f64 > 0.9 * trials as f64, "{inside}/{trials}");
}

proptest! {
    #[test]
    fn inference_inverts_the_forward_model(rho in 0.0..1.0f64, p in 0.05..1.0f64, a in 0.0..3.0f64, n in 10.0..1e6f64) {
        let w = BinWindows { p, a, ..Default::default() };
        let (t1, t2) = w.expected_counts(rho, n).unwrap();
        let est = infer_population(t1, t2, &w).unwrap();
        prop_assert!((est.rho22 - rho).abs() < 1e-9);
        prop_assert!(!est.clamped);
    }

    #[test]
    fn survival_never_increases_for_random_rates(rates in prop::collection::vec(0.0..1e8f64, 50), step in 0.0005..0.01f64) {
        let fields = ramp_grid(49);
        let tr = RateTrack { fields, rates, energies: vec![0.0; 50], notes: vec![] };
        let ev = evolve_through_ramp(&tr, &RampProfile::standard(), step).unwrap();
        for k in 1..ev.times.len() {
            prop_assert!(ev.survival[k] <= ev.survival[k - 1]);
            prop_assert!((ev.survival[k] + ev.ionized[k] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn classical_threshold_rises_with_binding(e1 in 1e9..1e13f64, e2 in 1e9..1e13f64, m in 0.0..5.0f64) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(saddle_field(-lo, m) <= saddle_field(-hi, m));
    }
}
