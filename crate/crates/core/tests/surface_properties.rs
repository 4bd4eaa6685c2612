use proptest::prelude::*;
use rydchip::surface::*;
use rydchip::units;

fn fit() -> (AdsorbateFieldModel, CompensationField) {
    (AdsorbateFieldModel::new(37.2, 70.0, 3.482).unwrap(), CompensationField::new(7.2).unwrap())
}

fn r1_states() -> Vec<ResonantState> {
    vec![
        ResonantState::symmetric("r1", 3.625, -300.0, 1.0),
        ResonantState::symmetric("rx", 3.570, -285.0, 1.0),
    ]
}

// centred difference of |E(z)|
fn fd_gradient(z: f64, m: &AdsorbateFieldModel, c: &CompensationField) -> f64 {
    let h = 1e-4;
    ((total_field(z + h, m, c) - total_field(z - h, m, c)) / (2.0 * h)).abs()
}

#[test]
fn layer_positions_near_the_quoted_ones() {
    let (m, c) = fit();
    let zmin = field_minimum(&m, &c).z_min;
    assert!((zmin - 114.96).abs() < 0.01, "{zmin}");
    let r1 = excitation_layer_positions(3.625, &m, &c).unwrap();
    let (zp, zm) = (r1[0].1, r1[1].1);
    assert!(zp < zmin && zm > zmin);
    // relative to the minimum the layers sit 9 μm inside and 11 μm outside
    assert!((zmin - zp - 9.1).abs() < 1.0, "{}", zmin - zp);
    assert!((zm - zmin - 10.6).abs() < 1.0, "{}", zm - zmin);
}

#[test]
fn gradient_matches_finite_difference_at_r1_layers() {
    let (m, c) = fit();
    for (b, z) in excitation_layer_positions(3.625, &m, &c).unwrap() {
        let g = layer_gradient(3.625, &m, &c, b).unwrap();
        let fd = fd_gradient(z, &m, &c);
        assert!((g - fd).abs() / fd < 1e-6, "{b:?}: {g} vs {fd}");
    }
}

#[test]
fn field_variation_is_branch_independent() {
    let (m, c) = fit();
    let lw = units::mhz_to_rad(2.0);
    for e_r in [3.55, 3.625, 4.0] {
        let mut seen = vec![];
        for b in [Branch::Plus, Branch::Minus] {
            let w = layer_width(e_r, &m, &c, b, lw, -300.0).unwrap();
            seen.push(field_variation_over_layer(e_r, &m, &c, b, w).unwrap());
        }
        assert!((seen[0] - seen[1]).abs() < 1e-12);
        assert!((seen[0] - 2.0 / 300.0).abs() < 1e-12);
    }
}

#[test]
fn far_layers_do_not_count() {
    let (m, c) = fit();
    let profile = CloudBeamProfile { z_cloud: 2000.0, sigma: 25.0, z_beam: 2000.0, w: 25.0 };
    let p = excitation_probability(&c, &r1_states(), &m, &profile, &ExcitationOptions::default()).unwrap();
    assert!(p < 1e-100);
    assert!(excitation_probability(&c, &[], &m, &profile, &ExcitationOptions::default()).is_err());
}

#[test]
fn outer_cutoff_removes_layers() {
    let (m, c) = fit();
    let profile = CloudBeamProfile::default();
    let opts = ExcitationOptions { electrode_distance: 110.0, ..Default::default() };
    let layers = excitation_layers(&c, &r1_states(), &m, &profile, &opts).unwrap();
    for l in layers {
        assert_eq!(l.weight == 0.0, l.z > 110.0);
    }
}

#[test]
fn dominant_layer_at_fit_point_is_r1_minus() {
    let (m, c) = fit();
    let layers =
        excitation_layers(&c, &r1_states(), &m, &CloudBeamProfile::default(), &ExcitationOptions::default()).unwrap();
    let best = layers.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
    assert_eq!(best.state, "r1");
    assert_eq!(best.branch, Branch::Minus);
}

#[test]
fn scan_has_one_hump_per_branch() {
    let (m, _) = fit();
    let grid: Vec<f64> = (0..=500).map(|i| 3.0 + 7.0 * i as f64 / 500.0).collect();
    let scan =
        compensation_scan(&grid, &r1_states(), &m, &CloudBeamProfile::default(), &ExcitationOptions::default())
            .unwrap();
    // the r1 layers cross the cloud centre where E₀e^{−130/ζ} = E_h ± √(E_r² − E_xy²)
    let s = (3.625f64 * 3.625 - 3.482 * 3.482).sqrt();
    let u = 37.2 * (-130.0f64 / 70.0).exp();
    let argmax = |f: &dyn Fn(&ScanPoint) -> f64| {
        let i = (0..scan.len()).max_by(|&a, &b| f(&scan[a]).total_cmp(&f(&scan[b]))).unwrap();
        scan[i].e_h
    };
    let plus = argmax(&|p| p.contributions[0].0);
    let minus = argmax(&|p| p.contributions[0].1);
    assert!((plus - (u - s)).abs() < 0.02, "{plus}");
    assert!((minus - (u + s)).abs() < 0.02, "{minus}");
    let total = argmax(&|p| p.total);
    assert!(total > plus && total < minus);
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, &r1_states(), &scan).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("E_h_Vcm,predicted_counts,r1_plus,r1_minus,rx_plus,rx_minus"));
    assert_eq!(text.lines().count(), 502);
}

#[test]
fn width_averaged_model_is_close_to_point_model() {
    let (m, c) = fit();
    let point = excitation_probability(&c, &r1_states(), &m, &CloudBeamProfile::default(), &ExcitationOptions::default())
        .unwrap();
    let opts = ExcitationOptions {
        layer_model: LayerModel::WidthAveraged { laser_linewidth: units::mhz_to_rad(2.0) },
        ..Default::default()
    };
    let avg = excitation_probability(&c, &r1_states(), &m, &CloudBeamProfile::default(), &opts).unwrap();
    assert!((avg - point).abs() / point < 1e-3);
}

fn model() -> impl Strategy<Value = (AdsorbateFieldModel, CompensationField)> {
    (5.0..80.0f64, 20.0..150.0f64, 0.0..5.0f64, 0.05..0.95f64).prop_map(|(e0, zeta, exy, frac)| {
        (AdsorbateFieldModel::new(e0, zeta, exy).unwrap(), CompensationField::new(frac * e0).unwrap())
    })
}

proptest! {
    #[test]
    fn both_layers_sit_at_the_resonant_field((m, c) in model(), extra in 0.001..10.0f64) {
        let e_r = m.e_xy + extra;
        for (_, z) in excitation_layer_positions(e_r, &m, &c).unwrap() {
            prop_assert!((total_field(z, &m, &c) - e_r).abs() < 1e-9);
        }
    }

    #[test]
    fn minimum_is_global_on_a_grid((m, c) in model()) {
        let fm = field_minimum(&m, &c);
        let e_min = total_field(fm.z_min, &m, &c);
        prop_assert!((e_min - m.e_xy).abs() < 1e-9);
        for i in 0..2000 {
            let z = i as f64 * 0.5;
            prop_assert!(total_field(z, &m, &c) >= e_min - 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_fd_away_from_minimum((m, c) in model(), extra in 0.01..10.0f64) {
        let e_r = m.e_xy + extra;
        let z_min = field_minimum(&m, &c).z_min;
        for (b, z) in excitation_layer_positions(e_r, &m, &c).unwrap() {
            if (z - z_min).abs() < 0.01 || z < 1e-3 {
                continue;
            }
            let g = layer_gradient(e_r, &m, &c, b).unwrap();
            let fd = fd_gradient(z, &m, &c);
            prop_assert!((g - fd).abs() / fd < 1e-6, "{:?} {} {}", b, g, fd);
        }
    }

    #[test]
    fn minimum_moves_towards_chip_as_compensation_grows((m, _) in model()) {
        let mut last = f64::INFINITY;
        for i in 1..50 {
            let e_h = m.e0 * i as f64 / 50.0;
            let z = field_minimum(&m, &CompensationField::new(e_h).unwrap()).z_min;
            prop_assert!(z < last);
            last = z;
        }
    }

    #[test]
    fn scan_argmax_survives_rescaling(k in 1e-3..1e3f64) {
        let (m, _) = fit();
        let grid: Vec<f64> = (0..=100).map(|i| 5.0 + 5.0 * i as f64 / 100.0).collect();
        let opts = ExcitationOptions::default();
        let states = r1_states();
        let scaled: Vec<ResonantState> = states
            .iter()
            .map(|s| ResonantState { a_plus: k * s.a_plus, a_minus: k * s.a_minus, ..s.clone() })
            .collect();
        let argmax = |st: &[ResonantState]| {
            let scan = compensation_scan(&grid, st, &m, &CloudBeamProfile::default(), &opts).unwrap();
            let peak = scan.iter().map(|p| p.total).fold(0.0, f64::max);
            scan.iter().position(|p| p.total / peak == 1.0).unwrap()
        };
        prop_assert_eq!(argmax(&states), argmax(&scaled));
    }
}
