use rydchip::atom::*;
use rydchip::units;

fn small_setup(b_gauss: f64) -> (Basis, QuantumDefectTable, FieldConfig) {
    let defects = QuantumDefectTable::rb87();
    let basis = build_basis(9, 11, None).unwrap();
    let fields = FieldConfig {
        electric_field: 1500.0,
        magnetic_field: b_gauss,
        ..FieldConfig::default()
    };
    (basis, defects, fields)
}

#[test]
fn block_solver_matches_full_diagonalization() {
    let (basis, defects, fields) = small_setup(800.0);
    let reference = reference_energy(&defects, 10, 2, 5).unwrap();
    let full_h = {
        let radial = RadialSet::new(&basis, &defects);
        let ops = BasisOperators::new(&basis, &radial);
        build_hamiltonian_with(&basis, &fields, &defects, &ops, reference).unwrap()
    };
    let full = diagonalize(&full_h, &basis).unwrap();
    let solver = StarkSolver::new(basis.clone(), &defects, reference).unwrap();
    // one window covering the whole spectrum: the two stages are then exact
    let sol = solver.solve(&fields, &Windows { ranges_ghz: vec![(-1e5, 1e5)], margin_ghz: 0.0 }).unwrap();
    assert_eq!(sol.len(), full.len());
    for (a, b) in sol.energies.iter().zip(&full) {
        assert!((a - b.energy).abs() < 1e-6 * units::ghz_to_rad(1.0), "{a} vs {}", b.energy);
    }
    // dipoles from a low-lying D-like level to all others, compared as magnitudes
    let pol = [0.0, 0.0, 1.0];
    let i = sol.nearest(0.0).unwrap();
    let d_block = solver.dipoles_from(&sol, i, pol).unwrap();
    let ops = solver.operators();
    for f in 0..full.len() {
        let gap_lo = if f > 0 { full[f].energy - full[f - 1].energy } else { f64::INFINITY };
        let gap_hi = if f + 1 < full.len() { full[f + 1].energy - full[f].energy } else { f64::INFINITY };
        if gap_lo.min(gap_hi) < units::mhz_to_rad(1.0) {
            continue; // degenerate subspace: individual vectors are not unique
        }
        let d_full = transition_dipole(&full[i], &full[f], pol, ops).unwrap();
        assert!((d_full.norm() - d_block[f].norm()).abs() < 1e-7, "level {f}: {} vs {}", d_full.norm(), d_block[f].norm());
    }
}

#[test]
fn windowed_solve_agrees_with_full_window() {
    // transverse Zeeman couplings across the window edge are second order
    let (basis, defects, fields) = small_setup(30.0);
    let reference = reference_energy(&defects, 10, 2, 5).unwrap();
    let solver = StarkSolver::new(basis, &defects, reference).unwrap();
    let all = solver.solve(&fields, &Windows { ranges_ghz: vec![(-1e5, 1e5)], margin_ghz: 0.0 }).unwrap();
    let part = solver.solve(&fields, &Windows::around(0.0, 20.0)).unwrap();
    assert!(!part.is_empty());
    for e in &part.energies {
        let best = all.energies.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
        assert!(best < units::mhz_to_rad(0.01), "windowed level off by {} MHz", units::rad_to_mhz(best));
    }
}
