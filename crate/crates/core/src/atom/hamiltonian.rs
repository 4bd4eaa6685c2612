//! Atom–field Hamiltonian in the zero-field |n l j m_j⟩ basis.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::hermitian_eigen;
use crate::units::{self, BOHR_MAGNETON_HZ_PER_GAUSS, ELECTRON_G};

use super::basis::{Basis, BasisState};
use super::defects::QuantumDefectTable;
use super::operators::{contraction_coefficients, AngularCache};
use super::radial::RadialSet;

/// Static fields and MW polarization. Magnitudes in V/cm and G.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub electric_field: f64,
    pub electric_direction: [f64; 3],
    pub magnetic_field: f64,
    pub magnetic_direction: [f64; 3],
    pub mw_polarization: [f64; 3],
}

impl Default for FieldConfig {
    /// 3.4 G along y, E along x (3.625 V/cm), MW polarization along z.
    fn default() -> Self {
        FieldConfig {
            electric_field: 3.625,
            electric_direction: [1.0, 0.0, 0.0],
            magnetic_field: 3.4,
            magnetic_direction: [0.0, 1.0, 0.0],
            mw_polarization: [0.0, 0.0, 1.0],
        }
    }
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn check_unit(name: &str, v: [f64; 3]) -> Result<()> {
    if !v.iter().all(|x| x.is_finite()) || (norm(v) - 1.0).abs() > 1e-12 {
        return invalid(format!("{name} must be a unit vector, got {v:?}"));
    }
    Ok(())
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("electric_direction", self.electric_direction)?;
        check_unit("magnetic_direction", self.magnetic_direction)?;
        check_unit("mw_polarization", self.mw_polarization)?;
        if !(self.electric_field.is_finite() && self.electric_field >= 0.0) {
            return invalid("electric field magnitude must be finite and ≥ 0");
        }
        if !(self.magnetic_field.is_finite() && self.magnetic_field >= 0.0) {
            return invalid("magnetic field magnitude must be finite and ≥ 0");
        }
        Ok(())
    }

    pub fn with_electric_field(&self, e: f64) -> Self {
        FieldConfig {
            electric_field: e,
            ..self.clone()
        }
    }

    pub fn electric_vector(&self) -> [f64; 3] {
        self.electric_direction.map(|c| c * self.electric_field)
    }

    pub fn magnetic_vector(&self) -> [f64; 3] {
        self.magnetic_direction.map(|c| c * self.magnetic_field)
    }
}

/// Zero-field energy relative to the ionization limit (rad/s).
pub fn zero_field_energy(state: &BasisState, defects: &QuantumDefectTable) -> f64 {
    let ns = defects.n_eff(state.n, state.l, state.j2);
    -units::hz_to_rad(units::rydberg_rb87_hz()) / (ns * ns)
}

/// Real sparse matrix as (row, column, value) triplets.
#[derive(Clone, Debug, Default)]
pub struct SparseOperator {
    pub entries: Vec<(usize, usize, f64)>,
}

/// Spherical-component matrices of r (a₀) and of L + g_s S (ħ) over a basis.
///
/// `position[q+1]` holds ⟨a| r_q |b⟩; `moment[q+1]` holds ⟨a| (L + g_s S)_q |b⟩.
/// All entries are real in the Condon–Shortley convention.
#[derive(Clone, Debug)]
pub struct BasisOperators {
    pub position: [SparseOperator; 3],
    pub moment: [SparseOperator; 3],
}

impl BasisOperators {
    pub fn new(basis: &Basis, radial: &RadialSet) -> Self {
        let ang = AngularCache::new();
        let mut position: [SparseOperator; 3] = Default::default();
        let mut moment: [SparseOperator; 3] = Default::default();
        let (n_lo, n_hi) = basis
            .states()
            .iter()
            .fold((u32::MAX, 0), |(lo, hi), s| (lo.min(s.n), hi.max(s.n)));
        for (ia, a) in basis.states().iter().enumerate() {
            for q in -1i32..=1 {
                let mjb = a.mj2 - 2 * q;
                // r_q: Δl = ±1, any n
                for lb in [a.l as i64 - 1, a.l as i64 + 1] {
                    if lb < 0 {
                        continue;
                    }
                    let lb = lb as u32;
                    for j2b in [2 * lb as i64 - 1, 2 * lb as i64 + 1] {
                        if j2b < 1 || mjb.unsigned_abs() > j2b as u32 {
                            continue;
                        }
                        for nb in n_lo..=n_hi {
                            let b = BasisState { n: nb, l: lb, j2: j2b as u32, mj2: mjb };
                            let Some(ib) = basis.index_of(&b) else { continue };
                            let angular = ang.orbital_c1(a, &b, q);
                            if angular == 0.0 {
                                continue;
                            }
                            let radial_part = radial.dipole(a.nlj(), b.nlj());
                            position[(q + 1) as usize].entries.push((ia, ib, angular * radial_part));
                        }
                    }
                }
                // magnetic moment: same n and l
                for j2b in [a.j2 as i64 - 2, a.j2 as i64, a.j2 as i64 + 2] {
                    if j2b < 1 {
                        continue;
                    }
                    let b = BasisState { n: a.n, l: a.l, j2: j2b as u32, mj2: mjb };
                    if !b.is_valid() {
                        continue;
                    }
                    let Some(ib) = basis.index_of(&b) else { continue };
                    let v = ang.moment(a, &b, q, ELECTRON_G);
                    if v != 0.0 {
                        moment[(q + 1) as usize].entries.push((ia, ib, v));
                    }
                }
            }
        }
        BasisOperators { position, moment }
    }

    /// Dense complex matrix of v·O for O = r (`position`) or L + g_s S.
    fn contract_into(&self, ops: &[SparseOperator; 3], v: [f64; 3], scale: f64, m: &mut Mat<Complex64>) {
        let c = contraction_coefficients(v);
        for (qi, op) in ops.iter().enumerate() {
            if c[qi].norm() == 0.0 {
                continue;
            }
            for &(i, j, x) in &op.entries {
                m[(i, j)] += c[qi] * (x * scale);
            }
        }
    }
}

/// Dense Hermitian Hamiltonian (rad/s) measured from `reference`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub matrix: Mat<Complex64>,
    /// Absolute energy subtracted from the diagonal (rad/s).
    pub reference: f64,
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// max |H − H†| / max |H|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut max_abs: f64 = 0.0;
        let mut max_diff: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = self.matrix[(i, j)];
                max_abs = max_abs.max(a.norm());
                max_diff = max_diff.max((a - self.matrix[(j, i)].conj()).norm());
            }
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_diff / max_abs
        }
    }
}

/// H = H₀ + H_Stark + H_Zeeman with energies measured from the ionization limit.
pub fn build_hamiltonian(basis: &Basis, fields: &FieldConfig, defects: &QuantumDefectTable) -> Result<Hamiltonian> {
    let radial = RadialSet::new(basis, defects);
    let ops = BasisOperators::new(basis, &radial);
    build_hamiltonian_with(basis, fields, defects, &ops, 0.0)
}

/// As [`build_hamiltonian`] with precomputed operators and an energy reference (rad/s).
pub fn build_hamiltonian_with(
    basis: &Basis,
    fields: &FieldConfig,
    defects: &QuantumDefectTable,
    ops: &BasisOperators,
    reference: f64,
) -> Result<Hamiltonian> {
    fields.validate()?;
    if basis.is_empty() {
        return invalid("empty basis");
    }
    let n = basis.len();
    let mut m = Mat::<Complex64>::zeros(n, n);
    for (i, s) in basis.states().iter().enumerate() {
        m[(i, i)] = Complex64::new(zero_field_energy(s, defects) - reference, 0.0);
    }
    let stark_scale = units::dipole_field_rad(1.0, 1.0);
    ops.contract_into(&ops.position, fields.electric_vector(), stark_scale, &mut m);
    let zeeman_scale = units::hz_to_rad(BOHR_MAGNETON_HZ_PER_GAUSS);
    ops.contract_into(&ops.moment, fields.magnetic_vector(), zeeman_scale, &mut m);
    Ok(Hamiltonian { matrix: m, reference })
}

/// Eigenpair of an atom–field Hamiltonian.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StarkEigenstate {
    /// Energy relative to the Hamiltonian's reference (rad/s).
    pub energy: f64,
    /// Amplitudes β over the basis.
    pub amplitudes: Vec<Complex64>,
    pub dominant: BasisState,
    pub dominant_weight: f64,
}

impl StarkEigenstate {
    pub fn from_amplitudes(energy: f64, amplitudes: Vec<Complex64>, basis: &Basis) -> Self {
        let (imax, wmax) = amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .enumerate()
            .fold((0, -1.0), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
        StarkEigenstate {
            energy,
            amplitudes,
            dominant: basis.get(imax),
            dominant_weight: wmax,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Σ_q |β_q|² over basis states matching `pred`.
    pub fn weight_where(&self, basis: &Basis, pred: impl Fn(&BasisState) -> bool) -> f64 {
        self.amplitudes
            .iter()
            .zip(basis.states())
            .filter(|(_, s)| pred(s))
            .map(|(a, _)| a.norm_sqr())
            .sum()
    }
}

/// Ascending eigenpairs of a Hermitian Hamiltonian.
pub fn diagonalize(h: &Hamiltonian, basis: &Basis) -> Result<Vec<StarkEigenstate>> {
    if h.dim() != basis.len() {
        return invalid(format!("Hamiltonian dimension {} does not match basis size {}", h.dim(), basis.len()));
    }
    let defect = h.hermiticity_defect();
    if defect > 1e-12 {
        return invalid(format!("matrix is not Hermitian (relative defect {defect:.3e})"));
    }
    let (vals, vecs) = hermitian_eigen(&h.matrix)?;
    let n = h.dim();
    Ok((0..n)
        .map(|k| {
            let amps: Vec<Complex64> = (0..n).map(|i| vecs[(i, k)]).collect();
            StarkEigenstate::from_amplitudes(vals[k], amps, basis)
        })
        .collect())
}

/// d = e Σ β_f^{q'*} β_i^q ⟨q'| r·ε |q⟩ in e·a₀ (complex).
pub fn transition_dipole(
    initial: &StarkEigenstate,
    fin: &StarkEigenstate,
    polarization: [f64; 3],
    ops: &BasisOperators,
) -> Result<Complex64> {
    if initial.amplitudes.len() != fin.amplitudes.len() {
        return invalid("states are expressed in different bases");
    }
    check_unit("polarization", polarization)?;
    let c = contraction_coefficients(polarization);
    let mut d = Complex64::new(0.0, 0.0);
    for (qi, op) in ops.position.iter().enumerate() {
        if c[qi].norm() == 0.0 {
            continue;
        }
        let mut part = Complex64::new(0.0, 0.0);
        for &(i, j, x) in &op.entries {
            part += fin.amplitudes[i].conj() * initial.amplitudes[j] * x;
        }
        d += c[qi] * part;
    }
    Ok(d)
}
