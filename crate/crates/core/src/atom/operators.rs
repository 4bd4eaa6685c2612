//! Angular parts of the single-electron vector operators in the |l s j m_j⟩ basis.
//!
//! Spherical components follow v_{±1} = ∓(v_x ± i v_y)/√2, v_0 = v_z, and
//! a·b = Σ_q (−1)^q a_q b_{−q}.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex64;

use crate::angular::{wigner_3j, wigner_6j};

use super::basis::BasisState;

const TS: i32 = 1; // 2s for s = 1/2

fn sign(doubled: i32) -> f64 {
    if (doubled / 2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// ⟨l' j' m'| C¹_q |l j m⟩ (unit-rank spherical tensor of the orbital part).
pub fn orbital_c1(a: &BasisState, b: &BasisState, q: i32) -> f64 {
    let (tl1, tl2) = (2 * a.l as i32, 2 * b.l as i32);
    let (tj1, tj2) = (a.j2 as i32, b.j2 as i32);
    if a.mj2 != b.mj2 + 2 * q || (a.l as i32 - b.l as i32).abs() != 1 {
        return 0.0;
    }
    let three_j = wigner_3j(tj1, 2, tj2, -a.mj2, 2 * q, b.mj2);
    if three_j == 0.0 {
        return 0.0;
    }
    let reduced_l = sign(tl1) * (((tl1 + 1) * (tl2 + 1)) as f64).sqrt() * wigner_3j(tl1, 2, tl2, 0, 0, 0);
    let reduced_j = sign(tl1 + TS + tj2 + 2)
        * (((tj1 + 1) * (tj2 + 1)) as f64).sqrt()
        * wigner_6j(tl1, tj1, TS, tj2, tl2, 2)
        * reduced_l;
    sign(tj1 - a.mj2) * three_j * reduced_j
}

/// ⟨l j' m'| S_q |l j m⟩ (units of ħ).
pub fn spin(a: &BasisState, b: &BasisState, q: i32) -> f64 {
    if a.l != b.l || a.mj2 != b.mj2 + 2 * q {
        return 0.0;
    }
    let tl = 2 * a.l as i32;
    let (tj1, tj2) = (a.j2 as i32, b.j2 as i32);
    let three_j = wigner_3j(tj1, 2, tj2, -a.mj2, 2 * q, b.mj2);
    if three_j == 0.0 {
        return 0.0;
    }
    let reduced = sign(tl + TS + tj1 + 2)
        * (((tj1 + 1) * (tj2 + 1)) as f64).sqrt()
        * wigner_6j(TS, tj1, tl, tj2, TS, 2)
        * (0.75f64 * 2.0).sqrt();
    sign(tj1 - a.mj2) * three_j * reduced
}

/// ⟨j m'| J_q |j m⟩ (units of ħ).
pub fn total_j(a: &BasisState, b: &BasisState, q: i32) -> f64 {
    if a.l != b.l || a.j2 != b.j2 || a.mj2 != b.mj2 + 2 * q {
        return 0.0;
    }
    let tj = a.j2 as i32;
    let j = a.j();
    sign(tj - a.mj2) * wigner_3j(tj, 2, tj, -a.mj2, 2 * q, b.mj2) * (j * (j + 1.0) * (2.0 * j + 1.0)).sqrt()
}

/// ⟨a| (L + g_s S)_q |b⟩ = ⟨a| (J + (g_s − 1) S)_q |b⟩.
pub fn magnetic_moment(a: &BasisState, b: &BasisState, q: i32, g_s: f64) -> f64 {
    if a.n != b.n || a.l != b.l {
        return 0.0;
    }
    total_j(a, b, q) + (g_s - 1.0) * spin(a, b, q)
}

/// Spherical components (v_{−1}, v_0, v_{+1}) of a Cartesian vector.
pub fn spherical_components(v: [f64; 3]) -> [Complex64; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        Complex64::new(v[0] * s, -v[1] * s),
        Complex64::new(v[2], 0.0),
        Complex64::new(-v[0] * s, -v[1] * s),
    ]
}

/// Coefficients c_q such that v·O = Σ_q c_q O_q, indexed by q + 1.
pub fn contraction_coefficients(v: [f64; 3]) -> [Complex64; 3] {
    let sc = spherical_components(v);
    // (−1)^q v_{−q}
    [-sc[2], sc[1], -sc[0]]
}

type AngKey = (u32, u32, i32, u32, u32, i32, i32);

/// Memoizes angular factors; they depend only on (l, j, m_j) pairs and q.
#[derive(Default)]
pub struct AngularCache {
    orbital: RefCell<HashMap<AngKey, f64>>,
    moment: RefCell<HashMap<AngKey, f64>>,
}

impl AngularCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn orbital_c1(&self, a: &BasisState, b: &BasisState, q: i32) -> f64 {
        let key = (a.l, a.j2, a.mj2, b.l, b.j2, b.mj2, q);
        *self.orbital.borrow_mut().entry(key).or_insert_with(|| orbital_c1(a, b, q))
    }

    pub fn moment(&self, a: &BasisState, b: &BasisState, q: i32, g_s: f64) -> f64 {
        if a.n != b.n {
            return 0.0;
        }
        let key = (a.l, a.j2, a.mj2, b.l, b.j2, b.mj2, q);
        *self
            .moment
            .borrow_mut()
            .entry(key)
            .or_insert_with(|| magnetic_moment(a, b, q, g_s))
    }
}
