//! Radial wavefunctions and matrix elements.
//!
//! Each (n, l, j) radial function is obtained by inward Numerov integration of
//! the Coulomb radial equation at the quantum-defect energy −1/(2n*²), on a
//! logarithmic grid ρ = ln r shared by all states. With u(r) = e^{ρ/2} w(ρ)
//! the equation has no first-derivative term:
//!
//!   w'' = [(l + 1/2)² + 2r²(V(r) − E)] w.
//!
//! Integration starts at r = 2n(n + 15) a₀ and stops at the core radius or
//! where the solution starts to diverge inside the inner turning point.

use std::collections::HashMap;

use super::basis::Basis;
use super::defects::QuantumDefectTable;

/// Rb⁺ core radius α_c^{1/3} (a₀), inner cutoff of the Coulomb integration.
pub const CORE_RADIUS: f64 = 2.085_183_7;

/// Default log-grid step; resolves ≥ 10 points per local wavelength up to n ≈ 60.
pub const DEFAULT_STEP: f64 = 0.005;

const RHO_ORIGIN: f64 = -3.0;

#[derive(Clone, Debug)]
pub struct RadialWavefunction {
    pub n: u32,
    pub l: u32,
    pub j2: u32,
    pub n_eff: f64,
    /// Index of the first stored grid point.
    first: usize,
    /// w(ρ_k) for k = first .. first + values.len().
    values: Vec<f64>,
}

impl RadialWavefunction {
    pub fn r_range(&self, grid: &LogGrid) -> (f64, f64) {
        (grid.r(self.first), grid.r(self.first + self.values.len() - 1))
    }

    /// Grid index of the first stored point.
    pub fn first_index(&self) -> usize {
        self.first
    }

    /// w(ρ) at the stored points; u = r^{1/2} w.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// u(r) = r^{1/2} w at the stored grid points.
    pub fn samples(&self, grid: &LogGrid) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let r = grid.r(self.first + i);
                (r, r.sqrt() * w)
            })
            .collect()
    }
}

/// Uniform grid in ρ = ln r anchored at a fixed origin so that all states share nodes.
#[derive(Clone, Copy, Debug)]
pub struct LogGrid {
    pub step: f64,
}

impl LogGrid {
    pub fn r(&self, k: usize) -> f64 {
        (RHO_ORIGIN + k as f64 * self.step).exp()
    }

    fn index_below(&self, r: f64) -> usize {
        ((r.ln() - RHO_ORIGIN) / self.step).floor().max(0.0) as usize
    }

    fn index_above(&self, r: f64) -> usize {
        ((r.ln() - RHO_ORIGIN) / self.step).ceil().max(0.0) as usize
    }
}

/// Numerov-integrates one radial function.
pub fn solve_radial(grid: LogGrid, n: u32, l: u32, j2: u32, n_eff: f64) -> RadialWavefunction {
    let energy = -0.5 / (n_eff * n_eff);
    let r_out = 2.0 * n as f64 * (n as f64 + 15.0);
    let k_out = grid.index_above(r_out);
    let k_in = grid.index_below(CORE_RADIUS);
    let lh = l as f64 + 0.5;
    let h2 = grid.step * grid.step / 12.0;
    let g = |k: usize| {
        let r = grid.r(k);
        lh * lh + 2.0 * r * r * (-1.0 / r - energy)
    };
    let len = k_out - k_in + 1;
    let mut w = vec![0.0; len];
    // w[len-1] sits at k_out and stays zero; seed the next point.
    w[len - 2] = 1e-12;
    let mut g_next = g(k_out);
    let mut g_cur = g(k_out - 1);
    let mut first_kept = 0usize;
    let mut past_turning_point = false;
    for idx in (0..len - 2).rev() {
        let k = k_in + idx;
        let g_prev = g(k);
        let val = (2.0 * (1.0 + 5.0 * h2 * g_cur) * w[idx + 1] - (1.0 - h2 * g_next) * w[idx + 2])
            / (1.0 - h2 * g_prev);
        w[idx] = val;
        // Inside the inner turning point the regular solution decays inward;
        // growth means the irregular solution has taken over.
        if g_prev > 0.0 && grid.r(k) < n_eff * n_eff {
            past_turning_point = true;
        }
        if past_turning_point && val.abs() > w[idx + 1].abs() {
            first_kept = idx + 1;
            break;
        }
        g_next = g_cur;
        g_cur = g_prev;
    }
    let mut values: Vec<f64> = w[first_kept..len].to_vec();
    let first = k_in + first_kept;
    let norm: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let r = grid.r(first + i);
            v * v * r * r
        })
        .sum::<f64>()
        * grid.step;
    let scale = 1.0 / norm.sqrt();
    values.iter_mut().for_each(|v| *v *= scale);
    RadialWavefunction {
        n,
        l,
        j2,
        n_eff,
        first,
        values,
    }
}

/// ∫ u_a u_b r^power dr over the common support.
pub fn radial_integral(grid: &LogGrid, a: &RadialWavefunction, b: &RadialWavefunction, power: i32) -> f64 {
    let lo = a.first.max(b.first);
    let hi = (a.first + a.values.len()).min(b.first + b.values.len());
    let mut s = 0.0;
    for k in lo..hi {
        let r = grid.r(k);
        s += a.values[k - a.first] * b.values[k - b.first] * r.powi(power + 2);
    }
    s * grid.step
}

/// ∫ u_a u_b f(r) dr over the common support.
pub fn radial_integral_with(
    grid: &LogGrid,
    a: &RadialWavefunction,
    b: &RadialWavefunction,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let lo = a.first.max(b.first);
    let hi = (a.first + a.values.len()).min(b.first + b.values.len());
    let mut s = 0.0;
    for k in lo..hi {
        let r = grid.r(k);
        s += a.values[k - a.first] * b.values[k - b.first] * r * r * f(r);
    }
    s * grid.step
}

type RadialKey = (u32, u32, u32);

/// Radial functions for every (n, l, j) of a basis, with memoized ⟨r⟩ elements.
#[derive(Clone, Debug)]
pub struct RadialSet {
    grid: LogGrid,
    functions: HashMap<RadialKey, RadialWavefunction>,
    dipole: HashMap<(RadialKey, RadialKey), f64>,
}

impl RadialSet {
    pub fn new(basis: &Basis, defects: &QuantumDefectTable) -> Self {
        Self::with_step(basis, defects, DEFAULT_STEP)
    }

    pub fn with_step(basis: &Basis, defects: &QuantumDefectTable, step: f64) -> Self {
        let grid = LogGrid { step };
        let functions: HashMap<_, _> = basis
            .radial_labels()
            .into_iter()
            .map(|(n, l, j2)| ((n, l, j2), solve_radial(grid, n, l, j2, defects.n_eff(n, l, j2))))
            .collect();
        let mut set = RadialSet {
            grid,
            functions,
            dipole: HashMap::new(),
        };
        let keys: Vec<RadialKey> = set.functions.keys().copied().collect();
        for &a in &keys {
            for &b in &keys {
                if b.1 == a.1 + 1 && a <= b || a.1 == b.1 + 1 && a <= b {
                    let v = radial_integral(&set.grid, &set.functions[&a], &set.functions[&b], 1);
                    set.dipole.insert((a, b), v);
                    set.dipole.insert((b, a), v);
                }
            }
        }
        set
    }

    pub fn grid(&self) -> &LogGrid {
        &self.grid
    }

    pub fn function(&self, n: u32, l: u32, j2: u32) -> Option<&RadialWavefunction> {
        self.functions.get(&(n, l, j2))
    }

    /// ⟨n l j| r |n' l' j'⟩ in a₀ (zero unless |l − l'| = 1).
    pub fn dipole(&self, a: RadialKey, b: RadialKey) -> f64 {
        self.dipole.get(&(a, b)).copied().unwrap_or(0.0)
    }

    /// ⟨a| f(r) |b⟩ for arbitrary radial operators.
    pub fn element_with(&self, a: RadialKey, b: RadialKey, f: impl Fn(f64) -> f64) -> f64 {
        match (self.functions.get(&a), self.functions.get(&b)) {
            (Some(fa), Some(fb)) => radial_integral_with(&self.grid, fa, fb, f),
            _ => 0.0,
        }
    }
}
