//! Pumped CPW resonator and the driven r1 → r2 two-level transition.
//!
//! Angular frequencies are in rad/s, times in s, lengths in μm unless a field
//! name says otherwise.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::units;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub omega_c: f64,
    pub kappa: f64,
    /// resonator length (mm)
    pub length_mm: f64,
    /// pF/m
    pub capacitance_per_length: f64,
    pub harmonic_index: u32,
    /// quoted quality factor, checked against ω_c/κ when present
    pub quality_factor: Option<f64>,
}

impl Default for CavityParams {
    fn default() -> Self {
        CavityParams {
            omega_c: units::ghz_to_rad(20.55),
            kappa: units::mhz_to_rad(9.0),
            length_mm: 9.3,
            capacitance_per_length: 164.0,
            harmonic_index: 3,
            quality_factor: Some(2300.0),
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return invalid(format!("cavity linewidth must be positive, got {}", self.kappa));
        }
        if !(self.omega_c > 0.0) {
            return invalid("cavity frequency must be positive");
        }
        if !(self.length_mm > 0.0 && self.capacitance_per_length > 0.0) {
            return invalid("cavity length and capacitance per length must be positive");
        }
        if let Some(q) = self.quality_factor {
            let q_calc = self.omega_c / self.kappa;
            if (q_calc - q).abs() > 0.05 * q {
                return invalid(format!("ω_c/κ = {q_calc:.0} is inconsistent with Q = {q}"));
            }
        }
        Ok(())
    }

    /// Total capacitance (F).
    pub fn capacitance(&self) -> f64 {
        self.capacitance_per_length * 1e-12 * self.length_mm * 1e-3
    }

    /// rms zero-point voltage on the centre conductor from C U_c² = ħω_c (V).
    pub fn ground_state_voltage(&self) -> f64 {
        (units::HBAR * self.omega_c / self.capacitance()).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub omega_mw: f64,
    /// relative pump power
    pub power: f64,
    /// Ω̄ at unit power, pump resonant with the mean atomic transition
    pub rabi_ref: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return invalid(format!("pump power must be positive, got {}", self.power));
        }
        if !(self.rabi_ref >= 0.0) {
            return invalid("reference Rabi frequency must be ≥ 0");
        }
        Ok(())
    }

    /// Ω̄ at this power: the intracavity field goes as √P.
    pub fn mean_rabi(&self) -> f64 {
        self.rabi_ref * self.power.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelParams {
    pub omega_12_mean: f64,
    /// inhomogeneous FWHM
    pub delta_omega_12: f64,
    pub gamma_decay: f64,
    /// e·a₀
    pub dipole: f64,
}

impl Default for TwoLevelParams {
    fn default() -> Self {
        TwoLevelParams {
            omega_12_mean: units::ghz_to_rad(20.5513),
            delta_omega_12: units::mhz_to_rad(2.0) * 163.0 / 300.0,
            gamma_decay: units::hz_to_rad(2.7e3),
            dipole: 30.0,
        }
    }
}

impl TwoLevelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_12_mean >= 0.0 && self.delta_omega_12 >= 0.0 && self.gamma_decay >= 0.0 && self.dipole >= 0.0)
        {
            return invalid("two-level parameters must be ≥ 0");
        }
        Ok(())
    }
}

/// Intracavity field √P / (κ/2 − iΔ), scaled to 1 at P = 1 on resonance.
pub fn cavity_field_response(drive: &DriveParams, cavity: &CavityParams) -> Result<Complex64> {
    drive.validate()?;
    cavity.validate()?;
    let half = cavity.kappa / 2.0;
    Ok(drive.power.sqrt() * half / Complex64::new(half, -(drive.omega_mw - cavity.omega_c)))
}

/// |Ω(ω_MW)|² = Ω̄² [(ω̄₁₂ − ω_c)² + κ²/4] / [(ω_MW − ω_c)² + κ²/4], with Ω̄ at the drive power.
pub fn filtered_rabi_squared(drive: &DriveParams, cavity: &CavityParams, atoms: &TwoLevelParams) -> Result<f64> {
    let at_drive = cavity_field_response(drive, cavity)?.norm_sqr();
    let reference = DriveParams { omega_mw: atoms.omega_12_mean, power: drive.power, ..*drive };
    let at_mean = cavity_field_response(&reference, cavity)?.norm_sqr();
    Ok(drive.mean_rabi().powi(2) * at_drive / at_mean)
}

/// Why a steady state was set to zero by convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteadyStateNote {
    /// Γ = Ω = 0 on resonance: 0/0
    UndrivenOnResonance,
}

/// ρ₂₂ = (|Ω|²/4) / [(ω_MW − ω₁₂)² + Γ²/4 + |Ω|²/2].
pub fn steady_state_population(omega_mw: f64, omega_12: f64, gamma_decay: f64, rabi_sq: f64) -> f64 {
    steady_state_population_noted(omega_mw, omega_12, gamma_decay, rabi_sq).0
}

pub fn steady_state_population_noted(
    omega_mw: f64,
    omega_12: f64,
    gamma_decay: f64,
    rabi_sq: f64,
) -> (f64, Option<SteadyStateNote>) {
    let d = omega_mw - omega_12;
    let denom = d * d + gamma_decay * gamma_decay / 4.0 + rabi_sq / 2.0;
    if denom == 0.0 {
        return (0.0, Some(SteadyStateNote::UndrivenOnResonance));
    }
    ((rabi_sq / 4.0) / denom, None)
}

/// Nodes of the Gaussian average over ω₁₂.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumQuadrature {
    /// half span in FWHM units
    pub span_fwhm: f64,
    pub min_nodes: usize,
    /// node spacing is kept below this fraction of the power-broadened half width
    pub resolve_fraction: f64,
    pub max_nodes: usize,
}

impl Default for SpectrumQuadrature {
    fn default() -> Self {
        SpectrumQuadrature { span_fwhm: 4.0, min_nodes: 401, resolve_fraction: 0.1, max_nodes: 400_001 }
    }
}

/// ρ̃₂₂(ω_MW) = ∫ S(ω₁₂) ρ₂₂(ω₁₂) dω₁₂ with Gaussian S of FWHM Δω₁₂; trapezoid rule.
pub fn broadened_spectrum(
    drive_grid: &[f64],
    power: f64,
    rabi_ref: f64,
    cavity: &CavityParams,
    atoms: &TwoLevelParams,
) -> Result<Vec<f64>> {
    broadened_spectrum_with(drive_grid, power, rabi_ref, cavity, atoms, &SpectrumQuadrature::default())
}

pub fn broadened_spectrum_with(
    drive_grid: &[f64],
    power: f64,
    rabi_ref: f64,
    cavity: &CavityParams,
    atoms: &TwoLevelParams,
    quad: &SpectrumQuadrature,
) -> Result<Vec<f64>> {
    atoms.validate()?;
    if quad.min_nodes < 3 || quad.span_fwhm <= 0.0 {
        return invalid("quadrature needs ≥ 3 nodes and a positive span");
    }
    drive_grid
        .iter()
        .map(|&w| {
            let drive = DriveParams { omega_mw: w, power, rabi_ref };
            let rabi_sq = filtered_rabi_squared(&drive, cavity, atoms)?;
            let fwhm = atoms.delta_omega_12;
            if fwhm == 0.0 {
                return Ok(steady_state_population(w, atoms.omega_12_mean, atoms.gamma_decay, rabi_sq));
            }
            let half_width = (atoms.gamma_decay.powi(2) / 4.0 + rabi_sq / 2.0).sqrt();
            let span = 2.0 * quad.span_fwhm * fwhm;
            let mut nodes = quad.min_nodes;
            if half_width > 0.0 {
                let need = (span / (quad.resolve_fraction * half_width)).ceil() as usize + 1;
                nodes = nodes.max(need.min(quad.max_nodes));
            }
            let h = span / (nodes - 1) as f64;
            let lo = atoms.omega_12_mean - quad.span_fwhm * fwhm;
            let c = 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..nodes {
                let w12 = lo + k as f64 * h;
                let edge = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
                let d = w12 - atoms.omega_12_mean;
                let s = edge * (-c * d * d).exp();
                num += s * steady_state_population(w, w12, atoms.gamma_decay, rabi_sq);
                den += s;
            }
            Ok(num / den)
        })
        .collect()
}

/// D(t) = cos(Ωt).
pub fn rabi_trace(rabi: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.iter().any(|&t| t < 0.0) {
        return invalid("times must be ≥ 0");
    }
    Ok(t_grid.iter().map(|&t| (rabi * t).cos()).collect())
}

/// Upper-state population (1 − D)/2.
pub fn upper_population(d: f64) -> f64 {
    (1.0 - d) / 2.0
}

/// Lateral cloud position and the linear Rabi-frequency gradient across it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleGeometry {
    pub x0: f64,
    pub sigma: f64,
    /// Ω(x) = Ω̄(1 + (x − x₀)/χ); +∞ for a homogeneous field
    pub chi: f64,
}

impl EnsembleGeometry {
    pub fn new(x0: f64, sigma: f64, chi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("cloud radius must be positive, got {sigma}"));
        }
        if chi == 0.0 || chi.is_nan() {
            return invalid("χ must be nonzero");
        }
        Ok(EnsembleGeometry { x0, sigma, chi })
    }

    /// Geometry with b = σ/χ.
    pub fn from_ratio(x0: f64, sigma: f64, b: f64) -> Result<Self> {
        let chi = if b == 0.0 { f64::INFINITY } else { sigma / b };
        Self::new(x0, sigma, chi)
    }

    pub fn b(&self) -> f64 {
        self.sigma / self.chi
    }

    /// γ = bΩ̄/√2.
    pub fn damping_rate(&self, rabi_mean: f64) -> f64 {
        self.b().abs() * rabi_mean.abs() / std::f64::consts::SQRT_2
    }
}

/// D̄(t) = exp(−γ²t²) cos(Ω̄t).
pub fn averaged_rabi_trace(rabi_mean: f64, geometry: &EnsembleGeometry, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.iter().any(|&t| t < 0.0) {
        return invalid("times must be ≥ 0");
    }
    let g = geometry.damping_rate(rabi_mean);
    Ok(t_grid.iter().map(|&t| (-(g * t).powi(2)).exp() * (rabi_mean * t).cos()).collect())
}

/// Same average by direct quadrature of cos(Ω(x)t) over the Gaussian cloud.
pub fn averaged_rabi_trace_quadrature(
    rabi_mean: f64,
    geometry: &EnsembleGeometry,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    if t_grid.iter().any(|&t| t < 0.0) {
        return invalid("times must be ≥ 0");
    }
    let b = geometry.b();
    // u = (x − x₀)/σ over ±10
    let nodes = 4001;
    let h = 20.0 / (nodes - 1) as f64;
    let norm = h / (2.0 * std::f64::consts::PI).sqrt();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let mut s = 0.0;
            for k in 0..nodes {
                let u = -10.0 + k as f64 * h;
                let edge = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
                s += edge * (-0.5 * u * u).exp() * (rabi_mean * (1.0 + b * u) * t).cos();
            }
            s * norm
        })
        .collect())
}

/// Δω₁₂ = Δω_las |(d_r2 − d_r1)/d_r1|.
pub fn transition_linewidth(laser_linewidth: f64, d_r1: f64, d_r2: f64) -> Result<f64> {
    if d_r1 == 0.0 {
        return invalid("Stark gradient of the lower state must be nonzero");
    }
    Ok(laser_linewidth * ((d_r2 - d_r1) / d_r1).abs())
}

/// Ω = d E / ħ for a dipole in e·a₀ and a field in V/m.
pub fn rabi_from_field(dipole: f64, field_v_per_m: f64) -> f64 {
    dipole * units::ea0_si() * field_v_per_m / units::HBAR
}

/// Cross-section of the coplanar waveguide, μm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpwGeometry {
    pub center_width: f64,
    pub gap: f64,
    pub ground_width: f64,
    /// strips per conductor in the charge solve
    pub strips: usize,
}

impl Default for CpwGeometry {
    fn default() -> Self {
        CpwGeometry { center_width: 20.0, gap: 15.0, ground_width: 300.0, strips: 120 }
    }
}

/// Quasi-static CPW field from a line-charge solve of the conductor potentials.
///
/// The conductors lie in the plane z = 0; each is cut into strips carrying a
/// uniform charge density, fixed by requiring the potential at every strip
/// centre to equal the conductor voltage (centre U, grounds 0) with zero net
/// charge.
#[derive(Clone, Debug)]
pub struct CpwField {
    geometry: CpwGeometry,
    /// (a, b, q) with q = σ/(2πε₀), V per μm at unit voltage
    strips: Vec<(f64, f64, f64)>,
    /// potential of the conductors relative to infinity differs from (U, 0) by this offset
    offset: f64,
    voltage: f64,
}

fn log_integral(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.abs().ln() - u
    }
}

fn graded(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    // cosine spacing packs strips at the edges where the charge piles up
    let x = |k: usize| a + (b - a) * (1.0 - (std::f64::consts::PI * k as f64 / n as f64).cos()) / 2.0;
    (0..n).map(|k| (x(k), x(k + 1))).collect()
}

impl CpwField {
    /// Solves for the charges with `voltage` (V) on the centre conductor.
    pub fn solve(geometry: CpwGeometry, voltage: f64) -> Result<Self> {
        if !(geometry.center_width > 0.0 && geometry.gap > 0.0 && geometry.ground_width > 0.0) {
            return invalid("CPW widths must be positive");
        }
        if geometry.strips < 2 {
            return invalid("need at least two strips per conductor");
        }
        let half = geometry.center_width / 2.0;
        let g0 = half + geometry.gap;
        let g1 = g0 + geometry.ground_width;
        let mut strips: Vec<(f64, f64, f64)> = Vec::new();
        let mut targets = Vec::new();
        for (a, b) in graded(-g1, -g0, geometry.strips) {
            strips.push((a, b, 0.0));
            targets.push(0.0);
        }
        for (a, b) in graded(-half, half, geometry.strips) {
            strips.push((a, b, 0.0));
            targets.push(1.0);
        }
        for (a, b) in graded(g0, g1, geometry.strips) {
            strips.push((a, b, 0.0));
            targets.push(0.0);
        }
        let n = strips.len();
        // unknowns: q_j and a reference offset V₀
        let mut m = Mat::<f64>::zeros(n + 1, n + 1);
        let mut rhs = Mat::<f64>::zeros(n + 1, 1);
        for i in 0..n {
            let xi = 0.5 * (strips[i].0 + strips[i].1);
            for (j, &(a, b, _)) in strips.iter().enumerate() {
                m[(i, j)] = -(log_integral(xi - a) - log_integral(xi - b));
            }
            m[(i, n)] = 1.0;
            rhs[(i, 0)] = targets[i];
        }
        for (j, &(a, b, _)) in strips.iter().enumerate() {
            m[(n, j)] = b - a;
        }
        let q = m.partial_piv_lu().solve(&rhs);
        for (j, s) in strips.iter_mut().enumerate() {
            s.2 = q[(j, 0)];
        }
        Ok(CpwField { geometry, strips, offset: q[(n, 0)], voltage })
    }

    pub fn geometry(&self) -> &CpwGeometry {
        &self.geometry
    }

    /// Potential (V) at (x, z ≥ 0).
    pub fn potential(&self, x: f64, z: f64) -> f64 {
        let mut phi = 0.0;
        for &(a, b, q) in &self.strips {
            // ∫ ln √((x−x')² + z²) dx'
            let f = |u: f64| {
                if z == 0.0 {
                    log_integral(u)
                } else {
                    0.5 * u * (u * u + z * z).ln() - u + z * (u / z).atan()
                }
            };
            phi -= q * (f(x - a) - f(x - b));
        }
        (phi + self.offset) * self.voltage
    }

    /// (E_x, E_z) in V/m at (x, z) μm, z > 0.
    pub fn field(&self, x: f64, z: f64) -> Result<(f64, f64)> {
        if !(z > 0.0) {
            return invalid(format!("field point must be above the conductor plane, got z = {z} μm"));
        }
        let (mut ex, mut ez) = (0.0, 0.0);
        for &(a, b, q) in &self.strips {
            ex += q * 0.5 * (((x - a).powi(2) + z * z) / ((x - b).powi(2) + z * z)).ln();
            ez += q * (((x - a) / z).atan() - ((x - b) / z).atan());
        }
        // V/μm → V/m
        Ok((ex * self.voltage * 1e6, ez * self.voltage * 1e6))
    }

    pub fn magnitude(&self, x: f64, z: f64) -> Result<f64> {
        let (ex, ez) = self.field(x, z)?;
        Ok(ex.hypot(ez))
    }

    /// d ln|E| / dx = 1/χ (1/μm).
    pub fn log_slope_x(&self, x: f64, z: f64) -> Result<f64> {
        let h = 1e-3;
        let up = self.magnitude(x + h, z)?.ln();
        let dn = self.magnitude(x - h, z)?.ln();
        Ok((up - dn) / (2.0 * h))
    }
}

/// |E| on a grid, rows follow `z_grid`, columns `x_grid`.
pub fn cavity_field_map(
    cavity: &CavityParams,
    geometry: CpwGeometry,
    x_grid: &[f64],
    z_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    cavity.validate()?;
    let cpw = CpwField::solve(geometry, cavity.ground_state_voltage())?;
    z_grid
        .iter()
        .map(|&z| x_grid.iter().map(|&x| cpw.magnitude(x, z)).collect())
        .collect()
}

/// Single-photon Rabi frequency d E_c⁽⁰⁾/ħ at (x, z) μm.
pub fn vacuum_rabi_frequency(cavity: &CavityParams, geometry: CpwGeometry, dipole: f64, x: f64, z: f64) -> Result<f64> {
    cavity.validate()?;
    if !(dipole > 0.0) {
        return invalid("dipole must be positive");
    }
    if !(z > 0.0) {
        return invalid(format!("position must be above the chip, got z = {z} μm"));
    }
    let cpw = CpwField::solve(geometry, cavity.ground_state_voltage())?;
    Ok(rabi_from_field(dipole, cpw.magnitude(x, z)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_check() {
        assert!(CavityParams::default().validate().is_ok());
        let bad = CavityParams { kappa: units::mhz_to_rad(5.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let unquoted = CavityParams { quality_factor: None, ..bad };
        assert!(unquoted.validate().is_ok());
    }

    #[test]
    fn strip_solve_holds_the_conductor_voltages() {
        let cpw = CpwField::solve(CpwGeometry::default(), 1.0).unwrap();
        // edges of a strip are off the collocation points, check centres away from the edges
        for x in [-5.0, 0.0, 3.0] {
            assert!((cpw.potential(x, 0.0) - 1.0).abs() < 2e-3, "{}", cpw.potential(x, 0.0));
        }
        for x in [50.0, -200.0] {
            assert!(cpw.potential(x, 0.0).abs() < 2e-3);
        }
    }

    #[test]
    fn field_is_minus_gradient_of_potential() {
        let cpw = CpwField::solve(CpwGeometry::default(), 1.0).unwrap();
        let (x, z, h) = (40.0, 60.0, 1e-3);
        let (ex, ez) = cpw.field(x, z).unwrap();
        let fx = -(cpw.potential(x + h, z) - cpw.potential(x - h, z)) / (2.0 * h) * 1e6;
        let fz = -(cpw.potential(x, z + h) - cpw.potential(x, z - h)) / (2.0 * h) * 1e6;
        assert!((ex - fx).abs() < 1e-5 * ex.abs().max(ez.abs()));
        assert!((ez - fz).abs() < 1e-5 * ex.abs().max(ez.abs()));
    }

    #[test]
    fn zero_point_voltage() {
        let u = CavityParams::default().ground_state_voltage();
        assert!((u - 2.988e-6).abs() < 0.002e-6, "{u}");
    }
}
