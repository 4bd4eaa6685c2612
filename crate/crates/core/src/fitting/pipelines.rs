//! Fits of the excitation scan, the microwave spectrum and the Rabi trace.

use serde::{Deserialize, Serialize};

use crate::cavity::{broadened_spectrum_with, CavityParams, SpectrumQuadrature, TwoLevelParams};
use crate::error::{invalid, Error, Result};
use crate::fitting::lm::{least_squares, FitData, FitProblem, FitResult, LmOptions, Parameter};
use crate::surface::{compensation_scan, AdsorbateFieldModel, CloudBeamProfile, ExcitationOptions, ResonantState};
use crate::units;

// ---------------------------------------------------------------- excitation scan

/// Fixed inputs of the scan fit. The strengths A± of each state are replaced
/// by one fitted amplitude per state (both layers share it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSetup {
    pub states: Vec<ResonantState>,
    pub profile: CloudBeamProfile,
    pub options: ExcitationOptions,
}

impl Default for ScanSetup {
    fn default() -> Self {
        ScanSetup {
            states: vec![
                ResonantState::symmetric("r1", 3.625, -300.0, 1.0),
                ResonantState::symmetric("rx", 3.570, -285.0, 1.0),
            ],
            profile: CloudBeamProfile::default(),
            options: ExcitationOptions::default(),
        }
    }
}

/// Scan parameters in fit order: amplitudes, then E₀, ζ, E_xy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    /// counts per pulse per unit n·I, one per state
    pub amplitudes: Vec<f64>,
    pub model: AdsorbateFieldModel,
}

impl ScanParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.amplitudes.clone();
        v.extend([self.model.e0, self.model.zeta, self.model.e_xy]);
        v
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() < 4 {
            return invalid("scan parameters need at least one amplitude plus E₀, ζ, E_xy");
        }
        let k = p.len() - 3;
        Ok(ScanParams {
            amplitudes: p[..k].to_vec(),
            model: AdsorbateFieldModel::new(p[k], p[k + 1], p[k + 2])?,
        })
    }
}

pub fn scan_parameter_names(setup: &ScanSetup) -> Vec<String> {
    let mut names: Vec<String> = setup.states.iter().map(|s| format!("A_{}", s.label)).collect();
    names.extend(["E0_Vcm", "zeta_um", "Exy_Vcm"].map(String::from));
    names
}

/// Counts per pulse at each compensation field for parameter vector `p`.
pub fn scan_model(setup: &ScanSetup, p: &[f64], e_h: &[f64]) -> Result<Vec<f64>> {
    if p.len() != setup.states.len() + 3 {
        return invalid("parameter vector does not match the number of states");
    }
    let params = ScanParams::from_slice(p)?;
    let states: Vec<ResonantState> = setup
        .states
        .iter()
        .zip(&params.amplitudes)
        .map(|(s, a)| ResonantState { a_plus: *a, a_minus: *a, ..s.clone() })
        .collect();
    Ok(compensation_scan(e_h, &states, &params.model, &setup.profile, &setup.options)?
        .iter()
        .map(|pt| pt.total)
        .collect())
}

/// Fits amplitudes and (E₀, ζ, E_xy) with the cloud and beam held fixed.
pub fn fit_excitation_scan(
    data: &FitData,
    setup: &ScanSetup,
    initial: &ScanParams,
    options: &LmOptions,
) -> Result<FitResult> {
    if setup.states.is_empty() {
        return invalid("at least one resonant state is required");
    }
    if initial.amplitudes.len() != setup.states.len() {
        return invalid("one initial amplitude per state is required");
    }
    let informative = data.y.iter().filter(|y| **y > 0.0).count();
    let n_par = setup.states.len() + 3;
    if informative < 5.max(n_par) {
        return Err(Error::UnderDetermined(format!(
            "{informative} scan points with counts for {n_par} parameters"
        )));
    }
    // E_xy must stay below every resonance field for both layers to exist
    let e_r_min = setup.states.iter().map(|s| s.e_r).fold(f64::INFINITY, f64::min);
    let names = scan_parameter_names(setup);
    let p0 = initial.to_vec();
    let mut parameters: Vec<Parameter> =
        names[..setup.states.len()].iter().zip(&p0).map(|(n, v)| Parameter::bounded(n, *v, Some(0.0), None)).collect();
    let k = setup.states.len();
    parameters.push(Parameter::bounded(&names[k], p0[k], Some(1e-6), None));
    parameters.push(Parameter::bounded(&names[k + 1], p0[k + 1], Some(1e-3), None));
    parameters.push(Parameter::bounded(&names[k + 2], p0[k + 2], Some(0.0), Some(e_r_min * (1.0 - 1e-9))));
    let problem = FitProblem::new(move |p, x| scan_model(setup, p, x), data.clone(), parameters);
    least_squares(&problem, options)
}

// ---------------------------------------------------------------- spectrum

/// Fixed inputs of the spectrum fit. Frequencies in the fit are cyclic MHz
/// relative to `reference` (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSetup {
    pub cavity: CavityParams,
    /// inhomogeneous FWHM, rad/s
    pub delta_omega_12: f64,
    pub gamma_decay: f64,
    pub reference: f64,
    pub quadrature: SpectrumQuadrature,
}

impl Default for SpectrumSetup {
    fn default() -> Self {
        let atoms = TwoLevelParams::default();
        SpectrumSetup {
            cavity: CavityParams::default(),
            delta_omega_12: atoms.delta_omega_12,
            gamma_decay: atoms.gamma_decay,
            reference: units::ghz_to_rad(20.55),
            quadrature: SpectrumQuadrature::default(),
        }
    }
}

pub const SPECTRUM_NAMES: [&str; 5] = ["rabi_MHz", "omega12_MHz", "omega_c_MHz", "amplitude", "offset"];

/// Spectrum parameters in physical units (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub rabi: f64,
    pub omega_12: f64,
    pub omega_c: f64,
    /// p/(1 + a)
    pub amplitude: f64,
    pub offset: f64,
}

impl SpectrumParams {
    pub fn to_vec(&self, setup: &SpectrumSetup) -> Vec<f64> {
        let off = |w: f64| units::rad_to_mhz(w - setup.reference);
        vec![units::rad_to_mhz(self.rabi), off(self.omega_12), off(self.omega_c), self.amplitude, self.offset]
    }

    pub fn from_slice(p: &[f64], setup: &SpectrumSetup) -> Result<Self> {
        if p.len() != 5 {
            return invalid("spectrum model has five parameters");
        }
        Ok(SpectrumParams {
            rabi: units::mhz_to_rad(p[0]),
            omega_12: setup.reference + units::mhz_to_rad(p[1]),
            omega_c: setup.reference + units::mhz_to_rad(p[2]),
            amplitude: p[3],
            offset: p[4],
        })
    }

    pub fn from_fit(fit: &FitResult, setup: &SpectrumSetup) -> Result<Self> {
        let v: Vec<f64> = SPECTRUM_NAMES.iter().map(|n| fit.get(n)).collect();
        Self::from_slice(&v, setup)
    }
}

/// p₂(ω_MW) = amplitude · ρ̃₂₂ + offset.
pub fn spectrum_model(setup: &SpectrumSetup, p: &[f64], omega_mw: &[f64]) -> Result<Vec<f64>> {
    let sp = SpectrumParams::from_slice(p, setup)?;
    let cavity = CavityParams { omega_c: sp.omega_c, quality_factor: None, ..setup.cavity };
    let atoms = TwoLevelParams {
        omega_12_mean: sp.omega_12,
        delta_omega_12: setup.delta_omega_12,
        gamma_decay: setup.gamma_decay,
        ..TwoLevelParams::default()
    };
    let rho = broadened_spectrum_with(omega_mw, 1.0, sp.rabi, &cavity, &atoms, &setup.quadrature)?;
    Ok(rho.iter().map(|r| sp.amplitude * r + sp.offset).collect())
}

/// Fit with ω̄₁₂ seeded at the data maximum and Ω̄ from the width of the line.
pub fn fit_spectrum(data: &FitData, setup: &SpectrumSetup, options: &LmOptions) -> Result<FitResult> {
    if data.len() < 7 {
        return Err(Error::UnderDetermined(format!("{} spectrum points, need at least 7", data.len())));
    }
    let (imax, ymax) = data.y.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, y)| if *y > b.1 { (i, *y) } else { b });
    let ymin = data.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = 0.5 * (ymax + ymin);
    let above: Vec<f64> = data.x.iter().zip(&data.y).filter(|(_, y)| **y >= half).map(|(x, _)| *x).collect();
    let fwhm = above.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - above.iter().cloned().fold(f64::INFINITY, f64::min);
    let d = setup.delta_omega_12;
    let rabi0 = ((fwhm * fwhm - d * d).max(0.25 * d * d) / 2.0).sqrt();
    let mut seed = SpectrumParams {
        rabi: rabi0,
        omega_12: data.x[imax],
        omega_c: setup.cavity.omega_c,
        amplitude: 1.0,
        offset: ymin,
    };
    let peak = spectrum_model(setup, &SpectrumParams { offset: 0.0, ..seed }.to_vec(setup), &[data.x[imax]])?[0];
    seed.amplitude = if peak > 0.0 { (ymax - ymin) / peak } else { 1.0 };
    let p0 = seed.to_vec(setup);
    let parameters = vec![
        Parameter::bounded(SPECTRUM_NAMES[0], p0[0], Some(0.0), None),
        Parameter::free(SPECTRUM_NAMES[1], p0[1]),
        Parameter::free(SPECTRUM_NAMES[2], p0[2]),
        Parameter::free(SPECTRUM_NAMES[3], p0[3]),
        Parameter::free(SPECTRUM_NAMES[4], p0[4]),
    ];
    let problem = FitProblem::new(move |p, x| spectrum_model(setup, p, x), data.clone(), parameters);
    let mut fit = least_squares(&problem, options)?;
    let kappa_mhz = units::rad_to_mhz(setup.cavity.kappa);
    // 95 % half-width wider than the cavity half linewidth
    let half = 1.959_963_984_540_054 * fit.uncertainty("omega_c_MHz");
    if !(half < kappa_mhz / 2.0) {
        fit.diagnostics.push(format!("cavity frequency poorly constrained: ±{half:.3} MHz (95 %) exceeds κ/4π = {} MHz", kappa_mhz / 2.0));
    }
    Ok(fit)
}

/// Several spectra of the same atoms and cavity at different pump powers:
/// one Ω̄ per spectrum ("rabi_MHz_0", …), shared ω̄₁₂, ω_c, amplitude and offset.
pub fn fit_spectra_joint(data: &[FitData], setup: &SpectrumSetup, options: &LmOptions) -> Result<FitResult> {
    if data.is_empty() {
        return invalid("no spectra");
    }
    let singles = data.iter().map(|d| fit_spectrum(d, setup, options)).collect::<Result<Vec<_>>>()?;
    let k = data.len();
    let mean = |name: &str| singles.iter().map(|f| f.get(name)).sum::<f64>() / k as f64;
    let mut parameters: Vec<Parameter> = singles
        .iter()
        .enumerate()
        .map(|(i, f)| Parameter::bounded(&format!("rabi_MHz_{i}"), f.get("rabi_MHz"), Some(0.0), None))
        .collect();
    for name in &SPECTRUM_NAMES[1..] {
        parameters.push(Parameter::free(name, mean(name)));
    }
    let lengths: Vec<usize> = data.iter().map(|d| d.len()).collect();
    let cat = |f: fn(&FitData) -> &Vec<f64>| data.iter().flat_map(|d| f(d).iter().copied()).collect::<Vec<f64>>();
    let joined = FitData::new(cat(|d| &d.x), cat(|d| &d.y), cat(|d| &d.sigma))?;
    let model = move |p: &[f64], x: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len());
        let mut start = 0;
        for (i, n) in lengths.iter().enumerate() {
            let q = [p[i], p[k], p[k + 1], p[k + 2], p[k + 3]];
            out.extend(spectrum_model(setup, &q, &x[start..start + n])?);
            start += n;
        }
        Ok(out)
    };
    least_squares(&FitProblem::new(model, joined, parameters), options)
}

/// (ω̄₁₂ − ω_c)/2π in MHz with its 1σ from the fit covariance.
pub fn spectrum_detuning(fit: &FitResult) -> (f64, f64) {
    let (i, j) = (fit.index("omega12_MHz").expect("spectrum fit"), fit.index("omega_c_MHz").expect("spectrum fit"));
    let c = &fit.covariance;
    (fit.estimates[i] - fit.estimates[j], (c[i][i] + c[j][j] - 2.0 * c[i][j]).max(0.0).sqrt())
}

// ---------------------------------------------------------------- Rabi trace

pub const RABI_NAMES: [&str; 4] = ["rabi_rad_per_us", "gamma_per_us", "amplitude", "offset"];

/// p₂(τ) = amplitude · (1 − e^{−γ²τ²} cos Ωτ)/2 + offset, τ in μs.
pub fn rabi_model(p: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    if p.len() != 4 {
        return invalid("Rabi model has four parameters");
    }
    let (w, g, a, c) = (p[0], p[1], p[2], p[3]);
    Ok(tau.iter().map(|t| a * (1.0 - (-(g * t).powi(2)).exp() * (w * t).cos()) / 2.0 + c).collect())
}

/// Frequency (rad/μs) of the largest periodogram peak of y − ȳ.
pub fn periodogram_peak(t: &[f64], y: &[f64]) -> Result<f64> {
    if t.len() < 4 || t.len() != y.len() {
        return invalid("periodogram needs at least four samples");
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let dt = sorted.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    if !(span > 0.0 && dt.is_finite()) {
        return invalid("sample times must not all coincide");
    }
    let (lo, hi) = (std::f64::consts::PI / span, std::f64::consts::PI / dt);
    let steps = 4000;
    let mut best = (lo, -1.0);
    for k in 0..=steps {
        let w = lo + (hi - lo) * k as f64 / steps as f64;
        let (mut c, mut s) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            c += (yi - mean) * (w * ti).cos();
            s += (yi - mean) * (w * ti).sin();
        }
        let p = c * c + s * s;
        if p > best.1 {
            best = (w, p);
        }
    }
    Ok(best.0)
}

/// Fit with Ω seeded from the periodogram and γ from b = 0.2.
pub fn fit_rabi_trace(data: &FitData, options: &LmOptions) -> Result<FitResult> {
    let w0 = periodogram_peak(&data.x, &data.y)?;
    let t_max = data.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t_min = data.x.iter().cloned().fold(f64::INFINITY, f64::min);
    let periods = (t_max - t_min) * w0 / (2.0 * std::f64::consts::PI);
    if periods < 1.5 {
        return Err(Error::UnderDetermined(format!("trace covers {periods:.2} periods, need 1.5")));
    }
    let ymax = data.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = data.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let i0 = (0..data.len()).min_by(|&a, &b| data.x[a].total_cmp(&data.x[b])).unwrap_or(0);
    let parameters = vec![
        Parameter::bounded(RABI_NAMES[0], w0, Some(0.0), None),
        Parameter::bounded(RABI_NAMES[1], 0.2 / std::f64::consts::SQRT_2 * w0, Some(0.0), None),
        Parameter::free(RABI_NAMES[2], ymax - ymin),
        Parameter::free(RABI_NAMES[3], data.y[i0].min(ymin.max(0.0))),
    ];
    let problem = FitProblem::new(rabi_model, data.clone(), parameters);
    let mut fit = least_squares(&problem, options)?;
    let w = fit.get(RABI_NAMES[0]);
    let per_period = 2.0 * std::f64::consts::PI / w * (data.len() - 1) as f64 / (t_max - t_min);
    if per_period < 4.0 {
        fit.diagnostics.push(format!("aliasing risk: {per_period:.1} samples per Rabi period"));
    }
    Ok(fit)
}

/// Slope b of γ = (b/√2) Ω̄ through the origin, weighted by 1/σ_γ², with its 1σ.
pub fn damping_ratio(pairs: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() || pairs.iter().any(|(_, _, s)| !(*s > 0.0)) {
        return invalid("need (Ω, γ, σ_γ) pairs with σ_γ > 0");
    }
    let sxx: f64 = pairs.iter().map(|(w, _, s)| w * w / (s * s)).sum();
    let sxy: f64 = pairs.iter().map(|(w, g, s)| w * g / (s * s)).sum();
    let k = std::f64::consts::SQRT_2;
    Ok((k * sxy / sxx, k / sxx.sqrt()))
}
