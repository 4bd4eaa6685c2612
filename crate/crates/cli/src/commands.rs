//! One function per subcommand. Each writes CSV data, a JSON sidecar and a
//! gnuplot stub into the output directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use rydchip::atom::{
    build_basis, build_hamiltonian_with, diagonalize, reference_energy, BasisOperators, BasisState, FieldConfig,
    QuantumDefectTable, RadialSet, StarkSolver, Windows,
};
use rydchip::cavity::{averaged_rabi_trace, averaged_rabi_trace_quadrature, transition_linewidth, EnsembleGeometry};
use rydchip::fitting::{
    damping_ratio, fit_excitation_scan, fit_rabi_trace, fit_spectra_joint, rabi_model, spectrum_detuning,
    spectrum_model, synthesize, FitData, FitReport, LmOptions, ScanParams, SpectrumParams,
};
use rydchip::sfi::{
    arrival_histogram, evolve_through_ramp, infer_population, ArrivalHistogram, Evolution, IonizationModel,
    PopulationEstimate, RampProfile, RateTrack, SfiBlock,
};
use rydchip::surface::{
    compensation_scan, excitation_layer_positions, layer_gradient, total_field, write_scan_csv, AdsorbateFieldModel,
    CompensationField,
};
use rydchip::units;

use crate::config::{ExperimentConfig, LevelConfig, SfiModelKind};
use crate::output::Outputs;
use crate::CliError;

/// Evenly spaced points including both ends; one point gives `[lo]`.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Status of a finished command: fits that did not converge give exit code 1
/// after all files are written.
pub enum Outcome {
    Done,
    NotConverged(String),
}

fn core(stage: &str) -> impl Fn(rydchip::Error) -> CliError + '_ {
    move |e| CliError::from_core(stage, e)
}

fn grid_arg(stage: &str, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(CliError::config(stage, "range ends must be finite"));
    }
    if steps == 0 || hi < lo || (steps > 1 && hi == lo) {
        return Err(CliError::config(stage, format!("empty range {lo} .. {hi} with {steps} steps")));
    }
    Ok(linspace(lo, hi, steps))
}

fn csv_bytes(stage: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let err = |e: csv::Error| CliError::config(stage, format!("csv output failed: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::config(stage, format!("csv output failed: {e}")))
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

// ---------------------------------------------------------------- stark-map

#[derive(Serialize)]
struct StarkSummary {
    basis_size: usize,
    field_points: usize,
    laser_detuning_mhz: f64,
    crossings: Vec<rydchip::atom::Crossing>,
    tracking_diagnostics: Vec<rydchip::atom::TrackingDiagnostic>,
}

pub fn stark_map(cfg: &ExperimentConfig, emin: f64, emax: f64, steps: usize, out: &mut Outputs) -> Result<Outcome, CliError> {
    let grid = grid_arg("stark-map", emin, emax, steps)?;
    if emin < 0.0 {
        return Err(CliError::config("stark-map", "field magnitudes must be ≥ 0"));
    }
    let defects = cfg.defects()?;
    let at = &cfg.atomic;
    let basis = build_basis(at.n_min, at.n_max, at.l_max).map_err(core("basis"))?;
    let basis_size = basis.len();
    let reference = reference_energy(&defects, 48, 2, 5).map_err(core("reference"))?;
    let solver = StarkSolver::new(basis, &defects, reference).map_err(core("stark-solver"))?;
    let map = solver
        .stark_map(&cfg.field_config(), &grid, &Windows::around(0.0, at.window_half_ghz))
        .map_err(core("stark-map"))?;
    let mut buf = Vec::new();
    map.write_csv(&mut buf).map_err(core("stark-map"))?;
    out.write("stark_map.csv", &buf)?;
    let summary = StarkSummary {
        basis_size,
        field_points: grid.len(),
        laser_detuning_mhz: at.laser_detuning_mhz,
        crossings: map.crossings(units::mhz_to_rad(at.laser_detuning_mhz)),
        tracking_diagnostics: map.tracking.diagnostics.clone(),
    };
    for c in &summary.crossings {
        println!("crossing at {:.4} V/cm, slope {:.1} MHz/(V/cm), {}", c.field, c.slope, c.dominant);
    }
    out.write_json("stark_map.json", &summary)?;
    out.write(
        "stark_map.gp",
        b"set datafile separator ','\nset xlabel 'E (V/cm)'\nset ylabel 'E/h - E(48D5/2) (GHz)'\n\
plot 'stark_map.csv' every ::1 using 1:3 with dots notitle\n",
    )?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- excitation-scan

fn read_two_columns(stage: &str, path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let f = std::fs::File::open(path)
        .map_err(|e| CliError::config(stage, format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(f);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let bad = |m: String| CliError::config(stage, format!("{}: row {}: {m}", path.display(), i + 2));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() < 2 {
            return Err(bad("needs two columns".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("'{s}' is not a number")));
        x.push(num(&rec[0])?);
        y.push(num(&rec[1])?);
    }
    Ok((x, y))
}

pub fn excitation_scan(
    cfg: &ExperimentConfig,
    ehmin: f64,
    ehmax: f64,
    steps: usize,
    fit: Option<&PathBuf>,
    out: &mut Outputs,
) -> Result<Outcome, CliError> {
    let grid = grid_arg("excitation-scan", ehmin, ehmax, steps)?;
    let setup = cfg.scan_setup();
    let model = cfg.adsorbate().map_err(core("config"))?;
    let scan = compensation_scan(&grid, &setup.states, &model, &setup.profile, &setup.options)
        .map_err(core("excitation-scan"))?;
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, &setup.states, &scan).map_err(core("excitation-scan"))?;
    out.write("excitation_scan.csv", &buf)?;
    out.write(
        "excitation_scan.gp",
        b"set datafile separator ','\nset xlabel 'E_h (V/cm)'\nset ylabel 'excitations per pulse'\n\
plot 'excitation_scan.csv' using 1:2 skip 1 with lines title 'total'\n",
    )?;
    let Some(path) = fit else { return Ok(Outcome::Done) };
    let (x, counts) = read_two_columns("excitation-fit", path)?;
    let data = FitData::from_counts(x, &counts, cfg.run.pulses as f64).map_err(core("excitation-fit"))?;
    let initial = ScanParams { amplitudes: setup.states.iter().map(|s| s.a_plus).collect(), model };
    let result = fit_excitation_scan(&data, &setup, &initial, &LmOptions::default()).map_err(core("excitation-fit"))?;
    out.write_json("excitation_scan_fit.json", &result.report(None))?;
    Ok(if result.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged("excitation-fit".into())
    })
}

// ---------------------------------------------------------------- spectrum

/// `start:stop:count` in GHz.
pub fn parse_fgrid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::config("spectrum", format!("--fgrid expects start:stop:count in GHz, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    grid_arg("spectrum", lo, hi, n)
}

fn check_powers(stage: &str, powers: &[f64]) -> Result<(), CliError> {
    if powers.is_empty() || powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(CliError::config(stage, "powers must be positive"));
    }
    Ok(())
}

fn power_tag(p: f64) -> String {
    format!("{p}").replace('.', "p")
}

#[derive(Serialize)]
struct SpectrumFitSummary {
    powers: Vec<f64>,
    fit: FitReport,
    rabi_mhz: Vec<f64>,
    rabi_ratios: Vec<f64>,
    detuning_mhz: f64,
    detuning_sigma_mhz: f64,
}

pub fn spectrum(
    cfg: &ExperimentConfig,
    powers: &[f64],
    fgrid_ghz: &[f64],
    do_fit: bool,
    out: &mut Outputs,
) -> Result<Outcome, CliError> {
    check_powers("spectrum", powers)?;
    let setup = cfg.spectrum_setup();
    let omega: Vec<f64> = fgrid_ghz.iter().map(|f| units::ghz_to_rad(*f)).collect();
    let c = &cfg.cavity;
    let mut data = Vec::new();
    for (k, &p) in powers.iter().enumerate() {
        let truth = SpectrumParams {
            rabi: units::mhz_to_rad(c.rabi_ref_mhz * p.sqrt()),
            omega_12: units::ghz_to_rad(c.omega12_ghz),
            omega_c: units::ghz_to_rad(c.omega_c_ghz),
            amplitude: c.amplitude,
            offset: c.offset,
        };
        let mean = spectrum_model(&setup, &truth.to_vec(&setup), &omega).map_err(core("spectrum"))?;
        let ds = synthesize(&omega, &mean, cfg.run.pulses, cfg.run.seed * 10 + k as u64).map_err(core("spectrum"))?;
        let rows = (0..omega.len()).map(|i| {
            vec![format!("{:.7}", fgrid_ghz[i]), fmt(mean[i]), format!("{}", ds.counts[i]), fmt(ds.counts[i] / ds.pulses as f64)]
        });
        let bytes = csv_bytes("spectrum", &["f_GHz", "p2_model", "counts", "p2_measured"], rows)?;
        out.write(&format!("spectrum_P{}.csv", power_tag(p)), &bytes)?;
        data.push(ds.fit_data().map_err(core("spectrum"))?);
    }
    let plots: Vec<String> = powers
        .iter()
        .map(|p| format!("'spectrum_P{}.csv' using 1:4 skip 1 title 'P = {p}'", power_tag(*p)))
        .collect();
    out.write(
        "spectrum.gp",
        format!(
            "set datafile separator ','\nset xlabel 'f_MW (GHz)'\nset ylabel 'p2'\nplot {}\n",
            plots.join(", \\\n     ")
        )
        .as_bytes(),
    )?;
    if !do_fit {
        return Ok(Outcome::Done);
    }
    let fit = fit_spectra_joint(&data, &setup, &LmOptions::default()).map_err(core("spectrum-fit"))?;
    let rabi_mhz: Vec<f64> = (0..powers.len()).map(|i| fit.get(&format!("rabi_MHz_{i}"))).collect();
    let (det, sig) = spectrum_detuning(&fit);
    let summary = SpectrumFitSummary {
        powers: powers.to_vec(),
        fit: fit.report(Some(cfg.run.seed)),
        rabi_ratios: rabi_mhz.iter().map(|r| r / rabi_mhz[0]).collect(),
        rabi_mhz,
        detuning_mhz: det,
        detuning_sigma_mhz: sig,
    };
    println!(
        "Rabi ratios {:?}; detuning {:.3} ± {:.3} MHz",
        summary.rabi_ratios.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>(),
        det,
        sig
    );
    out.write_json("spectrum_fit.json", &summary)?;
    Ok(if fit.converged { Outcome::Done } else { Outcome::NotConverged("spectrum-fit".into()) })
}

// ---------------------------------------------------------------- rabi

#[derive(Serialize)]
struct RabiFitSummary {
    powers: Vec<f64>,
    fits: Vec<FitReport>,
    damping_b: f64,
    damping_b_sigma: f64,
}

pub fn parse_time_us(s: &str) -> Result<f64, CliError> {
    let t = s.trim();
    let t = t.strip_suffix("us").or_else(|| t.strip_suffix("μs")).unwrap_or(t);
    match t.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(CliError::config("rabi", format!("--tmax expects a positive time in μs, got '{s}'"))),
    }
}

pub fn rabi(
    cfg: &ExperimentConfig,
    powers: &[f64],
    tmax_us: f64,
    tsteps: usize,
    do_fit: bool,
    out: &mut Outputs,
) -> Result<Outcome, CliError> {
    check_powers("rabi", powers)?;
    let t_us = grid_arg("rabi", 0.0, tmax_us, tsteps)?;
    let t_s: Vec<f64> = t_us.iter().map(|t| t * 1e-6).collect();
    let geometry = cfg.geometry().map_err(core("config"))?;
    let c = &cfg.cavity;
    let mut fits = Vec::new();
    let mut pairs = Vec::new();
    let mut not_converged = false;
    for (k, &p) in powers.iter().enumerate() {
        let w = units::mhz_to_rad(c.rabi_ref_mhz * p.sqrt());
        let d = averaged_rabi_trace(w, &geometry, &t_s).map_err(core("rabi"))?;
        let mean: Vec<f64> = d.iter().map(|d| c.amplitude * (1.0 - d) / 2.0 + c.offset).collect();
        let ds = synthesize(&t_us, &mean, cfg.run.pulses, cfg.run.seed * 10 + k as u64).map_err(core("rabi"))?;
        let rows = (0..t_us.len()).map(|i| {
            vec![format!("{:.6}", t_us[i]), fmt(mean[i]), format!("{}", ds.counts[i]), fmt(ds.counts[i] / ds.pulses as f64)]
        });
        let bytes = csv_bytes("rabi", &["t_us", "p2_model", "counts", "p2_measured"], rows)?;
        out.write(&format!("rabi_P{}.csv", power_tag(p)), &bytes)?;
        if do_fit {
            let fit = fit_rabi_trace(&ds.fit_data().map_err(core("rabi-fit"))?, &LmOptions::default())
                .map_err(core("rabi-fit"))?;
            not_converged |= !fit.converged;
            pairs.push((fit.get("rabi_rad_per_us"), fit.get("gamma_per_us"), fit.uncertainty("gamma_per_us")));
            println!(
                "P = {p}: Ω̄ = 2π × {:.3} MHz, γ = {:.3} ± {:.3} μs⁻¹",
                fit.get("rabi_rad_per_us") / (2.0 * std::f64::consts::PI),
                fit.get("gamma_per_us"),
                fit.uncertainty("gamma_per_us")
            );
            fits.push(fit.report(Some(cfg.run.seed * 10 + k as u64)));
        }
    }
    out.write(
        "rabi.gp",
        b"set datafile separator ','\nset xlabel 't (us)'\nset ylabel 'p2'\n\
plot for [f in system('ls rabi_P*.csv')] f using 1:4 skip 1 title f\n",
    )?;
    if !do_fit {
        return Ok(Outcome::Done);
    }
    let (b, sb) = if pairs.iter().all(|(_, _, s)| *s > 0.0) {
        damping_ratio(&pairs).map_err(core("rabi-fit"))?
    } else {
        (f64::NAN, f64::NAN)
    };
    println!("b = {b:.3} ± {sb:.3}");
    out.write_json("rabi_fit.json", &RabiFitSummary { powers: powers.to_vec(), fits, damping_b: b, damping_b_sigma: sb })?;
    Ok(if not_converged { Outcome::NotConverged("rabi-fit".into()) } else { Outcome::Done })
}

// ---------------------------------------------------------------- sfi

pub fn parse_populations(s: &str) -> Result<(f64, f64), CliError> {
    let bad = |m: String| CliError::config("sfi", m);
    let mut map = BTreeMap::new();
    for item in s.split(',').filter(|x| !x.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| bad(format!("--populations expects r1=..,r2=.., got '{item}'")))?;
        let v: f64 = v.trim().parse().map_err(|_| bad(format!("'{v}' is not a number")))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(bad(format!("population of {k} must be ≥ 0")));
        }
        match k.trim() {
            "r1" | "r2" => {
                map.insert(k.trim().to_string(), v);
            }
            other => return Err(bad(format!("unknown state '{other}' (expected r1 or r2)"))),
        }
    }
    let r1 = map.get("r1").copied().unwrap_or(0.0);
    let r2 = map.get("r2").copied().unwrap_or(0.0);
    if r1 + r2 <= 0.0 {
        return Err(bad("populations sum to zero".into()));
    }
    Ok((r1, r2))
}

fn track(
    cfg: &ExperimentConfig,
    defects: &QuantumDefectTable,
    block: Option<&SfiBlock>,
    level: LevelConfig,
    fields: &[f64],
    model: &IonizationModel,
) -> Result<RateTrack, CliError> {
    let state = BasisState::new(level.n, level.l, level.j2, cfg.sfi.mj2).map_err(core("config"))?;
    match block {
        Some(b) => b.track(&state, fields, model),
        None => RateTrack::classical(&state, defects, model, fields),
    }
    .map_err(core("sfi-tracking"))
}

#[derive(Serialize)]
struct SfiSummary {
    populations: BTreeMap<String, f64>,
    rho22_input: f64,
    model: SfiModelKind,
    ions: f64,
    histogram_total: f64,
    histogram_t1: f64,
    histogram_t2: f64,
    inferred_from_histogram: Option<PopulationEstimate>,
    detection_model_t1: f64,
    detection_model_t2: f64,
    detection_model_ratio: f64,
    inferred_from_detection_model: PopulationEstimate,
    tracking_notes: usize,
}

pub fn sfi(
    cfg: &ExperimentConfig,
    populations: (f64, f64),
    ramp_path: Option<&PathBuf>,
    out: &mut Outputs,
) -> Result<Outcome, CliError> {
    let s = &cfg.sfi;
    let ramp: RampProfile = cfg.ramp(ramp_path.map(|p| p.as_path()))?;
    let (f_lo, f_hi) = ramp.field_range();
    if !(f_hi > f_lo) {
        return Err(CliError::config("ramp", "ramp field range is empty"));
    }
    let fields = linspace(f_lo, f_hi, s.field_points + 1);
    let defects = cfg.defects()?;
    let model = cfg.ionization_model();
    let block = match s.model {
        SfiModelKind::Cap => Some(SfiBlock::new(s.n_min, s.n_max, s.l_max, s.mj2, &defects).map_err(core("sfi-block"))?),
        SfiModelKind::Classical => None,
    };
    let t1 = track(cfg, &defects, block.as_ref(), s.r1, &fields, &model)?;
    let t2 = track(cfg, &defects, block.as_ref(), s.r2, &fields, &model)?;
    let evolve = |t: &RateTrack| -> Result<Evolution, CliError> {
        evolve_through_ramp(t, &ramp, s.step_us).map_err(core("sfi-evolution"))
    };
    let (e1, e2) = (evolve(&t1)?, evolve(&t2)?);
    // r_x holds a × (r1 + r2) and ionizes like r1
    let (p1, p2) = populations;
    let m = p1 + p2;
    let scale = s.ions / ((1.0 + s.a) * m);
    let w1 = scale * (p1 + s.a * m);
    let w2 = scale * p2;
    let nbins = ((s.hist_end_us - s.hist_start_us) / s.bin_us).round().max(1.0) as usize;
    let edges = linspace(s.hist_start_us, s.hist_end_us, nbins + 1);
    let hist: ArrivalHistogram =
        arrival_histogram(&[(&e1, w1), (&e2, w2)], &edges, s.tof_us).map_err(core("sfi-histogram"))?;
    let mut buf = Vec::new();
    hist.write_csv(&mut buf).map_err(core("sfi-histogram"))?;
    out.write("sfi_histogram.csv", &buf)?;
    out.write(
        "sfi_histogram.gp",
        b"set datafile separator ','\nset xlabel 'arrival time (us)'\nset ylabel 'counts'\n\
plot 'sfi_histogram.csv' using (($1+$2)/2):3 skip 1 with steps notitle\n",
    )?;

    let windows = cfg.windows();
    let (h1, h2) = windows.window_counts(&hist);
    let from_hist = infer_population(h1, h2, &windows).ok();
    let rho = p2 / m;
    let (d1, d2) = windows.expected_counts(rho, s.ions).map_err(core("sfi-inference"))?;
    let from_model = infer_population(d1, d2, &windows).map_err(core("sfi-inference"))?;
    println!(
        "histogram windows T1 = {h1:.1}, T2 = {h2:.1}; detection model N_T1/N_T2 = {:.3}, ρ22 = {:.3} ± {:.3}",
        d1 / d2,
        from_model.rho22,
        from_model.std_error
    );
    let summary = SfiSummary {
        populations: [("r1".to_string(), p1), ("r2".to_string(), p2)].into_iter().collect(),
        rho22_input: rho,
        model: s.model,
        ions: s.ions,
        histogram_total: hist.total(),
        histogram_t1: h1,
        histogram_t2: h2,
        inferred_from_histogram: from_hist,
        detection_model_t1: d1,
        detection_model_t2: d2,
        detection_model_ratio: d1 / d2,
        inferred_from_detection_model: from_model,
        tracking_notes: t1.notes.len() + t2.notes.len(),
    };
    out.write_json("sfi.json", &summary)?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- selftest

#[derive(Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> rydchip::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn hermiticity() -> rydchip::Result<(bool, String)> {
    let defects = QuantumDefectTable::rb87();
    let basis = build_basis(8, 10, None)?;
    let ops = BasisOperators::new(&basis, &RadialSet::new(&basis, &defects));
    let s = 1.0 / 3f64.sqrt();
    let fields = FieldConfig {
        electric_field: 900.0,
        electric_direction: [s, s, s],
        magnetic_field: 200.0,
        magnetic_direction: [0.0, 0.6, 0.8],
        mw_polarization: [0.0, 0.0, 1.0],
    };
    let h = build_hamiltonian_with(&basis, &fields, &defects, &ops, reference_energy(&defects, 9, 2, 5)?)?;
    let herm = h.hermiticity_defect();
    let states = diagonalize(&h, &basis)?;
    let mut worst: f64 = 0.0;
    for (a, sa) in states.iter().enumerate() {
        for sb in &states[a..] {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, y) in sa.amplitudes.iter().zip(&sb.amplitudes) {
                re += x.re * y.re + x.im * y.im;
                im += x.re * y.im - x.im * y.re;
            }
            let target = if std::ptr::eq(sa, sb) { 1.0 } else { 0.0 };
            worst = worst.max((re - target).hypot(im));
        }
    }
    Ok((herm < 1e-12 && worst < 1e-10, format!("Hermiticity defect {herm:.1e}, Gram deviation {worst:.1e}")))
}

fn hydrogenic_fan() -> rydchip::Result<(bool, String)> {
    // zero defects, B = 0: the n = 10 shell fans out as (3/2) n k e a₀ F
    let defects = QuantumDefectTable::hydrogenic();
    let basis = build_basis(9, 11, None)?;
    let f = 20.0;
    let fields = FieldConfig {
        electric_field: f,
        electric_direction: [0.0, 0.0, 1.0],
        magnetic_field: 0.0,
        ..FieldConfig::default()
    };
    let ops = BasisOperators::new(&basis, &RadialSet::new(&basis, &defects));
    let e10 = -units::hz_to_rad(units::rydberg_rb87_hz()) / 100.0;
    let h = build_hamiltonian_with(&basis, &fields, &defects, &ops, e10)?;
    let unit = units::dipole_field_rad(1.0, f);
    let slopes: Vec<f64> = diagonalize(&h, &basis)?
        .into_iter()
        .filter(|s| s.energy.abs() < 200.0 * unit)
        .map(|s| s.energy / unit)
        .collect();
    let mut worst: f64 = 0.0;
    for s in &slopes {
        let k = (s / 15.0).round();
        worst = worst.max((s - 15.0 * k).abs() / (15.0 * k).abs().max(15.0));
    }
    // n = 10 has 2n² = 200 states with spin
    Ok((slopes.len() == 200 && worst < 0.01, format!("{} levels, worst relative deviation {worst:.2e}", slopes.len())))
}

fn field_gradients() -> rydchip::Result<(bool, String)> {
    let model = AdsorbateFieldModel::new(37.2, 70.0, 3.482)?;
    let comp = CompensationField::new(7.2)?;
    let mut worst: f64 = 0.0;
    for e_r in [3.57, 3.625] {
        for (branch, z) in excitation_layer_positions(e_r, &model, &comp)? {
            let analytic = layer_gradient(e_r, &model, &comp, branch)?;
            let h = 1e-4;
            let fd = (total_field(z + h, &model, &comp) - total_field(z - h, &model, &comp)) / (2.0 * h);
            worst = worst.max((fd.abs() - analytic).abs() / analytic);
        }
    }
    Ok((worst < 1e-6, format!("worst relative difference {worst:.1e}")))
}

fn damping_closed_form() -> rydchip::Result<(bool, String)> {
    let g = EnsembleGeometry::from_ratio(0.0, 25.0, 0.2)?;
    let t: Vec<f64> = (0..=60).map(|i| i as f64 * 0.025e-6).collect();
    let w = units::mhz_to_rad(4.3);
    let a = averaged_rabi_trace(w, &g, &t)?;
    let b = averaged_rabi_trace_quadrature(w, &g, &t)?;
    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok((worst < 1e-6, format!("max |D̄ closed − D̄ quadrature| = {worst:.1e}")))
}

fn sfi_checks() -> rydchip::Result<(bool, String)> {
    let defects = QuantumDefectTable::rb87();
    let ramp = RampProfile::standard();
    let fields = linspace(7.2, 210.0, 2001);
    let tr = RateTrack::classical(&BasisState::new(48, 2, 5, 1)?, &defects, &IonizationModel::classical(), &fields)?;
    let ev = evolve_through_ramp(&tr, &ramp, 0.002)?;
    let norm = ev.survival.iter().zip(&ev.ionized).map(|(s, i)| (s + i - 1.0).abs()).fold(0.0, f64::max);
    // 10 ns bins; the logistic threshold ionizes within a fraction of a step
    let edges = linspace(1.5, 3.0, 151);
    let fine = evolve_through_ramp(&tr, &ramp, 0.001)?;
    let ha = arrival_histogram(&[(&ev, 1.0)], &edges, 1.53)?;
    let hb = arrival_histogram(&[(&fine, 1.0)], &edges, 1.53)?;
    let peak = ha.counts.iter().cloned().fold(0.0, f64::max);
    let moved = ha.counts.iter().zip(&hb.counts).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
    Ok((norm < 1e-9 && moved < 0.01, format!("norm defect {norm:.1e}, step-halving change {:.2} % of peak", moved * 100.0)))
}

fn fit_round_trip() -> rydchip::Result<(bool, String)> {
    let truth = [2.0 * std::f64::consts::PI * 4.3, 2.7, 0.2, 0.01];
    let t = linspace(0.0, 1.5, 76);
    let y = rabi_model(&truth, &t)?;
    let sigma = y.iter().map(|v| (v.abs() * 3000.0).max(1.0).sqrt() / 3000.0).collect();
    let fit = fit_rabi_trace(&FitData::new(t, y, sigma)?, &LmOptions::default())?;
    let worst = truth
        .iter()
        .zip(&fit.estimates)
        .map(|(a, b)| (a - b).abs() / a.abs())
        .fold(0.0, f64::max);
    Ok((fit.converged && worst < 1e-6, format!("worst relative parameter error {worst:.1e}")))
}

fn linewidth_chain() -> rydchip::Result<(bool, String)> {
    let w = units::rad_to_mhz(transition_linewidth(units::mhz_to_rad(2.0), -300.0, -463.0)?);
    Ok(((w - 1.0867).abs() < 5e-5, format!("Δω₁₂ = 2π × {w:.4} MHz")))
}

fn inference_round_trip() -> rydchip::Result<(bool, String)> {
    let w = rydchip::sfi::BinWindows::default();
    let (a, b) = w.expected_counts(0.9, 10_000.0)?;
    let est = infer_population(a, b, &w)?;
    Ok(((est.rho22 - 0.9).abs() < 1e-12, format!("N_T1/N_T2 = {:.3}, ρ22 = {:.6}", a / b, est.rho22)))
}

pub fn selftest(out: &mut Outputs) -> Result<Outcome, CliError> {
    let checks = vec![
        check("hermiticity-orthonormality", hermiticity),
        check("hydrogenic-stark-fan", hydrogenic_fan),
        check("field-gradients", field_gradients),
        check("damping-closed-form", damping_closed_form),
        check("sfi-norm-and-step-halving", sfi_checks),
        check("rabi-fit-round-trip", fit_round_trip),
        check("linewidth-chain", linewidth_chain),
        check("population-round-trip", inference_round_trip),
    ];
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    out.write_json("selftest.json", &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(if failed.is_empty() { Outcome::Done } else { Outcome::NotConverged(format!("selftest ({})", failed.join(", "))) })
}
