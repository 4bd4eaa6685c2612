//! Experiment configuration: one TOML file with five sections, all optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rydchip::atom::{BasisState, FieldConfig, QuantumDefectTable};
use rydchip::cavity::{CavityParams, EnsembleGeometry, TwoLevelParams};
use rydchip::fitting::{ScanSetup, SpectrumSetup};
use rydchip::sfi::{BinWindows, IonizationModel, RampProfile};
use rydchip::surface::{AdsorbateFieldModel, CloudBeamProfile, ExcitationOptions, ResonantState};
use rydchip::units;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub atomic: AtomicConfig,
    pub surface: SurfaceConfig,
    pub cavity: CavityConfig,
    pub sfi: SfiConfig,
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomicConfig {
    pub n_min: u32,
    pub n_max: u32,
    pub l_max: Option<u32>,
    /// quantum-defect table; the built-in Rb-87 table when absent
    pub defects_file: Option<PathBuf>,
    pub electric_direction: [f64; 3],
    pub magnetic_field_g: f64,
    pub magnetic_direction: [f64; 3],
    pub mw_polarization: [f64; 3],
    /// laser detuning from zero-field 48D5/2
    pub laser_detuning_mhz: f64,
    /// levels within ± this of the reference are kept in the map
    pub window_half_ghz: f64,
}

impl Default for AtomicConfig {
    fn default() -> Self {
        let f = FieldConfig::default();
        AtomicConfig {
            n_min: 45,
            n_max: 51,
            l_max: None,
            defects_file: None,
            electric_direction: f.electric_direction,
            magnetic_field_g: f.magnetic_field,
            magnetic_direction: f.magnetic_direction,
            mw_polarization: f.mw_polarization,
            laser_detuning_mhz: -130.0,
            window_half_ghz: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub label: String,
    pub e_r_vcm: f64,
    /// MHz per V/cm
    pub stark_gradient: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub e0_vcm: f64,
    pub zeta_um: f64,
    pub exy_vcm: f64,
    pub z_cloud_um: f64,
    pub sigma_um: f64,
    pub z_beam_um: f64,
    pub waist_um: f64,
    pub electrode_distance_um: f64,
    pub laser_linewidth_mhz: f64,
    pub states: Vec<StateConfig>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        let p = CloudBeamProfile::default();
        let states = ScanSetup::default()
            .states
            .into_iter()
            .map(|s| StateConfig { label: s.label, e_r_vcm: s.e_r, stark_gradient: s.stark_gradient, amplitude: s.a_plus })
            .collect();
        SurfaceConfig {
            e0_vcm: 37.2,
            zeta_um: 70.0,
            exy_vcm: 3.482,
            z_cloud_um: p.z_cloud,
            sigma_um: p.sigma,
            z_beam_um: p.z_beam,
            waist_um: p.w,
            electrode_distance_um: ExcitationOptions::default().electrode_distance,
            laser_linewidth_mhz: 2.0,
            states,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityConfig {
    pub omega_c_ghz: f64,
    pub kappa_mhz: f64,
    pub length_mm: f64,
    pub capacitance_pf_per_m: f64,
    pub harmonic_index: u32,
    pub quality_factor: Option<f64>,
    pub omega12_ghz: f64,
    pub delta_omega12_mhz: f64,
    pub gamma_decay_khz: f64,
    /// Ω̄/2π at unit relative power
    pub rabi_ref_mhz: f64,
    /// p/(1 + a) scale of the normalized ion signal
    pub amplitude: f64,
    pub offset: f64,
    /// Rabi-frequency spread over the cloud, σ/χ
    pub damping_b: f64,
}

impl Default for CavityConfig {
    fn default() -> Self {
        let c = CavityParams::default();
        let a = TwoLevelParams::default();
        CavityConfig {
            omega_c_ghz: units::rad_to_ghz(c.omega_c),
            kappa_mhz: units::rad_to_mhz(c.kappa),
            length_mm: c.length_mm,
            capacitance_pf_per_m: c.capacitance_per_length,
            harmonic_index: c.harmonic_index,
            quality_factor: c.quality_factor,
            omega12_ghz: units::rad_to_ghz(a.omega_12_mean),
            delta_omega12_mhz: units::rad_to_mhz(a.delta_omega_12),
            gamma_decay_khz: units::rad_to_hz(a.gamma_decay) / 1e3,
            rabi_ref_mhz: 1.9,
            amplitude: 0.2,
            offset: 0.01,
            damping_b: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub n: u32,
    pub l: u32,
    pub j2: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SfiModelKind {
    Cap,
    Classical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SfiConfig {
    pub model: SfiModelKind,
    pub n_min: u32,
    pub n_max: u32,
    pub l_max: Option<u32>,
    /// 2 m_j of the tracked block
    pub mj2: i32,
    pub r1: LevelConfig,
    pub r2: LevelConfig,
    /// `t_us,field_Vcm` rows; linear 7.2 → 210 V/cm in 1 μs when absent
    pub ramp_file: Option<PathBuf>,
    pub field_points: usize,
    pub step_us: f64,
    pub tof_us: f64,
    pub hist_start_us: f64,
    pub hist_end_us: f64,
    pub bin_us: f64,
    pub t1_us: [f64; 2],
    pub t2_us: [f64; 2],
    pub p: f64,
    pub a: f64,
    /// detected ions per run
    pub ions: f64,
}

impl Default for SfiConfig {
    fn default() -> Self {
        let w = BinWindows::default();
        SfiConfig {
            model: SfiModelKind::Cap,
            n_min: 44,
            n_max: 52,
            l_max: None,
            mj2: 1,
            r1: LevelConfig { n: 48, l: 2, j2: 5 },
            r2: LevelConfig { n: 47, l: 20, j2: 41 },
            ramp_file: None,
            field_points: 150,
            step_us: 0.002,
            tof_us: rydchip::sfi::DEFAULT_TOF_DELAY,
            hist_start_us: 1.5,
            hist_end_us: 3.0,
            bin_us: 0.005,
            t1_us: [w.t1.0, w.t1.1],
            t2_us: [w.t2.0, w.t2.1],
            p: w.p,
            a: w.a,
            ions: 10_000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// pulses per spectrum / Rabi / scan point (10 cycles × 300 in the experiment)
    pub pulses: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, pulses: 3000, output_dir: PathBuf::from("rydchip-out") }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::config("config", msg)
}

/// Sets `a.b.c = value` in a TOML table; the value is read as a TOML literal,
/// falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("--set expects key=value, got '{assignment}'")))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("'{p}' in '{key}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Reads the file (if any), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let at = &self.atomic;
        if at.n_min < 1 || at.n_min > at.n_max {
            return Err(config_err(format!("atomic n window [{}, {}] is empty", at.n_min, at.n_max)));
        }
        for f in [&at.defects_file, &self.sfi.ramp_file].into_iter().flatten() {
            if !f.is_file() {
                return Err(config_err(format!("file not found: {}", f.display())));
            }
        }
        self.field_config().validate().map_err(|e| config_err(e.to_string()))?;
        self.adsorbate().map_err(|e| config_err(e.to_string()))?;
        self.profile().validate().map_err(|e| config_err(e.to_string()))?;
        if self.surface.states.is_empty() {
            return Err(config_err("surface.states is empty"));
        }
        self.cavity_params().validate().map_err(|e| config_err(e.to_string()))?;
        self.two_level().validate().map_err(|e| config_err(e.to_string()))?;
        self.geometry().map_err(|e| config_err(e.to_string()))?;
        self.windows().validate().map_err(|e| config_err(e.to_string()))?;
        self.ionization_model().validate().map_err(|e| config_err(e.to_string()))?;
        let s = &self.sfi;
        if s.n_min < 1 || s.n_min > s.n_max {
            return Err(config_err("sfi n window is empty"));
        }
        for lv in [s.r1, s.r2] {
            BasisState::new(lv.n, lv.l, lv.j2, s.mj2).map_err(|e| config_err(format!("sfi state: {e}")))?;
        }
        if !(s.step_us > 0.0 && s.bin_us > 0.0 && s.hist_end_us > s.hist_start_us && s.field_points >= 1) {
            return Err(config_err("sfi step, bins and field grid must be positive"));
        }
        if !(s.ions > 0.0) {
            return Err(config_err("sfi.ions must be positive"));
        }
        if self.run.pulses == 0 {
            return Err(config_err("run.pulses must be positive"));
        }
        Ok(())
    }

    pub fn defects(&self) -> Result<QuantumDefectTable, CliError> {
        match &self.atomic.defects_file {
            Some(p) => QuantumDefectTable::load(p).map_err(|e| CliError::config("defects", e.to_string())),
            None => Ok(QuantumDefectTable::rb87()),
        }
    }

    pub fn field_config(&self) -> FieldConfig {
        let a = &self.atomic;
        FieldConfig {
            electric_direction: a.electric_direction,
            magnetic_field: a.magnetic_field_g,
            magnetic_direction: a.magnetic_direction,
            mw_polarization: a.mw_polarization,
            ..FieldConfig::default()
        }
    }

    pub fn adsorbate(&self) -> rydchip::Result<AdsorbateFieldModel> {
        AdsorbateFieldModel::new(self.surface.e0_vcm, self.surface.zeta_um, self.surface.exy_vcm)
    }

    pub fn profile(&self) -> CloudBeamProfile {
        let s = &self.surface;
        CloudBeamProfile { z_cloud: s.z_cloud_um, sigma: s.sigma_um, z_beam: s.z_beam_um, w: s.waist_um }
    }

    pub fn scan_setup(&self) -> ScanSetup {
        let s = &self.surface;
        ScanSetup {
            states: s
                .states
                .iter()
                .map(|st| ResonantState::symmetric(&st.label, st.e_r_vcm, st.stark_gradient, st.amplitude))
                .collect(),
            profile: self.profile(),
            options: ExcitationOptions {
                electrode_distance: s.electrode_distance_um,
                laser_linewidth: units::mhz_to_rad(s.laser_linewidth_mhz),
                ..ExcitationOptions::default()
            },
        }
    }

    pub fn cavity_params(&self) -> CavityParams {
        let c = &self.cavity;
        CavityParams {
            omega_c: units::ghz_to_rad(c.omega_c_ghz),
            kappa: units::mhz_to_rad(c.kappa_mhz),
            length_mm: c.length_mm,
            capacitance_per_length: c.capacitance_pf_per_m,
            harmonic_index: c.harmonic_index,
            quality_factor: c.quality_factor,
        }
    }

    pub fn two_level(&self) -> TwoLevelParams {
        let c = &self.cavity;
        TwoLevelParams {
            omega_12_mean: units::ghz_to_rad(c.omega12_ghz),
            delta_omega_12: units::mhz_to_rad(c.delta_omega12_mhz),
            gamma_decay: units::hz_to_rad(c.gamma_decay_khz * 1e3),
            ..TwoLevelParams::default()
        }
    }

    pub fn spectrum_setup(&self) -> SpectrumSetup {
        let atoms = self.two_level();
        SpectrumSetup {
            cavity: self.cavity_params(),
            delta_omega_12: atoms.delta_omega_12,
            gamma_decay: atoms.gamma_decay,
            ..SpectrumSetup::default()
        }
    }

    pub fn geometry(&self) -> rydchip::Result<EnsembleGeometry> {
        EnsembleGeometry::from_ratio(0.0, self.surface.sigma_um, self.cavity.damping_b)
    }

    pub fn windows(&self) -> BinWindows {
        let s = &self.sfi;
        BinWindows { t1: (s.t1_us[0], s.t1_us[1]), t2: (s.t2_us[0], s.t2_us[1]), p: s.p, a: s.a }
    }

    pub fn ionization_model(&self) -> IonizationModel {
        match self.sfi.model {
            SfiModelKind::Cap => IonizationModel::cap(),
            SfiModelKind::Classical => IonizationModel::classical(),
        }
    }

    pub fn ramp(&self, override_path: Option<&Path>) -> Result<RampProfile, CliError> {
        match override_path.or(self.sfi.ramp_file.as_deref()) {
            Some(p) => {
                let f = std::fs::File::open(p)
                    .map_err(|e| CliError::config("ramp", format!("cannot read {}: {e}", p.display())))?;
                RampProfile::from_csv(f).map_err(|e| CliError::config("ramp", format!("{}: {e}", p.display())))
            }
            None => Ok(RampProfile::standard()),
        }
    }
}
