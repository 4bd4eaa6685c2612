//! Static field above the chip and the resonant excitation layers it creates.
//!
//! Positions are in μm from the chip surface, fields in V/cm.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units;

/// Adsorbate field E_z = E₀ e^{−z/ζ} plus an uncompensated lateral part E_xy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdsorbateFieldModel {
    #[serde(rename = "E0_Vcm")]
    pub e0: f64,
    #[serde(rename = "zeta_um")]
    pub zeta: f64,
    #[serde(rename = "Exy_Vcm")]
    pub e_xy: f64,
}

impl AdsorbateFieldModel {
    pub fn new(e0: f64, zeta: f64, e_xy: f64) -> Result<Self> {
        let m = AdsorbateFieldModel { e0, zeta, e_xy };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0.is_finite() && self.e0 > 0.0) {
            return invalid(format!("E0 must be positive, got {}", self.e0));
        }
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return invalid(format!("zeta must be positive, got {}", self.zeta));
        }
        if !(self.e_xy.is_finite() && self.e_xy >= 0.0) {
            return invalid(format!("E_xy must be ≥ 0, got {}", self.e_xy));
        }
        Ok(())
    }

    /// Perpendicular adsorbate component at height z.
    pub fn e_z(&self, z: f64) -> f64 {
        self.e0 * (-z / self.zeta).exp()
    }
}

/// Homogeneous field between extraction electrode and chip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationField {
    #[serde(rename = "Eh_Vcm")]
    pub e_h: f64,
}

impl CompensationField {
    /// Field per electrode volt, (V/cm)/V.
    pub const FIELD_PER_VOLT: f64 = 3.0;

    pub fn new(e_h: f64) -> Result<Self> {
        if !(e_h.is_finite() && e_h >= 0.0) {
            return invalid(format!("E_h must be ≥ 0, got {e_h}"));
        }
        Ok(CompensationField { e_h })
    }

    pub fn from_voltage(u: f64) -> Result<Self> {
        Self::new(u * Self::FIELD_PER_VOLT)
    }

    pub fn voltage(&self) -> f64 {
        self.e_h / Self::FIELD_PER_VOLT
    }
}

/// Gaussian atomic cloud and laser profile along z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudBeamProfile {
    pub z_cloud: f64,
    pub sigma: f64,
    pub z_beam: f64,
    /// effective two-photon waist
    pub w: f64,
}

impl Default for CloudBeamProfile {
    fn default() -> Self {
        CloudBeamProfile { z_cloud: 130.0, sigma: 25.0, z_beam: 130.0, w: 25.0 }
    }
}

/// w = w₇₈₀ w₄₈₀ / √(w₇₈₀² + w₄₈₀²) for Ω ∝ √(I₇₈₀ I₄₈₀).
pub fn effective_waist(w780: f64, w480: f64) -> f64 {
    w780 * w480 / (w780 * w780 + w480 * w480).sqrt()
}

impl CloudBeamProfile {
    pub fn from_beams(z_cloud: f64, sigma: f64, z_beam: f64, w780: f64, w480: f64) -> Result<Self> {
        let p = CloudBeamProfile { z_cloud, sigma, z_beam, w: effective_waist(w780, w480) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.w > 0.0 && self.sigma.is_finite() && self.w.is_finite()) {
            return invalid("cloud radius and beam waist must be positive");
        }
        if !(self.z_cloud.is_finite() && self.z_beam.is_finite()) {
            return invalid("cloud and beam centres must be finite");
        }
        Ok(())
    }

    /// Relative atomic line density n(z).
    pub fn density(&self, z: f64) -> f64 {
        let d = z - self.z_cloud;
        (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Relative laser intensity I(z).
    pub fn intensity(&self, z: f64) -> f64 {
        let d = z - self.z_beam;
        (-2.0 * d * d / (self.w * self.w)).exp()
    }
}

/// |E(z)| = √((E₀e^{−z/ζ} − E_h)² + E_xy²).
pub fn total_field(z: f64, model: &AdsorbateFieldModel, comp: &CompensationField) -> f64 {
    let ez = model.e_z(z) - comp.e_h;
    (ez * ez + model.e_xy * model.e_xy).sqrt()
}

/// Where the minimum of |E(z)| over z ≥ 0 sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinimumKind {
    /// z_min = ζ ln(E₀/E_h) > 0
    Interior,
    /// E_h ≥ E₀: the field only grows away from the chip
    AtSurface,
    /// E_h = 0: the field decays towards E_xy without a minimum
    AtInfinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMinimum {
    pub z_min: f64,
    pub e_min: f64,
    pub kind: MinimumKind,
}

pub fn field_minimum(model: &AdsorbateFieldModel, comp: &CompensationField) -> FieldMinimum {
    if comp.e_h == 0.0 {
        FieldMinimum { z_min: f64::INFINITY, e_min: model.e_xy, kind: MinimumKind::AtInfinity }
    } else if comp.e_h >= model.e0 {
        FieldMinimum { z_min: 0.0, e_min: total_field(0.0, model, comp), kind: MinimumKind::AtSurface }
    } else {
        FieldMinimum { z_min: model.zeta * (model.e0 / comp.e_h).ln(), e_min: model.e_xy, kind: MinimumKind::Interior }
    }
}

/// Side of the field minimum: `Plus` is closer to the chip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
    /// E_r = E_xy: both layers coincide at z_min
    Merged,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
            Branch::Merged => "0",
        }
    }
}

/// Heights where |E| = E_r. Roots of E₀e^{−z/ζ} = E_h ± √(E_r² − E_xy²); a root is
/// dropped when its right-hand side is ≤ 0.
pub fn excitation_layer_positions(
    e_r: f64,
    model: &AdsorbateFieldModel,
    comp: &CompensationField,
) -> Result<Vec<(Branch, f64)>> {
    if !(e_r.is_finite() && e_r > 0.0) {
        return invalid(format!("resonance field must be positive, got {e_r}"));
    }
    let diff = e_r * e_r - model.e_xy * model.e_xy;
    if diff < 0.0 {
        return Ok(vec![]);
    }
    let s = diff.sqrt();
    let z_of = |u: f64| model.zeta * (model.e0 / u).ln();
    if s == 0.0 {
        if comp.e_h > 0.0 {
            return Ok(vec![(Branch::Merged, z_of(comp.e_h))]);
        }
        return Ok(vec![]);
    }
    let mut out = vec![(Branch::Plus, z_of(comp.e_h + s))];
    if comp.e_h - s > 0.0 {
        out.push((Branch::Minus, z_of(comp.e_h - s)));
    }
    Ok(out)
}

/// |dE/dz| at z_{r,±}: E_h² β (1 ± β) / (ζ E_r) with β = √(E_r² − E_xy²)/E_h,
/// written as s (E_h ± s)/(ζ E_r) with s = E_h β so that E_h = 0 is allowed.
pub fn layer_gradient(e_r: f64, model: &AdsorbateFieldModel, comp: &CompensationField, branch: Branch) -> Result<f64> {
    if !(e_r > model.e_xy) {
        return invalid(format!("resonance field {e_r} V/cm does not exceed E_xy = {} V/cm", model.e_xy));
    }
    let s = (e_r * e_r - model.e_xy * model.e_xy).sqrt();
    let u = match branch {
        Branch::Plus => comp.e_h + s,
        Branch::Minus => comp.e_h - s,
        Branch::Merged => return Ok(0.0),
    };
    if u <= 0.0 {
        return invalid("the − layer does not exist for these fields");
    }
    Ok(s * u / (model.zeta * e_r))
}

/// Δz = Δω_las / (|d_r| |α|) in μm. `laser_linewidth` in rad/s, `stark_gradient`
/// in MHz/(V/cm). Returns +∞ where the field gradient vanishes (merged layer).
pub fn layer_width(
    e_r: f64,
    model: &AdsorbateFieldModel,
    comp: &CompensationField,
    branch: Branch,
    laser_linewidth: f64,
    stark_gradient: f64,
) -> Result<f64> {
    if !(laser_linewidth > 0.0) {
        return invalid("laser linewidth must be positive");
    }
    if stark_gradient == 0.0 || !stark_gradient.is_finite() {
        return invalid("Stark gradient must be finite and nonzero");
    }
    let alpha = layer_gradient(e_r, model, comp, branch)?;
    if alpha == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(units::rad_to_mhz(laser_linewidth) / (stark_gradient.abs() * alpha))
}

/// ΔE = Δz · |dE/dz| (V/cm).
pub fn field_variation_over_layer(
    e_r: f64,
    model: &AdsorbateFieldModel,
    comp: &CompensationField,
    branch: Branch,
    width: f64,
) -> Result<f64> {
    if width == 0.0 {
        return Ok(0.0);
    }
    Ok(width * layer_gradient(e_r, model, comp, branch)?)
}

/// A Rydberg state that the laser reaches where |E| = e_r.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonantState {
    pub label: String,
    /// V/cm
    pub e_r: f64,
    /// static dipole, MHz/(V/cm)
    pub stark_gradient: f64,
    pub a_plus: f64,
    pub a_minus: f64,
}

impl ResonantState {
    /// Equal strengths on both sides of the minimum.
    pub fn symmetric(label: &str, e_r: f64, stark_gradient: f64, a: f64) -> Self {
        ResonantState { label: label.to_string(), e_r, stark_gradient, a_plus: a, a_minus: a }
    }

    fn strength(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Plus => self.a_plus,
            Branch::Minus => self.a_minus,
            Branch::Merged => 0.5 * (self.a_plus + self.a_minus),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationLayer {
    pub state: String,
    pub branch: Branch,
    /// μm
    pub z: f64,
    /// |dE/dz|, V/cm per μm
    pub gradient: f64,
    /// μm (+∞ for a merged layer)
    pub width: f64,
    /// A · n(z) · I(z)
    pub weight: f64,
}

/// How n·I is evaluated in a layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerModel {
    /// n·I at the layer centre
    Point,
    /// n·I averaged over the layer width for the given laser linewidth (rad/s)
    WidthAveraged { laser_linewidth: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationOptions {
    /// outer cutoff, μm
    pub electrode_distance: f64,
    pub layer_model: LayerModel,
    /// laser linewidth used to report layer widths (rad/s)
    pub laser_linewidth: f64,
}

impl Default for ExcitationOptions {
    fn default() -> Self {
        ExcitationOptions {
            electrode_distance: 10_000.0,
            layer_model: LayerModel::Point,
            laser_linewidth: units::mhz_to_rad(2.0),
        }
    }
}

fn averaged(profile: &CloudBeamProfile, z: f64, width: f64) -> f64 {
    if !width.is_finite() || width == 0.0 {
        return profile.density(z) * profile.intensity(z);
    }
    // Simpson over the layer
    let m = 16;
    let h = width / m as f64;
    let a = z - width / 2.0;
    let f = |x: f64| profile.density(x) * profile.intensity(x);
    let mut s = f(a) + f(a + width);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0 / width
}

/// All layers of `states` with their weights A·n·I; layers outside
/// [0, electrode distance] get weight 0.
pub fn excitation_layers(
    comp: &CompensationField,
    states: &[ResonantState],
    model: &AdsorbateFieldModel,
    profile: &CloudBeamProfile,
    options: &ExcitationOptions,
) -> Result<Vec<ExcitationLayer>> {
    model.validate()?;
    profile.validate()?;
    let mut out = Vec::new();
    for st in states {
        for (branch, z) in excitation_layer_positions(st.e_r, model, comp)? {
            let gradient = layer_gradient(st.e_r, model, comp, branch).unwrap_or(0.0);
            let width = layer_width(st.e_r, model, comp, branch, options.laser_linewidth, st.stark_gradient)
                .unwrap_or(f64::INFINITY);
            let inside = (0.0..=options.electrode_distance).contains(&z);
            let ni = match options.layer_model {
                LayerModel::Point => profile.density(z) * profile.intensity(z),
                LayerModel::WidthAveraged { laser_linewidth } => {
                    let w = layer_width(st.e_r, model, comp, branch, laser_linewidth, st.stark_gradient)
                        .unwrap_or(0.0);
                    averaged(profile, z, w)
                }
            };
            let weight = if inside { st.strength(branch) * ni } else { 0.0 };
            out.push(ExcitationLayer { state: st.label.clone(), branch, z, gradient, width, weight });
        }
    }
    Ok(out)
}

/// P = Σ_r Σ_± A_{r,±} n(z_{r,±}) I(z_{r,±}).
pub fn excitation_probability(
    comp: &CompensationField,
    states: &[ResonantState],
    model: &AdsorbateFieldModel,
    profile: &CloudBeamProfile,
    options: &ExcitationOptions,
) -> Result<f64> {
    if states.is_empty() {
        return invalid("at least one resonant state is required");
    }
    Ok(excitation_layers(comp, states, model, profile, options)?
        .iter()
        .map(|l| l.weight)
        .sum())
}

/// One point of a compensation-field scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub e_h: f64,
    pub total: f64,
    /// per state: (A₊ n I, A₋ n I)
    pub contributions: Vec<(f64, f64)>,
}

/// Predicted counts over a list of compensation fields.
pub fn compensation_scan(
    e_h: &[f64],
    states: &[ResonantState],
    model: &AdsorbateFieldModel,
    profile: &CloudBeamProfile,
    options: &ExcitationOptions,
) -> Result<Vec<ScanPoint>> {
    if states.is_empty() {
        return invalid("at least one resonant state is required");
    }
    e_h.iter()
        .map(|&eh| {
            let comp = CompensationField::new(eh)?;
            let layers = excitation_layers(&comp, states, model, profile, options)?;
            let contributions: Vec<(f64, f64)> = states
                .iter()
                .map(|st| {
                    let pick = |b: Branch| -> f64 {
                        layers
                            .iter()
                            .filter(|l| l.state == st.label && (l.branch == b || l.branch == Branch::Merged))
                            .map(|l| if l.branch == Branch::Merged { l.weight / 2.0 } else { l.weight })
                            .sum()
                    };
                    (pick(Branch::Plus), pick(Branch::Minus))
                })
                .collect();
            let total = layers.iter().map(|l| l.weight).sum();
            Ok(ScanPoint { e_h: eh, total, contributions })
        })
        .collect()
}

/// CSV with E_h_Vcm, predicted_counts and one column per state and branch.
pub fn write_scan_csv<W: Write>(out: W, states: &[ResonantState], scan: &[ScanPoint]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["E_h_Vcm".to_string(), "predicted_counts".to_string()];
    for s in states {
        header.push(format!("{}_plus", s.label));
        header.push(format!("{}_minus", s.label));
    }
    w.write_record(&header).map_err(io)?;
    for p in scan {
        let mut row = vec![format!("{}", p.e_h), format!("{:e}", p.total)];
        for (a, b) in &p.contributions {
            row.push(format!("{a:e}"));
            row.push(format!("{b:e}"));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv output failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit() -> (AdsorbateFieldModel, CompensationField) {
        (AdsorbateFieldModel::new(37.2, 70.0, 3.482).unwrap(), CompensationField::new(7.2).unwrap())
    }

    #[test]
    fn field_examples() {
        let (m, c) = fit();
        let fm = field_minimum(&m, &c);
        assert_eq!(fm.kind, MinimumKind::Interior);
        assert!((fm.z_min - 70.0 * (37.2f64 / 7.2).ln()).abs() < 1e-12);
        assert!((total_field(fm.z_min, &m, &c) - 3.482).abs() < 1e-12);
        let far = total_field(1e6, &m, &c);
        assert!((far - (7.2f64 * 7.2 + 3.482 * 3.482).sqrt()).abs() < 1e-12);
        let flat = AdsorbateFieldModel::new(10.0, 50.0, 0.0).unwrap();
        let z = 20.0;
        assert!(total_field(z, &flat, &CompensationField::new(flat.e_z(z)).unwrap()) < 1e-14);
    }

    #[test]
    fn minimum_edge_cases() {
        let m = AdsorbateFieldModel::new(37.2, 70.0, 3.482).unwrap();
        assert_eq!(field_minimum(&m, &CompensationField::new(37.2).unwrap()).z_min, 0.0);
        assert_eq!(field_minimum(&m, &CompensationField::new(50.0).unwrap()).kind, MinimumKind::AtSurface);
        assert_eq!(field_minimum(&m, &CompensationField::new(0.0).unwrap()).kind, MinimumKind::AtInfinity);
        let m2 = AdsorbateFieldModel::new(74.4, 70.0, 3.482).unwrap();
        let a = field_minimum(&m, &CompensationField::new(7.2).unwrap()).z_min;
        let b = field_minimum(&m2, &CompensationField::new(14.4).unwrap()).z_min;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn layers_sit_on_the_resonance() {
        let (m, c) = fit();
        for e_r in [3.49, 3.57, 3.625, 5.0, 9.0] {
            for (_, z) in excitation_layer_positions(e_r, &m, &c).unwrap() {
                assert!((total_field(z, &m, &c) - e_r).abs() < 1e-9);
            }
        }
        assert!(excitation_layer_positions(3.0, &m, &c).unwrap().is_empty());
        let merged = excitation_layer_positions(3.482, &m, &c).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].0, Branch::Merged);
        // − branch disappears once √(E_r² − E_xy²) ≥ E_h
        let big = excitation_layer_positions(9.0, &m, &c).unwrap();
        assert_eq!(big.len(), 1);
        assert_eq!(big[0].0, Branch::Plus);
    }

    #[test]
    fn layer_numbers_for_r1() {
        let (m, c) = fit();
        let lw = units::mhz_to_rad(2.0);
        let wp = layer_width(3.625, &m, &c, Branch::Plus, lw, -300.0).unwrap();
        let wm = layer_width(3.625, &m, &c, Branch::Minus, lw, -300.0).unwrap();
        assert!((wp - 0.2044).abs() < 1e-3, "{wp}");
        assert!((wm - 0.2710).abs() < 1e-3, "{wm}");
        let gm = layer_gradient(3.625, &m, &c, Branch::Minus).unwrap();
        assert!((gm - 0.0246).abs() < 1e-4);
        let dv = field_variation_over_layer(3.625, &m, &c, Branch::Minus, wm).unwrap();
        assert!((dv - 2.0 / 300.0).abs() < 1e-12);
        assert_eq!(field_variation_over_layer(3.625, &m, &c, Branch::Minus, 0.0).unwrap(), 0.0);
        let w2 = layer_width(3.625, &m, &c, Branch::Minus, 2.0 * lw, -300.0).unwrap();
        assert!((w2 - 2.0 * wm).abs() < 1e-12);
        assert!(layer_gradient(3.4, &m, &c, Branch::Plus).is_err());
        assert_eq!(layer_width(3.49, &m, &c, Branch::Merged, lw, -300.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn effective_waist_formula() {
        assert!((effective_waist(25.0, 25.0) - 25.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((effective_waist(1e9, 25.0) - 25.0).abs() < 1e-6);
    }

    #[test]
    fn model_json_field_names() {
        let (m, _) = fit();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"E0_Vcm":37.2,"zeta_um":70.0,"Exy_Vcm":3.482}"#);
        let back: AdsorbateFieldModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
