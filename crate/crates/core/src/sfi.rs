//! Selective field ionization: population followed through the Stark map
//! under a field ramp, ion arrival times and the two-window population
//! estimate.
//!
//! Times are in μs, fields in V/cm, rates in 1/s.

use std::io::{Read, Write};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::atom::{build_basis, zero_field_energy, Basis, BasisOperators, BasisState, QuantumDefectTable, RadialSet};
use crate::error::{invalid, Error, Result};
use crate::linalg::symmetric_eigen;
use crate::units;

/// Field versus time, monotone cubic between samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampProfile {
    samples: Vec<(f64, f64)>,
    slopes: Vec<f64>,
}

impl RampProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return invalid("a ramp needs at least two samples");
        }
        if samples.iter().any(|(t, f)| !t.is_finite() || !f.is_finite() || *f < 0.0) {
            return invalid("ramp samples must be finite with non-negative fields");
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("ramp times must be strictly increasing");
        }
        let slopes = pchip_slopes(&samples);
        Ok(RampProfile { samples, slopes })
    }

    /// Straight ramp from `f0` to `f1` over `duration` starting at t = 0.
    pub fn linear(f0: f64, f1: f64, duration: f64) -> Result<Self> {
        Self::new(vec![(0.0, f0), (duration, f1)])
    }

    /// 7.2 → 210 V/cm in 1 μs.
    pub fn standard() -> Self {
        Self::linear(7.2, 210.0, 1.0).expect("valid ramp")
    }

    /// Reads `t_us,field_Vcm` rows (header optional).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("ramp row {}: {e}", i + 1)))?;
            if rec.len() != 2 {
                return invalid(format!("ramp row {} needs two columns", i + 1));
            }
            let (Ok(t), Ok(f)) = (rec[0].parse::<f64>(), rec[1].parse::<f64>()) else {
                if i == 0 {
                    continue;
                }
                return invalid(format!("ramp row {} is not numeric", i + 1));
            };
            samples.push((t, f));
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// True unless the field ever decreases.
    pub fn is_monotone(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub fn field_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.1), hi.max(s.1)))
    }

    /// Field at time t, held constant outside the sampled range.
    pub fn field_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        let k = s.partition_point(|p| p.0 <= t) - 1;
        let (t0, f0) = s[k];
        let (t1, f1) = s[k + 1];
        let h = t1 - t0;
        let x = (t - t0) / h;
        let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
        let h10 = x * (1.0 - x) * (1.0 - x);
        let h01 = x * x * (3.0 - 2.0 * x);
        let h11 = x * x * (x - 1.0);
        h00 * f0 + h10 * h * self.slopes[k] + h01 * f1 + h11 * h * self.slopes[k + 1]
    }

    /// First time the ramp reaches `field`, if it does.
    pub fn time_of_field(&self, field: f64) -> Option<f64> {
        let (a, b) = (self.start(), self.end());
        let n = 2000;
        let mut prev = (a, self.field_at(a));
        if prev.1 >= field {
            return Some(a);
        }
        for i in 1..=n {
            let t = a + (b - a) * i as f64 / n as f64;
            let f = self.field_at(t);
            if f >= field {
                let (mut lo, mut hi) = (prev.0, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.field_at(mid) >= field {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            prev = (t, f);
        }
        None
    }
}

// Fritsch–Carlson slopes: no overshoot between samples
fn pchip_slopes(s: &[(f64, f64)]) -> Vec<f64> {
    let n = s.len();
    let d: Vec<f64> = s.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let h0 = s[k].0 - s[k - 1].0;
            let h1 = s[k + 1].0 - s[k].0;
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let end = |d0: f64, d1: f64, h0: f64, h1: f64| {
        let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if m * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            m
        }
    };
    m[0] = end(d[0], d[1], s[1].0 - s[0].0, s[2].0 - s[1].0);
    m[n - 1] = end(d[n - 2], d[n - 3], s[n - 1].0 - s[n - 2].0, s[n - 2].0 - s[n - 3].0);
    m
}

/// How an ionization rate is assigned to a state at a given field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IonizationModel {
    /// Γ = 2η⟨W⟩/ħ, W = (r − r_cut)⁶ beyond r_cut = cutoff_scale/√F (atomic units)
    Cap { eta: f64, cutoff_scale: f64 },
    /// smooth step of height max_rate at the classical saddle-point field,
    /// relative width `width`, threshold multiplied by `scale`
    ClassicalThreshold { scale: f64, max_rate: f64, width: f64 },
}

impl IonizationModel {
    pub fn cap() -> Self {
        IonizationModel::Cap { eta: 1.52e-10, cutoff_scale: 0.8 }
    }

    pub fn classical() -> Self {
        IonizationModel::ClassicalThreshold { scale: 1.0, max_rate: 1e10, width: 0.02 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IonizationModel::Cap { eta, cutoff_scale } => {
                if !(eta > 0.0 && cutoff_scale > 0.0) {
                    return invalid("CAP strength and cutoff scale must be positive");
                }
            }
            IonizationModel::ClassicalThreshold { scale, max_rate, width } => {
                if !(scale > 0.0 && max_rate > 0.0 && width > 0.0) {
                    return invalid("threshold scale, rate and width must be positive");
                }
            }
        }
        Ok(())
    }
}

/// Field (V/cm) at which a level of binding energy `energy` (rad/s, < 0) with
/// |m| = `m_abs` reaches the saddle: E = −2√F + |m| F^{3/4} in atomic units.
pub fn saddle_field(energy: f64, m_abs: f64) -> f64 {
    let e = energy / units::hartree_rad();
    if e >= 0.0 {
        return 0.0;
    }
    let saddle = |f: f64| -2.0 * f.sqrt() + m_abs * f.powf(0.75);
    // the saddle energy first falls with F; find where it drops to E
    let mut lo = 0.0;
    let mut hi = e * e / 4.0;
    while saddle(hi) > e {
        hi *= 2.0;
        if hi > 1.0 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if saddle(mid) > e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    units::field_from_au(hi)
}

fn logistic_rate(field: f64, threshold: f64, max_rate: f64, width: f64) -> f64 {
    if !threshold.is_finite() {
        return 0.0;
    }
    let x = (field - threshold) / (width * threshold);
    max_rate / (1.0 + (-x).exp())
}

/// One m_j block of the Stark problem without magnetic field (field along the quantization axis).
#[derive(Clone, Debug)]
pub struct SfiBlock {
    basis: Basis,
    radial: RadialSet,
    energies: Vec<f64>,
    reference: f64,
    /// ⟨a| z |b⟩ in a₀
    z: Vec<(usize, usize, f64)>,
    /// basis indices sharing (l, j) with their radial w(ρ_k) on a common index range
    groups: Vec<RadialGroup>,
    /// r at grid index `k0 + i`
    radii: Vec<f64>,
    k0: usize,
    mj2: i32,
}

impl SfiBlock {
    pub fn new(n_min: u32, n_max: u32, l_max: Option<u32>, mj2: i32, defects: &QuantumDefectTable) -> Result<Self> {
        let full = build_basis(n_min, n_max, l_max)?;
        let basis = full.filtered(|s| s.mj2 == mj2)?;
        let radial = RadialSet::new(&basis, defects);
        let ops = BasisOperators::new(&basis, &radial);
        let energies: Vec<f64> = basis.states().iter().map(|s| zero_field_energy(s, defects)).collect();
        let reference = energies.iter().sum::<f64>() / energies.len() as f64;
        let mut by_lj: std::collections::BTreeMap<(u32, u32), Vec<usize>> = Default::default();
        for (i, st) in basis.states().iter().enumerate() {
            by_lj.entry((st.l, st.j2)).or_default().push(i);
        }
        let fun = |i: usize| {
            let s = basis.get(i);
            radial.function(s.n, s.l, s.j2).expect("radial function for basis state")
        };
        let k0 = (0..basis.len()).map(|i| fun(i).first_index()).min().unwrap_or(0);
        let k1 = (0..basis.len()).map(|i| fun(i).first_index() + fun(i).values().len()).max().unwrap_or(0);
        let grid = *radial.grid();
        let radii: Vec<f64> = (k0..k1).map(|k| grid.r(k)).collect();
        let groups = by_lj
            .into_values()
            .map(|members| {
                let lo = members.iter().map(|&i| fun(i).first_index()).min().unwrap_or(k0);
                let hi = members.iter().map(|&i| fun(i).first_index() + fun(i).values().len()).max().unwrap_or(k0);
                let values = members
                    .iter()
                    .map(|&i| {
                        let f = fun(i);
                        (lo..hi)
                            .map(|k| k.checked_sub(f.first_index()).and_then(|j| f.values().get(j)).copied().unwrap_or(0.0))
                            .collect()
                    })
                    .collect();
                RadialGroup { members, lo, values }
            })
            .collect();
        Ok(SfiBlock { basis, radial, energies, reference, z: ops.position[1].entries.clone(), groups, radii, k0, mj2 })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn mj2(&self) -> i32 {
        self.mj2
    }

    /// Eigenvalues (rad/s, absolute) and eigenvectors at `field` V/cm.
    pub fn solve(&self, field: f64) -> Result<(Vec<f64>, Mat<f64>)> {
        let n = self.basis.len();
        let scale = units::dipole_field_rad(1.0, field);
        let mut h = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = self.energies[i] - self.reference;
        }
        for &(i, j, v) in &self.z {
            h[(i, j)] += scale * v;
        }
        let (mut e, u) = symmetric_eigen(&h)?;
        e.iter_mut().for_each(|x| *x += self.reference);
        Ok((e, u))
    }

    /// 2η⟨ψ|W|ψ⟩/ħ for amplitudes `c` over this block's basis.
    pub fn cap_rate(&self, c: &[f64], field: f64, eta: f64, cutoff_scale: f64) -> Result<f64> {
        if c.len() != self.basis.len() {
            return invalid("amplitude vector does not match the block basis");
        }
        let f_au = units::field_to_au(field);
        if f_au <= 0.0 {
            return Ok(0.0);
        }
        let r_cut = cutoff_scale / f_au.sqrt();
        let step = self.radial.grid().step;
        // r² (r − r_cut)⁶ beyond the cutoff
        let first = self.radii.partition_point(|r| *r <= r_cut);
        let weight: Vec<f64> = self.radii[first..].iter().map(|r| r * r * (r - r_cut).powi(6)).collect();
        let mut total = 0.0;
        let mut psi = Vec::new();
        for g in &self.groups {
            if g.members.iter().all(|&i| c[i].abs() < 1e-10) {
                continue;
            }
            let len = g.values[0].len();
            let start = (self.k0 + first).saturating_sub(g.lo).min(len);
            psi.clear();
            psi.resize(len - start, 0.0);
            for (m, &i) in g.members.iter().enumerate() {
                if c[i] == 0.0 {
                    continue;
                }
                for (p, w) in psi.iter_mut().zip(&g.values[m][start..]) {
                    *p += c[i] * w;
                }
            }
            let off = g.lo + start - self.k0 - first;
            total += psi.iter().zip(&weight[off..]).map(|(p, w)| p * p * w).sum::<f64>();
        }
        total *= step;
        Ok(units::rate_from_au(2.0 * eta * total.max(0.0)))
    }

    /// Follows the level connected to `initial` over an increasing field grid by
    /// maximal overlap and evaluates the rate along it.
    pub fn track(&self, initial: &BasisState, fields: &[f64], model: &IonizationModel) -> Result<RateTrack> {
        model.validate()?;
        if fields.is_empty() || fields.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("tracking grid must be non-empty and strictly increasing");
        }
        let Some(start) = self.basis.index_of(initial) else {
            return invalid(format!("{initial} is not in this block"));
        };
        let n = self.basis.len();
        let mut rates = Vec::with_capacity(fields.len());
        let mut energies = Vec::with_capacity(fields.len());
        let mut notes = Vec::new();
        let mut prev: Vec<f64> = (0..n).map(|i| if i == start { 1.0 } else { 0.0 }).collect();
        for &f in fields {
            let (e, u) = self.solve(f)?;
            let mut best = (0usize, -1.0);
            for k in 0..n {
                let ov: f64 = (0..n).map(|i| u[(i, k)] * prev[i]).sum::<f64>().abs();
                if ov > best.1 {
                    best = (k, ov);
                }
            }
            if best.1 < 0.5 {
                notes.push(TrackingNote { field: f, overlap: best.1, time: None });
            }
            let sign = if (0..n).map(|i| u[(i, best.0)] * prev[i]).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let c: Vec<f64> = (0..n).map(|i| sign * u[(i, best.0)]).collect();
            let rate = match *model {
                IonizationModel::Cap { eta, cutoff_scale } => self.cap_rate(&c, f, eta, cutoff_scale)?,
                IonizationModel::ClassicalThreshold { scale, max_rate, width } => {
                    let m_abs = (self.mj2.abs() as f64 - 1.0) / 2.0;
                    logistic_rate(f, scale * saddle_field(e[best.0], m_abs), max_rate, width)
                }
            };
            rates.push(rate);
            energies.push(e[best.0]);
            prev = c;
        }
        Ok(RateTrack { fields: fields.to_vec(), rates, energies, notes })
    }
}

#[derive(Clone, Debug)]
struct RadialGroup {
    members: Vec<usize>,
    lo: usize,
    values: Vec<Vec<f64>>,
}

/// Ionization rate along a followed level, sampled on a field grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTrack {
    pub fields: Vec<f64>,
    pub rates: Vec<f64>,
    /// absolute energy of the followed level (rad/s)
    pub energies: Vec<f64>,
    pub notes: Vec<TrackingNote>,
}

/// A grid step where the best overlap fell below 0.5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingNote {
    pub field: f64,
    pub overlap: f64,
    /// ramp time at which the field is reached, filled in by the evolution
    pub time: Option<f64>,
}

impl RateTrack {
    /// Field-independent binding energy with the classical-threshold rate; no diagonalization.
    pub fn classical(state: &BasisState, defects: &QuantumDefectTable, model: &IonizationModel, fields: &[f64]) -> Result<Self> {
        let IonizationModel::ClassicalThreshold { scale, max_rate, width } = *model else {
            return invalid("RateTrack::classical needs the classical-threshold model");
        };
        model.validate()?;
        if fields.is_empty() || fields.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("field grid must be non-empty and strictly increasing");
        }
        let e = zero_field_energy(state, defects);
        let m_abs = (state.mj2.abs() as f64 - 1.0) / 2.0;
        let th = scale * saddle_field(e, m_abs);
        Ok(RateTrack {
            fields: fields.to_vec(),
            rates: fields.iter().map(|&f| logistic_rate(f, th, max_rate, width)).collect(),
            energies: vec![e; fields.len()],
            notes: vec![],
        })
    }

    /// Linear interpolation in field, constant beyond the ends.
    pub fn rate(&self, field: f64) -> f64 {
        let f = &self.fields;
        if field <= f[0] {
            return self.rates[0];
        }
        if field >= f[f.len() - 1] {
            return self.rates[f.len() - 1];
        }
        let k = f.partition_point(|x| *x <= field) - 1;
        let x = (field - f[k]) / (f[k + 1] - f[k]);
        self.rates[k] * (1.0 - x) + self.rates[k + 1] * x
    }
}

/// Survival and ion flux on the time grid of an evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    /// μs
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// cumulative ionized fraction
    pub ionized: Vec<f64>,
    /// flux per μs on [t_k, t_{k+1}]
    pub flux: Vec<f64>,
    pub notes: Vec<TrackingNote>,
}

/// Integrates dS/dt = −Γ(F(t)) S with Simpson's rule for ∫Γ over each step, so
/// the survival update exp(−∫Γ) keeps S + ionized = 1 step by step.
pub fn evolve_through_ramp(track: &RateTrack, ramp: &RampProfile, step: f64) -> Result<Evolution> {
    if !(step > 0.0) {
        return invalid("time step must be positive");
    }
    let steps = (ramp.duration() / step).ceil().max(1.0) as usize;
    let h = ramp.duration() / steps as f64;
    let t0 = ramp.start();
    let rate_us = |t: f64| track.rate(ramp.field_at(t)) * 1e-6;
    let mut times = Vec::with_capacity(steps + 1);
    let mut survival = Vec::with_capacity(steps + 1);
    let mut ionized = Vec::with_capacity(steps + 1);
    let mut flux = Vec::with_capacity(steps);
    let (mut s, mut ion) = (1.0f64, 0.0f64);
    times.push(t0);
    survival.push(s);
    ionized.push(ion);
    for k in 0..steps {
        let a = t0 + k as f64 * h;
        let b = a + h;
        let integral = h * (rate_us(a) + 4.0 * rate_us(0.5 * (a + b)) + rate_us(b)) / 6.0;
        let lost = s * -(-integral).exp_m1();
        s -= lost;
        ion += lost;
        times.push(b);
        survival.push(s);
        ionized.push(ion);
        flux.push(lost / h);
    }
    let notes = track
        .notes
        .iter()
        .map(|n| TrackingNote { time: ramp.time_of_field(n.field), ..*n })
        .collect();
    Ok(Evolution { times, survival, ionized, flux, notes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub tof_delay: f64,
}

pub const DEFAULT_TOF_DELAY: f64 = 1.53;

/// Weighted sum of ion fluxes, delayed by the flight time and binned.
/// Each step's ions are spread uniformly over its (delayed) interval.
pub fn arrival_histogram(runs: &[(&Evolution, f64)], bin_edges: &[f64], tof_delay: f64) -> Result<ArrivalHistogram> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("bin edges must be strictly increasing with at least one bin");
    }
    if runs.iter().any(|(_, w)| !(*w >= 0.0)) {
        return invalid("weights must be ≥ 0");
    }
    let mut counts = vec![0.0; bin_edges.len() - 1];
    for (ev, w) in runs {
        for k in 0..ev.flux.len() {
            let lost = ev.ionized[k + 1] - ev.ionized[k];
            if lost == 0.0 {
                continue;
            }
            let (a, b) = (ev.times[k] + tof_delay, ev.times[k + 1] + tof_delay);
            let first = bin_edges.partition_point(|e| *e <= a).saturating_sub(1);
            for (i, c) in counts.iter_mut().enumerate().skip(first) {
                let (lo, hi) = (bin_edges[i].max(a), bin_edges[i + 1].min(b));
                if bin_edges[i] >= b {
                    break;
                }
                if hi > lo {
                    *c += w * lost * (hi - lo) / (b - a);
                }
            }
        }
    }
    Ok(ArrivalHistogram { bin_edges: bin_edges.to_vec(), counts, tof_delay })
}

impl ArrivalHistogram {
    /// Counts falling in [lo, hi), bins split proportionally.
    pub fn counts_in(&self, lo: f64, hi: f64) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (a, b) = (self.bin_edges[i], self.bin_edges[i + 1]);
                let ov = (b.min(hi) - a.max(lo)).max(0.0);
                c * ov / (b - a)
            })
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// bin_start_us, bin_end_us, counts
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start_us", "bin_end_us", "counts"]).map_err(io)?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.bin_edges[i].to_string(), self.bin_edges[i + 1].to_string(), format!("{c:e}")])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

/// Arrival windows and the detection model for r2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinWindows {
    pub t1: (f64, f64),
    pub t2: (f64, f64),
    /// probability that an r2 ion arrives in T2
    pub p: f64,
    /// N_rx / N_r1
    pub a: f64,
}

impl Default for BinWindows {
    fn default() -> Self {
        BinWindows { t1: (1.8, 2.0), t2: (2.0, 2.1), p: 0.34, a: 1.0 }
    }
}

impl BinWindows {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: (f64, f64)| w.0 < w.1;
        if !ok(self.t1) || !ok(self.t2) {
            return invalid("windows must have start < end");
        }
        if self.t1.0 < self.t2.1 && self.t2.0 < self.t1.1 {
            return invalid("T1 and T2 overlap");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return invalid(format!("p must be in (0, 1], got {}", self.p));
        }
        if !(self.a >= 0.0) {
            return invalid("a must be ≥ 0");
        }
        Ok(())
    }

    /// (N_T1, N_T2) read off a histogram.
    pub fn window_counts(&self, hist: &ArrivalHistogram) -> (f64, f64) {
        (hist.counts_in(self.t1.0, self.t1.1), hist.counts_in(self.t2.0, self.t2.1))
    }

    /// Expected (N_T1, N_T2) for `n_total` detected ions when a fraction ρ₂₂ of
    /// the r1 population has moved to r2 and r_x holds a times the r1 + r2 population.
    pub fn expected_counts(&self, rho22: f64, n_total: f64) -> Result<(f64, f64)> {
        self.validate()?;
        if !(0.0..=1.0).contains(&rho22) {
            return invalid("ρ₂₂ must lie in [0, 1]");
        }
        let m = n_total / (1.0 + self.a);
        let t2 = self.p * rho22 * m;
        Ok((n_total - t2, t2))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub rho22: f64,
    /// binomial error of N_T2/N propagated through the estimate
    pub std_error: f64,
    /// the raw estimate fell outside [0, 1] and was clamped
    pub clamped: bool,
}

/// ρ₂₂ = ((1 + a)/p) · N_T2 / N with N = N_T1 + N_T2.
pub fn infer_population(n_t1: f64, n_t2: f64, windows: &BinWindows) -> Result<PopulationEstimate> {
    windows.validate()?;
    if n_t1 < 0.0 || n_t2 < 0.0 {
        return invalid("counts must be ≥ 0");
    }
    let n = n_t1 + n_t2;
    if !(n > 0.0) {
        return Err(Error::UndefinedEstimate("no ions in T1 or T2".into()));
    }
    let k = (1.0 + windows.a) / windows.p;
    let q = n_t2 / n;
    let raw = k * q;
    let std_error = k * (q * (1.0 - q) / n).sqrt();
    Ok(PopulationEstimate { rho22: raw.clamp(0.0, 1.0), std_error, clamped: !(0.0..=1.0).contains(&raw) })
}
