//! Field-aligned block solver, Stark maps and level tracking.
//!
//! The Hamiltonian is written in a frame with z' along the electric field and
//! x' along the part of B perpendicular to it. There the Stark term and the
//! parallel Zeeman term conserve m_j, and every matrix element is real. Each
//! m_j block is diagonalized exactly; the transverse Zeeman term is then
//! diagonalized in the span of block eigenvectors that lie inside the
//! requested energy windows. Transverse Zeeman couplings to states outside a
//! window enter only at second order (≈ (μ_B B)²/ΔE, kHz scale here) and are
//! dropped.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::symmetric_eigen;
use crate::units::{self, BOHR_MAGNETON_HZ_PER_GAUSS};

use super::basis::{Basis, BasisState};
use super::defects::QuantumDefectTable;
use super::hamiltonian::{check_unit, norm, zero_field_energy, BasisOperators, FieldConfig, StarkEigenstate};
use super::operators::contraction_coefficients;
use super::radial::RadialSet;

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Orthonormal frame with z' along E and x' along B⊥.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFrame {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub z: [f64; 3],
}

impl FieldFrame {
    /// Built from the field directions only, so all points of a map share it.
    pub fn new(fields: &FieldConfig) -> Result<Self> {
        check_unit("electric_direction", fields.electric_direction)?;
        check_unit("magnetic_direction", fields.magnetic_direction)?;
        let z = fields.electric_direction;
        let b = fields.magnetic_direction;
        let bpar = dot(b, z);
        let mut x = [b[0] - bpar * z[0], b[1] - bpar * z[1], b[2] - bpar * z[2]];
        if norm(x) < 1e-9 {
            // B parallel to E: any perpendicular axis will do
            let trial = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let t = dot(trial, z);
            x = [trial[0] - t * z[0], trial[1] - t * z[1], trial[2] - t * z[2]];
        }
        let nx = norm(x);
        let x = x.map(|c| c / nx);
        let y = cross(z, x);
        Ok(FieldFrame { x, y, z })
    }

    /// Components of a lab vector along (x', y', z').
    pub fn to_frame(&self, v: [f64; 3]) -> [f64; 3] {
        [dot(v, self.x), dot(v, self.y), dot(v, self.z)]
    }
}

/// Energy windows (GHz relative to the reference level) and the margin of
/// extra block eigenvectors kept around them for the Zeeman stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub ranges_ghz: Vec<(f64, f64)>,
    pub margin_ghz: f64,
}

impl Windows {
    pub fn around(center_ghz: f64, half_width_ghz: f64) -> Self {
        Windows {
            ranges_ghz: vec![(center_ghz - half_width_ghz, center_ghz + half_width_ghz)],
            margin_ghz: 1.5,
        }
    }

    pub fn with(mut self, center_ghz: f64, half_width_ghz: f64) -> Self {
        self.ranges_ghz.push((center_ghz - half_width_ghz, center_ghz + half_width_ghz));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.ranges_ghz.is_empty() {
            return invalid("at least one energy window is required");
        }
        for &(lo, hi) in &self.ranges_ghz {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return invalid(format!("bad energy window ({lo}, {hi})"));
            }
        }
        if !(self.margin_ghz.is_finite() && self.margin_ghz >= 0.0) {
            return invalid("window margin must be finite and ≥ 0");
        }
        Ok(())
    }

    fn contains(&self, e_rad: f64, pad_ghz: f64) -> bool {
        let e = units::rad_to_ghz(e_rad);
        self.ranges_ghz.iter().any(|&(lo, hi)| e >= lo - pad_ghz && e <= hi + pad_ghz)
    }

    fn overlaps(&self, lo_rad: f64, hi_rad: f64, pad_ghz: f64) -> bool {
        let (lo, hi) = (units::rad_to_ghz(lo_rad), units::rad_to_ghz(hi_rad));
        self.ranges_ghz.iter().any(|&(a, b)| hi >= a - pad_ghz && lo <= b + pad_ghz)
    }
}

type Triplets = Vec<(usize, usize, f64)>;

struct Block {
    mj2: i32,
    /// global basis indices
    states: Vec<usize>,
    r0: Triplets,
    m0: Triplets,
}

/// Precomputed operators of one basis for repeated field-aligned solves.
pub struct StarkSolver {
    basis: Basis,
    ops: BasisOperators,
    reference: f64,
    diag: Vec<f64>,
    blocks: Vec<Block>,
    /// global index → (block, local index)
    location: Vec<(usize, usize)>,
    /// ⟨a|O_x|b⟩ with a in block k+1, b in block k, local indices; entry k
    zeeman_x: Vec<Triplets>,
}

/// Zero-field energy of `state` in rad/s; the usual reference is 48D5/2.
pub fn reference_energy(defects: &QuantumDefectTable, n: u32, l: u32, j2: u32) -> Result<f64> {
    let s = BasisState::new(n, l, j2, j2 as i32)?;
    Ok(zero_field_energy(&s, defects))
}

impl StarkSolver {
    /// `reference` is an absolute energy in rad/s subtracted from all levels.
    pub fn new(basis: Basis, defects: &QuantumDefectTable, reference: f64) -> Result<Self> {
        if basis.is_empty() {
            return invalid("empty basis");
        }
        let radial = RadialSet::new(&basis, defects);
        let ops = BasisOperators::new(&basis, &radial);
        let diag = basis
            .states()
            .iter()
            .map(|s| zero_field_energy(s, defects) - reference)
            .collect();

        let mut mjs: Vec<i32> = basis.states().iter().map(|s| s.mj2).collect();
        mjs.sort_unstable();
        mjs.dedup();
        let mut blocks: Vec<Block> = mjs
            .iter()
            .map(|&mj2| Block { mj2, states: vec![], r0: vec![], m0: vec![] })
            .collect();
        let mut location = vec![(0, 0); basis.len()];
        for (g, s) in basis.states().iter().enumerate() {
            let b = mjs.binary_search(&s.mj2).unwrap();
            location[g] = (b, blocks[b].states.len());
            blocks[b].states.push(g);
        }
        for &(i, j, v) in &ops.position[1].entries {
            let (bi, li) = location[i];
            blocks[bi].r0.push((li, location[j].1, v));
        }
        for &(i, j, v) in &ops.moment[1].entries {
            let (bi, li) = location[i];
            blocks[bi].m0.push((li, location[j].1, v));
        }
        let mut zeeman_x = vec![Vec::new(); blocks.len().saturating_sub(1)];
        for &(i, j, v) in &ops.moment[2].entries {
            // q = +1 raises m_j by one: a in block k+1, b in block k
            let (bi, li) = location[i];
            let (bj, lj) = location[j];
            debug_assert_eq!(bi, bj + 1);
            zeeman_x[bj].push((li, lj, -v * std::f64::consts::FRAC_1_SQRT_2));
        }
        Ok(StarkSolver { basis, ops, reference, diag, blocks, location, zeeman_x })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn operators(&self) -> &BasisOperators {
        &self.ops
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    fn block_matrix(&self, b: usize, f_vcm: f64, bpar: f64) -> Mat<f64> {
        let blk = &self.blocks[b];
        let n = blk.states.len();
        let mut h = Mat::<f64>::zeros(n, n);
        for (i, &g) in blk.states.iter().enumerate() {
            h[(i, i)] = self.diag[g];
        }
        let stark = units::dipole_field_rad(1.0, 1.0) * f_vcm;
        for &(i, j, v) in &blk.r0 {
            h[(i, j)] += stark * v;
        }
        let zee = units::hz_to_rad(BOHR_MAGNETON_HZ_PER_GAUSS) * bpar;
        if zee != 0.0 {
            for &(i, j, v) in &blk.m0 {
                h[(i, j)] += zee * v;
            }
        }
        h
    }

    /// Field-aligned solve keeping the eigenstates whose energies fall in `windows`.
    pub fn solve(&self, fields: &FieldConfig, windows: &Windows) -> Result<StarkSolution> {
        fields.validate()?;
        windows.validate()?;
        let frame = FieldFrame::new(fields)?;
        let bvec = frame.to_frame(fields.magnetic_vector());
        let bperp = bvec[0];
        let bpar = bvec[2];
        let zee = units::hz_to_rad(BOHR_MAGNETON_HZ_PER_GAUSS);
        let pad = windows.margin_ghz;

        let mut kept: Vec<Option<KeptBlock>> = Vec::with_capacity(self.blocks.len());
        for b in 0..self.blocks.len() {
            let h = self.block_matrix(b, fields.electric_field, bpar);
            let n = h.nrows();
            // Gershgorin bounds decide whether the block can reach any window
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let r: f64 = (0..n).filter(|&j| j != i).map(|j| h[(i, j)].abs()).sum();
                lo = lo.min(h[(i, i)] - r);
                hi = hi.max(h[(i, i)] + r);
            }
            if !windows.overlaps(lo, hi, pad) {
                kept.push(None);
                continue;
            }
            let (s, u) = symmetric_eigen(&h)?;
            let idx: Vec<usize> = (0..n).filter(|&k| windows.contains(s[k], pad)).collect();
            if idx.is_empty() {
                kept.push(None);
                continue;
            }
            let values: Vec<f64> = idx.iter().map(|&k| s[k]).collect();
            let vectors = Mat::<f64>::from_fn(n, idx.len(), |i, c| u[(i, idx[c])]);
            kept.push(Some(KeptBlock { block: b, mj2: self.blocks[b].mj2, values, vectors, offset: 0 }));
        }
        let mut kept: Vec<KeptBlock> = kept.into_iter().flatten().collect();
        let mut dim = 0;
        for k in kept.iter_mut() {
            k.offset = dim;
            dim += k.values.len();
        }

        // reduced Hamiltonian: diagonal block energies + transverse Zeeman coupling
        let mut red = Mat::<f64>::zeros(dim, dim);
        for k in &kept {
            for (i, &v) in k.values.iter().enumerate() {
                red[(k.offset + i, k.offset + i)] = v;
            }
        }
        if bperp != 0.0 {
            for w in kept.windows(2) {
                let (lower, upper) = (&w[0], &w[1]);
                if upper.block != lower.block + 1 {
                    continue;
                }
                let n_up = self.blocks[upper.block].states.len();
                // T = O_x(upper, lower) · U_lower
                let mut t = Mat::<f64>::zeros(n_up, lower.values.len());
                for &(i, j, v) in &self.zeeman_x[lower.block] {
                    for c in 0..lower.values.len() {
                        t[(i, c)] += v * lower.vectors[(j, c)];
                    }
                }
                let coupling = upper.vectors.transpose() * &t;
                for r in 0..upper.values.len() {
                    for c in 0..lower.values.len() {
                        let x = zee * bperp * coupling[(r, c)];
                        red[(upper.offset + r, lower.offset + c)] = x;
                        red[(lower.offset + c, upper.offset + r)] = x;
                    }
                }
            }
        }
        let (energies, coeffs) = if dim == 0 {
            (vec![], Mat::<f64>::zeros(0, 0))
        } else {
            let (s, u) = symmetric_eigen(&red)?;
            let idx: Vec<usize> = (0..dim).filter(|&k| windows.contains(s[k], 0.0)).collect();
            let energies = idx.iter().map(|&k| s[k]).collect();
            let coeffs = Mat::<f64>::from_fn(dim, idx.len(), |i, c| u[(i, idx[c])]);
            (energies, coeffs)
        };
        Ok(StarkSolution {
            fields: fields.clone(),
            frame,
            kept,
            energies,
            coeffs,
        })
    }

    /// Stark map over an increasing grid of field magnitudes (V/cm) with
    /// overlap-based tracking between neighbouring points.
    pub fn stark_map(&self, fields: &FieldConfig, grid: &[f64], windows: &Windows) -> Result<StarkMap> {
        if grid.is_empty() {
            return invalid("empty field grid");
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return invalid("field grid must be finite, non-negative and strictly increasing");
        }
        let mut levels = Vec::with_capacity(grid.len());
        let mut links = Vec::with_capacity(grid.len().saturating_sub(1));
        let mut prev: Option<StarkSolution> = None;
        for &f in grid {
            let sol = self.solve(&fields.with_electric_field(f), windows)?;
            levels.push(self.summaries(&sol));
            if let Some(p) = &prev {
                links.push(p.overlaps(&sol)?);
            }
            prev = Some(sol);
        }
        let tracking = Tracking::from_overlaps(&links, &levels.iter().map(Vec::len).collect::<Vec<_>>());
        Ok(StarkMap {
            field_grid: grid.to_vec(),
            reference: self.reference,
            fields: fields.clone(),
            levels,
            tracking,
        })
    }

    /// Energy, dominant label and Hellmann–Feynman slope of every level.
    pub fn summaries(&self, sol: &StarkSolution) -> Vec<LevelSummary> {
        let nl = sol.len();
        let mut best = vec![(0usize, -1.0f64); nl];
        let mut z = vec![0.0; nl];
        for k in &sol.kept {
            let a = sol.block_amplitudes(k);
            let blk = &self.blocks[k.block];
            for c in 0..nl {
                for (i, &g) in blk.states.iter().enumerate() {
                    let w = a[(i, c)] * a[(i, c)];
                    if w > best[c].1 {
                        best[c] = (g, w);
                    }
                }
            }
            for &(i, j, v) in &blk.r0 {
                for c in 0..nl {
                    z[c] += a[(i, c)] * v * a[(j, c)];
                }
            }
        }
        let slope_scale = units::rad_to_mhz(units::dipole_field_rad(1.0, 1.0));
        (0..nl)
            .map(|c| LevelSummary {
                energy: sol.energies[c],
                dominant: self.basis.get(best[c].0),
                dominant_weight: best[c].1,
                hf_slope: z[c] * slope_scale,
            })
            .collect()
    }

    /// ψ(level) over the full basis (field-aligned quantization axis).
    pub fn eigenstate(&self, sol: &StarkSolution, level: usize) -> Result<StarkEigenstate> {
        if level >= sol.len() {
            return invalid(format!("level {level} out of range ({} levels)", sol.len()));
        }
        let amps = self.expand(sol, level);
        Ok(StarkEigenstate::from_amplitudes(
            sol.energies[level],
            amps.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            &self.basis,
        ))
    }

    fn expand(&self, sol: &StarkSolution, level: usize) -> Vec<f64> {
        let mut amps = vec![0.0; self.basis.len()];
        for k in &sol.kept {
            let blk = &self.blocks[k.block];
            for (i, &g) in blk.states.iter().enumerate() {
                let mut s = 0.0;
                for c in 0..k.values.len() {
                    s += k.vectors[(i, c)] * sol.coeffs[(k.offset + c, level)];
                }
                amps[g] = s;
            }
        }
        amps
    }

    /// ⟨f| e r·ε |i⟩ (e·a₀) from level `initial` to every level of the solution.
    /// `polarization` is a lab-frame unit vector.
    pub fn dipoles_from(&self, sol: &StarkSolution, initial: usize, polarization: [f64; 3]) -> Result<Vec<Complex64>> {
        check_unit("polarization", polarization)?;
        if initial >= sol.len() {
            return invalid(format!("level {initial} out of range ({} levels)", sol.len()));
        }
        let psi = self.expand(sol, initial);
        let c = contraction_coefficients(sol.frame.to_frame(polarization));
        let mut v = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        for (qi, op) in self.ops.position.iter().enumerate() {
            if c[qi].norm() == 0.0 {
                continue;
            }
            for &(i, j, x) in &op.entries {
                v[i] += c[qi] * (x * psi[j]);
            }
        }
        // project onto kept block vectors, then onto the reduced eigenvectors
        let mut proj = vec![Complex64::new(0.0, 0.0); sol.coeffs.nrows()];
        for k in &sol.kept {
            let blk = &self.blocks[k.block];
            for c in 0..k.values.len() {
                let mut s = Complex64::new(0.0, 0.0);
                for (i, &g) in blk.states.iter().enumerate() {
                    s += v[g] * k.vectors[(i, c)];
                }
                proj[k.offset + c] = s;
            }
        }
        Ok((0..sol.len())
            .map(|f| (0..proj.len()).map(|r| proj[r] * sol.coeffs[(r, f)]).sum())
            .collect())
    }

    /// Transitions from `initial` with |ω − target| < window (rad/s), nearest first.
    pub fn resonant_transitions(
        &self,
        sol: &StarkSolution,
        initial: usize,
        target: f64,
        window: f64,
        polarization: [f64; 3],
    ) -> Result<Vec<Transition>> {
        if !(window > 0.0) {
            return invalid("window must be positive");
        }
        let d = self.dipoles_from(sol, initial, polarization)?;
        let e0 = sol.energies[initial];
        let mut out: Vec<Transition> = (0..sol.len())
            .filter(|&f| f != initial)
            .map(|f| Transition {
                level: f,
                frequency: sol.energies[f] - e0,
                detuning: sol.energies[f] - e0 - target,
                dipole: d[f],
            })
            .filter(|t| t.detuning.abs() < window)
            .collect();
        out.sort_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()));
        Ok(out)
    }

    /// Index of `state` in the solver's basis as (m_j block, local index).
    pub fn locate(&self, state: &BasisState) -> Option<(i32, usize)> {
        let g = self.basis.index_of(state)?;
        let (b, l) = self.location[g];
        Some((self.blocks[b].mj2, l))
    }
}

/// Block eigenvectors retained for the Zeeman stage.
#[derive(Clone, Debug)]
pub struct KeptBlock {
    block: usize,
    pub mj2: i32,
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
    offset: usize,
}

/// Eigenpairs of one field configuration inside the requested windows.
#[derive(Clone, Debug)]
pub struct StarkSolution {
    pub fields: FieldConfig,
    pub frame: FieldFrame,
    kept: Vec<KeptBlock>,
    /// rad/s relative to the solver reference, ascending
    pub energies: Vec<f64>,
    coeffs: Mat<f64>,
}

impl StarkSolution {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Size of the reduced (Zeeman-stage) problem.
    pub fn reduced_dim(&self) -> usize {
        self.coeffs.nrows()
    }

    fn block_amplitudes(&self, k: &KeptBlock) -> Mat<f64> {
        let c = self.coeffs.subrows(k.offset, k.values.len());
        &k.vectors * c
    }

    /// |⟨ψ_i(self)|ψ_j(other)⟩| for solutions of the same basis and frame.
    pub fn overlaps(&self, other: &StarkSolution) -> Result<Mat<f64>> {
        if self.frame != other.frame {
            return invalid("overlaps need solutions in the same field frame");
        }
        let mut o = Mat::<f64>::zeros(self.len(), other.len());
        for ka in &self.kept {
            let Some(kb) = other.kept.iter().find(|k| k.block == ka.block) else { continue };
            if ka.vectors.nrows() != kb.vectors.nrows() {
                return invalid("solutions come from different bases");
            }
            let ca = self.coeffs.subrows(ka.offset, ka.values.len());
            let cb = other.coeffs.subrows(kb.offset, kb.values.len());
            let m = ka.vectors.transpose() * &kb.vectors;
            let part = ca.transpose() * (&m * cb);
            o += part;
        }
        Ok(Mat::from_fn(o.nrows(), o.ncols(), |i, j| o[(i, j)].abs()))
    }

    /// Level whose energy (GHz relative to the reference) is closest to `ghz`.
    pub fn nearest(&self, ghz: f64) -> Option<usize> {
        let e = units::ghz_to_rad(ghz);
        (0..self.len()).min_by(|&a, &b| (self.energies[a] - e).abs().total_cmp(&(self.energies[b] - e).abs()))
    }
}

/// One candidate transition of [`StarkSolver::resonant_transitions`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transition {
    pub level: usize,
    /// ω_f − ω_i (rad/s)
    pub frequency: f64,
    /// ω_f − ω_i − target (rad/s)
    pub detuning: f64,
    /// e·a₀
    pub dipole: Complex64,
}

/// Transitions from `from` into `manifold` with |ω − target| < window (rad/s).
pub fn find_resonant_transitions(
    from: &StarkEigenstate,
    manifold: &[StarkEigenstate],
    target: f64,
    window: f64,
    polarization: [f64; 3],
    ops: &BasisOperators,
) -> Result<Vec<(usize, f64, Complex64)>> {
    if !(window > 0.0) {
        return invalid("window must be positive");
    }
    let mut out = Vec::new();
    for (k, f) in manifold.iter().enumerate() {
        let det = f.energy - from.energy - target;
        if det.abs() < window {
            let d = super::hamiltonian::transition_dipole(from, f, polarization, ops)?;
            out.push((k, det, d));
        }
    }
    out.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    Ok(out)
}

/// Compact description of one level at one field point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSummary {
    /// rad/s relative to the map reference
    pub energy: f64,
    pub dominant: BasisState,
    pub dominant_weight: f64,
    /// dE/dF from ⟨ψ|z'|ψ⟩, MHz per V/cm
    pub hf_slope: f64,
}

/// Break in a tracked chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackingDiagnostic {
    /// the chain ends at this grid index
    pub grid_index: usize,
    pub level: usize,
    pub best_overlap: f64,
}

/// Chains of level indices linked by maximal eigenvector overlap.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Tracking {
    /// next[k][i] = index at k+1 of level i at k
    pub next: Vec<Vec<Option<usize>>>,
    pub chains: Vec<Chain>,
    pub diagnostics: Vec<TrackingDiagnostic>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chain {
    pub start: usize,
    /// level index at grid points start, start+1, …
    pub levels: Vec<usize>,
}

impl Chain {
    pub fn end(&self) -> usize {
        self.start + self.levels.len() - 1
    }

    pub fn level_at(&self, k: usize) -> Option<usize> {
        if k < self.start {
            return None;
        }
        self.levels.get(k - self.start).copied()
    }
}

impl Tracking {
    /// Greedy one-to-one assignment by descending overlap; links below 0.5
    /// are not made and the chain is split with a diagnostic.
    pub fn from_overlaps(links: &[Mat<f64>], counts: &[usize]) -> Self {
        let mut next = Vec::with_capacity(links.len());
        let mut diagnostics = Vec::new();
        for (k, o) in links.iter().enumerate() {
            let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
            for i in 0..o.nrows() {
                for j in 0..o.ncols() {
                    if o[(i, j)] > 0.05 {
                        pairs.push((i, j, o[(i, j)]));
                    }
                }
            }
            pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
            let mut fwd = vec![None; o.nrows()];
            let mut taken = vec![false; o.ncols()];
            for (i, j, v) in pairs {
                if v > 0.5 && fwd[i].is_none() && !taken[j] {
                    fwd[i] = Some(j);
                    taken[j] = true;
                }
            }
            for (i, f) in fwd.iter().enumerate() {
                if f.is_none() {
                    let best = (0..o.ncols()).map(|j| o[(i, j)]).fold(0.0, f64::max);
                    diagnostics.push(TrackingDiagnostic { grid_index: k, level: i, best_overlap: best });
                }
            }
            next.push(fwd);
        }
        let mut chains = Vec::new();
        let mut has_prev: Vec<Vec<bool>> = counts.iter().map(|&c| vec![false; c]).collect();
        for (k, fwd) in next.iter().enumerate() {
            for j in fwd.iter().flatten() {
                has_prev[k + 1][*j] = true;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            for i in 0..c {
                if has_prev[k][i] {
                    continue;
                }
                let mut levels = vec![i];
                let (mut kk, mut ii) = (k, i);
                while kk < next.len() {
                    match next[kk][ii] {
                        Some(j) => {
                            levels.push(j);
                            kk += 1;
                            ii = j;
                        }
                        None => break,
                    }
                }
                chains.push(Chain { start: k, levels });
            }
        }
        Tracking { next, chains, diagnostics }
    }
}

/// Levels over a field grid with tracking information.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StarkMap {
    /// V/cm
    pub field_grid: Vec<f64>,
    /// absolute reference energy (rad/s)
    pub reference: f64,
    pub fields: FieldConfig,
    pub levels: Vec<Vec<LevelSummary>>,
    pub tracking: Tracking,
}

/// Field at which a tracked level reaches a given detuning.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Crossing {
    pub chain: usize,
    /// V/cm
    pub field: f64,
    /// MHz per V/cm
    pub slope: f64,
    pub dominant: BasisState,
}

impl StarkMap {
    /// Centered finite-difference slope (MHz per V/cm) of `chain` at grid index `k`.
    pub fn static_dipole(&self, chain: usize, k: usize) -> Result<f64> {
        let c = self
            .tracking
            .chains
            .get(chain)
            .ok_or_else(|| Error::InvalidArgument(format!("no chain {chain}")))?;
        if c.levels.len() < 2 || k < c.start || k > c.end() {
            return invalid(format!("chain {chain} is not tracked around grid index {k}"));
        }
        let lo = if k > c.start { k - 1 } else { k };
        let hi = if k < c.end() { k + 1 } else { k };
        let e = |kk: usize| self.levels[kk][c.level_at(kk).unwrap()].energy;
        let de = units::rad_to_mhz(e(hi) - e(lo));
        Ok(de / (self.field_grid[hi] - self.field_grid[lo]))
    }

    /// Tracked crossings of the energy `detuning` (rad/s), by linear interpolation.
    pub fn crossings(&self, detuning: f64) -> Vec<Crossing> {
        let mut out = Vec::new();
        for (ci, c) in self.tracking.chains.iter().enumerate() {
            for w in c.levels.windows(2).enumerate() {
                let (off, pair) = w;
                let k = c.start + off;
                let (a, b) = (&self.levels[k][pair[0]], &self.levels[k + 1][pair[1]]);
                let (ea, eb) = (a.energy - detuning, b.energy - detuning);
                if ea == 0.0 || ea.signum() != eb.signum() {
                    let t = ea / (ea - eb);
                    let (fa, fb) = (self.field_grid[k], self.field_grid[k + 1]);
                    out.push(Crossing {
                        chain: ci,
                        field: fa + t * (fb - fa),
                        slope: units::rad_to_mhz(b.energy - a.energy) / (fb - fa),
                        dominant: if t < 0.5 { a.dominant } else { b.dominant },
                    });
                }
            }
        }
        out.sort_by(|a, b| a.field.total_cmp(&b.field));
        out
    }

    /// CSV with columns field_Vcm, level_index, energy_GHz_rel_48D, dominant_n, dominant_l, dominant_mj.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
        w.write_record(["field_Vcm", "level_index", "energy_GHz_rel_48D", "dominant_n", "dominant_l", "dominant_mj"])
            .map_err(io)?;
        for (k, lv) in self.levels.iter().enumerate() {
            for (i, s) in lv.iter().enumerate() {
                w.write_record([
                    format!("{}", self.field_grid[k]),
                    i.to_string(),
                    format!("{:.9}", units::rad_to_ghz(s.energy)),
                    s.dominant.n.to_string(),
                    s.dominant.l.to_string(),
                    format!("{}", s.dominant.mj()),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv output failed: {e}")))?;
        Ok(())
    }
}
