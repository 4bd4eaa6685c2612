//! Damped Gauss–Newton least squares with a central-difference Jacobian.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::symmetric_eigen;

/// x, y and 1σ errors of a data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != sigma.len() {
            return invalid("x, y and sigma must have the same length");
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return invalid("data must be finite");
        }
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid("errors must be positive");
        }
        Ok(FitData { x, y, sigma })
    }

    /// Per-pulse means from summed counts, σ = √max(counts, 1)/pulses.
    pub fn from_counts(x: Vec<f64>, counts: &[f64], pulses: f64) -> Result<Self> {
        if !(pulses > 0.0) {
            return invalid("number of pulses must be positive");
        }
        if counts.iter().any(|c| *c < 0.0) {
            return invalid("counts must be ≥ 0");
        }
        let y = counts.iter().map(|c| c / pulses).collect();
        let sigma = counts.iter().map(|c| c.max(1.0).sqrt() / pulses).collect();
        Self::new(x, y, sigma)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// y and σ multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.x.clone(), self.y.iter().map(|v| v * k).collect(), self.sigma.iter().map(|v| v * k.abs()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub initial: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Parameter {
    pub fn free(name: &str, initial: f64) -> Self {
        Parameter { name: name.to_string(), initial, lower: None, upper: None }
    }

    pub fn bounded(name: &str, initial: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        Parameter { name: name.to_string(), initial, lower, upper }
    }

    fn lo(&self) -> f64 {
        self.lower.unwrap_or(f64::NEG_INFINITY)
    }

    fn hi(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo(), self.hi())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// relative central-difference step
    pub jacobian_step: f64,
    /// relative change of χ² below which the fit stops
    pub residual_tolerance: f64,
    /// relative parameter step below which the fit stops
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, jacobian_step: 1e-6, residual_tolerance: 1e-10, step_tolerance: 1e-10 }
    }
}

pub type ModelFn<'a> = dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + 'a;

/// A model f(params, x) with its data and free parameters.
pub struct FitProblem<'a> {
    pub model: Box<ModelFn<'a>>,
    pub data: FitData,
    pub parameters: Vec<Parameter>,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        model: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>> + 'a,
        data: FitData,
        parameters: Vec<Parameter>,
    ) -> Self {
        FitProblem { model: Box::new(model), data, parameters }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parameters.is_empty() {
            return invalid("no free parameters");
        }
        if self.data.len() < self.parameters.len() {
            return Err(Error::UnderDetermined(format!(
                "{} data points for {} parameters",
                self.data.len(),
                self.parameters.len()
            )));
        }
        for p in &self.parameters {
            if p.lower.is_some_and(|v| !v.is_finite()) || p.upper.is_some_and(|v| !v.is_finite()) {
                return invalid(format!("bounds of {} must be finite", p.name));
            }
            if p.lo() > p.hi() {
                return invalid(format!("bounds of {} are reversed", p.name));
            }
            if !p.initial.is_finite() || p.initial < p.lo() || p.initial > p.hi() {
                return invalid(format!("initial value of {} = {} is outside its bounds", p.name, p.initial));
            }
        }
        Ok(())
    }

    fn evaluate(&self, p: &[f64]) -> Result<Vec<f64>> {
        let f = (self.model)(p, &self.data.x)?;
        if f.len() != self.data.len() {
            return invalid("model returned the wrong number of values");
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteModel { params: p.to_vec() });
        }
        Ok(f)
    }

    fn residuals(&self, p: &[f64]) -> Result<Vec<f64>> {
        let f = self.evaluate(p)?;
        Ok((0..f.len()).map(|i| (self.data.y[i] - f[i]) / self.data.sigma[i]).collect())
    }
}

/// ∂f_i/∂p_j by central differences with step `rel_step`·|p_j| (or `rel_step`
/// when p_j = 0), one-sided at an active bound. Row-major, unweighted.
pub fn numerical_jacobian(
    model: &ModelFn<'_>,
    p: &[f64],
    x: &[f64],
    rel_step: f64,
    parameters: Option<&[Parameter]>,
) -> Result<Vec<Vec<f64>>> {
    let m = x.len();
    let mut jac = vec![vec![0.0; p.len()]; m];
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = rel_step * if p[j] != 0.0 { p[j].abs() } else { 1.0 };
        let (lo, hi) = parameters.map_or((f64::NEG_INFINITY, f64::INFINITY), |ps| (ps[j].lo(), ps[j].hi()));
        let (a, b) = match (p[j] - h >= lo, p[j] + h <= hi) {
            (true, true) => (p[j] - h, p[j] + h),
            (false, true) => (p[j], p[j] + h),
            (true, false) => (p[j] - h, p[j]),
            (false, false) => return invalid("parameter bounds are narrower than the difference step"),
        };
        q[j] = b;
        let fb = model(&q, x)?;
        q[j] = a;
        let fa = model(&q, x)?;
        q[j] = p[j];
        if fa.len() != m || fb.len() != m {
            return invalid("model returned the wrong number of values");
        }
        for i in 0..m {
            jac[i][j] = (fb[i] - fa[i]) / (b - a);
        }
        if fa.iter().chain(&fb).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteModel { params: q.clone() });
        }
    }
    Ok(jac)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// 1σ from the covariance diagonal
    pub uncertainties: Vec<f64>,
    /// (JᵀWJ)⁻¹ at the optimum
    pub covariance: Vec<Vec<f64>>,
    /// √χ²
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Estimate by name; panics on an unknown name.
    pub fn get(&self, name: &str) -> f64 {
        self.estimates[self.index(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    pub fn uncertainty(&self, name: &str) -> f64 {
        self.uncertainties[self.index(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    /// Normal-approximation interval, ±1.96σ.
    pub fn confidence95(&self, name: &str) -> (f64, f64) {
        let (v, s) = (self.get(name), self.uncertainty(name));
        (v - 1.959_963_984_540_054 * s, v + 1.959_963_984_540_054 * s)
    }

    /// Reduced χ² (χ² per degree of freedom); NaN with no degrees of freedom.
    pub fn reduced_chi2(&self, n_data: usize) -> f64 {
        let dof = n_data as f64 - self.names.len() as f64;
        if dof > 0.0 {
            self.residual_norm.powi(2) / dof
        } else {
            f64::NAN
        }
    }

    pub fn report(&self, seed: Option<u64>) -> FitReport {
        let map = |v: &[f64]| self.names.iter().cloned().zip(v.iter().copied()).collect();
        FitReport {
            estimates: map(&self.estimates),
            uncertainties: map(&self.uncertainties),
            parameter_order: self.names.clone(),
            covariance: self.covariance.clone(),
            residual_norm: self.residual_norm,
            converged: self.converged,
            iterations: self.iterations,
            seed,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// JSON form of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimates: BTreeMap<String, f64>,
    pub uncertainties: BTreeMap<String, f64>,
    /// row/column order of the covariance
    pub parameter_order: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seed: Option<u64>,
    pub diagnostics: Vec<String>,
}

struct Normal {
    /// JᵀWJ
    a: Vec<Vec<f64>>,
    /// JᵀW r
    g: Vec<f64>,
}

fn normal_equations(jac: &[Vec<f64>], r: &[f64], sigma: &[f64]) -> Normal {
    let n = jac.first().map_or(0, |row| row.len());
    let mut a = vec![vec![0.0; n]; n];
    let mut g = vec![0.0; n];
    for (i, row) in jac.iter().enumerate() {
        let w: Vec<f64> = row.iter().map(|v| v / sigma[i]).collect();
        for j in 0..n {
            g[j] += w[j] * r[i];
            for k in 0..=j {
                a[j][k] += w[j] * w[k];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            a[k][j] = a[j][k];
        }
    }
    Normal { a, g }
}

/// Inverse of a symmetric positive semi-definite matrix after Jacobi scaling;
/// None when the scaled condition number exceeds 1e14.
fn covariance(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let d: Vec<f64> = (0..n).map(|i| a[i][i].sqrt()).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let s = Mat::<f64>::from_fn(n, n, |i, j| a[i][j] / (d[i] * d[j]));
    let (vals, vecs) = symmetric_eigen(&s).ok()?;
    let top = vals.iter().cloned().fold(0.0, f64::max);
    if vals.iter().any(|v| *v <= 1e-14 * top) {
        return None;
    }
    Some(
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| vecs[(i, k)] * vecs[(j, k)] / vals[k]).sum::<f64>() / (d[i] * d[j]))
                    .collect()
            })
            .collect(),
    )
}

fn solve_damped(normal: &Normal, lambda: f64) -> Option<Vec<f64>> {
    let n = normal.g.len();
    let m = Mat::<f64>::from_fn(n, n, |i, j| {
        let v = normal.a[i][j];
        if i == j {
            v + lambda * v.max(1e-300)
        } else {
            v
        }
    });
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| normal.g[i]);
    let sol = m.partial_piv_lu().solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes Σ((y − f)/σ)². Starts with a plain Gauss–Newton step. A step is
/// kept when χ² falls by at least a quarter of the linearized prediction;
/// otherwise the Marquardt damping is raised tenfold. Damping is lowered after
/// steps that match the prediction well. Bounds are enforced by projecting
/// every trial point.
pub fn least_squares(problem: &FitProblem<'_>, options: &LmOptions) -> Result<FitResult> {
    problem.validate()?;
    let params = &problem.parameters;
    let n = params.len();
    let sigma = &problem.data.sigma;
    let mut p: Vec<f64> = params.iter().map(|q| q.initial).collect();
    let mut r = problem.residuals(&p)?;
    let mut chi2 = r.iter().map(|v| v * v).sum::<f64>();
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut diagnostics = Vec::new();
    let jacobian = |p: &[f64]| numerical_jacobian(&*problem.model, p, &problem.data.x, options.jacobian_step, Some(params));
    let mut normal = normal_equations(&jacobian(&p)?, &r, sigma);
    while iterations < options.max_iterations {
        if chi2 == 0.0 {
            converged = true;
            break;
        }
        let Some(step) = solve_damped(&normal, lambda) else {
            if lambda == 0.0 {
                lambda = 1e-3;
                continue;
            }
            diagnostics.push("normal equations could not be solved".to_string());
            break;
        };
        let trial: Vec<f64> = (0..n).map(|j| params[j].project(p[j] + step[j])).collect();
        let moved: Vec<f64> = (0..n).map(|j| trial[j] - p[j]).collect();
        let small_step = norm(&moved) <= options.step_tolerance * (norm(&p) + options.step_tolerance);
        let r_trial = match problem.residuals(&trial) {
            Ok(v) => v,
            Err(Error::NonFiniteModel { .. }) if lambda < 1e12 => {
                lambda = (lambda * 10.0).max(1e-3);
                continue;
            }
            Err(e) => return Err(e),
        };
        let chi2_trial = r_trial.iter().map(|v| v * v).sum::<f64>();
        // gain ratio: actual over linearized decrease of χ² for the projected step
        let a_moved: f64 = (0..n).map(|j| moved[j] * (0..n).map(|k| normal.a[j][k] * moved[k]).sum::<f64>()).sum();
        let predicted = 2.0 * (0..n).map(|j| moved[j] * normal.g[j]).sum::<f64>() - a_moved;
        let actual = chi2 - chi2_trial;
        let gain = if predicted > 0.0 { actual / predicted } else { f64::from(actual >= 0.0) };
        if chi2_trial <= chi2 && (gain >= 0.25 || small_step) {
            iterations += 1;
            let change = actual / chi2;
            p = trial;
            r = r_trial;
            chi2 = chi2_trial;
            normal = normal_equations(&jacobian(&p)?, &r, sigma);
            if gain > 0.75 {
                lambda = if lambda <= 1e-12 { 0.0 } else { lambda / 10.0 };
            }
            if change < options.residual_tolerance || small_step {
                converged = true;
                break;
            }
        } else {
            if small_step {
                // no representable improvement left
                converged = true;
                break;
            }
            lambda = (lambda * 10.0).max(1e-3);
            if lambda > 1e16 {
                diagnostics.push("damping grew without finding a lower χ²".to_string());
                break;
            }
        }
    }
    if !converged && iterations >= options.max_iterations {
        diagnostics.push(format!("stopped after {} iterations", options.max_iterations));
    }
    let cov = match covariance(&normal.a) {
        Some(c) => c,
        None => {
            for (j, q) in params.iter().enumerate() {
                if !(normal.a[j][j] > 0.0) {
                    diagnostics.push(format!("model does not depend on {}", q.name));
                }
            }
            diagnostics.push("singular Jacobian at the optimum".to_string());
            converged = false;
            vec![vec![f64::NAN; n]; n]
        }
    };
    Ok(FitResult {
        names: params.iter().map(|q| q.name.clone()).collect(),
        uncertainties: (0..n).map(|j| cov[j][j].sqrt()).collect(),
        estimates: p,
        covariance: cov,
        residual_norm: chi2.sqrt(),
        converged,
        iterations,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> FitData {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = x.iter().map(|v| 2.5 * v - 1.0).collect();
        FitData::new(x, y, vec![1.0; 10]).unwrap()
    }

    #[test]
    fn straight_line_in_two_iterations() {
        let prob = FitProblem::new(
            |p, x| Ok(x.iter().map(|v| p[0] * v + p[1]).collect()),
            line(),
            vec![Parameter::free("a", 1.0), Parameter::free("b", 0.0)],
        );
        let fit = least_squares(&prob, &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2, "{}", fit.iterations);
        assert!((fit.get("a") - 2.5).abs() < 1e-12);
        assert!((fit.get("b") + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_and_validation() {
        let prob = FitProblem::new(
            |p, x| Ok(x.iter().map(|v| p[0] * v + p[1]).collect()),
            line(),
            vec![Parameter::bounded("a", 1.0, Some(0.0), Some(2.0)), Parameter::free("b", 0.0)],
        );
        let fit = least_squares(&prob, &LmOptions::default()).unwrap();
        assert!(fit.get("a") <= 2.0);
        let bad = FitProblem::new(|_, x| Ok(vec![0.0; x.len()]), line(), vec![Parameter::bounded("a", 3.0, Some(0.0), Some(2.0))]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flat_direction_is_reported() {
        let prob = FitProblem::new(
            |p, x| Ok(x.iter().map(|v| p[0] * v).collect()),
            line(),
            vec![Parameter::free("a", 1.0), Parameter::free("unused", 0.0)],
        );
        let fit = least_squares(&prob, &LmOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostics.iter().any(|d| d.contains("unused")));
    }

    #[test]
    fn nan_model_names_the_parameters() {
        let prob = FitProblem::new(|p, x| Ok(vec![p[0].ln(); x.len()]), line(), vec![Parameter::free("a", -1.0)]);
        match least_squares(&prob, &LmOptions::default()) {
            Err(Error::NonFiniteModel { params }) => assert_eq!(params, vec![-1.0]),
            other => panic!("{other:?}"),
        }
    }
}
