//! Damped Gauss-Newton (Levenberg-Marquardt) solver shared by every fit in
//! the crate.
//!
//! Problems implement [`Residuals`] with an analytic Jacobian. The solver
//! minimises the plain sum of squared residuals; weighting is the caller's
//! business (divide residuals by their standard errors).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const DAMPING_UP: f64 = 10.0;
const DAMPING_DOWN: f64 = 0.3;
const DAMPING_CEILING: f64 = 1e20;
const DAMPING_FLOOR: f64 = 1e-15;

/// A least-squares problem `min Σ r_i(p)²`.
pub trait Residuals {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    fn residuals(&self, params: &DVector<f64>) -> DVector<f64>;
    /// Jacobian of the residuals, `num_residuals × num_params`.
    fn jacobian(&self, params: &DVector<f64>) -> DMatrix<f64>;
}

/// Closed interval constraint on one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub min: f64,
    pub max: f64,
}

impl ParamBound {
    pub const FREE: ParamBound = ParamBound {
        min: f64::NEG_INFINITY,
        max: f64::INFINITY,
    };

    pub fn at_least(min: f64) -> Self {
        ParamBound {
            min,
            max: f64::INFINITY,
        }
    }

    pub fn new(min: f64, max: f64) -> Self {
        ParamBound { min, max }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.min).min(self.max)
    }

    /// Intersection with another bound.
    pub fn intersect(&self, other: &ParamBound) -> ParamBound {
        ParamBound {
            min: self.min.max(other.min),
            max: self.max.min(other.max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative change in cost below which an accepted step ends the solve.
    pub convergence_tolerance: f64,
    pub initial_damping: f64,
    pub parameter_bounds: Option<Vec<ParamBound>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200,
            convergence_tolerance: 1e-12,
            initial_damping: 1e-3,
            parameter_bounds: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(invalid("convergence_tolerance must be positive"));
        }
        if !(self.initial_damping > 0.0) {
            return Err(invalid("initial_damping must be positive"));
        }
        if let Some(bounds) = &self.parameter_bounds {
            if bounds.iter().any(|b| b.min > b.max) {
                return Err(invalid("parameter bound with min > max"));
            }
        }
        Ok(())
    }

    pub fn with_bounds(&self, bounds: Vec<ParamBound>) -> Self {
        SolverConfig {
            parameter_bounds: Some(bounds),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative cost change dropped below tolerance.
    CostTolerance,
    /// Residuals vanished or the gradient is exactly zero.
    Stationary,
    /// No descent direction found even with maximal damping.
    DampingSaturated,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct NllsSolution {
    pub params: DVector<f64>,
    /// Gauss-Newton covariance at the optimum, scaled by the residual
    /// variance `cost / (m - n)` when `m > n`.
    pub covariance: DMatrix<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Cost after the initial evaluation and after every accepted step.
    pub cost_history: Vec<f64>,
    /// Condition number of the column-scaled normal matrix at the optimum.
    pub condition_number: f64,
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteModel)
    }
}

fn project(params: &mut DVector<f64>, bounds: &Option<Vec<ParamBound>>) {
    if let Some(bounds) = bounds {
        for (p, b) in params.iter_mut().zip(bounds) {
            *p = b.clamp(*p);
        }
    }
}

/// Minimises the sum of squared residuals of `model` starting at `initial`.
///
/// Rejected steps multiply the damping by 10, accepted steps by 0.3. A
/// singular damped system is treated as a rejected step. Non-convergence is
/// not an error: the best point is returned with `converged == false`.
pub fn nlls_solve<M: Residuals + ?Sized>(
    model: &M,
    initial: &DVector<f64>,
    config: &SolverConfig,
) -> Result<NllsSolution> {
    config.validate()?;
    let n = model.num_params();
    let m = model.num_residuals();
    if initial.len() != n {
        return Err(invalid(format!(
            "initial guess has {} parameters, model expects {n}",
            initial.len()
        )));
    }
    if let Some(b) = &config.parameter_bounds {
        if b.len() != n {
            return Err(invalid(format!(
                "{} parameter bounds given for {n} parameters",
                b.len()
            )));
        }
    }

    let mut params = initial.clone();
    project(&mut params, &config.parameter_bounds);
    let mut r = model.residuals(&params);
    if r.len() != m {
        return Err(invalid("residual vector length differs from num_residuals"));
    }
    check_finite(&r)?;
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut lambda = config.initial_damping;
    let mut termination = Termination::IterationLimit;
    let mut iterations = 0;

    'outer: while iterations < config.max_iterations {
        if cost == 0.0 {
            termination = Termination::Stationary;
            break;
        }
        iterations += 1;
        let jac = model.jacobian(&params);
        if jac.nrows() != m || jac.ncols() != n {
            return Err(invalid(format!(
                "jacobian is {}x{}, expected {m}x{n}",
                jac.nrows(),
                jac.ncols()
            )));
        }
        if jac.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteModel);
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.iter().all(|g| *g == 0.0) {
            termination = Termination::Stationary;
            break;
        }
        let diag_max = jtj.diagonal().max();
        let floor = if diag_max > 0.0 { diag_max * 1e-12 } else { 1.0 };

        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= DAMPING_UP;
                    if lambda > DAMPING_CEILING {
                        termination = Termination::DampingSaturated;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial = &params + &step;
            project(&mut trial, &config.parameter_bounds);
            let r_trial = model.residuals(&trial);
            check_finite(&r_trial)?;
            let cost_trial = r_trial.norm_squared();
            if cost_trial <= cost {
                let rel = (cost - cost_trial) / cost;
                params = trial;
                r = r_trial;
                cost = cost_trial;
                history.push(cost);
                lambda = (lambda * DAMPING_DOWN).max(DAMPING_FLOOR);
                if rel < config.convergence_tolerance {
                    termination = Termination::CostTolerance;
                    break 'outer;
                }
                break;
            }
            lambda *= DAMPING_UP;
            if lambda > DAMPING_CEILING {
                termination = Termination::DampingSaturated;
                break 'outer;
            }
        }
    }

    let jac = model.jacobian(&params);
    let jtj = jac.transpose() * &jac;
    let dof = m.saturating_sub(n);
    let scale = if dof > 0 { cost / dof as f64 } else { 1.0 };
    let covariance = pseudo_inverse_sym(&jtj) * scale;
    Ok(NllsSolution {
        params,
        covariance,
        cost,
        iterations,
        converged: termination != Termination::IterationLimit,
        termination,
        cost_history: history,
        condition_number: scaled_condition_number(&jtj),
    })
}

/// Moore-Penrose inverse of a symmetric positive semi-definite matrix.
pub fn pseudo_inverse_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let cutoff = max * n as f64 * f64::EPSILON;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / ev;
        }
    }
    (&out + out.transpose()) * 0.5
}

/// Condition number of `D^{-1/2} A D^{-1/2}` with `D = diag(A)`. Infinite if
/// any diagonal entry vanishes or the scaled matrix is singular.
pub fn scaled_condition_number(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return f64::INFINITY;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
