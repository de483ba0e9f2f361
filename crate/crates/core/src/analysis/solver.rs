//! Damped Gauss-Newton (Levenberg-Marquardt) least squares for the two- and
//! three-parameter fits in this crate.
//!
//! The problems here are tiny (2-3 parameters, a few thousand residuals,
//! smooth analytic Jacobians), so the classic normal-equation form with a
//! multiplicative damping ladder is plenty: solve
//! `(J^T J + lambda diag(J^T J)) d = -J^T r`, accept the step if the cost
//! drops, shrink lambda on success and grow it on rejection. Everything is
//! plain sequential f64 arithmetic, so a rerun on the same inputs is
//! bit-identical.

use serde::Serialize;

/// A residual vector with an analytic Jacobian.
///
/// `residuals[i] = model(x_i; params) - y_i`; `jacobian` is row-major with
/// `n_residuals x n_params` entries `d residual_i / d param_j`.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    fn jacobian(&self, params: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Converged when the applied relative step falls below this.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            initial_lambda: 1e-3,
            record_trace: false,
        }
    }
}

/// One proposal, for `--dump-solver-trace`.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda: f64,
    pub cost: f64,
    pub params: Vec<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    /// Linearised one-sigma errors from `rss/(m-n) * (J^T J)^-1`;
    /// NaN where the covariance is singular.
    pub std_errors: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub at_lower_bound: Vec<bool>,
    pub at_upper_bound: Vec<bool>,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("empty parameter vector or no residuals")]
    EmptyProblem,
    #[error("initial parameters produce a non-finite cost")]
    NonFiniteStart,
    #[error("bounds are inverted or initial guess not finite")]
    BadBounds,
}

/// Minimise `|residuals|^2` starting from `x0`, clamping every trial point
/// into `bounds` (use +-INFINITY for an unbounded side).
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    x0: &[f64],
    bounds: &[(f64, f64)],
    options: &SolverOptions,
) -> Result<FitOutcome, SolverError> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if n == 0 || m == 0 || x0.len() != n || bounds.len() != n {
        return Err(SolverError::EmptyProblem);
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if lo > hi || !x0[i].is_finite() {
            return Err(SolverError::BadBounds);
        }
    }

    let clamp = |p: &mut [f64]| {
        for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };

    let mut params = x0.to_vec();
    clamp(&mut params);

    let mut r = vec![0.0; m];
    let mut j = vec![0.0; m * n];
    let mut trial_r = vec![0.0; m];

    problem.residuals(&params, &mut r);
    let mut cost = dot(&r, &r);
    if !cost.is_finite() {
        return Err(SolverError::NonFiniteStart);
    }

    problem.jacobian(&params, &mut j);
    let (mut h, mut g) = normal_equations(&j, &r, n);

    let mut lambda = options.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    while iterations < options.max_iterations {
        iterations += 1;

        // Damped system; floor the damping diagonal so a dead parameter
        // (zero Jacobian column) cannot make it singular.
        let max_diag = h.iter().step_by(n + 1).cloned().fold(0.0f64, f64::max);
        let floor = 1e-12 * max_diag.max(1e-300);
        let mut a = h.clone();
        for k in 0..n {
            a[k * n + k] += lambda * h[k * n + k].max(floor);
        }
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();

        let delta = match solve_in_place(&mut a, &mut rhs, n) {
            Some(d) => d,
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            }
        };

        let mut trial = params.clone();
        for k in 0..n {
            trial[k] += delta[k];
        }
        clamp(&mut trial);

        let step = rel_step(&trial, &params);
        problem.residuals(&trial, &mut trial_r);
        let trial_cost = dot(&trial_r, &trial_r);
        let accepted = trial_cost.is_finite() && trial_cost <= cost;

        if options.record_trace {
            trace.push(IterationRecord {
                iteration: iterations,
                lambda,
                cost: if accepted { trial_cost } else { cost },
                params: trial.clone(),
                accepted,
            });
        }

        if accepted {
            params = trial;
            std::mem::swap(&mut r, &mut trial_r);
            cost = trial_cost;
            problem.jacobian(&params, &mut j);
            let (nh, ng) = normal_equations(&j, &r, n);
            h = nh;
            g = ng;
            lambda = (lambda * 0.1).max(1e-12);
            if step < options.step_tolerance {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            // A heavily damped step this small that still fails to improve
            // means we are sitting at the minimum.
            if step < options.step_tolerance || lambda > 1e14 {
                converged = step < options.step_tolerance;
                break;
            }
        }
    }

    // Covariance from the undamped normal matrix at the solution.
    let std_errors = if m > n {
        let sigma2 = cost / (m - n) as f64;
        match invert_in_place(h.clone(), n) {
            Some(inv) => (0..n)
                .map(|k| {
                    let v = inv[k * n + k] * sigma2;
                    if v >= 0.0 {
                        v.sqrt()
                    } else {
                        f64::NAN
                    }
                })
                .collect(),
            None => vec![f64::NAN; n],
        }
    } else {
        vec![f64::NAN; n]
    };

    let eps_bound = |p: f64, b: f64| b.is_finite() && (p - b).abs() <= 1e-12 * (1.0 + b.abs());
    let at_lower_bound = params.iter().zip(bounds).map(|(&p, &(lo, _))| eps_bound(p, lo)).collect();
    let at_upper_bound = params.iter().zip(bounds).map(|(&p, &(_, hi))| eps_bound(p, hi)).collect();

    Ok(FitOutcome {
        params,
        std_errors,
        rss: cost,
        converged,
        iterations,
        at_lower_bound,
        at_upper_bound,
        trace,
    })
}

/// Heteroscedasticity-consistent ("sandwich") one-sigma errors for an
/// unweighted least-squares solution: the diagonal of
/// `(JᵀJ)⁻¹ (JᵀΣJ) (JᵀJ)⁻¹` with `Σ = diag(variances) + offset_variance·𝟙𝟙ᵀ`.
///
/// The RSS-scaled errors in [`FitOutcome`] assume one shared residual
/// variance; on counting data, where the variance tracks the signal, they
/// understate the uncertainty of the informative high-count bins. When
/// per-residual variances are available this estimate is consistent for
/// the actual spread of the unweighted estimator.
///
/// `offset_variance` covers errors that move every residual coherently —
/// here, the uncertainty of a background floor estimated from a noise
/// window and subtracted from all bins. Its rank-one contribution
/// `offset_variance · (Jᵀ𝟙)(Jᵀ𝟙)ᵀ` is exact for such an offset; pass 0
/// when the data carry no shared systematic term. Returns NaN throughout
/// when the normal matrix is singular.
pub fn sandwich_std_errors<P: LeastSquaresProblem>(
    problem: &P,
    params: &[f64],
    variances: &[f64],
    offset_variance: f64,
) -> Vec<f64> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if n == 0 || m == 0 || variances.len() != m {
        return vec![f64::NAN; n];
    }
    let mut j = vec![0.0; m * n];
    problem.jacobian(params, &mut j);

    let mut h = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    let mut u = vec![0.0; n];
    for i in 0..m {
        let row = &j[i * n..(i + 1) * n];
        let v = variances[i].max(0.0);
        for a in 0..n {
            u[a] += row[a];
            for c in a..n {
                h[a * n + c] += row[a] * row[c];
                b[a * n + c] += row[a] * row[c] * v;
            }
        }
    }
    let offset_variance = offset_variance.max(0.0);
    for a in 0..n {
        for c in a..n {
            b[a * n + c] += offset_variance * u[a] * u[c];
        }
    }
    for a in 0..n {
        for c in 0..a {
            h[a * n + c] = h[c * n + a];
            b[a * n + c] = b[c * n + a];
        }
    }

    let hinv = match invert_in_place(h, n) {
        Some(inv) => inv,
        None => return vec![f64::NAN; n],
    };
    (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for a in 0..n {
                for c in 0..n {
                    acc += hinv[k * n + a] * b[a * n + c] * hinv[c * n + k];
                }
            }
            if acc >= 0.0 {
                acc.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_step(trial: &[f64], params: &[f64]) -> f64 {
    let num: f64 = trial
        .iter()
        .zip(params)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = params.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / (den + 1e-12)
}

/// `(J^T J, J^T r)` for a row-major `m x n` Jacobian.
fn normal_equations(j: &[f64], r: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = r.len();
    let mut h = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for i in 0..m {
        let row = &j[i * n..(i + 1) * n];
        for a in 0..n {
            g[a] += row[a] * r[i];
            for b in a..n {
                h[a * n + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            h[a * n + b] = h[b * n + a];
        }
    }
    (h, g)
}

/// Gaussian elimination with partial pivoting; fine at n <= 4.
fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Gauss-Jordan inverse of a small symmetric positive matrix.
fn invert_in_place(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for k in 0..n {
        inv[k * n + k] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let f = 1.0 / a[col * n + col];
        for k in 0..n {
            a[col * n + k] *= f;
            inv[col * n + k] *= f;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[row * n + k] -= f * a[col * n + k];
                inv[row * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}
