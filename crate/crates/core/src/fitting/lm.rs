//! Levenberg–Marquardt with Marquardt's diagonal scaling.

use nalgebra::{DMatrix, DVector};

pub(crate) const MAX_ITERATIONS: usize = 200;
pub(crate) const TOLERANCE: f64 = 1e-10;
/// Smallest singular value of the column-normalised Jacobian, relative to
/// the largest, below which parameters are treated as not identifiable.
pub(crate) const SINGULAR_RATIO: f64 = 1e-7;
const FD_STEP: f64 = 1e-6;

pub(crate) struct LmOutcome {
    pub theta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) enum LmFailure {
    /// Residuals could not be evaluated at the start point.
    BadStart,
    Singular,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn jacobian(
    theta: &DVector<f64>,
    n: usize,
    residuals: &impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
) -> Option<DMatrix<f64>> {
    let mut j = DMatrix::zeros(n, theta.len());
    for k in 0..theta.len() {
        let h = FD_STEP * theta[k].abs().max(1.0);
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[k] += h;
        down[k] -= h;
        let (ru, rd) = (residuals(&up)?, residuals(&down)?);
        j.set_column(k, &((ru - rd) / (2.0 * h)));
    }
    Some(j)
}

pub(crate) fn is_singular(j: &DMatrix<f64>) -> bool {
    let mut scaled = j.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return true;
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    !(min > SINGULAR_RATIO * max)
}

/// Minimises `½‖r(θ)‖²`. `residuals` returns `None` where the model cannot
/// be evaluated; such trial steps are rejected.
pub(crate) fn minimise(
    theta0: DVector<f64>,
    residuals: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
) -> Result<LmOutcome, LmFailure> {
    let mut theta = theta0;
    let mut r = residuals(&theta).ok_or(LmFailure::BadStart)?;
    let n = r.len();
    let mut j = jacobian(&theta, n, &residuals).ok_or(LmFailure::BadStart)?;
    if is_singular(&j) {
        return Err(LmFailure::Singular);
    }
    let mut c = cost(&r);
    let scale0 = c.max(f64::MIN_POSITIVE);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial = &theta + &step;
            let trial_r = residuals(&trial).filter(|t| t.iter().all(|x| x.is_finite()));
            match trial_r {
                Some(tr) if cost(&tr) < c => {
                    let new_c = cost(&tr);
                    let rel_step = step.norm() / theta.norm().max(1.0);
                    let rel_drop = (c - new_c) / c;
                    theta = trial;
                    r = tr;
                    let tiny = new_c <= 1e-30 * scale0;
                    c = new_c;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if (rel_step < TOLERANCE && rel_drop < TOLERANCE) || tiny {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // No descent direction survives rounding: a stationary point.
            converged = true;
        }
        if let Some(new_j) = jacobian(&theta, n, &residuals) {
            j = new_j;
        }
        if converged {
            break;
        }
    }
    if is_singular(&j) {
        return Err(LmFailure::Singular);
    }
    Ok(LmOutcome {
        theta,
        residuals: r,
        jacobian: j,
        iterations,
        converged,
    })
}
