//! Logistic regression: an unpenalized logit fitted by Newton's method and
//! the elastic-net penalized logit fitted by coordinate descent.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dataset::{ColumnOrigin, DesignEncoder, DesignMatrix};

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("design has {found} columns, model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{labels} labels for {rows} design rows")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("perfect or quasi-complete separation: coefficients diverge (max |eta| = {max_eta:.1})")]
    Separation { max_eta: f64 },
    #[error("design columns are collinear; the information matrix is singular")]
    Collinear,
    #[error("elastic net requires a standardized design")]
    NotStandardized,
    #[error("alpha = {0} must lie in [0, 1]")]
    InvalidAlpha(f64),
    #[error("lambda = {0} must be positive and finite")]
    InvalidLambda(f64),
    #[error("no convergence after {iterations} iterations; objective trace tail {trace:?}")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
}

/// Logistic response `exp(η) / (1 + exp(η))`, evaluated without overflow.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coding {
    /// One column per level; the penalty resolves the rank deficiency.
    FullOneHot,
    /// First level of each categorical block dropped (its coefficient stored as 0).
    Reference,
}

impl Coding {
    pub fn as_str(self) -> &'static str {
        match self {
            Coding::FullOneHot => "full_one_hot",
            Coding::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    pub objective: f64,
}

/// A fitted linear predictor `η = β₀ + Σ βⱼ xⱼ` over the design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    /// One coefficient per design column, on the scale of the design the
    /// model was fitted on (standardized for the elastic net).
    pub coefficients: Vec<f64>,
    pub provenance: Vec<ColumnOrigin>,
    /// `None` for the plain logit.
    pub penalty: Option<Penalty>,
    pub coding: Coding,
    pub convergence: Convergence,
    /// Encoder reproducing the training design on new tables.
    pub encoder: DesignEncoder,
}

impl LinearFit {
    pub fn is_standardized(&self) -> bool {
        self.encoder.standardization.is_some()
    }

    pub fn linear_predictor(&self, design: &DesignMatrix) -> Result<Vec<f64>, LinearError> {
        if design.n_cols() != self.coefficients.len() {
            return Err(LinearError::WidthMismatch {
                expected: self.coefficients.len(),
                found: design.n_cols(),
            });
        }
        Ok(eta(design, self.intercept, &self.coefficients))
    }

    /// Intercept and coefficients on the unstandardized covariate scale.
    pub fn destandardized(&self) -> (f64, Vec<f64>) {
        let Some(s) = &self.encoder.standardization else {
            return (self.intercept, self.coefficients.clone());
        };
        let mut b0 = self.intercept;
        let beta: Vec<f64> = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let scale = if s.constant[j] { 1.0 } else { s.sd[j] };
                b0 -= b * s.mean[j] / scale;
                b / scale
            })
            .collect();
        (b0, beta)
    }
}

fn eta(design: &DesignMatrix, intercept: f64, beta: &[f64]) -> Vec<f64> {
    let mut out = vec![intercept; design.n_rows()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (o, x) in out.iter_mut().zip(design.column(j)) {
                *o += b * x;
            }
        }
    }
    out
}

/// Fitted probabilities for every design row.
pub fn predict_proba(fit: &LinearFit, design: &DesignMatrix) -> Result<Vec<f64>, LinearError> {
    Ok(fit.linear_predictor(design)?.into_iter().map(sigmoid).collect())
}

/// Bernoulli negative log-likelihood `Σ ln(1 + e^η) − yη` (a sum, not a mean).
pub fn neg_log_likelihood(design: &DesignMatrix, labels: &[u8], intercept: f64, beta: &[f64]) -> f64 {
    eta(design, intercept, beta)
        .iter()
        .zip(labels)
        .map(|(&e, &y)| softplus(e) - f64::from(y) * e)
        .sum()
}

/// Gradient of the log-likelihood (not negated) with respect to
/// (intercept, β₁..β_q): `Σ (yᵢ − πᵢ) xᵢ`.
pub fn log_likelihood_gradient(design: &DesignMatrix, labels: &[u8], intercept: f64, beta: &[f64]) -> Vec<f64> {
    let resid: Vec<f64> = eta(design, intercept, beta)
        .iter()
        .zip(labels)
        .map(|(&e, &y)| f64::from(y) - sigmoid(e))
        .collect();
    let mut g = Vec::with_capacity(beta.len() + 1);
    g.push(resid.iter().sum());
    for j in 0..beta.len() {
        g.push(design.column(j).iter().zip(&resid).map(|(x, r)| x * r).sum());
    }
    g
}

/// `α‖β‖₁ + (1 − α)·½‖β‖₂²` (intercept excluded by the caller).
pub fn penalty_value(beta: &[f64], alpha: f64) -> Result<f64, LinearError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LinearError::InvalidAlpha(alpha));
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    Ok(alpha * l1 + (1.0 - alpha) * 0.5 * l2)
}

/// Penalized objective minimized by [`fit_elastic_net`]:
/// `(1/n)·NLL + λ·pen_α(β)`.
pub fn elastic_net_objective(design: &DesignMatrix, labels: &[u8], intercept: f64, beta: &[f64], penalty: Penalty) -> f64 {
    let n = design.n_rows() as f64;
    let pen = penalty_value(beta, penalty.alpha).unwrap_or(f64::NAN);
    neg_log_likelihood(design, labels, intercept, beta) / n + penalty.lambda * pen
}

fn check_inputs(design: &DesignMatrix, labels: &[u8]) -> Result<(), LinearError> {
    if labels.len() != design.n_rows() {
        return Err(LinearError::LengthMismatch {
            rows: design.n_rows(),
            labels: labels.len(),
        });
    }
    let p = labels.iter().filter(|&&y| y == 1).count();
    if p == 0 || p == labels.len() {
        return Err(LinearError::SingleClass);
    }
    Ok(())
}

const LOGIT_MAX_ITER: usize = 100;
const SEPARATION_ETA: f64 = 30.0;

/// Maximum-likelihood logit by Newton–Raphson (IRLS) with step halving.
///
/// Categorical blocks are reference-coded internally: the first level of
/// every one-hot block that occurs is left out of the fit and reported with coefficient 0.
/// Columns without variation are left out the same way.
/// Stops when the relative change of the objective drops below 1e-10 or after
/// 100 iterations.
pub fn fit_logit(design: &DesignMatrix, labels: &[u8]) -> Result<LinearFit, LinearError> {
    check_inputs(design, labels)?;
    let n = design.n_rows();
    let q = design.n_cols();
    let mut active = Vec::with_capacity(q);
    let mut reference_taken: Option<&str> = None;
    for (j, origin) in design.provenance().iter().enumerate() {
        let col = design.column(j);
        if col.iter().all(|&v| v == col[0]) {
            continue;
        }
        // the first varying level of each block is the reference
        if origin.level.is_some() && reference_taken != Some(origin.feature.as_str()) {
            reference_taken = Some(origin.feature.as_str());
            continue;
        }
        active.push(j);
    }
    let m = active.len() + 1;
    let mut x = DMatrix::<f64>::zeros(n, m);
    x.column_mut(0).fill(1.0);
    for (k, &j) in active.iter().enumerate() {
        x.column_mut(k + 1).copy_from_slice(design.column(j));
    }
    let y = DVector::from_iterator(n, labels.iter().map(|&v| f64::from(v)));

    let objective = |theta: &DVector<f64>| -> f64 {
        let e = &x * theta;
        e.iter().zip(y.iter()).map(|(&e, &y)| softplus(e) - y * e).sum()
    };

    let mut theta = DVector::<f64>::zeros(m);
    let ybar = y.mean();
    theta[0] = (ybar / (1.0 - ybar)).ln();
    let mut obj = objective(&theta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < LOGIT_MAX_ITER {
        iterations += 1;
        let e = &x * &theta;
        let p = e.map(sigmoid);
        let w = p.map(|p| (p * (1.0 - p)).max(1e-12));
        let grad = x.tr_mul(&(&y - &p));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let info = x.tr_mul(&xw);
        let step = info.cholesky().ok_or(LinearError::Collinear)?.solve(&grad);
        let mut t = 1.0;
        let mut next = &theta + &step;
        let mut next_obj = objective(&next);
        while next_obj > obj && t > 1e-10 {
            t *= 0.5;
            next = &theta + &step * t;
            next_obj = objective(&next);
        }
        let rel = (obj - next_obj).abs() / obj.abs().max(1e-300);
        if next_obj <= obj {
            theta = next;
            obj = next_obj;
        }
        if rel < 1e-10 {
            converged = true;
            break;
        }
    }
    let max_eta = (&x * &theta).amax();
    if max_eta > SEPARATION_ETA || !converged {
        return Err(LinearError::Separation { max_eta });
    }
    let mut coefficients = vec![0.0; q];
    for (k, &j) in active.iter().enumerate() {
        coefficients[j] = theta[k + 1];
    }
    Ok(LinearFit {
        intercept: theta[0],
        coefficients,
        provenance: design.provenance().to_vec(),
        penalty: None,
        coding: Coding::Reference,
        convergence: Convergence {
            iterations,
            objective: obj,
        },
        encoder: design.encoder().clone(),
    })
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Convergence controls for [`fit_elastic_net`].
#[derive(Debug, Clone, Copy)]
pub struct CdControl {
    /// Stop when no coefficient moves by more than this between outer iterations.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for CdControl {
    fn default() -> Self {
        CdControl {
            tolerance: 1e-8,
            max_outer: 500,
            max_sweeps: 10_000,
        }
    }
}

/// Elastic-net logit: minimizes `(1/n)·NLL + λ(α‖β‖₁ + (1−α)·½‖β‖₂²)` by
/// cyclic coordinate descent with soft-thresholding on successive quadratic
/// approximations of the log-likelihood. The intercept is not penalized.
pub fn fit_elastic_net(design: &DesignMatrix, labels: &[u8], lambda: f64, alpha: f64) -> Result<LinearFit, LinearError> {
    fit_elastic_net_from(design, labels, Penalty { lambda, alpha }, None, CdControl::default())
}

/// [`fit_elastic_net`] with an optional warm start and explicit controls.
pub fn fit_elastic_net_from(
    design: &DesignMatrix,
    labels: &[u8],
    penalty: Penalty,
    warm: Option<(f64, &[f64])>,
    control: CdControl,
) -> Result<LinearFit, LinearError> {
    let Penalty { lambda, alpha } = penalty;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LinearError::InvalidAlpha(alpha));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LinearError::InvalidLambda(lambda));
    }
    if !design.is_standardized() {
        return Err(LinearError::NotStandardized);
    }
    check_inputs(design, labels)?;
    let n = design.n_rows();
    let nf = n as f64;
    let q = design.n_cols();
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let constant = &design.standardization().expect("checked").constant;

    let (mut b0, mut beta) = match warm {
        Some((b, w)) if w.len() == q => (b, w.to_vec()),
        _ => {
            let ybar = y.iter().sum::<f64>() / nf;
            ((ybar / (1.0 - ybar)).ln(), vec![0.0; q])
        }
    };
    let objective = |b0: f64, beta: &[f64]| elastic_net_objective(design, labels, b0, beta, penalty);
    let mut obj = objective(b0, &beta);
    let mut trace = vec![obj];
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];
    for outer in 1..=control.max_outer {
        // quadratic approximation at the current point
        let e = eta(design, b0, &beta);
        for i in 0..n {
            let p = sigmoid(e[i]);
            w[i] = (p * (1.0 - p)).max(1e-5);
            // working residual z − η
            r[i] = (y[i] - p) / w[i];
        }
        let wsum: f64 = w.iter().sum::<f64>() / nf;
        let xwx: Vec<f64> = (0..q)
            .map(|j| design.column(j).iter().zip(&w).map(|(x, w)| w * x * x).sum::<f64>() / nf)
            .collect();

        let (old_b0, old_beta) = (b0, beta.clone());
        let mut new_b0 = b0;
        let mut new_beta = beta.clone();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            let d0 = r.iter().zip(&w).map(|(r, w)| r * w).sum::<f64>() / nf / wsum;
            if d0 != 0.0 {
                new_b0 += d0;
                for ri in r.iter_mut() {
                    *ri -= d0;
                }
                max_change = max_change.max(d0.abs());
            }
            for j in 0..q {
                if constant[j] {
                    continue;
                }
                let xj = design.column(j);
                let old = new_beta[j];
                let grad = xj.iter().zip(&w).zip(&r).map(|((x, w), r)| x * w * r).sum::<f64>() / nf;
                let next = soft_threshold(grad + xwx[j] * old, l1) / (xwx[j] + l2);
                if next != old {
                    let d = next - old;
                    for (ri, x) in r.iter_mut().zip(xj) {
                        *ri -= d * x;
                    }
                    new_beta[j] = next;
                    max_change = max_change.max(d.abs());
                }
            }
            if max_change < control.tolerance * 1e-2 || sweeps >= control.max_sweeps {
                break;
            }
        }

        // guard against overshooting the true objective
        let mut t = 1.0;
        let mut cand_b0 = new_b0;
        let mut cand_beta = new_beta.clone();
        let mut cand_obj = objective(cand_b0, &cand_beta);
        while cand_obj > obj + 1e-15 * obj.abs() && t > 1e-6 {
            t *= 0.5;
            cand_b0 = old_b0 + t * (new_b0 - old_b0);
            cand_beta = old_beta.iter().zip(&new_beta).map(|(o, n)| o + t * (n - o)).collect();
            cand_obj = objective(cand_b0, &cand_beta);
        }
        b0 = cand_b0;
        beta = cand_beta;
        obj = cand_obj;
        trace.push(obj);
        let change = old_beta
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold((old_b0 - b0).abs(), f64::max);
        if change < control.tolerance {
            return Ok(LinearFit {
                intercept: b0,
                coefficients: beta,
                provenance: design.provenance().to_vec(),
                penalty: Some(penalty),
                coding: Coding::FullOneHot,
                convergence: Convergence {
                    iterations: outer,
                    objective: obj,
                },
                encoder: design.encoder().clone(),
            });
        }
    }
    let tail = trace.len().saturating_sub(5);
    Err(LinearError::NonConvergence {
        iterations: control.max_outer,
        trace: trace[tail..].to_vec(),
    })
}

/// Solutions along a decreasing or increasing λ grid, warm-started in order.
pub fn elastic_net_path(
    design: &DesignMatrix,
    labels: &[u8],
    lambdas: &[f64],
    alpha: f64,
) -> Result<Vec<LinearFit>, LinearError> {
    let mut out: Vec<LinearFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = out.last().map(|f| (f.intercept, f.coefficients.as_slice()));
        out.push(fit_elastic_net_from(design, labels, Penalty { lambda, alpha }, warm, CdControl::default())?);
    }
    Ok(out)
}

/// Gradient of the mean negative log-likelihood with respect to β (no intercept).
pub fn mean_nll_gradient(design: &DesignMatrix, labels: &[u8], intercept: f64, beta: &[f64]) -> Vec<f64> {
    let n = design.n_rows() as f64;
    log_likelihood_gradient(design, labels, intercept, beta)
        .into_iter()
        .skip(1)
        .map(|g| -g / n)
        .collect()
}
