//! Operator-splitting solver for the quantile (check) loss.
//!
//! The problem `min (1/n)Σ check_q(rᵢ) + λ‖β‖₁ s.t. r = y − Zβ` is split
//! into a soft-thresholded coefficient update, the closed-form proximal map
//! of the check loss on the residual block, and a dual ascent step on the
//! coupling constraint (scaled-dual form, quadratic penalty `(τ/2n)‖·‖²`).
//!
//! The check-loss prox with step `t`:
//! `prox(v) = v − t·q` if `v > t·q`, `v + t(1−q)` if `v < −t(1−q)`, else 0.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::solver::engine::cd_solve;
use crate::solver::mm::objective_at;
use crate::solver::SolverOptions;

pub(crate) struct AdmmOutcome {
    pub iterations: usize,
    /// Objective at the coefficient iterate after each splitting step.
    /// Unlike the majorize-minimize trace this is not monotone.
    pub trace: Vec<f64>,
}

#[inline]
fn check_prox(v: f64, t: f64, q: f64) -> f64 {
    if v > t * q {
        v - t * q
    } else if v < -t * (1.0 - q) {
        v + t * (1.0 - q)
    } else {
        0.0
    }
}

fn rms(v: &Array1<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) fn admm_fit(
    q: f64,
    z: ArrayView2<'_, f64>,
    y: &Array1<f64>,
    lambda: f64,
    penalized: &[bool],
    gram: &Array2<f64>,
    beta: &mut Array1<f64>,
    opts: &SolverOptions,
) -> Result<AdmmOutcome> {
    let loss = Loss::Quantile { q };
    let n = y.len() as f64;
    let pa = beta.len();
    let tau = opts.admm_penalty;

    let mut s = Array1::<f64>::zeros(pa);
    crate::solver::engine::refresh_s(gram, beta, &mut s);
    let mut u_pred = z.dot(beta);
    let mut resid = y - &u_pred;
    let mut resid_prev = resid.clone();
    let mut dual = Array1::<f64>::zeros(y.len());

    let mut trace = Vec::new();
    let y_rms = rms(y);
    let mut pass_budget = opts.max_iter.saturating_mul(4);

    for it in 0..opts.max_iter {
        // Coefficient block: lasso on the shifted target y − r − v.
        let target = y - &resid - &dual;
        let lin = z.t().dot(&target) / n;
        cd_solve(gram, &lin, lambda / tau, penalized, beta, &mut s, opts.cd_tol, &mut pass_budget)
            .map_err(|_| Error::NonConvergence { iterations: it, residual: f64::NAN })?;
        u_pred = z.dot(beta);

        // Residual block: elementwise check-loss prox.
        resid_prev.assign(&resid);
        for i in 0..y.len() {
            let m = y[i] - u_pred[i] - dual[i];
            resid[i] = check_prox(m, 1.0 / tau, q);
        }

        // Dual ascent on the coupling constraint.
        let gap = &u_pred + &resid - y;
        dual += &gap;

        trace.push(objective_at(&loss, &u_pred, y, beta, lambda, penalized));

        // Stopping: primal feasibility and the dual residual induced by the
        // change in the residual block.
        let pri = rms(&gap);
        let delta_r = &resid - &resid_prev;
        let dual_vec = z.t().dot(&delta_r).mapv_into(|v| v * tau / n);
        let dua = rms(&dual_vec);

        let eps_pri = opts.primal_tol * (1.0 + y_rms.max(rms(&u_pred)).max(rms(&resid)));
        let dual_scale = rms(&z.t().dot(&dual).mapv_into(|v| v * tau / n));
        let eps_dual = opts.dual_tol * (1.0 + dual_scale);
        if pri <= eps_pri && dua <= eps_dual {
            return Ok(AdmmOutcome { iterations: it + 1, trace });
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: f64::NAN })
}
