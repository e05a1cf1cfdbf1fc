//! Majorize-minimize outer loop for the losses with a Lipschitz score weight
//! (quadratic, Huber, logistic).
//!
//! At the expansion point the loss is replaced by the quadratic upper bound
//! `ρ(u) ≤ ρ(ũ) + w(ũ)(u − ũ) + (h/2)(u − ũ)²` with `h` the Lipschitz
//! constant of `w` (2, 1/K and 1/4 respectively). The surrogate is a
//! quadratic lasso in Gram form whose linear term is `c = G·β − g/h`, with
//! `g = Pₙψ_β` the current score mean, so each outer iteration costs one
//! score evaluation plus warm-started coordinate descent. For the quadratic
//! loss the surrogate is exact and the loop terminates after the first
//! verification pass.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::solver::engine::{cd_solve, kkt_residual, refresh_s};
use crate::solver::SolverOptions;

pub(crate) struct MmOutcome {
    /// Outer (majorization) iterations.
    pub outer_iterations: usize,
    /// Objective value after each outer iteration, ending at the final fit.
    pub trace: Vec<f64>,
}

/// Penalized objective `(1/n)Σρ + λ‖β_pen‖₁` at predictor values `u`.
pub(crate) fn objective_at(
    loss: &Loss,
    u: &Array1<f64>,
    y: &Array1<f64>,
    beta: &Array1<f64>,
    lambda: f64,
    penalized: &[bool],
) -> f64 {
    let n = y.len() as f64;
    let mut data_term = 0.0;
    for (ui, yi) in u.iter().zip(y.iter()) {
        data_term += loss.value(*ui, *yi);
    }
    let mut l1 = 0.0;
    for (j, b) in beta.iter().enumerate() {
        if penalized[j] {
            l1 += b.abs();
        }
    }
    data_term / n + lambda * l1
}

/// Fits the penalized M-estimator for a smooth-weight loss by MM coordinate
/// descent. `beta` is used as the warm start and overwritten with the
/// solution; `gram` must be `ZᵀZ/n` for the design `z`.
pub(crate) fn mm_fit(
    loss: &Loss,
    z: ArrayView2<'_, f64>,
    y: &Array1<f64>,
    lambda: f64,
    penalized: &[bool],
    gram: &Array2<f64>,
    beta: &mut Array1<f64>,
    opts: &SolverOptions,
    pass_budget: &mut usize,
) -> Result<MmOutcome> {
    let h = loss
        .curvature_bound()
        .ok_or_else(|| Error::invalid("mm_fit does not handle the quantile loss"))?;
    let n = y.len() as f64;

    let mut s = Array1::zeros(beta.len());
    refresh_s(gram, beta, &mut s);

    let mut trace = Vec::new();
    let mut outer = 0usize;
    // Tightened whenever an outer step stalls short of the KKT tolerance.
    let mut inner_tol = opts.cd_tol;
    loop {
        let u = z.dot(beta);
        // Score mean g = Zᵀw/n and objective in one sweep over samples.
        let mut g = Array1::<f64>::zeros(beta.len());
        let mut data_term = 0.0;
        for (i, row) in z.rows().into_iter().enumerate() {
            let w = loss.weight(u[i], y[i]);
            data_term += loss.value(u[i], y[i]);
            if w != 0.0 {
                g.scaled_add(w, &row);
            }
        }
        g.mapv_inplace(|v| v / n);
        let mut l1 = 0.0;
        for (j, b) in beta.iter().enumerate() {
            if penalized[j] {
                l1 += b.abs();
            }
        }
        trace.push(data_term / n + lambda * l1);

        let kkt = kkt_residual(&g, beta, lambda, penalized);
        if kkt <= opts.kkt_tol {
            return Ok(MmOutcome { outer_iterations: outer, trace });
        }
        if outer >= opts.max_outer {
            return Err(Error::NonConvergence { iterations: outer, residual: kkt });
        }
        outer += 1;

        // Surrogate linear term c = G·β − g/h.
        let mut lin = s.clone();
        lin.scaled_add(-1.0 / h, &g);
        let before = beta.clone();
        cd_solve(gram, &lin, lambda / h, penalized, beta, &mut s, inner_tol, pass_budget)
            .map_err(|_| Error::NonConvergence { iterations: outer, residual: kkt })?;
        let moved = beta
            .iter()
            .zip(before.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if moved <= inner_tol {
            inner_tol = (inner_tol * 0.1).max(1e-16);
        }
    }
}
