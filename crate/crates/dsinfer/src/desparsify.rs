//! Bias correction of the penalized fit: `b̂ⱼ = β̂ⱼ − Θ̂ⱼᵀ Pₙψ_β̂`, together
//! with the plug-in asymptotic variance `σ̂ⱼ² = Θ̂ⱼᵀ Pₙψ_β̂ψ_β̂ᵀ Θ̂ⱼ`.
//!
//! The correction removes the shrinkage bias of the ℓ1 penalty; `√n(b̂ⱼ −
//! βⱼ⁰)/σ̂ⱼ` is asymptotically standard normal, which is what turns the fit
//! into confidence intervals and tests downstream.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::loss::{Dataset, Loss, ScoreMatrix};
use crate::nodewise::PrecisionRow;
use crate::solver::PenalizedFit;

/// De-sparsified estimate for one coordinate.
#[derive(Debug, Clone)]
pub struct DesparsifiedEstimate {
    pub j: usize,
    pub beta_hat_j: f64,
    /// `Θ̂ⱼᵀ Pₙψ_β̂`.
    pub correction_j: f64,
    /// `β̂ⱼ − correction_j`.
    pub b_hat_j: f64,
    /// Square root of the plug-in variance.
    pub sigma_hat_j: f64,
    pub n: usize,
}

fn project_scores(scores: &ScoreMatrix, theta_row: ArrayView1<'_, f64>) -> Array1<f64> {
    scores.psi.dot(&theta_row)
}

/// Plug-in variances `σ̂ⱼ² = (1/n)Σᵢ(Θ̂ⱼᵀψᵢ)²`, one per row, computed without
/// forming the p×p outer-product matrix.
pub fn estimate_variance(rows: &[PrecisionRow], scores: &ScoreMatrix) -> Result<Vec<f64>> {
    let n = scores.psi.nrows();
    let p = scores.psi.ncols();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if row.theta_row.len() != p {
            return Err(Error::dim(format!(
                "precision row {} has length {} but scores have {} columns",
                row.j,
                row.theta_row.len(),
                p
            )));
        }
        let t = project_scores(scores, row.theta_row.view());
        let var = t.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !(var > 0.0) {
            return Err(Error::degenerate(format!(
                "plug-in variance for coordinate {} vanishes",
                row.j
            )));
        }
        out.push(var);
    }
    Ok(out)
}

/// De-sparsifies the requested coordinates using estimated precision rows.
pub fn desparsify(
    loss: &Loss,
    data: &Dataset,
    fit: &PenalizedFit,
    rows: &[PrecisionRow],
) -> Result<Vec<DesparsifiedEstimate>> {
    if fit.beta.len() != data.p() {
        return Err(Error::dim("fit and data disagree on p"));
    }
    let scores = ScoreMatrix::new(loss, data, &fit.coefficients())?;
    let g = scores.mean();
    let vars = estimate_variance(rows, &scores)?;
    let n = data.n();
    rows.iter()
        .zip(vars)
        .map(|(row, var)| {
            let correction = row.theta_row.dot(&g);
            let beta_hat_j = fit.beta[row.j];
            Ok(DesparsifiedEstimate {
                j: row.j,
                beta_hat_j,
                correction_j: correction,
                b_hat_j: beta_hat_j - correction,
                sigma_hat_j: var.sqrt(),
                n,
            })
        })
        .collect()
}

/// De-sparsification with externally supplied rows of Θ (simulation
/// diagnostics: separates the estimation error of Θ̂ from the correction
/// itself). Each entry pairs a coordinate with its Θ row.
pub fn desparsify_oracle(
    loss: &Loss,
    data: &Dataset,
    fit: &PenalizedFit,
    theta_rows: &[(usize, Array1<f64>)],
) -> Result<Vec<DesparsifiedEstimate>> {
    let scores = ScoreMatrix::new(loss, data, &fit.coefficients())?;
    let g = scores.mean();
    let n = data.n();
    theta_rows
        .iter()
        .map(|(j, theta)| {
            if theta.len() != data.p() {
                return Err(Error::dim("oracle theta row has wrong length"));
            }
            let t = project_scores(&scores, theta.view());
            let var = t.iter().map(|v| v * v).sum::<f64>() / n as f64;
            if !(var > 0.0) {
                return Err(Error::degenerate(format!("oracle variance for {j} vanishes")));
            }
            let correction = theta.dot(&g);
            let beta_hat_j = fit.beta[*j];
            Ok(DesparsifiedEstimate {
                j: *j,
                beta_hat_j,
                correction_j: correction,
                b_hat_j: beta_hat_j - correction,
                sigma_hat_j: var.sqrt(),
                n,
            })
        })
        .collect()
}
