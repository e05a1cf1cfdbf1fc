//! Nodewise regression estimation of rows of `Θ = Σ⁻¹`, where
//! `Σ̂ = XᵀŴ²X/n` is the weighted Gram matrix of the fitted model.
//!
//! Row `j` comes from the penalized regression of the weighted column
//! `ŴXⱼ` on the remaining weighted columns,
//!
//! `γ̂ⱼ = argmin ‖Ŵ(Xⱼ − X₋ⱼγ)‖₂²/n + 2λⱼ‖γ‖₁`,
//! `τ̂ⱼ² = ‖Ŵ(Xⱼ − X₋ⱼγ̂ⱼ)‖₂²/n + λⱼ‖γ̂ⱼ‖₁`,
//!
//! assembled as `Θ̂ⱼ = (−γ̂ⱼ,₁, …, 1, …, −γ̂ⱼ,ₚ)/τ̂ⱼ²` with the 1 in position
//! `j`. The τ̂² definition makes the stationarity system close exactly on the
//! diagonal: `(Σ̂Θ̂ⱼ)ⱼ = 1` and `|(Σ̂Θ̂ⱼ)ₖ| ≤ λⱼ/τ̂ⱼ²` off the diagonal.
//!
//! Weight policy per loss: the quadratic and logistic losses use their
//! curvature (2 and π̂(1−π̂)), so no further correction is needed. The
//! quantile and Huber losses use the unweighted Gram `XᵀX/n` and a scalar
//! correction involving the noise distribution (`1/f_ε(0)` under this
//! crate's score convention, and `K/(F_ε(K) − F_ε(−K))`), applied by
//! [`loss_scale_correction`] after assembly.
//!
//! Everything runs in Gram space: one `p × p` Gram (plus one per CV fold) is
//! shared across all requested columns, so a single row costs O(p²) per
//! coordinate-descent pass regardless of n.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Coefficients, Dataset, Loss};
use crate::normal::phi_pdf;
use crate::solver::{
    cd_solve, geometric_path, make_folds, sqrt_lasso_on_gram, CvSelection, SolverOptions,
};

/// Minimum admissible τ̂²; anything below means column `j` is numerically in
/// the span of the others.
const TAU_SQ_FLOOR: f64 = 1e-12;

/// Diagonal weight matrix and the weighted design `ŴX`.
#[derive(Debug, Clone)]
pub struct WeightedDesign {
    pub w_diag: Array1<f64>,
    pub wx: Array2<f64>,
}

impl WeightedDesign {
    pub fn n(&self) -> usize {
        self.wx.nrows()
    }

    pub fn p(&self) -> usize {
        self.wx.ncols()
    }

    /// `Σ̂ = (ŴX)ᵀ(ŴX)/n`.
    pub fn gram(&self) -> Array2<f64> {
        self.wx.t().dot(&self.wx) / self.n() as f64
    }
}

/// Builds `Ŵ` from the per-sample nodewise weights of the loss at the fitted
/// coefficients: `W_diag[i]² = vᵢ` so that `XᵀŴ²X/n = (1/n)Σ vᵢxᵢxᵢᵀ`.
/// The quantile and Huber losses take `vᵢ ≡ 1` (their curvature information
/// enters through the post-assembly scalar correction instead).
pub fn build_weighted_design(
    loss: &Loss,
    data: &Dataset,
    beta_hat: &Coefficients,
) -> Result<WeightedDesign> {
    data.validate_for(loss)?;
    let n = data.n();
    let mut w_diag = Array1::<f64>::zeros(n);
    match loss {
        Loss::Quantile { .. } | Loss::Huber { .. } => w_diag.fill(1.0),
        _ => {
            let u = beta_hat.linear_predictor(data)?;
            for i in 0..n {
                let v = loss.curvature(u[i], data.y[i]);
                if !(v > 0.0) {
                    return Err(Error::degenerate(format!(
                        "non-positive nodewise weight {v:.3e} at sample {i}"
                    )));
                }
                w_diag[i] = v.sqrt();
            }
        }
    }
    let mut wx = data.x.clone();
    for (i, mut row) in wx.rows_mut().into_iter().enumerate() {
        if w_diag[i] != 1.0 {
            row.mapv_inplace(|v| v * w_diag[i]);
        }
    }
    Ok(WeightedDesign { w_diag, wx })
}

/// Nodewise estimate for one column.
#[derive(Debug, Clone)]
pub struct PrecisionRow {
    pub j: usize,
    /// Regression coefficients of column j on the others (length p−1).
    pub gamma: Array1<f64>,
    pub tau_sq: f64,
    /// Assembled row of Θ̂: exactly `1/τ̂²` at position j and `−γ̂ₖ/τ̂²`
    /// elsewhere.
    pub theta_row: Array1<f64>,
    /// λ at which the plain-lasso stationarity system holds (for the
    /// square-root method this is `2λσ̂`). Refers to the uncorrected row.
    pub lambda_j: f64,
    /// `‖Σ̂Θ̂ⱼ − eⱼ‖∞` measured at assembly, before any scalar correction.
    pub identity_gap: f64,
}

impl PrecisionRow {
    fn assemble(
        j: usize,
        gamma: Array1<f64>,
        tau_sq: f64,
        lambda_j: f64,
        identity_gap: f64,
    ) -> Result<Self> {
        if !(tau_sq > TAU_SQ_FLOOR) {
            return Err(Error::degenerate(format!(
                "tau^2 = {tau_sq:.3e} for column {j}: column is in the span of the others"
            )));
        }
        let p = gamma.len() + 1;
        let mut theta_row = Array1::<f64>::zeros(p);
        for k in 0..p {
            if k == j {
                theta_row[k] = 1.0 / tau_sq;
            } else {
                let g = gamma[k - usize::from(k > j)];
                theta_row[k] = -g / tau_sq;
            }
        }
        Ok(PrecisionRow { j, gamma, tau_sq, theta_row, lambda_j, identity_gap })
    }

    /// Bit-level re-check of the assembly rule (`θ[j] == 1/τ²` and
    /// `θ[k] == −γₖ/τ²`).
    pub fn assembly_consistent(&self) -> bool {
        let p = self.theta_row.len();
        for k in 0..p {
            let want = if k == self.j {
                1.0 / self.tau_sq
            } else {
                -self.gamma[k - usize::from(k > self.j)] / self.tau_sq
            };
            if self.theta_row[k].to_bits() != want.to_bits() {
                return false;
            }
        }
        true
    }
}

/// Solver used for the per-column regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodewiseMethod {
    Lasso,
    SqrtLasso,
}

/// How the per-column penalty level is chosen.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// One fixed λ for every column.
    Fixed(f64),
    /// `λ = scale·√(log p / n)`, the tuning-free choice natural for the
    /// square-root method.
    Universal { scale: f64 },
    /// Per-column K-fold cross-validation on held-out weighted residuals
    /// (plain-lasso method only).
    Cv { n_folds: usize, path_len: usize, lambda_min_ratio: f64, selection: CvSelection },
}

/// Extracts the regression subproblem of column `j` from a Gram matrix:
/// the (p−1)² block without row/column j and the j-th column without entry j.
fn split_gram(gram: &Array2<f64>, j: usize) -> (Array2<f64>, Array1<f64>) {
    let p = gram.nrows();
    let mut sub = Array2::<f64>::zeros((p - 1, p - 1));
    let mut lin = Array1::<f64>::zeros(p - 1);
    for k in 0..p {
        if k == j {
            continue;
        }
        let kk = k - usize::from(k > j);
        lin[kk] = gram[[k, j]];
        let grow = gram.row(k);
        let mut srow = sub.row_mut(kk);
        for l in 0..p {
            if l == j {
                continue;
            }
            srow[l - usize::from(l > j)] = grow[l];
        }
    }
    (sub, lin)
}

/// Per-column scales √(Σ̂ₖₖ) of the predictors of the column-j regression:
/// the regressions run on unit-norm predictors (equivalently, with penalty
/// loadings), which keeps the penalty scale-equivariant when the weighted
/// columns are not themselves unit-scale. This is an exact no-op for a
/// unit-norm design.
fn predictor_scales(gram: &Array2<f64>, j: usize) -> Array1<f64> {
    let p = gram.nrows();
    Array1::from_shape_fn(p - 1, |kk| {
        let k = kk + usize::from(kk >= j);
        gram[[k, k]].max(f64::MIN_POSITIVE).sqrt()
    })
}

/// Solves the column-j nodewise problem on a precomputed Gram matrix and
/// assembles the row. `gamma` is the warm start (original scale) and is
/// left at the solution.
fn row_on_gram(
    gram: &Array2<f64>,
    j: usize,
    lambda: f64,
    method: NodewiseMethod,
    opts: &SolverOptions,
    gamma: &mut Array1<f64>,
) -> Result<PrecisionRow> {
    let p = gram.nrows();
    let gjj = gram[[j, j]];
    if p == 1 {
        let tau_sq = gjj;
        return PrecisionRow::assemble(j, Array1::zeros(0), tau_sq, lambda, 0.0);
    }
    let (mut sub, mut lin) = split_gram(gram, j);
    let scales = predictor_scales(gram, j);
    for k in 0..p - 1 {
        lin[k] /= scales[k];
        for l in 0..p - 1 {
            sub[[k, l]] /= scales[k] * scales[l];
        }
    }
    let penalized = vec![true; p - 1];
    let mut s = Array1::<f64>::zeros(p - 1);
    // Work in the scaled coordinates.
    let mut gamma_s = Array1::from_shape_fn(p - 1, |k| gamma[k] * scales[k]);

    // Assembled rows must close the stationarity identity at the 1e-8
    // level, so the final per-row solve runs tighter than CV selection.
    let row_opts = SolverOptions { cd_tol: opts.cd_tol.min(1e-10), ..opts.clone() };

    let (resid_sq, threshold) = match method {
        NodewiseMethod::Lasso => {
            crate::solver::refresh_s(&sub, &gamma_s, &mut s);
            let mut budget = row_opts.max_iter;
            cd_solve(&sub, &lin, lambda, &penalized, &mut gamma_s, &mut s, row_opts.cd_tol, &mut budget)?;
            let resid_sq = (gjj - 2.0 * gamma_s.dot(&lin) + gamma_s.dot(&s)).max(0.0);
            (resid_sq, lambda)
        }
        NodewiseMethod::SqrtLasso => {
            let fit = sqrt_lasso_on_gram(&sub, &lin, gjj, lambda, &row_opts)?;
            if fit.interpolating {
                return Err(Error::degenerate(format!(
                    "square-root nodewise regression of column {j} interpolates"
                )));
            }
            gamma_s.assign(&fit.gamma);
            crate::solver::refresh_s(&sub, &gamma_s, &mut s);
            (fit.noise_scale * fit.noise_scale, fit.effective_lambda)
        }
    };

    // τ² with the penalty term of the problem actually solved; with it the
    // diagonal of Σ̂Θ̂ closes exactly and the off-diagonal entries are
    // bounded by threshold·scaleₖ/τ².
    let l1_scaled: f64 = gamma_s.iter().map(|g| g.abs()).sum();
    let tau_sq = resid_sq + threshold * l1_scaled;
    let lambda_eff =
        threshold * scales.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    for k in 0..p - 1 {
        gamma[k] = gamma_s[k] / scales[k];
    }

    // ‖Σ̂Θ̂ⱼ − eⱼ‖∞ from the maintained products: in the scaled coordinates
    // the off-diagonal entries are scaleₖ·(lin − s)ₖ/τ² and the diagonal
    // entry is (gⱼⱼ − γ̃ᵀlin)/τ².
    let mut gap = ((gjj - gamma_s.dot(&lin)) / tau_sq - 1.0).abs();
    for k in 0..p - 1 {
        gap = gap.max(scales[k] * (lin[k] - s[k]).abs() / tau_sq);
    }

    PrecisionRow::assemble(j, gamma.clone(), tau_sq, lambda_eff, gap)
}

/// Nodewise estimate of a single row of Θ̂. Computes the full Gram of the
/// weighted design; use [`precision_estimate`] to amortize that over many
/// columns.
pub fn nodewise_row(
    wd: &WeightedDesign,
    j: usize,
    lambda_j: f64,
    method: NodewiseMethod,
    opts: &SolverOptions,
) -> Result<PrecisionRow> {
    if j >= wd.p() {
        return Err(Error::dim(format!("column {j} out of range for p = {}", wd.p())));
    }
    if !(lambda_j > 0.0) {
        return Err(Error::invalid("nodewise lambda must be positive"));
    }
    let gram = wd.gram();
    let mut gamma = Array1::<f64>::zeros(wd.p().saturating_sub(1));
    row_on_gram(&gram, j, lambda_j, method, opts, &mut gamma)
}

/// Per-column cross-validation of the nodewise penalty on held-out weighted
/// residuals. The λ path of each column is anchored at its own
/// `λ_max = max_k |Σ̂ₖⱼ|`; folds are shared across columns.
fn cv_column_lambdas(
    wd: &WeightedDesign,
    gram: &Array2<f64>,
    columns: &[usize],
    n_folds: usize,
    path_len: usize,
    lambda_min_ratio: f64,
    selection: CvSelection,
    opts: &SolverOptions,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = wd.n();
    let p = wd.p();
    if n < 2 * n_folds {
        return Err(Error::invalid(format!("n = {n} is too small for {n_folds} folds")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let folds = make_folds(n, n_folds, &mut rng);

    // Per-fold train/test Grams; the train Gram is recovered from the full
    // one so the cost stays O(p²·n) overall.
    let mut fold_grams = Vec::with_capacity(folds.len());
    for fold in &folds {
        let wx_te = wd.wx.select(Axis(0), fold);
        let g_te: Array2<f64> = wx_te.t().dot(&wx_te) / fold.len() as f64;
        let n_tr = (n - fold.len()) as f64;
        let mut g_tr = gram * (n as f64);
        g_tr.scaled_add(-(fold.len() as f64), &g_te);
        g_tr.mapv_inplace(|v| v / n_tr);
        fold_grams.push((g_tr, g_te));
    }

    let paths: Vec<Vec<f64>> = columns
        .iter()
        .map(|&j| {
            let scales = predictor_scales(gram, j);
            let mut lmax = 0.0_f64;
            for k in 0..p {
                if k != j {
                    let kk = k - usize::from(k > j);
                    lmax = lmax.max(gram[[k, j]].abs() / scales[kk]);
                }
            }
            if lmax <= 0.0 {
                // Column orthogonal to everything in sample; any λ keeps γ = 0.
                vec![1.0]
            } else {
                geometric_path(lmax, path_len, lambda_min_ratio)
            }
        })
        .collect();

    let lambdas: Vec<f64> = columns
        .par_iter()
        .enumerate()
        .map(|(ci, &j)| {
            let path = &paths[ci];
            let mut fold_err = vec![vec![0.0_f64; path.len()]; fold_grams.len()];
            for (f, (g_tr, g_te)) in fold_grams.iter().enumerate() {
                let (mut sub, mut lin) = split_gram(g_tr, j);
                let scales = predictor_scales(g_tr, j);
                for k in 0..p - 1 {
                    lin[k] /= scales[k];
                    for l in 0..p - 1 {
                        sub[[k, l]] /= scales[k] * scales[l];
                    }
                }
                let penalized = vec![true; p - 1];
                let mut gamma_s = Array1::<f64>::zeros(p - 1);
                let mut s = Array1::<f64>::zeros(p - 1);
                for (l, &lambda) in path.iter().enumerate() {
                    let mut budget = opts.max_iter;
                    cd_solve(&sub, &lin, lambda, &penalized, &mut gamma_s, &mut s, opts.cd_tol, &mut budget)?;
                    // Held-out ‖Ŵ(Xⱼ − X₋ⱼγ̂)‖²/n_te expressed through the
                    // test-fold Gram, restricted to the active coordinates
                    // (γ mapped back to the original column scale).
                    let active: Vec<(usize, f64)> = (0..p - 1)
                        .filter(|&k| gamma_s[k] != 0.0)
                        .map(|k| (k, gamma_s[k] / scales[k]))
                        .collect();
                    let mut e = g_te[[j, j]];
                    for &(k, gk) in &active {
                        let ko = k + usize::from(k >= j);
                        e -= 2.0 * gk * g_te[[ko, j]];
                        for &(l2, gl) in &active {
                            let lo = l2 + usize::from(l2 >= j);
                            e += gk * gl * g_te[[ko, lo]];
                        }
                    }
                    fold_err[f][l] = e;
                }
            }
            let k = fold_grams.len();
            let means: Vec<f64> =
                (0..path.len()).map(|l| fold_err.iter().map(|f| f[l]).sum::<f64>() / k as f64).collect();
            let mut minimizer = 0usize;
            for (l, &e) in means.iter().enumerate() {
                if e < means[minimizer] {
                    minimizer = l;
                }
            }
            let best = match selection {
                CvSelection::Min => minimizer,
                CvSelection::OneSe => {
                    let m = means[minimizer];
                    let var = fold_err
                        .iter()
                        .map(|f| (f[minimizer] - m) * (f[minimizer] - m))
                        .sum::<f64>()
                        / (k.saturating_sub(1)).max(1) as f64;
                    let cutoff = m + (var / k as f64).sqrt();
                    (0..=minimizer).find(|&l| means[l] <= cutoff).unwrap_or(minimizer)
                }
            };
            Ok(path[best])
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(lambdas)
}

/// Estimates the requested rows of Θ̂ (only those — estimating a single
/// coordinate needs a single row). Rows are computed in parallel over one
/// shared Gram matrix and returned ordered by column index.
pub fn precision_estimate(
    loss: &Loss,
    data: &Dataset,
    beta_hat: &Coefficients,
    columns: &[usize],
    rule: &LambdaRule,
    method: NodewiseMethod,
    opts: &SolverOptions,
    seed: u64,
) -> Result<Vec<PrecisionRow>> {
    if columns.is_empty() {
        return Err(Error::invalid("no nodewise columns requested"));
    }
    let mut columns: Vec<usize> = columns.to_vec();
    columns.sort_unstable();
    columns.dedup();
    if *columns.last().unwrap() >= data.p() {
        return Err(Error::dim(format!(
            "nodewise column {} out of range for p = {}",
            columns.last().unwrap(),
            data.p()
        )));
    }

    let wd = build_weighted_design(loss, data, beta_hat)?;
    let gram = wd.gram();

    let lambdas: Vec<f64> = match rule {
        LambdaRule::Fixed(l) => {
            if !(*l > 0.0) {
                return Err(Error::invalid("nodewise lambda must be positive"));
            }
            vec![*l; columns.len()]
        }
        LambdaRule::Universal { scale } => {
            let l = scale * ((data.p() as f64).ln() / data.n() as f64).sqrt();
            if !(l > 0.0) {
                return Err(Error::invalid("universal nodewise lambda is not positive"));
            }
            vec![l; columns.len()]
        }
        LambdaRule::Cv { n_folds, path_len, lambda_min_ratio, selection } => {
            if method != NodewiseMethod::Lasso {
                return Err(Error::invalid(
                    "per-column cross-validation applies to the plain-lasso method; \
                     the square-root method uses the universal rule",
                ));
            }
            cv_column_lambdas(
                &wd,
                &gram,
                &columns,
                *n_folds,
                *path_len,
                *lambda_min_ratio,
                *selection,
                opts,
                seed,
            )?
        }
    };

    let mut rows: Vec<PrecisionRow> = columns
        .par_iter()
        .zip(lambdas.par_iter())
        .map(|(&j, &lambda)| {
            let mut gamma = Array1::<f64>::zeros(data.p().saturating_sub(1));
            row_on_gram(&gram, j, lambda, method, opts, &mut gamma)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.j);
    Ok(rows)
}

/// Noise-distribution quantities needed by the scalar corrections of the
/// non-curvature losses.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NoiseInfo {
    /// `f_ε(0)`, the noise density at the fitted quantile (quantile loss).
    pub density_at_zero: Option<f64>,
    /// `F_ε(K) − F_ε(−K)` (Huber loss).
    pub huber_span: Option<f64>,
}

impl NoiseInfo {
    pub fn known(density_at_zero: Option<f64>, huber_span: Option<f64>) -> Self {
        NoiseInfo { density_at_zero, huber_span }
    }

    /// Gaussian-kernel density estimate of `f_ε(0)` from residuals with the
    /// Silverman bandwidth. Experimental: simulation runs should pass the
    /// true value instead.
    pub fn estimate_density_at_zero(residuals: &[f64]) -> Result<f64> {
        let n = residuals.len();
        if n < 2 {
            return Err(Error::invalid("need at least 2 residuals for density estimation"));
        }
        let mean = residuals.iter().sum::<f64>() / n as f64;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        let mut sorted: Vec<f64> = residuals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residual"));
        let q = |t: f64| sorted[(((n - 1) as f64) * t).round() as usize];
        let iqr = q(0.75) - q(0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        if !(spread > 0.0) {
            return Err(Error::degenerate("residuals have no spread"));
        }
        let h = 0.9 * spread * (n as f64).powf(-0.2);
        let f0 = residuals.iter().map(|r| phi_pdf(r / h)).sum::<f64>() / (n as f64 * h);
        Ok(f0)
    }

    /// Empirical `F̂(K) − F̂(−K)`: the fraction of residuals inside the Huber
    /// radius. Experimental, as above.
    pub fn estimate_huber_span(residuals: &[f64], k: f64) -> Result<f64> {
        if residuals.is_empty() {
            return Err(Error::invalid("need residuals to estimate the Huber span"));
        }
        let inside = residuals.iter().filter(|r| r.abs() <= k).count();
        Ok(inside as f64 / residuals.len() as f64)
    }
}

/// Applies the loss-specific scalar correction to assembled rows:
/// identity for the quadratic and logistic losses (their curvature already
/// sits inside Ŵ), `Θ̂ⱼ/f_ε(0)` for the quantile loss, and
/// `Θ̂ⱼ·K/(F_ε(K) − F_ε(−K))` for the Huber loss. Rows are re-assembled from
/// the rescaled τ̂² so the structural identity is preserved exactly.
pub fn loss_scale_correction(
    loss: &Loss,
    rows: &[PrecisionRow],
    noise: &NoiseInfo,
) -> Result<Vec<PrecisionRow>> {
    let scale = match loss {
        Loss::Quadratic | Loss::Logistic => return Ok(rows.to_vec()),
        Loss::Quantile { .. } => {
            let f0 = noise.density_at_zero.ok_or_else(|| {
                Error::invalid("quantile correction needs the noise density at zero")
            })?;
            if !(f0 > 0.0) {
                return Err(Error::invalid(format!("noise density must be positive, got {f0}")));
            }
            1.0 / f0
        }
        Loss::Huber { k } => {
            let span = noise.huber_span.ok_or_else(|| {
                Error::invalid("Huber correction needs F(K) − F(−K) of the noise")
            })?;
            if !(span > 0.0 && span <= 1.0) {
                return Err(Error::invalid(format!("Huber span must be in (0,1], got {span}")));
            }
            k / span
        }
    };
    rows.iter()
        .map(|r| {
            PrecisionRow::assemble(
                r.j,
                r.gamma.clone(),
                r.tau_sq / scale,
                r.lambda_j,
                r.identity_gap,
            )
        })
        .collect()
}
