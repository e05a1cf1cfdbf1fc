//! Penalized M-estimation: `β̂ = argmin (1/n)Σρ(xᵢᵀβ, yᵢ) + λ‖β‖₁` for the
//! four loss families, the square-root lasso used by nodewise regression,
//! and K-fold cross-validation over a λ path.
//!
//! All fitting goes through a Gram-form coordinate-descent core, so the cost
//! of one sweep is O(p²) after the one-off O(np²) Gram computation. Smooth
//! losses are handled by a majorize-minimize outer loop with the exact
//! Lipschitz curvature bound of the score weight; the quantile loss by
//! operator splitting with the closed-form check-loss prox.

mod admm;
mod cv;
mod engine;
mod mm;

pub use cv::{cv_select_lambda, CvConfig, CvSelection, LambdaPath};
pub(crate) use cv::{geometric_path, make_folds};
pub(crate) use engine::{cd_solve, kkt_residual, refresh_s};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{score_mean, Coefficients, Dataset, Loss};

/// Convergence and preprocessing knobs shared by all solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop a coordinate-descent sweep when the largest coordinate update is
    /// below this (absolute).
    pub cd_tol: f64,
    /// Required KKT residual of the penalized problem at exit (smooth losses).
    pub kkt_tol: f64,
    /// Budget of coordinate-descent passes, and the iteration cap of the
    /// quantile splitting scheme.
    pub max_iter: usize,
    /// Cap on majorize-minimize outer iterations.
    pub max_outer: usize,
    /// Quadratic-penalty parameter of the quantile splitting scheme.
    pub admm_penalty: f64,
    /// Primal/dual stopping tolerances of the splitting scheme.
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Scale columns to unit empirical norm before fitting (coefficients are
    /// reported on the original scale). Off by default.
    pub standardize: bool,
    /// Add an unpenalized intercept.
    pub intercept: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cd_tol: 1e-8,
            kkt_tol: 1e-7,
            max_iter: 100_000,
            max_outer: 20_000,
            admm_penalty: 1.0,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            standardize: false,
            intercept: false,
        }
    }
}

/// A fitted penalized M-estimator.
#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub beta: Array1<f64>,
    pub intercept: Option<f64>,
    pub lambda: f64,
    /// `(1/n)Σρ(xᵢᵀβ̂ + ĉ, yᵢ) + λ‖β̂‖₁` at the returned coefficients.
    pub objective: f64,
    pub active_set: Vec<usize>,
    /// `‖Pₙψ_β̂ + λẐ‖∞` with the optimal subgradient choice for the penalty
    /// term, measured in the coordinates the solver actually optimized.
    pub kkt_residual: f64,
    /// Outer iterations (majorize-minimize) or splitting iterations (quantile).
    pub iterations: usize,
    /// Objective after each outer iteration. Non-increasing for the smooth
    /// losses (majorization guarantee); the splitting iterates of the
    /// quantile loss are not objective-monotone.
    pub objective_trace: Vec<f64>,
}

impl PenalizedFit {
    pub fn coefficients(&self) -> Coefficients {
        Coefficients { beta: self.beta.clone(), intercept: self.intercept }
    }

    pub fn sparsity(&self) -> usize {
        self.active_set.len()
    }
}

/// Design prepared for fitting: optional unit-norm column scaling and an
/// appended unpenalized intercept column.
pub(crate) struct Design {
    pub z: Array2<f64>,
    pub scale: Vec<f64>,
    pub penalized: Vec<bool>,
    pub p: usize,
    pub intercept: bool,
}

impl Design {
    /// Maps augmented scaled coefficients back to the original parametrization.
    pub fn unscale(&self, beta_aug: &Array1<f64>) -> Coefficients {
        let mut beta = Array1::zeros(self.p);
        for j in 0..self.p {
            beta[j] = beta_aug[j] / self.scale[j];
        }
        let intercept = self.intercept.then(|| beta_aug[self.p]);
        Coefficients { beta, intercept }
    }
}

pub(crate) fn prepare_design(x: ArrayView2<'_, f64>, opts: &SolverOptions) -> Design {
    let n = x.nrows();
    let p = x.ncols();
    let pa = p + usize::from(opts.intercept);
    let mut z = Array2::<f64>::zeros((n, pa));
    let mut scale = vec![1.0_f64; p];
    for j in 0..p {
        let col = x.column(j);
        let mut s = 1.0;
        if opts.standardize {
            let norm = (col.dot(&col) / n as f64).sqrt();
            if norm > 0.0 {
                s = norm;
            }
        }
        scale[j] = s;
        let mut zj = z.column_mut(j);
        zj.assign(&col);
        if s != 1.0 {
            zj.mapv_inplace(|v| v / s);
        }
    }
    if opts.intercept {
        z.column_mut(p).fill(1.0);
    }
    let mut penalized = vec![true; pa];
    if opts.intercept {
        penalized[p] = false;
    }
    Design { z, scale, penalized, p, intercept: opts.intercept }
}

pub(crate) struct FitCore {
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Fits on a prepared design with a precomputed Gram matrix, warm-starting
/// from (and overwriting) `beta`. Used directly by the cross-validation and
/// nodewise paths so the Gram can be shared.
pub(crate) fn fit_on_design(
    loss: &Loss,
    design: &Design,
    y: &Array1<f64>,
    lambda: f64,
    gram: &Array2<f64>,
    beta: &mut Array1<f64>,
    opts: &SolverOptions,
) -> Result<FitCore> {
    match loss {
        Loss::Quantile { q } => {
            let out = admm::admm_fit(
                *q,
                design.z.view(),
                y,
                lambda,
                &design.penalized,
                gram,
                beta,
                opts,
            )?;
            Ok(FitCore { iterations: out.iterations, trace: out.trace })
        }
        _ => {
            let mut budget = opts.max_iter;
            let out = mm::mm_fit(
                loss,
                design.z.view(),
                y,
                lambda,
                &design.penalized,
                gram,
                beta,
                opts,
                &mut budget,
            )?;
            Ok(FitCore { iterations: out.outer_iterations, trace: out.trace })
        }
    }
}

/// Fits `β̂ = argmin (1/n)Σρ(xᵢᵀβ, yᵢ) + λ‖β‖₁`.
pub fn fit_lasso(loss: &Loss, data: &Dataset, lambda: f64, opts: &SolverOptions) -> Result<PenalizedFit> {
    data.validate_for(loss)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let design = prepare_design(data.x.view(), opts);
    let n = data.n() as f64;
    let gram: Array2<f64> = design.z.t().dot(&design.z) / n;
    let mut beta = Array1::<f64>::zeros(design.z.ncols());
    let core = fit_on_design(loss, &design, &data.y, lambda, &gram, &mut beta, opts)?;

    let coef = design.unscale(&beta);
    let u = coef.linear_predictor(data)?;
    let mut objective = 0.0;
    for (ui, yi) in u.iter().zip(data.y.iter()) {
        objective += loss.value(*ui, *yi);
    }
    objective = objective / n + lambda * coef.beta.iter().map(|b| b.abs()).sum::<f64>();

    let active_set: Vec<usize> = (0..design.p).filter(|&j| coef.beta[j] != 0.0).collect();

    // KKT residual in the optimized (scaled) coordinates.
    let mut g_scaled = design.z.t().dot(&{
        let mut w = Array1::<f64>::zeros(data.n());
        for i in 0..data.n() {
            w[i] = loss.weight(u[i], data.y[i]);
        }
        w
    });
    g_scaled.mapv_inplace(|v| v / n);
    let kkt = kkt_residual(&g_scaled, &beta, lambda, &design.penalized);

    Ok(PenalizedFit {
        beta: coef.beta,
        intercept: coef.intercept,
        lambda,
        objective,
        active_set,
        kkt_residual: kkt,
        iterations: core.iterations,
        objective_trace: core.trace,
    })
}

/// Smallest λ at which the all-zero coefficient vector is optimal:
/// `‖Pₙψ₀‖∞` evaluated at β = 0 (after fitting the unpenalized intercept
/// when one is requested).
pub fn lambda_max(loss: &Loss, data: &Dataset, opts: &SolverOptions) -> Result<f64> {
    data.validate_for(loss)?;
    let intercept = if opts.intercept { Some(fit_intercept_only(loss, &data.y)?) } else { None };
    let coef = Coefficients { beta: Array1::zeros(data.p()), intercept };
    let g = score_mean(loss, data, &coef)?;
    let lmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(lmax > 0.0) {
        return Err(Error::degenerate("score at zero vanishes; lambda path is empty"));
    }
    Ok(lmax)
}

/// Minimizes `c ↦ (1/n)Σρ(c, yᵢ)` (intercept-only model).
pub(crate) fn fit_intercept_only(loss: &Loss, y: &Array1<f64>) -> Result<f64> {
    match loss {
        Loss::Quadratic => Ok(y.mean().unwrap_or(0.0)),
        Loss::Quantile { q } => {
            // Empirical q-quantile (a minimizer of the check loss).
            let mut v: Vec<f64> = y.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite response"));
            let idx = ((v.len() as f64) * q).ceil() as usize;
            Ok(v[idx.saturating_sub(1).min(v.len() - 1)])
        }
        Loss::Logistic => {
            let mean = y.mean().unwrap_or(0.5);
            if mean <= 0.0 || mean >= 1.0 {
                return Err(Error::degenerate("logistic response is all one class"));
            }
            Ok((mean / (1.0 - mean)).ln())
        }
        Loss::Huber { .. } => {
            // Convex and smooth in c: golden-section search on a bracket
            // that certainly contains the minimizer.
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
            let f = |c: f64| y.iter().map(|&yi| loss.value(c, yi)).sum::<f64>();
            Ok(golden_section(f, lo, hi, 1e-12))
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `‖Pₙψ_β̂‖∞` at the fitted coefficients. For the quantile loss this obeys
/// the `λ + ŝ·max‖xᵢ‖∞/n` accounting: the canonical subgradient disagrees
/// with the optimal one only on the (at most ~ŝ) interpolated samples.
pub fn kkt_check(loss: &Loss, data: &Dataset, fit: &PenalizedFit) -> Result<f64> {
    let g = score_mean(loss, data, &fit.coefficients())?;
    Ok(g.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Square-root-lasso fit: `argmin ‖target − Z·γ‖₂/√n + 2λ‖γ‖₁`.
#[derive(Debug, Clone)]
pub struct SqrtLassoFit {
    pub gamma: Array1<f64>,
    /// `‖target − Zγ̂‖₂/√n` at the solution.
    pub noise_scale: f64,
    /// The λ of the equivalent plain lasso KKT system, `2λ·noise_scale`.
    pub effective_lambda: f64,
    /// Set when the target is (numerically) in the span of the columns; the
    /// returned γ then interpolates and the KKT system is degenerate.
    pub interpolating: bool,
    pub iterations: usize,
}

/// Solves the square-root lasso by the scale-then-lasso fixpoint iteration:
/// at noise scale σ the stationarity system matches a plain lasso with
/// threshold `2λσ`, and σ is re-estimated from the residual.
pub fn fit_sqrt_lasso(
    target: ArrayView1<'_, f64>,
    others: ArrayView2<'_, f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SqrtLassoFit> {
    if target.len() != others.nrows() {
        return Err(Error::dim("target length must match the row count"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let n = target.len() as f64;
    let gram: Array2<f64> = others.t().dot(&others) / n;
    let lin: Array1<f64> = others.t().dot(&target) / n;
    let tjj = target.dot(&target) / n;
    sqrt_lasso_on_gram(&gram, &lin, tjj, lambda, opts)
}

/// Gram-form square-root lasso (shared with the nodewise module).
pub(crate) fn sqrt_lasso_on_gram(
    gram: &Array2<f64>,
    lin: &Array1<f64>,
    target_sq: f64,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SqrtLassoFit> {
    let p = lin.len();
    let penalized = vec![true; p];
    let mut gamma = Array1::<f64>::zeros(p);
    let mut s = Array1::<f64>::zeros(p);
    let mut sigma = target_sq.max(0.0).sqrt();
    let mut budget = opts.max_iter;
    // Residual scale below which the fit counts as interpolating (R^2 of
    // 1 - 1e-12 against the target norm).
    let degenerate_at = 1e-6 * sigma.max(f64::MIN_POSITIVE);

    if sigma < 1e-12 {
        return Ok(SqrtLassoFit {
            gamma,
            noise_scale: sigma,
            effective_lambda: 2.0 * lambda * sigma,
            interpolating: true,
            iterations: 0,
        });
    }

    for it in 0..500 {
        cd_solve(gram, lin, 2.0 * lambda * sigma, &penalized, &mut gamma, &mut s, opts.cd_tol, &mut budget)?;
        let resid_sq = (target_sq - 2.0 * gamma.dot(lin) + gamma.dot(&s)).max(0.0);
        let new_sigma = resid_sq.sqrt();
        let done = (new_sigma - sigma).abs() <= 1e-10 * sigma.max(1.0);
        sigma = new_sigma;
        if sigma <= degenerate_at {
            return Ok(SqrtLassoFit {
                gamma,
                noise_scale: sigma,
                effective_lambda: 2.0 * lambda * sigma,
                interpolating: true,
                iterations: it + 1,
            });
        }
        if done {
            return Ok(SqrtLassoFit {
                gamma,
                noise_scale: sigma,
                effective_lambda: 2.0 * lambda * sigma,
                interpolating: false,
                iterations: it + 1,
            });
        }
    }
    Err(Error::NonConvergence { iterations: 500, residual: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_dataset(loss: &Loss, n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
        let beta = Array1::from_shape_fn(p, |j| if j < 2 { 1.0 } else { 0.0 });
        let eta = x.dot(&beta);
        let y = match loss {
            Loss::Logistic => Array1::from_shape_fn(n, |i| {
                f64::from(rng.random::<f64>() < crate::loss::sigmoid(eta[i]))
            }),
            _ => Array1::from_shape_fn(n, |i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                eta[i] + e
            }),
        };
        Dataset::new(x, y).unwrap()
    }

    fn all_losses() -> Vec<Loss> {
        vec![Loss::Quadratic, Loss::Huber { k: 0.5 }, Loss::Quantile { q: 0.5 }, Loss::Logistic]
    }

    #[test]
    fn single_column_matches_soft_threshold_and_grid() {
        // X'X/n = 1, X'y/n = 1, lambda = 0.5: stationarity gives 0.75.
        let data = Dataset::new(array![[1.0], [1.0], [1.0], [1.0]], array![1.0, 1.0, 1.0, 1.0])
            .unwrap();
        let fit = fit_lasso(&Loss::Quadratic, &data, 0.5, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 0.75, epsilon = 1e-10);

        // Dense-grid oracle on the same objective.
        let objective = |b: f64| {
            data.y.iter().zip(data.x.column(0)).map(|(y, x)| (y - x * b) * (y - x * b)).sum::<f64>()
                / 4.0
                + 0.5 * b.abs()
        };
        let mut grid_min = f64::INFINITY;
        let mut at = 0.0;
        let mut b = -2.0;
        while b <= 2.0 {
            let v = objective(b);
            if v < grid_min {
                grid_min = v;
                at = b;
            }
            b += 1e-4;
        }
        assert!(fit.objective <= grid_min + 1e-9);
        assert_abs_diff_eq!(at, 0.75, epsilon = 1e-3);
    }

    #[test]
    fn lambda_max_yields_zero_fit_for_every_loss() {
        for (i, loss) in all_losses().into_iter().enumerate() {
            let data = gaussian_dataset(&loss, 40, 6, 100 + i as u64);
            let opts = SolverOptions::default();
            let lmax = lambda_max(&loss, &data, &opts).unwrap();
            if matches!(loss, Loss::Quadratic) {
                let want = 2.0 * data.x.t().dot(&data.y).mapv(f64::abs).iter().cloned().fold(0.0, f64::max)
                    / data.n() as f64;
                assert_abs_diff_eq!(lmax, want, epsilon = 1e-12);
            }
            // At exactly lambda_max the zero vector satisfies stationarity
            // with equality; the splitting scheme needs a strict margin to
            // land on exact zeros.
            let at = if loss.is_smooth() { lmax } else { lmax * 1.05 };
            let fit = fit_lasso(&loss, &data, at, &opts).unwrap();
            assert!(fit.beta.iter().all(|&b| b == 0.0), "{loss:?} not zero at lambda_max");
            assert!(fit.kkt_residual <= at + 1e-6);
        }
    }

    #[test]
    fn sqrt_lasso_orthogonal_target_is_zero() {
        let others = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let target = array![1.0, 1.0, 1.0, 1.0];
        let fit =
            fit_sqrt_lasso(target.view(), others.view(), 0.9, &SolverOptions::default()).unwrap();
        assert!(fit.gamma.iter().all(|&g| g == 0.0));
        assert!(!fit.interpolating);
    }

    #[test]
    fn sqrt_lasso_proportional_target_interpolates() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let col = Array1::from_shape_fn(30, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let others = {
            let mut m = Array2::zeros((30, 1));
            m.column_mut(0).assign(&col);
            m
        };
        let target = col.mapv(|v| 2.0 * v);
        let fit =
            fit_sqrt_lasso(target.view(), others.view(), 1e-9, &SolverOptions::default()).unwrap();
        assert!(fit.interpolating);
        assert_abs_diff_eq!(fit.gamma[0], 2.0, epsilon = 1e-5);
    }

    #[test]
    fn cv_single_value_path_selects_it() {
        let loss = Loss::Quadratic;
        let data = gaussian_dataset(&loss, 60, 4, 7);
        let cfg = CvConfig { n_folds: 3, path_len: 1, ..CvConfig::default() };
        let path = cv_select_lambda(&loss, &data, &cfg, &SolverOptions::default(), 1).unwrap();
        assert_eq!(path.selected, 0);
        assert_eq!(path.values.len(), 1);
    }

    #[test]
    fn cv_path_head_gives_zero_fit() {
        let loss = Loss::Quadratic;
        let data = gaussian_dataset(&loss, 50, 8, 8);
        let cfg = CvConfig::default();
        let opts = SolverOptions::default();
        let path = cv_select_lambda(&loss, &data, &cfg, &opts, 3).unwrap();
        let fit = fit_lasso(&loss, &data, path.values[0], &opts).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(path.values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn cv_on_pure_noise_prefers_heavy_penalty() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let x = Array2::from_shape_fn((200, 10), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(200, |_| StandardNormal.sample(&mut rng));
        let data = Dataset::new(x, y).unwrap();
        let path = cv_select_lambda(
            &Loss::Quadratic,
            &data,
            &CvConfig::default(),
            &SolverOptions::default(),
            5,
        )
        .unwrap();
        let median = path.values[path.values.len() / 2];
        assert!(
            path.selected_lambda() >= median,
            "noise data selected lambda {} below the path median {median}",
            path.selected_lambda()
        );
    }

    #[test]
    fn kkt_check_vanishes_at_interpolation() {
        let loss = Loss::Quadratic;
        let data = gaussian_dataset(&loss, 30, 5, 21);
        let fit = fit_lasso(&loss, &data, 1e-10, &SolverOptions::default()).unwrap();
        assert!(kkt_check(&loss, &data, &fit).unwrap() <= 1e-8);
    }

    #[test]
    fn quantile_kkt_respects_interpolation_accounting() {
        for seed in [31, 32, 33] {
            let loss = Loss::Quantile { q: 0.5 };
            let data = gaussian_dataset(&loss, 40, 6, seed);
            for lambda in [0.02, 0.1, 0.3] {
                let fit = fit_lasso(&loss, &data, lambda, &SolverOptions::default()).unwrap();
                let sup = kkt_check(&loss, &data, &fit).unwrap();
                let kx = data.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let bound = lambda + fit.sparsity() as f64 * kx / data.n() as f64 + 1e-6;
                assert!(sup <= bound, "seed {seed} lambda {lambda}: {sup} > {bound}");
            }
        }
    }

    #[test]
    fn objective_trace_is_monotone_for_smooth_losses() {
        for (i, loss) in
            [Loss::Quadratic, Loss::Huber { k: 0.5 }, Loss::Logistic].into_iter().enumerate()
        {
            let data = gaussian_dataset(&loss, 50, 8, 40 + i as u64);
            let fit = fit_lasso(&loss, &data, 0.05, &SolverOptions::default()).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{loss:?}: trace increased {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn repeated_fits_are_bit_identical() {
        for loss in all_losses() {
            let data = gaussian_dataset(&loss, 35, 5, 60);
            let a = fit_lasso(&loss, &data, 0.08, &SolverOptions::default()).unwrap();
            let b = fit_lasso(&loss, &data, 0.08, &SolverOptions::default()).unwrap();
            assert_eq!(a.beta.to_vec(), b.beta.to_vec());
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }
    }

    #[test]
    fn quadratic_scaling_equivariance() {
        let loss = Loss::Quadratic;
        let data = gaussian_dataset(&loss, 45, 6, 70);
        let c = 3.7;
        let scaled = Dataset::new(data.x.clone(), data.y.mapv(|v| c * v)).unwrap();
        let opts = SolverOptions { cd_tol: 1e-12, kkt_tol: 1e-11, ..SolverOptions::default() };
        let base = fit_lasso(&loss, &data, 0.12, &opts).unwrap();
        let big = fit_lasso(&loss, &scaled, c * 0.12, &opts).unwrap();
        for j in 0..6 {
            assert_abs_diff_eq!(
                big.beta[j],
                c * base.beta[j],
                epsilon = 1e-10 * (1.0 + (c * base.beta[j]).abs())
            );
        }
    }

    #[test]
    fn heavy_penalty_with_intercept_leaves_only_the_mean() {
        let loss = Loss::Quadratic;
        let mut data = gaussian_dataset(&loss, 50, 4, 80);
        data.y.mapv_inplace(|v| v + 5.0);
        let opts = SolverOptions { intercept: true, ..SolverOptions::default() };
        let lmax = lambda_max(&loss, &data, &opts).unwrap();
        let fit = fit_lasso(&loss, &data, lmax * 1.01, &opts).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(fit.intercept.unwrap(), data.y.mean().unwrap(), epsilon = 1e-6);
    }

    #[test]
    fn degenerate_logistic_folds_are_skipped_or_fatal() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((40, 3), |_| StandardNormal.sample(&mut rng));
        // A single positive label: folds whose training part misses it are
        // fine, the one holding it trains on a single class and is skipped.
        let mut y = Array1::zeros(40);
        y[17] = 1.0;
        let data = Dataset::new(x.clone(), y).unwrap();
        let cfg = CvConfig { n_folds: 4, path_len: 8, ..CvConfig::default() };
        let path =
            cv_select_lambda(&Loss::Logistic, &data, &cfg, &SolverOptions::default(), 0).unwrap();
        assert_eq!(path.skipped_folds, 1);

        let all_zero = Dataset::new(x, Array1::zeros(40)).unwrap();
        assert!(cv_select_lambda(
            &Loss::Logistic,
            &all_zero,
            &cfg,
            &SolverOptions::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn standardize_recovers_the_same_scale() {
        let loss = Loss::Quadratic;
        let data = gaussian_dataset(&loss, 80, 5, 90);
        // Stretch one column hard; with standardization the fit must still
        // be expressed on the original scale.
        let mut x = data.x.clone();
        x.column_mut(0).mapv_inplace(|v| v * 100.0);
        let stretched = Dataset::new(x, data.y.clone()).unwrap();
        let opts = SolverOptions { standardize: true, ..SolverOptions::default() };
        let fit = fit_lasso(&loss, &stretched, 0.05, &opts).unwrap();
        let refit_obj = {
            let u = stretched.x.dot(&fit.beta);
            u.iter().zip(stretched.y.iter()).map(|(ui, yi)| loss.value(*ui, *yi)).sum::<f64>()
                / 80.0
                + 0.05 * fit.beta.iter().map(|b| b.abs()).sum::<f64>()
        };
        assert_abs_diff_eq!(fit.objective, refit_obj, epsilon = 1e-10 * refit_obj.abs().max(1.0));
    }
}
