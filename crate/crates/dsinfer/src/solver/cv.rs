//! K-fold cross-validation for the penalty level.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Dataset, Loss};
use crate::solver::{fit_on_design, lambda_max, prepare_design, SolverOptions};

/// How the λ is picked off the CV curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvSelection {
    /// Minimal CV error; exact ties go to the larger λ.
    Min,
    /// Largest λ whose CV error is within one standard error of the minimum
    /// (standard error of the fold means at the minimizer).
    OneSe,
}

/// Cross-validation settings for the λ path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub n_folds: usize,
    pub path_len: usize,
    pub lambda_min_ratio: f64,
    pub selection: CvSelection,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { n_folds: 10, path_len: 50, lambda_min_ratio: 0.01, selection: CvSelection::Min }
    }
}

/// A decreasing λ path with per-value CV errors and the selected index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaPath {
    pub values: Vec<f64>,
    pub n_folds: usize,
    /// Mean over folds of the mean held-out loss, per λ.
    pub cv_errors: Vec<f64>,
    /// Standard error of the fold means, per λ.
    pub cv_se: Vec<f64>,
    /// Index of the chosen λ.
    pub selected: usize,
    /// Folds skipped because their training response was degenerate.
    pub skipped_folds: usize,
}

impl LambdaPath {
    pub fn selected_lambda(&self) -> f64 {
        self.values[self.selected]
    }
}

/// Geometric path from `lambda_max` down to `ratio·lambda_max`.
pub(crate) fn geometric_path(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let log_max = lambda_max.ln();
    let log_min = (lambda_max * ratio).ln();
    (0..len)
        .map(|i| {
            let t = i as f64 / (len - 1) as f64;
            if i == 0 {
                lambda_max
            } else {
                (log_max + t * (log_min - log_max)).exp()
            }
        })
        .collect()
}

/// Shuffled near-equal-size fold assignment.
pub(crate) fn make_folds(n: usize, k: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    folds
}

fn logistic_degenerate(y: &Array1<f64>) -> bool {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    ones == 0 || ones == y.len()
}

/// Selects λ by K-fold cross-validation over a geometric path, warm-starting
/// fits along the decreasing path within each fold. Deterministic given the
/// seed; a logistic fold whose training response is all one class is skipped.
pub fn cv_select_lambda(
    loss: &Loss,
    data: &Dataset,
    cfg: &CvConfig,
    opts: &SolverOptions,
    seed: u64,
) -> Result<LambdaPath> {
    data.validate_for(loss)?;
    if cfg.n_folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if data.n() < 2 * cfg.n_folds {
        return Err(Error::invalid(format!(
            "n = {} is too small for {} folds",
            data.n(),
            cfg.n_folds
        )));
    }
    if cfg.path_len == 0 {
        return Err(Error::invalid("path length must be positive"));
    }

    let lmax = lambda_max(loss, data, opts)?;
    let path = geometric_path(lmax, cfg.path_len, cfg.lambda_min_ratio);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let folds = make_folds(data.n(), cfg.n_folds, &mut rng);

    let mut fold_errors: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_folds);
    let mut skipped = 0usize;

    for fold in &folds {
        let in_fold: Vec<bool> = {
            let mut m = vec![false; data.n()];
            for &i in fold {
                m[i] = true;
            }
            m
        };
        let train_idx: Vec<usize> = (0..data.n()).filter(|i| !in_fold[*i]).collect();
        let x_tr = data.x.select(Axis(0), &train_idx);
        let y_tr = Array1::from_iter(train_idx.iter().map(|&i| data.y[i]));
        if matches!(loss, Loss::Logistic) && logistic_degenerate(&y_tr) {
            skipped += 1;
            continue;
        }

        let design = prepare_design(x_tr.view(), opts);
        let gram: Array2<f64> = design.z.t().dot(&design.z) / train_idx.len() as f64;
        let mut beta = Array1::<f64>::zeros(design.z.ncols());

        let x_te = data.x.select(Axis(0), fold);
        let y_te = Array1::from_iter(fold.iter().map(|&i| data.y[i]));

        let mut this_fold = Vec::with_capacity(path.len());
        for &lambda in path.iter() {
            fit_on_design(loss, &design, &y_tr, lambda, &gram, &mut beta, opts)?;
            let coef = design.unscale(&beta);
            let mut u_te = x_te.dot(&coef.beta);
            if let Some(c) = coef.intercept {
                u_te.mapv_inplace(|v| v + c);
            }
            let mut e = 0.0;
            for (ui, yi) in u_te.iter().zip(y_te.iter()) {
                e += loss.value(*ui, *yi);
            }
            this_fold.push(e / fold.len() as f64);
        }
        fold_errors.push(this_fold);
    }

    let used_folds = fold_errors.len();
    if used_folds == 0 {
        return Err(Error::degenerate("all cross-validation folds were degenerate"));
    }

    let cv_errors: Vec<f64> = (0..path.len())
        .map(|l| fold_errors.iter().map(|f| f[l]).sum::<f64>() / used_folds as f64)
        .collect();
    let cv_se: Vec<f64> = (0..path.len())
        .map(|l| {
            if used_folds < 2 {
                return 0.0;
            }
            let m = cv_errors[l];
            let var = fold_errors.iter().map(|f| (f[l] - m) * (f[l] - m)).sum::<f64>()
                / (used_folds - 1) as f64;
            (var / used_folds as f64).sqrt()
        })
        .collect();

    let mut minimizer = 0usize;
    for (l, &e) in cv_errors.iter().enumerate() {
        if e < cv_errors[minimizer] {
            minimizer = l;
        }
    }
    let selected = match cfg.selection {
        CvSelection::Min => minimizer,
        CvSelection::OneSe => {
            let cutoff = cv_errors[minimizer] + cv_se[minimizer];
            (0..=minimizer).find(|&l| cv_errors[l] <= cutoff).unwrap_or(minimizer)
        }
    };

    Ok(LambdaPath {
        values: path,
        n_folds: cfg.n_folds,
        cv_errors,
        cv_se,
        selected,
        skipped_folds: skipped,
    })
}
