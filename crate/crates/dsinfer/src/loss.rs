//! Loss families, score weights and curvature weights.
//!
//! Everything downstream works with the penalized objective
//! `(1/n) Σᵢ ρ(xᵢᵀβ, yᵢ) + λ‖β‖₁` and its per-sample score
//! `ψ_β(x, y) = w(y, xᵀβ)·x`, where `w(y, u) = ∂ρ(u, y)/∂u` (a subgradient
//! element where ρ has a kink). The sign convention is fixed once here:
//! `w` is the derivative in the *prediction* `u`, so that `ψ_β = ∇_β ρ_β`
//! and the stationarity system reads `Pₙψ_β̂ + λẐ = 0`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss family of the M-estimation objective. All four families are convex
/// in the linear predictor for every fixed response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Loss {
    /// `ρ(u, y) = (y − u)²`
    Quadratic,
    /// `ρ(u, y) = [(y−u)²·1{|y−u|≤k} + k(2|y−u|−k)·1{|y−u|>k}] / (2k)`
    ///
    /// Note the `1/(2k)` scaling: the quadratic branch is `(y−u)²/(2k)`, so
    /// the score weight is `−(y−u)/k` inside the radius and `∓1` outside.
    Huber { k: f64 },
    /// Check loss `q|y−u|·1{y−u>0} + (1−q)|y−u|·1{y−u≤0}`.
    ///
    /// At `q = 0.5` this is half the absolute loss.
    Quantile { q: f64 },
    /// `ρ(u, y) = −y·u + log(1 + eᵘ)` with responses in `{0, 1}`.
    Logistic,
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Huber { k } if !(k > 0.0) || !k.is_finite() => {
                Err(Error::invalid(format!("huber radius must be positive, got {k}")))
            }
            Loss::Quantile { q } if !(q > 0.0 && q < 1.0) => {
                Err(Error::invalid(format!("quantile level must be in (0,1), got {q}")))
            }
            _ => Ok(()),
        }
    }

    /// ρ(u, y).
    pub fn value(&self, u: f64, y: f64) -> f64 {
        let z = y - u;
        match *self {
            Loss::Quadratic => z * z,
            Loss::Huber { k } => {
                if z.abs() <= k {
                    z * z / (2.0 * k)
                } else {
                    z.abs() - k / 2.0
                }
            }
            Loss::Quantile { q } => {
                if z > 0.0 {
                    q * z
                } else {
                    (1.0 - q) * (-z)
                }
            }
            Loss::Logistic => -y * u + log1p_exp(u),
        }
    }

    /// Score weight `w(y, u) = ∂ρ(u, y)/∂u`; at the quantile kink the
    /// subgradient element 0 is returned.
    pub fn weight(&self, u: f64, y: f64) -> f64 {
        let z = y - u;
        match *self {
            Loss::Quadratic => -2.0 * z,
            Loss::Huber { k } => {
                if z.abs() <= k {
                    -z / k
                } else {
                    -z.signum()
                }
            }
            Loss::Quantile { q } => {
                if z > 0.0 {
                    -q
                } else if z < 0.0 {
                    1.0 - q
                } else {
                    0.0
                }
            }
            Loss::Logistic => sigmoid(u) - y,
        }
    }

    /// Per-sample weight `v` used when a Gram-type matrix
    /// `Σ̂ = (1/n) Σ vᵢ xᵢxᵢᵀ` is formed from this loss: the second derivative
    /// of ρ in `u` for the smooth likelihood losses, the squared score weight
    /// for Huber, and 1 for the quantile loss.
    pub fn curvature(&self, u: f64, y: f64) -> f64 {
        match *self {
            Loss::Quadratic => 2.0,
            Loss::Huber { .. } => {
                let w = self.weight(u, y);
                w * w
            }
            Loss::Quantile { .. } => 1.0,
            Loss::Logistic => {
                let p = sigmoid(u);
                p * (1.0 - p)
            }
        }
    }

    /// Upper bound on the Lipschitz constant of `u ↦ w(y, u)`; this is the
    /// curvature constant of the quadratic majorizer used by the solver.
    /// `None` for the quantile loss, whose weight jumps.
    pub fn curvature_bound(&self) -> Option<f64> {
        match *self {
            Loss::Quadratic => Some(2.0),
            Loss::Huber { k } => Some(1.0 / k),
            Loss::Logistic => Some(0.25),
            Loss::Quantile { .. } => None,
        }
    }

    /// Whether `w(y, ·)` is continuous (everything except the quantile loss).
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Loss::Quantile { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Quadratic => "quadratic",
            Loss::Huber { .. } => "huber",
            Loss::Quantile { .. } => "quantile",
            Loss::Logistic => "logistic",
        }
    }
}

/// Numerically safe `log(1 + eᵘ)`.
fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Numerically safe `eᵘ/(1 + eᵘ)`.
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Observations: `n × p` design and length-`n` response.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    /// Builds a dataset, rejecting empty or non-finite inputs.
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("design matrix must have n >= 1 and p >= 1"));
        }
        if x.nrows() != y.len() {
            return Err(Error::dim(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design/response entries must be finite"));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Loss-specific response check: the logistic loss needs `yᵢ ∈ {0, 1}`.
    pub fn validate_for(&self, loss: &Loss) -> Result<()> {
        loss.validate()?;
        if matches!(loss, Loss::Logistic) {
            if let Some(bad) = self.y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::invalid(format!(
                    "logistic loss needs responses in {{0,1}}; y[{bad}] = {}",
                    self.y[bad]
                )));
            }
        }
        Ok(())
    }
}

/// Coefficient vector with an optional unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub beta: Array1<f64>,
    pub intercept: Option<f64>,
}

impl Coefficients {
    pub fn new(beta: Array1<f64>) -> Self {
        Coefficients { beta, intercept: None }
    }

    pub fn with_intercept(beta: Array1<f64>, intercept: f64) -> Self {
        Coefficients { beta, intercept: Some(intercept) }
    }

    pub fn zeros(p: usize) -> Self {
        Coefficients::new(Array1::zeros(p))
    }

    /// `Xβ (+ intercept)`.
    pub fn linear_predictor(&self, data: &Dataset) -> Result<Array1<f64>> {
        if self.beta.len() != data.p() {
            return Err(Error::dim(format!(
                "coefficients have length {} but design has {} columns",
                self.beta.len(),
                data.p()
            )));
        }
        let mut u = data.x.dot(&self.beta);
        if let Some(c) = self.intercept {
            u.mapv_inplace(|v| v + c);
        }
        Ok(u)
    }
}

/// Per-sample scores: row `i` is `ψ_β(xᵢ, yᵢ) = w(yᵢ, xᵢᵀβ)·xᵢ`.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub psi: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(loss: &Loss, data: &Dataset, coef: &Coefficients) -> Result<Self> {
        data.validate_for(loss)?;
        let u = coef.linear_predictor(data)?;
        let mut psi = data.x.clone();
        for (i, mut row) in psi.rows_mut().into_iter().enumerate() {
            let w = loss.weight(u[i], data.y[i]);
            row.mapv_inplace(|v| v * w);
        }
        Ok(ScoreMatrix { psi })
    }

    /// Column means, i.e. the empirical score `Pₙψ_β`.
    pub fn mean(&self) -> Array1<f64> {
        let n = self.psi.nrows() as f64;
        let mut m = Array1::zeros(self.psi.ncols());
        for row in self.psi.rows() {
            m += &row;
        }
        m.mapv_inplace(|v| v / n);
        m
    }
}

/// Empirical score `Pₙψ_β` computed without materializing the score matrix.
pub fn score_mean(loss: &Loss, data: &Dataset, coef: &Coefficients) -> Result<Array1<f64>> {
    data.validate_for(loss)?;
    let u = coef.linear_predictor(data)?;
    let n = data.n() as f64;
    let mut g = Array1::zeros(data.p());
    for (i, row) in data.x.rows().into_iter().enumerate() {
        let w = loss.weight(u[i], data.y[i]);
        if w != 0.0 {
            g.scaled_add(w, &row);
        }
    }
    g.mapv_inplace(|v| v / n);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn all_losses() -> Vec<Loss> {
        vec![
            Loss::Quadratic,
            Loss::Huber { k: 0.5 },
            Loss::Quantile { q: 0.3 },
            Loss::Quantile { q: 0.5 },
            Loss::Logistic,
        ]
    }

    #[test]
    fn loss_values() {
        assert_abs_diff_eq!(Loss::Quadratic.value(0.0, 2.0), 4.0);
        // |y - u| = k: both Huber branches agree at the boundary.
        assert_abs_diff_eq!(Loss::Huber { k: 0.5 }.value(0.0, 0.5), 0.25);
        assert_abs_diff_eq!(Loss::Quantile { q: 0.5 }.value(1.0, 3.0), 1.0);
        assert_abs_diff_eq!(Loss::Logistic.value(0.0, 1.0), 2.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn weights() {
        assert_abs_diff_eq!(Loss::Huber { k: 0.5 }.weight(0.0, 0.2), -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(Loss::Quadratic.weight(1.0, 1.0), 0.0);
        assert_abs_diff_eq!(Loss::Logistic.weight(0.0, 0.0), 0.5);
        // Kink subgradient selection.
        assert_eq!(Loss::Quantile { q: 0.3 }.weight(2.0, 2.0), 0.0);
        assert_abs_diff_eq!(Loss::Quantile { q: 0.3 }.weight(0.0, 1.0), -0.3);
        assert_abs_diff_eq!(Loss::Quantile { q: 0.3 }.weight(1.0, 0.0), 0.7);
    }

    #[test]
    fn curvature_weights() {
        assert_abs_diff_eq!(Loss::Logistic.curvature(0.0, 1.0), 0.25);
        assert_abs_diff_eq!(Loss::Quadratic.curvature(-3.0, 7.0), 2.0);
        // Outside the radius the Huber score weight is ±1, so its square is 1.
        assert_abs_diff_eq!(Loss::Huber { k: 0.5 }.curvature(0.0, 1.0), 1.0);
        // Inside: (z/k)^2.
        assert_abs_diff_eq!(Loss::Huber { k: 0.5 }.curvature(0.0, 0.2), 0.16, epsilon = 1e-15);
        assert_abs_diff_eq!(Loss::Quantile { q: 0.5 }.curvature(0.3, -2.0), 1.0);
    }

    #[test]
    fn score_matrix_rows() {
        let data = Dataset::new(array![[1.0]], array![1.0]).unwrap();
        let psi = ScoreMatrix::new(&Loss::Quadratic, &data, &Coefficients::zeros(1)).unwrap();
        assert_abs_diff_eq!(psi.psi[[0, 0]], -2.0);

        let data = Dataset::new(array![[2.0]], array![-1.0]).unwrap();
        let psi =
            ScoreMatrix::new(&Loss::Quantile { q: 0.5 }, &data, &Coefficients::zeros(1)).unwrap();
        assert_abs_diff_eq!(psi.psi[[0, 0]], 1.0);

        let data = Dataset::new(array![[1.0]], array![0.0]).unwrap();
        let psi = ScoreMatrix::new(&Loss::Logistic, &data, &Coefficients::zeros(1)).unwrap();
        assert_abs_diff_eq!(psi.psi[[0, 0]], 0.5);
    }

    #[test]
    fn score_mean_matches_matrix() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let x = Array2::from_shape_fn((13, 4), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(13, |_| rng.random::<f64>());
        let data = Dataset::new(x, y).unwrap();
        let beta = Coefficients::new(Array1::from_shape_fn(4, |_| rng.random::<f64>() - 0.5));
        for loss in [Loss::Quadratic, Loss::Huber { k: 0.5 }, Loss::Quantile { q: 0.4 }] {
            let sm = ScoreMatrix::new(&loss, &data, &beta).unwrap();
            let g = score_mean(&loss, &data, &beta).unwrap();
            for (a, b) in sm.mean().iter().zip(g.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn convexity_in_u() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for loss in all_losses() {
            for _ in 0..1000 {
                let u1 = 8.0 * (rng.random::<f64>() - 0.5);
                let u2 = 8.0 * (rng.random::<f64>() - 0.5);
                let y = if matches!(loss, Loss::Logistic) {
                    f64::from(rng.random::<bool>())
                } else {
                    8.0 * (rng.random::<f64>() - 0.5)
                };
                let t = rng.random::<f64>();
                let lhs = loss.value(t * u1 + (1.0 - t) * u2, y);
                let rhs = t * loss.value(u1, y) + (1.0 - t) * loss.value(u2, y);
                assert!(lhs <= rhs + 1e-12, "{loss:?} convexity violated");
            }
        }
    }

    #[test]
    fn weight_matches_finite_difference() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let h = 1e-7;
        for loss in all_losses() {
            for _ in 0..300 {
                let u = 4.0 * (rng.random::<f64>() - 0.5);
                let y = if matches!(loss, Loss::Logistic) {
                    f64::from(rng.random::<bool>())
                } else {
                    4.0 * (rng.random::<f64>() - 0.5)
                };
                // Stay away from kinks of the quantile/Huber losses.
                let kink_dist = match loss {
                    Loss::Quantile { .. } => (y - u).abs(),
                    Loss::Huber { k } => ((y - u).abs() - k).abs(),
                    _ => f64::INFINITY,
                };
                if kink_dist < 1e-6 {
                    continue;
                }
                let fd = (loss.value(u + h, y) - loss.value(u - h, y)) / (2.0 * h);
                let w = loss.weight(u, y);
                let scale = w.abs().max(1.0);
                assert!(
                    (fd - w).abs() <= 1e-6 * scale,
                    "{loss:?}: fd {fd} vs weight {w} at u={u}, y={y}"
                );
            }
        }
    }

    #[test]
    fn huber_is_continuous_at_radius() {
        let loss = Loss::Huber { k: 0.5 };
        for s in [-1.0, 1.0] {
            let z = s * 0.5;
            let eps = 1e-12;
            let inside = loss.value(0.0, z * (1.0 - eps));
            let outside = loss.value(0.0, z * (1.0 + eps));
            assert!((inside - outside).abs() < 1e-11);
            let w_in = loss.weight(0.0, z * (1.0 - eps));
            let w_out = loss.weight(0.0, z * (1.0 + eps));
            assert!((w_in - w_out).abs() < 1e-11);
        }
    }

    #[test]
    fn median_quantile_is_half_absolute() {
        let loss = Loss::Quantile { q: 0.5 };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = 10.0 * (rng.random::<f64>() - 0.5);
            let y = 10.0 * (rng.random::<f64>() - 0.5);
            assert_abs_diff_eq!(loss.value(u, y), 0.5 * (y - u).abs(), epsilon = 1e-14);
        }
    }

    #[test]
    fn logistic_is_overflow_safe() {
        for u in [-800.0, 800.0] {
            for y in [0.0, 1.0] {
                assert!(Loss::Logistic.value(u, y).is_finite());
                assert!(Loss::Logistic.weight(u, y).is_finite());
            }
        }
    }

    #[test]
    fn validation_errors() {
        assert!(Loss::Huber { k: 0.0 }.validate().is_err());
        assert!(Loss::Quantile { q: 1.0 }.validate().is_err());
        assert!(Dataset::new(array![[f64::NAN]], array![0.0]).is_err());
        let d = Dataset::new(array![[1.0], [2.0]], array![0.0, 0.5]).unwrap();
        assert!(d.validate_for(&Loss::Logistic).is_err());
        assert!(d.validate_for(&Loss::Quadratic).is_ok());
    }
}
