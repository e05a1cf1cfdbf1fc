//! Confidence intervals, two-sided z-tests and multiple-testing adjustments
//! on de-sparsified estimates.

use serde::{Deserialize, Serialize};

use crate::desparsify::DesparsifiedEstimate;
use crate::normal::{phi_cdf, phi_inv};

/// `b̂ⱼ ± Φ⁻¹(1 − α/2)·σ̂ⱼ/√n`.
pub fn confidence_interval(est: &DesparsifiedEstimate, alpha: f64) -> (f64, f64) {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
    let half = phi_inv(1.0 - alpha / 2.0) * est.sigma_hat_j / (est.n as f64).sqrt();
    (est.b_hat_j - half, est.b_hat_j + half)
}

/// Two-sided p-value of `H₀: βⱼ⁰ = 0`: `2(1 − Φ(√n·|b̂ⱼ|/σ̂ⱼ))`.
pub fn p_value(est: &DesparsifiedEstimate) -> f64 {
    let z = (est.n as f64).sqrt() * est.b_hat_j.abs() / est.sigma_hat_j;
    (2.0 * (1.0 - phi_cdf(z))).clamp(0.0, 1.0)
}

fn order_of(pvals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pvals.len()).collect();
    // Stable order: ties keep their original positions.
    idx.sort_by(|&a, &b| pvals[a].partial_cmp(&pvals[b]).expect("p-values must not be NaN"));
    idx
}

/// Holm step-down adjustment (family-wise error control):
/// sort ascending, `p̃₍ᵢ₎ = max_{k≤i} min(1, (m−k+1)·p₍ₖ₎)`, undo the sort.
pub fn holm_adjust(pvals: &[f64]) -> Vec<f64> {
    debug_assert!(pvals.iter().all(|p| (0.0..=1.0).contains(p)));
    let m = pvals.len();
    let order = order_of(pvals);
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0_f64;
    for (i, &at) in order.iter().enumerate() {
        let scaled = ((m - i) as f64 * pvals[at]).min(1.0);
        running = running.max(scaled);
        adjusted[at] = running;
    }
    adjusted
}

/// Benjamini-Hochberg step-up adjustment (false-discovery-rate control):
/// sort ascending, `p̃₍ᵢ₎ = min_{k≥i} min(1, m·p₍ₖ₎/k)`, undo the sort.
pub fn bh_adjust(pvals: &[f64]) -> Vec<f64> {
    debug_assert!(pvals.iter().all(|p| (0.0..=1.0).contains(p)));
    let m = pvals.len();
    let order = order_of(pvals);
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (i, &at) in order.iter().enumerate().rev() {
        let scaled = (m as f64 * pvals[at] / (i + 1) as f64).min(1.0);
        running = running.min(scaled);
        adjusted[at] = running;
    }
    adjusted
}

/// Coordinates passing the magnitude threshold `|b̂ⱼ| > 2σ̂ⱼ√(log p / n)`
/// (strict inequality; `p` is the number of coordinates the rule screens).
pub fn threshold_select(ests: &[DesparsifiedEstimate], p: usize) -> Vec<usize> {
    assert!(p >= 2, "threshold rule needs p >= 2");
    let logp = (p as f64).ln();
    ests.iter()
        .filter(|e| e.b_hat_j.abs() > 2.0 * e.sigma_hat_j * (logp / e.n as f64).sqrt())
        .map(|e| e.j)
        .collect()
}

/// Per-coordinate inference record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinateInference {
    pub j: usize,
    pub b_hat: f64,
    pub sigma_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `√n·b̂ⱼ/σ̂ⱼ`, the standardized statistic behind the p-value.
    pub z_stat: f64,
    pub p_value: f64,
    pub p_holm: f64,
    pub p_bh: f64,
    pub reject_holm: bool,
    pub reject_bh: bool,
    pub reject_threshold: bool,
}

/// Full inference table at level `alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport {
    pub rows: Vec<CoordinateInference>,
    pub alpha: f64,
    pub n: usize,
    pub p: usize,
}

/// Assembles CIs, raw and adjusted p-values and the decision flags.
/// `p_total` is the coordinate count used by the threshold rule (the number
/// of candidate variables the estimates were computed over).
pub fn build_report(
    ests: &[DesparsifiedEstimate],
    alpha: f64,
    p_total: usize,
    n: usize,
) -> InferenceReport {
    let pvals: Vec<f64> = ests.iter().map(p_value).collect();
    let holm = holm_adjust(&pvals);
    let bh = bh_adjust(&pvals);
    let thresholded = threshold_select(ests, p_total.max(2));
    let rows = ests
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (lo, hi) = confidence_interval(e, alpha);
            CoordinateInference {
                j: e.j,
                b_hat: e.b_hat_j,
                sigma_hat: e.sigma_hat_j,
                ci_lo: lo,
                ci_hi: hi,
                z_stat: (e.n as f64).sqrt() * e.b_hat_j / e.sigma_hat_j,
                p_value: pvals[i],
                p_holm: holm[i],
                p_bh: bh[i],
                reject_holm: holm[i] <= alpha,
                reject_bh: bh[i] <= alpha,
                reject_threshold: thresholded.contains(&e.j),
            }
        })
        .collect();
    InferenceReport { rows, alpha, n, p: p_total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn est(b: f64, sigma: f64, n: usize) -> DesparsifiedEstimate {
        DesparsifiedEstimate {
            j: 0,
            beta_hat_j: b,
            correction_j: 0.0,
            b_hat_j: b,
            sigma_hat_j: sigma,
            n,
        }
    }

    #[test]
    fn ci_reference_width() {
        let (lo, hi) = confidence_interval(&est(0.0, 1.0, 100), 0.05);
        assert_abs_diff_eq!(hi, 0.1959964, epsilon = 1e-6);
        assert_abs_diff_eq!(lo, -0.1959964, epsilon = 1e-6);
    }

    #[test]
    fn ci_collapses_as_alpha_grows() {
        let (lo, hi) = confidence_interval(&est(0.3, 1.0, 100), 1.0 - 1e-12);
        assert!(hi - lo < 1e-6);
        assert!(lo <= 0.3 && 0.3 <= hi);
    }

    #[test]
    fn p_values() {
        assert_abs_diff_eq!(p_value(&est(0.0, 1.0, 50)), 1.0);
        // √n|b|/σ = 1.959964 → p ≈ 0.05.
        let e = est(1.959964 / 10.0, 1.0, 100);
        assert_abs_diff_eq!(p_value(&e), 0.05, epsilon = 1e-6);
        // Monotone decreasing in the statistic.
        let mut last = 1.0;
        for z in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let p = p_value(&est(z / 10.0, 1.0, 100));
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn holm_hand_example() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]);
        assert_abs_diff_eq!(adj[0], 0.03, epsilon = 1e-12);
        assert_abs_diff_eq!(adj[1], 0.06, epsilon = 1e-12);
        assert_abs_diff_eq!(adj[2], 0.06, epsilon = 1e-12);
        assert_eq!(holm_adjust(&[0.2]), vec![0.2]);
        assert_eq!(holm_adjust(&[1.0, 1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn bh_hand_example() {
        let adj = bh_adjust(&[0.01, 0.02, 0.04, 0.05]);
        assert_abs_diff_eq!(adj[0], 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(adj[1], 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(adj[2], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(adj[3], 0.05, epsilon = 1e-12);
        assert_eq!(bh_adjust(&[0.7]), vec![0.7]);
        // p(k) = k/m ⇒ every adjusted value is 1.
        let adj = bh_adjust(&[0.25, 0.5, 0.75, 1.0]);
        assert!(adj.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn adjustment_properties_on_random_vectors() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let m = rng.random_range(1..12);
            let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let holm = holm_adjust(&p);
            let bh = bh_adjust(&p);
            for i in 0..m {
                let bonf = (m as f64 * p[i]).min(1.0);
                assert!(holm[i] >= p[i] - 1e-15);
                assert!(holm[i] <= bonf + 1e-15);
                assert!(bh[i] >= p[i] - 1e-15);
                assert!(bh[i] <= holm[i] + 1e-15);
                assert!((0.0..=1.0).contains(&holm[i]));
                assert!((0.0..=1.0).contains(&bh[i]));
            }
            // Monotonicity: raising one raw p-value never lowers any
            // adjusted one.
            let mut bumped = p.clone();
            let at = rng.random_range(0..m);
            bumped[at] = (bumped[at] + rng.random::<f64>() * (1.0 - bumped[at])).min(1.0);
            let holm2 = holm_adjust(&bumped);
            let bh2 = bh_adjust(&bumped);
            for i in 0..m {
                assert!(holm2[i] >= holm[i] - 1e-12);
                assert!(bh2[i] >= bh[i] - 1e-12);
            }
        }
    }

    #[test]
    fn ci_p_duality() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..500 {
            let e = est(rng.random::<f64>() - 0.5, 0.1 + rng.random::<f64>(), 64);
            let alpha = 0.01 + 0.98 * rng.random::<f64>();
            let p = p_value(&e);
            let (lo, hi) = confidence_interval(&e, alpha);
            let zero_outside = 0.0 < lo - 1e-12 || 0.0 > hi + 1e-12;
            if p < alpha - 1e-12 {
                assert!(zero_outside, "p={p} < alpha={alpha} but 0 in [{lo},{hi}]");
            }
            if p > alpha + 1e-12 {
                assert!(!zero_outside, "p={p} > alpha={alpha} but 0 outside [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn threshold_rule() {
        let zero = vec![est(0.0, 1.0, 100)];
        assert!(threshold_select(&zero, 10).is_empty());
        // Exactly at the boundary: excluded.
        let p = 10usize;
        let n = 100usize;
        let cut = 2.0 * ((p as f64).ln() / n as f64).sqrt();
        let boundary = vec![est(cut, 1.0, n)];
        assert!(threshold_select(&boundary, p).is_empty());
        let above = vec![est(cut * 1.0001, 1.0, n)];
        assert_eq!(threshold_select(&above, p), vec![0]);
    }
}
