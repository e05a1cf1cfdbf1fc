//! Marginal screening: keep the `m` columns with the largest `|yᵀXⱼ|`.
//!
//! Raw inner products, no centering or scaling; ties go to the smaller
//! index. Screening is a preprocessing step for ultra-high-dimensional data
//! before the (quadratic-memory) fitting pipeline runs.

use crate::error::{Error, Result};
use crate::loss::Dataset;

#[derive(Debug, Clone)]
pub struct ScreenResult {
    /// Selected columns, strongest score first.
    pub indices: Vec<usize>,
    /// `|yᵀXⱼ|` for the selected columns, aligned with `indices`.
    pub scores: Vec<f64>,
}

pub fn screen(data: &Dataset, m: usize) -> Result<ScreenResult> {
    let p = data.p();
    if m == 0 || m > p {
        return Err(Error::invalid(format!("screen size m = {m} must be in 1..={p}")));
    }
    let mut scored: Vec<(usize, f64)> = (0..p)
        .map(|j| (j, data.y.dot(&data.x.column(j)).abs()))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0))
    });
    scored.truncate(m);
    Ok(ScreenResult {
        indices: scored.iter().map(|(j, _)| *j).collect(),
        scores: scored.iter().map(|(_, s)| *s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn picks_the_correlated_column() {
        // y orthogonal to all columns except index 3.
        let x = array![
            [1.0, 0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, -1.0, 0.0, 1.0],
        ];
        let y = array![1.0, 1.0, 1.0, 1.0];
        let data = Dataset::new(x, y).unwrap();
        let got = screen(&data, 1).unwrap();
        assert_eq!(got.indices, vec![3]);
    }

    #[test]
    fn ties_go_to_the_smaller_index() {
        let x = array![[1.0, 1.0, 2.0], [1.0, 1.0, 0.0]];
        let y = array![1.0, 1.0];
        let data = Dataset::new(x, y).unwrap();
        let got = screen(&data, 2).unwrap();
        assert_eq!(got.indices, vec![0, 1]);
    }

    #[test]
    fn m_equals_p_returns_everything() {
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64);
        let y = array![1.0, -1.0, 0.5];
        let data = Dataset::new(x, y).unwrap();
        assert_eq!(screen(&data, 4).unwrap().indices.len(), 4);
        assert!(screen(&data, 5).is_err());
        assert!(screen(&data, 0).is_err());
    }

    #[test]
    fn invariant_to_response_sign() {
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = array![1.0, -0.5, 2.0, 0.25, -1.5];
        let flipped = y.mapv(|v| -v);
        let a = screen(&Dataset::new(x.clone(), y).unwrap(), 3).unwrap();
        let b = screen(&Dataset::new(x, flipped).unwrap(), 3).unwrap();
        assert_eq!(a.indices, b.indices);
    }
}
