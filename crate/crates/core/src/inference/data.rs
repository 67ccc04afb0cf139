use nalgebra::DMatrix;

use super::FitError;

/// Rescales positive raw weights so they sum to their count.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>, FitError> {
    if let Some(bad) = raw.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(FitError::InvalidInput(format!(
            "weights must be positive and finite, got {bad}"
        )));
    }
    let total: f64 = raw.iter().sum();
    let n = raw.len() as f64;
    Ok(raw.iter().map(|w| n * w / total).collect())
}

/// Responses, design matrix and normalized weights for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    y: Vec<u8>,
    x: DMatrix<f64>,
    w_star: Vec<f64>,
}

impl WeightedDataset {
    /// Builds a dataset from a row-major design matrix; `raw_weights` are
    /// normalized to sum to `n`.
    pub fn new(y: Vec<u8>, x: DMatrix<f64>, raw_weights: &[f64]) -> Result<Self, FitError> {
        if x.nrows() != y.len() || raw_weights.len() != y.len() {
            return Err(FitError::InvalidInput(format!(
                "length mismatch: y {}, x rows {}, weights {}",
                y.len(),
                x.nrows(),
                raw_weights.len()
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(FitError::InvalidInput("responses must be 0 or 1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidInput("design matrix has non-finite entries".into()));
        }
        let w_star = normalize_weights(raw_weights)?;
        Ok(WeightedDataset { y, x, w_star })
    }

    /// Intercept plus a single covariate, the marginal model used throughout.
    pub fn marginal(x1: &[f64], y: &[u8], raw_weights: &[f64]) -> Result<Self, FitError> {
        let x = DMatrix::from_fn(x1.len(), 2, |i, j| if j == 0 { 1.0 } else { x1[i] });
        Self::new(y.to_vec(), x, raw_weights)
    }

    /// An empty dataset with `p` coefficients; the pseudo-posterior then
    /// reduces to the prior.
    pub fn empty(p: usize) -> Self {
        WeightedDataset {
            y: Vec::new(),
            x: DMatrix::zeros(0, p),
            w_star: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn weights(&self) -> &[f64] {
        &self.w_star
    }

    /// Same data with every weight multiplied by `c`. The weights no longer
    /// sum to `n`; only used to probe linearity of the objective.
    pub fn scaled_weights(&self, c: f64) -> Self {
        WeightedDataset {
            y: self.y.clone(),
            x: self.x.clone(),
            w_star: self.w_star.iter().map(|w| w * c).collect(),
        }
    }

    /// Same data with unit weights (the equal-weight analysis).
    pub fn unweighted(&self) -> Self {
        WeightedDataset {
            y: self.y.clone(),
            x: self.x.clone(),
            w_star: vec![1.0; self.y.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[2.0, 2.0, 4.0]).unwrap(), vec![0.75, 0.75, 1.5]);
        assert_eq!(normalize_weights(&[3.0; 5]).unwrap(), vec![1.0; 5]);
        assert!(normalize_weights(&[1.0, 0.0]).is_err());
        assert!(normalize_weights(&[1.0, -2.0]).is_err());
        assert!(normalize_weights(&[]).unwrap().is_empty());
    }

    #[test]
    fn normalization_is_scale_free() {
        let raw = [1.3, 7.2, 0.4, 2.2];
        let a = normalize_weights(&raw).unwrap();
        let b = normalize_weights(&raw.map(|w| w * 37.5)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(WeightedDataset::marginal(&[0.0, 1.0], &[1], &[1.0, 1.0]).is_err());
        assert!(WeightedDataset::marginal(&[0.0], &[2], &[1.0]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalized_weights_sum_to_n(raw in proptest::collection::vec(1e-3f64..1e3, 1..200)) {
            let w = normalize_weights(&raw).unwrap();
            let total: f64 = w.iter().sum();
            proptest::prop_assert!((total - raw.len() as f64).abs() < 1e-10);
        }
    }
}
