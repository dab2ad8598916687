use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use super::MappingError;
use crate::linalg::DesignMatrix;

/// Direction of a mapping between the form and meaning spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    /// form → meaning
    Comprehension,
    /// meaning → form
    Production,
}

/// Type-based (endstate of learning) or frequency-informed estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Learning {
    Eol,
    Fil,
}

impl std::fmt::Display for Learning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Learning::Eol => "EOL",
            Learning::Fil => "FIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapping {
    pub weights: DMatrix<f64>,
    pub kind: MappingKind,
    pub learning: Learning,
    pub ridge: f64,
}

impl LinearMapping {
    /// Fit `x · B ≈ y`. Supplying row weights (token frequencies) makes
    /// this a frequency-informed mapping; without them every row counts once.
    pub fn fit<X, Y>(kind: MappingKind, x: &X, y: &Y, weights: Option<&[f64]>, ridge: f64) -> Result<Self, MappingError>
    where
        X: DesignMatrix + ?Sized,
        Y: DesignMatrix + ?Sized,
    {
        let weights_matrix = solve_linear(x, y, weights, ridge)?;
        Ok(LinearMapping {
            weights: weights_matrix,
            kind,
            learning: if weights.is_some() {
                Learning::Fil
            } else {
                Learning::Eol
            },
            ridge,
        })
    }

    pub fn input_dims(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dims(&self) -> usize {
        self.weights.ncols()
    }

    /// `rows · weights`
    pub fn apply<X: DesignMatrix + ?Sized>(&self, rows: &X) -> Result<DMatrix<f64>, MappingError> {
        if rows.ncols() != self.input_dims() {
            return Err(MappingError::Dimension {
                expected: self.input_dims(),
                found: rows.ncols(),
            });
        }
        Ok(rows.mul_dense(&self.weights))
    }

    pub fn apply_vector(&self, v: &[f64]) -> Result<Vec<f64>, MappingError> {
        if v.len() != self.input_dims() {
            return Err(MappingError::Dimension {
                expected: self.input_dims(),
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.output_dims()];
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                for (o, w) in out.iter_mut().zip(self.weights.row(i).iter()) {
                    *o += x * w;
                }
            }
        }
        Ok(out)
    }

    /// Prediction for a binary form given by its active columns.
    pub fn apply_cues(&self, columns: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dims()];
        for &c in columns {
            for (o, w) in out.iter_mut().zip(self.weights.row(c as usize).iter()) {
                *o += w;
            }
        }
        out
    }
}

/// Minimizer of Σᵢ wᵢ‖xᵢB − yᵢ‖² + ridge·‖B‖²_F.
///
/// Solves the weighted normal equations (XᵀWX + ridge·I) B = XᵀWY with a
/// Cholesky factorization. W is the identity when `weights` is `None`.
pub fn solve_linear<X, Y>(x: &X, y: &Y, weights: Option<&[f64]>, ridge: f64) -> Result<DMatrix<f64>, MappingError>
where
    X: DesignMatrix + ?Sized,
    Y: DesignMatrix + ?Sized,
{
    let n = x.nrows();
    if y.nrows() != n {
        return Err(MappingError::RowMismatch {
            left: n,
            right: y.nrows(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(MappingError::BadRidge(ridge));
    }
    let ones;
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(MappingError::RowMismatch {
                    left: n,
                    right: w.len(),
                });
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(MappingError::BadWeight(*bad));
            }
            w
        }
        None => {
            ones = vec![1.0; n];
            &ones[..]
        }
    };

    let mut gram = x.weighted_gram(w);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let cross = if x.is_sparse() {
        x.weighted_tr_mul(w, &y.to_dense())
    } else {
        y.weighted_tr_mul(w, &x.to_dense()).transpose()
    };

    let scale = (0..gram.nrows()).map(|i| gram[(i, i)].abs()).fold(0.0, f64::max);
    let chol = Cholesky::new(gram).ok_or(MappingError::Singular)?;
    // Cholesky succeeds on some numerically singular matrices; reject pivots
    // that are negligible relative to the largest diagonal entry.
    let l = chol.l_dirty();
    let tol = scale * f64::EPSILON * l.nrows().max(1) as f64;
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= tol) {
        return Err(MappingError::Singular);
    }
    let b = chol.solve(&cross);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(MappingError::NonFinite);
    }
    Ok(b)
}
