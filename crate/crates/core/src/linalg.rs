//! Small linear-algebra layer shared by the mappings and the evaluators.

use nalgebra::DMatrix;

use crate::cues::FormMatrix;

/// A left-hand matrix for least squares: either dense reals or the sparse
/// binary form matrix.
pub trait DesignMatrix: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn is_sparse(&self) -> bool;
    /// Xᵀ diag(w) X
    fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64>;
    /// Xᵀ diag(w) R for a dense R with `nrows` rows.
    fn weighted_tr_mul(&self, w: &[f64], rhs: &DMatrix<f64>) -> DMatrix<f64>;
    /// X R
    fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64>;
    fn to_dense(&self) -> DMatrix<f64>;
}

impl DesignMatrix for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn is_sparse(&self) -> bool {
        false
    }

    fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.clone();
        for (mut row, &wi) in scaled.row_iter_mut().zip(w) {
            row *= wi;
        }
        let mut g = self.tr_mul(&scaled);
        symmetrize(&mut g);
        g
    }

    fn weighted_tr_mul(&self, w: &[f64], rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = rhs.clone();
        for (mut row, &wi) in scaled.row_iter_mut().zip(w) {
            row *= wi;
        }
        self.tr_mul(&scaled)
    }

    fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self * rhs
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

impl DesignMatrix for FormMatrix {
    fn nrows(&self) -> usize {
        FormMatrix::nrows(self)
    }

    fn ncols(&self) -> usize {
        FormMatrix::ncols(self)
    }

    fn is_sparse(&self) -> bool {
        true
    }

    fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let k = self.ncols();
        let mut g = DMatrix::zeros(k, k);
        for (row, &wi) in self.rows().iter().zip(w) {
            for &a in row {
                for &b in row {
                    g[(a as usize, b as usize)] += wi;
                }
            }
        }
        g
    }

    fn weighted_tr_mul(&self, w: &[f64], rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ncols(), rhs.ncols());
        for (i, (row, &wi)) in self.rows().iter().zip(w).enumerate() {
            for &a in row {
                for j in 0..rhs.ncols() {
                    out[(a as usize, j)] += wi * rhs[(i, j)];
                }
            }
        }
        out
    }

    fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), rhs.ncols());
        for (i, row) in self.rows().iter().enumerate() {
            for &a in row {
                for j in 0..rhs.ncols() {
                    out[(i, j)] += rhs[(a as usize, j)];
                }
            }
        }
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        FormMatrix::to_dense(self)
    }
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

/// Pearson correlation, or `None` when either vector has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Center and scale to unit norm; `None` for a constant vector.
pub fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    if ss == 0.0 {
        return None;
    }
    let s = ss.sqrt();
    Some(v.iter().map(|x| (x - m) / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::{build_form_matrix, CueInventory, OovPolicy};

    #[test]
    fn sparse_and_dense_agree() {
        let words = ["mato", "matto", "masto", "talo"];
        let inv = CueInventory::build(&words, 3).unwrap();
        let (c, _) = build_form_matrix(&words, &inv, OovPolicy::Strict).unwrap();
        let d = c.to_dense();
        let w = [1.0, 2.0, 0.5, 3.0];
        let r = DMatrix::from_fn(4, 2, |i, j| (i * 3 + j) as f64 - 2.5);
        assert_eq!(c.weighted_gram(&w), d.weighted_gram(&w));
        assert!((c.weighted_tr_mul(&w, &r) - d.weighted_tr_mul(&w, &r)).amax() < 1e-12);
        let f = DMatrix::from_fn(inv.len(), 3, |i, j| (i + j) as f64 * 0.1);
        assert!((c.mul_dense(&f) - &d * &f).amax() < 1e-12);
    }

    #[test]
    fn pearson_basics() {
        let v = [1.0, 2.0, 5.0, -1.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
    }
}
