use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// ILU(0) factors stored on the pattern of the factored matrix: strict
/// lower part holds `L` (unit diagonal implied), the rest holds `U`.
/// With an ordering, the factored matrix is the symmetrically permuted one.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
    order: Option<Vec<usize>>,
}

impl Ilu0 {
    /// Factor `A` in reverse Cuthill-McKee order, with the diagonal shift fallback.
    pub fn factor_reordered(a: &CsrMatrix) -> Result<Self> {
        let order = a.reverse_cuthill_mckee();
        let mut ilu = Self::factor_with_shift(&a.permuted(&order))?;
        ilu.order = Some(order);
        Ok(ilu)
    }

    /// Incomplete factorization without fill; fails on a zero pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let row_ptr = lu.row_ptr().to_vec();
        let cols = lu.col_idx().to_vec();
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            diag.push(lu.position(i, i).ok_or(Error::ZeroPivot { row: i })?);
        }
        // Column position lookup for the current row.
        let mut where_ = vec![usize::MAX; a.ncols()];
        let vals = lu.values_mut();
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                where_[cols[k]] = k;
            }
            for kk in row_ptr[i]..row_ptr[i + 1] {
                let k = cols[kk];
                if k >= i {
                    break;
                }
                let pivot = vals[diag[k]];
                let lik = vals[kk] / pivot;
                vals[kk] = lik;
                for jj in diag[k] + 1..row_ptr[k + 1] {
                    let w = where_[cols[jj]];
                    if w != usize::MAX {
                        vals[w] -= lik * vals[jj];
                    }
                }
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                where_[cols[k]] = usize::MAX;
            }
            let d = vals[diag[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
        }
        Ok(Ilu0 { lu, diag, order: None })
    }

    /// Factor, retrying once with a relative diagonal shift on a zero pivot.
    pub fn factor_with_shift(a: &CsrMatrix) -> Result<Self> {
        match Self::factor(a) {
            Err(Error::ZeroPivot { .. }) => {
                let shift = 1e-12 * a.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
                let mut b = a.clone();
                for i in 0..b.nrows() {
                    if let Some(k) = b.position(i, i) {
                        let d = b.values()[k];
                        b.values_mut()[k] = d + if d < 0.0 { -shift } else { shift };
                    }
                }
                Self::factor(&b)
            }
            other => other,
        }
    }

    /// Solve `L U x = b`.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.apply_in_place(&mut x);
        x
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        match &self.order {
            None => self.solve_factored(x),
            Some(order) => {
                let mut y: Vec<f64> = order.iter().map(|&o| x[o]).collect();
                self.solve_factored(&mut y);
                for (&o, v) in order.iter().zip(y) {
                    x[o] = v;
                }
            }
        }
    }

    fn solve_factored(&self, x: &mut [f64]) {
        let rp = self.lu.row_ptr();
        let ci = self.lu.col_idx();
        let v = self.lu.values();
        let n = x.len();
        for i in 0..n {
            let mut s = x[i];
            for k in rp[i]..self.diag[i] {
                s -= v[k] * x[ci[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag[i] + 1..rp[i + 1] {
                s -= v[k] * x[ci[k]];
            }
            x[i] = s / v[self.diag[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::lu::DenseLu;

    #[test]
    fn reordered_factor_is_exact_on_a_shuffled_band() {
        let n = 29;
        let label = |i: usize| i * 5 % n;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((label(i), label(i), 3.0 + i as f64 * 0.1));
            if i > 0 {
                t.push((label(i), label(i - 1), -1.0));
                t.push((label(i - 1), label(i), -1.3));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = Ilu0::factor_reordered(&a).unwrap().apply(&b);
        let r = a.matvec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        // Natural order creates fill, so plain ILU(0) is only approximate here.
        let y = Ilu0::factor(&a).unwrap().apply(&b);
        assert!(a.matvec(&y).iter().zip(&b).any(|(u, v)| (u - v).abs() > 1e-6));
    }

    #[test]
    fn diagonal_is_exact() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, -4.0), (2, 2, 0.5)]);
        let f = Ilu0::factor(&a).unwrap();
        assert_eq!(f.apply(&[2.0, 4.0, 1.0]), vec![1.0, -1.0, 2.0]);
    }

    #[test]
    fn dense_pattern_equals_lu() {
        let d = vec![
            vec![4.0, 1.0, 2.0, 0.5],
            vec![1.0, 5.0, 1.0, 1.0],
            vec![2.0, -1.0, 6.0, 1.5],
            vec![0.3, 1.0, 1.0, 3.0],
        ];
        let a = CsrMatrix::from_dense(&d);
        let x = Ilu0::factor(&a).unwrap().apply(&[1.0, 2.0, 3.0, 4.0]);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((ri - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn tridiagonal_matches_dense_lu() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0 + i as f64 * 0.1));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.3));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = Ilu0::factor(&a).unwrap().apply(&b);
        let y = DenseLu::factor(&a.to_dense()).unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_names_row_and_shift_recovers() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(Ilu0::factor(&a), Err(Error::ZeroPivot { row: 1 })));
        assert!(Ilu0::factor_with_shift(&a).is_ok());
        let missing = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(matches!(Ilu0::factor(&missing), Err(Error::ZeroPivot { row: 1 })));
    }
}
