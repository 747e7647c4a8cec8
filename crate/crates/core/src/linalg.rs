//! Dense linear algebra for small systems: LU factorization with partial
//! pivoting, solves against multiple right-hand sides, and matrix powers.
//!
//! Chain analysis needs `(I - Q)^{-1} R` and `(I - Q)^{-1} 1`, always as
//! solves against a factorization, never as an explicit inverse. Transient
//! blocks at desk scale are at most a few thousand rows, so a dense
//! factorization is the right tool.

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// LU factorization `P·A = L·U` of a square matrix, partial (row) pivoting.
pub struct LuFactors<T> {
    n: usize,
    /// Combined storage: strict lower triangle holds L (unit diagonal
    /// implicit), upper triangle holds U.
    lu: Grid<T>,
    /// Row permutation: `perm[i]` is the original row in position `i`.
    perm: Vec<usize>,
}

impl<T: Scalar> LuFactors<T> {
    pub fn factor(a: &Grid<T>, context: &'static str) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            // Pivot: largest magnitude in column k at or below the diagonal.
            let mut pivot_row = k;
            let mut pivot_mag = lu[(k, k)].abs();
            for r in k + 1..n {
                let mag = lu[(r, k)].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = r;
                }
            }
            if pivot_mag == T::zero() {
                return Err(CoreError::Singular(context));
            }
            if pivot_row != k {
                perm.swap(k, pivot_row);
                for c in 0..n {
                    let tmp = lu[(k, c)];
                    lu[(k, c)] = lu[(pivot_row, c)];
                    lu[(pivot_row, c)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for r in k + 1..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                for c in k + 1..n {
                    let delta = factor * lu[(k, c)];
                    let v = lu[(r, c)] - delta;
                    lu[(r, c)] = v;
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }

    /// Solves `A x = b` in place of a copy of `b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        // Apply permutation, then forward- and back-substitute.
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for r in 1..self.n {
            let mut acc = x[r];
            for c in 0..r {
                acc = acc - self.lu[(r, c)] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..self.n).rev() {
            let mut acc = x[r];
            for c in r + 1..self.n {
                acc = acc - self.lu[(r, c)] * x[c];
            }
            x[r] = acc / self.lu[(r, r)];
        }
        x
    }

    /// Solves `A X = B` column by column; `B` given as a `n × k` grid.
    pub fn solve_matrix(&self, b: &Grid<T>) -> Grid<T> {
        assert_eq!(b.rows(), self.n);
        let k = b.cols();
        let mut out = Grid::fill(self.n, k, T::zero());
        let mut col = vec![T::zero(); self.n];
        for j in 0..k {
            for i in 0..self.n {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..self.n {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Dense matrix product.
pub fn mat_mul<T: Scalar>(a: &Grid<T>, b: &Grid<T>) -> Grid<T> {
    assert_eq!(a.cols(), b.rows());
    let (n, m, k) = (a.rows(), b.cols(), a.cols());
    let mut out = Grid::fill(n, m, T::zero());
    for i in 0..n {
        let out_row = out.row_mut(i);
        for p in 0..k {
            let aip = a[(i, p)];
            if aip == T::zero() {
                continue;
            }
            let b_row = b.row(p);
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

/// `a^k` by binary exponentiation; `a` square, `k >= 1`.
pub fn mat_pow<T: Scalar>(a: &Grid<T>, k: usize) -> Grid<T> {
    assert!(k >= 1);
    let mut base = a.clone();
    let mut acc: Option<Grid<T>> = None;
    let mut exp = k;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(m) => mat_mul(&m, &base),
            });
        }
        exp >>= 1;
        if exp > 0 {
            base = mat_mul(&base, &base);
        }
    }
    acc.unwrap()
}

/// `max_i sum_j |a_ij - b_ij|` — the induced infinity norm of the difference.
pub fn inf_norm_diff<T: Scalar>(a: &Grid<T>, b: &Grid<T>) -> T {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut worst = T::zero();
    for (ra, rb) in a.iter_rows().zip(b.iter_rows()) {
        let s = ra
            .iter()
            .zip(rb)
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs());
        worst = worst.max(s);
    }
    worst
}
