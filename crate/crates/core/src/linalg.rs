//! Dense arbitrary-precision linear algebra.
//!
//! Just enough machinery for the small, brutally ill-conditioned systems
//! that appear here: symmetric positive-definite factorization with
//! iterative refinement for Gram systems, and a pivoted LU solve used as a
//! generic reference route. Matrices are tiny (N ≤ a few dozen), so
//! everything is straightforward O(N³) over [`rug::Float`].

use rug::Float;

use crate::error::{Error, Result};
use crate::precision::{to_decimal_string, Prec};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Float>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize, prec: Prec) -> Self {
        Self {
            rows,
            cols,
            data: vec![prec.zero(); rows * cols],
        }
    }

    pub fn identity(n: usize, prec: Prec) -> Self {
        let mut m = Self::zeros(n, n, prec);
        for i in 0..n {
            *m.at_mut(i, i) = prec.one();
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        prec: Prec,
        mut f: impl FnMut(usize, usize) -> Float,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(Float::with_val(prec.bits(), f(i, j)));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &Float {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Float {
        &mut self.data[i * self.cols + j]
    }

    /// Re-rounds every entry to `prec` bits.
    pub fn to_prec(&self, prec: Prec) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|x| Float::with_val(prec.bits(), x))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self, prec: Prec) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, other.cols, prec);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = prec.zero();
                for k in 0..self.cols {
                    acc += Float::with_val(prec.bits(), self.at(i, k) * other.at(k, j));
                }
                *out.at_mut(i, j) = acc;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self, prec: Prec) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, prec, |i, j| {
            Float::with_val(prec.bits(), self.at(i, j) - other.at(i, j))
        })
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> Float {
        let mut best = Float::with_val(self.data.first().map_or(53, Float::prec), 0);
        for x in &self.data {
            let a = Float::with_val(x.prec(), x.abs_ref());
            if a > best {
                best = a;
            }
        }
        best
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix, prec: Prec) -> Result<Matrix> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Matrix::zeros(n, n, prec);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = Float::with_val(prec.bits(), a.at(i, j));
            for k in 0..j {
                sum -= Float::with_val(prec.bits(), l.at(i, k) * l.at(j, k));
            }
            if i == j {
                if sum <= 0f64 {
                    return Err(Error::NotPositiveDefinite {
                        row: i + 1,
                        pivot: to_decimal_string(&sum),
                    });
                }
                *l.at_mut(i, j) = sum.sqrt();
            } else {
                let div = sum / l.at(j, j);
                *l.at_mut(i, j) = div;
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix, prec: Prec) -> Matrix {
    let n = l.rows();
    let m = b.cols();
    let mut x = b.to_prec(prec);
    // Forward: L Y = B.
    for col in 0..m {
        for i in 0..n {
            let mut sum = Float::with_val(prec.bits(), x.at(i, col));
            for k in 0..i {
                sum -= Float::with_val(prec.bits(), l.at(i, k) * x.at(k, col));
            }
            *x.at_mut(i, col) = sum / l.at(i, i);
        }
        // Backward: Lᵀ X = Y.
        for i in (0..n).rev() {
            let mut sum = Float::with_val(prec.bits(), x.at(i, col));
            for k in i + 1..n {
                sum -= Float::with_val(prec.bits(), l.at(k, i) * x.at(k, col));
            }
            *x.at_mut(i, col) = sum / l.at(i, i);
        }
    }
    x
}

/// Solves `A X = B` for SPD `A` with iterative refinement at `prec`,
/// stopping once the residual `max|A X - B|` falls below `target` (or stops
/// improving). Returns the solution and the achieved residual.
pub fn solve_spd_refined(
    a: &Matrix,
    b: &Matrix,
    prec: Prec,
    target: &Float,
    max_iter: usize,
) -> Result<(Matrix, Float)> {
    let l = cholesky(a, prec)?;
    let mut x = cholesky_solve(&l, b, prec);
    let mut residual = residual_max(a, &x, b, prec);
    for _ in 0..max_iter {
        if residual <= *target {
            break;
        }
        let r = a.mul(&x, prec).sub(b, prec);
        let dx = cholesky_solve(&l, &r, prec);
        let mut improved = x.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                *improved.at_mut(i, j) =
                    Float::with_val(prec.bits(), improved.at(i, j) - dx.at(i, j));
            }
        }
        let new_residual = residual_max(a, &improved, b, prec);
        if new_residual >= residual {
            break;
        }
        x = improved;
        residual = new_residual;
    }
    Ok((x, residual))
}

fn residual_max(a: &Matrix, x: &Matrix, b: &Matrix, prec: Prec) -> Float {
    a.mul(x, prec).sub(b, prec).max_abs()
}

/// Generic dense solve via LU with partial pivoting. Kept separate from the
/// structured solvers so it can serve as an independent reference route.
pub fn lu_solve(a: &Matrix, b: &Matrix, prec: Prec) -> Result<Matrix> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut lu = a.to_prec(prec);
    let mut x = b.to_prec(prec);
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // Pivot on the largest magnitude in column k.
        let mut pivot_row = k;
        let mut pivot_mag = Float::with_val(prec.bits(), lu.at(k, k).abs_ref());
        for i in k + 1..n {
            let mag = Float::with_val(prec.bits(), lu.at(i, k).abs_ref());
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = i;
            }
        }
        if pivot_mag.is_zero() {
            return Err(Error::IllConditioned {
                achieved: "singular pivot".into(),
                target: "nonzero".into(),
                required_bits: prec.bits() * 2,
            });
        }
        if pivot_row != k {
            for j in 0..n {
                let tmp = lu.at(k, j).clone();
                *lu.at_mut(k, j) = lu.at(pivot_row, j).clone();
                *lu.at_mut(pivot_row, j) = tmp;
            }
            perm.swap(k, pivot_row);
            for j in 0..x.cols() {
                let tmp = x.at(k, j).clone();
                *x.at_mut(k, j) = x.at(pivot_row, j).clone();
                *x.at_mut(pivot_row, j) = tmp;
            }
        }
        for i in k + 1..n {
            let factor = Float::with_val(prec.bits(), lu.at(i, k) / lu.at(k, k));
            for j in k + 1..n {
                let delta = Float::with_val(prec.bits(), &factor * lu.at(k, j));
                *lu.at_mut(i, j) = Float::with_val(prec.bits(), lu.at(i, j) - delta);
            }
            *lu.at_mut(i, k) = factor;
            for j in 0..x.cols() {
                let delta = Float::with_val(prec.bits(), lu.at(i, k) * x.at(k, j));
                *x.at_mut(i, j) = Float::with_val(prec.bits(), x.at(i, j) - delta);
            }
        }
    }
    // Back substitution.
    for col in 0..x.cols() {
        for i in (0..n).rev() {
            let mut sum = Float::with_val(prec.bits(), x.at(i, col));
            for k in i + 1..n {
                sum -= Float::with_val(prec.bits(), lu.at(i, k) * x.at(k, col));
            }
            *x.at_mut(i, col) = sum / lu.at(i, i);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Prec {
        Prec::new(128)
    }

    #[test]
    fn cholesky_solves_small_spd() {
        // A = [[4,2],[2,3]], b = (2, 5) → x = (-1/2, 2).
        let a = Matrix::from_fn(2, 2, p(), |i, j| {
            p().from_f64([[4.0, 2.0], [2.0, 3.0]][i][j])
        });
        let b = Matrix::from_fn(2, 1, p(), |i, _| p().from_f64([2.0, 5.0][i]));
        let (x, res) = solve_spd_refined(&a, &b, p(), &p().eps(), 4).unwrap();
        assert!((Float::with_val(128, x.at(0, 0) + 0.5)).abs() < 1e-30);
        assert!((Float::with_val(128, x.at(1, 0) - 2.0)).abs() < 1e-30);
        assert!(res < 1e-30);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_fn(2, 2, p(), |i, j| {
            p().from_f64([[1.0, 2.0], [2.0, 1.0]][i][j])
        });
        assert!(matches!(
            cholesky(&a, p()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn lu_matches_cholesky_on_spd() {
        let n = 5;
        // Hilbert-like SPD matrix.
        let a = Matrix::from_fn(n, n, p(), |i, j| {
            p().one() / p().from_usize(i + j + 1)
        });
        let b = Matrix::from_fn(n, 1, p(), |i, _| p().from_usize(i + 1));
        let (x1, _) = solve_spd_refined(&a, &b, p(), &p().eps(), 8).unwrap();
        let x2 = lu_solve(&a, &b, p()).unwrap();
        let diff = x1.sub(&x2, p()).max_abs();
        assert!(diff < 1e-20, "LU and Cholesky disagree: {diff}");
    }
}
