//! Small dense complex linear algebra.
//!
//! Vectors are plain slices of [`Complex`]. Row vectors (`1×n` channels) and
//! column vectors share the representation; [`dot`] is the bilinear product
//! `a·b` (no conjugation) and [`inner`] is `aᴴb`.

use num_complex::Complex;

use crate::real::Real;

pub type Cx<T> = Complex<T>;

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

/// `Σ a_i b_i`
pub fn dot<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x * y)
}

/// `Σ conj(a_i) b_i`
pub fn inner<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr<T: Real>(a: &[Cx<T>]) -> T {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm<T: Real>(a: &[Cx<T>]) -> T {
    norm_sqr(a).sqrt()
}

pub fn conj<T: Real>(a: &[Cx<T>]) -> Vec<Cx<T>> {
    a.iter().map(|x| x.conj()).collect()
}

pub fn scaled<T: Real>(a: &[Cx<T>], s: Cx<T>) -> Vec<Cx<T>> {
    a.iter().map(|x| x * s).collect()
}

pub fn scaled_real<T: Real>(a: &[Cx<T>], s: T) -> Vec<Cx<T>> {
    a.iter().map(|x| x.scale(s)).collect()
}

pub fn add<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Vec<Cx<T>> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Vec<Cx<T>> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Elementwise (Hadamard) product.
pub fn hadamard<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Vec<Cx<T>> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![czero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Cx<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Cx<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(x.len(), self.cols, "matrix-vector shape");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `x A` for a row vector `x`.
    pub fn vec_mul(&self, x: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(x.len(), self.rows, "vector-matrix shape");
        let mut out = vec![czero(); self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += xr * a;
            }
        }
        out
    }

    pub fn mul(&self, other: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.cols, other.rows, "matrix-matrix shape");
        CMatrix::from_fn(self.rows, other.cols, |r, c| {
            (0..self.cols).fold(czero(), |acc, k| acc + self[(r, k)] * other[(k, c)])
        })
    }

    /// `A += alpha · a bᴴ` with `a`, `b` column vectors.
    pub fn add_outer(&mut self, alpha: T, a: &[Cx<T>], b: &[Cx<T>]) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for (r, ar) in a.iter().enumerate() {
            for (c, bc) in b.iter().enumerate() {
                self.data[r * self.cols + c] += (ar * bc.conj()).scale(alpha);
            }
        }
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }

    /// Lower Cholesky factor `L` with `A = L Lᴴ`, or `None` if the matrix is
    /// not numerically Hermitian positive definite.
    pub fn cholesky(&self) -> Option<CMatrix<T>> {
        assert_eq!(self.rows, self.cols, "cholesky of non-square matrix");
        let n = self.rows;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex::new(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s.unscale(djj);
            }
        }
        Some(l)
    }

    /// Inverse of a Hermitian positive-definite matrix via Cholesky.
    pub fn hpd_inverse(&self) -> Option<CMatrix<T>> {
        let l = self.cholesky()?;
        let n = self.rows;
        let mut inv = CMatrix::zeros(n, n);
        let mut col = vec![czero(); n];
        for c in 0..n {
            // forward: L y = e_c
            for i in 0..n {
                let mut s = if i == c { Complex::new(T::one(), T::zero()) } else { czero() };
                for k in 0..i {
                    s -= l[(i, k)] * col[k];
                }
                col[i] = s.unscale(l[(i, i)].re);
            }
            // backward: Lᴴ x = y
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s -= l[(k, i)].conj() * col[k];
                }
                col[i] = s.unscale(l[(i, i)].re);
            }
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        Some(inv)
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Cx<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Cx<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hpd() -> CMatrix<f64> {
        let a = [cx(1.0, 0.5), cx(-0.3, 0.2), cx(0.7, -1.1)];
        let b = [cx(0.2, -0.4), cx(1.5, 0.0), cx(-0.6, 0.9)];
        let mut m = CMatrix::identity(3);
        m.add_outer(2.0, &a, &a);
        m.add_outer(0.5, &b, &b);
        m
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = sample_hpd();
        let inv = m.hpd_inverse().unwrap();
        let prod = m.mul(&inv);
        let eye = CMatrix::identity(3);
        for r in 0..3 {
            for c in 0..3 {
                assert!((prod[(r, c)] - eye[(r, c)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = CMatrix::<f64>::identity(2);
        m[(1, 1)] = cx(-1.0, 0.0);
        assert!(m.cholesky().is_none());
    }

    #[test]
    fn row_and_column_products_agree_with_definition() {
        let m = CMatrix::from_rows(2, 3, (0..6).map(|k| cx(k as f64, 1.0 - k as f64)).collect());
        let x = [cx(1.0, 1.0), cx(0.0, -2.0), cx(0.5, 0.0)];
        let y = m.mul_vec(&x);
        assert!((y[1] - (m[(1, 0)] * x[0] + m[(1, 1)] * x[1] + m[(1, 2)] * x[2])).norm() < 1e-14);
        let r = [cx(2.0, 0.0), cx(0.0, 1.0)];
        let z = m.vec_mul(&r);
        assert!((z[2] - (r[0] * m[(0, 2)] + r[1] * m[(1, 2)])).norm() < 1e-14);
    }
}
