//! Small fixed-capacity vectors and matrices.
//!
//! Every quantity in this crate lives in at most four ambient dimensions
//! (a product of two planar factors), so points and velocities are stored
//! inline and are `Copy`. This keeps the per-substep kernels allocation free.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Largest ambient dimension supported.
pub const MAX_DIM: usize = 4;

/// A point or direction in `R^d`, `1 <= d <= 4`.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    data: [f64; MAX_DIM],
    dim: usize,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self {
            data: [0.0; MAX_DIM],
            dim,
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut v = Self::zeros(values.len());
        v.data[..values.len()].copy_from_slice(values);
        v
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_slice(&[x])
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self::from_slice(&[x, y])
    }

    /// Unit vector `e_axis` in `R^dim`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = Self::zeros(dim);
        v[axis] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.dim]
    }

    #[inline]
    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            s += self.data[i] * other.data[i];
        }
        s
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist(&self, other: &Vector) -> f64 {
        (*self - *other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Vector> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }

    /// Splits `(x, y)` into `x` (first `at` coordinates) and `y`.
    pub fn split(&self, at: usize) -> (Vector, Vector) {
        (
            Vector::from_slice(&self.data[..at]),
            Vector::from_slice(&self.data[at..self.dim]),
        )
    }

    /// Stacks two vectors into `(a, b)`.
    pub fn concat(a: &Vector, b: &Vector) -> Vector {
        let mut v = Vector::zeros(a.dim + b.dim);
        v.data[..a.dim].copy_from_slice(a.as_slice());
        v.data[a.dim..a.dim + b.dim].copy_from_slice(b.as_slice());
        v
    }

    /// `(a, 0)` with `a` in the leading block.
    pub fn embed_first(a: &Vector, other_dim: usize) -> Vector {
        Vector::concat(a, &Vector::zeros(other_dim))
    }

    /// `(0, b)` with `b` in the trailing block.
    pub fn embed_second(first_dim: usize, b: &Vector) -> Vector {
        Vector::concat(&Vector::zeros(first_dim), b)
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// Counter-clockwise rotation by 90 degrees (planar vectors only).
    pub fn perp(&self) -> Vector {
        debug_assert_eq!(self.dim, 2);
        Vector::xy(-self.data[1], self.data[0])
    }

    /// 2D cross product `self.x * other.y - self.y * other.x`.
    pub fn cross(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, 2);
        self.data[0] * other.data[1] - self.data[1] * other.data[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.as_slice().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim);
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.dim);
        &mut self.data[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    #[inline]
    fn add(mut self, rhs: Vector) -> Vector {
        self += rhs;
        self
    }
}

impl AddAssign for Vector {
    #[inline]
    fn add_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.data[i] += rhs.data[i];
        }
    }
}

impl Sub for Vector {
    type Output = Vector;
    #[inline]
    fn sub(mut self, rhs: Vector) -> Vector {
        self -= rhs;
        self
    }
}

impl SubAssign for Vector {
    #[inline]
    fn sub_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.data[i] -= rhs.data[i];
        }
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn mul(mut self, rhs: f64) -> Vector {
        for i in 0..self.dim {
            self.data[i] *= rhs;
        }
        self
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    #[inline]
    fn mul(self, rhs: Vector) -> Vector {
        rhs * self
    }
}

impl Neg for Vector {
    type Output = Vector;
    #[inline]
    fn neg(self) -> Vector {
        self * -1.0
    }
}

/// A `rows x cols` matrix with both sides at most [`MAX_DIM`].
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix {
    data: [[f64; MAX_DIM]; MAX_DIM],
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&rows) && (1..=MAX_DIM).contains(&cols));
        Self {
            data: [[0.0; MAX_DIM]; MAX_DIM],
            rows,
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i][i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix rows");
            m.data[i][..cols].copy_from_slice(r);
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vector]) -> Self {
        let rows = columns.first().map_or(0, |c| c.dim());
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            for i in 0..rows {
                m.data[i][j] = c[i];
            }
        }
        m
    }

    /// `I - 2 u u^T` for a unit vector `u`.
    pub fn householder(u: &Vector) -> Self {
        let n = u.dim();
        let mut m = Self::identity(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i][j] -= 2.0 * u[i] * u[j];
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i][j] = value;
    }

    pub fn column(&self, j: usize) -> Vector {
        let mut v = Vector::zeros(self.rows);
        for i in 0..self.rows {
            v[i] = self.data[i][j];
        }
        v
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vector) -> Vector {
        debug_assert_eq!(self.cols, v.dim());
        let mut out = Vector::zeros(self.rows);
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self.data[i][j] * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn mul_mat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut s = 0.0;
                for k in 0..self.cols {
                    s += self.data[i][k] * other.data[k][j];
                }
                out.data[i][j] = s;
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j][i] = self.data[i][j];
            }
        }
        out
    }

    /// Stacks `top` over `bottom` (equal column counts).
    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
        assert_eq!(top.cols, bottom.cols);
        let mut out = Matrix::zeros(top.rows + bottom.rows, top.cols);
        for i in 0..top.rows {
            out.data[i] = top.data[i];
        }
        for i in 0..bottom.rows {
            out.data[top.rows + i] = bottom.data[i];
        }
        out
    }

    /// Determinant by Laplace expansion; only used on matrices of size <= 4.
    pub fn determinant(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        fn det(m: &[[f64; MAX_DIM]; MAX_DIM], idx: &[usize], n: usize, row: usize) -> f64 {
            if n == 1 {
                return m[row][idx[0]];
            }
            let mut total = 0.0;
            let mut sign = 1.0;
            for k in 0..n {
                let mut rest = [0usize; MAX_DIM];
                let mut r = 0;
                for (c, &col) in idx.iter().enumerate().take(n) {
                    if c != k {
                        rest[r] = col;
                        r += 1;
                    }
                }
                total += sign * m[row][idx[k]] * det(m, &rest[..n - 1], n - 1, row + 1);
                sign = -sign;
            }
            total
        }
        let idx: Vec<usize> = (0..self.cols).collect();
        det(&self.data, &idx, self.rows, 0)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                m = m.max(self.data[i][j].abs());
            }
        }
        m
    }

    /// Operator norm bound via the Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                s += self.data[i][j] * self.data[i][j];
            }
        }
        s.sqrt()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| &self.data[i][..self.cols]).collect();
        f.debug_list().entries(rows).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_and_concat_are_inverse() {
        let v = Vector::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let (a, b) = v.split(2);
        assert_eq!(a, Vector::xy(1.0, 2.0));
        assert_eq!(Vector::concat(&a, &b), v);
    }

    #[test]
    fn householder_is_orthogonal_reflection() {
        let u = Vector::xy(3.0, 4.0).normalized().unwrap();
        let m = Matrix::householder(&u);
        let mmt = m.mul_mat(&m.transpose());
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((mmt.get(i, j) - expect).abs() < 1e-15);
            }
        }
        assert!((m.determinant() + 1.0).abs() < 1e-15);
        let r = m.mul_vec(&u);
        assert!((r + u).norm() < 1e-15);
    }

    #[test]
    fn determinant_of_4x4_permutation() {
        let m = Matrix::from_rows(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        assert_eq!(m.determinant(), 1.0);
    }
}
