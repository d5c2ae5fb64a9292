//! Dense real matrices with the order-theoretic predicates used throughout the
//! crate: elementwise nonnegativity, the Metzler property, M-matrix based
//! Hurwitz/Schur tests for the structured cases, block partitioning and the
//! matrix exponential.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default tolerance for strict/sign inequalities on computed quantities.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Metzler: off-diagonal entry ({row},{col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },
    #[error("matrix is not nonnegative: entry ({row},{col}) = {value}")]
    NotNonnegative { row: usize, col: usize, value: f64 },
    #[error("invalid partition: split index {p} must satisfy 1 <= p < {n}")]
    PartitionOutOfRange { n: usize, p: usize },
    #[error("numeric range exceeded: {0}")]
    NumericRange(String),
    #[error("interval bounds out of order at ({row},{col}): lower {lower} > upper {upper}")]
    IntervalOrder {
        row: usize,
        col: usize,
        lower: f64,
        upper: f64,
    },
}

pub type Result<T> = std::result::Result<T, MatError>;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(MatError::Dimension(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal, nonzero length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Mat> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if nrows == 0 || ncols == 0 {
            return Err(MatError::Dimension("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(MatError::Dimension(format!(
                    "row {} has {} entries, expected {ncols}",
                    i + 1,
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    pub fn from_diag(diag: &[f64]) -> Mat {
        let mut m = Mat::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn column(v: &[f64]) -> Mat {
        Mat::from_vec(v.len(), 1, v.to_vec()).expect("column vector must be nonempty")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(MatError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(MatError::Dimension(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self * v` accumulated into `out` (`out += self * v`); no dimension checks.
    pub(crate) fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn try_add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != rhs.shape() {
            return Err(MatError::Dimension(format!(
                "shapes {}x{} and {}x{} differ",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self <= other + tol`; first offending entry on failure.
    pub fn first_exceeding(&self, other: &Mat, tol: f64) -> Option<(usize, usize)> {
        debug_assert_eq!(self.shape(), other.shape());
        self.entries()
            .find(|&(i, j, v)| v > other[(i, j)] + tol)
            .map(|(i, j, _)| (i, j))
    }

    pub fn le(&self, other: &Mat, tol: f64) -> bool {
        self.shape() == other.shape() && self.first_exceeding(other, tol).is_none()
    }

    /// Iterator over `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(k, &v)| (k / cols, k % cols, v))
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            out.data[i * cols..(i + 1) * cols].copy_from_slice(
                &self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + cols],
            );
        }
        out
    }

    fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    /// Vertical concatenation.
    pub fn vstack(top: &Mat, bottom: &Mat) -> Result<Mat> {
        if top.cols != bottom.cols {
            return Err(MatError::Dimension("vstack column counts differ".into()));
        }
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Mat::from_vec(top.rows + bottom.rows, top.cols, data)
    }

    /// Horizontal concatenation.
    pub fn hstack(left: &Mat, right: &Mat) -> Result<Mat> {
        if left.rows != right.rows {
            return Err(MatError::Dimension("hstack row counts differ".into()));
        }
        let mut out = Mat::zeros(left.rows, left.cols + right.cols);
        out.set_block(0, 0, left);
        out.set_block(0, left.cols, right);
        Ok(out)
    }

    pub fn determinant(&self) -> Result<f64> {
        require_square(self)?;
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax == 0.0 {
                return Ok(0.0);
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                det = -det;
            }
            let d = a[k * n + k];
            det *= d;
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                if f != 0.0 {
                    for j in k..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(det)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{:?}", self.to_rows())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i},{j}) out of bounds"
        );
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i},{j}) out of bounds"
        );
        &mut self.data[i * self.cols + j]
    }
}

// Operator forms panic on shape mismatch; use the `try_*` methods on untrusted input.
impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.try_add(rhs).expect("matrix addition")
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.try_sub(rhs).expect("matrix subtraction")
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("matrix multiplication")
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Mat::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Lower/upper elementwise bounds on an uncertain matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMat {
    lower: Mat,
    upper: Mat,
}

impl IntervalMat {
    pub fn new(lower: Mat, upper: Mat) -> Result<IntervalMat> {
        if lower.shape() != upper.shape() {
            return Err(MatError::Dimension(format!(
                "interval bounds {}x{} and {}x{} differ in shape",
                lower.rows, lower.cols, upper.rows, upper.cols
            )));
        }
        if let Some((row, col)) = lower.first_exceeding(&upper, 0.0) {
            return Err(MatError::IntervalOrder {
                row,
                col,
                lower: lower[(row, col)],
                upper: upper[(row, col)],
            });
        }
        Ok(IntervalMat { lower, upper })
    }

    pub fn lower(&self) -> &Mat {
        &self.lower
    }

    pub fn upper(&self) -> &Mat {
        &self.upper
    }

    pub fn contains(&self, m: &Mat, tol: f64) -> bool {
        self.lower.le(m, tol) && m.le(&self.upper, tol)
    }
}

/// The four blocks of an `n x n` matrix split at index `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedBlocks {
    pub a11: Mat,
    pub a12: Mat,
    pub a21: Mat,
    pub a22: Mat,
}

impl PartitionedBlocks {
    pub fn split_index(&self) -> usize {
        self.a11.rows()
    }

    pub fn assemble(&self) -> Mat {
        let top = Mat::hstack(&self.a11, &self.a12).expect("consistent blocks");
        let bottom = Mat::hstack(&self.a21, &self.a22).expect("consistent blocks");
        Mat::vstack(&top, &bottom).expect("consistent blocks")
    }
}

pub fn partition(m: &Mat, p: usize) -> Result<PartitionedBlocks> {
    require_square(m)?;
    let n = m.rows();
    if p < 1 || p >= n {
        return Err(MatError::PartitionOutOfRange { n, p });
    }
    let q = n - p;
    Ok(PartitionedBlocks {
        a11: m.submatrix(0, 0, p, p),
        a12: m.submatrix(0, p, p, q),
        a21: m.submatrix(p, 0, q, p),
        a22: m.submatrix(p, p, q, q),
    })
}

fn require_square(m: &Mat) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(MatError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        })
    }
}

pub fn is_nonneg(m: &Mat, tol: f64) -> bool {
    first_negative(m, tol).is_none()
}

/// First entry below `-tol`.
pub fn first_negative(m: &Mat, tol: f64) -> Option<(usize, usize, f64)> {
    m.entries().find(|&(_, _, v)| v < -tol)
}

pub fn is_metzler(m: &Mat, tol: f64) -> Result<bool> {
    Ok(first_non_metzler(m, tol)?.is_none())
}

/// First off-diagonal entry below `-tol`.
pub fn first_non_metzler(m: &Mat, tol: f64) -> Result<Option<(usize, usize, f64)>> {
    require_square(m)?;
    Ok(m.entries().find(|&(i, j, v)| i != j && v < -tol))
}

/// Leading principal minors `det(m[..k, ..k])` for `k = 1..=n`.
pub fn leading_principal_minors(m: &Mat) -> Result<Vec<f64>> {
    require_square(m)?;
    (1..=m.rows())
        .map(|k| m.submatrix(0, 0, k, k).determinant())
        .collect()
}

/// Hurwitz test for Metzler matrices: `-m` must be a nonsingular M-matrix.
pub fn metzler_is_hurwitz(m: &Mat) -> Result<bool> {
    metzler_is_hurwitz_tol(m, DEFAULT_TOL)
}

pub fn metzler_is_hurwitz_tol(m: &Mat, tol: f64) -> Result<bool> {
    if let Some((row, col, value)) = first_non_metzler(m, tol)? {
        return Err(MatError::NotMetzler { row, col, value });
    }
    Ok(leading_principal_minors(&-m)?.iter().all(|&d| d > tol))
}

/// Schur test for nonnegative matrices: `I - m` must be a nonsingular M-matrix.
pub fn nonneg_is_schur(m: &Mat) -> Result<bool> {
    nonneg_is_schur_tol(m, DEFAULT_TOL)
}

pub fn nonneg_is_schur_tol(m: &Mat, tol: f64) -> Result<bool> {
    require_square(m)?;
    if let Some((row, col, value)) = first_negative(m, tol) {
        return Err(MatError::NotNonnegative { row, col, value });
    }
    let shifted = &Mat::identity(m.rows()) - m;
    Ok(leading_principal_minors(&shifted)?.iter().all(|&d| d > tol))
}

/// `exp(m t)` by scaling and squaring around a truncated Taylor core.
///
/// Metzler inputs are shifted to a nonnegative matrix first, so every
/// intermediate is a sum of nonnegative terms and the result is entrywise
/// nonnegative without cancellation.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    require_square(m)?;
    if !t.is_finite() || !m.is_finite() {
        return Err(MatError::NumericRange("non-finite input to expm".into()));
    }
    let n = m.rows();
    let mt = m.scale(t);
    if mt.max_abs() == 0.0 {
        return Ok(Mat::identity(n));
    }
    if is_metzler(&mt, 0.0)? {
        let shift = (0..n).map(|i| -mt[(i, i)]).fold(0.0, f64::max);
        let mut b = mt.clone();
        for i in 0..n {
            b[(i, i)] += shift;
        }
        let e = taylor_scaled(&b)?.scale((-shift).exp());
        if e.is_finite() {
            return Ok(e);
        }
    }
    let e = taylor_scaled(&mt)?;
    if e.is_finite() {
        Ok(e)
    } else {
        Err(MatError::NumericRange(format!(
            "exp overflows for ||m t||_1 = {:e}",
            mt.norm1()
        )))
    }
}

fn taylor_scaled(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    let norm = a.norm1();
    if norm > 1e4 {
        // e^{1e4} is far outside f64; only pure decay could survive and that is
        // handled by the shifted path.
        return Err(MatError::NumericRange(format!(
            "||m t||_1 = {norm:e} exceeds the supported range"
        )));
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(2f64.powi(-squarings));
    let mut result = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..=40 {
        term = (&term * &scaled).scale(1.0 / k as f64);
        result = &result + &term;
        if term.max_abs() <= f64::EPSILON * 1e-3 * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
        if !result.is_finite() {
            break;
        }
    }
    Ok(result)
}
