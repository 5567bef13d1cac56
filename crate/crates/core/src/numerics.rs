//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are row-major and immutable once built. Every constructor that
//! accepts external data rejects NaN and infinite components, so downstream
//! code can assume finite entries.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex amplitude type.
pub type C64 = Complex64;

/// Default tolerance for unitarity and normalization checks.
pub const DEFAULT_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{i phase}`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

fn all_finite(values: &[C64]) -> bool {
    values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// JSON layout: `{"rows": r, "cols": c, "data": [[re, im], ...]}` in row-major order.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        let data = repr.data.into_iter().map(|[re, im]| c(re, im)).collect();
        ComplexMatrix::new(repr.rows, repr.cols, data)
    }
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data.into_iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::LengthMismatch {
                expected: n_cols,
                found: bad.len(),
            });
        }
        Self::new(n_rows, n_cols, rows.into_iter().flatten().collect())
    }

    /// Builds a matrix from an entry generator. The generator must produce finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        debug_assert!(all_finite(&data));
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| C64::new(0.0, 0.0))
    }

    pub fn diagonal(entries: &[C64]) -> Result<Self> {
        if !all_finite(entries) {
            return Err(Error::NonFinite("diagonal"));
        }
        let n = entries.len();
        Ok(Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { C64::new(0.0, 0.0) }))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut data = vec![C64::new(0.0, 0.0); self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let out = &mut data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch {
                op: "mul_vec",
                left: (self.rows, self.cols),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        ComplexMatrix::from_fn(rows, cols, |i, j| {
            self.get(i / other.rows, j / other.cols) * other.get(i % other.rows, j % other.cols)
        })
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&self, factor: C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Entry-wise max modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "max_abs_diff",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// `‖M†M − I‖_max`.
    pub fn unitarity_deviation(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let gram = self.adjoint().matmul(self)?;
        gram.max_abs_diff(&ComplexMatrix::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: f64) -> Result<bool> {
        Ok(self.unitarity_deviation()? <= tol)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && self
                .max_abs_diff(&self.adjoint())
                .map(|d| d <= tol)
                .unwrap_or(false)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:>+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Amplitude vector with one label per basis state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    labels: Vec<String>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>, labels: Vec<String>) -> Result<Self> {
        if amplitudes.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: amplitudes.len(),
                found: labels.len(),
            });
        }
        if !all_finite(&amplitudes) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self { amplitudes, labels })
    }

    /// Computational basis vector `|labels[index]⟩`.
    pub fn basis<S: AsRef<str>>(labels: &[S], index: usize) -> Result<Self> {
        if index >= labels.len() {
            return Err(Error::ModeOutOfRange {
                mode: index,
                n_modes: labels.len(),
            });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); labels.len()];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            labels: labels.iter().map(|s| s.as_ref().to_owned()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn amplitude_of(&self, label: &str) -> Option<C64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.amplitudes[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amplitudes: self.amplitudes.iter().map(|z| z / norm).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Kronecker product; labels concatenate pairwise.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        let mut labels = Vec::with_capacity(self.dim() * other.dim());
        for (a, la) in self.amplitudes.iter().zip(&self.labels) {
            for (b, lb) in other.amplitudes.iter().zip(&other.labels) {
                amplitudes.push(a * b);
                labels.push(format!("{la}{lb}"));
            }
        }
        StateVector { amplitudes, labels }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                op: "inner",
                left: (self.dim(), 1),
                right: (other.dim(), 1),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn apply(&self, op: &ComplexMatrix) -> Result<StateVector> {
        if op.rows() != op.cols() {
            return Err(Error::NonSquare {
                rows: op.rows(),
                cols: op.cols(),
            });
        }
        Ok(StateVector {
            amplitudes: op.mul_vec(&self.amplitudes)?,
            labels: self.labels.clone(),
        })
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                op: "max_abs_diff",
                left: (self.dim(), 1),
                right: (other.dim(), 1),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Haar-random unitary via Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    use rand_distr::StandardNormal;
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n)
            .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= norm);
        cols.push(v);
    }
    ComplexMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Pauli matrices in the `{|1⟩, |2⟩}` (time-bin `{S, L}`) basis.
pub mod pauli {
    use super::{c, ComplexMatrix};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| if i != j { c(1.0, 0.0) } else { c(0.0, 0.0) })
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => c(0.0, -1.0),
            (1, 0) => c(0.0, 1.0),
            _ => c(0.0, 0.0),
        })
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(1.0, 0.0),
            (1, 1) => c(-1.0, 0.0),
            _ => c(0.0, 0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sl_labels() -> [&'static str; 2] {
        ["S", "L"]
    }

    #[test]
    fn identity_is_left_neutral() {
        let x = ComplexMatrix::from_fn(3, 3, |i, j| c(i as f64 + 0.5, j as f64 - 1.0));
        let prod = ComplexMatrix::identity(3).matmul(&x).unwrap();
        assert_eq!(prod, x);
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(Error::DimensionMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(matches!(
            ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![c(1.0, 0.0)]),
            Err(Error::LengthMismatch { expected: 4, found: 1 })
        ));
        assert!(StateVector::new(vec![c(f64::INFINITY, 0.0)], vec!["a".into()]).is_err());
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = StateVector::basis(&sl_labels(), 0).unwrap();
        let sss = s.tensor(&s).tensor(&s);
        assert_eq!(sss.dim(), 8);
        assert_eq!(sss.amplitude_of("SSS"), Some(c(1.0, 0.0)));
        assert_abs_diff_eq!(sss.norm_sqr(), 1.0);
    }

    #[test]
    fn tensor_of_uniform_superpositions() {
        let h = 1.0 / 2f64.sqrt();
        let plus = StateVector::new(vec![c(h, 0.0), c(h, 0.0)], vec!["S".into(), "L".into()]).unwrap();
        let v = plus.tensor(&plus).tensor(&plus);
        for z in v.amplitudes() {
            assert_abs_diff_eq!(z.re, 1.0 / 8f64.sqrt(), epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0);
        }
        assert_eq!(v.labels()[5], "LSL");
    }

    #[test]
    fn kron_of_x_is_antidiagonal() {
        let xx = pauli::x().kron(&pauli::x());
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i + j == 3 { 1.0 } else { 0.0 };
                assert_eq!(xx.get(i, j), c(expected, 0.0));
            }
        }
    }

    #[test]
    fn unitarity_predicate() {
        assert!(pauli::y().is_unitary(1e-12).unwrap());
        let ones = ComplexMatrix::from_fn(3, 3, |_, _| c(1.0, 0.0));
        assert!(!ones.is_unitary(1e-12).unwrap());
        assert!(matches!(
            ComplexMatrix::zeros(2, 3).is_unitary(1e-12),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn normalize_zero_vector_fails() {
        let z = StateVector::new(vec![c(0.0, 0.0); 2], vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(z.normalize(), Err(Error::ZeroNorm)));
    }

    #[test]
    fn matrix_json_layout() {
        let m = pauli::y();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"{"rows":2,"cols":2,"data":[[0.0,0.0],[0.0,-1.0],[0.0,1.0],[0.0,0.0]]}"#
        );
        let back: ComplexMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"rows":2,"cols":2,"data":[[0.0,0.0]]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(bad).is_err());
    }

    #[test]
    fn pauli_algebra() {
        // XY = iZ
        let xy = pauli::x().matmul(&pauli::y()).unwrap();
        let iz = pauli::z().scale(c(0.0, 1.0));
        assert_abs_diff_eq!(xy.max_abs_diff(&iz).unwrap(), 0.0);
        assert!(pauli::x().is_hermitian(0.0));
        assert!(pauli::y().is_hermitian(0.0));
    }
}
