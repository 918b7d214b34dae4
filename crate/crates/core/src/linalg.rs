//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Complex, DMatrix, DVector};

/// Ratio of smallest to largest singular value; zero for an all-zero matrix.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 || m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // A wide or tall matrix has min(r, c) singular values; a square one is
    // singular exactly when the smallest is zero.
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    min / max
}

/// Number of singular values at or above `rel_tol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= rel_tol * max).count()
}

/// Computes `num * gram^{-1}` for a square `gram`, refusing when the
/// reciprocal condition number falls below `threshold`. On refusal the
/// offending reciprocal condition number is returned.
pub fn right_divide(
    num: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    threshold: f64,
) -> Result<DMatrix<f64>, f64> {
    debug_assert_eq!(gram.nrows(), gram.ncols());
    debug_assert_eq!(num.ncols(), gram.nrows());
    let rc = rcond(gram);
    if !(rc >= threshold) {
        return Err(rc);
    }
    let lu = gram.transpose().lu();
    match lu.solve(&num.transpose()) {
        Some(sol) => Ok(sol.transpose()),
        None => Err(0.0),
    }
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD.
/// Returns the solution and the numerical rank of `a` at `rel_tol`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rel_tol * max;
    let rank = svd.singular_values.iter().filter(|&&s| s >= cutoff && s > 0.0).count();
    let eps = if cutoff > 0.0 { cutoff } else { f64::MIN_POSITIVE };
    let x = svd
        .solve(b, eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()));
    (x, rank)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0_f64, f64::max)
}

/// Complex eigenvalues of a square matrix, sorted by (re, im) so that
/// multisets compare elementwise.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    assert_eq!(m.nrows(), m.ncols(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut eig: Vec<Complex<f64>> = m.complex_eigenvalues().iter().cloned().collect();
    sort_complex(&mut eig);
    eig
}

pub fn sort_complex(v: &mut [Complex<f64>]) {
    v.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Builds a matrix from row-major nested vectors. Ragged input returns `None`.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Stacks the columns `start..start + len` of `m` into one long vector.
pub fn stack_columns(m: &DMatrix<f64>, start: usize, len: usize) -> DVector<f64> {
    let rows = m.nrows();
    DVector::from_fn(rows * len, |idx, _| m[(idx % rows, start + idx / rows)])
}

/// Serde adapters that write matrices as row-major nested arrays.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }

    pub mod option {
        use nalgebra::DMatrix;
        use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(super::super::to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Option<DMatrix<f64>>, D::Error> {
            match Option::<Vec<Vec<f64>>>::deserialize(d)? {
                None => Ok(None),
                Some(rows) => super::super::from_rows(&rows)
                    .map(Some)
                    .ok_or_else(|| D::Error::custom("ragged matrix rows")),
            }
        }
    }
}

/// Serde adapter for vectors as plain arrays.
pub mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
