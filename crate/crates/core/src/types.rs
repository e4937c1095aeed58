//! Vector and matrix conventions shared across the crate.
//!
//! Every optimizer works on flat [`Vector`]s. Matrix-valued decision
//! variables (the representation matrix of the hyper-representation stream)
//! are flattened **row-major**: entry `(i, j)` of a `rows × cols` matrix lives
//! at index `i * cols + j`. [`flatten_row_major`] and [`unflatten_row_major`]
//! are the only two functions that cross that boundary.

use nalgebra::{DMatrix, DVector};

use crate::error::{OboError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn ensure_finite(v: &Vector, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OboError::Numerical {
            context,
            iteration: None,
        })
    }
}

pub fn ensure_dim(v: &Vector, expected: usize, context: &'static str) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(OboError::Dimension {
            context,
            expected,
            actual: v.len(),
        })
    }
}

pub fn flatten_row_major(m: &Matrix) -> Vector {
    let (rows, cols) = m.shape();
    Vector::from_fn(rows * cols, |k, _| m[(k / cols, k % cols)])
}

pub fn unflatten_row_major(v: &Vector, rows: usize, cols: usize) -> Result<Matrix> {
    ensure_dim(v, rows * cols, "unflatten_row_major")?;
    Ok(Matrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flatten_is_row_major() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = flatten_row_major(&m);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn non_finite_rejected() {
        let v = Vector::from_vec(vec![1.0, f64::NAN]);
        assert!(matches!(
            ensure_finite(&v, "t"),
            Err(OboError::Numerical { .. })
        ));
    }

    proptest! {
        #[test]
        fn flatten_roundtrip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let m = Matrix::from_fn(rows, cols, |i, j| (seed.wrapping_mul(31 + i as u64 * 7 + j as u64) % 1000) as f64);
            let back = unflatten_row_major(&flatten_row_major(&m), rows, cols).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
