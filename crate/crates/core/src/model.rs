//! Dense least-squares fitting and the Gaussian likelihood.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::scalar::Scalar;

/// Response vector plus a named covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar = f64> {
    y: Vec<T>,
    x: Matrix<T>,
    names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Validates finiteness, label uniqueness, `p >= 1` and `n >= 2p + 2`.
    pub fn new(y: Vec<T>, x: Matrix<T>, names: Vec<String>) -> Result<Self> {
        let ds = Self::new_unchecked_size(y, x, names)?;
        let (n, p) = (ds.n(), ds.p());
        if n < 2 * p + 2 {
            return Err(Error::InvalidDataset(format!(
                "need n >= 2p + 2 observations, got n={n} with p={p}"
            )));
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but without the minimum sample size requirement.
    /// Used for held-out data, where only the shape has to agree.
    pub fn new_unchecked_size(y: Vec<T>, x: Matrix<T>, names: Vec<String>) -> Result<Self> {
        if x.cols() == 0 {
            return Err(Error::InvalidDataset("at least one covariate required".into()));
        }
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: x.rows(),
            });
        }
        if names.len() != x.cols() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} columns",
                names.len(),
                x.cols()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidDataset(format!("duplicate column label '{dup}'")));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite response value".into()));
        }
        for j in 0..x.cols() {
            if !x.col(j).iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite value in column '{}'",
                    names[j]
                )));
            }
        }
        Ok(Self { y, x, names })
    }

    /// Dataset with default labels `x1..xp`.
    pub fn from_parts(y: Vec<T>, x: Matrix<T>) -> Result<Self> {
        let names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        Self::new(y, x, names)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn y(&self) -> &[T] {
        &self.y
    }

    #[inline]
    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    #[inline]
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Same covariates, different response.
    pub fn with_response(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: y.len(),
            });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite response value".into()));
        }
        Ok(Self {
            y,
            x: self.x.clone(),
            names: self.names.clone(),
        })
    }
}

/// Maximum-likelihood least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit<T = f64> {
    pub coefficients: Vec<T>,
    pub fitted: Vec<T>,
    pub rss: T,
    /// Number of design columns.
    pub n_params: usize,
    /// Squared norm of the response, used to decide when `rss` is zero.
    y_norm2: T,
}

impl<T: Scalar> LinearFit<T> {
    pub fn n(&self) -> usize {
        self.fitted.len()
    }

    /// MLE residual variance `rss / n`.
    pub fn sigma2_hat(&self) -> T {
        self.rss / T::of_usize(self.n())
    }

    /// True when the residuals vanish up to rounding.
    pub fn is_saturated(&self) -> bool {
        self.rss <= T::degenerate_rel() * self.y_norm2.max(T::min_positive_value())
    }

    /// Maximized Gaussian log-likelihood; fails for saturated fits.
    pub fn log_lik(&self) -> Result<T> {
        if self.is_saturated() {
            return Err(Error::DegenerateFit);
        }
        gaussian_log_lik(self.rss, self.n())
    }

    /// Residuals `y - fitted` against the response the fit was computed on.
    pub fn residuals(&self, y: &[T]) -> Vec<T> {
        y.iter().zip(&self.fitted).map(|(&a, &b)| a - b).collect()
    }
}

/// Least-squares fit of `y` on the columns of `design` via Householder QR.
pub fn solve_least_squares<T: Scalar>(design: &Matrix<T>, y: &[T]) -> Result<LinearFit<T>> {
    if design.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: design.rows(),
        });
    }
    let qr = Qr::new(design)?;
    Ok(fit_from_qr(&qr, design, y))
}

pub(crate) fn fit_from_qr<T: Scalar>(qr: &Qr<T>, design: &Matrix<T>, y: &[T]) -> LinearFit<T> {
    let coefficients = qr.solve(y);
    let fitted = design.mul_vec(&coefficients);
    let rss = y
        .iter()
        .zip(&fitted)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    LinearFit {
        coefficients,
        fitted,
        rss,
        n_params: design.cols(),
        y_norm2: y.iter().map(|&v| v * v).sum(),
    }
}

/// `-(n/2) (ln(2 pi rss/n) + 1)`, the profile Gaussian log-likelihood.
pub fn gaussian_log_lik<T: Scalar>(rss: T, n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::Domain("log-likelihood needs n >= 1".into()));
    }
    if rss.is_nan() || rss < T::zero() {
        return Err(Error::Domain(format!("invalid residual sum of squares {rss}")));
    }
    if rss == T::zero() {
        return Err(Error::DegenerateFit);
    }
    let nf = T::of_usize(n);
    let two_pi = T::PI() + T::PI();
    Ok(-(nf / T::of(2.0)) * ((two_pi * rss / nf).ln() + T::one()))
}

/// Gaussian log-likelihood of `y` around `mean` with a fixed variance.
pub fn gaussian_log_density<T: Scalar>(y: &[T], mean: &[T], variance: T) -> Result<T> {
    if y.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: mean.len(),
        });
    }
    if !(variance > T::zero()) {
        return Err(Error::DegenerateFit);
    }
    let sq: T = y.iter().zip(mean).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let nf = T::of_usize(y.len());
    let two_pi = T::PI() + T::PI();
    Ok(-(nf / T::of(2.0)) * (two_pi * variance).ln() - sq / (T::of(2.0) * variance))
}
