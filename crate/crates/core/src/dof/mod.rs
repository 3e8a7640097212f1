//! Degrees of freedom for TSVC models.
//!
//! Four sources are supported: the naive parameter count `p + s + 1`, the
//! closed-form surface fitted to Monte-Carlo estimates, a lookup in the
//! shipped Monte-Carlo reference grid, and a user-supplied Monte-Carlo run.
//! Every source assigns `p + 1` to the unsplit model.

mod mc;
mod table;

pub use mc::{mc_dof, mc_dof_tsvc, mc_dof_with_mean, DesignTemplate, LinearFitter, McDofConfig, McDofEntry, McDofResult, PathFitter, TsvcFitter};
pub use table::{dof_table_lookup, DofRow, LookupMode, ReferenceTable};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coefficients of the fitted DoF surface
/// `a + b s + c p + d p s + e p s n`.
pub mod formula {
    pub const INTERCEPT: f64 = 2.13;
    pub const SPLITS: f64 = 2.02;
    pub const COVARIATES: f64 = 1.26;
    pub const SPLITS_X_COVARIATES: f64 = 0.61;
    pub const SPLITS_X_COVARIATES_X_N: f64 = 0.16e-3;
}

/// Number of free parameters: intercept, one slope per covariate, one extra
/// coefficient per split.
pub fn dof_naive<T: Scalar>(p: usize, s: usize) -> T {
    T::of_usize(p + s + 1)
}

/// Closed-form DoF surface; `p + 1` for the unsplit model.
pub fn dof_mfp<T: Scalar>(s: usize, p: usize, n: usize) -> Result<T> {
    if p < 2 {
        return Err(Error::Domain(format!(
            "DoF formula requires p >= 2 covariates, got p={p}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("DoF formula requires n >= 1".into()));
    }
    if s == 0 {
        return Ok(T::of_usize(p + 1));
    }
    let (s, p, n) = (s as f64, p as f64, n as f64);
    use formula::*;
    Ok(T::of(
        INTERCEPT
            + SPLITS * s
            + COVARIATES * p
            + SPLITS_X_COVARIATES * p * s
            + SPLITS_X_COVARIATES_X_N * p * s * n,
    ))
}

/// Strategy for the DoF entering the BIC.
#[derive(Debug, Clone, PartialEq)]
pub enum DofSpec<T: Scalar = f64> {
    Naive,
    MfpFormula,
    McTable(LookupMode),
    McCustom(McDofResult<T>),
}

impl<T: Scalar> DofSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            DofSpec::Naive => "naive",
            DofSpec::MfpFormula => "mfp",
            DofSpec::McTable(LookupMode::Exact) => "table",
            DofSpec::McTable(LookupMode::Nearest) => "table-nearest",
            DofSpec::McCustom(_) => "mc",
        }
    }

    /// DoF of a model with `s` splits on `p` covariates fitted to `n` rows.
    pub fn dof(&self, p: usize, n: usize, s: usize) -> Result<T> {
        if s == 0 {
            return Ok(T::of_usize(p + 1));
        }
        match self {
            DofSpec::Naive => Ok(dof_naive(p, s)),
            DofSpec::MfpFormula => dof_mfp(s, p, n),
            DofSpec::McTable(mode) => match dof_table_lookup(p, n, s, *mode) {
                Err(Error::OffGrid { s, .. }) if (1..=5).contains(&s) => {
                    Err(Error::OffGrid { p, n, s })
                }
                Err(Error::OffGrid { .. }) => Err(Error::MissingDof { s }),
                other => other,
            },
            DofSpec::McCustom(result) => result.dof(s).ok_or(Error::MissingDof { s }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn naive_counts() {
        assert_eq!(dof_naive::<f64>(2, 1), 4.0);
        assert_eq!(dof_naive::<f64>(10, 5), 16.0);
        assert_eq!(dof_naive::<f64>(1, 0), 2.0);
    }

    #[test]
    fn formula_values() {
        // 2.13 + 2.02 + 2.52 + 1.22 + 0.032
        assert_abs_diff_eq!(dof_mfp::<f64>(1, 2, 100).unwrap(), 7.922, epsilon = 1e-9);
        // 2.13 + 10.1 + 12.6 + 30.5 + 8.0
        assert_abs_diff_eq!(dof_mfp::<f64>(5, 10, 1000).unwrap(), 63.33, epsilon = 1e-9);
        assert_eq!(dof_mfp::<f64>(0, 4, 2985).unwrap(), 5.0);
        assert!(matches!(dof_mfp::<f64>(1, 1, 100), Err(Error::Domain(_))));
    }

    #[test]
    fn formula_is_monotone_with_large_increments() {
        for p in 2..12 {
            for n in [1usize, 50, 100, 1000, 5000] {
                for s in 1..8 {
                    let a: f64 = dof_mfp(s, p, n).unwrap();
                    let b: f64 = dof_mfp(s + 1, p, n).unwrap();
                    assert!(b - a > 1.0);
                    let expected = 2.02 + 0.61 * p as f64 + 0.00016 * (p * n) as f64;
                    assert_abs_diff_eq!(b - a, expected, epsilon = 1e-9);
                    assert!(dof_mfp::<f64>(s, p + 1, n).unwrap() > a);
                    assert!(dof_mfp::<f64>(s, p, n + 1).unwrap() > a);
                }
                // the step from the unsplit model also exceeds the naive step
                let d1: f64 = dof_mfp(1, p, n).unwrap();
                assert!(d1 - (p as f64 + 1.0) > 1.0);
            }
        }
    }

    #[test]
    fn spec_dispatch() {
        let naive = DofSpec::<f64>::Naive;
        assert_eq!(naive.dof(3, 100, 0).unwrap(), 4.0);
        assert_eq!(naive.dof(3, 100, 2).unwrap(), 6.0);
        let mfp = DofSpec::<f64>::MfpFormula;
        assert_eq!(mfp.dof(3, 100, 0).unwrap(), 4.0);
        let table = DofSpec::<f64>::McTable(LookupMode::Exact);
        assert_eq!(table.dof(6, 400, 3).unwrap(), 31.66);
        assert!(matches!(table.dof(6, 400, 6), Err(Error::MissingDof { s: 6 })));
        assert!(matches!(table.dof(5, 400, 2), Err(Error::OffGrid { .. })));
    }
}
