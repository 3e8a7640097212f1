//! Monte-Carlo estimate of the generalized degrees of freedom
//! `df = sum_i Cov(mu_hat_i(y), y_i) / sigma^2` with `sigma^2 = 1`.
//!
//! For each of `runs` independent runs a design is fixed, `m` responses
//! `y ~ N(mu, I)` are simulated, the fitting procedure is applied to each, and
//! the per-observation sample covariances (divisor `m - 1`) between fitted
//! values and responses are summed. Runs are averaged; the reported standard
//! error is the standard deviation over runs divided by `sqrt(runs)`.

use std::io::{Read, Write};

use rayon::prelude::*;

use super::table::{write_rows, DofRow, ReferenceTable};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{solve_least_squares, Dataset};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;
use crate::tree::{fit_path, DEFAULT_MIN_LEAF};

/// A fitting procedure mapping a response to fitted values, once per model
/// size (`levels[s]` for the model with `s` splits).
pub trait PathFitter<T: Scalar>: Sync {
    fn fitted_levels(&self, dataset: &Dataset<T>) -> Result<Vec<Vec<T>>>;

    /// Largest level the procedure can produce.
    fn max_level(&self) -> usize;

    /// Smallest level worth reporting.
    fn first_reported_level(&self) -> usize {
        0
    }
}

/// Greedy TSVC path fitter.
#[derive(Debug, Clone, Copy)]
pub struct TsvcFitter {
    pub s_max: usize,
    pub min_leaf: usize,
}

impl<T: Scalar> PathFitter<T> for TsvcFitter {
    fn fitted_levels(&self, dataset: &Dataset<T>) -> Result<Vec<Vec<T>>> {
        let path = fit_path(dataset, self.s_max, self.min_leaf)?;
        Ok(path.models.into_iter().map(|m| m.fit.fitted).collect())
    }

    fn max_level(&self) -> usize {
        self.s_max
    }

    fn first_reported_level(&self) -> usize {
        1
    }
}

/// Ordinary least squares on intercept plus all covariates, no search.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearFitter;

impl<T: Scalar> PathFitter<T> for LinearFitter {
    fn fitted_levels(&self, dataset: &Dataset<T>) -> Result<Vec<Vec<T>>> {
        let design = linear_design(dataset.x());
        Ok(vec![solve_least_squares(&design, dataset.y())?.fitted])
    }

    fn max_level(&self) -> usize {
        0
    }
}

fn linear_design<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let mut d = Matrix::zeros(x.rows(), x.cols() + 1);
    d.col_mut(0).fill(T::one());
    for j in 0..x.cols() {
        d.col_mut(j + 1).copy_from_slice(x.col(j));
    }
    d
}

/// Shape of the simulated data; without an explicit design a fresh
/// standard-normal `X` is drawn for every run.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTemplate<T: Scalar = f64> {
    pub n: usize,
    pub p: usize,
    pub x: Option<Matrix<T>>,
}

impl<T: Scalar> DesignTemplate<T> {
    pub fn random(n: usize, p: usize) -> Self {
        Self { n, p, x: None }
    }

    pub fn fixed(x: Matrix<T>) -> Self {
        Self {
            n: x.rows(),
            p: x.cols(),
            x: Some(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McDofConfig<T: Scalar = f64> {
    /// Expectation vector; `None` means the null model `mu = 0`.
    pub mu: Option<Vec<T>>,
    /// Replicates per run.
    pub m: usize,
    /// Independent runs averaged.
    pub runs: usize,
    pub s_max: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for McDofConfig<T> {
    fn default() -> Self {
        Self {
            mu: None,
            m: 100,
            runs: 10,
            s_max: 5,
            min_leaf: DEFAULT_MIN_LEAF,
            seed: 1,
        }
    }
}

impl<T: Scalar> McDofConfig<T> {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig("need m >= 2 replicates".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidConfig("need at least one run".into()));
        }
        if let Some(mu) = &self.mu {
            if mu.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: mu.len(),
                });
            }
            if !mu.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite expectation".into()));
            }
        }
        Ok(())
    }

    pub fn tsvc_fitter(&self) -> TsvcFitter {
        TsvcFitter {
            s_max: self.s_max,
            min_leaf: self.min_leaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McDofEntry<T = f64> {
    pub s: usize,
    pub dof: T,
    pub se: T,
    /// Runs that contributed to this level.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McDofResult<T: Scalar = f64> {
    pub n: usize,
    pub p: usize,
    pub seed: Option<u64>,
    pub entries: Vec<McDofEntry<T>>,
    /// Replicate fits whose path ended before the fitter's maximum level.
    pub early_stops: usize,
}

impl<T: Scalar> McDofResult<T> {
    pub fn dof(&self, s: usize) -> Option<T> {
        self.entries.iter().find(|e| e.s == s).map(|e| e.dof)
    }

    pub fn rows(&self) -> Vec<DofRow<T>> {
        self.entries
            .iter()
            .map(|e| DofRow {
                p: self.p,
                n: self.n,
                s: e.s,
                dof: e.dof,
                se: e.se,
            })
            .collect()
    }

    /// Writes `p,n,s,dof,se`, the same schema as the reference grid.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows(), writer)
    }

    /// Reads a single-setting result written by [`McDofResult::write_csv`].
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let table = ReferenceTable::<T>::from_csv(reader)?;
        let rows = table.rows();
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidDataset("empty DoF table".into()))?;
        if rows.iter().any(|r| r.p != first.p || r.n != first.n) {
            return Err(Error::InvalidDataset(
                "DoF result must describe a single (p, n) setting".into(),
            ));
        }
        Ok(Self {
            n: first.n,
            p: first.p,
            seed: None,
            entries: rows
                .iter()
                .map(|r| McDofEntry {
                    s: r.s,
                    dof: r.dof,
                    se: r.se,
                    runs: 0,
                })
                .collect(),
            early_stops: 0,
        })
    }
}

/// Per-run estimate: `levels[s] = Some(sum_i cov_hat)` when at least two
/// replicates reached level `s`.
struct RunEstimate<T> {
    levels: Vec<Option<T>>,
    early_stops: usize,
}

fn run_once<T: Scalar, F: PathFitter<T> + ?Sized>(
    template: &DesignTemplate<T>,
    fitter: &F,
    config: &McDofConfig<T>,
    mean: &MeanFn<'_, T>,
    run: usize,
) -> Result<RunEstimate<T>> {
    let (n, p) = (template.n, template.p);
    let x = match &template.x {
        Some(x) => x.clone(),
        None => {
            let mut g = rng::stream(config.seed, Stream::Design, &[run as u64]);
            rng::normal_matrix(&mut g, n, p)
        }
    };
    let mu = mean(&x);
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: mu.len(),
        });
    }
    let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();

    let replicates: Vec<(Vec<T>, Vec<Vec<T>>)> = (0..config.m)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(config.seed, Stream::Response, &[run as u64, j as u64]);
            let y: Vec<T> = mu.iter().map(|&m| m + rng::standard_normal(&mut g)).collect();
            let ds = Dataset::new(y.clone(), x.clone(), names.clone())?;
            let levels = fitter.fitted_levels(&ds)?;
            Ok((y, levels))
        })
        .collect::<Result<_>>()?;

    let max_level = fitter.max_level();
    let early_stops = replicates
        .iter()
        .filter(|(_, l)| l.len() <= max_level)
        .count();
    let levels = (0..=max_level)
        .map(|s| {
            let members: Vec<_> = replicates.iter().filter(|(_, l)| l.len() > s).collect();
            if members.len() < 2 {
                return None;
            }
            let mf = T::of_usize(members.len());
            let denom = T::of_usize(members.len() - 1);
            let mut total = T::zero();
            for i in 0..n {
                let mean_y = members.iter().map(|(y, _)| y[i]).sum::<T>() / mf;
                let mean_f = members.iter().map(|(_, l)| l[s][i]).sum::<T>() / mf;
                let cov = members
                    .iter()
                    .map(|(y, l)| (l[s][i] - mean_f) * (y[i] - mean_y))
                    .sum::<T>()
                    / denom;
                total += cov;
            }
            Some(total)
        })
        .collect();
    Ok(RunEstimate {
        levels,
        early_stops,
    })
}

type MeanFn<'a, T> = dyn Fn(&Matrix<T>) -> Vec<T> + Sync + 'a;

/// Monte-Carlo generalized DoF of an arbitrary fitting procedure.
pub fn mc_dof<T: Scalar, F: PathFitter<T> + ?Sized>(
    template: &DesignTemplate<T>,
    fitter: &F,
    config: &McDofConfig<T>,
) -> Result<McDofResult<T>> {
    config.validate(template.n)?;
    let mean = |x: &Matrix<T>| config.mu.clone().unwrap_or_else(|| vec![T::zero(); x.rows()]);
    estimate(template, fitter, config, &mean)
}

/// [`mc_dof`] with an expectation computed from each run's design, for data
/// generating processes whose mean depends on the covariates. `config.mu`
/// must be `None`.
pub fn mc_dof_with_mean<T: Scalar, F: PathFitter<T> + ?Sized>(
    template: &DesignTemplate<T>,
    fitter: &F,
    config: &McDofConfig<T>,
    mean: impl Fn(&Matrix<T>) -> Vec<T> + Sync,
) -> Result<McDofResult<T>> {
    if config.mu.is_some() {
        return Err(Error::InvalidConfig(
            "give either a fixed expectation or a mean function, not both".into(),
        ));
    }
    config.validate(template.n)?;
    estimate(template, fitter, config, &mean)
}

fn estimate<T: Scalar, F: PathFitter<T> + ?Sized>(
    template: &DesignTemplate<T>,
    fitter: &F,
    config: &McDofConfig<T>,
    mean: &MeanFn<'_, T>,
) -> Result<McDofResult<T>> {
    if let Some(x) = &template.x {
        if x.rows() != template.n || x.cols() != template.p {
            return Err(Error::DimensionMismatch {
                expected: template.n,
                got: x.rows(),
            });
        }
    }
    let runs: Vec<RunEstimate<T>> = (0..config.runs)
        .into_par_iter()
        .map(|r| run_once(template, fitter, config, mean, r))
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    for s in fitter.first_reported_level()..=fitter.max_level() {
        let values: Vec<T> = runs.iter().filter_map(|r| r.levels[s]).collect();
        if values.is_empty() {
            continue;
        }
        let k = T::of_usize(values.len());
        let mean = values.iter().copied().sum::<T>() / k;
        let se = if values.len() > 1 {
            let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>()
                / T::of_usize(values.len() - 1);
            (var / k).sqrt()
        } else {
            T::zero()
        };
        entries.push(McDofEntry {
            s,
            dof: mean,
            se,
            runs: values.len(),
        });
    }
    Ok(McDofResult {
        n: template.n,
        p: template.p,
        seed: Some(config.seed),
        entries,
        early_stops: runs.iter().map(|r| r.early_stops).sum(),
    })
}

/// [`mc_dof`] with the greedy TSVC fitter configured from `config`.
pub fn mc_dof_tsvc<T: Scalar>(template: &DesignTemplate<T>, config: &McDofConfig<T>) -> Result<McDofResult<T>> {
    mc_dof(template, &config.tsvc_fitter(), config)
}
