//! Simulation scenarios comparing DoF approaches for BIC post-pruning.
//!
//! Scenario 1 has `p = 2` covariates with the coefficient of `X1` modified by
//! `X2`. Scenario 2 has `p = 6` with up to three single-split modifications
//! (`X1` by `X2`, `X3` by `X4`, `X5` by `X6`). Scenario 3 adds four null
//! covariates to scenario 2. Scenario 4 has `p = 4`, `n = 2985` and up to
//! three splits in each of the coefficients of `X1` (modified by `X2`) and
//! `X3` (modified by `X4`). Every other coefficient is zero and the noise is
//! standard normal.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dof::{mc_dof_with_mean, DesignTemplate, DofSpec, LookupMode, McDofConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{gaussian_log_density, Dataset};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;
use crate::selection::prune_path;
use crate::tree::{fit_path, TsvcModel, DEFAULT_MIN_LEAF};

/// DoF used for pruning within the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofApproach {
    Naive,
    Mfp,
    /// Shipped null-model reference grid (exact cells only).
    Table,
    /// Fresh Monte-Carlo run under `mu = 0` at the scenario's `(n, p)`.
    McNull,
    /// Fresh Monte-Carlo run under the scenario's true expectation.
    McDgp,
}

impl DofApproach {
    pub fn name(self) -> &'static str {
        match self {
            DofApproach::Naive => "naive",
            DofApproach::Mfp => "mfp",
            DofApproach::Table => "table",
            DofApproach::McNull => "mc-null",
            DofApproach::McDgp => "mc-dgp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Naive, Self::Mfp, Self::Table, Self::McNull, Self::McDgp]
            .into_iter()
            .find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub s_dgp: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub s_max: usize,
    pub min_leaf: usize,
    pub approaches: Vec<DofApproach>,
    /// Replicates and runs of the Monte-Carlo approaches.
    pub mc_m: usize,
    pub mc_runs: usize,
    /// Permit `n` and `s_max` outside the scenario's published setting.
    pub relaxed: bool,
}

impl ScenarioConfig {
    /// Published defaults for `scenario` with 25 replications.
    pub fn new(scenario: u8, s_dgp: usize, n: usize) -> Result<Self> {
        let config = Self::defaults(scenario, s_dgp, n);
        config.validate()?;
        Ok(config)
    }

    /// As [`ScenarioConfig::new`] without validation, for callers that adjust
    /// fields first.
    pub fn defaults(scenario: u8, s_dgp: usize, n: usize) -> Self {
        let approaches = if scenario == 4 {
            vec![DofApproach::Naive, DofApproach::Mfp]
        } else {
            vec![DofApproach::Naive, DofApproach::Mfp, DofApproach::Table]
        };
        Self {
            scenario,
            s_dgp,
            n,
            replications: 25,
            seed: 1,
            s_max: if scenario == 4 { 10 } else { 5 },
            min_leaf: DEFAULT_MIN_LEAF,
            approaches,
            mc_m: 100,
            mc_runs: 10,
            relaxed: false,
        }
    }

    /// Number of covariates of the scenario.
    pub fn p(&self) -> usize {
        match self.scenario {
            1 => 2,
            2 => 6,
            3 => 10,
            _ => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let allowed: &[usize] = match self.scenario {
            1..=3 => &[0, 1, 2, 3],
            4 => &[0, 2, 4, 6],
            s => return bad(format!("unknown scenario {s}")),
        };
        if !allowed.contains(&self.s_dgp) {
            return bad(format!(
                "scenario {} supports s_DGP in {allowed:?}, got {}",
                self.scenario, self.s_dgp
            ));
        }
        if self.scenario == 4 && !self.relaxed && (self.n != 2985 || self.s_max != 10) {
            return bad("scenario 4 uses n = 2985 and S_max = 10".into());
        }
        if self.replications == 0 {
            return bad("need at least one replication".into());
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be positive".into());
        }
        if self.n < 2 * self.p() + 2 {
            return bad(format!("n = {} is too small for p = {}", self.n, self.p()));
        }
        if self.approaches.is_empty() {
            return bad("no DoF approach selected".into());
        }
        Ok(())
    }
}

fn step<T: Scalar>(z: T, s: usize) -> T {
    let ind = |b: bool| if b { T::one() } else { T::zero() };
    let (zero, q) = (T::zero(), T::of(0.675));
    match s {
        0 => zero,
        1 => ind(z > zero),
        2 => ind(z > zero) + T::of(2.0) * ind(z > q),
        _ => ind(z > zero) + T::of(2.0) * ind(z > q) - ind(z <= q),
    }
}

/// True expectation of one row (`row[k]` holds `X_{k+1}`).
pub fn scenario_mean<T: Scalar>(scenario: u8, s_dgp: usize, row: &[T]) -> T {
    let ind = |b: bool| if b { T::one() } else { T::zero() };
    let zero = T::zero();
    match scenario {
        1 => step(row[1], s_dgp) * row[0],
        2 | 3 => {
            let mut mu = zero;
            if s_dgp >= 1 {
                mu += ind(row[1] > zero) * row[0];
            }
            if s_dgp >= 2 {
                mu += ind(row[3] > zero) * row[2];
            }
            if s_dgp >= 3 {
                mu += ind(row[5] > zero) * row[4];
            }
            mu
        }
        _ => {
            let b = |z: T| match s_dgp {
                0 => zero,
                2 => ind(z > zero),
                4 => ind(z > zero) + T::of(2.0) * ind(z > T::of(0.675)),
                _ => ind(z > zero) + T::of(2.0) * ind(z > T::of(0.675)) - ind(z < T::of(0.675)),
            };
            b(row[1]) * row[0] + b(row[3]) * row[2]
        }
    }
}

fn mean_vector<T: Scalar>(scenario: u8, s_dgp: usize, x: &Matrix<T>) -> Vec<T> {
    (0..x.rows()).map(|i| scenario_mean(scenario, s_dgp, &x.row(i))).collect()
}

/// Training and test samples of one replicate.
#[derive(Debug, Clone)]
pub struct ScenarioDraw<T: Scalar = f64> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub mu_train: Vec<T>,
    pub mu_test: Vec<T>,
}

pub fn generate_scenario<T: Scalar>(config: &ScenarioConfig, replicate: usize) -> Result<ScenarioDraw<T>> {
    let (n, p) = (config.n, config.p());
    let mut g = rng::stream(config.seed, Stream::Scenario, &[replicate as u64]);
    let mut sample = || -> Result<(Dataset<T>, Vec<T>)> {
        let x: Matrix<T> = rng::normal_matrix(&mut g, n, p);
        let mu = mean_vector(config.scenario, config.s_dgp, &x);
        let y = mu.iter().map(|&m| m + rng::standard_normal(&mut g)).collect();
        Ok((Dataset::from_parts(y, x)?, mu))
    };
    let (train, mu_train) = sample()?;
    let (test, mu_test) = sample()?;
    Ok(ScenarioDraw {
        train,
        test,
        mu_train,
        mu_test,
    })
}

/// Gaussian log-likelihood of the test responses under the model's
/// predictions, with the training variance estimate.
pub fn predictive_log_lik<T: Scalar>(model: &TsvcModel<T>, test: &Dataset<T>) -> Result<T> {
    let pred = model.predict(test.x())?;
    gaussian_log_density(test.y(), &pred, model.fit.sigma2_hat())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub scenario: u8,
    pub n: usize,
    pub s_dgp: usize,
    pub replicate: usize,
    pub dof_approach: &'static str,
    pub splits: usize,
    pub pred_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: u8,
    pub n: usize,
    #[serde(rename = "s_DGP")]
    pub s_dgp: usize,
    pub dof_approach: &'static str,
    pub replications: usize,
    pub mean_splits: f64,
    pub sd_splits: f64,
    pub mean_pred_loglik: f64,
    pub sd_pred_loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub rows: Vec<SummaryRow>,
    pub replicates: Vec<ReplicateRow>,
}

impl SimSummary {
    pub fn row(&self, approach: DofApproach) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.dof_approach == approach.name())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_csv(&self.rows, writer)
    }

    pub fn write_replicates_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_csv(&self.replicates, writer)
    }
}

/// Writes summary rows of several settings into one table.
pub fn write_csv<R: Serialize, W: Write>(rows: &[R], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// DoF specification for each requested approach; Monte-Carlo approaches run
/// their simulation here, once per setting.
pub fn build_specs<T: Scalar>(config: &ScenarioConfig) -> Result<Vec<(DofApproach, DofSpec<T>)>> {
    config
        .approaches
        .iter()
        .map(|&a| {
            let spec = match a {
                DofApproach::Naive => DofSpec::Naive,
                DofApproach::Mfp => DofSpec::MfpFormula,
                DofApproach::Table => DofSpec::McTable(LookupMode::Exact),
                DofApproach::McNull | DofApproach::McDgp => {
                    let domain = if a == DofApproach::McNull { Stream::McNull } else { Stream::McDgp };
                    let mc = McDofConfig {
                        mu: None,
                        m: config.mc_m,
                        runs: config.mc_runs,
                        s_max: config.s_max,
                        min_leaf: config.min_leaf,
                        seed: rng::derive_seed(config.seed, domain, &[]),
                    };
                    let template = DesignTemplate::random(config.n, config.p());
                    let fitter = mc.tsvc_fitter();
                    let result = if a == DofApproach::McNull {
                        mc_dof_with_mean(&template, &fitter, &mc, |x: &Matrix<T>| vec![T::zero(); x.rows()])?
                    } else {
                        mc_dof_with_mean(&template, &fitter, &mc, |x: &Matrix<T>| {
                            mean_vector(config.scenario, config.s_dgp, x)
                        })?
                    };
                    DofSpec::McCustom(result)
                }
            };
            Ok((a, spec))
        })
        .collect()
}

/// Runs every replicate, pruning one shared path per replicate under each
/// approach.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimSummary> {
    config.validate()?;
    let specs = build_specs::<f64>(config)?;
    run_with_specs(config, &specs)
}

/// [`run_simulation`] with precomputed specifications.
pub fn run_with_specs(config: &ScenarioConfig, specs: &[(DofApproach, DofSpec<f64>)]) -> Result<SimSummary> {
    config.validate()?;
    let per_rep: Vec<Vec<ReplicateRow>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let draw = generate_scenario::<f64>(config, r)?;
            let path = fit_path(&draw.train, config.s_max, config.min_leaf)?;
            specs
                .iter()
                .map(|(approach, spec)| {
                    let report = prune_path(&path, spec)?;
                    let model = report.selected_model(&path);
                    Ok(ReplicateRow {
                        scenario: config.scenario,
                        n: config.n,
                        s_dgp: config.s_dgp,
                        replicate: r,
                        dof_approach: approach.name(),
                        splits: report.selected,
                        pred_loglik: predictive_log_lik(model, &draw.test)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let replicates: Vec<ReplicateRow> = per_rep.into_iter().flatten().collect();

    let rows = specs
        .iter()
        .map(|(approach, _)| {
            let mine: Vec<&ReplicateRow> = replicates
                .iter()
                .filter(|r| r.dof_approach == approach.name())
                .collect();
            let splits: Vec<f64> = mine.iter().map(|r| r.splits as f64).collect();
            let ll: Vec<f64> = mine.iter().map(|r| r.pred_loglik).collect();
            let (mean_splits, sd_splits) = mean_sd(&splits);
            let (mean_pred_loglik, sd_pred_loglik) = mean_sd(&ll);
            SummaryRow {
                scenario: config.scenario,
                n: config.n,
                s_dgp: config.s_dgp,
                dof_approach: approach.name(),
                replications: mine.len(),
                mean_splits,
                sd_splits,
                mean_pred_loglik,
                sd_pred_loglik,
            }
        })
        .collect();
    Ok(SimSummary { rows, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::linear_trees;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coefficient_functions_by_hand() {
        assert_eq!(scenario_mean(1, 2, &[1.0, 1.0]), 3.0);
        assert_eq!(scenario_mean(1, 0, &[1.0, 1.0]), 0.0);
        assert_eq!(scenario_mean(1, 1, &[2.0, -0.1]), 0.0);
        assert_eq!(scenario_mean(1, 3, &[1.0, 0.5]), 0.0);
        assert_eq!(scenario_mean(1, 3, &[1.0, -0.5]), -1.0);
        assert_eq!(scenario_mean(1, 3, &[1.0, 0.675]), 0.0);
        assert_eq!(scenario_mean(4, 6, &[1.0, 0.7, 1.0, 0.7]), 6.0);
        assert_eq!(scenario_mean(4, 6, &[1.0, 0.675, 1.0, -1.0]), 0.0);
        assert_eq!(scenario_mean(4, 2, &[2.0, 0.1, 3.0, -0.1]), 2.0);
        let row = [1.0, 1.0, 2.0, 1.0, 3.0, 1.0];
        assert_eq!(scenario_mean(2, 1, &row), 1.0);
        assert_eq!(scenario_mean(2, 2, &row), 3.0);
        assert_eq!(scenario_mean(2, 3, &row), 6.0);
        let mut wide = row.to_vec();
        wide.extend([9.0; 4]);
        assert_eq!(scenario_mean(3, 3, &wide), 6.0);
    }

    #[test]
    fn null_scenario_has_zero_mean() {
        let cfg = ScenarioConfig::new(1, 0, 100).unwrap();
        let draw = generate_scenario::<f64>(&cfg, 0).unwrap();
        assert!(draw.mu_train.iter().all(|&m| m == 0.0));
        assert_eq!(draw.test.n(), 100);
        assert_eq!(draw.train.p(), 2);
        assert_ne!(draw.train.y(), draw.test.y());
    }

    #[test]
    fn draws_are_reproducible() {
        let cfg = ScenarioConfig::new(2, 2, 100).unwrap();
        let a = generate_scenario::<f64>(&cfg, 3).unwrap();
        let b = generate_scenario::<f64>(&cfg, 3).unwrap();
        assert_eq!(a.train.y(), b.train.y());
        let c = generate_scenario::<f64>(&cfg, 4).unwrap();
        assert_ne!(a.train.y(), c.train.y());
    }

    #[test]
    fn config_invariants() {
        assert!(ScenarioConfig::new(1, 4, 100).is_err());
        assert!(ScenarioConfig::new(4, 3, 2985).is_err());
        assert!(ScenarioConfig::new(4, 2, 400).is_err());
        assert!(ScenarioConfig::new(5, 0, 100).is_err());
        let s4 = ScenarioConfig::new(4, 6, 2985).unwrap();
        assert_eq!((s4.p(), s4.s_max), (4, 10));
        let relaxed = ScenarioConfig {
            n: 400,
            relaxed: true,
            ..s4
        };
        assert!(relaxed.validate().is_ok());
        assert_eq!(ScenarioConfig::new(3, 0, 100).unwrap().p(), 10);
    }

    #[test]
    fn predictive_log_lik_closed_form() {
        // a model whose predictions equal the test responses, with unit variance
        let x = Matrix::from_columns(&[(0..8).map(f64::from).collect::<Vec<_>>()]).unwrap();
        let y: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let train = Dataset::new_unchecked_size(y.clone(), x.clone(), vec!["x1".into()]).unwrap();
        let model = TsvcModel::fit(&train, linear_trees(1)).unwrap();
        let sigma2 = model.fit.sigma2_hat();
        let test = train.with_response(model.fit.fitted.clone()).unwrap();
        let ll = predictive_log_lik(&model, &test).unwrap();
        let expected = -4.0 * (2.0 * std::f64::consts::PI * sigma2).ln();
        assert_abs_diff_eq!(ll, expected, epsilon = 1e-10);
        let worse = train.with_response(model.fit.fitted.iter().map(|v| v + 0.5).collect()).unwrap();
        assert!(predictive_log_lik(&model, &worse).unwrap() < ll);
    }

    #[test]
    fn summary_shape_and_determinism() {
        let cfg = ScenarioConfig {
            replications: 4,
            ..ScenarioConfig::new(1, 1, 100).unwrap()
        };
        let a = run_simulation(&cfg).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.replicates.len(), 12);
        assert!(a.rows.iter().all(|r| r.replications == 4));
        assert_eq!(a, run_simulation(&cfg).unwrap());
        for r in 0..4 {
            let get = |name| a.replicates.iter().find(|x| x.replicate == r && x.dof_approach == name).unwrap().splits;
            assert!(get("mfp") <= get("naive"));
        }
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(
            header,
            "scenario,n,s_DGP,dof_approach,replications,mean_splits,sd_splits,mean_pred_loglik,sd_pred_loglik"
        );
    }

    #[test]
    fn monte_carlo_approaches_run() {
        let cfg = ScenarioConfig {
            replications: 2,
            approaches: vec![DofApproach::McNull, DofApproach::McDgp],
            mc_m: 4,
            mc_runs: 2,
            s_max: 2,
            ..ScenarioConfig::new(1, 1, 100).unwrap()
        };
        let specs = build_specs::<f64>(&cfg).unwrap();
        for (_, spec) in &specs {
            let DofSpec::McCustom(res) = spec else { panic!("expected Monte-Carlo spec") };
            assert_eq!(res.entries.len(), 2);
        }
        assert_eq!(run_with_specs(&cfg, &specs).unwrap().rows.len(), 2);
    }

    #[test]
    fn approach_names_round_trip() {
        for a in [DofApproach::Naive, DofApproach::Mfp, DofApproach::Table, DofApproach::McNull, DofApproach::McDgp] {
            assert_eq!(DofApproach::parse(a.name()), Some(a));
        }
        assert_eq!(DofApproach::parse("bogus"), None);
    }
}
