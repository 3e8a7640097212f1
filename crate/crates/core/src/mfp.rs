//! Multivariable fractional polynomials (MFP).
//!
//! Each covariate enters as a fractional polynomial of degree at most two,
//! `xi_1 x^a + xi_2 x^b`, with powers from [`FP_POWERS`] (power 0 is the log
//! and a repeated power `a = b` contributes `x^a` and `x^a log x`). Covariates
//! are visited from most to least relevant and each is put through a closed
//! test: best FP2 against null (exclude), against linear (keep linear) and
//! against best FP1 (choose degree). Cycles repeat until the chosen forms stop
//! changing.
//!
//! Optional product terms of order two and three are linear-only derived
//! covariates tested linear against null. They are visited after all main
//! effects, lower order first, and a main effect whose covariate appears in an
//! included product is held linear.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dof::DofRow;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{solve_least_squares, Dataset};
use crate::scalar::Scalar;

/// Candidate powers; 0 denotes the natural log.
pub const FP_POWERS: [f64; 8] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];

/// Selected form of a candidate term, `None` meaning excluded.
pub type Form = Option<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct MfpConfig {
    pub alpha: f64,
    /// Highest product order considered; 1 disables products.
    pub max_interaction_order: usize,
    pub max_cycles: usize,
    /// Shift covariates with non-positive values before transforming.
    pub shift: bool,
}

impl Default for MfpConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_interaction_order: 1,
            max_cycles: 10,
            shift: true,
        }
    }
}

/// Included term: a main effect (`factors.len() == 1`) with its FP powers, or
/// a linear product of several covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpTerm<T = f64> {
    pub name: String,
    pub factors: Vec<usize>,
    pub powers: Vec<f64>,
    pub coefficients: Vec<T>,
    /// Added to the covariate before a non-linear transform.
    pub shift: T,
}

impl<T: Scalar> FpTerm<T> {
    pub fn degree(&self) -> usize {
        self.powers.len()
    }

    /// Covariate index of a main effect.
    pub fn covariate(&self) -> Option<usize> {
        (self.factors.len() == 1).then(|| self.factors[0])
    }

    pub fn is_interaction(&self) -> bool {
        self.factors.len() > 1
    }

    pub fn is_linear(&self) -> bool {
        self.powers == [1.0]
    }

    fn columns(&self, x: &Matrix<T>) -> Result<Vec<Vec<T>>> {
        let raw: Vec<T> = (0..x.rows())
            .map(|i| self.factors.iter().map(|&j| x[(i, j)]).fold(T::one(), |a, b| a * b))
            .collect();
        transform_term(raw, self.shift, &self.powers)
    }

    fn column_labels(&self) -> Vec<String> {
        let base = if self.shift > T::zero() && !self.is_linear() {
            format!("({}+{})", self.name, fmt_num(self.shift.to_f64_lossy()))
        } else {
            self.name.clone()
        };
        let power = |p: f64| {
            if p == 0.0 {
                format!("log({base})")
            } else if p == 1.0 {
                base.clone()
            } else {
                format!("{base}^{p}")
            }
        };
        match self.powers.as_slice() {
            [a, b] if a == b => {
                let first = power(*a);
                let second = if *a == 0.0 {
                    format!("log({base})^2")
                } else {
                    format!("{first}*log({base})")
                };
                vec![first, second]
            }
            ps => ps.iter().map(|&p| power(p)).collect(),
        }
    }
}

/// Fitted MFP model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfpFit<T = f64> {
    pub names: Vec<String>,
    pub intercept: T,
    pub terms: Vec<FpTerm<T>>,
    pub excluded: Vec<String>,
    pub alpha: f64,
    pub r_squared: T,
    pub rss: T,
    pub n: usize,
    pub cycles: usize,
}

impl<T: Scalar> MfpFit<T> {
    pub fn term(&self, name: &str) -> Option<&FpTerm<T>> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn term_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name.as_str()).collect()
    }

    /// Intercept followed by every term coefficient, in term order.
    pub fn coefficients(&self) -> Vec<T> {
        std::iter::once(self.intercept)
            .chain(self.terms.iter().flat_map(|t| t.coefficients.iter().copied()))
            .collect()
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if x.cols() != self.names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.names.len(),
                got: x.cols(),
            });
        }
        let mut out = vec![self.intercept; x.rows()];
        for term in &self.terms {
            for (col, &b) in term.columns(x)?.iter().zip(&term.coefficients) {
                for (o, &v) in out.iter_mut().zip(col) {
                    *o += b * v;
                }
            }
        }
        Ok(out)
    }

    /// Closed form such as `2.56 + 2.46*s + 0.548*s*p`.
    pub fn expression(&self) -> String {
        let mut out = fmt_num(self.intercept.to_f64_lossy());
        for term in &self.terms {
            for (label, &b) in term.column_labels().iter().zip(&term.coefficients) {
                let b = b.to_f64_lossy();
                let sign = if b < 0.0 { '-' } else { '+' };
                out.push_str(&format!(" {sign} {}*{label}", fmt_num(b.abs())));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if (1e-4..1e5).contains(&a) {
        let digits = (5 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{v:.digits$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
        s.to_string()
    } else {
        format!("{v:.5e}")
    }
}

fn power_of<T: Scalar>(x: T, p: f64) -> T {
    if p == 0.0 {
        x.ln()
    } else if p == 0.5 {
        x.sqrt()
    } else if p == p.trunc() {
        x.powi(p as i32)
    } else {
        x.powf(T::of(p))
    }
}

/// FP columns of a strictly positive `x` for one or two powers.
pub fn fp_transform<T: Scalar>(x: &[T], powers: &[f64]) -> Vec<Vec<T>> {
    let col = |p: f64| x.iter().map(|&v| power_of(v, p)).collect::<Vec<T>>();
    match powers {
        [a, b] if a == b => {
            let first = col(*a);
            let second = first.iter().zip(x).map(|(&f, &v)| f * v.ln()).collect();
            vec![first, second]
        }
        ps => ps.iter().map(|&p| col(p)).collect(),
    }
}

fn transform_term<T: Scalar>(raw: Vec<T>, shift: T, powers: &[f64]) -> Result<Vec<Vec<T>>> {
    if powers == [1.0] {
        return Ok(vec![raw]);
    }
    let x: Vec<T> = raw.into_iter().map(|v| v + shift).collect();
    if x.iter().any(|&v| v <= T::zero()) {
        return Err(Error::Domain("fractional polynomial of a non-positive value".into()));
    }
    Ok(fp_transform(&x, powers))
}

/// Shift making every value positive: zero when already positive, otherwise
/// `-min` plus the smallest positive gap between observed values (1 if all
/// values coincide).
pub fn positive_shift<T: Scalar>(x: &[T]) -> T {
    let min = x.iter().copied().fold(T::infinity(), T::min);
    if min > T::zero() {
        return T::zero();
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
    let gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > T::zero())
        .fold(T::infinity(), T::min);
    let gap = if gap.is_finite() { gap } else { T::one() };
    gap - min
}

/// All `(a)` or `(a, b)` with `a <= b`, in lexicographic order.
fn power_sets(degree: usize) -> Vec<Vec<f64>> {
    match degree {
        1 => FP_POWERS.iter().map(|&p| vec![p]).collect(),
        _ => {
            let mut out = Vec::with_capacity(36);
            for (i, &a) in FP_POWERS.iter().enumerate() {
                for &b in &FP_POWERS[i..] {
                    out.push(vec![a, b]);
                }
            }
            out
        }
    }
}

struct Candidate<T> {
    name: String,
    factors: Vec<usize>,
    raw: Vec<T>,
    shift: T,
    positive: bool,
}

struct Selector<'a, T: Scalar> {
    y: &'a [T],
    candidates: Vec<Candidate<T>>,
    forms: Vec<Form>,
    floor: T,
}

impl<'a, T: Scalar> Selector<'a, T> {
    fn new(dataset: &'a Dataset<T>, max_order: usize, shift: bool) -> Self {
        let x = dataset.x();
        let mut candidates: Vec<Candidate<T>> = (0..dataset.p())
            .map(|j| {
                let raw = x.col(j).to_vec();
                let positive = raw.iter().all(|&v| v > T::zero());
                Candidate {
                    name: dataset.names()[j].clone(),
                    factors: vec![j],
                    shift: if shift { positive_shift(&raw) } else { T::zero() },
                    positive,
                    raw,
                }
            })
            .collect();
        for order in 2..=max_order {
            for factors in combinations(dataset.p(), order) {
                let raw = (0..dataset.n())
                    .map(|i| factors.iter().map(|&j| x[(i, j)]).fold(T::one(), |a, b| a * b))
                    .collect();
                let name = factors
                    .iter()
                    .map(|&j| dataset.names()[j].as_str())
                    .collect::<Vec<_>>()
                    .join("*");
                candidates.push(Candidate {
                    name,
                    factors,
                    raw,
                    shift: T::zero(),
                    positive: true,
                });
            }
        }
        let y = dataset.y();
        let mean = y.iter().copied().sum::<T>() / T::of_usize(y.len());
        let tss = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
        let forms = vec![Some(vec![1.0]); candidates.len()];
        Self {
            y,
            candidates,
            forms,
            floor: tss * T::epsilon() * T::of(1e4),
        }
    }

    fn columns(&self, k: usize, powers: &[f64]) -> Result<Vec<Vec<T>>> {
        let c = &self.candidates[k];
        transform_term(c.raw.clone(), c.shift, powers)
    }

    fn base(&self, except: Option<usize>) -> Result<Vec<Vec<T>>> {
        let mut cols = Vec::new();
        for (k, form) in self.forms.iter().enumerate() {
            if Some(k) == except {
                continue;
            }
            if let Some(powers) = form {
                cols.extend(self.columns(k, powers)?);
            }
        }
        Ok(cols)
    }

    fn rss(&self, cols: &[Vec<T>]) -> Result<T> {
        Ok(fit_columns(self.y, cols)?.rss)
    }

    fn rss_with(&self, base: &[Vec<T>], extra: Vec<Vec<T>>) -> Result<T> {
        let mut cols = base.to_vec();
        cols.extend(extra);
        self.rss(&cols)
    }

    fn lr(&self, rss0: T, rss1: T) -> f64 {
        let n = self.y.len() as f64;
        let r0 = rss0.max(self.floor).to_f64_lossy();
        let r1 = rss1.max(self.floor).to_f64_lossy();
        (n * (r0 / r1).ln()).max(0.0)
    }

    fn best_form(&self, base: &[Vec<T>], k: usize, degree: usize) -> Result<(Vec<f64>, T)> {
        let c = &self.candidates[k];
        if !c.positive && c.shift == T::zero() {
            return Err(Error::NonPositiveValues(c.factors[0]));
        }
        let mut best: Option<(Vec<f64>, T)> = None;
        for powers in power_sets(degree) {
            let rss = match self.rss_with(base, self.columns(k, &powers)?) {
                Ok(r) => r,
                Err(Error::RankDeficient { .. }) => continue,
                Err(e) => return Err(e),
            };
            if best.as_ref().is_none_or(|(_, b)| rss < *b) {
                best = Some((powers, rss));
            }
        }
        best.ok_or(Error::RankDeficient { column: base.len() + 1 })
    }

    /// Linear-order ranking by the LR statistic for dropping each candidate
    /// from the model with every candidate linear.
    fn ranking(&self) -> Result<Vec<(usize, f64)>> {
        let full = self.rss(&self.base(None)?)?;
        (0..self.candidates.len())
            .map(|k| Ok((k, self.lr(self.rss(&self.base(Some(k))?)?, full))))
            .collect()
    }

    fn is_locked(&self, k: usize) -> bool {
        let c = &self.candidates[k];
        c.factors.len() > 1
            || self.candidates.iter().zip(&self.forms).any(|(other, form)| {
                form.is_some() && other.factors.len() > 1 && other.factors.contains(&c.factors[0])
            })
    }

    fn update(&mut self, k: usize, alpha: f64) -> Result<()> {
        let base = self.base(Some(k))?;
        let rss_null = self.rss(&base)?;
        let rss_lin = self.rss_with(&base, self.columns(k, &[1.0])?)?;
        if self.is_locked(k) {
            let keep = p_value(self.lr(rss_null, rss_lin), 1.0) < alpha;
            self.forms[k] = keep.then(|| vec![1.0]);
            return Ok(());
        }
        let (fp2, rss2) = self.best_form(&base, k, 2)?;
        let (fp1, rss1) = self.best_form(&base, k, 1)?;
        self.forms[k] = if p_value(self.lr(rss_null, rss2), 2.0) >= alpha {
            None
        } else if p_value(self.lr(rss_lin, rss2), 1.0) >= alpha {
            Some(vec![1.0])
        } else if p_value(self.lr(rss1, rss2), 1.0) >= alpha {
            Some(fp1)
        } else {
            Some(fp2)
        };
        Ok(())
    }
}

fn p_value(stat: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").sf(stat)
}

fn combinations(p: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur.push(j);
            rec(j + 1, p, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, p, k, &mut Vec::new(), &mut out);
    out
}

fn fit_columns<T: Scalar>(y: &[T], cols: &[Vec<T>]) -> Result<crate::model::LinearFit<T>> {
    let mut all = Vec::with_capacity(cols.len() + 1);
    all.push(vec![T::one(); y.len()]);
    all.extend_from_slice(cols);
    solve_least_squares(&Matrix::from_columns(&all)?, y)
}

/// Covariates ordered by decreasing LR statistic for their removal from the
/// full linear model (ties keep index order).
pub fn order_covariates<T: Scalar>(dataset: &Dataset<T>) -> Result<Vec<usize>> {
    let sel = Selector::new(dataset, 1, true);
    let mut ranked = sel.ranking()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().map(|(k, _)| k).collect())
}

/// Minimal-RSS fractional polynomial of the given degree for covariate `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BestFp<T = f64> {
    pub powers: Vec<f64>,
    pub coefficients: Vec<T>,
    pub rss: T,
}

/// Searches all powers (degree 1) or power pairs (degree 2) for covariate `j`
/// with the other covariates held at `current` forms. Ties go to the
/// lexicographically smallest power tuple.
pub fn best_fp<T: Scalar>(
    dataset: &Dataset<T>,
    j: usize,
    degree: usize,
    current: &[Form],
    shift: bool,
) -> Result<BestFp<T>> {
    if !(1..=2).contains(&degree) {
        return Err(Error::InvalidConfig(format!("FP degree must be 1 or 2, got {degree}")));
    }
    if j >= dataset.p() {
        return Err(Error::DimensionMismatch {
            expected: dataset.p(),
            got: j + 1,
        });
    }
    if current.len() != dataset.p() {
        return Err(Error::DimensionMismatch {
            expected: dataset.p(),
            got: current.len(),
        });
    }
    let mut sel = Selector::new(dataset, 1, shift);
    sel.forms = current.to_vec();
    let base = sel.base(Some(j))?;
    let (powers, rss) = sel.best_form(&base, j, degree)?;
    let mut cols = base.clone();
    cols.extend(sel.columns(j, &powers)?);
    let fit = fit_columns(dataset.y(), &cols)?;
    let coefficients = fit.coefficients[fit.coefficients.len() - degree..].to_vec();
    Ok(BestFp {
        powers,
        coefficients,
        rss,
    })
}

/// Runs the MFP cycle to convergence.
pub fn mfp_select<T: Scalar>(dataset: &Dataset<T>, config: &MfpConfig) -> Result<MfpFit<T>> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    if config.max_interaction_order == 0 || config.max_interaction_order > dataset.p().max(1) {
        return Err(Error::InvalidConfig(format!(
            "interaction order must lie in 1..={}",
            dataset.p()
        )));
    }
    if config.max_cycles == 0 {
        return Err(Error::InvalidConfig("need at least one cycle".into()));
    }
    let mut sel = Selector::new(dataset, config.max_interaction_order, config.shift);
    let mut order = sel.ranking()?;
    order.sort_by(|a, b| {
        let (fa, fb) = (sel.candidates[a.0].factors.len(), sel.candidates[b.0].factors.len());
        fa.cmp(&fb).then(b.1.total_cmp(&a.1)).then(a.0.cmp(&b.0))
    });

    let mut cycles = None;
    for cycle in 1..=config.max_cycles {
        let before = sel.forms.clone();
        for &(k, _) in &order {
            sel.update(k, config.alpha)?;
        }
        if sel.forms == before {
            cycles = Some(cycle);
            break;
        }
    }
    let cycles = cycles.ok_or(Error::NoConvergence(config.max_cycles))?;

    let fit = fit_columns(dataset.y(), &sel.base(None)?)?;
    let mut coef = fit.coefficients[1..].iter().copied();
    let mut terms = Vec::new();
    let mut excluded = Vec::new();
    for (c, form) in sel.candidates.iter().zip(&sel.forms) {
        match form {
            Some(powers) => terms.push(FpTerm {
                name: c.name.clone(),
                factors: c.factors.clone(),
                powers: powers.clone(),
                coefficients: coef.by_ref().take(powers.len()).collect(),
                shift: if powers == &[1.0] { T::zero() } else { c.shift },
            }),
            None => excluded.push(c.name.clone()),
        }
    }
    let y = dataset.y();
    let mean = y.iter().copied().sum::<T>() / T::of_usize(y.len());
    let tss = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    let r_squared = if tss > T::zero() {
        (T::one() - fit.rss / tss).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(MfpFit {
        names: dataset.names().to_vec(),
        intercept: fit.coefficients[0],
        terms,
        excluded,
        alpha: config.alpha,
        r_squared,
        rss: fit.rss,
        n: dataset.n(),
        cycles,
    })
}

/// Fits a DoF surface in `s`, `p` and `n` with all second- and third-order
/// products as candidates.
pub fn derive_dof_formula<T: Scalar>(rows: &[DofRow<T>], alpha: f64) -> Result<MfpFit<T>> {
    if rows.len() < 20 {
        return Err(Error::InvalidDataset(format!(
            "need at least 20 DoF rows, got {}",
            rows.len()
        )));
    }
    let x = Matrix::from_rows(
        &rows
            .iter()
            .map(|r| vec![T::of_usize(r.s), T::of_usize(r.p), T::of_usize(r.n)])
            .collect::<Vec<_>>(),
    )?;
    let y = rows.iter().map(|r| r.dof).collect();
    let ds = Dataset::new(y, x, vec!["s".into(), "p".into(), "n".into()])?;
    mfp_select(
        &ds,
        &MfpConfig {
            alpha,
            max_interaction_order: 3,
            ..MfpConfig::default()
        },
    )
}
