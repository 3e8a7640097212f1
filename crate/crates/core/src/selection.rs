//! BIC post-pruning of a greedy model path.

use std::io::Write;

use serde::Serialize;

use crate::dof::DofSpec;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tree::{ModelPath, TsvcModel};

/// `-2 log_lik + ln(n) dof`.
pub fn bic<T: Scalar>(log_lik: T, dof: T, n: T) -> T {
    T::of(-2.0) * log_lik + n.ln() * dof
}

/// Index of the smallest value; ties go to the earliest.
pub fn smallest_argmin<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BicRow<T = f64> {
    pub s: usize,
    pub dof: T,
    #[serde(rename = "loglik")]
    pub log_lik: T,
    pub bic: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport<T = f64> {
    pub rows: Vec<BicRow<T>>,
    pub selected: usize,
    pub spec: &'static str,
}

impl<T: Scalar> PruneReport<T> {
    pub fn selected_row(&self) -> &BicRow<T> {
        &self.rows[self.selected]
    }

    pub fn selected_model<'a>(&self, path: &'a ModelPath<T>) -> &'a TsvcModel<T> {
        &path.models[self.selected]
    }

    /// Columns `s,dof,loglik,bic,selected`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "dof", "loglik", "bic", "selected"])?;
        for r in &self.rows {
            w.serialize((r.s, r.dof, r.log_lik, r.bic, r.s == self.selected))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// BIC for every model on the path and the smallest-`s` minimizer.
pub fn prune_path<T: Scalar>(path: &ModelPath<T>, spec: &DofSpec<T>) -> Result<PruneReport<T>> {
    let (n, p) = (path.n(), path.p());
    let rows = path
        .models
        .iter()
        .enumerate()
        .map(|(s, model)| {
            let dof = spec.dof(p, n, s)?;
            let log_lik = model.fit.log_lik()?;
            Ok(BicRow {
                s,
                dof,
                log_lik,
                bic: bic(log_lik, dof, T::of_usize(n)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bics: Vec<T> = rows.iter().map(|r| r.bic).collect();
    let selected = smallest_argmin(&bics).expect("path holds the unsplit model");
    Ok(PruneReport {
        rows,
        selected,
        spec: spec.name(),
    })
}
