//! Monte-Carlo DoF reference grid over p in {2,4,6,8,10},
//! n in {100,400,700,1000}, s in {1..5}, shipped as `assets/table1.csv`.

use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const REFERENCE_CSV: &str = include_str!("../../assets/table1.csv");

/// One grid cell: mean DoF and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofRow<T = f64> {
    pub p: usize,
    pub n: usize,
    pub s: usize,
    pub dof: T,
    pub se: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LookupMode {
    #[default]
    Exact,
    /// Snap `p` and `n` to the closest grid values (ties to the smaller);
    /// `s` must match exactly.
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable<T = f64> {
    rows: Vec<DofRow<T>>,
}

impl<T: Scalar> ReferenceTable<T> {
    /// The shipped grid.
    pub fn shipped() -> Self {
        Self::from_csv(REFERENCE_CSV.as_bytes()).expect("shipped table parses")
    }

    /// Reads `p,n,s,dof,se` rows (the `se` column is optional).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(ip), Some(inn), Some(is), Some(id)) = (col("p"), col("n"), col("s"), col("dof")) else {
            return Err(Error::InvalidDataset(
                "DoF table needs columns p, n, s, dof".into(),
            ));
        };
        let ise = col("se");
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidDataset(format!("row {}: missing field", line + 1)))
            };
            let int = |i: usize| -> Result<usize> {
                field(i)?
                    .parse()
                    .map_err(|_| Error::InvalidDataset(format!("row {}: bad integer", line + 1)))
            };
            let real = |i: usize| -> Result<T> {
                let v: f64 = field(i)?
                    .parse()
                    .map_err(|_| Error::InvalidDataset(format!("row {}: bad number", line + 1)))?;
                if !v.is_finite() {
                    return Err(Error::InvalidDataset(format!("row {}: non-finite", line + 1)));
                }
                Ok(T::of(v))
            };
            rows.push(DofRow {
                p: int(ip)?,
                n: int(inn)?,
                s: int(is)?,
                dof: real(id)?,
                se: ise.map(real).transpose()?.unwrap_or_else(T::zero),
            });
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: Vec<DofRow<T>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[DofRow<T>] {
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows, writer)
    }

    pub fn get(&self, p: usize, n: usize, s: usize) -> Option<&DofRow<T>> {
        self.rows.iter().find(|r| r.p == p && r.n == n && r.s == s)
    }

    pub fn lookup(&self, p: usize, n: usize, s: usize, mode: LookupMode) -> Result<T> {
        let (p_grid, n_grid) = match mode {
            LookupMode::Exact => (p, n),
            LookupMode::Nearest => (
                nearest(self.rows.iter().map(|r| r.p), p),
                nearest(self.rows.iter().map(|r| r.n), n),
            ),
        };
        self.get(p_grid, n_grid, s)
            .map(|r| r.dof)
            .ok_or(Error::OffGrid { p, n, s })
    }
}

pub(crate) fn write_rows<T: Scalar, W: Write>(rows: &[DofRow<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Closest value in `grid` to `target`; ties go to the smaller value.
fn nearest(grid: impl Iterator<Item = usize>, target: usize) -> usize {
    grid.min_by_key(|&g| (g.abs_diff(target), g)).unwrap_or(target)
}

fn shipped_f64() -> &'static ReferenceTable<f64> {
    static TABLE: OnceLock<ReferenceTable<f64>> = OnceLock::new();
    TABLE.get_or_init(ReferenceTable::shipped)
}

/// Lookup in the shipped reference grid.
pub fn dof_table_lookup<T: Scalar>(p: usize, n: usize, s: usize, mode: LookupMode) -> Result<T> {
    shipped_f64().lookup(p, n, s, mode).map(T::of)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_grid_is_complete() {
        let t = ReferenceTable::<f64>::shipped();
        assert_eq!(t.rows().len(), 100);
        for p in [2, 4, 6, 8, 10] {
            for n in [100, 400, 700, 1000] {
                for s in 1..=5 {
                    assert!(t.get(p, n, s).is_some(), "({p},{n},{s})");
                }
            }
        }
    }

    #[test]
    fn transcribed_values() {
        assert_eq!(dof_table_lookup::<f64>(6, 400, 3, LookupMode::Exact).unwrap(), 31.66);
        assert_eq!(dof_table_lookup::<f64>(2, 1000, 5, LookupMode::Exact).unwrap(), 19.82);
        assert_eq!(dof_table_lookup::<f64>(2, 100, 1, LookupMode::Exact).unwrap(), 7.41);
        assert_eq!(dof_table_lookup::<f64>(10, 1000, 5, LookupMode::Exact).unwrap(), 60.01);
        let t = ReferenceTable::<f64>::shipped();
        assert_eq!(t.get(2, 100, 1).unwrap().se, 0.14);
        assert_eq!(t.get(10, 1000, 5).unwrap().se, 0.24);
    }

    #[test]
    fn off_grid_in_exact_mode() {
        assert!(matches!(
            dof_table_lookup::<f64>(5, 500, 2, LookupMode::Exact),
            Err(Error::OffGrid { p: 5, n: 500, s: 2 })
        ));
        assert!(dof_table_lookup::<f64>(2, 100, 6, LookupMode::Nearest).is_err());
    }

    #[test]
    fn nearest_snaps_with_ties_to_smaller() {
        // p = 5 ties between 4 and 6 -> 4; n = 500 -> 400
        let v = dof_table_lookup::<f64>(5, 500, 2, LookupMode::Nearest).unwrap();
        assert_eq!(v, 19.39);
        // p = 7 ties between 6 and 8 -> 6; n = 2985 -> 1000
        let v = dof_table_lookup::<f64>(7, 2985, 1, LookupMode::Nearest).unwrap();
        assert_eq!(v, 16.74);
        assert_eq!(nearest([100, 400, 700, 1000].into_iter(), 550), 400);
        assert_eq!(nearest([100, 400, 700, 1000].into_iter(), 551), 700);
    }

    #[test]
    fn csv_round_trip() {
        let t = ReferenceTable::<f64>::shipped();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ReferenceTable::<f64>::from_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn schema_violation_is_rejected() {
        assert!(ReferenceTable::<f64>::from_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(ReferenceTable::<f64>::from_csv("p,n,s,dof\n2,100,x,3\n".as_bytes()).is_err());
    }
}
