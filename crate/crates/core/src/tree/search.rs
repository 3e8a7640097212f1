//! Greedy one-split-at-a-time search.
//!
//! Splitting leaf `m` of covariate `j` at `x_k <= c` replaces the column
//! `z = x_j * I(m)` by `z_left + z_right`; the span is that of the current
//! design plus `z_left`. With thin `Q` and residual `r` of the current fit,
//! the candidate's residual sum of squares is therefore
//!
//! ```text
//! rss - (r'z_left)^2 / (z_left'z_left - |Q'z_left|^2)
//! ```
//!
//! Sorting the leaf by `x_k` turns every threshold into a prefix sum, so a
//! full scan costs `O(p^2 n q)` per step. Near-optimal candidates are then
//! refitted from scratch with QR and the exact minimum wins.

use rayon::prelude::*;

use super::{build_design, check_trees, linear_trees, CoefficientTree, SplitRule, TsvcModel};
use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::model::{fit_from_qr, Dataset};
use crate::scalar::Scalar;

/// Nested sequence of greedy fits `M(0), M(1), ...`; `models[s]` has `s` splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPath<T: Scalar = f64> {
    pub models: Vec<TsvcModel<T>>,
    /// `rules[s]` turned `models[s]` into `models[s + 1]`.
    pub rules: Vec<SplitRule<T>>,
    pub s_max: usize,
}

impl<T: Scalar> ModelPath<T> {
    /// Largest split count reached (may be below `s_max`).
    pub fn s_reached(&self) -> usize {
        self.models.len() - 1
    }

    pub fn stopped_early(&self) -> bool {
        self.s_reached() < self.s_max
    }

    pub fn deviances(&self) -> Vec<T> {
        self.models.iter().map(TsvcModel::deviance).collect()
    }

    pub fn n(&self) -> usize {
        self.models[0].n
    }

    pub fn p(&self) -> usize {
        self.models[0].p
    }
}

/// Midpoints between adjacent distinct sorted values where both sides keep
/// at least `min_leaf` observations. `sorted` must be ascending.
fn admissible_thresholds<T: Scalar>(sorted: &[T], min_leaf: usize) -> Vec<(usize, T)> {
    let len = sorted.len();
    let mut out = Vec::new();
    for t in 0..len.saturating_sub(1) {
        let left = t + 1;
        if sorted[t] < sorted[t + 1] && left >= min_leaf && len - left >= min_leaf {
            out.push((left, (sorted[t] + sorted[t + 1]) / T::of(2.0)));
        }
    }
    out
}

/// Every admissible rule in order `(j, k, leaf, c)` ascending.
pub fn enumerate_candidates<T: Scalar>(
    dataset: &Dataset<T>,
    trees: &[CoefficientTree<T>],
    min_leaf: usize,
) -> Vec<SplitRule<T>> {
    let min_leaf = min_leaf.max(1);
    let x = dataset.x();
    let mut out = Vec::new();
    for tree in trees {
        let j = tree.target();
        let assigned = tree.assign(x);
        for k in (0..dataset.p()).filter(|&k| k != j) {
            for leaf in tree.leaves() {
                let mut vals: Vec<T> = (0..dataset.n())
                    .filter(|&i| assigned[i] == leaf)
                    .map(|i| x[(i, k)])
                    .collect();
                vals.sort_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
                for (_, c) in admissible_thresholds(&vals, min_leaf) {
                    out.push(SplitRule {
                        target: j,
                        modifier: k,
                        threshold: c,
                        parent_leaf: leaf,
                    });
                }
            }
        }
    }
    out
}

struct Scored<T> {
    /// Position in enumeration order.
    order: (usize, usize),
    rule: SplitRule<T>,
    rss: T,
}

/// Adds the rule minimizing the residual sum of squares.
///
/// Ties (equal rss up to rounding) go to the rule enumerated first.
pub fn grow_one_split<T: Scalar>(
    dataset: &Dataset<T>,
    trees: &[CoefficientTree<T>],
    min_leaf: usize,
) -> Result<(SplitRule<T>, TsvcModel<T>)> {
    check_trees(trees, dataset.p())?;
    let min_leaf = min_leaf.max(1);
    let (n, p) = (dataset.n(), dataset.p());
    let x = dataset.x();
    let y = dataset.y();

    let design = build_design(dataset, trees)?;
    let qr = Qr::new(&design)?;
    let current = fit_from_qr(&qr, &design, y);
    let residual = current.residuals(y);
    let q = design.cols();
    let q_thin = qr.thin_q();
    let mut q_rows = vec![T::zero(); n * q];
    for c in 0..q {
        for (i, &v) in q_thin.col(c).iter().enumerate() {
            q_rows[i * q + c] = v;
        }
    }

    let assignments: Vec<Vec<usize>> = trees.iter().map(|t| t.assign(x)).collect();
    let mut groups = Vec::new();
    for tree in trees {
        let j = tree.target();
        for k in (0..p).filter(|&k| k != j) {
            for leaf in tree.leaves() {
                groups.push((j, k, leaf));
            }
        }
    }

    let degenerate = T::epsilon().sqrt();
    let scan = |g: usize| -> Vec<Scored<T>> {
        let (j, k, leaf) = groups[g];
        let xj = x.col(j);
        let xk = x.col(k);
        let mut rows: Vec<usize> = (0..n).filter(|&i| assignments[j][i] == leaf).collect();
        rows.sort_by(|&a, &b| xk[a].partial_cmp(&xk[b]).expect("finite covariates"));
        let mut a = vec![T::zero(); q];
        let (mut b, mut zz) = (T::zero(), T::zero());
        let mut out = Vec::new();
        let len = rows.len();
        for t in 0..len.saturating_sub(1) {
            let i = rows[t];
            let w = xj[i];
            for (ac, &qv) in a.iter_mut().zip(&q_rows[i * q..(i + 1) * q]) {
                *ac += w * qv;
            }
            b += w * residual[i];
            zz += w * w;
            let left = t + 1;
            let next = rows[t + 1];
            if !(xk[i] < xk[next]) || left < min_leaf || len - left < min_leaf {
                continue;
            }
            let den = zz - a.iter().map(|&v| v * v).sum::<T>();
            if !(zz > T::zero()) || den <= degenerate * zz {
                continue;
            }
            let reduction = (b * b / den).min(current.rss);
            out.push(Scored {
                order: (g, out.len()),
                rule: SplitRule {
                    target: j,
                    modifier: k,
                    threshold: (xk[i] + xk[next]) / T::of(2.0),
                    parent_leaf: leaf,
                },
                rss: current.rss - reduction,
            });
        }
        out
    };
    let mut scored: Vec<Scored<T>> = (0..groups.len()).into_par_iter().flat_map_iter(scan).collect();
    if scored.is_empty() {
        return Err(Error::NoAdmissibleSplit);
    }
    scored.sort_by(|a, b| {
        a.rss
            .partial_cmp(&b.rss)
            .expect("finite rss")
            .then(a.order.cmp(&b.order))
    });

    // Exact refit of the near-best candidates.
    let scale = current.rss.max(T::min_positive_value());
    let window = T::of(1e-8) * scale;
    let tie = T::of(64.0) * T::epsilon() * scale;
    let mut best: Option<((usize, usize), SplitRule<T>, TsvcModel<T>)> = None;
    let mut best_rss = T::infinity();
    for cand in &scored {
        if best.is_some() && cand.rss > best_rss + window {
            break;
        }
        let mut next_trees = trees.to_vec();
        next_trees[cand.rule.target].split(cand.rule.parent_leaf, cand.rule.modifier, cand.rule.threshold)?;
        let model = match TsvcModel::fit(dataset, next_trees) {
            Ok(m) => m,
            Err(Error::RankDeficient { .. }) | Err(Error::EmptyLeaf { .. }) => continue,
            Err(e) => return Err(e),
        };
        let rss = model.fit.rss;
        let better = match &best {
            None => true,
            Some((order, _, _)) => {
                rss < best_rss - tie || (rss <= best_rss + tie && cand.order < *order)
            }
        };
        if better {
            best_rss = best_rss.min(rss);
            best = Some((cand.order, cand.rule, model));
        }
    }
    best.map(|(_, rule, model)| (rule, model))
        .ok_or(Error::NoAdmissibleSplit)
}

/// Greedy path from the linear model up to `s_max` splits. Stops early only
/// when no admissible split remains.
pub fn fit_path<T: Scalar>(dataset: &Dataset<T>, s_max: usize, min_leaf: usize) -> Result<ModelPath<T>> {
    let base = TsvcModel::fit(dataset, linear_trees(dataset.p()))?;
    let mut models = vec![base];
    let mut rules = Vec::with_capacity(s_max);
    while rules.len() < s_max {
        let trees = &models.last().expect("nonempty").trees;
        match grow_one_split(dataset, trees, min_leaf) {
            Ok((rule, model)) => {
                rules.push(rule);
                models.push(model);
            }
            Err(Error::NoAdmissibleSplit) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(ModelPath {
        models,
        rules,
        s_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::solve_least_squares;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset_from(xs: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset<f64> {
        Dataset::from_parts(y, Matrix::from_columns(&xs).unwrap()).unwrap()
    }

    fn normal_dataset(seed: u64, n: usize, p: usize, f: impl Fn(&[f64]) -> f64, noise: f64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![Vec::with_capacity(n); p];
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let e: f64 = StandardNormal.sample(&mut rng);
            y.push(f(&row) + noise * e);
            for (c, v) in cols.iter_mut().zip(&row) {
                c.push(*v);
            }
        }
        dataset_from(cols, y)
    }

    #[test]
    fn no_candidates_for_constant_modifier() {
        let ds = dataset_from(
            vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![7.0; 6]],
            vec![1.0, 2.0, 1.0, 2.0, 1.0, 3.0],
        );
        let c = enumerate_candidates(&ds, &linear_trees(2), 1);
        assert!(c.iter().all(|r| !(r.target == 0 && r.modifier == 1)));
        assert!(c.iter().any(|r| r.target == 1 && r.modifier == 0));
    }

    #[test]
    fn midpoint_thresholds_and_child_size_filter() {
        // n = 4 would violate n >= 2p + 2 for p = 2, so pad with a second leaf-free column
        let xs = vec![vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0, 4.0, 4.0, 4.0]];
        let ds = dataset_from(xs, vec![0.0, 1.0, 0.0, 1.0, 2.0, 3.0]);
        let thr = |min_leaf| -> Vec<f64> {
            enumerate_candidates(&ds, &linear_trees(2), min_leaf)
                .into_iter()
                .filter(|r| r.target == 0)
                .map(|r| r.threshold)
                .collect()
        };
        assert_eq!(thr(1), vec![1.5, 2.5, 3.5]);
        assert_eq!(thr(2), vec![2.5, 3.5]);
        assert_eq!(thr(3), vec![3.5]);
        assert_eq!(admissible_thresholds(&[1.0, 2.0, 3.0, 4.0], 1), vec![(1, 1.5), (2, 2.5), (3, 3.5)]);
        assert_eq!(admissible_thresholds(&[1.0, 2.0, 3.0, 4.0], 2), vec![(2, 2.5)]);
    }

    #[test]
    fn finds_planted_effect_modifier() {
        let ds = normal_dataset(3, 40, 2, |r| if r[1] > 0.0 { r[0] } else { 0.0 }, 1e-3);
        let (rule, model) = grow_one_split(&ds, &linear_trees(2), 1).unwrap();
        assert_eq!((rule.target, rule.modifier), (0, 1));
        let x2 = ds.x().col(1);
        let below = x2.iter().copied().filter(|&v| v < 0.0).fold(f64::MIN, f64::max);
        let above = x2.iter().copied().filter(|&v| v > 0.0).fold(f64::MAX, f64::min);
        assert!(rule.threshold > below && rule.threshold < above);
        assert_eq!(model.s(), 1);
    }

    #[test]
    fn split_never_increases_rss_on_noise() {
        let ds = normal_dataset(11, 60, 3, |_| 0.0, 1.0);
        let base = TsvcModel::fit(&ds, linear_trees(3)).unwrap();
        let (_, model) = grow_one_split(&ds, &linear_trees(3), 5).unwrap();
        assert!(model.fit.rss <= base.fit.rss);
    }

    /// Independent oracle: refit every enumerated candidate from scratch.
    fn oracle_argmin(ds: &Dataset<f64>, trees: &[CoefficientTree<f64>], min_leaf: usize) -> SplitRule<f64> {
        let mut best: Option<(f64, SplitRule<f64>)> = None;
        for rule in enumerate_candidates(ds, trees, min_leaf) {
            let mut t = trees.to_vec();
            t[rule.target].split(rule.parent_leaf, rule.modifier, rule.threshold).unwrap();
            let Ok(design) = build_design(ds, &t) else { continue };
            let Ok(fit) = solve_least_squares(&design, ds.y()) else { continue };
            if best.as_ref().is_none_or(|(r, _)| fit.rss < *r) {
                best = Some((fit.rss, rule));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn handcrafted_n8_matches_oracle() {
        let xs = vec![
            vec![1.0, -0.5, 2.0, 0.3, -1.2, 0.8, 1.7, -2.0],
            vec![0.1, 0.9, -0.4, 1.3, -0.7, 2.2, -1.5, 0.6],
        ];
        let y = vec![0.9, -0.2, -1.1, 0.7, 0.4, 1.9, -2.4, -1.0];
        let ds = dataset_from(xs, y);
        let (rule, _) = grow_one_split(&ds, &linear_trees(2), 1).unwrap();
        assert_eq!(rule, oracle_argmin(&ds, &linear_trees(2), 1));
    }

    #[test]
    fn oracle_agreement_along_paths() {
        for seed in 0..15u64 {
            let p = 2 + (seed as usize % 2);
            let ds = normal_dataset(100 + seed, 30 + seed as usize, p, |r| r[0] * r[1].signum(), 0.5);
            let mut trees = linear_trees(p);
            for _ in 0..3 {
                let expected = oracle_argmin(&ds, &trees, 3);
                let (rule, model) = grow_one_split(&ds, &trees, 3).unwrap();
                assert_eq!(rule, expected, "seed {seed}");
                trees = model.trees;
            }
        }
    }

    #[test]
    fn path_properties() {
        let ds = normal_dataset(5, 120, 3, |r| if r[1] > 0.0 { r[0] } else { -r[0] }, 1.0);
        let path = fit_path(&ds, 4, 10).unwrap();
        assert_eq!(path.models.len(), 5);
        assert_eq!((path.rules[0].target, path.rules[0].modifier), (0, 1));
        for (s, m) in path.models.iter().enumerate() {
            assert_eq!(m.s(), s);
            assert_eq!(m.fit.n_params, 3 + s + 1);
            assert_eq!(m.n_free_params(), 3 + s + 1);
            let pred = m.predict(ds.x()).unwrap();
            for (a, b) in pred.iter().zip(&m.fit.fitted) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        for w in path.deviances().windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
        // refinement: exactly one leaf of one tree is replaced per step
        for (s, rule) in path.rules.iter().enumerate() {
            let (a, b) = (&path.models[s], &path.models[s + 1]);
            for j in 0..3 {
                let (la, lb) = (a.trees[j].leaves(), b.trees[j].leaves());
                if j == rule.target {
                    assert_eq!(lb.len(), la.len() + 1);
                    assert!(!b.trees[j].is_leaf(rule.parent_leaf));
                    assert!(la.iter().filter(|&&l| l != rule.parent_leaf).all(|l| lb.contains(l)));
                } else {
                    assert_eq!(la, lb);
                }
            }
        }
    }

    #[test]
    fn zero_budget_path_is_linear_model() {
        let ds = normal_dataset(8, 30, 2, |r| r[0], 1.0);
        let path = fit_path(&ds, 0, 10).unwrap();
        assert_eq!(path.models.len(), 1);
        assert_eq!(path.models[0].s(), 0);
        assert!(!path.stopped_early());
    }

    #[test]
    fn path_stops_early_without_admissible_splits() {
        // min_leaf too large for any split
        let ds = normal_dataset(9, 30, 2, |r| r[0], 1.0);
        let path = fit_path(&ds, 3, 20).unwrap();
        assert_eq!(path.s_reached(), 0);
        assert!(path.stopped_early());
        assert!(matches!(
            grow_one_split(&ds, &linear_trees(2), 20),
            Err(Error::NoAdmissibleSplit)
        ));
    }

    #[test]
    fn f32_path_runs() {
        let ds64 = normal_dataset(21, 80, 2, |r| if r[1] > 0.0 { 2.0 * r[0] } else { 0.0 }, 0.3);
        let cols32: Vec<Vec<f32>> = (0..2).map(|j| ds64.x().col(j).iter().map(|&v| v as f32).collect()).collect();
        let y32 = ds64.y().iter().map(|&v| v as f32).collect();
        let ds32 = Dataset::from_parts(y32, Matrix::from_columns(&cols32).unwrap()).unwrap();
        let p32 = fit_path(&ds32, 2, 10).unwrap();
        let p64 = fit_path(&ds64, 2, 10).unwrap();
        assert_eq!(p32.rules[0].target, p64.rules[0].target);
        assert_eq!(p32.rules[0].modifier, p64.rules[0].modifier);
    }
}
