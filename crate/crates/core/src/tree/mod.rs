//! Tree-structured varying-coefficient (TSVC) models.
//!
//! Every covariate `x_j` carries a binary tree over the remaining covariates.
//! Each leaf of that tree owns one coefficient, so the linear predictor is
//!
//! ```text
//! eta(x) = b0 + sum_j beta_j(x_{-j}) * x_j,    beta_j(.) = sum_m b_jm * I(x_{-j} in N_jm)
//! ```
//!
//! The design matrix therefore has one intercept column plus, per covariate,
//! one column `x_j * I(leaf)` for each leaf. A tree without splits is an
//! ordinary linear effect.

mod search;

use serde::{Deserialize, Serialize};

pub use search::{enumerate_candidates, fit_path, grow_one_split, ModelPath};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Dataset, LinearFit};
use crate::scalar::Scalar;

/// Default minimum number of observations in each child of a split.
pub const DEFAULT_MIN_LEAF: usize = 10;

/// Rule `I(x_modifier <= threshold)` splitting one leaf of covariate
/// `target`'s coefficient tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule<T = f64> {
    pub target: usize,
    pub modifier: usize,
    pub threshold: T,
    /// Node id of the leaf being split.
    pub parent_leaf: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Node<T> {
    Leaf {
        coefficient: T,
    },
    Split {
        modifier: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

/// Binary partition of the modifier space for one covariate's coefficient.
///
/// Nodes are stored in creation order; node ids are stable, and the leaves
/// of a tree are always reported in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTree<T = f64> {
    target: usize,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> CoefficientTree<T> {
    /// Unsplit tree: a single leaf, i.e. a plain linear effect.
    pub fn new(target: usize) -> Self {
        Self {
            target,
            nodes: vec![Node::Leaf {
                coefficient: T::zero(),
            }],
        }
    }

    #[inline]
    pub fn target(&self) -> usize {
        self.target
    }

    /// Leaf node ids in creation order.
    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| matches!(n, Node::Leaf { .. }).then_some(id))
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn n_splits(&self) -> usize {
        self.n_leaves() - 1
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.nodes.get(id), Some(Node::Leaf { .. }))
    }

    pub fn coefficient(&self, leaf: usize) -> Option<T> {
        match self.nodes.get(leaf) {
            Some(Node::Leaf { coefficient }) => Some(*coefficient),
            _ => None,
        }
    }

    fn set_coefficient(&mut self, leaf: usize, value: T) {
        if let Some(Node::Leaf { coefficient }) = self.nodes.get_mut(leaf) {
            *coefficient = value;
        }
    }

    /// Replaces `leaf` by a split on `modifier`; returns the (left, right) ids.
    pub fn split(&mut self, leaf: usize, modifier: usize, threshold: T) -> Result<(usize, usize)> {
        if modifier == self.target {
            return Err(Error::Domain(format!(
                "covariate {} cannot modify its own coefficient",
                self.target
            )));
        }
        let parent = self
            .coefficient(leaf)
            .ok_or_else(|| Error::Domain(format!("node {leaf} is not a leaf")))?;
        let left = self.nodes.len();
        let right = left + 1;
        self.nodes.push(Node::Leaf { coefficient: parent });
        self.nodes.push(Node::Leaf { coefficient: parent });
        self.nodes[leaf] = Node::Split {
            modifier,
            threshold,
            left,
            right,
        };
        Ok((left, right))
    }

    /// Leaf reached by a point given as a covariate accessor.
    pub fn leaf_for(&self, value_of: impl Fn(usize) -> T) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    modifier,
                    threshold,
                    left,
                    right,
                } => {
                    id = if value_of(*modifier) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Leaf id of every row of `x`.
    pub fn assign(&self, x: &Matrix<T>) -> Vec<usize> {
        (0..x.rows())
            .map(|i| self.leaf_for(|k| x[(i, k)]))
            .collect()
    }

    /// Rules on the root-to-leaf path of `leaf`, as `(modifier, threshold, went_left)`.
    pub fn path_to(&self, leaf: usize) -> Vec<(usize, T, bool)> {
        let mut out = Vec::new();
        let mut child = leaf;
        while let Some((pid, node)) = self.nodes.iter().enumerate().find(|(_, n)| {
            matches!(n, Node::Split { left, right, .. } if *left == child || *right == child)
        }) {
            if let Node::Split {
                modifier,
                threshold,
                left,
                ..
            } = node
            {
                out.push((*modifier, *threshold, *left == child));
            }
            child = pid;
        }
        out.reverse();
        out
    }

    fn to_document(&self, id: usize, names: &[String]) -> NodeDocument<T> {
        match &self.nodes[id] {
            Node::Leaf { coefficient } => NodeDocument::Leaf {
                id,
                coefficient: *coefficient,
            },
            Node::Split {
                modifier,
                threshold,
                left,
                right,
            } => NodeDocument::Split {
                id,
                j: self.target,
                k: *modifier,
                modifier: names.get(*modifier).cloned().unwrap_or_default(),
                c: *threshold,
                left: Box::new(self.to_document(*left, names)),
                right: Box::new(self.to_document(*right, names)),
            },
        }
    }

    fn from_document(target: usize, root: &NodeDocument<T>) -> Result<Self> {
        let mut slots: Vec<Option<Node<T>>> = Vec::new();
        fn visit<T: Scalar>(
            target: usize,
            doc: &NodeDocument<T>,
            slots: &mut Vec<Option<Node<T>>>,
        ) -> Result<()> {
            let (id, node) = match doc {
                NodeDocument::Leaf { id, coefficient } => (
                    *id,
                    Node::Leaf {
                        coefficient: *coefficient,
                    },
                ),
                NodeDocument::Split {
                    id,
                    j,
                    k,
                    c,
                    left,
                    right,
                    ..
                } => {
                    if *j != target || *k == target {
                        return Err(Error::InvalidDataset(format!(
                            "split node {id} has inconsistent covariates (j={j}, k={k})"
                        )));
                    }
                    visit(target, left, slots)?;
                    visit(target, right, slots)?;
                    (
                        *id,
                        Node::Split {
                            modifier: *k,
                            threshold: *c,
                            left: left.id(),
                            right: right.id(),
                        },
                    )
                }
            };
            if slots.len() <= id {
                slots.resize(id + 1, None);
            }
            if slots[id].replace(node).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate node id {id}")));
            }
            Ok(())
        }
        visit(target, root, &mut slots)?;
        let nodes = slots
            .into_iter()
            .enumerate()
            .map(|(id, n)| n.ok_or_else(|| Error::InvalidDataset(format!("missing node id {id}"))))
            .collect::<Result<Vec<_>>>()?;
        if root.id() != 0 {
            return Err(Error::InvalidDataset("tree root must have id 0".into()));
        }
        Ok(Self { target, nodes })
    }
}

/// Fitted TSVC model with its least-squares fit on the expanded design.
#[derive(Debug, Clone, PartialEq)]
pub struct TsvcModel<T: Scalar = f64> {
    pub intercept: T,
    pub trees: Vec<CoefficientTree<T>>,
    pub names: Vec<String>,
    pub fit: LinearFit<T>,
    pub n: usize,
    pub p: usize,
}

impl<T: Scalar> TsvcModel<T> {
    /// Fits the leaf coefficients for fixed tree structures.
    pub fn fit(dataset: &Dataset<T>, trees: Vec<CoefficientTree<T>>) -> Result<Self> {
        let design = build_design(dataset, &trees)?;
        let fit = crate::model::solve_least_squares(&design, dataset.y())?;
        Ok(Self::from_fit(dataset, trees, fit))
    }

    pub(crate) fn from_fit(
        dataset: &Dataset<T>,
        mut trees: Vec<CoefficientTree<T>>,
        fit: LinearFit<T>,
    ) -> Self {
        let mut col = 1;
        for tree in &mut trees {
            for leaf in tree.leaves() {
                tree.set_coefficient(leaf, fit.coefficients[col]);
                col += 1;
            }
        }
        Self {
            intercept: fit.coefficients[0],
            trees,
            names: dataset.names().to_vec(),
            fit,
            n: dataset.n(),
            p: dataset.p(),
        }
    }

    /// Total number of splits across all trees.
    pub fn s(&self) -> usize {
        self.trees.iter().map(CoefficientTree::n_splits).sum()
    }

    /// Free parameters `p + s + 1`.
    pub fn n_free_params(&self) -> usize {
        self.p + self.s() + 1
    }

    pub fn deviance(&self) -> T {
        self.fit.rss
    }

    /// Linear predictor for each row of `x_new`.
    pub fn predict(&self, x_new: &Matrix<T>) -> Result<Vec<T>> {
        predict_with(self.intercept, &self.trees, self.p, x_new)
    }

    pub fn to_document(&self) -> ModelDocument<T> {
        ModelDocument {
            names: self.names.clone(),
            intercept: self.intercept,
            trees: self
                .trees
                .iter()
                .map(|t| TreeDocument {
                    covariate: t.target,
                    name: self.names.get(t.target).cloned().unwrap_or_default(),
                    root: t.to_document(0, &self.names),
                })
                .collect(),
            s: self.s(),
            n: self.n,
            p: self.p,
            rss: self.fit.rss,
        }
    }
}

fn predict_with<T: Scalar>(
    intercept: T,
    trees: &[CoefficientTree<T>],
    p: usize,
    x_new: &Matrix<T>,
) -> Result<Vec<T>> {
    if x_new.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x_new.cols(),
        });
    }
    Ok((0..x_new.rows())
        .map(|i| {
            let mut eta = intercept;
            for tree in trees {
                let leaf = tree.leaf_for(|k| x_new[(i, k)]);
                let beta = tree.coefficient(leaf).unwrap_or_else(T::zero);
                eta += beta * x_new[(i, tree.target)];
            }
            eta
        })
        .collect())
}

/// Expanded design: intercept, then for each covariate (index order) one
/// column `x_j * I(row in leaf)` per leaf (creation order).
pub fn build_design<T: Scalar>(dataset: &Dataset<T>, trees: &[CoefficientTree<T>]) -> Result<Matrix<T>> {
    let (n, p) = (dataset.n(), dataset.p());
    check_trees(trees, p)?;
    let x = dataset.x();
    let n_cols = 1 + trees.iter().map(CoefficientTree::n_leaves).sum::<usize>();
    let mut design = Matrix::zeros(n, n_cols);
    design.col_mut(0).fill(T::one());
    let mut col = 1;
    for tree in trees {
        let assigned = tree.assign(x);
        let xj = x.col(tree.target);
        for leaf in tree.leaves() {
            let mut hits = 0;
            let c = design.col_mut(col);
            for i in 0..n {
                if assigned[i] == leaf {
                    c[i] = xj[i];
                    hits += 1;
                }
            }
            if hits == 0 {
                return Err(Error::EmptyLeaf {
                    covariate: tree.target,
                    leaf,
                });
            }
            col += 1;
        }
    }
    Ok(design)
}

pub(crate) fn check_trees<T: Scalar>(trees: &[CoefficientTree<T>], p: usize) -> Result<()> {
    if trees.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: trees.len(),
        });
    }
    for (j, tree) in trees.iter().enumerate() {
        if tree.target != j {
            return Err(Error::Domain(format!(
                "tree {j} targets covariate {}",
                tree.target
            )));
        }
        for node in &tree.nodes {
            if let Node::Split { modifier, .. } = node {
                if *modifier >= p || *modifier == j {
                    return Err(Error::Domain(format!(
                        "tree {j} splits on invalid modifier {modifier}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Unsplit trees for `p` covariates.
pub fn linear_trees<T: Scalar>(p: usize) -> Vec<CoefficientTree<T>> {
    (0..p).map(CoefficientTree::new).collect()
}

/// Serializable form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument<T = f64> {
    pub names: Vec<String>,
    pub intercept: T,
    pub trees: Vec<TreeDocument<T>>,
    pub s: usize,
    pub n: usize,
    pub p: usize,
    pub rss: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument<T = f64> {
    pub covariate: usize,
    pub name: String,
    pub root: NodeDocument<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum NodeDocument<T = f64> {
    Leaf {
        id: usize,
        coefficient: T,
    },
    Split {
        id: usize,
        j: usize,
        k: usize,
        modifier: String,
        c: T,
        left: Box<NodeDocument<T>>,
        right: Box<NodeDocument<T>>,
    },
}

impl<T> NodeDocument<T> {
    fn id(&self) -> usize {
        match self {
            NodeDocument::Leaf { id, .. } | NodeDocument::Split { id, .. } => *id,
        }
    }
}

impl<T: Scalar> ModelDocument<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rebuilds the coefficient trees.
    pub fn trees(&self) -> Result<Vec<CoefficientTree<T>>> {
        let trees = self
            .trees
            .iter()
            .map(|t| CoefficientTree::from_document(t.covariate, &t.root))
            .collect::<Result<Vec<_>>>()?;
        check_trees(&trees, self.p)?;
        Ok(trees)
    }

    pub fn predict(&self, x_new: &Matrix<T>) -> Result<Vec<T>> {
        predict_with(self.intercept, &self.trees()?, self.p, x_new)
    }
}
