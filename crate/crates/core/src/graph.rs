//! Graph containers, node relabellings and perturbation metrics.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{shape_err, CsgnnError, Result};
use crate::linalg::{ensure_same_shape, ensure_square, frobenius_norm};

/// Label value for nodes without a class.
pub const UNLABELED: i64 = -1;

/// A dense attributed graph with node labels and train/val/test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub adjacency: Array2<f64>,
    pub features: Array2<f64>,
    pub labels: Vec<i64>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    binary: bool,
}

impl Graph {
    /// Builds a graph, checking shapes, mask disjointness and, when
    /// `binary` is set, that every adjacency entry is 0 or 1.
    pub fn new(
        adjacency: Array2<f64>,
        features: Array2<f64>,
        labels: Vec<i64>,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
        binary: bool,
    ) -> Result<Self> {
        let n = ensure_square("Graph::new", &adjacency.view())?;
        if features.nrows() != n {
            return Err(shape_err(
                "Graph::new features",
                format!("{n} rows"),
                format!("{} rows", features.nrows()),
            ));
        }
        for (name, len) in [
            ("labels", labels.len()),
            ("train_mask", train_mask.len()),
            ("val_mask", val_mask.len()),
            ("test_mask", test_mask.len()),
        ] {
            if len != n {
                return Err(shape_err(
                    "Graph::new",
                    format!("{name} of length {n}"),
                    len.to_string(),
                ));
            }
        }
        for i in 0..n {
            let hits = train_mask[i] as u8 + val_mask[i] as u8 + test_mask[i] as u8;
            if hits > 1 {
                return Err(CsgnnError::InvalidParameter(format!(
                    "node {i} belongs to more than one split"
                )));
            }
        }
        if binary && adjacency.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(CsgnnError::InvalidParameter(
                "binary graph has adjacency entries outside {0, 1}".into(),
            ));
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            train_mask,
            val_mask,
            test_mask,
            binary,
        })
    }

    /// A graph without labels or splits.
    pub fn unlabeled(adjacency: Array2<f64>, features: Array2<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        let binary = adjacency.iter().all(|&x| x == 0.0 || x == 1.0);
        Self::new(
            adjacency,
            features,
            vec![UNLABELED; n],
            vec![false; n],
            vec![false; n],
            vec![false; n],
            binary,
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency == self.adjacency.t()
    }

    /// Number of classes, `1 + max label`.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    /// Undirected edges `(i, j)` with `i < j` and a nonzero entry.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[[i, j]] != 0.0 || self.adjacency[[j, i]] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// Same graph with a new adjacency matrix; the binary flag is recomputed.
    pub fn with_adjacency(&self, adjacency: Array2<f64>) -> Result<Self> {
        let binary = adjacency.iter().all(|&x| x == 0.0 || x == 1.0);
        let mut g = self.clone();
        ensure_same_shape("Graph::with_adjacency", &g.adjacency.view(), &adjacency.view())?;
        g.adjacency = adjacency;
        g.binary = binary;
        Ok(g)
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        ensure_same_shape("Graph::with_features", &self.features.view(), &features.view())?;
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }
}

/// A node relabelling. Node `i` of the permuted graph is node `perm[i]` of
/// the original, i.e. the matrix `P` has `P[i, perm[i]] = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    perm: Vec<usize>,
}

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(CsgnnError::InvalidPermutation(format!(
                    "index {p} out of range or repeated in a permutation of length {n}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect() }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// The matrix product `Q·P` where `self = Q`, so that permuting by the
    /// result equals permuting by `P` first and then by `Q`.
    pub fn compose(&self, first: &Permutation) -> Result<Permutation> {
        if self.len() != first.len() {
            return Err(shape_err(
                "Permutation::compose",
                self.len().to_string(),
                first.len().to_string(),
            ));
        }
        Ok(Permutation {
            perm: self.perm.iter().map(|&q| first.perm[q]).collect(),
        })
    }

    /// `P A Pᵀ`.
    pub fn conjugate(&self, a: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = ensure_square("Permutation::conjugate", a)?;
        self.check_len(n)?;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| a[[self.perm[i], self.perm[j]]]))
    }

    /// `P F`.
    pub fn permute_rows(&self, f: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_len(f.nrows())?;
        Ok(f.select(Axis(0), &self.perm))
    }

    pub fn permute_vec<T: Clone>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        Ok(self.perm.iter().map(|&p| v[p].clone()).collect())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(shape_err("permutation length", n.to_string(), self.len().to_string()));
        }
        Ok(())
    }
}

/// Attack budget: Frobenius bound on feature perturbations and vectorized ℓ¹
/// bound on adjacency perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBudget {
    eps_feat: f64,
    eps_adj: f64,
}

impl PerturbationBudget {
    pub fn new(eps_feat: f64, eps_adj: f64) -> Result<Self> {
        if !(eps_feat >= 0.0 && eps_adj >= 0.0) {
            return Err(CsgnnError::InvalidParameter(format!(
                "budgets must be nonnegative, got ({eps_feat}, {eps_adj})"
            )));
        }
        Ok(Self { eps_feat, eps_adj })
    }

    pub fn eps_feat(&self) -> f64 {
        self.eps_feat
    }

    pub fn eps_adj(&self) -> f64 {
        self.eps_adj
    }
}

/// Number of entries where the two matrices differ (exact comparison).
pub fn l0_distance(a: &ArrayView2<f64>, a_star: &ArrayView2<f64>) -> Result<usize> {
    ensure_same_shape("l0_distance", a, a_star)?;
    Ok(a.iter().zip(a_star.iter()).filter(|(x, y)| x != y).count())
}

/// `Σ |A_ij − A*_ij|`.
pub fn l1_vec_distance(a: &ArrayView2<f64>, a_star: &ArrayView2<f64>) -> Result<f64> {
    ensure_same_shape("l1_vec_distance", a, a_star)?;
    Ok(a.iter().zip(a_star.iter()).map(|(x, y)| (x - y).abs()).sum())
}

pub fn frobenius_distance(f: &ArrayView2<f64>, f_star: &ArrayView2<f64>) -> Result<f64> {
    ensure_same_shape("frobenius_distance", f, f_star)?;
    Ok(frobenius_norm(&(f - f_star).view()))
}

/// Relabels the nodes of `g`: adjacency `PAPᵀ`, features `PF`, labels and
/// masks permuted alongside.
pub fn permute_graph(g: &Graph, p: &Permutation) -> Result<Graph> {
    Ok(Graph {
        adjacency: p.conjugate(&g.adjacency.view())?,
        features: p.permute_rows(&g.features.view())?,
        labels: p.permute_vec(&g.labels)?,
        train_mask: p.permute_vec(&g.train_mask)?,
        val_mask: p.permute_vec(&g.val_mask)?,
        test_mask: p.permute_vec(&g.test_mask)?,
        binary: g.binary,
    })
}

/// Indices where a mask is set.
pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
}

#[cfg(test)]
pub(crate) fn column_means(f: &ArrayView2<f64>, rows: &[usize]) -> ndarray::Array1<f64> {
    let mut acc = ndarray::Array1::zeros(f.ncols());
    for &r in rows {
        acc += &f.row(r);
    }
    if !rows.is_empty() {
        acc /= rows.len() as f64;
    }
    acc
}
