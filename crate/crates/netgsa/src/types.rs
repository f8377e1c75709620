//! Core data types shared across the crate.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg;

/// A samples-by-genes expression matrix with column labels.
#[derive(Clone, Debug)]
pub struct ExpressionMatrix {
    data: Array2<f64>,
    gene_ids: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(data: Array2<f64>, gene_ids: Vec<String>) -> Result<Self> {
        if gene_ids.len() != data.ncols() {
            return Err(Error::DimensionMismatch {
                context: "expression matrix labels",
                expected: data.ncols(),
                got: gene_ids.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "expression matrix contains non-finite values".into(),
            ));
        }
        Ok(Self { data, gene_ids })
    }

    /// Build with synthetic labels g1..gd; used by simulations and tests.
    pub fn unlabeled(data: Array2<f64>) -> Self {
        let ids = (1..=data.ncols()).map(|i| format!("g{i}")).collect();
        Self {
            data,
            gene_ids: ids,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    /// New matrix containing the given columns, in the given order.
    pub fn select_genes(&self, cols: &[usize]) -> Self {
        let data = self.data.select(Axis(1), cols);
        let ids = cols.iter().map(|&c| self.gene_ids[c].clone()).collect();
        Self {
            data,
            gene_ids: ids,
        }
    }

    /// New matrix containing the given rows, in the given order.
    pub fn select_samples(&self, rows: &[usize]) -> Self {
        Self {
            data: self.data.select(Axis(0), rows),
            gene_ids: self.gene_ids.clone(),
        }
    }

    /// Stack the samples of `self` and `other` (genes must agree).
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.gene_ids != other.gene_ids {
            return Err(Error::InvalidInput(
                "cannot pool samples: gene identifiers differ".into(),
            ));
        }
        let data = ndarray::concatenate(
            Axis(0),
            &[self.data.view(), other.data.view()],
        )
        .expect("row concatenation of equal-width matrices");
        Ok(Self {
            data,
            gene_ids: self.gene_ids.clone(),
        })
    }
}

/// A covariance (or second-moment) matrix together with the number of samples
/// that produced it. Symmetric with strictly positive diagonal.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    values: Array2<f64>,
    n: usize,
}

impl CovarianceMatrix {
    pub fn new(mut values: Array2<f64>, n: usize) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                context: "covariance matrix",
                expected: values.nrows(),
                got: values.ncols(),
            });
        }
        if !linalg::is_symmetric(&values, 1e-12) {
            return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
        }
        if (0..values.nrows()).any(|j| !(values[[j, j]] > 0.0)) {
            return Err(Error::InvalidInput(
                "covariance matrix has a non-positive diagonal entry".into(),
            ));
        }
        linalg::symmetrize(&mut values);
        Ok(Self { values, n })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// A symmetric precision (inverse covariance) matrix estimate.
#[derive(Clone, Debug)]
pub struct PrecisionMatrix {
    values: Array2<f64>,
}

impl PrecisionMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                context: "precision matrix",
                expected: values.nrows(),
                got: values.ncols(),
            });
        }
        if !linalg::is_symmetric(&values, 1e-9) {
            return Err(Error::InvalidInput("precision matrix is not symmetric".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Matrix of partial correlations -omega_jk / sqrt(omega_jj omega_kk),
    /// with ones on the diagonal.
    pub fn partial_correlations(&self) -> Array2<f64> {
        let d = self.dim();
        let mut out = Array2::<f64>::zeros((d, d));
        for j in 0..d {
            out[[j, j]] = 1.0;
            for k in (j + 1)..d {
                let denom = (self.values[[j, j]] * self.values[[k, k]]).sqrt();
                let r = -self.values[[j, k]] / denom;
                out[[j, k]] = r;
                out[[k, j]] = r;
            }
        }
        out
    }
}

/// An undirected graph on vertices 0..d without self loops, stored as a sorted
/// edge set. Edge pairs are normalized so that the smaller endpoint comes first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedGraph {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            edges: BTreeSet::new(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.d
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::InvalidInput(format!("self loop at vertex {a}")));
        }
        if a >= self.d || b >= self.d {
            return Err(Error::InvalidInput(format!(
                "edge ({a}, {b}) out of range for {} vertices",
                self.d
            )));
        }
        self.edges.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in sorted order, each as (smaller, larger).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Whether every edge of `self` is an edge of `other`.
    pub fn is_subgraph_of(&self, other: &Self) -> bool {
        self.d == other.d && self.edges.is_subset(&other.edges)
    }

    /// Vertices incident to no edge.
    pub fn isolated_vertices(&self) -> Vec<usize> {
        let mut touched = vec![false; self.d];
        for &(a, b) in &self.edges {
            touched[a] = true;
            touched[b] = true;
        }
        (0..self.d).filter(|&v| !touched[v]).collect()
    }

    /// Graph with vertices relabelled: vertex v becomes perm[v].
    pub fn relabelled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d {
            return Err(Error::DimensionMismatch {
                context: "graph relabelling",
                expected: self.d,
                got: perm.len(),
            });
        }
        let mut g = Self::new(self.d);
        for (a, b) in self.edges() {
            g.add_edge(perm[a], perm[b])?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn expression_matrix_validates_labels() {
        let data = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(ExpressionMatrix::new(data.clone(), vec!["a".into()]).is_err());
        let m = ExpressionMatrix::new(data, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(m.n_samples(), 2);
        assert_eq!(m.n_genes(), 2);
    }

    #[test]
    fn select_genes_keeps_order() {
        let data = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let m = ExpressionMatrix::unlabeled(data);
        let s = m.select_genes(&[2, 0]);
        assert_eq!(s.gene_ids(), &["g3".to_string(), "g1".to_string()]);
        assert_eq!(s.data()[[0, 0]], 3.0);
        assert_eq!(s.data()[[1, 1]], 4.0);
    }

    #[test]
    fn vstack_requires_matching_genes() {
        let a = ExpressionMatrix::unlabeled(array![[1.0, 2.0]]);
        let b = ExpressionMatrix::unlabeled(array![[3.0, 4.0]]);
        let pooled = a.vstack(&b).unwrap();
        assert_eq!(pooled.n_samples(), 2);
        let c = ExpressionMatrix::new(array![[1.0, 2.0]], vec!["x".into(), "y".into()]).unwrap();
        assert!(a.vstack(&c).is_err());
    }

    #[test]
    fn covariance_rejects_asymmetry_and_bad_diagonal() {
        assert!(CovarianceMatrix::new(array![[1.0, 0.5], [0.4, 1.0]], 10).is_err());
        assert!(CovarianceMatrix::new(array![[0.0, 0.0], [0.0, 1.0]], 10).is_err());
        assert!(CovarianceMatrix::new(array![[1.0, 0.5], [0.5, 1.0]], 10).is_ok());
    }

    #[test]
    fn graph_normalizes_and_deduplicates_edges() {
        let mut g = UndirectedGraph::new(4);
        g.add_edge(2, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(1, 2));
        assert!(g.has_edge(2, 1));
        assert!(g.add_edge(1, 1).is_err());
        assert!(g.add_edge(0, 4).is_err());
        assert_eq!(g.isolated_vertices(), vec![0, 3]);
    }

    #[test]
    fn subgraph_relation() {
        let mut small = UndirectedGraph::new(3);
        small.add_edge(0, 1).unwrap();
        let mut big = UndirectedGraph::new(3);
        big.add_edge(0, 1).unwrap();
        big.add_edge(1, 2).unwrap();
        assert!(small.is_subgraph_of(&big));
        assert!(!big.is_subgraph_of(&small));
    }

    #[test]
    fn partial_correlations_sign_and_scale() {
        // Omega = [[2, -1], [-1, 2]] has partial correlation +0.5.
        let p = PrecisionMatrix::new(array![[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        let r = p.partial_correlations();
        assert!((r[[0, 1]] - 0.5).abs() < 1e-15);
        assert_eq!(r[[0, 0]], 1.0);
    }
}
