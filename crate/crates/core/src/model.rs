//! Network, partition and the matrix scaffolding built from them.
//!
//! Edge convention: `weights[(i, j)]` is the influence of oscillator `j` on
//! oscillator `i`, so row `i` collects everything that drives node `i`.
//!
//! Two versions of the characteristic matrix are carried around. The binary
//! one (`v_bin`) gives the exact 0/1 intra-cluster mask and the row sums the
//! pairwise conditions talk about. The column-normalized one (`v_norm`)
//! together with the Helmert complement (`v_comp`) forms an orthogonal
//! matrix `T = [v_norm v_comp]`, which is what all projector and multiplier
//! algebra uses.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Directed weighted Kuramoto network: adjacency weights plus natural frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    weights: DMatrix<f64>,
    omega: DVector<f64>,
}

impl NetworkSpec {
    /// Builds a network, zeroing any self-loop weight.
    pub fn new(mut weights: DMatrix<f64>, omega: DVector<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::Dimension(format!(
                "weights must be square, got {}x{}",
                n,
                weights.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidNetwork(format!(
                "need at least 2 oscillators, got {n}"
            )));
        }
        if omega.len() != n {
            return Err(Error::Dimension(format!(
                "omega has length {} but the network has {} nodes",
                omega.len(),
                n
            )));
        }
        if let Some(((i, j), w)) = weights
            .iter()
            .enumerate()
            .map(|(idx, w)| ((idx % n, idx / n), w))
            .find(|(_, w)| !w.is_finite())
        {
            return Err(Error::InvalidNetwork(format!(
                "weight ({i}, {j}) is not finite: {w}"
            )));
        }
        if let Some((i, w)) = omega.iter().enumerate().find(|(_, w)| !w.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "omega[{i}] is not finite: {w}"
            )));
        }
        weights.fill_diagonal(0.0);
        Ok(Self { weights, omega })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn omega(&self) -> &DVector<f64> {
        &self.omega
    }

    /// Same natural frequencies, new weights (diagonal re-zeroed).
    pub fn with_weights(&self, weights: DMatrix<f64>) -> Result<Self> {
        Self::new(weights, self.omega.clone())
    }

    pub fn with_omega(&self, omega: DVector<f64>) -> Result<Self> {
        Self::new(self.weights.clone(), omega)
    }

    /// True when every node reaches every other along nonzero-weight edges.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n();
        // j -> i whenever weights[(i, j)] != 0
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    let w = if forward {
                        self.weights[(v, u)]
                    } else {
                        self.weights[(u, v)]
                    };
                    if w != 0.0 && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// Disjoint cover of `0..n` into `m >= 2` non-empty clusters.
///
/// Members of each cluster are kept in ascending order; cluster order is the
/// order given at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if clusters.len() < 2 {
            return Err(Error::InvalidPartition(format!(
                "need at least 2 clusters, got {}",
                clusters.len()
            )));
        }
        let mut membership = vec![usize::MAX; n];
        let mut sorted = Vec::with_capacity(clusters.len());
        for (k, cluster) in clusters.into_iter().enumerate() {
            if cluster.is_empty() {
                return Err(Error::InvalidPartition(format!("cluster {k} is empty")));
            }
            for &node in &cluster {
                if node >= n {
                    return Err(Error::InvalidPartition(format!(
                        "cluster {k} contains node {node}, but n = {n}"
                    )));
                }
                if membership[node] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "node {node} appears in clusters {} and {k}",
                        membership[node]
                    )));
                }
                membership[node] = k;
            }
            let mut cluster = cluster;
            cluster.sort_unstable();
            sorted.push(cluster);
        }
        if let Some(node) = membership.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPartition(format!(
                "node {node} is not covered by any cluster"
            )));
        }
        Ok(Self {
            clusters: sorted,
            membership,
        })
    }

    /// Partition from a node -> cluster label vector. Labels must be `0..m`.
    pub fn from_membership(membership: &[usize]) -> Result<Self> {
        let m = membership.iter().copied().max().map_or(0, |c| c + 1);
        let mut clusters = vec![Vec::new(); m];
        for (node, &c) in membership.iter().enumerate() {
            clusters[c].push(node);
        }
        Self::new(clusters, membership.len())
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn m(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster(&self, k: usize) -> &[usize] {
        &self.clusters[k]
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.membership[node]
    }

    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.membership[i] == self.membership[j]
    }

    /// A point of Im(V): every node of cluster `k` gets phase `k * step`.
    pub fn cluster_staircase(&self, step: f64) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.membership.iter().map(|&k| k as f64 * step))
    }
}

/// Binary n x m indicator matrix of the partition.
pub fn build_characteristic_matrix(partition: &Partition, n: usize) -> Result<DMatrix<f64>> {
    check_size(partition, n)?;
    let mut v = DMatrix::zeros(n, partition.m());
    for (k, cluster) in partition.clusters().iter().enumerate() {
        for &node in cluster {
            v[(node, k)] = 1.0;
        }
    }
    Ok(v)
}

/// Orthonormal basis of Im(V)^perp built from per-cluster Helmert contrasts.
///
/// For a cluster with members `p_0 < p_1 < ...`, the k-th column (k = 1..s-1)
/// has `1/sqrt(k(k+1))` on `p_0..p_{k-1}` and `-k/sqrt(k(k+1))` on `p_k`.
pub fn build_orthonormal_complement(partition: &Partition, n: usize) -> Result<DMatrix<f64>> {
    check_size(partition, n)?;
    let cols = n - partition.m();
    let mut v = DMatrix::zeros(n, cols);
    let mut col = 0;
    for cluster in partition.clusters() {
        for k in 1..cluster.len() {
            let kf = k as f64;
            let scale = (kf * (kf + 1.0)).sqrt();
            for &node in &cluster[..k] {
                v[(node, col)] = 1.0 / scale;
            }
            v[(cluster[k], col)] = -kf / scale;
            col += 1;
        }
    }
    debug_assert_eq!(col, cols);
    Ok(v)
}

fn check_size(partition: &Partition, n: usize) -> Result<()> {
    if partition.n() != n {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, expected {n}",
            partition.n()
        )));
    }
    Ok(())
}

/// `v_bin`, its column-normalized version and the orthonormal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicBasis {
    v_bin: DMatrix<f64>,
    v_norm: DMatrix<f64>,
    v_comp: DMatrix<f64>,
}

impl CharacteristicBasis {
    pub fn new(partition: &Partition) -> Result<Self> {
        let n = partition.n();
        let v_bin = build_characteristic_matrix(partition, n)?;
        let mut v_norm = v_bin.clone();
        for (k, mut col) in v_norm.column_iter_mut().enumerate() {
            col /= (partition.cluster(k).len() as f64).sqrt();
        }
        let v_comp = build_orthonormal_complement(partition, n)?;
        Ok(Self {
            v_bin,
            v_norm,
            v_comp,
        })
    }

    pub fn n(&self) -> usize {
        self.v_bin.nrows()
    }

    pub fn m(&self) -> usize {
        self.v_bin.ncols()
    }

    pub fn v_bin(&self) -> &DMatrix<f64> {
        &self.v_bin
    }

    pub fn v_norm(&self) -> &DMatrix<f64> {
        &self.v_norm
    }

    pub fn v_comp(&self) -> &DMatrix<f64> {
        &self.v_comp
    }

    /// Exact 0/1 mask of intra-cluster positions, `v_bin * v_bin^T`.
    pub fn intra_cluster_mask(&self) -> DMatrix<f64> {
        &self.v_bin * self.v_bin.transpose()
    }

    /// `T = [v_norm v_comp]`, an orthogonal n x n matrix.
    pub fn transform(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut t = DMatrix::zeros(n, n);
        t.view_mut((0, 0), (n, m)).copy_from(&self.v_norm);
        t.view_mut((0, m), (n, n - m)).copy_from(&self.v_comp);
        t
    }

    /// `v_comp^T * a * v_norm`, the block the invariance condition asks to vanish.
    pub fn invariance_block(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.v_comp.transpose() * a * &self.v_norm
    }
}

/// Adjacency with intra-cluster entries zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct InterClusterMatrix {
    a_bar: DMatrix<f64>,
}

impl InterClusterMatrix {
    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.a_bar
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.a_bar
    }

    pub fn max_abs(&self) -> f64 {
        if self.a_bar.is_empty() {
            0.0
        } else {
            self.a_bar.amax()
        }
    }
}

impl From<DMatrix<f64>> for InterClusterMatrix {
    /// Wraps a matrix that is already zero on intra-cluster positions, such as
    /// a repaired `Ā + Δ`.
    fn from(a_bar: DMatrix<f64>) -> Self {
        Self { a_bar }
    }
}

/// `A - A ⊙ (v_bin v_bin^T)`.
pub fn build_inter_cluster_matrix(
    net: &NetworkSpec,
    basis: &CharacteristicBasis,
) -> Result<InterClusterMatrix> {
    if net.n() != basis.n() {
        return Err(Error::Dimension(format!(
            "network has {} nodes, characteristic basis has {}",
            net.n(),
            basis.n()
        )));
    }
    let intra = basis.intra_cluster_mask();
    let a = net.weights();
    let a_bar = a - a.component_mul(&intra);
    Ok(InterClusterMatrix { a_bar })
}
