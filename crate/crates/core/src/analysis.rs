//! Synchronizability of a partition.
//!
//! A partition is phase synchronizable iff
//!
//! * every node of a cluster receives the same total weight from each other
//!   cluster (row-sum condition), and
//! * natural frequencies are equal inside each cluster.
//!
//! The row-sum condition is checked twice: pairwise on row sums, and as the
//! matrix test `v_comp^T Ā v_norm = 0`. [`classify`] runs both and refuses to
//! answer if they disagree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_inter_cluster_matrix, CharacteristicBasis, InterClusterMatrix, NetworkSpec, Partition,
};
use crate::simulator::Trajectory;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative threshold used by every structural equality test.
pub fn structural_threshold(tol: f64, scale: f64) -> f64 {
    tol * (1.0 + scale)
}

/// Nodes `i`, `j` of cluster `cluster_pair.1` receive different total weight
/// from cluster `cluster_pair.0`; `gap = Σ_{k∈source} a_ik − a_jk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightViolation {
    pub cluster_pair: (usize, usize),
    pub node_pair: (usize, usize),
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyViolation {
    pub cluster: usize,
    pub node_pair: (usize, usize),
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightCheck {
    pub ok: bool,
    pub violations: Vec<WeightViolation>,
    /// Largest |gap| over all node pairs, violating or not.
    pub max_gap: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCheck {
    pub ok: bool,
    pub violations: Vec<FrequencyViolation>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceCheck {
    pub ok: bool,
    pub residual: f64,
    pub threshold: f64,
}

fn check_partition(n: usize, partition: &Partition) -> Result<()> {
    if partition.n() != n {
        return Err(Error::Dimension(format!(
            "network has {n} nodes, partition covers {}",
            partition.n()
        )));
    }
    Ok(())
}

/// Total weight each node receives from each cluster, n x m.
pub fn cluster_row_sums(net: &NetworkSpec, partition: &Partition) -> Result<Vec<Vec<f64>>> {
    check_partition(net.n(), partition)?;
    let a = net.weights();
    Ok((0..net.n())
        .map(|i| {
            partition
                .clusters()
                .iter()
                .map(|c| c.iter().map(|&k| a[(i, k)]).sum())
                .collect()
        })
        .collect())
}

fn inter_cluster_max_abs(net: &NetworkSpec, partition: &Partition) -> f64 {
    let a = net.weights();
    let n = net.n();
    let mut max: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !partition.same_cluster(i, j) {
                max = max.max(a[(i, j)].abs());
            }
        }
    }
    max
}

/// Pairwise row-sum test. Every ordered node pair `i != j` of each cluster is
/// checked against every other cluster, and all violations are returned.
pub fn check_weight_condition(
    net: &NetworkSpec,
    partition: &Partition,
    tol: f64,
) -> Result<WeightCheck> {
    let sums = cluster_row_sums(net, partition)?;
    let threshold = structural_threshold(tol, inter_cluster_max_abs(net, partition));
    let mut violations = Vec::new();
    let mut max_gap: f64 = 0.0;
    for (target, members) in partition.clusters().iter().enumerate() {
        for source in (0..partition.m()).filter(|&z| z != target) {
            for &i in members {
                for &j in members.iter().filter(|&&j| j != i) {
                    let gap = sums[i][source] - sums[j][source];
                    max_gap = max_gap.max(gap.abs());
                    if gap.abs() > threshold {
                        violations.push(WeightViolation {
                            cluster_pair: (source, target),
                            node_pair: (i, j),
                            gap,
                        });
                    }
                }
            }
        }
    }
    Ok(WeightCheck {
        ok: violations.is_empty(),
        violations,
        max_gap,
        threshold,
    })
}

/// Equal natural frequencies inside every cluster.
pub fn check_frequency_condition(
    net: &NetworkSpec,
    partition: &Partition,
    tol: f64,
) -> Result<FrequencyCheck> {
    check_partition(net.n(), partition)?;
    let omega = net.omega();
    let threshold = structural_threshold(tol, omega.amax());
    let mut violations = Vec::new();
    for (k, members) in partition.clusters().iter().enumerate() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let gap = omega[i] - omega[j];
                if gap.abs() > threshold {
                    violations.push(FrequencyViolation {
                        cluster: k,
                        node_pair: (i, j),
                        gap,
                    });
                }
            }
        }
    }
    Ok(FrequencyCheck {
        ok: violations.is_empty(),
        violations,
        threshold,
    })
}

/// Matrix form of the row-sum test: max-abs entry of `v_comp^T Ā v_norm`.
pub fn check_invariance_matrix(
    a_bar: &InterClusterMatrix,
    basis: &CharacteristicBasis,
    tol: f64,
) -> Result<InvarianceCheck> {
    if a_bar.a_bar().nrows() != basis.n() {
        return Err(Error::Dimension(format!(
            "Ā is {}x{}, basis has {} rows",
            a_bar.a_bar().nrows(),
            a_bar.a_bar().ncols(),
            basis.n()
        )));
    }
    let block = basis.invariance_block(a_bar.a_bar());
    let residual = if block.is_empty() { 0.0 } else { block.amax() };
    let threshold = structural_threshold(tol, a_bar.max_abs());
    Ok(InvarianceCheck {
        ok: residual <= threshold,
        residual,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncVerdict {
    pub weight_condition_ok: bool,
    pub frequency_condition_ok: bool,
    pub synchronizable: bool,
    pub violations: Vec<WeightViolation>,
    pub frequency_violations: Vec<FrequencyViolation>,
    pub matrix_residual: f64,
}

/// Runs both structural tests and the frequency test.
///
/// Exact arithmetic gives `residual <= max_gap <= sqrt(2) * n * residual`, so
/// the two structural tests may only disagree when the pairwise gap sits
/// inside that band above the threshold.
pub fn classify(net: &NetworkSpec, partition: &Partition, tol: f64) -> Result<SyncVerdict> {
    let basis = CharacteristicBasis::new(partition)?;
    let a_bar = build_inter_cluster_matrix(net, &basis)?;
    let weights = check_weight_condition(net, partition, tol)?;
    let matrix = check_invariance_matrix(&a_bar, &basis, tol)?;
    let freqs = check_frequency_condition(net, partition, tol)?;

    let slack = 1.0 + 1e-6;
    let band = std::f64::consts::SQRT_2 * net.n() as f64;
    let inconsistent = match (weights.ok, matrix.ok) {
        (true, false) => matrix.residual > weights.threshold * slack,
        (false, true) => weights.max_gap > band * matrix.threshold * slack,
        _ => false,
    };
    if inconsistent {
        return Err(Error::InternalInconsistency(format!(
            "row-sum test says {} (max gap {:.3e}) but matrix test says {} (residual {:.3e})",
            weights.ok, weights.max_gap, matrix.ok, matrix.residual
        )));
    }

    Ok(SyncVerdict {
        weight_condition_ok: weights.ok,
        frequency_condition_ok: freqs.ok,
        synchronizable: weights.ok && freqs.ok,
        violations: weights.violations,
        frequency_violations: freqs.violations,
        matrix_residual: matrix.residual,
    })
}

/// Inclusive run of sample indices over which the per-cluster maximal
/// frequencies keep one strict order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedInterval {
    pub start: usize,
    pub end: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Cluster indices from fastest to slowest.
    pub ordering: Vec<usize>,
}

/// Margin used by [`check_assumption_a1`], relative to `1 + max|freq|`.
pub const DEFAULT_ORDER_MARGIN: f64 = 1e-9;

/// Maximal runs (at least two samples) where the cluster-wise maximal
/// frequencies are strictly ordered, with a fixed order. Advisory only.
pub fn check_assumption_a1(
    traj: &Trajectory,
    partition: &Partition,
) -> Result<Vec<OrderedInterval>> {
    check_assumption_a1_with_margin(traj, partition, DEFAULT_ORDER_MARGIN)
}

/// As [`check_assumption_a1`]; consecutive ordered maxima must differ by more
/// than `margin * (1 + max|freq|)` at each sample.
pub fn check_assumption_a1_with_margin(
    traj: &Trajectory,
    partition: &Partition,
    margin: f64,
) -> Result<Vec<OrderedInterval>> {
    check_partition(traj.n(), partition)?;
    let gap = structural_threshold(
        margin,
        if traj.is_empty() {
            0.0
        } else {
            traj.freqs.amax()
        },
    );

    let order_at = |t: usize| -> Option<Vec<usize>> {
        let maxima: Vec<f64> = partition
            .clusters()
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&i| traj.freqs[(t, i)])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut order: Vec<usize> = (0..maxima.len()).collect();
        order.sort_by(|&a, &b| maxima[b].total_cmp(&maxima[a]));
        order
            .windows(2)
            .all(|w| maxima[w[0]] - maxima[w[1]] > gap)
            .then_some(order)
    };

    let mut intervals = Vec::new();
    let mut current: Option<(usize, Vec<usize>)> = None;
    let close = |start: usize, end: usize, ordering: Vec<usize>, out: &mut Vec<OrderedInterval>| {
        if end > start {
            out.push(OrderedInterval {
                start,
                end,
                t_start: traj.times[start],
                t_end: traj.times[end],
                ordering,
            });
        }
    };
    for t in 0..traj.len() {
        let order = order_at(t);
        current = match (current.take(), order) {
            (Some((start, prev)), Some(order)) if prev == order => Some((start, prev)),
            (Some((start, prev)), next) => {
                close(start, t - 1, prev, &mut intervals);
                next.map(|o| (t, o))
            }
            (None, next) => next.map(|o| (t, o)),
        };
    }
    if let Some((start, prev)) = current {
        close(start, traj.len() - 1, prev, &mut intervals);
    }
    Ok(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use nalgebra::{DMatrix, DVector};

    fn with_omega(net: &NetworkSpec, omega: &[f64]) -> NetworkSpec {
        net.with_omega(DVector::from_row_slice(omega)).unwrap()
    }

    #[test]
    fn balanced_six_node_row_sums() {
        let (net, p) = fixtures::balanced_six_node();
        let sums = cluster_row_sums(&net, &p).unwrap();
        for (i, row) in sums.iter().enumerate().take(3) {
            assert_eq!(row[1], 10.0, "row {i}");
        }
        for (i, row) in sums.iter().enumerate().skip(3) {
            assert_eq!(row[0], 9.0, "row {i}");
        }
        let check = check_weight_condition(&net, &p, DEFAULT_TOL).unwrap();
        assert!(check.ok);
        assert!(check.violations.is_empty());
    }

    #[test]
    fn unbalanced_six_node_violations() {
        let (net, p, _) = fixtures::unbalanced_six_node();
        let check = check_weight_condition(&net, &p, DEFAULT_TOL).unwrap();
        assert!(!check.ok);
        let mut found: Vec<_> = check
            .violations
            .iter()
            .map(|v| (v.cluster_pair, v.node_pair, v.gap))
            .collect();
        found.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            found,
            vec![
                ((1, 0), (0, 1), 2.0),
                ((1, 0), (0, 2), 2.0),
                ((1, 0), (1, 0), -2.0),
                ((1, 0), (2, 0), -2.0),
            ]
        );
    }

    #[test]
    fn identical_inter_cluster_blocks_pass() {
        let p = Partition::new(vec![vec![0, 1], vec![2, 3, 4]], 5).unwrap();
        let mut a = DMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                if !p.same_cluster(i, j) {
                    a[(i, j)] = if p.cluster_of(i) == 0 { 1.25 } else { -0.5 };
                }
            }
        }
        a[(0, 1)] = 7.0;
        let net = NetworkSpec::new(a, DVector::zeros(5)).unwrap();
        assert!(check_weight_condition(&net, &p, DEFAULT_TOL).unwrap().ok);
    }

    #[test]
    fn frequency_condition_cases() {
        let (net, p) = fixtures::balanced_six_node();
        for omega in [
            [30.0, 30.0, 30.0, 10.0, 10.0, 10.0],
            [19.0, 19.0, 19.0, 10.0, 10.0, 10.0],
        ] {
            let check =
                check_frequency_condition(&with_omega(&net, &omega), &p, DEFAULT_TOL).unwrap();
            assert!(check.ok);
        }
        let check = check_frequency_condition(
            &with_omega(&net, &[1.0, 2.0, 1.0, 1.0, 1.0, 1.0]),
            &p,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(!check.ok);
        assert!(check
            .violations
            .iter()
            .any(|v| v.cluster == 0 && v.node_pair == (0, 1)));
    }

    #[test]
    fn invariance_matrix_cases() {
        let (net, p) = fixtures::balanced_six_node();
        let basis = CharacteristicBasis::new(&p).unwrap();
        let a_bar = build_inter_cluster_matrix(&net, &basis).unwrap();
        let check = check_invariance_matrix(&a_bar, &basis, DEFAULT_TOL).unwrap();
        assert!(check.ok);
        assert!(check.residual <= 1e-12);

        let (net, p, _) = fixtures::unbalanced_six_node();
        let basis = CharacteristicBasis::new(&p).unwrap();
        let a_bar = build_inter_cluster_matrix(&net, &basis).unwrap();
        let check = check_invariance_matrix(&a_bar, &basis, DEFAULT_TOL).unwrap();
        assert!(!check.ok);
        assert!(check.residual > 0.0);

        let zero = NetworkSpec::new(DMatrix::zeros(6, 6), DVector::zeros(6)).unwrap();
        let a_bar = build_inter_cluster_matrix(&zero, &basis).unwrap();
        let check = check_invariance_matrix(&a_bar, &basis, DEFAULT_TOL).unwrap();
        assert!(check.ok);
        assert_eq!(check.residual, 0.0);
    }

    #[test]
    fn classify_cases() {
        let (net, p) = fixtures::balanced_six_node();
        let v = classify(
            &with_omega(&net, &[30.0, 30.0, 30.0, 10.0, 10.0, 10.0]),
            &p,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(v.synchronizable);

        let v = classify(
            &with_omega(&net, &[30.0, 29.0, 30.0, 10.0, 10.0, 10.0]),
            &p,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(v.weight_condition_ok);
        assert!(!v.frequency_condition_ok);
        assert!(!v.synchronizable);

        let (net, p, _) = fixtures::unbalanced_six_node();
        let v = classify(&net, &p, DEFAULT_TOL).unwrap();
        assert!(!v.synchronizable);
        assert!(!v.weight_condition_ok);
        // every violation involves node 0 receiving from cluster 1
        assert!(v
            .violations
            .iter()
            .all(|x| x.cluster_pair == (1, 0) && (x.node_pair.0 == 0 || x.node_pair.1 == 0)));
    }

    #[test]
    fn violation_report_serializes_as_tuples() {
        let v = WeightViolation {
            cluster_pair: (1, 0),
            node_pair: (0, 1),
            gap: 2.0,
        };
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(
            json,
            r#"{"cluster_pair":[1,0],"node_pair":[0,1],"gap":2.0}"#
        );
    }

    fn traj(freqs: &[&[f64]]) -> Trajectory {
        let n = freqs[0].len();
        let flat: Vec<f64> = freqs.iter().flat_map(|r| r.iter().copied()).collect();
        Trajectory {
            times: (0..freqs.len()).map(|k| k as f64 * 0.5).collect(),
            thetas: DMatrix::zeros(freqs.len(), n),
            freqs: DMatrix::from_row_slice(freqs.len(), n, &flat),
        }
    }

    #[test]
    fn a1_runs() {
        let p = Partition::new(vec![vec![0, 1], vec![2]], 3).unwrap();
        let t = traj(&[
            &[3.0, 1.0, 2.0],
            &[3.0, 1.0, 2.0],
            &[1.0, 1.0, 2.0],
            &[2.0, 2.0, 2.0],
            &[1.0, 0.0, 2.0],
            &[1.0, 0.0, 2.0],
            &[1.0, 0.0, 2.0],
            &[5.0, 0.0, 2.0],
        ]);
        let runs = check_assumption_a1(&t, &p).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(
            (runs[0].start, runs[0].end, runs[0].ordering.clone()),
            (0, 1, vec![0, 1])
        );
        assert_eq!(
            (runs[1].start, runs[1].end, runs[1].ordering.clone()),
            (4, 6, vec![1, 0])
        );
        assert_eq!(runs[1].t_start, 2.0);
        assert_eq!(runs[1].t_end, 3.0);
    }

    #[test]
    fn a1_single_samples_do_not_count() {
        let p = Partition::new(vec![vec![0], vec![1]], 2).unwrap();
        let t = traj(&[&[1.0, 1.0], &[2.0, 1.0], &[1.0, 1.0]]);
        assert!(check_assumption_a1(&t, &p).unwrap().is_empty());
    }
}
