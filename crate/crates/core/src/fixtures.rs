//! Small reference networks used by the tests, the docs and the CLI fixtures.
//!
//! Node indices are 0-based; cluster `{0,1,2}` is the first block of three
//! nodes and `{3,4,5}` the second.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::control::SparsityMask;
use crate::model::{NetworkSpec, Partition};

fn two_triples() -> Partition {
    Partition::new(vec![vec![0, 1, 2], vec![3, 4, 5]], 6).expect("static partition")
}

/// Six oscillators in two clusters of three whose inter-cluster row sums are
/// 10 (first cluster, from the second) and 9 (second cluster, from the first).
/// Natural frequencies `(30, 30, 30, 10, 10, 10)`.
pub fn balanced_six_node() -> (NetworkSpec, Partition) {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        0.0, 0.0, 0.0, 0.0, 0.0, 10.0,
        0.0, 0.0, 0.0, 5.0, 0.0, 5.0,
        0.0, 0.0, 0.0, 0.0, 10.0, 0.0,
        9.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 9.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 7.0, 2.0, 2.0, 0.0, 0.0,
    ]);
    let omega = DVector::from_vec(vec![30.0, 30.0, 30.0, 10.0, 10.0, 10.0]);
    (
        NetworkSpec::new(a, omega).expect("static network"),
        two_triples(),
    )
}

/// Inter-cluster weights of [`balanced_six_node`] with `a_05` raised to 12,
/// which breaks the row-sum balance of the first cluster, together with the
/// sparsity mask of edges that may be modified. Natural frequencies
/// `(19, 19, 19, 10, 10, 10)`.
pub fn unbalanced_six_node() -> (NetworkSpec, Partition, SparsityMask) {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        0.0, 0.0, 0.0, 0.0, 0.0, 12.0,
        0.0, 0.0, 0.0, 5.0, 0.0, 5.0,
        0.0, 0.0, 0.0, 0.0, 10.0, 0.0,
        9.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 9.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 7.0, 2.0, 0.0, 0.0, 0.0,
    ]);
    #[rustfmt::skip]
    let h = DMatrix::from_row_slice(6, 6, &[
        0.0, 1.0, 1.0, 0.0, 0.0, 0.0,
        1.0, 0.0, 1.0, 0.0, 1.0, 0.0,
        1.0, 1.0, 0.0, 0.0, 1.0, 1.0,
        0.0, 1.0, 1.0, 0.0, 1.0, 1.0,
        1.0, 1.0, 1.0, 1.0, 0.0, 1.0,
        1.0, 0.0, 0.0, 1.0, 1.0, 0.0,
    ]);
    let omega = DVector::from_vec(vec![19.0, 19.0, 19.0, 10.0, 10.0, 10.0]);
    (
        NetworkSpec::new(a, omega).expect("static network"),
        two_triples(),
        SparsityMask::new(h).expect("static mask"),
    )
}

/// Four-node bidirectional chain `0 - 1 - 2 - 3` with clusters `{0,1}` and
/// `{2,3}`, equal natural frequencies and initial phases `(0, 0, π, π)`.
///
/// The row-sum condition fails (only node 1 hears the other cluster), yet the
/// antipodal start keeps every frequency equal to the common natural one.
/// Intra-cluster coupling (2.0) dominates the inter-cluster link (0.2) so the
/// antipodal state does not amplify rounding.
pub fn antipodal_chain() -> (NetworkSpec, Partition, DVector<f64>) {
    let (intra, inter) = (2.0, 0.2);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0,   intra, 0.0,   0.0,
        intra, 0.0,   inter, 0.0,
        0.0,   inter, 0.0,   intra,
        0.0,   0.0,   intra, 0.0,
    ]);
    let omega = DVector::from_element(4, 1.0);
    let partition = Partition::new(vec![vec![0, 1], vec![2, 3]], 4).expect("static partition");
    (
        NetworkSpec::new(a, omega).expect("static network"),
        partition,
        DVector::from_vec(vec![0.0, 0.0, PI, PI]),
    )
}
