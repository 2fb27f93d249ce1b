//! Reference solver and random instance generators for tests.
//!
//! The reference solver works directly on the vectorized problem: one unknown
//! per free entry of the mask, one linear constraint per pair of consecutive
//! members of a cluster and per source cluster ("these two nodes receive the
//! same total weight"). It never touches the orthonormal bases or the
//! multiplier system used by [`crate::control`]; redundant constraints are
//! removed by row reduction and the minimum-norm point comes from the KKT
//! system `[I Cᵀ; C 0]`.

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::control::SparsityMask;
use crate::model::{NetworkSpec, Partition};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Feasible {
        delta: DMatrix<f64>,
        norm: f64,
    },
    /// Largest leftover right-hand side of a constraint row that reduced to zero.
    Infeasible {
        inconsistency: f64,
    },
}

impl OracleOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, OracleOutcome::Feasible { .. })
    }
}

const PIVOT_TOL: f64 = 1e-9;

/// Minimum-norm `Δ` supported on `h_eff` that equalizes the inter-cluster
/// row sums of `a_bar + Δ`.
pub fn brute_force_repair(
    a_bar: &DMatrix<f64>,
    partition: &Partition,
    h_eff: &DMatrix<f64>,
    tol: f64,
) -> OracleOutcome {
    let n = partition.n();
    let free: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| h_eff[(i, j)] != 0.0)
        .collect();
    let var_of = |i: usize, j: usize| free.iter().position(|&e| e == (i, j));

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for source in partition.clusters() {
        for target in partition.clusters() {
            for pair in target.windows(2) {
                let (r, s) = (pair[0], pair[1]);
                let mut row = vec![0.0; free.len()];
                let mut gap = 0.0;
                for &k in source {
                    gap += a_bar[(r, k)] - a_bar[(s, k)];
                    if let Some(v) = var_of(r, k) {
                        row[v] += 1.0;
                    }
                    if let Some(v) = var_of(s, k) {
                        row[v] -= 1.0;
                    }
                }
                rows.push(row);
                rhs.push(-gap);
            }
        }
    }

    let scale = 1.0 + rhs.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let (basis_rows, basis_rhs, inconsistency) = row_reduce(rows, rhs);
    if inconsistency > tol * scale {
        return OracleOutcome::Infeasible { inconsistency };
    }

    let nv = free.len();
    let nc = basis_rows.len();
    let mut delta = DMatrix::zeros(n, n);
    if nv > 0 && nc > 0 {
        let size = nv + nc;
        let mut kkt = DMatrix::zeros(size, size);
        let mut b = DVector::zeros(size);
        for v in 0..nv {
            kkt[(v, v)] = 1.0;
        }
        for (c, row) in basis_rows.iter().enumerate() {
            for v in 0..nv {
                kkt[(nv + c, v)] = row[v];
                kkt[(v, nv + c)] = row[v];
            }
            b[nv + c] = basis_rhs[c];
        }
        let x =
            gauss_solve(kkt, b).expect("KKT matrix with independent constraints is nonsingular");
        for (v, &(i, j)) in free.iter().enumerate() {
            delta[(i, j)] = x[v];
        }
    }
    let norm = delta.norm();
    OracleOutcome::Feasible { delta, norm }
}

/// Gaussian elimination with partial pivoting on `[C | d]`. Returns the
/// independent rows, their right-hand sides, and the largest |d| left on a row
/// that reduced to zero.
fn row_reduce(mut rows: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let nr = rows.len();
    let nv = rows.first().map_or(0, Vec::len);
    let mut pivot_row = 0;
    for col in 0..nv {
        if pivot_row == nr {
            break;
        }
        let (best, best_val) =
            (pivot_row..nr)
                .map(|r| (r, rows[r][col].abs()))
                .fold(
                    (pivot_row, -1.0),
                    |acc, x| if x.1 > acc.1 { x } else { acc },
                );
        if best_val <= PIVOT_TOL {
            continue;
        }
        rows.swap(pivot_row, best);
        rhs.swap(pivot_row, best);
        for r in pivot_row + 1..nr {
            let f = rows[r][col] / rows[pivot_row][col];
            if f != 0.0 {
                for c in col..nv {
                    rows[r][c] -= f * rows[pivot_row][c];
                }
                rhs[r] -= f * rhs[pivot_row];
            }
        }
        pivot_row += 1;
    }
    let inconsistency = rhs[pivot_row..]
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    rows.truncate(pivot_row);
    rhs.truncate(pivot_row);
    (rows, rhs, inconsistency)
}

fn gauss_solve(mut a: DMatrix<f64>, mut b: DVector<f64>) -> Option<DVector<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))?;
        if a[(p, col)].abs() < 1e-14 {
            return None;
        }
        a.swap_rows(p, col);
        b.swap_rows(p, col);
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            if f != 0.0 {
                for c in col..n {
                    a[(r, c)] -= f * a[(col, c)];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = DVector::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[(r, c)] * x[c]).sum();
        x[r] = (b[r] - s) / a[(r, r)];
    }
    Some(x)
}

/// `m` non-empty clusters over `n` shuffled nodes.
pub fn random_partition<R: Rng>(rng: &mut R, n: usize, m: usize) -> Partition {
    assert!(m >= 2 && m <= n);
    let mut labels: Vec<usize> = (0..n)
        .map(|i| if i < m { i } else { rng.random_range(0..m) })
        .collect();
    labels.shuffle(rng);
    Partition::from_membership(&labels).expect("labels cover 0..m")
}

/// Dense weights in `[-range, range]` with zero diagonal.
pub fn random_weights<R: Rng>(rng: &mut R, n: usize, range: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            rng.random_range(-range..range)
        }
    })
}

/// Mask switching on at least `ceil(density * count)` of the inter-cluster
/// positions (chosen uniformly), plus random intra-cluster noise that the
/// solvers must ignore.
pub fn random_mask<R: Rng>(rng: &mut R, partition: &Partition, density: f64) -> SparsityMask {
    let n = partition.n();
    let mut inter: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !partition.same_cluster(i, j))
        .collect();
    inter.shuffle(rng);
    let keep = ((density * inter.len() as f64).ceil() as usize).min(inter.len());
    let mut h = DMatrix::zeros(n, n);
    for &(i, j) in &inter[..keep] {
        h[(i, j)] = 1.0;
    }
    for i in 0..n {
        for j in 0..n {
            if partition.same_cluster(i, j) && rng.random_bool(0.5) {
                h[(i, j)] = 1.0;
            }
        }
    }
    SparsityMask::new(h).expect("0/1 entries")
}

/// Weights satisfying the row-sum condition exactly: within each
/// (target cluster, source cluster) block every row sums to a common random
/// value. Entries are drawn in `[lo, hi]` and the first source column of each
/// row absorbs the difference. Intra-cluster entries are drawn in `[lo, hi]`
/// too (they do not affect the condition).
pub fn random_balanced_weights<R: Rng>(
    rng: &mut R,
    partition: &Partition,
    lo: f64,
    hi: f64,
) -> DMatrix<f64> {
    let n = partition.n();
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            rng.random_range(lo..=hi)
        }
    });
    for target in partition.clusters() {
        for source in partition.clusters() {
            if std::ptr::eq(target, source) {
                continue;
            }
            let common = rng.random_range(lo..=hi) * source.len() as f64;
            let (first, rest) = source.split_first().expect("non-empty cluster");
            for &i in target {
                let others: f64 = rest.iter().map(|&k| a[(i, k)]).sum();
                a[(i, *first)] = common - others;
            }
        }
    }
    a
}

/// Picks a random inter-cluster position of `a` and adds `amount` to it.
/// Returns the position.
pub fn bump_inter_cluster_entry<R: Rng>(
    rng: &mut R,
    a: &mut DMatrix<f64>,
    partition: &Partition,
    amount: f64,
) -> (usize, usize) {
    let n = partition.n();
    let inter: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !partition.same_cluster(i, j))
        .collect();
    let (i, j) = *inter
        .choose(rng)
        .expect("m >= 2 gives inter-cluster positions");
    a[(i, j)] += amount;
    (i, j)
}

/// Natural frequencies equal within clusters, distinct clusters at least
/// `min_gap` apart (cluster order shuffled).
pub fn separated_cluster_frequencies<R: Rng>(
    rng: &mut R,
    partition: &Partition,
    min_gap: f64,
) -> DVector<f64> {
    let m = partition.m();
    let mut levels: Vec<f64> = Vec::with_capacity(m);
    let mut level = rng.random_range(-10.0..10.0);
    for _ in 0..m {
        levels.push(level);
        level += min_gap + rng.random_range(0.0..min_gap);
    }
    levels.shuffle(rng);
    DVector::from_iterator(
        partition.n(),
        partition.membership().iter().map(|&k| levels[k]),
    )
}

/// Network breaking the row-sum condition in exactly one row by `gap` (at
/// least `min_gap` in magnitude) while natural frequencies satisfy the
/// frequency condition with clusters `min_omega_gap` apart. Cluster sizes are
/// at least 2 so every cluster can desynchronize.
pub fn random_violating_network<R: Rng>(
    rng: &mut R,
    min_gap: f64,
    min_omega_gap: f64,
) -> (NetworkSpec, Partition) {
    let m = rng.random_range(2..=3);
    let n = rng.random_range(2 * m..=8);
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < 2 * m {
                i % m
            } else {
                rng.random_range(0..m)
            }
        })
        .collect();
    labels.shuffle(rng);
    let partition = Partition::from_membership(&labels).expect("labels cover 0..m");
    let mut a = random_balanced_weights(rng, &partition, 0.0, 3.0);
    let magnitude = rng.random_range(min_gap..=4.0 * min_gap);
    let gap = if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    };
    bump_inter_cluster_entry(rng, &mut a, &partition, gap);
    let omega = separated_cluster_frequencies(rng, &partition, min_omega_gap);
    (
        NetworkSpec::new(a, omega).expect("finite weights"),
        partition,
    )
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub network: NetworkSpec,
    pub partition: Partition,
    pub mask: SparsityMask,
}

/// `n` in `[4, 12]`, `m` in `[2, 4]`, weights in `[-5, 5]`, mask density in
/// `[0.4, 1]` over inter-cluster positions.
pub fn random_repair_instance<R: Rng>(rng: &mut R) -> RandomInstance {
    let n = rng.random_range(4..=12);
    let m = rng.random_range(2..=4);
    let partition = random_partition(rng, n, m);
    let weights = random_weights(rng, n, 5.0);
    let density = rng.random_range(0.4..=1.0);
    let mask = random_mask(rng, &partition, density);
    let omega = DVector::zeros(n);
    RandomInstance {
        network: NetworkSpec::new(weights, omega).expect("finite weights"),
        partition,
        mask,
    }
}
