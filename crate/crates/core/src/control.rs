//! Minimum-Frobenius-norm weight perturbations that make a partition
//! synchronizable.
//!
//! Given `Ā` and a sparsity mask `H`, find `Δ` minimizing `‖Δ‖_F` subject to
//! `v_comp^T (Ā + Δ) v_norm = 0` and `Δ_ij = 0` wherever `H_ij = 0`.
//!
//! Stationarity of the Lagrangian gives `Δ = −(v_comp Λ v_norm^T) ⊙ H` for a
//! multiplier matrix `Λ` of shape `(n−m) x m`, and substituting into the
//! constraint leaves a square linear system `L(Λ) = v_comp^T Ā v_norm` in the
//! entries of `Λ`. `L` is symmetric positive semidefinite; the system is
//! solved by minimum-norm least squares and the problem is feasible exactly
//! when that system is consistent.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::structural_threshold;
use crate::error::{Error, Result, VerificationCheck};
use crate::model::{
    build_inter_cluster_matrix, CharacteristicBasis, InterClusterMatrix, NetworkSpec,
};

/// Singular values of `L` below this fraction of the largest are treated as zero.
const RANK_RTOL: f64 = 1e-12;

/// Entries of a computed `Δ` at most this fraction of `1 + max|Ā|` are
/// rounding noise and are stored as exact zeros.
const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Binary matrix of entries the perturbation may touch.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityMask {
    h: DMatrix<f64>,
}

impl SparsityMask {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::Dimension(format!(
                "mask must be square, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        if let Some(x) = h.iter().find(|&&x| x != 0.0 && x != 1.0) {
            return Err(Error::InvalidNetwork(format!(
                "mask entries must be 0 or 1, found {x}"
            )));
        }
        Ok(Self { h })
    }

    /// Every entry may change.
    pub fn all(n: usize) -> Self {
        Self {
            h: DMatrix::from_element(n, n, 1.0),
        }
    }

    pub fn none(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
        }
    }

    /// Mask with ones at the listed `(target, source)` positions.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut h = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!(
                    "mask edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            h[(i, j)] = 1.0;
        }
        Ok(Self { h })
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// The mask actually used by the solvers: diagonal and intra-cluster
    /// entries are switched off.
    pub fn effective(&self, basis: &CharacteristicBasis) -> Result<DMatrix<f64>> {
        if self.n() != basis.n() {
            return Err(Error::Dimension(format!(
                "mask is {}x{}, partition covers {} nodes",
                self.n(),
                self.n(),
                basis.n()
            )));
        }
        let inter = basis.intra_cluster_mask().map(|x| 1.0 - x);
        Ok(self.h.component_mul(&inter))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub delta: DMatrix<f64>,
    /// Lagrange multipliers, `(n−m) x m`.
    pub lambda: DMatrix<f64>,
    /// Max-abs entry of `v_comp^T (Ā + Δ) v_norm`.
    pub constraint_residual: f64,
    /// 2-norm residual of the multiplier system.
    pub kkt_residual: f64,
    pub feasible: bool,
    pub frobenius_norm: f64,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

fn check_dims(a_bar: &InterClusterMatrix, basis: &CharacteristicBasis) -> Result<()> {
    let a = a_bar.a_bar();
    if a.nrows() != basis.n() || a.ncols() != basis.n() {
        return Err(Error::Dimension(format!(
            "Ā is {}x{}, partition covers {} nodes",
            a.nrows(),
            a.ncols(),
            basis.n()
        )));
    }
    Ok(())
}

fn constraint_residual(basis: &CharacteristicBasis, a: &DMatrix<f64>) -> f64 {
    max_abs(&basis.invariance_block(a))
}

/// Closed form with no sparsity restriction:
/// `Δ = −(v_comp v_comp^T) Ā (v_norm v_norm^T)`, `Λ = v_comp^T Ā v_norm`.
pub fn solve_unconstrained(
    a_bar: &InterClusterMatrix,
    basis: &CharacteristicBasis,
) -> Result<PerturbationResult> {
    check_dims(a_bar, basis)?;
    let (vn, vc) = (basis.v_norm(), basis.v_comp());
    let lambda = basis.invariance_block(a_bar.a_bar());
    let noise = ROUNDING_FLOOR * (1.0 + a_bar.max_abs());
    let delta = (vc * &lambda * vn.transpose()).map(|x| if x.abs() <= noise { 0.0 } else { -x });
    let residual = constraint_residual(basis, &(a_bar.a_bar() + &delta));
    Ok(PerturbationResult {
        frobenius_norm: delta.norm(),
        delta,
        lambda,
        constraint_residual: residual,
        kkt_residual: 0.0,
        feasible: true,
    })
}

/// The multiplier operator `L(Λ) = v_comp^T ((v_comp Λ v_norm^T) ⊙ H) v_norm`,
/// assembled densely over column-major `vec(Λ)`.
struct MultiplierSystem<'a> {
    basis: &'a CharacteristicBasis,
    h_eff: &'a DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl<'a> MultiplierSystem<'a> {
    fn assemble(basis: &'a CharacteristicBasis, h_eff: &'a DMatrix<f64>) -> Self {
        let (n, m) = (basis.n(), basis.m());
        let rows = n - m;
        let p = rows * m;
        let mut matrix = DMatrix::zeros(p, p);
        let mut unit = DMatrix::zeros(rows, m);
        for col in 0..p {
            unit[(col % rows, col / rows)] = 1.0;
            let image = basis.invariance_block(&Self::masked_lift(basis, h_eff, &unit));
            matrix.column_mut(col).copy_from_slice(image.as_slice());
            unit[(col % rows, col / rows)] = 0.0;
        }
        Self {
            basis,
            h_eff,
            matrix,
        }
    }

    /// `X = (v_comp Λ v_norm^T) ⊙ H`.
    fn masked_lift(
        basis: &CharacteristicBasis,
        h_eff: &DMatrix<f64>,
        lambda: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        (basis.v_comp() * lambda * basis.v_norm().transpose()).component_mul(h_eff)
    }

    /// Minimum-norm multipliers for the target block `rhs`; returns `(Λ, ‖LΛ − rhs‖)`.
    fn solve(&self, rhs: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let (rows, m) = rhs.shape();
        if self.matrix.is_empty() {
            return (DMatrix::zeros(rows, m), 0.0);
        }
        let b = DVector::from_column_slice(rhs.as_slice());
        let svd = self.matrix.clone().svd(true, true);
        let cutoff = RANK_RTOL * svd.singular_values.max();
        let x = if svd.singular_values.max() == 0.0 {
            DVector::zeros(b.len())
        } else {
            svd.solve(&b, cutoff)
                .expect("singular vectors were computed")
        };
        let residual = (&self.matrix * &x - &b).norm();
        (DMatrix::from_column_slice(rows, m, x.as_slice()), residual)
    }

    /// Minimum-norm masked correction driving `v_comp^T (target + Δ) v_norm` to zero.
    fn correction(&self, target: &DMatrix<f64>) -> Correction {
        let rhs = self.basis.invariance_block(target);
        let (lambda, kkt_residual) = self.solve(&rhs);
        let mut delta = -Self::masked_lift(self.basis, self.h_eff, &lambda);
        // exact zeros off the mask and in place of rounding noise
        let noise = ROUNDING_FLOOR * (1.0 + max_abs(target));
        delta.zip_apply(self.h_eff, |d, h| {
            if h == 0.0 || d.abs() <= noise {
                *d = 0.0
            }
        });
        Correction {
            delta,
            lambda,
            rhs,
            kkt_residual,
        }
    }
}

struct Correction {
    delta: DMatrix<f64>,
    lambda: DMatrix<f64>,
    rhs: DMatrix<f64>,
    kkt_residual: f64,
}

/// Rebuilds `Δ` from its four blocks in the `T = [v_norm v_comp]` coordinates
/// and compares against the direct construction.
fn block_cross_check(
    basis: &CharacteristicBasis,
    x: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    feasibility_threshold: Option<f64>,
) -> Result<()> {
    let (n, m) = (basis.n(), basis.m());
    let (vn, vc) = (basis.v_norm(), basis.v_comp());
    let d11 = -(vn.transpose() * x * vn);
    let d12 = -(vn.transpose() * x * vc);
    let d21 = -(vc.transpose() * x * vn);
    let d22 = -(vc.transpose() * x * vc);

    let mut tilde = DMatrix::zeros(n, n);
    tilde.view_mut((0, 0), (m, m)).copy_from(&d11);
    tilde.view_mut((0, m), (m, n - m)).copy_from(&d12);
    tilde.view_mut((m, 0), (n - m, m)).copy_from(&d21);
    tilde.view_mut((m, m), (n - m, n - m)).copy_from(&d22);
    let t = basis.transform();
    let rebuilt = &t * tilde * t.transpose();

    let scale = 1.0 + max_abs(delta);
    let mismatch = max_abs(&(rebuilt - delta));
    if mismatch > 1e-9 * scale {
        return Err(Error::InternalInconsistency(format!(
            "block reconstruction differs from Δ by {mismatch:.3e}"
        )));
    }
    if let Some(threshold) = feasibility_threshold {
        let off = (&d21 + a21).norm();
        if off > threshold {
            return Err(Error::InternalInconsistency(format!(
                "transformed block Δ̃21 misses −Ã21 by {off:.3e}"
            )));
        }
    }
    Ok(())
}

/// Solves the masked problem and reports feasibility instead of failing.
/// When infeasible, `delta` is the least-squares best effort.
pub fn attempt_constrained(
    a_bar: &InterClusterMatrix,
    basis: &CharacteristicBasis,
    mask: &SparsityMask,
    tol: f64,
) -> Result<PerturbationResult> {
    check_dims(a_bar, basis)?;
    let h_eff = mask.effective(basis)?;
    let system = MultiplierSystem::assemble(basis, &h_eff);
    let c = system.correction(a_bar.a_bar());
    let threshold = structural_threshold(tol, c.rhs.norm());
    let feasible = c.kkt_residual <= threshold;

    let x = MultiplierSystem::masked_lift(basis, &h_eff, &c.lambda);
    block_cross_check(basis, &x, &c.delta, &c.rhs, feasible.then_some(threshold))?;

    Ok(PerturbationResult {
        constraint_residual: constraint_residual(basis, &(a_bar.a_bar() + &c.delta)),
        frobenius_norm: c.delta.norm(),
        delta: c.delta,
        lambda: c.lambda,
        kkt_residual: c.kkt_residual,
        feasible,
    })
}

/// Minimum-norm perturbation restricted to the effective mask.
///
/// Fails with [`Error::Infeasible`] when no masked perturbation satisfies the
/// invariance constraint.
pub fn solve_constrained(
    a_bar: &InterClusterMatrix,
    basis: &CharacteristicBasis,
    mask: &SparsityMask,
    tol: f64,
) -> Result<PerturbationResult> {
    let result = attempt_constrained(a_bar, basis, mask, tol)?;
    if !result.feasible {
        let rhs_norm = basis.invariance_block(a_bar.a_bar()).norm();
        return Err(Error::Infeasible {
            kkt_residual: result.kkt_residual,
            threshold: structural_threshold(tol, rhs_norm),
        });
    }
    Ok(result)
}

pub const OPTIMALITY_DIRECTIONS: usize = 200;
const OPTIMALITY_SEED: u64 = 0x5EED_C0DE;

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub constraint_residual: f64,
    pub directions_checked: usize,
    /// Smallest `‖Δ + εN‖_F − ‖Δ‖_F` seen over all probes.
    pub min_norm_change: f64,
}

/// Re-checks a solver output: constraint residual, mask compliance, and that
/// no feasible direction inside the mask decreases `‖Δ‖_F`.
pub fn verify_solution(
    net: &NetworkSpec,
    result: &PerturbationResult,
    basis: &CharacteristicBasis,
    mask: &SparsityMask,
    tol: f64,
) -> Result<VerificationReport> {
    let a_bar = build_inter_cluster_matrix(net, basis)?;
    let delta = &result.delta;
    if delta.shape() != (basis.n(), basis.n()) {
        return Err(Error::Dimension(format!(
            "Δ is {}x{}, network has {} nodes",
            delta.nrows(),
            delta.ncols(),
            basis.n()
        )));
    }
    let fail = |check, detail: String| Err(Error::VerificationFailed { check, detail });

    let residual = constraint_residual(basis, &(a_bar.a_bar() + delta));
    let threshold = structural_threshold(tol, a_bar.max_abs());
    if residual > threshold {
        return fail(
            VerificationCheck::ConstraintResidual,
            format!("residual {residual:.3e} exceeds {threshold:.3e}"),
        );
    }

    let h_eff = mask.effective(basis)?;
    for ((i, j), (&d, &h)) in (0..basis.n())
        .flat_map(|j| (0..basis.n()).map(move |i| (i, j)))
        .zip(delta.iter().zip(h_eff.iter()))
    {
        if h == 0.0 && d != 0.0 {
            return fail(
                VerificationCheck::Mask,
                format!("Δ[{i},{j}] = {d} lies outside the effective mask"),
            );
        }
    }

    let system = MultiplierSystem::assemble(basis, &h_eff);
    let mut rng = ChaCha8Rng::seed_from_u64(OPTIMALITY_SEED);
    let base = delta.norm();
    let step = 1e-3 * base.max(1.0);
    let mut checked = 0;
    let mut min_change = f64::INFINITY;
    for _ in 0..OPTIMALITY_DIRECTIONS {
        let raw = h_eff.map(|h| {
            if h == 0.0 {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        let mut direction = &raw + system.correction(&raw).delta;
        let len = direction.norm();
        if len < 1e-12 {
            // the masked null space is trivial along this draw
            continue;
        }
        direction /= len;
        checked += 1;
        for eps in [step, -step] {
            let change = (delta + &direction * eps).norm() - base;
            min_change = min_change.min(change);
            if change < -1e-12 {
                return fail(
                    VerificationCheck::Optimality,
                    format!(
                        "a feasible step of size {eps:.1e} lowers ‖Δ‖_F by {:.3e}",
                        -change
                    ),
                );
            }
        }
    }

    Ok(VerificationReport {
        constraint_residual: residual,
        directions_checked: checked,
        min_norm_change: if checked == 0 { 0.0 } else { min_change },
    })
}

/// One entry of the weight matrix altered by a perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeChange {
    pub target: usize,
    pub source: usize,
    pub old: f64,
    pub new: f64,
}

impl EdgeChange {
    pub fn is_new_edge(&self) -> bool {
        self.old == 0.0 && self.new != 0.0
    }

    pub fn is_sign_flip(&self) -> bool {
        self.old != 0.0 && self.new != 0.0 && self.old.signum() != self.new.signum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedPerturbation {
    pub network: NetworkSpec,
    pub changes: Vec<EdgeChange>,
}

impl AppliedPerturbation {
    pub fn sign_flips(&self) -> impl Iterator<Item = &EdgeChange> {
        self.changes.iter().filter(|c| c.is_sign_flip())
    }

    pub fn new_edges(&self) -> impl Iterator<Item = &EdgeChange> {
        self.changes.iter().filter(|c| c.is_new_edge())
    }
}

/// `A + Δ` with the original natural frequencies.
pub fn apply_perturbation(
    net: &NetworkSpec,
    result: &PerturbationResult,
) -> Result<AppliedPerturbation> {
    if !result.feasible {
        return Err(Error::InfeasibleResult);
    }
    if result.delta.shape() != net.weights().shape() {
        return Err(Error::Dimension(format!(
            "Δ is {}x{}, network has {} nodes",
            result.delta.nrows(),
            result.delta.ncols(),
            net.n()
        )));
    }
    let weights = net.weights() + &result.delta;
    let mut changes = Vec::new();
    for i in 0..net.n() {
        for j in 0..net.n() {
            if result.delta[(i, j)] != 0.0 {
                changes.push(EdgeChange {
                    target: i,
                    source: j,
                    old: net.weights()[(i, j)],
                    new: weights[(i, j)],
                });
            }
        }
    }
    for c in changes.iter().filter(|c| c.is_sign_flip()) {
        log::debug!(
            "edge ({}, {}) flips sign: {} -> {}",
            c.target,
            c.source,
            c.old,
            c.new
        );
    }
    Ok(AppliedPerturbation {
        network: net.with_weights(weights)?,
        changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_invariance_matrix, classify, DEFAULT_TOL};
    use crate::fixtures;
    use crate::model::Partition;
    use approx::assert_abs_diff_eq;

    fn setup(net: &NetworkSpec, p: &Partition) -> (CharacteristicBasis, InterClusterMatrix) {
        let basis = CharacteristicBasis::new(p).unwrap();
        let a_bar = build_inter_cluster_matrix(net, &basis).unwrap();
        (basis, a_bar)
    }

    #[test]
    fn unconstrained_on_feasible_network_is_zero() {
        let (net, p) = fixtures::balanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let r = solve_unconstrained(&a_bar, &basis).unwrap();
        assert!(r.feasible);
        assert!(r.delta.amax() <= 1e-12);
    }

    #[test]
    fn unconstrained_on_zero_is_zero() {
        let (_, p) = fixtures::balanced_six_node();
        let net = NetworkSpec::new(DMatrix::zeros(6, 6), DVector::zeros(6)).unwrap();
        let (basis, a_bar) = setup(&net, &p);
        let r = solve_unconstrained(&a_bar, &basis).unwrap();
        assert_eq!(r.frobenius_norm, 0.0);
    }

    #[test]
    fn unconstrained_norm_matches_projection() {
        let (net, p, _) = fixtures::unbalanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let r = solve_unconstrained(&a_bar, &basis).unwrap();
        let projected = basis.invariance_block(a_bar.a_bar()).norm();
        assert!(r.frobenius_norm > 0.0);
        assert_abs_diff_eq!(r.frobenius_norm, projected, epsilon = 1e-12);
        let repaired = InterClusterMatrix::from(a_bar.a_bar() + &r.delta);
        assert!(
            check_invariance_matrix(&repaired, &basis, DEFAULT_TOL)
                .unwrap()
                .ok
        );

        let all = solve_constrained(&a_bar, &basis, &SparsityMask::all(6), DEFAULT_TOL).unwrap();
        assert!((all.delta - r.delta).amax() <= 1e-9);
    }

    #[test]
    fn masked_repair_of_unbalanced_network() {
        let (net, p, mask) = fixtures::unbalanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let r = solve_constrained(&a_bar, &basis, &mask, DEFAULT_TOL).unwrap();
        assert!(r.feasible);
        assert!(r.constraint_residual <= 1e-9);

        // Row 0 cannot change and receives 12 from the second cluster, so
        // rows 1 and 2 must rise to 12 using their free entries evenly:
        // +2 on (1,4); +1 on (2,4) and (2,5). Nothing else moves.
        let mut expected = DMatrix::zeros(6, 6);
        expected[(1, 4)] = 2.0;
        expected[(2, 4)] = 1.0;
        expected[(2, 5)] = 1.0;
        assert_abs_diff_eq!(r.delta, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(r.frobenius_norm, 6f64.sqrt(), epsilon = 1e-9);

        let h_eff = mask.effective(&basis).unwrap();
        for (d, h) in r.delta.iter().zip(h_eff.iter()) {
            if *h == 0.0 {
                assert_eq!(*d, 0.0);
            }
        }
        verify_solution(&net, &r, &basis, &mask, DEFAULT_TOL).unwrap();

        let repaired = apply_perturbation(&net, &r).unwrap();
        let verdict = classify(&repaired.network, &p, DEFAULT_TOL).unwrap();
        assert!(verdict.synchronizable);
        assert_eq!(repaired.new_edges().count(), 2);
        assert_eq!(repaired.sign_flips().count(), 0);
    }

    #[test]
    fn empty_mask_is_infeasible() {
        let (net, p, _) = fixtures::unbalanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let err =
            solve_constrained(&a_bar, &basis, &SparsityMask::none(6), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::Infeasible { kkt_residual, .. } if kkt_residual > 0.5));
        let attempt =
            attempt_constrained(&a_bar, &basis, &SparsityMask::none(6), DEFAULT_TOL).unwrap();
        assert!(!attempt.feasible);
        assert!(matches!(
            apply_perturbation(&net, &attempt),
            Err(Error::InfeasibleResult)
        ));
    }

    #[test]
    fn empty_mask_on_feasible_network_is_trivially_feasible() {
        let (net, p) = fixtures::balanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let r = solve_constrained(&a_bar, &basis, &SparsityMask::none(6), DEFAULT_TOL).unwrap();
        assert_eq!(r.frobenius_norm, 0.0);
        verify_solution(&net, &r, &basis, &SparsityMask::none(6), DEFAULT_TOL).unwrap();
        let applied = apply_perturbation(&net, &r).unwrap();
        assert_eq!(applied.network, net);
        assert!(applied.changes.is_empty());
    }

    #[test]
    fn singleton_partition_has_no_constraints() {
        let p = Partition::new(vec![vec![0], vec![1], vec![2]], 3).unwrap();
        let net = NetworkSpec::new(DMatrix::from_element(3, 3, 1.0), DVector::zeros(3)).unwrap();
        let (basis, a_bar) = setup(&net, &p);
        let r = solve_constrained(&a_bar, &basis, &SparsityMask::all(3), DEFAULT_TOL).unwrap();
        assert_eq!(r.lambda.shape(), (0, 3));
        assert_eq!(r.frobenius_norm, 0.0);
    }

    #[test]
    fn corrupted_solution_fails_mask_check() {
        let (net, p, mask) = fixtures::unbalanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let mut r = solve_constrained(&a_bar, &basis, &mask, DEFAULT_TOL).unwrap();
        // (0, 5) is masked out
        r.delta[(0, 5)] = 1e-3;
        r.delta[(1, 4)] += 1e-3;
        let err = verify_solution(&net, &r, &basis, &mask, 1e-3).unwrap_err();
        assert!(matches!(
            err,
            Error::VerificationFailed {
                check: VerificationCheck::Mask,
                ..
            }
        ));
    }

    #[test]
    fn suboptimal_solution_fails_optimality_check() {
        let (net, p, mask) = fixtures::unbalanced_six_node();
        let (basis, a_bar) = setup(&net, &p);
        let mut r = solve_constrained(&a_bar, &basis, &mask, DEFAULT_TOL).unwrap();
        // shifting weight between the two free entries of row 2 keeps the row sum
        r.delta[(2, 4)] += 0.5;
        r.delta[(2, 5)] -= 0.5;
        let err = verify_solution(&net, &r, &basis, &mask, DEFAULT_TOL).unwrap_err();
        assert!(matches!(
            err,
            Error::VerificationFailed {
                check: VerificationCheck::Optimality,
                ..
            }
        ));
    }

    #[test]
    fn residual_check_catches_unrepaired_network() {
        let (net, p, mask) = fixtures::unbalanced_six_node();
        let (basis, _) = setup(&net, &p);
        let zero = PerturbationResult {
            delta: DMatrix::zeros(6, 6),
            lambda: DMatrix::zeros(4, 2),
            constraint_residual: 0.0,
            kkt_residual: 0.0,
            feasible: true,
            frobenius_norm: 0.0,
        };
        let err = verify_solution(&net, &zero, &basis, &mask, DEFAULT_TOL).unwrap_err();
        assert!(matches!(
            err,
            Error::VerificationFailed {
                check: VerificationCheck::ConstraintResidual,
                ..
            }
        ));
    }

    #[test]
    fn effective_mask_drops_diagonal_and_intra_entries() {
        let (_, p, mask) = fixtures::unbalanced_six_node();
        let basis = CharacteristicBasis::new(&p).unwrap();
        let h = mask.effective(&basis).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if p.same_cluster(i, j) {
                    assert_eq!(h[(i, j)], 0.0);
                } else {
                    assert_eq!(h[(i, j)], mask.h()[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn mask_validation() {
        assert!(SparsityMask::new(DMatrix::from_element(2, 2, 0.5)).is_err());
        assert!(SparsityMask::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SparsityMask::from_edges(2, &[(0, 2)]).is_err());
        let m = SparsityMask::from_edges(3, &[(0, 2), (1, 0)]).unwrap();
        assert_eq!(m.h().sum(), 2.0);
    }

    #[test]
    fn sign_flip_detection() {
        let c = EdgeChange {
            target: 0,
            source: 1,
            old: 2.0,
            new: -1.0,
        };
        assert!(c.is_sign_flip());
        assert!(!c.is_new_edge());
        let c = EdgeChange {
            target: 0,
            source: 1,
            old: 0.0,
            new: -1.0,
        };
        assert!(!c.is_sign_flip());
        assert!(c.is_new_edge());
    }
}
