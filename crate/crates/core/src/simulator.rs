//! Fixed-step RK4 integration of the Kuramoto dynamics and per-cluster
//! cohesion metrics.
//!
//! `dθ_i/dt = ω_i + Σ_j a_ij sin(θ_j − θ_i)`

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, Partition};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_FINAL: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    pub dt: f64,
    pub theta0: DVector<f64>,
    pub sample_every: usize,
}

impl SimConfig {
    /// Default horizon and step, starting from the cluster staircase `k * 1 rad`.
    pub fn for_partition(partition: &Partition) -> Self {
        Self {
            t_final: DEFAULT_T_FINAL,
            dt: DEFAULT_DT,
            theta0: partition.cluster_staircase(1.0),
            sample_every: 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(Error::InvalidConfig(format!(
                "t_final must be at least dt ({}), got {}",
                self.dt, self.t_final
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidConfig("sample_every must be >= 1".into()));
        }
        if self.theta0.len() != n {
            return Err(Error::InvalidConfig(format!(
                "theta0 has length {}, network has {n} nodes",
                self.theta0.len()
            )));
        }
        if self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("theta0 must be finite".into()));
        }
        Ok(())
    }
}

/// Sampled solution: one row per retained sample in `thetas` and `freqs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Unwrapped phases, samples x n.
    pub thetas: DMatrix<f64>,
    /// Right-hand side evaluated at each stored state, samples x n.
    pub freqs: DMatrix<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.thetas.ncols()
    }
}

/// `ω_i + Σ_j a_ij sin(θ_j − θ_i)` for every node.
pub fn kuramoto_rhs(theta: &DVector<f64>, net: &NetworkSpec) -> DVector<f64> {
    let a = net.weights();
    let n = net.n();
    DVector::from_fn(n, |i, _| {
        let ti = theta[i];
        let coupling: f64 = (0..n)
            .filter(|&j| a[(i, j)] != 0.0)
            .map(|j| a[(i, j)] * (theta[j] - ti).sin())
            .sum();
        net.omega()[i] + coupling
    })
}

fn rk4_step(theta: &DVector<f64>, net: &NetworkSpec, h: f64) -> DVector<f64> {
    let k1 = kuramoto_rhs(theta, net);
    let k2 = kuramoto_rhs(&(theta + &k1 * (h / 2.0)), net);
    let k3 = kuramoto_rhs(&(theta + &k2 * (h / 2.0)), net);
    let k4 = kuramoto_rhs(&(theta + &k3 * h), net);
    theta + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Classical RK4 with a fixed step. The last step is shortened to land on
/// `t_final` exactly; samples are kept every `sample_every` steps plus the
/// initial and final states.
pub fn integrate(net: &NetworkSpec, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate(net.n())?;
    let n = net.n();
    let steps = ((cfg.t_final / cfg.dt) - 1e-9).ceil().max(1.0) as usize;

    let mut times = Vec::with_capacity(steps / cfg.sample_every + 2);
    let mut thetas: Vec<f64> = Vec::with_capacity(times.capacity() * n);
    let mut freqs: Vec<f64> = Vec::with_capacity(times.capacity() * n);
    let mut record = |t: f64, theta: &DVector<f64>| {
        times.push(t);
        thetas.extend(theta.iter());
        freqs.extend(kuramoto_rhs(theta, net).iter());
    };

    let mut theta = cfg.theta0.clone();
    record(0.0, &theta);
    let mut t = 0.0;
    for k in 1..=steps {
        let t_next = if k == steps {
            cfg.t_final
        } else {
            k as f64 * cfg.dt
        };
        let next = rk4_step(&theta, net, t_next - t);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { last_valid_time: t });
        }
        theta = next;
        t = t_next;
        if k % cfg.sample_every == 0 || k == steps {
            record(t, &theta);
        }
    }

    let samples = times.len();
    Ok(Trajectory {
        times,
        thetas: DMatrix::from_row_slice(samples, n, &thetas),
        freqs: DMatrix::from_row_slice(samples, n, &freqs),
    })
}

/// Maps an angle to `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn per_cluster<F>(samples: usize, partition: &Partition, mut f: F) -> DMatrix<f64>
where
    F: FnMut(usize, &[usize]) -> f64,
{
    DMatrix::from_fn(samples, partition.m(), |t, k| f(t, partition.cluster(k)))
}

fn check_dims(traj: &Trajectory, partition: &Partition) -> Result<()> {
    if traj.n() != partition.n() {
        return Err(Error::Dimension(format!(
            "trajectory has {} oscillators, partition covers {}",
            traj.n(),
            partition.n()
        )));
    }
    Ok(())
}

/// Largest wrapped pairwise phase difference inside each cluster, samples x m.
pub fn phase_spread(traj: &Trajectory, partition: &Partition) -> Result<DMatrix<f64>> {
    check_dims(traj, partition)?;
    Ok(per_cluster(traj.len(), partition, |t, members| {
        let mut spread: f64 = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let d = wrap_angle(traj.thetas[(t, i)] - traj.thetas[(t, j)]).abs();
                spread = spread.max(d);
            }
        }
        spread
    }))
}

/// Max minus min instantaneous frequency inside each cluster, samples x m.
pub fn frequency_spread(traj: &Trajectory, partition: &Partition) -> Result<DMatrix<f64>> {
    check_dims(traj, partition)?;
    Ok(per_cluster(traj.len(), partition, |t, members| {
        let (lo, hi) = members
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let f = traj.freqs[(t, i)];
                (lo.min(f), hi.max(f))
            });
        hi - lo
    }))
}

/// `|mean_i exp(iθ_i)|` over each cluster, samples x m.
pub fn cluster_order_parameter(traj: &Trajectory, partition: &Partition) -> Result<DMatrix<f64>> {
    check_dims(traj, partition)?;
    Ok(per_cluster(traj.len(), partition, |t, members| {
        let (re, im) = members.iter().fold((0.0, 0.0), |(re, im), &i| {
            let th = traj.thetas[(t, i)];
            (re + th.cos(), im + th.sin())
        });
        let s = members.len() as f64;
        ((re / s).powi(2) + (im / s).powi(2)).sqrt().min(1.0)
    }))
}
