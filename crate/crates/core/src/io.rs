//! Network JSON files, report JSON and trajectory/metrics CSV.
//!
//! Network file layout (0-based indices, `[target, source, weight]` edges):
//!
//! ```json
//! { "n": 3, "edges": [[0, 2, 1.5], [1, 0, -0.5]],
//!   "clusters": [[0, 1], [2]], "omega": [1.0, 1.0, 2.0],
//!   "mask_edges": [[0, 2]] }
//! ```
//!
//! `mask_edges` may also be the string `"all"`, which is what a missing field
//! means.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::control::{AppliedPerturbation, PerturbationResult, SparsityMask};
use crate::error::{Error, Result};
use crate::model::{NetworkSpec, Partition};
use crate::simulator::{cluster_order_parameter, frequency_spread, phase_spread, Trajectory};

#[derive(Debug, Clone, Default, PartialEq)]
pub enum MaskEdges {
    #[default]
    All,
    Edges(Vec<(usize, usize)>),
}

impl Serialize for MaskEdges {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaskEdges::All => s.serialize_str("all"),
            MaskEdges::Edges(e) => e.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MaskEdges {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<(usize, usize)>),
        }
        match Raw::deserialize(d).map_err(|_| {
            serde::de::Error::custom("expected \"all\" or a list of [target, source] pairs")
        })? {
            Raw::Word(w) if w == "all" => Ok(MaskEdges::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"all\", got \"{w}\""
            ))),
            Raw::List(e) => Ok(MaskEdges::Edges(e)),
        }
    }
}

/// On-disk network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub clusters: Vec<Vec<usize>>,
    pub omega: Vec<f64>,
    #[serde(default)]
    pub mask_edges: MaskEdges,
}

/// Validated contents of a [`NetworkFile`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedNetwork {
    pub network: NetworkSpec,
    pub partition: Partition,
    pub mask: SparsityMask,
    pub mask_edges: MaskEdges,
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            Error::schema(field, e.into_inner().to_string())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Checks the file against the schema and builds the model types.
    pub fn into_model(self) -> Result<LoadedNetwork> {
        let n = self.n;
        if n < 2 {
            return Err(Error::schema(
                "n",
                format!("need at least 2 nodes, got {n}"),
            ));
        }
        if self.omega.len() != n {
            return Err(Error::schema(
                "omega",
                format!("has {} entries, expected n = {n}", self.omega.len()),
            ));
        }
        if let Some(k) = self.omega.iter().position(|w| !w.is_finite()) {
            return Err(Error::schema(format!("omega[{k}]"), "not a finite number"));
        }
        let mut weights = DMatrix::zeros(n, n);
        let mut seen = HashSet::new();
        for (k, &(i, j, w)) in self.edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::schema(
                    format!("edges[{k}]"),
                    format!("node index out of range for n = {n}: ({i}, {j})"),
                ));
            }
            if !w.is_finite() {
                return Err(Error::schema(format!("edges[{k}]"), "weight is not finite"));
            }
            if !seen.insert((i, j)) {
                return Err(Error::schema(
                    format!("edges[{k}]"),
                    format!("duplicate edge ({i}, {j})"),
                ));
            }
            if i == j {
                log::warn!("edges[{k}]: dropping self-loop on node {i}");
                continue;
            }
            weights[(i, j)] = w;
        }
        let partition = Partition::new(self.clusters, n).map_err(|e| match e {
            Error::InvalidPartition(msg) => Error::schema("clusters", msg),
            other => other,
        })?;
        let mask = match &self.mask_edges {
            MaskEdges::All => SparsityMask::all(n),
            MaskEdges::Edges(edges) => {
                if let Some(k) = edges.iter().position(|&(i, j)| i >= n || j >= n) {
                    return Err(Error::schema(
                        format!("mask_edges[{k}]"),
                        format!("node index out of range for n = {n}"),
                    ));
                }
                SparsityMask::from_edges(n, edges)?
            }
        };
        let network = NetworkSpec::new(weights, DVector::from_vec(self.omega))?;
        if !network.is_strongly_connected() {
            log::warn!("network is not strongly connected");
        }
        Ok(LoadedNetwork {
            network,
            partition,
            mask,
            mask_edges: self.mask_edges,
        })
    }

    /// File for a network; nonzero weights are listed row by row.
    pub fn from_model(net: &NetworkSpec, partition: &Partition, mask_edges: MaskEdges) -> Self {
        let n = net.n();
        let a = net.weights();
        let edges = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, a[(i, j)]))
            .collect();
        Self {
            n,
            edges,
            clusters: partition.clusters().to_vec(),
            omega: net.omega().iter().copied().collect(),
            mask_edges,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

pub fn load_network(path: &Path) -> Result<LoadedNetwork> {
    NetworkFile::read(path)?.into_model()
}

/// Sidecar written next to a repaired network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub frobenius_norm: f64,
    pub constraint_residual: f64,
    pub feasible: bool,
    /// `[target, source, old, new]` for every modified weight.
    pub changed_edges: Vec<(usize, usize, f64, f64)>,
}

impl RepairReport {
    pub fn new(result: &PerturbationResult, applied: Option<&AppliedPerturbation>) -> Self {
        Self {
            frobenius_norm: result.frobenius_norm,
            constraint_residual: result.constraint_residual,
            feasible: result.feasible,
            changed_edges: applied
                .map(|a| {
                    a.changes
                        .iter()
                        .map(|c| (c.target, c.source, c.old, c.new))
                        .collect()
                })
                .unwrap_or_default(),
        }
    }
}

/// 17 significant digits.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header `t,theta_0..,freq_0..`; one row per sample.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let n = traj.n();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("theta_{i}")));
    header.extend((0..n).map(|i| format!("freq_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (s, &t) in traj.times.iter().enumerate() {
        let row: Vec<String> = std::iter::once(t)
            .chain(traj.thetas.row(s).iter().copied())
            .chain(traj.freqs.row(s).iter().copied())
            .map(fmt_float)
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Header `t,spread_phase_0..,spread_freq_0..,order_0..`; one row per sample.
pub fn write_metrics_csv<W: Write>(
    mut w: W,
    traj: &Trajectory,
    partition: &Partition,
) -> Result<()> {
    let m = partition.m();
    let phase = phase_spread(traj, partition)?;
    let freq = frequency_spread(traj, partition)?;
    let order = cluster_order_parameter(traj, partition)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|k| format!("spread_phase_{k}")));
    header.extend((0..m).map(|k| format!("spread_freq_{k}")));
    header.extend((0..m).map(|k| format!("order_{k}")));
    writeln!(w, "{}", header.join(","))?;
    for (s, &t) in traj.times.iter().enumerate() {
        let row: Vec<String> = std::iter::once(t)
            .chain(phase.row(s).iter().copied())
            .chain(freq.row(s).iter().copied())
            .chain(order.row(s).iter().copied())
            .map(fmt_float)
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::simulator::{integrate, SimConfig};
    use proptest::prelude::*;

    const SAMPLE: &str = r#"{
        "n": 3,
        "edges": [[0, 2, 1.5], [1, 0, -0.5], [2, 2, 4.0]],
        "clusters": [[0, 1], [2]],
        "omega": [1.0, 1.0, 2.0],
        "mask_edges": [[0, 2]]
    }"#;

    fn schema_field(text: &str) -> String {
        match NetworkFile::from_json(text).and_then(NetworkFile::into_model) {
            Err(Error::Schema { field, .. }) => field,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn parse_sample() {
        let loaded = NetworkFile::from_json(SAMPLE)
            .unwrap()
            .into_model()
            .unwrap();
        let a = loaded.network.weights();
        assert_eq!(a[(0, 2)], 1.5);
        assert_eq!(a[(1, 0)], -0.5);
        // self-loop dropped
        assert_eq!(a[(2, 2)], 0.0);
        assert_eq!(loaded.partition.clusters(), &[vec![0, 1], vec![2]]);
        assert_eq!(loaded.mask.h().sum(), 1.0);
        assert_eq!(loaded.mask.h()[(0, 2)], 1.0);
    }

    #[test]
    fn missing_mask_means_all() {
        let text = r#"{"n": 2, "edges": [], "clusters": [[0], [1]], "omega": [0, 0]}"#;
        let loaded = NetworkFile::from_json(text).unwrap().into_model().unwrap();
        assert_eq!(loaded.mask_edges, MaskEdges::All);
        assert_eq!(loaded.mask, SparsityMask::all(2));
        let text = r#"{"n": 2, "edges": [], "clusters": [[0], [1]], "omega": [0, 0], "mask_edges": "all"}"#;
        assert_eq!(
            NetworkFile::from_json(text).unwrap().mask_edges,
            MaskEdges::All
        );
    }

    #[test]
    fn schema_errors_name_the_field() {
        assert_eq!(
            schema_field(
                r#"{"n": 2, "edges": [[0, 1, 1.0], [0, 1, 2.0]], "clusters": [[0], [1]], "omega": [0, 0]}"#
            ),
            "edges[1]"
        );
        assert_eq!(
            schema_field(
                r#"{"n": 2, "edges": [[0, 5, 1.0]], "clusters": [[0], [1]], "omega": [0, 0]}"#
            ),
            "edges[0]"
        );
        assert_eq!(
            schema_field(r#"{"n": 2, "edges": [], "clusters": [[0], [1]], "omega": [0]}"#),
            "omega"
        );
        assert_eq!(
            schema_field(r#"{"n": 2, "edges": [], "clusters": [[0, 1], [1]], "omega": [0, 0]}"#),
            "clusters"
        );
        assert_eq!(
            schema_field(
                r#"{"n": 2, "edges": [], "clusters": [[0], [1]], "omega": [0, 0], "mask_edges": "some"}"#
            ),
            "mask_edges"
        );
        assert_eq!(
            schema_field(
                r#"{"n": 2, "edges": [[0, "x", 1.0]], "clusters": [[0], [1]], "omega": [0, 0]}"#
            ),
            "edges[0][1]"
        );
        assert!(matches!(
            NetworkFile::from_json(r#"{"n": 2, "edges": [],"#),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn written_network_rereads() {
        let (net, p, _) = fixtures::unbalanced_six_node();
        let file = NetworkFile::from_model(&net, &p, MaskEdges::Edges(vec![(1, 4)]));
        let back = NetworkFile::from_json(&file.to_json().unwrap())
            .unwrap()
            .into_model()
            .unwrap();
        assert_eq!(back.network, net);
        assert_eq!(back.partition, p);
        assert_eq!(back.mask_edges, MaskEdges::Edges(vec![(1, 4)]));
    }

    proptest! {
        #[test]
        fn weights_round_trip_bit_exactly(
            ws in proptest::collection::vec(
                prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e3f64..1e3],
                12,
            ),
        ) {
            let a = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { ws[i * 3 + j - (j > i) as usize] });
            let net = NetworkSpec::new(a, DVector::from_vec(vec![ws[0], ws[1], ws[2], ws[3]])).unwrap();
            let p = Partition::new(vec![vec![0, 3], vec![1, 2]], 4).unwrap();
            let text = NetworkFile::from_model(&net, &p, MaskEdges::All).to_json().unwrap();
            let back = NetworkFile::from_json(&text).unwrap().into_model().unwrap();
            // zeros are not listed, so only their value (not their sign) survives
            for (x, y) in back.network.weights().iter().zip(net.weights().iter()) {
                if *y == 0.0 {
                    prop_assert_eq!(*x, 0.0);
                } else {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            for (x, y) in back.network.omega().iter().zip(net.omega().iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn csv_layout() {
        let (net, p) = fixtures::balanced_six_node();
        let cfg = SimConfig {
            t_final: 0.1,
            dt: 0.01,
            theta0: p.cluster_staircase(1.0),
            sample_every: 5,
        };
        let traj = integrate(&net, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,theta_0,theta_1,theta_2,theta_3,theta_4,theta_5,freq_0,freq_1,freq_2,freq_3,freq_4,freq_5"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), traj.len());
        let last: Vec<f64> = rows[2].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last.len(), 13);
        assert_eq!(last[0], 0.1);
        assert_eq!(last[1].to_bits(), traj.thetas[(2, 0)].to_bits());

        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &traj, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,spread_phase_0,spread_phase_1,spread_freq_0,spread_freq_1,order_0,order_1"
        );
        assert_eq!(text.lines().count(), traj.len() + 1);
    }
}
