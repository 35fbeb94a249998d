//! Radial feeder model: buses, branches, topology validation, and the
//! BIBC/BCBV sweep matrices.
//!
//! A feeder is a tree rooted at the slack bus. Buses are renumbered
//! internally to a contiguous order with the slack first so that branch `k`
//! always feeds internal bus `k + 1`; external reports keep the original ids.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One load bus. Active demand must be non-negative; reactive demand may be
/// capacitive (negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub p_load_kw: f64,
    pub q_load_kvar: f64,
}

/// One series branch between two buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
}

impl Branch {
    pub fn impedance_ohm(&self) -> Complex64 {
        Complex64::new(self.r_ohm, self.x_ohm)
    }
}

#[derive(Debug, Deserialize)]
struct FeederHeader {
    v_base_kv: f64,
    slack: u32,
    #[serde(default = "default_v0")]
    v0: f64,
}

fn default_v0() -> f64 {
    1.0
}

/// A validated radial feeder.
///
/// Buses are stored in breadth-first order from the slack (internal index 0).
/// Branches are stored oriented parent -> child with branch `k` feeding
/// internal bus `k + 1`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    ext_to_int: HashMap<u32, usize>,
    v_base_kv: f64,
    v0: f64,
}

/// Slack-to-bus path data for every non-slack bus, in internal order.
#[derive(Debug, Clone, Serialize)]
pub struct TopologyReport {
    pub paths: Vec<BusPath>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BusPath {
    pub bus: u32,
    pub depth: usize,
    /// Internal branch indices along the slack-to-bus path, slack end first.
    pub branches: Vec<usize>,
}

impl TopologyReport {
    pub fn max_depth(&self) -> usize {
        self.paths.iter().map(|p| p.depth).max().unwrap_or(0)
    }
}

impl NetworkModel {
    /// Validates the raw bus/branch lists and builds the internal ordering.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        slack: u32,
        v_base_kv: f64,
        v0: f64,
    ) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::Dataset("feeder has no buses".into()));
        }
        if !v_base_kv.is_finite() || v_base_kv <= 0.0 {
            return Err(Error::Dataset(format!("v_base_kv must be positive, got {v_base_kv}")));
        }
        if !v0.is_finite() || v0 <= 0.0 {
            return Err(Error::Dataset(format!("slack voltage v0 must be positive, got {v0}")));
        }

        let mut by_id: HashMap<u32, usize> = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if by_id.insert(bus.id, i).is_some() {
                return Err(Error::Dataset(format!("duplicate bus id {}", bus.id)));
            }
            if !bus.p_load_kw.is_finite() || bus.p_load_kw < 0.0 {
                return Err(Error::Dataset(format!(
                    "bus {}: active load must be non-negative, got {}",
                    bus.id, bus.p_load_kw
                )));
            }
            if !bus.q_load_kvar.is_finite() {
                return Err(Error::Dataset(format!("bus {}: non-finite reactive load", bus.id)));
            }
        }
        if !by_id.contains_key(&slack) {
            return Err(Error::Dataset(format!("slack bus {slack} not in bus list")));
        }
        for br in &branches {
            if br.from == br.to {
                return Err(Error::Dataset(format!("branch {}-{} is a self-loop", br.from, br.to)));
            }
            if !by_id.contains_key(&br.from) || !by_id.contains_key(&br.to) {
                return Err(Error::Dataset(format!(
                    "branch {}-{} references an unknown bus",
                    br.from, br.to
                )));
            }
            if !(br.r_ohm.is_finite() && br.r_ohm >= 0.0 && br.x_ohm.is_finite() && br.x_ohm >= 0.0) {
                return Err(Error::Dataset(format!(
                    "branch {}-{}: impedance must be non-negative",
                    br.from, br.to
                )));
            }
        }

        // Breadth-first traversal from the slack over the undirected branch list.
        let n = buses.len();
        let mut adjacency: HashMap<u32, Vec<(u32, usize)>> = HashMap::new();
        for (k, br) in branches.iter().enumerate() {
            adjacency.entry(br.from).or_default().push((br.to, k));
            adjacency.entry(br.to).or_default().push((br.from, k));
        }

        let mut order: Vec<u32> = Vec::with_capacity(n);
        let mut parent: Vec<usize> = Vec::with_capacity(n.saturating_sub(1));
        let mut depth: Vec<usize> = Vec::with_capacity(n);
        let mut tree_branch: Vec<usize> = Vec::with_capacity(n.saturating_sub(1));
        let mut visited: HashMap<u32, usize> = HashMap::with_capacity(n);

        order.push(slack);
        depth.push(0);
        visited.insert(slack, 0);
        let mut queue = VecDeque::from([0usize]);
        let mut branch_used = vec![false; branches.len()];

        while let Some(i) = queue.pop_front() {
            let id = order[i];
            let Some(neighbors) = adjacency.get(&id) else { continue };
            for &(other, k) in neighbors {
                if branch_used[k] {
                    continue;
                }
                branch_used[k] = true;
                if visited.contains_key(&other) {
                    return Err(Error::Topology(format!(
                        "cycle detected through branch {}-{}",
                        branches[k].from, branches[k].to
                    )));
                }
                let j = order.len();
                visited.insert(other, j);
                order.push(other);
                depth.push(depth[i] + 1);
                parent.push(i);
                tree_branch.push(k);
                queue.push_back(j);
            }
        }

        if order.len() < n {
            let missing: Vec<String> = buses
                .iter()
                .filter(|b| !visited.contains_key(&b.id))
                .map(|b| b.id.to_string())
                .collect();
            return Err(Error::Topology(format!("unreachable bus(es): {}", missing.join(", "))));
        }
        if branches.len() != n - 1 {
            // All buses reached with extra edges left over.
            return Err(Error::Topology(format!(
                "cycle detected: {} branches for {} buses (expected {})",
                branches.len(),
                n,
                n - 1
            )));
        }

        // Reorder buses and branches to the internal layout, orienting each
        // branch parent -> child.
        let int_buses: Vec<Bus> = order.iter().map(|id| buses[by_id[id]].clone()).collect();
        let int_branches: Vec<Branch> = tree_branch
            .iter()
            .enumerate()
            .map(|(k, &orig)| {
                let br = &branches[orig];
                let child_id = order[k + 1];
                if br.to == child_id {
                    br.clone()
                } else {
                    Branch { from: br.to, to: br.from, r_ohm: br.r_ohm, x_ohm: br.x_ohm }
                }
            })
            .collect();
        let ext_to_int: HashMap<u32, usize> =
            order.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        Ok(NetworkModel {
            buses: int_buses,
            branches: int_branches,
            parent,
            depth,
            ext_to_int,
            v_base_kv,
            v0,
        })
    }

    /// Parses the CSV pair + JSON header feeder format.
    pub fn parse(buses_csv: &str, branches_csv: &str, feeder_json: &str) -> Result<Self> {
        let header: FeederHeader = serde_json::from_str(feeder_json)?;
        let mut buses = Vec::new();
        let mut reader = csv::Reader::from_reader(buses_csv.as_bytes());
        for record in reader.deserialize::<Bus>() {
            buses.push(record?);
        }
        let mut branches = Vec::new();
        let mut reader = csv::Reader::from_reader(branches_csv.as_bytes());
        for record in reader.deserialize::<Branch>() {
            branches.push(record?);
        }
        NetworkModel::new(buses, branches, header.slack, header.v_base_kv, header.v0)
    }

    /// The bundled IEEE 33-bus feeder (12.66 kV, 3715 kW + j2300 kvar total load).
    pub fn ieee33() -> Self {
        NetworkModel::parse(
            include_str!("data/ieee33_buses.csv"),
            include_str!("data/ieee33_branches.csv"),
            include_str!("data/ieee33_feeder.json"),
        )
        .expect("bundled ieee33 dataset is valid")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Buses in internal order (slack first).
    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    /// Branches in internal order; branch `k` connects `branch_parent(k)` to
    /// internal bus `k + 1`.
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slack_id(&self) -> u32 {
        self.buses[0].id
    }

    pub fn v_base_kv(&self) -> f64 {
        self.v_base_kv
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// Impedance base in ohm for a given power base.
    pub fn z_base_ohm(&self, s_base_kva: f64) -> f64 {
        self.v_base_kv * self.v_base_kv * 1000.0 / s_base_kva
    }

    pub fn internal_index(&self, id: u32) -> Option<usize> {
        self.ext_to_int.get(&id).copied()
    }

    pub fn external_id(&self, internal: usize) -> u32 {
        self.buses[internal].id
    }

    /// Internal index of the parent bus of branch `k`.
    pub fn branch_parent(&self, k: usize) -> usize {
        self.parent[k]
    }

    pub fn depth(&self, internal: usize) -> usize {
        self.depth[internal]
    }

    /// External ids of all non-slack buses, in internal order.
    pub fn non_slack_ids(&self) -> Vec<u32> {
        self.buses[1..].iter().map(|b| b.id).collect()
    }

    /// Branch indices on the slack-to-bus path, slack end first.
    pub fn path_to_slack(&self, internal: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth[internal]);
        let mut i = internal;
        while i != 0 {
            let k = i - 1;
            path.push(k);
            i = self.parent[k];
        }
        path.reverse();
        path
    }

    /// Total feeder demand in kW + j kvar.
    pub fn total_load(&self) -> Complex64 {
        self.buses
            .iter()
            .map(|b| Complex64::new(b.p_load_kw, b.q_load_kvar))
            .sum()
    }

    pub fn topology_report(&self) -> TopologyReport {
        let paths = (1..self.n_buses())
            .map(|i| BusPath {
                bus: self.buses[i].id,
                depth: self.depth[i],
                branches: self.path_to_slack(i),
            })
            .collect();
        TopologyReport { paths }
    }
}

/// Loads a feeder from a directory holding `buses.csv`, `branches.csv`, and
/// `feeder.json`.
pub fn load_network(dir: &Path) -> Result<NetworkModel> {
    let read = |name: &str| -> Result<String> {
        let path = dir.join(name);
        std::fs::read_to_string(&path)
            .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))
    };
    NetworkModel::parse(&read("buses.csv")?, &read("branches.csv")?, &read("feeder.json")?)
}

/// Bus-injection-to-branch-current and branch-current-to-bus-voltage matrices.
///
/// `bibc[(k, i)]` is 1 when branch `k` lies on the slack-to-bus path of
/// non-slack bus `i` (internal bus `i + 1`), else 0. `bcbv` is the transpose
/// with each branch column scaled by that branch's complex impedance in ohm.
#[derive(Debug, Clone)]
pub struct SweepMatrices {
    pub bibc: DMatrix<f64>,
    pub bcbv: DMatrix<Complex64>,
    bibc_complex: DMatrix<Complex64>,
    path_impedance: DMatrix<Complex64>,
}

impl SweepMatrices {
    pub fn build(net: &NetworkModel) -> Self {
        let m = net.n_branches();
        let mut bibc = DMatrix::<f64>::zeros(m, m);
        let mut bcbv = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            for &k in &net.path_to_slack(i + 1) {
                bibc[(k, i)] = 1.0;
                bcbv[(i, k)] = net.branches()[k].impedance_ohm();
            }
        }
        let bibc_complex = bibc.map(|v| Complex64::new(v, 0.0));
        let path_impedance = &bcbv * &bibc_complex;
        SweepMatrices { bibc, bcbv, bibc_complex, path_impedance }
    }

    /// BIBC with complex entries, for arithmetic against current vectors.
    pub fn bibc_complex(&self) -> &DMatrix<Complex64> {
        &self.bibc_complex
    }

    /// Cached BCBV * BIBC product in ohm; maps nodal currents to voltage drops.
    pub fn path_impedance(&self) -> &DMatrix<Complex64> {
        &self.path_impedance
    }
}

/// See [`SweepMatrices::build`].
pub fn build_sweep_matrices(net: &NetworkModel) -> SweepMatrices {
    SweepMatrices::build(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> NetworkModel {
        NetworkModel::new(
            vec![
                Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0 },
                Bus { id: 2, p_load_kw: 100.0, q_load_kvar: 60.0 },
            ],
            vec![Branch { from: 1, to: 2, r_ohm: 0.5, x_ohm: 0.3 }],
            1,
            12.66,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn ieee33_loads_and_validates() {
        let net = NetworkModel::ieee33();
        assert_eq!(net.n_buses(), 33);
        assert_eq!(net.n_branches(), 32);
        assert_eq!(net.slack_id(), 1);
        let total = net.total_load();
        assert!((total.re - 3715.0).abs() < 1e-9);
        assert!((total.im - 2300.0).abs() < 1e-9);
    }

    #[test]
    fn ieee33_depths_match_path_enumeration() {
        let net = NetworkModel::ieee33();
        let report = net.topology_report();
        assert_eq!(report.paths.len(), 32);
        // Longest feeder run is the main chain ending at bus 18.
        assert_eq!(report.max_depth(), 17);
        let bus18 = report.paths.iter().find(|p| p.bus == 18).unwrap();
        assert_eq!(bus18.depth, 17);
        assert_eq!(bus18.branches.len(), 17);
    }

    #[test]
    fn two_bus_network_is_valid() {
        let net = two_bus();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.non_slack_ids(), vec![2]);
    }

    #[test]
    fn single_bus_network_has_empty_path_set() {
        let net = NetworkModel::new(
            vec![Bus { id: 7, p_load_kw: 0.0, q_load_kvar: 0.0 }],
            vec![],
            7,
            12.66,
            1.0,
        )
        .unwrap();
        assert!(net.topology_report().paths.is_empty());
    }

    #[test]
    fn missing_branch_reports_unreachable_bus() {
        let buses = (1..=4)
            .map(|id| Bus { id, p_load_kw: 10.0, q_load_kvar: 5.0 })
            .collect();
        let branches = vec![
            Branch { from: 1, to: 2, r_ohm: 0.1, x_ohm: 0.1 },
            Branch { from: 3, to: 4, r_ohm: 0.1, x_ohm: 0.1 },
        ];
        let err = NetworkModel::new(buses, branches, 1, 12.66, 1.0).unwrap_err();
        assert!(err.to_string().contains("unreachable bus"), "{err}");
    }

    #[test]
    fn ring_reports_cycle() {
        let buses = (1..=3)
            .map(|id| Bus { id, p_load_kw: 10.0, q_load_kvar: 5.0 })
            .collect();
        let branches = vec![
            Branch { from: 1, to: 2, r_ohm: 0.1, x_ohm: 0.1 },
            Branch { from: 2, to: 3, r_ohm: 0.1, x_ohm: 0.1 },
            Branch { from: 3, to: 1, r_ohm: 0.1, x_ohm: 0.1 },
        ];
        let err = NetworkModel::new(buses, branches, 1, 12.66, 1.0).unwrap_err();
        assert!(err.to_string().contains("cycle detected"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let buses = vec![
            Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0 },
            Bus { id: 1, p_load_kw: 5.0, q_load_kvar: 0.0 },
        ];
        let err = NetworkModel::new(buses, vec![], 1, 12.66, 1.0).unwrap_err();
        assert!(err.to_string().contains("duplicate bus id"), "{err}");
    }

    #[test]
    fn four_bus_chain_bibc_is_upper_triangular_ones() {
        let buses = (1..=4)
            .map(|id| Bus { id, p_load_kw: 10.0, q_load_kvar: 0.0 })
            .collect();
        let branches = (1..=3)
            .map(|k| Branch { from: k, to: k + 1, r_ohm: 0.1 * k as f64, x_ohm: 0.05 })
            .collect();
        let net = NetworkModel::new(buses, branches, 1, 12.66, 1.0).unwrap();
        let mats = SweepMatrices::build(&net);
        for k in 0..3 {
            for i in 0..3 {
                let expect = if k <= i { 1.0 } else { 0.0 };
                assert_eq!(mats.bibc[(k, i)], expect, "bibc[{k}][{i}]");
            }
        }
    }

    #[test]
    fn two_bus_sweep_matrices() {
        let net = two_bus();
        let mats = SweepMatrices::build(&net);
        assert_eq!(mats.bibc.nrows(), 1);
        assert_eq!(mats.bibc[(0, 0)], 1.0);
        assert_eq!(mats.bcbv[(0, 0)], Complex64::new(0.5, 0.3));
    }

    #[test]
    fn ieee33_bibc_column_ones_equal_depth() {
        let net = NetworkModel::ieee33();
        let mats = SweepMatrices::build(&net);
        for i in 0..net.n_branches() {
            let ones = mats.bibc.column(i).iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, net.depth(i + 1), "column for internal bus {}", i + 1);
        }
    }

    #[test]
    fn bcbv_is_scaled_bibc_transpose() {
        let net = NetworkModel::ieee33();
        let mats = SweepMatrices::build(&net);
        for k in 0..net.n_branches() {
            let z = net.branches()[k].impedance_ohm();
            for i in 0..net.n_branches() {
                let expect = z * mats.bibc[(k, i)];
                assert_eq!(mats.bcbv[(i, k)], expect);
            }
        }
    }
}
