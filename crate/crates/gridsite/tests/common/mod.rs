//! Shared test oracles, independent of the implementation paths they check:
//! a nodal-equation load-flow solver (Y-bus fixed point with LU solves), a
//! random radial feeder generator, and brute-force fleet enumeration.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gridsite::devices::{DevicePlacement, WtCatalog};
use gridsite::network::{Branch, Bus, NetworkModel};

pub struct NodalSolution {
    /// Per-bus complex voltage (p.u.), internal order of the network.
    pub voltages: Vec<Complex64>,
    /// Total complex loss, kW + j kvar.
    pub total_loss: Complex64,
    pub iterations: usize,
}

/// Solves the constant-PQ load flow from the nodal admittance equations:
/// `V_n = Ynn^-1 (I_inj(V) - Yns Vs)` iterated to a 1e-12 fixed point.
///
/// Shares nothing with the sweep solver beyond the network model itself.
pub fn nodal_solve(
    net: &NetworkModel,
    placements: &[DevicePlacement],
    s_base_kva: f64,
) -> NodalSolution {
    let n = net.n_buses();
    let z_base = net.z_base_ohm(s_base_kva);

    // Net drawn power per internal bus, p.u.
    let mut s_pu = vec![Complex64::ZERO; n];
    for (i, bus) in net.buses().iter().enumerate() {
        s_pu[i] = Complex64::new(bus.p_load_kw, bus.q_load_kvar) / s_base_kva;
    }
    for placement in placements {
        let i = net.internal_index(placement.bus).expect("placement bus exists");
        s_pu[i] -= Complex64::new(placement.p_kw, placement.q_kvar) / s_base_kva;
    }

    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..net.n_branches() {
        let branch = &net.branches()[k];
        let f = net.branch_parent(k);
        let t = k + 1;
        let admittance = Complex64::new(1.0, 0.0)
            / Complex64::new(branch.r_ohm / z_base, branch.x_ohm / z_base);
        y[(f, f)] += admittance;
        y[(t, t)] += admittance;
        y[(f, t)] -= admittance;
        y[(t, f)] -= admittance;
    }

    let m = n - 1;
    let v_slack = Complex64::new(net.v0(), 0.0);
    if m == 0 {
        return NodalSolution { voltages: vec![v_slack], total_loss: Complex64::ZERO, iterations: 0 };
    }
    let ynn = y.view((1, 1), (m, m)).into_owned();
    let yns = y.view((1, 0), (m, 1)).into_owned();
    let lu = ynn.lu();

    let mut v = DVector::from_element(m, v_slack);
    let mut iterations = 0;
    for iter in 1..=1000 {
        let mut rhs = DVector::from_element(m, Complex64::ZERO);
        for j in 0..m {
            let injection = -(s_pu[j + 1] / v[j]).conj();
            rhs[j] = injection - yns[(j, 0)] * v_slack;
        }
        let v_new = lu.solve(&rhs).expect("Y-bus submatrix is regular");
        let step = (0..m).map(|j| (v_new[j] - v[j]).norm()).fold(0.0f64, f64::max);
        v = v_new;
        iterations = iter;
        if step < 1e-12 {
            break;
        }
    }

    let mut voltages = vec![v_slack];
    voltages.extend(v.iter().copied());

    let mut total = Complex64::ZERO;
    for k in 0..net.n_branches() {
        let branch = &net.branches()[k];
        let z = Complex64::new(branch.r_ohm / z_base, branch.x_ohm / z_base);
        let current = (voltages[net.branch_parent(k)] - voltages[k + 1]) / z;
        total += z * current.norm_sqr() * s_base_kva;
    }

    NodalSolution { voltages, total_loss: total, iterations }
}

/// Random radial feeder with 2 to 8 buses. Each new bus hangs off a random
/// earlier bus; the branch list is shuffled so construction has to renumber.
pub fn random_radial_net(rng: &mut ChaCha8Rng) -> NetworkModel {
    let n: u32 = rng.random_range(2..=8);
    let mut buses = vec![Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0 }];
    let mut branches = Vec::new();
    for id in 2..=n {
        let parent = rng.random_range(1..id);
        buses.push(Bus {
            id,
            p_load_kw: rng.random::<f64>() * 200.0,
            q_load_kvar: rng.random::<f64>() * 180.0 - 30.0,
        });
        branches.push(Branch {
            from: parent,
            to: id,
            r_ohm: 0.05 + rng.random::<f64>() * 1.45,
            x_ohm: 0.02 + rng.random::<f64>() * 1.4,
        });
    }
    branches.shuffle(rng);
    NetworkModel::new(buses, branches, 1, 12.66, 1.0).expect("generated feeder is radial")
}

/// Brute-force fleet optimum by depth-first enumeration of all count
/// vectors with total power below `target + g`, keeping the cheapest fleet
/// at or above `target` (ties: fewer units, then lexicographically smallest
/// counts).
pub fn exhaustive_fleet(target_kw: f64, catalog: &WtCatalog) -> Vec<u32> {
    let g = catalog
        .entries
        .iter()
        .map(|e| e.rated_kw)
        .fold(f64::INFINITY, f64::min);
    let hi = target_kw + g;

    struct Search<'a> {
        catalog: &'a WtCatalog,
        target: f64,
        hi: f64,
        counts: Vec<u32>,
        best: Option<(f64, u32, Vec<u32>)>,
    }

    impl Search<'_> {
        fn consider(&mut self, power: f64, cost: f64, units: u32) {
            if power < self.target - 1e-9 {
                return;
            }
            let better = match &self.best {
                None => true,
                Some((best_cost, best_units, best_counts)) => {
                    (cost, units) < (*best_cost, *best_units)
                        || ((cost, units) == (*best_cost, *best_units)
                            && self.counts < *best_counts)
                }
            };
            if better {
                self.best = Some((cost, units, self.counts.clone()));
            }
        }

        fn go(&mut self, idx: usize, power: f64, cost: f64, units: u32) {
            if idx == self.catalog.len() {
                self.consider(power, cost, units);
                return;
            }
            let entry = &self.catalog.entries[idx];
            let mut n = 0u32;
            loop {
                let p = power + n as f64 * entry.rated_kw;
                if p >= self.hi - 1e-9 {
                    break;
                }
                self.counts[idx] = n;
                self.go(idx + 1, p, cost + n as f64 * entry.cost_usd, units + n);
                n += 1;
            }
            self.counts[idx] = 0;
        }
    }

    let mut search = Search {
        catalog,
        target: target_kw,
        hi,
        counts: vec![0; catalog.len()],
        best: None,
    };
    search.go(0, 0.0, 0.0, 0);
    search.best.expect("window always contains a multiple of the smallest size").2
}

pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}
