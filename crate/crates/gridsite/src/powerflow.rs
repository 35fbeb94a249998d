//! Backward-forward sweep load flow and complex loss accounting.
//!
//! The solver iterates equivalent current injections `I = conj(S / V)` and
//! voltage drops `dV = BCBV * BIBC * I` from a flat start until the largest
//! per-bus voltage update falls below tolerance. Loads consume power;
//! generation enters as a negative constant-PQ load folded into the
//! injection set. All powers are kW/kvar externally and per-unit internally.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkModel, SweepMatrices};

/// Convergence controls and the per-unit power base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Largest allowed per-bus voltage update (p.u.) at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub s_base_kva: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-6, max_iter: 100, s_base_kva: 1000.0 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::Config(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be at least 1".into()));
        }
        if !self.s_base_kva.is_finite() || self.s_base_kva <= 0.0 {
            return Err(Error::Config(format!(
                "s_base_kva must be positive, got {}",
                self.s_base_kva
            )));
        }
        Ok(())
    }
}

/// Net complex power drawn at every non-slack bus (kW + j kvar), i.e. load
/// minus device generation. The slack bus absorbs the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSet {
    ids: Vec<u32>,
    values: Vec<Complex64>,
}

impl InjectionSet {
    pub fn zeros(net: &NetworkModel) -> Self {
        InjectionSet {
            ids: net.non_slack_ids(),
            values: vec![Complex64::ZERO; net.n_branches()],
        }
    }

    /// Bus loads as drawn from the dataset.
    pub fn from_loads(net: &NetworkModel) -> Self {
        let mut set = InjectionSet::zeros(net);
        for (j, bus) in net.buses()[1..].iter().enumerate() {
            set.values[j] = Complex64::new(bus.p_load_kw, bus.q_load_kvar);
        }
        set
    }

    /// Folds a generating device in as a negative load.
    pub fn subtract_generation(
        &mut self,
        net: &NetworkModel,
        bus: u32,
        p_kw: f64,
        q_kvar: f64,
    ) -> Result<()> {
        let i = net
            .internal_index(bus)
            .ok_or_else(|| Error::Config(format!("unknown bus {bus}")))?;
        if i == 0 {
            return Err(Error::Config(format!("cannot place a device on slack bus {bus}")));
        }
        self.values[i - 1] -= Complex64::new(p_kw, q_kvar);
        Ok(())
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.ids
    }
}

/// Active/reactive loss on one branch, in kW/kvar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchLoss {
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Converged sweep solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadFlowResult {
    /// Per-bus complex voltage (p.u.), internal order, slack first.
    pub voltages: Vec<Complex64>,
    /// Per-branch complex current (p.u.), internal order.
    pub branch_currents: Vec<Complex64>,
    pub branch_losses: Vec<BranchLoss>,
    /// Total complex loss, kW + j kvar.
    pub total_loss: Complex64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest per-bus voltage update of the final iteration (p.u.).
    pub residual: f64,
}

impl LoadFlowResult {
    /// Magnitude of the total complex loss in kVA.
    pub fn total_loss_kva(&self) -> f64 {
        self.total_loss.norm()
    }

    pub fn voltage_magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    /// Per-bus (magnitude, angle-radians) pairs.
    pub fn voltage_polar(&self) -> Vec<(f64, f64)> {
        self.voltages.iter().map(|v| (v.norm(), v.im.atan2(v.re))).collect()
    }

    /// Internal index and magnitude of the lowest bus voltage.
    pub fn min_voltage(&self) -> (usize, f64) {
        self.voltages
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least the slack bus exists")
    }
}

/// Equivalent current injections `conj(S / V)` in p.u. for every non-slack bus.
pub fn equivalent_currents(
    inj: &InjectionSet,
    voltages: &[Complex64],
    s_base_kva: f64,
) -> Result<Vec<Complex64>> {
    debug_assert_eq!(inj.values.len(), voltages.len());
    inj.values
        .iter()
        .zip(voltages)
        .zip(&inj.ids)
        .map(|((s, v), &bus)| {
            if v.norm_sqr() == 0.0 {
                return Err(Error::SingularInjection { bus });
            }
            Ok((s / (s_base_kva * v)).conj())
        })
        .collect()
}

/// Runs the backward-forward sweep.
///
/// Non-convergence is not an error: the result carries `converged = false`
/// and the final residual so callers can decide how to treat it.
pub fn solve(
    net: &NetworkModel,
    mats: &SweepMatrices,
    inj: &InjectionSet,
    opts: &SolverOptions,
) -> Result<LoadFlowResult> {
    opts.validate()?;
    let m = net.n_branches();
    let v_slack = Complex64::new(net.v0(), 0.0);
    if m == 0 {
        return Ok(LoadFlowResult {
            voltages: vec![v_slack],
            branch_currents: vec![],
            branch_losses: vec![],
            total_loss: Complex64::ZERO,
            iterations: 0,
            converged: true,
            residual: 0.0,
        });
    }

    let z_base = net.z_base_ohm(opts.s_base_kva);
    let mut v = vec![v_slack; m];
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    for k in 1..=opts.max_iter {
        let currents = DVector::from_vec(equivalent_currents(inj, &v, opts.s_base_kva)?);
        let drops = mats.path_impedance() * &currents;
        let mut step = 0.0f64;
        for j in 0..m {
            let v_new = v_slack - drops[j] / z_base;
            step = step.max((v_new - v[j]).norm());
            v[j] = v_new;
        }
        iterations = k;
        residual = step;
        if step < opts.tol {
            converged = true;
            break;
        }
    }

    let currents = DVector::from_vec(equivalent_currents(inj, &v, opts.s_base_kva)?);
    let branch_currents: Vec<Complex64> =
        (mats.bibc_complex() * &currents).iter().copied().collect();
    let branch_losses = branch_losses(net, &branch_currents, opts.s_base_kva);
    let total = total_loss(&branch_losses);

    let mut voltages = Vec::with_capacity(m + 1);
    voltages.push(v_slack);
    voltages.extend_from_slice(&v);

    Ok(LoadFlowResult {
        voltages,
        branch_currents,
        branch_losses,
        total_loss: total,
        iterations,
        converged,
        residual,
    })
}

/// Per-branch `R|I|^2` / `X|I|^2` losses converted to kW/kvar.
pub fn branch_losses(
    net: &NetworkModel,
    branch_currents: &[Complex64],
    s_base_kva: f64,
) -> Vec<BranchLoss> {
    let z_base = net.z_base_ohm(s_base_kva);
    net.branches()
        .iter()
        .zip(branch_currents)
        .map(|(br, i)| {
            let i_sq = i.norm_sqr();
            BranchLoss {
                p_kw: br.r_ohm / z_base * i_sq * s_base_kva,
                q_kvar: br.x_ohm / z_base * i_sq * s_base_kva,
            }
        })
        .collect()
}

/// Component-wise sum of branch losses, kW + j kvar.
pub fn total_loss(losses: &[BranchLoss]) -> Complex64 {
    losses
        .iter()
        .fold(Complex64::ZERO, |acc, l| acc + Complex64::new(l.p_kw, l.q_kvar))
}

/// Complex power leaving the slack bus (kW + j kvar), summed over the
/// branches rooted there. Balances total load minus generation plus losses.
pub fn slack_power_kva(net: &NetworkModel, result: &LoadFlowResult, s_base_kva: f64) -> Complex64 {
    let v_slack = result.voltages[0];
    (0..net.n_branches())
        .filter(|&k| net.branch_parent(k) == 0)
        .map(|k| v_slack * result.branch_currents[k].conj() * s_base_kva)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus};

    fn two_bus(r: f64, x: f64, p: f64, q: f64) -> NetworkModel {
        NetworkModel::new(
            vec![
                Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0 },
                Bus { id: 2, p_load_kw: p, q_load_kvar: q },
            ],
            vec![Branch { from: 1, to: 2, r_ohm: r, x_ohm: x }],
            1,
            12.66,
            1.0,
        )
        .unwrap()
    }

    fn solve_net(net: &NetworkModel) -> LoadFlowResult {
        let mats = SweepMatrices::build(net);
        solve(net, &mats, &InjectionSet::from_loads(net), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn zero_injections_hold_flat_voltage() {
        let net = two_bus(0.5, 0.3, 0.0, 0.0);
        let mats = SweepMatrices::build(&net);
        let result =
            solve(&net, &mats, &InjectionSet::zeros(&net), &SolverOptions::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.residual, 0.0);
        for v in &result.voltages {
            assert_eq!(*v, Complex64::new(1.0, 0.0));
        }
        assert_eq!(result.total_loss, Complex64::ZERO);
    }

    #[test]
    fn unit_injection_current_follows_load_convention() {
        let net = two_bus(0.5, 0.3, 0.0, 0.0);
        let mut inj = InjectionSet::zeros(&net);
        inj.subtract_generation(&net, 2, -1000.0, 0.0).unwrap(); // 1 p.u. load
        let currents =
            equivalent_currents(&inj, &[Complex64::new(1.0, 0.0)], 1000.0).unwrap();
        assert_eq!(currents[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn current_matches_hand_evaluation_at_depressed_voltage() {
        // 100 kW at V = 0.98 angle -1 degree, 1 MVA base.
        let net = two_bus(0.5, 0.3, 100.0, 0.0);
        let inj = InjectionSet::from_loads(&net);
        let angle = (-1.0f64).to_radians();
        let v = Complex64::new(0.98 * angle.cos(), 0.98 * angle.sin());
        let currents = equivalent_currents(&inj, &[v], 1000.0).unwrap();
        let expected = (Complex64::new(0.1, 0.0) / v).conj();
        assert!((currents[0] - expected).norm() < 1e-15);
        assert!((currents[0].norm() - 0.1 / 0.98).abs() < 1e-12);
    }

    #[test]
    fn zero_voltage_is_singular() {
        let net = two_bus(0.5, 0.3, 100.0, 0.0);
        let inj = InjectionSet::from_loads(&net);
        let err = equivalent_currents(&inj, &[Complex64::ZERO], 1000.0).unwrap_err();
        assert!(matches!(err, Error::SingularInjection { bus: 2 }));
    }

    #[test]
    fn two_bus_loss_matches_hand_computation() {
        // z_pu = (0.5 + j0.3) / 160.2756; S = 0.1 + j0.06 p.u.
        // x/r equals q/p so the voltage drop is purely real.
        let net = two_bus(0.5, 0.3, 100.0, 60.0);
        let result = solve_net(&net);
        assert!(result.converged);
        assert!((result.voltages[1].norm() - 0.9995755506).abs() < 1e-9);
        assert!((result.total_loss.re - 0.042463).abs() < 1e-5);
        assert!((result.total_loss.im - 0.025478).abs() < 1e-5);
    }

    #[test]
    fn ieee33_base_case_loss_and_voltage() {
        let net = NetworkModel::ieee33();
        let result = solve_net(&net);
        assert!(result.converged);
        assert!(result.iterations < 20);
        // Independent nodal-oracle values for the canonical dataset.
        assert!((result.total_loss.re - 202.677).abs() < 0.05, "P = {}", result.total_loss.re);
        assert!((result.total_loss.im - 135.141).abs() < 0.05, "Q = {}", result.total_loss.im);
        assert!((result.total_loss_kva() - 243.600).abs() < 0.05);
        let (idx, vmin) = result.min_voltage();
        assert_eq!(net.external_id(idx), 18);
        assert!((vmin - 0.9131).abs() < 5e-4, "vmin = {vmin}");
    }

    #[test]
    fn branch_loss_sum_equals_total() {
        let net = NetworkModel::ieee33();
        let result = solve_net(&net);
        let sum = total_loss(&result.branch_losses);
        assert!((sum - result.total_loss).norm() <= 1e-9 * result.total_loss.norm());
        for loss in &result.branch_losses {
            assert!(loss.p_kw >= 0.0);
            assert!(loss.q_kvar >= 0.0);
        }
    }

    #[test]
    fn slack_power_balances_load_plus_loss() {
        let net = NetworkModel::ieee33();
        let result = solve_net(&net);
        let slack = slack_power_kva(&net, &result, 1000.0);
        let expect = net.total_load() + result.total_loss;
        assert!((slack - expect).norm() < 1e-2, "slack {slack}, expect {expect}");
    }

    #[test]
    fn ten_amp_branch_dissipates_ten_watts() {
        // 1 kV / 1 kVA base makes I_base 1 A; 10 A through 0.1 ohm is 10 W.
        let net = two_bus(0.1, 0.0, 0.0, 0.0);
        let net = NetworkModel::new(
            net.buses().to_vec(),
            net.branches().to_vec(),
            1,
            1.0,
            1.0,
        )
        .unwrap();
        let losses = branch_losses(&net, &[Complex64::new(10.0, 0.0)], 1.0);
        assert!((losses[0].p_kw - 0.01).abs() < 1e-12);
        assert_eq!(losses[0].q_kvar, 0.0);
    }

    #[test]
    fn total_loss_is_componentwise_sum() {
        assert_eq!(total_loss(&[]), Complex64::ZERO);
        let losses = [
            BranchLoss { p_kw: 3.0, q_kvar: 1.0 },
            BranchLoss { p_kw: 2.0, q_kvar: 2.0 },
        ];
        assert_eq!(total_loss(&losses), Complex64::new(5.0, 3.0));
    }

    #[test]
    fn generation_at_load_bus_reduces_two_bus_loss() {
        let net = two_bus(0.5, 0.3, 100.0, 60.0);
        let mats = SweepMatrices::build(&net);
        let base =
            solve(&net, &mats, &InjectionSet::from_loads(&net), &SolverOptions::default())
                .unwrap();
        let mut inj = InjectionSet::from_loads(&net);
        inj.subtract_generation(&net, 2, 50.0, 30.0).unwrap();
        let with_gen = solve(&net, &mats, &inj, &SolverOptions::default()).unwrap();
        assert!(with_gen.total_loss_kva() < base.total_loss_kva());
    }

    #[test]
    fn identical_inputs_solve_bit_identically() {
        let net = NetworkModel::ieee33();
        let a = solve_net(&net);
        let b = solve_net(&net);
        assert_eq!(a, b);
    }
}
