//! Candidate evaluation: power-balance repair, loss and cost objectives,
//! constraint penalties, and the weighted combination used by the search.
//!
//! Constraint handling is repair-first: the equality `sum(p) = h` and the
//! device feasibility sets are restored by projection before the load flow
//! runs, and only the bus-voltage band is left to a quadratic exterior
//! penalty.

use serde::{Deserialize, Serialize};

use crate::devices::{
    self, BatteryCostParams, BatteryType, BessBounds, DeviceKind, DevicePlacement, PqChartParams,
    WtCatalog, WtCostConfig,
};
use crate::error::{Error, Result};
use crate::network::{NetworkModel, SweepMatrices};
use crate::powerflow::{self, InjectionSet, LoadFlowResult, SolverOptions};

/// Weights of the combined objective; normalized so they sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights::loss_only()
    }
}

impl ObjectiveWeights {
    /// Pure loss minimization: (0, 0, 1).
    pub fn loss_only() -> Self {
        ObjectiveWeights { w1: 0.0, w2: 0.0, w3: 1.0 }
    }

    pub fn normalized(self) -> Result<Self> {
        if self.w1 < 0.0 || self.w2 < 0.0 || self.w3 < 0.0 {
            return Err(Error::Config("objective weights must be non-negative".into()));
        }
        let sum = self.w1 + self.w2 + self.w3;
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::Config("objective weights must not all be zero".into()));
        }
        Ok(ObjectiveWeights { w1: self.w1 / sum, w2: self.w2 / sum, w3: self.w3 / sum })
    }

    pub fn is_loss_only(&self) -> bool {
        self.w1 == 0.0 && self.w2 == 0.0 && self.w3 > 0.0
    }
}

/// Per-term scale divisors for the combined objective. Unit scales keep the
/// raw mixed units ($ per kW, $, kVA); set them to typical magnitudes to
/// normalize the terms instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermScales {
    pub wt_cost_ratio: f64,
    pub bess_cost: f64,
    pub loss_kva: f64,
}

impl Default for TermScales {
    fn default() -> Self {
        TermScales { wt_cost_ratio: 1.0, bess_cost: 1.0, loss_kva: 1.0 }
    }
}

/// Penalty multipliers and the bus-voltage band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub voltage_weight: f64,
    pub bound_weight: f64,
    pub chart_weight: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            voltage_weight: 1e6,
            bound_weight: 1.0,
            chart_weight: 1.0,
            v_min: 0.90,
            v_max: 1.05,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.voltage_weight < 0.0 || self.bound_weight < 0.0 || self.chart_weight < 0.0 {
            return Err(Error::Config("penalty weights must be non-negative".into()));
        }
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min < self.v_max) {
            return Err(Error::Config(format!(
                "voltage band is empty: v_min {} >= v_max {}",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }
}

/// Feasibility envelopes for both device kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceLimits {
    pub chart: PqChartParams,
    pub wt_p_max_kw: f64,
    pub bess: BessBounds,
}

impl DeviceLimits {
    /// Budget-derived defaults: WT capped at `h`, chart vertex at `0.64 h`,
    /// battery box `[0, h]` on both axes.
    pub fn from_budget(h_kw: f64) -> Self {
        DeviceLimits {
            chart: PqChartParams::from_budget(h_kw),
            wt_p_max_kw: h_kw,
            bess: BessBounds::from_budget(h_kw),
        }
    }
}

/// Sums of squared constraint violations, by constraint class (unweighted).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub voltage: f64,
    pub bounds: f64,
    pub chart: f64,
}

impl Violations {
    pub fn is_feasible(&self) -> bool {
        self.voltage == 0.0 && self.bounds == 0.0 && self.chart == 0.0
    }
}

/// One siting/sizing plan with its cached evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub placements: Vec<DevicePlacement>,
    pub fitness: f64,
    pub violations: Violations,
    pub flow: Option<LoadFlowResult>,
}

impl Candidate {
    pub fn new(placements: Vec<DevicePlacement>) -> Self {
        Candidate {
            placements,
            fitness: f64::INFINITY,
            violations: Violations::default(),
            flow: None,
        }
    }

    pub fn total_p_kw(&self) -> f64 {
        self.placements.iter().map(|p| p.p_kw).sum()
    }

    pub fn is_feasible(&self) -> bool {
        self.violations.is_feasible()
    }
}

/// Restores the power-balance equality `sum(p) = h` by uniform scaling, then
/// projects reactive setpoints back into each device's feasible set.
///
/// All-zero active power is redistributed equally. A candidate already
/// balanced to within 1e-9 relative is left untouched, which makes the
/// repair idempotent field-for-field. Empty candidates are a no-op.
pub fn repair_power_balance(candidate: &mut Candidate, h_kw: f64, limits: &DeviceLimits) {
    if candidate.placements.is_empty() {
        return;
    }
    for placement in &mut candidate.placements {
        if !placement.p_kw.is_finite() || placement.p_kw < 0.0 {
            placement.p_kw = 0.0;
        }
    }
    let sum: f64 = candidate.placements.iter().map(|p| p.p_kw).sum();
    if sum <= 0.0 {
        let share = h_kw / candidate.placements.len() as f64;
        for placement in &mut candidate.placements {
            placement.p_kw = share;
        }
    } else if (sum - h_kw).abs() > 1e-9 * h_kw.abs().max(1.0) {
        let scale = h_kw / sum;
        for placement in &mut candidate.placements {
            placement.p_kw *= scale;
        }
    }
    for placement in &mut candidate.placements {
        match placement.kind {
            DeviceKind::Wt => {
                placement.q_kvar = devices::project_wt_q(
                    placement.p_kw,
                    placement.q_kvar,
                    &limits.chart,
                    limits.wt_p_max_kw,
                );
            }
            DeviceKind::Bess => {
                placement.q_kvar =
                    placement.q_kvar.clamp(limits.bess.q_min_kvar, limits.bess.q_max_kvar);
            }
        }
    }
}

/// Bus loads minus all device generation, ready for the sweep solver.
pub fn injections_with_devices(
    net: &NetworkModel,
    placements: &[DevicePlacement],
) -> Result<InjectionSet> {
    let mut inj = InjectionSet::from_loads(net);
    for placement in placements {
        inj.subtract_generation(net, placement.bus, placement.p_kw, placement.q_kvar)?;
    }
    Ok(inj)
}

/// Fitness assigned to candidates whose load flow fails: a million times the
/// device-free base loss, so they always lose to any converged plan.
pub fn non_convergence_sentinel(
    net: &NetworkModel,
    mats: &SweepMatrices,
    opts: &SolverOptions,
) -> f64 {
    let base = powerflow::solve(net, mats, &InjectionSet::from_loads(net), opts);
    let reference = match base {
        Ok(flow) if flow.converged => flow.total_loss_kva(),
        _ => net.total_load().norm(),
    };
    1e6 * reference
}

/// `|S_TL|` in kVA for the candidate's plan, caching the flow on the
/// candidate. Non-convergence and singular injections yield the sentinel.
pub fn loss_objective(
    candidate: &mut Candidate,
    net: &NetworkModel,
    mats: &SweepMatrices,
    opts: &SolverOptions,
) -> Result<f64> {
    let inj = injections_with_devices(net, &candidate.placements)?;
    match powerflow::solve(net, mats, &inj, opts) {
        Ok(flow) => {
            let loss = if flow.converged {
                flow.total_loss_kva()
            } else {
                non_convergence_sentinel(net, mats, opts)
            };
            candidate.flow = Some(flow);
            Ok(loss)
        }
        Err(Error::SingularInjection { .. }) => {
            candidate.flow = None;
            Ok(non_convergence_sentinel(net, mats, opts))
        }
        Err(err) => Err(err),
    }
}

/// Cost components of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    /// `sum(cost_WT) / sum(P_WT)` over composed fleets; 0 when no wind power.
    pub wt_ratio: f64,
    pub wt_total_cost: f64,
    pub wt_total_power_kw: f64,
    pub bess_total_cost: f64,
    /// Per placement: the composed fleet counts for WT entries, None for BESS.
    pub fleets: Vec<Option<Vec<u32>>>,
}

/// Composes a turbine fleet per WT placement and prices every device.
pub fn cost_terms(
    placements: &[DevicePlacement],
    catalog: &WtCatalog,
    battery: &BatteryCostParams,
    wt_cost: &WtCostConfig,
) -> Result<CostBreakdown> {
    let mut wt_total_cost = 0.0;
    let mut wt_total_power = 0.0;
    let mut bess_total = 0.0;
    let mut fleets = Vec::with_capacity(placements.len());
    for placement in placements {
        match placement.kind {
            DeviceKind::Wt => {
                let counts = devices::compose_fleet(placement.p_kw, catalog)?;
                wt_total_cost += devices::wt_fleet_cost(&counts, catalog, wt_cost);
                wt_total_power += devices::wt_fleet_power(&counts, catalog);
                fleets.push(Some(counts));
            }
            DeviceKind::Bess => {
                bess_total += devices::bess_cost(placement.p_kw, battery);
                fleets.push(None);
            }
        }
    }
    let wt_ratio = if wt_total_power > 0.0 { wt_total_cost / wt_total_power } else { 0.0 };
    Ok(CostBreakdown {
        wt_ratio,
        wt_total_cost,
        wt_total_power_kw: wt_total_power,
        bess_total_cost: bess_total,
        fleets,
    })
}

/// The cost objective: WT cost-per-kW ratio plus total battery cost.
pub fn cost_objective(
    candidate: &Candidate,
    catalog: &WtCatalog,
    battery: &BatteryCostParams,
    wt_cost: &WtCostConfig,
) -> Result<f64> {
    let terms = cost_terms(&candidate.placements, catalog, battery, wt_cost)?;
    Ok(terms.wt_ratio + terms.bess_total_cost)
}

/// Squared violations of the voltage band, device boxes, and the WT chart.
pub fn measure_violations(
    placements: &[DevicePlacement],
    voltage_magnitudes: &[f64],
    cfg: &PenaltyConfig,
    limits: &DeviceLimits,
) -> Violations {
    let mut v = Violations::default();
    for &mag in voltage_magnitudes {
        let below = (cfg.v_min - mag).max(0.0);
        let above = (mag - cfg.v_max).max(0.0);
        v.voltage += below * below + above * above;
    }
    for placement in placements {
        let (p, q) = (placement.p_kw, placement.q_kvar);
        match placement.kind {
            DeviceKind::Wt => {
                let below = (-p).max(0.0);
                let above = (p - limits.wt_p_max_kw).max(0.0);
                v.bounds += below * below + above * above;
                let cap = (q.abs() - limits.chart.q_cap_kvar).max(0.0);
                let upper = (q - limits.chart.slope * p).max(0.0);
                let lower = (-q - limits.chart.slope * p).max(0.0);
                v.chart += cap * cap + upper * upper + lower * lower;
            }
            DeviceKind::Bess => {
                let b = &limits.bess;
                for violation in [
                    (b.p_min_kw - p).max(0.0),
                    (p - b.p_max_kw).max(0.0),
                    (b.q_min_kvar - q).max(0.0),
                    (q - b.q_max_kvar).max(0.0),
                ] {
                    v.bounds += violation * violation;
                }
            }
        }
    }
    v
}

/// Weighted sum of squared violations; zero iff the plan is feasible.
pub fn penalty_value(violations: &Violations, cfg: &PenaltyConfig) -> f64 {
    cfg.voltage_weight * violations.voltage
        + cfg.bound_weight * violations.bounds
        + cfg.chart_weight * violations.chart
}

/// Convenience wrapper matching the candidate/flow calling shape.
pub fn penalty(
    candidate: &Candidate,
    flow: &LoadFlowResult,
    cfg: &PenaltyConfig,
    limits: &DeviceLimits,
) -> f64 {
    let violations =
        measure_violations(&candidate.placements, &flow.voltage_magnitudes(), cfg, limits);
    penalty_value(&violations, cfg)
}

/// The weighted combined objective:
/// `w1 * ratio/s1 + w2 * bess_cost/s2 + w3 * loss/s3 + penalty`.
pub fn combine(
    weights: &ObjectiveWeights,
    scales: &TermScales,
    wt_ratio: f64,
    bess_cost: f64,
    loss_kva: f64,
    penalty: f64,
) -> f64 {
    weights.w1 * (wt_ratio / scales.wt_cost_ratio)
        + weights.w2 * (bess_cost / scales.bess_cost)
        + weights.w3 * (loss_kva / scales.loss_kva)
        + penalty
}

/// Owns everything needed to score a plan on one feeder. Immutable and
/// `Sync`: candidates can be evaluated concurrently.
#[derive(Debug, Clone)]
pub struct Evaluator {
    net: NetworkModel,
    mats: SweepMatrices,
    opts: SolverOptions,
    limits: DeviceLimits,
    h_kw: f64,
    weights: ObjectiveWeights,
    scales: TermScales,
    penalty_cfg: PenaltyConfig,
    catalog: WtCatalog,
    battery: BatteryCostParams,
    wt_cost: WtCostConfig,
    base_flow: LoadFlowResult,
}

impl Evaluator {
    /// Builds an evaluator with default solver, limits derived from the
    /// budget, loss-only weights, and Li-ion battery pricing. Solves the
    /// device-free base case once.
    pub fn new(net: &NetworkModel, h_kw: f64) -> Result<Self> {
        if !h_kw.is_finite() || h_kw < 0.0 {
            return Err(Error::Config(format!("power budget must be non-negative, got {h_kw}")));
        }
        let opts = SolverOptions::default();
        let mats = SweepMatrices::build(net);
        let base_flow = powerflow::solve(net, &mats, &InjectionSet::from_loads(net), &opts)?;
        Ok(Evaluator {
            net: net.clone(),
            mats,
            opts,
            limits: DeviceLimits::from_budget(h_kw),
            h_kw,
            weights: ObjectiveWeights::loss_only(),
            scales: TermScales::default(),
            penalty_cfg: PenaltyConfig::default(),
            catalog: WtCatalog::default(),
            battery: BatteryType::LiIon.params(),
            wt_cost: WtCostConfig::default(),
            base_flow,
        })
    }

    pub fn with_solver(mut self, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        self.base_flow =
            powerflow::solve(&self.net, &self.mats, &InjectionSet::from_loads(&self.net), &opts)?;
        self.opts = opts;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: ObjectiveWeights) -> Result<Self> {
        self.weights = weights.normalized()?;
        Ok(self)
    }

    pub fn with_scales(mut self, scales: TermScales) -> Self {
        self.scales = scales;
        self
    }

    pub fn with_penalty(mut self, cfg: PenaltyConfig) -> Result<Self> {
        cfg.validate()?;
        self.penalty_cfg = cfg;
        Ok(self)
    }

    pub fn with_limits(mut self, limits: DeviceLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_costs(
        mut self,
        catalog: WtCatalog,
        battery: BatteryCostParams,
        wt_cost: WtCostConfig,
    ) -> Self {
        self.catalog = catalog;
        self.battery = battery;
        self.wt_cost = wt_cost;
        self
    }

    pub fn net(&self) -> &NetworkModel {
        &self.net
    }

    pub fn mats(&self) -> &SweepMatrices {
        &self.mats
    }

    pub fn solver_options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn limits(&self) -> &DeviceLimits {
        &self.limits
    }

    pub fn h_kw(&self) -> f64 {
        self.h_kw
    }

    pub fn weights(&self) -> &ObjectiveWeights {
        &self.weights
    }

    pub fn penalty_config(&self) -> &PenaltyConfig {
        &self.penalty_cfg
    }

    pub fn catalog(&self) -> &WtCatalog {
        &self.catalog
    }

    pub fn battery(&self) -> &BatteryCostParams {
        &self.battery
    }

    pub fn wt_cost_config(&self) -> &WtCostConfig {
        &self.wt_cost
    }

    /// The device-free solution this evaluator was built against.
    pub fn base_flow(&self) -> &LoadFlowResult {
        &self.base_flow
    }

    pub fn base_loss_kva(&self) -> f64 {
        self.base_flow.total_loss_kva()
    }

    fn sentinel(&self) -> f64 {
        1e6 * if self.base_flow.converged {
            self.base_flow.total_loss_kva()
        } else {
            self.net.total_load().norm()
        }
    }

    /// Repairs, solves, and scores a plan.
    pub fn try_evaluate(&self, placements: Vec<DevicePlacement>) -> Result<Candidate> {
        let mut candidate = Candidate::new(placements);
        repair_power_balance(&mut candidate, self.h_kw, &self.limits);

        let inj = injections_with_devices(&self.net, &candidate.placements)?;
        let loss_kva = match powerflow::solve(&self.net, &self.mats, &inj, &self.opts) {
            Ok(flow) => {
                let loss = flow.converged.then(|| flow.total_loss_kva());
                candidate.flow = Some(flow);
                loss
            }
            Err(Error::SingularInjection { .. }) => None,
            Err(err) => return Err(err),
        };

        let magnitudes: Vec<f64> =
            candidate.flow.as_ref().map(|f| f.voltage_magnitudes()).unwrap_or_default();
        candidate.violations =
            measure_violations(&candidate.placements, &magnitudes, &self.penalty_cfg, &self.limits);
        let penalty = penalty_value(&candidate.violations, &self.penalty_cfg);

        // A failed load flow marks the plan infeasible outright, bypassing
        // the weighting so the sentinel cannot be zeroed out.
        let Some(loss_kva) = loss_kva else {
            candidate.fitness = self.sentinel() + penalty;
            return Ok(candidate);
        };

        let (wt_ratio, bess_cost) = if self.weights.w1 != 0.0 || self.weights.w2 != 0.0 {
            let terms =
                cost_terms(&candidate.placements, &self.catalog, &self.battery, &self.wt_cost)?;
            (terms.wt_ratio, terms.bess_total_cost)
        } else {
            (0.0, 0.0)
        };

        candidate.fitness =
            combine(&self.weights, &self.scales, wt_ratio, bess_cost, loss_kva, penalty);
        Ok(candidate)
    }
}
