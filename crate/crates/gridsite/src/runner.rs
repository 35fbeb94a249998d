//! Case-study definitions, execution, and report assembly.
//!
//! A case fixes the device counts, the power budget, and the objective
//! family; running it solves the device-free base case, searches with the
//! GA, and assembles a report with losses, costs, and the voltage profile.
//! Fixed plans can also be re-evaluated without any search.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::devices::{
    self, BatteryType, DeviceKind, DevicePlacement, PqChartParams, WtCatalog, WtCostConfig,
};
use crate::error::{Error, Result};
use crate::ga::{self, GaConfig, GaTrace, SlotLayout};
use crate::network::{NetworkModel, SweepMatrices};
use crate::objectives::{
    measure_violations, Candidate, DeviceLimits, Evaluator, ObjectiveWeights, PenaltyConfig,
    TermScales,
};
use crate::powerflow::{self, InjectionSet, LoadFlowResult, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFamily {
    BessOnly,
    WtOnly,
    JointLoss,
    JointLossCost,
}

impl std::fmt::Display for CaseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CaseFamily::BessOnly => "bess_only",
            CaseFamily::WtOnly => "wt_only",
            CaseFamily::JointLoss => "joint_loss",
            CaseFamily::JointLossCost => "joint_loss_cost",
        };
        f.write_str(name)
    }
}

/// How the reactive cap of the WT chart is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartMode {
    /// Cap at the chart vertex `0.64 h`.
    #[default]
    Budget,
    /// Cap at `0.32` of the rated active power.
    StrictRated,
}

/// Everything needed to run one case study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub name: String,
    pub family: CaseFamily,
    #[serde(default)]
    pub n_wt: usize,
    #[serde(default)]
    pub n_bess: usize,
    pub h_kw: f64,
    /// Objective weights; loss families are fixed at (0, 0, 1), the
    /// cost family defaults to equal thirds.
    #[serde(default)]
    pub weights: Option<ObjectiveWeights>,
    #[serde(default = "default_battery")]
    pub battery: BatteryType,
    #[serde(default)]
    pub chart_mode: ChartMode,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub scales: TermScales,
    #[serde(default)]
    pub wt_cost: WtCostConfig,
    #[serde(default)]
    pub catalog: WtCatalog,
}

fn default_battery() -> BatteryType {
    BatteryType::LiIon
}

impl CaseConfig {
    fn base(name: String, family: CaseFamily, n_wt: usize, n_bess: usize, h_kw: f64) -> Self {
        CaseConfig {
            name,
            family,
            n_wt,
            n_bess,
            h_kw,
            weights: None,
            battery: BatteryType::LiIon,
            chart_mode: ChartMode::Budget,
            ga: GaConfig::default(),
            solver: SolverOptions::default(),
            penalty: PenaltyConfig::default(),
            scales: TermScales::default(),
            wt_cost: WtCostConfig::default(),
            catalog: WtCatalog::default(),
        }
    }

    pub fn bess_only(n_bess: usize, h_kw: f64) -> Self {
        Self::base(format!("bess_only_{n_bess}"), CaseFamily::BessOnly, 0, n_bess, h_kw)
    }

    pub fn wt_only(n_wt: usize, h_kw: f64) -> Self {
        Self::base(format!("wt_only_{n_wt}"), CaseFamily::WtOnly, n_wt, 0, h_kw)
    }

    pub fn joint_loss(n_wt: usize, n_bess: usize, h_kw: f64) -> Self {
        Self::base(
            format!("joint_loss_{n_wt}wt_{n_bess}bess"),
            CaseFamily::JointLoss,
            n_wt,
            n_bess,
            h_kw,
        )
    }

    pub fn joint_loss_cost(n_wt: usize, n_bess: usize, h_kw: f64) -> Self {
        Self::base(
            format!("joint_cost_{n_wt}wt_{n_bess}bess"),
            CaseFamily::JointLossCost,
            n_wt,
            n_bess,
            h_kw,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid case name {:?}", self.name)));
        }
        if !self.h_kw.is_finite() || self.h_kw < 0.0 {
            return Err(Error::Config(format!("h_kw must be non-negative, got {}", self.h_kw)));
        }
        match self.family {
            CaseFamily::BessOnly => {
                if self.n_wt != 0 {
                    return Err(Error::Config("bess_only cases must have n_wt = 0".into()));
                }
            }
            CaseFamily::WtOnly => {
                if self.n_bess != 0 {
                    return Err(Error::Config("wt_only cases must have n_bess = 0".into()));
                }
            }
            CaseFamily::JointLoss | CaseFamily::JointLossCost => {
                if self.n_wt < 1 || self.n_bess < 1 {
                    return Err(Error::Config(
                        "joint cases need at least one WT and one BESS".into(),
                    ));
                }
            }
        }
        if self.family != CaseFamily::JointLossCost {
            if let Some(w) = &self.weights {
                if !w.is_loss_only() {
                    return Err(Error::Config(format!(
                        "{} cases minimize loss only; weights must be (0, 0, 1)",
                        self.family
                    )));
                }
            }
        }
        self.effective_weights()?;
        self.ga.validate()?;
        self.solver.validate()?;
        self.penalty.validate()?;
        Ok(())
    }

    pub fn effective_weights(&self) -> Result<ObjectiveWeights> {
        match self.family {
            CaseFamily::JointLossCost => self
                .weights
                .unwrap_or(ObjectiveWeights { w1: 1.0, w2: 1.0, w3: 1.0 })
                .normalized(),
            _ => Ok(ObjectiveWeights::loss_only()),
        }
    }

    pub fn device_limits(&self) -> DeviceLimits {
        self.device_limits_for(self.h_kw)
    }

    fn device_limits_for(&self, h_kw: f64) -> DeviceLimits {
        let mut limits = DeviceLimits::from_budget(h_kw);
        if self.chart_mode == ChartMode::StrictRated {
            limits.chart = PqChartParams::strict_rated(h_kw);
        }
        limits
    }

    pub fn build_evaluator(&self, net: &NetworkModel) -> Result<Evaluator> {
        Ok(Evaluator::new(net, self.h_kw)?
            .with_solver(self.solver.clone())?
            .with_weights(self.effective_weights()?)?
            .with_scales(self.scales)
            .with_penalty(self.penalty)?
            .with_limits(self.device_limits())
            .with_costs(self.catalog.clone(), self.battery.params(), self.wt_cost))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub p_kw: f64,
    pub q_kvar: f64,
    pub s_kva: f64,
}

impl LossSummary {
    fn from_complex(total: Complex64) -> Self {
        LossSummary { p_kw: total.re, q_kvar: total.im, s_kva: total.norm() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub kind: DeviceKind,
    pub bus: u32,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub s_kva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_capacity_kva: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet_counts: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltagePoint {
    pub bus: u32,
    pub v_base_pu: f64,
    pub v_after_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub name: String,
    pub family: CaseFamily,
    pub h_kw: f64,
    pub devices: Vec<DeviceReport>,
    pub total_p_kw: f64,
    pub base_loss: LossSummary,
    pub final_loss: LossSummary,
    pub loss_reduction_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wt_cost_total_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wt_cost_ratio_usd_per_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bess_cost_total_usd: Option<f64>,
    pub min_voltage_bus: u32,
    pub min_voltage_pu: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ga_trace: Option<String>,
    pub voltage_profile: Vec<VoltagePoint>,
    pub warnings: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    name: &str,
    family: CaseFamily,
    net: &NetworkModel,
    base_flow: &LoadFlowResult,
    candidate: &Candidate,
    h_kw: f64,
    include_costs: bool,
    cfg: &CaseConfig,
    limits: &DeviceLimits,
) -> Result<CaseReport> {
    let flow = candidate
        .flow
        .as_ref()
        .ok_or_else(|| Error::Config("candidate carries no load-flow result".into()))?;

    let battery = cfg.battery.params();
    let costs = if include_costs {
        Some(crate::objectives::cost_terms(
            &candidate.placements,
            &cfg.catalog,
            &battery,
            &cfg.wt_cost,
        )?)
    } else {
        None
    };

    let mut devices_out = Vec::with_capacity(candidate.placements.len());
    for (i, placement) in candidate.placements.iter().enumerate() {
        let s_kva = devices::apparent_power(placement.p_kw, placement.q_kvar);
        let (dc, cost, fleet) = match placement.kind {
            DeviceKind::Bess => (
                Some(devices::bess_dc_capacity(s_kva, battery.eta)?),
                costs.as_ref().map(|_| devices::bess_cost(placement.p_kw, &battery)),
                None,
            ),
            DeviceKind::Wt => {
                let fleet = costs.as_ref().and_then(|c| c.fleets[i].clone());
                let cost = fleet
                    .as_ref()
                    .map(|counts| devices::wt_fleet_cost(counts, &cfg.catalog, &cfg.wt_cost));
                (None, cost, fleet)
            }
        };
        devices_out.push(DeviceReport {
            kind: placement.kind,
            bus: placement.bus,
            p_kw: placement.p_kw,
            q_kvar: placement.q_kvar,
            s_kva,
            dc_capacity_kva: dc,
            cost_usd: cost,
            fleet_counts: fleet,
        });
    }

    let base_loss = LossSummary::from_complex(base_flow.total_loss);
    let final_loss = LossSummary::from_complex(flow.total_loss);
    let loss_reduction_pct = if base_loss.s_kva > 0.0 {
        100.0 * (1.0 - final_loss.s_kva / base_loss.s_kva)
    } else {
        0.0
    };

    let voltage_profile = (0..net.n_buses())
        .map(|i| VoltagePoint {
            bus: net.external_id(i),
            v_base_pu: base_flow.voltages[i].norm(),
            v_after_pu: flow.voltages[i].norm(),
        })
        .collect();
    let (min_idx, min_voltage_pu) = flow.min_voltage();

    let mut warnings = Vec::new();
    if !flow.converged {
        warnings.push(format!(
            "load flow did not converge after {} iterations (residual {:.3e})",
            flow.iterations, flow.residual
        ));
    }
    for placement in &candidate.placements {
        match placement.kind {
            DeviceKind::Wt => {
                if !devices::wt_feasible(
                    placement.p_kw,
                    placement.q_kvar,
                    &limits.chart,
                    limits.wt_p_max_kw,
                ) {
                    warnings.push(format!(
                        "WT at bus {} (p = {} kW, q = {} kvar) violates the PQ chart",
                        placement.bus, placement.p_kw, placement.q_kvar
                    ));
                }
            }
            DeviceKind::Bess => {
                if !limits.bess.contains(placement.p_kw, placement.q_kvar) {
                    warnings.push(format!(
                        "BESS at bus {} (p = {} kW, q = {} kvar) violates its power bounds",
                        placement.bus, placement.p_kw, placement.q_kvar
                    ));
                }
            }
        }
    }

    Ok(CaseReport {
        name: name.to_string(),
        family,
        h_kw,
        devices: devices_out,
        total_p_kw: candidate.total_p_kw(),
        base_loss,
        final_loss,
        loss_reduction_pct,
        wt_cost_total_usd: costs.as_ref().map(|c| c.wt_total_cost),
        wt_cost_ratio_usd_per_kw: costs.as_ref().map(|c| c.wt_ratio),
        bess_cost_total_usd: costs.as_ref().map(|c| c.bess_total_cost),
        min_voltage_bus: net.external_id(min_idx),
        min_voltage_pu,
        converged: flow.converged,
        iterations: flow.iterations,
        ga_trace: None,
        voltage_profile,
        warnings,
    })
}

/// Runs one case end to end: base solve, GA search, report assembly.
pub fn run_case(
    cfg: &CaseConfig,
    net: &NetworkModel,
    seed_override: Option<u64>,
) -> Result<(CaseReport, GaTrace)> {
    cfg.validate()?;
    let mut ga_cfg = cfg.ga.clone();
    ga_cfg.h_kw = cfg.h_kw;
    if let Some(seed) = seed_override {
        ga_cfg.seed = seed;
    }
    let evaluator = cfg.build_evaluator(net)?;
    let layout = SlotLayout { n_wt: cfg.n_wt, n_bess: cfg.n_bess };
    let limits = cfg.device_limits();
    let (best, trace) = ga::run(&ga_cfg, layout, net, limits, &evaluator)?;

    let mut report = build_report(
        &cfg.name,
        cfg.family,
        net,
        evaluator.base_flow(),
        &best,
        cfg.h_kw,
        cfg.family == CaseFamily::JointLossCost,
        cfg,
        &limits,
    )?;
    report.ga_trace = Some("ga_trace.csv".to_string());
    Ok((report, trace))
}

/// Re-evaluates a fixed plan exactly as given: no search, no repair.
///
/// The plan's own power total serves as the budget, reactive setpoints are
/// not projected, and any chart or bound violation is surfaced as a report
/// warning instead of being corrected. Costs are always included.
pub fn evaluate_fixed(
    net: &NetworkModel,
    placements: Vec<DevicePlacement>,
    cfg: &CaseConfig,
) -> Result<CaseReport> {
    cfg.solver.validate()?;
    cfg.penalty.validate()?;
    for placement in &placements {
        if !placement.p_kw.is_finite() || !placement.q_kvar.is_finite() {
            return Err(Error::Config(format!(
                "placement at bus {} has non-finite power",
                placement.bus
            )));
        }
        if placement.p_kw < 0.0 {
            return Err(Error::Config(format!(
                "placement at bus {} has negative active power",
                placement.bus
            )));
        }
        match net.internal_index(placement.bus) {
            None => return Err(Error::Config(format!("unknown bus {}", placement.bus))),
            Some(0) => {
                return Err(Error::Config(format!(
                    "cannot place a device on slack bus {}",
                    placement.bus
                )))
            }
            Some(_) => {}
        }
    }

    let h_eval: f64 = placements.iter().map(|p| p.p_kw).sum();
    let limits = cfg.device_limits_for(h_eval);
    let mats = SweepMatrices::build(net);
    let base_flow = powerflow::solve(net, &mats, &InjectionSet::from_loads(net), &cfg.solver)?;

    let inj = crate::objectives::injections_with_devices(net, &placements)?;
    let flow = powerflow::solve(net, &mats, &inj, &cfg.solver)?;

    let mut candidate = Candidate::new(placements);
    candidate.violations = measure_violations(
        &candidate.placements,
        &flow.voltage_magnitudes(),
        &cfg.penalty,
        &limits,
    );
    candidate.fitness = flow.total_loss_kva();
    candidate.flow = Some(flow);

    build_report(&cfg.name, cfg.family, net, &base_flow, &candidate, h_eval, true, cfg, &limits)
}

/// The four case families of the study: six BESS-only, six WT-only, nine
/// joint loss-minimization, and nine joint loss-plus-cost cases, all at a
/// 1000 kW budget.
pub fn paper_suite() -> Vec<CaseConfig> {
    let mut cases = Vec::with_capacity(30);
    for n in 1..=6 {
        cases.push(CaseConfig::bess_only(n, 1000.0));
    }
    for n in 1..=6 {
        cases.push(CaseConfig::wt_only(n, 1000.0));
    }
    for n_wt in 1..=3 {
        for n_bess in 1..=3 {
            cases.push(CaseConfig::joint_loss(n_wt, n_bess, 1000.0));
        }
    }
    for n_wt in 1..=3 {
        for n_bess in 1..=3 {
            cases.push(CaseConfig::joint_loss_cost(n_wt, n_bess, 1000.0));
        }
    }
    cases
}

pub struct CaseOutcome {
    pub config: CaseConfig,
    pub result: Result<(CaseReport, GaTrace)>,
}

/// Runs every case, recording failures without aborting the suite.
pub fn run_suite(
    configs: &[CaseConfig],
    net: &NetworkModel,
    seed_override: Option<u64>,
) -> Vec<CaseOutcome> {
    configs
        .iter()
        .map(|cfg| CaseOutcome {
            config: cfg.clone(),
            result: run_case(cfg, net, seed_override),
        })
        .collect()
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// One summary row per case, failures marked in the status column.
pub fn summary_csv(outcomes: &[CaseOutcome]) -> String {
    let mut out = String::from(
        "case,family,n_wt,n_bess,h_kw,base_loss_kva,loss_kva,reduction_pct,wt_cost_usd,bess_cost_usd,status\n",
    );
    for outcome in outcomes {
        let cfg = &outcome.config;
        match &outcome.result {
            Ok((report, _)) => {
                let wt_cost = report.wt_cost_total_usd.map(|v| v.to_string()).unwrap_or_default();
                let bess_cost =
                    report.bess_cost_total_usd.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},ok\n",
                    csv_field(&cfg.name),
                    cfg.family,
                    cfg.n_wt,
                    cfg.n_bess,
                    cfg.h_kw,
                    report.base_loss.s_kva,
                    report.final_loss.s_kva,
                    report.loss_reduction_pct,
                    wt_cost,
                    bess_cost,
                ));
            }
            Err(err) => {
                out.push_str(&format!(
                    "{},{},{},{},{},,,,,,{}\n",
                    csv_field(&cfg.name),
                    cfg.family,
                    cfg.n_wt,
                    cfg.n_bess,
                    cfg.h_kw,
                    csv_field(&format!("error: {err}")),
                ));
            }
        }
    }
    out
}

pub fn voltage_profile_csv(report: &CaseReport) -> String {
    let mut out = String::from("bus_id,v_base_pu,v_after_pu\n");
    for point in &report.voltage_profile {
        out.push_str(&format!("{},{},{}\n", point.bus, point.v_base_pu, point.v_after_pu));
    }
    out
}

/// Writes `report.json`, `voltage_profile.csv`, and optionally
/// `ga_trace.csv` under `dir`.
pub fn write_case_outputs(
    dir: &Path,
    report: &CaseReport,
    trace: Option<&GaTrace>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json)?;
    std::fs::write(dir.join("voltage_profile.csv"), voltage_profile_csv(report))?;
    if let Some(trace) = trace {
        std::fs::write(dir.join("ga_trace.csv"), trace.to_csv())?;
    }
    Ok(())
}

/// Writes every successful case under `root/<case>/` plus `summary.csv`.
pub fn write_suite_outputs(root: &Path, outcomes: &[CaseOutcome]) -> Result<()> {
    std::fs::create_dir_all(root)?;
    for outcome in outcomes {
        if let Ok((report, trace)) = &outcome.result {
            write_case_outputs(&root.join(&outcome.config.name), report, Some(trace))?;
        }
    }
    std::fs::write(root.join("summary.csv"), summary_csv(outcomes))?;
    Ok(())
}
