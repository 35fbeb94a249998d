//! Device models: wind-turbine PQ capability chart, battery cost model,
//! capacity conversions, and integer turbine-fleet composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Wt,
    Bess,
}

/// One sited device: bus, active and reactive injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePlacement {
    pub kind: DeviceKind,
    pub bus: u32,
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Wind-plant reactive capability polytope: a symmetric reactive cap plus
/// two oblique boundaries `|q| <= slope * p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqChartParams {
    pub q_cap_kvar: f64,
    pub slope: f64,
}

impl PqChartParams {
    /// Default chart sizing: the reactive cap sits at the polytope vertex
    /// `slope * h`, so a turbine at full budget can reach the chart corner.
    pub fn from_budget(h_kw: f64) -> Self {
        PqChartParams { q_cap_kvar: 0.64 * h_kw, slope: 0.64 }
    }

    /// Strict chart sizing: reactive cap at 0.32 of the rated active power.
    pub fn strict_rated(p_max_kw: f64) -> Self {
        PqChartParams { q_cap_kvar: 0.32 * p_max_kw, slope: 0.64 }
    }
}

/// Active/reactive box bounds for a battery installation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessBounds {
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
}

impl BessBounds {
    /// Default bounds `[0, h]` on both axes.
    pub fn from_budget(h_kw: f64) -> Self {
        BessBounds { p_min_kw: 0.0, p_max_kw: h_kw, q_min_kvar: 0.0, q_max_kvar: h_kw }
    }

    pub fn contains(&self, p_kw: f64, q_kvar: f64) -> bool {
        p_kw >= self.p_min_kw
            && p_kw <= self.p_max_kw
            && q_kvar >= self.q_min_kvar
            && q_kvar <= self.q_max_kvar
    }
}

/// True iff `(p, q)` lies inside the capability polytope and `p` within
/// `[0, p_max]`. Boundaries are feasible.
pub fn wt_feasible(p_kw: f64, q_kvar: f64, chart: &PqChartParams, p_max_kw: f64) -> bool {
    p_kw >= 0.0
        && p_kw <= p_max_kw
        && q_kvar.abs() <= chart.q_cap_kvar
        && q_kvar <= chart.slope * p_kw
        && -q_kvar <= chart.slope * p_kw
}

/// Clamps a wind-plant reactive setpoint into the capability polytope at the
/// given active power. Idempotent; `project_wt_q(0, q, ..)` is always 0.
pub fn project_wt_q(p_kw: f64, q_kvar: f64, chart: &PqChartParams, _p_max_kw: f64) -> f64 {
    let limit = chart.q_cap_kvar.min(chart.slope * p_kw).max(0.0);
    q_kvar.clamp(-limit, limit)
}

/// `sqrt(p^2 + q^2)` in kVA.
pub fn apparent_power(p_kw: f64, q_kvar: f64) -> f64 {
    p_kw.hypot(q_kvar)
}

/// DC-side capacity behind an inverter of efficiency `eta`.
pub fn bess_dc_capacity(s_ac_kva: f64, eta_inverter: f64) -> Result<f64> {
    if !(eta_inverter > 0.0 && eta_inverter <= 1.0) {
        return Err(Error::Config(format!(
            "inverter efficiency must be in (0, 1], got {eta_inverter}"
        )));
    }
    Ok(s_ac_kva / eta_inverter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryType {
    LiIon,
    LeadAcid,
}

impl BatteryType {
    pub fn params(self) -> BatteryCostParams {
        match self {
            BatteryType::LiIon => BatteryCostParams {
                c_e_per_kwh: 500.0,
                c_p_per_kw: 175.0,
                bop_usd: 0.0,
                eta: 0.85,
                duration_h: 1.0,
            },
            BatteryType::LeadAcid => BatteryCostParams {
                c_e_per_kwh: 200.0,
                c_p_per_kw: 175.0,
                bop_usd: 50.0,
                eta: 0.75,
                duration_h: 1.0,
            },
        }
    }
}

/// Storage cost coefficients: energy and power terms, balance-of-plant, and
/// storage efficiency. Energy is sized as `p * duration_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryCostParams {
    pub c_e_per_kwh: f64,
    pub c_p_per_kw: f64,
    pub bop_usd: f64,
    pub eta: f64,
    pub duration_h: f64,
}

/// Installed cost of one battery:
/// `c_e * (p * duration) / eta + c_p * p + BoP`.
pub fn bess_cost(p_kw: f64, params: &BatteryCostParams) -> f64 {
    params.c_e_per_kwh * (p_kw * params.duration_h) / params.eta
        + params.c_p_per_kw * p_kw
        + params.bop_usd
}

/// One wind-turbine catalog row: nominal power, purchase price, and annual
/// maintenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtCatalogEntry {
    pub rated_kw: f64,
    pub cost_usd: f64,
    pub maintenance_usd_per_year: f64,
}

/// Ordered turbine catalog. The default carries the nine market sizes from
/// 1 kW to 2.5 MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WtCatalog {
    pub entries: Vec<WtCatalogEntry>,
}

impl Default for WtCatalog {
    fn default() -> Self {
        let rows: [(f64, f64, f64); 9] = [
            (1.0, 2_130.0, 48.0),
            (1.5, 9_000.0, 72.0),
            (2.5, 17_000.0, 120.0),
            (5.0, 32_000.0, 240.0),
            (10.0, 64_000.0, 480.0),
            (15.0, 100_000.0, 720.0),
            (800.0, 1_813_000.0, 38_400.0),
            (1_500.0, 3_200_000.0, 72_000.0),
            (2_500.0, 4_014_700.0, 120_000.0),
        ];
        WtCatalog {
            entries: rows
                .iter()
                .map(|&(rated_kw, cost_usd, maintenance_usd_per_year)| WtCatalogEntry {
                    rated_kw,
                    cost_usd,
                    maintenance_usd_per_year,
                })
                .collect(),
        }
    }
}

impl WtCatalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How a fleet's purchase cost is accumulated from the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetCostMode {
    /// `sum(n_k * cost_k)`: the catalog price is a per-unit price.
    #[default]
    PerUnit,
    /// `sum(n_k * rated_k * cost_k)`: price scaled by nominal power.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WtCostConfig {
    pub mode: FleetCostMode,
    /// Years of maintenance folded into the purchase cost; 0 disables.
    pub maintenance_horizon_years: f64,
}

impl Default for WtCostConfig {
    fn default() -> Self {
        WtCostConfig { mode: FleetCostMode::PerUnit, maintenance_horizon_years: 0.0 }
    }
}

/// Purchase cost of a fleet given per-type unit counts.
pub fn wt_fleet_cost(counts: &[u32], catalog: &WtCatalog, cfg: &WtCostConfig) -> f64 {
    counts
        .iter()
        .zip(&catalog.entries)
        .map(|(&n, entry)| {
            let unit = match cfg.mode {
                FleetCostMode::PerUnit => entry.cost_usd,
                FleetCostMode::Literal => entry.rated_kw * entry.cost_usd,
            };
            n as f64 * (unit + cfg.maintenance_horizon_years * entry.maintenance_usd_per_year)
        })
        .sum()
}

/// Nominal power of a fleet in kW.
pub fn wt_fleet_power(counts: &[u32], catalog: &WtCatalog) -> f64 {
    counts
        .iter()
        .zip(&catalog.entries)
        .map(|(&n, entry)| n as f64 * entry.rated_kw)
        .sum()
}

/// Cheapest integer fleet whose nominal power lands in
/// `[target, target + g)` where `g` is the smallest catalog size.
///
/// Unbounded knapsack over 1 W integer power (reduced by the catalog gcd).
/// Ties break toward fewer units, then the lexicographically smallest count
/// vector in catalog order. Purchase cost only; maintenance never enters.
pub fn compose_fleet(target_kw: f64, catalog: &WtCatalog) -> Result<Vec<u32>> {
    if catalog.is_empty() {
        return Err(Error::Config("wind turbine catalog is empty".into()));
    }
    if !target_kw.is_finite() || target_kw < 0.0 {
        return Err(Error::Config(format!("fleet target must be non-negative, got {target_kw}")));
    }
    let rated_w: Vec<u64> = catalog
        .entries
        .iter()
        .map(|e| {
            let w = (e.rated_kw * 1000.0).round();
            if w < 1.0 {
                Err(Error::Config(format!("catalog size {} kW below 1 W granularity", e.rated_kw)))
            } else {
                Ok(w as u64)
            }
        })
        .collect::<Result<_>>()?;
    let target_w = ((target_kw * 1000.0) - 1e-6).ceil().max(0.0) as u64;
    if target_w == 0 {
        return Ok(vec![0; catalog.len()]);
    }
    let g_w = *rated_w.iter().min().expect("non-empty catalog");
    let step = rated_w.iter().fold(g_w, |acc, &w| gcd(acc, w));
    let sizes: Vec<usize> = rated_w.iter().map(|&w| (w / step) as usize).collect();
    let cap = ((target_w + g_w - 1) / step) as usize;

    // best[s]: cheapest fleet with total power exactly s*step, as
    // (cost, unit count, counts per type).
    let mut best: Vec<Option<(f64, u32, Vec<u32>)>> = vec![None; cap + 1];
    best[0] = Some((0.0, 0, vec![0; catalog.len()]));
    for s in 1..=cap {
        for (k, &size) in sizes.iter().enumerate() {
            if size > s {
                continue;
            }
            let Some((prev_cost, prev_units, prev_counts)) = best[s - size].as_ref() else {
                continue;
            };
            let cost = prev_cost + catalog.entries[k].cost_usd;
            let units = prev_units + 1;
            let replace = match best[s].as_ref() {
                None => true,
                Some((c, u, counts)) => match cost.partial_cmp(c).expect("finite costs") {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        if units != *u {
                            units < *u
                        } else {
                            lex_less_with_increment(prev_counts, k, counts)
                        }
                    }
                },
            };
            if replace {
                let mut counts = prev_counts.clone();
                counts[k] += 1;
                best[s] = Some((cost, units, counts));
            }
        }
    }

    let lo = target_w.div_ceil(step);
    let hi = (target_w + g_w - 1) / step;
    let mut winner: Option<&(f64, u32, Vec<u32>)> = None;
    for s in lo..=hi {
        let Some(candidate) = best[s as usize].as_ref() else { continue };
        let better = match winner {
            None => true,
            Some((c, u, counts)) => {
                (candidate.0, candidate.1) < (*c, *u)
                    || ((candidate.0, candidate.1) == (*c, *u) && candidate.2 < *counts)
            }
        };
        if better {
            winner = Some(candidate);
        }
    }
    winner
        .map(|(_, _, counts)| counts.clone())
        .ok_or_else(|| Error::Config("no fleet composition reaches the target window".into()))
}

/// Compares `base + e_k` against `other` lexicographically without
/// materializing the incremented vector.
fn lex_less_with_increment(base: &[u32], k: usize, other: &[u32]) -> bool {
    for i in 0..base.len() {
        let a = base[i] + u32::from(i == k);
        match a.cmp(&other[i]) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn gcd(a: u64, b: u64) -> u64 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> PqChartParams {
        PqChartParams::from_budget(1000.0)
    }

    #[test]
    fn chart_vertex_is_feasible() {
        assert!(wt_feasible(1000.0, 640.0, &chart(), 1000.0));
        assert!(wt_feasible(0.0, 0.0, &chart(), 1000.0));
        assert!(!wt_feasible(100.0, 100.0, &chart(), 1000.0));
        assert!(!wt_feasible(-1.0, 0.0, &chart(), 1000.0));
        assert!(!wt_feasible(1000.1, 0.0, &chart(), 1000.0));
        assert!(!wt_feasible(1000.0, -641.0, &chart(), 1000.0));
    }

    #[test]
    fn projection_clamps_to_oblique_boundary() {
        let q = project_wt_q(100.0, 100.0, &chart(), 1000.0);
        assert!((q - 64.0).abs() < 1e-9);
        assert!(wt_feasible(100.0, q, &chart(), 1000.0));
    }

    #[test]
    fn projection_leaves_feasible_points_unchanged() {
        let q = project_wt_q(500.0, 200.0, &chart(), 1000.0);
        assert_eq!(q, 200.0);
    }

    #[test]
    fn zero_active_power_forces_zero_reactive() {
        assert_eq!(project_wt_q(0.0, 50.0, &chart(), 1000.0), 0.0);
        assert_eq!(project_wt_q(0.0, -50.0, &chart(), 1000.0), 0.0);
    }

    #[test]
    fn apparent_power_cases() {
        assert_eq!(apparent_power(3.0, 4.0), 5.0);
        assert_eq!(apparent_power(0.0, 0.0), 0.0);
        assert!((apparent_power(1000.0, 1000.0) - 1414.21).abs() < 0.01);
    }

    #[test]
    fn dc_capacity_divides_by_efficiency() {
        assert_eq!(bess_dc_capacity(100.0, 1.0).unwrap(), 100.0);
        assert!((bess_dc_capacity(85.0, 0.85).unwrap() - 100.0).abs() < 1e-9);
        assert!((bess_dc_capacity(1414.21, 0.85).unwrap() - 1663.8).abs() < 0.1);
        assert!(bess_dc_capacity(100.0, 0.0).is_err());
        assert!(bess_dc_capacity(100.0, 1.2).is_err());
    }

    #[test]
    fn li_ion_cost_matches_back_solved_value() {
        let cost = bess_cost(995.5, &BatteryType::LiIon.params());
        let expect = 7.6e5;
        assert!((cost - expect).abs() / expect < 0.01, "cost = {cost}");
    }

    #[test]
    fn lead_acid_cost_matches_hand_computation() {
        let params = BatteryType::LeadAcid.params();
        let cost = bess_cost(100.0, &params);
        let hand = 200.0 * (100.0 * 1.0) / 0.75 + 175.0 * 100.0 + 50.0;
        assert_eq!(cost, hand);
        assert!((cost - 44216.67).abs() < 0.01);
    }

    #[test]
    fn zero_power_battery_costs_bop_only() {
        assert_eq!(bess_cost(0.0, &BatteryType::LeadAcid.params()), 50.0);
        assert_eq!(bess_cost(0.0, &BatteryType::LiIon.params()), 0.0);
    }

    #[test]
    fn fleet_cost_and_power_from_catalog_rows() {
        let catalog = WtCatalog::default();
        let cfg = WtCostConfig::default();
        let mut counts = vec![0u32; 9];
        counts[0] = 1;
        assert_eq!(wt_fleet_cost(&counts, &catalog, &cfg), 2130.0);
        assert_eq!(wt_fleet_power(&counts, &catalog), 1.0);

        let mut counts = vec![0u32; 9];
        counts[6] = 1;
        counts[1] = 2;
        assert_eq!(wt_fleet_power(&counts, &catalog), 803.0);
        assert_eq!(wt_fleet_cost(&counts, &catalog, &cfg), 1_813_000.0 + 18_000.0);

        assert_eq!(wt_fleet_cost(&[0; 9], &catalog, &cfg), 0.0);
        assert_eq!(wt_fleet_power(&[0; 9], &catalog), 0.0);
    }

    #[test]
    fn maintenance_horizon_adds_annual_costs() {
        let catalog = WtCatalog::default();
        let cfg = WtCostConfig { mode: FleetCostMode::PerUnit, maintenance_horizon_years: 10.0 };
        let mut counts = vec![0u32; 9];
        counts[0] = 2;
        assert_eq!(wt_fleet_cost(&counts, &catalog, &cfg), 2.0 * (2130.0 + 480.0));
    }

    #[test]
    fn literal_mode_scales_by_rated_power() {
        let catalog = WtCatalog::default();
        let cfg = WtCostConfig { mode: FleetCostMode::Literal, maintenance_horizon_years: 0.0 };
        let mut counts = vec![0u32; 9];
        counts[2] = 1; // 2.5 kW at 17000
        assert_eq!(wt_fleet_cost(&counts, &catalog, &cfg), 2.5 * 17_000.0);
    }

    #[test]
    fn compose_zero_target_is_empty_fleet() {
        let catalog = WtCatalog::default();
        assert_eq!(compose_fleet(0.0, &catalog).unwrap(), vec![0; 9]);
    }

    #[test]
    fn compose_lands_in_power_window() {
        let catalog = WtCatalog::default();
        for &target in &[2.5f64, 353.89, 1000.0, 0.4, 17.2] {
            let counts = compose_fleet(target, &catalog).unwrap();
            let power = wt_fleet_power(&counts, &catalog);
            assert!(power >= target - 1e-9, "target {target}: power {power}");
            assert!(power < target + 1.0, "target {target}: power {power}");
        }
    }

    #[test]
    fn compose_empty_catalog_fails() {
        let empty = WtCatalog { entries: vec![] };
        assert!(compose_fleet(5.0, &empty).is_err());
    }

    #[test]
    fn compose_thousand_kw_beats_sampled_alternatives() {
        let catalog = WtCatalog::default();
        let cfg = WtCostConfig::default();
        let counts = compose_fleet(1000.0, &catalog).unwrap();
        let cost = wt_fleet_cost(&counts, &catalog, &cfg);
        // 1000 type-1 units are a feasible composition; the optimum can only
        // be at or below their price.
        assert!(cost <= 1000.0 * 2130.0 + 1e-6, "cost = {cost}");
    }
}
