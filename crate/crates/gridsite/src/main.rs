//! Command-line front end: solve a feeder, run or re-evaluate case studies,
//! and echo the device catalog.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gridsite::devices::{BatteryType, DevicePlacement, WtCatalog};
use gridsite::error::Error;
use gridsite::network::{load_network, NetworkModel, SweepMatrices};
use gridsite::powerflow::{self, InjectionSet, SolverOptions};
use gridsite::runner::{self, CaseConfig};

#[derive(Parser)]
#[command(name = "gridsite", version, about = "BESS and wind turbine siting on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Feeder dataset: `ieee33` or a directory with buses.csv, branches.csv,
    /// feeder.json.
    #[arg(long, global = true, default_value = "ieee33")]
    dataset: String,
    /// Output directory (default: $GRIDSITE_OUT or ./reports).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the GA seed of the loaded configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the device-free base case and write the voltage profile.
    Solve,
    /// Run one case study from a JSON config.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-evaluate a fixed plan from a JSON placements file (no search).
    Evaluate {
        #[arg(long)]
        placements: PathBuf,
        /// Optional case config supplying solver/battery/catalog settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a list of cases (default: the built-in 30-case study suite).
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the wind-turbine catalog and battery cost data as loaded.
    Catalog {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for input/usage problems, 1 for runtime failures.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Dataset(_) | Error::Topology(_) | Error::Config(_) | Error::Io(_) => 2,
        Error::SingularInjection { .. } => 1,
    }
}

fn run(cli: &Cli) -> gridsite::Result<()> {
    let net = resolve_dataset(&cli.dataset)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("GRIDSITE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("reports"));

    match &cli.command {
        Command::Solve => cmd_solve(&net, &out_dir, cli.quiet),
        Command::Optimize { config } => cmd_optimize(&net, config, &out_dir, cli.seed, cli.quiet),
        Command::Evaluate { placements, config } => {
            cmd_evaluate(&net, placements, config.as_deref(), &out_dir, cli.quiet)
        }
        Command::Suite { config } => cmd_suite(&net, config.as_deref(), &out_dir, cli.seed, cli.quiet),
        Command::Catalog { config } => cmd_catalog(config.as_deref()),
    }
}

fn resolve_dataset(dataset: &str) -> gridsite::Result<NetworkModel> {
    if dataset == "ieee33" {
        return Ok(NetworkModel::ieee33());
    }
    let dir = Path::new(dataset);
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("dataset not found: {dataset}")));
    }
    load_network(dir)
}

fn read_config(path: &Path) -> gridsite::Result<CaseConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: CaseConfig = serde_json::from_str(&text)?;
    Ok(cfg)
}

fn cmd_solve(net: &NetworkModel, out_dir: &Path, quiet: bool) -> gridsite::Result<()> {
    let mats = SweepMatrices::build(net);
    let opts = SolverOptions::default();
    let result = powerflow::solve(net, &mats, &InjectionSet::from_loads(net), &opts)?;
    if !result.converged {
        return Err(Error::Config(format!(
            "base-case load flow did not converge (residual {:.3e})",
            result.residual
        )));
    }
    let (min_idx, min_v) = result.min_voltage();
    println!(
        "total loss: {:.3} kW + j{:.3} kvar, |S| = {:.3} kVA",
        result.total_loss.re,
        result.total_loss.im,
        result.total_loss_kva()
    );
    println!("minimum voltage: {:.4} p.u. at bus {}", min_v, net.external_id(min_idx));
    println!("converged in {} iterations", result.iterations);

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("bus_id,v_pu\n");
    for (i, v) in result.voltages.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", net.external_id(i), v.norm()));
    }
    let path = out_dir.join("voltage_profile.csv");
    std::fs::write(&path, csv)?;
    if !quiet {
        println!("voltage profile written to {}", path.display());
    }
    Ok(())
}

fn cmd_optimize(
    net: &NetworkModel,
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    quiet: bool,
) -> gridsite::Result<()> {
    let cfg = read_config(config)?;
    cfg.validate()?;
    if !quiet {
        println!("running case {} ({})", cfg.name, cfg.family);
    }
    let (report, trace) = runner::run_case(&cfg, net, seed)?;
    let case_dir = out_dir.join(&report.name);
    runner::write_case_outputs(&case_dir, &report, Some(&trace))?;
    print_case_summary(&report);
    if !quiet {
        println!("outputs written to {}", case_dir.display());
    }
    Ok(())
}

fn cmd_evaluate(
    net: &NetworkModel,
    placements_path: &Path,
    config: Option<&Path>,
    out_dir: &Path,
    quiet: bool,
) -> gridsite::Result<()> {
    let text = std::fs::read_to_string(placements_path).map_err(|e| {
        Error::Dataset(format!("cannot read placements {}: {e}", placements_path.display()))
    })?;
    let placements: Vec<DevicePlacement> = serde_json::from_str(&text)?;
    let cfg = match config {
        Some(path) => read_config(path)?,
        None => {
            let mut cfg = CaseConfig::bess_only(0, 0.0);
            cfg.name = "evaluate".to_string();
            cfg
        }
    };
    let report = runner::evaluate_fixed(net, placements, &cfg)?;
    let case_dir = out_dir.join(&report.name);
    runner::write_case_outputs(&case_dir, &report, None)?;
    print_case_summary(&report);
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    if !quiet {
        println!("outputs written to {}", case_dir.display());
    }
    Ok(())
}

fn cmd_suite(
    net: &NetworkModel,
    config: Option<&Path>,
    out_dir: &Path,
    seed: Option<u64>,
    quiet: bool,
) -> gridsite::Result<()> {
    let cases: Vec<CaseConfig> = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Dataset(format!("cannot read suite {}: {e}", path.display())))?;
            serde_json::from_str(&text)?
        }
        None => runner::paper_suite(),
    };
    if !quiet {
        println!("running {} cases", cases.len());
    }
    let mut outcomes = Vec::with_capacity(cases.len());
    for cfg in &cases {
        if !quiet {
            println!("  {} ...", cfg.name);
        }
        let result = runner::run_case(cfg, net, seed);
        match &result {
            Ok((report, _)) => {
                if !quiet {
                    println!(
                        "    |S| = {:.3} kVA ({:.2}% reduction)",
                        report.final_loss.s_kva, report.loss_reduction_pct
                    );
                }
            }
            Err(err) => eprintln!("    failed: {err}"),
        }
        outcomes.push(runner::CaseOutcome { config: cfg.clone(), result });
    }
    runner::write_suite_outputs(out_dir, &outcomes)?;
    let failures = outcomes.iter().filter(|o| o.result.is_err()).count();
    println!(
        "{} cases complete, {} failed; summary at {}",
        outcomes.len() - failures,
        failures,
        out_dir.join("summary.csv").display()
    );
    Ok(())
}

fn cmd_catalog(config: Option<&Path>) -> gridsite::Result<()> {
    let catalog = match config {
        Some(path) => read_config(path)?.catalog,
        None => WtCatalog::default(),
    };
    println!("wind turbine catalog:");
    println!("{:>4}  {:>10}  {:>12}  {:>14}", "type", "size [kW]", "cost [$]", "maint [$/yr]");
    for (i, entry) in catalog.entries.iter().enumerate() {
        println!(
            "{:>4}  {:>10}  {:>12}  {:>14}",
            i + 1,
            entry.rated_kw,
            entry.cost_usd,
            entry.maintenance_usd_per_year
        );
    }
    println!();
    println!("battery cost data:");
    println!(
        "{:>10}  {:>12}  {:>11}  {:>8}  {:>10}",
        "type", "c_e [$/kWh]", "c_p [$/kW]", "BoP [$]", "efficiency"
    );
    for (name, battery) in
        [("li_ion", BatteryType::LiIon.params()), ("lead_acid", BatteryType::LeadAcid.params())]
    {
        println!(
            "{:>10}  {:>12}  {:>11}  {:>8}  {:>10}",
            name, battery.c_e_per_kwh, battery.c_p_per_kw, battery.bop_usd, battery.eta
        );
    }
    Ok(())
}

fn print_case_summary(report: &runner::CaseReport) {
    println!(
        "{}: |S| = {:.3} kVA (base {:.3} kVA, {:.2}% reduction), min V = {:.4} p.u. at bus {}",
        report.name,
        report.final_loss.s_kva,
        report.base_loss.s_kva,
        report.loss_reduction_pct,
        report.min_voltage_pu,
        report.min_voltage_bus
    );
    for device in &report.devices {
        let kind = match device.kind {
            gridsite::devices::DeviceKind::Wt => "WT",
            gridsite::devices::DeviceKind::Bess => "BESS",
        };
        let cost = device
            .cost_usd
            .map(|c| format!(", cost {c:.0} $"))
            .unwrap_or_default();
        println!(
            "  {kind} at bus {}: {:.2} kW + j{:.2} kvar ({:.2} kVA){cost}",
            device.bus, device.p_kw, device.q_kvar, device.s_kva
        );
    }
}
