//! `monospinner` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible design
//! or solver failure.

mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use monospinner::config::load_calibration;
use monospinner::dynamics::{integrate, IntegrationSettings, VoltageSchedule, DEFAULT_DT};
use monospinner::hover::HoverRecord;
use monospinner::optimize::{LocalResult, LocalSearchSettings, SweepGrid};
use monospinner::{
    calibrate_from_published, AeroVariant, BaseConstants, Calibration, Config, DesignSpace,
    DesignVector, Evaluation, Figure, HoverState, MassModel, Problem, SearchError,
};
use serde::Serialize;
use serde_json::json;

use manifest::{OutputDir, RunManifest};

#[derive(Parser)]
#[command(name = "monospinner", version, about = "Mono-spinner hover trim, design sweeps and optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover total weight and motor resistance from the [published] block.
    Calibrate(Common),
    /// Solve the hover equilibrium of one design.
    Hover {
        #[command(flatten)]
        common: Common,
        /// Design vector "alpha_p,alpha_B,c_B/c_p,R_B/R_p,delta,l/R_B" (deg, deg, -, -, rad, -).
        #[arg(long)]
        design: Option<String>,
    },
    /// Dense evaluation over one or two free design variables.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Built-in figure preset instead of the config's [space].
        #[arg(long)]
        figure: Option<Figure>,
    },
    /// Grid search over [space], or local search when --from is given.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Start point of a local search, as a design vector.
        #[arg(long)]
        from: Option<String>,
    },
    /// Integrate the equations of motion from a hover state.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Hover JSON to start from; solved from the design when absent.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Design to solve and simulate when --from is absent; defaults to [design].
        #[arg(long)]
        design: Option<String>,
        /// Horizon (s).
        #[arg(long, default_value_t = 10.0)]
        t: f64,
        /// Step (s).
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// Write every n-th step to the trajectory CSV.
        #[arg(long, default_value_t = 100)]
        sample_every: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Calibration JSON written by `calibrate`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Aerodynamic formula set: quadratic or printed.
    #[arg(long, default_value_t = AeroVariant::Quadratic)]
    variant: AeroVariant,
}

enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

type CmdResult = Result<(), Failure>;

fn solver(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Solver(e.into())
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Everything a subcommand needs from the shared flags.
struct Setup {
    config: Config,
    config_path: PathBuf,
    config_text: String,
    calibration: Option<Calibration>,
    base: BaseConstants,
    masses: MassModel,
    variant: AeroVariant,
    calibration_path: Option<PathBuf>,
    out: PathBuf,
}

impl Setup {
    fn load(common: &Common) -> Result<Self, Failure> {
        let config_text = std::fs::read_to_string(&common.config)
            .with_context(|| format!("reading {}", common.config.display()))?;
        let config = Config::from_toml(&config_text)
            .map_err(|e| anyhow!("{}: {e}", common.config.display()))?;
        let calibration = match &common.calibration {
            Some(p) => Some(load_calibration(p).map_err(|e| anyhow!("{}: {e}", p.display()))?),
            None => None,
        };
        let (base, masses) = config.calibrated(calibration.as_ref()).map_err(usage)?;
        Ok(Self {
            config,
            config_path: common.config.clone(),
            config_text,
            calibration,
            base,
            masses,
            variant: common.variant,
            calibration_path: common.calibration.clone(),
            out: common.out.clone(),
        })
    }

    fn problem(&self) -> Problem {
        Problem::new(self.base, self.masses).with_variant(self.variant)
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(
            command,
            &self.config_path,
            &self.config_text,
            self.calibration_path.as_deref(),
            self.calibration,
            self.variant,
        )
    }

    fn design(&self, flag: Option<&str>) -> Result<DesignVector, Failure> {
        match flag {
            Some(s) => s.parse().map_err(|e| usage(anyhow!("--design: {e}"))),
            None => Ok(self.config.design),
        }
    }

    fn outputs(&self, stem: &str) -> Result<OutputDir, Failure> {
        Ok(OutputDir::create(&self.out, stem)?)
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn named(x: &DesignVector) -> serde_json::Value {
    serde_json::to_value(x).expect("design vector serialises")
}

fn cmd_calibrate(common: &Common) -> CmdResult {
    let setup = Setup::load(common)?;
    let published = setup
        .config
        .published
        .ok_or_else(|| anyhow!("{}: no [published] section to calibrate from", common.config.display()))?;
    let cal = calibrate_from_published(&published, &setup.config.base).map_err(usage)?;
    // the calibrated weight must be reachable with the configured masses
    cal.apply(&setup.config.base, &setup.config.masses).map_err(usage)?;
    let mut out = setup.outputs("calibrate")?;
    out.write_json("calibration.json", &cal)?;
    print_json(&cal)?;
    out.finish(setup.manifest("calibrate"))?;
    Ok(())
}

fn cmd_hover(common: &Common, design: Option<&str>) -> CmdResult {
    let setup = Setup::load(common)?;
    let x = setup.design(design)?;
    let h = match setup.problem().evaluate(&x).map_err(usage)? {
        Evaluation::Feasible(h) => h,
        Evaluation::Infeasible(reason) => return Err(solver(anyhow!("design {x} infeasible: {reason}"))),
    };
    let mut out = setup.outputs("hover")?;
    let record = h.to_record();
    out.write_json("hover.json", &record)?;
    print_json(&record)?;
    out.finish(setup.manifest("hover"))?;
    Ok(())
}

const UNITS: [&str; 6] = ["deg", "deg", "1", "1", "rad", "1"];

fn frozen_variables(space: &DesignSpace) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (i, name) in DesignVector::NAMES.iter().enumerate() {
        let r = space.ranges[i];
        if r.is_frozen() {
            let mut entry = json!({ "value": r.lower, "unit": UNITS[i] });
            match UNITS[i] {
                "deg" => entry["radians"] = json!(r.lower.to_radians()),
                "rad" => entry["degrees"] = json!(r.lower.to_degrees()),
                _ => {}
            }
            map.insert(name.to_string(), entry);
        }
    }
    serde_json::Value::Object(map)
}

fn grid_csv(grid: &SweepGrid) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    grid.write_csv(&mut buf)?;
    Ok(buf)
}

fn cmd_sweep(common: &Common, figure: Option<Figure>) -> CmdResult {
    let setup = Setup::load(common)?;
    let (space, stem) = match figure {
        Some(f) => (DesignSpace::figure(f), format!("sweep_fig{f}")),
        None => {
            let space = setup
                .config
                .space
                .ok_or_else(|| anyhow!("{}: no [space] section and no --figure", common.config.display()))?
                .resolve(&setup.config.design);
            (space, "sweep".to_string())
        }
    };
    let grid = setup.problem().sweep(&space).map_err(|e| match e {
        SearchError::NoSolution => solver(e),
        other => usage(other),
    })?;
    let mut out = setup.outputs(&stem)?;
    let csv_name = format!("{stem}.csv");
    out.write(&csv_name, &grid_csv(&grid)?)?;
    let (flat, best) = grid.min().expect("sweep has a feasible cell");
    let meta = json!({
        "manifest": out.manifest_name(),
        "data": csv_name,
        "figure": figure.map(|f| f.number()),
        "axes": grid.axes.iter().map(|a| json!({
            "name": a.name,
            "unit": UNITS[a.index],
            "lower": a.values.first(),
            "upper": a.values.last(),
            "points": a.values.len(),
        })).collect::<Vec<_>>(),
        "frozen": frozen_variables(&space),
        "mass_model": "masses held fixed across the sweep",
        "masses": setup.masses,
        "constants": setup.base,
        "calibration": setup.calibration,
        "variant": setup.variant,
        "feasible_cells": grid.feasible().iter().filter(|&&f| f).count(),
        "cells": grid.p_s.len(),
        "minimum": { "at": grid.coordinates(flat), "P_s": best },
    });
    out.write_json(&format!("{stem}.meta.json"), &meta)?;
    emit(&format!(
        "{} cells, minimum P_s {best} at {:?}",
        grid.p_s.len(),
        grid.coordinates(flat)
    ))?;
    out.finish(setup.manifest("sweep"))?;
    Ok(())
}

fn local_report(res: &LocalResult, manifest: &str) -> serde_json::Value {
    json!({
        "manifest": manifest,
        "mode": "local",
        "x": named(&res.x),
        "P_s": res.p_s,
        "hover": res.hover.to_record(),
        "start": named(&res.start),
        "start_P_s": res.start_p_s,
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "saddle_escapes": res.escapes,
        "termination": format!("{:?}", res.termination),
    })
}

fn hover_report(x: &DesignVector, h: &HoverState) -> serde_json::Value {
    json!({ "x": named(x), "P_s": h.p_s, "hover": h.to_record() })
}

fn cmd_optimize(common: &Common, from: Option<&str>) -> CmdResult {
    let setup = Setup::load(common)?;
    let space = setup
        .config
        .space
        .ok_or_else(|| anyhow!("{}: no [space] section", common.config.display()))?
        .resolve(&setup.config.design);
    let problem = setup.problem();
    let mut out = setup.outputs("optimize")?;
    let manifest_name = out.manifest_name();
    let report = match from {
        Some(s) => {
            let x0: DesignVector = s.parse().map_err(|e| usage(anyhow!("--from: {e}")))?;
            let res = problem
                .local_search(&x0, &space, &LocalSearchSettings::default())
                .map_err(|e| match e {
                    SearchError::InfeasibleStart | SearchError::NoSolution => solver(e),
                    other => usage(other),
                })?;
            local_report(&res, &manifest_name)
        }
        None => {
            let res = problem.grid_search(&space).map_err(|e| match e {
                SearchError::NoSolution => solver(e),
                other => usage(other),
            })?;
            out.write("optimize_grid.csv", &grid_csv(&res.grid)?)?;
            let mut report = hover_report(&res.best, &res.best_hover);
            report["manifest"] = json!(manifest_name);
            report["mode"] = json!("grid");
            report["grid"] = json!("optimize_grid.csv");
            report
        }
    };
    out.write_json("optimize.json", &report)?;
    print_json(&report)?;
    out.finish(setup.manifest("optimize"))?;
    Ok(())
}

fn load_hover(path: &Path) -> anyhow::Result<HoverState> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record: HoverRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing hover state {}", path.display()))?;
    Ok(record.to_state())
}

fn cmd_simulate(
    common: &Common,
    from: Option<&Path>,
    design: Option<&str>,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> CmdResult {
    let setup = Setup::load(common)?;
    let x = setup.design(design)?;
    let problem = setup.problem();
    let vehicle = problem.vehicle(&x).map_err(usage)?;
    let hover = match from {
        Some(p) => load_hover(p)?,
        None => match problem.evaluate(&x).map_err(usage)? {
            Evaluation::Feasible(h) => h,
            Evaluation::Infeasible(reason) => {
                return Err(solver(anyhow!("design {x} infeasible: {reason}")))
            }
        },
    };
    let settings = IntegrationSettings {
        sample_every,
        ..IntegrationSettings::new(dt, t_end)
    };
    let traj = match integrate(
        &vehicle,
        &hover.to_full_state(),
        &VoltageSchedule::constant(hover.v_m),
        &settings,
    ) {
        Ok(t) => t,
        Err(e @ monospinner::DynamicsError::Diverged { .. }) => return Err(solver(e)),
        Err(e) => return Err(usage(e)),
    };
    let mut out = setup.outputs("simulate")?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).context("formatting trajectory")?;
    out.write("simulate.csv", &csv)?;
    let last = traj.last().expect("trajectory has samples").state;
    let report = json!({
        "manifest": out.manifest_name(),
        "trajectory": "simulate.csv",
        "design": named(&x),
        "t_end": t_end,
        "dt": dt,
        "held_voltage": hover.v_m,
        "r_ref": hover.omega_b.z,
        "max_relative_drift_r": traj.max_relative_drift_r(hover.omega_b.z),
        "final": {
            "p": last.omega_b.x,
            "q": last.omega_b.y,
            "r": last.omega_b.z,
            "omega_p": last.omega_p,
            "i": last.current,
            "position": [last.position.x, last.position.y, last.position.z],
        },
    });
    out.write_json("simulate.json", &report)?;
    print_json(&report)?;
    out.finish(setup.manifest("simulate"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Calibrate(common) => cmd_calibrate(common),
        Command::Hover { common, design } => cmd_hover(common, design.as_deref()),
        Command::Sweep { common, figure } => cmd_sweep(common, *figure),
        Command::Optimize { common, from } => cmd_optimize(common, from.as_deref()),
        Command::Simulate {
            common,
            from,
            design,
            t,
            dt,
            sample_every,
        } => cmd_simulate(common, from.as_deref(), design.as_deref(), *t, *dt, *sample_every),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
