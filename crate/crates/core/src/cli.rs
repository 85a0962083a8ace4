//! Command-line front end: single runs, convergence studies, spectral sweeps
//! and parameter reports.

use crate::assembly::AssemblyError;
use crate::config::{self, ConfigError, InitialData, Resolved, Settings};
use crate::output::{csv_records, csv_with_header, line_plot_svg, write_atomic, PlotSpec, Scale, Series};
use crate::physics::{eval_on_nodes, Domain, ExactSolution, ManufacturedSolution};
use crate::spectral::{self, SpectralError, SweepBase, SweepParameter, SweepResult};
use crate::timeloop::{self, ConditionGroup, CoupledState, RunOutcome, Scheme, TimeConfig, TimeloopError};
use clap::{Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STABILITY: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stability failure: {0}")]
    Stability(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Stability(_) => EXIT_STABILITY,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AssemblyError> for CliError {
    fn from(e: AssemblyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TimeloopError> for CliError {
    fn from(e: TimeloopError) -> Self {
        match e {
            TimeloopError::StabilityFailure { .. }
            | TimeloopError::ConditionViolated { .. }
            | TimeloopError::EnergyViolation { .. } => CliError::Stability(e.to_string()),
            TimeloopError::Solver(_) => CliError::Solver(e.to_string()),
            TimeloopError::Config(_) | TimeloopError::Assembly(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Singular { .. } | SpectralError::Eigen(_) => CliError::Solver(e.to_string()),
            SpectralError::TooLarge(_) | SpectralError::Sweep(_) | SpectralError::Assembly(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sbpcht", version, about = "Partitioned SBP-SAT solver for coupled advection-diffusion and diffusion problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write the solution, error and energy ledger.
    Run { config: PathBuf },
    /// Grid-refinement study with the partitioned scheme and its monolithic counterpart.
    Converge {
        config: PathBuf,
        /// Nodes per axis, strictly increasing.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        grids: Vec<usize>,
    },
    /// Spectral radius of the BE-EXT2 iteration matrix over a parameter sweep.
    Spectrum {
        config: PathBuf,
        /// gamma1, gamma2, dt or ny.
        #[arg(long)]
        param: SweepParameter,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Report trace constants, selected penalties and the stability conditions.
    Params { config: PathBuf },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run { config } => {
            let settings = config::load(config)?;
            let report = cmd_run(&settings)?;
            print_run_summary(&report);
        }
        Command::Converge { config, grids } => {
            let settings = config::load(config)?;
            let report = cmd_converge(&settings, grids)?;
            print_convergence(&report);
        }
        Command::Spectrum { config, param, values } => {
            let settings = config::load(config)?;
            let result = cmd_spectrum(&settings, *param, values)?;
            print_spectrum(&result);
        }
        Command::Params { config } => {
            let settings = config::load(config)?;
            let resolved = settings.resolve()?;
            print!("{}", params_report(&resolved));
        }
    }
    Ok(())
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.to_path_buf(), source }
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(output_error(dir))?;
    let path = dir.join(name);
    write_atomic(&path, bytes).map_err(output_error(&path))?;
    Ok(path)
}

/// Resolved run parameters appended to the configuration header.
fn header(settings: &Settings, resolved: &Resolved) -> String {
    let sat = &resolved.system.sat;
    format!(
        "{}\n[resolved]\ngamma1 = {:e}\ngamma2_left = {:e}\ngamma2_right = {:e}\ndt = {:e}\nsteps = {}\nrho_left = {:e}\nrho_right = {:e}\n",
        settings.to_toml().trim_end(),
        sat.gamma1,
        sat.gamma2_left,
        sat.gamma2_right,
        resolved.time.dt,
        resolved.time.steps,
        resolved.system.left.trace.rho,
        resolved.system.right.trace.rho,
    )
}

fn initial_data(settings: &Settings, resolved: &Resolved, solution: Option<&dyn ExactSolution>) -> CoupledState {
    let system = &resolved.system;
    match settings.initial {
        InitialData::Exact => timeloop::initial_state(system, solution),
        InitialData::Zero => timeloop::initial_state(system, None),
        InitialData::Random { seed } => {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let w = draw(system.left.len());
            let v = draw(system.right.len());
            CoupledState::new(w, v)
        }
    }
}

/// Outcome of `run` with the resolved inputs.
pub struct RunReport {
    pub resolved: Resolved,
    pub outcome: RunOutcome,
    pub artifacts: Vec<PathBuf>,
}

/// Runs the configured simulation without writing artifacts.
pub fn simulate(settings: &Settings, resolved: &Resolved) -> Result<RunOutcome, CliError> {
    let solution = settings.mms.then(|| ManufacturedSolution::new(&settings.params));
    let solution = solution.as_ref().map(|s| s as &dyn ExactSolution);
    let initial = initial_data(settings, resolved, solution);
    Ok(timeloop::run(&resolved.system, &resolved.time, initial, solution, Some(resolved.conditions.clone()))?)
}

pub fn cmd_run(settings: &Settings) -> Result<RunReport, CliError> {
    let resolved = settings.resolve()?;
    let outcome = simulate(settings, &resolved)?;
    let dir = settings.output_dir();
    let head = header(settings, &resolved);
    let mut artifacts = Vec::new();

    if settings.output.solution {
        let system = &resolved.system;
        let dim = system.left.dim();
        let solution = settings.mms.then(|| ManufacturedSolution::new(&settings.params));
        let mut columns: Vec<&str> = vec!["domain", "x", "y", "z"];
        columns.truncate(1 + dim);
        columns.push("u");
        if solution.is_some() {
            columns.push("exact");
        }
        let mut rows = Vec::new();
        for (domain, sub, values) in [
            (Domain::Left, &system.left, &outcome.state.w),
            (Domain::Right, &system.right, &outcome.state.v),
        ] {
            let exact = solution.as_ref().map(|s| eval_on_nodes(s, domain, &sub.coords, outcome.state.time));
            for (i, u) in values.iter().enumerate() {
                let mut row = vec![if domain == Domain::Left { "left" } else { "right" }.to_string()];
                row.extend(sub.coords.iter().map(|c| format!("{:e}", c[i])));
                row.push(format!("{u:e}"));
                if let Some(e) = &exact {
                    row.push(format!("{:e}", e[i]));
                }
                rows.push(row);
            }
        }
        let bytes = csv_records(&head, &columns, &rows).map_err(output_error(&dir))?;
        artifacts.push(write_artifact(&dir, "solution.csv", &bytes)?);
    }
    if settings.output.ledger {
        let bytes = csv_with_header(&head, &outcome.ledger.records).map_err(output_error(&dir))?;
        artifacts.push(write_artifact(&dir, "energy.csv", &bytes)?);
        if settings.output.plots {
            let records = &outcome.ledger.records;
            let mut series = vec![Series {
                label: "energy".into(),
                points: records.iter().map(|r| (r.time, r.total)).collect(),
            }];
            if outcome.ledger.estimate.is_some() {
                series.push(Series {
                    label: "bound".into(),
                    points: records.iter().filter(|r| r.pass.is_some()).map(|r| (r.time, r.bound)).collect(),
                });
            }
            let spec = PlotSpec {
                title: "Discrete energy",
                x_label: "t",
                y_label: "energy",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
                reference: None,
            };
            let svg = line_plot_svg(&spec, &series).map_err(output_error(&dir))?;
            artifacts.push(write_artifact(&dir, "energy.svg", svg.as_bytes())?);
        }
    }
    if let Some(error) = outcome.error {
        let text = format!("{}error = {error:e}\n", crate::output::comment_block(&head));
        artifacts.push(write_artifact(&dir, "error.txt", text.as_bytes())?);
    }
    Ok(RunReport { resolved, outcome, artifacts })
}

fn print_run_summary(report: &RunReport) {
    let r = &report.resolved;
    let last = report.outcome.ledger.last();
    println!(
        "scheme {} with n_loop {}: {} steps of dt = {:e} to t = {:e}",
        r.time.scheme, r.time.n_loop, r.time.steps, r.time.dt, report.outcome.state.time
    );
    println!("gamma1 = {:e}, gamma2 = ({:e}, {:e})", r.system.sat.gamma1, r.system.sat.gamma2_left, r.system.sat.gamma2_right);
    let violations = r.conditions.violations(r.time.scheme);
    if !violations.is_empty() {
        println!("warning: stability conditions not met: {}", violations.join(", "));
    }
    println!("final energy = {:e}", last.total);
    if let Some(est) = report.outcome.ledger.estimate {
        match report.outcome.ledger.first_violation() {
            None => println!("energy estimate {est:?} holds at every step"),
            Some(v) => println!("energy estimate {est:?} violated first at step {} (margin {:e})", v.step, v.margin),
        }
    }
    if let Some(e) = report.outcome.error {
        println!("error = {e:e}");
    }
    for path in &report.artifacts {
        println!("wrote {}", path.display());
    }
}

/// One grid of a convergence study.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub partitioned_error: f64,
    /// log₂ of the error ratio to the previous grid; NaN on the first.
    pub partitioned_order: f64,
    pub monolithic_error: f64,
    pub monolithic_order: f64,
}

impl ConvergenceRow {
    /// Partitioned and monolithic errors agree to three significant digits.
    pub fn columns_agree(&self) -> bool {
        agree_to_digits(self.partitioned_error, self.monolithic_error, 3)
    }
}

/// Whether `a` and `b` round to the same `digits` significant digits.
pub fn agree_to_digits(a: f64, b: f64, digits: usize) -> bool {
    let p = digits.saturating_sub(1);
    format!("{a:.p$e}") == format!("{b:.p$e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub degree: usize,
    pub scheme: Scheme,
    pub monolithic: Scheme,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Observed orders between consecutive grids.
    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().skip(1).map(|r| r.partitioned_order).collect()
    }
}

fn observed_order(coarse_err: f64, fine_err: f64) -> f64 {
    (coarse_err / fine_err).log2()
}

/// Runs the partitioned scheme and its monolithic counterpart on each grid.
pub fn convergence_study(settings: &Settings, grids: &[usize]) -> Result<ConvergenceReport, CliError> {
    if grids.len() < 2 {
        return Err(CliError::Config("a convergence study needs at least two grids".into()));
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("grids must be strictly increasing".into()));
    }
    if !settings.mms {
        return Err(CliError::Config("a convergence study requires physics.mms = true".into()));
    }
    let solution = ManufacturedSolution::new(&settings.params);
    let monolithic = settings.scheme.monolithic_counterpart();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(grids.len());
    for &n in grids {
        let grid = settings.with_grid(n);
        let resolved = grid.resolve()?;
        let initial = timeloop::initial_state(&resolved.system, Some(&solution));
        let mut errors = [0.0; 2];
        for (slot, scheme) in [settings.scheme, monolithic].into_iter().enumerate() {
            let time = TimeConfig { scheme, ..resolved.time.clone() };
            let outcome = timeloop::run(&resolved.system, &time, initial.clone(), Some(&solution), Some(resolved.conditions.clone()))?;
            errors[slot] = outcome.error.expect("solution supplied");
        }
        let (po, mo) = match rows.last() {
            Some(prev) => (
                observed_order(prev.partitioned_error, errors[0]),
                observed_order(prev.monolithic_error, errors[1]),
            ),
            None => (f64::NAN, f64::NAN),
        };
        rows.push(ConvergenceRow { n, partitioned_error: errors[0], partitioned_order: po, monolithic_error: errors[1], monolithic_order: mo });
    }
    Ok(ConvergenceReport { degree: settings.geometry.degree, scheme: settings.scheme, monolithic, rows })
}

pub fn cmd_converge(settings: &Settings, grids: &[usize]) -> Result<ConvergenceReport, CliError> {
    let report = convergence_study(settings, grids)?;
    let dir = settings.output_dir();
    let head = format!(
        "{}\n[study]\ngrids = {:?}\npartitioned = \"{}\"\nmonolithic = \"{}\"\n",
        settings.to_toml().trim_end(),
        grids,
        report.scheme,
        report.monolithic
    );
    let bytes = csv_with_header(&head, &report.rows).map_err(output_error(&dir))?;
    write_artifact(&dir, "convergence.csv", &bytes)?;
    if settings.output.plots {
        let pts = |f: fn(&ConvergenceRow) -> f64| report.rows.iter().map(|r| (r.n as f64, f(r))).collect();
        let series = [
            Series { label: report.scheme.to_string(), points: pts(|r| r.partitioned_error) },
            Series { label: report.monolithic.to_string(), points: pts(|r| r.monolithic_error) },
        ];
        let spec = PlotSpec {
            title: "Spatial convergence",
            x_label: "n",
            y_label: "error",
            x_scale: Scale::Log10,
            y_scale: Scale::Log10,
            reference: None,
        };
        let svg = line_plot_svg(&spec, &series).map_err(output_error(&dir))?;
        write_artifact(&dir, "convergence.svg", svg.as_bytes())?;
    }
    Ok(report)
}

fn print_convergence(report: &ConvergenceReport) {
    println!("degree {} ({} vs {})", report.degree, report.scheme, report.monolithic);
    println!("{:>6} {:>14} {:>8} {:>14} {:>8} {:>6}", "n", "partitioned", "order", "monolithic", "order", "agree");
    for r in &report.rows {
        println!(
            "{:>6} {:>14.6e} {:>8.3} {:>14.6e} {:>8.3} {:>6}",
            r.n,
            r.partitioned_error,
            r.partitioned_order,
            r.monolithic_error,
            r.monolithic_order,
            r.columns_agree()
        );
    }
}

/// Sweep starting from the resolved configuration.
pub fn spectrum_sweep(settings: &Settings, param: SweepParameter, values: &[f64]) -> Result<SweepResult, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("no sweep values given".into()));
    }
    let resolved = settings.resolve()?;
    let base = SweepBase {
        geometry: settings.geometry.clone(),
        params: settings.params.clone(),
        sat: resolved.system.sat,
        dt: resolved.time.dt,
        c_star: settings.c_star,
    };
    Ok(spectral::sweep(&base, param, values)?)
}

pub fn cmd_spectrum(settings: &Settings, param: SweepParameter, values: &[f64]) -> Result<SweepResult, CliError> {
    let result = spectrum_sweep(settings, param, values)?;
    let dir = settings.output_dir();
    let head = format!("{}\n[sweep]\nparameter = \"{param}\"\n", settings.to_toml().trim_end());
    let rows: Vec<Vec<String>> = result
        .points
        .iter()
        .map(|p| vec![param.to_string(), format!("{:e}", p.value), format!("{:e}", p.spectral_radius), p.conditions_pass.to_string()])
        .collect();
    let bytes = csv_records(&head, &["parameter", "value", "spectral_radius", "conditions_pass"], &rows)
        .map_err(output_error(&dir))?;
    write_artifact(&dir, &format!("spectrum_{param}.csv"), &bytes)?;
    if settings.output.plots {
        let positive = result.points.iter().all(|p| p.value > 0.0);
        let spec = PlotSpec {
            title: "Spectral radius of the iteration matrix",
            x_label: param.name(),
            y_label: "spectral radius",
            x_scale: if positive && param != SweepParameter::Ny { Scale::Log10 } else { Scale::Linear },
            y_scale: Scale::Linear,
            reference: Some(1.0),
        };
        let series = [Series { label: "rho(B)".into(), points: result.points.iter().map(|p| (p.value, p.spectral_radius)).collect() }];
        let svg = line_plot_svg(&spec, &series).map_err(output_error(&dir))?;
        write_artifact(&dir, &format!("spectrum_{param}.svg"), svg.as_bytes())?;
    }
    Ok(result)
}

fn print_spectrum(result: &SweepResult) {
    println!("{:>14} {:>14} {:>10}", result.parameter.name(), "spectral_radius", "conditions");
    for p in &result.points {
        println!(
            "{:>14.6e} {:>14.6e} {:>10}",
            p.value,
            p.spectral_radius,
            if p.conditions_pass { "pass" } else { "FLAGGED" }
        );
    }
}

/// Text report of trace constants, penalties and all conditions.
pub fn params_report(resolved: &Resolved) -> String {
    use std::fmt::Write;
    let s = &resolved.system;
    let mut out = String::new();
    let _ = writeln!(out, "rho_L = {:.6e}", s.left.trace.rho);
    let _ = writeln!(out, "rho_R = {:.6e}", s.right.trace.rho);
    let _ = writeln!(out, "gamma1 = {:.6e}", s.sat.gamma1);
    let _ = writeln!(out, "gamma2_L = {:.6e}", s.sat.gamma2_left);
    let _ = writeln!(out, "gamma2_R = {:.6e}", s.sat.gamma2_right);
    let _ = writeln!(out, "C1 = {:.6e}, C2 = {:.6e}", resolved.constants.c1, resolved.constants.c2);
    let _ = writeln!(out, "dt_max = {:.6e}", resolved.dt_max);
    let _ = writeln!(out, "dt = {:.6e}", resolved.time.dt);
    let _ = writeln!(out, "{:<6} {:<22} {:<62} {:>13} {:>13} {:>5}", "name", "group", "condition", "lhs", "rhs", "pass");
    for e in &resolved.conditions.entries {
        let _ = writeln!(
            out,
            "{:<6} {:<22} {:<62} {:>13.6e} {:>13.6e} {:>5}",
            e.name,
            e.group.label(),
            e.description,
            e.lhs,
            e.rhs,
            if e.pass { "yes" } else { "NO" }
        );
    }
    for group in [ConditionGroup::BeExt1, ConditionGroup::ZeroFluxPenalty, ConditionGroup::BeExt2, ConditionGroup::OneDim] {
        let _ = writeln!(out, "{}: {}", group.label(), if resolved.conditions.group_passes(group) { "pass" } else { "fail" });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert!(agree_to_digits(1.2344e-3, 1.2341e-3, 3));
        assert!(!agree_to_digits(1.234e-3, 1.236e-3, 3));
    }

    #[test]
    fn order_of_halved_spacing() {
        assert!((observed_order(4.0, 1.0) - 2.0).abs() < 1e-12);
    }
}
