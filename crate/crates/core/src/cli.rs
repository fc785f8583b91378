//! Command-line driver: `build`, `solve`, `bethe`, `verify`, `report`.
//!
//! Exit codes: 0 pass, 1 conjecture failure, 2 usage or validation error,
//! 3 resource cap exceeded.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::ansatz::{ansatz_eigenstate, eigen_residual, solution_json};
use crate::config::{GeometrySpec, RunConfig};
use crate::error::{Error, Result};
use crate::evolution::{build_evolution_with, Evolution, EvolutionBlock};
use crate::linalg::C64;
use crate::qfock::{sector_size, SectorCharge};
use crate::spectral::solve_system;
use crate::verify::{config_echo, run_experiment_full};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// Smallest consistency value accepted for a random non-solution.
pub const CONTROL_FLOOR: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "kagome-lab", version, about = "q-oscillator Kagome evolution operator laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and export the block of U on sector (N, N).
    Build(RunArgs),
    /// Solve the spectral equations for the geometry's family.
    Solve(RunArgs),
    /// Solve the ansatz linear system at spectral solutions and controls.
    Bethe(RunArgs),
    /// Diagonalize U and test containment of predicted eigenvalues.
    Verify(RunArgs),
    /// Summarize report files.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    /// JSON config file; repeat to run several experiments.
    #[arg(long = "config")]
    pub configs: Vec<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// `line`, `coincident`, `generic`, `grid:KxL` or `k,l;k,l;...`.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Family override: `binomial`, `q-binomial` or `grid:KxL`.
    #[arg(long)]
    pub family: Option<String>,
    /// `u-parametrized` or `x-free`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `dense` or `momentum`.
    #[arg(long)]
    pub diagonalizer: Option<String>,
    /// `standard`, `alternate` or `impurity_first`.
    #[arg(long)]
    pub lowering: Option<String>,
    /// `auto`, `on` or `off`.
    #[arg(long)]
    pub resolve: Option<String>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sector_cap: Option<usize>,
    #[arg(long)]
    pub expected_multiplicity: Option<usize>,
    #[arg(long)]
    pub match_tol: Option<f64>,
    #[arg(long)]
    pub residual_tol: Option<f64>,
    #[arg(long)]
    pub unitarity_tol: Option<f64>,
    #[arg(long)]
    pub dedup_tol: Option<f64>,
    #[arg(long)]
    pub solve_tol: Option<f64>,
    #[arg(long)]
    pub controls: Option<usize>,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
    /// Report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for reports without an explicit path.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// CSV spectrum path (verify).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Concurrent experiments.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub inputs: Vec<PathBuf>,
    /// Write the spectrum of the first verify report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn enum_arg<T: DeserializeOwned>(flag: &str, s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| Error::InvalidParameter(format!("unknown value '{s}' for --{flag}")))
}

impl RunArgs {
    /// Config file (or defaults), then `KB_SEED`, then flags.
    pub fn resolve(&self, file: Option<&Path>) -> Result<RunConfig> {
        let mut c = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Ok(s) = std::env::var("KB_SEED") {
            c.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("KB_SEED '{s}' is not an integer")))?;
        }
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = self.$field.clone() {
                    $target = v;
                }
            };
        }
        set!(m => c.m);
        set!(q => c.q);
        set!(n => c.n);
        set!(starts => c.starts);
        set!(max_iter => c.max_iter);
        set!(seed => c.seed);
        set!(sector_cap => c.sector_cap);
        set!(match_tol => c.tolerances.match_);
        set!(residual_tol => c.tolerances.residual);
        set!(unitarity_tol => c.tolerances.unitarity);
        set!(dedup_tol => c.tolerances.dedup);
        set!(solve_tol => c.tolerances.solve);
        set!(controls => c.controls);
        if let Some(g) = &self.geometry {
            c.geometry = GeometrySpec::parse(g)?;
        }
        if let Some(f) = &self.family {
            c.family = Some(f.clone());
        }
        if let Some(e) = self.expected_multiplicity {
            c.expected_multiplicity = Some(e);
        }
        if let Some(s) = &self.mode {
            c.mode = enum_arg("mode", s)?;
        }
        if let Some(s) = &self.diagonalizer {
            c.diagonalizer = enum_arg("diagonalizer", s)?;
        }
        if let Some(s) = &self.lowering {
            c.lowering = enum_arg("lowering", s)?;
        }
        if let Some(s) = &self.resolve {
            c.resolve = enum_arg("resolve", s)?;
        }
        if self.timings {
            c.timings = true;
        }
        if let Some(p) = &self.out {
            c.output.report = Some(p.clone());
        }
        if let Some(p) = &self.out_dir {
            c.output.dir = Some(p.clone());
        }
        if let Some(p) = &self.csv {
            c.output.csv = Some(p.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

/// Exit code for a pipeline error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::SectorCap { .. } => EXIT_RESOURCE,
        _ => EXIT_USAGE,
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn report_path(c: &RunConfig, name: &str) -> PathBuf {
    c.output
        .report
        .clone()
        .unwrap_or_else(|| c.output.dir.clone().unwrap_or_else(|| PathBuf::from(".")).join(format!("{name}.json")))
}

fn check_cap(c: &RunConfig) -> Result<SectorCharge> {
    let charge = SectorCharge::particles(c.n as u32);
    let size = sector_size(c.torus()?, charge);
    if size > c.sector_cap as u128 {
        return Err(Error::SectorCap {
            charge,
            size: size.min(usize::MAX as u128) as usize,
            cap: c.sector_cap,
        });
    }
    Ok(charge)
}

fn build_block(c: &RunConfig) -> Result<EvolutionBlock> {
    let charge = check_cap(c).map_err(|e| e.at("enumerate"))?;
    let evo = Evolution::with_cap(c.torus()?, c.params()?, c.sector_cap).with_order(c.lowering.order());
    build_evolution_with(evo, charge).map_err(|e| e.at("build"))
}

pub fn cmd_build(c: &RunConfig) -> Result<i32> {
    let block = build_block(c)?;
    let mut out = block.to_json(c.torus()?, &c.params()?);
    out["config"] = config_echo(c)?;
    out["unitary"] = json!(block.unitarity_defect() <= c.tolerances.unitarity);
    write_json(&report_path(c, "build"), &out)?;
    Ok(EXIT_PASS)
}

pub fn cmd_solve(c: &RunConfig) -> Result<i32> {
    let geom = c.geometry().map_err(|e| e.at("geometry"))?;
    let fam = c.family(&geom).map_err(|e| e.at("family"))?;
    let set = solve_system(c.n, c.m, c.q, &fam, c.mode, &c.solve_options()).map_err(|e| e.at("solve"))?;
    let mut out = set.to_json();
    out["config"] = config_echo(c)?;
    write_json(&report_path(c, "solve"), &out)?;
    Ok(EXIT_PASS)
}

/// Random spectral parameters off the solution set.
pub fn control_points(n: usize, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| C64::from_polar(rng.gen_range(-0.25f64..0.25).exp(), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect()
        })
        .collect()
}

/// Ansatz consistency at every spectral solution and at random controls.
pub fn bethe_report(c: &RunConfig) -> Result<(Value, bool)> {
    let cfg = c.torus()?;
    let params = c.params()?;
    let geom = c.geometry().map_err(|e| e.at("geometry"))?;
    let fam = c.family(&geom).map_err(|e| e.at("family"))?;
    let set = solve_system(c.n, c.m, c.q, &fam, c.mode, &c.solve_options()).map_err(|e| e.at("solve"))?;
    let block = build_block(c)?;
    let tol = c.tolerances.residual;
    let mut pass = true;
    let mut solved = Vec::new();
    for s in &set.solutions {
        let (sys, sol, state) =
            ansatz_eigenstate(&block, cfg, params, &geom, &s.u).map_err(|e| e.at("ansatz"))?;
        let r = eigen_residual(&block, &state, sys.lambda).map_err(|e| e.at("ansatz"))?;
        let ok = sol.conditions.sigma_min <= tol && r <= tol;
        pass &= ok;
        let mut j = solution_json(&sys, &sol, Some(r));
        j["branch"] = json!(s.branch);
        j["pass"] = json!(ok);
        solved.push(j);
    }
    let mut controls = Vec::new();
    for us in control_points(c.n, c.controls, c.seed) {
        let (sys, sol, _) = ansatz_eigenstate(&block, cfg, params, &geom, &us).map_err(|e| e.at("ansatz"))?;
        let ok = sol.conditions.sigma_min > CONTROL_FLOOR;
        pass &= ok;
        let mut j = solution_json(&sys, &sol, None);
        j["pass"] = json!(ok);
        controls.push(j);
    }
    let out = json!({
        "config": config_echo(c)?,
        "family": fam.to_json(),
        "ansatz_conditions": solved,
        "controls": controls,
        "pass": pass,
    });
    Ok((out, pass))
}

pub fn cmd_bethe(c: &RunConfig) -> Result<i32> {
    let (out, pass) = bethe_report(c)?;
    write_json(&report_path(c, "bethe"), &out)?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

pub fn cmd_verify(c: &RunConfig) -> Result<i32> {
    let exp = run_experiment_full(c)?;
    write_json(&report_path(c, "verify"), &serde_json::to_value(&exp.report)?)?;
    if let Some(p) = &c.output.csv {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(p, exp.spectrum.to_csv())?;
    }
    Ok(if exp.report.pass { EXIT_PASS } else { EXIT_FAIL })
}

fn summarize(path: &Path) -> Result<(String, Option<bool>, Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    let pass = v["pass"].as_bool();
    let name = path.display();
    let line = if v.get("eigenvalues").is_some() {
        let total = v["matches"].as_array().map_or(0, |a| a.len());
        let ok = v["matches"]
            .as_array()
            .map_or(0, |a| a.iter().filter(|m| m["pass"] == true).count());
        let cov = match v["coverage"].as_object() {
            Some(cv) => format!(
                ", seed sees {}, unexplained {}",
                cv["seen"],
                cv["unexplained"].as_array().map_or(0, |a| a.len())
            ),
            None => String::new(),
        };
        format!(
            "{name}: verify dim {} predictions {ok}/{total} matched, unmatched fraction {:.4}{cov}",
            v["dim"],
            v["unmatched_fraction"].as_f64().unwrap_or(f64::NAN)
        )
    } else if v.get("ansatz_conditions").is_some() {
        let worst = v["ansatz_conditions"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|s| s["sigma_min"].as_f64())
            .fold(0.0, f64::max);
        let best_control = v["controls"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|s| s["sigma_min"].as_f64())
            .fold(f64::INFINITY, f64::min);
        format!("{name}: bethe max condition at solutions {worst:.3e}, min at controls {best_control:.3e}")
    } else if v.get("solutions").is_some() {
        format!(
            "{name}: solve {} solutions from {} starts",
            v["solutions"].as_array().map_or(0, |a| a.len()),
            v["starts_tried"]
        )
    } else if v.get("entries").is_some() {
        format!("{name}: block dim {} unitarity defect {:.3e}", v["dim"], v["unitarity_defect"].as_f64().unwrap_or(f64::NAN))
    } else {
        return Err(Error::InvalidParameter(format!("{name}: not a report")));
    };
    Ok((line, pass, v))
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32> {
    if args.inputs.is_empty() {
        return Err(Error::InvalidParameter("no report files given".into()));
    }
    let mut code = EXIT_PASS;
    let mut csv_done = false;
    for p in &args.inputs {
        let (line, pass, v) = summarize(p)?;
        let verdict = match pass {
            Some(true) => " PASS",
            Some(false) => " FAIL",
            None => "",
        };
        println!("{line}{verdict}");
        if pass == Some(false) {
            code = EXIT_FAIL;
        }
        if let (Some(out), false, Some(eigs)) = (&args.csv, csv_done, v["eigenvalues"].as_array()) {
            let mut s = String::from("re,im,multiplicity\n");
            for e in eigs {
                s.push_str(&format!("{:.15e},{:.15e},{}\n", e["value"][0].as_f64().unwrap_or(f64::NAN), e["value"][1].as_f64().unwrap_or(f64::NAN), e["multiplicity"]));
            }
            std::fs::write(out, s)?;
            csv_done = true;
        }
    }
    Ok(code)
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Build(_) => "build",
            Command::Solve(_) => "solve",
            Command::Bethe(_) => "bethe",
            Command::Verify(_) => "verify",
            Command::Report(_) => "report",
        }
    }
}

fn dispatch(cmd: &Command, c: &RunConfig) -> Result<i32> {
    match cmd {
        Command::Build(_) => cmd_build(c),
        Command::Solve(_) => cmd_solve(c),
        Command::Bethe(_) => cmd_bethe(c),
        Command::Verify(_) => cmd_verify(c),
        Command::Report(_) => unreachable!("report takes no run config"),
    }
}

fn run_configs(cmd: &Command, args: &RunArgs) -> i32 {
    let files: Vec<Option<&Path>> = if args.configs.is_empty() {
        vec![None]
    } else {
        args.configs.iter().map(|p| Some(p.as_path())).collect()
    };
    let several = files.len() > 1;
    let run_one = |file: Option<&Path>| -> i32 {
        let resolved = args.resolve(file).map(|mut c| {
            if several && c.output.report.is_none() {
                let stem = file.and_then(|f| f.file_stem()).map(|s| s.to_string_lossy().into_owned());
                let dir = c.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
                c.output.report = stem.map(|s| dir.join(format!("{s}.{}.json", cmd.name())));
            }
            c
        });
        match resolved.and_then(|c| dispatch(cmd, &c)) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let codes: Vec<i32> = if args.jobs > 1 {
        pool.install(|| files.par_iter().map(|f| run_one(*f)).collect())
    } else {
        files.iter().map(|f| run_one(*f)).collect()
    };
    codes.into_iter().max().unwrap_or(EXIT_PASS)
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match &cli.command {
        Command::Report(args) => match cmd_report(args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        cmd @ (Command::Build(a) | Command::Solve(a) | Command::Bethe(a) | Command::Verify(a)) => run_configs(cmd, a),
    }
}
