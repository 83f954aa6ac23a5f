//! Command-line front end. `run` parses arguments, resolves the
//! configuration (flags over config file over environment over defaults),
//! writes the output files and returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_h_list, RunConfig};
use crate::error::{Error, Result};
use crate::interp::{compact_kernel_study, convergence_study, lebesgue_study, ExperimentReport, TestFunction};
use crate::kernels::battery::{kernel_battery, BatteryConfig};
use crate::kernels::radial::{radial_ft, RadialProfile};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::lagrange::{decay_study, lagrange_function};
use crate::symbol::{inverse_symbol, symbol, synthesis_condition};

pub const THREADS_ENV: &str = "MATERN_CARDINAL_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ACCURACY: i32 = 2;

/// Lebesgue sweeps count as uniform when max/min ≤ this and max ≤ LEBESGUE_MAX.
pub const LEBESGUE_RATIO: f64 = 2.0;
pub const LEBESGUE_MAX: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(name = "matern-cardinal", version, about = "Cardinal interpolation with Matérn and compactly supported kernels on scaled grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cardinal symbol σ and inverse symbol ω on a grid, plus the synthesis condition.
    Symbol(CommonArgs),
    /// Lagrange coefficients, profile table and decay fit.
    Lagrange(CommonArgs),
    /// Lebesgue constants and decay fits over an h sweep.
    Lebesgue(CommonArgs),
    /// Convergence study of I_h f for a test function.
    Converge(CommonArgs),
    /// Kernel profile tables and the compact-kernel verification battery.
    Kernels(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file with `key = value` lines and `[section]` headers.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Kernel id, e.g. `matern:m=2,d=1` or `eta2`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Scales: `1,0.5,1/4` or the dyadic range `1..1/32`.
    #[arg(long)]
    pub h: Option<String>,
    /// Grid size M per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Tolerance of the command's main computation (symbol, coefficients or evaluation).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to $MATERN_CARDINAL_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Symbol,
    Lagrange,
    Lebesgue,
    Converge,
    Kernels,
}

/// Resolves the configuration of one invocation.
pub fn resolve(args: &CommonArgs, env_threads: Option<&str>, kind_tol: impl FnOnce(&mut RunConfig, f64)) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    if cfg.threads.is_none() {
        if let Some(v) = env_threads {
            cfg.set("run.threads", v).map_err(|_| Error::Config(format!("{THREADS_ENV} must be an integer, got `{v}`")))?;
        }
    }
    if let Some(k) = &args.kernel {
        cfg.kernel = k.clone();
    }
    if let Some(h) = &args.h {
        cfg.h_list = parse_h_list(h)?;
    }
    if let Some(g) = args.grid {
        cfg.grid_size = g;
    }
    if let Some(t) = args.tol {
        if !(t > 0.0) {
            return Err(Error::Config(format!("--tol must be positive, got {t}")));
        }
        kind_tol(&mut cfg, t);
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if cfg.threads == Some(0) {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_accuracy_failure() {
        EXIT_ACCURACY
    } else {
        EXIT_USAGE
    }
}

/// Runs one invocation and returns the exit code; messages go to stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (kind, args) = match &cli.command {
        Command::Symbol(a) => (Kind::Symbol, a),
        Command::Lagrange(a) => (Kind::Lagrange, a),
        Command::Lebesgue(a) => (Kind::Lebesgue, a),
        Command::Converge(a) => (Kind::Converge, a),
        Command::Kernels(a) => (Kind::Kernels, a),
    };
    let env = std::env::var(THREADS_ENV).ok();
    let cfg = match resolve(args, env.as_deref(), |c, t| match kind {
        Kind::Symbol => c.symbol_tol = t,
        Kind::Lagrange => c.coeff_tol = t,
        _ => c.eval_tol = t,
    }) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| execute(kind, &cfg)) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for line in &outcome.summary {
                println!("{line}");
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Outcome {
    files: Vec<PathBuf>,
    summary: Vec<String>,
    code: i32,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }
}

#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: &'a T,
}

fn json_with_config<T: Serialize>(cfg: &RunConfig, body: &T) -> String {
    serde_json::to_string_pretty(&WithConfig { config: cfg, body }).expect("output serializes") + "\n"
}

fn stem(spec: &KernelSpec, study: &str) -> String {
    format!("{}_{}d_m{}_{study}", spec.family_name(), spec.d, spec.m)
}

fn h_label(h: f64) -> String {
    format!("h{h}")
}

fn execute(kind: Kind, cfg: &RunConfig) -> Result<Outcome> {
    let mut w = Writer::new(&cfg.out)?;
    w.write("run_config.txt", &cfg.to_text())?;
    let (summary, code) = match kind {
        Kind::Symbol => cmd_symbol(cfg, &mut w)?,
        Kind::Lagrange => cmd_lagrange(cfg, &mut w)?,
        Kind::Lebesgue => cmd_lebesgue(cfg, &mut w)?,
        Kind::Converge => cmd_converge(cfg, &mut w)?,
        Kind::Kernels => cmd_kernels(cfg, &mut w)?,
    };
    Ok(Outcome { files: w.files, summary, code })
}

fn parse_kernel(cfg: &RunConfig) -> Result<KernelSpec> {
    KernelSpec::parse(&cfg.kernel)
}

#[derive(Serialize)]
struct SymbolOutput<'a> {
    symbols: Vec<serde_json::Value>,
    synthesis: &'a [SynthesisRow],
}

#[derive(Serialize)]
struct SynthesisRow {
    h: f64,
    delta: f64,
    measured_sup: f64,
    proof_bound: f64,
}

fn cmd_symbol(cfg: &RunConfig, w: &mut Writer) -> Result<(Vec<String>, i32)> {
    let spec = parse_kernel(cfg)?;
    let base = stem(&spec, "symbol");
    let mut metas = Vec::new();
    let mut synthesis = Vec::new();
    let mut summary = Vec::new();
    for &h in &cfg.h_list {
        let grid = inverse_symbol(&symbol(&spec, h, cfg.grid_size, cfg.symbol_tol)?)?;
        w.write(&format!("{base}_{}.csv", h_label(h)), &grid.to_csv())?;
        metas.push(serde_json::to_value(&grid).expect("symbol serializes"));
        summary.push(format!("h = {h}: route {:?}, truncation {}, tail {:.3e}", grid.route, grid.truncation_radius, grid.tail_bound));
        if spec.family == KernelFamily::Matern {
            let s = synthesis_condition(&spec, h, cfg.synthesis_delta, 20)?;
            synthesis.push(SynthesisRow { h, delta: cfg.synthesis_delta, measured_sup: s.measured_sup, proof_bound: s.proof_bound });
        }
    }
    if !synthesis.is_empty() {
        let mut csv = String::from("h,delta,measured_sup,proof_bound\n");
        for r in &synthesis {
            csv += &format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", r.h, r.delta, r.measured_sup, r.proof_bound);
        }
        w.write(&format!("{}.csv", stem(&spec, "synthesis")), &csv)?;
    }
    for m in metas.iter_mut() {
        if let Some(obj) = m.as_object_mut() {
            obj.remove("sigma");
            obj.remove("omega");
        }
    }
    w.write(&format!("{base}.json"), &json_with_config(cfg, &SymbolOutput { symbols: metas, synthesis: &synthesis }))?;
    Ok((summary, EXIT_OK))
}

#[derive(Serialize)]
struct LagrangeOutput {
    lagrange: Vec<serde_json::Value>,
}

fn cmd_lagrange(cfg: &RunConfig, w: &mut Writer) -> Result<(Vec<String>, i32)> {
    let spec = parse_kernel(cfg)?;
    let base = stem(&spec, "lagrange");
    let mut entries = Vec::new();
    let mut summary = Vec::new();
    let mut code = EXIT_OK;
    for &h in &cfg.h_list {
        let l = lagrange_function(&spec, h, &cfg.lagrange())?;
        let decay = decay_study(&l, cfg.decay_r_max, cfg.decay_floor)?;
        let label = h_label(h);
        w.write(&format!("{base}_{label}_coefficients.csv"), &l.coefficients_csv())?;
        w.write(&format!("{base}_{label}_profile.csv"), &l.profile_csv(cfg.profile_radius, 0.125))?;
        entries.push(serde_json::json!({ "function": l, "decay": decay }));
        let cardinal_ok = l.cardinal_error <= crate::consts::CARDINAL_TOL;
        if !cardinal_ok {
            code = EXIT_ACCURACY;
        }
        summary.push(format!(
            "h = {h}: M = {}, radius {}, cardinal error {:.3e}{}, decay rate {}",
            l.grid_size,
            l.radius,
            l.cardinal_error,
            if cardinal_ok { "" } else { " (above tolerance)" },
            decay.rate()
        ));
    }
    w.write(&format!("{base}.json"), &json_with_config(cfg, &LagrangeOutput { lagrange: entries }))?;
    Ok((summary, code))
}

fn write_report(cfg: &RunConfig, w: &mut Writer, report: &ExperimentReport) -> Result<()> {
    let stem = report.file_stem();
    w.write(&format!("{stem}.csv"), &report.to_csv())?;
    w.write(&format!("{stem}.json"), &json_with_config(cfg, report))?;
    Ok(())
}

fn cmd_lebesgue(cfg: &RunConfig, w: &mut Writer) -> Result<(Vec<String>, i32)> {
    let spec = parse_kernel(cfg)?;
    let report = lebesgue_study(&spec, &cfg.h_list, &cfg.convergence())?;
    write_report(cfg, w, &report)?;
    let u = &report.uniformity;
    let mut summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("h = {}: Lambda = {:.6} ± {:.1e}", r.h, r.lebesgue.unwrap_or(f64::NAN), r.lebesgue_err.unwrap_or(f64::NAN)))
        .collect();
    if let (Some(ratio), Some(max)) = (u.lebesgue_ratio, u.lebesgue_max) {
        let uniform = ratio <= LEBESGUE_RATIO && max <= LEBESGUE_MAX;
        summary.push(format!(
            "uniformity: max/min = {ratio:.4}, max = {max:.4} -> {}",
            if uniform { "uniform" } else { "not uniform" }
        ));
    }
    summary.extend(report.warnings.iter().map(|s| format!("warning: {s}")));
    Ok((summary, EXIT_OK))
}

fn test_function(name: &str, d: usize) -> Result<TestFunction> {
    match name {
        "gaussian" => Ok(TestFunction::gaussian(d)),
        "bump" => Ok(TestFunction::bump(d)),
        other => Err(Error::Config(format!("unknown test function `{other}`; supported: gaussian, bump"))),
    }
}

fn cmd_converge(cfg: &RunConfig, w: &mut Writer) -> Result<(Vec<String>, i32)> {
    let spec = parse_kernel(cfg)?;
    let f = test_function(&cfg.test_function, spec.d)?;
    let report = if spec.is_compact() {
        compact_kernel_study(&spec, &f, &cfg.h_list, &cfg.convergence())?
    } else {
        convergence_study(&spec, &f, &cfg.h_list, &cfg.convergence())?
    };
    write_report(cfg, w, &report)?;
    let mut summary: Vec<String> =
        report.rows.iter().map(|r| format!("h = {}: error = {:.6e}", r.h, r.error.unwrap_or(f64::NAN))).collect();
    match report.slope {
        Some(s) => summary.push(format!(
            "slope = {s:.4} ± {:.4} (order 2m = {})",
            report.slope_stderr.unwrap_or(0.0),
            report.target_slope
        )),
        None => summary.push("slope undefined".into()),
    }
    summary.extend(report.warnings.iter().map(|s| format!("warning: {s}")));
    Ok((summary, EXIT_OK))
}

fn profile_table(spec: &KernelSpec, r_max: f64, steps: usize) -> Result<String> {
    let profile = RadialProfile::from_kernel(spec);
    let mut out = String::from("r,profile,transform\n");
    for i in 0..=steps {
        let r = r_max * i as f64 / steps as f64;
        let ft = radial_ft(&profile, spec.d, r)?;
        out += &format!("{r:.16e},{:.16e},{ft:.16e}\n", spec.profile(r));
    }
    Ok(out)
}

fn cmd_kernels(cfg: &RunConfig, w: &mut Writer) -> Result<(Vec<String>, i32)> {
    let mut specs = vec![KernelSpec::eta2(), KernelSpec::psi2(), KernelSpec::psi32()];
    let chosen = parse_kernel(cfg)?;
    if !specs.contains(&chosen) && chosen.family != KernelFamily::MHarmonic {
        specs.insert(0, chosen);
    }
    for spec in &specs {
        w.write(&format!("{}.csv", stem(spec, "profile")), &profile_table(spec, cfg.profile_radius, 400)?)?;
    }
    let battery = kernel_battery(&BatteryConfig::default())?;
    w.write("kernels_battery.csv", &battery.to_csv())?;
    w.write("kernels_battery.json", &json_with_config(cfg, &battery))?;
    let summary = battery
        .checks
        .iter()
        .map(|c| format!("{}: {} (value {:.3e}, tolerance {:.1e})", c.name, if c.passed { "pass" } else { "FAIL" }, c.value, c.tolerance))
        .collect();
    Ok((summary, if battery.all_passed() { EXIT_OK } else { EXIT_ACCURACY }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> CommonArgs {
        let mut argv = vec!["matern-cardinal", "converge"];
        argv.extend_from_slice(list);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Converge(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn precedence() {
        let a = args(&["--kernel", "matern:m=2,d=1", "--h", "1..1/4", "--tol", "1e-9"]);
        let cfg = resolve(&a, Some("3"), |c, t| c.eval_tol = t).unwrap();
        assert_eq!(cfg.kernel, "matern:m=2,d=1");
        assert_eq!(cfg.h_list, vec![1.0, 0.5, 0.25]);
        assert_eq!(cfg.eval_tol, 1e-9);
        assert_eq!(cfg.threads, Some(3));
        let a = args(&["--threads", "2"]);
        assert_eq!(resolve(&a, Some("3"), |_, _| {}).unwrap().threads, Some(2));
        assert!(resolve(&a, Some("x"), |_, _| {}).is_err());
        assert!(resolve(&args(&["--threads", "0"]), None, |_, _| {}).is_err());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["matern-cardinal", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["matern-cardinal", "symbol", "--h", "abc"]), EXIT_USAGE);
        assert_eq!(run(["matern-cardinal", "--help"]), EXIT_OK);
    }

    #[test]
    fn labels() {
        assert_eq!(h_label(0.03125), "h0.03125");
        assert_eq!(stem(&KernelSpec::eta2(), "converge"), "eta2_2d_m2_converge");
    }
}
