use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qld::classical::MIN_TIME_STEPS;
use qld::experiments::{
    difference_field, fig1_pipeline, fig2_pipeline, ratio_check, ratio_manifest, ratio_table,
    DiffFieldConfig, Normalization, Preset, WidthScanConfig, DEFAULT_SEED,
};
use qld::io::{read_grid_file, write_csv, write_grid_file, Table};
use qld::{ClassicalLd, GridSpec, LdField, Quadrature, QuadratureRule, SaddleParams, SampleSharing, SamplerConfig, ThimbleSampler};

/// Environment variable that caps the number of worker threads.
const THREADS_ENV: &str = "QLD_THREADS";

#[derive(Parser, Debug)]
#[command(name = "qld", version, about = "Classical and quantum Lagrangian descriptors for the Hamiltonian saddle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classical descriptor field on a phase-space grid.
    Classical(ClassicalArgs),
    /// Thimble Monte Carlo descriptor field on a phase-space grid.
    Quantum(QuantumArgs),
    /// Normalized difference of a quantum and a classical field.
    Diff(DiffArgs),
    /// Monte Carlo manifold width against the mode cutoff.
    WidthScan(WidthScanArgs),
    /// Width ratio of two systems at equal cutoff.
    RatioCheck(RatioArgs),
    /// Difference-field figure preset.
    Fig1(PresetArgs),
    /// Width-scan figure preset.
    Fig2(PresetArgs),
}

#[derive(Args, Debug, Clone)]
struct SystemArgs {
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    /// Half time-horizon T; the window is [-T, T].
    #[arg(long, default_value_t = 8.0 / 3.0)]
    time_horizon: f64,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Grid size as NQxNP.
    #[arg(long, default_value = "64x64", value_parser = parse_grid_size)]
    grid: (usize, usize),
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    qrange: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    prange: Vec<f64>,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(
            (self.qrange[0], self.qrange[1]),
            (self.prange[0], self.prange[1]),
            self.grid.0,
            self.grid.1,
        )?)
    }
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output LDG1 file.
    #[arg(long)]
    out: PathBuf,
    /// Also export the field as `q,p,value` CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    Trapezoid,
    Simpson,
}

impl From<Rule> for QuadratureRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Trapezoid => QuadratureRule::Trapezoid,
            Rule::Simpson => QuadratureRule::Simpson,
        }
    }
}

#[derive(Args, Debug)]
struct ClassicalArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Time steps M on [-T, T] (even).
    #[arg(long, default_value_t = MIN_TIME_STEPS)]
    quad_steps: usize,
    #[arg(long, value_enum, default_value_t = Rule::Trapezoid)]
    quadrature: Rule,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sharing {
    Shared,
    PerPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
struct SamplingArgs {
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    hbar: f64,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    antithetic: Toggle,
    /// Time steps M; defaults to max(4096, 16N).
    #[arg(long)]
    quad_steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Rule::Trapezoid)]
    quadrature: Rule,
}

impl SamplingArgs {
    fn config(&self, modes: usize) -> SamplerConfig {
        SamplerConfig {
            antithetic: self.antithetic == Toggle::On,
            time_steps: self.quad_steps,
            rule: self.quadrature.into(),
            ..SamplerConfig::new(modes, self.samples, self.seed)
        }
    }
}

#[derive(Args, Debug)]
struct QuantumArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Mode cutoff N.
    #[arg(long, default_value_t = 10)]
    modes: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, value_enum, default_value_t = Sharing::Shared)]
    sharing: Sharing,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Norm {
    MaxAbs,
    None,
    Zscore,
}

impl From<Norm> for Normalization {
    fn from(n: Norm) -> Self {
        match n {
            Norm::MaxAbs => Normalization::MaxAbs,
            Norm::None => Normalization::None,
            Norm::Zscore => Normalization::ZScore,
        }
    }
}

#[derive(Args, Debug)]
struct DiffArgs {
    /// Quantum field (LDG1).
    quantum: PathBuf,
    /// Classical field (LDG1).
    classical: PathBuf,
    #[arg(long, value_enum, default_value_t = Norm::MaxAbs, value_parser = parse_norm)]
    normalize: Norm,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct WidthScanArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Comma-separated, strictly ascending mode cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100,200,400,800")]
    modes_list: Vec<usize>,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Output directory for width_scan.csv and manifest.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RatioArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    lambda2: f64,
    #[arg(long)]
    time_horizon2: f64,
    #[arg(long, value_delimiter = ',', default_value = "50,200")]
    modes_list: Vec<usize>,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Output directory for ratio_check.csv and manifest.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetName {
    Desk,
    Paper,
}

#[derive(Args, Debug)]
struct PresetArgs {
    #[arg(long, value_enum, default_value_t = PresetName::Desk)]
    preset: PresetName,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl PresetArgs {
    fn preset(&self) -> Preset {
        match self.preset {
            PresetName::Desk => Preset::Desk,
            PresetName::Paper => Preset::Paper,
        }
    }
}

fn parse_grid_size(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NQxNP, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad grid dimension {v:?}"));
    Ok((parse(a)?, parse(b)?))
}

// accept the snake_case spelling used in manifests as well
fn parse_norm(s: &str) -> Result<Norm, String> {
    Normalization::parse(s)
        .map(|n| match n {
            Normalization::MaxAbs => Norm::MaxAbs,
            Normalization::None => Norm::None,
            Normalization::ZScore => Norm::Zscore,
        })
        .or_else(|| Norm::from_str(s, true).ok())
        .ok_or_else(|| format!("unknown normalization {s:?} (max_abs, none, zscore)"))
}

fn params(system: &SystemArgs, hbar: f64) -> Result<SaddleParams> {
    Ok(SaddleParams::with_hbar(system.lambda, system.time_horizon, hbar)?)
}

fn write_field(field: &LdField, output: &OutputArgs) -> Result<()> {
    write_grid_file(field, &output.out)?;
    if let Some(csv) = &output.csv {
        write_csv(&Table::from_field(field), csv)?;
    }
    Ok(())
}

fn summarize(field: &LdField, path: &Path) {
    let (min, max) = field
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!(
        "wrote {} ({} field, {}x{}, min {min:.6}, max {max:.6})",
        path.display(),
        field.kind().name(),
        field.grid.nq,
        field.grid.np
    );
}

fn run_classical(args: &ClassicalArgs) -> Result<()> {
    let params = params(&args.system, 1.0)?;
    let quad = Quadrature::new(qld::TimeGrid::new(params.horizon, args.quad_steps)?, args.quadrature.into());
    let field = ClassicalLd::new(&params, quad)?.field(&args.grid.spec()?)?;
    write_field(&field, &args.output)?;
    summarize(&field, &args.output.out);
    Ok(())
}

fn run_quantum(args: &QuantumArgs) -> Result<()> {
    let params = params(&args.system, args.sampling.hbar)?;
    let config = SamplerConfig {
        sharing: match args.sharing {
            Sharing::Shared => SampleSharing::Shared,
            Sharing::PerPoint => SampleSharing::PerPoint,
        },
        ..args.sampling.config(args.modes)
    };
    let field = ThimbleSampler::new(&params, &config)?.field(&args.grid.spec()?)?;
    write_field(&field, &args.output)?;
    summarize(&field, &args.output.out);
    Ok(())
}

fn run_diff(args: &DiffArgs) -> Result<()> {
    let quantum = read_grid_file(&args.quantum)?;
    let classical = read_grid_file(&args.classical)?;
    let diff = difference_field(&quantum, &classical, args.normalize.into())?;
    write_field(&diff, &args.output)?;
    summarize(&diff, &args.output.out);
    Ok(())
}

fn run_width_scan(args: &WidthScanArgs) -> Result<()> {
    let config = WidthScanConfig {
        params: params(&args.system, args.sampling.hbar)?,
        modes: args.modes_list.clone(),
        sampler: args.sampling.config(0),
    };
    let out = fig2_pipeline(&config, &args.out)?;
    print_width_rows(&out.rows);
    println!("wrote {}", out.csv.display());
    Ok(())
}

fn print_width_rows(rows: &[qld::experiments::WidthScanRow]) {
    println!("{:>6} {:>12} {:>12} {:>12} {:>9}", "N", "sigma_mc", "std_error", "theory", "rel_err");
    for r in rows {
        println!(
            "{:>6} {:>12.6} {:>12.6} {:>12.6} {:>8.3}%",
            r.modes,
            r.sigma_mc,
            r.sigma_std_error,
            r.sigma_theory,
            100.0 * r.rel_err
        );
    }
}

fn run_ratio(args: &RatioArgs) -> Result<()> {
    let hbar = args.sampling.hbar;
    let first = params(&args.system, hbar)?;
    let second = SaddleParams::with_hbar(args.lambda2, args.time_horizon2, hbar)?;
    let sampler = args.sampling.config(0);
    let rows = ratio_check(&first, &second, &args.modes_list, &sampler)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let csv = args.out.join("ratio_check.csv");
    write_csv(&ratio_table(&rows), &csv)?;
    let mut manifest = ratio_manifest(&first, &second, &args.modes_list, &sampler);
    manifest.add_file("ratio_check", &csv)?;
    manifest.write(args.out.join("manifest.txt"))?;
    for r in &rows {
        println!(
            "N={:<6} mc {:.6}  theory {:.6}  rel_err {:.3}%",
            r.modes,
            r.mc_ratio,
            r.theory_ratio,
            100.0 * r.rel_err
        );
    }
    println!("wrote {}", csv.display());
    Ok(())
}

fn run_fig1(args: &PresetArgs) -> Result<()> {
    let mut config = DiffFieldConfig::preset(args.preset());
    if let Some(seed) = args.seed {
        config.sampler.seed = seed;
    }
    let out = fig1_pipeline(&config, &args.out)?;
    for p in std::iter::once(&out.classical).chain(&out.quantum).chain(&out.difference) {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", out.manifest.display());
    Ok(())
}

fn run_fig2(args: &PresetArgs) -> Result<()> {
    let mut config = WidthScanConfig::preset(args.preset());
    if let Some(seed) = args.seed {
        config.sampler.seed = seed;
    }
    let out = fig2_pipeline(&config, &args.out)?;
    print_width_rows(&out.rows);
    println!("wrote {}", out.csv.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!("{THREADS_ENV} must be a positive integer, got {raw:?}"),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Classical(a) => run_classical(a),
        Command::Quantum(a) => run_quantum(a),
        Command::Diff(a) => run_diff(a),
        Command::WidthScan(a) => run_width_scan(a),
        Command::RatioCheck(a) => run_ratio(a),
        Command::Fig1(a) => run_fig1(a),
        Command::Fig2(a) => run_fig2(a),
    }
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn one_line(err: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if line.contains(&text) {
            continue;
        }
        if !line.is_empty() {
            line.push_str(": ");
        }
        line.push_str(&text);
    }
    line.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("qld: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qld: error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
