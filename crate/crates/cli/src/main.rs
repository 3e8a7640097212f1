use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsvc::dof::{DesignTemplate, LookupMode, McDofConfig, McDofResult, ReferenceTable};
use tsvc::sim::{self, DofApproach, ScenarioConfig};
use tsvc::{DofSpec, Error};

#[derive(Parser)]
#[command(name = "tsvc", version, about = "Tree-structured varying-coefficient regression")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "TSVC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a TSVC path to a CSV file and prune it by BIC.
    Fit(FitArgs),
    /// Monte-Carlo degrees of freedom under a null model.
    McDof(McDofArgs),
    /// Fit a fractional-polynomial DoF surface to a DoF table.
    DeriveFormula(DeriveArgs),
    /// Run a simulation scenario.
    Simulate(SimulateArgs),
    /// Print the DoF of a model with s splits.
    Dof(DofArgs),
}

#[derive(Args)]
struct DofChoice {
    /// naive, mfp, table, table-nearest or mc
    #[arg(long, default_value = "mfp")]
    dof: String,

    /// DoF table (p,n,s,dof,se) from `mc-dof`, required with --dof mc.
    #[arg(long)]
    mc_table: Option<PathBuf>,
}

impl DofChoice {
    fn spec(&self) -> Result<DofSpec, Error> {
        match self.dof.as_str() {
            "naive" => Ok(DofSpec::Naive),
            "mfp" => Ok(DofSpec::MfpFormula),
            "table" => Ok(DofSpec::McTable(LookupMode::Exact)),
            "table-nearest" => Ok(DofSpec::McTable(LookupMode::Nearest)),
            "mc" => {
                let path = self
                    .mc_table
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("--dof mc needs --mc-table".into()))?;
                Ok(DofSpec::McCustom(McDofResult::from_csv(open(path)?)?))
            }
            other => Err(Error::InvalidConfig(format!("unknown DoF approach '{other}'"))),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value_t = 5)]
    smax: usize,
    #[arg(long, default_value_t = 10)]
    min_leaf: usize,
    #[command(flatten)]
    dof: DofChoice,
    /// Pruned model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Per-s BIC table as CSV.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct McDofArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    smax: usize,
    /// Replicates per run.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Independent runs.
    #[arg(long = "runs", short = 'R', default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 10)]
    min_leaf: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveArgs {
    /// DoF table CSV (p,n,s,dof); the shipped reference grid if absent.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Fitted surface as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: u8,
    #[arg(long)]
    s_dgp: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 25)]
    reps: usize,
    /// Comma-separated approaches: naive, mfp, table, mc-null, mc-dgp.
    #[arg(long, value_delimiter = ',')]
    dof: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    smax: Option<usize>,
    #[arg(long, default_value_t = 10)]
    min_leaf: usize,
    /// Replicates per run for the Monte-Carlo approaches.
    #[arg(long, default_value_t = 100)]
    mc_m: usize,
    /// Runs for the Monte-Carlo approaches.
    #[arg(long, default_value_t = 10)]
    mc_runs: usize,
    /// Allow n and smax outside the scenario's published setting.
    #[arg(long)]
    relaxed: bool,
    /// Summary CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replicate CSV.
    #[arg(long)]
    raw_out: Option<PathBuf>,
}

#[derive(Args)]
struct DofArgs {
    #[arg(long)]
    s: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    dof: DofChoice,
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    Ok(BufReader::new(File::open(path)?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn fit(args: &FitArgs) -> Result<(), Error> {
    let spec = args.dof.spec()?;
    let dataset = tsvc::io::read_dataset::<f64, _>(open(&args.input)?, &args.response)?;
    let path = tsvc::fit_path(&dataset, args.smax, args.min_leaf)?;
    let report = tsvc::prune_path(&path, &spec)?;
    let chosen = report.selected_row();
    println!(
        "selected s = {} (dof {:.4}, loglik {:.4}, bic {:.4}, approach {})",
        chosen.s, chosen.dof, chosen.log_lik, chosen.bic, report.spec
    );
    if path.stopped_early() {
        println!("path stopped at s = {} of {}", path.s_reached(), args.smax);
    }
    if let Some(out) = &args.model_out {
        let json = report.selected_model(&path).to_document().to_json()?;
        std::fs::write(out, json + "\n")?;
    }
    if let Some(out) = &args.report_out {
        report.write_csv(BufWriter::new(File::create(out)?))?;
    }
    Ok(())
}

fn mc_dof(args: &McDofArgs) -> Result<(), Error> {
    if args.n == 0 || args.p == 0 || args.smax == 0 {
        return Err(Error::InvalidConfig("n, p and smax must be positive".into()));
    }
    let config = McDofConfig {
        mu: None,
        m: args.m,
        runs: args.runs,
        s_max: args.smax,
        min_leaf: args.min_leaf,
        seed: args.seed,
    };
    let result = tsvc::dof::mc_dof_tsvc(&DesignTemplate::<f64>::random(args.n, args.p), &config)?;
    if result.early_stops > 0 {
        eprintln!("warning: {} replicate paths stopped before s = {}", result.early_stops, args.smax);
    }
    result.write_csv(output(args.out.as_deref())?)
}

fn derive_formula(args: &DeriveArgs) -> Result<(), Error> {
    let table = match &args.table {
        Some(p) => ReferenceTable::<f64>::from_csv(open(p)?)?,
        None => ReferenceTable::shipped(),
    };
    let fit = tsvc::derive_dof_formula(table.rows(), args.alpha)?;
    println!("dof = {}", fit.expression());
    println!("R^2 = {:.4}", fit.r_squared);
    if let Some(out) = &args.out {
        std::fs::write(out, fit.to_json()? + "\n")?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let mut config = ScenarioConfig {
        replications: args.reps,
        seed: args.seed,
        min_leaf: args.min_leaf,
        mc_m: args.mc_m,
        mc_runs: args.mc_runs,
        relaxed: args.relaxed,
        ..ScenarioConfig::defaults(args.scenario, args.s_dgp, args.n)
    };
    if let Some(s) = args.smax {
        config.s_max = s;
    }
    if let Some(list) = &args.dof {
        config.approaches = list
            .iter()
            .map(|s| {
                DofApproach::parse(s.trim())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown DoF approach '{s}'")))
            })
            .collect::<Result<_, _>>()?;
    }
    let summary = sim::run_simulation(&config)?;
    summary.write_csv(output(args.out.as_deref())?)?;
    if let Some(raw) = &args.raw_out {
        summary.write_replicates_csv(BufWriter::new(File::create(raw)?))?;
    }
    Ok(())
}

fn dof(args: &DofArgs) -> Result<(), Error> {
    let value = args.dof.spec()?.dof(args.p, args.n, args.s)?;
    println!("{value}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => fit(a),
        Command::McDof(a) => mc_dof(a),
        Command::DeriveFormula(a) => derive_formula(a),
        Command::Simulate(a) => simulate(a),
        Command::Dof(a) => dof(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
