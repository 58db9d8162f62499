use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use nvphoton::sweep::{
    analytic_text, feasibility_text, render_csv, report_feasibility, run_point, run_sweep, write_panel, PointOutcome,
    Provenance, SweepResult,
};
use nvphoton::{Error, Profile, RunConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "nvphoton", version, about = "Spin-optomechanical single-photon source simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured operating point and write merits.csv.
    Simulate(RunArgs),
    /// Run every point of the configured sweep and write sweep.csv.
    Sweep(RunArgs),
    /// Check the operating regime and write feasibility.txt; exits 3 when infeasible.
    Feasibility(RunArgs),
    /// Print closed-form estimates and write analytic.txt.
    Analytic(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    config: PathBuf,
    /// Use the reduced-cost profile from the `[fast]` table.
    #[arg(long)]
    fast: bool,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Reserved; the solvers are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: EXIT_CONFIG, message: format!("cannot write {}: {e}", path.display()) }
}

type Handler = fn(&Context) -> Result<u8, Failure>;

struct Context {
    config: RunConfig,
    profile: Profile,
    out: PathBuf,
}

impl Context {
    fn new(args: &RunArgs) -> Result<Self, Failure> {
        let config = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            info!("seed {seed} ignored: no stochastic component");
        }
        if let Some(n) = args.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure { code: EXIT_CONFIG, message: format!("--threads {n}: {e}") })?;
        }
        let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
        std::fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
        let profile = if args.fast { Profile::Fast } else { Profile::Full };
        Ok(Self { config, profile, out })
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }

    fn header(&self) -> String {
        Provenance::new(&self.config, self.profile).header()
    }
}

fn simulate(ctx: &Context) -> Result<u8, Failure> {
    let report = run_point(&ctx.config, &[], ctx.profile)?;
    let m = &report.merits;
    let show = |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
    println!("gate [{:.3e}, {:.3e}] s", m.t_l, m.t_u);
    println!("indistinguishability I = {}", show(m.indistinguishability));
    println!("purity g2 = {}", show(m.g2));
    println!("brightness beta = {:.6}", m.beta);
    if let Some(d) = m.convergence.max_delta() {
        println!("half-grid change = {d:.3e}");
    }
    if !report.truncation_adequate {
        warn!("top Fock levels still populated at truncation {:?}", report.truncation);
    }
    let result = SweepResult {
        axes: Vec::new(),
        points: vec![PointOutcome { axes: Vec::new(), result: Ok(report) }],
        provenance: Provenance::new(&ctx.config, ctx.profile),
    };
    let path = ctx.write("merits.csv", &render_csv(&result)?)?;
    info!("wrote {}", path.display());
    Ok(0)
}

fn sweep(ctx: &Context) -> Result<u8, Failure> {
    let path = ctx.out.join("sweep.csv");
    let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
    let mut sink = BufWriter::new(file);
    let result = run_sweep(&ctx.config, ctx.profile, Some(&mut sink))?;
    sink.flush().map_err(|e| io_failure(&path, e))?;
    info!("wrote {}", path.display());
    if let Some(panel) = &ctx.config.output.panel {
        write_panel(&ctx.out, panel, &result)?;
        info!("wrote fig2{panel}.csv");
    }
    let failed = result.points.iter().filter(|p| p.result.is_err()).count();
    println!("{} points, {failed} failed", result.points.len());
    Ok(if failed > 0 { EXIT_NUMERICAL } else { 0 })
}

fn feasibility(ctx: &Context) -> Result<u8, Failure> {
    let (report, estimate) = report_feasibility(&ctx.config, ctx.profile)?;
    let text = format!("{}{}", ctx.header(), feasibility_text(&report, &estimate));
    print!("{text}");
    ctx.write("feasibility.txt", &text)?;
    Ok(if report.all_ok() { 0 } else { EXIT_INFEASIBLE })
}

fn analytic(ctx: &Context) -> Result<u8, Failure> {
    let (_, estimate) = report_feasibility(&ctx.config, ctx.profile)?;
    let text = format!("{}{}", ctx.header(), analytic_text(&estimate));
    print!("{text}");
    ctx.write("analytic.txt", &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (args, run): (&RunArgs, Handler) = match &cli.command {
        Command::Simulate(a) => (a, simulate),
        Command::Sweep(a) => (a, sweep),
        Command::Feasibility(a) => (a, feasibility),
        Command::Analytic(a) => (a, analytic),
    };
    match Context::new(args).and_then(|ctx| run(&ctx)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
