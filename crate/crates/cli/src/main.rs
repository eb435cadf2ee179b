use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conecalc::pde::Stepper;
use conecalc_cli::commands::{run, Command, Options};
use conecalc_cli::config::{load_config, ConfigError, InitialKind, RunConfig, SourceKind};
use conecalc_cli::report::{write_report, Report};

/// Operator calculus on manifolds with conical singularities.
#[derive(Parser, Debug)]
#[command(name = "conecalc", version, about)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "CONECALC_THREADS")]
    threads: Option<usize>,
    #[command(flatten)]
    contour: ContourFlags,
    #[command(subcommand)]
    command: Cmd,
}

/// Overrides for the `[contour]` table.
#[derive(Args, Debug, Default)]
struct ContourFlags {
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    smax: Option<f64>,
    #[arg(long, global = true)]
    nray: Option<usize>,
    #[arg(long, global = true)]
    narc: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Indicial roots of the conormal symbol, mode by mode.
    Indicial,
    /// Roots in the extension strip, the dimension of the domain gap and the singular functions.
    Extensions,
    /// Sector conditions on sampled symbols and on the model-cone spectrum.
    Ellipticity,
    /// Eigenvalues of the assembled operator.
    Spectrum {
        /// Also write every mode block as a dense CSV.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// |λ|·‖(λ − A)⁻¹‖ along the sector rays.
    ResolventScan,
    /// Complex powers A^z by the Dunford integral.
    Power,
    /// Bounded imaginary powers scan.
    BipScan,
    /// Weighted Hardy inequalities on power-law test functions.
    HardyCheck,
    /// Linear Cauchy problem u′ + Au = f.
    Heat {
        #[arg(long = "T")]
        t_final: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_parser = parse_stepper)]
        stepper: Option<Stepper>,
        /// zero, constant, sine, or a CSV file with columns mode,node,re,im.
        #[arg(long)]
        forcing: Option<String>,
    },
    /// Quasilinear problem u′ − a(t^c u)Δu = f(u) + g on the two-dimensional cone.
    Quasilinear {
        #[arg(long = "T")]
        t_final: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Polynomial diffusivity in `s`.
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, value_parser = parse_source)]
        f: Option<SourceKind>,
        #[arg(long, value_parser = parse_initial)]
        u0: Option<InitialKind>,
    },
    /// Invariant matrix on small built-in sizes.
    Verify,
    /// Aggregates the reports already in the output directory.
    Report,
}

fn parse_stepper(s: &str) -> Result<Stepper, String> {
    match s {
        "be" | "backward_euler" => Ok(Stepper::BackwardEuler),
        "bdf2" => Ok(Stepper::Bdf2),
        _ => Err(format!("unknown stepper {s:?} (be, bdf2)")),
    }
}

fn parse_source(s: &str) -> Result<SourceKind, String> {
    match s {
        "none" => Ok(SourceKind::None),
        "gl" => Ok(SourceKind::Gl),
        "power" => Ok(SourceKind::Power),
        _ => Err(format!("unknown source {s:?} (none, gl, power)")),
    }
}

fn parse_initial(s: &str) -> Result<InitialKind, String> {
    match s {
        "bump" => Ok(InitialKind::Bump),
        "zero" => Ok(InitialKind::Zero),
        "uniform" => Ok(InitialKind::Uniform),
        _ => Err(format!("unknown initial datum {s:?} (bump, zero, uniform)")),
    }
}

impl Cmd {
    fn command(&self) -> Command {
        match self {
            Cmd::Indicial => Command::Indicial,
            Cmd::Extensions => Command::Extensions,
            Cmd::Ellipticity => Command::Ellipticity,
            Cmd::Spectrum { .. } => Command::Spectrum,
            Cmd::ResolventScan => Command::ResolventScan,
            Cmd::Power => Command::Power,
            Cmd::BipScan => Command::BipScan,
            Cmd::HardyCheck => Command::HardyCheck,
            Cmd::Heat { .. } => Command::Heat,
            Cmd::Quasilinear { .. } => Command::Quasilinear,
            Cmd::Verify => Command::Verify,
            Cmd::Report => Command::Report,
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Cmd::Heat { t_final, steps, stepper, forcing } => {
                let h = &mut cfg.heat;
                set(&mut h.t_final, *t_final);
                set(&mut h.steps, *steps);
                set(&mut h.stepper, *stepper);
                set(&mut h.forcing, forcing.clone());
            }
            Cmd::Quasilinear { t_final, steps, a, c, f, u0 } => {
                let q = &mut cfg.quasilinear;
                set(&mut q.t_final, *t_final);
                set(&mut q.steps, *steps);
                set(&mut q.a, a.clone());
                set(&mut q.c, *c);
                set(&mut q.f, *f);
                set(&mut q.u0, *u0);
            }
            _ => {}
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.output_dir, cli.out.clone());
    let c = &cli.contour;
    set(&mut cfg.contour.theta, c.theta);
    cfg.contour.delta = c.delta.or(cfg.contour.delta);
    cfg.contour.smax = c.smax.or(cfg.contour.smax);
    cfg.contour.nray = c.nray.or(cfg.contour.nray);
    cfg.contour.narc = c.narc.or(cfg.contour.narc);
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("conecalc: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let command = cli.command.command();

    let (mut report, tables) = match resolve(&cli) {
        Ok(cfg) => {
            let opts = Options { dump_matrix: matches!(cli.command, Cmd::Spectrum { dump_matrix: true }) };
            let outcome = run(command, &cfg, &opts);
            (outcome.report, outcome.tables)
        }
        Err(e) => {
            // Still leave a machine-readable record next to the other results.
            let mut cfg = RunConfig::default();
            set(&mut cfg.output_dir, cli.out.clone());
            let mut report = Report::new(command.name(), &cfg);
            report.fail_with("config", e.to_string());
            (report, Vec::new())
        }
    };

    let dir = report.config.output_dir.clone();
    match write_report(&mut report, &tables, &dir) {
        Ok(paths) => {
            for p in &paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("conecalc: cannot write results to {}: {e}", dir.display());
            return ExitCode::from(2);
        }
    }
    for row in report.invariants.iter().filter(|r| !r.pass) {
        eprintln!("conecalc: invariant failed: {} = {:e} (tolerance {:e}): {}", row.name, row.value, row.tolerance, row.detail);
    }
    if let Some(err) = &report.error {
        eprintln!("conecalc: error ({}): {}", err.kind, err.message);
        return ExitCode::from(2);
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
