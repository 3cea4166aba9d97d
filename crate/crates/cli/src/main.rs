use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nll_cli::config::{KernelChoice, RunConfig, Scenario};
use nll_cli::{run, RunError, Status};
use nll_core::FieldSpec;

#[derive(Parser)]
#[command(
    name = "nll",
    version,
    about = "Numerical checks for nonlocal Lane-Emden inequalities"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    s: Option<f64>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true, value_enum)]
    kernel: Option<KernelChoice>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long = "big-lambda", global = true)]
    big_lambda: Option<f64>,
    /// CSV of (angle, value) rows for the custom-table kernel.
    #[arg(long, global = true)]
    table: Option<PathBuf>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long = "r-in", global = true)]
    r_in: Option<f64>,
    #[arg(long = "r-out", global = true)]
    r_out: Option<f64>,
    #[arg(long, global = true)]
    depth: Option<u32>,
    #[arg(long, global = true)]
    angular: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in the config file.
    Run {
        #[arg(long, value_enum)]
        scenario: Option<Scenario>,
    },
    /// Evaluate L_K u at given or sampled points.
    OperatorEval {
        /// Field as a kind name ("bubble") or inline TOML ('kind = "power", beta = 2, c = 1').
        #[arg(long)]
        field: Option<String>,
        /// Comma-separated coordinates; repeatable.
        #[arg(long = "point")]
        points: Vec<String>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        extent: Option<f64>,
    },
    /// Check the cutoff bound and its uniformity in the scale R.
    CutoffVerify {
        /// Comma-separated cutoff scales.
        #[arg(long)]
        scales: Option<String>,
    },
    /// Compare <f, L g> with <g, L f> on compactly supported pairs.
    PairingCheck {
        #[arg(long = "domain-radius")]
        domain_radius: Option<f64>,
    },
    /// Masses S(R) on dyadic radii: dyadic inequality and growth bound.
    MassScan {
        #[arg(long)]
        field: Option<String>,
        #[arg(long = "base-radius")]
        base_radius: Option<f64>,
        #[arg(long)]
        doublings: Option<u32>,
        #[arg(long)]
        kmax: Option<u32>,
    },
    /// Regime of (n, s, q).
    Classify,
    /// Exponent and constant iteration against their closed forms.
    Iterate {
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long)]
        cbar: Option<f64>,
        #[arg(long = "max-steps")]
        max_steps: Option<usize>,
    },
    /// Tail split of the critical case at scales 4, 8, 16 rho.
    CriticalSplit {
        #[arg(long)]
        field: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Calibrate c and certify the supersolution margins.
    Sharpness {
        #[arg(long)]
        safety: Option<f64>,
        /// Comma-separated sample radii.
        #[arg(long)]
        radii: Option<String>,
    },
    /// Every check on built-in settings.
    FullSuite,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("--{what}: '{v}': {e}"))
        })
        .collect()
}

fn parse_field(text: &str) -> Result<FieldSpec, String> {
    #[derive(serde::Deserialize)]
    struct Inline {
        field: FieldSpec,
    }
    if !text.contains('=') {
        return toml::from_str::<FieldSpec>(&format!("kind = \"{}\"", text.trim()))
            .map_err(|e| format!("--field: {}", e.message()));
    }
    toml::from_str::<Inline>(&format!("field = {{ {text} }}"))
        .map(|w| w.field)
        .or_else(|_| toml::from_str::<FieldSpec>(text))
        .map_err(|e| format!("--field: {}", e.message()))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn build_config(cli: Cli) -> Result<RunConfig, String> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    set(&mut cfg.output, g.out);
    set(&mut cfg.seed, g.seed);
    cfg.problem.n = g.n.or(cfg.problem.n);
    cfg.problem.s = g.s.or(cfg.problem.s);
    cfg.problem.q = g.q.or(cfg.problem.q);
    set(&mut cfg.kernel.kind, g.kernel);
    cfg.kernel.lambda = g.lambda.or(cfg.kernel.lambda);
    cfg.kernel.big_lambda = g.big_lambda.or(cfg.kernel.big_lambda);
    if g.table.is_some() {
        cfg.kernel.table = g.table;
        cfg.kernel.profile = None;
    }
    let qc = &mut cfg.quadrature;
    set(&mut qc.tol, g.tol);
    set(&mut qc.r_in, g.r_in);
    set(&mut qc.r_out, g.r_out);
    set(&mut qc.depth, g.depth);
    set(&mut qc.angular, g.angular);

    let scenario = match cli.command {
        Command::Run { scenario } => scenario.or(cfg.scenario),
        Command::OperatorEval {
            field,
            points,
            samples,
            extent,
        } => {
            if let Some(f) = field {
                cfg.operator.field = Some(parse_field(&f)?);
            }
            if !points.is_empty() {
                cfg.operator.points = points
                    .iter()
                    .map(|p| parse_list(p, "point"))
                    .collect::<Result<_, _>>()?;
            }
            set(&mut cfg.operator.samples, samples);
            set(&mut cfg.operator.extent, extent);
            Some(Scenario::OperatorEval)
        }
        Command::CutoffVerify { scales } => {
            if let Some(s) = scales {
                cfg.cutoff.scales = parse_list(&s, "scales")?;
            }
            Some(Scenario::CutoffVerify)
        }
        Command::PairingCheck { domain_radius } => {
            set(&mut cfg.pairing.domain_radius, domain_radius);
            Some(Scenario::PairingCheck)
        }
        Command::MassScan {
            field,
            base_radius,
            doublings,
            kmax,
        } => {
            if let Some(f) = field {
                cfg.mass.field = Some(parse_field(&f)?);
            }
            set(&mut cfg.mass.base_radius, base_radius);
            set(&mut cfg.mass.doublings, doublings);
            set(&mut cfg.mass.kmax, kmax);
            Some(Scenario::MassScan)
        }
        Command::Classify => Some(Scenario::Classify),
        Command::Iterate {
            c0,
            cbar,
            max_steps,
        } => {
            set(&mut cfg.iterate.c0, c0);
            set(&mut cfg.iterate.cbar, cbar);
            set(&mut cfg.iterate.max_steps, max_steps);
            Some(Scenario::Iterate)
        }
        Command::CriticalSplit { field, rho } => {
            if let Some(f) = field {
                cfg.critical.field = Some(parse_field(&f)?);
            }
            set(&mut cfg.critical.rho, rho);
            Some(Scenario::CriticalSplit)
        }
        Command::Sharpness { safety, radii } => {
            set(&mut cfg.sharpness.safety, safety);
            if let Some(r) = radii {
                cfg.sharpness.radii = Some(parse_list(&r, "radii")?);
            }
            Some(Scenario::Sharpness)
        }
        Command::FullSuite => Some(Scenario::FullSuite),
    };
    cfg.scenario = scenario;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("nll: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("nll: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            for c in &report.checks {
                let tag = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "FAIL",
                    Status::Degenerate => "degenerate",
                    Status::Exploratory => "exploratory",
                };
                println!("{tag:<11} {:<22} {}", c.name, c.detail);
            }
            println!("report: {}", cfg.output.join("report.json").display());
            if report.failed() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("nll: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("nll: {e}");
            ExitCode::from(3)
        }
    }
}
