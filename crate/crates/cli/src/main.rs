use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use mechd_core::analysis::{self, SweepResult};
use mechd_core::env::{build_environment, EnvConfig, Environment, DEFAULT_GRID_N};
use mechd_core::mech::{self, round_sig, FeasibilityReport, CLASSIFY_TOL};
use mechd_core::oracle::{self, OracleError, DEFAULT_ORACLE_N, MIN_ORACLE_N};
use mechd_core::solver::{self, SolverDiagnostics};

const GRID_ENV_VAR: &str = "MECHD_GRID_N";
const ORACLE_GAP_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "mechd", version, about = "Optimal in-kind redistribution alongside a private market")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal mechanism.
    Solve {
        #[command(flatten)]
        env: EnvArgs,
        /// Mechanism CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Diagnostics JSON; printed to stdout when omitted.
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Check a mechanism CSV against the environment's constraints.
    Verify {
        #[command(flatten)]
        env: EnvArgs,
        /// Mechanism CSV to check.
        mech: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Solve the discretized program numerically and compare.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Oracle grid size.
        #[arg(long, default_value_t = DEFAULT_ORACLE_N)]
        grid: usize,
        /// Gap report JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-solve over a range of a parameter.
    Sweep {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value = "alpha")]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Sweep CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the private-market benchmark.
    LaissezFaire {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EnvArgs {
    /// Environment JSON.
    #[arg(long)]
    config: PathBuf,
    /// Type grid size.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Io(String),
    Check(String),
    Invalid(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) | Failure::Check(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Check(m) | Failure::Invalid(m) | Failure::Solver(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { env, out, diag } => cmd_solve(&env, out.as_deref(), diag.as_deref()),
        Command::Verify { env, mech, tol } => cmd_verify(&env, &mech, tol),
        Command::Oracle { config, grid, out } => cmd_oracle(&config, grid, out.as_deref()),
        Command::Sweep { env, param, from, to, steps, out } => cmd_sweep(&env, &param, from, to, steps, out.as_deref()),
        Command::LaissezFaire { env, out } => cmd_laissez_faire(&env, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mechd: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// `--grid`, then the config's `grid_n`, then `MECHD_GRID_N`, then the default.
fn resolve_grid(flag: Option<usize>, config: Option<usize>) -> Result<usize, Failure> {
    if let Some(n) = flag.or(config) {
        return Ok(n);
    }
    match std::env::var(GRID_ENV_VAR) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Failure::Invalid(format!("{GRID_ENV_VAR} must be a positive integer, got '{s}'"))),
        Err(_) => Ok(DEFAULT_GRID_N),
    }
}

fn read_config(path: &Path) -> Result<EnvConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    EnvConfig::from_json(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load(args: &EnvArgs) -> Result<Environment<f64>, Failure> {
    let mut config = read_config(&args.config)?;
    config.grid_n = Some(resolve_grid(args.grid, config.grid_n)?);
    build_environment(&config).map_err(|e| Failure::Invalid(format!("{}: {e}", args.config.display())))
}

/// Writes through a temporary file in the target directory, so a failed run
/// never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let io = |e: io::Error| Failure::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Outcome {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn num(x: f64) -> Value {
    json!(round_sig(x))
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn diagnostics_json(d: &SolverDiagnostics<f64>) -> Value {
    let mut m = Map::new();
    m.insert("intervene".into(), json!(d.intervene));
    m.insert("mu_star".into(), num(d.mu_star));
    if let Some(x) = d.mu_max {
        m.insert("mu_max".into(), num(x));
    }
    if let Some(x) = d.theta_h_star {
        m.insert("theta_H_star".into(), num(x));
    }
    if let Some(x) = d.theta_l_star {
        m.insert("theta_L_star".into(), num(x));
    }
    m.insert("u_floor".into(), num(d.u_floor));
    m.insert(
        "welfare".into(),
        json!({"lf": num(d.welfare_lf), "optimal": num(d.welfare_opt), "gain": num(d.welfare_gain)}),
    );
    let regions: Vec<Value> = d
        .regions
        .regions
        .iter()
        .map(|r| json!({"lo": num(r.lo), "hi": num(r.hi), "kind": r.kind.as_str()}))
        .collect();
    m.insert("regions".into(), Value::Array(regions));
    Value::Object(m)
}

fn cmd_solve(args: &EnvArgs, out: Option<&Path>, diag: Option<&Path>) -> Outcome {
    let env = load(args)?;
    let (m, d) = solver::solve(&env).map_err(|e| Failure::Solver(e.to_string()))?;
    let mut csv = Vec::new();
    mech::write_csv(&m, &env, &d.regions, &mut csv).map_err(|e| Failure::Io(e.to_string()))?;
    let diag_bytes = json_bytes(&diagnostics_json(&d));
    if let Some(p) = out {
        write_atomic(p, &csv)?;
    }
    emit(diag, &diag_bytes)
}

fn report_json(r: &FeasibilityReport<f64>, tol: f64) -> Value {
    json!({
        "ic_violation": num(r.ic_violation),
        "envelope_violation": num(r.envelope_violation),
        "ir_violation": num(r.ir_violation),
        "ls_violation": num(r.ls_violation),
        "worst": num(r.worst()),
        "tol": num(tol),
        "passes": r.passes(tol),
    })
}

fn cmd_verify(args: &EnvArgs, path: &Path, tol: f64) -> Outcome {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Failure::Invalid(format!("--tol must be nonnegative, got {tol}")));
    }
    let env = load(args)?;
    let file = fs::File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let m = mech::read_csv::<f64, _>(file).map_err(|e| match e {
        mech::MechError::Io(s) => Failure::Io(s),
        other => Failure::Invalid(format!("{}: {other}", path.display())),
    })?;
    let r = mech::verify_feasibility(&m, &env, tol);
    emit(None, &json_bytes(&report_json(&r, tol)))?;
    if r.passes(tol) {
        Ok(())
    } else {
        Err(Failure::Check(format!("violations exceed tol = {tol}")))
    }
}

fn cmd_oracle(config: &Path, n: usize, out: Option<&Path>) -> Outcome {
    if n < MIN_ORACLE_N {
        return Err(Failure::Invalid(format!("--grid must be at least {MIN_ORACLE_N}, got {n}")));
    }
    let env = load(&EnvArgs { config: config.to_path_buf(), grid: None })?;
    let (m, _) = solver::solve(&env).map_err(|e| Failure::Solver(e.to_string()))?;
    let gap = match oracle::oracle_gap(&env, &m, n) {
        Ok(g) => g,
        Err(e @ OracleError::GridTooSmall(_)) | Err(e @ OracleError::Env(_)) => return Err(Failure::Invalid(e.to_string())),
        Err(e) => return Err(Failure::Solver(e.to_string())),
    };
    let report = json!({
        "n": n,
        "nu_gap": num(gap.nu_gap),
        "objective_gap": num(gap.objective_gap),
        "oracle_objective": num(gap.oracle_objective),
        "closed_objective": num(gap.closed_objective),
        "iterations": gap.solution.iterations,
        "converged": gap.solution.converged,
    });
    emit(out, &json_bytes(&report))?;
    if gap.objective_gap.abs() <= ORACLE_GAP_TOL {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "relative objective gap {:e} exceeds {ORACLE_GAP_TOL:e}",
            gap.objective_gap
        )))
    }
}

fn print_verdicts(s: &SweepResult<f64>) {
    let v = &s.verdicts;
    let mut err = io::stderr();
    let lines = [
        ("mu_star nonincreasing", v.mu_nonincreasing),
        ("theta_H nonincreasing", v.theta_h_nonincreasing),
        ("theta_H nondecreasing", v.theta_h_nondecreasing),
        ("theta_L nondecreasing", v.theta_l_nondecreasing),
        ("theta_L nonincreasing", v.theta_l_nonincreasing),
        ("welfare_gain nonincreasing", v.gain_nonincreasing),
    ];
    for (label, ok) in lines {
        let _ = writeln!(err, "{label}: {ok}");
    }
}

fn cmd_sweep(args: &EnvArgs, param: &str, from: f64, to: f64, steps: usize, out: Option<&Path>) -> Outcome {
    if param != "alpha" {
        return Err(Failure::Invalid(format!("--param '{param}' is not supported; use alpha")));
    }
    if !(from.is_finite() && to.is_finite() && from > 0.0 && from < to) {
        return Err(Failure::Invalid(format!("need 0 < --from < --to, got {from}, {to}")));
    }
    if steps < 2 {
        return Err(Failure::Invalid(format!("--steps must be at least 2, got {steps}")));
    }
    let env = load(args)?;
    let alphas = analysis::linspace(from, to, steps);
    let s = analysis::alpha_sweep(&env, &alphas).map_err(|e| match e {
        analysis::AnalysisError::Solver(e) => Failure::Solver(e.to_string()),
        other => Failure::Invalid(other.to_string()),
    })?;
    let mut csv = Vec::new();
    analysis::write_sweep_csv(&s, &mut csv).map_err(|e| Failure::Io(e.to_string()))?;
    emit(out, &csv)?;
    print_verdicts(&s);
    Ok(())
}

fn cmd_laissez_faire(args: &EnvArgs, out: Option<&Path>) -> Outcome {
    let env = load(args)?;
    let m = env.laissez_faire();
    let regions = mech::classify_regions(&m, &env, CLASSIFY_TOL);
    let mut csv = Vec::new();
    mech::write_csv(&m, &env, &regions, &mut csv).map_err(|e| Failure::Io(e.to_string()))?;
    emit(out, &csv)
}
