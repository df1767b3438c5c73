//! Command-line front end for the mrfc solver.
//!
//! Three commands: `generate` writes random network instance files, `solve`
//! runs the barrier Newton solver and/or the dual subgradient baseline and
//! emits trace CSVs plus solution summaries, and `validate` runs the
//! self-check suite on an instance. Every run is reproducible: identical
//! (input, configuration, seed) produce byte-identical outputs, and no
//! command writes partial output on failure — everything is computed first,
//! then written file-by-file through a temp-and-rename.
//!
//! Exit codes: 0 success, 1 convergence failure, 2 invalid input,
//! 3 internal invariant violation.

mod netfile;
mod runcfg;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mrfc::gen;
use mrfc::net::{Network, Session};
use mrfc::solver::{barrier_solve, SolveError, Solution};
use mrfc::subgradient::{subgradient_solve, SubgradSolution};
use mrfc::trace;
use mrfc::validate;

use runcfg::{
    FileConfig, GeneratorSection, InstanceSource, Overrides, Resolved, SolverChoice,
};

// ---------------------------------------------------------------------------
// Failure model and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Failure {
    /// Bad file, bad flag, bad parameter, infeasible instance (exit 2).
    Input(String),
    /// The requested solve did not converge within its budgets (exit 1).
    Convergence(String),
    /// An internal invariant broke; this is a bug, not a user error (exit 3).
    Internal(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Convergence(_) => 1,
            Failure::Input(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Convergence(m) | Failure::Internal(m) => m,
        }
    }
}

fn classify_solve(e: SolveError) -> Failure {
    match e {
        SolveError::Input(_) | SolveError::Infeasible { .. } => Failure::Input(e.to_string()),
        SolveError::Dual { .. } | SolveError::IterationLimit { .. } | SolveError::Stall { .. } => {
            Failure::Convergence(e.to_string())
        }
        SolveError::Ascent { .. } | SolveError::Locality(_) | SolveError::Internal(_) => {
            Failure::Internal(e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// Flags (each mirrors a run-config key one-to-one)
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Default)]
struct GeneratorFlags {
    /// Nodes to place ([generator] nodes)
    #[arg(long = "generator-nodes", value_name = "N")]
    generator_nodes: Option<usize>,
    /// Sessions to draw ([generator] sessions)
    #[arg(long = "generator-sessions", value_name = "F")]
    generator_sessions: Option<usize>,
    /// Square placement region side ([generator] region)
    #[arg(long = "generator-region")]
    generator_region: Option<f64>,
    /// Link range ([generator] range)
    #[arg(long = "generator-range")]
    generator_range: Option<f64>,
    /// Transmit power ([generator] power)
    #[arg(long = "generator-power")]
    generator_power: Option<f64>,
    /// Path-loss exponent ([generator] path_loss)
    #[arg(long = "generator-path-loss")]
    generator_path_loss: Option<f64>,
    /// Noise floor ([generator] noise)
    #[arg(long = "generator-noise")]
    generator_noise: Option<f64>,
}

impl GeneratorFlags {
    fn section(&self) -> GeneratorSection {
        GeneratorSection {
            nodes: self.generator_nodes,
            sessions: self.generator_sessions,
            region: self.generator_region,
            range: self.generator_range,
            power: self.generator_power,
            path_loss: self.generator_path_loss,
            noise: self.generator_noise,
        }
    }
}

#[derive(Args, Debug)]
struct ConfigFlags {
    /// Run-configuration TOML file; flags override its keys
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Network instance file, schema mrfc-net-v1 (config key: input)
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// newton | subgradient | both (config key: solver)
    #[arg(long)]
    solver: Option<String>,
    /// centralized | distributed (config key: mode)
    #[arg(long)]
    mode: Option<String>,
    /// Directory for traces and solution files (config key: out_dir)
    #[arg(long = "out-dir", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Generator seed (config key: seed)
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    generator: GeneratorFlags,
    /// Initial barrier weight ([barrier] t)
    #[arg(long = "barrier-t")]
    barrier_t: Option<f64>,
    /// Barrier weight multiplier per stage ([barrier] mu)
    #[arg(long = "barrier-mu")]
    barrier_mu: Option<f64>,
    /// Stop once (constraint count)/t falls below this ([barrier] gap_tol)
    #[arg(long = "barrier-gap-tol")]
    barrier_gap_tol: Option<f64>,
    /// Splitting weight α, must exceed ½ ([split] alpha)
    #[arg(long = "split-alpha")]
    split_alpha: Option<f64>,
    /// Inner dual-solve residual tolerance ([split] inner_tol)
    #[arg(long = "split-inner-tol")]
    split_inner_tol: Option<f64>,
    /// Inner dual-solve round cap ([split] max_inner)
    #[arg(long = "split-max-inner")]
    split_max_inner: Option<usize>,
    /// Armijo slope fraction ([newton] sigma)
    #[arg(long = "newton-sigma")]
    newton_sigma: Option<f64>,
    /// Backtracking shrink factor ([newton] beta)
    #[arg(long = "newton-beta")]
    newton_beta: Option<f64>,
    /// Fraction of the boundary step allowed ([newton] boundary_frac)
    #[arg(long = "newton-boundary-frac")]
    newton_boundary_frac: Option<f64>,
    /// Decrement below which the unit step is taken ([newton] full_step_threshold)
    #[arg(long = "newton-full-step-threshold")]
    newton_full_step_threshold: Option<f64>,
    /// Per-stage Newton decrement target ([newton] decrement_tol)
    #[arg(long = "newton-decrement-tol")]
    newton_decrement_tol: Option<f64>,
    /// Outer iteration cap per stage ([newton] max_outer)
    #[arg(long = "newton-max-outer")]
    newton_max_outer: Option<usize>,
    /// Run exactly this many iterations per stage ([newton] fixed_iterations)
    #[arg(long = "newton-fixed-iterations")]
    newton_fixed_iterations: Option<usize>,
    /// Initial per-session rate ([newton] seed_rate)
    #[arg(long = "newton-seed-rate")]
    newton_seed_rate: Option<f64>,
    /// Diminishing step numerator ([subgradient] a)
    #[arg(long = "subgradient-a")]
    subgradient_a: Option<f64>,
    /// Diminishing step offset ([subgradient] b)
    #[arg(long = "subgradient-b")]
    subgradient_b: Option<f64>,
    /// Constant step size override ([subgradient] constant_step)
    #[arg(long = "subgradient-constant-step")]
    subgradient_constant_step: Option<f64>,
    /// Subgradient iteration cap ([subgradient] max_iters)
    #[arg(long = "subgradient-max-iters")]
    subgradient_max_iters: Option<usize>,
    /// Best-dual stall window ([subgradient] window)
    #[arg(long = "subgradient-window")]
    subgradient_window: Option<usize>,
    /// Stall threshold on the best dual ([subgradient] improvement_tol)
    #[arg(long = "subgradient-improvement-tol")]
    subgradient_improvement_tol: Option<f64>,
    /// Rate box as a multiple of max capacity ([subgradient] s_max_factor)
    #[arg(long = "subgradient-s-max-factor")]
    subgradient_s_max_factor: Option<f64>,
}

impl ConfigFlags {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            input: self.input.as_ref().map(|p| p.display().to_string()),
            solver: self.solver.clone(),
            mode: self.mode.clone(),
            out_dir: self.out_dir.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
            generator: self.generator.section(),
            ..Overrides::default()
        };
        o.barrier.t = self.barrier_t;
        o.barrier.mu = self.barrier_mu;
        o.barrier.gap_tol = self.barrier_gap_tol;
        o.split.alpha = self.split_alpha;
        o.split.inner_tol = self.split_inner_tol;
        o.split.max_inner = self.split_max_inner;
        o.newton.sigma = self.newton_sigma;
        o.newton.beta = self.newton_beta;
        o.newton.boundary_frac = self.newton_boundary_frac;
        o.newton.full_step_threshold = self.newton_full_step_threshold;
        o.newton.decrement_tol = self.newton_decrement_tol;
        o.newton.max_outer = self.newton_max_outer;
        o.newton.fixed_iterations = self.newton_fixed_iterations;
        o.newton.seed_rate = self.newton_seed_rate;
        o.subgradient.a = self.subgradient_a;
        o.subgradient.b = self.subgradient_b;
        o.subgradient.constant_step = self.subgradient_constant_step;
        o.subgradient.max_iters = self.subgradient_max_iters;
        o.subgradient.window = self.subgradient_window;
        o.subgradient.improvement_tol = self.subgradient_improvement_tol;
        o.subgradient.s_max_factor = self.subgradient_s_max_factor;
        o
    }

    fn resolve(&self) -> Result<Resolved, Failure> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Failure::Input(format!("cannot read {}: {e}", path.display()))
                })?;
                runcfg::parse_file(&text).map_err(Failure::Input)?
            }
            None => FileConfig::default(),
        };
        runcfg::resolve(file, self.overrides()).map_err(Failure::Input)
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "mrfc",
    version,
    about = "Joint multi-path routing and flow control on capacitated networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write random network instance files (deterministic per seed)
    Generate(GenerateArgs),
    /// Solve an instance and write trace CSVs and solution summaries
    Solve(SolveArgs),
    /// Run the self-check suite on an instance and report PASS/FAIL lines
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Run-configuration TOML ([generator] section and seed are used)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorFlags,
    /// First seed (config key: seed)
    #[arg(long)]
    seed: Option<u64>,
    /// How many instances to write, at consecutive seeds
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output file (single instance) or directory (count > 1)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: ConfigFlags,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: ConfigFlags,
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

/// Writes through a temp file and rename so a crash cannot leave a partial
/// file under the final name.
fn write_atomic(path: &Path, content: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| {
                Failure::Input(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| Failure::Input(format!("cannot move {} into place: {e}", path.display())))
}

fn write_all(outputs: &[(PathBuf, String)]) -> Result<(), Failure> {
    for (path, content) in outputs {
        write_atomic(path, content)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load_instance(resolved: &Resolved) -> Result<(Network, Vec<Session>), Failure> {
    match &resolved.source {
        InstanceSource::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {path}: {e}")))?;
            netfile::parse(&text).map_err(Failure::Input)
        }
        InstanceSource::Generator(params) => {
            gen::generate(params, resolved.seed).map_err(|e| Failure::Input(e.to_string()))
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    if args.count == 0 {
        return Err(Failure::Input("count must be at least 1".to_string()));
    }
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            runcfg::parse_file(&text).map_err(Failure::Input)?
        }
        None => FileConfig::default(),
    };
    let params = runcfg::resolve_generator(file.generator.as_ref(), &args.generator.section())
        .unwrap_or_default();
    let first_seed = args.seed.or(file.seed).unwrap_or(0);

    // Generate every instance before writing anything, so invalid parameters
    // or an impossible geometry leave no partial batch behind.
    let mut outputs = Vec::with_capacity(args.count);
    for k in 0..args.count {
        let seed = first_seed + k as u64;
        let (net, sessions) =
            gen::generate(&params, seed).map_err(|e| Failure::Input(e.to_string()))?;
        let path = if args.count == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("net-{seed}.toml"))
        };
        outputs.push((path, netfile::to_toml(&net, &sessions)));
    }
    write_all(&outputs)
}

fn newton_outputs(
    net: &Network,
    sessions: &[Session],
    solution: &Solution,
    trace_csv: String,
    out_dir: &Path,
) -> Vec<(PathBuf, String)> {
    vec![
        (out_dir.join("newton-trace.csv"), trace_csv),
        (out_dir.join("newton-solution.txt"), trace::solution_text(net, sessions, solution)),
    ]
}

fn subgradient_outputs(
    sessions: &[Session],
    solution: &SubgradSolution,
    trace_csv: String,
    out_dir: &Path,
) -> Vec<(PathBuf, String)> {
    vec![
        (out_dir.join("subgradient-trace.csv"), trace_csv),
        (
            out_dir.join("subgradient-solution.txt"),
            trace::subgradient_text(sessions, solution),
        ),
    ]
}

fn comparison_text(newton: &Solution, sub: &SubgradSolution) -> String {
    let ratio = sub.iterations as f64 / newton.iterations.max(1) as f64;
    let rel = (newton.utility - sub.recovered_utility).abs() / newton.utility.abs().max(1e-12);
    let mut out = String::from("schema mrfc-comparison-v1\n");
    out.push_str(&format!("newton_stages {}\n", newton.stages));
    out.push_str(&format!("newton_iterations {}\n", newton.iterations));
    out.push_str(&format!("subgradient_iterations {}\n", sub.iterations));
    out.push_str(&format!("iteration_ratio {}\n", fmt_f(ratio)));
    out.push_str(&format!("newton_utility {}\n", fmt_f(newton.utility)));
    out.push_str(&format!("subgradient_utility {}\n", fmt_f(sub.recovered_utility)));
    out.push_str(&format!("relative_utility_difference {}\n", fmt_f(rel)));
    out
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let resolved = args.common.resolve()?;
    let (net, sessions) = load_instance(&resolved)?;
    let out_dir = PathBuf::from(&resolved.out_dir);

    // Run everything first; write only when every requested solver finished.
    let newton = match resolved.solver {
        SolverChoice::Newton | SolverChoice::Both => Some(
            barrier_solve(&net, &sessions, &resolved.solver_config).map_err(classify_solve)?,
        ),
        SolverChoice::Subgradient => None,
    };
    let sub = match resolved.solver {
        SolverChoice::Subgradient | SolverChoice::Both => Some(
            subgradient_solve(&net, &sessions, &resolved.subgrad_config)
                .map_err(|e| Failure::Input(e.to_string()))?,
        ),
        SolverChoice::Newton => None,
    };

    let mut outputs = Vec::new();
    if let Some((solution, trace_rows)) = &newton {
        println!(
            "newton: {} stages, {} iterations, utility {}, decrement {}, t {}",
            solution.stages,
            solution.iterations,
            fmt_f(solution.utility),
            fmt_f(solution.decrement),
            fmt_f(solution.t)
        );
        outputs.extend(newton_outputs(
            &net,
            &sessions,
            solution,
            trace::newton_trace_csv(trace_rows),
            &out_dir,
        ));
    }
    if let Some((solution, trace_rows)) = &sub {
        println!(
            "subgradient: {} iterations, best dual {}, recovered utility {}",
            solution.iterations,
            fmt_f(solution.best_dual),
            fmt_f(solution.recovered_utility)
        );
        outputs.extend(subgradient_outputs(
            &sessions,
            solution,
            trace::subgradient_trace_csv(trace_rows),
            &out_dir,
        ));
    }
    if let (Some((n, _)), Some((s, _))) = (&newton, &sub) {
        let text = comparison_text(n, s);
        print!("{text}");
        outputs.push((out_dir.join("comparison.txt"), text));
    }
    write_all(&outputs)
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let resolved = args.common.resolve()?;
    let (net, sessions) = load_instance(&resolved)?;
    let instance_checks = validate::run_instance(&net, &sessions).map_err(|e| match e {
        SolveError::Input(_) | SolveError::Infeasible { .. } => Failure::Input(e.to_string()),
        other => Failure::Internal(other.to_string()),
    })?;
    let mut results = instance_checks;
    results.extend(validate::run_all());
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(Failure::Internal(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))))
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Generate(args) => cmd_generate(args),
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Validate(args) => cmd_validate(args),
    };
    if let Err(failure) = result {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.code());
    }
}
