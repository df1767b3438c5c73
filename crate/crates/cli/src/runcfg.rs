//! Run configuration: a strict TOML file whose keys the command-line flags
//! mirror one-to-one (`[barrier] mu` ⇔ `--barrier-mu`, `[generator] nodes` ⇔
//! `--generator-nodes`, …). Resolution order is flag over file over default,
//! and the merged configuration is fully validated before any computation —
//! a bad knob (for instance a splitting weight α ≤ ½) is rejected up front.

use mrfc::gen::GenParams;
use mrfc::objective::BarrierConfig;
use mrfc::solver::{ExecutionMode, SolverConfig};
use mrfc::splitting::SplitConfig;
use mrfc::subgradient::SubgradConfig;
use serde::Deserialize;

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub input: Option<String>,
    pub solver: Option<String>,
    pub mode: Option<String>,
    pub out_dir: Option<String>,
    pub seed: Option<u64>,
    pub barrier: BarrierSection,
    pub split: SplitSection,
    pub newton: NewtonSection,
    pub subgradient: SubgradSection,
    pub generator: Option<GeneratorSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSection {
    pub t: Option<f64>,
    pub mu: Option<f64>,
    pub gap_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub alpha: Option<f64>,
    pub inner_tol: Option<f64>,
    pub max_inner: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSection {
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub boundary_frac: Option<f64>,
    pub full_step_threshold: Option<f64>,
    pub decrement_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub fixed_iterations: Option<usize>,
    pub seed_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubgradSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub constant_step: Option<f64>,
    pub max_iters: Option<usize>,
    pub window: Option<usize>,
    pub improvement_tol: Option<f64>,
    pub s_max_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub nodes: Option<usize>,
    pub sessions: Option<usize>,
    pub region: Option<f64>,
    pub range: Option<f64>,
    pub power: Option<f64>,
    pub path_loss: Option<f64>,
    pub noise: Option<f64>,
}

impl GeneratorSection {
    fn is_empty(&self) -> bool {
        self.nodes.is_none()
            && self.sessions.is_none()
            && self.region.is_none()
            && self.range.is_none()
            && self.power.is_none()
            && self.path_loss.is_none()
            && self.noise.is_none()
    }
}

pub fn parse_file(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| format!("run config: {e}"))
}

// ---------------------------------------------------------------------------
// Flag overrides (populated by the clap layer; same keys as the file)
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct Overrides {
    pub input: Option<String>,
    pub solver: Option<String>,
    pub mode: Option<String>,
    pub out_dir: Option<String>,
    pub seed: Option<u64>,
    pub barrier: BarrierSection,
    pub split: SplitSection,
    pub newton: NewtonSection,
    pub subgradient: SubgradSection,
    pub generator: GeneratorSection,
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Newton,
    Subgradient,
    Both,
}

#[derive(Debug, Clone)]
pub enum InstanceSource {
    File(String),
    Generator(GenParams),
}

#[derive(Debug)]
pub struct Resolved {
    pub source: InstanceSource,
    pub solver: SolverChoice,
    pub out_dir: String,
    pub seed: u64,
    pub solver_config: SolverConfig,
    pub subgrad_config: SubgradConfig,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn parse_solver(s: &str) -> Result<SolverChoice, String> {
    match s {
        "newton" => Ok(SolverChoice::Newton),
        "subgradient" => Ok(SolverChoice::Subgradient),
        "both" => Ok(SolverChoice::Both),
        other => Err(format!(
            "solver must be \"newton\", \"subgradient\", or \"both\", got {other:?}"
        )),
    }
}

fn parse_mode(s: &str) -> Result<ExecutionMode, String> {
    match s {
        "centralized" => Ok(ExecutionMode::Centralized),
        "distributed" => Ok(ExecutionMode::Distributed),
        other => Err(format!(
            "mode must be \"centralized\" or \"distributed\", got {other:?}"
        )),
    }
}

/// Builds generator parameters from the file section and flag overrides;
/// `Some` only when either layer mentions the generator at all.
pub fn resolve_generator(
    file: Option<&GeneratorSection>,
    flags: &GeneratorSection,
) -> Option<GenParams> {
    if file.is_none() && flags.is_empty() {
        return None;
    }
    let empty = GeneratorSection::default();
    let file = file.unwrap_or(&empty);
    let d = GenParams::default();
    Some(GenParams {
        nodes: pick(flags.nodes, file.nodes, d.nodes),
        sessions: pick(flags.sessions, file.sessions, d.sessions),
        region: pick(flags.region, file.region, d.region),
        range: pick(flags.range, file.range, d.range),
        power: pick(flags.power, file.power, d.power),
        path_loss: pick(flags.path_loss, file.path_loss, d.path_loss),
        noise: pick(flags.noise, file.noise, d.noise),
    })
}

/// Merges flags over file over defaults and validates everything. The
/// returned configuration is the single source of truth for a run.
pub fn resolve(file: FileConfig, flags: Overrides) -> Result<Resolved, String> {
    let solver = parse_solver(&pick(flags.solver, file.solver, "newton".to_string()))?;
    let mode = parse_mode(&pick(flags.mode, file.mode, "centralized".to_string()))?;
    let out_dir = pick(flags.out_dir, file.out_dir, "out".to_string());
    let seed = pick(flags.seed, file.seed, 0);

    let input = flags.input.or(file.input);
    let generator = resolve_generator(file.generator.as_ref(), &flags.generator);
    let source = match (input, generator) {
        (Some(path), None) => InstanceSource::File(path),
        (None, Some(params)) => InstanceSource::Generator(params),
        (Some(_), Some(_)) => {
            return Err(
                "both an input file and generator parameters are configured; \
                 provide exactly one instance source"
                    .to_string(),
            )
        }
        (None, None) => {
            return Err(
                "no instance source: set input = \"net.toml\" (or --input) or \
                 generator parameters ([generator] / --generator-*)"
                    .to_string(),
            )
        }
    };

    let bd = BarrierConfig::default();
    let barrier = BarrierConfig {
        t: pick(flags.barrier.t, file.barrier.t, bd.t),
        mu: pick(flags.barrier.mu, file.barrier.mu, bd.mu),
        gap_tol: pick(flags.barrier.gap_tol, file.barrier.gap_tol, bd.gap_tol),
    };
    let sd = SplitConfig::default();
    let split = SplitConfig {
        alpha: pick(flags.split.alpha, file.split.alpha, sd.alpha),
        inner_tol: pick(flags.split.inner_tol, file.split.inner_tol, sd.inner_tol),
        max_inner: pick(flags.split.max_inner, file.split.max_inner, sd.max_inner),
    };
    let nd = SolverConfig::default();
    let solver_config = SolverConfig {
        barrier,
        split,
        sigma: pick(flags.newton.sigma, file.newton.sigma, nd.sigma),
        beta: pick(flags.newton.beta, file.newton.beta, nd.beta),
        boundary_frac: pick(flags.newton.boundary_frac, file.newton.boundary_frac, nd.boundary_frac),
        full_step_threshold: pick(
            flags.newton.full_step_threshold,
            file.newton.full_step_threshold,
            nd.full_step_threshold,
        ),
        decrement_tol: pick(flags.newton.decrement_tol, file.newton.decrement_tol, nd.decrement_tol),
        max_outer: pick(flags.newton.max_outer, file.newton.max_outer, nd.max_outer),
        fixed_iterations: flags.newton.fixed_iterations.or(file.newton.fixed_iterations),
        mode,
        seed_rate: flags.newton.seed_rate.or(file.newton.seed_rate),
    };
    solver_config.validate().map_err(|e| e.to_string())?;

    let gd = SubgradConfig::default();
    let subgrad_config = SubgradConfig {
        a: pick(flags.subgradient.a, file.subgradient.a, gd.a),
        b: pick(flags.subgradient.b, file.subgradient.b, gd.b),
        constant_step: flags.subgradient.constant_step.or(file.subgradient.constant_step),
        max_iters: pick(flags.subgradient.max_iters, file.subgradient.max_iters, gd.max_iters),
        window: pick(flags.subgradient.window, file.subgradient.window, gd.window),
        improvement_tol: pick(
            flags.subgradient.improvement_tol,
            file.subgradient.improvement_tol,
            gd.improvement_tol,
        ),
        s_max_factor: pick(
            flags.subgradient.s_max_factor,
            file.subgradient.s_max_factor,
            gd.s_max_factor,
        ),
    };
    subgrad_config.validate().map_err(|e| e.to_string())?;

    Ok(Resolved { source, solver, out_dir, seed, solver_config, subgrad_config })
}
