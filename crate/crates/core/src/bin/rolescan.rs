//! Command-line front end.
//!
//! Exit codes: 0 for a clean result, 1 when `analyze` reports findings,
//! 2 for any error (I/O, parse, validation, bad parameters).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use rolescan::generator::{b_scale_params, generate_factory, mockup, serialize_planted, GenParams, Generated};
use rolescan::ingest::{parse_factory, parse_policy, serialize_factory, serialize_policy};
use rolescan::model::{validate_factory, Severity};
use rolescan::pipeline::{analyze_factory, AnalysisOptions, PipelineError};
use rolescan::report::{emit_html, emit_json};
use rolescan::{index_factory, Factory};

#[derive(Parser)]
#[command(name = "rolescan", version, about = "Role-based access control analyzer for application factories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a factory file (and optionally a policy) for structural problems.
    Validate {
        /// Factory JSON file.
        factory: PathBuf,
        /// Policy JSON file to check against the factory.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Analyze a factory against a policy and write a findings report.
    Analyze {
        /// Factory JSON file.
        #[arg(long)]
        factory: PathBuf,
        /// Policy JSON file.
        #[arg(long)]
        policy: PathBuf,
        /// Report JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a self-contained HTML report here.
        #[arg(long)]
        html: Option<PathBuf>,
        /// Largest condition (in distinct atoms) enumerated exactly.
        #[arg(long, default_value_t = 16)]
        max_atoms: usize,
        /// Cap on recorded call paths per candidate.
        #[arg(long, default_value_t = 1000)]
        max_paths: usize,
        /// Cap on memoized traversal states per candidate.
        #[arg(long, default_value_t = 100_000)]
        max_summary_states: usize,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
        /// Stamp the report with the current UTC time.
        #[arg(long)]
        timestamp: bool,
        /// Also dump the call graph as JSON here.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Generate a synthetic factory, policy, and planted-flaw manifest.
    Gen {
        /// Named parameter set; individual flags override its fields.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        modules: Option<usize>,
        #[arg(long)]
        screens_per_module: Option<usize>,
        #[arg(long)]
        actions_per_module: Option<usize>,
        #[arg(long)]
        entities: Option<usize>,
        #[arg(long)]
        roles: Option<usize>,
        #[arg(long)]
        cfg_nodes_mean: Option<usize>,
        #[arg(long)]
        guard_probability: Option<f64>,
        #[arg(long)]
        access_probability: Option<f64>,
        #[arg(long)]
        grant_probability: Option<f64>,
        #[arg(long)]
        plant_flaws: Option<usize>,
        /// Directory receiving factory.json, policy.json, and planted.json.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// The bundled two-module law-firm example with eight planted flaws.
    #[value(name = "mockup")]
    Mockup,
    /// Benchmark-sized factory: 691 modules, 321 roles, ~74k graph nodes.
    #[value(name = "B-scale", alias = "b-scale")]
    BScale,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Validate { factory, policy } => cmd_validate(&factory, policy.as_deref()),
        Command::Analyze {
            factory,
            policy,
            out,
            html,
            max_atoms,
            max_paths,
            max_summary_states,
            jobs,
            timestamp,
            dump_graph,
        } => cmd_analyze(AnalyzeArgs {
            factory,
            policy,
            out,
            html,
            max_atoms,
            max_paths,
            max_summary_states,
            jobs,
            timestamp,
            dump_graph,
        }),
        Command::Gen {
            preset,
            seed,
            modules,
            screens_per_module,
            actions_per_module,
            entities,
            roles,
            cfg_nodes_mean,
            guard_probability,
            access_probability,
            grant_probability,
            plant_flaws,
            out,
        } => {
            let overrides = Overrides {
                seed,
                modules,
                screens_per_module,
                actions_per_module,
                entities,
                roles,
                cfg_nodes_mean,
                guard_probability,
                access_probability,
                grant_probability,
                plant_flaws,
            };
            cmd_gen(preset, &overrides, &out)
        }
    }
}

fn read_factory(path: &Path) -> anyhow::Result<Factory> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let factory =
        parse_factory(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(factory)
}

fn cmd_validate(factory_path: &Path, policy_path: Option<&Path>) -> anyhow::Result<u8> {
    let factory = read_factory(factory_path)?;
    let violations = validate_factory(&factory);
    for violation in &violations {
        println!("{violation}");
    }
    let mut invalid = violations.iter().any(|v| v.severity == Severity::Error);

    if let Some(path) = policy_path {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let policy =
            parse_policy(&text, &factory).with_context(|| format!("parsing {}", path.display()))?;
        if !invalid {
            let index = index_factory(&factory).context("indexing factory")?;
            if let Err(err) = index.compile_policy(&policy) {
                println!("error: {err}");
                invalid = true;
            }
        }
    }

    Ok(if invalid { 2 } else { 0 })
}

struct AnalyzeArgs {
    factory: PathBuf,
    policy: PathBuf,
    out: PathBuf,
    html: Option<PathBuf>,
    max_atoms: usize,
    max_paths: usize,
    max_summary_states: usize,
    jobs: Option<usize>,
    timestamp: bool,
    dump_graph: Option<PathBuf>,
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<u8> {
    let start = Instant::now();
    let factory = read_factory(&args.factory)?;
    let policy_text = fs::read_to_string(&args.policy)
        .with_context(|| format!("reading {}", args.policy.display()))?;
    let policy = parse_policy(&policy_text, &factory)
        .with_context(|| format!("parsing {}", args.policy.display()))?;

    let options = AnalysisOptions {
        max_atoms: args.max_atoms,
        max_paths: args.max_paths,
        max_summary_states: args.max_summary_states,
        jobs: args.jobs.unwrap_or_else(default_jobs),
        generated_at: args.timestamp.then(now_utc_rfc3339),
    };

    let run = match analyze_factory(&factory, &policy, &options) {
        Ok(run) => run,
        Err(PipelineError::Invalid(violations)) => {
            for violation in &violations {
                eprintln!("{violation}");
            }
            anyhow::bail!("factory failed validation");
        }
        Err(err) => return Err(err.into()),
    };
    for warning in &run.warnings {
        eprintln!("{warning}");
    }

    fs::write(&args.out, emit_json(&run.report))
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.html {
        fs::write(path, emit_html(&run.report))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.dump_graph {
        fs::write(path, run.graph.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let screens: usize = factory.modules.iter().map(|m| m.screens.len()).sum();
    let findings = run.report.summary.total_findings;
    println!(
        "modules={} screens={} findings={} elapsed_ms={}",
        factory.modules.len(),
        screens,
        findings,
        start.elapsed().as_millis()
    );
    Ok(if findings > 0 { 1 } else { 0 })
}

struct Overrides {
    seed: Option<u64>,
    modules: Option<usize>,
    screens_per_module: Option<usize>,
    actions_per_module: Option<usize>,
    entities: Option<usize>,
    roles: Option<usize>,
    cfg_nodes_mean: Option<usize>,
    guard_probability: Option<f64>,
    access_probability: Option<f64>,
    grant_probability: Option<f64>,
    plant_flaws: Option<usize>,
}

impl Overrides {
    fn any(&self) -> bool {
        self.seed.is_some()
            || self.modules.is_some()
            || self.screens_per_module.is_some()
            || self.actions_per_module.is_some()
            || self.entities.is_some()
            || self.roles.is_some()
            || self.cfg_nodes_mean.is_some()
            || self.guard_probability.is_some()
            || self.access_probability.is_some()
            || self.grant_probability.is_some()
            || self.plant_flaws.is_some()
    }

    fn apply(&self, mut params: GenParams) -> GenParams {
        if let Some(v) = self.seed {
            params.seed = v;
        }
        if let Some(v) = self.modules {
            params.modules = v;
        }
        if let Some(v) = self.screens_per_module {
            params.screens_per_module = v;
        }
        if let Some(v) = self.actions_per_module {
            params.actions_per_module = v;
        }
        if let Some(v) = self.entities {
            params.entities = v;
        }
        if let Some(v) = self.roles {
            params.roles = v;
        }
        if let Some(v) = self.cfg_nodes_mean {
            params.cfg_nodes_mean = v;
        }
        if let Some(v) = self.guard_probability {
            params.guard_probability = v;
        }
        if let Some(v) = self.access_probability {
            params.access_probability = v;
        }
        if let Some(v) = self.grant_probability {
            params.grant_probability = v;
        }
        if let Some(v) = self.plant_flaws {
            params.plant_flaws = v;
        }
        params
    }
}

fn cmd_gen(preset: Option<Preset>, overrides: &Overrides, out: &Path) -> anyhow::Result<u8> {
    let generated: Generated = match preset {
        Some(Preset::Mockup) => {
            if overrides.any() {
                anyhow::bail!("--preset mockup is a fixed blueprint and takes no parameter flags");
            }
            mockup()
        }
        Some(Preset::BScale) => generate_factory(&overrides.apply(b_scale_params()))?,
        None => generate_factory(&overrides.apply(GenParams::default()))?,
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, text) in [
        ("factory.json", serialize_factory(&generated.factory)),
        ("policy.json", serialize_policy(&generated.policy)),
        ("planted.json", serialize_planted(&generated.planted)),
    ] {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn now_utc_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .replace_nanosecond(0)
        .expect("zero nanoseconds is valid")
        .format(&time::format_description::well_known::Rfc3339)
        .expect("UTC formats as RFC 3339")
}
