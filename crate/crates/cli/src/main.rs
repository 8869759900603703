use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use green_constraints::bench::{render_table, run_bench};
use green_constraints::engine::ConstraintLibrary;
use green_constraints::explain::ReportFormat;
use green_constraints::kb::KnowledgeBase;
use green_constraints::pipeline::{render, run_generate, write_artifacts, OutputFormat, PipelineConfig, RunManifest};
use green_constraints::scenario::{run_scenario, NAMES};
use green_constraints::{Error, Result};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PIPELINE: u8 = 2;

/// Learns green-aware deployment constraints (avoidNode, affinity) from
/// energy, traffic and carbon-intensity monitoring data.
#[derive(Debug, Parser)]
#[command(name = "green-constraints", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline on monitoring data and update the knowledge base.
    Generate(GenerateArgs),
    /// Replay a built-in scenario and compare against its golden weights.
    Scenario {
        /// s1..s5, or `all`.
        name: String,
        /// Also write the scenario's constraints and report here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        formats: Formats,
    },
    /// Inspect or clear a knowledge base directory.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
    /// Time generation on synthetic instances and sweep the quantile level.
    Bench {
        /// Comma-separated SERVICESxNODES pairs.
        #[arg(long, default_value = "1000x5,10x1000,100x100", value_delimiter = ',', value_parser = parse_sizes)]
        sizes: Vec<(usize, usize)>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Omit wall-clock columns, leaving a reproducible table.
        #[arg(long)]
        no_timings: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Subcommand)]
enum KbAction {
    /// Print the iteration counter and stored constraints.
    Show {
        #[arg(long)]
        kb_dir: PathBuf,
    },
    /// Delete the knowledge base files.
    Reset {
        #[arg(long)]
        kb_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// YAML run manifest. Flags given alongside it take precedence.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Application description (YAML or JSON).
    #[arg(long)]
    app: Option<PathBuf>,
    /// Infrastructure description (YAML or JSON).
    #[arg(long)]
    infra: Option<PathBuf>,
    /// Energy samples per service flavour (CSV).
    #[arg(long)]
    energy_metrics: Option<PathBuf>,
    /// Request volume and size per link (CSV).
    #[arg(long)]
    traffic_metrics: Option<PathBuf>,
    /// Carbon intensity per node (CSV).
    #[arg(long)]
    carbon: Option<PathBuf>,
    /// Knowledge base directory, created on first run.
    #[arg(long)]
    kb_dir: Option<PathBuf>,
    /// Directory for constraints and the report.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Accepted for manifest compatibility; generation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    formats: Formats,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Quantile level of the impact threshold, in (0, 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Network energy per transferred GB.
    #[arg(long)]
    k_kwh_per_gb: Option<f64>,
    /// Trailing window for carbon averaging, in hours.
    #[arg(long)]
    carbon_window_hours: Option<f64>,
    /// Impact below which weights are damped.
    #[arg(long)]
    min_impact_f: Option<f64>,
    /// Memory decay per run without regeneration.
    #[arg(long)]
    decay_delta: Option<f64>,
    /// Memory weight under which a constraint is forgotten.
    #[arg(long)]
    mu_drop: Option<f64>,
    /// Final weight under which a constraint is not emitted.
    #[arg(long)]
    drop_weight: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.alpha, self.alpha);
        set(&mut c.k_kwh_per_gb, self.k_kwh_per_gb);
        set(&mut c.carbon_window_hours, self.carbon_window_hours);
        set(&mut c.min_impact_f, self.min_impact_f);
        set(&mut c.decay_delta, self.decay_delta);
        set(&mut c.mu_drop, self.mu_drop);
        set(&mut c.drop_weight, self.drop_weight);
        c
    }
}

#[derive(Debug, Args)]
struct Formats {
    /// prolog, structured or both.
    #[arg(long)]
    output_format: Option<OutputFormat>,
    /// text or md.
    #[arg(long)]
    report_format: Option<ReportFormat>,
}

fn parse_sizes(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected SERVICESxNODES, got `{s}`"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((n(a)?, n(b)?))
}

fn manifest_from(args: &GenerateArgs) -> Result<RunManifest> {
    let missing = |flag: &str| Error::Config(format!("--{flag} is required (or give it in --manifest)"));
    let mut m = match &args.manifest {
        Some(path) => RunManifest::from_path(path)?,
        None => RunManifest {
            app: args.app.clone().ok_or_else(|| missing("app"))?,
            infra: args.infra.clone().ok_or_else(|| missing("infra"))?,
            energy_metrics: args.energy_metrics.clone().ok_or_else(|| missing("energy-metrics"))?,
            traffic_metrics: None,
            carbon: None,
            kb_dir: args.kb_dir.clone().ok_or_else(|| missing("kb-dir"))?,
            out_dir: args.out_dir.clone().ok_or_else(|| missing("out-dir"))?,
            config: PipelineConfig::default(),
            output_format: OutputFormat::default(),
            report_format: ReportFormat::default(),
            seed: None,
        },
    };
    let pick = |flag: &Option<PathBuf>, slot: &mut PathBuf| {
        if let Some(p) = flag {
            *slot = p.clone();
        }
    };
    pick(&args.app, &mut m.app);
    pick(&args.infra, &mut m.infra);
    pick(&args.energy_metrics, &mut m.energy_metrics);
    pick(&args.kb_dir, &mut m.kb_dir);
    pick(&args.out_dir, &mut m.out_dir);
    if args.traffic_metrics.is_some() {
        m.traffic_metrics = args.traffic_metrics.clone();
    }
    if args.carbon.is_some() {
        m.carbon = args.carbon.clone();
    }
    m.seed = args.seed.or(m.seed);
    m.config = args.overrides.apply(m.config);
    m.output_format = args.formats.output_format.unwrap_or(m.output_format);
    m.report_format = args.formats.report_format.unwrap_or(m.report_format);
    Ok(m)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let manifest = manifest_from(args)?;
    let report = run_generate(&manifest, &ConstraintLibrary::standard(), None)?;
    for w in &report.outcome.warnings {
        eprintln!("warning: {w}");
    }
    let g = &report.outcome.generation;
    println!(
        "evaluated {} candidates, threshold {:.3}, emitted {}, {} after ranking (knowledge base iteration {})",
        g.evaluated,
        g.threshold,
        g.constraints.len(),
        report.outcome.ranked.len(),
        report.iteration
    );
    for path in &report.written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn scenario(name: &str, out_dir: Option<&PathBuf>, overrides: &Overrides, formats: &Formats) -> Result<bool> {
    let names: Vec<&str> = if name == "all" { NAMES.to_vec() } else { vec![name] };
    let config = overrides.apply(PipelineConfig::default());
    let mut all_passed = true;
    for n in names {
        let result = run_scenario(n, &config)?;
        let verdict = if result.passed() { "PASS" } else { "FAIL" };
        println!("{n}: {verdict} ({:.1} ms)", result.elapsed.as_secs_f64() * 1000.0);
        print!("{}", result.summary());
        all_passed &= result.passed();
        if let Some(dir) = out_dir {
            let report_format = formats.report_format.unwrap_or_default();
            let artifacts = render(&result.outcome, report_format)?;
            let dir = if name == "all" { dir.join(n) } else { dir.clone() };
            write_artifacts(&artifacts, &dir, formats.output_format.unwrap_or_default(), report_format)?;
        }
    }
    Ok(all_passed)
}

fn kb(action: &KbAction) -> Result<()> {
    match action {
        KbAction::Show { kb_dir } => {
            let kb = KnowledgeBase::load(kb_dir)?;
            println!("iteration {}", kb.iteration);
            println!(
                "{} flavour profiles, {} link profiles, {} node profiles, {} constraints",
                kb.sk.len(),
                kb.ik.len(),
                kb.nk.len(),
                kb.ck.len()
            );
            for (id, c) in &kb.ck {
                println!("  {id}  em={:.3}  mu={:.4}  generated_at={}", c.em, c.mu, c.generated_at.to_rfc3339());
            }
        }
        KbAction::Reset { kb_dir } => {
            KnowledgeBase::reset(kb_dir)?;
            println!("cleared {}", kb_dir.display());
        }
    }
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_PIPELINE })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => generate(args).map(|_| true),
        Command::Scenario { name, out_dir, overrides, formats } => scenario(name, out_dir.as_ref(), overrides, formats),
        Command::Kb { action } => kb(action).map(|_| true),
        Command::Bench { sizes, seed, no_timings, overrides } => {
            let config = overrides.apply(PipelineConfig::default());
            config.validate().and_then(|_| run_bench(sizes, *seed, &config)).map(|rows| {
                print!("{}", render_table(&rows, !no_timings));
                true
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_PIPELINE),
        Err(e) => exit_for(&e),
    }
}
