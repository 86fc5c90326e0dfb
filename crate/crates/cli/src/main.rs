use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rcxforge::config::{Overrides, PipelineConfig};
use rcxforge::cutoff::Cutoff;
use rcxforge::harness::ReproVerdict;
use rcxforge::pipeline::{read_jsonl, Pipeline, PipelineError, Stage};
use rcxforge::trajectory::{detect_loops, pass_at_k_table, traj_stats, AttemptResult, TrajectoryRecord};

/// Repository-centric task instance generation.
#[derive(Parser)]
#[command(name = "rcxforge", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline configuration file (TOML).
    #[arg(short, long, default_value = "rcxforge.toml")]
    config: PathBuf,
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Revision to treat as head.
    #[arg(long)]
    head: Option<String>,
    /// Knowledge cutoff date, YYYY-MM-DD (inclusive).
    #[arg(long)]
    cutoff: Option<Cutoff>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    max_parallel: Option<usize>,
    /// Root for ephemeral checkouts.
    #[arg(long)]
    workroot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mine commits, pull requests and commit heat.
    Mine(ConfigArgs),
    /// Sample design-analysis targets.
    SampleDesign(ConfigArgs),
    /// Enumerate, classify and select fill-in-the-middle holes.
    SampleFim(ConfigArgs),
    /// Build candidate bugs by reverting historical pull requests.
    MirrorBugs(ConfigArgs),
    /// Validate candidate bugs by running their tests.
    Validate(ConfigArgs),
    /// Build alignment tasks, or judge a reproduction-test candidate.
    MakeAlign {
        #[command(flatten)]
        config: ConfigArgs,
        /// Unified diff adding reproduction tests.
        #[arg(long, requires = "bug")]
        check_candidate: Option<PathBuf>,
        /// Bug the candidate targets.
        #[arg(long, requires = "check_candidate")]
        bug: Option<String>,
    },
    /// Assemble stage outputs into the split dataset.
    Emit(ConfigArgs),
    /// Run every stage in order.
    Pipeline(ConfigArgs),
    /// Strict-versus-relaxed filter yield over mined pull requests.
    YieldReport {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Trajectory statistics, loop detection and pass@k.
    Stats {
        /// JSON Lines of trajectory records.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// JSON Lines of attempt results ({"instance_id", "success"}).
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<u64>,
        #[arg(long, default_value_t = 4)]
        max_period: usize,
        #[arg(long, default_value_t = 3)]
        min_reps: usize,
        /// Compare actions with whitespace collapsed.
        #[arg(long)]
        normalize_ws: bool,
        #[arg(long)]
        json: bool,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn pipeline(args: &ConfigArgs) -> Result<Pipeline, Failure> {
    let overrides = Overrides {
        repo: args.repo.clone(),
        head: args.head.clone(),
        cutoff: args.cutoff,
        seed: args.seed,
        output_dir: args.output.clone(),
        max_parallel: args.max_parallel,
        workroot: args.workroot.clone(),
    };
    let config = PipelineConfig::load_with(&args.config, &overrides).map_err(PipelineError::from)?;
    Ok(Pipeline::new(config))
}

fn stage(args: &ConfigArgs, stage: Stage) -> Result<(), Failure> {
    let p = pipeline(args)?;
    match stage {
        Stage::Mine => {
            let s = p.mine()?;
            println!("mined {} commits and {} pull requests at {}", s.commits, s.pulls, s.head);
        }
        Stage::SampleDesign => println!("{} design targets", p.sample_design()?.len()),
        Stage::SampleFim => println!("{} fim tasks", p.sample_fim()?.len()),
        Stage::MirrorBugs => println!("{} candidate bugs", p.mirror_bugs()?.len()),
        Stage::Validate => {
            let bugs = p.validate()?;
            let ok = bugs.iter().filter(|b| b.status == rcxforge::mirror::BugStatus::Validated).count();
            println!("{ok} of {} bugs validated", bugs.len());
        }
        Stage::MakeAlign => println!("{} alignment tasks", p.make_align()?.len()),
        Stage::Emit => print_manifest(&p.emit()?, &p.dataset_dir()),
    }
    Ok(())
}

fn print_manifest(m: &rcxforge::forge::Manifest, dir: &Path) {
    println!("dataset written to {}", dir.display());
    for (unit, c) in &m.counts {
        println!("  {:<7} train {:>5}  eval {:>5}", unit.as_str(), c.train, c.eval);
    }
    println!("  {:<7} train {:>5}  eval {:>5}", "total", m.totals.train, m.totals.eval);
}

fn stats(
    trajectories: Option<&Path>,
    results: Option<&Path>,
    ks: &[u64],
    max_period: usize,
    min_reps: usize,
    normalize_ws: bool,
    json: bool,
) -> Result<(), Failure> {
    if trajectories.is_none() && results.is_none() {
        return Err(anyhow!("nothing to do: pass --trajectories and/or --results").into());
    }
    let mut report = serde_json::Map::new();
    let mut text = String::new();
    if let Some(path) = trajectories {
        let records: Vec<TrajectoryRecord> = read_jsonl(path)?;
        let s = traj_stats(&records).with_context(|| path.display().to_string())?;
        text.push_str(&s.render());
        let loops: Vec<serde_json::Value> = records
            .iter()
            .filter_map(|r| {
                let l = detect_loops(r, max_period, min_reps, normalize_ws);
                l.detected.then(|| serde_json::json!({"instance_id": r.instance_id, "loop": l}))
            })
            .collect();
        text.push_str(&format!("looping trajectories: {} of {}\n", loops.len(), records.len()));
        report.insert("stats".into(), serde_json::to_value(&s).expect("serializable"));
        report.insert("loops".into(), loops.into());
    }
    if let Some(path) = results {
        let attempts: Vec<AttemptResult> = read_jsonl(path)?;
        let table = pass_at_k_table(&attempts, ks);
        for row in &table {
            text.push_str(&format!("pass@{}: {:.4} over {} instances\n", row.k, row.value, row.instances));
        }
        report.insert("pass_at_k".into(), serde_json::to_value(&table).expect("serializable"));
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        print!("{text}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mine(a) => stage(&a, Stage::Mine),
        Command::SampleDesign(a) => stage(&a, Stage::SampleDesign),
        Command::SampleFim(a) => stage(&a, Stage::SampleFim),
        Command::MirrorBugs(a) => stage(&a, Stage::MirrorBugs),
        Command::Validate(a) => stage(&a, Stage::Validate),
        Command::Emit(a) => stage(&a, Stage::Emit),
        Command::MakeAlign {
            config,
            check_candidate: Some(patch),
            bug: Some(bug),
        } => {
            let p = pipeline(&config)?;
            let text = std::fs::read_to_string(&patch).with_context(|| patch.display().to_string())?;
            let report = p.check_candidate(&bug, &text)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            match report.verdict {
                ReproVerdict::Accepted { .. } => Ok(()),
                ReproVerdict::Rejected { reason } => Err(anyhow!("candidate rejected: {reason:?}").into()),
            }
        }
        Command::MakeAlign { config, .. } => stage(&config, Stage::MakeAlign),
        Command::Pipeline(a) => {
            let p = pipeline(&a)?;
            let m = p.run_all()?;
            print_manifest(&m, &p.dataset_dir());
            Ok(())
        }
        Command::YieldReport { config, json } => {
            let r = pipeline(&config)?.yield_report()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
            } else {
                println!("strict {}  relaxed {}  ratio {:.2}", r.strict_count, r.relaxed_count, r.ratio);
            }
            Ok(())
        }
        Command::Stats {
            trajectories,
            results,
            k,
            max_period,
            min_reps,
            normalize_ws,
            json,
        } => stats(trajectories.as_deref(), results.as_deref(), &k, max_period, min_reps, normalize_ws, json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
