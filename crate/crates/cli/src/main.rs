use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tactic_core::pipeline::{
    cluster_stage, decode_stage, fit_hmm_stage, ingest_stage, stats_stage, Artifact, ClusterConfig,
    HmmConfig,
};
use tactic_core::{
    compare_runs, generate_cohort, run_pipeline, CohortSpec, Error, PipelineConfig, Result,
};

#[derive(Parser)]
#[command(
    name = "tactics",
    version,
    about = "Hidden learning tactics and strategy clusters from trace data"
)]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parent directory for run directories (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the HMM and cluster raw process sequences.
    #[arg(long)]
    benchmark: bool,
}

/// Optional config supplying the hmm / cluster / stats blocks and seed.
#[derive(Args)]
struct StageConfig {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write a content-addressed run directory.
    Run(RunArgs),
    /// Ingest and preprocess the configured input.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select the number of tactics and fit the HMM on a process-code CSV.
    FitHmm {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit exactly this many states instead of selecting.
        #[arg(long)]
        states: Option<usize>,
        #[command(flatten)]
        stage: StageConfig,
    },
    /// Viterbi-decode a process-code CSV into tactics.csv.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster tactic (or process-code) sequences.
    Cluster {
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        stage: StageConfig,
    },
    /// Compare scores across clusters.
    Stats {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Agreement between two runs, or between the tactic and benchmark paths.
    Compare {
        run_a: Option<PathBuf>,
        run_b: Option<PathBuf>,
        /// Run both paths from --config and compare them.
        #[arg(long, requires = "config", conflicts_with_all = ["run_a", "run_b"])]
        benchmark: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comparison output directory (with --benchmark: parent of the runs too).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic cohort with ground truth.
    Synth {
        /// Cohort spec JSON; the bundled default cohort when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_learners: Option<usize>,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Stage blocks from an optional config; defaults otherwise.
fn stage_blocks(stage: &StageConfig) -> Result<(HmmConfig, ClusterConfig, u64)> {
    let (hmm, cluster, seed) = match &stage.config {
        Some(p) => {
            let cfg = PipelineConfig::from_path(p)?;
            (cfg.hmm, cfg.cluster, cfg.seed)
        }
        None => Default::default(),
    };
    Ok((hmm, cluster, stage.seed.unwrap_or(seed)))
}

fn report(dir: &Path, artifacts: &[Artifact]) {
    for a in artifacts {
        println!("{}  {}", &a.sha256[..12], dir.join(&a.file).display());
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => {
            let mut cfg = load_config(&args.config, args.seed)?;
            if let Some(out) = args.out {
                cfg.output.dir = out;
            }
            cfg.benchmark_mode |= args.benchmark;
            let m = run_pipeline(&cfg)?;
            println!("{}", m.run_dir.display());
        }
        Command::Ingest { config, out } => {
            let cfg = load_config(&config, None)?;
            cfg.validate()?;
            report(&out, &ingest_stage(&cfg, &out)?);
        }
        Command::FitHmm {
            cohort,
            out,
            states,
            stage,
        } => {
            let (mut hmm, _, seed) = stage_blocks(&stage)?;
            hmm.n_states = states.or(hmm.n_states);
            report(&out, &fit_hmm_stage(&cohort, &hmm, seed, &out)?);
        }
        Command::Decode { model, cohort, out } => {
            report(&out, &decode_stage(&model, &cohort, &out)?)
        }
        Command::Cluster {
            sequences,
            out,
            k,
            stage,
        } => {
            let (_, mut cluster, seed) = stage_blocks(&stage)?;
            cluster.k = k.or(cluster.k);
            report(&out, &cluster_stage(&sequences, &cluster, seed, &out)?);
        }
        Command::Stats {
            labels,
            scores,
            out,
            config,
        } => {
            let opts = match config {
                Some(p) => PipelineConfig::from_path(&p)?.stats,
                None => Default::default(),
            };
            report(&out, &stats_stage(&labels, &scores, &opts, &out)?);
        }
        Command::Compare {
            run_a,
            run_b,
            benchmark,
            config,
            seed,
            out,
        } => {
            let (a, b, out) = if benchmark {
                let mut cfg =
                    load_config(config.as_deref().expect("clap requires --config"), seed)?;
                if let Some(o) = &out {
                    cfg.output.dir = o.clone();
                }
                cfg.benchmark_mode = false;
                let red = run_pipeline(&cfg)?;
                cfg.benchmark_mode = true;
                let green = run_pipeline(&cfg)?;
                let dir = cfg
                    .output
                    .dir
                    .join(format!("compare_{}_{}", red.run_id, green.run_id));
                println!("{}\n{}", red.run_dir.display(), green.run_dir.display());
                (red.run_dir, green.run_dir, dir)
            } else {
                let (Some(a), Some(b), Some(out)) = (run_a, run_b, out) else {
                    return Err(Error::validation(
                        "compare",
                        "give RUN_A RUN_B --out DIR, or --benchmark --config PATH",
                    ));
                };
                (a, b, out)
            };
            let r = compare_runs(&a, &b, &out)?;
            let s = &r.scores;
            println!(
                "{}\nhomogeneity {:.3}  completeness {:.3}  v-measure {:.3}",
                out.display(),
                s.homogeneity,
                s.completeness,
                s.v_measure
            );
        }
        Command::Synth {
            spec,
            out,
            seed,
            n_learners,
        } => {
            let mut spec = match spec {
                Some(p) => CohortSpec::from_path(p)?,
                None => CohortSpec::paperlike(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = n_learners {
                spec.n_learners = n;
            }
            let cohort = generate_cohort(&spec)?;
            cohort.write(&out)?;
            println!("{} learners -> {}", cohort.learners.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
