use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use refinery::io::read_all;
use refinery::mixture::{
    estimate_boundary, fit_quadratic, fit_surrogate, joint_loss, magic_metric, read_records, simulate, MetricTag,
    ProxyRunRecord, SurrogateTarget,
};
use refinery::pack::PackMode;
use refinery::pipeline::{self, PipelineConfig, Stage};
use refinery::tokenize::train_bpe;
use refinery::{Error, Result, StageStats, SurrogateModel};

#[derive(Parser)]
#[command(name = "refinery", version, about = "Corpus refinery and mixture lab")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Pipeline config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Global seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Fail on the first malformed input line instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Whitespace, punctuation and escape normalization.
    Normalize(StageArgs),
    /// Document quality filters.
    Clean(StageArgs),
    /// MinHash LSH near-duplicate removal.
    Dedup {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        num_perm: Option<usize>,
        #[arg(long)]
        chunk_size: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        /// Confirm band collisions with the signature estimate.
        #[arg(long)]
        verify_estimates: bool,
    },
    /// Merge adjacent short paragraphs into longer examples.
    Merge {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        max_span: Option<usize>,
        #[arg(long)]
        target_words: Option<usize>,
    },
    /// Word-level code-switching with bilingual lexicons.
    Codeswitch {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        rate: Option<f64>,
        /// Lexicon for one document language, as LANG=PATH.
        #[arg(long = "lexicon", value_parser = parse_lexicon)]
        lexicons: Vec<(String, PathBuf)>,
    },
    /// Tokenize and pack documents into fixed-length windows.
    Pack {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        merges: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        dropout: Option<f64>,
    },
    /// Train a byte-fallback BPE tokenizer.
    TrainBpe {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory receiving vocab.txt and merges.txt.
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Run the configured stage list.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Work directory for stage outputs and the report.
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strict: bool,
    },
    /// Retention report over stage stats files, in pipeline order.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        stats: Vec<PathBuf>,
        /// Directory receiving report.json and report.txt.
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Proxy-run analysis.
    #[command(subcommand)]
    Mixture(MixtureCommand),
}

#[derive(Args, Clone)]
struct MetricArgs {
    /// Proxy-run records (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
    /// Mixture key whose proportion enters the magic metric.
    #[arg(long)]
    key: String,
    /// Loss used as the response; defaults to the joint loss.
    #[arg(long)]
    loss_key: Option<String>,
}

#[derive(Subcommand)]
enum MixtureCommand {
    /// Quadratic fit of loss against the magic metric.
    FitQuadratic {
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(long, value_enum, default_value = "source")]
        tag: TagArg,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Magic-metric region where the fitted loss stays near a baseline.
    Boundary {
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(long)]
        baseline: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Linear surrogate from mixture proportions to joint loss.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
        #[arg(long)]
        allow_mixed_lr: bool,
        #[arg(long)]
        reference: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Search the simplex for the lowest predicted loss.
    Simulate {
        /// Surrogate model written by `mixture fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Codeswitch,
    Monolingual,
}

#[derive(Clone, Copy, ValueEnum)]
enum TagArg {
    Source,
    Target,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Joint,
    LogJoint,
}

fn parse_lexicon(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (lang, path) = s.split_once('=').ok_or("expected LANG=PATH")?;
    Ok((lang.to_string(), PathBuf::from(path)))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        config.set_seed(s);
    }
    Ok(config)
}

fn print_stats(stats: &StageStats) {
    let mut line = format!(
        "{}: {} in, {} out (kept {:.2}%)",
        stats.stage,
        stats.docs_in,
        stats.docs_out,
        100.0 * stats.kept_rate()
    );
    if stats.modified > 0 {
        line += &format!(", {} modified", stats.modified);
    }
    if stats.skipped_malformed > 0 {
        line += &format!(", {} malformed skipped", stats.skipped_malformed);
    }
    for (reason, n) in &stats.removal_breakdown {
        line += &format!(", {reason}: {n}");
    }
    println!("{line}");
}

fn run_stage(stage: Stage, args: &StageArgs, edit: impl FnOnce(&mut PipelineConfig)) -> Result<()> {
    let mut config = load_config(args.config.as_deref(), args.seed)?;
    edit(&mut config);
    config.validate()?;
    let stats = pipeline::run_stage(stage, &config, &args.input, &args.output, args.strict)?;
    print_stats(&stats);
    Ok(())
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).expect("serialize");
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

fn metric_points(records: &[ProxyRunRecord], metric: &MetricArgs, tag: MetricTag) -> Result<Vec<(f64, f64)>> {
    records
        .iter()
        .map(|r| {
            let p = r.mixture.get(&metric.key).copied().unwrap_or(0.0);
            let x = magic_metric(p, r.learning_rate, tag)?;
            let y = match &metric.loss_key {
                Some(k) => *r
                    .losses
                    .get(k)
                    .ok_or_else(|| Error::InvalidArgument(format!("record has no loss {k:?}")))?,
                None => joint_loss(&r.losses)?,
            };
            Ok((x, y))
        })
        .collect()
}

fn mixture(cmd: MixtureCommand) -> Result<()> {
    match cmd {
        MixtureCommand::FitQuadratic { metric, tag, output } => {
            let tag = match tag {
                TagArg::Source => MetricTag::Source,
                TagArg::Target => MetricTag::Target,
            };
            let records = read_records(&metric.input)?;
            let fit = fit_quadratic(&metric_points(&records, &metric, tag)?, tag)?;
            write_json(&output, &fit)?;
            println!(
                "y = {:.6}x^2 + {:.6}x + {:.6}  (rss {:.3e}, {} points, x in [{:.4}, {:.4}])",
                fit.a, fit.b, fit.c, fit.rss, fit.points, fit.x_min, fit.x_max
            );
        }
        MixtureCommand::Boundary {
            metric,
            baseline,
            delta,
            output,
        } => {
            let records = read_records(&metric.input)?;
            let fit = fit_quadratic(&metric_points(&records, &metric, MetricTag::Source)?, MetricTag::Source)?;
            let report = estimate_boundary(&fit, baseline, delta)?;
            write_json(&output, &report)?;
            match report.boundary {
                Some(_) if !report.deviates => println!(
                    "no boundary in fitted range: loss stays within {delta} of {baseline} on [{:.6}, {:.6}]",
                    fit.x_min, fit.x_max
                ),
                Some(b) => {
                    println!("boundary: {b:.6}");
                    for (lo, hi) in &report.intervals {
                        println!("acceptable: [{lo:.6}, {hi:.6}]");
                    }
                }
                None => println!("no boundary in fitted range: loss is never within {delta} of {baseline}"),
            }
        }
        MixtureCommand::Fit {
            input,
            output,
            target,
            allow_mixed_lr,
            reference,
            config,
        } => {
            let config = load_config(config.as_deref(), None)?;
            let mut options = config.mixture.surrogate.clone();
            if let Some(t) = target {
                options.target = match t {
                    TargetArg::Joint => SurrogateTarget::Joint,
                    TargetArg::LogJoint => SurrogateTarget::LogJoint,
                };
            }
            options.allow_mixed_lr |= allow_mixed_lr;
            if reference.is_some() {
                options.reference = reference;
            }
            let records = read_records(&input)?;
            let model: SurrogateModel = fit_surrogate(&records, &options)?;
            write_json(&output, &model)?;
            for (k, w) in model.keys.iter().zip(&model.weights) {
                println!("{k}: {w:.6}");
            }
            println!("intercept: {:.6}", model.intercept);
            println!("R² = {:.3}", model.r_squared);
        }
        MixtureCommand::Simulate {
            model,
            output,
            n,
            seed,
            config,
        } => {
            let config = load_config(config.as_deref(), None)?;
            let raw = std::fs::read_to_string(&model).map_err(|e| Error::io(&model, e))?;
            let model: SurrogateModel =
                serde_json::from_str(&raw).map_err(|e| Error::ModelFormat(format!("{}: {e}", model.display())))?;
            let n = n.unwrap_or(config.mixture.simulations);
            let seed = seed.unwrap_or(config.mixture.seed);
            let best = simulate(&model, n, seed)?;
            write_json(&output, &best)?;
            let mix: BTreeMap<&String, String> = best.mixture.iter().map(|(k, v)| (k, format!("{v:.4}"))).collect();
            println!("best of {n}: predicted {:.6} at {mix:?}", best.predicted);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Normalize(args) => run_stage(Stage::Normalize, &args, |_| {}),
        Command::Clean(args) => run_stage(Stage::Clean, &args, |_| {}),
        Command::Dedup {
            stage,
            threshold,
            num_perm,
            chunk_size,
            rounds,
            verify_estimates,
        } => run_stage(Stage::Dedup, &stage, |c| {
            let d = &mut c.dedup;
            d.threshold = threshold.unwrap_or(d.threshold);
            d.num_perm = num_perm.unwrap_or(d.num_perm);
            d.chunk_size = chunk_size.unwrap_or(d.chunk_size);
            d.rounds = rounds.unwrap_or(d.rounds);
            d.verify_estimates |= verify_estimates;
            if threshold.is_some() || num_perm.is_some() {
                d.bands = None;
                d.rows = None;
            }
        }),
        Command::Merge {
            stage,
            max_span,
            target_words,
        } => run_stage(Stage::Merge, &stage, |c| {
            c.pack.merge_max_span = max_span.unwrap_or(c.pack.merge_max_span);
            c.pack.merge_target = target_words.unwrap_or(c.pack.merge_target);
        }),
        Command::Codeswitch { stage, rate, lexicons } => run_stage(Stage::Codeswitch, &stage, |c| {
            c.codeswitch.rate = rate.unwrap_or(c.codeswitch.rate);
            c.codeswitch.lexicons.extend(lexicons);
        }),
        Command::Pack {
            stage,
            vocab,
            merges,
            window,
            mode,
            dropout,
        } => run_stage(Stage::Pack, &stage, |c| {
            c.tokenize.vocab = vocab.or(c.tokenize.vocab.take());
            c.tokenize.merges = merges.or(c.tokenize.merges.take());
            c.pack.window = window.unwrap_or(c.pack.window);
            c.pack.dropout_p = dropout.unwrap_or(c.pack.dropout_p);
            if let Some(m) = mode {
                c.pack.mode = match m {
                    ModeArg::Codeswitch => PackMode::Codeswitch,
                    ModeArg::Monolingual => PackMode::Monolingual,
                };
            }
        }),
        Command::TrainBpe {
            input,
            output,
            vocab_size,
            strict,
        } => {
            let (docs, _) = read_all(&input, strict)?;
            let model = train_bpe(docs.iter().map(|d| d.text.as_str()), vocab_size)?;
            std::fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
            model.save(&output.join("vocab.txt"), &output.join("merges.txt"))?;
            println!(
                "{} merges, {} tokens, fingerprint {}",
                model.num_merges(),
                model.vocab_len(),
                model.fingerprint()
            );
            Ok(())
        }
        Command::Pipeline {
            config,
            input,
            output,
            seed,
            strict,
        } => {
            let config = load_config(Some(&config), seed)?;
            let run = pipeline::run_pipeline(&config, &input, &output, strict)?;
            for s in &run.stats {
                print_stats(s);
            }
            print!("{}", run.report.to_table());
            Ok(())
        }
        Command::Report { stats, output } => {
            let report = pipeline::report_from_files(&stats)?;
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                pipeline::write_report(&report, &dir)?;
            }
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Mixture(cmd) => mixture(cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_contract_violation() {
                4
            } else if matches!(e, Error::Config(_)) {
                2
            } else {
                3
            };
            ExitCode::from(code)
        }
    }
}
