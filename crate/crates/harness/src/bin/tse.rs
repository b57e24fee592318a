use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tse_core::checkpoint::load_checkpoint;
use tse_core::datagen::manifest::{tree_hash, validate_manifest, Split};
use tse_core::datagen::{build_dataset, eval_column_labels, ADAPT_CONDITIONS};
use tse_core::{CoreError, FusionMode, FusionOverride, MultitaskMode};
use tse_harness::attn::attention_trace;
use tse_harness::data::{load_nonempty, load_split};
use tse_harness::eval::{evaluate, EvalMetadata, EvalSystem};
use tse_harness::gradcheck::run_gradcheck_suite;
use tse_harness::train::{adapt_model, resume_checkpoint, train_model, RunOutput, TrainJob};
use tse_harness::{config_hash, RunConfig};

#[derive(Parser)]
#[command(name = "tse", version, about = "Audio-visual target speaker extraction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for generation and evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long, value_parser = parse_fusion)]
    fusion: Option<FusionMode>,
    #[arg(long, value_parser = parse_multitask)]
    multitask: Option<MultitaskMode>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes per-epoch CSV plus best and last checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prefix of the files written under --out.
        #[arg(long, default_value = "model")]
        name: String,
        /// Continue from a checkpoint with the same config hash.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on the labelled adaptation split.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "adapted")]
        name: String,
    },
    /// Score checkpoints over the clue-condition grid.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `NAME=PATH`, repeatable.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Evaluate every checkpoint with this fusion mode instead.
        #[arg(long, value_parser = parse_fusion)]
        fusion: Option<FusionMode>,
        /// Constant attention weights `AUDIO,VISUAL` in place of the learned fusion.
        #[arg(long)]
        force: Option<String>,
        #[arg(long, default_value = "eval")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the per-frame attention trace of one item.
    Attn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        item: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every primitive and model variant.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_fusion(s: &str) -> Result<FusionMode, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

fn parse_multitask(s: &str) -> Result<MultitaskMode, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| anyhow!("unknown split {s:?}"))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, o: &Overrides) -> Result<()> {
    if let Some(f) = o.fusion {
        cfg.model.fusion_mode = f;
    }
    if let Some(m) = o.multitask {
        cfg.model.multitask_mode = m;
    }
    if let Some(a) = o.alpha {
        cfg.train.alpha = a;
    }
    if let Some(b) = o.beta {
        cfg.train.beta = b;
    }
    if let Some(lr) = o.lr {
        cfg.train.learning_rate = lr;
        cfg.train.adapt_learning_rate = lr;
    }
    if let Some(e) = o.epochs {
        cfg.train.epochs = e.max(1);
        cfg.train.adapt_epochs = e;
    }
    cfg.validate()?;
    Ok(())
}

fn manifest_path(cli: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    cli.or_else(|| cfg.train.manifest.clone()).ok_or_else(|| anyhow!("no manifest: pass --manifest or set train.manifest"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { common, out } => {
            let cfg = load_config(&common)?;
            let seed = common.seed.unwrap_or(cfg.train.seed);
            let summary = build_dataset(&cfg.generate, &out, seed)?;
            let check = validate_manifest(&summary.manifest)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            println!("validated {} entries, {} files", check.entries, check.files_checked);
            println!("tree hash {}", tree_hash(&out)?);
        }
        Command::Train { common, overrides, manifest, out, name, resume } => {
            let mut cfg = load_config(&common)?;
            apply(&mut cfg, &overrides)?;
            if let Some(w) = cfg.train.loss_weights().warning(cfg.model.multitask_mode) {
                eprintln!("warning: {w}");
            }
            let manifest = manifest_path(manifest, &cfg)?;
            let mut train_items = load_nonempty(&manifest, Split::Train)?;
            if let Some(n) = cfg.train.max_train_items {
                train_items.truncate(n);
            }
            let dev_items = load_split(&manifest, Split::Dev)?;
            let out = out.unwrap_or_else(|| cfg.train.out_dir.clone());
            let job = TrainJob::new(cfg.model.clone(), cfg.train.clone()).with_output(&out, &name);
            let init = match resume {
                Some(p) => Some(resume_checkpoint(&p, &config_hash(&cfg.model, &cfg.train))?),
                None => None,
            };
            let outcome = train_model(&job, init, &train_items, &dev_items)?;
            for e in &outcome.history {
                println!(
                    "epoch {:>3}  loss {:>9.4}  aux {:>8.4}  dev {:>7.2} dB  {:.1}s",
                    e.epoch, e.train_loss, e.aux_loss, e.dev_si_sdr, e.seconds
                );
            }
            println!(
                "best epoch {} ({:.2} dB); config hash {}",
                outcome.best_epoch, outcome.best_dev_si_sdr, outcome.config_hash
            );
            if let (Some(b), Some(l)) = (&outcome.best_path, &outcome.last_path) {
                println!("wrote {} and {}", b.display(), l.display());
            }
        }
        Command::Adapt { common, overrides, checkpoint, manifest, out, name } => {
            let mut cfg = load_config(&common)?;
            apply(&mut cfg, &overrides)?;
            let manifest = manifest_path(manifest, &cfg)?;
            let items = load_nonempty(&manifest, Split::AdaptTrain)?;
            let (model, _) = load_checkpoint(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let out = out.unwrap_or_else(|| cfg.train.out_dir.clone());
            let outcome = adapt_model(model, &cfg.train, cfg.train.adapt_epochs, &items, Some(RunOutput::new(&out, &name)))?;
            for r in &outcome.schedule {
                println!("{:<36} {:<18} alpha {}", r.item, r.condition, r.alpha);
            }
            println!("adapted for {} epochs; wrote {}", outcome.history.len(), out.join(format!("{name}_last.tsf")).display());
        }
        Command::Eval { common, checkpoints, manifest, fusion, force, split, out } => {
            let cfg = load_config(&common)?;
            let manifest = manifest_path(manifest, &cfg)?;
            let split = parse_split(&split)?;
            let items = load_nonempty(&manifest, split)?;
            let fusion_override = match force {
                Some(s) => {
                    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?;
                    match v[..] {
                        [a, b] => Some(FusionOverride::Weights([a, b])),
                        _ => bail!("--force expects AUDIO,VISUAL"),
                    }
                }
                None => None,
            };
            let mut systems = Vec::new();
            for spec in &checkpoints {
                let (name, path) = spec.split_once('=').unwrap_or((spec.as_str(), spec.as_str()));
                let (mut model, hash) = load_checkpoint(Path::new(path)).with_context(|| format!("loading {path}"))?;
                if let Some(f) = fusion {
                    let mt = model.config().multitask_mode;
                    model.set_modes(f, mt);
                }
                systems.push(EvalSystem { name: name.to_string(), model, config_hash: hash, fusion_override });
            }
            let grid = match split {
                Split::Eval => eval_column_labels(&cfg.generate),
                Split::AdaptTrain | Split::AdaptEval => ADAPT_CONDITIONS.iter().map(|s| s.to_string()).collect(),
                Split::Train | Split::Dev => Vec::new(),
            };
            let meta = EvalMetadata {
                seed: cfg.train.seed,
                manifest: manifest.display().to_string(),
                config_hashes: Default::default(),
            };
            let report = evaluate(&systems, &items, &grid, meta)?;
            std::fs::create_dir_all(&out)?;
            report.write_csv(&out.join("report.csv"))?;
            report.write_json(&out.join("report.json"))?;
            print!("{}", report.render());
        }
        Command::Attn { common, checkpoint, manifest, item, out } => {
            let cfg = load_config(&common)?;
            let manifest = manifest_path(manifest, &cfg)?;
            let (model, hash) = load_checkpoint(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let mut found = None;
            for split in Split::ALL {
                if let Some(it) = load_split(&manifest, split)?.into_iter().find(|x| x.entry.id == item) {
                    found = Some(it);
                    break;
                }
            }
            let it = found.ok_or_else(|| anyhow!("item {item} not in {}", manifest.display()))?;
            let trace = attention_trace(&model, &hash, &it)?;
            trace.write_csv(&out)?;
            let (occ, clean) = trace.occlusion_means();
            println!("{} frames; mean audio attention occluded {occ:?} clean {clean:?}", trace.rows.len());
        }
        Command::Gradcheck { common } => {
            load_config(&common)?;
            let summary = run_gradcheck_suite()?;
            print!("{}", summary.render());
            return Ok(summary.passed());
        }
    }
    Ok(true)
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| matches!(c.downcast_ref::<CoreError>(), Some(CoreError::InvalidConfig { .. })))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
