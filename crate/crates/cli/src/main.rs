use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aspectir::corpus::DocKind;
use aspectir::encoder::{load_checkpoint, EncoderParams};
use aspectir::experiment::{
    add_accuracy_metrics, build_item_index, evaluate_model, finetune_model, grad_check_run, pretrain_model,
    run_dir, run_plan, write_vocab, Dataset, ExperimentPlan, Model, RunConfig, RunWriter, VocabBundle,
    COMPARISON_FILE, METRICS_FILE,
};
use aspectir::retrieval::{search, DenseIndex};
use aspectir::{Error, Result};
use clap::{Args, Parser, Subcommand};

const USAGE: u8 = 1;
const VALIDATION: u8 = 2;
const RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "aspectir", version, about = "Aspect-guided dense retrieval: train, index, search and evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (flat TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus as items/queries/judgments JSON Lines.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the tokenizer and the per-aspect value vocabularies.
    BuildVocab {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train with masked language modeling plus the aspect loss.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Root under which the content-addressed run directory is created.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a pre-trained run with the in-batch contrastive loss.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `pretrain`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every item into a dense index.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Run directory holding the vocabulary and a checkpoint.
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint to use; defaults to the run's latest.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve the top items for a query text.
    Search {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Compute retrieval metrics and Accuracy@3 for the test queries.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configuration of an experiment plan and merge the metrics.
    Ablate {
        /// Experiment plan (TOML with base, runs, matrix and seeds).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central differences.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Documents in the checked batch.
        #[arg(long, default_value_t = 4)]
        docs: usize,
        /// Entries probed per tensor; 0 probes all.
        #[arg(long, default_value_t = 25)]
        max_per_tensor: usize,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Export fused item vectors with their category labels as TSV.
    DumpEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn latest_checkpoint(run: &Path, explicit: Option<&PathBuf>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    ["finetune.ckpt", "pretrain.ckpt"]
        .iter()
        .map(|f| run.join(f))
        .find(|p| p.exists())
        .ok_or_else(|| Error::invalid("run directory", format!("{} holds no checkpoint", run.display())))
}

fn load_model(run: &Path, checkpoint: Option<&PathBuf>, cfg: &RunConfig) -> Result<(VocabBundle, Model)> {
    let schema = cfg.schema()?;
    let vocab = VocabBundle::load_dir(run, &schema)?;
    let (ecfg, params) = load_checkpoint(&latest_checkpoint(run, checkpoint)?)?;
    if ecfg.vocab_size != vocab.tok.len() {
        return Err(Error::invalid("checkpoint", "vocabulary size differs from the run's tokenizer"));
    }
    Ok((vocab, Model { cfg: ecfg, params }))
}

fn run_config_of(run: &Path) -> Result<RunConfig> {
    RunConfig::load(&run.join(aspectir::experiment::CONFIG_FILE))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenCorpus { common, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.corpus_seed = seed;
            }
            let data = Dataset::from_config(&cfg)?;
            data.save_dir(&out)?;
            println!("{} items, {} queries, {} judgments -> {}", data.items.len(), data.queries.len(), data.judgments.len(), out.display());
        }
        Command::BuildVocab { common, out } => {
            let cfg = load_config(&common)?;
            let data = Dataset::from_config(&cfg)?;
            let (train, _) = data.split_queries(cfg.train_queries);
            let vocab = VocabBundle::build(&data, &train, cfg.max_vocab)?;
            let mut w = RunWriter::create(&out, "vocab", &cfg)?;
            w.input("corpus", data.digest());
            write_vocab(&mut w, &vocab)?;
            w.finish()?;
            println!("{} tokens -> {}", vocab.tok.len(), out.display());
        }
        Command::Pretrain { common, out } => {
            let cfg = load_config(&common)?;
            let data = Dataset::from_config(&cfg)?;
            let (train, _) = data.split_queries(cfg.train_queries);
            let vocab = VocabBundle::build(&data, &train, cfg.max_vocab)?;
            let dir = run_dir(&out, "pretrain", &cfg);
            let mut w = RunWriter::create(&dir, "pretrain", &cfg)?;
            w.input("corpus", data.digest());
            write_vocab(&mut w, &vocab)?;
            let model = Model::init(&cfg, &data.schema, &vocab)?;
            let mut saved: Vec<(String, Vec<u8>)> = Vec::new();
            let ecfg = model.cfg.clone();
            let (model, log) = pretrain_model(&cfg, &data, &vocab, model, |step, p: &EncoderParams| {
                saved.push((format!("checkpoints/step-{step:06}.ckpt"), aspectir::encoder::checkpoint_bytes(&ecfg, p)));
                Ok(())
            })?;
            for (name, bytes) in saved {
                w.write(&name, &bytes)?;
            }
            w.write("pretrain.ckpt", &model.checkpoint_bytes())?;
            w.write("pretrain_loss.tsv", log.to_tsv().as_bytes())?;
            w.finish()?;
            println!("{}", dir.display());
        }
        Command::Finetune { common, run, out } => {
            let cfg = match common.config {
                Some(_) => load_config(&common)?,
                None => {
                    let mut c = run_config_of(&run)?;
                    if let Some(s) = common.seed {
                        c.seed = s;
                    }
                    c
                }
            };
            let data = Dataset::from_config(&cfg)?;
            let (vocab, model) = load_model(&run, Some(&run.join("pretrain.ckpt")), &cfg)?;
            let dir = run_dir(&out, "finetune", &cfg);
            let mut w = RunWriter::create(&dir, "finetune", &cfg)?;
            w.input("corpus", data.digest());
            w.input("pretrain.ckpt", aspectir::experiment::sha256_hex(&model.checkpoint_bytes()));
            write_vocab(&mut w, &vocab)?;
            let (model, losses) = finetune_model(&cfg, &data, &vocab, model, |_, _| Ok(()))?;
            w.write("finetune.ckpt", &model.checkpoint_bytes())?;
            let tsv: String = std::iter::once("step\tloss\n".to_string())
                .chain(losses.iter().enumerate().map(|(i, l)| format!("{}\t{l}\n", i + 1)))
                .collect();
            w.write("finetune_loss.tsv", tsv.as_bytes())?;
            w.finish()?;
            println!("{}", dir.display());
        }
        Command::Encode { common, run, checkpoint, out } => {
            let cfg = config_for_run(&common, &run)?;
            let data = Dataset::from_config(&cfg)?;
            let (vocab, model) = load_model(&run, checkpoint.as_ref(), &cfg)?;
            let index = build_item_index(&model, &vocab.tok, &data.items)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("index.bin");
            index.save(&path)?;
            println!("{} vectors of dimension {} -> {}", index.len(), index.dim(), path.display());
        }
        Command::Search { run, checkpoint, index, query, k } => {
            let cfg = run_config_of(&run)?;
            let (vocab, model) = load_model(&run, checkpoint.as_ref(), &cfg)?;
            let index = DenseIndex::load(&index)?;
            let q = model.encode_text(&vocab.tok, &query)?;
            for (id, score) in search(&index, &q, k)?.hits {
                println!("{id}\t{score:.6}");
            }
        }
        Command::Eval { common, run, checkpoint, index, out } => {
            let cfg = config_for_run(&common, &run)?;
            let data = Dataset::from_config(&cfg)?;
            let (vocab, model) = load_model(&run, checkpoint.as_ref(), &cfg)?;
            let index = DenseIndex::load(&index)?;
            let mut report = evaluate_model(&cfg, &data, &vocab, &model, &index)?;
            add_accuracy_metrics(&mut report, "", &model, &vocab, &data.items, cfg.accuracy_rule)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join(METRICS_FILE), report.to_tsv())?;
            for (m, v) in &report.summary {
                println!("{m}\t{v:.4}");
            }
        }
        Command::Ablate { config, out } => {
            let plan = ExperimentPlan::load(&config)?;
            let total = plan.runs.len();
            let mut done = 0;
            let (_, table) = run_plan(&plan, &out, |r, dir| {
                done += 1;
                eprintln!("[{done}/{total}] {} -> {}", r.name, dir.display());
            })?;
            print!("{}", table.to_tsv());
            eprintln!("comparison -> {}", out.join(COMPARISON_FILE).display());
        }
        Command::GradCheck { common, docs, max_per_tensor, eps, tolerance } => {
            let cfg = load_config(&common)?;
            let data = Dataset::from_config(&cfg)?;
            let limit = (max_per_tensor > 0).then_some(max_per_tensor);
            let mut failed = false;
            for (loss, report) in grad_check_run(&cfg, &data, docs, limit, eps, tolerance)? {
                for t in &report.tensors {
                    let flag = if t.passed { "ok" } else { "FAIL" };
                    println!("{loss}\t{}\t{:.3e}\t{}\t{flag}", t.name, t.max_rel_error, t.checked);
                }
                println!("{loss}\tmax\t{:.3e}", report.max_rel_error());
                failed |= !report.passed();
            }
            if failed {
                return Err(Error::NonFinite("gradient check above tolerance".into()));
            }
        }
        Command::DumpEmbeddings { common, run, checkpoint, out } => {
            let cfg = config_for_run(&common, &run)?;
            let data = Dataset::from_config(&cfg)?;
            let (vocab, model) = load_model(&run, checkpoint.as_ref(), &cfg)?;
            let mut tsv = String::from("id\tcategory\tvector\n");
            for d in data.items.iter().filter(|d| d.kind == DocKind::Item) {
                let v = model.encode_text(&vocab.tok, &d.text)?;
                let label = d.phrases("category").collect::<Vec<_>>().join("|");
                let v: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                tsv.push_str(&format!("{}\t{label}\t{}\n", d.id, v.join(",")));
            }
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, tsv)?;
            println!("{} vectors -> {}", data.items.len(), out.display());
        }
    }
    Ok(())
}

/// The explicit config if given, else the one stored in the run directory.
fn config_for_run(common: &Common, run: &Path) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(_) => return load_config(common),
        None => run_config_of(run)?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { VALIDATION } else { RUNTIME })
        }
    }
}
