use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::corpus::{
    generate_synthetic, judgment_map, load_corpus, load_judgments, save_corpus, save_judgments, AspectSchema, DocKind,
    Document, Grade, RelevanceJudgment,
};
use crate::encoder::{
    checkpoint_bytes, encode, init_value_tables, layout_guiding_tokens, value_embeddings, EncoderConfig, EncoderParams,
    FramedInput, GroupingScheme,
};
use crate::error::{Error, Result};
use crate::fusion::slot_row;
use crate::objectives::{
    encode_final, finetune, prepare_pretrain_examples, pretrain, FinetuneExample, LossLog,
};
use crate::retrieval::{accuracy_at_3, build_index, evaluate_retrieval, AccuracyRule, DenseIndex, GainMap, MetricsReport};
use crate::vocab::{decompose_annotations, AspectVocabularies, Granularity, Tokenizer};

pub const ITEMS_FILE: &str = "items.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const JUDGMENTS_FILE: &str = "judgments.jsonl";

/// Items, queries and judgments under one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: AspectSchema,
    pub items: Vec<Document>,
    pub queries: Vec<Document>,
    pub judgments: Vec<RelevanceJudgment>,
}

impl Dataset {
    /// Loads `corpus_dir` when configured, otherwise generates the synthetic corpus.
    pub fn from_config(run: &RunConfig) -> Result<Self> {
        let schema = run.schema()?;
        match &run.corpus_dir {
            Some(dir) => Self::load_dir(dir, schema),
            None => {
                let c = generate_synthetic(&run.generator(), &schema)?;
                Ok(Self {
                    schema,
                    items: c.items,
                    queries: c.queries,
                    judgments: c.judgments,
                })
            }
        }
    }

    pub fn load_dir(dir: &Path, schema: AspectSchema) -> Result<Self> {
        let items = load_corpus(&dir.join(ITEMS_FILE), &schema)?;
        let queries = load_corpus(&dir.join(QUERIES_FILE), &schema)?;
        let judgments = load_judgments(&dir.join(JUDGMENTS_FILE))?;
        if let Some(d) = items.iter().find(|d| d.kind != DocKind::Item) {
            return Err(Error::invalid("items file", format!("`{}` is not an item", d.id)));
        }
        if let Some(d) = queries.iter().find(|d| d.kind != DocKind::Query) {
            return Err(Error::invalid("queries file", format!("`{}` is not a query", d.id)));
        }
        Ok(Self {
            schema,
            items,
            queries,
            judgments,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_corpus(&dir.join(ITEMS_FILE), &self.items)?;
        save_corpus(&dir.join(QUERIES_FILE), &self.queries)?;
        save_judgments(&dir.join(JUDGMENTS_FILE), &self.judgments)
    }

    /// SHA-256 over the JSON Lines form of all three files.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for d in self.items.iter().chain(&self.queries) {
            h.update(serde_json::to_vec(d).expect("serializable"));
            h.update(b"\n");
        }
        for j in &self.judgments {
            h.update(serde_json::to_vec(j).expect("serializable"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Queries in id order, split into the first `train` and the rest.
    pub fn split_queries(&self, train: usize) -> (Vec<&Document>, Vec<&Document>) {
        let mut qs: Vec<&Document> = self.queries.iter().collect();
        qs.sort_by(|a, b| a.id.cmp(&b.id));
        let rest = qs.split_off(train.min(qs.len()));
        (qs, rest)
    }
}

/// Tokenizer plus the value vocabularies of every aspect and granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabBundle {
    pub tok: Tokenizer,
    pub values: AspectVocabularies,
}

pub const TOKENIZER_FILE: &str = "tokenizer.txt";
pub const VALUES_DIR: &str = "values";

impl VocabBundle {
    /// Trains on item and training-query text; values come from the same documents.
    pub fn build(data: &Dataset, train_queries: &[&Document], max_vocab: usize) -> Result<Self> {
        let docs: Vec<&Document> = data.items.iter().chain(train_queries.iter().copied()).collect();
        let tok = Tokenizer::train(docs.iter().map(|d| d.text.as_str()), max_vocab)?;
        let values = AspectVocabularies::build(&data.schema, docs.iter().copied(), &tok)?;
        Ok(Self { tok, values })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join(VALUES_DIR))?;
        self.tok.save(&dir.join(TOKENIZER_FILE))?;
        self.values.save_dir(&dir.join(VALUES_DIR))
    }

    pub fn load_dir(dir: &Path, schema: &AspectSchema) -> Result<Self> {
        let tok = Tokenizer::load(&dir.join(TOKENIZER_FILE))?;
        let values = AspectVocabularies::load_dir(&dir.join(VALUES_DIR), schema, &tok)?;
        Ok(Self { tok, values })
    }
}

/// Encoder configuration and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: EncoderConfig,
    pub params: EncoderParams,
}

impl Model {
    pub fn init(run: &RunConfig, schema: &AspectSchema, vocab: &VocabBundle) -> Result<Self> {
        let cfg = run.encoder_config(vocab.tok.len(), schema)?;
        let mut params = EncoderParams::init(&cfg, run.init_seed())?;
        init_value_tables(&mut params, &cfg, &vocab.values, run.value_seed())?;
        Ok(Self { cfg, params })
    }

    /// Fused retrieval vector of a text.
    pub fn encode_text(&self, tok: &Tokenizer, text: &str) -> Result<Vec<f64>> {
        encode_final(&self.params, &self.cfg, &tok.tokenize(text))
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint_bytes(&self.cfg, &self.params)
    }
}

pub fn pretrain_model<F>(
    run: &RunConfig,
    data: &Dataset,
    vocab: &VocabBundle,
    model: Model,
    on_checkpoint: F,
) -> Result<(Model, LossLog)>
where
    F: FnMut(usize, &EncoderParams) -> Result<()>,
{
    let (train, _) = data.split_queries(run.train_queries);
    let annotated_queries = run.query_side
        && train
            .iter()
            .any(|q| q.annotations.values().any(|set| !set.is_empty()));
    let mut docs: Vec<Document> = data.items.clone();
    if annotated_queries {
        docs.extend(train.iter().map(|&q| q.clone()));
    }
    let examples = prepare_pretrain_examples(&docs, &vocab.tok, &vocab.values, &model.cfg, run.sides())?;
    let (params, log) = pretrain(
        &examples,
        &model.cfg,
        model.params,
        &vocab.values,
        &run.pretrain_config(),
        vocab.tok.first_regular_id(),
        on_checkpoint,
    )?;
    Ok((Model { cfg: model.cfg, params }, log))
}

/// Training queries with their E items as positives and other judged items as hard negatives.
pub fn finetune_examples(data: &Dataset, queries: &[&Document], tok: &Tokenizer) -> Vec<FinetuneExample> {
    let items: BTreeMap<&str, &Document> = data.items.iter().map(|d| (d.id.as_str(), d)).collect();
    let judged = judgment_map(&data.judgments);
    let mut out = Vec::new();
    for q in queries {
        let Some(js) = judged.get(&q.id) else { continue };
        let mut ex = FinetuneExample {
            query: tok.tokenize(&q.text),
            positives: Vec::new(),
            negatives: Vec::new(),
        };
        for (item, &grade) in js {
            let Some(doc) = items.get(item.as_str()) else { continue };
            let ids = tok.tokenize(&doc.text);
            if grade == Grade::E {
                ex.positives.push(ids);
            } else {
                ex.negatives.push(ids);
            }
        }
        out.push(ex);
    }
    out
}

pub fn finetune_model<F>(
    run: &RunConfig,
    data: &Dataset,
    vocab: &VocabBundle,
    model: Model,
    on_checkpoint: F,
) -> Result<(Model, Vec<f64>)>
where
    F: FnMut(usize, &EncoderParams) -> Result<()>,
{
    let (train, _) = data.split_queries(run.train_queries);
    let examples = finetune_examples(data, &train, &vocab.tok);
    let (params, losses) = finetune(&examples, &model.cfg, model.params, &run.finetune_config(), on_checkpoint)?;
    Ok((Model { cfg: model.cfg, params }, losses))
}

pub fn build_item_index(model: &Model, tok: &Tokenizer, items: &[Document]) -> Result<DenseIndex> {
    build_index(items, |d| d.id.as_str(), |d| model.encode_text(tok, &d.text))
}

/// Per-document Accuracy@3 of the guiding vector for `(aspect, g)`.
///
/// Returns `None` when the model has no guiding slot for that objective.
pub fn aspect_accuracy(
    model: &Model,
    vocab: &VocabBundle,
    docs: &[&Document],
    aspect: usize,
    g: Granularity,
    rule: AccuracyRule,
) -> Result<Option<Vec<(String, f64)>>> {
    let cfg = &model.cfg;
    if cfg.scheme == GroupingScheme::None {
        return Ok(None);
    }
    let (Some(i), Some(j)) = (
        cfg.aspects.iter().position(|&a| a == aspect),
        cfg.granularities.iter().position(|&x| x == g),
    ) else {
        return Ok(None);
    };
    let layout = layout_guiding_tokens(cfg.scheme, cfg.aspects.len(), cfg.granularities.len())?;
    let Some(slot) = layout.slot(i, j) else { return Ok(None) };
    let table = value_embeddings(&model.params, cfg, &vocab.values, aspect, g)?;
    let mut out = Vec::new();
    for d in docs {
        let ann = decompose_annotations(d, &vocab.values, &vocab.tok)?;
        let positives = ann.get(aspect, g);
        if positives.is_empty() {
            continue;
        }
        let input = FramedInput::for_config(cfg, vocab.tok.tokenize(&d.text));
        let encoded = encode(&model.params, cfg, &input)?;
        let row = slot_row(cfg, &encoded, slot)?;
        if let Some(acc) = accuracy_at_3(encoded.hidden.row(row), &table, positives, rule) {
            out.push((d.id.clone(), acc));
        }
    }
    Ok(Some(out))
}

/// Metric name for an Accuracy@3 measurement.
pub fn accuracy_metric(stage: &str, kind: DocKind, aspect: &str, g: Granularity) -> String {
    let kind = match kind {
        DocKind::Item => "item",
        DocKind::Query => "query",
    };
    format!("{stage}acc@3/{kind}/{aspect}/{g}")
}

/// Item-side Accuracy@3 for every enabled objective, added to `report`.
pub fn add_accuracy_metrics(
    report: &mut MetricsReport,
    stage: &str,
    model: &Model,
    vocab: &VocabBundle,
    items: &[Document],
    rule: AccuracyRule,
) -> Result<()> {
    let docs: Vec<&Document> = items.iter().collect();
    for &a in &model.cfg.aspects {
        for &g in &model.cfg.granularities {
            if let Some(values) = aspect_accuracy(model, vocab, &docs, a, g, rule)? {
                let name = accuracy_metric(stage, DocKind::Item, &vocab.values.aspects()[a], g);
                if values.is_empty() {
                    continue;
                }
                let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;
                report.add_summary(&name, mean);
            }
        }
    }
    Ok(())
}

/// Recall and NDCG of the test queries against `index`.
pub fn evaluate_model(
    run: &RunConfig,
    data: &Dataset,
    vocab: &VocabBundle,
    model: &Model,
    index: &DenseIndex,
) -> Result<MetricsReport> {
    let (_, test) = data.split_queries(run.train_queries);
    let queries = test
        .iter()
        .map(|q| Ok((q.id.clone(), model.encode_text(&vocab.tok, &q.text)?)))
        .collect::<Result<Vec<_>>>()?;
    evaluate_retrieval(
        index,
        &queries,
        &judgment_map(&data.judgments),
        &run.recall_ks,
        &run.ndcg_ks,
        &GainMap::default(),
    )
}

/// Everything one end-to-end run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub vocab: VocabBundle,
    pub pretrained: Model,
    pub model: Model,
    pub pretrain_log: LossLog,
    pub finetune_losses: Vec<f64>,
    pub index: DenseIndex,
    /// Retrieval metrics of the fine-tuned model plus Accuracy@3 after
    /// pre-training (`pretrain/` prefix) and after fine-tuning.
    pub metrics: MetricsReport,
}

/// Vocabulary, pre-training, fine-tuning, indexing and evaluation.
pub fn run_pipeline(run: &RunConfig, data: &Dataset) -> Result<RunOutcome> {
    run.validate()?;
    let (train, _) = data.split_queries(run.train_queries);
    let vocab = VocabBundle::build(data, &train, run.max_vocab)?;
    let model = Model::init(run, &data.schema, &vocab)?;
    let (pretrained, pretrain_log) = pretrain_model(run, data, &vocab, model, |_, _| Ok(()))?;
    let (model, finetune_losses) = finetune_model(run, data, &vocab, pretrained.clone(), |_, _| Ok(()))?;
    let index = build_item_index(&model, &vocab.tok, &data.items)?;
    let mut metrics = evaluate_model(run, data, &vocab, &model, &index)?;
    add_accuracy_metrics(&mut metrics, "pretrain/", &pretrained, &vocab, &data.items, run.accuracy_rule)?;
    add_accuracy_metrics(&mut metrics, "", &model, &vocab, &data.items, run.accuracy_rule)?;
    Ok(RunOutcome {
        vocab,
        pretrained,
        model,
        pretrain_log,
        finetune_losses,
        index,
        metrics,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const CONFIG_FILE: &str = "config.toml";

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<root>/<name>-<first 12 hex digits of the config hash>`
pub fn run_dir(root: &Path, name: &str, run: &RunConfig) -> PathBuf {
    root.join(format!("{name}-{}", &run.hash()[..12]))
}

/// Writes files into `dir` and records their hashes.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn create(dir: &Path, name: &str, run: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut w = Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                name: name.to_string(),
                config_hash: run.hash(),
                inputs: BTreeMap::new(),
                artifacts: BTreeMap::new(),
            },
        };
        w.write(CONFIG_FILE, run.to_toml_string().as_bytes())?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, name: &str, digest: String) {
        self.manifest.inputs.insert(name.to_string(), digest);
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.manifest.artifacts.insert(file.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file written by other means.
    pub fn record(&mut self, file: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(file))?;
        self.manifest.artifacts.insert(file.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest> {
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        fs::write(self.dir.join(MANIFEST_FILE), json)?;
        Ok(self.manifest)
    }
}

/// Writes the vocabulary files into a run directory and records them.
pub fn write_vocab(w: &mut RunWriter, vocab: &VocabBundle) -> Result<()> {
    vocab.save_dir(w.dir())?;
    w.record(TOKENIZER_FILE)?;
    for v in vocab.values.iter() {
        w.record(&format!("{VALUES_DIR}/{}.{}.txt", v.aspect(), v.granularity()))?;
    }
    Ok(())
}

/// Runs the whole pipeline and writes its artifacts to `run_dir(root, name, run)`.
pub fn run_to_dir(run: &RunConfig, data: &Dataset, root: &Path, name: &str) -> Result<(PathBuf, RunOutcome)> {
    let dir = run_dir(root, name, run);
    let outcome = run_pipeline(run, data)?;
    let mut w = RunWriter::create(&dir, name, run)?;
    w.input("corpus", data.digest());
    write_vocab(&mut w, &outcome.vocab)?;
    w.write("pretrain.ckpt", &outcome.pretrained.checkpoint_bytes())?;
    w.write("pretrain_loss.tsv", outcome.pretrain_log.to_tsv().as_bytes())?;
    w.write("finetune.ckpt", &outcome.model.checkpoint_bytes())?;
    let ft: String = std::iter::once("step\tloss\n".to_string())
        .chain(outcome.finetune_losses.iter().enumerate().map(|(i, l)| format!("{}\t{l}\n", i + 1)))
        .collect();
    w.write("finetune_loss.tsv", ft.as_bytes())?;
    w.write("index.bin", &outcome.index.to_bytes())?;
    w.write(METRICS_FILE, outcome.metrics.to_tsv().as_bytes())?;
    w.finish()?;
    Ok((dir, outcome))
}
