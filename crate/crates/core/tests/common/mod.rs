#![allow(dead_code)]

pub mod oracles;

use aspectir::corpus::{generate_synthetic, AspectSchema, Document, SyntheticCorpus, SyntheticGenConfig};
use aspectir::encoder::{init_value_tables, EncoderConfig, EncoderParams, GroupingScheme, ValueInit, ValueMode};
use aspectir::fusion::FusionMode;
use aspectir::objectives::{prepare_pretrain_examples, pretrain_loss, AspectSides, MaskingPolicy, PretrainBatch};
use aspectir::vocab::{AspectVocabularies, Granularity, Tokenizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub schema: AspectSchema,
    pub corpus: SyntheticCorpus,
    pub tok: Tokenizer,
    pub vocabs: AspectVocabularies,
}

pub fn fixture(n_items: usize, n_queries: usize, seed: u64, max_vocab: usize) -> Fixture {
    let schema = AspectSchema::product_default();
    let gen = SyntheticGenConfig {
        seed,
        n_items,
        n_queries,
        irrelevant_per_query: 3,
        ..Default::default()
    };
    let corpus = generate_synthetic(&gen, &schema).unwrap();
    let texts = corpus.items.iter().chain(&corpus.queries).map(|d| d.text.as_str());
    let tok = Tokenizer::train(texts, max_vocab).unwrap();
    let vocabs = AspectVocabularies::build(&schema, corpus.items.iter().chain(&corpus.queries), &tok).unwrap();
    Fixture {
        schema,
        corpus,
        tok,
        vocabs,
    }
}

/// The H=8, L=2 reference model used by the gradient suites.
pub fn reference_config(fx: &Fixture, scheme: GroupingScheme, fusion: FusionMode, mode: ValueMode) -> EncoderConfig {
    EncoderConfig {
        vocab_size: fx.tok.len(),
        hidden: 8,
        layers: 2,
        heads: 2,
        ffn: 16,
        max_len: 32,
        scheme,
        value_mode: mode,
        value_init: ValueInit::Averaged,
        fusion,
        aspects: (0..fx.schema.len()).collect(),
        granularities: Granularity::ALL.to_vec(),
        init_std: 0.2,
    }
}

pub fn model(fx: &Fixture, cfg: &EncoderConfig, seed: u64) -> EncoderParams {
    let mut params = EncoderParams::init(cfg, seed).unwrap();
    init_value_tables(&mut params, cfg, &fx.vocabs, seed + 1).unwrap();
    params
}

/// Masked batch of three items and two queries, at least one target each.
pub fn small_batch(fx: &Fixture, cfg: &EncoderConfig, docs: &[Document]) -> PretrainBatch {
    let examples = prepare_pretrain_examples(docs, &fx.tok, &fx.vocabs, cfg, AspectSides::default()).unwrap();
    let policy = MaskingPolicy {
        force_one: true,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    PretrainBatch::mask(&examples, cfg, &policy, fx.tok.first_regular_id(), &mut rng)
}

/// Largest |loss difference| between grouping schemes whose objectives coincide:
/// single vs granularity at |A|=1, single vs aspect at |G|=1, and all three at |A|=|G|=1.
pub fn scheme_coincidence_gaps(fx: &Fixture) -> Vec<(&'static str, f64)> {
    use GroupingScheme::{Aspect, Single};
    let by_granularity = GroupingScheme::Granularity;
    let category = fx.schema.index_of("category").unwrap();
    let docs: Vec<Document> = fx.corpus.items[..4].iter().chain(&fx.corpus.queries[..2]).cloned().collect();
    let cases: [(&'static str, Vec<usize>, Vec<Granularity>, Vec<GroupingScheme>); 3] = [
        ("|A|=1", vec![category], Granularity::ALL.to_vec(), vec![Single, by_granularity]),
        ("|G|=1", (0..fx.schema.len()).collect(), vec![Granularity::Word], vec![Single, Aspect]),
        ("|A|=|G|=1", vec![category], vec![Granularity::Phrase], vec![Single, by_granularity, Aspect]),
    ];
    cases
        .into_iter()
        .map(|(label, aspects, granularities, schemes)| {
            let losses: Vec<f64> = schemes
                .iter()
                .map(|&scheme| {
                    let mut cfg = reference_config(fx, scheme, FusionMode::ClsGating, ValueMode::Unshared);
                    cfg.aspects = aspects.clone();
                    cfg.granularities = granularities.clone();
                    let params = model(fx, &cfg, 21);
                    let batch = small_batch(fx, &cfg, &docs);
                    pretrain_loss(&batch, &params, &cfg, &fx.vocabs, 0.1).unwrap().total
                })
                .collect();
            let gap = losses.iter().map(|l| (l - losses[0]).abs()).fold(0.0, f64::max);
            (label, gap)
        })
        .collect()
}
