#![allow(dead_code)]

use grail_core::data::{
    conll_entity_types, generate_synthetic, ner_class, ner_examples, stratified_split, ConllSentence,
    SplitMode, SplitSpec, SynthCorpus, SynthSpec, SynthTask,
};
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::girl::Unlabeled;
use grail_core::ner::{NerModel, TagSet};

pub type NerPair = (Vec<String>, Vec<usize>);

pub struct NerSetup {
    pub model: NerModel,
    pub labeled: Vec<NerPair>,
    pub unlabeled: Unlabeled<Vec<String>, Vec<usize>>,
    pub test: Vec<NerPair>,
}

pub fn synthetic_ner(sentences: usize, noise: f64, seed: u64) -> Vec<ConllSentence> {
    let spec = SynthSpec {
        noise,
        ..SynthSpec::new(SynthTask::Ner, sentences, seed)
    };
    match generate_synthetic(&spec).unwrap() {
        SynthCorpus::Ner(v) => v.into_iter().map(|g| g.record).collect(),
        _ => unreachable!(),
    }
}

/// Labeled, unlabeled (with hidden gold) and held-back test data from one
/// synthetic corpus. The vocabulary covers the training text only.
pub fn ner_setup(
    corpus: &[ConllSentence],
    labeled_fraction: f64,
    unlabeled_fraction: f64,
    seed: u64,
    config: EncoderConfig,
) -> NerSetup {
    let spec = SplitSpec {
        mode: SplitMode::Fraction(labeled_fraction),
        unlabeled_fraction,
        segments: 10,
        seed,
    };
    let split = stratified_split(corpus, ner_class, &spec).unwrap();
    let tags = TagSet::new(conll_entity_types(corpus)).unwrap();
    let examples = ner_examples(corpus, &tags).unwrap();
    let pick = |ids: &[usize]| -> Vec<NerPair> {
        ids.iter()
            .map(|&i| (examples[i].tokens.clone(), examples[i].tags.clone()))
            .collect()
    };
    let labeled = pick(&split.labeled);
    let unlabeled_pairs = pick(&split.unlabeled);
    let test = pick(&split.held_back);
    let vocab = Vocabulary::build(
        labeled.iter().chain(&unlabeled_pairs).map(|(t, _)| t.iter()),
        1,
    )
    .unwrap();
    let (inputs, gold): (Vec<_>, Vec<_>) = unlabeled_pairs.into_iter().unzip();
    NerSetup {
        model: NerModel::new(vocab, tags, config),
        labeled,
        unlabeled: Unlabeled::with_hidden_gold(inputs, gold).unwrap(),
        test,
    }
}

pub fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        emb_dim: 8,
        window: 1,
        hidden_dim: 12,
        max_len: 64,
    }
}
