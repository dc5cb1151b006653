//! Corpus formats, low-resource splits, unlabeled segmentation, synthetic
//! corpora and pseudo-label quality.

mod io;
mod split;
mod synth;

pub use io::{
    conll_entity_types, conll_sentence, ee_examples, ee_record, ee_schema, ner_examples,
    re_examples, read_conll, read_ee_jsonl, read_re_jsonl, relation_labels, write_conll,
    write_ee_jsonl, write_re_jsonl, ArgumentRecord, ConllSentence, EeRecord, EntityRecord,
    ReRecord, TriggerRecord,
};
pub use split::{
    largest_remainder, segment_unlabeled, stratified_split, Split, SplitMode, SplitSpec, NO_CLASS,
};
pub use synth::{
    entity_types, event_types, generate_synthetic, relations, roles, templates, trigger_words,
    Generated, Lexicon, SynthCorpus, SynthSpec, SynthTask, Template, TemplateChoice,
};

use crate::error::{Error, Result};
use crate::metrics::{MatchCounts, Prf};
use crate::task::TaskModel;

/// Quality of pseudo labels against the withheld gold, under the task metric
/// of `model`.
pub fn pseudo_label_quality<M: TaskModel>(model: &M, pseudo: &[M::Label], gold: &[M::Label]) -> Result<Prf> {
    if pseudo.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} pseudo labels vs {} gold labels",
            pseudo.len(),
            gold.len()
        )));
    }
    Ok(pseudo
        .iter()
        .zip(gold)
        .map(|(p, g)| model.match_counts(p, g))
        .sum::<MatchCounts>()
        .prf())
}

/// Class keys for stratification.
pub fn ner_class(sentence: &ConllSentence) -> Option<String> {
    sentence.first_entity_type().map(str::to_string)
}

pub fn re_class(record: &ReRecord) -> Option<String> {
    Some(record.relation.clone())
}

pub fn ee_class(record: &EeRecord) -> Option<String> {
    record.triggers.first().map(|t| t.event_type.clone())
}
