//! Per-task glue: record formats, label inventories, model construction and
//! task-specific metrics.

use std::path::Path;

use grail_core::data::{
    conll_entity_types, ee_examples, ee_schema, ner_examples, re_examples, read_conll,
    read_ee_jsonl, read_re_jsonl, relation_labels, write_conll, write_ee_jsonl, write_re_jsonl,
    ConllSentence, EeRecord, ReRecord, SynthCorpus, SynthTask,
};
use grail_core::ee::{arg_c_f1, trig_c_f1, EeModel, EeSchema, EventGraph};
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::ner::{NerModel, TagSet};
use grail_core::re::{ReModel, RelationLabels};
use grail_core::TaskModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Context, Failure};
use crate::files::open;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
}

pub type Pair<K> = (
    <<K as TaskKind>::Model as TaskModel>::Input,
    <<K as TaskKind>::Model as TaskModel>::Label,
);

pub trait TaskKind {
    type Model: TaskModel;
    type Record: Clone;
    type Labels: Serialize + DeserializeOwned;

    const NAME: &'static str;
    const SYNTH: SynthTask;
    /// File name used by `synth` for the generated corpus.
    const CORPUS_FILE: &'static str;

    fn read(path: &Path) -> Result<Vec<Self::Record>, Failure>;
    fn render(records: &[Self::Record], out: &mut Vec<u8>) -> grail_core::Result<()>;
    fn from_synth(corpus: SynthCorpus) -> Vec<Self::Record>;
    /// Stratification key.
    fn class(record: &Self::Record) -> Option<String>;
    fn tokens(record: &Self::Record) -> &[String];
    fn labels(records: &[Self::Record]) -> Result<Self::Labels, Failure>;
    fn build(vocab: Vocabulary, labels: &Self::Labels, shape: &ModelShape) -> Result<Self::Model, Failure>;
    fn examples(model: &Self::Model, records: &[Self::Record]) -> grail_core::Result<Vec<Pair<Self>>>;

    /// Sub-metrics beyond precision, recall and F1.
    fn extra_metrics(
        _preds: &[<Self::Model as TaskModel>::Label],
        _golds: &[<Self::Model as TaskModel>::Label],
    ) -> grail_core::Result<Map<String, Value>> {
        Ok(Map::new())
    }
}

pub struct Ner;
pub struct Re;
pub struct Ee;

impl TaskKind for Ner {
    type Model = NerModel;
    type Record = ConllSentence;
    type Labels = Vec<String>;

    const NAME: &'static str = "ner";
    const SYNTH: SynthTask = SynthTask::Ner;
    const CORPUS_FILE: &'static str = "corpus.conll";

    fn read(path: &Path) -> Result<Vec<ConllSentence>, Failure> {
        read_conll(open(path)?).invalid(path.display())
    }

    fn render(records: &[ConllSentence], out: &mut Vec<u8>) -> grail_core::Result<()> {
        write_conll(records, out)
    }

    fn from_synth(corpus: SynthCorpus) -> Vec<ConllSentence> {
        match corpus {
            SynthCorpus::Ner(v) => v.into_iter().map(|g| g.record).collect(),
            _ => unreachable!("synthesized with the NER task"),
        }
    }

    fn class(record: &ConllSentence) -> Option<String> {
        grail_core::data::ner_class(record)
    }

    fn tokens(record: &ConllSentence) -> &[String] {
        &record.tokens
    }

    fn labels(records: &[ConllSentence]) -> Result<Vec<String>, Failure> {
        let types = conll_entity_types(records);
        if types.is_empty() {
            return Err(Failure::validation("training corpus has no entity types"));
        }
        Ok(types)
    }

    fn build(vocab: Vocabulary, labels: &Vec<String>, shape: &ModelShape) -> Result<NerModel, Failure> {
        let tags = TagSet::new(labels.iter().cloned()).invalid("entity types")?;
        Ok(NerModel::new(vocab, tags, shape.encoder))
    }

    fn examples(model: &NerModel, records: &[ConllSentence]) -> grail_core::Result<Vec<Pair<Self>>> {
        Ok(ner_examples(records, model.tags())?
            .into_iter()
            .map(|e| (e.tokens, e.tags))
            .collect())
    }
}

impl TaskKind for Re {
    type Model = ReModel;
    type Record = ReRecord;
    type Labels = Vec<String>;

    const NAME: &'static str = "re";
    const SYNTH: SynthTask = SynthTask::Re;
    const CORPUS_FILE: &'static str = "corpus.jsonl";

    fn read(path: &Path) -> Result<Vec<ReRecord>, Failure> {
        read_re_jsonl(open(path)?).invalid(path.display())
    }

    fn render(records: &[ReRecord], out: &mut Vec<u8>) -> grail_core::Result<()> {
        write_re_jsonl(records, out)
    }

    fn from_synth(corpus: SynthCorpus) -> Vec<ReRecord> {
        match corpus {
            SynthCorpus::Re(v) => v.into_iter().map(|g| g.record).collect(),
            _ => unreachable!("synthesized with the RE task"),
        }
    }

    fn class(record: &ReRecord) -> Option<String> {
        grail_core::data::re_class(record)
    }

    fn tokens(record: &ReRecord) -> &[String] {
        &record.tokens
    }

    fn labels(records: &[ReRecord]) -> Result<Vec<String>, Failure> {
        Ok(relation_labels(records).invalid("relation labels")?.labels().to_vec())
    }

    fn build(vocab: Vocabulary, labels: &Vec<String>, shape: &ModelShape) -> Result<ReModel, Failure> {
        let labels = RelationLabels::new(labels.iter().cloned()).invalid("relation labels")?;
        Ok(ReModel::new(vocab, labels, shape.encoder))
    }

    fn examples(model: &ReModel, records: &[ReRecord]) -> grail_core::Result<Vec<Pair<Self>>> {
        Ok(re_examples(records, model.labels())?
            .into_iter()
            .map(|e| (e.input, e.relation))
            .collect())
    }
}

impl TaskKind for Ee {
    type Model = EeModel;
    type Record = EeRecord;
    type Labels = EeSchema;

    const NAME: &'static str = "ee";
    const SYNTH: SynthTask = SynthTask::Ee;
    const CORPUS_FILE: &'static str = "corpus.jsonl";

    fn read(path: &Path) -> Result<Vec<EeRecord>, Failure> {
        read_ee_jsonl(open(path)?).invalid(path.display())
    }

    fn render(records: &[EeRecord], out: &mut Vec<u8>) -> grail_core::Result<()> {
        write_ee_jsonl(records, out)
    }

    fn from_synth(corpus: SynthCorpus) -> Vec<EeRecord> {
        match corpus {
            SynthCorpus::Ee(v) => v.into_iter().map(|g| g.record).collect(),
            _ => unreachable!("synthesized with the EE task"),
        }
    }

    fn class(record: &EeRecord) -> Option<String> {
        grail_core::data::ee_class(record)
    }

    fn tokens(record: &EeRecord) -> &[String] {
        &record.tokens
    }

    fn labels(records: &[EeRecord]) -> Result<EeSchema, Failure> {
        let schema = ee_schema(records);
        if schema.entity_types.is_empty() || schema.event_types.is_empty() {
            return Err(Failure::validation("training corpus needs entity and event types"));
        }
        Ok(schema)
    }

    fn build(vocab: Vocabulary, labels: &EeSchema, shape: &ModelShape) -> Result<EeModel, Failure> {
        EeModel::new(vocab, labels.clone(), shape.encoder, shape.head_hidden).invalid("event schema")
    }

    fn examples(model: &EeModel, records: &[EeRecord]) -> grail_core::Result<Vec<Pair<Self>>> {
        Ok(ee_examples(records, model.schema())?
            .into_iter()
            .map(|e| (e.tokens, e.graph))
            .collect())
    }

    fn extra_metrics(preds: &[EventGraph], golds: &[EventGraph]) -> grail_core::Result<Map<String, Value>> {
        let mut m = Map::new();
        m.insert("trig_c".into(), serde_json::to_value(trig_c_f1(preds, golds)?)?);
        m.insert("arg_c".into(), serde_json::to_value(arg_c_f1(preds, golds)?)?);
        Ok(m)
    }
}
