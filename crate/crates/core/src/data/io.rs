//! Readers and writers for the three corpus formats.
//!
//! Records keep labels as strings so that files round-trip without a label
//! inventory; `*_examples` functions map them onto index-based examples.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ee::{Argument, EeSchema, EventExample, EventGraph};
use crate::error::{Error, Result};
use crate::ner::{NerExample, Span, TagSet};
use crate::re::{ReExample, ReInput, RelationLabels, NO_RELATION};

/// One CoNLL sentence with string tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConllSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl ConllSentence {
    /// Entity type of the first `B-` tag.
    pub fn first_entity_type(&self) -> Option<&str> {
        self.tags.iter().find_map(|t| t.strip_prefix("B-"))
    }
}

fn check_bio(tags: &[String], line: usize) -> Result<()> {
    let mut open: Option<&str> = None;
    for tag in tags {
        if tag == "O" {
            open = None;
        } else if let Some(t) = tag.strip_prefix("B-").filter(|t| !t.is_empty()) {
            open = Some(t);
        } else if let Some(t) = tag.strip_prefix("I-").filter(|t| !t.is_empty()) {
            if open != Some(t) {
                return Err(Error::Parse {
                    line,
                    message: format!("`{tag}` does not continue an entity of the same type"),
                });
            }
        } else {
            return Err(Error::Parse {
                line,
                message: format!("`{tag}` is not a BIO tag"),
            });
        }
    }
    Ok(())
}

/// Parses `token<TAB>tag` lines with blank lines between sentences. Gold tags
/// must form valid BIO sequences.
pub fn read_conll<R: BufRead>(input: R) -> Result<Vec<ConllSentence>> {
    let mut out = Vec::new();
    let mut current = ConllSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let mut start_line = 1;
    let flush = |s: &mut ConllSentence, start: usize, out: &mut Vec<ConllSentence>| -> Result<()> {
        if !s.tokens.is_empty() {
            check_bio(&s.tags, start)?;
            out.push(std::mem::replace(
                s,
                ConllSentence {
                    tokens: Vec::new(),
                    tags: Vec::new(),
                },
            ));
        }
        Ok(())
    };
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if line.trim().is_empty() {
            flush(&mut current, start_line, &mut out)?;
            continue;
        }
        if current.tokens.is_empty() {
            start_line = number;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(tok), Some(tag), None) if !tok.is_empty() && !tag.is_empty() => {
                current.tokens.push(tok.to_string());
                current.tags.push(tag.to_string());
            }
            _ => {
                return Err(Error::Parse {
                    line: number,
                    message: "expected `token<TAB>tag`".into(),
                })
            }
        }
    }
    flush(&mut current, start_line, &mut out)?;
    Ok(out)
}

pub fn write_conll<W: Write>(sentences: &[ConllSentence], mut out: W) -> Result<()> {
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            writeln!(out, "{tok}\t{tag}")?;
        }
    }
    Ok(())
}

/// One relation example as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReRecord {
    pub tokens: Vec<String>,
    pub head: (usize, usize),
    pub tail: (usize, usize),
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub start: usize,
    pub end: usize,
    pub event_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub trigger: usize,
    pub entity: usize,
    pub role: String,
}

/// One event-annotated sentence as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EeRecord {
    pub tokens: Vec<String>,
    pub entities: Vec<EntityRecord>,
    pub triggers: Vec<TriggerRecord>,
    pub arguments: Vec<ArgumentRecord>,
}

fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<W: Write, T: Serialize>(records: &[T], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_re_jsonl<R: BufRead>(input: R) -> Result<Vec<ReRecord>> {
    read_jsonl(input)
}

pub fn write_re_jsonl<W: Write>(records: &[ReRecord], out: W) -> Result<()> {
    write_jsonl(records, out)
}

pub fn read_ee_jsonl<R: BufRead>(input: R) -> Result<Vec<EeRecord>> {
    read_jsonl(input)
}

pub fn write_ee_jsonl<W: Write>(records: &[EeRecord], out: W) -> Result<()> {
    write_jsonl(records, out)
}

/// Entity types in order of first appearance.
pub fn conll_entity_types(sentences: &[ConllSentence]) -> Vec<String> {
    let mut seen = Vec::new();
    for s in sentences {
        for t in &s.tags {
            if let Some(ty) = t.strip_prefix("B-").or_else(|| t.strip_prefix("I-")) {
                if !seen.iter().any(|x: &String| x == ty) {
                    seen.push(ty.to_string());
                }
            }
        }
    }
    seen
}

pub fn ner_examples(sentences: &[ConllSentence], tags: &TagSet) -> Result<Vec<NerExample>> {
    sentences
        .iter()
        .map(|s| {
            Ok(NerExample {
                tokens: s.tokens.clone(),
                tags: s.tags.iter().map(|t| tags.parse(t)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn conll_sentence(tokens: &[String], tags: &[usize], tagset: &TagSet) -> ConllSentence {
    ConllSentence {
        tokens: tokens.to_vec(),
        tags: tags.iter().map(|&t| tagset.name(t)).collect(),
    }
}

/// Sorted relation labels, always including `no_relation`.
pub fn relation_labels(records: &[ReRecord]) -> Result<RelationLabels> {
    let mut set: BTreeSet<&str> = records.iter().map(|r| r.relation.as_str()).collect();
    set.insert(NO_RELATION);
    RelationLabels::new(set)
}

pub fn re_examples(records: &[ReRecord], labels: &RelationLabels) -> Result<Vec<ReExample>> {
    records
        .iter()
        .map(|r| {
            Ok(ReExample {
                input: ReInput {
                    tokens: r.tokens.clone(),
                    head: r.head,
                    tail: r.tail,
                },
                relation: labels.parse(&r.relation)?,
            })
        })
        .collect()
}

/// Label inventories in order of first appearance.
pub fn ee_schema(records: &[EeRecord]) -> EeSchema {
    fn add(list: &mut Vec<String>, v: &str) {
        if !list.iter().any(|x| x == v) {
            list.push(v.to_string());
        }
    }
    let mut schema = EeSchema {
        entity_types: Vec::new(),
        event_types: Vec::new(),
        roles: Vec::new(),
    };
    for r in records {
        r.entities.iter().for_each(|e| add(&mut schema.entity_types, &e.entity_type));
        r.triggers.iter().for_each(|t| add(&mut schema.event_types, &t.event_type));
        r.arguments.iter().for_each(|a| add(&mut schema.roles, &a.role));
    }
    schema
}

pub fn ee_examples(records: &[EeRecord], schema: &EeSchema) -> Result<Vec<EventExample>> {
    records
        .iter()
        .map(|r| {
            let graph = EventGraph {
                entities: r
                    .entities
                    .iter()
                    .map(|e| {
                        Ok(Span {
                            start: e.start,
                            end: e.end,
                            label: schema.entity_type(&e.entity_type)?,
                        })
                    })
                    .collect::<Result<_>>()?,
                triggers: r
                    .triggers
                    .iter()
                    .map(|t| {
                        Ok(Span {
                            start: t.start,
                            end: t.end,
                            label: schema.event_type(&t.event_type)?,
                        })
                    })
                    .collect::<Result<_>>()?,
                arguments: r
                    .arguments
                    .iter()
                    .map(|a| {
                        Ok(Argument {
                            trigger: a.trigger,
                            entity: a.entity,
                            role: schema.role(&a.role)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            };
            graph.validate(r.tokens.len(), schema)?;
            Ok(EventExample {
                tokens: r.tokens.clone(),
                graph,
            })
        })
        .collect()
}

pub fn ee_record(tokens: &[String], graph: &EventGraph, schema: &EeSchema) -> EeRecord {
    EeRecord {
        tokens: tokens.to_vec(),
        entities: graph
            .entities
            .iter()
            .map(|s| EntityRecord {
                start: s.start,
                end: s.end,
                entity_type: schema.entity_types[s.label].clone(),
            })
            .collect(),
        triggers: graph
            .triggers
            .iter()
            .map(|s| TriggerRecord {
                start: s.start,
                end: s.end,
                event_type: schema.event_types[s.label].clone(),
            })
            .collect(),
        arguments: graph
            .arguments
            .iter()
            .map(|a| ArgumentRecord {
                trigger: a.trigger,
                entity: a.entity,
                role: schema.roles[a.role].clone(),
            })
            .collect(),
    }
}
