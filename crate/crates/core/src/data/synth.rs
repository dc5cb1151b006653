//! Template-based synthetic corpora with gold labels.
//!
//! A template is a whitespace-separated string. `<TYPE>` is an entity slot,
//! `<TYPE:h>` / `<TYPE:t>` mark the head and tail of a relation template,
//! `<TYPE:Role>` marks an event argument, and `{Event}` is the trigger slot.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{ArgumentRecord, ConllSentence, EeRecord, EntityRecord, ReRecord, TriggerRecord};
use crate::error::{Error, Result};
use crate::re::NO_RELATION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTask {
    Ner,
    Re,
    Ee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateChoice {
    /// Sentence `i` uses template `i mod n`.
    RoundRobin,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub task: SynthTask,
    pub template_set: String,
    /// Entries per entity type.
    pub lexicon_size: usize,
    pub sentences: usize,
    pub noise: f64,
    pub seed: u64,
    pub choice: TemplateChoice,
}

impl SynthSpec {
    pub fn new(task: SynthTask, sentences: usize, seed: u64) -> Self {
        SynthSpec {
            task,
            template_set: "default".into(),
            lexicon_size: 40,
            sentences,
            noise: 0.0,
            seed,
            choice: TemplateChoice::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.template_set != "default" {
            return Err(Error::InvalidArgument(format!(
                "unknown template set `{}`",
                self.template_set
            )));
        }
        if self.lexicon_size == 0 || self.lexicon_size > 144 {
            return Err(Error::InvalidArgument(format!(
                "lexicon size {} outside 1..=144",
                self.lexicon_size
            )));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!("noise rate {} outside [0, 1)", self.noise)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub text: &'static str,
    /// Relation label of relation templates.
    pub relation: Option<&'static str>,
}

const fn t(text: &'static str) -> Template {
    Template { text, relation: None }
}

const fn r(text: &'static str, relation: &'static str) -> Template {
    Template {
        text,
        relation: Some(relation),
    }
}

const NER_TEMPLATES: &[Template] = &[
    t("<PER> visited <LOC> on <DATE> ."),
    t("<ORG> hired <PER> in <DATE> ."),
    t("<PER> works for <ORG> in <LOC> ."),
    t("the office of <ORG> opened in <LOC> ."),
    t("on <DATE> , <PER> met <PER> ."),
    t("<ORG> announced record profits on <DATE> ."),
    t("<PER> moved from <LOC> to <LOC> ."),
    t("officials in <LOC> praised <ORG> ."),
];

const RE_TEMPLATES: &[Template] = &[
    r("<PER:h> founded <ORG:t> in <DATE> .", "founded_by"),
    r("<ORG:t> was founded by <PER:h> .", "founded_by"),
    r("<PER:h> works for <ORG:t> .", "works_for"),
    r("<PER:h> joined <ORG:t> as an engineer .", "works_for"),
    r("<PER:h> lives in <LOC:t> .", "lives_in"),
    r("<ORG:h> is based in <LOC:t> .", "based_in"),
    r("<PER:h> met <PER:t> in <LOC> .", NO_RELATION),
    r("<PER:h> visited <LOC:t> on <DATE> .", NO_RELATION),
];

const EE_TEMPLATES: &[Template] = &[
    t("<ORG:Attacker> {Attack} <LOC:Place> ."),
    t("<ORG:Attacker> {Attack} <ORG:Target> near <LOC:Place> ."),
    t("<PER> said that <ORG:Attacker> {Attack} <LOC:Place> ."),
    t("<PER:Artifact> {Transport} to <LOC:Destination> ."),
    t("<PER:Entity> {Meet} <PER:Entity> in <LOC:Place> ."),
    t("<PER> lives in <LOC> ."),
];

const VERBS: &[(&str, &[&str])] = &[
    ("Attack", &["attacked", "bombed", "raided", "struck"]),
    ("Transport", &["traveled", "moved", "flew", "drove"]),
    ("Meet", &["met", "greeted", "joined"]),
];

pub fn templates(task: SynthTask) -> &'static [Template] {
    match task {
        SynthTask::Ner => NER_TEMPLATES,
        SynthTask::Re => RE_TEMPLATES,
        SynthTask::Ee => EE_TEMPLATES,
    }
}

pub fn trigger_words(event: &str) -> &'static [&'static str] {
    VERBS.iter().find(|(e, _)| *e == event).map_or(&[], |(_, v)| v)
}

/// Label inventories of a task's template set.
pub fn entity_types(task: SynthTask) -> Vec<&'static str> {
    match task {
        SynthTask::Ner | SynthTask::Re => vec!["PER", "ORG", "LOC", "DATE"],
        SynthTask::Ee => vec!["PER", "ORG", "LOC"],
    }
}

pub fn event_types() -> Vec<&'static str> {
    VERBS.iter().map(|(e, _)| *e).collect()
}

pub fn roles() -> Vec<&'static str> {
    vec!["Attacker", "Target", "Place", "Artifact", "Destination", "Entity"]
}

pub fn relations() -> Vec<&'static str> {
    vec!["founded_by", "works_for", "lives_in", "based_in", NO_RELATION]
}

const SYLLABLES: [&str; 12] = ["ba", "de", "ki", "lo", "mu", "ra", "se", "ti", "vo", "za", "ne", "pu"];
const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];

fn word(i: usize, salt: usize) -> String {
    let a = SYLLABLES[(i + 5 * salt) % 12];
    let b = SYLLABLES[(i / 12 + 7 * salt) % 12];
    let mut w = String::with_capacity(a.len() + b.len());
    w.push_str(&a[..1].to_uppercase());
    w.push_str(&a[1..]);
    w.push_str(b);
    w
}

/// Deterministic lexicon of multi-token entity names per type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    size: usize,
}

impl Lexicon {
    pub fn new(size: usize) -> Self {
        Lexicon { size }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn entry(&self, ty: &str, i: usize) -> Vec<String> {
        match ty {
            "PER" if i % 2 == 1 => vec![word(i, 0), word(i * 7 + 3, 1)],
            "PER" => vec![word(i, 0)],
            "LOC" if i % 4 == 3 => vec!["New".into(), word(i, 2)],
            "LOC" => vec![word(i, 2)],
            "ORG" => match i % 3 {
                0 => vec![word(i, 3), "Corp".into()],
                1 => vec![word(i, 2), "Bank".into()],
                _ => vec![word(i, 3)],
            },
            "DATE" => vec![MONTHS[i % 12].into(), (1 + (i * 5) % 28).to_string()],
            other => vec![format!("{other}{i}")],
        }
    }

    pub fn entries(&self, ty: &str) -> Vec<Vec<String>> {
        (0..self.size).map(|i| self.entry(ty, i)).collect()
    }
}

/// A generated record and the template it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated<R> {
    pub template: usize,
    pub record: R,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthCorpus {
    Ner(Vec<Generated<ConllSentence>>),
    Re(Vec<Generated<ReRecord>>),
    Ee(Vec<Generated<EeRecord>>),
}

impl SynthCorpus {
    pub fn len(&self) -> usize {
        match self {
            SynthCorpus::Ner(v) => v.len(),
            SynthCorpus::Re(v) => v.len(),
            SynthCorpus::Ee(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn template_ids(&self) -> Vec<usize> {
        match self {
            SynthCorpus::Ner(v) => v.iter().map(|g| g.template).collect(),
            SynthCorpus::Re(v) => v.iter().map(|g| g.template).collect(),
            SynthCorpus::Ee(v) => v.iter().map(|g| g.template).collect(),
        }
    }
}

enum Piece<'a> {
    Word(&'a str),
    Entity { ty: &'a str, tag: Option<&'a str> },
    Trigger(&'a str),
}

fn parse_piece(piece: &str) -> Piece<'_> {
    if let Some(inner) = piece.strip_prefix('<').and_then(|p| p.strip_suffix('>')) {
        match inner.split_once(':') {
            Some((ty, tag)) => Piece::Entity { ty, tag: Some(tag) },
            None => Piece::Entity { ty: inner, tag: None },
        }
    } else if let Some(ev) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
        Piece::Trigger(ev)
    } else {
        Piece::Word(piece)
    }
}

/// Replaces `label` by a uniformly drawn different member of `labels` with
/// probability `p`.
fn corrupt<'a, R: Rng>(label: &'a str, labels: &[&'a str], p: f64, rng: &mut R) -> &'a str {
    if p > 0.0 && labels.len() > 1 && rng.gen_bool(p) {
        let others: Vec<&str> = labels.iter().copied().filter(|l| *l != label).collect();
        others.choose(rng).copied().unwrap_or(label)
    } else {
        label
    }
}

struct Instance<'a> {
    tokens: Vec<String>,
    /// (start, end, type, slot tag)
    entities: Vec<(usize, usize, &'a str, Option<&'a str>)>,
    trigger: Option<(usize, &'a str)>,
}

fn instantiate<'a, R: Rng>(template: &'a Template, lexicon: &Lexicon, rng: &mut R) -> Instance<'a> {
    let mut inst = Instance {
        tokens: Vec::new(),
        entities: Vec::new(),
        trigger: None,
    };
    for piece in template.text.split_whitespace() {
        match parse_piece(piece) {
            Piece::Word(w) => inst.tokens.push(w.to_string()),
            Piece::Entity { ty, tag } => {
                let start = inst.tokens.len();
                inst.tokens.extend(lexicon.entry(ty, rng.gen_range(0..lexicon.len())));
                inst.entities.push((start, inst.tokens.len(), ty, tag));
            }
            Piece::Trigger(ev) => {
                let verbs = trigger_words(ev);
                inst.trigger = Some((inst.tokens.len(), ev));
                inst.tokens.push(verbs[rng.gen_range(0..verbs.len())].to_string());
            }
        }
    }
    inst
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lexicon = Lexicon::new(spec.lexicon_size);
    let set = templates(spec.task);
    let pick = |i: usize, rng: &mut ChaCha8Rng| match spec.choice {
        TemplateChoice::RoundRobin => i % set.len(),
        TemplateChoice::Random => rng.gen_range(0..set.len()),
    };
    let p = spec.noise;
    let ent_types = entity_types(spec.task);
    Ok(match spec.task {
        SynthTask::Ner => SynthCorpus::Ner(
            (0..spec.sentences)
                .map(|i| {
                    let template = pick(i, &mut rng);
                    let inst = instantiate(&set[template], &lexicon, &mut rng);
                    let mut tags = vec!["O".to_string(); inst.tokens.len()];
                    for &(s, e, ty, _) in &inst.entities {
                        let ty = corrupt(ty, &ent_types, p, &mut rng);
                        tags[s] = format!("B-{ty}");
                        for tag in &mut tags[s + 1..e] {
                            *tag = format!("I-{ty}");
                        }
                    }
                    Generated {
                        template,
                        record: ConllSentence {
                            tokens: inst.tokens,
                            tags,
                        },
                    }
                })
                .collect(),
        ),
        SynthTask::Re => {
            let labels = relations();
            SynthCorpus::Re(
                (0..spec.sentences)
                    .map(|i| {
                        let template = pick(i, &mut rng);
                        let inst = instantiate(&set[template], &lexicon, &mut rng);
                        let span = |which: &str| {
                            inst.entities
                                .iter()
                                .find(|e| e.3 == Some(which))
                                .map(|e| (e.0, e.1))
                                .expect("relation templates mark a head and a tail")
                        };
                        let gold = set[template].relation.unwrap_or(NO_RELATION);
                        Generated {
                            template,
                            record: ReRecord {
                                head: span("h"),
                                tail: span("t"),
                                relation: corrupt(gold, &labels, p, &mut rng).to_string(),
                                tokens: inst.tokens,
                            },
                        }
                    })
                    .collect(),
            )
        }
        SynthTask::Ee => {
            let events = event_types();
            let role_names = roles();
            SynthCorpus::Ee(
                (0..spec.sentences)
                    .map(|i| {
                        let template = pick(i, &mut rng);
                        let inst = instantiate(&set[template], &lexicon, &mut rng);
                        let mut record = EeRecord {
                            tokens: inst.tokens.clone(),
                            entities: Vec::new(),
                            triggers: Vec::new(),
                            arguments: Vec::new(),
                        };
                        for &(s, e, ty, _) in &inst.entities {
                            record.entities.push(EntityRecord {
                                start: s,
                                end: e,
                                entity_type: corrupt(ty, &ent_types, p, &mut rng).to_string(),
                            });
                        }
                        if let Some((pos, ev)) = inst.trigger {
                            record.triggers.push(TriggerRecord {
                                start: pos,
                                end: pos + 1,
                                event_type: corrupt(ev, &events, p, &mut rng).to_string(),
                            });
                            for (j, &(_, _, _, role)) in inst.entities.iter().enumerate() {
                                if let Some(role) = role {
                                    record.arguments.push(ArgumentRecord {
                                        trigger: 0,
                                        entity: j,
                                        role: corrupt(role, &role_names, p, &mut rng).to_string(),
                                    });
                                }
                            }
                        }
                        Generated { template, record }
                    })
                    .collect(),
            )
        }
    })
}
