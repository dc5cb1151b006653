use grail_core::data::{
    conll_entity_types, generate_synthetic, ner_examples, segment_unlabeled, stratified_split,
    Lexicon, SplitMode, SplitSpec, SynthCorpus, SynthSpec, SynthTask,
};
use grail_core::ee::CrfView;
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::math::{AdamW, AdamWConfig, GradientVector, ParameterVector};
use grail_core::ner::{decode_spans, span_f1, NerModel, Span, TagSet};
use grail_core::re::{insert_markers, relation_f1, ReInput, RelationLabels};
use grail_core::TaskModel;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

fn config() -> EncoderConfig {
    EncoderConfig {
        emb_dim: 3,
        window: 2,
        hidden_dim: 4,
        max_len: 32,
    }
}

/// Non-overlapping spans over `len` tokens drawn from a seed.
fn spans_from(seed: u64, len: usize, types: usize) -> Vec<Span> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.gen_bool(0.5) {
            let end = (i + rng.gen_range(1..=3)).min(len);
            out.push(Span { start: i, end, label: rng.gen_range(0..types) });
            i = end;
        } else {
            i += 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_gradient_without_decay_keeps_parameters(values in prop::collection::vec(-5.0f64..5.0, 1..40), steps in 1usize..5) {
        let mut b = grail_core::math::Layout::builder();
        b.push("p", &[values.len()]);
        let layout = b.build();
        let mut params = ParameterVector::from_values(layout.clone(), values.clone()).unwrap();
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() }, values.len());
        for _ in 0..steps {
            opt.step(&mut params, &GradientVector::zeros(layout.clone())).unwrap();
        }
        prop_assert_eq!(params.values(), &values[..]);
    }

    #[test]
    fn encoder_is_pure_and_local(seed in 0u64..10_000, len in 1usize..12, pos in 0usize..12) {
        let pos = pos % len;
        let vocab = Vocabulary::build([words(10)], 1).unwrap();
        let model = NerModel::new(vocab, TagSet::new(["A"]).unwrap(), config());
        let params = model.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..16)).collect();
        let enc = model.encoder();
        let a = enc.encode(&ids, &params).unwrap();
        let again = enc.encode(&ids, &params).unwrap();
        prop_assert_eq!(a.matrix(), again.matrix());
        let mut changed = ids.clone();
        changed[pos] = (ids[pos] + 1) % 16;
        let b = enc.encode(&changed, &params).unwrap();
        let k = config().window;
        for i in 0..len {
            if i.abs_diff(pos) > k {
                prop_assert_eq!(a.row(i), b.row(i));
            }
        }
    }

    #[test]
    fn spans_round_trip_through_tags(seed in 0u64..10_000, len in 1usize..20, types in 1usize..5) {
        let tags = TagSet::new((0..types).map(|t| format!("T{t}"))).unwrap();
        let spans = spans_from(seed, len, types);
        let seq = tags.encode_spans(len, &spans).unwrap();
        prop_assert!(tags.is_valid(&seq));
        prop_assert_eq!(decode_spans(&tags, &seq), spans);
    }

    #[test]
    fn ner_loss_at_zero_parameters_is_log_tag_count(seed in 0u64..10_000, len in 1usize..10, types in 1usize..5) {
        let tags = TagSet::new((0..types).map(|t| format!("T{t}"))).unwrap();
        let vocab = Vocabulary::build([words(6)], 1).unwrap();
        let model = NerModel::new(vocab, tags.clone(), config());
        let zero = ParameterVector::zeros(model.layout().clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..9))).collect();
        let gold: Vec<usize> = (0..len).map(|_| rng.gen_range(0..tags.len())).collect();
        let loss = model.loss(&zero, &tokens, &gold).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!((loss - (tags.len() as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn span_precision_and_recall_swap(seed in 0u64..10_000, n in 1usize..8) {
        let pred: Vec<Vec<Span>> = (0..n).map(|i| spans_from(seed + i as u64, 8, 2)).collect();
        let gold: Vec<Vec<Span>> = (0..n).map(|i| spans_from(seed * 31 + i as u64, 8, 2)).collect();
        let a = span_f1(&pred, &gold).unwrap();
        let b = span_f1(&gold, &pred).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
    }

    #[test]
    fn markers_keep_the_sentence_as_a_subsequence(len in 2usize..12, a in 0usize..12, b in 0usize..12, c in 0usize..12) {
        let mut cuts = [a % (len + 1), b % (len + 1), c % (len + 1)];
        cuts.sort();
        prop_assume!(cuts[0] < cuts[1]);
        let first = (cuts[0], cuts[1]);
        let second = (cuts[1], cuts[2].max(cuts[1] + 1).min(len));
        prop_assume!(second.0 < second.1);
        let tokens = words(len);
        for (head, tail) in [(first, second), (second, first)] {
            let marked = insert_markers(&ReInput { tokens: tokens.clone(), head, tail }).unwrap();
            let kept: Vec<&String> = marked.tokens.iter().filter(|t| t.starts_with('w')).collect();
            prop_assert_eq!(kept, tokens.iter().collect::<Vec<_>>());
            prop_assert_eq!(marked.tokens.len(), len + 4);
        }
    }

    #[test]
    fn relation_f1_ignores_pair_order(seed in 0u64..10_000, n in 1usize..30) {
        let labels = RelationLabels::new(["a", "b", "no_relation"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|_| (rng.gen_range(0..3), rng.gen_range(0..3))).collect();
        let split = |p: &[(usize, usize)]| -> (Vec<usize>, Vec<usize>) { p.iter().copied().unzip() };
        let (p1, g1) = split(&pairs);
        pairs.shuffle(&mut rng);
        let (p2, g2) = split(&pairs);
        prop_assert_eq!(relation_f1(&p1, &g1, &labels).unwrap(), relation_f1(&p2, &g2, &labels).unwrap());
    }

    #[test]
    fn crf_nll_is_non_negative(seed in 0u64..10_000, n in 1usize..5, len in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let em: Vec<f64> = (0..n * len).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let tr: Vec<f64> = (0..(n + 2) * (n + 2)).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let gold: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let crf = CrfView::new(&em, &tr, n).unwrap();
        prop_assert!(crf.nll(&gold).unwrap() >= 0.0);
    }

    #[test]
    fn splits_are_disjoint_and_reproducible(seed in 0u64..1_000, n in 20usize..120, frac in 0.05f64..0.4, unl in 0.1f64..0.5) {
        let items: Vec<usize> = (0..n).collect();
        let key = |i: &usize| if i % 7 == 0 { None } else { Some(format!("c{}", i % 3)) };
        let spec = SplitSpec { mode: SplitMode::Fraction(frac), unlabeled_fraction: unl, segments: 4, seed };
        let a = stratified_split(&items, key, &spec).unwrap();
        let b = stratified_split(&items, key, &spec).unwrap();
        prop_assert_eq!(&a.labeled, &b.labeled);
        prop_assert_eq!(&a.unlabeled, &b.unlabeled);
        let mut all: Vec<usize> = a.labeled.iter().chain(&a.unlabeled).chain(&a.held_back).copied().collect();
        all.sort();
        prop_assert_eq!(all, items.clone());
        let segs = segment_unlabeled(&a.unlabeled, 4, seed).unwrap();
        prop_assert_eq!(&segs, &segment_unlabeled(&a.unlabeled, 4, seed).unwrap());
        let mut flat: Vec<usize> = segs.concat();
        flat.sort();
        let mut unlabeled = a.unlabeled.clone();
        unlabeled.sort();
        prop_assert_eq!(flat, unlabeled);
    }
}

/// Aligns `tokens` to a template, filling each `<TYPE>` slot with a
/// lexicon entry of that type. Returns the slot spans of the first alignment.
fn align(pieces: &[&str], tokens: &[String], at: usize, types: &[String], lexicon: &Lexicon) -> Option<Vec<Span>> {
    let Some((piece, rest)) = pieces.split_first() else {
        return (at == tokens.len()).then(Vec::new);
    };
    match piece.strip_prefix('<').and_then(|p| p.strip_suffix('>')) {
        Some(ty) => {
            let label = types.iter().position(|t| t == ty)?;
            for entry in lexicon.entries(ty) {
                if tokens[at..].starts_with(&entry) {
                    if let Some(mut spans) = align(rest, tokens, at + entry.len(), types, lexicon) {
                        spans.insert(0, Span { start: at, end: at + entry.len(), label });
                        return Some(spans);
                    }
                }
            }
            None
        }
        None => (tokens.get(at).map(String::as_str) == Some(*piece))
            .then(|| align(rest, tokens, at + 1, types, lexicon))
            .flatten(),
    }
}

#[test]
fn noise_free_synthetic_ner_is_recovered_from_its_templates() {
    let templates = grail_core::data::templates(SynthTask::Ner);
    for seed in 0..3 {
        let spec = SynthSpec::new(SynthTask::Ner, 300, seed);
        let SynthCorpus::Ner(corpus) = generate_synthetic(&spec).unwrap() else { unreachable!() };
        let records: Vec<_> = corpus.iter().map(|g| g.record.clone()).collect();
        let types = conll_entity_types(&records);
        let tags = TagSet::new(types.clone()).unwrap();
        let lexicon = Lexicon::new(spec.lexicon_size);
        let examples = ner_examples(&records, &tags).unwrap();
        let gold: Vec<Vec<Span>> = examples.iter().map(|e| decode_spans(&tags, &e.tags)).collect();
        let pred: Vec<Vec<Span>> = corpus
            .iter()
            .zip(&examples)
            .map(|(g, e)| {
                let pieces: Vec<&str> = templates[g.template].text.split_whitespace().collect();
                align(&pieces, &e.tokens, 0, &types, &lexicon).expect("sentence matches its template")
            })
            .collect();
        assert_eq!(span_f1(&pred, &gold).unwrap().f1, 1.0, "seed {seed}");
    }
}
