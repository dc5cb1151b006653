use grail_core::ee::{Argument, EeModel, EeSchema, EventGraph};
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::math::{finite_difference_grad, max_relative_error, ParameterVector};
use grail_core::ner::{NerModel, Span, TagSet};
use grail_core::re::{ReInput, ReModel, RelationLabels};
use grail_core::{gradient_check, TaskModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
const DRAWS: usize = 12;
const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn small_config() -> EncoderConfig {
    EncoderConfig {
        emb_dim: 4,
        window: 1,
        hidden_dim: 5,
        max_len: 16,
    }
}

fn vocab() -> Vocabulary {
    // "omega" stays out of the vocabulary so sentences also exercise [UNK].
    Vocabulary::build([WORDS.to_vec()], 1).unwrap()
}

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.1) {
                "omega".to_string()
            } else {
                WORDS[rng.gen_range(0..WORDS.len())].to_string()
            }
        })
        .collect()
}

fn jitter(params: &mut ParameterVector, rng: &mut ChaCha8Rng) {
    for v in params.values_mut().iter_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
}

fn random_spans(rng: &mut ChaCha8Rng, len: usize, types: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.gen_bool(0.4) {
            let end = (i + rng.gen_range(1..=2)).min(len);
            spans.push(Span {
                start: i,
                end,
                label: rng.gen_range(0..types),
            });
            i = end;
        } else {
            i += 1;
        }
    }
    spans
}

#[test]
fn ner_gradients_match_finite_differences() {
    let tags = TagSet::new(["PER", "LOC"]).unwrap();
    let model = NerModel::new(vocab(), tags.clone(), small_config());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for draw in 0..DRAWS {
        let mut params = model.init_params(draw as u64);
        jitter(&mut params, &mut rng);
        let len = rng.gen_range(1..=6);
        let tokens = sentence(&mut rng, len);
        let gold = if draw % 3 == 0 {
            // arbitrary, possibly BIO-invalid targets are still differentiable
            (0..len).map(|_| rng.gen_range(0..tags.len())).collect()
        } else {
            tags.encode_spans(len, &random_spans(&mut rng, len, 2)).unwrap()
        };
        worst = worst.max(gradient_check(&model, &params, &tokens, &gold, EPS).unwrap());
    }
    assert!(worst < TOL, "NER max relative error {worst:e}");
}

#[test]
fn ner_batch_gradient_matches_finite_differences() {
    let tags = TagSet::new(["PER"]).unwrap();
    let model = NerModel::new(vocab(), tags, small_config());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = model.init_params(1);
    jitter(&mut params, &mut rng);
    let batch: Vec<(Vec<String>, Vec<usize>)> = [2, 5, 3]
        .iter()
        .map(|&n| (sentence(&mut rng, n), (0..n).map(|i| i % 3).collect()))
        .collect();
    let (_, analytic) = model.batch_loss_and_grad(&params, &batch).unwrap();
    let numeric = finite_difference_grad(&params, EPS, |p| model.batch_loss_and_grad(p, &batch).unwrap().0).unwrap();
    let err = max_relative_error(&analytic, &numeric).unwrap();
    assert!(err < TOL, "batch error {err:e}");
}

#[test]
fn re_gradients_match_finite_differences() {
    let labels = RelationLabels::new(["founded_by", "no_relation", "lives_in"]).unwrap();
    let model = ReModel::new(vocab(), labels.clone(), small_config());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for draw in 0..DRAWS {
        let mut params = model.init_params(draw as u64);
        jitter(&mut params, &mut rng);
        let len = rng.gen_range(2..=7);
        let tokens = sentence(&mut rng, len);
        let cut = rng.gen_range(1..len);
        let head_first = rng.gen_bool(0.5);
        let left = (rng.gen_range(0..cut), cut);
        let right = (cut, rng.gen_range(cut + 1..=len));
        let (head, tail) = if head_first { (left, right) } else { (right, left) };
        let input = ReInput { tokens, head, tail };
        let relation = rng.gen_range(0..labels.len());
        worst = worst.max(gradient_check(&model, &params, &input, &relation, EPS).unwrap());
    }
    assert!(worst < TOL, "RE max relative error {worst:e}");
}

fn schema() -> EeSchema {
    EeSchema {
        entity_types: vec!["PER".into(), "LOC".into()],
        event_types: vec!["Attack".into(), "Meet".into()],
        roles: vec!["Agent".into(), "Place".into()],
    }
}

fn random_graph(rng: &mut ChaCha8Rng, len: usize) -> EventGraph {
    let spans = random_spans(rng, len, 2);
    let mut graph = EventGraph::default();
    for s in spans {
        if rng.gen_bool(0.4) {
            graph.triggers.push(s);
        } else {
            graph.entities.push(s);
        }
    }
    for t in 0..graph.triggers.len() {
        for e in 0..graph.entities.len() {
            if rng.gen_bool(0.5) {
                graph.arguments.push(Argument {
                    trigger: t,
                    entity: e,
                    role: rng.gen_range(0..2),
                });
            }
        }
    }
    graph
}

#[test]
fn ee_gradients_match_finite_differences() {
    let model = EeModel::new(vocab(), schema(), small_config(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let mut with_edges = 0;
    for draw in 0..DRAWS {
        let mut params = model.init_params(draw as u64);
        jitter(&mut params, &mut rng);
        let len = rng.gen_range(1..=6);
        let tokens = sentence(&mut rng, len);
        let graph = random_graph(&mut rng, len);
        with_edges += usize::from(!graph.triggers.is_empty() && !graph.entities.is_empty());
        worst = worst.max(gradient_check(&model, &params, &tokens, &graph, EPS).unwrap());
    }
    assert!(with_edges > 0);
    assert!(worst < TOL, "EE max relative error {worst:e}");
}

#[test]
fn ee_empty_graph_still_has_identification_loss() {
    let model = EeModel::new(vocab(), schema(), small_config(), 4).unwrap();
    let params = model.init_params(3);
    let tokens = vec!["alpha".to_string(), "beta".to_string()];
    let (loss, grad) = model.loss_and_grad(&params, &tokens, &EventGraph::default()).unwrap();
    assert!(loss > 0.0);
    assert!(grad.norm() > 0.0);
}
