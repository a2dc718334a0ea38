use awdlm::cache::{evaluate_with_cache, tune_cache, CacheConfig, CacheGrid};
use awdlm::corpus::Corpus;
use awdlm::harness::{synth, train, Profile, RunConfig};
use awdlm::model::{evaluate_ids, init_parameters, LMParameters, ModelDims};
use awdlm::numerics::Rng;

fn model(vocab: usize, seed: u64) -> LMParameters<f32> {
    let d = ModelDims {
        vocab,
        embed: 8,
        hidden: 12,
        layers: 2,
    };
    init_parameters(d, &mut Rng::new(seed)).unwrap()
}

#[test]
fn zero_lambda_equals_plain_evaluation() {
    let p = model(30, 1);
    let mut rng = Rng::new(2);
    let ids: Vec<usize> = (0..700).map(|_| rng.below(30)).collect();
    let plain = evaluate_ids(&p, &ids, 1, 25).unwrap();
    let cached = evaluate_with_cache(
        &p,
        &ids,
        &CacheConfig {
            window: 50,
            lambda: 0.0,
            theta: 1.0,
        },
        25,
    )
    .unwrap();
    assert_eq!(cached.result.perplexity.to_bits(), plain.perplexity.to_bits());
    assert_eq!(cached.losses.len(), ids.len() - 1);
    assert_eq!(cached.targets, ids[1..].to_vec());
}

#[test]
fn lambda_zero_only_grid_is_plain_evaluation() {
    let p = model(20, 3);
    let mut rng = Rng::new(4);
    let ids: Vec<usize> = (0..300).map(|_| rng.below(20)).collect();
    let grid = CacheGrid {
        windows: vec![10],
        lambdas: vec![0.0],
        thetas: vec![0.5],
    };
    let r = tune_cache(&p, &ids, &grid, 30).unwrap();
    assert_eq!(r.best.lambda, 0.0);
    let plain = evaluate_ids(&p, &ids, 1, 30).unwrap();
    assert_eq!(r.best_perplexity.to_bits(), plain.perplexity.to_bits());
}

#[test]
fn tuned_config_is_the_grid_minimum_and_re_evaluates() {
    let p = model(25, 5);
    let mut rng = Rng::new(6);
    let ids: Vec<usize> = (0..400).map(|_| rng.below(8) * 3).collect();
    let grid = CacheGrid {
        windows: vec![5, 40, 200],
        lambdas: vec![0.0, 0.1, 0.3],
        thetas: vec![0.3, 1.0],
    };
    let r = tune_cache(&p, &ids, &grid, 20).unwrap();
    assert_eq!(r.table.len(), 18);
    assert!(r.table.iter().all(|(_, ppl)| r.best_perplexity <= *ppl));
    assert!(r.best_perplexity <= r.baseline_perplexity);
    let again = evaluate_with_cache(&p, &ids, &r.best, 20).unwrap();
    assert!((again.result.perplexity - r.best_perplexity).abs() < 1e-9 * r.best_perplexity);
}

#[test]
fn repeated_token_stream_benefits_from_cache() {
    let text = "a a a a a a a a b\n".repeat(60);
    let corpus = Corpus::from_texts(&text, &text, &text).unwrap();
    let config = RunConfig {
        hidden: 8,
        embed: 4,
        bptt: 10,
        epochs: 2,
        ..RunConfig::profile(Profile::Tiny)
    };
    let t = train(config, corpus.clone(), None).unwrap();
    let p = t.eval_params().unwrap();
    let r = tune_cache(&p, &corpus.valid, &CacheGrid::default(), 10).unwrap();
    assert!(r.best.lambda > 0.0, "{:?}", r.best);
    assert!(r.best_perplexity <= r.baseline_perplexity);
}

#[test]
fn repetitive_documents_tune_to_positive_lambda() {
    let text = synth::repetitive_text(20, 200, 11);
    let [tr, va, te] = synth::split_lines(&text, [3_000, 600, 400]);
    let corpus = Corpus::from_texts(&tr, &va, &te).unwrap();
    let p: LMParameters<f32> = init_parameters(
        ModelDims {
            vocab: corpus.vocab.len(),
            embed: 8,
            hidden: 8,
            layers: 1,
        },
        &mut Rng::new(1),
    )
    .unwrap();
    let r = tune_cache(&p, &corpus.valid, &CacheGrid::default(), 20).unwrap();
    assert!(r.best.lambda > 0.0);
    assert!(r.best_perplexity < r.baseline_perplexity);
}
