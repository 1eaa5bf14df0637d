use super::*;
use crate::context::CaseEmbedding;
use rand::Rng;

fn store_from(vectors: &[(&str, Vec<f64>)]) -> EmbeddingStore {
    let mut s = EmbeddingStore::new("test", None, Default::default());
    for (id, v) in vectors {
        s.insert(CaseEmbedding {
            case_id: id.to_string(),
            vector: v.clone(),
            backend_tag: "test".into(),
            adapter_version: None,
            normalized: false,
        })
        .unwrap();
    }
    s
}

fn ex(q: &str, p: &str, easy: &[&str], hard: &[&str]) -> TrainingExample {
    TrainingExample {
        query_id: q.into(),
        positive_id: p.into(),
        easy_negative_ids: easy.iter().map(|s| s.to_string()).collect(),
        hard_negative_ids: hard.iter().map(|s| s.to_string()).collect(),
    }
}

fn random_store(rng: &mut ChaCha8Rng, ids: &[&str], dim: usize) -> EmbeddingStore {
    let vs: Vec<(&str, Vec<f64>)> = ids
        .iter()
        .map(|id| (*id, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    store_from(&vs)
}

const IDS: &[&str] = &["q1", "q2", "p1", "p2", "e1", "e2", "h1", "h2"];

#[test]
fn in_batch_expansion_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let store = random_store(&mut rng, IDS, 4);
    let batch = assemble_batch(&[ex("q1", "p1", &["e1"], &["h1"]), ex("q2", "p2", &["e2"], &["h2"])], &store, None).unwrap();
    for item in &batch.items {
        assert_eq!(item.easy.len(), 4);
        assert_eq!(item.hard.len(), 1);
    }
    let single = assemble_batch(&[ex("q1", "p1", &["e1"], &["h1"])], &store, None).unwrap();
    assert_eq!(single.items[0].easy.len(), 1);
}

#[test]
fn shared_positive_is_not_a_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let store = random_store(&mut rng, IDS, 4);
    let batch = assemble_batch(&[ex("q1", "p1", &["e1"], &["h1"]), ex("q2", "p1", &["e2"], &["h2"])], &store, None).unwrap();
    let p1 = batch.ids.iter().position(|i| i == "p1").unwrap();
    for item in &batch.items {
        assert!(!item.easy.contains(&p1) && !item.hard.contains(&p1));
        assert_eq!(item.easy.len(), 3);
    }
}

#[test]
fn known_relevant_ids_are_not_in_batch_negatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = random_store(&mut rng, IDS, 4);
    let mut qrels = Qrels::new();
    qrels.insert("q1", "p1");
    qrels.insert("q1", "p2");
    let batch = assemble_batch(&[ex("q1", "p1", &["e1"], &["h1"]), ex("q2", "p2", &["e2"], &["h2"])], &store, Some(&qrels)).unwrap();
    let p2 = batch.ids.iter().position(|i| i == "p2").unwrap();
    assert!(!batch.items[0].easy.contains(&p2));
    assert_eq!(batch.items[0].easy.len(), 3);
}

#[test]
fn collisions_fail_loudly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let store = random_store(&mut rng, IDS, 4);
    assert!(matches!(assemble_batch(&[ex("q1", "p1", &["p1"], &[])], &store, None), Err(Error::BatchConstruction(_))));
    assert!(matches!(assemble_batch(&[ex("q1", "p1", &["e1"], &["e1"])], &store, None), Err(Error::BatchConstruction(_))));
    assert!(matches!(assemble_batch(&[ex("q1", "p1", &["q1"], &[])], &store, None), Err(Error::BatchConstruction(_))));
    assert!(matches!(assemble_batch(&[ex("q1", "zz", &["e1"], &[])], &store, None), Err(Error::MissingEmbedding(_))));
}

#[test]
fn zero_adapter_under_dot_gives_uniform_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = random_store(&mut rng, IDS, 6);
    let batch = assemble_batch(&[ex("q1", "p1", &["e1"], &["h1"]), ex("q2", "p2", &["e2"], &["h2"])], &store, None).unwrap();
    let cfg = LossConfig {
        temperature: 0.05,
        similarity_kind: SimilarityKind::Dot,
    };
    let (loss, _) = loss_and_grad(&batch, &Adapter::zeros(6, 3), &cfg).unwrap();
    assert_eq!(loss, (1.0f64 + 4.0 + 1.0).ln());
}

fn slot(a: &mut Adapter, i: usize) -> &mut f64 {
    let n = a.weights.len();
    if i < n {
        &mut a.weights[i]
    } else {
        &mut a.bias[i - n]
    }
}

fn max_relative_fd_error(batch: &Batch, adapter: &Adapter, cfg: &LossConfig) -> f64 {
    let (_, grad) = loss_and_grad(batch, adapter, cfg).unwrap();
    let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut plus = adapter.clone();
        let mut minus = adapter.clone();
        let theta = if i < adapter.weights.len() { adapter.weights[i] } else { adapter.bias[i - adapter.weights.len()] };
        let h = 1e-4 * theta.abs().max(1.0);
        *slot(&mut plus, i) += h;
        *slot(&mut minus, i) -= h;
        let numeric = (batch_loss(batch, &plus, cfg).unwrap() - batch_loss(batch, &minus, cfg).unwrap()) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    for kind in [SimilarityKind::Dot, SimilarityKind::Cosine] {
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let store = random_store(&mut rng, IDS, 5);
            let batch = assemble_batch(&[ex("q1", "p1", &["e1"], &["h1"]), ex("q2", "p2", &["e2"], &["h2"])], &store, None).unwrap();
            let adapter = Adapter::init(5, 4, 0.3, seed);
            let cfg = LossConfig {
                temperature: 0.5,
                similarity_kind: kind,
            };
            let err = max_relative_fd_error(&batch, &adapter, &cfg);
            assert!(err < 1e-4, "{kind:?} seed {seed}: {err}");
        }
    }
}

fn toy_data() -> (EmbeddingStore, TrainingData) {
    // two clusters along separate axes, with noise
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut vs = Vec::new();
    let mut qrels = Qrels::new();
    let mut candidates = Vec::new();
    for c in 0..2 {
        for i in 0..5 {
            let id = format!("c{c}d{i}");
            let mut v: Vec<f64> = (0..12).map(|_| rng.random_range(-0.5..0.5)).collect();
            v[6 + c] += 1.0;
            vs.push((id.clone(), v));
            candidates.push(id.clone());
            qrels.insert(format!("c{c}q"), id);
        }
        let mut v: Vec<f64> = (0..12).map(|_| rng.random_range(-0.5..0.5)).collect();
        v[6 + c] += 1.0;
        vs.push((format!("c{c}q"), v));
    }
    let refs: Vec<(&str, Vec<f64>)> = vs.iter().map(|(a, b)| (a.as_str(), b.clone())).collect();
    let hard = BTreeMap::from([("c0q".to_string(), vec!["c1d0".to_string()]), ("c1q".to_string(), vec!["c0d0".to_string()])]);
    (
        store_from(&refs),
        TrainingData {
            qrels,
            candidates,
            hard_negatives: hard,
        },
    )
}

fn toy_cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        output_dim: 6,
        lr: 1e-2,
        temperature: 0.1,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_steps_returns_initialization() {
    let (store, data) = toy_data();
    let cfg = toy_cfg(0);
    let state = train(&store, &data, &cfg, &TrainOptions::default()).unwrap();
    assert_eq!(state.adapter, Adapter::init(12, 6, cfg.init_noise, cfg.seed));
    assert!(state.loss_history.is_empty());
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let (store, data) = toy_data();
    let cfg = toy_cfg(150);
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
    };
    let cfg = TrainConfig { checkpoint_every: 50, ..cfg };
    let a = train(&store, &data, &cfg, &opts).unwrap();
    let b = train(&store, &data, &cfg, &TrainOptions::default()).unwrap();
    assert_eq!(a.adapter, b.adapter);
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.step, 150);
    let examples = data.evaluation_examples(1, cfg.seed).unwrap();
    let initial = evaluation_loss(&examples, &store, &Adapter::init(12, 6, cfg.init_noise, cfg.seed), &cfg.loss_config()).unwrap();
    let trained = evaluation_loss(&examples, &store, &a.adapter, &cfg.loss_config()).unwrap();
    assert!(trained < initial, "{trained} >= {initial}");
    let ckpt = Checkpoint::load(&checkpoint_path(dir.path(), cfg.seed, 150)).unwrap();
    assert_eq!(ckpt.adapter.weights, a.adapter.weights);
    assert_eq!(ckpt.step, 150);
    assert!(checkpoint_path(dir.path(), cfg.seed, 50).exists());
}

#[test]
fn missing_embeddings_are_reported() {
    let (store, mut data) = toy_data();
    data.candidates.push("ghost".into());
    assert!(matches!(train(&store, &data, &toy_cfg(1), &TrainOptions::default()), Err(Error::MissingEmbedding(_))));
}

#[test]
fn divergence_aborts_with_step() {
    let (store, data) = toy_data();
    let cfg = TrainConfig { lr: 1e300, ..toy_cfg(5) };
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
    };
    match train(&store, &data, &cfg, &opts) {
        Err(Error::Divergence { step, .. }) => assert!(step >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}
