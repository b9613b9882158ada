mod common;

use common::{TopicModel, TopicSpec};
use senseforge::corpus_file::{build_vocab, count_tokens, encode_corpus, TokenizeOptions};
use senseforge::hogwild::{shard_bounds, train_parallel, AtomicParams};
use senseforge::progress::LossLog;
use senseforge_core::corpus::BOUNDARY;
use senseforge_core::trainer::{self, init_params, shard_rng, EpochLosses, RunningLoss, TrainSetup};
use senseforge_core::{AttentionMode, TrainConfig, Vocabulary};

fn small_spec() -> TopicSpec {
    TopicSpec {
        groups: 3,
        topics_per_group: 2,
        topic_words: 20,
        group_words: 10,
        function_words: 10,
        polysemes: 4,
        ..TopicSpec::default()
    }
}

fn corpus(tokens: usize) -> (tempfile::TempDir, Vocabulary, Vec<u32>) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    TopicModel::new(small_spec(), 3).write_corpus(&path, tokens, 4, |w| w);
    let opts = TokenizeOptions::default();
    let vocab = build_vocab(&path, &opts, usize::MAX, 1).unwrap();
    let ids = encode_corpus(&path, &opts, &vocab).unwrap();
    (dir, vocab, ids)
}

fn config() -> TrainConfig {
    TrainConfig {
        dim: 12,
        senses: 2,
        epochs: 3,
        subsample: 1e-2,
        initial_lr: 0.002,
        batch: 64,
        ..TrainConfig::default()
    }
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn corpus_lines_and_boundary_tokens_split_windows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, "The cat <s> sat\n\nthe DOG zzz\n").unwrap();
    let opts = TokenizeOptions {
        lowercase: true,
        boundary: Some("<s>".into()),
        line_boundaries: true,
    };
    let counts = count_tokens(&path, &opts).unwrap();
    assert_eq!(counts["the"], 2);
    assert!(!counts.contains_key("<s>"));
    let vocab = Vocabulary::from_count_table(counts.into_iter().filter(|(w, _)| w != "zzz"), usize::MAX, 1);
    let ids = encode_corpus(&path, &opts, &vocab).unwrap();
    let id = |w: &str| vocab.id(w).unwrap();
    assert_eq!(ids, [id("the"), id("cat"), BOUNDARY, id("sat"), BOUNDARY, id("the"), id("dog")]);

    let stream = TokenizeOptions { line_boundaries: false, ..opts };
    let ids = encode_corpus(&path, &stream, &vocab).unwrap();
    assert_eq!(ids, [id("the"), id("cat"), BOUNDARY, id("sat"), id("the"), id("dog")]);
}

#[test]
fn single_thread_delegates_to_the_deterministic_trainer() {
    let (_d, vocab, ids) = corpus(20_000);
    let cfg = config();
    let a = train_parallel(&ids, &vocab, &cfg, None, 1, &mut EpochLosses::default()).unwrap();
    let b = trainer::train(&ids, &vocab, &cfg, None, &mut ()).unwrap();
    assert_eq!(bits(a.sense_data()), bits(b.sense_data()));
    assert_eq!(bits(a.context_data()), bits(b.context_data()));
}

#[test]
fn atomic_store_matches_owned_store_single_threaded() {
    let (_d, vocab, ids) = corpus(10_000);
    let cfg = config();
    let setup = TrainSetup::new(&vocab, &cfg, None).unwrap();
    let init = init_params(vocab.len(), cfg.senses, cfg.dim, 5);
    let shared = AtomicParams::new(&init);
    let mut owned = init.clone();
    let total = ids.len() as f64;
    for (store_is_atomic, seen) in [(true, 0usize), (false, 0usize)] {
        let mut seen = seen;
        let mut progress = |s: usize| {
            seen += s;
            seen as f64 / total
        };
        let mut rng = shard_rng(5, 0);
        let mut running = RunningLoss::new(10);
        if store_is_atomic {
            let mut store = &shared;
            trainer::train_shard(&mut store, &ids, 0, &setup, &mut rng, &mut progress, &mut running, &mut ()).unwrap();
        } else {
            trainer::train_shard(&mut owned, &ids, 0, &setup, &mut rng, &mut progress, &mut running, &mut ()).unwrap();
        }
    }
    let snap = shared.snapshot();
    assert_eq!(bits(snap.sense_data()), bits(owned.sense_data()));
    assert_eq!(bits(snap.context_data()), bits(owned.context_data()));
}

#[test]
fn hogwild_training_stays_finite_and_learns() {
    let (_d, vocab, ids) = corpus(60_000);
    for mode in [AttentionMode::sasi(), AttentionMode::gasi(0.5), AttentionMode::default()] {
        let cfg = TrainConfig { mode, ..config() };
        let mut losses = EpochLosses::default();
        let p = train_parallel(&ids, &vocab, &cfg, None, 3, &mut losses).unwrap();
        assert!(p.find_non_finite().is_none());
        assert_eq!(losses.0.len(), 3);
        assert!(losses.0[2] < losses.0[0], "{:?}", losses.0);
    }
}

#[test]
fn shards_partition_the_stream() {
    for (len, n) in [(10, 3), (0, 2), (7, 7), (5, 8)] {
        let b = shard_bounds(len, n);
        assert_eq!(b.len(), n);
        assert_eq!(b[0].0, 0);
        assert_eq!(b[n - 1].1, len);
        for w in b.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
}

#[test]
fn loss_log_rows() {
    let (_d, vocab, ids) = corpus(5_000);
    let cfg = TrainConfig { epochs: 2, ..config() };
    let mut buf = Vec::new();
    let mut log = LossLog::new(Some(&mut buf), 3);
    trainer::train(&ids, &vocab, &cfg, None, &mut log).unwrap();
    let means = log.finish().unwrap();
    assert_eq!(means.len(), 2);
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,batch,lr,mean_loss"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.len(), 4);
        assert_eq!(r[1].parse::<usize>().unwrap() % 3, 0);
        let lr: f64 = r[2].parse().unwrap();
        assert!(lr > 0.0 && lr <= cfg.initial_lr);
        assert!(r[3].parse::<f64>().unwrap().is_finite());
    }
    assert_eq!(rows.last().unwrap()[0], "2");
}

#[test]
fn generator_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let tm = TopicModel::new(small_spec(), 9);
    tm.write_corpus(&a, 2_000, 1, |w| w);
    TopicModel::new(small_spec(), 9).write_corpus(&b, 2_000, 1, |w| w);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
