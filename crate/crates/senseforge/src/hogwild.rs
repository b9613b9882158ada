//! Lock-free multi-threaded training. Workers share one parameter store and
//! update it without synchronization; concurrent writes to the same
//! coordinate may lose one of the updates.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::thread;

use senseforge_core::trainer::{self, init_params, shard_rng, EpochStats, ProgressSink, RunningLoss, TrainSetup};
use senseforge_core::{ModelParams, ParamStore, SenseMask, TrainConfig, Vocabulary};

use crate::error::{Error, Result};

/// Parameters stored as `f64` bit patterns in relaxed atomics.
pub struct AtomicParams {
    vocab_size: usize,
    senses: usize,
    dim: usize,
    sense: Vec<AtomicU64>,
    context: Vec<AtomicU64>,
}

fn to_atomic(xs: &[f64]) -> Vec<AtomicU64> {
    xs.iter().map(|x| AtomicU64::new(x.to_bits())).collect()
}

fn from_atomic(xs: &[AtomicU64]) -> Vec<f64> {
    xs.iter().map(|x| f64::from_bits(x.load(Ordering::Relaxed))).collect()
}

impl AtomicParams {
    pub fn new(params: &ModelParams) -> Self {
        AtomicParams {
            vocab_size: params.vocab_size(),
            senses: params.senses(),
            dim: params.dim(),
            sense: to_atomic(params.sense_data()),
            context: to_atomic(params.context_data()),
        }
    }

    pub fn snapshot(&self) -> ModelParams {
        ModelParams::from_parts(
            self.vocab_size,
            self.senses,
            self.dim,
            from_atomic(&self.sense),
            from_atomic(&self.context),
        )
        .expect("shapes fixed at construction")
    }

    fn read(cells: &[AtomicU64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(cells) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    fn add(cells: &[AtomicU64], scale: f64, delta: &[f64]) {
        for (c, d) in cells.iter().zip(delta) {
            let cur = f64::from_bits(c.load(Ordering::Relaxed));
            c.store((cur + scale * d).to_bits(), Ordering::Relaxed);
        }
    }

    fn sense_cells(&self, word: u32, sense: usize) -> &[AtomicU64] {
        let s = (word as usize * self.senses + sense) * self.dim;
        &self.sense[s..s + self.dim]
    }

    fn context_cells(&self, word: u32) -> &[AtomicU64] {
        let s = word as usize * self.dim;
        &self.context[s..s + self.dim]
    }
}

impl ParamStore for &AtomicParams {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn senses(&self) -> usize {
        self.senses
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn read_sense(&self, word: u32, sense: usize, out: &mut [f64]) {
        AtomicParams::read(self.sense_cells(word, sense), out);
    }

    fn read_context(&self, word: u32, out: &mut [f64]) {
        AtomicParams::read(self.context_cells(word), out);
    }

    fn add_sense(&mut self, word: u32, sense: usize, scale: f64, delta: &[f64]) {
        AtomicParams::add(self.sense_cells(word, sense), scale, delta);
    }

    fn add_context(&mut self, word: u32, scale: f64, delta: &[f64]) {
        AtomicParams::add(self.context_cells(word), scale, delta);
    }
}

/// Splits `ids` into `n` nearly equal contiguous shards.
pub fn shard_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    let n = n.max(1);
    (0..n).map(|i| (len * i / n, len * (i + 1) / n)).collect()
}

/// Trains with `threads` workers. One thread runs the deterministic
/// single-worker trainer; more threads give up reproducibility.
/// Batch records come from the first worker only.
pub fn train_parallel(
    ids: &[u32],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mask: Option<&SenseMask>,
    threads: usize,
    sink: &mut (dyn ProgressSink + Send),
) -> Result<ModelParams> {
    if threads <= 1 {
        return Ok(trainer::train(ids, vocab, config, mask, sink)?);
    }
    let setup = TrainSetup::new(vocab, config, mask)?;
    let shared = AtomicParams::new(&init_params(vocab.len(), config.senses, config.dim, config.seed));
    let bounds = shard_bounds(ids.len(), threads);
    let mut rngs: Vec<_> = (0..threads as u64).map(|t| shard_rng(config.seed, t)).collect();
    let mut running: Vec<RunningLoss> = (0..threads).map(|_| RunningLoss::new(100)).collect();
    let total = (ids.len() * config.epochs).max(1) as f64;
    let seen = AtomicUsize::new(0);

    for epoch in 0..config.epochs {
        let results: Vec<Result<EpochStats>> = thread::scope(|scope| {
            let mut handles = Vec::with_capacity(threads);
            let mut sink_slot = Some(&mut *sink);
            for ((&(lo, hi), rng), run) in bounds.iter().zip(rngs.iter_mut()).zip(running.iter_mut()) {
                let (setup, shared, seen) = (&setup, &shared, &seen);
                let own_sink = sink_slot.take();
                handles.push(scope.spawn(move || {
                    let mut store = shared;
                    let mut progress = |step: usize| (seen.fetch_add(step, Ordering::Relaxed) + step) as f64 / total;
                    let mut quiet = ();
                    let out: &mut dyn ProgressSink = match own_sink {
                        Some(s) => s,
                        None => &mut quiet,
                    };
                    trainer::train_shard(&mut store, &ids[lo..hi], epoch, setup, rng, &mut progress, run, out)
                        .map_err(Error::from)
                }));
            }
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(Err(Error::WorkerPanic)))
                .collect()
        });
        let mut stats = EpochStats::default();
        for r in results {
            stats.absorb(&r?);
        }
        sink.epoch_end(epoch, stats.mean_loss());
    }
    let params = shared.snapshot();
    if let Some(e) = params.find_non_finite() {
        return Err(e.into());
    }
    Ok(params)
}
