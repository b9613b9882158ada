//! The marginalized skip-gram objective over senses and its SGD loop.
//!
//! For a center word `w` with contexts `c_1..c_m` (mean vector `c̄`), each
//! context pair `(w, c_j)` gets its own attention draw
//! `γ_j = softmax((c̄ᵀ s_k + β g_jk) / τ)` and contributes
//!
//! ```text
//! -Σ_k γ_jk [ log σ(c_jᵀ s_k) + Σ_n log σ(-c_nᵀ s_k) ]
//! ```
//!
//! to the loss. The weights `γ` stay differentiable, so gradients reach the
//! center's sense rows, the context and negative rows, and (through `c̄`)
//! every context row of the window.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use hashbrown::HashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{attention_from_noise_into, draw_noise_into, AttentionMode, SenseDistribution};
use crate::corpus::{subsample, NegativeTable, Vocabulary, Windows, DEFAULT_NEGATIVE_POWER};
use crate::error::{Error, Result};
use crate::math::{axpy, dot, log_sigmoid, sigmoid};
use crate::params::{mask_row, ModelParams, ParamStore, SenseMask};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub senses: usize,
    pub window: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    /// Number of (center, context) pairs per parameter update.
    pub batch: usize,
    pub negatives: usize,
    pub subsample: f64,
    pub mode: AttentionMode,
    pub seed: u64,
    pub lr_floor_fraction: f64,
    pub negative_power: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            senses: 3,
            window: 5,
            epochs: 5,
            initial_lr: 0.01,
            batch: 512,
            negatives: 5,
            subsample: 1e-4,
            mode: AttentionMode::default(),
            seed: 1,
            lr_floor_fraction: 1e-4,
            negative_power: DEFAULT_NEGATIVE_POWER,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(alloc::format!("{what} must be positive")));
        if self.dim == 0 {
            return bad("dim");
        }
        if self.senses == 0 {
            return bad("senses");
        }
        if self.window == 0 {
            return bad("window");
        }
        if self.batch == 0 {
            return bad("batch");
        }
        if !(self.initial_lr > 0.0) {
            return bad("initial_lr");
        }
        if !(self.subsample > 0.0) {
            return bad("subsample");
        }
        if !(self.lr_floor_fraction > 0.0) {
            return bad("lr_floor_fraction");
        }
        self.mode.validate()
    }
}

/// Sparse gradient rows keyed by `(word, sense)` for `S` and by word for `C`.
/// Rows are kept in first-touch order so applying them is deterministic.
#[derive(Debug, Clone, Default)]
pub struct GradientBundle {
    dim: usize,
    sense_index: HashMap<(u32, u32), usize>,
    sense_keys: Vec<(u32, u32)>,
    sense_vals: Vec<f64>,
    context_index: HashMap<u32, usize>,
    context_keys: Vec<u32>,
    context_vals: Vec<f64>,
}

impl GradientBundle {
    pub fn new(dim: usize) -> Self {
        GradientBundle {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clear(&mut self) {
        self.sense_index.clear();
        self.sense_keys.clear();
        self.sense_vals.clear();
        self.context_index.clear();
        self.context_keys.clear();
        self.context_vals.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.sense_keys.is_empty() && self.context_keys.is_empty()
    }

    pub fn sense_entry(&mut self, word: u32, sense: u32) -> &mut [f64] {
        let d = self.dim;
        let slot = match self.sense_index.get(&(word, sense)) {
            Some(&s) => s,
            None => {
                let s = self.sense_keys.len();
                self.sense_index.insert((word, sense), s);
                self.sense_keys.push((word, sense));
                self.sense_vals.resize(self.sense_vals.len() + d, 0.0);
                s
            }
        };
        &mut self.sense_vals[slot * d..(slot + 1) * d]
    }

    pub fn context_entry(&mut self, word: u32) -> &mut [f64] {
        let d = self.dim;
        let slot = match self.context_index.get(&word) {
            Some(&s) => s,
            None => {
                let s = self.context_keys.len();
                self.context_index.insert(word, s);
                self.context_keys.push(word);
                self.context_vals.resize(self.context_vals.len() + d, 0.0);
                s
            }
        };
        &mut self.context_vals[slot * d..(slot + 1) * d]
    }

    pub fn sense_grad(&self, word: u32, sense: u32) -> Option<&[f64]> {
        let d = self.dim;
        self.sense_index
            .get(&(word, sense))
            .map(|&s| &self.sense_vals[s * d..(s + 1) * d])
    }

    pub fn context_grad(&self, word: u32) -> Option<&[f64]> {
        let d = self.dim;
        self.context_index
            .get(&word)
            .map(|&s| &self.context_vals[s * d..(s + 1) * d])
    }

    pub fn sense_rows(&self) -> impl Iterator<Item = ((u32, u32), &[f64])> {
        self.sense_keys
            .iter()
            .copied()
            .zip(self.sense_vals.chunks_exact(self.dim.max(1)))
    }

    pub fn context_rows(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.context_keys
            .iter()
            .copied()
            .zip(self.context_vals.chunks_exact(self.dim.max(1)))
    }

    /// Adds every row of `other` into `self`.
    pub fn merge(&mut self, other: &GradientBundle) {
        for ((w, k), g) in other.sense_rows() {
            axpy(1.0, g, self.sense_entry(w, k));
        }
        for (w, g) in other.context_rows() {
            axpy(1.0, g, self.context_entry(w));
        }
    }

    pub fn all_finite(&self) -> bool {
        self.sense_vals.iter().chain(&self.context_vals).all(|x| x.is_finite())
    }
}

/// Reusable buffers for [`window_loss`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    sense: Vec<f64>,
    ctx: Vec<f64>,
    cbar: Vec<f64>,
    logits: Vec<f64>,
    gamma: Vec<f64>,
    scratch: Vec<f64>,
    ell: Vec<f64>,
    pos_coef: Vec<f64>,
    neg_row: Vec<f64>,
    neg_coef: Vec<f64>,
    sense_grad: Vec<f64>,
    logit_grad: Vec<f64>,
    row_grad: Vec<f64>,
    attention_sum: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, k: usize, d: usize, m: usize, n: usize) {
        fn sized(v: &mut Vec<f64>, len: usize) {
            v.clear();
            v.resize(len, 0.0);
        }
        sized(&mut self.sense, k * d);
        sized(&mut self.ctx, m * d);
        sized(&mut self.cbar, d);
        sized(&mut self.logits, k);
        sized(&mut self.gamma, k);
        sized(&mut self.scratch, k);
        sized(&mut self.ell, k);
        sized(&mut self.pos_coef, k);
        sized(&mut self.neg_row, n.max(1) * d);
        sized(&mut self.neg_coef, n.max(1) * k);
        sized(&mut self.sense_grad, k * d);
        sized(&mut self.logit_grad, k);
        sized(&mut self.row_grad, d);
        sized(&mut self.attention_sum, k);
    }
}

/// Input to one window evaluation.
#[derive(Debug, Clone, Copy)]
pub struct WindowTerms<'a> {
    pub center: u32,
    /// Every context word of the window; all of them feed `c̄`.
    pub contexts: &'a [u32],
    /// The contexts actually scored, as a sub-range of `contexts`.
    pub scored: (usize, usize),
    /// `negatives` per scored context, flattened in context order.
    pub negatives: &'a [u32],
    pub negatives_per_context: usize,
    /// `K` Gumbel draws per scored context, flattened (ignored by SASI).
    pub noise: &'a [f64],
}

/// Loss of the scored pairs of one window; gradients are added into `grads`.
/// Returns the loss and the sum over scored pairs of their attention weights.
pub fn window_loss<P: ParamStore + ?Sized>(
    params: &P,
    terms: &WindowTerms<'_>,
    mask: Option<&[bool]>,
    mode: &AttentionMode,
    grads: &mut GradientBundle,
    ws: &mut Workspace,
) -> Result<(f64, Vec<f64>)> {
    let k_senses = params.senses();
    let d = params.dim();
    let m = terms.contexts.len();
    let n = terms.negatives_per_context;
    let (lo, hi) = terms.scored;
    if m == 0 {
        return Err(Error::EmptyContext);
    }
    if hi > m || lo > hi {
        return Err(Error::Shape(alloc::format!("scored range {lo}..{hi} outside {m} contexts")));
    }
    if terms.negatives.len() != (hi - lo) * n {
        return Err(Error::Shape(alloc::format!(
            "expected {} negatives, got {}",
            (hi - lo) * n,
            terms.negatives.len()
        )));
    }
    if mode.is_noisy() && terms.noise.len() < (hi - lo) * k_senses {
        return Err(Error::Shape(alloc::format!(
            "expected {} noise draws, got {}",
            (hi - lo) * k_senses,
            terms.noise.len()
        )));
    }
    ws.prepare(k_senses, d, m, n);
    let active = |k: usize| mask.is_none_or(|r| r[k]);
    if !(0..k_senses).any(active) {
        return Err(Error::AllSensesMasked);
    }

    for k in 0..k_senses {
        if active(k) {
            params.read_sense(terms.center, k, &mut ws.sense[k * d..(k + 1) * d]);
        }
    }
    for (j, &c) in terms.contexts.iter().enumerate() {
        params.read_context(c, &mut ws.ctx[j * d..(j + 1) * d]);
        axpy(1.0, &ws.ctx[j * d..(j + 1) * d], &mut ws.cbar);
    }
    let inv_m = 1.0 / m as f64;
    ws.cbar.iter_mut().for_each(|x| *x *= inv_m);
    for k in 0..k_senses {
        ws.logits[k] = if active(k) { dot(&ws.cbar, &ws.sense[k * d..(k + 1) * d]) } else { 0.0 };
    }
    let tau = mode.effective_temperature();

    let mut loss = 0.0;
    for (pair, j) in (lo..hi).enumerate() {
        let noise = if mode.is_noisy() {
            &terms.noise[pair * k_senses..(pair + 1) * k_senses]
        } else {
            &[][..]
        };
        attention_from_noise_into(&ws.logits, noise, mode, mask, &mut ws.scratch, &mut ws.gamma)?;
        axpy(1.0, &ws.gamma, &mut ws.attention_sum);

        let cj = &ws.ctx[j * d..(j + 1) * d];
        let negs = &terms.negatives[pair * n..(pair + 1) * n];
        for (t, &neg) in negs.iter().enumerate() {
            params.read_context(neg, &mut ws.neg_row[t * d..(t + 1) * d]);
        }
        for k in 0..k_senses {
            if !active(k) {
                continue;
            }
            let s = &ws.sense[k * d..(k + 1) * d];
            let x = dot(cj, s);
            let mut ell = log_sigmoid(x);
            // dL/dx for the positive pair, before the γ factor
            ws.pos_coef[k] = sigmoid(-x);
            for t in 0..n {
                let y = dot(&ws.neg_row[t * d..(t + 1) * d], s);
                ell += log_sigmoid(-y);
                ws.neg_coef[t * k_senses + k] = sigmoid(y);
            }
            ws.ell[k] = ell;
            loss -= ws.gamma[k] * ell;
        }

        // direct terms
        ws.row_grad.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..k_senses {
            if !active(k) {
                continue;
            }
            let g = ws.gamma[k];
            let gpos = -g * ws.pos_coef[k];
            axpy(gpos, cj, &mut ws.sense_grad[k * d..(k + 1) * d]);
            axpy(gpos, &ws.sense[k * d..(k + 1) * d], &mut ws.row_grad);
            for t in 0..n {
                let c = g * ws.neg_coef[t * k_senses + k];
                axpy(c, &ws.neg_row[t * d..(t + 1) * d], &mut ws.sense_grad[k * d..(k + 1) * d]);
            }
        }
        axpy(1.0, &ws.row_grad, grads.context_entry(terms.contexts[j]));
        for (t, &neg) in negs.iter().enumerate() {
            ws.row_grad.iter_mut().for_each(|x| *x = 0.0);
            for k in 0..k_senses {
                if active(k) {
                    let c = ws.gamma[k] * ws.neg_coef[t * k_senses + k];
                    axpy(c, &ws.sense[k * d..(k + 1) * d], &mut ws.row_grad);
                }
            }
            axpy(1.0, &ws.row_grad, grads.context_entry(neg));
        }

        // attention path: dL/dγ_k = -ℓ_k through the softmax Jacobian
        let mut mean_dl = 0.0;
        for k in 0..k_senses {
            if active(k) {
                mean_dl -= ws.gamma[k] * ws.ell[k];
            }
        }
        for k in 0..k_senses {
            if active(k) {
                ws.logit_grad[k] += ws.gamma[k] * (-ws.ell[k] - mean_dl) / tau;
            }
        }
    }

    if !loss.is_finite() {
        return Err(locate_non_finite(params, terms, ws, mask));
    }

    // logits z_k = c̄ᵀ s_k
    ws.row_grad.iter_mut().for_each(|x| *x = 0.0);
    for k in 0..k_senses {
        if !active(k) {
            continue;
        }
        let a = ws.logit_grad[k];
        axpy(a, &ws.cbar, &mut ws.sense_grad[k * d..(k + 1) * d]);
        axpy(a, &ws.sense[k * d..(k + 1) * d], &mut ws.row_grad);
        axpy(1.0, &ws.sense_grad[k * d..(k + 1) * d], grads.sense_entry(terms.center, k as u32));
    }
    if ws.logit_grad.iter().any(|&a| a != 0.0) {
        for &c in terms.contexts {
            axpy(inv_m, &ws.row_grad, grads.context_entry(c));
        }
    }
    Ok((loss, ws.attention_sum.clone()))
}

fn locate_non_finite<P: ParamStore + ?Sized>(
    params: &P,
    terms: &WindowTerms<'_>,
    ws: &mut Workspace,
    mask: Option<&[bool]>,
) -> Error {
    let d = params.dim();
    let mut row = vec![0.0; d];
    for k in 0..params.senses() {
        if mask.is_none_or(|r| r[k]) {
            params.read_sense(terms.center, k, &mut row);
            if row.iter().any(|x| !x.is_finite()) {
                return Error::NonFinite { matrix: "sense", word: terms.center, sense: Some(k as u32) };
            }
        }
    }
    for &w in terms.contexts.iter().chain(terms.negatives) {
        params.read_context(w, &mut row);
        if row.iter().any(|x| !x.is_finite()) {
            return Error::NonFinite { matrix: "context", word: w, sense: None };
        }
    }
    let _ = ws;
    Error::NonFinite { matrix: "sense", word: terms.center, sense: None }
}

/// Result of [`pair_loss`].
#[derive(Debug, Clone)]
pub struct PairLoss {
    pub loss: f64,
    pub grads: GradientBundle,
    /// Attention weights averaged over the window's context pairs.
    pub attention: SenseDistribution,
}

/// Loss and gradients for a center word and its full context list, drawing
/// fresh Gumbel noise per context pair from `rng`.
pub fn pair_loss<P: ParamStore + ?Sized, R: Rng + ?Sized>(
    center: u32,
    contexts: &[u32],
    negatives_per_context: &[Vec<u32>],
    params: &P,
    mask: Option<&SenseMask>,
    mode: &AttentionMode,
    rng: &mut R,
) -> Result<PairLoss> {
    if negatives_per_context.len() != contexts.len() {
        return Err(Error::Shape(alloc::format!(
            "{} negative lists for {} contexts",
            negatives_per_context.len(),
            contexts.len()
        )));
    }
    let n = negatives_per_context.first().map_or(0, Vec::len);
    if negatives_per_context.iter().any(|l| l.len() != n) {
        return Err(Error::Shape("negative lists differ in length".into()));
    }
    let k = params.senses();
    let row = mask_row(mask, center);
    let mut noise = vec![0.0; contexts.len() * k];
    if mode.is_noisy() {
        for chunk in noise.chunks_exact_mut(k.max(1)) {
            draw_noise_into(row, rng, chunk);
        }
    }
    let flat: Vec<u32> = negatives_per_context.concat();
    pair_loss_with_noise(center, contexts, &flat, n, &noise, params, mask, mode)
}

/// [`pair_loss`] with explicit noise (`K` draws per context, flattened).
#[allow(clippy::too_many_arguments)]
pub fn pair_loss_with_noise<P: ParamStore + ?Sized>(
    center: u32,
    contexts: &[u32],
    negatives: &[u32],
    negatives_per_context: usize,
    noise: &[f64],
    params: &P,
    mask: Option<&SenseMask>,
    mode: &AttentionMode,
) -> Result<PairLoss> {
    let mut grads = GradientBundle::new(params.dim());
    let mut ws = Workspace::default();
    let terms = WindowTerms {
        center,
        contexts,
        scored: (0, contexts.len()),
        negatives,
        negatives_per_context,
        noise,
    };
    let (loss, sum) = window_loss(params, &terms, mask_row(mask, center), mode, &mut grads, &mut ws)?;
    let m = contexts.len() as f64;
    Ok(PairLoss {
        loss,
        grads,
        attention: SenseDistribution {
            probs: sum.into_iter().map(|p| p / m).collect(),
        },
    })
}

/// `(Σ p_k log q_k, log Σ p_k q_k)`: the Jensen lower bound and the exact
/// log of the mixture.
pub fn jensen_gap(probabilities: &[f64], likelihoods: &[f64]) -> (f64, f64) {
    let mut lower = 0.0;
    let mut mix = 0.0;
    for (&p, &q) in probabilities.iter().zip(likelihoods) {
        if p > 0.0 {
            lower += p * libm::log(q);
        }
        mix += p * q;
    }
    (lower, libm::log(mix))
}

/// `params -= lr * grads` over the touched rows.
pub fn apply_grads<P: ParamStore + ?Sized>(params: &mut P, grads: &GradientBundle, lr: f64) {
    for ((w, k), g) in grads.sense_rows() {
        params.add_sense(w, k as usize, -lr, g);
    }
    for (w, g) in grads.context_rows() {
        params.add_context(w, -lr, g);
    }
}

/// Linearly decayed learning rate with a floor at `initial * floor_fraction`.
pub fn lr_at(initial: f64, progress: f64, floor_fraction: f64) -> f64 {
    let progress = progress.clamp(0.0, 1.0);
    f64::max(initial * (1.0 - progress), initial * floor_fraction)
}

/// Windowed mean over the most recent batch losses.
#[derive(Debug, Clone)]
pub struct RunningLoss {
    window: usize,
    history: VecDeque<f64>,
}

impl RunningLoss {
    pub fn new(window: usize) -> Self {
        RunningLoss {
            window: window.max(1),
            history: VecDeque::new(),
        }
    }

    pub fn push(&mut self, loss: f64) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(loss);
    }

    /// `None` until a loss has been recorded.
    pub fn mean(&self) -> Option<f64> {
        if self.history.is_empty() {
            None
        } else {
            Some(self.history.iter().sum::<f64>() / self.history.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub lr: f64,
    /// Running mean of per-pair batch losses.
    pub mean_loss: f64,
}

/// Receives training progress.
pub trait ProgressSink {
    fn batch(&mut self, _record: &BatchRecord) {}
    fn epoch_end(&mut self, _epoch: usize, _mean_loss: f64) {}
}

impl ProgressSink for () {}

/// Epoch mean losses, collected for inspection.
#[derive(Debug, Clone, Default)]
pub struct EpochLosses(pub Vec<f64>);

impl ProgressSink for EpochLosses {
    fn epoch_end(&mut self, _epoch: usize, mean_loss: f64) {
        self.0.push(mean_loss);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub pairs: u64,
    pub batches: usize,
}

impl EpochStats {
    pub fn mean_loss(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.loss / self.pairs as f64
        }
    }

    pub fn absorb(&mut self, other: &EpochStats) {
        self.loss += other.loss;
        self.pairs += other.pairs;
        self.batches += other.batches;
    }
}

/// Everything a training shard reads but never writes.
#[derive(Debug, Clone)]
pub struct TrainSetup<'a> {
    pub config: &'a TrainConfig,
    pub keep_probs: Vec<f64>,
    pub table: NegativeTable,
    pub mask: Option<&'a SenseMask>,
}

impl<'a> TrainSetup<'a> {
    pub fn new(vocab: &Vocabulary, config: &'a TrainConfig, mask: Option<&'a SenseMask>) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if let Some(m) = mask {
            if m.vocab_size() != vocab.len() || m.senses() != config.senses {
                return Err(Error::InvalidMask(alloc::format!(
                    "mask is {}x{} but training expects {}x{}",
                    m.vocab_size(),
                    m.senses(),
                    vocab.len(),
                    config.senses
                )));
            }
        }
        Ok(TrainSetup {
            config,
            keep_probs: vocab.keep_probs(config.subsample),
            table: NegativeTable::from_vocab(vocab, config.negative_power)?,
            mask,
        })
    }
}

/// RNG for training shard `shard`; stream 0 is reserved for initialization.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard + 1);
    rng
}

/// One epoch over `ids` (a contiguous shard of the encoded corpus).
///
/// `progress` receives the number of stream positions consumed since its
/// last call and returns the global training progress in `[0, 1]`.
/// Per window, negatives for every scored context are drawn before the
/// Gumbel noise.
#[allow(clippy::too_many_arguments)]
pub fn train_shard<P, R>(
    store: &mut P,
    ids: &[u32],
    epoch: usize,
    setup: &TrainSetup<'_>,
    rng: &mut R,
    progress: &mut dyn FnMut(usize) -> f64,
    running: &mut RunningLoss,
    sink: &mut dyn ProgressSink,
) -> Result<EpochStats>
where
    P: ParamStore + ?Sized,
    R: Rng + ?Sized,
{
    let cfg = setup.config;
    let k = cfg.senses;
    let windows = Windows::over(subsample(ids, &setup.keep_probs, rng), cfg.window);
    let mut grads = GradientBundle::new(cfg.dim);
    let mut ws = Workspace::default();
    let mut negatives: Vec<u32> = Vec::new();
    let mut noise: Vec<f64> = Vec::new();
    let mut stats = EpochStats::default();
    let mut batch_loss = 0.0;
    let mut batch_pairs = 0usize;
    let mut consumed = 0usize;
    let mut fraction = progress(0);

    let mut flush = |store: &mut P,
                     grads: &mut GradientBundle,
                     fraction: f64,
                     batch_loss: &mut f64,
                     batch_pairs: &mut usize,
                     stats: &mut EpochStats| {
        if *batch_pairs == 0 {
            return;
        }
        let lr = lr_at(cfg.initial_lr, fraction, cfg.lr_floor_fraction);
        apply_grads(store, grads, lr);
        grads.clear();
        running.push(*batch_loss / *batch_pairs as f64);
        stats.batches += 1;
        sink.batch(&BatchRecord {
            epoch,
            batch: stats.batches,
            lr,
            mean_loss: running.mean().unwrap_or(0.0),
        });
        *batch_loss = 0.0;
        *batch_pairs = 0;
    };

    for win in windows {
        let advanced = win.position + 1 - consumed;
        consumed = win.position + 1;
        fraction = progress(advanced);
        let row = mask_row(setup.mask, win.center);
        let m = win.contexts.len();
        let mut lo = 0;
        while lo < m {
            let hi = (lo + cfg.batch - batch_pairs).min(m);
            negatives.clear();
            for &c in &win.contexts[lo..hi] {
                setup.table.sample_into(cfg.negatives, Some(c), rng, &mut negatives)?;
            }
            noise.clear();
            if cfg.mode.is_noisy() {
                noise.resize((hi - lo) * k, 0.0);
                for chunk in noise.chunks_exact_mut(k) {
                    draw_noise_into(row, rng, chunk);
                }
            }
            let terms = WindowTerms {
                center: win.center,
                contexts: &win.contexts,
                scored: (lo, hi),
                negatives: &negatives,
                negatives_per_context: cfg.negatives,
                noise: &noise,
            };
            let (loss, _) = window_loss(store, &terms, row, &cfg.mode, &mut grads, &mut ws)?;
            batch_loss += loss;
            batch_pairs += hi - lo;
            stats.loss += loss;
            stats.pairs += (hi - lo) as u64;
            if batch_pairs >= cfg.batch {
                flush(store, &mut grads, fraction, &mut batch_loss, &mut batch_pairs, &mut stats);
            }
            lo = hi;
        }
    }
    if ids.len() > consumed {
        fraction = progress(ids.len() - consumed);
    }
    flush(store, &mut grads, fraction, &mut batch_loss, &mut batch_pairs, &mut stats);
    Ok(stats)
}

/// Single-worker training over an encoded corpus. Deterministic given
/// `config.seed`.
pub fn train(
    ids: &[u32],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mask: Option<&SenseMask>,
    sink: &mut dyn ProgressSink,
) -> Result<ModelParams> {
    let setup = TrainSetup::new(vocab, config, mask)?;
    let mut params = init_params(vocab.len(), config.senses, config.dim, config.seed);
    let mut rng = shard_rng(config.seed, 0);
    let total = (ids.len() * config.epochs).max(1) as f64;
    let mut seen = 0usize;
    let mut running = RunningLoss::new(100);
    for epoch in 0..config.epochs {
        let mut progress = |step: usize| {
            seen += step;
            seen as f64 / total
        };
        let stats = train_shard(&mut params, ids, epoch, &setup, &mut rng, &mut progress, &mut running, sink)?;
        sink.epoch_end(epoch, stats.mean_loss());
    }
    if let Some(e) = params.find_non_finite() {
        return Err(e);
    }
    Ok(params)
}

/// Parameter initialization as used by [`train`].
pub fn init_params(vocab_size: usize, senses: usize, dim: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init(vocab_size, senses, dim, &mut rng)
}

/// Mean of the context rows of `context_ids`.
pub fn context_mean(context_ids: &[u32], params: &ModelParams) -> Result<Vec<f64>> {
    if context_ids.is_empty() {
        return Err(Error::EmptyContext);
    }
    let mut out = vec![0.0; params.dim()];
    for &c in context_ids {
        axpy(1.0, params.context_vec(c), &mut out);
    }
    let inv = 1.0 / context_ids.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}
