//! Similarity metrics, Spearman correlation, WiC-style judging, neighbor
//! queries and crowd-task construction.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{hard_select, soft_attention, SenseDistribution};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::math::{cosine, mean};
use crate::params::{mask_row, ModelParams, SenseMask};
use crate::pruning::{neighbor_order, Neighbor, SenseIndex};
use crate::trainer::context_mean;

/// A sentence with one marked target token.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedContext {
    pub tokens: Vec<String>,
    pub target: usize,
}

impl MarkedContext {
    pub fn new(tokens: Vec<String>, target: usize) -> Result<Self> {
        if target >= tokens.len() {
            return Err(Error::Shape(alloc::format!(
                "target position {target} outside a context of {} tokens",
                tokens.len()
            )));
        }
        Ok(MarkedContext { tokens, target })
    }

    pub fn target_token(&self) -> &str {
        &self.tokens[self.target]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualPair {
    pub word1: String,
    pub pos1: String,
    pub word2: String,
    pub pos2: String,
    pub context1: MarkedContext,
    pub context2: MarkedContext,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainPair {
    pub word1: String,
    pub word2: String,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WicInstance {
    pub target: String,
    pub pos: String,
    pub context1: MarkedContext,
    pub context2: MarkedContext,
    pub gold: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntrusionTask {
    pub word: String,
    pub sense: u32,
    pub shown_words: Vec<String>,
    pub intruder_index: usize,
    pub intruder_sense: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseSelectionTask {
    pub word: String,
    pub sentence: Vec<String>,
    pub target: usize,
    /// Neighbor groups in display order.
    pub groups: Vec<Vec<String>>,
    /// Sense behind each displayed group; `None` marks a dummy group.
    pub group_senses: Vec<Option<u32>>,
    /// Index into `groups` of the sense the model selects.
    pub model_choice: usize,
    /// Posterior over the displayed groups (zero for dummies).
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMetric {
    MaxSimC,
    AvgSimC,
    MaxSim,
}

impl SimilarityMetric {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::MaxSimC => "MaxSimC",
            SimilarityMetric::AvgSimC => "AvgSimC",
            SimilarityMetric::MaxSim => "MaxSim",
        }
    }

    pub fn needs_context(self) -> bool {
        !matches!(self, SimilarityMetric::MaxSim)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Dataset<'a> {
    Contextual(&'a [ContextualPair]),
    Plain(&'a [PlainPair]),
}

impl Dataset<'_> {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Contextual(d) => d.len(),
            Dataset::Plain(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub metric: SimilarityMetric,
    pub rho: f64,
    pub coverage: f64,
    pub scored: usize,
    /// Indices of pairs skipped for out-of-vocabulary words.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub distribution: SenseDistribution,
    /// The usable context was empty and the distribution is uniform.
    pub uniform_fallback: bool,
}

/// Read-only view of a trained model for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SenseModel<'a> {
    pub params: &'a ModelParams,
    pub vocab: &'a Vocabulary,
    pub mask: Option<&'a SenseMask>,
    /// Tokens on each side of the target used as context.
    pub window: usize,
}

impl<'a> SenseModel<'a> {
    pub fn new(params: &'a ModelParams, vocab: &'a Vocabulary, mask: Option<&'a SenseMask>, window: usize) -> Result<Self> {
        if vocab.len() != params.vocab_size() {
            return Err(Error::Shape(alloc::format!(
                "vocabulary has {} words, model has {}",
                vocab.len(),
                params.vocab_size()
            )));
        }
        if let Some(m) = mask {
            m.check_shape(params)?;
        }
        Ok(SenseModel {
            params,
            vocab,
            mask,
            window,
        })
    }

    fn row(&self, word: u32) -> Option<&'a [bool]> {
        mask_row(self.mask, word)
    }

    fn active(&self, word: u32, sense: usize) -> bool {
        self.row(word).is_none_or(|r| r[sense])
    }

    pub fn active_senses(&self, word: u32) -> usize {
        (0..self.params.senses()).filter(|&k| self.active(word, k)).count()
    }

    /// In-vocabulary ids within `window` positions of the target, target excluded.
    pub fn context_ids(&self, context: &MarkedContext) -> Vec<u32> {
        let lo = context.target.saturating_sub(self.window);
        let hi = (context.target + self.window + 1).min(context.tokens.len());
        (lo..hi)
            .filter(|&i| i != context.target)
            .filter_map(|i| self.vocab.id(&context.tokens[i]))
            .collect()
    }

    /// Noiseless soft attention of the context mean over the word's active senses.
    pub fn sense_posterior(&self, word: u32, context: &[u32]) -> Result<Posterior> {
        let row = self.row(word);
        if context.is_empty() {
            return Ok(Posterior {
                distribution: SenseDistribution::uniform(row, self.params.senses())?,
                uniform_fallback: true,
            });
        }
        let cbar = context_mean(context, self.params)?;
        Ok(Posterior {
            distribution: soft_attention(&cbar, self.params.sense_block(word), row)?,
            uniform_fallback: false,
        })
    }

    /// Highest-scoring active sense; the lowest active sense for an empty context.
    pub fn select_sense(&self, word: u32, context: &[u32]) -> Result<usize> {
        let row = self.row(word);
        if context.is_empty() {
            return (0..self.params.senses())
                .find(|&k| self.active(word, k))
                .ok_or(Error::AllSensesMasked);
        }
        let cbar = context_mean(context, self.params)?;
        hard_select(&cbar, self.params.sense_block(word), row)
    }

    fn cos(&self, w1: u32, k1: usize, w2: u32, k2: usize) -> f64 {
        cosine(self.params.sense_vec(w1, k1), self.params.sense_vec(w2, k2))
    }

    fn ids(&self, a: &str, b: &str) -> Option<(u32, u32)> {
        Some((self.vocab.id(a)?, self.vocab.id(b)?))
    }

    /// Cosine of the two posterior-argmax senses; `None` if a word is OOV.
    pub fn max_sim_c(&self, pair: &ContextualPair) -> Result<Option<f64>> {
        let Some((w1, w2)) = self.ids(&pair.word1, &pair.word2) else {
            return Ok(None);
        };
        let k1 = self.select_sense(w1, &self.context_ids(&pair.context1))?;
        let k2 = self.select_sense(w2, &self.context_ids(&pair.context2))?;
        Ok(Some(self.cos(w1, k1, w2, k2)))
    }

    /// Posterior-weighted mean cosine over all active sense pairs.
    pub fn avg_sim_c(&self, pair: &ContextualPair) -> Result<Option<f64>> {
        let Some((w1, w2)) = self.ids(&pair.word1, &pair.word2) else {
            return Ok(None);
        };
        let p1 = self.sense_posterior(w1, &self.context_ids(&pair.context1))?.distribution;
        let p2 = self.sense_posterior(w2, &self.context_ids(&pair.context2))?.distribution;
        let mut total = 0.0;
        for (i, &a) in p1.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in p2.probs.iter().enumerate() {
                if b != 0.0 {
                    total += a * b * self.cos(w1, i, w2, j);
                }
            }
        }
        Ok(Some(total))
    }

    /// Maximum cosine over all active sense pairs; `None` if a word is OOV.
    pub fn max_sim(&self, word1: &str, word2: &str) -> Option<f64> {
        let (w1, w2) = self.ids(word1, word2)?;
        let k = self.params.senses();
        let mut best = f64::NEG_INFINITY;
        for i in (0..k).filter(|&i| self.active(w1, i)) {
            for j in (0..k).filter(|&j| self.active(w2, j)) {
                best = best.max(self.cos(w1, i, w2, j));
            }
        }
        Some(best)
    }

    pub fn score_contextual(&self, pair: &ContextualPair, metric: SimilarityMetric) -> Result<Option<f64>> {
        match metric {
            SimilarityMetric::MaxSimC => self.max_sim_c(pair),
            SimilarityMetric::AvgSimC => self.avg_sim_c(pair),
            SimilarityMetric::MaxSim => Ok(self.max_sim(&pair.word1, &pair.word2)),
        }
    }

    /// Spearman ρ between model scores and gold over the scorable pairs.
    pub fn evaluate(&self, dataset: Dataset<'_>, metric: SimilarityMetric) -> Result<SimilarityReport> {
        let mut scores = Vec::new();
        let mut gold = Vec::new();
        let mut skipped = Vec::new();
        let mut push = |i: usize, s: Option<f64>, g: f64| match s {
            Some(s) => {
                scores.push(s);
                gold.push(g);
            }
            None => skipped.push(i),
        };
        match dataset {
            Dataset::Contextual(pairs) => {
                for (i, p) in pairs.iter().enumerate() {
                    push(i, self.score_contextual(p, metric)?, p.gold);
                }
            }
            Dataset::Plain(pairs) => {
                if metric.needs_context() {
                    return Err(Error::MetricNeedsContext(metric.name()));
                }
                for (i, p) in pairs.iter().enumerate() {
                    push(i, self.max_sim(&p.word1, &p.word2), p.gold);
                }
            }
        }
        if scores.is_empty() {
            return Err(Error::NothingScored);
        }
        let rho = spearman(&scores, &gold)?;
        Ok(SimilarityReport {
            metric,
            rho,
            coverage: scores.len() as f64 / dataset.len() as f64,
            scored: scores.len(),
            skipped,
        })
    }

    /// The word whose senses a WiC instance compares: the lemma if known,
    /// otherwise the marked token when it is the same known word in both
    /// contexts.
    fn wic_word(&self, inst: &WicInstance) -> Option<u32> {
        self.vocab.id(&inst.target).or_else(|| {
            let a = inst.context1.target_token();
            (a == inst.context2.target_token()).then(|| self.vocab.id(a)).flatten()
        })
    }

    /// `true` when both contexts select the same sense. Monosemous and
    /// unknown targets get a fair coin flip from `rng`.
    pub fn wic_judge<R: Rng + ?Sized>(&self, inst: &WicInstance, rng: &mut R) -> Result<bool> {
        match self.wic_word(inst) {
            Some(w) if self.active_senses(w) > 1 => {
                let a = self.select_sense(w, &self.context_ids(&inst.context1))?;
                let b = self.select_sense(w, &self.context_ids(&inst.context2))?;
                Ok(a == b)
            }
            _ => Ok(rng.random_bool(0.5)),
        }
    }

    /// Judges every instance with an independent stream per index.
    pub fn wic_judge_all(&self, instances: &[WicInstance], seed: u64) -> Result<Vec<bool>> {
        instances
            .iter()
            .enumerate()
            .map(|(i, inst)| self.wic_judge(inst, &mut item_rng(seed, i as u64)))
            .collect()
    }

    pub fn sense_index(&self) -> SenseIndex {
        SenseIndex::new(self.params, self.mask)
    }

    /// Nearest senses of other words to `(word, sense)`; with `dedup` each
    /// word appears once, at its best sense.
    pub fn nearest_words(
        &self,
        index: &SenseIndex,
        word: u32,
        sense: u32,
        top_n: usize,
        dedup: bool,
    ) -> Result<Vec<Neighbor>> {
        if !self.active(word, sense as usize) {
            return Err(Error::InvalidMask(alloc::format!("sense {word}#{sense} is masked")));
        }
        Ok(nearest_to_vector(index, index.unit(word, sense as usize), top_n, dedup, word, self.params.senses()))
    }

    /// Word-intrusion tasks: per active sense, `per_sense` sets of three of
    /// its ten nearest distinct words plus one intruder drawn from the ten
    /// nearest of another active sense. Returns the tasks and the words
    /// skipped for having fewer than two active senses.
    pub fn export_intrusion_tasks<R: Rng + ?Sized>(
        &self,
        words: &[u32],
        per_sense: usize,
        rng: &mut R,
    ) -> Result<(Vec<IntrusionTask>, Vec<u32>)> {
        let index = self.sense_index();
        let mut tasks = Vec::new();
        let mut skipped = Vec::new();
        for &w in words {
            let senses: Vec<u32> = (0..self.params.senses() as u32).filter(|&k| self.active(w, k as usize)).collect();
            if senses.len() < 2 {
                skipped.push(w);
                continue;
            }
            let tops: Vec<Vec<u32>> = senses
                .iter()
                .map(|&k| Ok(self.nearest_words(&index, w, k, 10, true)?.iter().map(|n| n.word).collect()))
                .collect::<Result<_>>()?;
            for (si, &k) in senses.iter().enumerate() {
                let own = &tops[si];
                if own.len() < 3 {
                    continue;
                }
                for _ in 0..per_sense {
                    let mut others: Vec<usize> = (0..senses.len()).filter(|&o| o != si).collect();
                    others.shuffle(rng);
                    let intruder = others.iter().find_map(|&o| {
                        let pool: Vec<u32> = tops[o].iter().copied().filter(|x| !own.contains(x)).collect();
                        pool.choose(rng).map(|&x| (x, senses[o]))
                    });
                    let Some((intruder, intruder_sense)) = intruder else {
                        break;
                    };
                    let mut shown: Vec<u32> = own.choose_multiple(rng, 3).copied().collect();
                    shown.push(intruder);
                    shown.shuffle(rng);
                    let intruder_index = shown.iter().position(|&x| x == intruder).unwrap_or(3);
                    tasks.push(IntrusionTask {
                        word: self.vocab.word(w).to_string(),
                        sense: k,
                        shown_words: shown.iter().map(|&x| self.vocab.word(x).to_string()).collect(),
                        intruder_index,
                        intruder_sense,
                    });
                }
            }
        }
        Ok((tasks, skipped))
    }

    /// Sense-selection tasks: every sense contributes a group of its ten
    /// nearest distinct words (masked senses are replaced by groups around
    /// random vectors), groups are shuffled, and the model's choice and
    /// posterior are recorded. Returns the tasks and the indices of
    /// sentences skipped for unknown targets.
    pub fn export_sense_selection_tasks<R: Rng + ?Sized>(
        &self,
        sentences: &[MarkedContext],
        rng: &mut R,
    ) -> Result<(Vec<SenseSelectionTask>, Vec<usize>)> {
        let index = self.sense_index();
        let (k, d) = (self.params.senses(), self.params.dim());
        let mut tasks = Vec::new();
        let mut skipped = Vec::new();
        for (i, sentence) in sentences.iter().enumerate() {
            let Some(w) = self.vocab.id(sentence.target_token()) else {
                skipped.push(i);
                continue;
            };
            let ctx = self.context_ids(sentence);
            let posterior = self.sense_posterior(w, &ctx)?.distribution;
            let choice = self.select_sense(w, &ctx)?;
            let mut options: Vec<(Option<u32>, Vec<u32>)> = Vec::with_capacity(k);
            for s in 0..k {
                if self.active(w, s) {
                    let g = self.nearest_words(&index, w, s as u32, 10, true)?;
                    options.push((Some(s as u32), g.iter().map(|n| n.word).collect()));
                } else {
                    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let g = nearest_to_vector(&index, &v, 10, true, w, k);
                    options.push((None, g.iter().map(|n| n.word).collect()));
                }
            }
            options.shuffle(rng);
            let model_choice = options
                .iter()
                .position(|(s, _)| *s == Some(choice as u32))
                .ok_or(Error::AllSensesMasked)?;
            tasks.push(SenseSelectionTask {
                word: self.vocab.word(w).to_string(),
                sentence: sentence.tokens.clone(),
                target: sentence.target,
                posterior: options
                    .iter()
                    .map(|(s, _)| s.map_or(0.0, |s| posterior.probs[s as usize]))
                    .collect(),
                group_senses: options.iter().map(|(s, _)| *s).collect(),
                groups: options
                    .into_iter()
                    .map(|(_, g)| g.iter().map(|&x| self.vocab.word(x).to_string()).collect())
                    .collect(),
                model_choice,
            });
        }
        Ok((tasks, skipped))
    }
}

fn nearest_to_vector(index: &SenseIndex, query: &[f64], top_n: usize, dedup: bool, exclude: u32, senses: usize) -> Vec<Neighbor> {
    if !dedup {
        return index.nearest_to(query, top_n, |w, _| w == exclude);
    }
    // the best `top_n` distinct words lie within the best `top_n * K` senses
    let mut cands = index.nearest_to(query, top_n.saturating_mul(senses), |w, _| w == exclude);
    cands.sort_by(neighbor_order);
    let mut seen: Vec<u32> = Vec::new();
    cands.retain(|n| {
        if seen.contains(&n.word) {
            false
        } else {
            seen.push(n.word);
            true
        }
    });
    cands.truncate(top_n);
    cands
}

/// Per-item generator: stream `index` of the run seed.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewScores(xs.len()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = mean(&rx).unwrap_or(0.0);
    let my = mean(&ry).unwrap_or(0.0);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Fraction of judgments equal to the gold labels, over labelled instances.
pub fn wic_accuracy(instances: &[WicInstance], judgments: &[bool]) -> Option<f64> {
    let (mut right, mut total) = (0usize, 0usize);
    for (inst, &j) in instances.iter().zip(judgments) {
        if let Some(g) = inst.gold {
            total += 1;
            right += usize::from(g == j);
        }
    }
    (total > 0).then(|| right as f64 / total as f64)
}
