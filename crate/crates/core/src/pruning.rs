//! Duplicate-sense detection and the model-specific pruning threshold.
//!
//! Distances are cosine distances, `1 - cos(a, b)`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use rand::Rng;

use crate::corpus::NegativeTable;
use crate::error::{Error, Result};
use crate::math::{cosine, dot, norm};
use crate::params::{mask_row, ModelParams, SenseMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub word: u32,
    pub sense: u32,
    pub similarity: f64,
}

/// Descending similarity, then ascending `(word, sense)`.
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .partial_cmp(&a.similarity)
        .unwrap_or(Ordering::Equal)
        .then_with(|| (a.word, a.sense).cmp(&(b.word, b.sense)))
}

/// Unit-normalized copy of every active sense vector for exhaustive cosine
/// scans.
#[derive(Debug, Clone)]
pub struct SenseIndex {
    senses: usize,
    dim: usize,
    unit: Vec<f64>,
    active: Vec<bool>,
}

impl SenseIndex {
    pub fn new(params: &ModelParams, mask: Option<&SenseMask>) -> Self {
        let (k, d) = (params.senses(), params.dim());
        let mut unit = params.sense_data().to_vec();
        for row in unit.chunks_exact_mut(d) {
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        let active = match mask {
            Some(m) => m.flags().to_vec(),
            None => vec![true; params.vocab_size() * k],
        };
        SenseIndex {
            senses: k,
            dim: d,
            unit,
            active,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.active.len() / self.senses
    }

    pub fn is_active(&self, word: u32, sense: usize) -> bool {
        self.active[word as usize * self.senses + sense]
    }

    pub fn unit(&self, word: u32, sense: usize) -> &[f64] {
        let s = (word as usize * self.senses + sense) * self.dim;
        &self.unit[s..s + self.dim]
    }

    /// The `top_n` active senses most similar to `query` (any scale), skipping
    /// those for which `skip(word, sense)` holds.
    pub fn nearest_to<F>(&self, query: &[f64], top_n: usize, skip: F) -> Vec<Neighbor>
    where
        F: Fn(u32, u32) -> bool,
    {
        if top_n == 0 {
            return Vec::new();
        }
        let qn = norm(query);
        let mut all: Vec<Neighbor> = Vec::new();
        for w in 0..self.vocab_size() as u32 {
            for k in 0..self.senses {
                if !self.is_active(w, k) || skip(w, k as u32) {
                    continue;
                }
                let sim = if qn > 0.0 { dot(query, self.unit(w, k)) / qn } else { 0.0 };
                all.push(Neighbor {
                    word: w,
                    sense: k as u32,
                    similarity: sim,
                });
            }
        }
        if all.len() > top_n {
            all.select_nth_unstable_by(top_n - 1, neighbor_order);
            all.truncate(top_n);
        }
        all.sort_by(neighbor_order);
        all
    }
}

/// Nearest active senses of all words to sense `query`, excluding the query.
pub fn nearest_senses(
    params: &ModelParams,
    query: (u32, u32),
    top_n: usize,
    mask: Option<&SenseMask>,
) -> Result<Vec<Neighbor>> {
    let index = SenseIndex::new(params, mask);
    nearest_senses_in(&index, query, top_n)
}

pub fn nearest_senses_in(index: &SenseIndex, query: (u32, u32), top_n: usize) -> Result<Vec<Neighbor>> {
    let (w, k) = query;
    if !index.is_active(w, k as usize) {
        return Err(Error::InvalidMask(alloc::format!("query sense {w}#{k} is masked")));
    }
    Ok(index.nearest_to(index.unit(w, k as usize), top_n, |a, b| (a, b) == query))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    pub lambda: f64,
    pub dup_distances: Vec<f64>,
    pub nn_distances: Vec<f64>,
    /// Set when no duplicate distances were found and `lambda` is half the
    /// mean neighbor distance.
    pub dup_fallback: bool,
    /// Distinct sampled words, in first-draw order.
    pub sampled_words: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    pub sample_words: usize,
    pub neighbors: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            sample_words: 100,
            neighbors: 5,
        }
    }
}

/// `λ = (mean(D_dup) + mean(D_nn)) / 2` from the neighbors of sampled words.
pub fn lambda_from_distances(dup: &[f64], nn: &[f64]) -> Result<(f64, bool)> {
    let mean_nn = crate::math::mean(nn).ok_or(Error::NoNeighborDistances)?;
    Ok(match crate::math::mean(dup) {
        Some(mean_dup) => ((mean_dup + mean_nn) / 2.0, false),
        None => (mean_nn / 2.0, true),
    })
}

/// Samples `options.sample_words` words (with replacement) from the noise
/// distribution, deduplicates them, and splits the cosine distances of the
/// top neighbors of each of their senses into own-word (`D_dup`) and
/// other-word (`D_nn`) lists.
pub fn estimate_threshold<R: Rng + ?Sized>(
    params: &ModelParams,
    table: &NegativeTable,
    mask: Option<&SenseMask>,
    options: ThresholdOptions,
    rng: &mut R,
) -> Result<ThresholdEstimate> {
    if params.vocab_size() < 2 {
        return Err(Error::Shape("threshold estimation needs at least two words".into()));
    }
    let mut sampled: Vec<u32> = Vec::new();
    for _ in 0..options.sample_words {
        let w = table.sample(rng);
        if !sampled.contains(&w) {
            sampled.push(w);
        }
    }
    let index = SenseIndex::new(params, mask);
    let mut dup = Vec::new();
    let mut nn = Vec::new();
    for &w in &sampled {
        for k in 0..params.senses() {
            if !index.is_active(w, k) {
                continue;
            }
            for n in nearest_senses_in(&index, (w, k as u32), options.neighbors)? {
                let dist = 1.0 - n.similarity;
                if n.word == w {
                    dup.push(dist);
                } else {
                    nn.push(dist);
                }
            }
        }
    }
    let (lambda, dup_fallback) = lambda_from_distances(&dup, &nn)?;
    Ok(ThresholdEstimate {
        lambda: lambda.clamp(0.0, 2.0),
        dup_distances: dup,
        nn_distances: nn,
        dup_fallback,
        sampled_words: sampled,
    })
}

/// Greedily removes the sense involved in the most duplicate pairs
/// (distance `< lambda`; ties remove the lowest index) until no duplicates
/// remain among the survivors. The last sense is never removed.
pub fn prune_word(sense_vectors: &[f64], dim: usize, lambda: f64, active: &[bool]) -> Vec<bool> {
    let k = active.len();
    let mut alive = active.to_vec();
    let mut dist = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let d = 1.0 - cosine(&sense_vectors[i * dim..(i + 1) * dim], &sense_vectors[j * dim..(j + 1) * dim]);
            dist[i * k + j] = d;
            dist[j * k + i] = d;
        }
    }
    loop {
        if alive.iter().filter(|&&a| a).count() <= 1 {
            return alive;
        }
        let mut counts = vec![0usize; k];
        for i in 0..k {
            for j in i + 1..k {
                if alive[i] && alive[j] && dist[i * k + j] < lambda {
                    counts[i] += 1;
                    counts[j] += 1;
                }
            }
        }
        let (victim, most) = counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
        if most == 0 {
            return alive;
        }
        alive[victim] = false;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecileStats {
    pub words: usize,
    pub removed: usize,
}

/// Pruning outcome. Deciles follow word id, i.e. descending corpus
/// frequency: decile 0 holds the most frequent tenth of the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSummary {
    pub lambda: f64,
    pub words: usize,
    pub removed: usize,
    pub per_decile: [DecileStats; 10],
}

impl PruneSummary {
    pub fn mean_removed(&self) -> f64 {
        if self.words == 0 {
            0.0
        } else {
            self.removed as f64 / self.words as f64
        }
    }
}

/// Applies [`prune_word`] to every word, starting from `base` (or all senses).
pub fn prune_model(params: &ModelParams, lambda: f64, base: Option<&SenseMask>) -> Result<(SenseMask, PruneSummary)> {
    let (v, k, d) = (params.vocab_size(), params.senses(), params.dim());
    if let Some(b) = base {
        b.check_shape(params)?;
    }
    let mut mask = SenseMask::all_active(v, k);
    let mut summary = PruneSummary {
        lambda,
        words: v,
        removed: 0,
        per_decile: [DecileStats::default(); 10],
    };
    let all = vec![true; k];
    for w in 0..v as u32 {
        let start = mask_row(base, w).unwrap_or(&all);
        let row = prune_word(params.sense_block(w), d, lambda, start);
        let removed = start.iter().filter(|&&a| a).count() - row.iter().filter(|&&a| a).count();
        mask.set_row(w, &row)?;
        let decile = (w as usize * 10) / v.max(1);
        summary.per_decile[decile].words += 1;
        summary.per_decile[decile].removed += removed;
        summary.removed += removed;
    }
    Ok((mask, summary))
}
