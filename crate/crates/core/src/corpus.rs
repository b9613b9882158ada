//! Vocabulary, subsampling, context windows and the negative-sampling table.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use hashbrown::HashMap;
use rand::Rng;

use crate::error::{Error, Result};

/// Sentinel id marking a sentence/document boundary inside an encoded stream.
/// Windows never cross it.
pub const BOUNDARY: u32 = u32::MAX;

/// Default exponent applied to unigram counts for the noise distribution.
pub const DEFAULT_NEGATIVE_POWER: f64 = 0.75;

/// Word types ordered by descending count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    id_of: HashMap<String, u32>,
}

impl Vocabulary {
    /// Counts `tokens` and keeps the `max_vocab` most frequent types seen at
    /// least `min_count` times.
    pub fn build<I, S>(tokens: I, max_vocab: usize, min_count: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table: HashMap<String, u64> = HashMap::new();
        for tok in tokens {
            let tok = tok.as_ref();
            if let Some(c) = table.get_mut(tok) {
                *c += 1;
            } else {
                table.insert(tok.to_string(), 1);
            }
        }
        Self::from_count_table(table, max_vocab, min_count)
    }

    /// Builds from an already aggregated `token -> count` table.
    pub fn from_count_table<M>(table: M, max_vocab: usize, min_count: u64) -> Self
    where
        M: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> = table
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(max_vocab);
        let (words, counts) = entries.into_iter().unzip();
        Self::assemble(words, counts)
    }

    /// Rebuilds a vocabulary from words and counts already in id order,
    /// checking the ordering and uniqueness invariants.
    pub fn from_entries(words: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if words.len() != counts.len() {
            return Err(Error::InvalidVocabulary(alloc::format!(
                "{} words but {} counts",
                words.len(),
                counts.len()
            )));
        }
        for (i, c) in counts.iter().enumerate() {
            if *c == 0 {
                return Err(Error::InvalidVocabulary(alloc::format!(
                    "word {} has zero count",
                    words[i]
                )));
            }
        }
        for i in 1..words.len() {
            let ordered = counts[i - 1] > counts[i]
                || (counts[i - 1] == counts[i] && words[i - 1] < words[i]);
            if !ordered {
                return Err(Error::InvalidVocabulary(alloc::format!(
                    "entries {} and {} are out of order",
                    i - 1,
                    i
                )));
            }
        }
        Ok(Self::assemble(words, counts))
    }

    fn assemble(words: Vec<String>, counts: Vec<u64>) -> Self {
        let id_of = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let total_tokens = counts.iter().sum();
        Vocabulary {
            words,
            counts,
            total_tokens,
            id_of,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of the counts of the retained words.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.id_of.get(word).copied()
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens. Occurrences of
    /// `boundary` become [`BOUNDARY`].
    pub fn encode<I, S>(&self, tokens: I, boundary: Option<&str>) -> Vec<u32>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        for tok in tokens {
            let tok = tok.as_ref();
            if boundary == Some(tok) {
                if out.last() != Some(&BOUNDARY) {
                    out.push(BOUNDARY);
                }
            } else if let Some(id) = self.id(tok) {
                out.push(id);
            }
        }
        out
    }

    /// Per-word keep probabilities for frequent-word subsampling.
    pub fn keep_probs(&self, threshold: f64) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| keep_probability(c, self.total_tokens, threshold))
            .collect()
    }
}

/// Probability of keeping one occurrence of a word seen `count` times out of
/// `total`: `min(1, sqrt(t/f) + t/f)` with `f = count / total`.
pub fn keep_probability(count: u64, total: u64, threshold: f64) -> f64 {
    let f = count as f64 / total as f64;
    let r = threshold / f;
    (libm::sqrt(r) + r).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub center: u32,
    /// Index of the center token in the encoded stream.
    pub position: usize,
    pub contexts: Vec<u32>,
}

/// Applies subsampling to `ids`, returning surviving `(position, id)` pairs.
/// Boundaries always survive. Exactly one uniform draw is consumed per
/// non-boundary token.
pub fn subsample<R: Rng + ?Sized>(ids: &[u32], keep_probs: &[f64], rng: &mut R) -> Vec<(usize, u32)> {
    let mut out = Vec::with_capacity(ids.len());
    for (pos, &id) in ids.iter().enumerate() {
        if id == BOUNDARY {
            out.push((pos, id));
            continue;
        }
        let u: f64 = rng.random();
        if u < keep_probs[id as usize] {
            out.push((pos, id));
        }
    }
    out
}

/// Iterator over the context windows of a subsampled stream.
#[derive(Debug, Clone)]
pub struct Windows {
    survivors: Vec<(usize, u32)>,
    window: usize,
    next: usize,
    segment_start: usize,
    segment_end: usize,
}

impl Windows {
    /// Windows over an already subsampled stream.
    pub fn over(survivors: Vec<(usize, u32)>, window: usize) -> Self {
        let mut w = Windows {
            survivors,
            window,
            next: 0,
            segment_start: 0,
            segment_end: 0,
        };
        w.segment_end = w.find_segment_end(0);
        w
    }

    fn find_segment_end(&self, from: usize) -> usize {
        self.survivors[from..]
            .iter()
            .position(|&(_, id)| id == BOUNDARY)
            .map_or(self.survivors.len(), |p| from + p)
    }
}

impl Iterator for Windows {
    type Item = ContextWindow;

    fn next(&mut self) -> Option<ContextWindow> {
        while self.next < self.survivors.len() {
            let i = self.next;
            self.next += 1;
            if i == self.segment_end {
                self.segment_start = i + 1;
                self.segment_end = self.find_segment_end(i + 1);
                continue;
            }
            let lo = i.saturating_sub(self.window).max(self.segment_start);
            let hi = (i + self.window + 1).min(self.segment_end);
            if hi - lo <= 1 {
                continue;
            }
            let contexts = self.survivors[lo..i]
                .iter()
                .chain(&self.survivors[i + 1..hi])
                .map(|&(_, id)| id)
                .collect();
            let (position, center) = self.survivors[i];
            return Some(ContextWindow {
                center,
                position,
                contexts,
            });
        }
        None
    }
}

/// Subsamples `ids` with `keep_probs` and yields a window of up to `window`
/// surviving neighbors on each side of every survivor.
pub fn iter_windows<R: Rng + ?Sized>(
    ids: &[u32],
    window: usize,
    keep_probs: &[f64],
    rng: &mut R,
) -> Windows {
    Windows::over(subsample(ids, keep_probs, rng), window)
}

/// Cumulative noise distribution `P_n(w) ∝ count(w)^power`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeTable {
    cumulative: Vec<f64>,
    power: f64,
}

impl NegativeTable {
    pub fn new(counts: &[u64], power: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let masses: Vec<f64> = counts
            .iter()
            .map(|&c| libm::pow(c as f64, power))
            .collect();
        let total: f64 = masses.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = masses
            .iter()
            .map(|m| {
                acc += m;
                acc / total
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(NegativeTable { cumulative, power })
    }

    pub fn from_vocab(vocab: &Vocabulary, power: f64) -> Result<Self> {
        Self::new(vocab.counts(), power)
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// Probability mass of word `id`.
    pub fn probability(&self, id: u32) -> f64 {
        let i = id as usize;
        if i == 0 {
            self.cumulative[0]
        } else {
            self.cumulative[i] - self.cumulative[i - 1]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1) as u32
    }

    /// Appends `n` draws to `out`, redrawing any that equal `exclude`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        n: usize,
        exclude: Option<u32>,
        rng: &mut R,
        out: &mut Vec<u32>,
    ) -> Result<()> {
        if let Some(ex) = exclude {
            if self.len() < 2 && n > 0 {
                return Err(Error::ExclusionImpossible {
                    exclude: ex,
                    size: self.len(),
                });
            }
        }
        for _ in 0..n {
            loop {
                let id = self.sample(rng);
                if Some(id) != exclude {
                    out.push(id);
                    break;
                }
            }
        }
        Ok(())
    }
}

/// Draws `n` noise words, none equal to `exclude`.
pub fn sample_negatives<R: Rng + ?Sized>(
    table: &NegativeTable,
    n: usize,
    exclude: Option<u32>,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(n);
    table.sample_into(n, exclude, rng, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn build_vocab_counts_and_orders() {
        let v = Vocabulary::build(["a", "b", "a"], 10, 1);
        assert_eq!(v.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(v.counts(), &[2, 1]);
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.total_tokens(), 3);
    }

    #[test]
    fn build_vocab_empty_stream() {
        let v = Vocabulary::build(core::iter::empty::<&str>(), 10, 1);
        assert!(v.is_empty());
    }

    #[test]
    fn build_vocab_ties_are_lexicographic_and_min_count_applies() {
        let v = Vocabulary::build(["z", "y", "x", "x", "y", "q"], 10, 2);
        assert_eq!(v.words(), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn build_vocab_matches_brute_force_on_zipf_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tokens: Vec<String> = (0..1000)
            .map(|_| {
                // inverse-CDF draw of a truncated Zipf(1) over 200 types
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let h: f64 = (1..=200).map(|r| 1.0 / r as f64).sum();
                let mut rank = 200;
                for r in 1..=200 {
                    acc += 1.0 / (r as f64 * h);
                    if u < acc {
                        rank = r;
                        break;
                    }
                }
                alloc::format!("w{rank}")
            })
            .collect();
        let v = Vocabulary::build(tokens.iter(), 50, 1);

        // oracle: quadratic counting, then full sort
        let mut uniq: Vec<&String> = Vec::new();
        for t in &tokens {
            if !uniq.contains(&t) {
                uniq.push(t);
            }
        }
        let mut counted: Vec<(String, u64)> = uniq
            .iter()
            .map(|u| ((*u).clone(), tokens.iter().filter(|t| t == u).count() as u64))
            .collect();
        counted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        counted.truncate(50);
        let expected_words: Vec<String> = counted.iter().map(|c| c.0.clone()).collect();
        let expected_counts: Vec<u64> = counted.iter().map(|c| c.1).collect();
        assert_eq!(v.words(), expected_words.as_slice());
        assert_eq!(v.counts(), expected_counts.as_slice());
    }

    #[test]
    fn from_entries_rejects_bad_order() {
        let err = Vocabulary::from_entries(vec!["a".into(), "b".into()], vec![1, 2]);
        assert!(err.is_err());
        assert!(Vocabulary::from_entries(vec!["a".into(), "b".into()], vec![2, 2]).is_ok());
        assert!(Vocabulary::from_entries(vec!["b".into(), "a".into()], vec![2, 2]).is_err());
    }

    #[test]
    fn keep_probability_examples() {
        assert_eq!(keep_probability(1, 10_000, 1e-4), 1.0);
        let p = keep_probability(100, 10_000, 1e-4);
        assert!((p - 0.11).abs() < 1e-12, "{p}");
    }

    #[test]
    fn keep_probability_matches_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let total: u64 = rng.random_range(1..1_000_000);
            let count: u64 = rng.random_range(1..=total);
            let t: f64 = rng.random_range(1e-6..1e-2);
            let f = count as f64 / total as f64;
            let expected = f64::min(1.0, (t / f).sqrt() + t / f);
            assert!((keep_probability(count, total, t) - expected).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn keep_probability_is_monotone_in_count(total in 2u64..1_000_000, a in 1u64..1_000_000, b in 1u64..1_000_000, t in 1e-6f64..1e-1) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let lo = lo.min(total);
            let hi = hi.min(total);
            prop_assert!(keep_probability(hi, total, t) <= keep_probability(lo, total, t));
        }
    }

    fn all_windows(ids: &[u32], window: usize) -> Vec<ContextWindow> {
        let keep = vec![1.0; 64];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        iter_windows(ids, window, &keep, &mut rng).collect()
    }

    #[test]
    fn windows_truncate_at_sequence_ends() {
        let w = all_windows(&[0, 1, 2], 5);
        let got: Vec<(u32, Vec<u32>)> = w.into_iter().map(|w| (w.center, w.contexts)).collect();
        assert_eq!(got, vec![(0, vec![1, 2]), (1, vec![0, 2]), (2, vec![0, 1])]);
    }

    #[test]
    fn total_subsampling_yields_nothing() {
        let keep = vec![0.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(iter_windows(&[0, 1, 2, 1], 5, &keep, &mut rng).count(), 0);
    }

    #[test]
    fn single_token_emits_no_window() {
        assert!(all_windows(&[4], 5).is_empty());
        assert!(all_windows(&[4, BOUNDARY, 5], 5).is_empty());
    }

    #[test]
    fn boundaries_reset_windows() {
        let w = all_windows(&[0, 1, BOUNDARY, 2, 3], 5);
        let got: Vec<(u32, Vec<u32>)> = w.into_iter().map(|w| (w.center, w.contexts)).collect();
        assert_eq!(got, vec![(0, vec![1]), (1, vec![0]), (2, vec![3]), (3, vec![2])]);
    }

    #[test]
    fn windows_match_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ids: Vec<u32> = (0..200).map(|_| rng.random_range(0..64)).collect();
        let got = all_windows(&ids, 2);
        let mut expected = Vec::new();
        for i in 0..ids.len() {
            let mut ctx = Vec::new();
            for j in 0..ids.len() {
                if j != i && (j as i64 - i as i64).abs() <= 2 {
                    ctx.push(ids[j]);
                }
            }
            expected.push((i, ids[i], ctx));
        }
        assert_eq!(got.len(), expected.len());
        for (g, (pos, c, ctx)) in got.iter().zip(expected) {
            assert_eq!((g.position, g.center, &g.contexts), (pos, c, &ctx));
        }
    }

    #[test]
    fn windows_are_deterministic_per_seed() {
        let ids: Vec<u32> = (0..100).map(|i| i % 7).collect();
        let keep = vec![0.5; 7];
        let a: Vec<_> = iter_windows(&ids, 3, &keep, &mut ChaCha8Rng::seed_from_u64(5)).collect();
        let b: Vec<_> = iter_windows(&ids, 3, &keep, &mut ChaCha8Rng::seed_from_u64(5)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_table_examples() {
        let t = NegativeTable::new(&[1, 1], 1.0).unwrap();
        assert_eq!(t.cumulative(), &[0.5, 1.0]);
        let t = NegativeTable::new(&[16, 1], 0.75).unwrap();
        assert!((t.cumulative()[0] - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(t.cumulative()[1], 1.0);
        assert_eq!(NegativeTable::new(&[], 0.75), Err(Error::EmptyVocabulary));
    }

    #[test]
    fn negative_sampling_matches_analytic_masses() {
        let counts = [4u64, 2, 1];
        let t = NegativeTable::new(&counts, 0.75).unwrap();
        let masses: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let z: f64 = masses.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mut hist = [0usize; 3];
        for _ in 0..n {
            hist[t.sample(&mut rng) as usize] += 1;
        }
        for i in 0..3 {
            let p = masses[i] / z;
            let freq = hist[i] as f64 / n as f64;
            assert!((freq - p).abs() / p < 0.01, "word {i}: {freq} vs {p}");
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() < 3.0 * se, "word {i}: {freq} vs {p}");
        }
    }

    #[test]
    fn sample_negatives_contracts() {
        let t = NegativeTable::new(&[5, 1], 0.75).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_negatives(&t, 50, Some(0), &mut rng).unwrap();
        assert!(s.iter().all(|&id| id == 1));
        assert!(sample_negatives(&t, 0, None, &mut rng).unwrap().is_empty());
        let single = NegativeTable::new(&[5], 0.75).unwrap();
        assert!(matches!(
            sample_negatives(&single, 3, Some(0), &mut rng),
            Err(Error::ExclusionImpossible { .. })
        ));
        let a = sample_negatives(&t, 20, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_negatives(&t, 20, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn vocab_ids_are_a_bijection(tokens in proptest::collection::vec("[a-e]{1,2}", 0..200)) {
            let v = Vocabulary::build(tokens.iter(), 1000, 1);
            for (i, w) in v.words().iter().enumerate() {
                prop_assert_eq!(v.id(w), Some(i as u32));
                prop_assert!(v.count(i as u32) >= 1);
            }
        }

        #[test]
        fn negative_table_is_strictly_increasing(counts in proptest::collection::vec(1u64..10_000, 1..50)) {
            let t = NegativeTable::new(&counts, 0.75).unwrap();
            let c = t.cumulative();
            prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
            prop_assert!((c[c.len() - 1] - 1.0).abs() < 1e-9);
        }
    }
}
