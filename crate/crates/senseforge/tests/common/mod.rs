//! Synthetic topic-structured text with known sense structure.
//!
//! Topics are grouped; every topic has its own Zipf-distributed words, every
//! group a pool of shared words, and all sentences draw from common function
//! words. Polysemous words belong to topics of different groups.

#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct TopicSpec {
    pub groups: usize,
    pub topics_per_group: usize,
    pub topic_words: usize,
    pub group_words: usize,
    pub function_words: usize,
    pub polysemes: usize,
    pub sentence_len: (usize, usize),
    pub p_function: f64,
    pub p_group: f64,
    pub p_polyseme: f64,
}

impl Default for TopicSpec {
    fn default() -> Self {
        TopicSpec {
            groups: 8,
            topics_per_group: 4,
            topic_words: 60,
            group_words: 30,
            function_words: 40,
            polysemes: 24,
            sentence_len: (10, 20),
            p_function: 0.35,
            p_group: 0.15,
            p_polyseme: 0.02,
        }
    }
}

pub struct TopicModel {
    pub spec: TopicSpec,
    function: Vec<String>,
    group_vocab: Vec<Vec<String>>,
    topic_vocab: Vec<Vec<String>>,
    /// Topics each polyseme belongs to.
    pub polyseme_topics: Vec<Vec<usize>>,
    topic_polysemes: Vec<Vec<usize>>,
    zipf_function: WeightedIndex<f64>,
    zipf_group: WeightedIndex<f64>,
    zipf_topic: WeightedIndex<f64>,
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).unwrap()
}

impl TopicModel {
    pub fn new(spec: TopicSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_topics = spec.groups * spec.topics_per_group;
        let function = (0..spec.function_words).map(|i| format!("f{i}")).collect();
        let group_vocab = (0..spec.groups)
            .map(|g| (0..spec.group_words).map(|i| format!("g{g}_{i}")).collect())
            .collect();
        let topic_vocab = (0..n_topics)
            .map(|t| (0..spec.topic_words).map(|i| format!("t{t}_{i}")).collect())
            .collect();
        let mut polyseme_topics = Vec::new();
        let mut topic_polysemes = vec![Vec::new(); n_topics];
        for p in 0..spec.polysemes {
            let a = rng.random_range(0..n_topics);
            let b = loop {
                let b = rng.random_range(0..n_topics);
                if b / spec.topics_per_group != a / spec.topics_per_group {
                    break b;
                }
            };
            topic_polysemes[a].push(p);
            topic_polysemes[b].push(p);
            polyseme_topics.push(vec![a, b]);
        }
        TopicModel {
            zipf_function: zipf(spec.function_words),
            zipf_group: zipf(spec.group_words),
            zipf_topic: zipf(spec.topic_words),
            spec,
            function,
            group_vocab,
            topic_vocab,
            polyseme_topics,
            topic_polysemes,
        }
    }

    pub fn topics(&self) -> usize {
        self.topic_vocab.len()
    }

    pub fn group_of(&self, topic: usize) -> usize {
        topic / self.spec.topics_per_group
    }

    pub fn topic_word(&self, topic: usize, rank: usize) -> &str {
        &self.topic_vocab[topic][rank]
    }

    pub fn polyseme(&self, p: usize) -> String {
        format!("p{p}")
    }

    fn token(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let u: f64 = rng.random();
        let s = &self.spec;
        if u < s.p_function {
            self.function[self.zipf_function.sample(rng)].clone()
        } else if u < s.p_function + s.p_group {
            self.group_vocab[self.group_of(topic)][self.zipf_group.sample(rng)].clone()
        } else if u < s.p_function + s.p_group + s.p_polyseme && !self.topic_polysemes[topic].is_empty() {
            let ps = &self.topic_polysemes[topic];
            self.polyseme(ps[rng.random_range(0..ps.len())])
        } else {
            self.topic_vocab[topic][self.zipf_topic.sample(rng)].clone()
        }
    }

    pub fn sentence(&self, topic: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let (lo, hi) = self.spec.sentence_len;
        let n = rng.random_range(lo..=hi);
        (0..n).map(|_| self.token(topic, rng)).collect()
    }

    /// A topic sentence with `word` placed at a random position.
    pub fn sentence_with(&self, topic: usize, word: &str, rng: &mut ChaCha8Rng) -> (Vec<String>, usize) {
        let mut s = self.sentence(topic, rng);
        let pos = rng.random_range(0..s.len());
        s[pos] = word.to_string();
        (s, pos)
    }

    /// Writes sentences (uniform topics) until roughly `tokens` tokens.
    /// `map` may rewrite each token.
    pub fn write_corpus<F>(&self, path: &Path, tokens: usize, seed: u64, map: F) -> usize
    where
        F: Fn(&str) -> &str,
    {
        self.write_until(path, seed, map, |toks, _| toks >= tokens).0
    }

    /// Like [`write_corpus`](Self::write_corpus) with a size budget in bytes.
    /// Returns `(tokens, bytes)`.
    pub fn write_corpus_bytes(&self, path: &Path, bytes: usize, seed: u64) -> (usize, usize) {
        self.write_until(path, seed, |w| w, |_, b| b >= bytes)
    }

    fn write_until<F, D>(&self, path: &Path, seed: u64, map: F, done: D) -> (usize, usize)
    where
        F: Fn(&str) -> &str,
        D: Fn(usize, usize) -> bool,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
        let (mut tokens, mut bytes) = (0, 0);
        while !done(tokens, bytes) {
            let t = rng.random_range(0..self.topics());
            let s = self.sentence(t, &mut rng);
            tokens += s.len();
            let line: Vec<&str> = s.iter().map(|w| map(w)).collect();
            let line = line.join(" ");
            bytes += line.len() + 1;
            writeln!(out, "{line}").unwrap();
        }
        out.flush().unwrap();
        (tokens, bytes)
    }
}
