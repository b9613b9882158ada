//! Whitespace-tokenized corpus files. By default the file is one token
//! stream; line ends and a boundary token can be made to split windows.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use senseforge_core::corpus::BOUNDARY;
use senseforge_core::Vocabulary;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizeOptions {
    pub lowercase: bool,
    /// Token that ends a window span.
    pub boundary: Option<String>,
    /// Treat every line end as a boundary.
    pub line_boundaries: bool,
}

fn for_each_line<F: FnMut(&str)>(path: &Path, mut f: F) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(());
        }
        f(&line);
    }
}

pub fn count_tokens(path: &Path, opts: &TokenizeOptions) -> Result<HashMap<String, u64>> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut lowered = String::new();
    for_each_line(path, |line| {
        let line = if opts.lowercase {
            lowered = line.to_lowercase();
            lowered.as_str()
        } else {
            line
        };
        for tok in line.split_whitespace() {
            if opts.boundary.as_deref() == Some(tok) {
                continue;
            }
            match counts.get_mut(tok) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(tok.to_string(), 1);
                }
            }
        }
    })?;
    Ok(counts)
}

pub fn build_vocab(path: &Path, opts: &TokenizeOptions, max_vocab: usize, min_count: u64) -> Result<Vocabulary> {
    Ok(Vocabulary::from_count_table(count_tokens(path, opts)?, max_vocab, min_count))
}

/// Encodes the corpus, dropping unknown tokens. Boundary tokens (and line
/// ends with `line_boundaries`) become a single [`BOUNDARY`].
pub fn encode_corpus(path: &Path, opts: &TokenizeOptions, vocab: &Vocabulary) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    let mut lowered = String::new();
    let push_boundary = |ids: &mut Vec<u32>| {
        if !ids.is_empty() && ids.last() != Some(&BOUNDARY) {
            ids.push(BOUNDARY);
        }
    };
    for_each_line(path, |line| {
        let line = if opts.lowercase {
            lowered = line.to_lowercase();
            lowered.as_str()
        } else {
            line
        };
        for tok in line.split_whitespace() {
            if opts.boundary.as_deref() == Some(tok) {
                push_boundary(&mut ids);
            } else if let Some(id) = vocab.id(tok) {
                ids.push(id);
            }
        }
        if opts.line_boundaries {
            push_boundary(&mut ids);
        }
    })?;
    if ids.last() == Some(&BOUNDARY) {
        ids.pop();
    }
    Ok(ids)
}
