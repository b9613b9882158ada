//! Readers for SCWS-style contextual pairs, plain word-pair lists and
//! WiC-style sense-matching data.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use senseforge_core::eval::{ContextualPair, MarkedContext, PlainPair, WicInstance};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Fail on the first malformed line instead of skipping it.
    pub strict: bool,
    pub lowercase: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    /// Skipped lines (lenient mode only).
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            diagnostics: Vec::new(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn norm(s: &str, opts: ParseOptions) -> String {
    if opts.lowercase {
        s.to_lowercase()
    } else {
        s.to_string()
    }
}

/// Drives `parse_line` over the lines of `reader`, collecting diagnostics
/// or failing according to `opts.strict`.
fn parse_lines<R, T, F>(reader: R, path: &Path, opts: ParseOptions, mut parse_line: F) -> Result<Parsed<T>>
where
    R: Read,
    F: FnMut(usize, &str) -> Option<std::result::Result<T, String>>,
{
    let mut out = Parsed::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        match parse_line(i + 1, line) {
            None => {}
            Some(Ok(rec)) => out.records.push(rec),
            Some(Err(message)) if opts.strict => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
            Some(Err(message)) => out.diagnostics.push(Diagnostic { line: i + 1, message }),
        }
    }
    Ok(out)
}

fn finite(field: &str, what: &str) -> std::result::Result<f64, String> {
    match field.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("{what} {field:?} is not a finite number")),
    }
}

/// Splits a sentence with one `<b>…</b>`-marked target into tokens and the
/// target position. Markers may touch the word or stand apart.
pub fn parse_marked(sentence: &str, opts: ParseOptions) -> std::result::Result<MarkedContext, String> {
    let spaced = sentence.replace("<b>", " <b> ").replace("</b>", " </b> ");
    let mut tokens = Vec::new();
    let mut open_at = None;
    let mut target = None;
    for t in spaced.split_whitespace() {
        match t {
            "<b>" if open_at.is_none() && target.is_none() => open_at = Some(tokens.len()),
            "</b>" if open_at.is_some() => {
                let start = open_at.take().unwrap_or(0);
                if tokens.len() != start + 1 {
                    return Err(format!("marked target spans {} tokens", tokens.len() - start));
                }
                target = Some(start);
            }
            "<b>" | "</b>" => return Err("unbalanced or repeated <b> marker".into()),
            _ => tokens.push(norm(t, opts)),
        }
    }
    if open_at.is_some() {
        return Err("unclosed <b> marker".into());
    }
    let target = target.ok_or("no <b>target</b> marker")?;
    MarkedContext::new(tokens, target).map_err(|e| e.to_string())
}

/// Tab-separated `id, word1, pos1, word2, pos2, context1, context2, gold, ratings…`.
pub fn read_contextual<R: Read>(reader: R, path: &Path, opts: ParseOptions) -> Result<Parsed<ContextualPair>> {
    parse_lines(reader, path, opts, |_, line| {
        if line.trim().is_empty() {
            return None;
        }
        Some((|| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 8 {
                return Err(format!("expected at least 8 tab-separated fields, found {}", f.len()));
            }
            let context1 = parse_marked(f[5], opts).map_err(|e| format!("context1: {e}"))?;
            let context2 = parse_marked(f[6], opts).map_err(|e| format!("context2: {e}"))?;
            let gold = finite(f[7], "gold score")?;
            Ok(ContextualPair {
                word1: norm(f[1].trim(), opts),
                pos1: f[2].trim().to_string(),
                word2: norm(f[3].trim(), opts),
                pos2: f[4].trim().to_string(),
                context1,
                context2,
                gold,
            })
        })())
    })
}

pub fn parse_contextual(path: &Path, opts: ParseOptions) -> Result<Parsed<ContextualPair>> {
    read_contextual(open(path)?, path, opts)
}

/// `word1 word2 score` separated by whitespace. Lines starting with `#` are
/// comments; a first data line without a numeric score is a header.
pub fn read_plain_pairs<R: Read>(reader: R, path: &Path, opts: ParseOptions) -> Result<Parsed<PlainPair>> {
    let mut first = true;
    parse_lines(reader, path, opts, |_, line| {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            return None;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let header = first && f.len() >= 3 && f[2].parse::<f64>().is_err();
        first = false;
        if header {
            return None;
        }
        Some((|| {
            if f.len() != 3 {
                return Err(format!("expected `word1 word2 score`, found {} fields", f.len()));
            }
            Ok(PlainPair {
                word1: norm(f[0], opts),
                word2: norm(f[1], opts),
                gold: finite(f[2], "score")?,
            })
        })())
    })
}

pub fn parse_plain_pairs(path: &Path, opts: ParseOptions) -> Result<Parsed<PlainPair>> {
    read_plain_pairs(open(path)?, path, opts)
}

/// Gold labels, one `T` or `F` per line.
pub fn read_wic_gold<R: Read>(reader: R, path: &Path) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match line.trim() {
            "T" => out.push(true),
            "F" => out.push(false),
            "" => {}
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected T or F, found {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Tab-separated `target, pos, idx1-idx2, context1, context2` with
/// whitespace-tokenized contexts and 0-based target positions. `gold`, when
/// given, holds one label per data line.
pub fn read_wic<R: Read>(reader: R, path: &Path, gold: Option<&[bool]>, opts: ParseOptions) -> Result<Parsed<WicInstance>> {
    let mut data_lines = 0usize;
    let parsed = parse_lines(reader, path, opts, |_, line| {
        if line.trim().is_empty() {
            return None;
        }
        let index = data_lines;
        data_lines += 1;
        Some((|| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(format!("expected 5 tab-separated fields, found {}", f.len()));
            }
            let (a, b) = f[2].trim().split_once('-').ok_or("positions must look like `i-j`")?;
            let (a, b): (usize, usize) = match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Err(format!("bad positions {:?}", f[2])),
            };
            let toks = |s: &str| s.split_whitespace().map(|t| norm(t, opts)).collect::<Vec<_>>();
            let context1 = MarkedContext::new(toks(f[3]), a).map_err(|e| format!("context1: {e}"))?;
            let context2 = MarkedContext::new(toks(f[4]), b).map_err(|e| format!("context2: {e}"))?;
            Ok(WicInstance {
                target: norm(f[0].trim(), opts),
                pos: f[1].trim().to_string(),
                context1,
                context2,
                gold: gold.and_then(|g| g.get(index).copied()),
            })
        })())
    })?;
    if let Some(g) = gold {
        if g.len() != data_lines {
            return Err(Error::format(path, format!("{data_lines} instances but {} gold labels", g.len())));
        }
    }
    Ok(parsed)
}

pub fn parse_wic(path: &Path, gold_path: Option<&Path>, opts: ParseOptions) -> Result<Parsed<WicInstance>> {
    let gold = match gold_path {
        Some(g) => Some(read_wic_gold(open(g)?, g)?),
        None => None,
    };
    read_wic(open(path)?, path, gold.as_deref(), opts)
}

/// One `<b>`-marked sentence per line, for sense-selection task export.
pub fn parse_marked_sentences(path: &Path, opts: ParseOptions) -> Result<Parsed<MarkedContext>> {
    parse_lines(open(path)?, path, opts, |_, line| {
        (!line.trim().is_empty()).then(|| parse_marked(line, opts))
    })
}

/// One word per line; blank lines and `#` comments ignored.
pub fn read_word_list(path: &Path, lowercase: bool) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| if lowercase { l.to_lowercase() } else { l.to_string() })
        .collect())
}

