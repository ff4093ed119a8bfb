//! CBOW word embeddings with negative sampling.
//!
//! One shared table of V×dim parameters embeds every word. A training sample
//! is one (target, context) co-occurrence plus a fixed set of negative words;
//! its loss is
//!
//!   ℓ(t, c, N) = −log σ(e_tᵀe_c) − Σ_{i∈N} log σ(−e_tᵀe_{n,i})
//!
//! so each per-sample gradient touches only the rows of the words involved:
//! at most (2 + |N|)·dim of the V·dim parameters. That row-level sparsity is
//! what the sparse DP trainer exploits.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::NoiseSource;
use crate::scalar::Real;
use crate::sparse::SparseVector;

/// Small built-in English stop-word list; replaceable via a file.
pub const BUILTIN_STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is",
    "it", "no", "not", "of", "on", "or", "s", "such", "t", "that", "the", "their", "then",
    "there", "these", "they", "this", "to", "was", "will", "with",
];

/// Frequency-ranked token list with dense indices in [0, V).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl Vocabulary {
    fn from_ranked(ranked: Vec<(String, u64)>) -> Self {
        let mut tokens = Vec::with_capacity(ranked.len());
        let mut counts = Vec::with_capacity(ranked.len());
        let mut index = HashMap::with_capacity(ranked.len());
        for (i, (tok, count)) in ranked.into_iter().enumerate() {
            index.insert(tok.clone(), i);
            tokens.push(tok);
            counts.push(count);
        }
        Self { tokens, index, counts }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// One token per line; the line number is the index. Counts are not
    /// persisted.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::input(format!("cannot open vocabulary {}: {e}", path.display())))?;
        let mut ranked = Vec::new();
        let mut seen = HashSet::new();
        for line in BufReader::new(file).lines() {
            let tok = line?.trim().to_string();
            if tok.is_empty() {
                continue;
            }
            if !seen.insert(tok.clone()) {
                return Err(Error::input(format!("duplicate vocabulary token {tok:?}")));
            }
            ranked.push((tok, 0));
        }
        if ranked.is_empty() {
            return Err(Error::input("vocabulary file is empty"));
        }
        Ok(Self::from_ranked(ranked))
    }
}

/// Lowercased alphanumeric tokens, split on everything else.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Frequency-ranked vocabulary of at most `vocab_size` tokens, with stop
/// words removed before ranking. Ties break lexicographically so builds are
/// reproducible.
pub fn build_vocabulary(
    tokens: &[String],
    vocab_size: usize,
    stop_words: Option<&HashSet<String>>,
) -> Result<Vocabulary> {
    if vocab_size == 0 {
        return Err(Error::invalid("vocabulary size must be positive".to_string()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for tok in tokens {
        if let Some(stops) = stop_words {
            if stops.contains(tok.as_str()) {
                continue;
            }
        }
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::input("corpus has no usable tokens"));
    }
    let mut ranked: Vec<(String, u64)> =
        counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(vocab_size);
    Ok(Vocabulary::from_ranked(ranked))
}

/// Maps the token stream to indices, dropping out-of-vocabulary tokens.
pub fn token_stream(tokens: &[String], vocab: &Vocabulary) -> Vec<u32> {
    tokens.iter().filter_map(|t| vocab.index_of(t)).map(|i| i as u32).collect()
}

/// One (target, context) pair per ordered co-occurrence within the window.
pub fn context_pairs(stream: &[u32], window: usize) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for i in 0..stream.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(stream.len().saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                pairs.push((stream[i], stream[j]));
            }
        }
    }
    pairs
}

/// One target word, one context word, and a fixed number of negative words,
/// all as vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CbowSample {
    pub target: u32,
    pub context: u32,
    pub negatives: Vec<u32>,
}

impl CbowSample {
    /// Negatives must be distinct and differ from both target and context.
    pub fn new(target: u32, context: u32, negatives: Vec<u32>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(negatives.len());
        for &n in &negatives {
            if n == target || n == context {
                return Err(Error::invalid("negative words must differ from target and context".to_string()));
            }
            if !seen.insert(n) {
                return Err(Error::invalid("negative words must be distinct".to_string()));
            }
        }
        Ok(Self { target, context, negatives })
    }

    pub fn rows(&self) -> Vec<u32> {
        let mut rows = vec![self.target, self.context];
        rows.extend_from_slice(&self.negatives);
        rows
    }
}

/// Attaches `negatives` uniformly drawn distinct negative words to each pair.
pub fn attach_negatives(
    pairs: &[(u32, u32)],
    vocab_size: usize,
    negatives: usize,
    rng: &mut NoiseSource,
) -> Result<Vec<CbowSample>> {
    if vocab_size < negatives + 2 {
        return Err(Error::invalid(format!(
            "vocabulary of {vocab_size} cannot supply {negatives} negatives distinct from target and context"
        )));
    }
    let mut samples = Vec::with_capacity(pairs.len());
    for &(t, c) in pairs {
        let mut negs: Vec<u32> = Vec::with_capacity(negatives);
        while negs.len() < negatives {
            let cand = rng.index(vocab_size) as u32;
            if cand != t && cand != c && !negs.contains(&cand) {
                negs.push(cand);
            }
        }
        samples.push(CbowSample { target: t, context: c, negatives: negs });
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Shuffles and splits into train/val/test of the configured sizes.
pub fn split_samples(
    mut samples: Vec<CbowSample>,
    sizes: SplitSizes,
    rng: &mut NoiseSource,
) -> Result<(Vec<CbowSample>, Vec<CbowSample>, Vec<CbowSample>)> {
    let want = sizes.train + sizes.val + sizes.test;
    if samples.len() < want {
        return Err(Error::input(format!(
            "corpus yields {} samples, fewer than the requested {want} (train {} + val {} + test {})",
            samples.len(),
            sizes.train,
            sizes.val,
            sizes.test
        )));
    }
    rng.shuffle(&mut samples);
    samples.truncate(want);
    let test = samples.split_off(sizes.train + sizes.val);
    let val = samples.split_off(sizes.train);
    Ok((samples, val, test))
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub vocab_size: usize,
    pub window: usize,
    pub negatives: usize,
    pub splits: SplitSizes,
}

/// Full preprocessing pipeline: tokenize, build the vocabulary, emit
/// windowed pairs, attach negatives, shuffle, split.
pub fn preprocess(
    corpus: &str,
    cfg: &PreprocessConfig,
    stop_words: Option<&HashSet<String>>,
    rng: &mut NoiseSource,
) -> Result<(Vocabulary, Vec<CbowSample>, Vec<CbowSample>, Vec<CbowSample>)> {
    let tokens = tokenize(corpus);
    if tokens.is_empty() {
        return Err(Error::input("corpus is empty"));
    }
    let vocab = build_vocabulary(&tokens, cfg.vocab_size, stop_words)?;
    let stream = token_stream(&tokens, &vocab);
    let pairs = context_pairs(&stream, cfg.window);
    let samples = attach_negatives(&pairs, vocab.len(), cfg.negatives, rng)?;
    let (train, val, test) = split_samples(samples, cfg.splits, rng)?;
    Ok((vocab, train, val, test))
}

/// Single shared embedding table: V rows of `dim` parameters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    vocab: usize,
    dim: usize,
    weights: Vec<F>,
}

impl<F: Real> EmbeddingTable<F> {
    pub fn from_flat(vocab: usize, dim: usize, weights: Vec<F>) -> Result<Self> {
        if weights.len() != vocab * dim {
            return Err(Error::DimensionMismatch { expected: vocab * dim, actual: weights.len() });
        }
        Ok(Self { vocab, dim, weights })
    }

    /// Standard word2vec init: i.i.d. uniform in (−0.5/dim, 0.5/dim).
    pub fn init_uniform(vocab: usize, dim: usize, rng: &mut NoiseSource) -> Self {
        let half = 0.5 / dim as f64;
        let weights = (0..vocab * dim)
            .map(|_| F::from_f64((rng.uniform() * 2.0 - 1.0) * half))
            .collect();
        Self { vocab, dim, weights }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[F] {
        &self.weights
    }

    pub fn into_flat(self) -> Vec<F> {
        self.weights
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// −log σ(z), computed via the stable softplus branch.
fn neg_log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn check_rows(vocab: usize, s: &CbowSample) -> Result<()> {
    for r in s.rows() {
        if r as usize >= vocab {
            return Err(Error::invalid(format!("word index {r} out of range for vocabulary {vocab}")));
        }
    }
    Ok(())
}

fn row_dot<F: Real>(flat: &[F], dim: usize, a: usize, b: usize) -> f64 {
    let ra = &flat[a * dim..(a + 1) * dim];
    let rb = &flat[b * dim..(b + 1) * dim];
    ra.iter().zip(rb.iter()).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum()
}

/// Loss of one sample against a flat row-major table.
pub fn cbow_loss_at<F: Real>(vocab: usize, dim: usize, flat: &[F], s: &CbowSample) -> Result<f64> {
    check_rows(vocab, s)?;
    let t = s.target as usize;
    let mut loss = neg_log_sigmoid(row_dot(flat, dim, t, s.context as usize));
    for &n in &s.negatives {
        // -log sigma(-z) = softplus(z)
        let z = row_dot(flat, dim, t, n as usize);
        loss += neg_log_sigmoid(-z);
    }
    Ok(loss)
}

/// Analytic gradient of one sample over the flattened table. The support is
/// confined to the rows of {target, context} ∪ negatives; coincident rows
/// accumulate.
pub fn cbow_gradient_at<F: Real>(
    vocab: usize,
    dim: usize,
    flat: &[F],
    s: &CbowSample,
) -> Result<SparseVector<F>> {
    check_rows(vocab, s)?;
    let t = s.target as usize;
    let c = s.context as usize;
    let mut pairs: Vec<(usize, F)> = Vec::with_capacity((2 + s.negatives.len()) * dim);

    let push_row = |row: usize, source: usize, factor: f64, pairs: &mut Vec<(usize, F)>| {
        let src = &flat[source * dim..(source + 1) * dim];
        for (k, &v) in src.iter().enumerate() {
            pairs.push((row * dim + k, F::from_f64(factor * v.as_f64())));
        }
    };

    let g_pos = sigmoid(row_dot(flat, dim, t, c)) - 1.0;
    // d/d e_c and the e_c part of d/d e_t.
    push_row(c, t, g_pos, &mut pairs);
    push_row(t, c, g_pos, &mut pairs);
    for &n in &s.negatives {
        let n = n as usize;
        let g_neg = sigmoid(row_dot(flat, dim, t, n));
        push_row(n, t, g_neg, &mut pairs);
        push_row(t, n, g_neg, &mut pairs);
    }
    SparseVector::from_pairs(vocab * dim, pairs)
}

pub fn cbow_loss<F: Real>(table: &EmbeddingTable<F>, s: &CbowSample) -> Result<f64> {
    cbow_loss_at(table.vocab, table.dim, &table.weights, s)
}

pub fn cbow_gradient<F: Real>(table: &EmbeddingTable<F>, s: &CbowSample) -> Result<SparseVector<F>> {
    cbow_gradient_at(table.vocab, table.dim, &table.weights, s)
}

/// Sample list behind the generic trainer's gradient-oracle interface.
#[derive(Debug, Clone)]
pub struct CbowObjective<F> {
    vocab: usize,
    dim: usize,
    samples: Vec<CbowSample>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> CbowObjective<F> {
    pub fn new(vocab: usize, dim: usize, samples: Vec<CbowSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("objective needs at least one sample"));
        }
        for s in &samples {
            check_rows(vocab, s)?;
        }
        Ok(Self { vocab, dim, samples, _marker: std::marker::PhantomData })
    }

    pub fn samples(&self) -> &[CbowSample] {
        &self.samples
    }
}

impl<F: Real> crate::trainer::GradientOracle<F> for CbowObjective<F> {
    fn dim(&self) -> usize {
        self.vocab * self.dim
    }

    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn sample_gradient(&self, params: &[F], sample: usize) -> SparseVector<F> {
        cbow_gradient_at(self.vocab, self.dim, params, &self.samples[sample])
            .expect("validated at construction")
    }

    fn sample_loss(&self, params: &[F], sample: usize) -> F {
        F::from_f64(
            cbow_loss_at(self.vocab, self.dim, params, &self.samples[sample])
                .expect("validated at construction"),
        )
    }
}

/// Sample file: one `target context n1 .. nk` line per sample.
pub fn write_samples(path: &Path, samples: &[CbowSample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        write!(out, "{} {}", s.target, s.context)?;
        for n in &s.negatives {
            write!(out, " {n}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<CbowSample>> {
    let file = File::open(path)
        .map_err(|e| Error::input(format!("cannot open samples {}: {e}", path.display())))?;
    let mut samples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let mut ids = Vec::new();
        for tok in line.split_whitespace() {
            let id: u32 = tok
                .parse()
                .map_err(|e| Error::input(format!("line {}: bad word id {tok:?}: {e}", lineno + 1)))?;
            ids.push(id);
        }
        if ids.len() < 2 {
            return Err(Error::input(format!("line {}: sample needs target and context", lineno + 1)));
        }
        samples.push(CbowSample { target: ids[0], context: ids[1], negatives: ids[2..].to_vec() });
    }
    Ok(samples)
}
