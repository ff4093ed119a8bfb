//! Canary-based memorization auditing.
//!
//! Random three-word phrases are planted in the training corpus a fixed
//! number of times. After training, each canary's log-perplexity under the
//! model is compared against randomly sampled phrases sharing its first word;
//! the canary's *rank* counts sampled phrases that are at least as perplexing
//! as the canary. A model that memorized its canaries pushes their ranks
//! toward the top of the range, which a chi-squared goodness-of-fit test
//! against the uniform distribution picks up.
//!
//! Word probabilities for a bag-of-words embedding table are defined as a
//! softmax over dot products: P(next | context) ∝ exp(e_ctxᵀ·e_next), where a
//! two-word context is represented by the mean of its embeddings. This
//! definition is isolated in [`log_perplexity`] so alternatives can be
//! swapped in one place.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::embedding::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::NoiseSource;
use crate::scalar::Real;

/// Three vocabulary indices drawn uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canary {
    pub words: [u32; 3],
}

impl Canary {
    pub fn new(words: [u32; 3]) -> Self {
        Self { words }
    }
}

/// Uniform random word-triples over the vocabulary.
pub fn generate_canaries(
    vocab_size: usize,
    count: usize,
    rng: &mut NoiseSource,
) -> Result<Vec<Canary>> {
    if vocab_size == 0 {
        return Err(Error::invalid("vocabulary must be nonempty".to_string()));
    }
    Ok((0..count)
        .map(|_| {
            Canary::new([
                rng.index(vocab_size) as u32,
                rng.index(vocab_size) as u32,
                rng.index(vocab_size) as u32,
            ])
        })
        .collect())
}

/// Random triples that do not collide with any planted canary, for the
/// out-of-train control benchmark.
pub fn generate_control_phrases(
    vocab_size: usize,
    count: usize,
    exclude: &[Canary],
    rng: &mut NoiseSource,
) -> Result<Vec<Canary>> {
    if vocab_size == 0 {
        return Err(Error::invalid("vocabulary must be nonempty".to_string()));
    }
    let taken: HashSet<Canary> = exclude.iter().copied().collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let c = Canary::new([
            rng.index(vocab_size) as u32,
            rng.index(vocab_size) as u32,
            rng.index(vocab_size) as u32,
        ]);
        if !taken.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Splices each canary into the token stream exactly `copies` times, at
/// uniformly random positions. Stream length grows by 3 tokens per insertion.
pub fn insert_canaries(
    stream: &mut Vec<u32>,
    canaries: &[Canary],
    copies: usize,
    rng: &mut NoiseSource,
) -> Result<()> {
    if copies < 1 {
        return Err(Error::invalid("each canary must be inserted at least once".to_string()));
    }
    for canary in canaries {
        for _ in 0..copies {
            let pos = rng.index(stream.len() + 1);
            stream.splice(pos..pos, canary.words.iter().copied());
        }
    }
    Ok(())
}

/// Log-probabilities of every next word given a dense context vector:
/// softmax over e_ctxᵀ·e_v.
fn log_softmax_scores<F: Real>(table: &EmbeddingTable<F>, ctx: &[f64]) -> Vec<f64> {
    let v = table.vocab_size();
    let mut scores = Vec::with_capacity(v);
    for i in 0..v {
        let row = table.row(i);
        scores.push(row.iter().zip(ctx.iter()).map(|(&a, &b)| a.as_f64() * b).sum::<f64>());
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    for s in &mut scores {
        *s -= lse;
    }
    scores
}

fn row_f64<F: Real>(table: &EmbeddingTable<F>, i: usize) -> Vec<f64> {
    table.row(i).iter().map(|&x| x.as_f64()).collect()
}

fn mean_context<F: Real>(table: &EmbeddingTable<F>, a: usize, b: usize) -> Vec<f64> {
    table
        .row(a)
        .iter()
        .zip(table.row(b).iter())
        .map(|(&x, &y)| 0.5 * (x.as_f64() + y.as_f64()))
        .collect()
}

fn check_words<F: Real>(table: &EmbeddingTable<F>, c: &Canary) -> Result<()> {
    for &w in &c.words {
        if w as usize >= table.vocab_size() {
            return Err(Error::invalid(format!(
                "canary word {w} out of range for vocabulary {}",
                table.vocab_size()
            )));
        }
    }
    Ok(())
}

/// −log P(c₁|c₀) − log P(c₂|c₀,c₁); the two-word context is the mean of its
/// embeddings. Always nonnegative.
pub fn log_perplexity<F: Real>(table: &EmbeddingTable<F>, c: &Canary) -> Result<f64> {
    check_words(table, c)?;
    let [c0, c1, c2] = c.words.map(|w| w as usize);
    let first = log_softmax_scores(table, &row_f64(table, c0));
    let second = log_softmax_scores(table, &mean_context(table, c0, c1));
    Ok(-(first[c1] + second[c2]))
}

/// Counts sampled phrases (c₀, c₁′, c₂′) with c₁′ ≠ c₂′ whose log-perplexity
/// is at least the canary's; ties count. Pairs are drawn uniformly with
/// replacement across draws. A high rank means the model favors the canary.
pub fn rank<F: Real>(
    table: &EmbeddingTable<F>,
    c: &Canary,
    sample_size: usize,
    rng: &mut NoiseSource,
) -> Result<usize> {
    if sample_size < 1 {
        return Err(Error::invalid("sample size must be at least 1".to_string()));
    }
    check_words(table, c)?;
    let v = table.vocab_size();
    if v < 2 {
        return Err(Error::invalid("ranking needs a vocabulary of at least two words".to_string()));
    }
    let c0 = c.words[0] as usize;
    let target = log_perplexity(table, c)?;
    let first = log_softmax_scores(table, &row_f64(table, c0));
    // Second-word rows are cached per distinct middle word.
    let mut pair_rows: Vec<Option<Vec<f64>>> = vec![None; v];
    let mut count = 0usize;
    for _ in 0..sample_size {
        let a = rng.index(v);
        let mut b = rng.index(v);
        while b == a {
            b = rng.index(v);
        }
        let row = pair_rows[a]
            .get_or_insert_with(|| log_softmax_scores(table, &mean_context(table, c0, a)));
        let perplexity = -(first[a] + row[b]);
        if perplexity >= target {
            count += 1;
        }
    }
    Ok(count)
}

/// Pearson goodness-of-fit of ranks against the uniform distribution on
/// [0, sample_size], with `bins` equal-width bins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformityTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Statistic normalized by the number of ranks.
    pub distance: f64,
    pub histogram: Vec<u64>,
}

pub fn chi_squared_uniform(ranks: &[usize], bins: usize, sample_size: usize) -> Result<UniformityTest> {
    if bins < 2 {
        return Err(Error::invalid("need at least two bins".to_string()));
    }
    if sample_size < 1 {
        return Err(Error::invalid("sample size must be at least 1".to_string()));
    }
    if ranks.len() < 5 * bins {
        return Err(Error::invalid(format!(
            "expected-count rule: need at least {} ranks for {bins} bins, got {}",
            5 * bins,
            ranks.len()
        )));
    }
    let mut histogram = vec![0u64; bins];
    for &r in ranks {
        if r > sample_size {
            return Err(Error::invalid(format!("rank {r} exceeds sample size {sample_size}")));
        }
        let idx = ((r as u128 * bins as u128) / sample_size as u128).min(bins as u128 - 1) as usize;
        histogram[idx] += 1;
    }
    let n = ranks.len() as f64;
    let expected = n / bins as f64;
    let statistic: f64 =
        histogram.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let dof = (bins - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(dof).expect("bins >= 2").cdf(statistic);
    Ok(UniformityTest { statistic, p_value, distance: statistic / n, histogram })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanaryRecord {
    pub words: [u32; 3],
    pub log_perplexity: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanarySummary {
    pub insertion_count: usize,
    pub sample_size: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub distance: f64,
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct CanaryReport {
    pub records: Vec<CanaryRecord>,
    pub summary: CanarySummary,
}

/// Ranks every canary (in parallel, one derived stream per canary) and runs
/// the uniformity test over the resulting ranks.
pub fn evaluate<F: Real>(
    table: &EmbeddingTable<F>,
    canaries: &[Canary],
    insertion_count: usize,
    sample_size: usize,
    bins: usize,
    seed: u64,
) -> Result<CanaryReport> {
    let records: Vec<CanaryRecord> = canaries
        .par_iter()
        .enumerate()
        .map(|(i, c)| -> Result<CanaryRecord> {
            let mut rng = NoiseSource::substream(seed, i as u64);
            Ok(CanaryRecord {
                words: c.words,
                log_perplexity: log_perplexity(table, c)?,
                rank: rank(table, c, sample_size, &mut rng)?,
            })
        })
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
    let test = chi_squared_uniform(&ranks, bins, sample_size)?;
    Ok(CanaryReport {
        records,
        summary: CanarySummary {
            insertion_count,
            sample_size,
            statistic: test.statistic,
            p_value: test.p_value,
            distance: test.distance,
            histogram: test.histogram,
        },
    })
}

/// Canary list file: three word indices per line.
pub fn write_canaries(path: &Path, canaries: &[Canary]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in canaries {
        writeln!(out, "{} {} {}", c.words[0], c.words[1], c.words[2])?;
    }
    Ok(())
}

pub fn read_canaries(path: &Path) -> Result<Vec<Canary>> {
    use std::io::{BufRead, BufReader};
    let file = File::open(path)
        .map_err(|e| Error::input(format!("cannot open canary list {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let ids: Vec<u32> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|e| Error::input(format!("line {}: bad word id {t:?}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if ids.len() != 3 {
            return Err(Error::input(format!("line {}: a canary has exactly three words", lineno + 1)));
        }
        out.push(Canary::new([ids[0], ids[1], ids[2]]));
    }
    Ok(out)
}

/// One JSON object per canary (tokens resolved through the vocabulary when
/// given), then one summary object.
pub fn write_report(path: &Path, vocab: Option<&Vocabulary>, report: &CanaryReport) -> Result<()> {
    #[derive(Serialize)]
    struct RecordLine<'a> {
        record: &'a str,
        tokens: Option<Vec<&'a str>>,
        words: [u32; 3],
        log_perplexity: f64,
        rank: usize,
    }
    #[derive(Serialize)]
    struct SummaryLine<'a> {
        record: &'a str,
        #[serde(flatten)]
        summary: &'a CanarySummary,
    }

    let mut out = BufWriter::new(File::create(path)?);
    for rec in &report.records {
        let tokens = vocab.map(|v| rec.words.iter().map(|&w| v.token(w as usize)).collect());
        let line = RecordLine {
            record: "canary",
            tokens,
            words: rec.words,
            log_perplexity: rec.log_perplexity,
            rank: rec.rank,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::input(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    let line = SummaryLine { record: "summary", summary: &report.summary };
    serde_json::to_writer(&mut out, &line).map_err(|e| Error::input(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}
