//! Synthetic captures with planted head signal, and brute-force oracles for
//! the ranking metrics.
//!
//! Each record has a small set of "signal" tokens whose log-probabilities
//! depend on correctness; the remaining tokens are correctness-independent
//! filler. A fixed subset of heads (the good heads) puts most of its mass on
//! the signal tokens, so reweighting by those heads recovers the signal that
//! plain length normalization dilutes. Other heads carry a fixed per-head
//! tilt toward or away from signal tokens, which gives the head ranking a
//! stable structure across subsets of records.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{AttentionMatrix, Capture, GenerationRecord, SampledGeneration};

/// Judge name used for the ratings that synthetic records carry.
pub const SYNTHETIC_JUDGE: &str = "synthetic-judge";

/// Rating threshold that reproduces the planted labels from the synthetic judge.
pub const SYNTHETIC_JUDGE_THRESHOLD: f64 = 0.2;

fn default_attention_noise() -> f64 {
    0.8
}

fn default_signal_fraction() -> f64 {
    0.2
}

/// Parameters of the synthetic capture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_records: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub n_heads: usize,
    pub good_heads: usize,
    /// Probability that a record is correct.
    pub base_accuracy: f64,
    /// Shift of the signal-token latent log-prob mean: `-1 ± signal`.
    pub signal: f64,
    /// Fraction of a good head's mass on the signal tokens.
    pub concentration: f64,
    /// Standard deviation of the per-token latent log-prob noise.
    pub noise: f64,
    /// Log-normal jitter applied to each attention entry.
    #[serde(default = "default_attention_noise")]
    pub attention_noise: f64,
    /// Fraction of response tokens that carry signal (at least one).
    #[serde(default = "default_signal_fraction")]
    pub signal_fraction: f64,
    /// Seed for record contents.
    pub seed: u64,
    /// Seed for which heads are good and how the others lean; defaults to `seed`.
    #[serde(default)]
    pub layout_seed: Option<u64>,
    /// Sampled generations per record (the greedy response is sample 0).
    #[serde(default)]
    pub n_samples: usize,
    #[serde(default = "default_dataset")]
    pub dataset: String,
}

fn default_dataset() -> String {
    "synthetic".to_owned()
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::frozen()
    }
}

impl SyntheticSpec {
    /// The reference configuration used by the regression and acceptance suites.
    pub fn frozen() -> Self {
        Self {
            n_records: 2000,
            min_tokens: 8,
            max_tokens: 24,
            n_heads: 256,
            good_heads: 10,
            base_accuracy: 0.5,
            signal: 1.5,
            concentration: 0.9,
            noise: 2.5,
            attention_noise: default_attention_noise(),
            signal_fraction: default_signal_fraction(),
            seed: 7,
            layout_seed: None,
            n_samples: 0,
            dataset: default_dataset(),
        }
    }

    pub fn layout_seed(&self) -> u64 {
        self.layout_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_records == 0 {
            return fail("n_records must be positive".into());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return fail(format!(
                "token range [{}, {}] is empty or starts at 0",
                self.min_tokens, self.max_tokens
            ));
        }
        if self.good_heads == 0 || self.good_heads > self.n_heads {
            return fail(format!("good_heads = {} outside 1..={}", self.good_heads, self.n_heads));
        }
        if !(self.base_accuracy > 0.0 && self.base_accuracy < 1.0) {
            return fail(format!("base_accuracy = {} outside (0, 1)", self.base_accuracy));
        }
        for (name, v) in [
            ("signal", self.signal),
            ("concentration", self.concentration),
            ("noise", self.noise),
            ("attention_noise", self.attention_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be a nonnegative number"));
            }
        }
        if self.concentration > 1.0 {
            return fail(format!("concentration = {} exceeds 1", self.concentration));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return fail(format!("signal_fraction = {} outside (0, 1]", self.signal_fraction));
        }
        Ok(())
    }
}

/// Fixed per-head behaviour shared by every record generated from one layout seed.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLayout {
    /// Planted good heads, ascending.
    pub good: Vec<usize>,
    /// Log-odds tilt toward signal tokens for each head (unused for good heads).
    pub tilt: Vec<f64>,
}

impl HeadLayout {
    pub fn new(n_heads: usize, good_heads: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let mut good = index::sample(&mut rng, n_heads, good_heads).into_vec();
        good.sort_unstable();
        let tilt = (0..n_heads).map(|_| rng.random_range(-1.5..0.5)).collect();
        Self { good, tilt }
    }

    pub fn is_good(&self, head: usize) -> bool {
        self.good.binary_search(&head).is_ok()
    }
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

struct Sequence {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
    signal: Vec<bool>,
}

fn sequence(spec: &SyntheticSpec, correct: bool, rng: &mut ChaCha8Rng) -> Sequence {
    let n = rng.random_range(spec.min_tokens..=spec.max_tokens);
    let n_signal = ((n as f64 * spec.signal_fraction).round() as usize).clamp(1, n);
    let mut signal = vec![false; n];
    for i in index::sample(rng, n, n_signal) {
        signal[i] = true;
    }
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let shift = if correct { spec.signal } else { -spec.signal };
    let logprobs = signal
        .iter()
        .map(|&s| {
            let mean = if s { -1.0 + shift } else { -1.0 };
            log_sigmoid(mean + noise.sample(rng))
        })
        .collect();
    let tokens = (0..n).map(|_| format!("w{}", rng.random_range(0..64))).collect();
    Sequence {
        tokens,
        logprobs,
        signal,
    }
}

fn attention(spec: &SyntheticSpec, layout: &HeadLayout, signal: &[bool], rng: &mut ChaCha8Rng) -> AttentionMatrix {
    let n = signal.len();
    let n_signal = signal.iter().filter(|&&s| s).count() as f64;
    let jitter = Normal::new(0.0, spec.attention_noise).expect("validated noise");
    let mut values = Vec::with_capacity(spec.n_heads * n);
    let mut row = vec![0.0; n];
    for h in 0..spec.n_heads {
        if layout.is_good(h) {
            let spread = (1.0 - spec.concentration) / n as f64;
            for (w, &s) in row.iter_mut().zip(signal) {
                *w = spread + if s { spec.concentration / n_signal } else { 0.0 };
            }
        } else {
            let lean = layout.tilt[h].exp();
            for (w, &s) in row.iter_mut().zip(signal) {
                *w = if s { lean } else { 1.0 };
            }
        }
        for w in row.iter_mut() {
            *w *= jitter.sample(rng).exp();
        }
        // Mass the probe position leaves on the response span.
        let span_mass: f64 = rng.random_range(0.1..0.9);
        let total: f64 = row.iter().sum();
        values.extend(row.iter().map(|w| w / total * span_mass));
    }
    AttentionMatrix::from_flat(spec.n_heads, n, values).expect("shape by construction")
}

fn record(spec: &SyntheticSpec, layout: &HeadLayout, i: usize) -> GenerationRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let correct = rng.random_bool(spec.base_accuracy);
    let seq = sequence(spec, correct, &mut rng);
    let attn_prompt = attention(spec, layout, &seq.signal, &mut rng);
    let attn_next = attention(spec, layout, &seq.signal, &mut rng);

    let rating = if correct {
        rng.random_range(SYNTHETIC_JUDGE_THRESHOLD..=1.0)
    } else {
        rng.random_range(0.0..SYNTHETIC_JUDGE_THRESHOLD)
    };
    let ptrue_logit: f64 = Normal::new(if correct { 0.5 } else { -0.5 }, 1.0)
        .expect("unit sd")
        .sample(&mut rng);
    let relevance = seq
        .signal
        .iter()
        .map(|&s| {
            if s {
                rng.random_range(0.4..1.0)
            } else {
                rng.random_range(0.0..0.6)
            }
        })
        .collect();

    let mut samples = Vec::with_capacity(spec.n_samples);
    if spec.n_samples > 0 {
        samples.push(SampledGeneration {
            tokens: seq.tokens.clone(),
            logprobs: seq.logprobs.clone(),
            cluster: Some(0),
            sim_to_greedy: Some(1.0),
            attn_prompt: Some(attn_prompt.clone()),
            attn_next: Some(attn_next.clone()),
        });
    }
    for _ in 1..spec.n_samples {
        let agrees = rng.random_bool(if correct { 0.75 } else { 0.35 });
        let s = sequence(spec, agrees && correct, &mut rng);
        let (cluster, sim) = if agrees {
            (0, rng.random_range(0.7..=1.0))
        } else {
            (rng.random_range(1..=3), rng.random_range(0.0..0.5))
        };
        let ap = attention(spec, layout, &s.signal, &mut rng);
        let an = attention(spec, layout, &s.signal, &mut rng);
        samples.push(SampledGeneration {
            tokens: s.tokens,
            logprobs: s.logprobs,
            cluster: Some(cluster),
            sim_to_greedy: Some(sim),
            attn_prompt: Some(ap),
            attn_next: Some(an),
        });
    }

    GenerationRecord {
        id: format!("{}-{i:06}", spec.dataset),
        dataset: spec.dataset.clone(),
        model: "synthetic".to_owned(),
        tokens: seq.tokens,
        logprobs: seq.logprobs,
        attn_prompt: Some(attn_prompt),
        attn_next: Some(attn_next),
        ratings: BTreeMap::from([(SYNTHETIC_JUDGE.to_owned(), rating)]),
        accuracy: Some(correct),
        ptrue: Some(1.0 / (1.0 + (-ptrue_logit).exp())),
        token_relevance: Some(relevance),
        samples,
    }
}

/// Generates a capture. Identical specs give identical captures; record `i`
/// depends only on `(seed, i)` and the head layout.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Capture> {
    spec.validate()?;
    let layout = HeadLayout::new(spec.n_heads, spec.good_heads, spec.layout_seed());
    let records = (0..spec.n_records)
        .into_par_iter()
        .map(|i| record(spec, &layout, i))
        .collect();
    Ok(Capture::new(spec.n_heads, records))
}

/// Seeded shuffle of record indices, split into a validation prefix of
/// `val_size` and the remaining test indices.
pub fn split_indices(n: usize, val_size: usize, seed: u64, stream: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let test = idx.split_off(val_size.min(n));
    (idx, test)
}

/// AUROC by enumerating every (positive, negative) pair.
pub fn brute_force_auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch("scores vs labels".into()));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::AurocUndefined("single class".into()));
    }
    let (mut wins, mut ties) = (0u64, 0u64);
    for p in &pos {
        for q in &neg {
            if p > q {
                wins += 1;
            } else if p == q {
                ties += 1;
            }
        }
    }
    Ok((wins as f64 + 0.5 * ties as f64) / (pos.len() as f64 * neg.len() as f64))
}

/// AUARC by recomputing the retained set from scratch at every coverage.
///
/// Sample `i` outranks `j` when its score is higher, or equal with `i < j`.
pub fn brute_force_auarc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n = scores.len();
    if n == 0 || labels.len() != n {
        return Err(Error::InvalidInput("need equal, nonzero lengths".into()));
    }
    let position = |i: usize| {
        (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let positions: Vec<usize> = (0..n).map(position).collect();
    let mut total = 0.0;
    for k in 1..=n {
        let correct = (0..n).filter(|&i| positions[i] < k && labels[i]).count();
        total += correct as f64 / k as f64;
    }
    Ok(total / n as f64)
}
