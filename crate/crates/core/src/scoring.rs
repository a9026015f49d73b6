//! Per-record confidence scores.
//!
//! Every scorer maps one [`GenerationRecord`] to a real number where larger
//! means more confident. The likelihood family shares one kernel,
//! [`token_weighted_score`]: a weighted mean of token log-probabilities.
//! Plain length-normalized likelihood uses uniform weights; the attention
//! variants derive weights from selected heads; TokenSAR derives them from
//! token relevance.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{AttentionMatrix, AttentionSource, GenerationRecord};

/// Where a weight vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSource {
    Uniform,
    HeadSet,
    Relevance,
}

/// Nonnegative per-token weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    source: WeightSource,
    fallback: bool,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
            source: WeightSource::Uniform,
            fallback: false,
        }
    }

    /// All mass on token `j`.
    pub fn one_hot(n: usize, j: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[j] = 1.0;
        Self {
            weights,
            source: WeightSource::Uniform,
            fallback: false,
        }
    }

    /// Normalizes nonnegative raw weights. Zero total mass yields uniform
    /// weights with the fallback flag set.
    pub fn normalized(raw: &[f64], source: WeightSource) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("weight vector of length 0".into()));
        }
        if let Some(x) = raw.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidInput(format!("raw weight {x} is negative or non-finite")));
        }
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            let mut w = Self::uniform(raw.len());
            w.source = source;
            w.fallback = true;
            return Ok(w);
        }
        Ok(Self {
            weights: raw.iter().map(|x| x / total).collect(),
            source,
            fallback: false,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn source(&self) -> WeightSource {
        self.source
    }

    /// Some input carried no mass and was replaced by uniform weights.
    pub fn fallback(&self) -> bool {
        self.fallback
    }
}

/// Every confidence measure the toolkit can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SL")]
    Sl,
    #[serde(rename = "SL(norm)")]
    SlNorm,
    #[serde(rename = "CSL")]
    Csl,
    #[serde(rename = "CSL-Next")]
    CslNext,
    #[serde(rename = "TokenSAR")]
    TokenSar,
    #[serde(rename = "Deg")]
    Deg,
    #[serde(rename = "P(true)")]
    Ptrue,
    #[serde(rename = "SE")]
    Se,
    #[serde(rename = "SE(norm)")]
    SeNorm,
    #[serde(rename = "SE+CSL")]
    SeCsl,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Sl,
        Method::SlNorm,
        Method::Csl,
        Method::CslNext,
        Method::TokenSar,
        Method::Deg,
        Method::Ptrue,
        Method::Se,
        Method::SeNorm,
        Method::SeCsl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sl => "SL",
            Method::SlNorm => "SL(norm)",
            Method::Csl => "CSL",
            Method::CslNext => "CSL-Next",
            Method::TokenSar => "TokenSAR",
            Method::Deg => "Deg",
            Method::Ptrue => "P(true)",
            Method::Se => "SE",
            Method::SeNorm => "SE(norm)",
            Method::SeCsl => "SE+CSL",
        }
    }

    /// Methods that need a head selection for the given source.
    pub fn attention_source(self) -> Option<AttentionSource> {
        match self {
            Method::Csl | Method::SeCsl => Some(AttentionSource::Prompt),
            Method::CslNext => Some(AttentionSource::Next),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // "SL(norm)", "sl_norm" and "slnorm" all name the same method.
        let squash = |x: &str| -> String {
            x.chars()
                .filter(char::is_ascii_alphanumeric)
                .map(|c| c.to_ascii_lowercase())
                .collect()
        };
        let key = squash(s);
        Method::ALL
            .into_iter()
            .find(|m| squash(m.name()) == key)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// A confidence value tagged with the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub value: f64,
}

impl MethodScore {
    fn new(method: Method, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("{method} score is not finite")));
        }
        Ok(Self { method, value })
    }
}

/// Sum of log-probs.
pub fn sum_logprobs(logprobs: &[f64]) -> f64 {
    logprobs.iter().sum()
}

/// Mean of log-probs.
pub fn mean_logprobs(logprobs: &[f64]) -> f64 {
    sum_logprobs(logprobs) / logprobs.len() as f64
}

fn nonempty(r: &GenerationRecord) -> Result<()> {
    if r.logprobs.is_empty() || r.logprobs.len() != r.tokens.len() {
        return Err(Error::LengthMismatch(format!(
            "record {} has {} tokens and {} logprobs",
            r.id,
            r.tokens.len(),
            r.logprobs.len()
        )));
    }
    Ok(())
}

/// Sequence likelihood: the sum of token log-probabilities.
pub fn seq_loglik(r: &GenerationRecord) -> Result<MethodScore> {
    nonempty(r)?;
    MethodScore::new(Method::Sl, sum_logprobs(&r.logprobs))
}

/// Length-normalized sequence likelihood.
pub fn seq_loglik_norm(r: &GenerationRecord) -> Result<MethodScore> {
    nonempty(r)?;
    MethodScore::new(Method::SlNorm, mean_logprobs(&r.logprobs))
}

/// Combines the attention rows of the selected heads into token weights.
///
/// Each selected row is normalized to unit mass and the normalized rows are
/// averaged. `heads` is treated as a set: repeated indices count once. A row
/// with no mass contributes uniform weights and sets the fallback flag.
pub fn head_weight_vector(a: &AttentionMatrix, heads: &[usize]) -> Result<WeightVector> {
    if heads.is_empty() {
        return Err(Error::InvalidInput("empty head selection".into()));
    }
    let n = a.n_cols();
    if n == 0 {
        return Err(Error::InvalidInput("attention matrix has no columns".into()));
    }
    let mut seen = BTreeSet::new();
    let mut acc = vec![0.0; n];
    let mut fallback = false;
    for &h in heads {
        if h >= a.n_heads() {
            return Err(Error::HeadOutOfRange {
                index: h,
                n_heads: a.n_heads(),
            });
        }
        if !seen.insert(h) {
            continue;
        }
        let row = a.row(h);
        let mass: f64 = row.iter().sum();
        if mass > 0.0 {
            for (w, x) in acc.iter_mut().zip(row) {
                *w += x / mass;
            }
        } else {
            fallback = true;
            for w in acc.iter_mut() {
                *w += 1.0 / n as f64;
            }
        }
    }
    let k = seen.len() as f64;
    for w in acc.iter_mut() {
        *w /= k;
    }
    Ok(WeightVector {
        weights: acc,
        source: WeightSource::HeadSet,
        fallback,
    })
}

/// `Σ wᵢ lᵢ`.
pub fn token_weighted_score(logprobs: &[f64], w: &WeightVector) -> Result<f64> {
    if logprobs.len() != w.len() {
        return Err(Error::LengthMismatch(format!(
            "{} logprobs vs {} weights",
            logprobs.len(),
            w.len()
        )));
    }
    Ok(logprobs.iter().zip(&w.weights).map(|(l, w)| l * w).sum())
}

/// Attention-weighted likelihood from the chosen attention source.
///
/// `Prompt` yields [`Method::Csl`], `Next` yields [`Method::CslNext`].
pub fn csl_score(r: &GenerationRecord, heads: &[usize], source: AttentionSource) -> Result<MethodScore> {
    nonempty(r)?;
    let a = r
        .attention(source)
        .ok_or_else(|| Error::AttentionAbsent(format!("record {} has no attn_{source}", r.id)))?;
    let w = head_weight_vector(a, heads)?;
    if w.fallback() {
        log::debug!("record {}: zero-mass attention row replaced by uniform weights", r.id);
    }
    let method = match source {
        AttentionSource::Prompt => Method::Csl,
        AttentionSource::Next => Method::CslNext,
    };
    MethodScore::new(method, token_weighted_score(&r.logprobs, &w)?)
}

/// Lexical stand-in for the similarity between a response and the response
/// with token `i` deleted: the fraction of the response's distinct token
/// types that survive the deletion. Deleting a token whose type occurs
/// elsewhere leaves similarity at 1.
pub fn lexical_similarity(tokens: &[String], i: usize) -> f64 {
    let all: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
    let kept: BTreeSet<&str> = tokens
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, t)| t.as_str())
        .collect();
    kept.len() as f64 / all.len() as f64
}

/// TokenSAR relevance weights, `wᵢ ∝ rᵢ`.
///
/// `rᵢ` is the record's `token_relevance` when present and otherwise
/// `1 − lexical_similarity(s, i)`. All-zero relevance gives uniform weights
/// with the fallback flag set.
pub fn tokensar_weights(r: &GenerationRecord) -> Result<WeightVector> {
    nonempty(r)?;
    let relevance: Vec<f64> = match &r.token_relevance {
        Some(rel) => {
            if rel.len() != r.len() {
                return Err(Error::LengthMismatch(format!(
                    "record {} has {} relevance values for {} tokens",
                    r.id,
                    rel.len(),
                    r.len()
                )));
            }
            rel.clone()
        }
        None if r.len() == 1 => vec![1.0],
        None => (0..r.len()).map(|i| 1.0 - lexical_similarity(&r.tokens, i)).collect(),
    };
    let w = WeightVector::normalized(&relevance, WeightSource::Relevance)?;
    if w.fallback() {
        log::warn!(
            "record {}: every token judged irrelevant; TokenSAR uses uniform weights",
            r.id
        );
    }
    Ok(w)
}

pub fn tokensar_score(r: &GenerationRecord) -> Result<MethodScore> {
    let w = tokensar_weights(r)?;
    MethodScore::new(Method::TokenSar, token_weighted_score(&r.logprobs, &w)?)
}

/// Mean similarity to the greedy response over all stored generations
/// (the greedy one included, with similarity 1).
pub fn deg_confidence(r: &GenerationRecord) -> Result<MethodScore> {
    if r.samples.is_empty() {
        return Err(Error::InvalidInput(format!(
            "record {} has no sampled generations",
            r.id
        )));
    }
    let mut total = 0.0;
    for (j, s) in r.samples.iter().enumerate() {
        total += s
            .sim_to_greedy
            .ok_or_else(|| Error::InvalidInput(format!("record {}: sample {j} has no sim_to_greedy", r.id)))?;
    }
    MethodScore::new(Method::Deg, total / r.samples.len() as f64)
}

/// The stored P(true) confidence, scored as-is.
pub fn ptrue_score(r: &GenerationRecord) -> Result<MethodScore> {
    let v = r
        .ptrue
        .ok_or_else(|| Error::InvalidInput(format!("record {} has no ptrue", r.id)))?;
    MethodScore::new(Method::Ptrue, v)
}

/// Combined head weight falling on a token span.
///
/// Differences of this value across prompt variants give the attention
/// shift toward a span. An empty span has zero mass.
pub fn span_mass(a: &AttentionMatrix, heads: &[usize], span: Range<usize>) -> Result<f64> {
    if span.end > a.n_cols() || span.start > span.end {
        return Err(Error::InvalidInput(format!("span {span:?} outside 0..{}", a.n_cols())));
    }
    if span.is_empty() {
        log::warn!("span_mass called with an empty span");
        return Ok(0.0);
    }
    let w = head_weight_vector(a, heads)?;
    Ok(w.as_slice()[span].iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::SampledGeneration;
    use proptest::prelude::*;

    fn record(logprobs: &[f64]) -> GenerationRecord {
        GenerationRecord::new(
            "r",
            (0..logprobs.len()).map(|i| format!("t{i}")).collect(),
            logprobs.to_vec(),
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn matrix(rows: &[&[f64]]) -> AttentionMatrix {
        AttentionMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn likelihood_hand_cases() {
        assert_eq!(seq_loglik(&record(&[-0.7])).unwrap().value, -0.7);
        assert_eq!(seq_loglik(&record(&[-0.5, -1.5])).unwrap().value, -2.0);
        assert_eq!(seq_loglik(&record(&[0.0, 0.0])).unwrap().value, 0.0);
        assert_eq!(seq_loglik_norm(&record(&[-0.5, -1.5])).unwrap().value, -1.0);
        assert_eq!(seq_loglik_norm(&record(&[-0.7])).unwrap().value, -0.7);
        assert!(close(seq_loglik_norm(&record(&[-0.3; 7])).unwrap().value, -0.3));
    }

    #[test]
    fn single_head_weights_normalize() {
        let w = head_weight_vector(&matrix(&[&[2.0, 3.0, 5.0]]), &[0]).unwrap();
        let expect = [0.2, 0.3, 0.5];
        assert!(w.as_slice().iter().zip(expect).all(|(a, b)| close(*a, b)));
        assert!(!w.fallback());
    }

    #[test]
    fn two_heads_average() {
        let w = head_weight_vector(&matrix(&[&[1.0, 0.0], &[0.0, 1.0]]), &[0, 1]).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_row_falls_back_to_uniform() {
        let w = head_weight_vector(&matrix(&[&[0.0, 0.0]]), &[0]).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        assert!(w.fallback());
    }

    #[test]
    fn head_selection_is_a_set() {
        let a = matrix(&[&[0.1, 0.4], &[0.3, 0.1]]);
        let once = head_weight_vector(&a, &[0, 1]).unwrap();
        let twice = head_weight_vector(&a, &[0, 1, 0, 0]).unwrap();
        assert_eq!(once.as_slice(), twice.as_slice());
    }

    #[test]
    fn head_errors() {
        let a = matrix(&[&[0.1, 0.4]]);
        assert!(matches!(head_weight_vector(&a, &[]), Err(Error::InvalidInput(_))));
        assert!(matches!(
            head_weight_vector(&a, &[1]),
            Err(Error::HeadOutOfRange { index: 1, n_heads: 1 })
        ));
    }

    #[test]
    fn weighted_score_hand_cases() {
        let l = [-1.0, -2.0, -3.0];
        let w = WeightVector::normalized(&[0.2, 0.3, 0.5], WeightSource::HeadSet).unwrap();
        assert!(close(token_weighted_score(&l, &w).unwrap(), -2.3));
        let u = WeightVector::uniform(3);
        assert!(close(token_weighted_score(&l, &u).unwrap(), mean_logprobs(&l)));
        for j in 0..3 {
            assert_eq!(token_weighted_score(&l, &WeightVector::one_hot(3, j)).unwrap(), l[j]);
        }
        assert!(token_weighted_score(&l[..2], &w).is_err());
    }

    #[test]
    fn csl_hand_cases() {
        let mut r = record(&[-1.0, -2.0, -3.0]);
        r.attn_prompt = Some(matrix(&[&[0.0, 0.0, 0.0], &[0.2, 0.3, 0.5]]));
        let s = csl_score(&r, &[1], AttentionSource::Prompt).unwrap();
        assert_eq!(s.method, Method::Csl);
        assert!(close(s.value, -2.3));
        let err = csl_score(&r, &[1], AttentionSource::Next).unwrap_err();
        assert!(err.to_string().contains("attention source absent"));

        let mut one = record(&[-0.4]);
        one.attn_next = Some(matrix(&[&[0.7], &[0.01]]));
        assert_eq!(csl_score(&one, &[0, 1], AttentionSource::Next).unwrap().value, -0.4);
    }

    #[test]
    fn tokensar_hand_cases() {
        let mut r = record(&[-1.0, -2.0]);
        r.token_relevance = Some(vec![0.1, 0.5]);
        let w = tokensar_weights(&r).unwrap();
        assert!(close(w.as_slice()[0], 1.0 / 6.0) && close(w.as_slice()[1], 5.0 / 6.0));

        r.token_relevance = Some(vec![0.4, 0.4]);
        assert_eq!(tokensar_weights(&r).unwrap().as_slice(), &[0.5, 0.5]);

        r.token_relevance = Some(vec![0.0, 0.0]);
        let w = tokensar_weights(&r).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        assert!(w.fallback());
    }

    #[test]
    fn tokensar_lexical_fallback() {
        // "the" repeats, so deleting either copy keeps every type: zero relevance.
        let mut r = record(&[-1.0, -2.0, -3.0]);
        r.tokens = vec!["the".into(), "cat".into(), "the".into()];
        assert_eq!(lexical_similarity(&r.tokens, 0), 1.0);
        assert_eq!(lexical_similarity(&r.tokens, 1), 0.5);
        let w = tokensar_weights(&r).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(tokensar_score(&r).unwrap().value, -2.0);

        r.tokens = vec!["a".into(), "a".into(), "a".into()];
        assert!(tokensar_weights(&r).unwrap().fallback());
    }

    fn with_sims(sims: &[f64]) -> GenerationRecord {
        let mut r = record(&[-1.0]);
        r.samples = sims
            .iter()
            .map(|&s| SampledGeneration {
                tokens: vec!["x".into()],
                logprobs: vec![-1.0],
                cluster: None,
                sim_to_greedy: Some(s),
                attn_prompt: None,
                attn_next: None,
            })
            .collect();
        r
    }

    #[test]
    fn deg_hand_cases() {
        assert_eq!(deg_confidence(&with_sims(&[1.0, 1.0, 1.0])).unwrap().value, 1.0);
        assert!(close(deg_confidence(&with_sims(&[1.0, 0.8, 0.6])).unwrap().value, 0.8));
        assert!(close(
            deg_confidence(&with_sims(&[1.0, 0.0, 0.0])).unwrap().value,
            1.0 / 3.0
        ));
        let mut r = with_sims(&[1.0, 0.5]);
        r.samples[1].sim_to_greedy = None;
        assert!(deg_confidence(&r).is_err());
        assert!(deg_confidence(&record(&[-1.0])).is_err());
    }

    #[test]
    fn span_mass_cases() {
        let a = matrix(&[&[2.0, 3.0, 5.0]]);
        assert!(close(span_mass(&a, &[0], 0..3).unwrap(), 1.0));
        assert!(close(span_mass(&a, &[0], 2..3).unwrap(), 0.5));
        assert_eq!(span_mass(&a, &[0], 1..1).unwrap(), 0.0);
        let u = AttentionMatrix::uniform(3, 4);
        assert!(close(span_mass(&u, &[0, 2], 0..2).unwrap(), 0.5));
        assert!(span_mass(&a, &[0], 2..4).is_err());
    }

    #[test]
    fn ptrue_passthrough() {
        let mut r = record(&[-1.0]);
        assert!(ptrue_score(&r).is_err());
        r.ptrue = Some(0.73);
        assert_eq!(ptrue_score(&r).unwrap().value, 0.73);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert_eq!("sl_norm".parse::<Method>().unwrap(), Method::SlNorm);
        assert_eq!("csl-next".parse::<Method>().unwrap(), Method::CslNext);
        assert_eq!("se_csl".parse::<Method>().unwrap(), Method::SeCsl);
    }

    fn record_with_attention() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (1usize..24, 1usize..6).prop_flat_map(|(n, h)| {
            (
                prop::collection::vec(-12.0f64..0.0, n),
                prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), h),
            )
        })
    }

    proptest! {
        #[test]
        fn uniform_attention_reduces_to_norm(l in prop::collection::vec(-12.0f64..0.0, 1..40), h in 1usize..5) {
            let mut r = record(&l);
            r.attn_prompt = Some(AttentionMatrix::uniform(h, l.len()));
            let heads: Vec<usize> = (0..h).collect();
            let csl = csl_score(&r, &heads, AttentionSource::Prompt).unwrap().value;
            prop_assert!((csl - seq_loglik_norm(&r).unwrap().value).abs() <= 1e-12);
        }

        #[test]
        fn weights_are_a_distribution((l, rows) in record_with_attention(), pick in any::<prop::sample::Index>()) {
            let a = AttentionMatrix::from_rows(rows).unwrap();
            let h = pick.index(a.n_heads());
            let w = head_weight_vector(&a, &[h]).unwrap();
            prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
            prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(w.len(), l.len());
        }

        #[test]
        fn raising_a_logprob_never_lowers_score((l, rows) in record_with_attention(),
                                                i in any::<prop::sample::Index>(),
                                                bump in 0.0f64..3.0) {
            let a = AttentionMatrix::from_rows(rows).unwrap();
            let heads: Vec<usize> = (0..a.n_heads()).collect();
            let w = head_weight_vector(&a, &heads).unwrap();
            let before = token_weighted_score(&l, &w).unwrap();
            let mut raised = l.clone();
            raised[i.index(l.len())] += bump;
            prop_assert!(token_weighted_score(&raised, &w).unwrap() >= before);
        }
    }
}
