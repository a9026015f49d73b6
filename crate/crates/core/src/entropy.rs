//! Semantic entropy over sampled generations.
//!
//! Samples are grouped by externally assigned semantic cluster ids. Each
//! sample contributes `exp(L)` to its cluster, where `L` is a
//! likelihood-style score of the sample; the cluster masses are normalized
//! and their Shannon entropy is the uncertainty. Swapping the score function
//! gives SE (sum of log-probs), SE(norm) (mean log-prob) and SE+CSL
//! (attention-weighted log-prob).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{AttentionSource, GenerationRecord, SampledGeneration};
use crate::scoring::{head_weight_vector, mean_logprobs, sum_logprobs, token_weighted_score, Method, MethodScore};

/// How each sampled generation is scored before exponentiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleScore<'a> {
    Sum,
    Mean,
    Attention {
        heads: &'a [usize],
        source: AttentionSource,
    },
}

impl SampleScore<'_> {
    fn score(&self, s: &SampledGeneration) -> Result<f64> {
        if s.logprobs.is_empty() || s.logprobs.len() != s.tokens.len() {
            return Err(Error::LengthMismatch(format!(
                "sample has {} tokens and {} logprobs",
                s.tokens.len(),
                s.logprobs.len()
            )));
        }
        match *self {
            SampleScore::Sum => Ok(sum_logprobs(&s.logprobs)),
            SampleScore::Mean => Ok(mean_logprobs(&s.logprobs)),
            SampleScore::Attention { heads, source } => {
                let a = s
                    .attention(source)
                    .ok_or_else(|| Error::AttentionAbsent(format!("sampled generation has no attn_{source}")))?;
                token_weighted_score(&s.logprobs, &head_weight_vector(a, heads)?)
            }
        }
    }
}

/// Probability mass per semantic cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistribution {
    pub masses: BTreeMap<i64, f64>,
    pub normalized: bool,
}

impl ClusterDistribution {
    /// Wraps already-normalized masses; rejects negative or unnormalized input.
    pub fn from_probabilities(masses: BTreeMap<i64, f64>) -> Result<Self> {
        if masses.values().any(|&m| m.is_nan() || m < 0.0) {
            return Err(Error::InvalidInput("cluster masses must be nonnegative".into()));
        }
        let total: f64 = masses.values().sum();
        Ok(Self {
            masses,
            normalized: (total - 1.0).abs() <= 1e-9,
        })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Pools clusters `a` and `b` into `a`.
    pub fn merge(&self, a: i64, b: i64) -> Self {
        let mut masses = self.masses.clone();
        if a != b {
            if let Some(mb) = masses.remove(&b) {
                *masses.entry(a).or_insert(0.0) += mb;
            }
        }
        Self {
            masses,
            normalized: self.normalized,
        }
    }
}

/// Cluster masses from exponentiated sample scores, normalized in log space.
pub fn cluster_mass(samples: &[SampledGeneration], score: SampleScore<'_>) -> Result<ClusterDistribution> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no sampled generations".into()));
    }
    let mut per_cluster: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (j, s) in samples.iter().enumerate() {
        let c = s
            .cluster
            .ok_or_else(|| Error::InvalidInput(format!("sample {j} has no cluster id")))?;
        per_cluster.entry(c).or_default().push(score.score(s)?);
    }
    let log_mass: BTreeMap<i64, f64> = per_cluster.into_iter().map(|(c, ls)| (c, logsumexp(&ls))).collect();
    let log_total = logsumexp(&log_mass.values().copied().collect::<Vec<_>>());
    let masses = log_mass
        .into_iter()
        .map(|(c, lm)| (c, (lm - log_total).exp()))
        .collect();
    Ok(ClusterDistribution {
        masses,
        normalized: true,
    })
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Shannon entropy (nats) of a normalized cluster distribution.
pub fn semantic_entropy(dist: &ClusterDistribution) -> Result<f64> {
    if !dist.normalized {
        return Err(Error::InvalidInput("cluster distribution is not normalized".into()));
    }
    let h: f64 = dist.masses.values().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    // Rounding can leave a single-cluster entropy at -0.0 or a hair below 0.
    Ok(h.max(0.0))
}

/// Semantic-entropy confidence (negated entropy) for a record's samples.
pub fn se_confidence(r: &GenerationRecord, method: Method, heads: Option<&[usize]>) -> Result<MethodScore> {
    let score = match method {
        Method::Se => SampleScore::Sum,
        Method::SeNorm => SampleScore::Mean,
        Method::SeCsl => SampleScore::Attention {
            heads: heads.ok_or_else(|| Error::InvalidInput("SE+CSL needs a head selection".into()))?,
            source: AttentionSource::Prompt,
        },
        other => return Err(Error::InvalidInput(format!("{other} is not a semantic-entropy method"))),
    };
    let dist = cluster_mass(&r.samples, score).map_err(|e| Error::InvalidInput(format!("record {}: {e}", r.id)))?;
    Ok(MethodScore {
        method,
        value: -semantic_entropy(&dist)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::AttentionMatrix;
    use proptest::prelude::*;

    fn sample(logprobs: &[f64], cluster: i64) -> SampledGeneration {
        SampledGeneration {
            tokens: (0..logprobs.len()).map(|i| format!("t{i}")).collect(),
            logprobs: logprobs.to_vec(),
            cluster: Some(cluster),
            sim_to_greedy: None,
            attn_prompt: None,
            attn_next: None,
        }
    }

    #[test]
    fn single_cluster_has_all_mass_and_zero_entropy() {
        let d = cluster_mass(&[sample(&[-1.0], 3), sample(&[-2.0, -0.5], 3)], SampleScore::Sum).unwrap();
        assert_eq!(d.masses.len(), 1);
        assert!((d.masses[&3] - 1.0).abs() < 1e-12);
        assert_eq!(semantic_entropy(&d).unwrap(), 0.0);
    }

    #[test]
    fn hand_logsumexp_case() {
        let l = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
        let s = [sample(&[l[0]], 0), sample(&[l[1]], 1), sample(&[l[2]], 1)];
        let d = cluster_mass(&s, SampleScore::Sum).unwrap();
        assert!((d.masses[&0] - 0.5).abs() < 1e-12);
        assert!((d.masses[&1] - 0.5).abs() < 1e-12);
        assert!((semantic_entropy(&d).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_hand_cases() {
        let d = ClusterDistribution::from_probabilities(BTreeMap::from([(0, 0.5), (1, 0.25), (2, 0.25)])).unwrap();
        assert!((semantic_entropy(&d).unwrap() - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!((semantic_entropy(&d).unwrap() - 1.0397).abs() < 1e-4);
        let bad = ClusterDistribution::from_probabilities(BTreeMap::from([(0, 0.5), (1, 0.25)])).unwrap();
        assert!(semantic_entropy(&bad).is_err());
    }

    #[test]
    fn missing_cluster_or_attention_is_an_error() {
        let mut s = sample(&[-1.0], 0);
        s.cluster = None;
        assert!(cluster_mass(&[s], SampleScore::Mean).is_err());
        let s = sample(&[-1.0], 0);
        let heads = [0];
        let mode = SampleScore::Attention {
            heads: &heads,
            source: AttentionSource::Prompt,
        };
        assert!(matches!(cluster_mass(&[s], mode), Err(Error::AttentionAbsent(_))));
    }

    #[test]
    fn se_csl_with_uniform_attention_matches_se_norm() {
        let mut r = GenerationRecord::new("r", vec!["a".into()], vec![-0.2]);
        r.samples = vec![
            sample(&[-0.2], 0),
            sample(&[-1.0, -3.0, -0.1], 1),
            sample(&[-0.7, -0.2], 0),
        ];
        for s in &mut r.samples {
            s.attn_prompt = Some(AttentionMatrix::uniform(4, s.tokens.len()));
        }
        let heads = [0, 2, 3];
        let csl = se_confidence(&r, Method::SeCsl, Some(&heads)).unwrap().value;
        let norm = se_confidence(&r, Method::SeNorm, None).unwrap().value;
        assert!((csl - norm).abs() < 1e-12);
        assert!(se_confidence(&r, Method::Sl, None).is_err());
    }

    fn distribution() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..10.0, 1..8)
    }

    fn normalize(raw: &[f64]) -> ClusterDistribution {
        let t: f64 = raw.iter().sum();
        ClusterDistribution::from_probabilities(raw.iter().enumerate().map(|(i, x)| (i as i64, x / t)).collect())
            .unwrap()
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_k(raw in distribution()) {
            let d = normalize(&raw);
            let h = semantic_entropy(&d).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (raw.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn equal_masses_reach_log_k(k in 1usize..12) {
            let d = normalize(&vec![1.0; k]);
            prop_assert!((semantic_entropy(&d).unwrap() - (k as f64).ln()).abs() < 1e-12);
        }

        #[test]
        fn merging_never_increases_entropy(raw in distribution(), a in 0usize..8, b in 0usize..8) {
            let d = normalize(&raw);
            let (a, b) = ((a % raw.len()) as i64, (b % raw.len()) as i64);
            let merged = d.merge(a, b);
            prop_assert!(semantic_entropy(&merged).unwrap() <= semantic_entropy(&d).unwrap() + 1e-12);
        }
    }
}
