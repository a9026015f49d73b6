//! Choosing which attention heads to trust.
//!
//! Every head is scored on its own: its attention row alone weights the
//! token log-probs, and the AUROC of that single-head score against the
//! validation labels ranks the head. The top `k` heads form the selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::record::{AttentionSource, GenerationRecord};
use crate::scoring::csl_score;

/// Default number of heads kept.
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadAuroc {
    pub head: usize,
    pub auroc: f64,
}

/// Every head with its validation AUROC, best first. Equal AUROCs are
/// ordered by ascending head index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRanking {
    pub dataset: String,
    pub source: AttentionSource,
    pub entries: Vec<HeadAuroc>,
}

impl HeadRanking {
    pub fn n_heads(&self) -> usize {
        self.entries.len()
    }

    /// AUROCs indexed by head.
    pub fn by_head(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.entries.len()];
        for e in &self.entries {
            v[e.head] = e.auroc;
        }
        v
    }

    /// Builds a ranking from per-head AUROCs (index = head).
    pub fn from_aurocs(dataset: impl Into<String>, source: AttentionSource, aurocs: &[f64]) -> Self {
        let mut entries: Vec<HeadAuroc> = aurocs
            .iter()
            .enumerate()
            .map(|(head, &auroc)| HeadAuroc { head, auroc })
            .collect();
        entries.sort_by(|a, b| b.auroc.total_cmp(&a.auroc).then(a.head.cmp(&b.head)));
        Self {
            dataset: dataset.into(),
            source,
            entries,
        }
    }
}

/// An ordered set of chosen heads. Serializes as
/// `{dataset, source, k, heads, val_auroc}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSelection {
    pub dataset: String,
    pub source: AttentionSource,
    pub k: usize,
    pub heads: Vec<usize>,
    pub val_auroc: Vec<f64>,
}

impl HeadSelection {
    /// Every head `0..n_heads`, e.g. to average all attention.
    pub fn all(n_heads: usize, source: AttentionSource) -> Self {
        Self {
            dataset: String::new(),
            source,
            k: n_heads,
            heads: (0..n_heads).collect(),
            val_auroc: Vec::new(),
        }
    }

    /// Checks the selection against a head count.
    pub fn check(&self, n_heads: usize) -> Result<()> {
        if self.k == 0 || self.heads.len() != self.k {
            return Err(Error::Config(format!(
                "selection lists {} heads but k = {}",
                self.heads.len(),
                self.k
            )));
        }
        let mut sorted = self.heads.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("selection repeats a head".into()));
        }
        if let Some(&h) = sorted.last().filter(|&&h| h >= n_heads) {
            return Err(Error::HeadOutOfRange { index: h, n_heads });
        }
        Ok(())
    }
}

fn labels_of(records: &[GenerationRecord]) -> Result<Vec<bool>> {
    records.iter().map(GenerationRecord::label).collect()
}

/// Validation AUROC of every head's single-head score.
pub fn per_head_auroc(records: &[GenerationRecord], source: AttentionSource) -> Result<HeadRanking> {
    let labels = labels_of(records)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::AurocUndefined(format!(
            "validation set has {n_pos} correct of {}",
            labels.len()
        )));
    }
    let mut n_heads = None;
    for r in records {
        let a = r
            .attention(source)
            .ok_or_else(|| Error::AttentionAbsent(format!("record {} has no attn_{source}", r.id)))?;
        match n_heads {
            None => n_heads = Some(a.n_heads()),
            Some(h) if h != a.n_heads() => {
                return Err(Error::HeadCountMismatch {
                    expected: h,
                    found: a.n_heads(),
                    id: r.id.clone(),
                })
            }
            _ => {}
        }
    }
    let n_heads = n_heads.unwrap_or(0);
    let aurocs = (0..n_heads)
        .into_par_iter()
        .map(|h| {
            let scores = records
                .iter()
                .map(|r| csl_score(r, &[h], source).map(|s| s.value))
                .collect::<Result<Vec<_>>>()?;
            metrics::auroc(&scores, &labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = records.first().map(|r| r.dataset.clone()).unwrap_or_default();
    Ok(HeadRanking::from_aurocs(dataset, source, &aurocs))
}

/// The first `k` heads of a ranking.
pub fn select_top_k(ranking: &HeadRanking, k: usize) -> Result<HeadSelection> {
    if k == 0 || k > ranking.n_heads() {
        return Err(Error::Config(format!("k = {k} outside 1..={}", ranking.n_heads())));
    }
    let top = &ranking.entries[..k];
    Ok(HeadSelection {
        dataset: ranking.dataset.clone(),
        source: ranking.source,
        k,
        heads: top.iter().map(|e| e.head).collect(),
        val_auroc: top.iter().map(|e| e.auroc).collect(),
    })
}

/// Spearman correlation between the per-head AUROCs of two record sets.
pub fn ranking_agreement(
    first: &[GenerationRecord],
    second: &[GenerationRecord],
    source: AttentionSource,
) -> Result<f64> {
    let named = |half: &str, e: Error| Error::InvalidInput(format!("{half} half: {e}"));
    let a = per_head_auroc(first, source).map_err(|e| named("first", e))?;
    let b = per_head_auroc(second, source).map_err(|e| named("second", e))?;
    metrics::spearman(&a.by_head(), &b.by_head())
}

/// Splits the records into two disjoint random halves (seeded) and reports
/// how well their head rankings agree.
pub fn ranking_stability(records: &[GenerationRecord], source: AttentionSource, seed: u64) -> Result<f64> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = records.len() / 2;
    let pick = |ix: &[usize]| ix.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    ranking_agreement(&pick(&idx[..half]), &pick(&idx[half..]), source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::AttentionMatrix;

    /// Two tokens; head 0 looks only at token 0, which carries the signal,
    /// head 1 looks at token 1, which is constant.
    fn toy(correct: &[bool]) -> Vec<GenerationRecord> {
        correct
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let signal = if c {
                    -0.1 - 0.01 * i as f64
                } else {
                    -3.0 - 0.01 * i as f64
                };
                let mut r = GenerationRecord::new(format!("r{i}"), vec!["a".into(), "b".into()], vec![signal, -1.0]);
                r.attn_prompt = Some(AttentionMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap());
                r.accuracy = Some(c);
                r
            })
            .collect()
    }

    #[test]
    fn perfect_head_ranks_first_and_constant_head_is_chance() {
        let recs = toy(&[true, false, true, false, false, true]);
        let ranking = per_head_auroc(&recs, AttentionSource::Prompt).unwrap();
        assert_eq!(ranking.entries[0], HeadAuroc { head: 0, auroc: 1.0 });
        assert_eq!(ranking.entries[1], HeadAuroc { head: 1, auroc: 0.5 });
    }

    #[test]
    fn single_class_is_an_error() {
        let recs = toy(&[true, true]);
        assert!(matches!(
            per_head_auroc(&recs, AttentionSource::Prompt),
            Err(Error::AurocUndefined(_))
        ));
    }

    #[test]
    fn missing_source_is_an_error() {
        let recs = toy(&[true, false]);
        assert!(matches!(
            per_head_auroc(&recs, AttentionSource::Next),
            Err(Error::AttentionAbsent(_))
        ));
    }

    #[test]
    fn ties_break_by_ascending_index() {
        let ranking = HeadRanking::from_aurocs("d", AttentionSource::Prompt, &[0.6, 0.9, 0.5, 0.7, 0.2, 0.1, 0.3, 0.7]);
        let heads: Vec<usize> = ranking.entries.iter().map(|e| e.head).collect();
        assert_eq!(heads, vec![1, 3, 7, 0, 2, 6, 4, 5]);
        // Heads 3 and 7 tie; with k = 2 only head 3 makes it.
        let sel = select_top_k(&ranking, 2).unwrap();
        assert_eq!(sel.heads, vec![1, 3]);
        assert_eq!(sel.val_auroc, vec![0.9, 0.7]);
    }

    #[test]
    fn top_k_bounds() {
        let ranking = HeadRanking::from_aurocs("d", AttentionSource::Next, &[0.4, 0.8, 0.6]);
        assert_eq!(select_top_k(&ranking, 3).unwrap().heads, vec![1, 2, 0]);
        assert_eq!(select_top_k(&ranking, 1).unwrap().heads, vec![1]);
        assert!(select_top_k(&ranking, 4).is_err());
        assert!(select_top_k(&ranking, 0).is_err());
    }

    #[test]
    fn selection_json_shape() {
        let ranking = HeadRanking::from_aurocs("coqa", AttentionSource::Prompt, &[0.4, 0.8]);
        let sel = select_top_k(&ranking, 1).unwrap();
        let json = serde_json::to_string(&sel).unwrap();
        assert_eq!(
            json,
            r#"{"dataset":"coqa","source":"prompt","k":1,"heads":[1],"val_auroc":[0.8]}"#
        );
        sel.check(2).unwrap();
        assert!(sel.check(1).is_err());
    }

    #[test]
    fn identical_halves_agree_perfectly() {
        let recs = toy(&[true, false, true, false, false, true]);
        let rho = ranking_agreement(&recs, &recs, AttentionSource::Prompt).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapped_order_gives_minus_one() {
        let a = toy(&[true, false, true, false]);
        // Flip labels: head 0 now ranks last.
        let b: Vec<_> = a
            .iter()
            .cloned()
            .map(|mut r| {
                r.accuracy = r.accuracy.map(|c| !c);
                r
            })
            .collect();
        let rho = ranking_agreement(&a, &b, AttentionSource::Prompt).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
    }
}
