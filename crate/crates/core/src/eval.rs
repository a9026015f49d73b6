//! The evaluation protocol.
//!
//! A capture is split at random into a validation part (used only to rank
//! and select heads) and a test part (used to score every method). This is
//! repeated for several seeded splittings and the per-split AUROC and AUARC
//! are summarized as mean ± population standard deviation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::se_confidence;
use crate::error::{Error, Result};
use crate::heads::{per_head_auroc, select_top_k, HeadRanking, HeadSelection, DEFAULT_K};
use crate::metrics::{self, ArCurve, ReliabilityBin};
use crate::record::{merge_ratings, save_json, AttentionSource, Capture, GenerationRecord, LabelPolicy};
use crate::scoring::{self, Method};
use crate::synth::split_indices;

/// Significance level for the "not significantly different from the best" flag.
pub const TIE_ALPHA: f64 = 0.05;

fn default_splits() -> usize {
    10
}
fn default_val_size() -> usize {
    1000
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_sources() -> Vec<AttentionSource> {
    AttentionSource::ALL.to_vec()
}
fn default_folds() -> usize {
    5
}

/// Settings shared by the pipelines. Every field has a default, so `{}` is a
/// valid configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_sources")]
    pub sources: Vec<AttentionSource>,
    /// Methods to report; `None` means every method the capture supports.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    /// How to derive labels from ratings; `None` uses stored `accuracy`.
    #[serde(default)]
    pub labels: Option<LabelPolicy>,
    #[serde(default = "default_folds")]
    pub calibration_folds: usize,
    /// Selections to use instead of selecting on each validation split.
    #[serde(default)]
    pub frozen_heads: Vec<HeadSelection>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl EvalConfig {
    pub fn wants(&self, m: Method) -> bool {
        self.methods.as_ref().map_or(true, |ms| ms.contains(&m))
    }

    fn check(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::Config("splits must be at least 1".into()));
        }
        if self.val_size == 0 {
            return Err(Error::Config("val_size must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.calibration_folds < 2 {
            return Err(Error::Config("calibration_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Resolved splitting protocol for a capture of a given size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub splits: usize,
    pub val_size: usize,
    /// The requested validation size was larger than half the capture.
    pub clamped: bool,
}

impl SplitPlan {
    /// Resolves the plan, warning when the validation size had to be clamped.
    pub fn resolve(config: &EvalConfig, n: usize) -> Result<Self> {
        let plan = Self::resolve_quietly(config, n)?;
        if plan.clamped {
            log::warn!(
                "validation size {} exceeds half of {n} records; using {}",
                config.val_size,
                plan.val_size
            );
        }
        Ok(plan)
    }

    fn resolve_quietly(config: &EvalConfig, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("{n} labeled records cannot be split")));
        }
        let half = n / 2;
        Ok(Self {
            seed: config.seed,
            splits: config.splits,
            val_size: config.val_size.min(half),
            clamped: config.val_size > half,
        })
    }

    /// `(validation, test)` indices of split `s`.
    pub fn split(&self, n: usize, s: usize) -> (Vec<usize>, Vec<usize>) {
        split_indices(n, self.val_size, self.seed, s as u64)
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = metrics::mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub auroc: Summary,
    pub auarc: Summary,
    pub auroc_splits: Vec<f64>,
    pub auarc_splits: Vec<f64>,
    /// Not significantly different from the best AUROC (paired two-sided
    /// t-test across splits at `TIE_ALPHA`); absent with a single split.
    pub auroc_tied_with_best: Option<bool>,
    pub auarc_tied_with_best: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMethod {
    pub method: Method,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHeads {
    pub split: usize,
    pub selections: Vec<HeadSelection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCalibration {
    pub method: Method,
    pub bins: Vec<ReliabilityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: Method,
    pub curve: ArCurve,
}

/// One row of a k-sweep: AUROC gain of attention-weighted likelihood over
/// SL(norm) with the top `k` heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub source: AttentionSource,
    pub auroc: Summary,
    pub gain: Summary,
    pub gain_splits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub baseline: Summary,
    pub rows: Vec<KSweepRow>,
    /// Requested k values larger than the head count.
    pub dropped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n_records: usize,
    pub n_excluded: usize,
    pub n_heads: usize,
    pub plan: SplitPlan,
    pub k: usize,
    /// Base accuracy of the test sets: the AUARC of random scores.
    pub random: Summary,
    /// AUARC of the labels used as scores.
    pub upper_bound: Summary,
    pub methods: Vec<MethodResult>,
    pub skipped: Vec<SkippedMethod>,
    pub significance: String,
    pub heads: Vec<SplitHeads>,
    /// Accuracy-rejection curves on the first split's test set.
    pub curves: Vec<MethodCurve>,
    /// Reliability diagrams after cross-validated Platt calibration on the
    /// first split's test set.
    pub calibration: Vec<MethodCalibration>,
    #[serde(default)]
    pub ksweep: Option<KSweep>,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Labels resolved and records that lack them dropped by policy.
pub struct LabeledCapture {
    pub records: Vec<GenerationRecord>,
    pub labels: Vec<bool>,
    pub n_excluded: usize,
    pub n_heads: usize,
}

pub fn resolve_labels(capture: &Capture, policy: Option<&LabelPolicy>) -> Result<LabeledCapture> {
    let (records, n_excluded) = match policy {
        Some(p) => {
            let out = merge_ratings(capture.records.clone(), p)?;
            (out.records, out.excluded.len())
        }
        None => (capture.records.clone(), 0),
    };
    let labels = records
        .iter()
        .map(GenerationRecord::label)
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledCapture {
        records,
        labels,
        n_excluded,
        n_heads: capture.n_heads(),
    })
}

/// Why a method cannot be computed on these records, if it cannot.
pub fn unavailable(method: Method, records: &[GenerationRecord], sources: &[AttentionSource]) -> Option<String> {
    let all = |f: &dyn Fn(&GenerationRecord) -> bool| records.iter().all(f);
    let source_ok = |s: AttentionSource| -> Option<String> {
        if !sources.contains(&s) {
            Some(format!("attention source {s} not requested"))
        } else if !all(&|r| r.attention(s).is_some()) {
            Some("attention source absent".to_owned())
        } else {
            None
        }
    };
    match method {
        Method::Sl | Method::SlNorm | Method::TokenSar => None,
        Method::Csl => source_ok(AttentionSource::Prompt),
        Method::CslNext => source_ok(AttentionSource::Next),
        Method::Deg => (!all(&|r| !r.samples.is_empty() && r.samples.iter().all(|s| s.sim_to_greedy.is_some())))
            .then(|| "sampled generations with similarities absent".to_owned()),
        Method::Ptrue => (!all(&|r| r.ptrue.is_some())).then(|| "ptrue absent".to_owned()),
        Method::Se | Method::SeNorm => {
            (!all(&|r| !r.samples.is_empty() && r.samples.iter().all(|s| s.cluster.is_some())))
                .then(|| "sampled generations with cluster ids absent".to_owned())
        }
        Method::SeCsl => unavailable(Method::Se, records, sources)
            .or_else(|| source_ok(AttentionSource::Prompt))
            .or_else(|| {
                (!all(&|r| r.samples.iter().all(|s| s.attn_prompt.is_some())))
                    .then(|| "sampled generations lack attn_prompt".to_owned())
            }),
    }
}

/// Head selections in force for one split, keyed by source.
type Selections = BTreeMap<AttentionSource, HeadSelection>;

fn heads_for(method: Method, sel: &Selections) -> Result<Option<&[usize]>> {
    match method.attention_source() {
        None => Ok(None),
        Some(s) => sel
            .get(&s)
            .map(|h| Some(h.heads.as_slice()))
            .ok_or_else(|| Error::AttentionAbsent(format!("no head selection for source {s}"))),
    }
}

/// Confidence of one record under one method.
pub fn score(r: &GenerationRecord, method: Method, heads: Option<&[usize]>) -> Result<f64> {
    let need = || heads.ok_or_else(|| Error::InvalidInput(format!("{method} needs a head selection")));
    let s = match method {
        Method::Sl => scoring::seq_loglik(r)?,
        Method::SlNorm => scoring::seq_loglik_norm(r)?,
        Method::Csl => scoring::csl_score(r, need()?, AttentionSource::Prompt)?,
        Method::CslNext => scoring::csl_score(r, need()?, AttentionSource::Next)?,
        Method::TokenSar => scoring::tokensar_score(r)?,
        Method::Deg => scoring::deg_confidence(r)?,
        Method::Ptrue => scoring::ptrue_score(r)?,
        Method::Se | Method::SeNorm => se_confidence(r, method, None)?,
        Method::SeCsl => se_confidence(r, method, Some(need()?))?,
    };
    Ok(s.value)
}

fn scores_of(records: &[&GenerationRecord], method: Method, heads: Option<&[usize]>) -> Result<Vec<f64>> {
    records.iter().map(|r| score(r, method, heads)).collect()
}

fn subset<'a>(records: &'a [GenerationRecord], idx: &[usize]) -> Vec<&'a GenerationRecord> {
    idx.iter().map(|&i| &records[i]).collect()
}

fn select_on(
    records: &[GenerationRecord],
    idx: &[usize],
    source: AttentionSource,
    k: usize,
) -> Result<(HeadRanking, HeadSelection)> {
    let val: Vec<GenerationRecord> = idx.iter().map(|&i| records[i].clone()).collect();
    let ranking = per_head_auroc(&val, source)?;
    let sel = select_top_k(&ranking, k)?;
    Ok((ranking, sel))
}

struct SplitOutcome {
    selections: Selections,
    auroc: Vec<f64>,
    auarc: Vec<f64>,
    base: f64,
    oracle: f64,
    curves: Vec<MethodCurve>,
    calibration: Vec<MethodCalibration>,
}

/// Where each split's head selections come from.
trait HeadSource: Sync {
    fn select(&self, split: usize, source: AttentionSource, k: usize) -> Result<HeadSelection>;
}

struct SelectOnValidation<'a> {
    records: &'a [GenerationRecord],
    plan: SplitPlan,
}

impl HeadSource for SelectOnValidation<'_> {
    fn select(&self, split: usize, source: AttentionSource, k: usize) -> Result<HeadSelection> {
        let (val, _) = self.plan.split(self.records.len(), split);
        Ok(select_on(self.records, &val, source, k)?.1)
    }
}

struct Frozen<'a> {
    fallback: Option<&'a dyn HeadSource>,
    frozen: &'a [HeadSelection],
}

impl HeadSource for Frozen<'_> {
    fn select(&self, split: usize, source: AttentionSource, k: usize) -> Result<HeadSelection> {
        match self.frozen.iter().find(|s| s.source == source) {
            Some(s) => Ok(s.clone()),
            None => match self.fallback {
                Some(f) => f.select(split, source, k),
                None => Err(Error::Config(format!("no frozen selection for source {source}"))),
            },
        }
    }
}

fn evaluate_with(capture: &Capture, config: &EvalConfig, heads: &dyn HeadSource) -> Result<EvalReport> {
    config.check()?;
    let labeled = resolve_labels(capture, config.labels.as_ref())?;
    let records = &labeled.records;
    let plan = SplitPlan::resolve(config, records.len())?;

    let mut methods = Vec::new();
    let mut skipped = Vec::new();
    for m in Method::ALL.into_iter().filter(|&m| config.wants(m)) {
        match unavailable(m, records, &config.sources) {
            None => methods.push(m),
            Some(reason) => {
                log::info!("skipping {m}: {reason}");
                skipped.push(SkippedMethod { method: m, reason });
            }
        }
    }
    let sources: Vec<AttentionSource> = config
        .sources
        .iter()
        .copied()
        .filter(|s| methods.iter().any(|m| m.attention_source() == Some(*s)))
        .collect();
    for s in &config.frozen_heads {
        s.check(labeled.n_heads)?;
    }

    let outcomes = (0..plan.splits)
        .into_par_iter()
        .map(|split| -> Result<SplitOutcome> {
            let (_, test_idx) = plan.split(records.len(), split);
            let mut selections = Selections::new();
            for &s in &sources {
                selections.insert(s, heads.select(split, s, config.k)?);
            }
            let test = subset(records, &test_idx);
            let labels: Vec<bool> = test_idx.iter().map(|&i| labeled.labels[i]).collect();
            let mut auroc = Vec::with_capacity(methods.len());
            let mut auarc = Vec::with_capacity(methods.len());
            let mut curves = Vec::new();
            let mut calibration = Vec::new();
            for &m in &methods {
                let scores = scores_of(&test, m, heads_for(m, &selections)?)?;
                auroc.push(metrics::auroc(&scores, &labels)?);
                let curve = metrics::arc_curve(&scores, &labels)?;
                auarc.push(curve.area());
                if split == 0 {
                    let cal = metrics::platt_calibrate(&scores, &labels, config.calibration_folds, plan.seed)?;
                    let bins = metrics::reliability_bins(
                        &cal.predict_all(&scores),
                        &labels,
                        metrics::RELIABILITY_BIN_WIDTH,
                        metrics::RELIABILITY_MIN_COUNT,
                    )?;
                    calibration.push(MethodCalibration { method: m, bins });
                    curves.push(MethodCurve { method: m, curve });
                }
            }
            Ok(SplitOutcome {
                selections,
                auroc,
                auarc,
                base: metrics::base_accuracy(&labels),
                oracle: metrics::oracle_auarc(&labels)?,
                curves,
                calibration,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |f: &dyn Fn(&SplitOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
    let mut results: Vec<MethodResult> = methods
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let auroc_splits = column(&|o| o.auroc[j]);
            let auarc_splits = column(&|o| o.auarc[j]);
            MethodResult {
                method: m,
                auroc: Summary::of(&auroc_splits),
                auarc: Summary::of(&auarc_splits),
                auroc_splits,
                auarc_splits,
                auroc_tied_with_best: None,
                auarc_tied_with_best: None,
            }
        })
        .collect();
    if plan.splits >= 2 {
        mark_ties(
            &mut results,
            |r| &r.auroc_splits,
            |r, t| r.auroc_tied_with_best = Some(t),
        )?;
        mark_ties(
            &mut results,
            |r| &r.auarc_splits,
            |r, t| r.auarc_tied_with_best = Some(t),
        )?;
    }

    let random = Summary::of(&column(&|o| o.base));
    let upper_bound = Summary::of(&column(&|o| o.oracle));
    let mut outcomes = outcomes;
    let first = outcomes.first_mut().expect("at least one split");
    let curves = std::mem::take(&mut first.curves);
    let calibration = std::mem::take(&mut first.calibration);
    Ok(EvalReport {
        dataset: records.first().map(|r| r.dataset.clone()).unwrap_or_default(),
        n_records: records.len(),
        n_excluded: labeled.n_excluded,
        n_heads: labeled.n_heads,
        plan,
        k: config.k,
        random,
        upper_bound,
        methods: results,
        skipped,
        significance: format!(
            "paired two-sided t-test across splits against the best mean, alpha = {TIE_ALPHA} (toolkit convention)"
        ),
        heads: outcomes
            .into_iter()
            .enumerate()
            .map(|(split, o)| SplitHeads {
                split,
                selections: o.selections.into_values().collect(),
            })
            .collect(),
        curves,
        calibration,
        ksweep: None,
    })
}

fn mark_ties(
    results: &mut [MethodResult],
    values: impl Fn(&MethodResult) -> &Vec<f64>,
    set: impl Fn(&mut MethodResult, bool),
) -> Result<()> {
    let Some(best) = results
        .iter()
        .enumerate()
        .max_by(|a, b| {
            let (ma, mb) = (metrics::mean_std(values(a.1)).0, metrics::mean_std(values(b.1)).0);
            ma.total_cmp(&mb).then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i)
    else {
        return Ok(());
    };
    let best_values = values(&results[best]).clone();
    for (i, r) in results.iter_mut().enumerate() {
        let tied = i == best || metrics::paired_t_test(values(r), &best_values)?.p >= TIE_ALPHA;
        set(r, tied);
    }
    Ok(())
}

/// Selects heads on each validation split and scores every method on the
/// matching test split.
pub fn run_evaluate(capture: &Capture, config: &EvalConfig) -> Result<EvalReport> {
    let labeled = resolve_labels(capture, config.labels.as_ref())?;
    // evaluate_with resolves the same plan again and reports any clamping.
    let plan = SplitPlan::resolve_quietly(config, labeled.records.len())?;
    let on_val = SelectOnValidation {
        records: &labeled.records,
        plan,
    };
    let frozen = Frozen {
        fallback: Some(&on_val),
        frozen: &config.frozen_heads,
    };
    evaluate_with(capture, config, &frozen)
}

/// Evaluates `target` with heads selected on `source`'s validation splits.
///
/// Split `s` of the target uses the heads chosen on split `s` of the source.
pub fn run_transfer(source: &Capture, target: &Capture, config: &EvalConfig) -> Result<EvalReport> {
    if source.n_heads() != target.n_heads() || source.header.head_layout != target.header.head_layout {
        return Err(Error::Config(format!(
            "head layouts differ: source has {} ({}), target has {} ({})",
            source.n_heads(),
            source.header.head_layout,
            target.n_heads(),
            target.header.head_layout
        )));
    }
    let labeled = resolve_labels(source, config.labels.as_ref())?;
    let plan = SplitPlan::resolve(config, labeled.records.len())?;
    let on_source = SelectOnValidation {
        records: &labeled.records,
        plan,
    };
    let frozen = Frozen {
        fallback: Some(&on_source),
        frozen: &config.frozen_heads,
    };
    evaluate_with(target, config, &frozen)
}

/// AUROC gain over SL(norm) for each requested `k`, per attention source.
pub fn run_ksweep(capture: &Capture, config: &EvalConfig, ks: &[usize]) -> Result<KSweep> {
    config.check()?;
    let labeled = resolve_labels(capture, config.labels.as_ref())?;
    let records = &labeled.records;
    let plan = SplitPlan::resolve(config, records.len())?;
    let (kept, dropped): (Vec<usize>, Vec<usize>) = ks.iter().partition(|&&k| k >= 1 && k <= labeled.n_heads);
    for k in &dropped {
        log::warn!("dropping k = {k}: capture has {} heads", labeled.n_heads);
    }
    let sources: Vec<AttentionSource> = config
        .sources
        .iter()
        .copied()
        .filter(|&s| records.iter().all(|r| r.attention(s).is_some()))
        .collect();
    if sources.is_empty() {
        return Err(Error::AttentionAbsent(
            "no requested attention source is present".into(),
        ));
    }

    // Per split: baseline AUROC and, per (source, k), the weighted AUROC.
    let per_split = (0..plan.splits)
        .into_par_iter()
        .map(|split| -> Result<(f64, Vec<f64>)> {
            let (val, test_idx) = plan.split(records.len(), split);
            let test = subset(records, &test_idx);
            let labels: Vec<bool> = test_idx.iter().map(|&i| labeled.labels[i]).collect();
            let base = metrics::auroc(&scores_of(&test, Method::SlNorm, None)?, &labels)?;
            let mut values = Vec::with_capacity(sources.len() * kept.len());
            for &s in &sources {
                let (ranking, _) = select_on(records, &val, s, 1)?;
                let method = if s == AttentionSource::Prompt {
                    Method::Csl
                } else {
                    Method::CslNext
                };
                for &k in &kept {
                    let sel = select_top_k(&ranking, k)?;
                    values.push(metrics::auroc(&scores_of(&test, method, Some(&sel.heads))?, &labels)?);
                }
            }
            Ok((base, values))
        })
        .collect::<Result<Vec<_>>>()?;

    let baseline: Vec<f64> = per_split.iter().map(|p| p.0).collect();
    let mut rows = Vec::new();
    for (si, &s) in sources.iter().enumerate() {
        for (ki, &k) in kept.iter().enumerate() {
            let j = si * kept.len() + ki;
            let aurocs: Vec<f64> = per_split.iter().map(|p| p.1[j]).collect();
            let gains: Vec<f64> = per_split.iter().map(|p| p.1[j] - p.0).collect();
            rows.push(KSweepRow {
                k,
                source: s,
                auroc: Summary::of(&aurocs),
                gain: Summary::of(&gains),
                gain_splits: gains,
            });
        }
    }
    Ok(KSweep {
        baseline: Summary::of(&baseline),
        rows,
        dropped,
    })
}

fn fmt_opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

/// Summary table: one row per method plus the Random and Upper Bound rows.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out =
        String::from("method,auroc_mean,auroc_std,auarc_mean,auarc_std,auroc_tied_with_best,auarc_tied_with_best\n");
    for r in &report.methods {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.auroc.mean,
            r.auroc.std,
            r.auarc.mean,
            r.auarc.std,
            fmt_opt_bool(r.auroc_tied_with_best),
            fmt_opt_bool(r.auarc_tied_with_best)
        );
    }
    let _ = writeln!(out, "Random,,,{},{},,", report.random.mean, report.random.std);
    let _ = writeln!(
        out,
        "Upper Bound,,,{},{},,",
        report.upper_bound.mean, report.upper_bound.std
    );
    out
}

pub fn curves_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,coverage,accuracy\n");
    for c in &report.curves {
        for p in &c.curve.points {
            let _ = writeln!(out, "{},{},{}", c.method, p.coverage, p.accuracy);
        }
    }
    out
}

pub fn reliability_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,bin_lo,bin_hi,count,pred_mean,acc,ignored\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for c in &report.calibration {
        for b in &c.bins {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.method,
                b.lo,
                b.hi,
                b.count,
                opt(b.pred_mean),
                opt(b.accuracy),
                b.ignored
            );
        }
    }
    out
}

pub fn ksweep_csv(sweep: &KSweep) -> String {
    let mut out = String::from("source,k,auroc_mean,auroc_std,gain_mean,gain_std\n");
    for r in &sweep.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.source, r.k, r.auroc.mean, r.auroc.std, r.gain.mean, r.gain.std
        );
    }
    out
}

/// Writes `report.json`, `report.csv`, `arc_curves.csv`, `reliability.csv`
/// and `heads.json` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_json(dir.join("report.json"), report)?;
    save_json(dir.join("heads.json"), &report.heads)?;
    for (name, text) in [
        ("report.csv", report_csv(report)),
        ("arc_curves.csv", curves_csv(report)),
        ("reliability.csv", reliability_csv(report)),
    ] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    if let Some(sweep) = &report.ksweep {
        let path = dir.join("ksweep.csv");
        fs::write(&path, ksweep_csv(sweep)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
