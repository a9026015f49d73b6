//! Statistics kernels used by the evaluation protocol.
//!
//! Conventions shared by every function here: scores are confidences
//! (higher means more confident), labels are `true` for a correct response.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

fn check_pairs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score at index {i}")));
    }
    Ok(())
}

/// Area under the ROC curve in Mann–Whitney form: the fraction of
/// (positive, negative) pairs where the positive scores higher, with ties
/// counted as half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_pairs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AurocUndefined(format!(
            "{n_pos} positive and {n_neg} negative labels"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sweep tie groups in ascending score order, counting negatives below.
    let (mut wins, mut ties, mut neg_below) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut pos, mut neg) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        wins += pos * neg_below;
        ties += pos * neg;
        neg_below += neg;
    }
    Ok((wins as f64 + 0.5 * ties as f64) / (n_pos as f64 * n_neg as f64))
}

/// One point of an accuracy-rejection curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArPoint {
    pub coverage: f64,
    pub accuracy: f64,
}

/// Accuracy of the retained set as lower-confidence samples are rejected.
///
/// Point `k` (1-based) retains the `k` most confident samples, so coverage
/// runs `1/N, 2/N, ..., 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCurve {
    pub points: Vec<ArPoint>,
}

impl ArCurve {
    /// Left-Riemann area over coverage: the mean of the retained accuracies.
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        self.points.iter().map(|p| p.accuracy).sum::<f64>() / n as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "coverage,accuracy")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.coverage, p.accuracy)?;
        }
        Ok(())
    }
}

/// Builds the accuracy-rejection curve. Scores are ranked descending; equal
/// scores keep their input order.
pub fn arc_curve(scores: &[f64], labels: &[bool]) -> Result<ArCurve> {
    check_pairs(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::InvalidInput("accuracy-rejection curve of zero samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort: ties stay in ascending position.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let n = scores.len() as f64;
    let mut correct = 0.0;
    let points = order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            if labels[i] {
                correct += 1.0;
            }
            let kept = (k + 1) as f64;
            ArPoint {
                coverage: kept / n,
                accuracy: correct / kept,
            }
        })
        .collect();
    Ok(ArCurve { points })
}

/// Area under the accuracy-rejection curve.
pub fn auarc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(arc_curve(scores, labels)?.area())
}

/// AUARC when the labels themselves are the scores: the best any score can do.
pub fn oracle_auarc(labels: &[bool]) -> Result<f64> {
    let scores: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    auarc(&scores, labels)
}

/// Fraction of correct labels.
pub fn base_accuracy(labels: &[bool]) -> f64 {
    labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64
}

/// Mean and spread of AUARC under uniformly random scores, estimated from
/// `shuffles` seeded draws. Returns `(mean, standard error)`.
pub fn random_auarc(labels: &[bool], shuffles: usize, seed: u64) -> Result<(f64, f64)> {
    if labels.is_empty() || shuffles < 2 {
        return Err(Error::InvalidInput("need labels and at least two shuffles".into()));
    }
    let values = (0..shuffles)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut scores: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
            scores.shuffle(&mut rng);
            auarc(&scores, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, _) = mean_std(&values);
    let sd = sample_std(&values);
    Ok((mean, sd / (shuffles as f64).sqrt()))
}

/// One fixed-width bin of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean predicted probability; absent for empty bins.
    pub pred_mean: Option<f64>,
    /// Empirical accuracy; absent for empty bins.
    pub accuracy: Option<f64>,
    /// Too few samples to draw; still reported.
    pub ignored: bool,
}

pub const RELIABILITY_BIN_WIDTH: f64 = 0.1;
pub const RELIABILITY_MIN_COUNT: usize = 10;

/// Bins calibrated probabilities into fixed-width intervals over `[0, 1]`.
/// The last bin is closed on the right. Bins holding fewer than `min_count`
/// samples are flagged `ignored`.
pub fn reliability_bins(probs: &[f64], labels: &[bool], width: f64, min_count: usize) -> Result<Vec<ReliabilityBin>> {
    check_pairs(probs, labels)?;
    if !(width > 0.0 && width <= 1.0) {
        return Err(Error::InvalidInput(format!("bin width {width} outside (0, 1]")));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    let n_bins = (1.0 / width).round().max(1.0) as usize;
    let mut count = vec![0usize; n_bins];
    let mut pred = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&p, &l) in probs.iter().zip(labels) {
        let b = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        count[b] += 1;
        pred[b] += p;
        hits[b] += usize::from(l);
    }
    Ok((0..n_bins)
        .map(|b| {
            let c = count[b];
            ReliabilityBin {
                lo: b as f64 / n_bins as f64,
                hi: (b + 1) as f64 / n_bins as f64,
                count: c,
                pred_mean: (c > 0).then(|| pred[b] / c as f64),
                accuracy: (c > 0).then(|| hits[b] as f64 / c as f64),
                ignored: c < min_count,
            }
        })
        .collect())
}

pub fn write_bins_csv<W: Write>(bins: &[ReliabilityBin], mut w: W) -> io::Result<()> {
    writeln!(w, "bin_lo,bin_hi,count,pred_mean,acc")?;
    for b in bins {
        writeln!(
            w,
            "{},{},{},{},{}",
            b.lo,
            b.hi,
            b.count,
            opt(b.pred_mean),
            opt(b.accuracy)
        )?;
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `p = σ(slope · score + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub slope: f64,
    pub intercept: f64,
}

impl PlattModel {
    pub fn predict(&self, score: f64) -> f64 {
        sigmoid(self.slope * score + self.intercept)
    }
}

/// Fits a Platt sigmoid by Newton's method on the cross-entropy loss.
///
/// Targets are Platt's smoothed labels, `(N₊+1)/(N₊+2)` for positives and
/// `1/(N₋+2)` for negatives, which keeps the optimum finite on separable
/// data.
pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<PlattModel> {
    check_pairs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::InvalidInput("Platt fit needs both classes".into()));
    }
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();

    let loss = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let z = a * s + b;
                // log(1 + e^z) - t z, evaluated without overflow
                let softplus = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                softplus - t * z
            })
            .sum()
    };

    let (mut a, mut b) = (0.0, ((n_pos + 1.0) / (n_neg + 1.0)).ln());
    let mut f = loss(a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(a * s + b);
            let d = p - t;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs().max(gb.abs()) < 1e-12 {
            break;
        }
        // Small ridge keeps the step defined when the Hessian is near singular.
        let ridge = 1e-12;
        let (haa, hbb) = (haa + ridge, hbb + ridge);
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = loss(na, nb);
            if nf < f + 1e-4 * step * (ga * da + gb * db) {
                a = na;
                b = nb;
                f = nf;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return Ok(PlattModel { slope: a, intercept: b });
            }
        }
    }
    Ok(PlattModel { slope: a, intercept: b })
}

/// A score → probability map averaged over cross-validation fold models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub models: Vec<PlattModel>,
    /// Set when a fold held a single class and the map was refit on all data.
    pub refit_on_full_data: bool,
}

impl Calibration {
    pub fn predict(&self, score: f64) -> f64 {
        self.models.iter().map(|m| m.predict(score)).sum::<f64>() / self.models.len() as f64
    }

    pub fn predict_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.predict(s)).collect()
    }
}

/// Cross-validated Platt calibration.
///
/// Samples are dealt into `folds` stratified folds after a seeded shuffle;
/// one sigmoid is fit on each held-out fold and the resulting probabilities
/// are averaged. If any fold contains a single class the map falls back to
/// one sigmoid fit on all samples.
pub fn platt_calibrate(scores: &[f64], labels: &[bool], folds: usize, seed: u64) -> Result<Calibration> {
    check_pairs(scores, labels)?;
    if folds == 0 || scores.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot fill {folds} folds",
            scores.len()
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::InvalidInput("calibration needs both classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; scores.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            assignment[i] = j % folds;
        }
    }
    let mut models = Vec::with_capacity(folds);
    for f in 0..folds {
        let (s, l): (Vec<f64>, Vec<bool>) = (0..scores.len())
            .filter(|&i| assignment[i] == f)
            .map(|i| (scores[i], labels[i]))
            .unzip();
        if l.iter().all(|&x| x) || l.iter().all(|&x| !x) {
            log::warn!("calibration fold {f} holds a single class; refitting on all data");
            return Ok(Calibration {
                models: vec![fit_platt(scores, labels)?],
                refit_on_full_data: true,
            });
        }
        models.push(fit_platt(&s, &l)?);
    }
    Ok(Calibration {
        models,
        refit_on_full_data: false,
    })
}

/// Ranks starting at 1, with tied values sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::LengthMismatch(format!(
            "spearman needs two equal-length inputs of length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    correlation(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::RanksDegenerate("an input is constant".into()))
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::LengthMismatch(format!(
            "pearson needs two equal-length inputs of length >= 3, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    correlation(x, y).ok_or_else(|| Error::ZeroVariance("an input is constant".into()))
}

/// Result of a Student t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

fn one_sample_t(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("t-test needs at least two samples".into()));
    }
    let n = values.len() as f64;
    let (mean, _) = mean_std(values);
    let sd = sample_std(values);
    if sd == 0.0 {
        return Err(Error::ZeroVariance("t-test samples are constant".into()));
    }
    Ok((mean / (sd / n.sqrt()), n - 1.0))
}

fn students_t(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("df >= 1")
}

/// One-sample t-test of `mean > 0`.
pub fn t_test_one_sided(deltas: &[f64]) -> Result<TTest> {
    let (t, df) = one_sample_t(deltas)?;
    Ok(TTest {
        t,
        p: students_t(df).sf(t),
        df,
    })
}

/// Paired two-sided t-test of `mean(a - b) != 0`.
///
/// Identical inputs give `p = 1` rather than an error.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!(
            "{} vs {} paired values",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    match one_sample_t(&d) {
        Ok((t, df)) => Ok(TTest {
            t,
            p: (2.0 * students_t(df).sf(t.abs())).min(1.0),
            df,
        }),
        Err(Error::ZeroVariance(_)) => {
            let df = d.len() as f64 - 1.0;
            let p = if d[0] == 0.0 { 1.0 } else { 0.0 };
            let t = if d[0] == 0.0 {
                0.0
            } else {
                d[0].signum() * f64::INFINITY
            };
            Ok(TTest { t, p, df })
        }
        Err(e) => Err(e),
    }
}

/// Mean and population standard deviation, summed in input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let (mean, _) = mean_std(values);
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn auroc_counts_half_ties() {
        // pos [0.9, 0.4], neg [0.4, 0.1]: wins (0.9,0.4) (0.9,0.1) (0.4,0.1), tie (0.4,0.4)
        let s = [0.9, 0.4, 0.4, 0.1];
        let l = [true, true, false, false];
        assert_eq!(auroc(&s, &l).unwrap(), 0.875);
    }

    #[test]
    fn auroc_edge_cases() {
        assert_eq!(auroc(&[1.0; 6], &[true, false, true, false, true, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.0, 1.0], &[true, false]).unwrap(), 0.0);
        assert!(matches!(
            auroc(&[1.0, 2.0], &[true, true]),
            Err(Error::AurocUndefined(_))
        ));
        assert!(auroc(&[f64::NAN, 1.0], &[true, false]).is_err());
    }

    #[test]
    fn arc_curve_hand_case() {
        let c = arc_curve(&[2.0, 1.0], &[true, false]).unwrap();
        assert_eq!(
            c.points,
            vec![
                ArPoint {
                    coverage: 0.5,
                    accuracy: 1.0
                },
                ArPoint {
                    coverage: 1.0,
                    accuracy: 0.5
                }
            ]
        );
        assert_eq!(c.area(), 0.75);
    }

    #[test]
    fn auarc_all_correct_is_one() {
        assert_eq!(auarc(&[0.3, -2.0, 7.0], &[true, true, true]).unwrap(), 1.0);
        assert_eq!(auarc(&[0.3, -2.0, 7.0], &[false, false, false]).unwrap(), 0.0);
    }

    #[test]
    fn auarc_ties_keep_input_order() {
        // Equal scores: the first-listed sample is retained first.
        assert_eq!(auarc(&[1.0, 1.0], &[true, false]).unwrap(), 0.75);
        assert_eq!(auarc(&[1.0, 1.0], &[false, true]).unwrap(), 0.25);
    }

    #[test]
    fn random_scores_average_to_base_accuracy() {
        let labels: Vec<bool> = (0..300).map(|i| i % 3 != 0).collect();
        let (mean, se) = random_auarc(&labels, 1000, 11).unwrap();
        let base = base_accuracy(&labels);
        assert!((mean - base).abs() <= 3.0 * se, "mean {mean} base {base} se {se}");
        assert!(oracle_auarc(&labels).unwrap() > mean);
    }

    #[test]
    fn reliability_single_bin() {
        let probs = [0.95; 20];
        let labels: Vec<bool> = (0..20).map(|i| i != 0).collect();
        let bins = reliability_bins(&probs, &labels, 0.1, 10).unwrap();
        assert_eq!(bins.len(), 10);
        let used: Vec<_> = bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(used.len(), 1);
        assert_eq!(used[0].lo, 0.9);
        assert!(close(used[0].pred_mean.unwrap(), 0.95, 1e-12));
        assert!(close(used[0].accuracy.unwrap(), 0.95, 1e-12));
        assert!(!used[0].ignored);
        assert!(bins.iter().filter(|b| b.count == 0).all(|b| b.ignored));
    }

    #[test]
    fn reliability_empty_input() {
        let bins = reliability_bins(&[], &[], 0.1, 10).unwrap();
        assert!(bins.iter().all(|b| b.count == 0 && b.ignored));
    }

    #[test]
    fn reliability_min_count_rule() {
        let probs: Vec<f64> = (0..9).map(|_| 0.15).chain((0..10).map(|_| 0.55)).collect();
        let labels = vec![true; 19];
        let bins = reliability_bins(&probs, &labels, 0.1, 10).unwrap();
        assert_eq!(bins[1].count, 9);
        assert!(bins[1].ignored);
        assert_eq!(bins[5].count, 10);
        assert!(!bins[5].ignored);
    }

    #[test]
    fn reliability_grid_is_monotone() {
        let probs: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let labels: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
        let bins = reliability_bins(&probs, &labels, 0.1, 10).unwrap();
        let acc: Vec<f64> = bins.iter().map(|b| b.accuracy.unwrap()).collect();
        assert!(acc.windows(2).all(|w| w[0] <= w[1]), "{acc:?}");
        // 1.0 falls in the last, right-closed bin.
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 201);
    }

    #[test]
    fn platt_symmetric_data_centres_at_half() {
        let scores = [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0];
        let labels = [false, false, true, false, true, false, true, true];
        let m = fit_platt(&scores, &labels).unwrap();
        assert!(close(m.predict(0.0), 0.5, 1e-9), "{m:?}");
        let cal = platt_calibrate(&scores, &labels, 2, 0).unwrap();
        assert!(cal.predict(3.0) > cal.predict(-3.0));
    }

    #[test]
    fn platt_separable_data_stays_finite_and_monotone() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let cal = platt_calibrate(&scores, &labels, 5, 3).unwrap();
        let probs = cal.predict_all(&scores);
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!(probs.windows(2).all(|w| w[0] <= w[1]));
        assert!(probs[0] < 0.1 && probs[39] > 0.9);
        assert_eq!(auroc(&probs, &labels).unwrap(), auroc(&scores, &labels).unwrap());
    }

    #[test]
    fn platt_single_class_fold_refits() {
        let scores = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let labels = [false, false, false, false, false, true];
        let cal = platt_calibrate(&scores, &labels, 3, 0).unwrap();
        assert!(cal.refit_on_full_data);
        assert_eq!(cal.models.len(), 1);
    }

    #[test]
    fn spearman_hand_cases() {
        let x = [1.0, 2.0, 3.0];
        assert!(close(spearman(&x, &x).unwrap(), 1.0, 1e-12));
        assert!(close(spearman(&x, &[3.0, 2.0, 1.0]).unwrap(), -1.0, 1e-12));
        assert!(close(spearman(&x, &[1.0, 3.0, 2.0]).unwrap(), 0.5, 1e-12));
        assert!(matches!(spearman(&x, &[2.0; 3]), Err(Error::RanksDegenerate(_))));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn pearson_hand_cases() {
        let x = [0.0, 1.0, 2.0];
        assert!(close(pearson(&x, &x).unwrap(), 1.0, 1e-12));
        assert!(close(pearson(&x, &[0.0, -1.0, -2.0]).unwrap(), -1.0, 1e-12));
        // cov 2, var_x 1, var_y 13/3 (population) -> 2/sqrt(13/3)... hand value 0.9608
        assert!(close(pearson(&x, &[0.0, 1.0, 4.0]).unwrap(), 0.9608, 1e-3));
        assert!(matches!(pearson(&x, &[1.0; 3]), Err(Error::ZeroVariance(_))));
        assert!(pearson(&x[..2], &x[..2]).is_err());
    }

    #[test]
    fn t_test_hand_case() {
        // df = 2 has a closed-form CDF: F(t) = 1/2 + t / (2 sqrt(2 + t^2)).
        let r = t_test_one_sided(&[1.0, 2.0, 3.0]).unwrap();
        let t = 12f64.sqrt();
        let p = 0.5 - t / (2.0 * (2.0 + t * t).sqrt());
        assert!(close(r.t, t, 1e-12));
        assert!(close(r.p, p, 1e-9));
        assert!(close(r.p, 0.0371, 1e-3));
    }

    #[test]
    fn t_test_direction() {
        assert!(close(t_test_one_sided(&[-1.0, 1.0, -2.0, 2.0]).unwrap().p, 0.5, 1e-12));
        assert!(t_test_one_sided(&[-1.0, -2.0, -4.0]).unwrap().p > 0.5);
        assert!(matches!(t_test_one_sided(&[1.0, 1.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn paired_test_identical_inputs() {
        let a = [0.8, 0.7, 0.9];
        assert_eq!(paired_t_test(&a, &a).unwrap().p, 1.0);
        let b = [0.5, 0.45, 0.55];
        assert!(paired_t_test(&a, &b).unwrap().p < 0.05);
    }

    #[test]
    fn curves_serialize_to_csv() {
        let mut out = Vec::new();
        arc_curve(&[2.0, 1.0], &[true, false])
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "coverage,accuracy\n0.5,1\n1,0.5\n");
        let mut out = Vec::new();
        let bins = reliability_bins(&[0.05], &[true], 0.5, 1).unwrap();
        write_bins_csv(&bins, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "bin_lo,bin_hi,count,pred_mean,acc\n0,0.5,1,0.05,1\n0.5,1,0,,\n"
        );
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(-8.0f64..8.0, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auroc_is_antisymmetric_without_ties((s, l) in scored_labels()) {
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let mut sorted = s.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            let sum = auroc(&s, &l).unwrap() + auroc(&neg, &l).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_rank_invariant((s, l) in scored_labels()) {
            let t: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            prop_assert_eq!(auarc(&s, &l).unwrap(), auarc(&t, &l).unwrap());
            if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
                prop_assert_eq!(auroc(&s, &l).unwrap(), auroc(&t, &l).unwrap());
            }
        }

        #[test]
        fn oracle_dominates((s, l) in scored_labels()) {
            prop_assert!(oracle_auarc(&l).unwrap() >= auarc(&s, &l).unwrap());
        }

        #[test]
        fn correlations_stay_in_range(x in prop::collection::vec(-5.0f64..5.0, 3..30),
                                      seed in any::<u64>()) {
            let mut y = x.clone();
            y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            if let Ok(r) = spearman(&x, &y) { prop_assert!((-1.0..=1.0).contains(&r)); }
            if let Ok(r) = pearson(&x, &y) { prop_assert!((-1.0..=1.0).contains(&r)); }
        }
    }
}
