//! Ranking and agreement statistics: average precision with PR curves,
//! Pearson and Spearman correlation, and Cohen's kappa.

use crate::core::SentenceLabel;
use crate::error::{Error, Result};

/// Step-wise average precision over descending score thresholds, with
/// tied scores grouped at a single threshold.
///
/// Returns `(ap, curve)` where `curve` is the list of
/// `(recall, precision)` points, one per threshold group, with recall
/// nondecreasing and reaching 1.0 at the lowest threshold. Requires at
/// least one positive and one negative.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Result<(f64, Vec<(f64, f64)>)> {
    if scores.len() != positive.len() {
        return Err(Error::Precondition(format!(
            "{} scores for {} flags",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Precondition("scores must be finite".into()));
    }
    let total_pos = positive.iter().filter(|p| **p).count();
    let total_neg = positive.len() - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::Degenerate(format!(
            "average precision needs both classes ({total_pos} positives, {total_neg} negatives)"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = Vec::new();
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        // One threshold group per distinct score value.
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / total_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        curve.push((recall, precision));
        i = j;
    }
    Ok((ap, curve))
}

/// Pearson correlation coefficient. Errors on fewer than two points or
/// zero variance in either input.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Precondition(format!(
            "{} xs for {} ys",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), with ties sharing the mean of the rank
/// positions they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share the mean 1-based rank.
        let mean_rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = mean_rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Precondition(format!(
            "{} xs for {} ys",
            xs.len(),
            ys.len()
        )));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Label granularity for agreement: three classes, or two after
/// collapsing minor and major inaccuracies into one non-factual class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaClasses {
    Two,
    Three,
}

fn kappa_class(label: SentenceLabel, classes: KappaClasses) -> usize {
    match (classes, label) {
        (_, SentenceLabel::Accurate) => 0,
        (KappaClasses::Two, _) => 1,
        (KappaClasses::Three, SentenceLabel::MinorInaccurate) => 1,
        (KappaClasses::Three, SentenceLabel::MajorInaccurate) => 2,
    }
}

/// Cohen's kappa between two annotators: `(po - pe) / (1 - pe)`.
/// Undefined (an error) when chance agreement is 1, i.e. both
/// annotators used a single identical class.
pub fn cohens_kappa(a: &[SentenceLabel], b: &[SentenceLabel], classes: KappaClasses) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "{} labels for annotator a, {} for b",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Degenerate("kappa needs at least one item".into()));
    }
    let k = match classes {
        KappaClasses::Two => 2,
        KappaClasses::Three => 3,
    };
    let n = a.len() as f64;
    let mut marg_a = vec![0.0; k];
    let mut marg_b = vec![0.0; k];
    let mut agree = 0.0;
    for (&la, &lb) in a.iter().zip(b) {
        let ca = kappa_class(la, classes);
        let cb = kappa_class(lb, classes);
        marg_a[ca] += 1.0;
        marg_b[cb] += 1.0;
        if ca == cb {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = (0..k).map(|c| (marg_a[c] / n) * (marg_b[c] / n)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Err(Error::Degenerate(
            "chance agreement is 1 (both annotators used one identical class); kappa undefined".into(),
        ));
    }
    Ok((po - pe) / (1.0 - pe))
}
