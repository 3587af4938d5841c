use crate::data::Task;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Task metrics; the pair not applicable to the task is `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
}

impl MetricSuite {
    /// The headline number of the task: AP for classification, RMSE otherwise.
    pub fn headline(&self) -> Option<f64> {
        self.ap.or(self.rmse)
    }
}

fn check_lengths(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn check_binary(labels: &[f64]) -> Result<(usize, usize)> {
    let mut pos = 0;
    for &y in labels {
        if y == 1.0 {
            pos += 1;
        } else if y != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "classification label {y} is not 0 or 1"
            )));
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC/AP need both classes present".into(),
        ));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, ties kept together.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = check_binary(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks of positives, counted in half units to stay exact
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let twice_midrank = (i + 1 + j + 1) as u128;
        let pos_in_group = idx[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as u128;
        twice_rank_sum += twice_midrank * pos_in_group;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// Average precision: `Σ (R_t − R_{t−1}) P_t` over distinct score thresholds
/// taken from high to low.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, _) = check_binary(labels)?;
    let idx = descending(scores);
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let new_tp = idx[i..=j].iter().filter(|&&k| labels[k] == 1.0).count();
        tp += new_tp;
        seen += j - i + 1;
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("RMSE of an empty set".into()));
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("MAE of an empty set".into()));
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// AUC and AP for classification, RMSE and MAE for regression. Scores are
/// probabilities (classification) or predicted values (regression).
pub fn metrics(scores: &[f64], labels: &[f64], task: Task) -> Result<MetricSuite> {
    Ok(match task {
        Task::Classification => MetricSuite {
            auc: Some(auc(scores, labels)?),
            ap: Some(average_precision(scores, labels)?),
            ..Default::default()
        },
        Task::Regression => MetricSuite {
            rmse: Some(rmse(scores, labels)?),
            mae: Some(mae(scores, labels)?),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(s: &[f64], y: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    /// Precision/recall swept one threshold at a time over the distinct scores.
    fn direct_ap(s: &[f64], y: &[f64]) -> f64 {
        let mut thresholds: Vec<f64> = s.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for t in thresholds {
            let sel: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
            let tp = sel.iter().filter(|&&i| y[i] == 1.0).count() as f64;
            let recall = tp / pos;
            ap += (recall - prev_recall) * (tp / sel.len() as f64);
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn separated_scores() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let y = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(auc(&s, &y).unwrap(), 1.0);
        assert_eq!(average_precision(&s, &y).unwrap(), 1.0);
    }

    #[test]
    fn hand_counted_auc() {
        assert_eq!(auc(&[0.2, 0.6, 0.8], &[1.0, 0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn ties_get_half_credit() {
        assert_eq!(auc(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn exact_regression() {
        let v = [1.0, -2.0, 3.5];
        assert_eq!(rmse(&v, &v).unwrap(), 0.0);
        assert_eq!(mae(&v, &v).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        let m = metrics(&v, &v, Task::Regression).unwrap();
        assert_eq!(m.headline(), Some(0.0));
        assert!(m.auc.is_none());
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[1.0, 1.0]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(auc(&[0.1, 0.2], &[1.0, 0.5]).is_err());
        assert!(auc(&[0.1], &[1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn auc_and_ap_match_direct_oracles(
            pairs in prop::collection::vec((0u8..12, prop::bool::ANY), 2..200)
        ) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 4.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
            prop_assume!(y.contains(&1.0) && y.contains(&0.0));
            prop_assert_eq!(auc(&s, &y).unwrap(), pairwise_auc(&s, &y));
            let ap = average_precision(&s, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            prop_assert_eq!(ap, direct_ap(&s, &y));
        }
    }
}
