//! Classification accuracy and point-wise IoU metrics.

use crate::data::Category;
use crate::error::{Error, Result};

/// Evaluation summary. Fields that do not apply to a task are `NaN`-free
/// zeros or empty lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// Correct / total (samples for classification, points for segmentation).
    pub overall_accuracy: f64,
    /// Unweighted mean of per-class accuracies over classes present in the
    /// ground truth.
    pub mean_class_accuracy: f64,
    /// Part segmentation: per-category mean shape IoU. Semantic
    /// segmentation: per-class IoU.
    pub per_category_iou: Vec<(String, f64)>,
    /// Part segmentation: mean over all shapes. Semantic segmentation: mean
    /// over classes present in ground truth or prediction.
    pub mean_iou: f64,
    /// Part segmentation: unweighted mean of the per-category values.
    pub category_mean_iou: f64,
    pub count: usize,
}

/// Accuracy of `pred` against `gt` over `num_classes` classes.
///
/// Classes without any ground-truth sample are left out of the class mean
/// and reported with a warning.
pub fn accuracy_metrics(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<Metrics> {
    if gt.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    if pred.len() != gt.len() {
        return Err(Error::Contract(format!("{} predictions for {} labels", pred.len(), gt.len())));
    }
    let k = num_classes.max(gt.iter().max().map_or(0, |m| m + 1));
    let mut total = vec![0usize; k];
    let mut hit = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(gt) {
        total[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    let correct: usize = hit.iter().sum();
    let present: Vec<usize> = (0..k).filter(|&c| total[c] > 0).collect();
    let absent = k - present.len();
    if absent > 0 {
        log::warn!("{absent} of {k} classes have no samples and are excluded from the class mean");
    }
    let mean_class = present
        .iter()
        .map(|&c| hit[c] as f64 / total[c] as f64)
        .sum::<f64>()
        / present.len() as f64;
    Ok(Metrics {
        overall_accuracy: correct as f64 / gt.len() as f64,
        mean_class_accuracy: mean_class,
        count: gt.len(),
        ..Metrics::default()
    })
}

/// Mean IoU over `parts` for one shape; a part absent from both the
/// prediction and the ground truth scores 1.
pub fn shape_iou(pred: &[usize], gt: &[usize], parts: &[usize]) -> f64 {
    if parts.is_empty() {
        return 1.0;
    }
    let mut sum = 0.0;
    for &part in parts {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&p, &t) in pred.iter().zip(gt) {
            let (a, b) = (p == part, t == part);
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        sum += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    sum / parts.len() as f64
}

/// One segmented shape: its category index, predicted and true point labels.
pub struct ShapePrediction<'a> {
    pub category: usize,
    pub pred: &'a [usize],
    pub gt: &'a [usize],
}

/// Part-segmentation metrics: shape IoU per shape, averaged per category
/// and over all shapes.
pub fn part_iou_metrics(
    shapes: &[ShapePrediction<'_>],
    categories: &[Category],
    num_parts: usize,
) -> Result<Metrics> {
    if shapes.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let mut per_cat = vec![(0.0, 0usize); categories.len()];
    let mut total = 0.0;
    for s in shapes {
        let cat = categories.get(s.category).ok_or_else(|| {
            Error::Data(format!("category {} not declared by the dataset", s.category))
        })?;
        let iou = shape_iou(s.pred, s.gt, &cat.parts);
        per_cat[s.category].0 += iou;
        per_cat[s.category].1 += 1;
        total += iou;
    }
    let per_category_iou: Vec<(String, f64)> = categories
        .iter()
        .zip(&per_cat)
        .filter(|(_, (_, n))| *n > 0)
        .map(|(c, (s, n))| (c.name.clone(), s / *n as f64))
        .collect();
    let category_mean_iou =
        per_category_iou.iter().map(|(_, v)| v).sum::<f64>() / per_category_iou.len() as f64;
    let pred: Vec<usize> = shapes.iter().flat_map(|s| s.pred.iter().copied()).collect();
    let gt: Vec<usize> = shapes.iter().flat_map(|s| s.gt.iter().copied()).collect();
    let acc = accuracy_metrics(&pred, &gt, num_parts)?;
    Ok(Metrics {
        per_category_iou,
        mean_iou: total / shapes.len() as f64,
        category_mean_iou,
        count: shapes.len(),
        ..acc
    })
}

/// Semantic-segmentation metrics: per-class IoU over all points.
pub fn semantic_iou_metrics(pred: &[usize], gt: &[usize], class_names: &[String]) -> Result<Metrics> {
    let acc = accuracy_metrics(pred, gt, class_names.len())?;
    let k = class_names.len().max(gt.iter().chain(pred).max().map_or(0, |m| m + 1));
    let mut inter = vec![0usize; k];
    let mut union = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(gt) {
        if p == t {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[t] += 1;
        }
    }
    let per: Vec<(String, f64)> = (0..k)
        .filter(|&c| union[c] > 0)
        .map(|c| {
            let name = class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}"));
            (name, inter[c] as f64 / union[c] as f64)
        })
        .collect();
    let mean = per.iter().map(|(_, v)| v).sum::<f64>() / per.len() as f64;
    Ok(Metrics {
        per_category_iou: per,
        mean_iou: mean,
        category_mean_iou: mean,
        ..acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let m = accuracy_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((m.overall_accuracy, m.mean_class_accuracy), (1.0, 1.0));
    }

    #[test]
    fn imbalanced_hand_case() {
        let gt: Vec<usize> = std::iter::repeat_n(0, 10).chain(std::iter::repeat_n(1, 90)).collect();
        let pred = vec![0; 100];
        let m = accuracy_metrics(&pred, &gt, 2).unwrap();
        assert!((m.overall_accuracy - 0.10).abs() < 1e-15);
        assert!((m.mean_class_accuracy - 0.50).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_excluded_and_empty_is_error() {
        let m = accuracy_metrics(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(m.mean_class_accuracy, 1.0);
        assert!(matches!(accuracy_metrics(&[], &[], 2), Err(Error::Data(_))));
    }

    #[test]
    fn iou_conventions() {
        // gt A = {p1, p2}, pred A = {p1, p3} (A = 0, other = 9).
        let gt = [0, 0, 9];
        let pred = [0, 9, 0];
        assert!((shape_iou(&pred, &gt, &[0]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(shape_iou(&[1, 1], &[1, 1], &[0, 1]), 1.0);
        let cats = vec![Category {
            name: "mug".into(),
            parts: vec![0, 1],
        }];
        let shapes = [ShapePrediction {
            category: 0,
            pred: &[0, 1, 1],
            gt: &[0, 1, 1],
        }];
        let m = part_iou_metrics(&shapes, &cats, 2).unwrap();
        assert_eq!(m.mean_iou, 1.0);
    }

    #[test]
    fn semantic_iou_hand_case() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let m = semantic_iou_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], &names).unwrap();
        // class a: I=1, U=2; class b: I=2, U=3.
        assert!((m.mean_iou - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }
}
