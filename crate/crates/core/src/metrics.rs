//! Segmentation and classification evaluation.

use crate::error::{Error, Result};

/// Intersection over union of two binary masks, counting foreground pixels.
///
/// Two empty masks score 1.0: an all-background prediction of an
/// all-background image is correct.
pub fn iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("iou of masks with {} and {} pixels", a.len(), b.len())));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn mean_iou(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::invalid("mean IoU of an empty list"));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// K×K counts; `counts[t][p]` is the number of items of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub labels: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { counts: vec![vec![0; k]; k], labels: (0..k).map(|c| format!("c{c}")).collect() }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        let k = self.classes();
        if truth >= k || pred >= k {
            return Err(Error::invalid(format!("label pair ({truth}, {pred}) outside [0, {k})")));
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Rows divided by their sums; rows with no items stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
            })
            .collect()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::shape(format!("{} true labels but {} predictions", truth.len(), pred.len())));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// trace / total; an empty matrix is an error.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("accuracy of an empty confusion matrix"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub ious: Vec<f64>,
    pub mean_iou: Option<f64>,
    pub accuracy: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
    pub items: usize,
}

impl MetricReport {
    pub fn segmentation(ious: Vec<f64>) -> Result<Self> {
        let mean = mean_iou(&ious)?;
        Ok(Self { items: ious.len(), mean_iou: Some(mean), ious, ..Self::default() })
    }

    pub fn classification(cm: ConfusionMatrix) -> Result<Self> {
        Ok(Self { items: cm.total() as usize, accuracy: Some(accuracy(&cm)?), confusion: Some(cm), ..Self::default() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let full = [true; 4];
        let left = [true, false, true, false];
        assert_eq!(iou(&full, &left).unwrap(), 0.5);
        assert_eq!(iou(&left, &left).unwrap(), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(iou(&[false; 3], &[false; 3]).unwrap(), 1.0);
        assert!(iou(&[true], &[true, true]).is_err());
    }

    #[test]
    fn mean_cases() {
        assert_eq!(mean_iou(&[0.5, 1.0]).unwrap(), 0.75);
        assert_eq!(mean_iou(&[0.3]).unwrap(), 0.3);
        assert!(mean_iou(&[]).is_err());
    }

    #[test]
    fn degenerate_predictor() {
        let truth: Vec<usize> = (0..8).map(|i| i % 4).collect();
        let cm = confusion(&truth, &[0; 8], 4).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.25);
        assert!(cm.counts.iter().all(|r| r[0] == 2 && r[1..].iter().all(|&c| c == 0)));
        let perfect = confusion(&truth, &truth, 4).unwrap();
        assert_eq!(accuracy(&perfect).unwrap(), 1.0);
        assert_eq!(perfect.row_normalized()[2], vec![0.0, 0.0, 1.0, 0.0]);
        assert!(confusion(&[4], &[0], 4).is_err());
    }
}
