//! Frame-level scoring: mean absolute error and accuracy within 10° and 15°
//! over voice-active frames, pooled across utterances.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no active frames to score")]
    NoActiveFrames,
    #[error("length mismatch: {pred} predictions, {gt} labels, {mask} mask entries")]
    Length { pred: usize, gt: usize, mask: usize },
}

/// Scores of one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub mae_deg: f64,
    pub acc10: f64,
    pub acc15: f64,
    pub n_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae_deg: f64,
    pub acc10: f64,
    pub acc15: f64,
    pub n_frames: usize,
    pub per_utterance: Vec<UtteranceScore>,
}

/// Accumulates absolute errors; the tolerances are inclusive.
#[derive(Clone, Debug, Default)]
struct Tally {
    sum: f64,
    within10: usize,
    within15: usize,
    n: usize,
}

impl Tally {
    fn push(&mut self, err: f64) {
        self.sum += err;
        self.within10 += usize::from(err <= 10.0);
        self.within15 += usize::from(err <= 15.0);
        self.n += 1;
    }

    fn finish(&self) -> Option<(f64, f64, f64, usize)> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        Some((
            self.sum / n,
            100.0 * self.within10 as f64 / n,
            100.0 * self.within15 as f64 / n,
            self.n,
        ))
    }
}

/// `|pred - gt|` for every masked-in frame, in frame order.
pub fn frame_errors(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<Vec<f64>, MetricsError> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(MetricsError::Length {
            pred: pred.len(),
            gt: gt.len(),
            mask: mask.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(gt)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, g), _)| (p - g).abs())
        .collect())
}

/// Scores a single aligned prediction/label pair.
pub fn score(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<EvalReport, MetricsError> {
    score_utterances(&[Scored {
        id: String::new(),
        pred: pred.to_vec(),
        gt: gt.to_vec(),
        mask: mask.to_vec(),
    }])
    .map(|mut r| {
        r.per_utterance.clear();
        r
    })
}

/// Aligned per-frame estimates and labels of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub id: String,
    pub pred: Vec<f64>,
    pub gt: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Pools every active frame of every utterance into one report; utterances
/// without active frames are left out of the breakdown.
pub fn score_utterances(items: &[Scored]) -> Result<EvalReport, MetricsError> {
    let mut total = Tally::default();
    let mut per_utterance = Vec::new();
    for it in items {
        let mut t = Tally::default();
        for e in frame_errors(&it.pred, &it.gt, &it.mask)? {
            t.push(e);
            total.push(e);
        }
        if let Some((mae_deg, acc10, acc15, n_frames)) = t.finish() {
            per_utterance.push(UtteranceScore {
                id: it.id.clone(),
                mae_deg,
                acc10,
                acc15,
                n_frames,
            });
        }
    }
    let (mae_deg, acc10, acc15, n_frames) = total.finish().ok_or(MetricsError::NoActiveFrames)?;
    Ok(EvalReport {
        mae_deg,
        acc10,
        acc15,
        n_frames,
        per_utterance,
    })
}

/// Labels and activity at the centre STFT frame of each pooled window,
/// `⌊len / factor⌋` entries.
pub fn pooled_labels(gt: &[f64], active: &[bool], factor: usize) -> (Vec<f64>, Vec<bool>) {
    let n = gt.len().min(active.len()) / factor.max(1);
    let centre = |j: usize| j * factor + factor / 2;
    (
        (0..n).map(|j| gt[centre(j)]).collect(),
        (0..n).map(|j| active[centre(j)]).collect(),
    )
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>9} {:>8} {:>8} {:>8}\n",
            "utterance", "MAE(deg)", "ACC10", "ACC15", "frames"
        );
        for u in &self.per_utterance {
            s += &format!(
                "{:<24} {:>9.2} {:>8.1} {:>8.1} {:>8}\n",
                u.id, u.mae_deg, u.acc10, u.acc15, u.n_frames
            );
        }
        s += &format!(
            "{:<24} {:>9.2} {:>8.1} {:>8.1} {:>8}\n",
            "overall", self.mae_deg, self.acc10, self.acc15, self.n_frames
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let r = score(&[100.0, 80.0, 60.0], &[90.0; 3], &[true; 3]).unwrap();
        assert_eq!(r.mae_deg, 50.0 / 3.0);
        assert_eq!(r.acc10, 200.0 / 3.0);
        assert_eq!(r.acc15, 200.0 / 3.0);
        let r = score(&[100.0, 80.0, 60.0], &[90.0; 3], &[true, true, false]).unwrap();
        assert_eq!((r.mae_deg, r.acc10, r.acc15), (10.0, 100.0, 100.0));
        assert_eq!(score(&[1.0], &[1.0], &[false]), Err(MetricsError::NoActiveFrames));
        assert!(matches!(score(&[1.0], &[], &[]), Err(MetricsError::Length { .. })));
    }

    #[test]
    fn centre_frames() {
        let gt: Vec<f64> = (0..10).map(f64::from).collect();
        let (g, m) = pooled_labels(&gt, &[true; 10], 4);
        assert_eq!(g, vec![2.0, 6.0]);
        assert_eq!(m.len(), 2);
        assert_eq!(pooled_labels(&gt, &[true; 10], 1).0, gt);
    }
}
