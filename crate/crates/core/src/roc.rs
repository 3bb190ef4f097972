//! Detection probabilities, ROC sweeps and their summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(PD, PFA)` of a binary detector against the truth.
pub fn pd_pfa(detector: &[bool], truth: &[bool]) -> Result<(f64, f64)> {
    if detector.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "detector has {} entries, truth has {}",
            detector.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (&d, &t) in detector.iter().zip(truth) {
        pos += usize::from(t);
        tp += usize::from(d && t);
        fp += usize::from(d && !t);
    }
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("truth needs both foreground and background vertices".into()));
    }
    Ok((tp as f64 / pos as f64, fp as f64 / neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "points")]
pub enum Thresholds {
    /// Every distinct score; tied scores share one point.
    #[default]
    AllUnique,
    /// `m` evenly spaced thresholds between the smallest and largest score.
    Grid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Vertices with score `≥ threshold` are declared foreground.
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
    /// Binomial standard error of `pd`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ordered by decreasing threshold, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub auc_se: f64,
    pub trials: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Set when every score was equal.
    pub degenerate: bool,
}

fn count_positives(truth: &[bool]) -> Result<(usize, usize)> {
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("truth needs both foreground and background vertices".into()));
    }
    Ok((pos, neg))
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].pfa - w[0].pfa) * (w[1].pd + w[0].pd) / 2.0).sum()
}

fn sweep(scores: &[f64], truth: &[bool], thresholds: Thresholds) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidParameter(format!("{} scores for {} truth labels", scores.len(), truth.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidParameter(format!("score {s} is not a number")));
    }
    let (pos, neg) = count_positives(truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let point = |threshold: f64, tp: usize, fp: usize| {
        let pd = tp as f64 / pos as f64;
        RocPoint { threshold, pfa: fp as f64 / neg as f64, pd, se: (pd * (1.0 - pd) / pos as f64).sqrt() }
    };

    let cuts: Vec<f64> = match thresholds {
        Thresholds::AllUnique => {
            let mut cuts: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
            cuts.dedup();
            cuts
        }
        Thresholds::Grid(m) => {
            let hi = scores[order[0]];
            let lo = scores[*order.last().unwrap()];
            let m = m.max(2);
            (0..m).map(|k| hi - (hi - lo) * k as f64 / (m - 1) as f64).collect()
        }
    };

    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp, mut next) = (0, 0, 0);
    for &cut in &cuts {
        while next < order.len() && scores[order[next]] >= cut {
            if truth[order[next]] {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        points.push(point(cut, tp, fp));
    }
    if tp < pos || fp < neg {
        points.push(point(f64::NEG_INFINITY, pos, neg));
    }
    points.dedup_by(|b, a| a.pfa == b.pfa && a.pd == b.pd);
    let degenerate = scores.iter().all(|&s| s == scores[0]);
    if degenerate {
        log::warn!("constant scores give a two-point ROC");
    }
    let auc = trapezoid(&points);
    let auc_se = hanley_mcneil(auc, pos, neg);
    Ok(RocCurve { points, auc, auc_se, trials: 1, positives: pos, negatives: neg, degenerate })
}

/// Standard error of an AUC estimate from its value and class sizes.
fn hanley_mcneil(auc: f64, pos: usize, neg: usize) -> f64 {
    let (p, n) = (pos as f64, neg as f64);
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let var = (auc * (1.0 - auc) + (p - 1.0) * (q1 - auc * auc) + (n - 1.0) * (q2 - auc * auc)) / (p * n);
    var.max(0.0).sqrt()
}

pub fn roc(scores: &[f64], truth: &[bool], thresholds: Thresholds) -> Result<RocCurve> {
    sweep(scores, truth, thresholds)
}

/// One trial's scores and truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScores {
    pub scores: Vec<f64>,
    pub truth: Vec<bool>,
}

fn pool(trials: &[&TrialScores]) -> (Vec<f64>, Vec<bool>) {
    let scores = trials.iter().flat_map(|t| t.scores.iter().copied()).collect();
    let truth = trials.iter().flat_map(|t| t.truth.iter().copied()).collect();
    (scores, truth)
}

/// ROC of all trials' (score, truth) pairs pooled together. The AUC
/// standard error is the delete-one-trial jackknife.
pub fn pooled_roc(trials: &[TrialScores], thresholds: Thresholds) -> Result<RocCurve> {
    if trials.is_empty() {
        return Err(Error::InvalidParameter("no trials to pool".into()));
    }
    let all: Vec<&TrialScores> = trials.iter().collect();
    let (scores, truth) = pool(&all);
    let mut curve = sweep(&scores, &truth, thresholds)?;
    curve.trials = trials.len();
    if trials.len() > 1 {
        let t = trials.len() as f64;
        let mut loo = Vec::with_capacity(trials.len());
        for skip in 0..trials.len() {
            let rest: Vec<&TrialScores> =
                all.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, t)| *t).collect();
            let (s, y) = pool(&rest);
            match sweep(&s, &y, thresholds) {
                Ok(c) => loo.push(c.auc),
                Err(_) => return Ok(curve),
            }
        }
        let mean = loo.iter().sum::<f64>() / t;
        let var = (t - 1.0) / t * loo.iter().map(|a| (a - mean).powi(2)).sum::<f64>();
        curve.auc_se = var.sqrt();
    }
    Ok(curve)
}

/// Per-trial ROCs averaged vertically at `grid` false-alarm rates.
pub fn vertical_average(trials: &[TrialScores], grid: &[f64]) -> Result<RocCurve> {
    if trials.is_empty() {
        return Err(Error::InvalidParameter("no trials to average".into()));
    }
    let curves = trials
        .iter()
        .map(|t| sweep(&t.scores, &t.truth, Thresholds::AllUnique))
        .collect::<Result<Vec<_>>>()?;
    let mut xs: Vec<f64> = grid.iter().copied().filter(|x| (0.0..=1.0).contains(x)).collect();
    xs.push(0.0);
    xs.push(1.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let t = curves.len() as f64;
    let mut points: Vec<RocPoint> = xs
        .iter()
        .map(|&x| {
            let pds: Vec<f64> = curves.iter().map(|c| pd_at(c, x)).collect();
            let mean = pds.iter().sum::<f64>() / t;
            let var = if curves.len() > 1 { pds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (t - 1.0) } else { 0.0 };
            RocPoint { threshold: f64::NAN, pfa: x, pd: mean, se: (var / t).sqrt() }
        })
        .collect();
    points[0].pd = 0.0;
    let aucs: Vec<f64> = curves.iter().map(|c| c.auc).collect();
    let mean_auc = aucs.iter().sum::<f64>() / t;
    let auc_se = if curves.len() > 1 {
        (aucs.iter().map(|a| (a - mean_auc).powi(2)).sum::<f64>() / (t - 1.0) / t).sqrt()
    } else {
        curves[0].auc_se
    };
    Ok(RocCurve {
        auc: trapezoid(&points),
        auc_se,
        trials: curves.len(),
        positives: curves.iter().map(|c| c.positives).sum(),
        negatives: curves.iter().map(|c| c.negatives).sum(),
        degenerate: curves.iter().all(|c| c.degenerate),
        points,
    })
}

/// Segment of the curve containing false-alarm rate `pfa`; on a vertical
/// run the highest point is used.
fn locate(curve: &RocCurve, pfa: f64) -> (usize, f64) {
    let pts = &curve.points;
    let mut k = 0;
    while k + 1 < pts.len() && pts[k + 1].pfa <= pfa {
        k += 1;
    }
    if k + 1 >= pts.len() || pts[k].pfa == pfa {
        return (k, 0.0);
    }
    let (a, b) = (pts[k], pts[k + 1]);
    (k, (pfa - a.pfa) / (b.pfa - a.pfa))
}

/// PD at a false-alarm rate, interpolating linearly between sweep points.
pub fn pd_at(curve: &RocCurve, pfa: f64) -> f64 {
    let (k, w) = locate(curve, pfa);
    let pts = &curve.points;
    if w == 0.0 {
        pts[k].pd
    } else {
        pts[k].pd + w * (pts[k + 1].pd - pts[k].pd)
    }
}

/// Standard error of [`pd_at`].
pub fn se_at(curve: &RocCurve, pfa: f64) -> f64 {
    let (k, w) = locate(curve, pfa);
    let pts = &curve.points;
    if w == 0.0 {
        pts[k].se
    } else {
        (1.0 - w) * pts[k].se + w * pts[k + 1].se
    }
}

/// Largest vertical gap between the curve and its upper convex hull. Inside
/// a vertical run the gap is measured at the bottom, the limit from the
/// left; a run at the smallest PFA counts only at its top.
pub fn convexity_defect(curve: &RocCurve) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.pfa, p.pd)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let Some(&(x0, _)) = pts.first() else { return 0.0 };
    let first_run = pts.iter().take_while(|p| p.0 == x0).count();
    pts.drain(..first_run - 1);
    if pts.len() < 3 {
        return 0.0;
    }
    // Monotone-chain upper hull.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // Hull vertices are curve points, so the gap peaks at a point.
    let mut gap = 0.0f64;
    let mut h = 0;
    for &(x, y) in &pts {
        while h + 1 < hull.len() && hull[h + 1].0 <= x {
            h += 1;
        }
        let top = if hull[h].0 == x || h + 1 == hull.len() {
            hull[h].1
        } else {
            let (a, b) = (hull[h], hull[h + 1]);
            a.1 + (x - a.0) / (b.0 - a.0) * (b.1 - a.1)
        };
        gap = gap.max(top - y);
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_pfa_examples() {
        let truth = [true, true, false, false];
        assert_eq!(pd_pfa(&truth, &truth).unwrap(), (1.0, 0.0));
        assert_eq!(pd_pfa(&[true; 4], &truth).unwrap(), (1.0, 1.0));
        assert_eq!(pd_pfa(&[true, false, true, false], &truth).unwrap(), (0.5, 0.5));
        assert!(pd_pfa(&[true; 2], &[true; 2]).is_err());
    }

    #[test]
    fn perfect_scores_have_unit_auc() {
        let truth = [true, false, true, false, false];
        let scores: Vec<f64> = truth.iter().map(|&t| f64::from(u8::from(t))).collect();
        let c = roc(&scores, &truth, Thresholds::AllUnique).unwrap();
        assert_eq!(c.auc, 1.0);
        let xy: Vec<(f64, f64)> = c.points.iter().map(|p| (p.pfa, p.pd)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(convexity_defect(&c), 0.0);
    }

    #[test]
    fn ties_share_a_point() {
        let c = roc(&[0.5, 0.5, 0.5, 0.1], &[true, false, true, false], Thresholds::AllUnique).unwrap();
        let xy: Vec<(f64, f64)> = c.points.iter().map(|p| (p.pfa, p.pd)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)]);
        let flat = roc(&[0.2; 4], &[true, false, true, false], Thresholds::AllUnique).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.auc, 0.5);
    }

    #[test]
    fn defect_counts_run_bottoms_after_the_first() {
        // (0,0) (0,½) (½,½) (½,1) (1,1): the run at PFA ½ dips a half below
        // the hull, the run at PFA 0 does not count.
        let c = roc(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false], Thresholds::AllUnique).unwrap();
        assert_eq!(convexity_defect(&c), 0.5);
        let lifted = roc(&[4.0, 3.0, 2.0, 1.0], &[true, true, false, false], Thresholds::AllUnique).unwrap();
        assert_eq!(convexity_defect(&lifted), 0.0);
    }

    #[test]
    fn straight_line_has_no_defect() {
        let c = roc(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false], Thresholds::AllUnique).unwrap();
        assert!(convexity_defect(&c) > 0.0);
        let diag = RocCurve {
            points: (0..=4)
                .map(|k| {
                    let x = k as f64 / 4.0;
                    RocPoint { threshold: 0.0, pfa: x, pd: x, se: 0.0 }
                })
                .collect(),
            auc: 0.5,
            auc_se: 0.0,
            trials: 1,
            positives: 4,
            negatives: 4,
            degenerate: false,
        };
        assert!(convexity_defect(&diag).abs() < 1e-15);
    }

    #[test]
    fn interpolated_pd() {
        let c = roc(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false], Thresholds::AllUnique).unwrap();
        // Points: (0,0) (0,.5) (.5,.5) (.5,1) (1,1).
        assert_eq!(pd_at(&c, 0.0), 0.5);
        assert_eq!(pd_at(&c, 0.25), 0.5);
        assert_eq!(pd_at(&c, 0.5), 1.0);
        assert_eq!(pd_at(&c, 1.0), 1.0);
    }
}
