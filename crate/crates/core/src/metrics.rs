//! Disaggregation and classification metrics plus improvement statistics.
//!
//! All scoring is expected to happen on de-normalized watt values; callers
//! multiply by the recorded normalization constant before invoking these.

use crate::error::{Error, Result};

/// Mean absolute error over the full horizon.
pub fn mae(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            what: "mae inputs",
            left: truth.len(),
            right: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::LengthMismatch {
            what: "mae inputs (empty)",
            left: 0,
            right: 0,
        });
    }
    let sum: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(y, yh)| (y - yh).abs())
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Signal aggregate error: absolute error of energy summed over disjoint
/// sub-horizons of length `m`, normalized per sample. The trailing partial
/// sub-horizon is dropped.
pub fn sae(truth: &[f64], estimate: &[f64], m: usize) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            what: "sae inputs",
            left: truth.len(),
            right: estimate.len(),
        });
    }
    if m == 0 {
        return Err(Error::NonPositive {
            what: "sae sub-horizon length",
            value: 0.0,
        });
    }
    let s = truth.len() / m;
    if s == 0 {
        return Err(Error::LengthMismatch {
            what: "sae horizon shorter than sub-horizon",
            left: truth.len(),
            right: m,
        });
    }
    let mut acc = 0.0;
    for tau in 0..s {
        let lo = tau * m;
        let hi = lo + m;
        let sum_y: f64 = truth[lo..hi].iter().sum();
        let sum_yh: f64 = estimate[lo..hi].iter().sum();
        acc += (sum_y - sum_yh).abs() / m as f64;
    }
    Ok(acc / s as f64)
}

/// F1 score of binary on/off sequences. By convention 0/0 (no positives in
/// either sequence) scores 0.
pub fn f1(truth: &[bool], prediction: &[bool]) -> Result<f64> {
    if truth.len() != prediction.len() {
        return Err(Error::LengthMismatch {
            what: "f1 inputs",
            left: truth.len(),
            right: prediction.len(),
        });
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fne = 0u64;
    for (&t, &p) in truth.iter().zip(prediction) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fne += 1,
            (false, false) => {}
        }
    }
    if tp == 0 && (fp > 0 || fne > 0) {
        return Ok(0.0);
    }
    if tp == 0 {
        // No positives anywhere: precision and recall are both undefined.
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fne) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Binarize a probability sequence at the given threshold (strictly greater).
pub fn binarize(probs: &[f64], threshold: f64) -> Vec<bool> {
    probs.iter().map(|&p| p > threshold).collect()
}

/// Relative improvement of an error metric: (baseline - new) / baseline, in
/// percent. Positive means the new score is better (smaller error).
pub fn improvement(baseline: f64, new: f64) -> Result<f64> {
    if baseline <= 0.0 {
        return Err(Error::NonPositive {
            what: "improvement baseline",
            value: baseline,
        });
    }
    Ok((baseline - new) / baseline * 100.0)
}

/// Relative gain of a score metric (higher is better): (new - baseline) /
/// baseline, in percent.
pub fn gain(baseline: f64, new: f64) -> Result<f64> {
    if baseline <= 0.0 {
        return Err(Error::NonPositive {
            what: "gain baseline",
            value: baseline,
        });
    }
    Ok((new - baseline) / baseline * 100.0)
}

/// Per-appliance scores for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceScores {
    pub appliance_id: String,
    pub mae: f64,
    pub sae: f64,
    pub f1: f64,
}

/// Evaluation report: per-appliance MAE/SAE/F1, their averages, and optional
/// improvement percentages against a named baseline report.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub appliances: Vec<ApplianceScores>,
    pub ave_mae: f64,
    pub ave_sae: f64,
    pub ave_f1: f64,
    pub baseline_name: Option<String>,
    /// (mae improvement, sae improvement, f1 gain), in percent.
    pub improvements: Option<(f64, f64, f64)>,
}

impl EvalReport {
    /// Assemble a report from per-appliance scores, optionally comparing the
    /// averages to a baseline report.
    pub fn new(
        appliances: Vec<ApplianceScores>,
        baseline: Option<(&str, &EvalReport)>,
    ) -> Result<Self> {
        let n = appliances.len().max(1) as f64;
        let ave_mae = appliances.iter().map(|a| a.mae).sum::<f64>() / n;
        let ave_sae = appliances.iter().map(|a| a.sae).sum::<f64>() / n;
        let ave_f1 = appliances.iter().map(|a| a.f1).sum::<f64>() / n;
        let (baseline_name, improvements) = match baseline {
            Some((name, base)) => {
                let imp = (
                    improvement(base.ave_mae, ave_mae)?,
                    improvement(base.ave_sae, ave_sae)?,
                    gain(base.ave_f1, ave_f1)?,
                );
                (Some(name.to_string()), Some(imp))
            }
            None => (None, None),
        };
        Ok(Self {
            appliances,
            ave_mae,
            ave_sae,
            ave_f1,
            baseline_name,
            improvements,
        })
    }

    /// CSV rendering: one row per appliance, then an `Ave` row and an
    /// optional `Imp` row. Numeric fields use fixed 6-decimal formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("appliance,mae,sae,f1\n");
        for a in &self.appliances {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                a.appliance_id, a.mae, a.sae, a.f1
            ));
        }
        out.push_str(&format!(
            "Ave,{:.6},{:.6},{:.6}\n",
            self.ave_mae, self.ave_sae, self.ave_f1
        ));
        if let Some((im, is, ig)) = self.improvements {
            out.push_str(&format!("Imp,{im:.6},{is:.6},{ig:.6}\n"));
        }
        out
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<14} {:>10} {:>10} {:>8}", "appliance", "MAE", "SAE", "F1")?;
        for a in &self.appliances {
            writeln!(
                f,
                "{:<14} {:>10.2} {:>10.2} {:>8.3}",
                a.appliance_id, a.mae, a.sae, a.f1
            )?;
        }
        writeln!(
            f,
            "{:<14} {:>10.2} {:>10.2} {:>8.3}",
            "Ave", self.ave_mae, self.ave_sae, self.ave_f1
        )?;
        if let Some((im, is, ig)) = self.improvements {
            let name = self.baseline_name.as_deref().unwrap_or("baseline");
            writeln!(
                f,
                "Imp vs {name}: MAE {im:.2}%  SAE {is:.2}%  F1 {ig:.2}%"
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mae_identity_is_zero() {
        let y = vec![3.0, 5.0, 7.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn mae_closed_form() {
        let y = vec![1.0, 2.0, 3.0];
        let yh = vec![1.0, 2.0, 4.0];
        let got = mae(&y, &yh).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mae_rejects_length_mismatch() {
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sae_compensating_errors_cancel() {
        let y = vec![1.0, 1.0, 2.0, 2.0];
        let yh = vec![2.0, 0.0, 1.0, 3.0];
        assert_eq!(sae(&y, &yh, 2).unwrap(), 0.0);
    }

    #[test]
    fn sae_identity_is_zero() {
        let y = vec![4.0; 10];
        assert_eq!(sae(&y, &y, 5).unwrap(), 0.0);
    }

    #[test]
    fn sae_rejects_short_horizon() {
        assert!(sae(&[1.0, 2.0], &[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn f1_closed_form() {
        // TP=2, FP=1, FN=1 -> P=R=2/3 -> F1=2/3.
        let truth = vec![true, true, true, false];
        let pred = vec![true, true, false, true];
        let got = f1(&truth, &pred).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_perfect_is_one() {
        let truth = vec![true, false, true];
        assert_eq!(f1(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn f1_all_negative_is_zero_by_convention() {
        let truth = vec![false, false];
        assert_eq!(f1(&truth, &truth).unwrap(), 0.0);
    }

    #[test]
    fn f1_invariant_under_sample_reordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth: Vec<bool> = (0..64).map(|_| rng.gen_bool(0.3)).collect();
        let pred: Vec<bool> = (0..64).map(|_| rng.gen_bool(0.4)).collect();
        let base = f1(&truth, &pred).unwrap();
        // Reverse both sequences: counts (TP, FP, FN) are preserved.
        let truth_r: Vec<bool> = truth.iter().rev().copied().collect();
        let pred_r: Vec<bool> = pred.iter().rev().copied().collect();
        assert_eq!(base, f1(&truth_r, &pred_r).unwrap());
    }

    #[test]
    fn improvement_matches_reported_value() {
        let got = improvement(30.17, 14.41).unwrap();
        assert!((got - 52.23).abs() < 0.1, "got {got}");
    }

    #[test]
    fn improvement_edges() {
        assert_eq!(improvement(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(improvement(5.0, 0.0).unwrap(), 100.0);
        assert!(improvement(0.0, 1.0).is_err());
    }

    #[test]
    fn mae_and_sae_match_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = rng.gen_range(1..6);
            let m = rng.gen_range(1..8);
            let h = s * m + rng.gen_range(0..m); // possibly a partial tail
            let y: Vec<f64> = (0..h).map(|_| rng.gen_range(0.0..100.0)).collect();
            let yh: Vec<f64> = (0..h).map(|_| rng.gen_range(0.0..100.0)).collect();

            let mut mae_acc = 0.0;
            for t in 0..h {
                mae_acc += (y[t] - yh[t]).abs();
            }
            mae_acc /= h as f64;
            assert!((mae(&y, &yh).unwrap() - mae_acc).abs() < 1e-12);

            let mut sae_acc = 0.0;
            for tau in 0..s {
                let mut a = 0.0;
                let mut b = 0.0;
                for t in 0..m {
                    a += y[tau * m + t];
                    b += yh[tau * m + t];
                }
                sae_acc += (a - b).abs() / m as f64;
            }
            sae_acc /= s as f64;
            assert!((sae(&y, &yh, m).unwrap() - sae_acc).abs() < 1e-12);
        }
    }

    #[test]
    fn sae_never_exceeds_mae_on_full_subhorizons() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let s = rng.gen_range(1..6);
            let m = rng.gen_range(1..8);
            let h = s * m; // exact multiple so both metrics see the same span
            let y: Vec<f64> = (0..h).map(|_| rng.gen_range(0.0..100.0)).collect();
            let yh: Vec<f64> = (0..h).map(|_| rng.gen_range(0.0..100.0)).collect();
            let a = mae(&y, &yh).unwrap();
            let b = sae(&y, &yh, m).unwrap();
            assert!(b <= a + 1e-12, "sae {b} > mae {a}");
        }
    }

    #[test]
    fn report_csv_layout() {
        let report = EvalReport::new(
            vec![
                ApplianceScores {
                    appliance_id: "fridge".into(),
                    mae: 10.0,
                    sae: 8.0,
                    f1: 0.9,
                },
                ApplianceScores {
                    appliance_id: "microwave".into(),
                    mae: 20.0,
                    sae: 12.0,
                    f1: 0.8,
                },
            ],
            None,
        )
        .unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("appliance,mae,sae,f1\n"));
        assert!(csv.contains("fridge,10.000000,8.000000,0.900000"));
        assert!(csv.contains("Ave,15.000000,10.000000,0.850000"));
    }
}
