//! Contrastive loss over one positive and a pool of negatives.

use crate::error::{Error, Result};

fn check_temperature(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `ln Σ exp(z) − z[0]` with max subtraction, plus the softmax of `z`.
pub(crate) fn nce_from_logits(z: &[f64]) -> (f64, Vec<f64>) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - z[0];
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

/// Negative log-probability of the positive among positive, easy and hard
/// similarities scaled by `1/tau`.
pub fn info_nce_loss(sim_pos: f64, sims_easy: &[f64], sims_hard: &[f64], tau: f64) -> Result<f64> {
    check_temperature(tau)?;
    if sims_easy.is_empty() && sims_hard.is_empty() {
        return Err(Error::DegenerateLoss("no negatives".into()));
    }
    let z: Vec<f64> = std::iter::once(sim_pos)
        .chain(sims_easy.iter().copied())
        .chain(sims_hard.iter().copied())
        .map(|s| s / tau)
        .collect();
    Ok(nce_from_logits(&z).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert!((info_nce_loss(0.0, &[0.0], &[0.0], 1.0).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!((info_nce_loss(0.3, &[0.3; 3], &[0.3; 2], 0.05).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert!((info_nce_loss(1.0, &[0.0], &[0.5], 1.0).unwrap() - 0.680_269_670_6).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(info_nce_loss(0.0, &[0.0], &[], 0.0).is_err());
        assert!(info_nce_loss(0.0, &[0.0], &[], -1.0).is_err());
        assert!(matches!(info_nce_loss(0.0, &[], &[], 1.0), Err(Error::DegenerateLoss(_))));
    }

    #[test]
    fn sharpening_limit() {
        let coarse = info_nce_loss(0.9, &[0.1], &[0.5], 1.0).unwrap();
        let sharp = info_nce_loss(0.9, &[0.1], &[0.5], 1e-3).unwrap();
        assert!(sharp < coarse && sharp < 1e-100);
    }

    proptest! {
        #[test]
        fn all_equal_identity(s in -5.0f64..5.0, n in 0usize..12, m in 0usize..12, tau in 0.01f64..10.0) {
            prop_assume!(n + m > 0);
            let l = info_nce_loss(s, &vec![s; n], &vec![s; m], tau).unwrap();
            prop_assert!((l - ((1 + n + m) as f64).ln()).abs() < 1e-12);
        }

        #[test]
        fn monotone_and_symmetric(pos in -1.0f64..1.0, easy in prop::collection::vec(-1.0f64..1.0, 1..5), hard in prop::collection::vec(-1.0f64..1.0, 1..5), tau in 0.05f64..2.0) {
            let base = info_nce_loss(pos, &easy, &hard, tau).unwrap();
            prop_assert!(base > 0.0);
            prop_assert!(info_nce_loss(pos + 0.1, &easy, &hard, tau).unwrap() < base);
            let mut bumped = hard.clone();
            bumped[0] += 0.1;
            prop_assert!(info_nce_loss(pos, &easy, &bumped, tau).unwrap() > base);
            let mut all: Vec<f64> = easy.iter().chain(&hard).copied().collect();
            all.reverse();
            let moved = info_nce_loss(pos, &all[..1], &all[1..], tau).unwrap();
            prop_assert!((moved - base).abs() < 1e-9 * base.max(1.0));
        }

        #[test]
        fn stable_for_extreme_inputs(pos in -1e4f64..1e4, neg in -1e4f64..1e4, tau in 0.01f64..1.0) {
            let l = info_nce_loss(pos / tau, &[neg / tau], &[neg / tau], tau).unwrap();
            prop_assert!(l.is_finite());
        }
    }
}
