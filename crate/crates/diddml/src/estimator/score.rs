//! The doubly robust plug-in score and propensity trimming.

use crate::data::{cell_index, RepeatedCrossSection, N_CELLS, TREATED_POST};
use crate::error::{Error, Result};
use crate::estimator::nuisance::NuisancePredictions;

/// Doubly robust score ψ for one observation.
///
/// Combines four-arm inverse-probability-weighted residuals with the
/// treated-post-weighted regression contrast:
///
/// ```text
/// ψ = w(d,t,x)·(y − μ̂_d(t,x))
///   + (d·t/Π̂)·[ μ̂₁(1,x) − μ̂₁(0,x) − (μ̂₀(1,x) − μ̂₀(0,x)) ]
/// ```
///
/// with weights `w(1,1) = 1/Π̂`, `w(1,0) = −ρ̂₁₁/(ρ̂₁₀·Π̂)`,
/// `w(0,1) = −ρ̂₁₁/(ρ̂₀₁·Π̂)` and `w(0,0) = +ρ̂₁₁/(ρ̂₀₀·Π̂)`.
pub fn score(d: u8, t: u8, y: f64, mu: &[f64; N_CELLS], rho: &[f64; N_CELLS], pi: f64) -> Result<f64> {
    if !(pi > 0.0) {
        return Err(Error::computation("score: pi must be positive"));
    }
    let own = cell_index(d, t);
    let residual = y - mu[own];
    let weight = if own == TREATED_POST {
        1.0 / pi
    } else {
        let denom = rho[own] * pi;
        if !(denom > 0.0) {
            let (dd, tt) = (own / 2, own % 2);
            return Err(Error::computation(format!(
                "score: zero propensity denominator in cell ({dd},{tt})"
            )));
        }
        let signed = match (d, t) {
            (1, 0) => -1.0,
            (0, 1) => -1.0,
            (0, 0) => 1.0,
            _ => unreachable!(),
        };
        signed * rho[TREATED_POST] / denom
    };
    let mut psi = weight * residual;
    if own == TREATED_POST {
        let contrast = mu[cell_index(1, 1)] - mu[cell_index(1, 0)]
            - (mu[cell_index(0, 1)] - mu[cell_index(0, 0)]);
        psi += contrast / pi;
    }
    Ok(psi)
}

/// Trimming mask: a row in a comparison cell (anything but treated-post) is
/// dropped iff its own-cell propensity falls below `threshold`. Treated-post
/// rows are never dropped — they are the reference group.
///
/// Returns the keep mask (aligned with row positions) and the trim count.
pub fn trim_mask(
    data: &RepeatedCrossSection,
    preds: &NuisancePredictions,
    threshold: f64,
) -> Result<(Vec<bool>, usize)> {
    if !(0.0..0.5).contains(&threshold) {
        return Err(Error::invalid("trim threshold must lie in [0, 0.5)"));
    }
    if preds.n() != data.n() {
        return Err(Error::invalid("nuisance predictions do not match data"));
    }
    let mut keep = vec![true; data.n()];
    let mut n_trimmed = 0usize;
    for i in 0..data.n() {
        let cell = data.cell_of(i);
        if cell != TREATED_POST && preds.rho[i][cell] < threshold {
            keep[i] = false;
            n_trimmed += 1;
        }
    }
    Ok((keep, n_trimmed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetBuilder;

    /// Spreadsheet fixture: eight rows with hand-specified nuisances; the
    /// expected ψ values below were computed by hand from the score formula
    /// before the implementation existed.
    pub(crate) fn hand_fixture() -> (RepeatedCrossSection, NuisancePredictions, Vec<f64>) {
        let mut b = DatasetBuilder::new();
        // (y, d, t); cluster one per row so clustered inference can collapse.
        let rows: [(f64, u8, u8); 8] = [
            (1.0, 1, 1),
            (0.0, 1, 1),
            (1.0, 1, 0),
            (0.0, 1, 0),
            (1.0, 0, 1),
            (0.0, 0, 1),
            (1.0, 0, 0),
            (0.0, 0, 0),
        ];
        for (i, (y, d, t)) in rows.iter().enumerate() {
            b.push_row(i as u64, *y, *d, *t, &format!("u{i}"), None, &[], &[]);
        }
        let data = b.build(true).unwrap();

        // mu rows are [μ₀(0), μ₀(1), μ₁(0), μ₁(1)] in cell-index order; the
        // 0.9 entries are deliberately never read by the score.
        let mu = vec![
            [0.25, 0.25, 0.5, 0.75],
            [0.5, 0.5, 0.25, 0.5],
            [0.9, 0.9, 0.5, 0.9],
            [0.9, 0.9, 0.25, 0.9],
            [0.9, 0.5, 0.9, 0.9],
            [0.9, 0.25, 0.9, 0.9],
            [0.75, 0.9, 0.9, 0.9],
            [0.5, 0.9, 0.9, 0.9],
        ];
        let rho = vec![
            [0.25, 0.25, 0.25, 0.25],
            [0.125, 0.25, 0.125, 0.5],
            [0.125, 0.125, 0.5, 0.25],
            [0.125, 0.125, 0.25, 0.5],
            [0.25, 0.25, 0.25, 0.25],
            [0.5, 0.25, 0.125, 0.125],
            [0.5, 0.125, 0.125, 0.25],
            [0.25, 0.25, 0.25, 0.25],
        ];
        let preds = NuisancePredictions::from_parts(mu, rho, 0.25).unwrap();
        let expected_psi = vec![2.0, -1.0, -1.0, 2.0, -2.0, 0.5, 0.5, -2.0];
        (data, preds, expected_psi)
    }

    #[test]
    fn hand_computed_scores_match_exactly() {
        let (data, preds, expected) = hand_fixture();
        for i in 0..data.n() {
            let psi = score(
                data.d()[i],
                data.t()[i],
                data.y()[i],
                &preds.mu[i],
                &preds.rho[i],
                preds.pi_hat,
            )
            .unwrap();
            assert_eq!(psi, expected[i], "row {i}");
        }
    }

    #[test]
    fn exact_nuisances_and_zero_contrast_give_zero_scores() {
        let (data, preds, _) = hand_fixture();
        // y equal to the own-cell regression and a vanishing contrast.
        for i in 0..data.n() {
            let own = data.cell_of(i);
            let mu = [0.5, 0.75, 0.25, 0.5]; // contrast = 0.5−0.25−(0.75−0.5) = 0, dyadic
            let y = mu[own];
            let psi = score(data.d()[i], data.t()[i], y, &mu, &preds.rho[i], 0.25).unwrap();
            assert_eq!(psi, 0.0, "row {i}");
        }
    }

    #[test]
    fn control_pre_rows_use_only_the_weighted_residual() {
        // (0,0) row: ψ = +ρ̂₁₁/(ρ̂₀₀·Π̂)·(y − μ̂₀(0)); no contrast term.
        let mu = [0.75, 0.1, 0.2, 0.3];
        let rho = [0.5, 0.125, 0.125, 0.25];
        let psi = score(0, 0, 1.0, &mu, &rho, 0.25).unwrap();
        assert_eq!(psi, 2.0 * 0.25);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let mu = [0.5; 4];
        let rho = [0.0, 0.5, 0.25, 0.25];
        assert!(score(0, 0, 1.0, &mu, &rho, 0.25).is_err());
    }

    #[test]
    fn trim_drops_only_low_propensity_comparison_rows() {
        let (data, mut preds, _) = hand_fixture();
        let (keep, n) = trim_mask(&data, &preds, 0.01).unwrap();
        assert_eq!(n, 0);
        assert!(keep.iter().all(|&k| k));

        // Push one (0,0) row below the threshold.
        preds.rho[7] = [0.005, 0.3316666666666667, 0.33, 0.3333333333333333];
        let sum: f64 = preds.rho[7].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let (keep, n) = trim_mask(&data, &preds, 0.01).unwrap();
        assert_eq!(n, 1);
        assert!(!keep[7]);
        assert!(keep.iter().take(7).all(|&k| k));

        // Treated-post rows are never trimmed even at tiny ρ̂₁₁.
        preds.rho[0] = [0.4, 0.3, 0.295, 0.005];
        let (keep, _) = trim_mask(&data, &preds, 0.01).unwrap();
        assert!(keep[0]);

        // Zero threshold trims nothing.
        let (_, n0) = trim_mask(&data, &preds, 0.0).unwrap();
        assert_eq!(n0, 0);
    }

    #[test]
    fn trim_monotone_in_threshold() {
        let (data, preds, _) = hand_fixture();
        let mut last = 0usize;
        for thr in [0.0, 0.05, 0.13, 0.2, 0.26, 0.4] {
            let (_, n) = trim_mask(&data, &preds, thr).unwrap();
            assert!(n >= last, "threshold {thr}: {n} < {last}");
            last = n;
        }
    }

    #[test]
    fn invalid_threshold_rejected() {
        let (data, preds, _) = hand_fixture();
        assert!(trim_mask(&data, &preds, 0.5).is_err());
        assert!(trim_mask(&data, &preds, -0.1).is_err());
    }
}
