//! Benjamini–Hochberg step-up adjustment.

use crate::error::{Error, Result};

/// Step-up adjusted p-values controlling the false discovery rate:
/// sort ascending, take `q_(i) = min_{j ≥ i} min(1, p_(j)·m/j)`, and return in
/// the input order.
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>> {
    for &v in p {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("p-value {v} outside [0, 1]")));
        }
    }
    let m = p.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));

    let mut adjusted = vec![0.0f64; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let scaled = (p[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running_min = running_min.min(scaled);
        adjusted[idx] = running_min;
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_p_value_unchanged() {
        assert_eq!(bh_adjust(&[0.32]).unwrap(), vec![0.32]);
    }

    #[test]
    fn hand_applied_step_up_examples() {
        let adj = bh_adjust(&[0.01, 0.02, 0.03, 0.04]).unwrap();
        for v in adj {
            assert!((v - 0.04).abs() < 1e-12);
        }
        let adj = bh_adjust(&[0.005, 0.05, 0.5]).unwrap();
        assert!((adj[0] - 0.015).abs() < 1e-12);
        assert!((adj[1] - 0.075).abs() < 1e-12);
        assert!((adj[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adjusted_at_least_raw_and_in_unit_interval() {
        let p = [0.9, 0.001, 0.04, 0.5, 0.04, 1.0, 0.0];
        let adj = bh_adjust(&p).unwrap();
        for (raw, a) in p.iter().zip(&adj) {
            assert!(a >= raw);
            assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn identical_raw_p_values_get_identical_adjustments() {
        let adj = bh_adjust(&[0.04, 0.2, 0.04, 0.04]).unwrap();
        assert_eq!(adj[0], adj[2]);
        assert_eq!(adj[0], adj[3]);
    }

    #[test]
    fn monotone_in_sorted_order_and_stable_under_reapplication_order() {
        let p = [0.13, 0.002, 0.78, 0.04, 0.35, 0.04];
        let once = bh_adjust(&p).unwrap();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
        for w in order.windows(2) {
            assert!(once[w[0]] <= once[w[1]] + 1e-15);
        }
        // Re-application never lowers a value and preserves the ordering.
        let twice = bh_adjust(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!(b >= a);
        }
        for w in order.windows(2) {
            assert!(twice[w[0]] <= twice[w[1]] + 1e-15);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(bh_adjust(&[1.2]).is_err());
        assert!(bh_adjust(&[-0.1]).is_err());
    }
}
