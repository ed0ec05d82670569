//! Closed-form derived quantities: extensive-margin elasticity and tax
//! pass-through.

use crate::error::{Error, Result};

/// Extensive-margin elasticity: percent change in the smoking rate divided by
/// the tax-induced percent change in price.
pub fn elasticity(effect_pct: f64, price_change_pct: f64) -> Result<f64> {
    if price_change_pct == 0.0 {
        return Err(Error::invalid("elasticity: price change must be non-zero"));
    }
    Ok(effect_pct / price_change_pct)
}

/// Pass-through rate in percent: estimated price effect of the tax treatment
/// divided by the mechanical price change the tax implies.
pub fn pass_through(estimated_price_effect: f64, mechanical_tax_price_change: f64) -> Result<f64> {
    if !(mechanical_tax_price_change > 0.0) {
        return Err(Error::invalid(
            "pass_through: mechanical price change must be positive",
        ));
    }
    Ok(100.0 * estimated_price_effect / mechanical_tax_price_change)
}
