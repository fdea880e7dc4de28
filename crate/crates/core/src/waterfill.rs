//! Exact active-set water-filling.
//!
//! Given floors `c₁ … c_N > 0` and a budget `P`, finds the level `μ` with
//! `Σ [μ − cₙ]⁺ = P`. The map `μ ↦ Σ [μ − cₙ]⁺` is piecewise linear, so sorting the
//! floors and locating the active count gives `μ` in closed form.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub level: f64,
    /// `[μ − cₙ]⁺`, in the input order.
    pub powers: Vec<f64>,
    pub active: usize,
}

pub fn water_fill(floors: &[f64], budget: f64) -> Result<WaterFill> {
    if floors.is_empty() {
        return Err(Error::Parameter(
            "water-filling needs at least one floor".into(),
        ));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Parameter(format!(
            "budget {budget} must be positive"
        )));
    }
    if let Some(bad) = floors.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::Parameter(format!("floor {bad} must be positive")));
    }

    let mut sorted = floors.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut prefix = 0.0;
    let mut best = (sorted[0] + budget, 1);
    for (k, &floor) in sorted.iter().enumerate() {
        prefix += floor;
        let level = (budget + prefix) / (k + 1) as f64;
        if level > floor {
            best = (level, k + 1);
        } else {
            break;
        }
    }
    let (level, active) = best;
    let powers = floors.iter().map(|&c| (level - c).max(0.0)).collect();
    Ok(WaterFill {
        level,
        powers,
        active,
    })
}
