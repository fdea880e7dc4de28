//! Precoder construction for the GZF-DP family and its baselines.
//!
//! Every builder returns the precoder `P` (M × N), the effective channel `F = HP`
//! (N × N, lower-triangular with a family-specific band), per-user rates in
//! bits/channel-use and the water level(s) of its power allocation. Power budgets and
//! noise powers are linear.
//!
//! * Linear ZF: `F` diagonal, water-filling over floors `gₙₙ`.
//! * GZF-DP(ν): `F` lower-banded with depth `ν`. Diagonal gains are water-filled over the
//!   Schur complements `ĝₙ^ν`, and each column's sub-diagonal part is
//!   `fₙ^ν = −fₙₙ (G_{n+1}^{ν−1})⁻¹ gₙ^ν`. Depth 0 is linear ZF.
//! * ZF-DP: `H = RU` (LQ), `P = U†B`, `F = RB`, water-filling over `N₀/|rₙₙ|²`.
//! * UG-DP(N_g): per-group projection onto the complement of the other groups' rows,
//!   then LQ within each group, giving a block-diagonal lower-triangular `R`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::gram::GramGeometry;
use crate::linalg::{c, check_full_row_rank, lq, select, CMatrix};
use crate::waterfill::water_fill;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecoderFamily {
    Zf,
    GzfDp { depth: usize },
    ZfDp,
    UgDp { group_size: usize },
}

impl fmt::Display for PrecoderFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecoderFamily::Zf => write!(f, "ZF"),
            PrecoderFamily::GzfDp { depth } => write!(f, "GZF-DP({depth})"),
            PrecoderFamily::ZfDp => write!(f, "ZF-DP"),
            PrecoderFamily::UgDp { group_size } => write!(f, "UG-DP({group_size})"),
        }
    }
}

impl PrecoderFamily {
    /// Interference depth the family's effective channel can carry for `n_users`.
    pub fn depth(&self, n_users: usize) -> usize {
        match *self {
            PrecoderFamily::Zf => 0,
            PrecoderFamily::GzfDp { depth } => depth,
            PrecoderFamily::ZfDp => n_users.saturating_sub(1),
            PrecoderFamily::UgDp { group_size } => group_size.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[serde(alias = "sumrate")]
    Sum,
    #[serde(alias = "minrate")]
    Min,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Sum => "sum",
            Objective::Min => "min",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WaterLevel {
    /// `1/λ`, shared by every user (sum-rate allocation).
    Common(f64),
    /// `1/λₙ` per user (min-rate allocation).
    PerUser(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PrecoderSolution {
    pub precoder: CMatrix,
    pub effective: CMatrix,
    pub family: PrecoderFamily,
    pub objective: Objective,
    /// `fₙₙ`, or `bₙ rₙₙ` for the LQ-based families; nonnegative.
    pub diag_gains: Vec<f64>,
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub water_level: WaterLevel,
    /// `‖P‖_F²`.
    pub total_power: f64,
}

impl PrecoderSolution {
    /// Rate this solution was optimized for.
    pub fn objective_value(&self) -> f64 {
        match self.objective {
            Objective::Sum => self.sum_rate,
            Objective::Min => self.min_rate,
        }
    }
}

fn check_budget(power_budget: f64, noise_power: f64) -> Result<()> {
    if !(power_budget > 0.0 && power_budget.is_finite()) {
        return Err(Error::Parameter(format!(
            "power budget {power_budget} must be positive and finite"
        )));
    }
    if !(noise_power > 0.0 && noise_power.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise power {noise_power} must be positive and finite"
        )));
    }
    Ok(())
}

fn check_pair(h: &ChannelMatrix, gram: &GramGeometry) -> Result<()> {
    if h.n_users() != gram.n_users() {
        return Err(Error::Dimension(format!(
            "channel has {} users but Gram geometry has {}",
            h.n_users(),
            gram.n_users()
        )));
    }
    Ok(())
}

fn summarize(rates: &[f64]) -> (f64, f64) {
    let sum = rates.iter().sum();
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    (sum, min)
}

/// Per-user powers `|fₙₙ|²`, rates and water level(s) for the floors `ĝ`.
struct Allocation {
    powers: Vec<f64>,
    rates: Vec<f64>,
    level: WaterLevel,
}

/// Diagonal powers over the floors `ĝ`: the sum-rate solution is
/// `|fₙₙ|² = N₀[μ/ĝₙ − 1]⁺` with `Σ[μ − ĝₙ]⁺ = P_T/N₀`; the min-rate solution gives
/// every user `|fₙₙ|² = P_T/Σĝ`.
fn allocate(
    floors: &[f64],
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<Allocation> {
    match objective {
        Objective::Sum => {
            let wf = water_fill(floors, power_budget / noise_power)?;
            let mut powers = Vec::with_capacity(floors.len());
            let mut rates = Vec::with_capacity(floors.len());
            for (&p, &floor) in wf.powers.iter().zip(floors) {
                if p > 0.0 {
                    powers.push(noise_power * p / floor);
                    rates.push((wf.level / floor).log2());
                } else {
                    powers.push(0.0);
                    rates.push(0.0);
                }
            }
            Ok(Allocation {
                powers,
                rates,
                level: WaterLevel::Common(wf.level),
            })
        }
        Objective::Min => {
            let total: f64 = floors.iter().sum();
            let rate = (1.0 + power_budget / (noise_power * total)).log2();
            let power = power_budget / total;
            let gain = 2f64.powf(rate);
            Ok(Allocation {
                powers: vec![power; floors.len()],
                rates: vec![rate; floors.len()],
                level: WaterLevel::PerUser(floors.iter().map(|g| g * gain).collect()),
            })
        }
    }
}

/// `P = H†(HH†)⁻¹F`, via a Cholesky solve against `HH†`.
fn zero_forcing_precoder(h: &ChannelMatrix, effective: &CMatrix) -> Result<CMatrix> {
    let entries = h.entries();
    let chol = (entries * entries.adjoint())
        .cholesky()
        .ok_or(Error::RankDeficient {
            smallest_singular_value: 0.0,
            condition: f64::INFINITY,
        })?;
    Ok(entries.adjoint() * chol.solve(effective))
}

fn gzf(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    nu: usize,
    objective: Objective,
    family: PrecoderFamily,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    check_budget(power_budget, noise_power)?;
    check_pair(h, gram)?;
    let n_users = gram.n_users();
    if nu >= n_users {
        return Err(Error::Parameter(format!(
            "depth {nu} must be below the number of users {n_users}"
        )));
    }
    let floors = gram.ghat_all(nu)?;
    let alloc = allocate(&floors, objective, power_budget, noise_power)?;

    let mut effective = CMatrix::zeros(n_users, n_users);
    let mut diag_gains = Vec::with_capacity(n_users);
    for (n, &power) in alloc.powers.iter().enumerate() {
        let fnn = power.sqrt();
        diag_gains.push(fnn);
        effective[(n, n)] = c(fnn);
        if fnn == 0.0 {
            continue;
        }
        let weights = gram.interference_weights(n, nu)?;
        for (k, w) in weights.iter().enumerate() {
            effective[(n + 1 + k, n)] = -w * fnn;
        }
    }
    let precoder = zero_forcing_precoder(h, &effective)?;
    let total_power = precoder.iter().map(|z| z.norm_sqr()).sum();
    let (sum_rate, min_rate) = summarize(&alloc.rates);
    Ok(PrecoderSolution {
        precoder,
        effective,
        family,
        objective,
        diag_gains,
        user_rates: alloc.rates,
        sum_rate,
        min_rate,
        water_level: alloc.level,
        total_power,
    })
}

/// Linear zero-forcing with water-filling over `gₙₙ`. Shares the GZF-DP code path at
/// depth 0, so the two agree bit for bit.
pub fn build_zf(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    gzf(
        h,
        gram,
        0,
        Objective::Sum,
        PrecoderFamily::Zf,
        power_budget,
        noise_power,
    )
}

/// GZF-DP with interference depth `nu`, maximizing the sum rate.
pub fn build_gzfdp_sumrate(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    nu: usize,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    gzf(
        h,
        gram,
        nu,
        Objective::Sum,
        PrecoderFamily::GzfDp { depth: nu },
        power_budget,
        noise_power,
    )
}

/// GZF-DP with interference depth `nu`, maximizing the minimum user rate. All users
/// get the common rate `log₂(1 + P_T/(N₀ Σₙ ĝₙ^ν))`.
pub fn build_gzfdp_minrate(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    nu: usize,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    gzf(
        h,
        gram,
        nu,
        Objective::Min,
        PrecoderFamily::GzfDp { depth: nu },
        power_budget,
        noise_power,
    )
}

/// Shared tail of ZF-DP and UG-DP: allocate over `|rₙₙ|²` and form `F = RB`,
/// `P = U†B`.
fn triangular(
    lower: CMatrix,
    rows: CMatrix,
    family: PrecoderFamily,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    let n_users = lower.nrows();
    // Floors N₀/|rₙₙ|² in the budget's units.
    let floors: Vec<f64> = (0..n_users)
        .map(|n| 1.0 / lower[(n, n)].norm_sqr())
        .collect();
    let alloc = allocate(&floors, objective, power_budget, noise_power)?;
    // bₙ² = |fₙₙ|²/|rₙₙ|²
    let b: Vec<f64> = alloc
        .powers
        .iter()
        .zip(&floors)
        .map(|(p, fl)| (p * fl).sqrt())
        .collect();
    let scale = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n_users,
        b.iter().map(|&x| c(x)),
    ));
    let effective = &lower * &scale;
    let precoder = rows.adjoint() * &scale;
    let diag_gains = (0..n_users).map(|n| b[n] * lower[(n, n)].re).collect();
    let total_power = b.iter().map(|x| x * x).sum();
    let (sum_rate, min_rate) = summarize(&alloc.rates);
    Ok(PrecoderSolution {
        precoder,
        effective,
        family,
        objective,
        diag_gains,
        user_rates: alloc.rates,
        sum_rate,
        min_rate,
        water_level: alloc.level,
        total_power,
    })
}

/// ZF-DP: full successive dirty-paper coding on the LQ factor of `H`.
pub fn build_zfdp(
    h: &ChannelMatrix,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    build_zfdp_with(h, Objective::Sum, power_budget, noise_power)
}

pub fn build_zfdp_with(
    h: &ChannelMatrix,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    check_budget(power_budget, noise_power)?;
    check_full_row_rank(h.entries(), h.condition_limit())?;
    let f = lq(h.entries());
    triangular(
        f.lower,
        f.rows,
        PrecoderFamily::ZfDp,
        objective,
        power_budget,
        noise_power,
    )
}

/// UG-DP with contiguous groups of `group_size` users in the current user order.
pub fn build_ugdp(
    h: &ChannelMatrix,
    group_size: usize,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    build_ugdp_with(h, group_size, Objective::Sum, power_budget, noise_power)
}

pub fn build_ugdp_with(
    h: &ChannelMatrix,
    group_size: usize,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    check_budget(power_budget, noise_power)?;
    let n_users = h.n_users();
    if group_size == 0 || !n_users.is_multiple_of(group_size) {
        return Err(Error::Parameter(format!(
            "group size {group_size} must divide the number of users {n_users}"
        )));
    }
    let entries = h.entries();
    check_full_row_rank(entries, h.condition_limit())?;
    let n_antennas = h.n_antennas();
    let identity = CMatrix::identity(n_antennas, n_antennas);
    let all_cols: Vec<usize> = (0..n_antennas).collect();
    let scale = entries.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);

    let mut lower = CMatrix::zeros(n_users, n_users);
    let mut rows = CMatrix::zeros(n_users, n_antennas);
    for start in (0..n_users).step_by(group_size) {
        let members: Vec<usize> = (start..start + group_size).collect();
        let others: Vec<usize> = (0..n_users).filter(|u| !members.contains(u)).collect();
        let group = select(entries, &members, &all_cols);
        let projected = if others.is_empty() {
            group
        } else {
            let rest = select(entries, &others, &all_cols);
            let chol = (&rest * rest.adjoint())
                .cholesky()
                .ok_or(Error::RankDeficient {
                    smallest_singular_value: 0.0,
                    condition: f64::INFINITY,
                })?;
            let projector = &identity - rest.adjoint() * chol.solve(&rest);
            group * projector
        };
        let f = lq(&projected);
        for k in 0..group_size {
            let r = f.lower[(k, k)].re;
            if !(r * r * h.condition_limit() > scale) {
                return Err(Error::RankDeficient {
                    smallest_singular_value: r,
                    condition: scale / (r * r),
                });
            }
        }
        lower
            .view_mut((start, start), (group_size, group_size))
            .copy_from(&f.lower);
        rows.view_mut((start, 0), (group_size, n_antennas))
            .copy_from(&f.rows);
    }
    triangular(
        lower,
        rows,
        PrecoderFamily::UgDp { group_size },
        objective,
        power_budget,
        noise_power,
    )
}

/// Builds any family for the given objective. ZF is only defined through its own
/// builder for the sum rate; its min-rate form is GZF-DP at depth 0.
pub fn build(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    family: PrecoderFamily,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<PrecoderSolution> {
    match family {
        PrecoderFamily::Zf => gzf(h, gram, 0, objective, family, power_budget, noise_power),
        PrecoderFamily::GzfDp { depth } => {
            gzf(h, gram, depth, objective, family, power_budget, noise_power)
        }
        PrecoderFamily::ZfDp => build_zfdp_with(h, objective, power_budget, noise_power),
        PrecoderFamily::UgDp { group_size } => {
            build_ugdp_with(h, group_size, objective, power_budget, noise_power)
        }
    }
}

/// `Σₙ [fₙₙ, (fₙ^ν)†] Gₙ^ν [fₙₙ; fₙ^ν]`, the column-wise expansion of `Tr(F†GF)` for a
/// lower-banded `F` of depth `nu`.
pub fn banded_trace(effective: &CMatrix, gram: &GramGeometry, nu: usize) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..gram.n_users() {
        let block = gram.principal_submatrix(n, nu)?;
        let len = block.nrows();
        let column = effective.view((n, n), (len, 1)).clone_owned();
        let q: Complex64 = (column.adjoint() * &block * &column)[(0, 0)];
        total += q.re;
    }
    Ok(total)
}

/// Rate of the GZF-DP family computed from `ĝ` alone, without building `F`.
pub fn gzf_objective(
    gram: &GramGeometry,
    nu: usize,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<f64> {
    check_budget(power_budget, noise_power)?;
    let floors = gram.ghat_all(nu)?;
    let alloc = allocate(&floors, objective, power_budget, noise_power)?;
    let (sum, min) = summarize(&alloc.rates);
    Ok(match objective {
        Objective::Sum => sum,
        Objective::Min => min,
    })
}
