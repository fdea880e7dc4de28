//! User orderings for GZF-DP.
//!
//! Reordering users permutes the rows of `H` and turns `G` into `QGQ†`, which changes
//! the Schur complements `ĝₙ^ν` for `0 < ν < N`. Two heuristics are provided: a
//! determinant-greedy search for the sum rate (`order_alg1`) and a diagonal sort for
//! the minimum rate (`order_alg2`), alongside exhaustive and random baselines.
//!
//! A permutation `perm` maps positions to original users: position `i` serves user
//! `perm[i]`. Ties are always broken towards the lowest original user index.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::gram::GramGeometry;
use crate::precoder::{gzf_objective, Objective};

/// Largest user count accepted by exhaustive search.
pub const BRUTE_FORCE_MAX_USERS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderingMethod {
    Identity,
    Alg1,
    Alg2,
    BruteForceSum,
    BruteForceMin,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserOrdering {
    pub perm: Vec<usize>,
    pub method: OrderingMethod,
    /// Rate achieved under this ordering, when it has been evaluated.
    pub objective_value: Option<f64>,
    /// Free-form remark, e.g. why the identity was returned.
    pub note: Option<String>,
}

impl UserOrdering {
    pub fn identity(n_users: usize) -> Self {
        Self {
            perm: (0..n_users).collect(),
            method: OrderingMethod::Identity,
            objective_value: None,
            note: None,
        }
    }

    fn new(perm: Vec<usize>, method: OrderingMethod) -> Self {
        Self {
            perm,
            method,
            objective_value: None,
            note: None,
        }
    }

    /// Permutation that undoes this one.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (pos, &user) in self.perm.iter().enumerate() {
            inv[user] = pos;
        }
        Self::new(inv, self.method)
    }

    /// Fills in `objective_value` with the GZF-DP rate at depth `nu`.
    pub fn scored(
        mut self,
        gram: &GramGeometry,
        nu: usize,
        objective: Objective,
        power_budget: f64,
        noise_power: f64,
    ) -> Result<Self> {
        let permuted = gram.permuted(&self.perm)?;
        self.objective_value = Some(gzf_objective(
            &permuted,
            nu,
            objective,
            power_budget,
            noise_power,
        )?);
        Ok(self)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Parameter(format!(
            "permutation has {} entries, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Parameter(format!(
                "{perm:?} is not a permutation of 0..{n}"
            )));
        }
    }
    Ok(())
}

/// Row `i` of the result is row `perm[i]` of `h`.
pub fn apply_ordering(h: &ChannelMatrix, ord: &UserOrdering) -> Result<ChannelMatrix> {
    check_permutation(&ord.perm, h.n_users())?;
    let cols: Vec<usize> = (0..h.n_antennas()).collect();
    h.with_entries(crate::linalg::select(h.entries(), &ord.perm, &cols))
}

/// Candidate in `pool` maximizing (or minimizing) `score`, lowest index on ties.
fn pick(pool: &[usize], maximize: bool, score: impl Fn(usize) -> f64) -> usize {
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    let mut best = sorted[0];
    let mut best_score = score(best);
    for &cand in &sorted[1..] {
        let s = score(cand);
        let better = if maximize {
            s > best_score
        } else {
            s < best_score
        };
        if better {
            best = cand;
            best_score = s;
        }
    }
    best
}

fn without(set: &[usize], user: usize) -> Vec<usize> {
    set.iter().copied().filter(|&u| u != user).collect()
}

/// Determinant-greedy ordering for the sum rate.
///
/// 1. Among all `(ν+1)`-subsets of users pick the one minimizing `det Gₙ^ν` (`J₁`).
/// 2. From the candidates `J₂` (all of `J₁` on the first pass) place the user whose
///    removal leaves the largest `det G_{n+1}^{ν−1}`.
/// 3. Refill `J₁` with the unplaced user outside it that minimizes `det Gₙ^ν`, and
///    repeat from 2 with `J₂` being the previous `J₁` minus the placed user.
/// 4. Once no outside users remain, place the rest one at a time, each time choosing
///    the user whose removal leaves the largest remaining determinant.
pub fn order_alg1(gram: &GramGeometry, nu: usize) -> Result<UserOrdering> {
    let n_users = gram.n_users();
    if nu >= n_users {
        return Err(Error::Parameter(format!(
            "depth {nu} must be below the number of users {n_users}"
        )));
    }
    if nu == 0 {
        let mut ord = UserOrdering::identity(n_users);
        ord.method = OrderingMethod::Alg1;
        ord.note = Some("depth 0: ordering has no effect, identity returned".into());
        return Ok(ord);
    }
    let log_det = |set: &[usize]| gram.log_det_subset(set);

    let mut unplaced: Vec<usize> = (0..n_users).collect();
    let mut order = Vec::with_capacity(n_users);

    // Combinations come out in lexicographic order, so keeping the first strict
    // minimum breaks ties towards low indices.
    let mut window: Vec<usize> = Vec::new();
    let mut best = f64::INFINITY;
    for combo in (0..n_users).combinations(nu + 1) {
        let d = log_det(&combo);
        if d < best {
            best = d;
            window = combo;
        }
    }
    let mut candidates = window.clone();

    loop {
        let placed = pick(&candidates, true, |u| log_det(&without(&window, u)));
        order.push(placed);
        unplaced.retain(|&u| u != placed);
        candidates = without(&window, placed);
        let outside: Vec<usize> = unplaced
            .iter()
            .copied()
            .filter(|u| !candidates.contains(u))
            .collect();
        if outside.is_empty() {
            break;
        }
        let added = pick(&outside, false, |v| {
            let mut set = candidates.clone();
            set.push(v);
            log_det(&set)
        });
        window = candidates.clone();
        window.push(added);
    }

    let mut rest = candidates;
    while !rest.is_empty() {
        let placed = pick(&rest, true, |u| log_det(&without(&rest, u)));
        order.push(placed);
        rest.retain(|&u| u != placed);
    }
    debug_assert_eq!(order.len(), n_users);
    Ok(UserOrdering::new(order, OrderingMethod::Alg1))
}

/// Users in descending order of `gₙₙ`; the user with the smallest diagonal entry of
/// `G` is served last.
pub fn order_alg2(gram: &GramGeometry) -> UserOrdering {
    let diag = gram.diagonal();
    let mut perm: Vec<usize> = (0..diag.len()).collect();
    // Stable sort keeps lower indices first among equal diagonals.
    perm.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]));
    UserOrdering::new(perm, OrderingMethod::Alg2)
}

/// All `n!` permutations in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    (0..n).permutations(n).collect()
}

/// Evaluates `score` on every permutation (in parallel) and returns the
/// lexicographically first maximizer with its value.
pub fn bruteforce_by<F>(n_users: usize, score: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if n_users > BRUTE_FORCE_MAX_USERS {
        return Err(Error::Capability(format!(
            "exhaustive ordering over {n_users}! permutations is too costly \
             (limit N <= {BRUTE_FORCE_MAX_USERS}); use alg1 or alg2"
        )));
    }
    let perms = all_permutations(n_users);
    let values: Vec<f64> = perms.par_iter().map(|p| score(p)).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok((perms[best].clone(), values[best]))
}

/// Exhaustive search for the GZF-DP ordering maximizing `objective`.
pub fn order_bruteforce(
    gram: &GramGeometry,
    nu: usize,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<UserOrdering> {
    let (perm, value) = bruteforce_by(gram.n_users(), |p| {
        gzf_objective(&gram.permuted(p)?, nu, objective, power_budget, noise_power)
    })?;
    let method = match objective {
        Objective::Sum => OrderingMethod::BruteForceSum,
        Objective::Min => OrderingMethod::BruteForceMin,
    };
    let mut ord = UserOrdering::new(perm, method);
    ord.objective_value = Some(value);
    Ok(ord)
}

/// Uniformly random ordering.
pub fn order_random<R: Rng + ?Sized>(n_users: usize, seed_tag: u64, rng: &mut R) -> UserOrdering {
    let mut perm: Vec<usize> = (0..n_users).collect();
    perm.shuffle(rng);
    UserOrdering::new(perm, OrderingMethod::Random(seed_tag))
}

/// GZF-DP rate averaged over every permutation of the users.
pub fn average_over_orderings(
    gram: &GramGeometry,
    nu: usize,
    objective: Objective,
    power_budget: f64,
    noise_power: f64,
) -> Result<f64> {
    let n = gram.n_users();
    if n > BRUTE_FORCE_MAX_USERS {
        return Err(Error::Capability(format!(
            "averaging over {n}! orderings is too costly"
        )));
    }
    let values: Vec<f64> = all_permutations(n)
        .par_iter()
        .map(|p| gzf_objective(&gram.permuted(p)?, nu, objective, power_budget, noise_power))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
