//! Declarative Monte Carlo experiments.
//!
//! An [`ExperimentSpec`] is read from TOML:
//!
//! ```toml
//! name = "iid-8x8"
//! trials = 500
//! seed = 4
//! noise_power = 1.0
//!
//! [channel]
//! kind = "iid"          # fixture | iid | kronecker | fdmimo
//! users = 8
//! antennas = 8
//!
//! [sweep]
//! axis = "power_db"     # power_db | users | beta | none
//! lo = 0.0
//! hi = 30.0
//! step = 5.0
//!
//! [[precoder]]
//! family = "gzfdp"      # zf | gzfdp | zfdp | ugdp
//! nu = 1
//! objective = "sum"     # sum | min
//! ordering = "identity" # identity | alg1 | alg2 | brute | average | random:k
//! ```
//!
//! Every trial draws one channel and evaluates all precoders on it, so the columns of
//! a report are paired samples. Trial `t` draws from stream `t` of a ChaCha20 generator
//! seeded with `seed`, which keeps runs reproducible under any thread schedule.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    draw_iid_gaussian, draw_kronecker_rayleigh, gen_fdmimo_los, load_channel_fixture, trial_rng,
    ChannelMatrix, CorrelationSpec, FdMimoGeometry,
};
use crate::error::{Error, Result};
use crate::gram::{build_gram, GramGeometry};
use crate::ordering::{
    all_permutations, apply_ordering, bruteforce_by, order_alg1, order_alg2, order_bruteforce,
    order_random, UserOrdering, BRUTE_FORCE_MAX_USERS,
};
use crate::precoder::{build, gzf_objective, Objective, PrecoderFamily};

pub const CSV_HEADER: &str = "sweep,label,mean_rate_bits,stderr,trials";

/// Largest share of rank-deficient draws tolerated at one sweep point.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Keeps random-ordering draws apart from the channel streams.
const ORDERING_SEED_SALT: u64 = 0x5eed_0bde_c0de_0001;

/// Hex SHA-256 of `text`.
pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Zf,
    Gzfdp,
    Zfdp,
    Ugdp,
}

impl FamilyKind {
    /// Attaches the family's parameter, checking that it was supplied.
    pub fn resolve(self, nu: Option<usize>, group_size: Option<usize>) -> Result<PrecoderFamily> {
        match self {
            FamilyKind::Zf => Ok(PrecoderFamily::Zf),
            FamilyKind::Zfdp => Ok(PrecoderFamily::ZfDp),
            FamilyKind::Gzfdp => nu
                .map(|depth| PrecoderFamily::GzfDp { depth })
                .ok_or_else(|| Error::Parameter("family gzfdp needs nu".into())),
            FamilyKind::Ugdp => group_size
                .map(|group_size| PrecoderFamily::UgDp { group_size })
                .ok_or_else(|| Error::Parameter("family ugdp needs group_size".into())),
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zf" => Ok(FamilyKind::Zf),
            "gzfdp" | "gzf-dp" | "gzf" => Ok(FamilyKind::Gzfdp),
            "zfdp" | "zf-dp" => Ok(FamilyKind::Zfdp),
            "ugdp" | "ug-dp" => Ok(FamilyKind::Ugdp),
            other => Err(Error::Parameter(format!(
                "unknown family '{other}', expected zf, gzfdp, zfdp or ugdp"
            ))),
        }
    }
}

/// How users are ordered before a precoder is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OrderingChoice {
    #[default]
    Identity,
    Alg1,
    Alg2,
    BruteForce,
    /// Rate averaged over this many uniformly random orderings.
    RandomAvg(usize),
    /// Rate averaged over all `N!` orderings.
    AllAverage,
}

impl FromStr for OrderingChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "identity" => return Ok(OrderingChoice::Identity),
            "alg1" => return Ok(OrderingChoice::Alg1),
            "alg2" => return Ok(OrderingChoice::Alg2),
            "brute" | "bruteforce" => return Ok(OrderingChoice::BruteForce),
            "average" => return Ok(OrderingChoice::AllAverage),
            _ => {}
        }
        if let Some(k) = lower.strip_prefix("random:") {
            if let Ok(k) = k.parse::<usize>() {
                if k > 0 {
                    return Ok(OrderingChoice::RandomAvg(k));
                }
            }
        }
        Err(Error::Parameter(format!(
            "unknown ordering '{s}', expected identity, alg1, alg2, brute, average or random:k with k >= 1"
        )))
    }
}

impl TryFrom<String> for OrderingChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OrderingChoice> for String {
    fn from(o: OrderingChoice) -> Self {
        o.to_string()
    }
}

impl fmt::Display for OrderingChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderingChoice::Identity => f.write_str("identity"),
            OrderingChoice::Alg1 => f.write_str("alg1"),
            OrderingChoice::Alg2 => f.write_str("alg2"),
            OrderingChoice::BruteForce => f.write_str("brute"),
            OrderingChoice::RandomAvg(k) => write!(f, "random:{k}"),
            OrderingChoice::AllAverage => f.write_str("average"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelSpec {
    /// Fixed channel from a fixture file, relative to the spec file.
    Fixture {
        path: PathBuf,
    },
    Iid {
        users: usize,
        antennas: usize,
    },
    Kronecker {
        users: usize,
        antennas: usize,
        beta_t: f64,
        beta_r: f64,
    },
    Fdmimo {
        #[serde(default)]
        geometry: FdMimoGeometry,
    },
}

impl ChannelSpec {
    fn is_deterministic(&self) -> bool {
        matches!(
            self,
            ChannelSpec::Fixture { .. } | ChannelSpec::Fdmimo { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepSpec {
    #[serde(alias = "power_dbm")]
    PowerDb {
        lo: f64,
        hi: f64,
        step: f64,
    },
    Users {
        values: Vec<usize>,
        power_db: f64,
    },
    /// Sets both correlation coefficients of a Kronecker channel.
    Beta {
        values: Vec<f64>,
        power_db: f64,
    },
    None {
        power_db: f64,
    },
}

impl SweepSpec {
    pub fn axis_name(&self) -> &'static str {
        match self {
            SweepSpec::PowerDb { .. } => "power_db",
            SweepSpec::Users { .. } => "users",
            SweepSpec::Beta { .. } => "beta",
            SweepSpec::None { .. } => "none",
        }
    }

    /// Sweep values in file units.
    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepSpec::PowerDb { lo, hi, step } => {
                if !(step > &0.0) || hi < lo || !lo.is_finite() || !hi.is_finite() {
                    return Vec::new();
                }
                let count = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=count).map(|k| lo + k as f64 * step).collect()
            }
            SweepSpec::Users { values, .. } => values.iter().map(|&n| n as f64).collect(),
            SweepSpec::Beta { values, .. } => values.clone(),
            SweepSpec::None { power_db } => vec![*power_db],
        }
    }

    fn power_db_at(&self, value: f64) -> f64 {
        match self {
            SweepSpec::PowerDb { .. } | SweepSpec::None { .. } => value,
            SweepSpec::Users { power_db, .. } | SweepSpec::Beta { power_db, .. } => *power_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecoderSpec {
    pub family: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub ordering: OrderingChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_objective() -> Objective {
    Objective::Sum
}

impl PrecoderSpec {
    pub fn new(family: PrecoderFamily, objective: Objective, ordering: OrderingChoice) -> Self {
        let (kind, nu, group_size) = match family {
            PrecoderFamily::Zf => (FamilyKind::Zf, None, None),
            PrecoderFamily::GzfDp { depth } => (FamilyKind::Gzfdp, Some(depth), None),
            PrecoderFamily::ZfDp => (FamilyKind::Zfdp, None, None),
            PrecoderFamily::UgDp { group_size } => (FamilyKind::Ugdp, None, Some(group_size)),
        };
        Self {
            family: kind,
            nu,
            group_size,
            objective,
            ordering,
            label: None,
        }
    }

    pub fn resolved_family(&self) -> Result<PrecoderFamily> {
        self.family.resolve(self.nu, self.group_size)
    }

    /// Explicit label, or one derived from family, objective and ordering.
    pub fn display_label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        let mut label = match self.resolved_family() {
            Ok(family) => family.to_string(),
            Err(_) => format!("{:?}", self.family),
        };
        if self.objective == Objective::Min {
            label.push_str(" min");
        }
        if self.ordering != OrderingChoice::Identity {
            label.push_str(&format!(" [{}]", self.ordering));
        }
        label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_noise")]
    pub noise_power: f64,
    /// Overrides the rank guard's limit on the condition number of HH†.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_limit: Option<f64>,
    pub channel: ChannelSpec,
    pub sweep: SweepSpec,
    #[serde(rename = "precoder", default)]
    pub precoders: Vec<PrecoderSpec>,
}

fn default_trials() -> usize {
    1
}

fn default_noise() -> f64 {
    1.0
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a spec. Relative fixture paths are resolved against `base_dir`.
pub fn parse_spec(text: &str, base_dir: Option<&Path>) -> Result<ExperimentSpec> {
    let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    if let (ChannelSpec::Fixture { path }, Some(base)) = (&mut spec.channel, base_dir) {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text, path.parent())
}

impl ExperimentSpec {
    /// User counts the spec will be evaluated at, or `None` for a fixture channel whose
    /// size is only known once it is loaded.
    fn user_counts(&self) -> Option<Vec<usize>> {
        if let SweepSpec::Users { values, .. } = &self.sweep {
            return Some(values.clone());
        }
        match &self.channel {
            ChannelSpec::Fixture { .. } => None,
            ChannelSpec::Iid { users, .. } | ChannelSpec::Kronecker { users, .. } => {
                Some(vec![*users])
            }
            ChannelSpec::Fdmimo { geometry } => Some(vec![geometry.n_users]),
        }
    }

    fn check_users(&self, n_users: usize, problems: &mut Vec<String>) {
        for (i, p) in self.precoders.iter().enumerate() {
            let label = p.display_label();
            let family = match p.resolved_family() {
                Ok(f) => f,
                Err(_) => continue,
            };
            match family {
                PrecoderFamily::GzfDp { depth } if depth >= n_users => problems.push(format!(
                    "precoder {i} ({label}): nu = {depth} must be below N = {n_users}"
                )),
                PrecoderFamily::UgDp { group_size }
                    if group_size == 0 || !n_users.is_multiple_of(group_size) =>
                {
                    problems.push(format!(
                        "precoder {i} ({label}): group_size {group_size} must divide N = {n_users}"
                    ))
                }
                _ => {}
            }
            let exhaustive = matches!(
                p.ordering,
                OrderingChoice::BruteForce | OrderingChoice::AllAverage
            );
            if exhaustive && n_users > BRUTE_FORCE_MAX_USERS {
                problems.push(format!(
                    "precoder {i} ({label}): ordering {} needs N <= \
                     {BRUTE_FORCE_MAX_USERS}, got {n_users}",
                    p.ordering
                ));
            }
        }
    }

    /// Every violation in the spec; empty when the spec can be run.
    pub fn violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.trials == 0 {
            problems.push("trials must be at least 1".into());
        }
        if self.seed.is_none() {
            problems.push("seed is not set".into());
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            problems.push(format!("noise_power {} must be positive", self.noise_power));
        }
        if self.precoders.is_empty() {
            problems.push("at least one [[precoder]] is required".into());
        }
        if let Some(limit) = self.condition_limit {
            if !(limit >= 1.0 && limit.is_finite()) {
                problems.push(format!(
                    "condition_limit {limit} must be finite and at least 1"
                ));
            }
        }

        match &self.channel {
            ChannelSpec::Fixture { .. } => {}
            ChannelSpec::Iid { users, antennas }
            | ChannelSpec::Kronecker {
                users, antennas, ..
            } => {
                let swept = matches!(self.sweep, SweepSpec::Users { .. });
                if !swept && (*users == 0 || users > antennas) {
                    problems.push(format!(
                        "channel needs 1 <= users <= antennas, got {users} > {antennas}"
                    ));
                }
                if let SweepSpec::Users { values, .. } = &self.sweep {
                    for &n in values {
                        if n == 0 || n > *antennas {
                            problems
                                .push(format!("swept user count {n} must lie in 1..={antennas}"));
                        }
                    }
                }
                if let ChannelSpec::Kronecker { beta_t, beta_r, .. } = &self.channel {
                    if let Err(e) = (CorrelationSpec {
                        beta_t: *beta_t,
                        beta_r: *beta_r,
                    })
                    .validate()
                    {
                        problems.push(e.to_string());
                    }
                }
            }
            ChannelSpec::Fdmimo { geometry } => {
                if let Err(e) = geometry.validate() {
                    problems.push(e.to_string());
                }
                if let SweepSpec::Users { values, .. } = &self.sweep {
                    for &n in values {
                        if n == 0 || n > geometry.n_elements() {
                            problems.push(format!(
                                "swept user count {n} must lie in 1..={}",
                                geometry.n_elements()
                            ));
                        }
                    }
                }
            }
        }

        match &self.sweep {
            SweepSpec::PowerDb { lo, hi, step } => {
                if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
                    problems.push("power sweep bounds must be finite".into());
                } else if !(*step > 0.0) {
                    problems.push(format!("power sweep step {step} must be positive"));
                } else if hi < lo {
                    problems.push(format!("power sweep hi {hi} is below lo {lo}"));
                }
            }
            SweepSpec::Users { values, power_db } => {
                if values.is_empty() {
                    problems.push("users sweep needs at least one value".into());
                }
                if matches!(self.channel, ChannelSpec::Fixture { .. }) {
                    problems.push("users sweep is not possible with a fixture channel".into());
                }
                if !power_db.is_finite() {
                    problems.push(format!("power_db {power_db} must be finite"));
                }
            }
            SweepSpec::Beta { values, power_db } => {
                if values.is_empty() {
                    problems.push("beta sweep needs at least one value".into());
                }
                if !matches!(self.channel, ChannelSpec::Kronecker { .. }) {
                    problems.push("beta sweep needs a kronecker channel".into());
                }
                for b in values {
                    if !(0.0..1.0).contains(b) {
                        problems.push(format!("swept beta {b} must lie in [0, 1)"));
                    }
                }
                if !power_db.is_finite() {
                    problems.push(format!("power_db {power_db} must be finite"));
                }
            }
            SweepSpec::None { power_db } => {
                if !power_db.is_finite() {
                    problems.push(format!("power_db {power_db} must be finite"));
                }
            }
        }

        for (i, p) in self.precoders.iter().enumerate() {
            if let Err(e) = p.resolved_family() {
                problems.push(format!("precoder {i}: {e}"));
            }
            if let Some(label) = &p.label {
                if label.is_empty() || label.contains([',', '\n', '\r', '"']) {
                    problems.push(format!(
                        "precoder {i}: label {label:?} must be non-empty without commas, quotes or newlines"
                    ));
                }
            }
        }
        if let Some(counts) = self.user_counts() {
            for n in counts {
                self.check_users(n, &mut problems);
            }
        }
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// SHA-256 over the canonical TOML form of the spec.
    pub fn hash(&self) -> String {
        hash_text(&toml::to_string(self).unwrap_or_else(|_| format!("{self:?}")))
    }

    /// Report labels, made unique by numbering repeats.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::with_capacity(self.precoders.len());
        for p in &self.precoders {
            let base = p.display_label();
            let mut label = base.clone();
            let mut k = 2;
            while labels.contains(&label) {
                label = format!("{base} #{k}");
                k += 1;
            }
            labels.push(label);
        }
        labels
    }
}

/// Ordering selected by `choice` for `family`. Random averages have no single
/// ordering and are rejected here; see [`evaluate_precoder`].
pub fn choose_ordering(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    family: PrecoderFamily,
    objective: Objective,
    choice: OrderingChoice,
    power_budget: f64,
    noise_power: f64,
) -> Result<UserOrdering> {
    let n = gram.n_users();
    match choice {
        OrderingChoice::Identity => Ok(UserOrdering::identity(n)),
        OrderingChoice::Alg1 => order_alg1(gram, family.depth(n)),
        OrderingChoice::Alg2 => Ok(order_alg2(gram)),
        OrderingChoice::BruteForce => match family {
            PrecoderFamily::Zf | PrecoderFamily::GzfDp { .. } => {
                order_bruteforce(gram, family.depth(n), objective, power_budget, noise_power)
            }
            PrecoderFamily::ZfDp | PrecoderFamily::UgDp { .. } => {
                let (perm, value) = bruteforce_by(n, |p| {
                    let ord = UserOrdering {
                        perm: p.to_vec(),
                        ..UserOrdering::identity(n)
                    };
                    let hp = apply_ordering(h, &ord)?;
                    let gp = gram.permuted(p)?;
                    Ok(
                        build(&hp, &gp, family, objective, power_budget, noise_power)?
                            .objective_value(),
                    )
                })?;
                Ok(UserOrdering {
                    perm,
                    method: match objective {
                        Objective::Sum => crate::ordering::OrderingMethod::BruteForceSum,
                        Objective::Min => crate::ordering::OrderingMethod::BruteForceMin,
                    },
                    objective_value: Some(value),
                    note: None,
                })
            }
        },
        OrderingChoice::RandomAvg(_) | OrderingChoice::AllAverage => Err(Error::Parameter(
            format!("ordering {choice} is an average, not a single ordering"),
        )),
    }
}

/// Objective value of `family` after reordering the users by `perm`.
pub fn objective_under(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    family: PrecoderFamily,
    objective: Objective,
    perm: &[usize],
    power_budget: f64,
    noise_power: f64,
) -> Result<f64> {
    let gp = gram.permuted(perm)?;
    match family {
        PrecoderFamily::Zf | PrecoderFamily::GzfDp { .. } => gzf_objective(
            &gp,
            family.depth(perm.len()),
            objective,
            power_budget,
            noise_power,
        ),
        _ => {
            let ord = UserOrdering {
                perm: perm.to_vec(),
                ..UserOrdering::identity(perm.len())
            };
            let hp = apply_ordering(h, &ord)?;
            Ok(build(&hp, &gp, family, objective, power_budget, noise_power)?.objective_value())
        }
    }
}

/// Objective value of one precoder on one channel under the requested ordering.
/// `rng` is only used by random orderings.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_precoder(
    h: &ChannelMatrix,
    gram: &GramGeometry,
    family: PrecoderFamily,
    objective: Objective,
    choice: OrderingChoice,
    power_budget: f64,
    noise_power: f64,
    rng: &mut ChaCha20Rng,
) -> Result<f64> {
    let n = gram.n_users();
    match choice {
        OrderingChoice::Identity => {
            Ok(build(h, gram, family, objective, power_budget, noise_power)?.objective_value())
        }
        OrderingChoice::RandomAvg(k) => {
            let mut total = 0.0;
            for _ in 0..k {
                let ord = order_random(n, 0, rng);
                total += objective_under(
                    h,
                    gram,
                    family,
                    objective,
                    &ord.perm,
                    power_budget,
                    noise_power,
                )?;
            }
            Ok(total / k as f64)
        }
        OrderingChoice::AllAverage => {
            let perms = all_permutations(n);
            let mut total = 0.0;
            for perm in &perms {
                total +=
                    objective_under(h, gram, family, objective, perm, power_budget, noise_power)?;
            }
            Ok(total / perms.len() as f64)
        }
        _ => {
            let ord = choose_ordering(
                h,
                gram,
                family,
                objective,
                choice,
                power_budget,
                noise_power,
            )?;
            objective_under(
                h,
                gram,
                family,
                objective,
                &ord.perm,
                power_budget,
                noise_power,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub sweep: f64,
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMetadata {
    pub name: String,
    pub axis: String,
    pub seed: u64,
    pub spec_hash: String,
    pub version: String,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub metadata: ReportMetadata,
}

impl RateReport {
    /// Rows for one label, in sweep order.
    pub fn series(&self, label: &str) -> Vec<&RateRow> {
        self.rows.iter().filter(|r| r.label == label).collect()
    }

    pub fn row(&self, sweep: f64, label: &str) -> Option<&RateRow> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.sweep == sweep)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        if self.rows.is_empty() {
            return out;
        }
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{}\n",
                r.sweep, r.label, r.mean, r.stderr, r.trials
            ));
        }
        let m = &self.metadata;
        for (key, value) in [
            ("name", m.name.clone()),
            ("axis", m.axis.clone()),
            ("seed", m.seed.to_string()),
            ("spec_sha256", m.spec_hash.clone()),
            ("version", m.version.clone()),
            ("failed_trials", m.failed_trials.to_string()),
        ] {
            out.push_str(&format!("# {key}={value}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{CSV_HEADER}'"),
                })
            }
        }
        let mut report = RateReport::default();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta.trim().split_once('=').ok_or(Error::Parse {
                    line: line_no,
                    message: "metadata line must be '# key=value'".into(),
                })?;
                let m = &mut report.metadata;
                let bad = |what: &str| Error::Parse {
                    line: line_no,
                    message: format!("bad {what} '{value}'"),
                };
                match key {
                    "name" => m.name = value.to_string(),
                    "axis" => m.axis = value.to_string(),
                    "seed" => m.seed = value.parse().map_err(|_| bad("seed"))?,
                    "spec_sha256" => m.spec_hash = value.to_string(),
                    "version" => m.version = value.to_string(),
                    "failed_trials" => {
                        m.failed_trials = value.parse().map_err(|_| bad("failed_trials"))?
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let num = |i: usize, what: &str| {
                fields[i].parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad {what} '{}'", fields[i]),
                })
            };
            report.rows.push(RateRow {
                sweep: num(0, "sweep value")?,
                label: fields[1].to_string(),
                mean: num(2, "mean")?,
                stderr: num(3, "stderr")?,
                trials: fields[4].parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad trial count '{}'", fields[4]),
                })?,
            });
        }
        Ok(report)
    }
}

pub fn emit_report(report: &RateReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RateReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RateReport::from_csv(&text)
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Channel for trial `trial` at sweep value `value`.
fn draw_channel(
    spec: &ExperimentSpec,
    fixture: Option<&ChannelMatrix>,
    value: f64,
    seed: u64,
    trial: u64,
) -> Result<ChannelMatrix> {
    let users_override = match spec.sweep {
        SweepSpec::Users { .. } => Some(value as usize),
        _ => None,
    };
    let mut rng = trial_rng(seed, trial);
    let h = match &spec.channel {
        ChannelSpec::Fixture { .. } => Ok(fixture.expect("fixture loaded").clone()),
        ChannelSpec::Iid { users, antennas } => {
            draw_iid_gaussian(users_override.unwrap_or(*users), *antennas, &mut rng)
        }
        ChannelSpec::Kronecker {
            users,
            antennas,
            beta_t,
            beta_r,
        } => {
            let corr = match spec.sweep {
                SweepSpec::Beta { .. } => CorrelationSpec {
                    beta_t: value,
                    beta_r: value,
                },
                _ => CorrelationSpec {
                    beta_t: *beta_t,
                    beta_r: *beta_r,
                },
            };
            draw_kronecker_rayleigh(users_override.unwrap_or(*users), *antennas, corr, &mut rng)
        }
        ChannelSpec::Fdmimo { geometry } => {
            let mut geom = *geometry;
            if let Some(n) = users_override {
                geom.n_users = n;
            }
            gen_fdmimo_los(&geom)
        }
    }?;
    match spec.condition_limit {
        Some(limit) => h.with_condition_limit(limit),
        None => Ok(h),
    }
}

/// Objective values of every precoder on trial `trial`; `None` when the draw is rank
/// deficient.
fn run_trial(
    spec: &ExperimentSpec,
    fixture: Option<&ChannelMatrix>,
    value: f64,
    seed: u64,
    trial: u64,
) -> Result<Option<Vec<f64>>> {
    let h = draw_channel(spec, fixture, value, seed, trial)?;
    let power_budget = db_to_linear(spec.sweep.power_db_at(value));
    let outcome = (|| {
        let gram = build_gram(&h, spec.noise_power)?;
        spec.precoders
            .iter()
            .map(|p| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed ^ ORDERING_SEED_SALT);
                rng.set_stream(trial);
                evaluate_precoder(
                    &h,
                    &gram,
                    p.resolved_family()?,
                    p.objective,
                    p.ordering,
                    power_budget,
                    spec.noise_power,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<f64>>>()
    })();
    match outcome {
        Ok(values) => Ok(Some(values)),
        Err(Error::RankDeficient { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs every sweep point and aggregates paired trials into a report.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RateReport> {
    spec.validate()?;
    let seed = spec.seed.expect("validated");
    let fixture = match &spec.channel {
        ChannelSpec::Fixture { path } => Some(load_channel_fixture(path)?),
        _ => None,
    };
    if let Some(h) = &fixture {
        let mut problems = Vec::new();
        spec.check_users(h.n_users(), &mut problems);
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
    }
    let trials = if spec.channel.is_deterministic() {
        1
    } else {
        spec.trials
    };
    let labels = spec.labels();

    let mut rows = Vec::new();
    let mut failed_total = 0;
    for value in spec.sweep.values() {
        let outcomes: Vec<Result<Option<Vec<f64>>>> = (0..trials as u64)
            .into_par_iter()
            .map(|t| run_trial(spec, fixture.as_ref(), value, seed, t))
            .collect();
        let mut columns = vec![Vec::with_capacity(trials); labels.len()];
        let mut failed = 0;
        for outcome in outcomes {
            match outcome? {
                Some(values) => {
                    for (col, v) in columns.iter_mut().zip(values) {
                        col.push(v);
                    }
                }
                None => failed += 1,
            }
        }
        if failed > 0 && failed as f64 >= MAX_FAILURE_RATE * trials as f64 {
            return Err(Error::TooManyFailures {
                failed,
                trials,
                sweep: value,
            });
        }
        failed_total += failed;
        for (label, samples) in labels.iter().zip(&columns) {
            let (mean, stderr) = mean_and_stderr(samples);
            rows.push(RateRow {
                sweep: value,
                label: label.clone(),
                mean,
                stderr,
                trials: samples.len(),
            });
        }
    }
    rows.sort_by(|a, b| {
        a.sweep
            .total_cmp(&b.sweep)
            .then_with(|| a.label.cmp(&b.label))
    });

    Ok(RateReport {
        rows,
        metadata: ReportMetadata {
            name: spec.name.clone(),
            axis: spec.sweep.axis_name().to_string(),
            seed,
            spec_hash: spec.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            failed_trials: failed_total,
        },
    })
}
