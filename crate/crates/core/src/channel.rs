//! Broadcast channel matrices: fixture files, IID and Kronecker-correlated Rayleigh
//! draws, and a deterministic line-of-sight planar-array scenario.
//!
//! Row `n` of a channel matrix is the channel of user `n` to all transmit antennas.
//! All random generators draw entries row-major from a ChaCha stream, so a given
//! `(seed, stream)` pair always reproduces the same matrix bit for bit.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_sqrt, CMatrix, CONDITION_LIMIT};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelSource {
    Fixture,
    IidGaussian,
    KroneckerRayleigh,
    FdMimoLos,
}

/// An `N × M` complex channel with `N ≤ M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
    source: ChannelSource,
    condition_limit: f64,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix, source: ChannelSource) -> Result<Self> {
        let (n, m) = entries.shape();
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!(
                "channel must be non-empty, got {n}x{m}"
            )));
        }
        if n > m {
            return Err(Error::Dimension(format!(
                "{n} users exceed {m} transmit antennas"
            )));
        }
        Ok(Self {
            entries,
            source,
            condition_limit: CONDITION_LIMIT,
        })
    }

    /// Replaces the rank guard's limit on the condition number of HH†.
    pub fn with_condition_limit(mut self, limit: f64) -> Result<Self> {
        if !(limit >= 1.0 && limit.is_finite()) {
            return Err(Error::Parameter(format!(
                "condition limit {limit} must be finite and at least 1"
            )));
        }
        self.condition_limit = limit;
        Ok(self)
    }

    pub fn condition_limit(&self) -> f64 {
        self.condition_limit
    }

    /// Same settings, new entries.
    pub(crate) fn with_entries(&self, entries: CMatrix) -> Result<Self> {
        Ok(Self {
            condition_limit: self.condition_limit,
            ..Self::new(entries, self.source)?
        })
    }

    pub fn n_users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn source(&self) -> ChannelSource {
        self.source
    }

    /// First `n` users only.
    pub fn leading_users(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_users() {
            return Err(Error::Parameter(format!(
                "cannot keep {n} of {} users",
                self.n_users()
            )));
        }
        self.with_entries(self.entries.rows(0, n).clone_owned())
    }

    /// Channel in the text fixture format, 17 significant digits per number.
    pub fn to_fixture_string(&self) -> String {
        format_matrix(&self.entries)
    }

    pub fn write_fixture(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_fixture_string()).map_err(|e| Error::io(path, e))
    }
}

/// Any complex matrix in the fixture text format.
pub fn format_matrix(a: &CMatrix) -> String {
    let mut out = format!("{} {}\n", a.nrows(), a.ncols());
    for row in a.row_iter() {
        let fields: Vec<String> = row
            .iter()
            .map(|z| format!("{:.16e} {:.16e}", z.re, z.im))
            .collect();
        let _ = writeln!(out, "{}", fields.join("  "));
    }
    out
}

/// Reads a channel fixture: a header line `N M`, then `N` lines of `M` complex
/// entries written as whitespace-separated `re im` pairs. `#` starts a comment.
pub fn load_channel_fixture(path: impl AsRef<Path>) -> Result<ChannelMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_channel_fixture(&text)
}

pub fn parse_channel_fixture(text: &str) -> Result<ChannelMatrix> {
    let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    });

    let (header_line, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing 'N M' header".into(),
    })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: header_line,
            message: format!("header must be 'N M', found {} fields", dims.len()),
        });
    }
    let parse_dim = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: header_line,
            message: format!("{what} '{s}' is not a non-negative integer"),
        })
    };
    let n = parse_dim(dims[0], "N")?;
    let m = parse_dim(dims[1], "M")?;

    let mut values = Vec::with_capacity(n * m);
    let mut rows = 0;
    for (line, body) in lines {
        rows += 1;
        if rows > n {
            return Err(Error::Structure(format!(
                "header declares {n} rows but line {line} holds row {rows}"
            )));
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 2 * m {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} numbers ({m} re/im pairs), found {}",
                    2 * m,
                    fields.len()
                ),
            });
        }
        for (k, pair) in fields.chunks(2).enumerate() {
            let parse = |s: &str, part: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("entry {} {part} part '{s}' is not a number", k + 1),
                })
            };
            values.push(Complex64::new(
                parse(pair[0], "real")?,
                parse(pair[1], "imaginary")?,
            ));
        }
    }
    if rows != n {
        return Err(Error::Structure(format!(
            "header declares {n} rows but the body has {rows}"
        )));
    }
    ChannelMatrix::new(
        CMatrix::from_row_slice(n, m, &values),
        ChannelSource::Fixture,
    )
}

/// Exponential correlation coefficients for the transmit and receive sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub beta_t: f64,
    pub beta_r: f64,
}

impl CorrelationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta_t", self.beta_t), ("beta_r", self.beta_r)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Parameter(format!("{name} = {b} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// `K × K` matrix with entries `β^|i−j|`.
pub fn exponential_correlation(k: usize, beta: f64) -> CMatrix {
    CMatrix::from_fn(k, k, |i, j| c(beta.powi(i.abs_diff(j) as i32)))
}

/// RNG for trial `trial` of a run seeded with `seed`. Streams are independent of the
/// order in which trials are evaluated.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn check_dims(n_users: usize, n_antennas: usize) -> Result<()> {
    if n_users == 0 || n_users > n_antennas {
        return Err(Error::Dimension(format!(
            "need 1 <= N <= M, got N = {n_users}, M = {n_antennas}"
        )));
    }
    Ok(())
}

/// Draws CN(0, 1) entries (real and imaginary parts each N(0, 1/2)).
pub fn draw_iid_gaussian<R: Rng + ?Sized>(
    n_users: usize,
    n_antennas: usize,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    check_dims(n_users, n_antennas)?;
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut values = Vec::with_capacity(n_users * n_antennas);
    for _ in 0..n_users * n_antennas {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        values.push(Complex64::new(scale * re, scale * im));
    }
    ChannelMatrix::new(
        CMatrix::from_row_slice(n_users, n_antennas, &values),
        ChannelSource::IidGaussian,
    )
}

pub fn gen_iid_gaussian(n_users: usize, n_antennas: usize, seed: u64) -> Result<ChannelMatrix> {
    draw_iid_gaussian(n_users, n_antennas, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// `H = R_R^{1/2} H_iid R_T^{1/2}` with exponential correlation on both sides.
pub fn draw_kronecker_rayleigh<R: Rng + ?Sized>(
    n_users: usize,
    n_antennas: usize,
    corr: CorrelationSpec,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    corr.validate()?;
    let iid = draw_iid_gaussian(n_users, n_antennas, rng)?;
    let mut h = iid.entries;
    // β = 0 gives the identity, whose root is exact; skip the products so the
    // uncorrelated case matches the IID generator bit for bit.
    if corr.beta_r != 0.0 {
        h = hermitian_sqrt(&exponential_correlation(n_users, corr.beta_r)) * h;
    }
    if corr.beta_t != 0.0 {
        h *= hermitian_sqrt(&exponential_correlation(n_antennas, corr.beta_t));
    }
    ChannelMatrix::new(h, ChannelSource::KroneckerRayleigh)
}

pub fn gen_kronecker_rayleigh(
    n_users: usize,
    n_antennas: usize,
    corr: CorrelationSpec,
    seed: u64,
) -> Result<ChannelMatrix> {
    draw_kronecker_rayleigh(
        n_users,
        n_antennas,
        corr,
        &mut ChaCha20Rng::seed_from_u64(seed),
    )
}

/// Planar array serving single-antenna users lined up along its boresight.
///
/// The array lies in a vertical plane, centred at height `bs_height_m`. Users stand
/// on the ground on the line through the foot of the array centre that is
/// perpendicular to the array plane; user `k` (0-based) is at horizontal distance
/// `first_user_distance_m + k · user_spacing_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdMimoGeometry {
    pub array_rows: usize,
    pub array_cols: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub carrier_hz: f64,
    pub bs_height_m: f64,
    pub first_user_distance_m: f64,
    pub user_spacing_m: f64,
    pub n_users: usize,
}

impl Default for FdMimoGeometry {
    fn default() -> Self {
        Self {
            array_rows: 8,
            array_cols: 8,
            element_spacing: 0.5,
            carrier_hz: 2.4e9,
            bs_height_m: 20.0,
            first_user_distance_m: 20.0,
            user_spacing_m: 10.0,
            n_users: 8,
        }
    }
}

impl FdMimoGeometry {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn n_elements(&self) -> usize {
        self.array_rows * self.array_cols
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("element_spacing", self.element_spacing),
            ("carrier_hz", self.carrier_hz),
            ("bs_height_m", self.bs_height_m),
            ("first_user_distance_m", self.first_user_distance_m),
            ("user_spacing_m", self.user_spacing_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} = {v} must be positive")));
            }
        }
        if self.array_rows == 0 || self.array_cols == 0 || self.n_users == 0 {
            return Err(Error::Parameter(
                "array_rows, array_cols and n_users must be positive".into(),
            ));
        }
        if self.n_users > self.n_elements() {
            return Err(Error::Parameter(format!(
                "{} users exceed {} array elements",
                self.n_users,
                self.n_elements()
            )));
        }
        Ok(())
    }

    /// Element positions `(x, y, z)`, row-major over the array (rows are vertical).
    pub fn element_positions(&self) -> Vec<[f64; 3]> {
        let d = self.element_spacing * self.wavelength();
        let row_mid = (self.array_rows as f64 - 1.0) / 2.0;
        let col_mid = (self.array_cols as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n_elements());
        for r in 0..self.array_rows {
            for col in 0..self.array_cols {
                out.push([
                    0.0,
                    (col as f64 - col_mid) * d,
                    self.bs_height_m + (r as f64 - row_mid) * d,
                ]);
            }
        }
        out
    }

    pub fn user_positions(&self) -> Vec<[f64; 3]> {
        (0..self.n_users)
            .map(|k| {
                [
                    self.first_user_distance_m + k as f64 * self.user_spacing_m,
                    0.0,
                    0.0,
                ]
            })
            .collect()
    }
}

/// Free-space line-of-sight channel: amplitude `λ/(4πd)` and phase `−2πd/λ` for every
/// element–user pair.
pub fn gen_fdmimo_los(geom: &FdMimoGeometry) -> Result<ChannelMatrix> {
    geom.validate()?;
    let lambda = geom.wavelength();
    let elements = geom.element_positions();
    let users = geom.user_positions();
    let h = CMatrix::from_fn(users.len(), elements.len(), |n, m| {
        let d = distance(&users[n], &elements[m]);
        Complex64::from_polar(lambda / (4.0 * PI * d), -2.0 * PI * d / lambda)
    });
    ChannelMatrix::new(h, ChannelSource::FdMimoLos)
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
