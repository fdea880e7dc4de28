//! Everything derived from `G = (HH†)⁻¹`.
//!
//! Users are indexed from 0 in this API. User `n` here is user `n + 1` in the usual
//! one-based notation, and a depth `ν` means the same thing in both. For user `n` and
//! depth `ν` the *window* is the index range `n ..= min(n + ν, N − 1)`:
//!
//! * the principal submatrix `Gₙ^ν` is `G` restricted to the window,
//! * the border vector `gₙ^ν` is the part of column `n` below the diagonal inside the
//!   window (`[g_{n,n+1}, …]†` since `G` is Hermitian),
//! * `ĝₙ^ν = gₙₙ − (gₙ^ν)† (G_{n+1}^{ν−1})⁻¹ gₙ^ν` is the Schur complement of `gₙₙ` in
//!   `Gₙ^ν`, and acts as user `n`'s water-filling floor.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::linalg::{check_full_row_rank, hpd_log_det, select, CMatrix, CVector};

/// `n ⊖ ν = max(n − ν, 0)`.
pub fn clamp_down(n: usize, nu: usize) -> usize {
    n.saturating_sub(nu)
}

/// Last index of the window starting at `n`, i.e. `n ⊞ ν` clamped to the last user.
pub fn clamp_up(n: usize, nu: usize, n_users: usize) -> usize {
    (n + nu).min(n_users - 1)
}

pub struct GramGeometry {
    gram: CMatrix,
    /// `U` with `G = U†U`, when `G` came from a channel.
    factor: Option<CMatrix>,
    noise_power: f64,
    cache: Mutex<HashMap<(usize, usize), f64>>,
}

impl Clone for GramGeometry {
    fn clone(&self) -> Self {
        Self {
            gram: self.gram.clone(),
            factor: self.factor.clone(),
            noise_power: self.noise_power,
            cache: Mutex::new(self.cache.lock().expect("ghat cache poisoned").clone()),
        }
    }
}

impl fmt::Debug for GramGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GramGeometry")
            .field("n_users", &self.n_users())
            .field("noise_power", &self.noise_power)
            .field("gram", &self.gram)
            .finish()
    }
}

/// Computes `G = (HH†)⁻¹` from the QR factorization `H† = QR`, as `G = R⁻¹R⁻†`.
pub fn build_gram(h: &ChannelMatrix, noise_power: f64) -> Result<GramGeometry> {
    if !(noise_power > 0.0 && noise_power.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise power {noise_power} must be positive"
        )));
    }
    let entries = h.entries();
    check_full_row_rank(entries, h.condition_limit())?;
    let n = h.n_users();
    let r = entries.adjoint().qr().r();
    let r_inv = r
        .solve_upper_triangular(&CMatrix::identity(n, n))
        .ok_or(Error::RankDeficient {
            smallest_singular_value: 0.0,
            condition: f64::INFINITY,
        })?;
    let mut geometry = GramGeometry::from_gram(&r_inv * r_inv.adjoint(), noise_power)?;
    geometry.factor = Some(r_inv.adjoint());
    Ok(geometry)
}

impl GramGeometry {
    /// Wraps an already computed Hermitian positive-definite `G`. The matrix is
    /// symmetrized as `(G + G†)/2`.
    pub fn from_gram(gram: CMatrix, noise_power: f64) -> Result<Self> {
        if !gram.is_square() || gram.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "Gram matrix must be square and non-empty, got {:?}",
                gram.shape()
            )));
        }
        let adj = gram.adjoint();
        let gram = (gram + adj).map(|z| z * 0.5);
        Ok(Self {
            gram,
            factor: None,
            noise_power,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_users(&self) -> usize {
        self.gram.nrows()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.gram.diagonal().iter().map(|z| z.re).collect()
    }

    fn check(&self, n: usize, nu: usize) -> Result<()> {
        let big_n = self.n_users();
        if n >= big_n {
            return Err(Error::Parameter(format!(
                "user index {n} out of range for {big_n} users"
            )));
        }
        if nu >= big_n {
            return Err(Error::Parameter(format!(
                "depth {nu} out of range, must be below {big_n}"
            )));
        }
        Ok(())
    }

    /// Last index of user `n`'s window at depth `nu`.
    pub fn window_end(&self, n: usize, nu: usize) -> usize {
        clamp_up(n, nu, self.n_users())
    }

    /// `Gₙ^ν`.
    pub fn principal_submatrix(&self, n: usize, nu: usize) -> Result<CMatrix> {
        self.check(n, nu)?;
        let end = self.window_end(n, nu);
        Ok(self
            .gram
            .view((n, n), (end - n + 1, end - n + 1))
            .clone_owned())
    }

    /// `gₙ^ν`, of length `min(n + ν, N − 1) − n`.
    pub fn border_vector(&self, n: usize, nu: usize) -> Result<CVector> {
        self.check(n, nu)?;
        let end = self.window_end(n, nu);
        Ok(self
            .gram
            .view((n + 1, n), (end - n, 1))
            .column(0)
            .clone_owned())
    }

    /// `(G_{n+1}^{ν−1})⁻¹ gₙ^ν`, obtained by a Cholesky solve. Empty when the window
    /// holds user `n` alone.
    pub fn interference_weights(&self, n: usize, nu: usize) -> Result<CVector> {
        let border = self.border_vector(n, nu)?;
        if border.is_empty() {
            return Ok(border);
        }
        let len = border.len();
        let inner = self.gram.view((n + 1, n + 1), (len, len)).clone_owned();
        let chol = inner.cholesky().ok_or(Error::RankDeficient {
            smallest_singular_value: 0.0,
            condition: f64::INFINITY,
        })?;
        Ok(chol.solve(&border))
    }

    /// `ĝₙ^ν`, cached per `(n, ν)`.
    pub fn schur_ghat(&self, n: usize, nu: usize) -> Result<f64> {
        self.check(n, nu)?;
        let end = self.window_end(n, nu);
        // Depths past the boundary share one window; key on the effective one.
        let key = (n, end - n);
        if let Some(&v) = self.cache.lock().expect("ghat cache poisoned").get(&key) {
            return Ok(v);
        }
        let value = match &self.factor {
            Some(u) => residual_norm_sqr(u, n, end),
            None => {
                let border = self.border_vector(n, nu)?;
                let weights = self.interference_weights(n, nu)?;
                let correction: Complex64 = border.dotc(&weights);
                self.gram[(n, n)].re - correction.re
            }
        };
        self.cache
            .lock()
            .expect("ghat cache poisoned")
            .insert(key, value);
        Ok(value)
    }

    /// `ĝₙ^ν` for every user.
    pub fn ghat_all(&self, nu: usize) -> Result<Vec<f64>> {
        (0..self.n_users())
            .map(|n| self.schur_ghat(n, nu))
            .collect()
    }

    /// `(ĝₙ^0, ĝₙ^1, …, ĝₙ^{N−1})`, which is non-increasing and positive.
    pub fn ghat_chain(&self, n: usize) -> Result<Vec<f64>> {
        (0..self.n_users())
            .map(|nu| self.schur_ghat(n, nu))
            .collect()
    }

    /// `log det` of the principal submatrix on an arbitrary user subset.
    pub fn log_det_subset(&self, users: &[usize]) -> f64 {
        let sub = select(&self.gram, users, users);
        hpd_log_det(&sub).unwrap_or(f64::NEG_INFINITY)
    }

    /// `QGQ†` for the ordering `perm` (position `i` holds original user `perm[i]`).
    /// The result starts with an empty cache.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::ordering::check_permutation(perm, self.n_users())?;
        Ok(Self {
            gram: select(&self.gram, perm, perm),
            factor: self.factor.as_ref().map(|u| {
                let rows: Vec<usize> = (0..u.nrows()).collect();
                select(u, &rows, perm)
            }),
            noise_power: self.noise_power,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

/// Squared distance from column `n` of `u` to the span of columns `n+1 ..= end`, read
/// off the last diagonal entry of a QR factorization.
fn residual_norm_sqr(u: &CMatrix, n: usize, end: usize) -> f64 {
    let width = end - n + 1;
    let mut block = CMatrix::zeros(u.nrows(), width);
    for (k, col) in (n + 1..=end).chain(std::iter::once(n)).enumerate() {
        block.set_column(k, &u.column(col));
    }
    let r = block.qr().r();
    r[(width - 1, width - 1)].norm_sqr()
}
