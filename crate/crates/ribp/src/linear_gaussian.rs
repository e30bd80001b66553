//! Collapsed linear-Gaussian observation model.
//!
//! Data `X` (N x D) is modeled as `Z A + noise` with the feature weights
//! `A ~ N(0, sigma_a^2)` integrated out:
//!
//! ```text
//! log g(X|Z) = -(N D / 2) ln(2 pi) - (N - K) D ln sigma_x - K D ln sigma_a
//!              - (D / 2) ln det M - [tr(X^T X) - tr(W^T M^{-1} W)] / (2 sigma_x^2)
//! ```
//!
//! with `M = Z^T Z + (sigma_x^2 / sigma_a^2) I` and `W = Z^T X`. Keeping the
//! ridge on all K truncation columns is algebraically identical to
//! restricting to the active columns, so zero columns need no special case.
//!
//! Row rescoring is the sampler's hot path. A scorer removes row `n` once
//! (Sherman-Morrison downdate of a cached `M^{-1}`), precomputes the
//! products shared by all candidate rows, and then scores each candidate
//! with a rank-one update in `O(K S + S D)`.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, ObservationModel, RowScorer};

#[derive(Debug, Clone)]
pub struct LinearGaussianData {
    pub x: DMatrix<f64>,
    pub sigma_x: f64,
    pub sigma_a: f64,
}

impl LinearGaussianData {
    pub fn new(x: DMatrix<f64>, sigma_x: f64, sigma_a: f64) -> Result<Self> {
        if !(sigma_x > 0.0) || !(sigma_a > 0.0) {
            return Err(Error::Domain(format!(
                "noise scales must be positive (sigma_x = {sigma_x}, sigma_a = {sigma_a})"
            )));
        }
        Ok(Self { x, sigma_x, sigma_a })
    }
}

struct Cache {
    matrix_id: u64,
    version: u64,
    minv: DMatrix<f64>,
    logdet: f64,
    ztx: DMatrix<f64>, // K x D
    commits_since_refresh: usize,
}

/// Stateful evaluator for one (X, sigma_x, sigma_a, K) problem.
pub struct LinearGaussianModel {
    data: LinearGaussianData,
    k: usize,
    ridge: f64,
    tr_xtx: f64,
    const_term: f64,
    refresh_every: usize,
    cache: RefCell<Option<Cache>>,
}

impl LinearGaussianModel {
    pub fn new(data: LinearGaussianData, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("K must be >= 1".into()));
        }
        let n = data.x.nrows();
        let d = data.x.ncols();
        let ridge = data.sigma_x * data.sigma_x / (data.sigma_a * data.sigma_a);
        let tr_xtx = data.x.iter().map(|v| v * v).sum();
        let const_term = -(n as f64 * d as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln()
            - (n as f64 - k as f64) * d as f64 * data.sigma_x.ln()
            - k as f64 * d as f64 * data.sigma_a.ln();
        Ok(Self {
            data,
            k,
            ridge,
            tr_xtx,
            const_term,
            refresh_every: n.max(8),
            cache: RefCell::new(None),
        })
    }

    pub fn data(&self) -> &LinearGaussianData {
        &self.data
    }

    fn build_cache(&self, z: &FeatureMatrix) -> Cache {
        let (minv, logdet) = self.factor(z);
        let ztx = self.compute_ztx(z);
        Cache {
            matrix_id: z.id(),
            version: z.version(),
            minv,
            logdet,
            ztx,
            commits_since_refresh: 0,
        }
    }

    fn compute_m(&self, z: &FeatureMatrix) -> DMatrix<f64> {
        let k = self.k;
        let mut m = DMatrix::from_diagonal_element(k, k, self.ridge);
        for n in 0..z.n_rows() {
            let row = z.row(n);
            let active: Vec<usize> = (0..k).filter(|&j| row[j] == 1).collect();
            for &a in &active {
                for &b in &active {
                    m[(a, b)] += 1.0;
                }
            }
        }
        m
    }

    fn compute_ztx(&self, z: &FeatureMatrix) -> DMatrix<f64> {
        let d = self.data.x.ncols();
        let mut ztx = DMatrix::zeros(self.k, d);
        for n in 0..z.n_rows() {
            let row = z.row(n);
            for j in 0..self.k {
                if row[j] == 1 {
                    for c in 0..d {
                        ztx[(j, c)] += self.data.x[(n, c)];
                    }
                }
            }
        }
        ztx
    }

    fn factor(&self, z: &FeatureMatrix) -> (DMatrix<f64>, f64) {
        let m = self.compute_m(z);
        let chol = m.cholesky().expect("M is positive definite with ridge > 0");
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        (chol.inverse(), logdet)
    }

    fn with_cache<T>(&self, z: &FeatureMatrix, f: impl FnOnce(&Cache) -> T) -> T {
        let mut guard = self.cache.borrow_mut();
        let stale = match guard.as_ref() {
            Some(c) => c.matrix_id != z.id() || c.version != z.version(),
            None => true,
        };
        if stale {
            *guard = Some(self.build_cache(z));
        }
        f(guard.as_ref().unwrap())
    }

    fn loglik_from(&self, logdet: f64, quad: f64) -> f64 {
        let d = self.data.x.ncols() as f64;
        self.const_term - (d / 2.0) * logdet
            - (self.tr_xtx - quad) / (2.0 * self.data.sigma_x * self.data.sigma_x)
    }

    /// Posterior mean of the integrated-out weights, `M^{-1} Z^T X` (K x D).
    pub fn posterior_weight_mean(&self, z: &FeatureMatrix) -> DMatrix<f64> {
        self.with_cache(z, |c| &c.minv * &c.ztx)
    }

    /// Model reconstruction `Z E[A | Z, X]` (N x D).
    pub fn reconstruction(&self, z: &FeatureMatrix) -> DMatrix<f64> {
        let a = self.posterior_weight_mean(z);
        let mut out = DMatrix::zeros(z.n_rows(), self.data.x.ncols());
        for n in 0..z.n_rows() {
            let row = z.row(n);
            for j in 0..self.k {
                if row[j] == 1 {
                    for c in 0..self.data.x.ncols() {
                        out[(n, c)] += a[(j, c)];
                    }
                }
            }
        }
        out
    }
}

fn active_indices(row: &[u8]) -> impl Iterator<Item = usize> + '_ {
    row.iter().enumerate().filter(|(_, &b)| b == 1).map(|(j, _)| j)
}

impl ObservationModel for LinearGaussianModel {
    fn full_loglik(&self, z: &FeatureMatrix) -> f64 {
        assert_eq!(z.n_cols(), self.k, "matrix width must match truncation level");
        assert_eq!(z.n_rows(), self.data.x.nrows(), "row counts must match");
        let ll = self.with_cache(z, |c| {
            let w = &c.ztx;
            let quad = (&c.minv * w).component_mul(w).sum();
            self.loglik_from(c.logdet, quad)
        });
        if !ll.is_finite() {
            // Surfaces as a panic-free sentinel; callers audit for finiteness.
            return f64::NEG_INFINITY;
        }
        ll
    }

    fn row_scorer<'a>(&'a self, z: &FeatureMatrix, n: usize) -> Box<dyn RowScorer + 'a> {
        let scorer = self.with_cache(z, |c| {
            let k = self.k;
            let xn = self.data.x.row(n).transpose();
            let zn: Vec<usize> = active_indices(z.row(n)).collect();

            // Downdate row n out of M^{-1}: E = (M - z_n z_n^T)^{-1}.
            let mut v = DVector::zeros(k);
            for &j in &zn {
                v += c.minv.column(j);
            }
            let beta = 1.0 - zn.iter().map(|&j| v[j]).sum::<f64>();
            let mut e = c.minv.clone();
            if !zn.is_empty() {
                e.ger(1.0 / beta, &v, &v, 1.0);
            }
            let logdet0 = c.logdet + beta.ln();

            let mut b0 = c.ztx.clone();
            for &j in &zn {
                let mut r = b0.row_mut(j);
                r -= xn.transpose();
            }
            let eb0 = &e * &b0;
            let tr_b0t_e_b0 = eb0.component_mul(&b0).sum();
            let eb0_xn = &eb0 * &xn;
            let xn_norm2 = xn.norm_squared();
            LgRowScorer {
                model: self,
                e,
                logdet0,
                eb0,
                tr_b0t_e_b0,
                eb0_xn,
                xn_norm2,
            }
        });
        Box::new(scorer)
    }

    fn notify_row_change(&self, z: &FeatureMatrix, n: usize, old_row: &[u8]) {
        let mut guard = self.cache.borrow_mut();
        let Some(cache) = guard.as_mut() else {
            return;
        };
        if cache.matrix_id != z.id() {
            *guard = Some(self.build_cache(z));
            return;
        }
        let new_row = z.row(n);
        if cache.commits_since_refresh + 1 >= self.refresh_every {
            *guard = Some(self.build_cache(z));
            return;
        }
        let k = self.k;
        let old: Vec<usize> = active_indices(old_row).collect();
        let new: Vec<usize> = active_indices(new_row).collect();

        // M^{-1}: remove old row, add new row (two Sherman-Morrison steps).
        let mut v = DVector::zeros(k);
        for &j in &old {
            v += cache.minv.column(j);
        }
        let beta = 1.0 - old.iter().map(|&j| v[j]).sum::<f64>();
        if !old.is_empty() {
            cache.minv.ger(1.0 / beta, &v, &v, 1.0);
        }
        let mut u = DVector::zeros(k);
        for &j in &new {
            u += cache.minv.column(j);
        }
        let gamma = 1.0 + new.iter().map(|&j| u[j]).sum::<f64>();
        if !new.is_empty() {
            cache.minv.ger(-1.0 / gamma, &u, &u, 1.0);
        }
        cache.logdet += beta.ln() + gamma.ln();

        let xn = self.data.x.row(n);
        for j in 0..k {
            let delta = new_row[j] as f64 - old_row[j] as f64;
            if delta != 0.0 {
                for c in 0..xn.ncols() {
                    cache.ztx[(j, c)] += delta * xn[c];
                }
            }
        }
        cache.version = z.version();
        cache.commits_since_refresh += 1;
    }

    fn as_dyn(&self) -> &dyn ObservationModel {
        self
    }
}

pub struct LgRowScorer<'a> {
    model: &'a LinearGaussianModel,
    e: DMatrix<f64>,
    logdet0: f64,
    eb0: DMatrix<f64>,
    tr_b0t_e_b0: f64,
    eb0_xn: DVector<f64>,
    xn_norm2: f64,
}

impl RowScorer for LgRowScorer<'_> {
    fn loglik(&self, row: &[u8]) -> f64 {
        let active: Vec<usize> = active_indices(row).collect();
        // c = 1 + z'^T E z'
        let mut c = 1.0;
        for &a in &active {
            for &b in &active {
                c += self.e[(a, b)];
            }
        }
        // u^T B0 summed over active rows of E B0 (E is symmetric).
        let d = self.eb0.ncols();
        let mut utb0_norm2 = 0.0;
        if !active.is_empty() {
            for col in 0..d {
                let mut s = 0.0;
                for &a in &active {
                    s += self.eb0[(a, col)];
                }
                utb0_norm2 += s * s;
            }
        }
        let t1 = self.tr_b0t_e_b0 - utb0_norm2 / c;
        let dd: f64 = active.iter().map(|&a| self.eb0_xn[a]).sum();
        let t2 = 2.0 * dd / c;
        let t3 = (c - 1.0) / c * self.xn_norm2;
        let quad = t1 + t2 + t3;
        self.model.loglik_from(self.logdet0 + c.ln(), quad)
    }
}
