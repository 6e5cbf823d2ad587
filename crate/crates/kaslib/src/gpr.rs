//! Gaussian process regression over reduced coordinates: RBF kernel,
//! hyperparameter search by negative log-likelihood (coarse log-grid plus
//! compass pattern search), posterior prediction, and RRMSE scoring.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, CholFactor};

/// RBF kernel hyperparameters: k(x, y) = signal_variance ·
/// exp(−‖x−y‖²/(2·lengthscale²)), plus observation noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0) || !(self.signal_variance > 0.0) {
            return Err(Error::Argument(
                "lengthscale and signal_variance must be > 0".into(),
            ));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::Argument("noise_variance must be >= 0".into()));
        }
        Ok(())
    }
}

/// A fitted GP: training data, kernel config, and the cached factorization
/// and weights needed for O(N) prediction. Vector-valued targets share one
/// config; each output column gets its own weight column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GpModelJson", try_from = "GpModelJson")]
pub struct GpModel {
    pub xr: Array2<f64>,
    pub y: Array2<f64>,
    pub cfg: KernelConfig,
    alpha: Array2<f64>,
    chol: CholFactor,
}

impl GpModel {
    /// Build the cached factorization for a given config without fitting.
    pub fn from_config(xr: Array2<f64>, y: Array2<f64>, cfg: KernelConfig) -> Result<GpModel> {
        cfg.validate()?;
        if xr.nrows() != y.nrows() {
            return Err(Error::Dim(format!(
                "{} inputs vs {} target rows",
                xr.nrows(),
                y.nrows()
            )));
        }
        if xr.nrows() == 0 {
            return Err(Error::Argument("need at least one training point".into()));
        }
        let k = kernel_matrix(&xr, &cfg);
        let chol = numerics::chol_factor(&k, 0.0)?;
        let alpha = chol.solve(&y)?;
        Ok(GpModel {
            xr,
            y,
            cfg,
            alpha,
            chol,
        })
    }

    pub fn n(&self) -> usize {
        self.xr.nrows()
    }

    pub fn r(&self) -> usize {
        self.xr.ncols()
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }

    /// Posterior mean (one entry per output) and shared variance at a query.
    pub fn predict(&self, xr: ArrayView1<f64>) -> Result<(Array1<f64>, f64)> {
        if xr.len() != self.r() {
            return Err(Error::Dim(format!(
                "query has {} coordinates, model has r={}",
                xr.len(),
                self.r()
            )));
        }
        let k = self.cross_kernel(xr);
        let mean = self.alpha.t().dot(&k);
        let kcol = k.clone().insert_axis(ndarray::Axis(1));
        let solved = self.chol.solve(&kcol)?;
        let var = self.cfg.signal_variance - k.dot(&solved.column(0));
        Ok((mean, var.max(0.0)))
    }

    /// Row-wise prediction over a query matrix.
    pub fn predict_batch(&self, xq: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        let mut means = Array2::zeros((xq.nrows(), self.d()));
        let mut vars = Array1::zeros(xq.nrows());
        for (i, row) in xq.rows().into_iter().enumerate() {
            let (m, v) = self.predict(row)?;
            means.row_mut(i).assign(&m);
            vars[i] = v;
        }
        Ok((means, vars))
    }

    /// ‖(K+σI)·α − Y‖_F relative to ‖Y‖_F; the cache invariant keeps this
    /// below 1e-8.
    pub fn cache_residual(&self) -> f64 {
        let k = kernel_matrix(&self.xr, &self.cfg);
        let jitter = self.chol.jitter;
        let mut kj = k;
        for i in 0..self.n() {
            kj[[i, i]] += jitter;
        }
        let resid = kj.dot(&self.alpha) - &self.y;
        let ynorm = numerics::frob(&self.y);
        if ynorm == 0.0 {
            numerics::frob(&resid)
        } else {
            numerics::frob(&resid) / ynorm
        }
    }

    fn cross_kernel(&self, xr: ArrayView1<f64>) -> Array1<f64> {
        let inv = -0.5 / (self.cfg.lengthscale * self.cfg.lengthscale);
        Array1::from_iter(self.xr.rows().into_iter().map(|row| {
            let d2 = row
                .iter()
                .zip(xr.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            self.cfg.signal_variance * (inv * d2).exp()
        }))
    }
}

fn kernel_matrix(xr: &Array2<f64>, cfg: &KernelConfig) -> Array2<f64> {
    let n = xr.nrows();
    let inv = -0.5 / (cfg.lengthscale * cfg.lengthscale);
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = cfg.signal_variance + cfg.noise_variance;
        for j in 0..i {
            let d2 = xr
                .row(i)
                .iter()
                .zip(xr.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            let v = cfg.signal_variance * (inv * d2).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Relative root mean square error √(Σ(t_i−y_i)²/Σ(y_i−ȳ)²) with targets y
/// and predictions t.
pub fn rrmse(targets: ArrayView1<f64>, preds: ArrayView1<f64>) -> Result<f64> {
    if targets.len() != preds.len() {
        return Err(Error::Dim(format!(
            "{} targets vs {} predictions",
            targets.len(),
            preds.len()
        )));
    }
    if targets.len() < 2 {
        return Err(Error::Argument("rrmse needs at least two points".into()));
    }
    let mean = targets.sum() / targets.len() as f64;
    let num: f64 = targets
        .iter()
        .zip(preds.iter())
        .map(|(y, t)| (t - y) * (t - y))
        .sum();
    let den: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    if den == 0.0 {
        return Err(Error::Domain("targets are constant, rrmse undefined".into()));
    }
    Ok((num / den).sqrt())
}

/// Noise floor applied during factorization, relative to signal variance.
const NOISE_FLOOR: f64 = 1e-10;

/// Eigendecomposition of the unit correlation matrix, `None` if it failed.
type CorrEig = Option<(Array1<f64>, Array2<f64>)>;

/// Per-lengthscale eigendecomposition cache. K(l,s,σ) = s·C(l) + σI shares
/// the eigenvectors of the unit correlation matrix C(l), so each new (s, σ)
/// costs O(N·d) once C(l) is decomposed.
struct NllCache<'a> {
    dist2: Array2<f64>,
    y: &'a Array2<f64>,
    by_l: HashMap<u64, CorrEig>,
}

impl<'a> NllCache<'a> {
    fn new(xr: &Array2<f64>, y: &'a Array2<f64>) -> Self {
        let n = xr.nrows();
        let mut dist2 = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..i {
                let d2 = xr
                    .row(i)
                    .iter()
                    .zip(xr.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                dist2[[i, j]] = d2;
                dist2[[j, i]] = d2;
            }
        }
        NllCache {
            dist2,
            y,
            by_l: HashMap::new(),
        }
    }

    /// NLL up to an additive constant; +inf for configs that are not SPD or
    /// whose correlation matrix fails to decompose.
    fn nll(&mut self, cfg: &KernelConfig) -> f64 {
        let n = self.dist2.nrows();
        let y = self.y;
        let entry = self.by_l.entry(cfg.lengthscale.to_bits()).or_insert_with(|| {
            let inv = -0.5 / (cfg.lengthscale * cfg.lengthscale);
            let c = self.dist2.mapv(|d2| (inv * d2).exp());
            match numerics::sym_eig_desc(&c) {
                Ok((lam, q)) => Some((lam, q.t().dot(y))),
                Err(_) => None,
            }
        });
        let Some((lam, qty)) = entry else {
            return f64::INFINITY;
        };
        let s = cfg.signal_variance;
        let sigma = cfg.noise_variance.max(NOISE_FLOOR * s);
        let d = y.ncols() as f64;
        let mut logdet = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            let t = s * lam[i] + sigma;
            if !(t > 0.0) {
                return f64::INFINITY;
            }
            logdet += t.ln();
            quad += qty.row(i).iter().map(|q| q * q).sum::<f64>() / t;
        }
        let nll = 0.5 * (d * logdet + quad);
        if nll.is_finite() {
            nll
        } else {
            f64::INFINITY
        }
    }
}

fn median_pairwise_distance(dist2: &Array2<f64>) -> f64 {
    let n = dist2.nrows();
    let mut ds: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            ds.push(dist2[[i, j]].sqrt());
        }
    }
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    match ds.get(ds.len() / 2) {
        Some(&v) if v > 0.0 => v,
        _ => 1.0,
    }
}

/// Fit kernel hyperparameters by NLL: an 8-point-per-axis log grid spanning
/// [1e-3, 1e3] times the data scale on each axis, refined by compass pattern
/// search in log space with at most `budget` evaluations (500 when zero).
/// The init config competes as a candidate, so the fitted NLL never exceeds
/// NLL(init).
pub fn gp_fit(
    xr: &Array2<f64>,
    y: &Array2<f64>,
    init: KernelConfig,
    budget: usize,
) -> Result<GpModel> {
    let (model, _) = fit_with_trace(xr, y, init, budget)?;
    Ok(model)
}

pub(crate) fn fit_with_trace(
    xr: &Array2<f64>,
    y: &Array2<f64>,
    init: KernelConfig,
    budget: usize,
) -> Result<(GpModel, Vec<f64>)> {
    init.validate()?;
    if xr.nrows() < 2 {
        return Err(Error::Argument("gp_fit needs at least two points".into()));
    }
    if xr.nrows() != y.nrows() {
        return Err(Error::Dim(format!(
            "{} inputs vs {} target rows",
            xr.nrows(),
            y.nrows()
        )));
    }
    if xr.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("inputs and targets must be finite".into()));
    }
    let budget = if budget == 0 { 500 } else { budget };

    let mut cache = NllCache::new(xr, y);
    let l_scale = median_pairwise_distance(&cache.dist2);
    let y_mean = y.sum() / y.len() as f64;
    let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / y.len() as f64;
    let y_scale = if y_var > 0.0 { y_var } else { 1.0 };

    // Coarse grid: 8 log-spaced points per axis over [1e-3, 1e3]·scale.
    let axis = |scale: f64| -> Vec<f64> {
        let lo = (1e-3 * scale).ln();
        let hi = (1e3 * scale).ln();
        (0..8)
            .map(|i| (lo + (hi - lo) * i as f64 / 7.0).exp())
            .collect()
    };
    let ls = axis(l_scale);
    let ss = axis(y_scale);
    let sigmas = axis(y_scale);

    let floored = |cfg: KernelConfig| KernelConfig {
        noise_variance: cfg.noise_variance.max(NOISE_FLOOR * cfg.signal_variance),
        ..cfg
    };
    let init = floored(init);
    let mut best = init;
    let mut best_nll = cache.nll(&init);
    let mut trace = vec![best_nll];
    for &l in &ls {
        for &s in &ss {
            for &sigma in &sigmas {
                let cfg = KernelConfig {
                    lengthscale: l,
                    signal_variance: s,
                    noise_variance: sigma,
                };
                let v = cache.nll(&cfg);
                if v < best_nll {
                    best_nll = v;
                    best = cfg;
                    trace.push(v);
                }
            }
        }
    }

    // Compass pattern search in (ln l, ln s, ln σ). Initial step is one grid
    // spacing; halve on a full sweep without improvement.
    let mut point = [
        best.lengthscale.ln(),
        best.signal_variance.ln(),
        best.noise_variance.ln(),
    ];
    let mut step = (1e6f64).ln() / 7.0;
    let min_step = 0.05 * (10f64).ln();
    let mut evals = 0usize;
    'outer: while step >= min_step && evals < budget {
        let mut improved = false;
        for dim in 0..3 {
            for dir in [1.0, -1.0] {
                if evals >= budget {
                    break 'outer;
                }
                let mut cand = point;
                cand[dim] += dir * step;
                let cfg = KernelConfig {
                    lengthscale: cand[0].exp(),
                    signal_variance: cand[1].exp(),
                    noise_variance: cand[2].exp(),
                };
                evals += 1;
                let v = cache.nll(&cfg);
                if v < best_nll {
                    best_nll = v;
                    best = cfg;
                    point = cand;
                    trace.push(v);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let model = GpModel::from_config(xr.clone(), y.clone(), floored(best))?;
    Ok((model, trace))
}

/// Flat JSON document; the factorization cache is rebuilt on load.
#[derive(Serialize, Deserialize, Clone)]
struct GpModelJson {
    #[serde(rename = "Xr")]
    xr: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    y: Vec<Vec<f64>>,
    cfg: KernelConfig,
}

impl From<GpModel> for GpModelJson {
    fn from(m: GpModel) -> Self {
        GpModelJson {
            xr: m.xr.rows().into_iter().map(|r| r.to_vec()).collect(),
            y: m.y.rows().into_iter().map(|r| r.to_vec()).collect(),
            cfg: m.cfg,
        }
    }
}

impl TryFrom<GpModelJson> for GpModel {
    type Error = String;

    fn try_from(j: GpModelJson) -> std::result::Result<Self, String> {
        let parse = |rows: &[Vec<f64>], name: &str| -> std::result::Result<Array2<f64>, String> {
            let ncols = rows.first().map_or(0, |r| r.len());
            let mut a = Array2::zeros((rows.len(), ncols));
            for (i, row) in rows.iter().enumerate() {
                if row.len() != ncols {
                    return Err(format!("{name} row {i} is ragged"));
                }
                for (k, &v) in row.iter().enumerate() {
                    a[[i, k]] = v;
                }
            }
            Ok(a)
        };
        let xr = parse(&j.xr, "Xr")?;
        let y = parse(&j.y, "Y")?;
        GpModel::from_config(xr, y, j.cfg).map_err(|e| e.to_string())
    }
}
