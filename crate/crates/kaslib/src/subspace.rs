//! Active-subspace computation: uncentered gradient covariance with an SPD
//! output metric, eigendecomposition, and projection to reduced coordinates.
//! Covers the classic variant (on model gradients) and the kernel-based
//! variant (on gradients lifted through a feature map).

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::datasets::{normalize, GradientDataset};
use crate::error::{Error, Result};
use crate::featuremap::FeatureMap;
use crate::numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceKind {
    As,
    Kas,
}

/// Eigendecomposition of the gradient covariance split at active dimension r.
///
/// For the classic variant the decomposition lives in input space (length m);
/// for the kernel variant it lives in feature space (length D) and carries the
/// feature map used to project new inputs. W2 is omitted for the kernel
/// variant, where the inactive block would be a dense D x (D - r) matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SubspaceJson", try_from = "SubspaceJson")]
pub struct SubspaceResult {
    pub kind: SubspaceKind,
    pub r: usize,
    /// Descending, clamped at zero.
    pub eigvals: Array1<f64>,
    pub w1: Array2<f64>,
    pub w2: Option<Array2<f64>>,
    pub feature_map: Option<FeatureMap>,
}

impl SubspaceResult {
    /// Orthogonal projector W1·W1ᵀ onto the active subspace.
    pub fn projector(&self) -> Array2<f64> {
        self.w1.dot(&self.w1.t())
    }

    /// Successive eigenvalue ratios λ_i/λ_{i+1}; infinite past rank.
    pub fn gap_ratios(&self) -> Vec<f64> {
        let v = &self.eigvals;
        (0..v.len().saturating_sub(1))
            .map(|i| {
                if v[i + 1] == 0.0 {
                    f64::INFINITY
                } else {
                    v[i] / v[i + 1]
                }
            })
            .collect()
    }
}

/// Uncentered covariance (1/M)·Σ_k dY_kᵀ·R_V·dY_k accumulated over a fixed
/// pairwise tree so the result does not depend on scheduling.
pub fn covariance(dys: &[Array2<f64>], metric: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    let first = dys
        .first()
        .ok_or_else(|| Error::Argument("covariance needs at least one gradient".into()))?;
    let (d, p) = first.dim();
    for (k, dy) in dys.iter().enumerate() {
        if dy.dim() != (d, p) {
            return Err(Error::Dim(format!(
                "gradient {k} is {}x{}, expected {d}x{p}",
                dy.nrows(),
                dy.ncols()
            )));
        }
    }
    if let Some(r) = metric {
        if r.dim() != (d, d) {
            return Err(Error::Dim(format!(
                "metric is {}x{}, expected {d}x{d}",
                r.nrows(),
                r.ncols()
            )));
        }
    }
    let mut h = pairwise_sum(dys, metric, 0, dys.len());
    h /= dys.len() as f64;
    let ht = h.t().to_owned();
    h += &ht;
    h *= 0.5;
    Ok(h)
}

fn pairwise_sum(
    dys: &[Array2<f64>],
    metric: Option<&Array2<f64>>,
    lo: usize,
    hi: usize,
) -> Array2<f64> {
    if hi - lo == 1 {
        let dy = &dys[lo];
        return match metric {
            Some(r) => dy.t().dot(&r.dot(dy)),
            None => dy.t().dot(dy),
        };
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_sum(dys, metric, lo, mid) + pairwise_sum(dys, metric, mid, hi)
}

fn decompose(
    h: &Array2<f64>,
    kind: SubspaceKind,
    r: usize,
    keep_w2: bool,
    feature_map: Option<FeatureMap>,
) -> Result<SubspaceResult> {
    let (mut vals, vecs) = numerics::sym_eig_desc(h)?;
    let band = 1e-10 * vals[0].abs();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            if *v >= -band {
                *v = 0.0;
            } else {
                return Err(Error::Domain(format!(
                    "covariance has a negative eigenvalue {v:e}"
                )));
            }
        }
    }
    let w1 = vecs.slice(s![.., ..r]).to_owned();
    let w2 = keep_w2.then(|| vecs.slice(s![.., r..]).to_owned());
    Ok(SubspaceResult {
        kind,
        r,
        eigvals: vals,
        w1,
        w2,
        feature_map,
    })
}

/// Classic active subspace of a gradient dataset.
pub fn active_subspace(ds: &GradientDataset, r: usize) -> Result<SubspaceResult> {
    let m = ds.m();
    if r < 1 || r >= m {
        return Err(Error::Argument(format!(
            "active dimension r={r} out of range [1, {})",
            m
        )));
    }
    let h = covariance(&ds.dy, ds.metric.as_ref())?;
    decompose(&h, SubspaceKind::As, r, true, None)
}

/// Kernel-based active subspace: gradients are lifted through the feature-map
/// Jacobian at each (normalized) sample, then treated as gradients in feature
/// space.
pub fn kernel_active_subspace(
    ds: &GradientDataset,
    fm: &FeatureMap,
    r: usize,
) -> Result<SubspaceResult> {
    if fm.m() != ds.m() {
        return Err(Error::Dim(format!(
            "feature map has m={}, dataset has m={}",
            fm.m(),
            ds.m()
        )));
    }
    let d_feat = fm.d();
    if r < 1 || r >= d_feat {
        return Err(Error::Argument(format!(
            "active dimension r={r} out of range [1, {d_feat})"
        )));
    }
    let xn = normalize(&ds.x, &ds.spec)?;
    let mut lifted = Vec::with_capacity(ds.n_samples());
    for k in 0..ds.n_samples() {
        let lift = fm.lift_gradient(xn.row(k), &ds.dy[k]).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!("sample {k}: {msg}")),
            other => other,
        })?;
        lifted.push(lift);
    }
    let h = covariance(&lifted, ds.metric.as_ref())?;
    decompose(&h, SubspaceKind::Kas, r, false, Some(fm.clone()))
}

/// Project normalized inputs to reduced coordinates: X·W1 for the classic
/// variant, Φ(X)·W1 for the kernel variant.
pub fn project(res: &SubspaceResult, x: &Array2<f64>) -> Result<Array2<f64>> {
    match res.kind {
        SubspaceKind::As => {
            if x.ncols() != res.w1.nrows() {
                return Err(Error::Dim(format!(
                    "inputs have {} columns, subspace lives in dimension {}",
                    x.ncols(),
                    res.w1.nrows()
                )));
            }
            Ok(x.dot(&res.w1))
        }
        SubspaceKind::Kas => {
            let fm = res.feature_map.as_ref().ok_or_else(|| {
                Error::State("kernel subspace is missing its feature map".into())
            })?;
            if x.ncols() != fm.m() {
                return Err(Error::Dim(format!(
                    "inputs have {} columns, feature map has m={}",
                    x.ncols(),
                    fm.m()
                )));
            }
            Ok(fm.apply_batch(x).dot(&res.w1))
        }
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct SubspaceJson {
    kind: SubspaceKind,
    r: usize,
    eigvals: Vec<f64>,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    #[serde(rename = "W2", skip_serializing_if = "Option::is_none")]
    w2: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature_map: Option<FeatureMap>,
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize, name: &str) -> std::result::Result<Array2<f64>, String> {
    let mut a = Array2::zeros((rows.len(), ncols));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(format!("{name} row {i} has {} entries, expected {ncols}", row.len()));
        }
        for (j, &v) in row.iter().enumerate() {
            a[[i, j]] = v;
        }
    }
    Ok(a)
}

impl From<SubspaceResult> for SubspaceJson {
    fn from(res: SubspaceResult) -> Self {
        SubspaceJson {
            kind: res.kind,
            r: res.r,
            eigvals: res.eigvals.to_vec(),
            w1: to_rows(&res.w1),
            w2: res.w2.as_ref().map(to_rows),
            feature_map: res.feature_map,
        }
    }
}

impl TryFrom<SubspaceJson> for SubspaceResult {
    type Error = String;

    fn try_from(j: SubspaceJson) -> std::result::Result<Self, String> {
        if j.w1.is_empty() {
            return Err("W1 is empty".into());
        }
        if j.w1[0].len() != j.r {
            return Err(format!("W1 has {} columns, r={}", j.w1[0].len(), j.r));
        }
        let w1 = from_rows(&j.w1, j.r, "W1")?;
        if j.eigvals.len() != w1.nrows() {
            return Err(format!(
                "eigvals length {} does not match W1 rows {}",
                j.eigvals.len(),
                w1.nrows()
            ));
        }
        let w2 = match &j.w2 {
            Some(rows) => {
                let ncols = rows.first().map_or(0, |r| r.len());
                let w2 = from_rows(rows, ncols, "W2")?;
                if w2.nrows() != w1.nrows() {
                    return Err("W2 rows do not match W1".into());
                }
                Some(w2)
            }
            None => None,
        };
        Ok(SubspaceResult {
            kind: j.kind,
            r: j.r,
            eigvals: Array1::from_vec(j.eigvals),
            w1,
            w2,
            feature_map: j.feature_map,
        })
    }
}
