//! Dense linear-algebra kernels everything else builds on: symmetric
//! eigendecomposition, thin SVD, pseudoinverse, and regularized Cholesky
//! solves. LAPACK-backed, with deterministic ordering and sign conventions.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::cholesky::CholeskyInto;
use ndarray_linalg::{Eigh, JobSvd, SVDDC, UPLO};
use std::sync::Once;

use crate::error::{Error, Result};

extern "C" {
    fn openblas_set_num_threads(num: core::ffi::c_int);
}

static BLAS_INIT: Once = Once::new();

/// Pin OpenBLAS to one thread: results stay independent of machine
/// parallelism and higher-level parallel callers do not oversubscribe cores.
fn init_blas() {
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

fn check_finite(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

fn check_nonempty(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Dim(format!("{what} must be non-empty")));
    }
    Ok(())
}

/// Frobenius norm.
pub(crate) fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Flip eigenvector/column signs so the largest-magnitude entry is positive
/// (first index wins ties); makes decompositions deterministic.
fn fix_signs(vecs: &mut Array2<f64>) {
    for mut col in vecs.columns_mut() {
        let mut idx = 0;
        let mut best = -1.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
///
/// The input is symmetrized as (A+Aᵀ)/2 first; asymmetry beyond 1e-10
/// relative is rejected. Eigenvector columns are unit-norm with the
/// largest-magnitude entry positive.
pub fn sym_eig_desc(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    init_blas();
    check_nonempty(a, "matrix")?;
    if a.nrows() != a.ncols() {
        return Err(Error::Dim(format!(
            "sym_eig_desc needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "matrix")?;
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (a - &a.t())
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale > 0.0 && asym > 1e-10 * scale {
        return Err(Error::Domain(format!(
            "matrix asymmetry {asym:e} exceeds 1e-10 relative tolerance"
        )));
    }
    let sym = (a + &a.t()) / 2.0;
    let (vals, vecs) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Domain(format!("eigendecomposition failed: {e}")))?;
    // LAPACK returns ascending order; reverse to descending.
    let n = vals.len();
    let mut vals_d = Array1::<f64>::zeros(n);
    let mut vecs_d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        vals_d[i] = vals[n - 1 - i];
        vecs_d.column_mut(i).assign(&vecs.column(n - 1 - i));
    }
    fix_signs(&mut vecs_d);
    Ok((vals_d, vecs_d))
}

/// Thin SVD: A = U·diag(sigma)·Vᵀ with sigma descending and nonnegative.
/// Returns (U, sigma, V); U is rows×k and V is cols×k for k = min(rows, cols).
pub fn svd(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    init_blas();
    check_nonempty(a, "matrix")?;
    check_finite(a, "matrix")?;
    let (u, sigma, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| Error::Domain(format!("svd failed: {e}")))?;
    let u = u.ok_or_else(|| Error::Domain("svd returned no U factor".into()))?;
    let vt = vt.ok_or_else(|| Error::Domain("svd returned no V factor".into()))?;
    Ok((u, sigma, vt.t().to_owned()))
}

/// Build the pseudoinverse from SVD parts, dropping singular values below
/// rank_tol·sigma_max.
pub(crate) fn pinv_parts(
    u: &Array2<f64>,
    sigma: &Array1<f64>,
    v: &Array2<f64>,
    rank_tol: f64,
) -> Array2<f64> {
    let smax = if sigma.is_empty() { 0.0 } else { sigma[0] };
    let cutoff = rank_tol * smax;
    let rank = sigma.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
    if rank == 0 {
        return Array2::zeros((v.nrows(), u.nrows()));
    }
    // V_r · diag(1/sigma) · U_rᵀ
    let mut v_scaled = v.slice(s![.., ..rank]).to_owned();
    for (j, mut col) in v_scaled.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x / sigma[j]);
    }
    v_scaled.dot(&u.slice(s![.., ..rank]).t())
}

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// rank_tol·sigma_max are treated as zero; rank_tol defaults to 1e-12.
pub fn pinv(a: &Array2<f64>, rank_tol: Option<f64>) -> Result<Array2<f64>> {
    let tol = rank_tol.unwrap_or(1e-12);
    if tol <= 0.0 {
        return Err(Error::Argument("rank_tol must be positive".into()));
    }
    let (u, sigma, v) = svd(a)?;
    Ok(pinv_parts(&u, &sigma, &v, tol))
}

/// Cholesky factor of A + jitter·I together with the jitter that succeeded.
#[derive(Debug, Clone)]
pub struct CholFactor {
    /// Lower-triangular factor L with L·Lᵀ = A + jitter·I.
    pub l: Array2<f64>,
    /// Jitter actually used (after any escalation).
    pub jitter: f64,
}

impl CholFactor {
    /// Solve (L·Lᵀ)·X = B by forward and backward substitution.
    pub fn solve(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        let n = self.l.nrows();
        if b.nrows() != n {
            return Err(Error::Dim(format!(
                "rhs has {} rows, factor is {}x{}",
                b.nrows(),
                n,
                n
            )));
        }
        let mut x = b.to_owned();
        let l = &self.l;
        for j in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[[i, j]];
                for p in 0..i {
                    s -= l[[i, p]] * x[[p, j]];
                }
                x[[i, j]] = s / l[[i, i]];
            }
            for i in (0..n).rev() {
                let mut s = x[[i, j]];
                for p in (i + 1)..n {
                    s -= l[[p, i]] * x[[p, j]];
                }
                x[[i, j]] = s / l[[i, i]];
            }
        }
        Ok(x)
    }
}

/// Cholesky-factor A + jitter·I, escalating the jitter x10 on failure up to
/// 1e-4·trace(A)/n before giving up.
pub fn chol_factor(a: &Array2<f64>, jitter: f64) -> Result<CholFactor> {
    init_blas();
    check_nonempty(a, "matrix")?;
    if a.nrows() != a.ncols() {
        return Err(Error::Dim(format!(
            "chol_factor needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "matrix")?;
    if jitter < 0.0 {
        return Err(Error::Argument("jitter must be nonnegative".into()));
    }
    let n = a.nrows();
    let trace_over_n = a.diag().sum() / n as f64;
    let cap = 1e-4 * trace_over_n;
    let mut j = jitter;
    loop {
        let mut aj = a.clone();
        if j > 0.0 {
            for i in 0..n {
                aj[[i, i]] += j;
            }
        }
        match aj.cholesky_into(UPLO::Lower) {
            Ok(l) => return Ok(CholFactor { l, jitter: j }),
            Err(_) => {
                let next = if j == 0.0 { 1e-12 * trace_over_n } else { j * 10.0 };
                if !(next > j) || next > cap {
                    return Err(Error::Factorization { jitter: j });
                }
                j = next;
            }
        }
    }
}

/// Solve (A + jitter·I)·X = B with the escalation behavior of [`chol_factor`].
pub fn chol_solve(a: &Array2<f64>, b: &Array2<f64>, jitter: f64) -> Result<Array2<f64>> {
    check_finite(b, "rhs")?;
    chol_factor(a, jitter)?.solve(b)
}
