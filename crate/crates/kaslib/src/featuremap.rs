//! Random Fourier feature maps (and a sigmoid variant): construction from a
//! spectral measure, evaluation, analytic Jacobians, pseudoinverse lifting of
//! model gradients into feature space, and Monte Carlo kernel estimation.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Probability distribution on frequency space whose Fourier transform is the
/// stationary kernel the features approximate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralMeasure {
    /// Isotropic N(0, variance·I).
    Gaussian { variance: f64 },
    /// N(0, diag(sigma)); one variance per coordinate.
    MultivariateNormalDiag { diag: Vec<f64> },
    /// i.i.d. Laplace(location, scale) per entry.
    Laplace { location: f64, scale: f64 },
    /// i.i.d. Beta(alpha, beta) per entry, support [0, 1].
    Beta { alpha: f64, beta: f64 },
}

impl SpectralMeasure {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            SpectralMeasure::Gaussian { variance } => {
                if !(*variance > 0.0) {
                    return Err(Error::Argument("gaussian variance must be > 0".into()));
                }
            }
            SpectralMeasure::MultivariateNormalDiag { diag } => {
                if diag.len() != m {
                    return Err(Error::Argument(format!(
                        "diagonal has {} entries for m={m}",
                        diag.len()
                    )));
                }
                if diag.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Argument("diagonal entries must be > 0".into()));
                }
            }
            SpectralMeasure::Laplace { scale, location } => {
                if !(*scale > 0.0) || !location.is_finite() {
                    return Err(Error::Argument("laplace needs finite location, scale > 0".into()));
                }
            }
            SpectralMeasure::Beta { alpha, beta } => {
                if !(*alpha > 0.0) || !(*beta > 0.0) {
                    return Err(Error::Argument("beta parameters must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Number of hyperparameters the tuning grid varies.
    pub fn n_hyperparams(&self) -> usize {
        match self {
            SpectralMeasure::Gaussian { .. } => 1,
            // A single scale factor on the template diagonal.
            SpectralMeasure::MultivariateNormalDiag { .. } => 1,
            SpectralMeasure::Laplace { .. } => 2,
            SpectralMeasure::Beta { .. } => 2,
        }
    }

    pub fn hyperparam_names(&self) -> Vec<&'static str> {
        match self {
            SpectralMeasure::Gaussian { .. } => vec!["variance"],
            SpectralMeasure::MultivariateNormalDiag { .. } => vec!["scale"],
            SpectralMeasure::Laplace { .. } => vec!["location", "scale"],
            SpectralMeasure::Beta { .. } => vec!["alpha", "beta"],
        }
    }

    /// Instantiate this measure family at concrete hyperparameter values,
    /// treating self as the template.
    pub fn with_params(&self, params: &[f64]) -> Result<SpectralMeasure> {
        if params.len() != self.n_hyperparams() {
            return Err(Error::Argument(format!(
                "measure takes {} hyperparameters, got {}",
                self.n_hyperparams(),
                params.len()
            )));
        }
        Ok(match self {
            SpectralMeasure::Gaussian { .. } => SpectralMeasure::Gaussian { variance: params[0] },
            SpectralMeasure::MultivariateNormalDiag { diag } => {
                SpectralMeasure::MultivariateNormalDiag {
                    diag: diag.iter().map(|v| v * params[0]).collect(),
                }
            }
            SpectralMeasure::Laplace { .. } => SpectralMeasure::Laplace {
                location: params[0],
                scale: params[1],
            },
            SpectralMeasure::Beta { .. } => SpectralMeasure::Beta {
                alpha: params[0],
                beta: params[1],
            },
        })
    }

    fn fill_w(&self, w: &mut Array2<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        match self {
            SpectralMeasure::Gaussian { variance } => {
                let s = variance.sqrt();
                for v in w.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = s * z;
                }
            }
            SpectralMeasure::MultivariateNormalDiag { diag } => {
                let scales: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
                for mut row in w.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = scales[j] * z;
                    }
                }
            }
            SpectralMeasure::Laplace { location, scale } => {
                for v in w.iter_mut() {
                    // Inverse CDF; reject the measure-zero draw that maps to -inf.
                    let mut g = rng.gen::<f64>();
                    while g == 0.0 {
                        g = rng.gen::<f64>();
                    }
                    let u = g - 0.5;
                    *v = location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                }
            }
            SpectralMeasure::Beta { alpha, beta } => {
                let dist = BetaDist::new(*alpha, *beta)
                    .map_err(|e| Error::Argument(format!("beta measure: {e}")))?;
                for v in w.iter_mut() {
                    *v = dist.sample(rng);
                }
            }
        }
        Ok(())
    }
}

/// Variant-specific feature-map parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    /// z_j = sqrt(2/D)·sigma_f·cos(w_j·x + b_j)
    Rff { b: Array1<f64>, sigma_f: f64 },
    /// z_j = c / (1 + alpha·exp(-w_j·x))
    Sigmoid { c: f64, alpha: f64 },
}

/// A random feature map from input space (m) to feature space (D > m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FeatureMapJson", try_from = "FeatureMapJson")]
pub struct FeatureMap {
    pub kind: MapKind,
    /// D x m projection matrix, rows sampled i.i.d. from the measure.
    pub w: Array2<f64>,
    pub measure: SpectralMeasure,
    pub seed: u64,
}

impl FeatureMap {
    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.w.ncols()
    }

    /// Evaluate the map at one point.
    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.m(), "input length != m");
        let t = self.w.dot(&x);
        self.activate(t)
    }

    /// Evaluate the map row-wise on an M x m matrix, returning M x D.
    pub fn apply_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.m(), "input columns != m");
        let t = x.dot(&self.w.t());
        let mut out = t;
        match &self.kind {
            MapKind::Rff { b, sigma_f } => {
                let scale = (2.0 / self.d() as f64).sqrt() * sigma_f;
                for mut row in out.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = scale * (*v + b[j]).cos();
                    }
                }
            }
            MapKind::Sigmoid { c, alpha } => {
                out.mapv_inplace(|t| c / (1.0 + alpha * (-t).exp()));
            }
        }
        out
    }

    fn activate(&self, t: Array1<f64>) -> Array1<f64> {
        match &self.kind {
            MapKind::Rff { b, sigma_f } => {
                let scale = (2.0 / self.d() as f64).sqrt() * sigma_f;
                Array1::from_iter(
                    t.iter()
                        .zip(b.iter())
                        .map(|(&ti, &bi)| scale * (ti + bi).cos()),
                )
            }
            MapKind::Sigmoid { c, alpha } => {
                Array1::from_iter(t.iter().map(|&ti| c / (1.0 + alpha * (-ti).exp())))
            }
        }
    }

    /// Analytic Jacobian Dφ(x), a D x m matrix.
    pub fn jacobian(&self, x: ArrayView1<f64>) -> Array2<f64> {
        assert_eq!(x.len(), self.m(), "input length != m");
        let t = self.w.dot(&x);
        let mut out = self.w.clone();
        match &self.kind {
            MapKind::Rff { b, sigma_f } => {
                let scale = (2.0 / self.d() as f64).sqrt() * sigma_f;
                for (j, mut row) in out.rows_mut().into_iter().enumerate() {
                    let s = -scale * (t[j] + b[j]).sin();
                    row.mapv_inplace(|w| s * w);
                }
            }
            MapKind::Sigmoid { c, alpha } => {
                for (j, mut row) in out.rows_mut().into_iter().enumerate() {
                    let e = alpha * (-t[j]).exp();
                    let s = c * e / ((1.0 + e) * (1.0 + e));
                    row.mapv_inplace(|w| s * w);
                }
            }
        }
        out
    }

    /// Lift a d x m model gradient into feature space through the right
    /// Moore-Penrose inverse of the feature-map Jacobian: dxf · (Dφ(x))†.
    pub fn lift_gradient(&self, x: ArrayView1<f64>, dxf: &Array2<f64>) -> Result<Array2<f64>> {
        if dxf.ncols() != self.m() {
            return Err(Error::Dim(format!(
                "gradient has {} columns, map has m={}",
                dxf.ncols(),
                self.m()
            )));
        }
        let jac = self.jacobian(x);
        lift_with_jacobian(&jac, dxf)
    }

    /// Monte Carlo kernel estimate z(x)ᵀz(y)/sigma_f², unbiased for the
    /// stationary kernel of the spectral measure. RFF only.
    pub fn kernel_estimate(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        match &self.kind {
            MapKind::Rff { sigma_f, .. } => {
                let zx = self.apply(x);
                let zy = self.apply(y);
                Ok(zx.dot(&zy) / (sigma_f * sigma_f))
            }
            MapKind::Sigmoid { .. } => Err(Error::Unsupported(
                "kernel_estimate needs the RFF variant".into(),
            )),
        }
    }
}

/// Shared lift kernel: dxf · pinv(jac), with a full-column-rank check at
/// relative tolerance 1e-12.
pub(crate) fn lift_with_jacobian(jac: &Array2<f64>, dxf: &Array2<f64>) -> Result<Array2<f64>> {
    let m = jac.ncols();
    let (u, sigma, v) = numerics::svd(jac)?;
    if sigma.len() < m || !(sigma[m - 1] > 1e-12 * sigma[0]) {
        return Err(Error::Singular(
            "feature-map Jacobian is rank-deficient".into(),
        ));
    }
    let pinv = numerics::pinv_parts(&u, &sigma, &v, 1e-12);
    Ok(dxf.dot(&pinv))
}

fn validate_build(m: usize, d: usize, measure: &SpectralMeasure) -> Result<()> {
    if m == 0 {
        return Err(Error::Argument("m must be >= 1".into()));
    }
    if d <= m {
        return Err(Error::Argument(format!("need D > m, got D={d}, m={m}")));
    }
    measure.validate(m)
}

/// Build an RFF map: W rows i.i.d. from the measure, b i.i.d. Uniform[0, 2π).
pub fn build_feature_map(
    m: usize,
    d: usize,
    sigma_f: f64,
    measure: SpectralMeasure,
    seed: u64,
) -> Result<FeatureMap> {
    validate_build(m, d, &measure)?;
    if !(sigma_f > 0.0) {
        return Err(Error::Argument("sigma_f must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::zeros((d, m));
    measure.fill_w(&mut w, &mut rng)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let b = Array1::from_iter((0..d).map(|_| two_pi * rng.gen::<f64>()));
    Ok(FeatureMap {
        kind: MapKind::Rff { b, sigma_f },
        w,
        measure,
        seed,
    })
}

/// Build a sigmoid map z_j = c/(1 + alpha·exp(-w_j·x)) with W rows i.i.d.
/// from the measure.
pub fn build_sigmoid_map(
    m: usize,
    d: usize,
    c: f64,
    alpha: f64,
    measure: SpectralMeasure,
    seed: u64,
) -> Result<FeatureMap> {
    validate_build(m, d, &measure)?;
    if !(c > 0.0) || !(alpha > 0.0) {
        return Err(Error::Argument("sigmoid needs c > 0 and alpha > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::zeros((d, m));
    measure.fill_w(&mut w, &mut rng)?;
    Ok(FeatureMap {
        kind: MapKind::Sigmoid { c, alpha },
        w,
        measure,
        seed,
    })
}

/// Flat JSON document for persisting tuned maps bit-exactly.
#[derive(Serialize, Deserialize, Clone)]
struct FeatureMapJson {
    variant: String,
    #[serde(rename = "D")]
    d: usize,
    m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    seed: u64,
    measure: SpectralMeasure,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
}

impl From<FeatureMap> for FeatureMapJson {
    fn from(fm: FeatureMap) -> Self {
        let (d, m) = (fm.d(), fm.m());
        let w = fm.w.rows().into_iter().map(|r| r.to_vec()).collect();
        match fm.kind {
            MapKind::Rff { b, sigma_f } => FeatureMapJson {
                variant: "rff".into(),
                d,
                m,
                sigma_f: Some(sigma_f),
                c: None,
                alpha: None,
                seed: fm.seed,
                measure: fm.measure,
                w,
                b: Some(b.to_vec()),
            },
            MapKind::Sigmoid { c, alpha } => FeatureMapJson {
                variant: "sigmoid".into(),
                d,
                m,
                sigma_f: None,
                c: Some(c),
                alpha: Some(alpha),
                seed: fm.seed,
                measure: fm.measure,
                w,
                b: None,
            },
        }
    }
}

impl TryFrom<FeatureMapJson> for FeatureMap {
    type Error = String;

    fn try_from(j: FeatureMapJson) -> std::result::Result<Self, String> {
        if j.w.len() != j.d || j.w.iter().any(|r| r.len() != j.m) {
            return Err(format!("W is not {}x{}", j.d, j.m));
        }
        let mut w = Array2::zeros((j.d, j.m));
        for (i, row) in j.w.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                w[[i, k]] = v;
            }
        }
        let kind = match j.variant.as_str() {
            "rff" => {
                let b = j.b.ok_or("rff variant needs b")?;
                if b.len() != j.d {
                    return Err("b length != D".into());
                }
                MapKind::Rff {
                    b: Array1::from_vec(b),
                    sigma_f: j.sigma_f.ok_or("rff variant needs sigma_f")?,
                }
            }
            "sigmoid" => MapKind::Sigmoid {
                c: j.c.ok_or("sigmoid variant needs c")?,
                alpha: j.alpha.ok_or("sigmoid variant needs alpha")?,
            },
            other => return Err(format!("unknown variant {other:?}")),
        };
        Ok(FeatureMap {
            kind,
            w,
            measure: j.measure,
            seed: j.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn gaussian(variance: f64) -> SpectralMeasure {
        SpectralMeasure::Gaussian { variance }
    }

    #[test]
    fn build_shapes_and_determinism() {
        let fm = build_feature_map(8, 1000, 1.0, gaussian(1.0), 7).unwrap();
        assert_eq!(fm.w.shape(), &[1000, 8]);
        let fm2 = build_feature_map(8, 1000, 1.0, gaussian(1.0), 7).unwrap();
        assert_eq!(fm, fm2);

        let diag = SpectralMeasure::MultivariateNormalDiag { diag: vec![1.0; 10] };
        let fm = build_feature_map(10, 1500, 1.0, diag, 1).unwrap();
        assert_eq!(fm.w.shape(), &[1500, 10]);

        if let MapKind::Rff { b, .. } = &fm.kind {
            assert!(b.iter().all(|&v| (0.0..2.0 * std::f64::consts::PI).contains(&v)));
        } else {
            panic!("expected rff");
        }

        assert!(matches!(
            build_feature_map(8, 8, 1.0, gaussian(1.0), 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn measure_sampling_moments() {
        let check = |measure: SpectralMeasure, want_mean: f64, want_var: f64| {
            let fm = build_feature_map(1, 4000, 1.0, measure, 11).unwrap();
            let n = fm.w.len() as f64;
            let mean = fm.w.sum() / n;
            let var = fm.w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!((mean - want_mean).abs() < 0.1 * (1.0 + want_mean.abs()), "mean {mean} vs {want_mean}");
            assert!((var - want_var).abs() < 0.15 * (1.0 + want_var), "var {var} vs {want_var}");
        };
        check(gaussian(4.0), 0.0, 4.0);
        check(SpectralMeasure::Laplace { location: 2.0, scale: 0.5 }, 2.0, 0.5);
        // Beta(2,5): mean 2/7, var ab/((a+b)^2 (a+b+1)) = 10/(49*8)
        check(SpectralMeasure::Beta { alpha: 2.0, beta: 5.0 }, 2.0 / 7.0, 10.0 / 392.0);
    }

    #[test]
    fn apply_examples() {
        let fm = FeatureMap {
            kind: MapKind::Rff { b: Array1::zeros(2), sigma_f: 1.0 },
            w: Array2::zeros((2, 1)),
            measure: gaussian(1.0),
            seed: 0,
        };
        let z = fm.apply(arr1(&[3.5]).view());
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15);

        let half_pi = std::f64::consts::FRAC_PI_2;
        let fm = FeatureMap {
            kind: MapKind::Rff { b: arr1(&[half_pi, half_pi]), sigma_f: 1.0 },
            w: Array2::zeros((2, 1)),
            measure: gaussian(1.0),
            seed: 0,
        };
        let z = fm.apply(arr1(&[0.0]).view());
        assert!(z[0].abs() < 1e-15 && z[1].abs() < 1e-15);

        // Direct scalar evaluation of 2·cos(0.5) and 2·cos(1.0).
        let fm = FeatureMap {
            kind: MapKind::Rff { b: Array1::zeros(2), sigma_f: 2.0 },
            w: arr2(&[[1.0], [2.0]]),
            measure: gaussian(1.0),
            seed: 0,
        };
        let z = fm.apply(arr1(&[0.5]).view());
        assert!((z[0] - 1.7551651237807455).abs() < 1e-12, "z0 = {}", z[0]);
        assert!((z[1] - 1.0806046117362795).abs() < 1e-12, "z1 = {}", z[1]);
    }

    #[test]
    fn rff_boundedness() {
        let fm = build_feature_map(3, 40, 1.7, gaussian(0.5), 5).unwrap();
        let x = arr1(&[0.3, -0.8, 0.1]);
        let z = fm.apply(x.view());
        let per_entry = (2.0f64 / 40.0).sqrt() * 1.7;
        assert!(z.iter().all(|v| v.abs() <= per_entry + 1e-15));
        let norm = z.dot(&z).sqrt();
        assert!(norm <= 2.0f64.sqrt() * 1.7 + 1e-12);
    }

    #[test]
    fn jacobian_examples() {
        let fm = FeatureMap {
            kind: MapKind::Rff { b: Array1::zeros(3), sigma_f: 1.0 },
            w: Array2::zeros((3, 2)),
            measure: gaussian(1.0),
            seed: 0,
        };
        let j = fm.jacobian(arr1(&[1.0, 2.0]).view());
        assert!(j.iter().all(|&v| v == 0.0));

        // Scalar evaluation: -sqrt(2/1)·sin(pi/2)·1 = -sqrt(2).
        let fm = FeatureMap {
            kind: MapKind::Rff { b: Array1::zeros(1), sigma_f: 1.0 },
            w: arr2(&[[1.0]]),
            measure: gaussian(1.0),
            seed: 0,
        };
        let j = fm.jacobian(arr1(&[std::f64::consts::FRAC_PI_2]).view());
        assert!((j[[0, 0]] + 2.0f64.sqrt()).abs() < 1e-12, "got {}", j[[0, 0]]);
    }

    fn central_diff(fm: &FeatureMap, x: &Array1<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut fd = Array2::zeros((fm.d(), fm.m()));
        for i in 0..fm.m() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let zp = fm.apply(xp.view());
            let zm = fm.apply(xm.view());
            for jrow in 0..fm.d() {
                fd[[jrow, i]] = (zp[jrow] - zm[jrow]) / (2.0 * h);
            }
        }
        fd
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..100 {
            let m = 1 + case % 5;
            let d = m + 3 + case % 17;
            let measure = match case % 3 {
                0 => gaussian(0.5 + (case % 7) as f64 * 0.3),
                1 => SpectralMeasure::Laplace { location: 0.2, scale: 0.7 },
                _ => SpectralMeasure::Beta { alpha: 2.0, beta: 3.0 },
            };
            let fm = if case % 2 == 0 {
                build_feature_map(m, d, 1.3, measure, 1000 + case as u64).unwrap()
            } else {
                build_sigmoid_map(m, d, 2.0, 1.5, measure, 1000 + case as u64).unwrap()
            };
            let x = Array1::from_iter((0..m).map(|_| rng.gen::<f64>() * 2.0 - 1.0));
            let j = fm.jacobian(x.view());
            let fd = central_diff(&fm, &x);
            let scale = j.iter().fold(1e-12f64, |a, v| a.max(v.abs()));
            let err = (&j - &fd).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(err <= 1e-6 * scale, "case {case}: err {err:e} scale {scale:e}");
        }
    }

    #[test]
    fn lift_examples() {
        // Orthonormal-columns Jacobian: pinv is the transpose.
        let jac = arr2(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        let dxf = arr2(&[[2.0, 3.0]]);
        let lifted = lift_with_jacobian(&jac, &dxf).unwrap();
        assert_eq!(lifted.shape(), &[1, 3]);
        assert!((lifted[[0, 0]] - 2.0).abs() < 1e-14);
        assert!((lifted[[0, 1]] - 3.0).abs() < 1e-14);
        assert!(lifted[[0, 2]].abs() < 1e-14);

        let fm = build_feature_map(2, 20, 1.0, gaussian(1.0), 3).unwrap();
        let zero = Array2::zeros((1, 2));
        let lifted = fm.lift_gradient(arr1(&[0.1, 0.2]).view(), &zero).unwrap();
        assert!(lifted.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lift_chain_rule_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..20 {
            let m = 2 + case % 4;
            let d = 2 * m + 10;
            let fm = build_feature_map(m, d, 1.0, gaussian(1.0), 500 + case as u64).unwrap();
            let x = Array1::from_iter((0..m).map(|_| rng.gen::<f64>() * 2.0 - 1.0));
            let mut dxf = Array2::zeros((2, m));
            dxf.mapv_inplace(|_| rng.gen::<f64>() * 2.0 - 1.0);
            let lifted = fm.lift_gradient(x.view(), &dxf).unwrap();
            let jac = fm.jacobian(x.view());
            let recon = lifted.dot(&jac);
            let num = crate::numerics::frob(&(&recon - &dxf));
            let den = crate::numerics::frob(&dxf);
            assert!(num <= 1e-8 * den, "case {case}: residual {num:e} vs {den:e}");
        }
    }

    #[test]
    fn kernel_estimate_basics() {
        let fm = build_feature_map(3, 200, 2.5, gaussian(1.0), 21).unwrap();
        let x = arr1(&[0.1, -0.4, 0.7]);
        let same = fm.kernel_estimate(x.view(), x.view()).unwrap();
        assert!((0.0..=2.0).contains(&same), "k(x,x) = {same}");
        let y = arr1(&[-0.5, 0.2, 0.3]);
        let kxy = fm.kernel_estimate(x.view(), y.view()).unwrap();
        let kyx = fm.kernel_estimate(y.view(), x.view()).unwrap();
        assert_eq!(kxy, kyx);

        let sig = build_sigmoid_map(3, 20, 1.0, 1.0, gaussian(1.0), 1).unwrap();
        assert!(matches!(
            sig.kernel_estimate(x.view(), y.view()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn kernel_estimate_converges_to_rbf() {
        // Gaussian measure with variance 1 matches RBF with lengthscale 1.
        let mut rng = ChaCha8Rng::seed_from_u64(512);
        let pairs: Vec<(Array1<f64>, Array1<f64>)> = (0..100)
            .map(|_| {
                let a = Array1::from_iter((0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0));
                let b = Array1::from_iter((0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0));
                (a, b)
            })
            .collect();
        let rbf = |a: &Array1<f64>, b: &Array1<f64>| {
            let d2 = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
            (-d2 / 2.0).exp()
        };
        let mut rms = Vec::new();
        for &d in &[100usize, 10_000] {
            let fm = build_feature_map(5, d, 1.0, gaussian(1.0), 9001).unwrap();
            let mut maxerr = 0.0f64;
            let mut sq = 0.0;
            for (a, b) in &pairs {
                let e = fm.kernel_estimate(a.view(), b.view()).unwrap() - rbf(a, b);
                maxerr = maxerr.max(e.abs());
                sq += e * e;
            }
            if d == 10_000 {
                assert!(maxerr <= 0.05, "max error {maxerr} at D=10^4");
            }
            rms.push((sq / pairs.len() as f64).sqrt());
        }
        assert!(rms[0] >= 5.0 * rms[1], "rms {rms:?}");
    }

    #[test]
    fn json_roundtrip_bit_exact() {
        let fm = build_feature_map(4, 30, 1.5, SpectralMeasure::Laplace { location: 0.3, scale: 1.2 }, 99).unwrap();
        let s = serde_json::to_string(&fm).unwrap();
        let back: FeatureMap = serde_json::from_str(&s).unwrap();
        assert_eq!(fm, back);

        let sig = build_sigmoid_map(2, 9, 1.0, 2.0, gaussian(1.0), 5).unwrap();
        let s = serde_json::to_string(&sig).unwrap();
        let back: FeatureMap = serde_json::from_str(&s).unwrap();
        assert_eq!(sig, back);
    }
}
