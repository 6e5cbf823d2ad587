//! End-to-end orchestration: build response surfaces over reduced
//! coordinates for both subspace variants, score them with cross-validated
//! RRMSE, compare methods, and emit sufficiency-summary plot data.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::datasets::{kfold, normalize, GradientDataset, InputSpec};
use crate::error::{Error, Result};
use crate::featuremap::{FeatureMap, SpectralMeasure};
use crate::gpr::{gp_fit, rrmse, GpModel, KernelConfig};
use crate::subspace::{active_subspace, kernel_active_subspace, project, SubspaceKind, SubspaceResult};
use crate::tuning::{grid_search, TuneConfig, TuneReport, DEFAULT_GP_BUDGET};

/// A trained response surface: subspace, GP over the projected coordinates,
/// and the input spec used for normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surrogate {
    pub subspace: SubspaceResult,
    pub gp: GpModel,
    pub spec: InputSpec,
}

/// One (method, r) cell of a comparison. Mean and std are over fold scores;
/// both are absent (with `note` giving the reason) when the cell could not
/// be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: SubspaceKind,
    pub r: usize,
    pub fold_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Method-by-r RRMSE table plus the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cells: Vec<ReportCell>,
    pub d_features: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned_measure: Option<SpectralMeasure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned_params: Option<Vec<f64>>,
    pub sigma_f: f64,
    pub folds: usize,
    pub seed: u64,
    pub n_samples: usize,
}

impl ComparisonReport {
    /// CSV rendering: one row per cell, floats at 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "r", "mean_rrmse", "std_rrmse", "note"])
            .map_err(csv_err)?;
        for cell in &self.cells {
            let method = match cell.method {
                SubspaceKind::As => "as",
                SubspaceKind::Kas => "kas",
            };
            let fmt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
            w.write_record([
                method.to_string(),
                cell.r.to_string(),
                fmt(cell.mean),
                fmt(cell.std),
                cell.note.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::State(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))
    }

    pub fn cell(&self, method: SubspaceKind, r: usize) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.method == method && c.r == r)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::State(format!("csv encoding: {e}"))
}

/// Comparison output bundle: the report table, the full tuning report, and
/// the winning feature map (absent on a no-winner tuning outcome).
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub tune: TuneReport,
    pub feature_map: Option<FeatureMap>,
}

fn default_init() -> KernelConfig {
    KernelConfig {
        lengthscale: 1.0,
        signal_variance: 1.0,
        noise_variance: 1e-6,
    }
}

/// Fit a surrogate on the full dataset: subspace from the chosen method,
/// then a GP on the projected normalized inputs.
pub fn fit_surrogate(
    ds: &GradientDataset,
    method: SubspaceKind,
    r: usize,
    fm: Option<&FeatureMap>,
) -> Result<Surrogate> {
    let subspace = match method {
        SubspaceKind::As => active_subspace(ds, r)?,
        SubspaceKind::Kas => {
            let fm = fm.ok_or_else(|| {
                Error::Argument("the kernel method needs a feature map".into())
            })?;
            kernel_active_subspace(ds, fm, r)?
        }
    };
    let xn = normalize(&ds.x, &ds.spec)?;
    let xr = project(&subspace, &xn)?;
    let gp = gp_fit(&xr, &ds.y, default_init(), DEFAULT_GP_BUDGET)?;
    Ok(Surrogate {
        subspace,
        gp,
        spec: ds.spec.clone(),
    })
}

/// Predict means and variances at physical inputs (validated against the
/// spec, normalized, projected, then passed to the GP).
pub fn predict(s: &Surrogate, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let xn = normalize(x, &s.spec)?;
    let xr = project(&s.subspace, &xn)?;
    s.gp.predict_batch(&xr)
}

/// Tune the measure for the kernel method, then cross-validate both methods
/// at every requested active dimension.
pub fn compare(
    ds: &GradientDataset,
    cfg: &TuneConfig,
    family: &SpectralMeasure,
    rs: &[usize],
) -> Result<Comparison> {
    if rs.is_empty() {
        return Err(Error::Argument("need at least one active dimension".into()));
    }
    let tune = grid_search(ds, cfg, family)?;
    let fm = tune.best.as_ref().map(|b| b.feature_map.clone());
    let plan = kfold(ds.n_samples(), cfg.folds, cfg.seed)?;

    let mut cells = Vec::with_capacity(rs.len() * 2);
    for &r in rs {
        for method in [SubspaceKind::As, SubspaceKind::Kas] {
            if method == SubspaceKind::Kas && fm.is_none() {
                cells.push(ReportCell {
                    method,
                    r,
                    fold_scores: Vec::new(),
                    mean: None,
                    std: None,
                    note: Some(
                        "tuning found no measure with mean cross-validation score below 1"
                            .into(),
                    ),
                });
                continue;
            }
            let mut scores = Vec::with_capacity(plan.k);
            for fold in 0..plan.k {
                let (train_idx, test_idx) = plan.split(fold);
                let train = ds.subset(&train_idx)?;
                let test = ds.subset(&test_idx)?;
                let score = (|| -> Result<f64> {
                    let s = fit_surrogate(&train, method, r, fm.as_ref())?;
                    let (preds, _) = predict(&s, &test.x)?;
                    let mut per = Vec::with_capacity(test.d());
                    for j in 0..test.d() {
                        per.push(rrmse(test.y.column(j), preds.column(j))?);
                    }
                    Ok(per.iter().sum::<f64>() / per.len() as f64)
                })()
                .map_err(|e| e.context(&format!("fold {fold}")))?;
                scores.push(score);
            }
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            let std = if scores.len() > 1 {
                (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                    / (scores.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            cells.push(ReportCell {
                method,
                r,
                fold_scores: scores,
                mean: Some(mean),
                std: Some(std),
                note: None,
            });
        }
    }

    let report = ComparisonReport {
        cells,
        d_features: cfg.d_features,
        tuned_measure: fm.as_ref().map(|f| f.measure.clone()),
        tuned_params: tune.best.as_ref().map(|b| b.params.clone()),
        sigma_f: cfg.sigma_f,
        folds: cfg.folds,
        seed: cfg.seed,
        n_samples: ds.n_samples(),
    };
    Ok(Comparison {
        report,
        tune,
        feature_map: fm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Scatter,
    Mean,
    Lo,
    Hi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub coord: f64,
    pub kind: PlotKind,
    pub value: f64,
}

/// Sufficiency-summary plot data for a 1-D surrogate: test scatter plus the
/// GP mean and ±1 posterior standard deviation band over an even grid
/// spanning the projected range.
pub fn summary_plot_data(
    s: &Surrogate,
    x_test: &Array2<f64>,
    y_test: &Array2<f64>,
    grid: usize,
) -> Result<Vec<PlotRow>> {
    if s.subspace.r != 1 {
        return Err(Error::Unsupported(
            "summary plots need a one-dimensional active subspace".into(),
        ));
    }
    if y_test.ncols() != 1 {
        return Err(Error::Unsupported(
            "summary plots need scalar outputs".into(),
        ));
    }
    if x_test.nrows() != y_test.nrows() {
        return Err(Error::Dim(format!(
            "{} test inputs vs {} targets",
            x_test.nrows(),
            y_test.nrows()
        )));
    }
    if grid < 2 {
        return Err(Error::Argument("grid needs at least 2 points".into()));
    }
    let xn = normalize(x_test, &s.spec)?;
    let xr = project(&s.subspace, &xn)?;
    let mut rows = Vec::with_capacity(x_test.nrows() + 3 * grid);
    for i in 0..x_test.nrows() {
        rows.push(PlotRow {
            coord: xr[[i, 0]],
            kind: PlotKind::Scatter,
            value: y_test[[i, 0]],
        });
    }
    let (lo, hi) = xr
        .column(0)
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    for g in 0..grid {
        let coord = lo + (hi - lo) * g as f64 / (grid - 1) as f64;
        let (mean, var) = s.gp.predict(ndarray::arr1(&[coord]).view())?;
        let sd = var.sqrt();
        rows.push(PlotRow {
            coord,
            kind: PlotKind::Mean,
            value: mean[0],
        });
        rows.push(PlotRow {
            coord,
            kind: PlotKind::Lo,
            value: mean[0] - sd,
        });
        rows.push(PlotRow {
            coord,
            kind: PlotKind::Hi,
            value: mean[0] + sd,
        });
    }
    Ok(rows)
}

/// CSV rendering of plot rows with header (coord, kind, value).
pub fn plot_to_csv(rows: &[PlotRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["coord", "kind", "value"]).map_err(csv_err)?;
    for row in rows {
        let kind = match row.kind {
            PlotKind::Scatter => "scatter",
            PlotKind::Mean => "mean",
            PlotKind::Lo => "lo",
            PlotKind::Hi => "hi",
        };
        w.write_record([
            format!("{:.16e}", row.coord),
            kind.to_string(),
            format!("{:.16e}", row.value),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::State(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))
}
