//! Input specifications, gradient datasets, seeded sampling, normalization,
//! k-fold splitting, and CSV ingestion.
//!
//! Convention: a [`GradientDataset`] stores inputs in their physical
//! coordinates while Jacobians are taken w.r.t. the normalized coordinates
//! (uniform coordinates affinely mapped to [-1, 1], Gaussian coordinates
//! untouched). Benchmark generators apply the chain rule accordingly; CSV
//! datasets carry no bounds, so their inputs are treated as already
//! normalized and used verbatim.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics;

/// Marginal distribution of one input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordDist {
    Uniform { lower: f64, upper: f64 },
    StandardNormal,
}

/// Per-coordinate input distribution with optional coordinate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub dists: Vec<CoordDist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl InputSpec {
    /// All coordinates Uniform(lower, upper).
    pub fn uniform(m: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::from_bounds(&vec![(lower, upper); m])
    }

    /// Per-coordinate uniform bounds.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let spec = InputSpec {
            dists: bounds
                .iter()
                .map(|&(lower, upper)| CoordDist::Uniform { lower, upper })
                .collect(),
            names: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// All coordinates standard normal (normalization is the identity).
    pub fn standard_normal(m: usize) -> Result<Self> {
        let spec = InputSpec {
            dists: vec![CoordDist::StandardNormal; m],
            names: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m() {
            return Err(Error::Argument(format!(
                "{} names for {} coordinates",
                names.len(),
                self.m()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.dists.len()
    }

    pub fn coord_name(&self, i: usize) -> String {
        match &self.names {
            Some(names) => names[i].clone(),
            None => format!("x{}", i + 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dists.is_empty() {
            return Err(Error::Argument("input spec needs m >= 1".into()));
        }
        for (i, dist) in self.dists.iter().enumerate() {
            if let CoordDist::Uniform { lower, upper } = dist {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::Argument(format!(
                        "coordinate {}: need finite lower < upper, got [{lower}, {upper}]",
                        self.coord_name(i)
                    )));
                }
            }
        }
        if let Some(names) = &self.names {
            if names.len() != self.dists.len() {
                return Err(Error::Argument("names length != m".into()));
            }
        }
        Ok(())
    }

    /// d(normalized)/d(physical) is constant per coordinate; this returns its
    /// reciprocal (the physical half-width), the chain-rule factor that maps
    /// physical-coordinate gradients to normalized-coordinate gradients.
    pub fn half_widths(&self) -> Array1<f64> {
        Array1::from_iter(self.dists.iter().map(|d| match d {
            CoordDist::Uniform { lower, upper } => (upper - lower) / 2.0,
            CoordDist::StandardNormal => 1.0,
        }))
    }
}

/// M samples of inputs, outputs, and Jacobians, with the generating input
/// spec and an optional SPD output metric.
#[derive(Debug, Clone)]
pub struct GradientDataset {
    /// M x m inputs in physical coordinates.
    pub x: Array2<f64>,
    /// M x d outputs.
    pub y: Array2<f64>,
    /// Per-sample d x m Jacobians w.r.t. normalized coordinates.
    pub dy: Vec<Array2<f64>>,
    pub spec: InputSpec,
    /// Optional d x d SPD metric R_V; identity when absent.
    pub metric: Option<Array2<f64>>,
}

impl GradientDataset {
    pub fn new(
        x: Array2<f64>,
        y: Array2<f64>,
        dy: Vec<Array2<f64>>,
        spec: InputSpec,
        metric: Option<Array2<f64>>,
    ) -> Result<Self> {
        spec.validate()?;
        let (n, m) = (x.nrows(), x.ncols());
        let d = y.ncols();
        if n == 0 {
            return Err(Error::Dim("dataset needs at least one sample".into()));
        }
        if m != spec.m() {
            return Err(Error::Dim(format!(
                "inputs have {m} columns but spec declares {}",
                spec.m()
            )));
        }
        if y.nrows() != n {
            return Err(Error::Dim(format!(
                "outputs have {} rows, inputs have {n}",
                y.nrows()
            )));
        }
        if dy.len() != n {
            return Err(Error::Dim(format!(
                "{} Jacobians for {n} samples",
                dy.len()
            )));
        }
        for (k, j) in dy.iter().enumerate() {
            if j.nrows() != d || j.ncols() != m {
                return Err(Error::Dim(format!(
                    "Jacobian {k} is {}x{}, expected {d}x{m}",
                    j.nrows(),
                    j.ncols()
                )));
            }
        }
        if let Some(r_v) = &metric {
            if r_v.nrows() != d || r_v.ncols() != d {
                return Err(Error::Dim(format!(
                    "metric is {}x{}, expected {d}x{d}",
                    r_v.nrows(),
                    r_v.ncols()
                )));
            }
            let scale = r_v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let asym = (r_v - &r_v.t()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale > 0.0 && asym > 1e-10 * scale {
                return Err(Error::Domain("metric is not symmetric".into()));
            }
            let f = numerics::chol_factor(r_v, 0.0)?;
            if f.jitter != 0.0 {
                return Err(Error::Domain("metric is not positive definite".into()));
            }
        }
        Ok(GradientDataset { x, y, dy, spec, metric })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }

    /// Clone the rows with the given indices into a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Result<GradientDataset> {
        let m = self.m();
        let d = self.d();
        let mut x = Array2::zeros((idx.len(), m));
        let mut y = Array2::zeros((idx.len(), d));
        let mut dy = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            if i >= self.n_samples() {
                return Err(Error::Argument(format!("sample index {i} out of range")));
            }
            x.row_mut(row).assign(&self.x.row(i));
            y.row_mut(row).assign(&self.y.row(i));
            dy.push(self.dy[i].clone());
        }
        GradientDataset::new(x, y, dy, self.spec.clone(), self.metric.clone())
    }
}

/// Assignment of each sample to one of k folds.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// (train, test) index sets for one fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Draw M i.i.d. rows from the input spec; deterministic given the seed.
pub fn sample_inputs(spec: &InputSpec, n: usize, seed: u64) -> Array2<f64> {
    let m = spec.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, m));
    for i in 0..n {
        for (j, dist) in spec.dists.iter().enumerate() {
            x[[i, j]] = match dist {
                CoordDist::Uniform { lower, upper } => {
                    lower + (upper - lower) * rng.gen::<f64>()
                }
                CoordDist::StandardNormal => rng.sample(StandardNormal),
            };
        }
    }
    x
}

/// Map uniform coordinates affinely to [-1, 1]; pass Gaussian coordinates
/// through unchanged. Out-of-bounds values raise a range error naming the
/// coordinate.
pub fn normalize(x: &Array2<f64>, spec: &InputSpec) -> Result<Array2<f64>> {
    if x.ncols() != spec.m() {
        return Err(Error::Dim(format!(
            "inputs have {} columns but spec declares {}",
            x.ncols(),
            spec.m()
        )));
    }
    let mut out = x.clone();
    for (j, dist) in spec.dists.iter().enumerate() {
        if let CoordDist::Uniform { lower, upper } = dist {
            for i in 0..x.nrows() {
                let v = x[[i, j]];
                if v < *lower || v > *upper {
                    return Err(Error::Range {
                        coord: spec.coord_name(j),
                        value: v,
                        lo: *lower,
                        hi: *upper,
                    });
                }
                out[[i, j]] = 2.0 * (v - lower) / (upper - lower) - 1.0;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(xn: &Array2<f64>, spec: &InputSpec) -> Result<Array2<f64>> {
    if xn.ncols() != spec.m() {
        return Err(Error::Dim(format!(
            "inputs have {} columns but spec declares {}",
            xn.ncols(),
            spec.m()
        )));
    }
    let mut out = xn.clone();
    for (j, dist) in spec.dists.iter().enumerate() {
        if let CoordDist::Uniform { lower, upper } = dist {
            for i in 0..xn.nrows() {
                out[[i, j]] = lower + (xn[[i, j]] + 1.0) * (upper - lower) / 2.0;
            }
        }
    }
    Ok(out)
}

/// Seeded k-fold partition with fold sizes differing by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::Argument(format!(
            "need 2 <= k <= M, got k={k}, M={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let base = n / k;
    let rem = n % k;
    let mut assignments = vec![0usize; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < rem);
        for _ in 0..size {
            assignments[perm[pos]] = fold;
            pos += 1;
        }
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// File locations for the CSV dataset schema.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub inputs: PathBuf,
    pub outputs: PathBuf,
    pub gradients: PathBuf,
    pub metric: Option<PathBuf>,
}

fn read_csv_matrix(path: &Path, has_headers: bool) -> Result<Array2<f64>> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .from_path(path)
        .map_err(|e| Error::Schema {
            file: file.clone(),
            row: 0,
            msg: e.to_string(),
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = if has_headers {
        rdr.headers()
            .map_err(|e| Error::Schema {
                file: file.clone(),
                row: 1,
                msg: e.to_string(),
            })?
            .len()
    } else {
        0
    };
    for (i, rec) in rdr.records().enumerate() {
        let row = i + if has_headers { 2 } else { 1 };
        let rec = rec.map_err(|e| Error::Schema {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        if width == 0 {
            width = rec.len();
        }
        if rec.len() != width {
            return Err(Error::Schema {
                file,
                row,
                msg: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(width);
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                file: file.clone(),
                row,
                msg: format!("not a number: {field:?}"),
            })?;
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() || width == 0 {
        return Err(Error::Schema {
            file,
            row: 0,
            msg: "no data rows".into(),
        });
    }
    let mut out = Array2::zeros((rows.len(), width));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Read a dataset from the CSV schema. Inputs are treated as already
/// normalized (the spec carries no bounds); gradients must be w.r.t. the
/// same coordinates.
pub fn read_dataset(paths: &DatasetPaths) -> Result<GradientDataset> {
    let x = read_csv_matrix(&paths.inputs, true)?;
    let y = read_csv_matrix(&paths.outputs, true)?;
    let g = read_csv_matrix(&paths.gradients, true)?;
    let (n, m) = (x.nrows(), x.ncols());
    let d = y.ncols();
    if y.nrows() != n {
        return Err(Error::Schema {
            file: paths.outputs.display().to_string(),
            row: y.nrows().min(n) + 1,
            msg: format!("outputs have {} rows, inputs have {n}", y.nrows()),
        });
    }
    if g.nrows() != n {
        return Err(Error::Schema {
            file: paths.gradients.display().to_string(),
            row: g.nrows().min(n) + 1,
            msg: format!("gradients have {} rows, inputs have {n}", g.nrows()),
        });
    }
    if g.ncols() != d * m {
        return Err(Error::Schema {
            file: paths.gradients.display().to_string(),
            row: 1,
            msg: format!("expected {} = d*m gradient columns, found {}", d * m, g.ncols()),
        });
    }
    let mut dy = Vec::with_capacity(n);
    for i in 0..n {
        let mut jac = Array2::zeros((d, m));
        for r in 0..d {
            for c in 0..m {
                jac[[r, c]] = g[[i, r * m + c]];
            }
        }
        dy.push(jac);
    }
    let metric = match &paths.metric {
        Some(p) => Some(read_csv_matrix(p, false)?),
        None => None,
    };
    GradientDataset::new(x, y, dy, InputSpec::standard_normal(m)?, metric)
}

fn write_csv_matrix(path: &Path, header: Option<&[String]>, data: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(cols) = header {
        writeln!(w, "{}", cols.join(","))?;
    }
    for row in data.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Write a dataset to the CSV schema with floats at 17 significant digits so
/// write-then-read round-trips bit-exactly.
pub fn write_dataset(ds: &GradientDataset, paths: &DatasetPaths) -> Result<()> {
    let (m, d) = (ds.m(), ds.d());
    let xcols: Vec<String> = (1..=m).map(|j| format!("x{j}")).collect();
    write_csv_matrix(&paths.inputs, Some(&xcols), &ds.x)?;
    let ycols: Vec<String> = (1..=d).map(|j| format!("y{j}")).collect();
    write_csv_matrix(&paths.outputs, Some(&ycols), &ds.y)?;
    let mut gcols = Vec::with_capacity(d * m);
    for r in 1..=d {
        for c in 1..=m {
            gcols.push(format!("g_{r}_{c}"));
        }
    }
    let mut g = Array2::zeros((ds.n_samples(), d * m));
    for (i, jac) in ds.dy.iter().enumerate() {
        for r in 0..d {
            for c in 0..m {
                g[[i, r * m + c]] = jac[[r, c]];
            }
        }
    }
    write_csv_matrix(&paths.gradients, Some(&gcols), &g)?;
    if let (Some(r_v), Some(p)) = (&ds.metric, &paths.metric) {
        write_csv_matrix(p, None, r_v)?;
    }
    Ok(())
}
