//! Analytic benchmark models with exact gradients, dataset generation, and
//! the Monte Carlo conditional-expectation profile oracle.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datasets::{denormalize, normalize, sample_inputs, GradientDataset, InputSpec};
use crate::error::{Error, Result};
use crate::subspace::{SubspaceKind, SubspaceResult};

type EvalFn = Box<dyn Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync>;
type GradFn = Box<dyn Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync>;

/// An analytic model: input domain, output dimension, evaluator, and exact
/// d x m Jacobian, both in physical coordinates.
pub struct Benchmark {
    pub name: String,
    pub spec: InputSpec,
    pub d: usize,
    eval_fn: EvalFn,
    grad_fn: GradFn,
}

impl Benchmark {
    /// Wrap user-supplied callables as a benchmark. The callables receive
    /// physical coordinates already validated against `spec`.
    pub fn new(
        name: impl Into<String>,
        spec: InputSpec,
        d: usize,
        eval_fn: impl Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
        grad_fn: impl Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
    ) -> Self {
        Benchmark {
            name: name.into(),
            spec,
            d,
            eval_fn: Box::new(eval_fn),
            grad_fn: Box::new(grad_fn),
        }
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    /// Evaluate after validating the input against the domain bounds.
    pub fn eval(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(x)?;
        Ok((self.eval_fn)(x))
    }

    /// Jacobian in physical coordinates, validated like `eval`.
    pub fn grad(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        Ok((self.grad_fn)(x))
    }

    fn check(&self, x: ArrayView1<f64>) -> Result<()> {
        let row = x.to_owned().insert_axis(Axis(0));
        normalize(&row, &self.spec).map(|_| ())
    }
}

/// Names accepted by `by_name`.
pub fn registry() -> Vec<&'static str> {
    vec!["paraboloid", "sine", "ebola", "vec-quadratic"]
}

pub fn by_name(name: &str) -> Result<Benchmark> {
    match name {
        "paraboloid" => Ok(paraboloid()),
        "sine" => Ok(sine_revolution()),
        "ebola" => Ok(ebola_r0()),
        "vec-quadratic" => Ok(vec_quadratic()),
        other => Err(Error::Argument(format!(
            "unknown benchmark {other:?}; available: {}",
            registry().join(", ")
        ))),
    }
}

/// f(x) = ½‖x‖² on [-1, 1]^8.
pub fn paraboloid() -> Benchmark {
    Benchmark {
        name: "paraboloid".into(),
        spec: InputSpec::uniform(8, -1.0, 1.0).unwrap(),
        d: 1,
        eval_fn: Box::new(|x| Array1::from_elem(1, 0.5 * x.dot(&x))),
        grad_fn: Box::new(|x| x.to_owned().insert_axis(Axis(0))),
    }
}

/// f(x) = sin(‖x‖²) on [-3, 3]², a surface of revolution with generatrix
/// sin(t²).
pub fn sine_revolution() -> Benchmark {
    Benchmark {
        name: "sine".into(),
        spec: InputSpec::uniform(2, -3.0, 3.0).unwrap(),
        d: 1,
        eval_fn: Box::new(|x| Array1::from_elem(1, x.dot(&x).sin())),
        grad_fn: Box::new(|x| {
            let c = 2.0 * x.dot(&x).cos();
            x.mapv(|v| c * v).insert_axis(Axis(0))
        }),
    }
}

const EBOLA_NAMES: [&str; 8] = [
    "beta1", "beta2", "beta3", "rho1", "gamma1", "gamma2", "omega", "psi",
];
const EBOLA_BOUNDS: [(f64, f64); 8] = [
    (0.1, 0.4),
    (0.1, 0.4),
    (0.05, 0.2),
    (0.41, 1.0),
    (0.0276, 0.1702),
    (0.081, 0.21),
    (0.25, 0.5),
    (0.0833, 0.7),
];

/// Basic reproduction number of the SEIR-based Ebola model,
/// R₀ = (β₁ + β₂ρ₁γ₁/ω + β₃ψ/γ₂) / (γ₁ + ψ), on the published ranges.
pub fn ebola_r0() -> Benchmark {
    let spec = InputSpec::from_bounds(&EBOLA_BOUNDS)
        .unwrap()
        .with_names(EBOLA_NAMES.iter().map(|s| s.to_string()).collect())
        .unwrap();
    Benchmark {
        name: "ebola".into(),
        spec,
        d: 1,
        eval_fn: Box::new(|p| {
            let (b1, b2, b3, r1, g1, g2, om, ps) =
                (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]);
            let num = b1 + b2 * r1 * g1 / om + b3 * ps / g2;
            Array1::from_elem(1, num / (g1 + ps))
        }),
        grad_fn: Box::new(|p| {
            let (b1, b2, b3, r1, g1, g2, om, ps) =
                (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]);
            let num = b1 + b2 * r1 * g1 / om + b3 * ps / g2;
            let den = g1 + ps;
            let mut g = Array2::zeros((1, 8));
            g[[0, 0]] = 1.0 / den;
            g[[0, 1]] = r1 * g1 / (om * den);
            g[[0, 2]] = ps / (g2 * den);
            g[[0, 3]] = b2 * g1 / (om * den);
            g[[0, 4]] = (b2 * r1 / om * den - num) / (den * den);
            g[[0, 5]] = -b3 * ps / (g2 * g2 * den);
            g[[0, 6]] = -b2 * r1 * g1 / (om * om * den);
            g[[0, 7]] = (b3 / g2 * den - num) / (den * den);
            g
        }),
    }
}

fn quadratic_benchmark(name: &str, forms: Vec<Array2<f64>>, spec: InputSpec) -> Benchmark {
    let d = forms.len();
    let forms_eval = forms.clone();
    Benchmark {
        name: name.into(),
        spec,
        d,
        eval_fn: Box::new(move |x| {
            Array1::from_iter(forms_eval.iter().map(|a| 0.5 * x.dot(&a.dot(&x))))
        }),
        grad_fn: Box::new(move |x| {
            let m = x.len();
            let mut j = Array2::zeros((forms.len(), m));
            for (row, a) in forms.iter().enumerate() {
                j.row_mut(row).assign(&a.dot(&x));
            }
            j
        }),
    }
}

/// Vector-valued quadratic map f_j(x) = ½ xᵀA_j x with fixed seeded SPD
/// forms A_j = B_jᵀB_j + I; exercises vector outputs and the R_V metric.
pub fn vec_quadratic() -> Benchmark {
    let (m, d) = (10, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(90210);
    let forms = (0..d)
        .map(|_| {
            let mut b = Array2::zeros((m, m));
            b.mapv_inplace(|_: f64| rng.sample(StandardNormal));
            let mut a = b.t().dot(&b);
            for i in 0..m {
                a[[i, i]] += 1.0;
            }
            a
        })
        .collect();
    quadratic_benchmark(
        "vec-quadratic",
        forms,
        InputSpec::uniform(m, -1.0, 1.0).unwrap(),
    )
}

/// Sample a benchmark dataset: inputs from the spec, outputs and gradients
/// analytic, gradients chain-ruled to normalized coordinates.
pub fn generate_dataset(bench: &Benchmark, n: usize, seed: u64) -> Result<GradientDataset> {
    if n == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let x = sample_inputs(&bench.spec, n, seed);
    let half = bench.spec.half_widths();
    let mut y = Array2::zeros((n, bench.d));
    let mut dy = Vec::with_capacity(n);
    for k in 0..n {
        let row = x.row(k);
        y.row_mut(k).assign(&bench.eval(row)?);
        let mut g = bench.grad(row)?;
        for (j, &h) in half.iter().enumerate() {
            g.column_mut(j).mapv_inplace(|v| v * h);
        }
        dy.push(g);
    }
    GradientDataset::new(x, y, dy, bench.spec.clone(), None)
}

/// Monte Carlo conditional-expectation profile
/// ĥ(P̂x) = (1/N)·Σ f(P̂x_n + (I−P̂)Y_i,n) with Y ~ input spec, the projector
/// applied in normalized coordinates, and f evaluated after denormalizing
/// (the combination may leave the sampling box; the analytic models extend).
pub fn mc_profile(
    bench: &Benchmark,
    res: &SubspaceResult,
    x: ArrayView1<f64>,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if res.kind != SubspaceKind::As {
        return Err(Error::Unsupported(
            "mc_profile needs a linear projector in input space (classic variant)".into(),
        ));
    }
    if bench.d != 1 {
        return Err(Error::Unsupported(
            "mc_profile is defined for scalar benchmarks".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Argument("need at least one Monte Carlo draw".into()));
    }
    let m = bench.m();
    if x.len() != m || res.w1.nrows() != m {
        return Err(Error::Dim(format!(
            "profile point has {} coordinates, subspace {}x{}, benchmark m={m}",
            x.len(),
            res.w1.nrows(),
            res.w1.ncols()
        )));
    }
    let xn = normalize(&x.to_owned().insert_axis(Axis(0)), &bench.spec)?;
    let proj = res.projector();
    let anchor = proj.dot(&xn.row(0));
    let draws = normalize(&sample_inputs(&bench.spec, n, seed), &bench.spec)?;
    let mut sum = 0.0;
    for i in 0..n {
        let yi = draws.row(i);
        let zn = &anchor + &yi - proj.dot(&yi);
        let z = denormalize(&zn.insert_axis(Axis(0)), &bench.spec)?;
        sum += (bench.eval_fn)(z.row(0))[0];
    }
    Ok(sum / n as f64)
}
