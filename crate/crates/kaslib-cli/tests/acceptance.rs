//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them stream). Criteria 1-4 reproduce the
//! published benchmark numbers end to end; 5-10 pin the numerical kernels
//! against independent oracles; 11 pins CLI determinism.

use std::fs;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kaslib::benchmarks::{by_name, generate_dataset, mc_profile, Benchmark};
use kaslib::datasets::{normalize, InputSpec};
use kaslib::featuremap::{build_feature_map, build_sigmoid_map, FeatureMap, SpectralMeasure};
use kaslib::gpr::{gp_fit, rrmse, KernelConfig};
use kaslib::numerics::sym_eig_desc;
use kaslib::pipeline::{compare, Comparison};
use kaslib::subspace::{active_subspace, covariance, kernel_active_subspace, SubspaceKind};
use kaslib::tuning::TuneConfig;

fn gate<F: FnOnce()>(id: usize, what: &str, f: F) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(()) => println!("criterion {id:2} PASS: {what}"),
        Err(e) => {
            println!("criterion {id:2} FAIL: {what}");
            resume_unwind(e);
        }
    }
}

struct BenchmarkRun {
    elapsed: Duration,
    as_mean: f64,
    kas_mean: f64,
    as_gap: f64,
    kas_gap: f64,
}

fn run_comparison(
    name: &str,
    n: usize,
    family: SpectralMeasure,
    grid: Vec<Vec<f64>>,
    folds: usize,
) -> BenchmarkRun {
    let bench = by_name(name).unwrap();
    let start = Instant::now();
    let ds = generate_dataset(&bench, n, 7).unwrap();
    let cfg = TuneConfig {
        grid,
        folds,
        tol: 0.8,
        d_features: 1000,
        r: 1,
        sigma_f: 1.0,
        seed: 7,
    };
    let cmp: Comparison = compare(&ds, &cfg, &family, &[1]).unwrap();
    let elapsed = start.elapsed();

    let mean = |kind: SubspaceKind| {
        let cell = cmp.report.cell(kind, 1).expect("cell");
        cell.mean
            .unwrap_or_else(|| panic!("no score for {kind:?}: {:?}", cell.note))
    };
    let (as_mean, kas_mean) = (mean(SubspaceKind::As), mean(SubspaceKind::Kas));

    let fm = cmp.feature_map.expect("tuning produced no winner");
    let as_res = active_subspace(&ds, 1).unwrap();
    let kas_res = kernel_active_subspace(&ds, &fm, 1).unwrap();
    let gap = |ev: &Array1<f64>| ev[1] / ev[0];
    BenchmarkRun {
        elapsed,
        as_mean,
        kas_mean,
        as_gap: gap(&as_res.eigvals),
        kas_gap: gap(&kas_res.eigvals),
    }
}

/// Criterion-1 settings (hyperparaboloid, 500 samples, D=1000, Gaussian
/// measure on the library's default grid, 3 folds), shared with criterion 4.
fn paraboloid_run() -> &'static BenchmarkRun {
    static RUN: OnceLock<BenchmarkRun> = OnceLock::new();
    RUN.get_or_init(|| {
        run_comparison(
            "paraboloid",
            500,
            SpectralMeasure::Gaussian { variance: 1.0 },
            Vec::new(),
            3,
        )
    })
}

#[test]
fn criterion_01_paraboloid_reproduction() {
    gate(1, "paraboloid: AS ~1, KAS <= 0.35, ratio >= 2, under 5 min", || {
        let run = paraboloid_run();
        assert!(
            (0.85..=1.10).contains(&run.as_mean),
            "AS mean RRMSE {} outside [0.85, 1.10]",
            run.as_mean
        );
        assert!(run.kas_mean <= 0.35, "KAS mean RRMSE {} > 0.35", run.kas_mean);
        assert!(
            run.as_mean / run.kas_mean >= 2.0,
            "AS/KAS ratio {} < 2",
            run.as_mean / run.kas_mean
        );
        assert!(
            run.elapsed <= Duration::from_secs(300),
            "took {:?}, budget 5 min",
            run.elapsed
        );
    });
}

#[test]
fn criterion_02_sine_surface_reproduction() {
    gate(2, "sine surface: AS in [0.90, 1.10], KAS <= 0.50", || {
        let run = run_comparison(
            "sine",
            800,
            SpectralMeasure::Laplace { location: 0.0, scale: 1.0 },
            sine_grid(),
            3,
        );
        assert!(
            (0.90..=1.10).contains(&run.as_mean),
            "AS mean RRMSE {} outside [0.90, 1.10]",
            run.as_mean
        );
        assert!(run.kas_mean <= 0.50, "KAS mean RRMSE {} > 0.50", run.kas_mean);
    });
}

#[test]
fn criterion_03_ebola_reproduction() {
    gate(3, "Ebola R0: KAS <= 0.45 and KAS <= AS", || {
        let run = run_comparison(
            "ebola",
            800,
            SpectralMeasure::Beta { alpha: 1.0, beta: 1.0 },
            ebola_grid(),
            5,
        );
        assert!(run.kas_mean <= 0.45, "KAS mean RRMSE {} > 0.45", run.kas_mean);
        assert!(
            run.kas_mean <= run.as_mean,
            "KAS {} worse than AS {}",
            run.kas_mean,
            run.as_mean
        );
    });
}

#[test]
fn criterion_04_eigenvalue_gaps() {
    gate(4, "paraboloid gaps: KAS l2/l1 <= 0.2, AS l2/l1 >= 0.5", || {
        let run = paraboloid_run();
        assert!(run.kas_gap <= 0.2, "KAS eigenvalue ratio {} > 0.2", run.kas_gap);
        assert!(run.as_gap >= 0.5, "AS eigenvalue ratio {} < 0.5", run.as_gap);
    });
}

/// Laplace (location, scale) axes for the sine surface. The winning region
/// sits at near-zero location (symmetric frequencies for a radial target)
/// and sub-unit scale in normalized coordinates.
fn sine_grid() -> Vec<Vec<f64>> {
    vec![vec![1e-3, 0.3], vec![0.4, 0.7, 1.0]]
}

/// Beta (alpha, beta) axes for the Ebola model: mass near zero frequency
/// (small alpha) suits the almost-linear response.
fn ebola_grid() -> Vec<Vec<f64>> {
    vec![vec![1e-3, 0.01, 0.05], vec![2.0, 100.0]]
}

fn rbf_unit(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let diff = &x.to_owned() - &y;
    (-diff.dot(&diff) / 2.0).exp()
}

#[test]
fn criterion_05_rff_kernel_fidelity() {
    gate(5, "RFF matches the RBF kernel; error shrinks with D", || {
        let m = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(501);
        let pairs: Vec<(Array1<f64>, Array1<f64>)> = (0..100)
            .map(|_| {
                let a = Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0));
                let b = Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0));
                (a, b)
            })
            .collect();
        let errors = |d: usize| -> Vec<f64> {
            let fm = build_feature_map(m, d, 1.0, SpectralMeasure::Gaussian { variance: 1.0 }, 502)
                .unwrap();
            pairs
                .iter()
                .map(|(a, b)| {
                    (fm.kernel_estimate(a.view(), b.view()).unwrap()
                        - rbf_unit(a.view(), b.view()))
                    .abs()
                })
                .collect()
        };
        let rms = |e: &[f64]| (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt();

        let big = errors(10_000);
        let max = big.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 0.05, "max |estimate - kernel| = {max} > 0.05 at D=10000");

        let small = errors(100);
        let ratio = rms(&small) / rms(&big);
        assert!(ratio >= 5.0, "RMS(D=100)/RMS(D=10000) = {ratio} < 5");
    });
}

fn fd_jacobian(fm: &FeatureMap, x: &Array1<f64>) -> Array2<f64> {
    let h = 1e-6;
    let mut out = Array2::zeros((fm.d(), fm.m()));
    for j in 0..fm.m() {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[j] += h;
        lo[j] -= h;
        let col = (fm.apply(hi.view()) - fm.apply(lo.view())) / (2.0 * h);
        out.column_mut(j).assign(&col);
    }
    out
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn criterion_06_jacobian_finite_differences() {
    gate(6, "map Jacobians match central differences (both variants)", || {
        let measures = [
            SpectralMeasure::Gaussian { variance: 0.7 },
            SpectralMeasure::MultivariateNormalDiag { diag: vec![0.5, 1.5] },
            SpectralMeasure::Laplace { location: 0.3, scale: 0.8 },
            SpectralMeasure::Beta { alpha: 2.0, beta: 3.0 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(601);
        for case in 0..100u64 {
            let m = [2, 5, 8][case as usize % 3];
            let d = [40, 120][case as usize % 2];
            let mut measure = measures[case as usize % 4].clone();
            if let SpectralMeasure::MultivariateNormalDiag { diag } = &mut measure {
                *diag = vec![0.9; m];
            }
            let fm = if case % 2 == 0 {
                build_feature_map(m, d, 1.3, measure, 600 + case).unwrap()
            } else {
                build_sigmoid_map(m, d, 0.9, 1.7, measure, 600 + case).unwrap()
            };
            let x = Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0));
            let analytic = fm.jacobian(x.view());
            let numeric = fd_jacobian(&fm, &x);
            let rel = frob(&(&analytic - &numeric)) / frob(&analytic);
            assert!(rel <= 1e-6, "case {case}: relative error {rel} > 1e-6");
        }
    });
}

#[test]
fn criterion_07_gradient_lift_residual() {
    gate(7, "lifted gradients reproduce input-space gradients", || {
        let mut rng = ChaCha8Rng::seed_from_u64(701);
        for case in 0..100u64 {
            let d_feat = [50, 500][case as usize % 2];
            let m = [2, 8][(case as usize / 2) % 2];
            let d_out = [1, 3][(case as usize / 4) % 2];
            let fm = if case % 3 == 2 {
                build_sigmoid_map(
                    m,
                    d_feat,
                    1.1,
                    0.9,
                    SpectralMeasure::Gaussian { variance: 1.0 },
                    700 + case,
                )
                .unwrap()
            } else {
                build_feature_map(
                    m,
                    d_feat,
                    1.0,
                    SpectralMeasure::Gaussian { variance: 1.0 },
                    700 + case,
                )
                .unwrap()
            };
            let x = Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0));
            let dxf = Array2::from_shape_fn((d_out, m), |_| rng.gen_range(-2.0..2.0));
            let lifted = fm.lift_gradient(x.view(), &dxf).unwrap();
            let reproduced = lifted.dot(&fm.jacobian(x.view()));
            let rel = frob(&(&reproduced - &dxf)) / frob(&dxf);
            assert!(rel <= 1e-8, "case {case}: relative residual {rel} > 1e-8");
        }
    });
}

/// y = a . x_normalized with constant gradient rows a.
fn linear_benchmark(a: Vec<f64>) -> Benchmark {
    let m = a.len();
    let spec = InputSpec::uniform(m, -1.0, 1.0).unwrap();
    let grad = Array1::from_vec(a);
    let gc = grad.clone();
    Benchmark::new(
        "linear",
        spec,
        1,
        move |x: ArrayView1<f64>| Array1::from_elem(1, grad.dot(&x)),
        move |_x: ArrayView1<f64>| gc.clone().insert_axis(Axis(0)),
    )
}

fn spd_metric(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = Array2::from_shape_fn((d, d), |_| rng.gen_range(-1.0..1.0));
    b.t().dot(&b) + Array2::<f64>::eye(d)
}

fn check_spd_spectrum(h: &Array2<f64>) {
    let asym = frob(&(h - &h.t().to_owned()));
    assert!(asym == 0.0, "covariance not exactly symmetric: {asym}");
    let (eigvals, _) = sym_eig_desc(h).unwrap();
    let top = eigvals[0].max(0.0);
    let min = eigvals[eigvals.len() - 1];
    assert!(min >= -1e-10 * top.max(1.0), "negative eigenvalue {min}");
    let trace: f64 = h.diag().sum();
    let sum: f64 = eigvals.sum();
    assert!(
        (sum - trace).abs() <= 1e-8 * trace.abs().max(1.0),
        "eigenvalue sum {sum} vs trace {trace}"
    );
}

#[test]
fn criterion_08_covariance_invariants() {
    gate(8, "covariance SPD/trace invariants; linear f recovers its ridge", || {
        // Scalar and vectorial datasets, the latter with a non-identity metric.
        let parab = generate_dataset(&by_name("paraboloid").unwrap(), 60, 801).unwrap();
        check_spd_spectrum(&covariance(&parab.dy, None).unwrap());

        let vq_bench = by_name("vec-quadratic").unwrap();
        let vq = generate_dataset(&vq_bench, 60, 802).unwrap();
        let metric = spd_metric(vq_bench.d, 803);
        check_spd_spectrum(&covariance(&vq.dy, Some(&metric)).unwrap());

        // The same invariants for the lifted (kernel) covariance.
        let fm = build_feature_map(
            vq_bench.m(),
            40,
            1.0,
            SpectralMeasure::Gaussian { variance: 1.0 },
            804,
        )
        .unwrap();
        let xn = normalize(&vq.x, &vq.spec).unwrap();
        let lifted: Vec<Array2<f64>> = (0..vq.n_samples())
            .map(|k| fm.lift_gradient(xn.row(k), &vq.dy[k]).unwrap())
            .collect();
        check_spd_spectrum(&covariance(&lifted, Some(&metric)).unwrap());

        // Linear model: rank-1 covariance aligned with the coefficient vector.
        let a = vec![3.0, -1.0, 2.0, 0.5];
        let bench = linear_benchmark(a.clone());
        let ds = generate_dataset(&bench, 200, 805).unwrap();
        let res = active_subspace(&ds, 1).unwrap();
        assert!(
            res.eigvals[1] <= 1e-10 * res.eigvals[0],
            "second eigenvalue {} not negligible vs {}",
            res.eigvals[1],
            res.eigvals[0]
        );
        let v = Array1::from_vec(a.clone());
        let unit = &v / v.dot(&v).sqrt();
        let analytic = unit
            .clone()
            .insert_axis(Axis(1))
            .dot(&unit.clone().insert_axis(Axis(0)));
        let dist = frob(&(&res.projector() - &analytic));
        assert!(dist <= 1e-8, "projector distance {dist} > 1e-8");
    });
}

#[test]
fn criterion_09_gp_regression_contract() {
    gate(9, "GP interpolates, reverts to the prior, and RRMSE identities hold", || {
        let n = 25;
        let xr = Array1::linspace(-2.0, 2.0, n).insert_axis(Axis(1));
        let y = xr.mapv(|v: f64| (1.5 * v).sin());
        let init = KernelConfig {
            lengthscale: 1.0,
            signal_variance: 1.0,
            noise_variance: 1e-6,
        };
        let model = gp_fit(&xr, &y, init, 200).unwrap();
        for i in 0..n {
            let (mean, _) = model.predict(xr.row(i)).unwrap();
            let err = (mean[0] - y[[i, 0]]).abs();
            assert!(err <= 1e-4, "interpolation error {err} at point {i}");
        }

        let far = Array1::from_vec(vec![1e4]);
        let (mean, var) = model.predict(far.view()).unwrap();
        let s = model.cfg.signal_variance;
        assert!(mean[0].abs() <= 1e-8, "far-field mean {} not at prior 0", mean[0]);
        assert!(
            (var - s).abs() <= 1e-8 * s,
            "far-field variance {var} not at prior {s}"
        );

        let t = Array1::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(rrmse(t.view(), t.view()).unwrap(), 0.0);
        let const_pred = Array1::from_elem(3, 2.0);
        assert!((rrmse(t.view(), const_pred.view()).unwrap() - 1.0).abs() <= 1e-15);
        let off = Array1::from_vec(vec![1.0, 2.0, 4.0]);
        let expect = 0.5f64.sqrt();
        assert!((rrmse(t.view(), off.view()).unwrap() - expect).abs() <= 1e-15);
    });
}

#[test]
fn criterion_10_mc_profile_oracle() {
    gate(10, "MC profile: exact for linear f, consistent for the paraboloid", || {
        let bench = linear_benchmark(vec![2.0, -1.0, 0.5]);
        let ds = generate_dataset(&bench, 100, 1001).unwrap();
        let res = active_subspace(&ds, 1).unwrap();
        let x = Array1::from_vec(vec![0.3, -0.2, 0.6]);
        let anchor = res.projector().dot(&x);
        let truth = bench.eval(anchor.view()).unwrap()[0];
        for n in [1usize, 7, 100] {
            let est = mc_profile(&bench, &res, x.view(), n, 1002).unwrap();
            assert!(
                (est - truth).abs() <= 1e-12 * truth.abs().max(1.0),
                "N={n}: profile {est} vs projected evaluation {truth}"
            );
        }

        let parab = by_name("paraboloid").unwrap();
        let pds = generate_dataset(&parab, 300, 1003).unwrap();
        let pres = active_subspace(&pds, 7).unwrap();
        let px = Array1::from_elem(8, 0.3);
        let reference = mc_profile(&parab, &pres, px.view(), 1_000_000, 1004).unwrap();
        let estimate = mc_profile(&parab, &pres, px.view(), 10_000, 1005).unwrap();
        let repeats: Vec<f64> = (0..12)
            .map(|i| mc_profile(&parab, &pres, px.view(), 10_000, 1010 + i).unwrap())
            .collect();
        let mean = repeats.iter().sum::<f64>() / repeats.len() as f64;
        let se = (repeats.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (repeats.len() - 1) as f64)
            .sqrt();
        assert!(
            (estimate - reference).abs() <= 3.0 * se,
            "estimate {estimate} vs reference {reference}, 3*SE = {}",
            3.0 * se
        );
    });
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_kaslib"))
        .args(args)
        .output()
        .expect("spawn kaslib");
    assert!(
        out.status.success(),
        "kaslib {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_identical_trees(a: &Path, b: &Path) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no outputs in {}", a.display());
    for name in names {
        let left = fs::read(a.join(&name)).unwrap();
        let right = fs::read(b.join(&name)).unwrap_or_default();
        assert!(left == right, "{name} differs between reruns");
    }
}

#[test]
fn criterion_11_cli_determinism() {
    gate(11, "identical flags and seed give byte-identical outputs", || {
        let root = tempfile::tempdir().unwrap();
        let root = root.path();

        // Dataset CSVs produced by run-benchmark feed fit/predict/tune below.
        for pass in ["a", "b"] {
            let dir = root.join(format!("bench_{pass}"));
            run_cli(&[
                "run-benchmark",
                "--name",
                "paraboloid",
                "--train",
                "50",
                "--test",
                "40",
                "--features",
                "120",
                "--r",
                "1",
                "--folds",
                "2",
                "--tol",
                "2",
                "--grid-points",
                "3",
                "--seed",
                "9",
                "--out-dir",
                dir.to_str().unwrap(),
            ]);
        }
        assert_identical_trees(&root.join("bench_a"), &root.join("bench_b"));

        let data = root.join("data");
        fs::create_dir_all(&data).unwrap();
        let mut inputs = String::from("x1,x2\n");
        let mut outputs = String::from("y1\n");
        let mut gradients = String::from("g_1_1,g_1_2\n");
        let mut rng = ChaCha8Rng::seed_from_u64(1100);
        for _ in 0..12 {
            let (x1, x2): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            inputs.push_str(&format!("{x1},{x2}\n"));
            outputs.push_str(&format!("{}\n", (x1 + 0.5 * x2).tanh()));
            let sech2 = 1.0 - (x1 + 0.5 * x2).tanh().powi(2);
            gradients.push_str(&format!("{},{}\n", sech2, 0.5 * sech2));
        }
        fs::write(data.join("inputs.csv"), inputs).unwrap();
        fs::write(data.join("outputs.csv"), outputs).unwrap();
        fs::write(data.join("gradients.csv"), gradients).unwrap();
        let ds_args = |rest: &[&str]| -> Vec<String> {
            let mut v: Vec<String> = vec![
                "--inputs".into(),
                data.join("inputs.csv").display().to_string(),
                "--outputs".into(),
                data.join("outputs.csv").display().to_string(),
                "--gradients".into(),
                data.join("gradients.csv").display().to_string(),
            ];
            v.extend(rest.iter().map(|s| s.to_string()));
            v
        };

        for pass in ["a", "b"] {
            let dir = root.join(format!("tune_{pass}"));
            let mut args = vec!["tune".to_string()];
            args.extend(ds_args(&[
                "--features",
                "80",
                "--measure",
                "gaussian",
                "--folds",
                "2",
                "--tol",
                "2",
                "--grid-points",
                "2",
                "--seed",
                "9",
                "--out-dir",
                dir.to_str().unwrap(),
            ]));
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            run_cli(&argv);
        }
        assert_identical_trees(&root.join("tune_a"), &root.join("tune_b"));

        for pass in ["a", "b"] {
            let dir = root.join(format!("fit_{pass}"));
            let mut args = vec!["fit".to_string()];
            args.extend(ds_args(&[
                "--method",
                "kas",
                "--r",
                "1",
                "--features",
                "80",
                "--seed",
                "9",
                "--out-dir",
                dir.to_str().unwrap(),
            ]));
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            run_cli(&argv);
            run_cli(&[
                "predict",
                "--inputs",
                data.join("inputs.csv").to_str().unwrap(),
                "--out-dir",
                dir.to_str().unwrap(),
            ]);
        }
        assert_identical_trees(&root.join("fit_a"), &root.join("fit_b"));
    });
}
