//! End-to-end acceptance checks, one `PASS`/`FAIL` line each.
//!
//! Runs without the libtest harness so the allocation counter below sees a
//! single thread. The MNIST checks need the four uncompressed IDX files in
//! `$LRLGF_DATA_DIR` or `<workspace>/data/mnist`; they fail when the files
//! are missing.

use std::alloc::{GlobalAlloc, Layout, System};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use lrlgf_cli::config::{ExperimentConfig, DATA_DIR_ENV};
use lrlgf_cli::experiment::run_arms;
use lrlgf_cli::results::{summarize_table, Summary};
use lrlgf_core::dplr::{compress, DplrSym, ProcessNoise};
use lrlgf_core::lgf::{initial_belief, laplace_precision, predict, run_filter, FilterConfig, LambdaSchedule};
use lrlgf_core::net::{
    forward, ggn_factors, init_params, loss_and_grad, loss_only, output_hessian, per_sample_jacobian, reg_loss_and_grad,
    train_task, Activation, Arch, LossKind, MlpParams, Regularizer, TrainConfig,
};
use lrlgf_core::oracle::{
    dense_gain, dense_ggn, dense_hessian_fd, dense_inverse, dense_laplace_update, dense_predict, dense_rts, fd_gradient,
    min_eigenvalue, rel_frobenius, DenseGaussian, DensePenalty,
};
use lrlgf_core::rng::{derive_seed, stream, SplitMix64};
use lrlgf_core::rts::{run_smoother, smooth_mean_step, smooth_precision_step, smoother_gain};
use lrlgf_core::tasks::{make_synthetic, SyntheticSpec, TaskDataset, MNIST_FILES};
use nalgebra::{DMatrix, DVector};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static LARGEST: AtomicUsize = AtomicUsize::new(0);

fn record(size: usize) {
    let live = LIVE.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(live, Ordering::Relaxed);
    LARGEST.fetch_max(size, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            record(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            record(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
            record(new_size);
        }
        p
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Resets the peak and largest-block counters; returns current live bytes.
fn start_counting() -> usize {
    let live = LIVE.load(Ordering::Relaxed);
    PEAK.store(live, Ordering::Relaxed);
    LARGEST.store(0, Ordering::Relaxed);
    live
}

type Check = Result<String, String>;

fn run(id: usize, name: &str, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("AC{id:<2} {tag} {name}: {detail} [{secs:.1}s]");
    outcome.is_ok()
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn random_dplr(rng: &mut SplitMix64, d: usize, k: usize) -> DplrSym {
    let diag = DVector::from_fn(d, |_, _| rng.uniform(0.5, 2.0));
    let factor = DMatrix::from_fn(d, k, |_, _| rng.normal() / (d as f64).sqrt());
    let a = DMatrix::from_fn(k, k, |_, _| rng.normal());
    let core = &a * a.transpose() / (k.max(1) as f64) + DMatrix::identity(k, k) * 0.1;
    DplrSym::new(diag, factor, core).unwrap()
}

fn dense(a: &DplrSym) -> DMatrix<f64> {
    a.to_dense().unwrap()
}

fn with_diag(m: &DMatrix<f64>, extra: &DVector<f64>) -> DMatrix<f64> {
    m + DMatrix::from_diagonal(extra)
}

fn dplr_equivalence() -> Check {
    let start = Instant::now();
    let mut worst = [0.0f64; 6];
    let mut trials = 0;
    let mut empty_rejected = true;
    for d in [4, 8, 16, 32] {
        for k in [0, 1, 4, 8] {
            let mut rng = SplitMix64::new(derive_seed((d * 100 + k) as u64, 1));
            for _ in 0..100 {
                let a = random_dplr(&mut rng, d, k);
                let b = random_dplr(&mut rng, d, k);
                let ad = dense(&a);
                let extra = DVector::from_fn(d, |_, _| rng.uniform(0.0, 1.0));
                let q = ProcessNoise::new(DVector::from_fn(d, |_, _| rng.uniform(0.0, 1.0))).unwrap();

                let errs = [
                    rel_frobenius(&dense(&a.add_diag(&extra).unwrap()), &with_diag(&ad, &extra)),
                    rel_frobenius(&dense(&a.invert().unwrap()), &dense_inverse(&ad, "oracle").unwrap()),
                    rel_frobenius(&dense(&a.add_lowrank_exact(&b).unwrap()), &(&ad + dense(&b))),
                    {
                        let cov = with_diag(&dense_inverse(&ad, "oracle").unwrap(), q.as_vector());
                        rel_frobenius(&dense(&a.predict_precision(&q).unwrap()), &dense_inverse(&cov, "oracle").unwrap())
                    },
                    rel_frobenius(&smoother_gain(&a, &q).unwrap().to_dense().unwrap(), &dense_gain(&ad, &q).unwrap()),
                    if k == 0 {
                        empty_rejected &= compress(&DMatrix::zeros(d, 0), 0).is_err();
                        0.0
                    } else {
                        let w = DMatrix::from_fn(d, k, |_, _| rng.normal());
                        let c = compress(&w, k.min(d)).unwrap();
                        let s2 = c.singular_values.map(|s| s * s);
                        let approx = &c.basis * DMatrix::from_diagonal(&s2) * c.basis.transpose();
                        let ortho = (c.basis.transpose() * &c.basis - DMatrix::identity(c.rank(), c.rank())).amax();
                        let sorted = c.singular_values.as_slice().windows(2).all(|p| p[0] >= p[1]);
                        if ortho > 1e-10 || !sorted {
                            1.0
                        } else {
                            rel_frobenius(&approx, &(&w * w.transpose()))
                        }
                    },
                ];
                for (w, e) in worst.iter_mut().zip(errs) {
                    *w = w.max(e);
                }
                trials += 1;
            }
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    let detail = format!(
        "{trials} trials; worst rel err add_diag {:.1e}, invert {:.1e}, add_lowrank_exact {:.1e}, predict {:.1e}, gain {:.1e}, compress {:.1e}; empty factor rejected: {empty_rejected}",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
    );
    verdict(max < 1e-8 && empty_rejected && within(start.elapsed(), 60), detail)
}

fn woodbury_round_trip() -> Check {
    let mut rng = SplitMix64::new(2);
    let mut worst = 0.0f64;
    let mut trials = 0;
    for d in [4, 8, 16, 32] {
        for k in [1, 2, 4, 8] {
            for _ in 0..25 {
                let a = random_dplr(&mut rng, d, k);
                let back = a.invert().unwrap().invert().unwrap();
                worst = worst.max(rel_frobenius(&dense(&back), &dense(&a)));
                trials += 1;
            }
        }
    }
    verdict(worst < 1e-8, format!("{trials} trials; worst rel err {worst:.2e}"))
}

fn random_inputs(rng: &mut SplitMix64, n: usize, d: usize, classes: usize) -> (DMatrix<f64>, Vec<usize>) {
    let x = DMatrix::from_fn(n, d, |_, _| rng.normal());
    let y = (0..n).map(|_| rng.below(classes)).collect();
    (x, y)
}

fn summed_ggn(p: &MlpParams, x: &DMatrix<f64>) -> DMatrix<f64> {
    let blocks = ggn_factors(p, x, x.nrows(), 4, 11).unwrap();
    let d = p.dim();
    blocks.iter().fold(DMatrix::zeros(d, d), |acc, f| acc + &f.block * f.block.transpose())
}

fn curvature() -> Check {
    let mut rng = SplitMix64::new(3);
    let linear = Arch::mlp(&[8, 5]).unwrap();
    let p = init_params(&linear, 4);
    let (x, y) = random_inputs(&mut rng, 12, 8, 5);
    let n = x.nrows() as f64;
    let ggn = summed_ggn(&p, &x);
    let fd = dense_hessian_fd(|th| n * loss_only(&p.with_theta(th.clone()).unwrap(), &x, &y).unwrap(), p.theta(), Some(1e-4))
        .unwrap();
    let linear_err = rel_frobenius(&ggn, &fd);

    let tiny = Arch::mlp(&[3, 4, 3]).unwrap();
    let p = init_params(&tiny, 5);
    let (x, _) = random_inputs(&mut rng, 10, 3, 3);
    let ggn = summed_ggn(&p, &x);
    let mut js = Vec::new();
    let mut hs = Vec::new();
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let logits = forward(&p, &DMatrix::from_row_slice(1, row.len(), &row)).unwrap();
        js.push(per_sample_jacobian(&p, &row).unwrap());
        hs.push(output_hessian(tiny.loss(), logits.as_slice()));
    }
    let want = dense_ggn(&js, &hs).unwrap();
    let mlp_err = rel_frobenius(&ggn, &want);
    let floor = -1e-9 * ggn.trace() / ggn.nrows() as f64;
    let min_eig = min_eigenvalue(&ggn);
    verdict(
        linear_err < 1e-4 && mlp_err < 1e-12 && min_eig >= floor,
        format!("linear model D={} rel err {linear_err:.2e}; tanh MLP rel err {mlp_err:.1e}, min eig {min_eig:.1e}", linear.num_params()),
    )
}

fn gradient_checks() -> Check {
    let mut rng = SplitMix64::new(6);
    let shapes: [&[usize]; 4] = [&[3, 4, 2], &[4, 5, 3], &[2, 6, 6, 3], &[5, 7]];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for case in 0..24 {
        let sizes = shapes[case % shapes.len()];
        let loss = if case % 2 == 0 { LossKind::CrossEntropy } else { LossKind::SquaredError };
        let arch = Arch::new(sizes.to_vec(), Activation::Tanh, loss).unwrap();
        let d = arch.num_params();
        let p = init_params(&arch, case as u64);
        let (x, y) = random_inputs(&mut rng, 7, arch.input_dim(), arch.output_dim());
        let theta = p.theta().clone();
        let at = |th: &DVector<f64>| p.with_theta(th.clone()).unwrap();

        let (_, g) = loss_and_grad(&p, &x, &y).unwrap();
        let fd = fd_gradient(|th| loss_only(&at(th), &x, &y).unwrap(), &theta, 1e-5);
        worst = worst.max((&g - &fd).norm() / fd.norm().max(1e-12));

        let prec = random_dplr(&mut rng, d, 3);
        let anchor = DVector::from_fn(d, |_, _| rng.normal() * 0.1);
        let reg = Regularizer::new(anchor, prec, rng.uniform(0.1, 3.0)).unwrap();
        let (_, g) = reg_loss_and_grad(&p, &x, &y, &reg).unwrap();
        let fd = fd_gradient(|th| reg_loss_and_grad(&at(th), &x, &y, &reg).unwrap().0, &theta, 1e-5);
        worst = worst.max((&g - &fd).norm() / fd.norm().max(1e-12));
        cases += 2;
    }
    verdict(worst < 1e-4, format!("{cases} cases; worst rel err {worst:.2e}"))
}

fn synthetic_setup(tasks: usize, q: f64) -> (Arch, Vec<lrlgf_core::tasks::Task>, FilterConfig) {
    let arch = Arch::mlp(&[2, 10, 3]).unwrap();
    let spec = SyntheticSpec { tasks, classes: 3, train_per_class: 30, drift: [0.4, -0.2], ..Default::default() };
    let data = make_synthetic(&spec, 17).unwrap();
    let d = arch.num_params();
    let cfg = FilterConfig {
        lambda: LambdaSchedule::Affine { intercept: 2.0, slope: -0.5 },
        rank: d,
        noise: ProcessNoise::uniform(d, q).unwrap(),
        train: TrainConfig { epochs: 3, batch_size: 16, ..Default::default() },
        curvature_samples: 8,
        chunk_size: 3,
        seed: 5,
        ..FilterConfig::new(&arch)
    };
    (arch, data, cfg)
}

fn dense_curvature(arch: &Arch, theta: &DVector<f64>, data: &TaskDataset, cfg: &FilterConfig, t: usize) -> DMatrix<f64> {
    let p = MlpParams::new(arch.clone(), theta.clone()).unwrap();
    let m = cfg.curvature_samples.min(data.len());
    let seed = derive_seed(cfg.curvature_seed(t), stream::CURVATURE);
    let rows = SplitMix64::new(seed).sample_without_replacement(data.len(), m);
    let mut js = Vec::new();
    let mut hs = Vec::new();
    for &i in &rows {
        let x: Vec<f64> = data.inputs.row(i).iter().copied().collect();
        let logits = forward(&p, &DMatrix::from_row_slice(1, x.len(), &x)).unwrap();
        js.push(per_sample_jacobian(&p, &x).unwrap());
        hs.push(output_hessian(arch.loss(), logits.as_slice()));
    }
    dense_ggn(&js, &hs).unwrap()
}

/// Independent dense filter and smoother: dense penalty, dense curvature,
/// dense Gaussian algebra. Only the data and the seeds are shared.
fn full_rank_chain() -> Check {
    let start = Instant::now();
    let (arch, tasks, cfg) = synthetic_setup(4, 0.01);
    let d = arch.num_params();
    let train: Vec<&TaskDataset> = tasks.iter().map(|t| &t.train).collect();
    let trace = run_filter(&arch, &train, &cfg).map_err(|e| e.to_string())?;

    let init = initial_belief(&arch, &cfg);
    let mut belief = DenseGaussian::new(init.mean, DMatrix::identity(d, d) / cfg.initial_precision).unwrap();
    let mut filtered = Vec::new();
    let (mut prec_err, mut mean_err) = (0.0f64, 0.0f64);
    for (i, data) in train.iter().enumerate() {
        let t = i + 1;
        let pred = dense_predict(&belief, &cfg.noise).unwrap();
        let penalty =
            DensePenalty { anchor: pred.mean.clone(), precision: pred.precision().unwrap(), strength: cfg.lambda.at(t) };
        let p0 = MlpParams::new(arch.clone(), pred.mean.clone()).unwrap();
        let mode = train_task(&p0, &data.inputs, &data.labels, Some(&penalty), &cfg.train_for(t)).unwrap();
        let h = dense_curvature(&arch, mode.theta(), data, &cfg, t);
        belief = dense_laplace_update(&pred, &h, mode.theta()).unwrap();
        prec_err = prec_err.max(rel_frobenius(&dense(&trace.beliefs[i].precision), &belief.precision().unwrap()));
        mean_err = mean_err.max((&trace.beliefs[i].mean - &belief.mean).amax());
        filtered.push(belief.clone());
    }

    let smoothed = run_smoother(&trace, d).map_err(|e| e.to_string())?;
    let want = dense_rts(&filtered, &cfg.noise).unwrap();
    let (mut cov_err, mut smean_err) = (0.0f64, 0.0f64);
    for (g, w) in smoothed.iter().zip(&want) {
        let cov = dense_inverse(&dense(&g.precision), "oracle").unwrap();
        cov_err = cov_err.max(rel_frobenius(&cov, &w.cov));
        smean_err = smean_err.max((&g.mean - &w.mean).amax());
    }
    verdict(
        prec_err < 1e-6 && cov_err < 1e-6 && mean_err < 1e-8 && smean_err < 1e-8 && within(start.elapsed(), 120),
        format!(
            "D={d}, T=4; filtered precision rel {prec_err:.1e}, mean abs {mean_err:.1e}; smoothed covariance rel {cov_err:.1e}, mean abs {smean_err:.1e}"
        ),
    )
}

fn zero_noise() -> Check {
    let (arch, tasks, cfg) = synthetic_setup(3, 0.0);
    let cfg = FilterConfig { rank: 12, ..cfg };
    let train: Vec<&TaskDataset> = tasks.iter().map(|t| &t.train).collect();
    let trace = run_filter(&arch, &train, &cfg).map_err(|e| e.to_string())?;
    let mut predict_identity = true;
    let mut gain_identity = true;
    for b in &trace.beliefs {
        let p = predict(b, &cfg.noise).map_err(|e| e.to_string())?;
        predict_identity &= p.mean == b.mean && p.precision == b.precision;
        let g = smoother_gain(&b.precision, &cfg.noise).map_err(|e| e.to_string())?;
        gain_identity &= g.is_identity();
    }
    let smoothed = run_smoother(&trace, cfg.rank).map_err(|e| e.to_string())?;
    let last = &trace.beliefs.last().unwrap().mean;
    let drift = smoothed.iter().map(|s| (&s.mean - last).amax()).fold(0.0, f64::max);
    verdict(
        predict_identity && gain_identity && drift <= 1e-10,
        format!("predict identity: {predict_identity}; gain identity: {gain_identity}; max |m^s_t - m_T| {drift:.1e}"),
    )
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> Result<PathBuf, String> {
    let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| workspace().join("data/mnist"));
    match MNIST_FILES.iter().find(|f| !dir.join(f).exists() && !dir.join(format!("{f}.gz")).exists()) {
        None => Ok(dir),
        Some(f) => Err(format!("MNIST file {f} not found under {} (set {DATA_DIR_ENV} or run fetch-mnist)", dir.display())),
    }
}

fn load_config(name: &str) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(&workspace().join("configs").join(name)).map_err(|e| e.to_string())?;
    cfg.data_dir = Some(mnist_dir()?);
    cfg.save_traces = false;
    Ok(cfg)
}

fn experiment(cfg: &ExperimentConfig, baseline: bool) -> Result<Summary, String> {
    let table = run_arms(cfg, baseline).map_err(|e| e.to_string())?;
    if let Some(f) = table.failures.first() {
        return Err(format!("seed {} ({}) failed: {}", f.seed, f.arm, f.message));
    }
    Ok(summarize_table(&table))
}

fn final_average(s: &Summary, tag: &str, t: usize) -> Result<f64, String> {
    s.curve(tag, t).map(|c| c.average.mean).ok_or_else(|| format!("no {tag} curve at task {t}"))
}

fn cell(s: &Summary, tag: &str, after: usize, eval: usize) -> Result<f64, String> {
    s.cell(tag, after, eval).map(|c| c.stats.mean).ok_or_else(|| format!("no {tag} cell ({after}, {eval})"))
}

fn trend(name: &str, min_gap: f64, limit_secs: u64) -> Check {
    let start = Instant::now();
    let cfg = load_config(name)?;
    let t = cfg.tasks.num_tasks();
    let s = experiment(&cfg, true)?;
    let lgf = final_average(&s, "filtered", t)?;
    let base = final_average(&s, "baseline", t)?;
    let seeds = s.seeds.len();
    verdict(
        lgf - base >= min_gap && seeds >= 4 && within(start.elapsed(), limit_secs),
        format!("{seeds} seeds; final average accuracy LR-LGF {lgf:.4} vs baseline {base:.4} (gap {:+.4})", lgf - base),
    )
}

fn smoothing_boost() -> Check {
    let start = Instant::now();
    let cfg = load_config("brightness_smooth.json")?;
    let t = cfg.tasks.num_tasks();
    let s = experiment(&cfg, false)?;
    let filtered = cell(&s, "filtered", 1, 1)?;
    let smoothed = cell(&s, "smoothed", t, 1)?;
    verdict(
        smoothed > filtered && s.seeds.len() >= 8 && within(start.elapsed(), 1200),
        format!("{} seeds; task 1 accuracy filtered {filtered:.4} -> smoothed {smoothed:.4} ({:+.4})", s.seeds.len(), smoothed - filtered),
    )
}

/// Means over `t` of the across-seed current-task and seen-average curves.
fn curve_means(s: &Summary, t: usize) -> Result<(f64, f64), String> {
    let mut current = 0.0;
    let mut average = 0.0;
    for after in 1..=t {
        let c = s.curve("filtered", after).ok_or_else(|| format!("no curve at task {after}"))?;
        current += c.current.ok_or("missing current-task accuracy")?.mean;
        average += c.average.mean;
    }
    Ok((current / t as f64, average / t as f64))
}

fn structured_noise() -> Check {
    let structured = load_config("brightness_structured_q.json")?;
    let mut plain = structured.clone();
    plain.filter.noise.clear();
    let t = structured.tasks.num_tasks();
    let (cur_q, avg_q) = curve_means(&experiment(&structured, false)?, t)?;
    let (cur_0, avg_0) = curve_means(&experiment(&plain, false)?, t)?;
    verdict(
        cur_q >= cur_0 && avg_0 - avg_q <= 0.03 && structured.seeds.len() >= 8,
        format!(
            "{} seeds; current-task accuracy {cur_q:.4} (first-layer Q) vs {cur_0:.4} (Q=0); seen-task average {avg_q:.4} vs {avg_0:.4}",
            structured.seeds.len()
        ),
    )
}

fn between_tasks() -> Check {
    let cfg = load_config("brightness_gaps.json")?;
    let t = cfg.tasks.num_tasks();
    let s = experiment(&cfg, false)?;
    let mut parts = Vec::new();
    let (mut pred_sum, mut smooth_sum) = (0.0, 0.0);
    for &g in &cfg.gaps {
        let pred = cell(&s, "filtered", g, g)?;
        let smooth = cell(&s, "smoothed", t, g)?;
        parts.push(format!("task {g}: predict-only {pred:.4}, smoothed {smooth:.4}"));
        pred_sum += pred;
        smooth_sum += smooth;
    }
    let n = cfg.gaps.len() as f64;
    verdict(
        !cfg.gaps.is_empty() && smooth_sum >= pred_sum && s.seeds.len() >= 8,
        format!("{} seeds; {}; mean {:.4} vs {:.4}", s.seeds.len(), parts.join("; "), smooth_sum / n, pred_sum / n),
    )
}

fn update_algebra_seconds(d: usize) -> f64 {
    let k = 20;
    let mut rng = SplitMix64::new(d as u64);
    let prior = random_dplr(&mut rng, d, k);
    let next = random_dplr(&mut rng, d, k);
    let noise = ProcessNoise::uniform(d, 1e-3).unwrap();
    let blocks: Vec<DMatrix<f64>> = (0..10).map(|_| DMatrix::from_fn(d, 4, |_, _| rng.normal() * 0.1)).collect();
    let mean = DVector::from_fn(d, |_, _| rng.normal());
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let start = Instant::now();
        let pred = prior.predict_precision(&noise).unwrap();
        let filt = laplace_precision(&pred, &blocks, k, false).unwrap();
        let gain = smoother_gain(&filt, &noise).unwrap();
        let _ = smooth_mean_step(&mean, &mean, &gain);
        let _ = smooth_precision_step(&filt, &next, &noise, &gain, k).unwrap();
        best = best.min(start.elapsed().as_secs_f64());
    }
    best
}

/// Peak extra live bytes and largest single allocation of a filter plus
/// smoother pass over `tasks` synthetic tasks.
fn measured_run(arch: &Arch, k: usize, samples: usize, tasks: usize) -> Result<(usize, usize), String> {
    let spec = SyntheticSpec { tasks, classes: 3, train_per_class: 30, drift: [0.3, 0.1], ..Default::default() };
    let data = make_synthetic(&spec, 8).unwrap();
    let train: Vec<&TaskDataset> = data.iter().map(|t| &t.train).collect();
    let cfg = FilterConfig {
        rank: k,
        noise: ProcessNoise::uniform(arch.num_params(), 1e-3).unwrap(),
        train: TrainConfig { epochs: 2, batch_size: 32, ..Default::default() },
        curvature_samples: samples,
        seed: 1,
        ..FilterConfig::new(arch)
    };
    let before = start_counting();
    let trace = run_filter(arch, &train, &cfg).map_err(|e| e.to_string())?;
    let smoothed = run_smoother(&trace, k).map_err(|e| e.to_string())?;
    let peak = PEAK.load(Ordering::Relaxed) - before;
    drop((trace, smoothed));
    Ok((peak, LARGEST.load(Ordering::Relaxed)))
}

fn scaling() -> Check {
    let arch = Arch::mlp(&[2, 140, 140, 3]).unwrap();
    let d = arch.num_params();
    let (k, samples) = (30, 20);
    // Widest factor the algebra ever stacks: prior rank plus curvature columns.
    let width = k + samples * arch.output_dim();
    let column = 8 * d;
    let (short, long) = (2, 6);
    let (peak_short, largest_short) = measured_run(&arch, k, samples, short)?;
    let (peak_long, largest_long) = measured_run(&arch, k, samples, long)?;
    let largest = largest_short.max(largest_long);
    // Each task keeps a filtered and a smoothed belief of k + 2 columns.
    let per_task = 2 * (k + 2) * column;
    let growth = peak_long.saturating_sub(peak_short) as f64 / ((long - short) * per_task) as f64;
    let peak_bound = column * (2 * long * (k + 2) + 8 * width);
    let memory_ok = largest <= 5 * width * column && growth <= 1.25 && peak_long <= peak_bound;

    let small = update_algebra_seconds(10_000);
    let large = update_algebra_seconds(100_000);
    let exponent = (large / small).log10();
    verdict(
        memory_ok && exponent < 2.0,
        format!(
            "D={d}, k={k}: largest block {:.0} columns of D (limit {}, D×D needs {d}); peak {:.1} MiB at T={long} (bound {:.1} MiB); growth per task {growth:.2}x stored beliefs; update algebra {small:.3}s at D=1e4, {large:.3}s at D=1e5, exponent {exponent:.2}",
            largest as f64 / column as f64,
            5 * width,
            peak_long as f64 / 1048576.0,
            peak_bound as f64 / 1048576.0
        ),
    )
}

fn main() {
    let checks: Vec<(usize, &str, Box<dyn FnOnce() -> Check>)> = vec![
        (1, "DPLR operations match dense algebra", Box::new(dplr_equivalence)),
        (2, "Woodbury round trip", Box::new(woodbury_round_trip)),
        (3, "GGN curvature", Box::new(curvature)),
        (4, "gradient checks", Box::new(gradient_checks)),
        (5, "full-rank filter and smoother match dense chain", Box::new(full_rank_chain)),
        (6, "zero process noise degeneracies", Box::new(zero_noise)),
        (7, "permuted MNIST beats baseline", Box::new(|| trend("permuted.json", 0.10, 1200))),
        (8, "disjoint MNIST beats baseline", Box::new(|| trend("disjoint.json", 0.15, 600))),
        (9, "smoothing improves task 1", Box::new(smoothing_boost)),
        (10, "first-layer process noise", Box::new(structured_noise)),
        (11, "between-task inference", Box::new(between_tasks)),
        (12, "memory and time scaling", Box::new(scaling)),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, check) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        if !run(id, name, check) {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
