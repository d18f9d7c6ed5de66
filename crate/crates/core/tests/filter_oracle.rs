use lrlgf_core::dplr::ProcessNoise;
use lrlgf_core::lgf::{initial_belief, predict, run_filter, FilterConfig, LambdaSchedule};
use lrlgf_core::net::{forward, output_hessian, per_sample_jacobian, train_task, Arch, MlpParams, TrainConfig};
use lrlgf_core::oracle::{dense_ggn, dense_laplace_update, dense_predict, dense_rts, rel_frobenius, DenseGaussian, DensePenalty};
use lrlgf_core::rng::{derive_seed, stream, SplitMix64};
use lrlgf_core::rts::run_smoother;
use lrlgf_core::tasks::{make_synthetic, SyntheticSpec, TaskDataset};
use nalgebra::{DMatrix, DVector};

fn setup(tasks: usize, q: f64) -> (Arch, Vec<lrlgf_core::tasks::Task>, FilterConfig) {
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

/// `Σ_i J_i Ĥ_i J_iᵀ` at `theta`, drawn at the same points the filter uses.
fn dense_curvature(arch: &Arch, theta: &DVector<f64>, data: &TaskDataset, cfg: &FilterConfig, t: usize) -> DMatrix<f64> {
    let p = MlpParams::new(arch.clone(), theta.clone()).unwrap();
    let m = cfg.curvature_samples.min(data.len());
    let seed = derive_seed(cfg.seed + t as u64, stream::CURVATURE);
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

fn dense_prior(arch: &Arch, cfg: &FilterConfig) -> DenseGaussian {
    let b = initial_belief(arch, cfg);
    let d = b.dim();
    DenseGaussian::new(b.mean, DMatrix::identity(d, d) / cfg.initial_precision).unwrap()
}

fn cov_of(p: &lrlgf_core::dplr::DplrSym) -> DMatrix<f64> {
    p.to_dense().unwrap().try_inverse().unwrap()
}

#[test]
fn full_rank_chain_matches_dense_filter_and_smoother() {
    let (arch, tasks, cfg) = setup(4, 0.01);
    let train: Vec<&TaskDataset> = tasks.iter().map(|t| &t.train).collect();
    let trace = run_filter(&arch, &train, &cfg).unwrap();

    let mut dense = dense_prior(&arch, &cfg);
    let mut filtered = Vec::new();
    for (i, data) in train.iter().enumerate() {
        let t = i + 1;
        let pred = dense_predict(&dense, &cfg.noise).unwrap();
        let mode = &trace.beliefs[i].mean;
        let h = dense_curvature(&arch, mode, data, &cfg, t);
        dense = dense_laplace_update(&pred, &h, mode).unwrap();
        let want = dense.precision().unwrap();
        let got = trace.beliefs[i].precision.to_dense().unwrap();
        assert!(rel_frobenius(&got, &want) < 1e-6, "task {t}: {}", rel_frobenius(&got, &want));
        filtered.push(dense.clone());
    }

    let smoothed = run_smoother(&trace, arch.num_params()).unwrap();
    let want = dense_rts(&filtered, &cfg.noise).unwrap();
    for (t, (g, w)) in smoothed.iter().zip(&want).enumerate() {
        assert!(rel_frobenius(&cov_of(&g.precision), &w.cov) < 1e-6, "smoothed task {}", t + 1);
        assert!((&g.mean - &w.mean).amax() < 1e-9 * (1.0 + w.mean.amax()));
    }
}

#[test]
fn dense_penalty_retrain_follows_the_same_trajectory() {
    let (arch, tasks, cfg) = setup(3, 0.01);
    let train: Vec<&TaskDataset> = tasks.iter().map(|t| &t.train).collect();
    let trace = run_filter(&arch, &train, &cfg).unwrap();
    for t in 2..=3 {
        let pred = predict(&trace.beliefs[t - 2], &cfg.noise).unwrap();
        let penalty = DensePenalty {
            anchor: pred.mean.clone(),
            precision: pred.precision.to_dense().unwrap(),
            strength: cfg.lambda.at(t),
        };
        let train_cfg = TrainConfig { seed: derive_seed(cfg.seed + t as u64, stream::SHUFFLE), ..cfg.train.clone() };
        let p0 = MlpParams::new(arch.clone(), pred.mean.clone()).unwrap();
        let data = train[t - 1];
        let retrained = train_task(&p0, &data.inputs, &data.labels, Some(&penalty), &train_cfg).unwrap();
        let gap = (retrained.theta() - &trace.beliefs[t - 1].mean).amax();
        assert!(gap < 1e-8, "task {t}: {gap}");
    }
}
