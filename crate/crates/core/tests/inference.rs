use kinvi_core::gradcore::Tape;
use kinvi_core::inference::{
    elbo_estimate, elbo_gradient, fit, pose_log_prior, ElboSpec, FitConfig, Scene, Schedule,
    SessionFit, Trainer,
};
use kinvi_core::kinematics::KinematicModel;
use kinvi_core::likelihood::{Family, Frame, ObservationSet};
use kinvi_core::posterior::PosteriorConfig;
use kinvi_core::presets;
use kinvi_core::synth::{generate, AffineToy, NoiseSpec, RigSpec, SynthConfig};

fn lite() -> KinematicModel {
    KinematicModel::from_description(&presets::humanoid_lite()).unwrap()
}

fn small_posterior(rank: usize) -> PosteriorConfig {
    PosteriorConfig {
        hidden: vec![12, 12],
        rank,
        min_frequency_hz: 5.0,
        d_init: 0.05,
    }
}

/// Short humanoid-lite session: 3 cameras, 20 frames, exponential noise.
fn small_session(trials: usize, steps: usize) -> (Scene, Vec<(String, ObservationSet)>, FitConfig) {
    let model = lite();
    let cfg = SynthConfig {
        rig: RigSpec {
            cameras: 3,
            ..Default::default()
        },
        duration_s: 0.4,
        trials,
        seed: 9,
        ..Default::default()
    };
    let ds = generate(&cfg, &model).unwrap();
    let mut rig = ds.rig.clone();
    rig.set_refine(1, true);
    let mut init = ds.trials[0].poses[0].clone();
    init[0] += 0.05;
    let mut schedule = Schedule::with_total_steps(steps);
    schedule.timesteps_per_step = 6;
    schedule.samples_per_step = 2;
    let config = FitConfig {
        schedule,
        posterior: small_posterior(3),
        seed: 4,
        initial_mean: Some(init),
        ..Default::default()
    };
    let trials = ds
        .trials
        .into_iter()
        .map(|t| (t.name, t.observations))
        .collect();
    (Scene::Body { model, rig }, trials, config)
}

#[test]
fn pose_prior_examples_and_gradient() {
    let model = lite();
    let bounds = model.bounds();
    let inside = model.neutral_pose();
    assert_eq!(pose_log_prior(bounds, &inside, 1e4), 0.0);
    let mut out = inside.clone();
    let knee = model
        .dof_names()
        .iter()
        .position(|n| n == "knee_r")
        .unwrap();
    out[knee] = 2.2 + 0.1;
    assert!((pose_log_prior(bounds, &out, 1e4) + 100.0).abs() < 1e-9);
    out[6] = -0.5 - 0.05;
    let p = kinvi_core::gradcore::ParamVector::single("theta", out.clone());
    let g = kinvi_core::gradcore::grad(
        |o, v| kinvi_core::inference::pose_log_prior_with(o, bounds, v, 1e4),
        &p,
    )
    .unwrap();
    for i in 0..out.len() {
        let h = 1e-6;
        let mut a = out.clone();
        a[i] += h;
        let mut b = out.clone();
        b[i] -= h;
        let fd = (pose_log_prior(bounds, &a, 1e4) - pose_log_prior(bounds, &b, 1e4)) / (2.0 * h);
        assert!(
            (g.values()[i] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
            "dof {i}: {} vs {fd}",
            g.values()[i]
        );
    }
}

fn spec(frames: Vec<usize>, samples: usize, seed: u64, refine: bool) -> ElboSpec {
    ElboSpec {
        frames,
        samples,
        seed,
        step: 3,
        likelihood_enabled: true,
        refine_extrinsics: refine,
        warmup_sigma: 10.0,
        prior_weight: 1e4,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    let (scene, trials, config) = small_session(1, 10);
    let mut tr = Trainer::new(scene, trials, config).unwrap();
    // A few steps move every group off its initial value.
    for _ in 0..3 {
        tr.step().unwrap();
    }
    let mut fit = tr.into_session();
    fit.likelihood.psi = [0.4, -1.0, -2.0];
    for (i, b) in fit.beta.iter_mut().enumerate() {
        *b += 0.01 * ((i % 5) as f64 - 2.0);
    }
    fit.extrinsics[1][0] += 0.002;
    let sp = spec(vec![2, 9, 17], 2, 21, true);
    let mut tape = Tape::new();
    let g = elbo_gradient(&fit, 0, &sp, &mut tape).unwrap();
    let base = elbo_estimate(&fit, 0, &sp).unwrap();
    assert_eq!(base, g.elbo);
    let h = 1e-6;
    let fd = |f: &dyn Fn(&mut SessionFit, f64)| {
        let mut a = fit.clone();
        f(&mut a, h);
        let mut b = fit.clone();
        f(&mut b, -h);
        (elbo_estimate(&a, 0, &sp).unwrap() - elbo_estimate(&b, 0, &sp).unwrap()) / (2.0 * h)
    };
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        let d = fd(&|s, e| s.likelihood.psi[j] += e);
        worst = worst.max(rel_err(g.psi[j], d));
    }
    for j in (0..fit.beta.len()).step_by(7) {
        let d = fd(&|s, e| s.beta[j] += e);
        worst = worst.max(rel_err(g.beta[j], d));
    }
    for j in 0..6 {
        let d = fd(&|s, e| s.extrinsics[1][j] += e);
        worst = worst.max(rel_err(g.extrinsics[1][j], d));
        // Cameras outside the refine mask get no gradient.
        assert_eq!(g.extrinsics[0][j], 0.0);
    }
    let n = fit.trials[0].net.params().len();
    for j in (0..n).step_by(n / 40) {
        let d = fd(&|s, e| s.trials[0].net.params_mut()[j] += e);
        worst = worst.max(rel_err(g.phi[j], d));
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn frame_without_observations_gives_entropy_only() {
    let model = lite();
    let mut mu = model.neutral_pose();
    mu[2] = 0.9;
    let frames = (0..5)
        .map(|i| Frame {
            index: i,
            time: i as f64 * 0.02,
            observations: vec![],
        })
        .collect();
    let obs = ObservationSet::new(vec!["cam0".into()], model.site_count(), frames).unwrap();
    let rig = RigSpec {
        cameras: 1,
        ..Default::default()
    }
    .build()
    .unwrap();
    let mut posterior = small_posterior(2);
    posterior.d_init = 0.001;
    let config = FitConfig {
        posterior,
        initial_mean: Some(mu),
        ..Default::default()
    };
    let tr = Trainer::new(Scene::Body { model, rig }, vec![("t".into(), obs)], config).unwrap();
    let fit = tr.session();
    let e = elbo_estimate(fit, 0, &spec(vec![1], 8, 0, false)).unwrap();
    let h = fit.trials[0].net.evaluate(0.02).unwrap().entropy();
    assert!((e - h).abs() < 1e-12, "{e} vs {h}");
}

#[test]
fn monte_carlo_std_scales_with_sample_count() {
    let toy = AffineToy {
        sigma: 2.0,
        ..Default::default()
    };
    let (obs, _) = toy.generate().unwrap();
    let mut posterior = small_posterior(0);
    posterior.d_init = 0.5;
    let config = FitConfig {
        posterior,
        family: Family::HalfNormal,
        initial_mean: Some(vec![2.0]),
        ..Default::default()
    };
    let tr = Trainer::new(
        Scene::Affine(toy.scene()),
        vec![("toy".into(), obs)],
        config,
    )
    .unwrap();
    let fit = tr.session();
    let std_of = |samples: usize, runs: u64| {
        let v: Vec<f64> = (0..runs)
            .map(|s| elbo_estimate(fit, 0, &spec(vec![3], samples, s, false)).unwrap())
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let small = std_of(8, 2000);
    let big = std_of(100_000, 40);
    let ratio = big / (small * (8.0f64 / 1e5).sqrt());
    // 40 replicates leave about 11% relative error on the large-n std.
    assert!((ratio - 1.0).abs() < 0.35, "ratio {ratio}");
}

#[test]
fn freezing_and_refinement_milestones() {
    let (scene, trials, mut config) = small_session(1, 12);
    config.schedule.psi_unfreeze_step = 4;
    config.schedule.extrinsic_refine_step = 8;
    let mut tr = Trainer::new(scene, trials, config).unwrap();
    let psi0 = tr.session().likelihood.psi;
    let ext0 = tr.session().extrinsics.clone();
    for s in 0..12 {
        tr.step().unwrap();
        let fit = tr.session();
        let psi_same = fit
            .likelihood
            .psi
            .iter()
            .zip(&psi0)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert_eq!(psi_same, s < 4, "step {s}");
        for (c, (a, b)) in fit.extrinsics.iter().zip(&ext0).enumerate() {
            let same = a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
            // Only camera 1 is in the refine mask.
            assert_eq!(same, c != 1 || s < 8, "step {s} camera {c}");
        }
    }
    assert!(tr.finished());
}

#[test]
fn shared_parameters_across_trials() {
    let (scene, trials, config) = small_session(3, 5);
    let fit = fit(scene, trials, config, |_| {}).unwrap();
    assert_eq!(fit.trials.len(), 3);
    assert_eq!(fit.beta.len(), lite().beta_len());
    assert_ne!(fit.trials[0].net.params(), fit.trials[1].net.params());
    assert_ne!(fit.trials[1].net.params(), fit.trials[2].net.params());
    assert_eq!(fit.steps_done, 5);
}

#[test]
fn zero_steps_returns_initial_state() {
    let (scene, trials, config) = small_session(1, 0);
    let reference = Trainer::new(scene.clone(), trials.clone(), config.clone())
        .unwrap()
        .into_session();
    let mut logged = 0;
    let out = fit(scene, trials, config, |_| logged += 1).unwrap();
    assert_eq!(logged, 0);
    assert_eq!(out, reference);
}

#[test]
fn dense_evaluation_matches_net() {
    let (scene, trials, config) = small_session(2, 3);
    let fit = fit(scene, trials, config, |_| {}).unwrap();
    let all = kinvi_core::inference::evaluate_fit(&fit).unwrap();
    for (t, m) in fit.trials.iter().zip(&all) {
        assert_eq!(m.len(), t.observations.frame_count());
        let times = t.frame_times();
        assert_eq!(m[7], t.net.evaluate(times[7]).unwrap());
    }
    assert_eq!(all, kinvi_core::inference::evaluate_fit(&fit).unwrap());
}

#[test]
fn same_seed_same_fit() {
    let (scene, trials, config) = small_session(1, 6);
    let mut logs_a = Vec::new();
    let a = fit(scene.clone(), trials.clone(), config.clone(), |l| {
        logs_a.push(*l)
    })
    .unwrap();
    let mut logs_b = Vec::new();
    let b = fit(scene, trials, config, |l| logs_b.push(*l)).unwrap();
    assert_eq!(a, b);
    assert_eq!(logs_a, logs_b);
}

#[test]
fn clean_data_reprojection_falls() {
    let model = lite();
    let cfg = SynthConfig {
        rig: RigSpec {
            cameras: 3,
            ..Default::default()
        },
        noise: NoiseSpec::none(),
        duration_s: 0.4,
        ..Default::default()
    };
    let ds = generate(&cfg, &model).unwrap();
    let mut schedule = Schedule::with_total_steps(300);
    schedule.timesteps_per_step = 20;
    schedule.samples_per_step = 2;
    schedule.lr_start = 3e-3;
    let config = FitConfig {
        schedule,
        posterior: small_posterior(2),
        initial_mean: Some(ds.trials[0].poses[10].clone()),
        learn_beta: false,
        ..Default::default()
    };
    let mut first = None;
    let mut last = 0.0;
    fit(
        Scene::Body { model, rig: ds.rig },
        vec![("t".into(), ds.trials[0].observations.clone())],
        config,
        |l| {
            first.get_or_insert(l.mean_reproj_px);
            last = l.mean_reproj_px;
        },
    )
    .unwrap();
    assert!(last < 0.5 * first.unwrap(), "{first:?} -> {last}");
}
