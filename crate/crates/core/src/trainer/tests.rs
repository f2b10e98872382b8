use super::*;
use crate::dataset::{synthesize, SynthConfig, SynthData};
use crate::fixtures::small_camera;
use crate::geometry::Pose;
use crate::scene::{init_scene, GaussianPrimitive, InitConfig, InitSource};
use nalgebra::Vector3;

fn small_data() -> SynthData {
    synthesize(&SynthConfig {
        width: 24,
        height: 20,
        gaussians: 25,
        views: 3,
        eval_views: 1,
        ..Default::default()
    })
    .unwrap()
}

fn init_from(data: &SynthData) -> Scene {
    init_scene(
        &InitSource::Points {
            points: data.init_points.clone(),
            colors: None,
        },
        &InitConfig {
            background: data.scene.background,
            sh_degree: data.scene.sh_degree,
            ..Default::default()
        },
    )
    .unwrap()
}

fn trainer(data: &SynthData, config: TrainConfig) -> Trainer {
    Trainer::new(init_from(data), data.observations(false).unwrap(), config, data.config.event_config()).unwrap()
}

fn flat(g: &GaussianPrimitive) -> Vec<f64> {
    let mut v: Vec<f64> = g.position.iter().chain(&g.log_scale).chain(&g.rotation).copied().collect();
    v.push(g.opacity_logit);
    v.extend(g.sh.iter().flatten());
    v
}

fn cfg(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        ..Default::default()
    }
}

fn run_log(t: &mut Trainer) -> String {
    let mut log = Vec::new();
    t.run(&mut log, None).unwrap();
    String::from_utf8(log).unwrap()
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    let data = small_data();
    let config = TrainConfig {
        lr_position: 0.0,
        lr_position_final: 0.0,
        lr_log_scale: 0.0,
        lr_rotation: 0.0,
        lr_opacity: 0.0,
        lr_sh: 0.0,
        lr_pose: 0.0,
        lr_pose_final: 0.0,
        ..cfg(6)
    };
    let mut t = trainer(&data, config);
    let before = (t.scene.clone(), t.trajectories());
    let reports = t.run(&mut std::io::sink(), None).unwrap();
    assert_eq!(reports.len(), 6);
    assert!(reports.iter().all(|r| r.total > 0.0));
    assert_eq!(t.scene, before.0);
    assert_eq!(t.trajectories(), before.1);
}

#[test]
fn frozen_pose_rate_keeps_trajectories() {
    let data = small_data();
    let config = TrainConfig {
        lr_pose: 0.0,
        lr_pose_final: 0.0,
        ..cfg(12)
    };
    let mut t = trainer(&data, config);
    let before = (t.scene.clone(), t.trajectories());
    t.run(&mut std::io::sink(), None).unwrap();
    assert_eq!(t.trajectories(), before.1);
    assert_ne!(t.scene, before.0);
}

#[test]
fn pose_warmup_delays_pose_updates() {
    let data = small_data();
    let mut t = trainer(&data, TrainConfig { pose_warmup: 3, ..cfg(3) });
    let before = t.trajectories();
    t.run(&mut std::io::sink(), None).unwrap();
    assert_eq!(t.trajectories(), before);
    t.config.iterations = 6;
    t.run(&mut std::io::sink(), None).unwrap();
    assert_ne!(t.trajectories(), before);
}

#[test]
fn zero_iterations_return_inputs() {
    let data = small_data();
    let init = init_from(&data);
    let out = train(
        init.clone(),
        data.observations(false).unwrap(),
        cfg(0),
        data.config.event_config(),
        &mut std::io::sink(),
        None,
    )
    .unwrap();
    assert_eq!(out.scene, init);
    assert!(out.log.is_empty());
    let init_traj: Vec<ExposureTrajectory> = data.views.iter().map(|v| v.init_trajectory).collect();
    assert_eq!(out.trajectories, init_traj);
}

#[test]
fn equal_seeds_give_identical_logs() {
    let data = small_data();
    let a = run_log(&mut trainer(&data, cfg(10)));
    let b = run_log(&mut trainer(&data, cfg(10)));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 10);
    let first: LogLine = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    assert_eq!(first.iter, 0);
    let c = run_log(&mut trainer(&data, TrainConfig { seed: 1, ..cfg(10) }));
    assert_ne!(a, c);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig {
        checkpoint_every: 4,
        ..cfg(9)
    };
    let mut straight = trainer(&data, config.clone());
    let full = run_log(&mut straight);

    let mut first = trainer(&data, config);
    let mut head = Vec::new();
    first.run_until(4, &mut head, Some(dir.path())).unwrap();
    let head = String::from_utf8(head).unwrap();
    let mut resumed = Trainer::resume(&checkpoint_dir(dir.path(), 4), data.observations(false).unwrap()).unwrap();
    let tail = run_log(&mut resumed);
    assert_eq!(format!("{head}{tail}"), full);
    assert_eq!(resumed.scene, straight.scene);
    assert_eq!(resumed.trajectories(), straight.trajectories());
    assert_eq!(resumed.adam, straight.adam);
}

#[test]
fn run_writes_periodic_checkpoints() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(
        &data,
        TrainConfig {
            checkpoint_every: 2,
            ..cfg(5)
        },
    );
    t.run(&mut std::io::sink(), Some(dir.path())).unwrap();
    for it in [2, 4, 5] {
        let ck = load_checkpoint(&checkpoint_dir(dir.path(), it)).unwrap();
        assert_eq!(ck.iteration, it);
    }
    let last = load_checkpoint(&checkpoint_dir(dir.path(), 5)).unwrap();
    assert_eq!(last.scene, t.scene);
    assert_eq!(last.trajectories, t.trajectories());
    assert!(!checkpoint_dir(dir.path(), 3).exists());
}

#[test]
fn forward_consistent_ground_truth_does_not_drift() {
    let k = small_camera();
    let mut g = GaussianPrimitive::new(Vector3::new(0.05, -0.02, 2.0), 0.15, [0.7, 0.4, 0.2], 0.8, 1);
    g.sh[0][1] = 0.05;
    let scene = Scene {
        sh_degree: 1,
        background: [0.1, 0.2, 0.3],
        gaussians: vec![g],
    };
    let traj = crate::fixtures::shake_trajectory(
        &Pose::identity(),
        &crate::geometry::Twist::new(Vector3::new(0.0, 0.01, 0.0), Vector3::new(0.01, 0.0, 0.0)),
        0.0,
        0.1,
    );
    let rendered = render_blurred(&scene, &traj, 5, &k).unwrap();
    let obs = Observation {
        blurred: rendered.blurred.clone(),
        events: EventStream::empty(k.width, k.height),
        trajectory: traj,
        intrinsics: k,
        edi_target: rendered.latents[rendered.mid_index()].image.clone(),
    };
    let config = TrainConfig {
        lambda_ev: 0.0,
        lambda_ssim: 0.0,
        ..cfg(100)
    };
    let mut t = Trainer::new(scene.clone(), vec![obs], config, EventConfig::default()).unwrap();
    let reports = t.run(&mut std::io::sink(), None).unwrap();
    assert!(reports.iter().all(|r| r.total < 1e-12));
    let drift = flat(&t.scene.gaussians[0])
        .iter()
        .zip(flat(&scene.gaussians[0]))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(drift < 1e-3, "{drift}");
    assert_eq!(t.trajectories()[0], traj);
}

#[test]
fn loss_trends_down() {
    let data = small_data();
    let mut t = trainer(&data, cfg(600));
    let reports = t.run(&mut std::io::sink(), None).unwrap();
    let median = |r: &[LossReport]| {
        let mut v: Vec<f64> = r.iter().map(|x| x.total).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let first = median(&reports[..100]);
    let last = median(&reports[500..]);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn non_finite_observation_aborts_with_dump() {
    let data = small_data();
    let mut obs = data.observations(false).unwrap();
    obs.iter_mut().for_each(|o| o.blurred.data[7] = f64::NAN);
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(init_from(&data), obs, cfg(3), data.config.event_config()).unwrap();
    let err = t.run(&mut std::io::sink(), Some(dir.path())).unwrap_err();
    assert!(matches!(err, Error::Diverged { iteration: 0, .. }), "{err}");
    assert!(dir.path().join("diverged_iter_000000/scene.json").exists());
}

#[test]
fn rejects_invalid_configuration() {
    let data = small_data();
    let obs = data.observations(false).unwrap();
    let ev = data.config.event_config();
    assert!(Trainer::new(init_from(&data), obs.clone(), TrainConfig { n_latent: 4, ..cfg(1) }, ev).is_err());
    assert!(Trainer::new(init_from(&data), obs, TrainConfig { lr_sh: -1.0, ..cfg(1) }, ev).is_err());
    assert!(Trainer::new(init_from(&data), Vec::new(), cfg(1), ev).is_err());
}
