use aerial_sim::assets::{generate_tree, parse_urdf_subset, TreeSpec};
use aerial_sim::bench::{forest_class, tree_pool};
use aerial_sim::config::{ActionRanges, CameraConfig, ControlMode, SimConfig};
use aerial_sim::control::{
    attitude_errors, control_batch, control_one, AttitudeCommand, Command, ControllerConfig, VelocityCommand,
};
use aerial_sim::dynamics::{saturate, step, step_batch, RigidState, RobotParams, StateBatch, Wrench};
use aerial_sim::env::{check_collision, World};
use aerial_sim::exchange::{denormalize, ACTION_DIM};
use aerial_sim::geometry::{EnvScene, PlacedPrimitive, Pose, Primitive, Shape};
use aerial_sim::rng::{env_stream, Purpose};
use aerial_sim::se3::{rot_zyx, Mat3, Rotation, Vec3};
use aerial_sim::sensor::{cast, randomize_mount, ray_primitive, render};
use proptest::prelude::*;

fn vec3(a: f64) -> impl Strategy<Value = Vec3> {
    (-a..a, -a..a, -a..a).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (-3.1..3.1f64, -1.5..1.5f64, -3.1..3.1f64).prop_map(|(r, p, y)| rot_zyx(r, p, y))
}

fn state() -> impl Strategy<Value = RigidState> {
    (vec3(10.0), rotation(), vec3(4.0), vec3(4.0)).prop_map(|(p, q, v, w)| RigidState {
        position: p,
        orientation: q,
        velocity: v,
        angular_velocity: w,
    })
}

fn command() -> impl Strategy<Value = Command> {
    prop_oneof![
        (-0.6..0.6f64, -0.6..0.6f64, -1.0..1.0f64, 0.0..20.0f64)
            .prop_map(|(r, p, y, f)| Command::Attitude(AttitudeCommand::new(r, p, y, f).unwrap())),
        (vec3(6.0), -1.0..1.0f64).prop_map(|(v, y)| Command::Velocity(VelocityCommand::new(v, y))),
    ]
}

fn primitive(spread: f64) -> impl Strategy<Value = Primitive> {
    let shape = prop_oneof![
        (0.1..1.0f64).prop_map(|radius| Shape::Sphere { radius }),
        (0.1..1.5f64, 0.1..1.5f64, 0.1..1.5f64).prop_map(|(x, y, z)| Shape::Box { size: Vec3::new(x, y, z) }),
        (0.1..0.6f64, 0.2..2.0f64).prop_map(|(radius, length)| Shape::Cylinder { radius, length }),
    ];
    (shape, vec3(spread), rotation()).prop_map(|(shape, t, q)| Primitive { shape, pose: Pose::new(t, q) })
}

fn placed(prims: Vec<Primitive>) -> EnvScene {
    EnvScene::new(
        prims
            .into_iter()
            .enumerate()
            .map(|(k, p)| PlacedPrimitive { primitive: p, segmentation_id: k as u32 + 1 })
            .collect(),
    )
}

fn forest_world(n: usize, seed: u64, workers: usize) -> World {
    let mut cfg = SimConfig::default();
    cfg.env.num_envs = n;
    cfg.env.seed = seed;
    cfg.env.workers = workers;
    cfg.env.asset_root = Some("<generated>".into());
    cfg.asset_classes = vec![forest_class(4)];
    World::from_pools(&cfg, tree_pool(3).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn error_antisymmetry_and_left_invariance(r in rotation(), rd in rotation(), l in rotation(), w in vec3(3.0)) {
        let zero = Vec3::zeros();
        let a = attitude_errors(&r, &zero, &rd, &zero).e_r;
        let b = attitude_errors(&rd, &zero, &r, &zero).e_r;
        prop_assert_eq!(a, -b);
        let c = attitude_errors(&l.compose(&r), &w, &l.compose(&rd), &zero).e_r;
        prop_assert!((a - c).norm() <= 1e-12);
    }

    #[test]
    fn control_batch_is_the_scalar_loop(items in prop::collection::vec((state(), command()), 1..150)) {
        let params = RobotParams::default();
        let config = ControllerConfig::default();
        let states: Vec<RigidState> = items.iter().map(|x| x.0).collect();
        let commands: Vec<Command> = items.iter().map(|x| x.1).collect();
        let batch = control_batch(&StateBatch::from_states(&states), &commands, &config, &params).unwrap();
        for (k, out) in batch.iter().enumerate() {
            prop_assert_eq!(*out, control_one(&states[k], &commands[k], &config, &params));
        }
    }

    #[test]
    fn step_batch_is_the_scalar_loop(items in prop::collection::vec((state(), 0.0..25.0f64, vec3(3.0)), 1..150)) {
        let params = RobotParams::default();
        let states: Vec<RigidState> = items.iter().map(|x| x.0).collect();
        let wrenches: Vec<Wrench> = items.iter().map(|x| saturate(&Wrench::new(x.1, x.2), &params)).collect();
        let mut batch = StateBatch::from_states(&states);
        step_batch(&mut batch, &params, &wrenches, 0.01).unwrap();
        let scalar: Vec<RigidState> =
            states.iter().zip(&wrenches).map(|(s, w)| step(s, &params, w, 0.01).unwrap().state).collect();
        prop_assert_eq!(batch.to_states(), scalar);
    }

    #[test]
    fn force_free_speed_is_constant(s in state(), m in vec3(1.0)) {
        let params = RobotParams::new(1.0, Mat3::from_diagonal(&Vec3::new(0.01, 0.01, 0.02)), 0.2, 20.0, Vec3::new(2.0, 2.0, 1.0), 0.0).unwrap();
        let w = saturate(&Wrench::new(0.0, m), &params);
        let mut cur = s;
        for _ in 0..50 {
            let next = step(&cur, &params, &w, 0.01).unwrap().state;
            prop_assert!((next.velocity.norm() - cur.velocity.norm()).abs() <= 1e-12);
            cur = next;
        }
    }

    #[test]
    fn hover_is_exact(p in vec3(20.0), yaw in -3.1..3.1f64) {
        let params = RobotParams::default();
        let s = RigidState::at_rest(p, rot_zyx(0.0, 0.0, yaw));
        let next = step(&s, &params, &Wrench::new(params.mass() * params.gravity, Vec3::zeros()), 0.01).unwrap().state;
        prop_assert!((next.position - p).norm() <= 1e-12);
        prop_assert!(next.velocity.norm() <= 1e-12 && next.angular_velocity.norm() <= 1e-12);
    }

    #[test]
    fn saturation_respects_limits(f in -50.0..50.0f64, m in vec3(10.0)) {
        let params = RobotParams::default();
        let w = saturate(&Wrench::new(f, m), &params);
        prop_assert!(w.thrust >= 0.0 && w.thrust <= params.max_thrust);
        for i in 0..3 {
            prop_assert!(w.moment[i].abs() <= params.max_moment[i]);
        }
    }

    #[test]
    fn denormalized_actions_stay_in_range(a in prop::array::uniform4(-3.0..3.0f64)) {
        let r = ActionRanges::default();
        let action: [f64; ACTION_DIM] = a;
        match denormalize(&action, ControlMode::Attitude, &r) {
            Command::Attitude(c) => {
                prop_assert!(c.roll.abs() <= r.roll && c.pitch.abs() <= r.pitch && c.yaw_rate.abs() <= r.yaw_rate);
                prop_assert!(c.thrust >= r.thrust_min && c.thrust <= r.thrust_max);
            }
            Command::Velocity(_) => prop_assert!(false),
        }
        match denormalize(&action, ControlMode::Velocity, &r) {
            Command::Velocity(c) => {
                prop_assert!(c.velocity.iter().all(|v| v.abs() <= r.speed));
                prop_assert!(c.yaw_rate.abs() <= r.yaw_rate);
            }
            Command::Attitude(_) => prop_assert!(false),
        }
    }

    #[test]
    fn collision_box_is_the_inset_bounds(p in vec3(12.0), r in 0.05..0.5f64) {
        let bounds = Vec3::new(10.0, 10.0, 5.0);
        let flags = check_collision(&p, r, &placed(vec![]), &bounds);
        let inside = (0..3).all(|i| p[i] >= r && p[i] <= bounds[i] - r);
        prop_assert_eq!(flags.bounds, !inside);
        prop_assert!(!flags.obstacle);
    }

    #[test]
    fn occluders_never_deepen_pixels(
        prims in prop::collection::vec(primitive(3.0), 0..6),
        occluder in primitive(2.0),
        cam in vec3(0.5),
    ) {
        let cfg = CameraConfig { width: 32, height: 18, ..CameraConfig::default() };
        let shift = |mut p: Primitive, dx: f64| { p.pose.translation.x += dx; p };
        let mut prims: Vec<Primitive> = prims.into_iter().map(|p| shift(p, 5.0)).collect();
        let pose = Pose::from_translation(cam);
        let before = render(&[pose], &[&placed(prims.clone())], &cfg);
        prims.push(shift(occluder, 4.0));
        let after = render(&[pose], &[&placed(prims)], &cfg);
        prop_assert!(before.depth.iter().zip(&after.depth).all(|(b, a)| a <= b));
        prop_assert!(after.depth.iter().all(|d| *d > 0.0 && *d as f64 <= cfg.max_range));
    }

    #[test]
    fn nearest_hit_equals_brute_force(prims in prop::collection::vec(primitive(3.0), 1..10), o in vec3(5.0), d in vec3(1.0)) {
        prop_assume!(d.norm() > 1e-3);
        let dir = d.normalize();
        let scene = placed(prims);
        let brute = scene
            .primitives
            .iter()
            .filter_map(|p| ray_primitive(&o, &dir, &p.primitive, 20.0).map(|t| (t, p.segmentation_id)))
            .fold(None, |best: Option<(f64, u32)>, h| if best.is_none_or(|b| h.0 < b.0) { Some(h) } else { best });
        prop_assert_eq!(cast(&scene, &o, &dir, 20.0).map(|h| h.0), brute.map(|h| h.0));
    }

    #[test]
    fn mount_stays_within_randomization_bounds(seed in any::<u64>(), env in 0usize..64) {
        let cfg = CameraConfig {
            randomize_position: Vec3::new(0.02, 0.01, 0.03),
            randomize_euler: Vec3::new(0.05, 0.1, 0.02),
            ..CameraConfig::default()
        };
        let nominal = cfg.nominal_mount();
        let mount = randomize_mount(&cfg, &mut env_stream(seed, env, 0, Purpose::CameraMount));
        let d = mount.translation - nominal.translation;
        prop_assert!((0..3).all(|i| d[i].abs() <= cfg.randomize_position[i]));
        let tilt = nominal.rotation.inverse().compose(&mount.rotation);
        prop_assert!(tilt.angle_to(&Rotation::identity()) <= cfg.randomize_euler.norm() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trees_roundtrip(b in 0u32..4, d in 1u32..5, seed in any::<u64>(), angle in 0.0..1.2f64) {
        let t = generate_tree(&TreeSpec { branch_factor: b, depth: d, angle_range: angle, seed, ..TreeSpec::default() }).unwrap();
        let parsed = parse_urdf_subset(&t.urdf).unwrap();
        prop_assert_eq!(parsed.primitives.len() as u64, (0..d).map(|k| (b as u64).pow(k)).sum::<u64>());
        prop_assert_eq!(parsed.primitives, t.prototype.primitives);
    }

    #[test]
    fn results_ignore_worker_count(seed in any::<u64>(), cmds in prop::collection::vec(command(), 3)) {
        let mut a = forest_world(3, seed, 1);
        let mut b = forest_world(3, seed, 3);
        for _ in 0..40 {
            prop_assert_eq!(a.step(&cmds).unwrap(), b.step(&cmds).unwrap());
        }
    }

    #[test]
    fn commands_stay_in_their_env(seed in any::<u64>(), other in command(), target in 0usize..3) {
        let hover = Command::Velocity(VelocityCommand::new(Vec3::zeros(), 0.0));
        let mut a = forest_world(3, seed, 1);
        let mut b = forest_world(3, seed, 1);
        let mut cmds = vec![hover; 3];
        cmds[target] = other;
        for _ in 0..30 {
            let ra = a.step(&[hover; 3]).unwrap();
            let rb = b.step(&cmds).unwrap();
            for j in (0..3).filter(|j| *j != target) {
                prop_assert_eq!(ra[j], rb[j]);
            }
        }
    }

    #[test]
    fn segmentation_ids_follow_their_class(seed in any::<u64>()) {
        let w = forest_world(4, seed, 1);
        let id = w.config().asset_classes[0].segmentation_id;
        for env in w.privileged_info() {
            prop_assert!(env.iter().all(|o| (o.class == "trees") == (o.segmentation_id == id)));
        }
    }

    #[test]
    fn auto_reset_lands_in_a_valid_placement(seed in any::<u64>(), heading in -3.1..3.1f64) {
        let mut w = forest_world(1, seed, 1);
        let cmd = Command::Velocity(VelocityCommand::new(Vec3::new(heading.cos(), heading.sin(), 0.0) * 3.0, 0.0));
        let mut terminated = false;
        for _ in 0..1500 {
            let r = w.step(&[cmd]).unwrap()[0];
            if terminated {
                prop_assert!(r.info.reset);
                break;
            }
            terminated = r.terminated || r.truncated;
        }
        prop_assert!(terminated);
        let s = w.robot_state(0);
        let params = w.params();
        prop_assert!(!check_collision(&s.position, params.collision_radius, w.scene(0), &w.bounds()).any());
        prop_assert!((w.goal(0) - s.position).norm() >= w.config().reward.success_radius);
        prop_assert_eq!(s.velocity, Vec3::zeros());
    }
}
