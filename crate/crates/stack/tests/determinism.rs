use mbot_core::{Channel, SlamMode, SlamModeCommand, Twist2D};
use mbot_stack::{default_world, SimStack, StackConfig};

/// Runs a scripted drive and returns every SLAM pose message as (utime, payload).
fn slam_pose_stream(seed: u64) -> Vec<(u64, Vec<u8>)> {
    let cfg = StackConfig { seed, ..StackConfig::default() };
    let mut stack = SimStack::new(&cfg, default_world(), None).unwrap();
    let poses = stack.bus().subscribe(Channel::SlamPose, 1024).unwrap();
    let script = [(0.0, Twist2D::new(0.25, 0.0, 0.0)), (3.0, Twist2D::new(0.2, 0.0, 0.4)), (6.0, Twist2D::zero())];
    let mut out = Vec::new();
    for (i, (_, cmd)) in script.iter().enumerate() {
        stack.bus().publish(Channel::MbotVelCmd, cmd).unwrap();
        let until = script.get(i + 1).map_or(8.0, |s| s.0);
        stack.run_for(until - stack.sim_time_us() as f64 * 1e-6).unwrap();
        out.extend(poses.drain().into_iter().map(|m| (m.utime, m.payload.to_vec())));
    }
    out
}

#[test]
fn same_seed_gives_identical_slam_streams() {
    let a = slam_pose_stream(7);
    let b = slam_pose_stream(7);
    assert!(a.len() > 60, "only {} poses", a.len());
    assert_eq!(a, b);
}

#[test]
fn different_seeds_diverge() {
    assert_ne!(slam_pose_stream(7), slam_pose_stream(8));
}

#[test]
fn mode_command_takes_effect_by_the_next_scan() {
    let mut stack = SimStack::new(&StackConfig::default(), default_world(), None).unwrap();
    stack.run_for(0.5).unwrap();
    assert_eq!(stack.slam().mode(), SlamMode::FullSlam);
    stack.bus().publish(Channel::SlamMode, &SlamModeCommand { utime: 0, mode: SlamMode::LocalizationOnly }).unwrap();
    stack.run_for(0.1).unwrap();
    assert_eq!(stack.slam().mode(), SlamMode::LocalizationOnly);
}

#[test]
fn sideways_command_is_counted_as_rejected() {
    let mut stack = SimStack::new(&StackConfig::default(), default_world(), None).unwrap();
    stack.bus().publish(Channel::MbotVelCmd, &Twist2D::new(0.0, 0.3, 0.0)).unwrap();
    stack.run_for(0.2).unwrap();
    assert_eq!(stack.board_stats().rejected_commands, 1);
    assert!(stack.debug_line_count() >= 1);
    assert!(stack.world().true_pose().distance_to(&mbot_core::Pose2D::new(2.0, 2.0, 0.0)) < 1e-9);
}
