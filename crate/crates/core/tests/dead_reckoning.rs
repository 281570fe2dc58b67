use mbot_core::board::{dead_reckon, ControlBoard, DriveConfig};
use mbot_core::messages::WheelCommand;
use mbot_core::Pose2D;

fn drive(board: &mut ControlBoard, cfg: &DriveConfig<f64>, pose: &mut Pose2D, speeds: [f64; 2], seconds: f64, dt: f64) {
    let cmd = WheelCommand { utime: 0, speeds: speeds.to_vec() };
    let steps = (seconds / dt).round() as usize;
    let mut prev = board.ticks().to_vec();
    for _ in 0..steps {
        let r = board.step(dt, &cmd).unwrap();
        let delta: Vec<i64> = r.ticks.iter().zip(&prev).map(|(a, b)| a - b).collect();
        *pose = dead_reckon(cfg, pose, &delta, r.delta_time).unwrap();
        prev = r.ticks;
    }
}

// Unicycle integrated with forward Euler over very fine steps.
fn fine_oracle(v: f64, w: f64, seconds: f64, substeps: usize) -> (f64, f64, f64) {
    let h = seconds / substeps as f64;
    let (mut x, mut y, mut th) = (0.0, 0.0, 0.0f64);
    for _ in 0..substeps {
        x += v * th.cos() * h;
        y += v * th.sin() * h;
        th += w * h;
    }
    (x, y, th)
}

#[test]
fn quarter_arc_matches_fine_integration() {
    let cfg = DriveConfig::differential(0.042, 0.0775, 1632);
    let mut board = ControlBoard::new(cfg, 0.0, 0.0, 1).unwrap();
    // 1 m radius arc at 0.3 m/s
    let (v, w) = (0.3, 0.3);
    let wl = (v - cfg.base_radius * w) / cfg.wheel_radius;
    let wr = (v + cfg.base_radius * w) / cfg.wheel_radius;
    let seconds = std::f64::consts::FRAC_PI_2 / w;
    let mut pose = Pose2D::default();
    drive(&mut board, &cfg, &mut pose, [wl, wr], seconds, 0.02);
    let (ox, oy, oth) = fine_oracle(v, w, (seconds / 0.02).round() * 0.02, 10_000);
    let err = (pose.x - ox).hypot(pose.y - oy);
    assert!(err < 1e-3, "position error {err}");
    assert!((pose.theta - oth).abs() < 1e-2);
    assert!((ox - 1.0).abs() < 1e-2 && (oy - 1.0).abs() < 1e-2);
}

#[test]
fn ideal_square_loop_closes() {
    // One wheel revolution per second and 1000 ticks per revolution keep every
    // segment at a whole number of ticks.
    let cfg = DriveConfig::differential(0.05, 0.1, 1000);
    let mut board = ControlBoard::new(cfg, 0.0, 0.0, 2).unwrap();
    let rev = std::f64::consts::TAU;
    let mut pose = Pose2D::default();
    for _ in 0..4 {
        drive(&mut board, &cfg, &mut pose, [rev, rev], 1.0, 0.001);
        drive(&mut board, &cfg, &mut pose, [-rev, rev], 0.5, 0.001);
    }
    assert!(pose.x.hypot(pose.y) < 1e-6, "loop closure error {:?}", pose);
    assert!(pose.theta.abs() < 1e-6);
}
