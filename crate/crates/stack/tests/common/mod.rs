//! Helpers shared by the stack integration tests: launching a live stack on a
//! chosen interface and the client API suite that runs against it.

#![allow(dead_code)]

use std::net::{IpAddr, Ipv4Addr, UdpSocket};
use std::sync::{Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use mbot_bridge::{ClientError, DrivePathOptions, RobotHandle};
use mbot_core::{normalize_angle, Channel, OccupancyGrid, Path2D, Pose2D, SlamMode};
use mbot_stack::launch::Launched;
use mbot_stack::{mapfile, StackConfig};
use tempfile::TempDir;

static LIVE: Mutex<()> = Mutex::new(());

/// Live stacks run against the wall clock, so tests that start one take
/// turns instead of sharing the CPU.
pub fn one_at_a_time() -> MutexGuard<'static, ()> {
    LIVE.lock().unwrap_or_else(|e| e.into_inner())
}

/// A stack with its bridge, plus the directory holding its world file.
pub struct LiveStack {
    pub launched: Launched,
    pub url: String,
    _dir: TempDir,
}

impl LiveStack {
    pub fn connect(&self) -> RobotHandle {
        RobotHandle::connect(&self.url).expect("connect to bridge")
    }
}

/// Starts a headless stack on an ephemeral port. The bridge listens on every
/// interface unless `host` is loopback, and the returned URL names `host`.
pub fn launch(host: IpAddr, world: &OccupancyGrid, tweak: impl FnOnce(&mut StackConfig)) -> LiveStack {
    let dir = tempfile::tempdir().unwrap();
    let world_path = dir.path().join("world.map");
    mapfile::save(world, &world_path).unwrap();
    let mut cfg = StackConfig::default();
    cfg.headless = true;
    cfg.world.map = Some(world_path);
    cfg.bridge.port = 0;
    cfg.bridge.bind = if host.is_loopback() { host.to_string() } else { "0.0.0.0".into() };
    tweak(&mut cfg);
    let launched = Launched::start(&cfg, None).expect("stack starts");
    let port = launched.bridge_addr().port();
    let url = match host {
        IpAddr::V6(h) => format!("ws://[{h}]:{port}"),
        IpAddr::V4(h) => format!("ws://{h}:{port}"),
    };
    LiveStack { launched, url, _dir: dir }
}

/// An address of this machine that is not loopback, if it has one.
pub fn non_loopback_ip() -> Option<IpAddr> {
    // connecting a UDP socket sends nothing but makes the kernel pick the
    // outgoing interface
    let sock = UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0)).ok()?;
    for probe in ["10.255.255.255:1", "192.0.2.255:1", "8.8.8.8:53"] {
        if sock.connect(probe).is_ok() {
            if let Ok(addr) = sock.local_addr() {
                let ip = addr.ip();
                if !ip.is_loopback() && !ip.is_unspecified() {
                    return Some(ip);
                }
            }
        }
    }
    None
}

pub fn default_room() -> OccupancyGrid {
    mbot_stack::default_world()
}

/// Retries `f` until it succeeds or `limit` passes.
pub fn eventually<T>(limit: Duration, mut f: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
    let end = Instant::now() + limit;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if Instant::now() >= end => return Err(e),
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    }
}

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e(err: ClientError) -> String {
    err.to_string()
}

fn count_messages(robot: &mut RobotHandle, channel: &str, window: Duration) -> Result<usize, ClientError> {
    let end = Instant::now() + window;
    let mut n = 0;
    while let Some(left) = end.checked_duration_since(Instant::now()) {
        if robot.next_message(channel, left)?.is_some() {
            n += 1;
        }
    }
    Ok(n)
}

fn odometry_utime(robot: &mut RobotHandle) -> Result<u64, ClientError> {
    robot.request(Channel::Odometry.name(), false).map(|(t, _)| t)
}

/// Runs every client API check against stacks reached through `host`.
/// Returns one named outcome per check.
pub fn client_suite(host: IpAddr) -> Vec<(&'static str, Outcome)> {
    let mut out = Vec::new();
    let stack = launch(host, &default_room(), |_| {});
    let mut robot = stack.connect();

    out.push(("odometry is readable", eventually(Duration::from_secs(2), || robot.read_odometry()).map(|_| ()).map_err(e)));

    out.push((
        "lidar scan has the configured beam count",
        (|| {
            let scan = eventually(Duration::from_secs(2), || robot.read_lidar()).map_err(e)?;
            ensure(scan.num_ranges == 360 && scan.ranges.len() == 360, || format!("{} beams", scan.num_ranges))
        })(),
    ));

    out.push((
        "request timestamps never go backwards",
        (|| {
            let a = odometry_utime(&mut robot).map_err(e)?;
            thread::sleep(Duration::from_millis(100));
            let b = odometry_utime(&mut robot).map_err(e)?;
            ensure(b > a, || format!("{a} then {b}"))
        })(),
    ));

    out.push((
        "sequential reads sustain 25 Hz",
        (|| {
            let t = Instant::now();
            for _ in 0..50 {
                robot.read_odometry().map_err(e)?;
            }
            let hz = 50.0 / t.elapsed().as_secs_f64();
            ensure(hz >= 25.0, || format!("{hz:.1} Hz"))
        })(),
    ));

    out.push((
        "drive 0.2 m/s for 2 s covers about 0.4 m",
        (|| {
            let a = robot.read_odometry().map_err(e)?;
            robot.drive(0.2, 0.0, 0.0).map_err(e)?;
            thread::sleep(Duration::from_secs(2));
            robot.stop().map_err(e)?;
            thread::sleep(Duration::from_millis(300));
            let b = robot.read_odometry().map_err(e)?;
            let d = a.distance_to(&b);
            ensure((d - 0.4).abs() < 0.08, || format!("moved {d:.3} m"))
        })(),
    ));

    out.push((
        "stop holds the robot still",
        (|| {
            robot.stop().map_err(e)?;
            thread::sleep(Duration::from_millis(300));
            let a = robot.read_odometry().map_err(e)?;
            thread::sleep(Duration::from_secs(1));
            let b = robot.read_odometry().map_err(e)?;
            let d = a.distance_to(&b);
            ensure(d < 0.005, || format!("drifted {d:.4} m"))
        })(),
    ));

    out.push((
        "sideways drive is rejected by a differential board",
        (|| {
            let before = stack.launched.status().rejected_commands();
            let a = robot.read_odometry().map_err(e)?;
            robot.drive(0.0, 0.2, 0.0).map_err(e)?;
            thread::sleep(Duration::from_millis(500));
            let after = stack.launched.status().rejected_commands();
            let b = robot.read_odometry().map_err(e)?;
            robot.stop().map_err(e)?;
            ensure(after > before, || "rejection counter did not move".into())?;
            ensure(a.distance_to(&b) < 0.005, || "robot moved".into())
        })(),
    ));

    out.push((
        "SLAM pose streams at the scan rate",
        (|| {
            let ch = Channel::SlamPose.name();
            robot.subscribe(ch).map_err(e)?;
            robot.next_message(ch, Duration::from_secs(1)).map_err(e)?;
            let n = count_messages(&mut robot, ch, Duration::from_secs(2)).map_err(e)?;
            robot.unsubscribe(ch).map_err(e)?;
            ensure((14..=26).contains(&n), || format!("{n} poses in 2 s"))
        })(),
    ));

    out.push((
        "slam mode switches take effect",
        (|| {
            robot.set_slam_mode(SlamMode::Idle).map_err(e)?;
            thread::sleep(Duration::from_millis(300));
            let frozen = robot.read_slam_pose().map_err(e)?;
            let odom0 = robot.read_odometry().map_err(e)?;
            robot.drive(0.0, 0.0, 0.6).map_err(e)?;
            thread::sleep(Duration::from_secs(1));
            robot.stop().map_err(e)?;
            thread::sleep(Duration::from_millis(300));
            let idle = robot.read_slam_pose().map_err(e)?;
            let odom1 = robot.read_odometry().map_err(e)?;
            ensure(idle == frozen, || format!("pose moved while idle: {frozen:?} -> {idle:?}"))?;
            ensure(normalize_angle(odom1.theta - odom0.theta).abs() > 0.3, || "robot did not turn".into())?;
            robot.set_slam_mode(SlamMode::FullSlam).map_err(e)?;
            thread::sleep(Duration::from_millis(500));
            let live = robot.read_slam_pose().map_err(e)?;
            let gap = normalize_angle(live.theta - odom1.theta).abs();
            ensure(gap < 0.1, || format!("SLAM heading {gap:.3} rad from odometry after re-enabling"))
        })(),
    ));

    out.push((
        "empty path succeeds at once",
        (|| {
            let r = robot.drive_path(&Path2D::default()).map_err(e)?;
            ensure(r.success && r.elapsed < Duration::from_millis(100), || format!("{r:?}"))
        })(),
    ));

    out.push((
        "planned path is driven to within 0.15 m",
        (|| {
            eventually(Duration::from_secs(3), || robot.read_map()).map_err(e)?;
            let here = robot.read_pose().map_err(e)?;
            let goal = Pose2D::new(here.x + 1.0, here.y + 0.5, 0.0);
            let path = robot.plan_path(goal).map_err(e)?;
            ensure(path.poses.len() >= 2, || "planner returned no waypoints".into())?;
            let r = robot.drive_path(&path).map_err(e)?;
            ensure(r.success && r.final_error < 0.15, || format!("{r:?}"))
        })(),
    ));

    out.push((
        "path into a wall times out",
        (|| {
            let here = robot.read_pose().map_err(e)?;
            let path = Path2D { utime: 0, poses: vec![here, Pose2D::new(here.x, -1.0, -std::f64::consts::FRAC_PI_2)] };
            let opts = DrivePathOptions { timeout: Some(Duration::from_secs(4)), ..Default::default() };
            let r = robot.drive_path_with(&path, &opts).map_err(e)?;
            ensure(!r.success, || format!("{r:?}"))
        })(),
    ));
    drop(robot);
    drop(stack);

    out.push((
        "map read times out while SLAM has never run",
        (|| {
            let idle = launch(host, &default_room(), |c| c.slam_mode = SlamMode::Idle);
            let mut robot = idle.connect();
            robot.set_timeout(Duration::from_millis(500));
            thread::sleep(Duration::from_millis(300));
            let t = Instant::now();
            match robot.read_map() {
                Err(ClientError::Timeout { .. }) => ensure(t.elapsed() >= Duration::from_millis(450), || "returned early".into()),
                other => Err(format!("expected a timeout, got {other:?}")),
            }
        })(),
    ));
    out
}

/// Prints one line per check and returns how many failed.
pub fn report(outcomes: &[(&str, Outcome)]) -> usize {
    let mut failed = 0;
    for (name, r) in outcomes {
        match r {
            Ok(()) => println!("  ok   {name}"),
            Err(msg) => {
                failed += 1;
                println!("  FAIL {name}: {msg}");
            }
        }
    }
    failed
}
