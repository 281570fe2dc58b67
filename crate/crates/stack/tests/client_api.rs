mod common;

use std::net::{IpAddr, Ipv4Addr};
use std::time::Duration;

use mbot_bridge::{bug_navigate, wall_follow, BugConfig, BugOutcome, WallFollowConfig};
use mbot_core::world::{add_box, round_room, walled_room};
use mbot_core::SlamMode;

use common::{launch, report};

#[test]
fn client_suite_over_loopback() {
    let _turn = common::one_at_a_time();
    let outcomes = common::client_suite(IpAddr::V4(Ipv4Addr::LOCALHOST));
    assert_eq!(report(&outcomes), 0);
}

#[test]
fn wall_follow_keeps_its_distance_in_a_round_room() {
    let _turn = common::one_at_a_time();
    let stack = launch(IpAddr::V4(Ipv4Addr::LOCALHOST), &round_room(2.0, 0.05), |c| {
        c.world.start = [-1.2, 0.0, std::f64::consts::FRAC_PI_2];
        c.slam_mode = SlamMode::Idle;
        c.world.time_scale = 4.0;
    });
    let mut robot = stack.connect();
    let report = wall_follow(&mut robot, &WallFollowConfig::default(), Duration::from_secs(60)).unwrap();
    let t0 = report.min_ranges[0].0;
    let settled: Vec<f64> = report.min_ranges.iter().filter(|(t, _)| t - t0 > 15_000_000).map(|&(_, r)| r).collect();
    assert!(settled.len() > 300, "only {} scans after settling", settled.len());
    let (lo, hi) = settled.iter().fold((f64::INFINITY, 0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(lo >= 0.3 && hi <= 0.7, "range left [0.3, 0.7]: {lo:.3}..{hi:.3}");
}

#[test]
fn bug_reaches_an_unobstructed_goal_in_a_straight_line() {
    let _turn = common::one_at_a_time();
    let stack = launch(IpAddr::V4(Ipv4Addr::LOCALHOST), &walled_room(10.0, 0.05), |c| {
        c.slam_mode = SlamMode::Idle;
        c.world.time_scale = 4.0;
    });
    let mut robot = stack.connect();
    let report = bug_navigate(&mut robot, (5.0, 2.0), &BugConfig::default(), Duration::from_secs(30)).unwrap();
    assert_eq!(report.outcome, BugOutcome::Reached);
    assert_eq!(report.hits, 0);
    let worst = report.trace.iter().map(|p| (p.y - 2.0).abs()).fold(0.0, f64::max);
    assert!(worst < 0.1, "strayed {worst:.3} m from the straight line");
}

#[test]
fn bug_reports_an_enclosed_goal_as_unreachable() {
    let _turn = common::one_at_a_time();
    let mut world = walled_room(10.0, 0.05);
    let (x0, y0, x1, y1, t) = (4.5, 4.0, 6.5, 6.0, 0.1);
    add_box(&mut world, x0, y0, x1, y0 + t);
    add_box(&mut world, x0, y1 - t, x1, y1);
    add_box(&mut world, x0, y0, x0 + t, y1);
    add_box(&mut world, x1 - t, y0, x1, y1);
    let stack = launch(IpAddr::V4(Ipv4Addr::LOCALHOST), &world, |c| {
        c.world.start = [2.0, 5.0, 0.0];
        c.slam_mode = SlamMode::Idle;
        c.world.time_scale = 4.0;
    });
    let mut robot = stack.connect();
    let report = bug_navigate(&mut robot, (5.5, 5.0), &BugConfig::default(), Duration::from_secs(60)).unwrap();
    assert_eq!(report.outcome, BugOutcome::Unreachable, "ended at {:?}", report.final_pose);
    assert!(report.hits >= 1);
}
