use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use mbot_core::bus::Bus;
use mbot_core::{Channel, Pose2D};

const PER_PUBLISHER: u64 = 1000;

// Publisher `id` sends poses with x = id and y = its running counter.
fn publisher(bus: Bus, id: u64) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        for k in 0..PER_PUBLISHER {
            let p = Pose2D::new(id as f64, k as f64, 0.0).with_utime(id * 1_000_000 + k);
            bus.publish(Channel::Odometry, &p).unwrap();
            if k % 16 == 0 {
                thread::yield_now();
            }
        }
    })
}

#[test]
fn two_publishers_latest_is_linearizable() {
    let bus = Bus::new();
    let all = bus.subscribe(Channel::Odometry, 4096).unwrap();
    let small = bus.subscribe(Channel::Odometry, 64).unwrap();
    let stop = Arc::new(AtomicBool::new(false));

    let reader = {
        let bus = bus.clone();
        let stop = stop.clone();
        thread::spawn(move || {
            let mut last_seq = 0;
            let mut last_by_pub = [None::<u64>; 2];
            let mut observations = 0u64;
            while !stop.load(Ordering::Acquire) {
                let Some(m) = bus.latest(Channel::Odometry) else { continue };
                assert!(m.seq >= last_seq, "latest regressed from seq {last_seq} to {}", m.seq);
                last_seq = m.seq;
                let p: Pose2D = m.decode().unwrap();
                let id = p.x as usize;
                assert!(id < 2 && p.y < PER_PUBLISHER as f64);
                assert_eq!(p.utime, id as u64 * 1_000_000 + p.y as u64, "latest returned a value nobody published");
                if let Some(prev) = last_by_pub[id] {
                    assert!(p.utime >= prev, "publisher {id} went backwards");
                }
                last_by_pub[id] = Some(p.utime);
                observations += 1;
            }
            observations
        })
    };

    let a = publisher(bus.clone(), 0);
    let b = publisher(bus.clone(), 1);
    a.join().unwrap();
    b.join().unwrap();
    stop.store(true, Ordering::Release);
    assert!(reader.join().unwrap() > 0);

    let got = all.drain();
    assert_eq!(got.len() as u64, 2 * PER_PUBLISHER);
    let seqs: Vec<u64> = got.iter().map(|m| m.seq).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "fan-out lost or reordered messages");
    let mut next = [0u64; 2];
    for m in &got {
        let p: Pose2D = m.decode().unwrap();
        let id = p.x as usize;
        assert_eq!(p.y as u64, next[id]);
        next[id] += 1;
    }

    let last = bus.latest(Channel::Odometry).unwrap();
    assert_eq!(last.seq, *seqs.last().unwrap(), "latest is not the final delivery");

    let tail = small.drain();
    assert_eq!(tail.len(), 64);
    assert_eq!(small.dropped(), 2 * PER_PUBLISHER - 64);
    assert_eq!(tail.last().unwrap().seq, last.seq);
    assert!(tail.windows(2).all(|w| w[1].seq == w[0].seq + 1), "drop-oldest must keep a contiguous suffix");
}
