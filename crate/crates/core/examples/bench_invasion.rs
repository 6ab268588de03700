//! Times invasions to radius `2^exp` and reports queue sizes.
//!
//! Usage: bench_invasion [exp] [replicas]

use std::time::Instant;

use ipc_core::invasion::{Invasion, InvasionConfig};
use ipc_core::Seed;

fn main() {
    let args: Vec<u32> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let exp = args.first().copied().unwrap_or(12);
    let reps = args.get(1).copied().unwrap_or(1);
    for r in 0..reps {
        let f = Seed::new(1, r as u64).field();
        let t0 = Instant::now();
        let mut inv = Invasion::new(InvasionConfig::to_radius(1 << exp).with_edge_cap(u64::MAX), &f).unwrap();
        let mut maxq = 0;
        while inv.step().unwrap().is_some() {
            maxq = maxq.max(inv.boundary_len());
        }
        println!("R=2^{exp} steps={} sites={} maxq={} split={:?} t={:.2}s", inv.steps(), inv.sites().len(), maxq, inv.queue_split(), t0.elapsed().as_secs_f64());
    }
}
