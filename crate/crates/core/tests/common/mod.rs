#![allow(dead_code)]

pub mod oracle;

use ehpc_core::policy::ArrivalModel;
use ehpc_core::sim::renewal_instants;
use ehpc_core::SystemParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameters used throughout the numerical examples.
pub fn reference(window: usize) -> SystemParams {
    SystemParams::new(100.0, 0.3, 0.5, window).unwrap()
}

/// First `count` gaps `F_n − F_{n−1}` between renewal instants of a Bernoulli stream.
pub fn renewal_gaps(p: f64, count: usize, seed: u64) -> Vec<usize> {
    let sampler = ArrivalModel::Bernoulli { prob: p }.sampler(1.0).unwrap();
    let mut len = (1.2 * count as f64 / p) as usize + 1000;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arrivals: Vec<f64> = (0..len).map(|_| sampler.sample(&mut rng)).collect();
        let instants = renewal_instants(&arrivals, 1.0);
        if instants.len() > count {
            return instants.windows(2).take(count).map(|w| w[1] - w[0]).collect();
        }
        len *= 2;
    }
}
