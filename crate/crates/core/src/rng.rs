//! Keyed random streams.
//!
//! Every random quantity of a Monte Carlo drop is drawn from its own generator,
//! seeded from `(master_seed, point key, drop index, purpose, item index)`.
//! A drop's outcome therefore depends only on its key, never on which thread
//! ran it or on how many other draws happened before it.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

pub type StreamRng = Pcg64Mcg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Phase = 1,
    Fading = 2,
    Activity = 3,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn combine(acc: u64, word: u64) -> u64 {
    mix64(acc ^ mix64(word))
}

/// Identifies one sweep point, independent of the activity policy so that
/// policies evaluated at the same constellation share phases and fading.
pub fn point_key(n_orbits: usize, n_sats_per_orbit: usize) -> u64 {
    combine(n_orbits as u64, n_sats_per_orbit as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropStreams {
    key: u64,
}

impl DropStreams {
    pub fn new(master_seed: u64, point: u64, drop: u64) -> Self {
        Self {
            key: combine(combine(mix64(master_seed), point), drop),
        }
    }

    pub fn stream(&self, purpose: Purpose, index: u64) -> StreamRng {
        StreamRng::seed_from_u64(combine(combine(self.key, purpose as u64), index))
    }
}
