//! Seed hierarchy.
//!
//! Every random stream in a realization is derived from the experiment's
//! master seed by mixing in labels, so a realization's output depends only on
//! `(master_seed, realization_index)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a numeric label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label.wrapping_mul(GOLDEN))
}

/// Derive a child seed from a parent seed and a string label (FNV-1a).
pub fn derive_named(parent: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive_seed(parent, h)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// The named substreams of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizationSeeds {
    pub root: u64,
    pub teacher: u64,
    pub seeding: u64,
    pub student_init: u64,
    pub strategy: u64,
    pub choices: u64,
    /// Parent of the per-timestep training streams, see [`RealizationSeeds::training_at`].
    pub training: u64,
}

impl RealizationSeeds {
    /// When `shared_teacher` is set the teacher seed ignores the realization
    /// index, so every realization sees the same teacher.
    pub fn derive(master_seed: u64, realization: usize, shared_teacher: bool) -> Self {
        let root = derive_seed(master_seed, realization as u64);
        let teacher = if shared_teacher {
            derive_named(master_seed, "teacher")
        } else {
            derive_named(root, "teacher")
        };
        Self {
            root,
            teacher,
            seeding: derive_named(root, "seeding"),
            student_init: derive_named(root, "student_init"),
            strategy: derive_named(root, "strategy"),
            choices: derive_named(root, "choices"),
            training: derive_named(root, "training"),
        }
    }

    /// Seed of the training stream used after timestep `t` (0 = after seeding).
    pub fn training_at(&self, t: usize) -> u64 {
        derive_seed(self.training, t as u64)
    }
}
