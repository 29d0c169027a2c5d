//! Run configuration shared by the synthesizers.

use serde::{Deserialize, Serialize};

use crate::matrix::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub tolerances: Tolerances,
    pub seed: u64,
    /// Multi-start count for every local optimization.
    pub restarts: usize,
    /// Box budget for compiled words; `None` picks 8 for qubits and 16 otherwise.
    pub max_boxes: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tolerances: Tolerances::default(),
            seed: 0,
            restarts: 4,
            max_boxes: None,
        }
    }
}

impl Config {
    pub fn with_seed(seed: u64) -> Self {
        Config {
            seed,
            ..Default::default()
        }
    }

    pub fn max_boxes_for(&self, d: usize) -> usize {
        self.max_boxes.unwrap_or(if d <= 2 { 8 } else { 16 })
    }
}

/// Mixes a base seed with a path of stream labels (splitmix64 finalizer).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut z = seed;
    for &p in path {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
