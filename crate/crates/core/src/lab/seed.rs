//! Seed derivation. Every random stream in the lab hangs off one base seed.

/// SplitMix64 finalizer applied to `base` mixed with a stream id.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids used by the experiment driver.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const TASK_A: u64 = 2;
    pub const TASK_B: u64 = 3;
    pub const PRETRAIN_BATCHES: u64 = 10;
    pub const FINETUNE_BATCHES: u64 = 11;
    pub const REVERSAL_BATCHES: u64 = 12;
    pub const PROBE_TRAIN: u64 = 20;
    pub const PROBE_TEST: u64 = 21;
    pub const EVAL: u64 = 22;
}
