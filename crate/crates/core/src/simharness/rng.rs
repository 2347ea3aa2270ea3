use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles; each (seed, index, role) triple owns an independent stream.
pub mod role {
    pub const Y_P: u64 = 1;
    pub const Y_Q: u64 = 2;
    pub const X_P: u64 = 3;
    pub const X_Q: u64 = 4;
    pub const PRIOR_P: u64 = 5;
    pub const PRIOR_Q: u64 = 6;
    pub const DIAGNOSTICS: u64 = 7;
    pub const BACKGROUND: u64 = 8;
    pub const SIGNAL: u64 = 9;
    pub const SEED_BANK: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key derived from `(master, index, role)` by chained SplitMix64 mixing.
pub fn stream_key(master: u64, index: u64, role: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ index) ^ role.rotate_left(32))
}

/// Generator for one `(master, index, role)` stream, independent of the order
/// in which streams are requested.
pub fn stream_rng(master: u64, index: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(master, index, role))
}
