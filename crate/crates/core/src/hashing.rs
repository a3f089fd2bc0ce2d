//! Portable, order-independent pseudo-randomness keyed by strings.
//!
//! Values derive from FNV-1a over the key bytes mixed with SplitMix64, so an
//! external evaluator can reproduce them without sharing an RNG stream.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hash of `seed` and the `parts`, joined with the unit separator `\x1f`.
pub fn key(seed: u64, parts: &[&str]) -> u64 {
    let joined = parts.join("\u{1f}");
    splitmix64(fnv1a64(joined.as_bytes()) ^ splitmix64(seed))
}

/// Uniform in the open interval (0, 1).
pub fn unit(h: u64) -> f64 {
    // 52 bits keep `top + 0.5` exactly representable, so 1.0 is never reached.
    ((h >> 12) as f64 + 0.5) / (1u64 << 52) as f64
}

/// Standard normal via Box-Muller.
pub fn normal(h: u64) -> f64 {
    let u1 = unit(h);
    let u2 = unit(splitmix64(h));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
