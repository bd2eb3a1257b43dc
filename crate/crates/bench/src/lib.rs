//! Shared helpers for the criterion benches.

use hashslice_core::scheme::{SchemeConfig, TopicId, Username};

/// A scheme over a small embedded space, sized so a full scan stays in
/// bench territory.
pub fn bench_scheme(bits: u32) -> SchemeConfig {
    SchemeConfig {
        address_space_bits: bits,
        address_base: 0xc000_0000 & !((1u32 << bits) - 1),
        ..SchemeConfig::default()
    }
}

/// Deterministic username set for matching benchmarks.
pub fn bench_usernames(n: usize) -> Vec<Username> {
    (0..n)
        .map(|i| Username::from_value((i as u32).wrapping_mul(2654435761) & 0xffff, 4))
        .collect()
}

pub fn bench_topic() -> TopicId {
    TopicId(227259)
}
