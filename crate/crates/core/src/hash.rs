//! Digest primitives tuned for the short, single-block messages the
//! username scheme hashes.
//!
//! Every preimage in the scheme is `topic digits ++ salt ++ dotted address`,
//! which after padding always fits one 64-byte block. [`SingleBlock`] keeps
//! the topic prefix written once and rewrites only the address suffix, so a
//! full address-space scan re-hashes without rebuilding the message. A
//! hardware kernel (SHA-NI) is picked at runtime when the CPU has one; the
//! portable scalar kernels are the reference and the fallback.

use crate::error::{Error, Result};

/// Length in hex characters of every digest handled by the toolkit.
///
/// SHA-256 output is truncated to its first 40 hex characters so that slice
/// offsets mean the same thing under every hash kind.
pub const DIGEST_HEX_LEN: usize = 40;

/// The first five big-endian words of a digest (40 hex characters).
pub type DigestWords = [u32; 5];

/// Hash function used by a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum HashKind {
    /// FIPS 180-1 SHA-1, the hash the scheme actually uses.
    Sha1,
    /// FIPS 180-4 SHA-256 truncated to 40 hex characters; a deliberately
    /// wrong-but-uniform hash for falsification runs.
    Sha256,
    /// Non-avalanching toy that echoes input nibbles into the digest.
    /// Only useful as a negative control for uniformity tests.
    ToyEcho,
}

impl HashKind {
    pub fn parse(id: &str) -> Result<Self> {
        match id.to_ascii_lowercase().as_str() {
            "sha1" | "sha-1" => Ok(HashKind::Sha1),
            "sha256" | "sha-256" => Ok(HashKind::Sha256),
            "toy-echo" => Ok(HashKind::ToyEcho),
            other => Err(Error::config(format!(
                "unsupported hash_algorithm identifier: {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HashKind::Sha1 => "sha1",
            HashKind::Sha256 => "sha256",
            HashKind::ToyEcho => "toy-echo",
        }
    }
}

impl std::fmt::Display for HashKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Digest an arbitrary-length message, truncated to 40 hex characters.
pub fn digest_words(kind: HashKind, msg: &[u8]) -> DigestWords {
    match kind {
        HashKind::Sha1 => sha1_words(msg),
        HashKind::Sha256 => {
            let h = sha256_words(msg);
            [h[0], h[1], h[2], h[3], h[4]]
        }
        HashKind::ToyEcho => toy_echo_words(msg),
    }
}

/// Lowercase 40-character hex digest of a message.
pub fn hex_digest(kind: HashKind, msg: &[u8]) -> String {
    words_to_hex(&digest_words(kind, msg))
}

pub fn words_to_hex(words: &DigestWords) -> String {
    let mut out = String::with_capacity(DIGEST_HEX_LEN);
    for w in words {
        out.push_str(&format!("{w:08x}"));
    }
    out
}

/// Parse a 40-character hex digest into its five big-endian words.
pub fn hex_to_words(hex: &str) -> Result<DigestWords> {
    if hex.len() != DIGEST_HEX_LEN || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::usage(format!(
            "expected a {DIGEST_HEX_LEN}-character hex digest, got {hex:?}"
        )));
    }
    let mut words = [0u32; 5];
    for (i, w) in words.iter_mut().enumerate() {
        *w = u32::from_str_radix(&hex[i * 8..i * 8 + 8], 16).unwrap();
    }
    Ok(words)
}

/// Extract `len` hex characters starting at 0-based offset `start` as an
/// integer (first character in the high nibble).
#[inline]
pub fn slice_value(words: &DigestWords, start: usize, len: usize) -> u32 {
    debug_assert!(len >= 1 && len <= 8);
    debug_assert!(start + len <= DIGEST_HEX_LEN);
    let word = start / 8;
    let hi = words[word] as u64;
    let lo = if word + 1 < 5 { words[word + 1] as u64 } else { 0 };
    let combined = (hi << 32) | lo;
    let shift = 64 - 4 * ((start % 8) + len);
    ((combined >> shift) & ((1u64 << (4 * len)) - 1)) as u32
}

// ---------------------------------------------------------------------------
// Scalar SHA-1 (FIPS 180-1)
// ---------------------------------------------------------------------------

const SHA1_IV: [u32; 5] = [0x67452301, 0xefcdab89, 0x98badcfe, 0x10325476, 0xc3d2e1f0];

pub(crate) fn sha1_compress(state: &mut [u32; 5], block: &[u32; 16]) {
    let mut w = [0u32; 80];
    w[..16].copy_from_slice(block);
    for t in 16..80 {
        w[t] = (w[t - 3] ^ w[t - 8] ^ w[t - 14] ^ w[t - 16]).rotate_left(1);
    }

    let [mut a, mut b, mut c, mut d, mut e] = *state;
    for (t, &wt) in w.iter().enumerate() {
        let (f, k) = match t {
            0..=19 => ((b & c) | ((!b) & d), 0x5a827999),
            20..=39 => (b ^ c ^ d, 0x6ed9eba1),
            40..=59 => ((b & c) | (b & d) | (c & d), 0x8f1bbcdc),
            _ => (b ^ c ^ d, 0xca62c1d6),
        };
        let tmp = a
            .rotate_left(5)
            .wrapping_add(f)
            .wrapping_add(e)
            .wrapping_add(k)
            .wrapping_add(wt);
        e = d;
        d = c;
        c = b.rotate_left(30);
        b = a;
        a = tmp;
    }

    state[0] = state[0].wrapping_add(a);
    state[1] = state[1].wrapping_add(b);
    state[2] = state[2].wrapping_add(c);
    state[3] = state[3].wrapping_add(d);
    state[4] = state[4].wrapping_add(e);
}

fn block_words(bytes: &[u8; 64]) -> [u32; 16] {
    let mut words = [0u32; 16];
    for (i, w) in words.iter_mut().enumerate() {
        *w = u32::from_be_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
    }
    words
}

/// Pad `msg` per FIPS 180 (0x80, zeros, 64-bit big-endian bit length) and
/// feed the blocks to `compress`.
fn padded_blocks(msg: &[u8], mut compress: impl FnMut(&[u32; 16])) {
    let mut chunks = msg.chunks_exact(64);
    for chunk in &mut chunks {
        compress(&block_words(chunk.try_into().unwrap()));
    }
    let rem = chunks.remainder();
    let mut tail = [0u8; 64];
    tail[..rem.len()].copy_from_slice(rem);
    tail[rem.len()] = 0x80;
    let bitlen = (msg.len() as u64) * 8;
    if rem.len() + 1 + 8 > 64 {
        compress(&block_words(&tail));
        tail = [0u8; 64];
    }
    tail[56..].copy_from_slice(&bitlen.to_be_bytes());
    compress(&block_words(&tail));
}

fn sha1_words(msg: &[u8]) -> DigestWords {
    let mut state = SHA1_IV;
    padded_blocks(msg, |block| sha1_compress(&mut state, block));
    state
}

// ---------------------------------------------------------------------------
// Scalar SHA-256 (FIPS 180-4)
// ---------------------------------------------------------------------------

const SHA256_IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

const SHA256_K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

pub(crate) fn sha256_compress(state: &mut [u32; 8], block: &[u32; 16]) {
    let mut w = [0u32; 64];
    w[..16].copy_from_slice(block);
    for t in 16..64 {
        let s0 = w[t - 15].rotate_right(7) ^ w[t - 15].rotate_right(18) ^ (w[t - 15] >> 3);
        let s1 = w[t - 2].rotate_right(17) ^ w[t - 2].rotate_right(19) ^ (w[t - 2] >> 10);
        w[t] = w[t - 16]
            .wrapping_add(s0)
            .wrapping_add(w[t - 7])
            .wrapping_add(s1);
    }

    let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut h] = *state;
    for t in 0..64 {
        let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
        let ch = (e & f) ^ ((!e) & g);
        let t1 = h
            .wrapping_add(s1)
            .wrapping_add(ch)
            .wrapping_add(SHA256_K[t])
            .wrapping_add(w[t]);
        let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
        let maj = (a & b) ^ (a & c) ^ (b & c);
        let t2 = s0.wrapping_add(maj);
        h = g;
        g = f;
        f = e;
        e = d.wrapping_add(t1);
        d = c;
        c = b;
        b = a;
        a = t1.wrapping_add(t2);
    }

    for (s, v) in state.iter_mut().zip([a, b, c, d, e, f, g, h]) {
        *s = s.wrapping_add(v);
    }
}

pub(crate) fn sha256_words(msg: &[u8]) -> [u32; 8] {
    let mut state = SHA256_IV;
    padded_blocks(msg, |block| sha256_compress(&mut state, block));
    state
}

// ---------------------------------------------------------------------------
// Toy echo hash: digest nibble i is the low nibble of message byte i mod len.
// Violates the avalanche property on purpose.
// ---------------------------------------------------------------------------

fn toy_echo_words(msg: &[u8]) -> DigestWords {
    let mut words = [0u32; 5];
    for i in 0..DIGEST_HEX_LEN {
        let nibble = if msg.is_empty() {
            0
        } else {
            (msg[i % msg.len()] & 0x0f) as u32
        };
        words[i / 8] |= nibble << (28 - 4 * (i % 8));
    }
    words
}

// ---------------------------------------------------------------------------
// Single-block messages with a reusable prefix
// ---------------------------------------------------------------------------

/// Dotted-decimal text of every octet value, padded into a fixed cell.
const fn octet_table() -> [([u8; 3], u8); 256] {
    let mut table = [([0u8; 3], 0u8); 256];
    let mut v = 0usize;
    while v < 256 {
        let mut buf = [0u8; 3];
        let (len, b) = if v >= 100 {
            buf[0] = b'0' + (v / 100) as u8;
            buf[1] = b'0' + ((v / 10) % 10) as u8;
            buf[2] = b'0' + (v % 10) as u8;
            (3u8, buf)
        } else if v >= 10 {
            buf[0] = b'0' + (v / 10) as u8;
            buf[1] = b'0' + (v % 10) as u8;
            (2u8, buf)
        } else {
            buf[0] = b'0' + v as u8;
            (1u8, buf)
        };
        table[v] = (b, len);
        v += 1;
    }
    table
}

static OCTETS: [([u8; 3], u8); 256] = octet_table();

/// Render an address in dotted-decimal into `out`, returning the length.
#[inline]
pub(crate) fn write_dotted(out: &mut [u8], addr: u32) -> usize {
    let mut pos = 0;
    let octets = addr.to_be_bytes();
    for (i, o) in octets.iter().enumerate() {
        if i > 0 {
            out[pos] = b'.';
            pos += 1;
        }
        let (text, len) = OCTETS[*o as usize];
        out[pos..pos + len as usize].copy_from_slice(&text[..len as usize]);
        pos += len as usize;
    }
    pos
}

/// The maximum prefix length that still leaves room for a dotted-decimal
/// address, the 0x80 marker, and the 8-byte length field in one block.
pub const MAX_PREFIX_LEN: usize = 64 - 15 - 1 - 8;

/// A padded 64-byte hash block whose prefix (topic digits plus salt) is
/// written once; per-candidate calls rewrite only the address suffix.
#[derive(Clone)]
pub struct SingleBlock {
    bytes: [u8; 64],
    prefix_len: usize,
    msg_len: usize,
}

impl SingleBlock {
    pub fn with_prefix(prefix: &[u8]) -> Result<Self> {
        if prefix.len() > MAX_PREFIX_LEN {
            return Err(Error::config(format!(
                "message prefix of {} bytes does not fit a single hash block (max {MAX_PREFIX_LEN})",
                prefix.len()
            )));
        }
        let mut bytes = [0u8; 64];
        bytes[..prefix.len()].copy_from_slice(prefix);
        Ok(SingleBlock {
            bytes,
            prefix_len: prefix.len(),
            msg_len: prefix.len(),
        })
    }

    /// Write `addr` in dotted decimal after the prefix, then the padding
    /// marker and the message bit length.
    #[inline]
    pub fn set_address(&mut self, addr: u32) {
        let start = self.prefix_len;
        let len = write_dotted(&mut self.bytes[start..start + 15], addr);
        let end = start + len;
        self.bytes[end] = 0x80;
        // A longer previous message may have left digits behind the marker.
        let dirty_end = (self.msg_len + 1).max(end + 1);
        self.bytes[end + 1..dirty_end].fill(0);
        self.msg_len = end;
        let bitlen = (end as u64) * 8;
        self.bytes[56..].copy_from_slice(&bitlen.to_be_bytes());
    }

    #[inline]
    pub fn message(&self) -> &[u8] {
        &self.bytes[..self.msg_len]
    }

    #[inline]
    pub fn words(&self) -> [u32; 16] {
        block_words(&self.bytes)
    }

    #[inline]
    pub fn bytes(&self) -> &[u8; 64] {
        &self.bytes
    }
}

/// A digest routine bound to one hash kind, with the hardware/software
/// choice made once up front.
#[derive(Debug, Clone, Copy)]
pub struct BlockKernel {
    kind: HashKind,
    hw: bool,
}

impl BlockKernel {
    pub fn new(kind: HashKind) -> Self {
        BlockKernel {
            kind,
            hw: shani::available(),
        }
    }

    /// Force the portable kernel; used by tests to cross-check paths.
    pub fn portable(kind: HashKind) -> Self {
        BlockKernel { kind, hw: false }
    }

    pub fn kind(&self) -> HashKind {
        self.kind
    }

    /// Digest two prepared single-block messages at once. With the
    /// hardware SHA-1 kernel the interleaved pair hides the round-function
    /// latency; other kinds fall back to two sequential digests.
    #[inline]
    pub fn digest_pair(&self, b0: &SingleBlock, b1: &SingleBlock) -> (DigestWords, DigestWords) {
        #[cfg(target_arch = "x86_64")]
        if self.hw && self.kind == HashKind::Sha1 {
            return unsafe { shani::sha1_block_pair(b0.bytes(), b1.bytes()) };
        }
        (self.digest(b0), self.digest(b1))
    }

    /// Digest one prepared single-block message.
    #[inline]
    pub fn digest(&self, block: &SingleBlock) -> DigestWords {
        match self.kind {
            HashKind::Sha1 => {
                #[cfg(target_arch = "x86_64")]
                if self.hw {
                    // Safety: `hw` is only set when the sha feature is present.
                    return unsafe { shani::sha1_block(block.bytes()) };
                }
                let mut state = SHA1_IV;
                sha1_compress(&mut state, &block.words());
                state
            }
            HashKind::Sha256 => {
                #[cfg(target_arch = "x86_64")]
                if self.hw {
                    let h = unsafe { shani::sha256_block(block.bytes()) };
                    return [h[0], h[1], h[2], h[3], h[4]];
                }
                let mut state = SHA256_IV;
                sha256_compress(&mut state, &block.words());
                [state[0], state[1], state[2], state[3], state[4]]
            }
            HashKind::ToyEcho => toy_echo_words(block.message()),
        }
    }
}

// ---------------------------------------------------------------------------
// SHA-NI kernels
// ---------------------------------------------------------------------------

#[cfg(target_arch = "x86_64")]
mod shani {
    use super::{DigestWords, SHA1_IV, SHA256_IV};
    use core::arch::x86_64::*;

    pub fn available() -> bool {
        std::arch::is_x86_feature_detected!("sha")
            && std::arch::is_x86_feature_detected!("ssse3")
            && std::arch::is_x86_feature_detected!("sse4.1")
            && std::arch::is_x86_feature_detected!("avx")
    }

    /// One SHA-1 compression of a prepared 64-byte block from the IV.
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1,avx")]
    pub unsafe fn sha1_block(block: &[u8; 64]) -> DigestWords {
        let mask = _mm_set_epi64x(0x0001_0203_0405_0607, 0x0809_0a0b_0c0d_0e0f);

        let abcd_save = _mm_shuffle_epi32(
            _mm_loadu_si128(SHA1_IV.as_ptr() as *const __m128i),
            0b0001_1011,
        );
        let e_save = _mm_set_epi32(SHA1_IV[4] as i32, 0, 0, 0);

        let ptr = block.as_ptr() as *const __m128i;
        let mut msg0 = _mm_shuffle_epi8(_mm_loadu_si128(ptr), mask);
        let mut msg1 = _mm_shuffle_epi8(_mm_loadu_si128(ptr.add(1)), mask);
        let mut msg2 = _mm_shuffle_epi8(_mm_loadu_si128(ptr.add(2)), mask);
        let mut msg3 = _mm_shuffle_epi8(_mm_loadu_si128(ptr.add(3)), mask);

        let mut abcd = abcd_save;
        let mut e0;
        let mut e1;

        // Rounds 0-3
        e0 = _mm_add_epi32(e_save, msg0);
        e1 = abcd;
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 0);

        // Rounds 4-7
        e1 = _mm_sha1nexte_epu32(e1, msg1);
        e0 = abcd;
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 0);
        msg0 = _mm_sha1msg1_epu32(msg0, msg1);

        // Rounds 8-11
        e0 = _mm_sha1nexte_epu32(e0, msg2);
        e1 = abcd;
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 0);
        msg1 = _mm_sha1msg1_epu32(msg1, msg2);
        msg0 = _mm_xor_si128(msg0, msg2);

        // Rounds 12-15
        e1 = _mm_sha1nexte_epu32(e1, msg3);
        e0 = abcd;
        msg0 = _mm_sha1msg2_epu32(msg0, msg3);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 0);
        msg2 = _mm_sha1msg1_epu32(msg2, msg3);
        msg1 = _mm_xor_si128(msg1, msg3);

        // Rounds 16-19
        e0 = _mm_sha1nexte_epu32(e0, msg0);
        e1 = abcd;
        msg1 = _mm_sha1msg2_epu32(msg1, msg0);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 0);
        msg3 = _mm_sha1msg1_epu32(msg3, msg0);
        msg2 = _mm_xor_si128(msg2, msg0);

        // Rounds 20-23
        e1 = _mm_sha1nexte_epu32(e1, msg1);
        e0 = abcd;
        msg2 = _mm_sha1msg2_epu32(msg2, msg1);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 1);
        msg0 = _mm_sha1msg1_epu32(msg0, msg1);
        msg3 = _mm_xor_si128(msg3, msg1);

        // Rounds 24-27
        e0 = _mm_sha1nexte_epu32(e0, msg2);
        e1 = abcd;
        msg3 = _mm_sha1msg2_epu32(msg3, msg2);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 1);
        msg1 = _mm_sha1msg1_epu32(msg1, msg2);
        msg0 = _mm_xor_si128(msg0, msg2);

        // Rounds 28-31
        e1 = _mm_sha1nexte_epu32(e1, msg3);
        e0 = abcd;
        msg0 = _mm_sha1msg2_epu32(msg0, msg3);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 1);
        msg2 = _mm_sha1msg1_epu32(msg2, msg3);
        msg1 = _mm_xor_si128(msg1, msg3);

        // Rounds 32-35
        e0 = _mm_sha1nexte_epu32(e0, msg0);
        e1 = abcd;
        msg1 = _mm_sha1msg2_epu32(msg1, msg0);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 1);
        msg3 = _mm_sha1msg1_epu32(msg3, msg0);
        msg2 = _mm_xor_si128(msg2, msg0);

        // Rounds 36-39
        e1 = _mm_sha1nexte_epu32(e1, msg1);
        e0 = abcd;
        msg2 = _mm_sha1msg2_epu32(msg2, msg1);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 1);
        msg0 = _mm_sha1msg1_epu32(msg0, msg1);
        msg3 = _mm_xor_si128(msg3, msg1);

        // Rounds 40-43
        e0 = _mm_sha1nexte_epu32(e0, msg2);
        e1 = abcd;
        msg3 = _mm_sha1msg2_epu32(msg3, msg2);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 2);
        msg1 = _mm_sha1msg1_epu32(msg1, msg2);
        msg0 = _mm_xor_si128(msg0, msg2);

        // Rounds 44-47
        e1 = _mm_sha1nexte_epu32(e1, msg3);
        e0 = abcd;
        msg0 = _mm_sha1msg2_epu32(msg0, msg3);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 2);
        msg2 = _mm_sha1msg1_epu32(msg2, msg3);
        msg1 = _mm_xor_si128(msg1, msg3);

        // Rounds 48-51
        e0 = _mm_sha1nexte_epu32(e0, msg0);
        e1 = abcd;
        msg1 = _mm_sha1msg2_epu32(msg1, msg0);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 2);
        msg3 = _mm_sha1msg1_epu32(msg3, msg0);
        msg2 = _mm_xor_si128(msg2, msg0);

        // Rounds 52-55
        e1 = _mm_sha1nexte_epu32(e1, msg1);
        e0 = abcd;
        msg2 = _mm_sha1msg2_epu32(msg2, msg1);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 2);
        msg0 = _mm_sha1msg1_epu32(msg0, msg1);
        msg3 = _mm_xor_si128(msg3, msg1);

        // Rounds 56-59
        e0 = _mm_sha1nexte_epu32(e0, msg2);
        e1 = abcd;
        msg3 = _mm_sha1msg2_epu32(msg3, msg2);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 2);
        msg1 = _mm_sha1msg1_epu32(msg1, msg2);
        msg0 = _mm_xor_si128(msg0, msg2);

        // Rounds 60-63
        e1 = _mm_sha1nexte_epu32(e1, msg3);
        e0 = abcd;
        msg0 = _mm_sha1msg2_epu32(msg0, msg3);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 3);
        msg2 = _mm_sha1msg1_epu32(msg2, msg3);
        msg1 = _mm_xor_si128(msg1, msg3);

        // Rounds 64-67
        e0 = _mm_sha1nexte_epu32(e0, msg0);
        e1 = abcd;
        msg1 = _mm_sha1msg2_epu32(msg1, msg0);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 3);
        msg3 = _mm_sha1msg1_epu32(msg3, msg0);
        msg2 = _mm_xor_si128(msg2, msg0);

        // Rounds 68-71
        e1 = _mm_sha1nexte_epu32(e1, msg1);
        e0 = abcd;
        msg2 = _mm_sha1msg2_epu32(msg2, msg1);
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 3);
        msg3 = _mm_xor_si128(msg3, msg1);

        // Rounds 72-75
        e0 = _mm_sha1nexte_epu32(e0, msg2);
        e1 = abcd;
        msg3 = _mm_sha1msg2_epu32(msg3, msg2);
        abcd = _mm_sha1rnds4_epu32(abcd, e0, 3);

        // Rounds 76-79
        e1 = _mm_sha1nexte_epu32(e1, msg3);
        e0 = abcd;
        abcd = _mm_sha1rnds4_epu32(abcd, e1, 3);

        let e_final = _mm_sha1nexte_epu32(e0, e_save);
        let abcd_final = _mm_add_epi32(abcd, abcd_save);

        let mut out = [0u32; 4];
        _mm_storeu_si128(
            out.as_mut_ptr() as *mut __m128i,
            _mm_shuffle_epi32(abcd_final, 0b0001_1011),
        );
        [
            out[0],
            out[1],
            out[2],
            out[3],
            _mm_extract_epi32(e_final, 3) as u32,
        ]
    }

    /// Two independent SHA-1 compressions with interleaved instruction
    /// streams. The sha1rnds4 dependency chain dominates a single block, so
    /// a pair runs far better than twice as fast as two sequential calls.
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1,avx")]
    pub unsafe fn sha1_block_pair(b0: &[u8; 64], b1: &[u8; 64]) -> (DigestWords, DigestWords) {
        let mask = _mm_set_epi64x(0x0001_0203_0405_0607, 0x0809_0a0b_0c0d_0e0f);

        let abcd_save = _mm_shuffle_epi32(
            _mm_loadu_si128(SHA1_IV.as_ptr() as *const __m128i),
            0b0001_1011,
        );
        let e_save = _mm_set_epi32(SHA1_IV[4] as i32, 0, 0, 0);

        let p = b0.as_ptr() as *const __m128i;
        let q = b1.as_ptr() as *const __m128i;
        let mut m0a = _mm_shuffle_epi8(_mm_loadu_si128(p), mask);
        let mut m1a = _mm_shuffle_epi8(_mm_loadu_si128(p.add(1)), mask);
        let mut m2a = _mm_shuffle_epi8(_mm_loadu_si128(p.add(2)), mask);
        let mut m3a = _mm_shuffle_epi8(_mm_loadu_si128(p.add(3)), mask);
        let mut m0b = _mm_shuffle_epi8(_mm_loadu_si128(q), mask);
        let mut m1b = _mm_shuffle_epi8(_mm_loadu_si128(q.add(1)), mask);
        let mut m2b = _mm_shuffle_epi8(_mm_loadu_si128(q.add(2)), mask);
        let mut m3b = _mm_shuffle_epi8(_mm_loadu_si128(q.add(3)), mask);

        let mut abcd_a = abcd_save;
        let mut abcd_b = abcd_save;
        let (mut e0a, mut e1a);
        let (mut e0b, mut e1b);

        e0a = _mm_add_epi32(e_save, m0a);
        e0b = _mm_add_epi32(e_save, m0b);
        e1a = abcd_a;
        e1b = abcd_b;
        abcd_a = _mm_sha1rnds4_epu32(abcd_a, e0a, 0);
        abcd_b = _mm_sha1rnds4_epu32(abcd_b, e0b, 0);

        macro_rules! step {
            ($imm:literal, $e_in_a:ident, $e_in_b:ident, $e_out_a:ident, $e_out_b:ident,
             $mw_a:ident, $mw_b:ident
             $(, sched($s2d_a:ident, $s2d_b:ident, $s2s_a:ident, $s2s_b:ident))?
             $(, m1op($m1d_a:ident, $m1d_b:ident, $m1s_a:ident, $m1s_b:ident))?
             $(, xor($xd_a:ident, $xd_b:ident, $xs_a:ident, $xs_b:ident))? ) => {
                $e_in_a = _mm_sha1nexte_epu32($e_in_a, $mw_a);
                $e_in_b = _mm_sha1nexte_epu32($e_in_b, $mw_b);
                $e_out_a = abcd_a;
                $e_out_b = abcd_b;
                $(
                    $s2d_a = _mm_sha1msg2_epu32($s2d_a, $s2s_a);
                    $s2d_b = _mm_sha1msg2_epu32($s2d_b, $s2s_b);
                )?
                abcd_a = _mm_sha1rnds4_epu32(abcd_a, $e_in_a, $imm);
                abcd_b = _mm_sha1rnds4_epu32(abcd_b, $e_in_b, $imm);
                $(
                    $m1d_a = _mm_sha1msg1_epu32($m1d_a, $m1s_a);
                    $m1d_b = _mm_sha1msg1_epu32($m1d_b, $m1s_b);
                )?
                $(
                    $xd_a = _mm_xor_si128($xd_a, $xs_a);
                    $xd_b = _mm_xor_si128($xd_b, $xs_b);
                )?
            };
        }

        // Rounds 4..16: schedule priming, no msg2 yet.
        step!(0, e1a, e1b, e0a, e0b, m1a, m1b, m1op(m0a, m0b, m1a, m1b));
        step!(0, e0a, e0b, e1a, e1b, m2a, m2b, m1op(m1a, m1b, m2a, m2b), xor(m0a, m0b, m2a, m2b));
        step!(0, e1a, e1b, e0a, e0b, m3a, m3b, sched(m0a, m0b, m3a, m3b), m1op(m2a, m2b, m3a, m3b), xor(m1a, m1b, m3a, m3b));
        // Rounds 16..76: full schedule pipeline.
        step!(0, e0a, e0b, e1a, e1b, m0a, m0b, sched(m1a, m1b, m0a, m0b), m1op(m3a, m3b, m0a, m0b), xor(m2a, m2b, m0a, m0b));
        step!(1, e1a, e1b, e0a, e0b, m1a, m1b, sched(m2a, m2b, m1a, m1b), m1op(m0a, m0b, m1a, m1b), xor(m3a, m3b, m1a, m1b));
        step!(1, e0a, e0b, e1a, e1b, m2a, m2b, sched(m3a, m3b, m2a, m2b), m1op(m1a, m1b, m2a, m2b), xor(m0a, m0b, m2a, m2b));
        step!(1, e1a, e1b, e0a, e0b, m3a, m3b, sched(m0a, m0b, m3a, m3b), m1op(m2a, m2b, m3a, m3b), xor(m1a, m1b, m3a, m3b));
        step!(1, e0a, e0b, e1a, e1b, m0a, m0b, sched(m1a, m1b, m0a, m0b), m1op(m3a, m3b, m0a, m0b), xor(m2a, m2b, m0a, m0b));
        step!(1, e1a, e1b, e0a, e0b, m1a, m1b, sched(m2a, m2b, m1a, m1b), m1op(m0a, m0b, m1a, m1b), xor(m3a, m3b, m1a, m1b));
        step!(2, e0a, e0b, e1a, e1b, m2a, m2b, sched(m3a, m3b, m2a, m2b), m1op(m1a, m1b, m2a, m2b), xor(m0a, m0b, m2a, m2b));
        step!(2, e1a, e1b, e0a, e0b, m3a, m3b, sched(m0a, m0b, m3a, m3b), m1op(m2a, m2b, m3a, m3b), xor(m1a, m1b, m3a, m3b));
        step!(2, e0a, e0b, e1a, e1b, m0a, m0b, sched(m1a, m1b, m0a, m0b), m1op(m3a, m3b, m0a, m0b), xor(m2a, m2b, m0a, m0b));
        step!(2, e1a, e1b, e0a, e0b, m1a, m1b, sched(m2a, m2b, m1a, m1b), m1op(m0a, m0b, m1a, m1b), xor(m3a, m3b, m1a, m1b));
        step!(2, e0a, e0b, e1a, e1b, m2a, m2b, sched(m3a, m3b, m2a, m2b), m1op(m1a, m1b, m2a, m2b), xor(m0a, m0b, m2a, m2b));
        step!(3, e1a, e1b, e0a, e0b, m3a, m3b, sched(m0a, m0b, m3a, m3b), m1op(m2a, m2b, m3a, m3b), xor(m1a, m1b, m3a, m3b));
        step!(3, e0a, e0b, e1a, e1b, m0a, m0b, sched(m1a, m1b, m0a, m0b), m1op(m3a, m3b, m0a, m0b), xor(m2a, m2b, m0a, m0b));
        // Rounds 68..80: schedule tapers off.
        step!(3, e1a, e1b, e0a, e0b, m1a, m1b, sched(m2a, m2b, m1a, m1b), xor(m3a, m3b, m1a, m1b));
        step!(3, e0a, e0b, e1a, e1b, m2a, m2b, sched(m3a, m3b, m2a, m2b));
        step!(3, e1a, e1b, e0a, e0b, m3a, m3b);

        let e_fin_a = _mm_sha1nexte_epu32(e0a, e_save);
        let e_fin_b = _mm_sha1nexte_epu32(e0b, e_save);
        let abcd_fin_a = _mm_add_epi32(abcd_a, abcd_save);
        let abcd_fin_b = _mm_add_epi32(abcd_b, abcd_save);

        let mut out_a = [0u32; 4];
        let mut out_b = [0u32; 4];
        _mm_storeu_si128(
            out_a.as_mut_ptr() as *mut __m128i,
            _mm_shuffle_epi32(abcd_fin_a, 0b0001_1011),
        );
        _mm_storeu_si128(
            out_b.as_mut_ptr() as *mut __m128i,
            _mm_shuffle_epi32(abcd_fin_b, 0b0001_1011),
        );
        (
            [
                out_a[0],
                out_a[1],
                out_a[2],
                out_a[3],
                _mm_extract_epi32(e_fin_a, 3) as u32,
            ],
            [
                out_b[0],
                out_b[1],
                out_b[2],
                out_b[3],
                _mm_extract_epi32(e_fin_b, 3) as u32,
            ],
        )
    }

    /// One SHA-256 compression of a prepared 64-byte block from the IV.
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1,avx")]
    pub unsafe fn sha256_block(block: &[u8; 64]) -> [u32; 8] {
        let mask = _mm_set_epi64x(0x0c0d_0e0f_0809_0a0bu64 as i64, 0x0405_0607_0001_0203);

        // Pack [a,b,c,d],[e,f,g,h] into the (ABEF, CDGH) layout rnds2 wants.
        let lo = _mm_loadu_si128(SHA256_IV.as_ptr() as *const __m128i);
        let hi = _mm_loadu_si128(SHA256_IV.as_ptr().add(4) as *const __m128i);
        let tmp = _mm_shuffle_epi32(lo, 0xb1); // badc
        let hgfe = _mm_shuffle_epi32(hi, 0x1b); // hgfe (lane0 = h)
        let abef_save = _mm_alignr_epi8(tmp, hgfe, 8);
        let cdgh_save = _mm_blend_epi16(hgfe, tmp, 0xf0);

        let mut abef = abef_save;
        let mut cdgh = cdgh_save;

        let ptr = block.as_ptr() as *const __m128i;
        let mut msg0 = _mm_shuffle_epi8(_mm_loadu_si128(ptr), mask);
        let mut msg1 = _mm_shuffle_epi8(_mm_loadu_si128(ptr.add(1)), mask);
        let mut msg2 = _mm_shuffle_epi8(_mm_loadu_si128(ptr.add(2)), mask);
        let mut msg3 = _mm_shuffle_epi8(_mm_loadu_si128(ptr.add(3)), mask);

        macro_rules! rounds4 {
            ($w:expr, $k:expr) => {{
                let k = _mm_set_epi32($k[3] as i32, $k[2] as i32, $k[1] as i32, $k[0] as i32);
                let wk = _mm_add_epi32($w, k);
                cdgh = _mm_sha256rnds2_epu32(cdgh, abef, wk);
                let wk_hi = _mm_shuffle_epi32(wk, 0x0e);
                abef = _mm_sha256rnds2_epu32(abef, cdgh, wk_hi);
            }};
        }
        macro_rules! schedule {
            ($m0:expr, $m1:expr, $m2:expr, $m3:expr) => {{
                let t = _mm_sha256msg1_epu32($m0, $m1);
                let t = _mm_add_epi32(t, _mm_alignr_epi8($m3, $m2, 4));
                _mm_sha256msg2_epu32(t, $m3)
            }};
        }

        use super::SHA256_K as K;
        rounds4!(msg0, K[0..4]);
        rounds4!(msg1, K[4..8]);
        rounds4!(msg2, K[8..12]);
        rounds4!(msg3, K[12..16]);
        for chunk in K[16..].chunks_exact(16) {
            msg0 = schedule!(msg0, msg1, msg2, msg3);
            rounds4!(msg0, chunk[0..4]);
            msg1 = schedule!(msg1, msg2, msg3, msg0);
            rounds4!(msg1, chunk[4..8]);
            msg2 = schedule!(msg2, msg3, msg0, msg1);
            rounds4!(msg2, chunk[8..12]);
            msg3 = schedule!(msg3, msg0, msg1, msg2);
            rounds4!(msg3, chunk[12..16]);
        }

        abef = _mm_add_epi32(abef, abef_save);
        cdgh = _mm_add_epi32(cdgh, cdgh_save);

        // Unpack (ABEF, CDGH) back to [a,b,c,d],[e,f,g,h].
        let tmp = _mm_shuffle_epi32(abef, 0x1b); // lanes a,b,e,f (lane0 = a)
        let cdgh = _mm_shuffle_epi32(cdgh, 0xb1); // lanes g,h,c,d
        let lo = _mm_blend_epi16(tmp, cdgh, 0xf0); // a,b,c,d
        let hi = _mm_alignr_epi8(cdgh, tmp, 8); // e,f,g,h

        let mut out = [0u32; 8];
        _mm_storeu_si128(out.as_mut_ptr() as *mut __m128i, lo);
        _mm_storeu_si128(out.as_mut_ptr().add(4) as *mut __m128i, hi);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // FIPS 180 reference vectors.
    const SHA1_ABC: &str = "a9993e364706816aba3e25717850c26c9cd0d89d";
    const SHA1_TWO_BLOCK: &str = "84983e441c3bd26ebaae4aa1f95129e5e54670f1";

    #[test]
    fn sha1_fips_vectors() {
        assert_eq!(hex_digest(HashKind::Sha1, b"abc"), SHA1_ABC);
        assert_eq!(
            hex_digest(
                HashKind::Sha1,
                b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"
            ),
            SHA1_TWO_BLOCK
        );
        assert_eq!(
            hex_digest(HashKind::Sha1, b""),
            "da39a3ee5e6b4b0d3255bfef95601890afd80709"
        );
    }

    #[test]
    fn sha256_against_reference_crate() {
        use sha2::Digest;
        for msg in [
            b"abc".as_slice(),
            b"",
            b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
            &[0xa5; 200],
        ] {
            let reference = sha2::Sha256::digest(msg);
            let ours = sha256_words(msg);
            let mut bytes = Vec::new();
            for w in ours {
                bytes.extend_from_slice(&w.to_be_bytes());
            }
            assert_eq!(bytes, reference.as_slice(), "msg len {}", msg.len());
        }
        // The truncated kind keeps the first 40 hex chars.
        let hex = hex_digest(HashKind::Sha256, b"abc");
        assert_eq!(hex, "ba7816bf8f01cfea414140de5dae2223b00361a3"[..40].to_string());
    }

    #[test]
    fn million_a_vector() {
        let msg = vec![b'a'; 1_000_000];
        assert_eq!(
            hex_digest(HashKind::Sha1, &msg),
            "34aa973cd4c4daa4f61eeb2bdbad27316534016f"
        );
    }

    #[test]
    fn kernel_paths_agree_on_random_messages() {
        let hw = BlockKernel::new(HashKind::Sha1);
        let sw = BlockKernel::portable(HashKind::Sha1);
        let hw256 = BlockKernel::new(HashKind::Sha256);
        let sw256 = BlockKernel::portable(HashKind::Sha256);
        let mut block = SingleBlock::with_prefix(b"227259").unwrap();
        let mut prev = block.clone();
        let mut addr: u32 = 0x243f6a88;
        for i in 0..2000 {
            addr = addr.wrapping_mul(2891336453).wrapping_add(0x9e3779b9);
            block.set_address(addr);
            assert_eq!(hw.digest(&block), sw.digest(&block));
            assert_eq!(hw256.digest(&block), sw256.digest(&block));
            // And both equal the general-purpose path.
            assert_eq!(
                sw.digest(&block),
                digest_words(HashKind::Sha1, block.message())
            );
            if i > 0 {
                let (d0, d1) = hw.digest_pair(&prev, &block);
                assert_eq!(d0, hw.digest(&prev));
                assert_eq!(d1, hw.digest(&block));
            }
            prev = block.clone();
        }
    }

    #[test]
    fn single_block_matches_streaming_digest() {
        let mut block = SingleBlock::with_prefix(b"6234").unwrap();
        block.set_address(u32::from_be_bytes([131, 111, 5, 175]));
        assert_eq!(block.message(), b"6234131.111.5.175");
        let kernel = BlockKernel::new(HashKind::Sha1);
        assert_eq!(
            words_to_hex(&kernel.digest(&block)),
            hex_digest(HashKind::Sha1, b"6234131.111.5.175")
        );
        // Shrinking the address must not leave stale digits in the block.
        block.set_address(0);
        assert_eq!(block.message(), b"62340.0.0.0");
        assert_eq!(
            words_to_hex(&kernel.digest(&block)),
            hex_digest(HashKind::Sha1, b"62340.0.0.0")
        );
    }

    #[test]
    fn dotted_rendering() {
        let mut buf = [0u8; 15];
        let n = write_dotted(&mut buf, 2189728028);
        assert_eq!(&buf[..n], b"130.132.153.28");
        let n = write_dotted(&mut buf, 0);
        assert_eq!(&buf[..n], b"0.0.0.0");
        let n = write_dotted(&mut buf, u32::MAX);
        assert_eq!(&buf[..n], b"255.255.255.255");
    }

    #[test]
    fn slice_value_extracts_nibbles() {
        let words = hex_to_words("e8b5eae32c2b197a0ac4cb889a9bbb8f417f3bff").unwrap();
        assert_eq!(slice_value(&words, 9, 4), 0xc2b1);
        assert_eq!(slice_value(&words, 8, 4), 0x2c2b);
        assert_eq!(slice_value(&words, 10, 4), 0x2b19);
        assert_eq!(slice_value(&words, 0, 1), 0xe);
        assert_eq!(slice_value(&words, 36, 4), 0x3bff);
        assert_eq!(slice_value(&words, 6, 8), 0xe32c2b19);
    }

    #[test]
    fn toy_echo_is_not_avalanching() {
        let a = hex_digest(HashKind::ToyEcho, b"227259131.111.5.175");
        let b = hex_digest(HashKind::ToyEcho, b"227259131.111.5.176");
        // Only positions touching the changed byte differ.
        let diff = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count();
        assert!(diff <= 3, "echo hash changed {diff} positions");
    }

    #[test]
    fn hash_kind_parse() {
        assert_eq!(HashKind::parse("SHA-1").unwrap(), HashKind::Sha1);
        assert_eq!(HashKind::parse("sha256").unwrap(), HashKind::Sha256);
        assert!(matches!(
            HashKind::parse("md5-but-wrong"),
            Err(Error::Config(_))
        ));
    }
}
