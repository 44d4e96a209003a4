//! Counter-based Philox4x32-10 generator and named stream derivation.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for r in 0..10 {
        if r > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// 64-bit FNV-1a.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream id for a name of the form `module.purpose.index`.
pub fn stream_id(module: &str, purpose: &str, index: u64) -> u64 {
    fnv1a(&format!("{module}.{purpose}.{index}"))
}

/// Seed for a sequential generator, derived from a global seed and stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let b = philox4x32_10([0, 0, stream as u32, (stream >> 32) as u32], [seed as u32, (seed >> 32) as u32]);
    b[0] as u64 | (b[1] as u64) << 32
}

/// Random access stream: value `i` depends only on `(seed, stream, i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    pub seed: u64,
    pub stream: u64,
}

#[inline]
fn unit53(hi: u32, lo: u32) -> f64 {
    let x = ((hi as u64) << 32 | lo as u64) >> 11;
    (x as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Stream { seed, stream }
    }

    pub fn named(seed: u64, module: &str, purpose: &str, index: u64) -> Self {
        Stream { seed, stream: stream_id(module, purpose, index) }
    }

    #[inline]
    pub fn block(&self, i: u64) -> [u32; 4] {
        philox4x32_10(
            [i as u32, (i >> 32) as u32, self.stream as u32, (self.stream >> 32) as u32],
            [self.seed as u32, (self.seed >> 32) as u32],
        )
    }

    /// Uniform on (0, 1].
    #[inline]
    pub fn uniform(&self, i: u64) -> f64 {
        let b = self.block(i);
        unit53(b[0], b[1])
    }

    /// Standard normal pair by Box–Muller.
    #[inline]
    pub fn normal_pair(&self, i: u64) -> (f64, f64) {
        let b = self.block(i);
        let u1 = unit53(b[0], b[1]);
        let u2 = unit53(b[2], b[3]);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    #[inline]
    pub fn normal(&self, i: u64) -> f64 {
        self.normal_pair(i).0
    }
}
