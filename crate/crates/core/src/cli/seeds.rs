//! Per-run seed derivation.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Seed for one `(label, run, value)` cell under `master`.
///
/// Each stream depends only on its own coordinates, so adding labels or
/// values leaves existing streams untouched.
pub fn derive_seed(master: u64, label: &str, run: u64, value: u64) -> u64 {
    let mut h = splitmix64(master);
    for part in [fnv1a(label.as_bytes()), run, value] {
        h = splitmix64(h ^ part);
    }
    h
}
