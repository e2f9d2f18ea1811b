//! Portable seeded random streams.
//!
//! Every consumer draws from its own xoshiro256++ stream keyed by
//! `(seed, tag, index)`, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, tag: &str) -> StreamRng {
    stream_indexed(seed, tag, 0)
}

pub fn stream_indexed(seed: u64, tag: &str, index: u64) -> StreamRng {
    let key = splitmix64(seed) ^ fnv1a(tag.as_bytes()).rotate_left(17) ^ splitmix64(index.wrapping_add(0x51ed));
    StreamRng::seed_from_u64(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draws = |mut r: StreamRng| (0..4).map(|_| r.next_u64()).collect::<Vec<_>>();
        let (a, b) = (draws(stream(42, "scene")), draws(stream(42, "scene")));
        assert_eq!(a, b);
        assert_ne!(stream(42, "scene").next_u64(), stream(42, "noise").next_u64());
        assert_ne!(stream_indexed(42, "start", 1).next_u64(), stream_indexed(42, "start", 2).next_u64());
        assert_ne!(stream(1, "scene").next_u64(), stream(2, "scene").next_u64());
    }

    #[test]
    fn first_draw_is_pinned() {
        // guards against silent changes to the key derivation or generator
        let v = stream(0, "pin").next_u64();
        assert_eq!(v, 3_118_918_309_896_311_163);
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    }
}
