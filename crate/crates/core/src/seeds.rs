//! Named random substreams derived from one master seed.

/// Seed of substream `name`, element `index`, under `master`.
pub fn substream(master: u64, name: &str, index: u64) -> u64 {
    // FNV-1a over the name, then splitmix64 over the combination
    let mut hsh: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        hsh ^= b as u64;
        hsh = hsh.wrapping_mul(0x100_0000_01b3);
    }
    splitmix(splitmix(master ^ hsh).wrapping_add(index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
