//! Counter-based edge weights.
//!
//! A [`WeightField`] is a pure function from `(stream seed, canonical edge)`
//! to a weight in the open interval `(0, 1)`. No state is kept, so a full
//! invasion and a truncated invasion built from the same field see the same
//! environment, and any number of threads can read it.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::lattice::Edge;

/// Name and version of the mixing construction. Recorded in every output
/// header and in the seed ledger; any change to [`mix64`] or the way keys
/// are folded must bump it.
pub const MIXER_VERSION: &str = "splitmix64-fold/v1";

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed plus replica index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub master: u64,
    pub replica: u64,
}

impl Seed {
    pub fn new(master: u64, replica: u64) -> Self {
        Seed { master, replica }
    }

    /// Per-replica stream seed.
    pub fn stream(self) -> u64 {
        mix64(self.master ^ mix64(self.replica.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    pub fn field(self) -> WeightField {
        WeightField::from_stream(self.stream())
    }
}

/// Anything that can assign a weight to an edge. The invasion engine is
/// generic over it so tests can pin individual weights.
pub trait WeightSource: Sync {
    /// A `RANK_BITS`-bit integer whose order agrees with the order of the
    /// weights.
    fn rank(&self, e: Edge) -> u64;

    #[inline]
    fn weight(&self, e: Edge) -> f64 {
        rank_to_weight(self.rank(e))
    }
}

/// Width of weight ranks. With 52 bits, `(rank + 1/2) * 2^-52` is exact in
/// an `f64` for every rank, including the largest.
pub const RANK_BITS: u32 = 52;
/// One past the largest rank.
pub const RANK_ONE: u64 = 1 << RANK_BITS;

/// Maps a rank to `(rank + 1/2) * 2^-52`, which is never 0 or 1.
#[inline(always)]
pub fn rank_to_weight(rank: u64) -> f64 {
    (rank as f64 + 0.5) * (1.0 / RANK_ONE as f64)
}

/// The smallest rank whose weight is `>= p`, so `rank < rank_threshold(p)`
/// iff `weight < p`.
pub fn rank_threshold(p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return RANK_ONE;
    }
    // weight(r) < p  <=>  r + 0.5 < p * 2^52  <=>  r < ceil(p * 2^52 - 0.5)
    let t = p * RANK_ONE as f64 - 0.5;
    t.ceil().max(0.0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightField {
    stream: u64,
}

impl WeightField {
    pub fn from_stream(stream: u64) -> Self {
        WeightField { stream }
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    pub fn is_p_open(&self, e: Edge, p: f64) -> bool {
        self.weight(e) < p
    }
}

impl WeightSource for WeightField {
    #[inline(always)]
    fn rank(&self, e: Edge) -> u64 {
        mix64(mix64(e.key() ^ self.stream).wrapping_add(self.stream)) >> (64 - RANK_BITS)
    }
}

pub fn weight(f: &WeightField, e: Edge) -> f64 {
    f.weight(e)
}

pub fn is_p_open(f: &WeightField, e: Edge, p: f64) -> bool {
    f.is_p_open(e, p)
}

/// Seed ledger: header lines starting with `#`, then
/// `replica_index<TAB>stream_seed_hex` per replica.
pub fn write_seed_ledger<W: Write>(mut w: W, master: u64, replicas: u64) -> io::Result<()> {
    writeln!(w, "# mixer {MIXER_VERSION}")?;
    writeln!(w, "# master_seed {master}")?;
    for i in 0..replicas {
        writeln!(w, "{}\t{:016x}", i, Seed::new(master, i).stream())?;
    }
    Ok(())
}

pub fn read_seed_ledger<R: BufRead>(r: R) -> io::Result<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let bad = || io::Error::new(io::ErrorKind::InvalidData, format!("bad ledger line {line:?}"));
        let (i, h) = line.split_once('\t').ok_or_else(bad)?;
        let i = i.parse().map_err(|_| bad())?;
        let h = u64::from_str_radix(h, 16).map_err(|_| bad())?;
        out.push((i, h));
    }
    Ok(out)
}
