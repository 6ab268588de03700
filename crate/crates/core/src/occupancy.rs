//! Dense occupancy bitmap for invaded sites, centred at the origin and grown
//! by doubling when a site outside the covered box is marked. Bits are laid
//! out in 8x8 tiles, one `u64` per tile, so lattice neighbours usually share
//! a word.

use crate::lattice::Site;

#[derive(Clone, Debug)]
pub struct SiteSet {
    half: i64,
    /// Side length in sites, a multiple of 8.
    side: i64,
    tiles_per_row: i64,
    bits: Vec<u64>,
    len: usize,
}

impl SiteSet {
    pub fn with_radius(radius: u32) -> Self {
        let half = radius.max(8) as i64;
        let side = (2 * half + 1 + 7) / 8 * 8;
        let tiles_per_row = side / 8;
        SiteSet { half, side, tiles_per_row, bits: vec![0; (tiles_per_row * tiles_per_row) as usize], len: 0 }
    }

    /// Radius of the box currently backed by memory.
    pub fn covered_radius(&self) -> u32 {
        self.half as u32
    }

    #[inline(always)]
    fn index(&self, s: Site) -> Option<usize> {
        let x = s.x as i64 + self.half;
        let y = s.y as i64 + self.half;
        if x < 0 || y < 0 || x >= self.side || y >= self.side {
            None
        } else {
            let tile = (y >> 3) * self.tiles_per_row + (x >> 3);
            Some(((tile << 6) | ((y & 7) << 3) | (x & 7)) as usize)
        }
    }

    #[inline(always)]
    pub fn contains(&self, s: Site) -> bool {
        match self.index(s) {
            Some(i) => self.bits[i >> 6] >> (i & 63) & 1 == 1,
            None => false,
        }
    }

    /// Marks `s`; returns false if it was already present.
    #[inline]
    pub fn insert(&mut self, s: Site) -> bool {
        let i = match self.index(s) {
            Some(i) => i,
            None => {
                self.grow_to(s.chebyshev());
                self.index(s).expect("grown to cover site")
            }
        };
        let (w, b) = (i >> 6, 1u64 << (i & 63));
        if self.bits[w] & b != 0 {
            return false;
        }
        self.bits[w] |= b;
        self.len += 1;
        true
    }

    fn grow_to(&mut self, radius: u32) {
        let mut half = self.half;
        while half < radius as i64 {
            half *= 2;
        }
        let mut bigger = SiteSet::with_radius(half as u32);
        for s in self.iter() {
            bigger.insert(s);
        }
        *self = bigger;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sites in tile order.
    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        self.bits.iter().enumerate().flat_map(move |(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                let (tx, ty) = (w as i64 % self.tiles_per_row, w as i64 / self.tiles_per_row);
                let x = tx * 8 + (b & 7) as i64;
                let y = ty * 8 + (b >> 3) as i64;
                Some(Site::new((x - self.half) as i32, (y - self.half) as i32))
            })
        })
    }
}

impl PartialEq for SiteSet {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().all(|s| other.contains(s))
    }
}

impl Eq for SiteSet {}
