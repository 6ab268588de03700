//! Four-ary min-heap on `(rank, key)` pairs. With 16-byte entries, the four
//! children of a node fill one cache line, which halves the cache misses of a
//! binary heap at the sizes the invasion reaches.

#[derive(Clone, Debug, Default)]
pub struct QuadHeap {
    // Three padding slots: logical node i lives at data[i + 3], so each
    // sibling group of four starts at a multiple of four.
    data: Vec<(u64, u64)>,
}

const ROOT: usize = 3;

impl QuadHeap {
    pub fn new() -> Self {
        QuadHeap { data: vec![(0, 0); ROOT] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() - ROOT
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn parent(i: usize) -> usize {
        (i + 8) / 4
    }

    #[inline]
    fn first_child(i: usize) -> usize {
        4 * i - 8
    }

    #[inline]
    pub fn push(&mut self, item: (u64, u64)) {
        let mut i = self.data.len();
        self.data.push(item);
        while i > ROOT {
            let p = Self::parent(i);
            if self.data[p] <= item {
                break;
            }
            self.data[i] = self.data[p];
            i = p;
        }
        self.data[i] = item;
    }

    #[inline]
    pub fn pop(&mut self) -> Option<(u64, u64)> {
        if self.is_empty() {
            return None;
        }
        let top = self.data[ROOT];
        let last = self.data.pop().unwrap();
        let n = self.data.len();
        if n == ROOT {
            return Some(top);
        }
        let mut i = ROOT;
        loop {
            let c = Self::first_child(i);
            if c >= n {
                break;
            }
            let end = (c + 4).min(n);
            let mut best = c;
            for j in c + 1..end {
                if self.data[j] < self.data[best] {
                    best = j;
                }
            }
            if self.data[best] >= last {
                break;
            }
            self.data[i] = self.data[best];
            i = best;
        }
        self.data[i] = last;
        Some(top)
    }
}
