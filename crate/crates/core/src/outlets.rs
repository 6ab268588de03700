//! Outlets and ponds.
//!
//! An outlet is an invaded edge whose weight exceeds that of every edge
//! invaded after it (a strict suffix maximum of the weight sequence) and
//! exceeds the threshold `p_c`. Pond `k` is the run of entries between outlet
//! `k - 1` and outlet `k`; `R̂_k` is the radius of everything invaded before
//! outlet `k`.
//!
//! On a finite trace the classification is only trusted well inside the stop
//! radius: a run stopped at `R` certifies scales `2^n` with
//! `n <= log2(R) - buffer`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invasion::{InvasionConfig, InvasionError, InvasionTrace, StepEvent, StopReason, StopRule, TraceEntry};
use crate::lattice::{annulus_index, Edge, Region};
use crate::weightfield::WeightSource;
use crate::P_C;

/// Default gap between the certified scale and the stop radius, in dyadic
/// scales.
pub const DEFAULT_BUFFER: u32 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum OutletError {
    #[error("outlets do not belong to this trace: {0}")]
    Inconsistent(String),
    #[error("scale {requested} is not certified (certified through {certified:?})")]
    Uncertified { requested: u32, certified: Option<u32> },
    #[error("only {available} outlets in the certified region, {needed} needed")]
    InsufficientData { needed: u64, available: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutletRecord {
    pub edge: Edge,
    pub weight: f64,
    pub step: u64,
    pub annulus_k: u32,
    pub certified: bool,
}

/// Indices of the strict suffix maxima of `weights`, in increasing order.
pub fn suffix_maxima(weights: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (i, &w) in weights.iter().enumerate().rev() {
        if w > best {
            out.push(i);
            best = w;
        }
    }
    out.reverse();
    out
}

/// Outlets of a trace: entries above `p_threshold` that beat every later
/// entry. They are certified iff the run stopped on its radius rule.
pub fn extract_outlets(trace: &InvasionTrace, p_threshold: f64) -> Vec<OutletRecord> {
    let weights: Vec<f64> = trace.entries.iter().map(|e| e.weight).collect();
    let certified = trace.stop_reason == StopReason::RadiusHit;
    suffix_maxima(&weights)
        .into_iter()
        .map(|i| &trace.entries[i])
        .filter(|e| e.weight > p_threshold)
        .map(|e| OutletRecord {
            edge: e.edge,
            weight: e.weight,
            step: e.step,
            annulus_k: annulus_index(e.edge),
            certified,
        })
        .collect()
}

/// A suffix-maximum candidate seen by [`OutletTracker`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entry: TraceEntry,
    pub radius_before: u32,
}

/// Online suffix-maximum extraction: a stack of candidates with strictly
/// decreasing weights. Memory is the stack only, so it can follow invasions
/// too long to store.
#[derive(Clone, Debug)]
pub struct OutletTracker {
    threshold: f64,
    stack: Vec<Candidate>,
}

impl OutletTracker {
    pub fn new(threshold: f64) -> Self {
        OutletTracker { threshold, stack: Vec::new() }
    }

    #[inline]
    pub fn observe(&mut self, ev: &StepEvent) {
        let w = ev.entry.weight;
        if w <= self.threshold {
            return;
        }
        while self.stack.last().is_some_and(|c| c.entry.weight <= w) {
            self.stack.pop();
        }
        self.stack.push(Candidate { entry: ev.entry, radius_before: ev.radius_before });
    }

    /// Current outlets in step order.
    pub fn candidates(&self) -> &[Candidate] {
        &self.stack
    }

    pub fn into_candidates(self) -> Vec<Candidate> {
        self.stack
    }
}

/// Certified scale of a run: `floor(log2 R) - buffer` for a run that stopped
/// on reaching radius `R`.
pub fn certified_scale(config: &InvasionConfig, stop_reason: StopReason, buffer: u32) -> Option<u32> {
    match (config.stop, stop_reason) {
        (StopRule::Radius(r), StopReason::RadiusHit) => (31 - r.leading_zeros()).checked_sub(buffer),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PondDecomposition {
    /// Outlets in step order.
    pub outlets: Vec<OutletRecord>,
    /// Pond index (1-based) of every entry, `None` for outlet entries and
    /// for the unfinished pond after the last outlet.
    pub pond_of_step: Vec<Option<u32>>,
    /// Entries per complete pond.
    pub pond_sizes: Vec<u64>,
    /// `R̂_k`, the radius of all sites invaded before outlet `k`.
    pub radii: Vec<u32>,
    /// `O_k` for `k = 1..=counts.len()`.
    pub counts: Vec<u64>,
    pub certified_scale: Option<u32>,
}

/// Builds the pond decomposition from a trace and its outlets.
pub fn decompose(trace: &InvasionTrace, outlets: &[OutletRecord], buffer: u32) -> Result<PondDecomposition, OutletError> {
    let mut prev = 0u64;
    for o in outlets {
        let entry = trace
            .entries
            .get((o.step as usize).wrapping_sub(1))
            .ok_or_else(|| OutletError::Inconsistent(format!("step {} outside the trace", o.step)))?;
        if entry.edge != o.edge || entry.weight.to_bits() != o.weight.to_bits() {
            return Err(OutletError::Inconsistent(format!("step {} does not carry edge {}", o.step, o.edge)));
        }
        if o.step <= prev {
            return Err(OutletError::Inconsistent("outlets not in step order".into()));
        }
        prev = o.step;
    }
    let radii_before = trace.radii_before();
    let mut pond_of_step = vec![None; trace.entries.len()];
    let mut pond_sizes = Vec::with_capacity(outlets.len());
    let mut radii = Vec::with_capacity(outlets.len());
    let mut start = 0usize;
    for (k, o) in outlets.iter().enumerate() {
        let idx = o.step as usize - 1;
        for slot in &mut pond_of_step[start..idx] {
            *slot = Some(k as u32 + 1);
        }
        pond_sizes.push((idx - start) as u64);
        radii.push(radii_before[idx]);
        start = idx + 1;
    }
    let certified_scale = certified_scale(&trace.config, trace.stop_reason, buffer);
    let reach = trace.entries.iter().map(|e| annulus_index(e.edge)).max().unwrap_or(0);
    Ok(PondDecomposition {
        outlets: outlets.to_vec(),
        pond_of_step,
        pond_sizes,
        radii,
        counts: annulus_counts(outlets.iter().map(|o| o.annulus_k), reach),
        certified_scale,
    })
}

/// Histogram of annulus indices over `k = 1..=len`.
pub fn annulus_counts(ks: impl Iterator<Item = u32>, len: u32) -> Vec<u64> {
    let mut counts = vec![0u64; len as usize];
    for k in ks {
        if k as usize > counts.len() {
            counts.resize(k as usize, 0);
        }
        counts[k as usize - 1] += 1;
    }
    counts
}

impl PondDecomposition {
    fn check_certified(&self, n: u32) -> Result<(), OutletError> {
        match self.certified_scale {
            Some(c) if n <= c => Ok(()),
            c => Err(OutletError::Uncertified { requested: n, certified: c }),
        }
    }

    pub fn count(&self, k: u32) -> u64 {
        self.counts.get(k as usize - 1).copied().unwrap_or(0)
    }

    /// `O(n) = Σ_{k<=n} O_k`.
    pub fn cumulative_counts(&self, n: u32) -> Result<u64, OutletError> {
        if n == 0 {
            return Ok(0);
        }
        self.check_certified(n)?;
        Ok((1..=n).map(|k| self.count(k)).sum())
    }

    /// `O(1), ..., O(certified scale)`.
    pub fn cumulative(&self) -> Vec<u64> {
        let c = self.certified_scale.unwrap_or(0);
        (1..=c)
            .scan(0u64, |acc, k| {
                *acc += self.count(k);
                Some(*acc)
            })
            .collect()
    }

    /// `Q_n = min{k : O(k) >= n}` within the certified region.
    pub fn q_index(&self, n: u64) -> Result<u32, OutletError> {
        if n == 0 {
            return Ok(0);
        }
        let cum = self.cumulative();
        match cum.iter().position(|&o| o >= n) {
            Some(i) => Ok(i as u32 + 1),
            None => Err(OutletError::InsufficientData { needed: n, available: cum.last().copied().unwrap_or(0) }),
        }
    }

    /// Outlets with annulus index in `(n, n + m]`.
    pub fn count_in_window(&self, n: u32, m: u32) -> Result<u64, OutletError> {
        self.check_certified(n + m)?;
        Ok((n + 1..=n + m).map(|k| self.count(k)).sum())
    }

    /// `(f(n), g(n))`: the largest certified outlet weight with both endpoints
    /// outside `B(n)`, and the smallest outlet weight inside `B(n)` (0 when
    /// there is none).
    pub fn weight_extremes(&self, n: u32) -> (Option<f64>, f64) {
        let inside = Region::ball(n);
        let certified_radius = self.certified_scale.map(|c| 1u64 << c);
        let f = self
            .outlets
            .iter()
            .filter(|o| o.certified && certified_radius.is_some_and(|r| o.edge.max_norm() as u64 <= r))
            .filter(|o| o.edge.a.chebyshev() > n && o.edge.b().chebyshev() > n)
            .map(|o| o.weight)
            .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))));
        let g = self
            .outlets
            .iter()
            .filter(|o| inside.contains_edge(o.edge))
            .map(|o| o.weight)
            .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.min(w))))
            .unwrap_or(0.0);
        (f, g)
    }

    /// Writes the outlet rows of the decomposition dump.
    pub fn write_outlets_csv<W: Write>(&self, mut w: W, replica: u64) -> io::Result<()> {
        for (i, o) in self.outlets.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{:.16e},{},{}",
                replica,
                i + 1,
                o.step,
                o.edge,
                o.weight,
                o.annulus_k,
                o.certified
            )?;
        }
        Ok(())
    }
}

pub const OUTLETS_CSV_HEADER: &str = "replica,outlet_index,step,edge,weight,annulus_k,certified";
pub const COUNTS_CSV_HEADER: &str = "replica,k,O_k";

/// `Õ_k`: outlets above `p_c` in annulus `k` of the truncated process
/// `G(k-1, 1, floor(m/2) - 1)`.
pub fn surrogate_counts<W: WeightSource>(weights: &W, k: u32, m: u32) -> Result<u64, InvasionError> {
    if k < 1 || m < 4 {
        return Err(InvasionError::InvalidConfig(format!("surrogate needs k >= 1 and m >= 4, got k={k} m={m}")));
    }
    let cfg = InvasionConfig::truncated(k - 1, 1, m / 2 - 1)?;
    let trace = crate::invasion::invade(&cfg, weights)?;
    Ok(extract_outlets(&trace, P_C).iter().filter(|o| o.annulus_k == k).count() as u64)
}
