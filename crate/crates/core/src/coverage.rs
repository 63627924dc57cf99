//! Edge-coverage bitmaps, the virgin map, and the TF-IDF weight map.
//!
//! A [`CoverageMap`] is the per-execution AFL-style bitmap: one saturating
//! `u8` counter per edge. The [`VirginMap`] accumulates every edge ever seen
//! by a retained execution, and its population count is the global unique
//! edge count `N`. The [`WeightMap`] keeps per-edge document frequencies
//! (how many retained seeds cover the edge) and the momentum-smoothed
//! inverse-frequency weights used to score coverage.

use std::io::{Read, Write};

use crate::error::{CovrlError, Result};

pub const MIN_MAP_EXPONENT: u32 = 8;
pub const MAX_MAP_EXPONENT: u32 = 24;
pub const DEFAULT_MAP_EXPONENT: u32 = 16;

pub const STATE_MAGIC: [u8; 4] = *b"CVRL";
pub const STATE_VERSION: u32 = 1;
/// magic + version + exponent + cycle + N
pub const STATE_HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

pub fn check_exponent(exponent: u32) -> Result<()> {
    if (MIN_MAP_EXPONENT..=MAX_MAP_EXPONENT).contains(&exponent) {
        Ok(())
    } else {
        Err(CovrlError::config(format!(
            "map size exponent {exponent} outside {MIN_MAP_EXPONENT}..={MAX_MAP_EXPONENT}"
        )))
    }
}

/// Logarithm used for the inverse-frequency weights and the summed reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = CovrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "ln" | "natural" => Ok(LogBase::Natural),
            "2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            other => Err(CovrlError::config(format!("unknown log base {other:?}"))),
        }
    }
}

impl std::fmt::Display for LogBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LogBase::Natural => "e",
            LogBase::Two => "2",
            LogBase::Ten => "10",
        })
    }
}

/// Hit counters for one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMap {
    counters: Vec<u8>,
    exponent: u32,
}

impl CoverageMap {
    pub fn new(exponent: u32) -> Result<Self> {
        check_exponent(exponent)?;
        Ok(CoverageMap {
            counters: vec![0; 1usize << exponent],
            exponent,
        })
    }

    pub fn from_bytes(exponent: u32, bytes: Vec<u8>) -> Result<Self> {
        check_exponent(exponent)?;
        let expected = 1usize << exponent;
        if bytes.len() != expected {
            return Err(CovrlError::SizeMismatch {
                expected,
                actual: bytes.len(),
            });
        }
        Ok(CoverageMap {
            counters: bytes,
            exponent,
        })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    pub fn counters(&self) -> &[u8] {
        &self.counters
    }

    pub fn counters_mut(&mut self) -> &mut [u8] {
        &mut self.counters
    }

    /// Saturating increment of one edge counter; the id is folded into the map.
    pub fn hit(&mut self, edge: u32) {
        let idx = edge as usize & (self.counters.len() - 1);
        self.counters[idx] = self.counters[idx].saturating_add(1);
    }

    pub fn clear(&mut self) {
        self.counters.fill(0);
    }

    /// Indices with a nonzero counter, ascending. Hit counts collapse to
    /// presence: an edge taken 200 times weighs the same as one taken once.
    pub fn unique_coverage(&self) -> Vec<u32> {
        self.counters
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// Free-function form of [`CoverageMap::unique_coverage`].
pub fn unique_coverage(cov: &CoverageMap) -> Vec<u32> {
    cov.unique_coverage()
}

/// Global accumulator of every edge covered by a retained execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirginMap {
    seen: Vec<u64>,
    unique_count: u64,
    exponent: u32,
}

impl VirginMap {
    pub fn new(exponent: u32) -> Result<Self> {
        check_exponent(exponent)?;
        let words = (1usize << exponent).div_ceil(64);
        Ok(VirginMap {
            seen: vec![0; words],
            unique_count: 0,
            exponent,
        })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn len(&self) -> usize {
        1usize << self.exponent
    }

    pub fn is_empty(&self) -> bool {
        self.unique_count == 0
    }

    /// `N`: the number of distinct edges seen so far.
    pub fn unique_count(&self) -> u64 {
        self.unique_count
    }

    pub fn contains(&self, edge: u32) -> bool {
        let i = edge as usize;
        i < self.len() && self.seen[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn popcount(&self) -> u64 {
        self.seen.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn seen_edges(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&i| self.contains(i)).collect()
    }

    /// Merge one execution's unique coverage; returns the edges that were new.
    pub fn accumulate(&mut self, cov: &CoverageMap) -> Result<Vec<u32>> {
        if cov.len() != self.len() {
            return Err(CovrlError::SizeMismatch {
                expected: self.len(),
                actual: cov.len(),
            });
        }
        let mut newly = Vec::new();
        for (i, &c) in cov.counters().iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (word, bit) = (i / 64, 1u64 << (i % 64));
            if self.seen[word] & bit == 0 {
                self.seen[word] |= bit;
                newly.push(i as u32);
            }
        }
        self.unique_count += newly.len() as u64;
        Ok(newly)
    }

    /// Like [`accumulate`](Self::accumulate) but without mutating; used to
    /// test interestingness before deciding to retain.
    pub fn would_add(&self, edges: &[u32]) -> bool {
        edges.iter().any(|&e| !self.contains(e))
    }

    fn mark(&mut self, edge: usize) {
        let (word, bit) = (edge / 64, 1u64 << (edge % 64));
        if self.seen[word] & bit == 0 {
            self.seen[word] |= bit;
            self.unique_count += 1;
        }
    }
}

/// Per-edge document frequencies and inverse-frequency weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    df: Vec<u32>,
    idf: Vec<f64>,
    cycle: u64,
    exponent: u32,
}

impl WeightMap {
    /// All-zero weights at cycle 0.
    pub fn new(exponent: u32) -> Result<Self> {
        check_exponent(exponent)?;
        let m = 1usize << exponent;
        Ok(WeightMap {
            df: vec![0; m],
            idf: vec![0.0; m],
            cycle: 0,
            exponent,
        })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    pub fn df(&self) -> &[u32] {
        &self.df
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Count one retained seed against every edge it covers.
    pub fn register_seed_coverage(&mut self, edges: &[u32]) -> Result<()> {
        let m = self.df.len();
        if let Some(&bad) = edges.iter().find(|&&e| e as usize >= m) {
            return Err(CovrlError::config(format!(
                "edge index {bad} outside map of size {m}"
            )));
        }
        for &e in edges {
            self.df[e as usize] = self.df[e as usize].saturating_add(1);
        }
        Ok(())
    }

    /// Current-cycle candidate weights `(1/sqrt(M)) * log(N / (1 + df[i]))`.
    ///
    /// Does not touch the stored weights; fold the result in with
    /// [`update_with_momentum`](Self::update_with_momentum). Values are
    /// negative for edges with `df[i] >= N`.
    pub fn compute_idf(&self, virgin: &VirginMap, base: LogBase) -> Result<Vec<f64>> {
        if virgin.len() != self.len() {
            return Err(CovrlError::SizeMismatch {
                expected: self.len(),
                actual: virgin.len(),
            });
        }
        let n = virgin.unique_count();
        if n == 0 {
            return Err(CovrlError::NotInitialized);
        }
        let m = self.len();
        Ok(self
            .df
            .iter()
            .map(|&df| idf_weight(m, n, df, base))
            .collect())
    }

    /// `idf := alpha * idf + (1 - alpha) * fresh`, then advance the cycle.
    pub fn update_with_momentum(&mut self, fresh: &[f64], alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CovrlError::config(format!(
                "momentum rate {alpha} outside [0, 1]"
            )));
        }
        if fresh.len() != self.idf.len() {
            return Err(CovrlError::SizeMismatch {
                expected: self.idf.len(),
                actual: fresh.len(),
            });
        }
        for (old, &new) in self.idf.iter_mut().zip(fresh) {
            *old = momentum_blend(*old, new, alpha);
        }
        self.cycle += 1;
        Ok(())
    }
}

/// Inverse coverage frequency of one edge: `(1/sqrt(M)) * log(N / (1 + df))`.
pub fn idf_weight(map_len: usize, unique_count: u64, df: u32, base: LogBase) -> f64 {
    let scale = 1.0 / (map_len as f64).sqrt();
    scale * base.log(unique_count as f64 / (1.0 + f64::from(df)))
}

/// Convex blend used by the momentum update. The degenerate rates return
/// one side verbatim so that `alpha = 1` and `alpha = 0` are exact, and the
/// result is clamped so rounding never leaves `[min, max]` of the inputs.
pub fn momentum_blend(old: f64, fresh: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        old
    } else if alpha == 0.0 {
        fresh
    } else {
        (alpha * old + (1.0 - alpha) * fresh).clamp(old.min(fresh), old.max(fresh))
    }
}

/// Writes the campaign-state file: a fixed header followed by `df` as
/// little-endian `u32` and `idf` as little-endian binary64.
pub fn write_state<W: Write>(out: &mut W, weights: &WeightMap, virgin: &VirginMap) -> Result<()> {
    if weights.exponent() != virgin.exponent() {
        return Err(CovrlError::SizeMismatch {
            expected: weights.len(),
            actual: virgin.len(),
        });
    }
    let m = weights.len();
    let mut buf = Vec::with_capacity(STATE_HEADER_LEN + m * 12);
    buf.extend_from_slice(&STATE_MAGIC);
    buf.extend_from_slice(&STATE_VERSION.to_le_bytes());
    buf.extend_from_slice(&weights.exponent().to_le_bytes());
    buf.extend_from_slice(&weights.cycle().to_le_bytes());
    buf.extend_from_slice(&virgin.unique_count().to_le_bytes());
    for df in weights.df() {
        buf.extend_from_slice(&df.to_le_bytes());
    }
    for idf in weights.idf() {
        buf.extend_from_slice(&idf.to_bits().to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a campaign-state file written by [`write_state`].
///
/// The virgin bits are rebuilt from `df`: every edge seen by a retained seed
/// has a nonzero document frequency, so the file stores only `N` and the
/// reader checks that it matches.
pub fn read_state<R: Read>(input: &mut R) -> Result<(WeightMap, VirginMap)> {
    let mut header = [0u8; STATE_HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| CovrlError::CorruptState(format!("short header: {e}")))?;
    if header[0..4] != STATE_MAGIC {
        return Err(CovrlError::CorruptState("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != STATE_VERSION {
        return Err(CovrlError::CorruptState(format!(
            "unsupported format version {version}"
        )));
    }
    let exponent = u32::from_le_bytes(header[8..12].try_into().unwrap());
    check_exponent(exponent).map_err(|e| CovrlError::CorruptState(e.to_string()))?;
    let cycle = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let n = u64::from_le_bytes(header[20..28].try_into().unwrap());

    let m = 1usize << exponent;
    let mut body = vec![0u8; m * 12];
    input
        .read_exact(&mut body)
        .map_err(|e| CovrlError::CorruptState(format!("truncated body: {e}")))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(CovrlError::CorruptState("trailing bytes after idf".into()));
    }
    let (df_bytes, idf_bytes) = body.split_at(m * 4);
    let df: Vec<u32> = df_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let idf: Vec<f64> = idf_bytes
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
        .collect();

    let mut virgin = VirginMap::new(exponent)?;
    for (i, _) in df.iter().enumerate().filter(|(_, &d)| d > 0) {
        virgin.mark(i);
    }
    if virgin.unique_count() != n {
        return Err(CovrlError::CorruptState(format!(
            "header N = {n} but {} edges have nonzero df",
            virgin.unique_count()
        )));
    }
    let weights = WeightMap {
        df,
        idf,
        cycle,
        exponent,
    };
    Ok((weights, virgin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov_with(exponent: u32, hits: &[(u32, u8)]) -> CoverageMap {
        let mut cov = CoverageMap::new(exponent).unwrap();
        for &(i, c) in hits {
            cov.counters_mut()[i as usize] = c;
        }
        cov
    }

    #[test]
    fn unique_coverage_projects_nonzero_slots() {
        let cov = cov_with(8, &[(5, 3), (9, 1)]);
        assert_eq!(cov.unique_coverage(), vec![5, 9]);
        assert!(CoverageMap::new(8).unwrap().unique_coverage().is_empty());
    }

    #[test]
    fn counters_saturate() {
        let mut cov = CoverageMap::new(8).unwrap();
        for _ in 0..300 {
            cov.hit(0);
        }
        assert_eq!(cov.counters()[0], 255);
        assert_eq!(cov.unique_coverage(), vec![0]);
    }

    #[test]
    fn exponent_bounds() {
        assert!(CoverageMap::new(7).is_err());
        assert!(CoverageMap::new(25).is_err());
        assert_eq!(CoverageMap::new(16).unwrap().len(), 65536);
        assert_eq!(CoverageMap::new(17).unwrap().len(), 131072);
    }

    #[test]
    fn accumulate_reports_new_edges() {
        let mut virgin = VirginMap::new(8).unwrap();
        let newly = virgin.accumulate(&cov_with(8, &[(1, 1), (2, 4)])).unwrap();
        assert_eq!(newly, vec![1, 2]);
        assert_eq!(virgin.unique_count(), 2);
        let newly = virgin.accumulate(&cov_with(8, &[(2, 1), (3, 1)])).unwrap();
        assert_eq!(newly, vec![3]);
        assert_eq!(virgin.unique_count(), 3);
        let again = virgin.accumulate(&cov_with(8, &[(2, 1), (3, 1)])).unwrap();
        assert!(again.is_empty());
    }

    #[test]
    fn accumulate_size_mismatch() {
        let mut virgin = VirginMap::new(8).unwrap();
        let err = virgin.accumulate(&CoverageMap::new(9).unwrap()).unwrap_err();
        assert!(matches!(err, CovrlError::SizeMismatch { .. }));
    }

    #[test]
    fn idf_examples() {
        // M = 64 is below the configurable minimum, so exercise the formula
        // through a map whose scale we undo: check against M = 256 instead
        // and against the 1/8 scale by hand.
        let mut weights = WeightMap::new(8).unwrap();
        let mut virgin = VirginMap::new(8).unwrap();
        virgin.accumulate(&cov_with(8, &[(0, 1), (1, 1), (2, 1), (3, 1)])).unwrap();
        weights.register_seed_coverage(&[0]).unwrap();
        weights.register_seed_coverage(&[1, 1, 1]).unwrap();
        let idf = weights.compute_idf(&virgin, LogBase::Natural).unwrap();
        let scale = 1.0 / 16.0;
        assert_eq!(idf[0], scale * (4.0f64 / 2.0).ln());
        assert_eq!(idf[1], 0.0);
        assert!(idf[2] > idf[0]);
    }

    #[test]
    fn idf_weight_small_map() {
        // Reference values from a 50-digit evaluation of (1/8) ln(N / (1 + df)).
        let w = idf_weight(64, 4, 1, LogBase::Natural);
        assert!((w - 0.086643397569993163677).abs() < 1e-15);
        assert_eq!(idf_weight(64, 4, 3, LogBase::Natural), 0.0);
        let neg = idf_weight(64, 2, 3, LogBase::Natural);
        assert!((neg - -0.086643397569993163677).abs() < 1e-15);
    }

    #[test]
    fn idf_requires_coverage() {
        let weights = WeightMap::new(8).unwrap();
        let virgin = VirginMap::new(8).unwrap();
        assert!(matches!(
            weights.compute_idf(&virgin, LogBase::Natural),
            Err(CovrlError::NotInitialized)
        ));
    }

    #[test]
    fn momentum_examples() {
        let mut weights = WeightMap::new(8).unwrap();
        let ones = vec![1.0; 256];
        weights.update_with_momentum(&ones, 0.0).unwrap();
        assert_eq!(weights.idf()[7], 1.0);
        assert_eq!(weights.cycle(), 1);
        let halves = vec![0.5; 256];
        weights.update_with_momentum(&halves, 0.6).unwrap();
        assert!((weights.idf()[7] - 0.8).abs() < 1e-15);
        let before = weights.idf().to_vec();
        weights.update_with_momentum(&halves, 1.0).unwrap();
        assert_eq!(weights.idf(), &before[..]);
        assert!(weights.update_with_momentum(&halves, 1.5).is_err());
        assert!(weights.update_with_momentum(&halves, -0.1).is_err());
    }

    #[test]
    fn register_counts_per_seed() {
        let mut weights = WeightMap::new(8).unwrap();
        weights.register_seed_coverage(&[7]).unwrap();
        assert_eq!(weights.df()[7], 1);
        weights.register_seed_coverage(&[7]).unwrap();
        assert_eq!(weights.df()[7], 2);
        assert!(weights.register_seed_coverage(&[256]).is_err());
    }

    #[test]
    fn state_round_trip_is_bit_exact() {
        let mut weights = WeightMap::new(8).unwrap();
        let mut virgin = VirginMap::new(8).unwrap();
        let cov = cov_with(8, &[(3, 1), (40, 9), (255, 1)]);
        virgin.accumulate(&cov).unwrap();
        weights.register_seed_coverage(&cov.unique_coverage()).unwrap();
        let fresh = weights.compute_idf(&virgin, LogBase::Natural).unwrap();
        weights.update_with_momentum(&fresh, 0.6).unwrap();

        let mut bytes = Vec::new();
        write_state(&mut bytes, &weights, &virgin).unwrap();
        assert_eq!(bytes.len(), STATE_HEADER_LEN + 256 * 12);
        assert_eq!(&bytes[0..4], b"CVRL");
        let (w2, v2) = read_state(&mut bytes.as_slice()).unwrap();
        assert_eq!(v2, virgin);
        assert_eq!(w2.df(), weights.df());
        assert!(w2
            .idf()
            .iter()
            .zip(weights.idf())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut again = Vec::new();
        write_state(&mut again, &w2, &v2).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn state_rejects_corruption() {
        let weights = WeightMap::new(8).unwrap();
        let virgin = VirginMap::new(8).unwrap();
        let mut bytes = Vec::new();
        write_state(&mut bytes, &weights, &virgin).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            read_state(&mut bad_magic.as_slice()),
            Err(CovrlError::CorruptState(_))
        ));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(read_state(&mut &truncated[..]).is_err());
        let mut wrong_n = bytes.clone();
        wrong_n[20] = 5;
        assert!(read_state(&mut wrong_n.as_slice()).is_err());
    }
}
