//! Sparse parity-check matrices and progressive-edge-growth construction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Parity-check matrix `H` (m × n) stored twice: checks per variable
/// (column order) and variables per check (row order).
///
/// Stored in both orientations (compressed columns and compressed rows).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    col_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    row_ptr: Vec<u32>,
    row_idx: Vec<u32>,
}

impl LdpcCode {
    /// Builds a code from the check indices of each variable node.
    pub fn from_columns(m: usize, columns: &[Vec<u32>]) -> Result<Self> {
        let n = columns.len();
        if n == 0 || m == 0 || m >= n {
            return Err(Error::Code(format!("need 0 < m < n, got n={n} m={m}")));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut row_deg = vec![0u32; m];
        col_ptr.push(0u32);
        for (v, col) in columns.iter().enumerate() {
            if col.len() < 2 {
                return Err(Error::Code(format!("variable {v} has degree {} (< 2)", col.len())));
            }
            let mut sorted = col.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Code(format!("variable {v} has a repeated check")));
            }
            for &c in &sorted {
                if c as usize >= m {
                    return Err(Error::Code(format!("variable {v} refers to check {c} >= m={m}")));
                }
                row_deg[c as usize] += 1;
            }
            col_idx.extend_from_slice(&sorted);
            col_ptr.push(col_idx.len() as u32);
        }
        if let Some(c) = row_deg.iter().position(|&d| d == 0) {
            return Err(Error::Code(format!("check {c} has no variables")));
        }
        let mut row_ptr = Vec::with_capacity(m + 1);
        row_ptr.push(0u32);
        for &d in &row_deg {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill: Vec<u32> = row_ptr[..m].to_vec();
        let mut row_idx = vec![0u32; col_idx.len()];
        for v in 0..n {
            for e in col_ptr[v]..col_ptr[v + 1] {
                let c = col_idx[e as usize] as usize;
                let slot = fill[c] as usize;
                row_idx[slot] = v as u32;
                fill[c] += 1;
            }
        }
        Ok(Self { n, m, col_ptr, col_idx, row_ptr, row_idx })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn rate(&self) -> f64 {
        (self.n - self.m) as f64 / self.n as f64
    }

    /// Checks attached to variable `v`.
    pub fn column(&self, v: usize) -> &[u32] {
        &self.col_idx[self.col_ptr[v] as usize..self.col_ptr[v + 1] as usize]
    }

    /// Variables attached to check `c`.
    pub fn row(&self, c: usize) -> &[u32] {
        &self.row_idx[self.row_ptr[c] as usize..self.row_ptr[c + 1] as usize]
    }

    /// All rows back to back; row `c` starts at `row_offsets()[c]`.
    pub(crate) fn row_indices(&self) -> &[u32] {
        &self.row_idx
    }

    pub(crate) fn row_offsets(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn variable_degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.col_ptr.windows(2).map(|w| (w[1] - w[0]) as usize)
    }

    pub fn check_degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.row_ptr.windows(2).map(|w| (w[1] - w[0]) as usize)
    }

    /// `H · bits` over GF(2). Bits are 0/1 bytes.
    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        (0..self.m).map(|c| self.row(c).iter().fold(0u8, |s, &v| s ^ (bits[v as usize] & 1))).collect()
    }

    pub fn satisfies(&self, bits: &[u8], syndrome: &[u8]) -> bool {
        (0..self.m).all(|c| self.row(c).iter().fold(0u8, |s, &v| s ^ (bits[v as usize] & 1)) == syndrome[c])
    }
}

/// Variable-node degree distribution, as node fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeProfile {
    pub fractions: Vec<(u32, f64)>,
}

impl DegreeProfile {
    /// Profile used for the rate-0.1 code.
    pub fn rate_tenth() -> Self {
        Self { fractions: vec![(2, 0.55), (3, 0.25), (4, 0.1), (16, 0.1)] }
    }

    /// Degrees for `n` variables, sorted ascending. Rounding remainders go
    /// to the last entry.
    pub fn degrees(&self, n: usize) -> Result<Vec<u32>> {
        let total: f64 = self.fractions.iter().map(|f| f.1).sum();
        if self.fractions.is_empty() || !((total - 1.0).abs() < 1e-9) {
            return Err(Error::Code(format!("degree fractions sum to {total}")));
        }
        let mut sorted = self.fractions.clone();
        sorted.sort_by_key(|f| f.0);
        if sorted[0].0 < 2 || sorted.iter().any(|f| !(f.1 >= 0.0)) {
            return Err(Error::Code("degrees must be >= 2 with non-negative fractions".into()));
        }
        let mut out = Vec::with_capacity(n);
        for (i, &(d, f)) in sorted.iter().enumerate() {
            let count = if i + 1 == sorted.len() { n - out.len() } else { libm::round(f * n as f64) as usize };
            out.extend(core::iter::repeat_n(d, count.min(n - out.len())));
        }
        Ok(out)
    }
}

/// Limits on the breadth-first search that guards against short cycles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PegOptions {
    /// Check-node levels explored from the current variable.
    pub max_depth: u32,
    /// Stop expanding once this many checks have been reached.
    pub budget: usize,
}

impl Default for PegOptions {
    fn default() -> Self {
        Self { max_depth: 6, budget: 256 }
    }
}

/// Checks bucketed by current degree, for constant-time removal and
/// lowest-degree lookup.
struct DegreeBuckets {
    buckets: Vec<Vec<u32>>,
    pos: Vec<u32>,
    deg: Vec<u32>,
    min: usize,
}

impl DegreeBuckets {
    fn new(m: usize) -> Self {
        Self { buckets: vec![(0..m as u32).collect()], pos: (0..m as u32).collect(), deg: vec![0; m], min: 0 }
    }

    fn bump(&mut self, c: u32) {
        let d = self.deg[c as usize] as usize;
        let p = self.pos[c as usize] as usize;
        let b = &mut self.buckets[d];
        let last = *b.last().unwrap();
        b.swap_remove(p);
        if last != c {
            self.pos[last as usize] = p as u32;
        }
        if self.buckets.len() <= d + 1 {
            self.buckets.push(Vec::new());
        }
        self.pos[c as usize] = self.buckets[d + 1].len() as u32;
        self.buckets[d + 1].push(c);
        self.deg[c as usize] += 1;
        while self.buckets[self.min].is_empty() {
            self.min += 1;
        }
    }

    /// Lowest-degree check with `ok(c)`, scanning each bucket from a random
    /// offset.
    fn pick<R: Rng>(&self, rng: &mut R, ok: impl Fn(u32) -> bool) -> Option<u32> {
        for b in &self.buckets[self.min..] {
            if b.is_empty() {
                continue;
            }
            let start = rng.random_range(0..b.len());
            for i in 0..b.len() {
                let c = b[(start + i) % b.len()];
                if ok(c) {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// Progressive edge growth with a bounded neighbourhood search.
///
/// Variables are processed in ascending degree. Each new edge goes to the
/// lowest-degree check outside the explored neighbourhood of the variable;
/// when the neighbourhood covers every check, the farthest level is used
/// instead. Deterministic for a given seed.
pub fn peg(n: usize, m: usize, profile: &DegreeProfile, opts: PegOptions, seed: u64) -> Result<LdpcCode> {
    if m == 0 || m >= n {
        return Err(Error::Code(format!("need 0 < m < n, got n={n} m={m}")));
    }
    let degrees = profile.degrees(n)?;
    if degrees.iter().any(|&d| d as usize > m) {
        return Err(Error::Code(format!("variable degree exceeds m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<u32>> = degrees.iter().map(|&d| Vec::with_capacity(d as usize)).collect();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut buckets = DegreeBuckets::new(m);

    // Visit stamps avoid clearing per search.
    let mut check_mark = vec![0u32; m];
    let mut var_mark = vec![0u32; n];
    let mut stamp = 0u32;
    let mut frontier: Vec<u32> = Vec::new();
    let mut next: Vec<u32> = Vec::new();

    for v in 0..n {
        for k in 0..degrees[v] as usize {
            let chosen = if k == 0 {
                buckets.pick(&mut rng, |_| true).unwrap()
            } else {
                stamp += 1;
                let s = stamp;
                var_mark[v] = s;
                frontier.clear();
                for &c in &cols[v] {
                    check_mark[c as usize] = s;
                    frontier.push(c);
                }
                let mut reached = frontier.len();
                let mut farthest: Option<Vec<u32>> = None;
                for _ in 1..opts.max_depth {
                    next.clear();
                    for &c in &frontier {
                        for &u in &rows[c as usize] {
                            if var_mark[u as usize] == s {
                                continue;
                            }
                            var_mark[u as usize] = s;
                            for &c2 in &cols[u as usize] {
                                if check_mark[c2 as usize] != s {
                                    check_mark[c2 as usize] = s;
                                    next.push(c2);
                                }
                            }
                        }
                    }
                    if next.is_empty() {
                        break;
                    }
                    if reached + next.len() == m {
                        farthest = Some(next.clone());
                        break;
                    }
                    reached += next.len();
                    core::mem::swap(&mut frontier, &mut next);
                    if reached >= opts.budget {
                        break;
                    }
                }
                match farthest {
                    Some(level) => {
                        let min_deg = level.iter().map(|&c| buckets.deg[c as usize]).min().unwrap();
                        let ties: Vec<u32> = level.into_iter().filter(|&c| buckets.deg[c as usize] == min_deg).collect();
                        ties[rng.random_range(0..ties.len())]
                    }
                    None => buckets.pick(&mut rng, |c| check_mark[c as usize] != s).unwrap(),
                }
            };
            cols[v].push(chosen);
            rows[chosen as usize].push(v as u32);
            buckets.bump(chosen);
        }
    }
    LdpcCode::from_columns(m, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LdpcCode {
        // Columns of a 3 × 6 matrix.
        let cols = vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![0, 1, 2], vec![0, 2], vec![1, 2]];
        LdpcCode::from_columns(3, &cols).unwrap()
    }

    #[test]
    fn adjacency_is_consistent() {
        let h = small();
        assert_eq!(h.n_edges(), 13);
        assert!((h.rate() - 0.5).abs() < 1e-15);
        for c in 0..h.m() {
            let start = h.row_offsets()[c] as usize;
            assert_eq!(&h.row_indices()[start..start + h.row(c).len()], h.row(c));
            for &v in h.row(c) {
                assert!(h.column(v as usize).contains(&(c as u32)));
            }
        }
        assert_eq!(h.check_degrees().sum::<usize>(), h.variable_degrees().sum::<usize>());
    }

    #[test]
    fn syndrome_is_linear() {
        let h = small();
        let a = [1, 0, 1, 1, 0, 0];
        let b = [0, 1, 1, 0, 0, 1];
        let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let sa = h.syndrome(&a);
        let sb = h.syndrome(&b);
        let want: Vec<u8> = sa.iter().zip(&sb).map(|(x, y)| x ^ y).collect();
        assert_eq!(h.syndrome(&ab), want);
        assert!(h.satisfies(&ab, &want));
    }

    #[test]
    fn rejects_malformed() {
        assert!(LdpcCode::from_columns(2, &[vec![0], vec![0, 1], vec![0, 1]]).is_err());
        assert!(LdpcCode::from_columns(2, &[vec![0, 0], vec![0, 1], vec![0, 1]]).is_err());
        assert!(LdpcCode::from_columns(2, &[vec![0, 5], vec![0, 1], vec![0, 1]]).is_err());
        assert!(LdpcCode::from_columns(3, &[vec![0, 1], vec![0, 1], vec![0, 1], vec![0, 1]]).is_err());
    }

    #[test]
    fn profile_rounding() {
        let d = DegreeProfile::rate_tenth().degrees(1000).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.iter().filter(|&&x| x == 2).count(), 550);
        assert_eq!(d.iter().filter(|&&x| x == 16).count(), 100);
        assert!(DegreeProfile { fractions: vec![(1, 1.0)] }.degrees(10).is_err());
        assert!(DegreeProfile { fractions: vec![(2, 0.5)] }.degrees(10).is_err());
    }

    fn has_four_cycle(h: &LdpcCode) -> bool {
        for c in 0..h.m() {
            let row = h.row(c);
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    let shared = h.column(a as usize).iter().filter(|x| h.column(b as usize).contains(x)).count();
                    if shared > 1 {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn peg_matches_profile_and_avoids_four_cycles() {
        let h = peg(2000, 1800, &DegreeProfile::rate_tenth(), PegOptions::default(), 5).unwrap();
        assert_eq!((h.n(), h.m()), (2000, 1800));
        assert!((h.rate() - 0.1).abs() < 1e-12);
        assert!(h.variable_degrees().all(|d| d >= 2));
        let degs: Vec<usize> = h.check_degrees().collect();
        let (lo, hi) = (*degs.iter().min().unwrap(), *degs.iter().max().unwrap());
        assert!(hi - lo <= 2, "check degrees {lo}..{hi}");
        assert!(!has_four_cycle(&h));
        assert_eq!(h, peg(2000, 1800, &DegreeProfile::rate_tenth(), PegOptions::default(), 5).unwrap());
    }
}
