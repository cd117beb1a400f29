//! MinHash signatures with LSH banding for near-duplicate grouping.
//!
//! Shingles are windows of `shingle_width` lowercase whitespace tokens. Each
//! permutation is a universal hash `(a * x + b) mod (2^61 - 1)` over the
//! 64-bit FNV-1a hash of the shingle. Pairs that share at least one band
//! bucket and whose signature agreement reaches `threshold` are merged with
//! union-find; each resulting group keeps its lowest `seed_id`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{CurationError, SeedFunction};
use crate::rng;

const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupParams {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_num_perm")]
    pub num_perm: usize,
    #[serde(default = "default_shingle_width")]
    pub shingle_width: usize,
    /// Band count; `None` picks the layout whose S-curve threshold
    /// `(1/b)^(1/r)` sits nearest `threshold`.
    #[serde(default)]
    pub bands: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    0.5
}
fn default_num_perm() -> usize {
    256
}
fn default_shingle_width() -> usize {
    5
}

impl Default for DedupParams {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            num_perm: default_num_perm(),
            shingle_width: default_shingle_width(),
            bands: None,
            seed: 0,
        }
    }
}

impl DedupParams {
    pub fn validate(&self) -> Result<(), CurationError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(CurationError::InvalidDedup(format!(
                "threshold {} not in (0, 1]",
                self.threshold
            )));
        }
        if self.num_perm == 0 || self.shingle_width == 0 {
            return Err(CurationError::InvalidDedup(
                "num_perm and shingle_width must be positive".into(),
            ));
        }
        if let Some(b) = self.bands {
            if b == 0 || !self.num_perm.is_multiple_of(b) {
                return Err(CurationError::InvalidDedup(format!(
                    "{b} bands do not divide {} permutations",
                    self.num_perm
                )));
            }
        }
        Ok(())
    }

    /// `(bands, rows)` used for LSH.
    pub fn band_layout(&self) -> (usize, usize) {
        if let Some(b) = self.bands {
            return (b, self.num_perm / b);
        }
        let mut best = (1, self.num_perm);
        let mut best_err = f64::INFINITY;
        for b in 1..=self.num_perm {
            if !self.num_perm.is_multiple_of(b) {
                continue;
            }
            let r = self.num_perm / b;
            let err = ((1.0 / b as f64).powf(1.0 / r as f64) - self.threshold).abs();
            if err < best_err {
                best_err = err;
                best = (b, r);
            }
        }
        best
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct MinHasher {
    params: DedupParams,
    coefficients: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(params: DedupParams) -> Self {
        let mut r = rng::seeded(params.seed);
        let coefficients = (0..params.num_perm)
            .map(|_| {
                (
                    r.random_range(1..MERSENNE_61),
                    r.random_range(0..MERSENNE_61),
                )
            })
            .collect();
        Self {
            params,
            coefficients,
        }
    }

    pub fn params(&self) -> &DedupParams {
        &self.params
    }

    /// Hashes of the distinct shingles of `text`. Texts shorter than the
    /// shingle width form a single shingle; token-free texts have none.
    pub fn shingle_hashes(&self, text: &str) -> Vec<u64> {
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered.split_whitespace().collect();
        if tokens.is_empty() {
            return Vec::new();
        }
        let width = self.params.shingle_width.min(tokens.len());
        let mut hashes: Vec<u64> = tokens
            .windows(width)
            .map(|w| fnv1a(w.join(" ").as_bytes()))
            .collect();
        hashes.sort_unstable();
        hashes.dedup();
        hashes
    }

    pub fn signature(&self, text: &str) -> Vec<u64> {
        let shingles = self.shingle_hashes(text);
        self.coefficients
            .iter()
            .map(|&(a, b)| {
                shingles
                    .iter()
                    .map(|&x| {
                        let v = (u128::from(a) * u128::from(x % MERSENNE_61) + u128::from(b))
                            % u128::from(MERSENNE_61);
                        v as u64
                    })
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }
}

/// Fraction of signature positions that agree.
pub fn estimated_jaccard(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Duplicate groups over arbitrary texts, as lists of input indices. Every
/// index appears in exactly one group; groups are ordered by first member.
pub fn group_texts(texts: &[&str], params: &DedupParams) -> Vec<Vec<usize>> {
    let hasher = MinHasher::new(params.clone());
    let signatures: Vec<Vec<u64>> = texts.iter().map(|t| hasher.signature(t)).collect();
    group_signatures(&signatures, params)
}

pub fn group_signatures(signatures: &[Vec<u64>], params: &DedupParams) -> Vec<Vec<usize>> {
    let (bands, rows) = params.band_layout();
    let mut uf = UnionFind::new(signatures.len());
    for band in 0..bands {
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for (i, sig) in signatures.iter().enumerate() {
            buckets
                .entry(&sig[band * rows..(band + 1) * rows])
                .or_default()
                .push(i);
        }
        for members in buckets.values() {
            for (k, &i) in members.iter().enumerate() {
                for &j in &members[k + 1..] {
                    if uf.find(i) != uf.find(j)
                        && estimated_jaccard(&signatures[i], &signatures[j]) >= params.threshold
                    {
                        uf.union(i, j);
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root: HashMap<usize, usize> = HashMap::new();
    for i in 0..signatures.len() {
        let root = uf.find(i);
        let slot = *index_of_root.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(i);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub kept: Vec<SeedFunction>,
    /// `(kept seed_id, removed seed_id)` for every dropped duplicate.
    pub removed: Vec<(String, String)>,
    pub groups: usize,
    pub max_group_size: usize,
}

/// Keeps one function per near-duplicate group (the lowest `seed_id`),
/// preserving the input order of the survivors.
pub fn near_dedup(
    fns: Vec<SeedFunction>,
    params: &DedupParams,
) -> Result<DedupOutcome, CurationError> {
    params.validate()?;
    let texts: Vec<&str> = fns.iter().map(|f| f.rendered.as_str()).collect();
    let groups = group_texts(&texts, params);
    let mut keep = vec![false; fns.len()];
    let mut removed = Vec::new();
    for group in &groups {
        let rep = *group
            .iter()
            .min_by(|&&a, &&b| fns[a].seed_id.cmp(&fns[b].seed_id))
            .expect("groups are non-empty");
        keep[rep] = true;
        for &i in group {
            if i != rep {
                removed.push((fns[rep].seed_id.clone(), fns[i].seed_id.clone()));
            }
        }
    }
    let max_group_size = groups.iter().map(Vec::len).max().unwrap_or(0);
    let group_count = groups.len();
    let kept = fns
        .into_iter()
        .zip(keep)
        .filter_map(|(f, k)| k.then_some(f))
        .collect();
    Ok(DedupOutcome {
        kept,
        removed,
        groups: group_count,
        max_group_size,
    })
}
