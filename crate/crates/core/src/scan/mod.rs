//! Permutation-tested spatial scan over a candidate pool.

mod likelihood;

pub use likelihood::*;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{Candidate, CandidatePool};
use crate::error::{Error, Result};
use crate::zoning::CellIndex;

/// Binary predictions indexed by dense object index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<u8>,
    positives: u32,
}

impl LabelVector {
    pub fn new(labels: Vec<bool>) -> Self {
        let labels: Vec<u8> = labels.into_iter().map(u8::from).collect();
        let positives = labels.iter().map(|&l| l as u32).sum();
        Self { labels, positives }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> u32 {
        self.positives
    }

    pub fn get(&self, object: u32) -> bool {
        self.labels[object as usize] == 1
    }

    /// Labels as `0`/`1` bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.labels
    }
}

impl FromIterator<bool> for LabelVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub alpha: f64,
    pub n_sims: u32,
    pub seed: u64,
    pub direction: Direction,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            n_sims: 999,
            seed: 0,
            direction: Direction::TwoSided,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("scan.alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_sims == 0 {
            return Err(Error::config("scan.n_sims must be at least 1"));
        }
        if 1.0 / (self.n_sims as f64 + 1.0) > self.alpha {
            log::warn!(
                "with n_sims = {} the smallest p-value exceeds alpha = {}; rejection is impossible",
                self.n_sims,
                self.alpha
            );
        }
        Ok(())
    }
}

/// A candidate whose own rank p-value does not exceed alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeCandidate {
    /// Position of the candidate in the pool's iteration order.
    pub candidate: usize,
    pub grid: u32,
    pub cells: Vec<CellIndex>,
    pub support: usize,
    pub t_c: f64,
    pub p_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub t_obs: f64,
    #[serde(default, skip_serializing)]
    pub null: Vec<f64>,
    pub p_hat: f64,
    pub rejected: bool,
    pub alpha: f64,
    pub n_sims: u32,
    pub seed: u64,
    pub extreme: Vec<ExtremeCandidate>,
    /// Dense indices of the objects covered by extreme candidates, ascending.
    pub u_hat: Vec<u32>,
}

/// A candidate pool prepared for repeated evaluation: identical tidsets are
/// stored once and candidates covering every object are dropped.
#[derive(Debug, Clone)]
pub struct ScanIndex {
    n_objects: u32,
    offsets: Vec<usize>,
    members: Vec<u32>,
    /// For each pool candidate, its unique tidset or `None` when skipped.
    of_candidate: Vec<Option<u32>>,
    meta: Vec<(u32, Vec<CellIndex>)>,
}

impl ScanIndex {
    /// Indexes `pool` for a population of `n_objects`.
    pub fn new(pool: &CandidatePool, n_objects: u32) -> Result<Self> {
        Self::from_candidates(pool.iter(), n_objects)
    }

    pub fn from_candidates<'a>(candidates: impl IntoIterator<Item = &'a Candidate>, n_objects: u32) -> Result<Self> {
        let mut seen: HashMap<&'a [u32], u32> = HashMap::new();
        let mut offsets = vec![0];
        let mut members = Vec::new();
        let mut of_candidate = Vec::new();
        let mut meta = Vec::new();
        for c in candidates {
            if let Some(&last) = c.tidset.last() {
                if last >= n_objects {
                    return Err(Error::invalid(format!(
                        "candidate refers to object {last} but only {n_objects} objects are labeled"
                    )));
                }
            }
            meta.push((c.grid, c.cells.clone()));
            if c.tidset.is_empty() || c.tidset.len() >= n_objects as usize {
                of_candidate.push(None);
                continue;
            }
            let next = seen.len() as u32;
            let id = *seen.entry(c.tidset.as_slice()).or_insert_with(|| {
                members.extend_from_slice(&c.tidset);
                offsets.push(members.len());
                next
            });
            of_candidate.push(Some(id));
        }
        if of_candidate.is_empty() {
            return Err(Error::NoCandidates);
        }
        Ok(Self {
            n_objects,
            offsets,
            members,
            of_candidate,
            meta,
        })
    }

    pub fn n_objects(&self) -> u32 {
        self.n_objects
    }

    /// Number of candidates in the indexed pool, including skipped ones.
    pub fn n_candidates(&self) -> usize {
        self.of_candidate.len()
    }

    /// Number of distinct tidsets that are evaluated.
    pub fn n_tidsets(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn tidset(&self, unique: u32) -> &[u32] {
        let u = unique as usize;
        &self.members[self.offsets[u]..self.offsets[u + 1]]
    }

    fn positives_in(&self, unique: usize, labels: &[u8]) -> u32 {
        self.members[self.offsets[unique]..self.offsets[unique + 1]]
            .iter()
            .map(|&o| labels[o as usize] as u32)
            .sum()
    }

    /// Log ratio of every distinct tidset.
    fn unique_ratios(&self, stat: &impl ScanStatistic, labels: &[u8]) -> Vec<f64> {
        (0..self.n_tidsets())
            .map(|u| {
                let inside = (self.offsets[u + 1] - self.offsets[u]) as u32;
                stat.log_ratio(self.positives_in(u, labels), inside)
            })
            .collect()
    }

    fn max_ratio(&self, stat: &impl ScanStatistic, labels: &[u8]) -> f64 {
        (0..self.n_tidsets()).fold(0.0, |best: f64, u| {
            let inside = (self.offsets[u + 1] - self.offsets[u]) as u32;
            best.max(stat.log_ratio(self.positives_in(u, labels), inside))
        })
    }

    fn check_labels(&self, labels: &LabelVector) -> Result<()> {
        if labels.len() != self.n_objects as usize {
            return Err(Error::invalid(format!(
                "label vector has {} entries but the pool indexes {} objects",
                labels.len(),
                self.n_objects
            )));
        }
        Ok(())
    }

    /// Per-candidate log ratios (in pool order; skipped candidates get `0`)
    /// and their maximum.
    pub fn scan_observed(&self, labels: &LabelVector, direction: Direction) -> Result<(f64, Vec<f64>)> {
        self.check_labels(labels)?;
        let stat = BernoulliStatistic::new(labels.positives(), self.n_objects, direction);
        let unique = self.unique_ratios(&stat, labels.as_bytes());
        let per_candidate: Vec<f64> = self
            .of_candidate
            .iter()
            .map(|u| u.map_or(0.0, |u| unique[u as usize]))
            .collect();
        let t_obs = unique.iter().copied().fold(0.0, f64::max);
        Ok((t_obs, per_candidate))
    }

    /// Maximum log ratio under `n_sims` seeded label permutations, in
    /// simulation order.
    pub fn monte_carlo_null(&self, labels: &LabelVector, cfg: &ScanConfig) -> Result<Vec<f64>> {
        self.check_labels(labels)?;
        let stat = BernoulliStatistic::new(labels.positives(), self.n_objects, cfg.direction);
        let base = labels.as_bytes();
        Ok((1..=cfg.n_sims as u64)
            .into_par_iter()
            .map_init(
                || base.to_vec(),
                |scratch, b| {
                    scratch.copy_from_slice(base);
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ b);
                    scratch.shuffle(&mut rng);
                    self.max_ratio(&stat, scratch)
                },
            )
            .collect())
    }

    /// Runs the observed scan, the permutation null and the decision.
    pub fn scan(&self, labels: &LabelVector, cfg: &ScanConfig) -> Result<ScanResult> {
        cfg.validate()?;
        let (t_obs, ratios) = self.scan_observed(labels, cfg.direction)?;
        let null = self.monte_carlo_null(labels, cfg)?;
        Ok(decide(t_obs, null, &ratios, self, cfg))
    }
}

/// Rank p-value `(1 + #{null >= t}) / (n + 1)` against a descending-sorted null.
fn rank_p_value(sorted_desc: &[f64], t: f64) -> f64 {
    let exceeding = sorted_desc.partition_point(|&b| b >= t);
    (1 + exceeding) as f64 / (sorted_desc.len() + 1) as f64
}

/// Computes the p-value, the rejection decision and the extreme candidates.
pub fn decide(t_obs: f64, null: Vec<f64>, ratios: &[f64], index: &ScanIndex, cfg: &ScanConfig) -> ScanResult {
    let mut sorted = null.clone();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let p_hat = rank_p_value(&sorted, t_obs);
    let rejected = p_hat <= cfg.alpha;
    let mut extreme = Vec::new();
    let mut u_hat = Vec::new();
    if rejected {
        for (k, (&t_c, unique)) in ratios.iter().zip(&index.of_candidate).enumerate() {
            let Some(unique) = unique else { continue };
            let p_c = rank_p_value(&sorted, t_c);
            if p_c <= cfg.alpha {
                let tidset = index.tidset(*unique);
                let (grid, cells) = &index.meta[k];
                extreme.push(ExtremeCandidate {
                    candidate: k,
                    grid: *grid,
                    cells: cells.clone(),
                    support: tidset.len(),
                    t_c,
                    p_c,
                });
                u_hat.extend_from_slice(tidset);
            }
        }
        u_hat.sort_unstable();
        u_hat.dedup();
    }
    ScanResult {
        t_obs,
        null,
        p_hat,
        rejected,
        alpha: cfg.alpha,
        n_sims: cfg.n_sims,
        seed: cfg.seed,
        extreme,
        u_hat,
    }
}

/// Scans a pool once; build a [`ScanIndex`] directly to scan many label
/// vectors over the same pool.
pub fn scan(pool: &CandidatePool, labels: &LabelVector, cfg: &ScanConfig) -> Result<ScanResult> {
    ScanIndex::new(pool, labels.len() as u32)?.scan(labels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::pool;
    use proptest::prelude::*;

    fn cand(grid: u32, cells: &[u32], tidset: &[u32]) -> Candidate {
        Candidate {
            grid,
            cells: cells.to_vec(),
            tidset: tidset.to_vec(),
        }
    }

    fn half_positive(n: u32) -> LabelVector {
        (0..n).map(|i| i < n / 2).collect()
    }

    #[test]
    fn constant_labels_give_zero_statistic() {
        let p = pool(vec![vec![cand(0, &[1], &[0, 1, 2]), cand(0, &[2], &[3])]]);
        let labels: LabelVector = vec![true; 10].into_iter().collect();
        let cfg = ScanConfig { n_sims: 20, ..ScanConfig::default() };
        let r = scan(&p, &labels, &cfg).unwrap();
        assert_eq!(r.t_obs, 0.0);
        assert!(r.null.iter().all(|&t| t == 0.0));
        assert_eq!(r.p_hat, 1.0);
        assert!(!r.rejected && r.extreme.is_empty() && r.u_hat.is_empty());
    }

    #[test]
    fn single_all_positive_candidate() {
        let labels = half_positive(200);
        let tidset: Vec<u32> = (0..20).collect();
        let p = pool(vec![vec![cand(0, &[5], &tidset)]]);
        let index = ScanIndex::new(&p, 200).unwrap();
        let (t_obs, ratios) = index.scan_observed(&labels, Direction::TwoSided).unwrap();
        let direct = loglik_h1(20, 20, 100, 200).unwrap() - loglik_h0(100, 200);
        assert!((t_obs - direct).abs() < 1e-9);
        assert_eq!(ratios.len(), 1);
    }

    #[test]
    fn nested_tidsets_maximum() {
        let labels = half_positive(100);
        let outer: Vec<u32> = (0..40).collect();
        let inner: Vec<u32> = (0..10).collect();
        let p = pool(vec![vec![cand(0, &[1], &outer), cand(0, &[1, 2], &inner)]]);
        let index = ScanIndex::new(&p, 100).unwrap();
        let (t_obs, ratios) = index.scan_observed(&labels, Direction::TwoSided).unwrap();
        let expect: Vec<f64> = [(40u64, 40u64), (10, 10)]
            .iter()
            .map(|&(pc, nc)| loglik_h1(pc, nc, 50, 100).unwrap() - loglik_h0(50, 100))
            .collect();
        assert!((ratios[0] - expect[0]).abs() < 1e-9 && (ratios[1] - expect[1]).abs() < 1e-9);
        assert_eq!(t_obs, ratios[0].max(ratios[1]));
    }

    #[test]
    fn full_and_duplicate_tidsets() {
        let all: Vec<u32> = (0..4).collect();
        let p = pool(vec![vec![cand(0, &[1], &all), cand(0, &[2], &[0, 1]), cand(1, &[9], &[0, 1])]]);
        let index = ScanIndex::new(&p, 4).unwrap();
        assert_eq!(index.n_candidates(), 3);
        assert_eq!(index.n_tidsets(), 1);
        let labels: LabelVector = vec![true, true, false, false].into_iter().collect();
        let (_, ratios) = index.scan_observed(&labels, Direction::TwoSided).unwrap();
        assert_eq!(ratios[0], 0.0);
        assert_eq!(ratios[1], ratios[2]);
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(matches!(ScanIndex::new(&pool(vec![]), 3), Err(Error::NoCandidates)));
        let p = pool(vec![vec![cand(0, &[1], &[0, 5])]]);
        assert!(ScanIndex::new(&p, 3).is_err());
    }

    #[test]
    fn rank_formula_examples() {
        let null: Vec<f64> = (0..999).map(|k| k as f64 / 1000.0).collect();
        let mut sorted = null.clone();
        sorted.sort_unstable_by(|a, b| b.total_cmp(a));
        assert_eq!(rank_p_value(&sorted, 5.0), 0.001);
        assert_eq!(rank_p_value(&sorted, -1.0), 1.0);
        // Nine null values tied with the observed one, none above it.
        let mut tied: Vec<f64> = vec![0.5; 990];
        tied.extend(vec![2.0; 9]);
        tied.sort_unstable_by(|a, b| b.total_cmp(a));
        let p = rank_p_value(&tied, 2.0);
        assert_eq!(p, 10.0 / 1000.0);
        assert!(p <= 0.01);
    }

    #[test]
    fn decision_and_extreme_set() {
        let labels = half_positive(200);
        let strong: Vec<u32> = (0..30).collect();
        let weak: Vec<u32> = (90..110).collect();
        let p = pool(vec![vec![cand(0, &[1], &strong), cand(0, &[2], &weak)]]);
        let cfg = ScanConfig { n_sims: 199, seed: 3, ..ScanConfig::default() };
        let r = scan(&p, &labels, &cfg).unwrap();
        assert_eq!(r.null.len(), 199);
        assert_eq!(r.p_hat, 0.005);
        assert!(r.rejected);
        assert_eq!(r.extreme.len(), 1);
        assert_eq!(r.extreme[0].cells, vec![1]);
        assert_eq!(r.u_hat, strong);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let labels: LabelVector = (0..60).map(|i| i % 3 == 0).collect();
        let p = pool(vec![vec![cand(0, &[1], &[0, 3, 6, 9]), cand(0, &[2], &[1, 2, 4, 7, 8])]]);
        let cfg = ScanConfig { n_sims: 50, seed: 77, ..ScanConfig::default() };
        let a = scan(&p, &labels, &cfg).unwrap();
        let b = scan(&p, &labels, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.null.iter().zip(&b.null).all(|(x, y)| x.to_bits() == y.to_bits()));
        let one = scan(&p, &labels, &ScanConfig { n_sims: 1, ..cfg }).unwrap();
        assert_eq!(one.null.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(ScanConfig::default().validate().is_ok());
        assert!(ScanConfig { alpha: 0.0, ..ScanConfig::default() }.validate().is_err());
        assert!(ScanConfig { alpha: 1.0, ..ScanConfig::default() }.validate().is_err());
        assert!(ScanConfig { n_sims: 0, ..ScanConfig::default() }.validate().is_err());
    }

    fn scan_instance() -> impl Strategy<Value = (Vec<bool>, Vec<Vec<u32>>, u64)> {
        (5u32..40).prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n as usize),
                prop::collection::vec(prop::collection::btree_set(0..n, 1..n as usize), 1..6)
                    .prop_map(|sets| sets.into_iter().map(|s| s.into_iter().collect()).collect()),
                any::<u64>(),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn p_hat_on_lattice((labels, tidsets, seed) in scan_instance()) {
            let labels = LabelVector::new(labels);
            let cands: Vec<Candidate> = tidsets.iter().enumerate().map(|(k, t)| cand(0, &[k as u32], t)).collect();
            let cfg = ScanConfig { n_sims: 19, seed, alpha: 0.05, ..ScanConfig::default() };
            let r = scan(&pool(vec![cands]), &labels, &cfg).unwrap();
            let k = r.p_hat * 20.0;
            prop_assert!((k - k.round()).abs() < 1e-9 && (1.0..=20.0).contains(&k.round()));
            prop_assert_eq!(r.rejected, r.p_hat <= cfg.alpha);
            prop_assert!(r.extreme.iter().all(|e| e.p_c <= cfg.alpha));
            prop_assert!(r.t_obs >= 0.0);
        }

        #[test]
        fn relabeling_objects_preserves_result((labels, tidsets, _seed) in scan_instance(), shift in 1u32..100) {
            let n = labels.len() as u32;
            let perm = |o: u32| (o + shift) % n;
            let mut moved = vec![false; n as usize];
            for (o, &l) in labels.iter().enumerate() {
                moved[perm(o as u32) as usize] = l;
            }
            let cands = |f: &dyn Fn(u32) -> u32| -> Vec<Candidate> {
                tidsets.iter().enumerate().map(|(k, t)| {
                    let mut t: Vec<u32> = t.iter().map(|&o| f(o)).collect();
                    t.sort_unstable();
                    cand(0, &[k as u32], &t)
                }).collect()
            };
            let a_pool = pool(vec![cands(&|o| o)]);
            let b_pool = pool(vec![cands(&perm)]);
            let (ta, _) = ScanIndex::new(&a_pool, n).unwrap().scan_observed(&LabelVector::new(labels.clone()), Direction::TwoSided).unwrap();
            let (tb, _) = ScanIndex::new(&b_pool, n).unwrap().scan_observed(&LabelVector::new(moved.clone()), Direction::TwoSided).unwrap();
            prop_assert!((ta - tb).abs() < 1e-12);
        }
    }
}
