//! Candidate cell-subsets: every subset of cells contained in at least one
//! object's cellset, mined bottom-up with prefix classes and tidset
//! intersection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mapping::CellSet;
use crate::zoning::CellIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// Grid ordinal the cells belong to.
    pub grid: u32,
    /// Ascending dense cell indices.
    pub cells: Vec<CellIndex>,
    /// Ascending dense object indices whose cellset contains `cells`.
    pub tidset: Vec<u32>,
}

impl Candidate {
    pub fn support(&self) -> usize {
        self.tidset.len()
    }
}

/// Sorted-merge intersection of two ascending id lists.
pub fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

type Item = (CellIndex, Vec<u32>);

fn extend_class(grid: u32, prefix: &mut Vec<CellIndex>, class: &[Item], out: &mut Vec<Candidate>) {
    for (k, (cell, tids)) in class.iter().enumerate() {
        prefix.push(*cell);
        out.push(Candidate {
            grid,
            cells: prefix.clone(),
            tidset: tids.clone(),
        });
        let next: Vec<Item> = class[k + 1..]
            .iter()
            .filter_map(|(other, other_tids)| {
                let joined = intersect_sorted(tids, other_tids);
                (!joined.is_empty()).then_some((*other, joined))
            })
            .collect();
        if !next.is_empty() {
            extend_class(grid, prefix, &next, out);
        }
        prefix.pop();
    }
}

/// Mines all non-empty cell subsets with support of at least one, in
/// lexicographic order of their cell tuples.
pub fn mine(cellsets: &[CellSet]) -> Vec<Candidate> {
    let Some(first) = cellsets.first() else {
        return Vec::new();
    };
    let grid = first.grid;
    let mut inverted: BTreeMap<CellIndex, Vec<u32>> = BTreeMap::new();
    for set in cellsets {
        debug_assert_eq!(set.grid, grid, "cellsets from several grids");
        for &cell in &set.cells {
            inverted.entry(cell).or_default().push(set.object);
        }
    }
    let items: Vec<Item> = inverted
        .into_iter()
        .map(|(cell, mut tids)| {
            tids.sort_unstable();
            tids.dedup();
            (cell, tids)
        })
        .collect();

    // Top-level prefix classes partition the search space.
    let classes: Vec<Vec<Candidate>> = (0..items.len())
        .into_par_iter()
        .map(|k| {
            let (cell, tids) = &items[k];
            let mut out = vec![Candidate {
                grid,
                cells: vec![*cell],
                tidset: tids.clone(),
            }];
            let next: Vec<Item> = items[k + 1..]
                .iter()
                .filter_map(|(other, other_tids)| {
                    let joined = intersect_sorted(tids, other_tids);
                    (!joined.is_empty()).then_some((*other, joined))
                })
                .collect();
            let mut prefix = vec![*cell];
            extend_class(grid, &mut prefix, &next, &mut out);
            out
        })
        .collect();
    let out: Vec<Candidate> = classes.into_iter().flatten().collect();
    debug_assert!(out.windows(2).all(|w| w[0].cells < w[1].cells), "duplicate or unordered candidates");
    out
}

/// Candidates of several grids, kept apart by grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    per_grid: Vec<Vec<Candidate>>,
}

impl CandidatePool {
    pub fn per_grid(&self) -> &[Vec<Candidate>] {
        &self.per_grid
    }

    pub fn len(&self) -> usize {
        self.per_grid.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.per_grid.iter().flatten()
    }
}

/// Concatenates per-grid candidate lists, preserving their grid provenance.
pub fn pool(per_grid: Vec<Vec<Candidate>>) -> CandidatePool {
    CandidatePool { per_grid }
}

/// Mines every grid concurrently.
pub fn mine_family(per_grid_cellsets: &[Vec<CellSet>]) -> Vec<Vec<Candidate>> {
    per_grid_cellsets.par_iter().map(|sets| mine(sets)).collect()
}
