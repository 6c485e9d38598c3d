//! Independent reference implementations used to verify the production
//! paths: exhaustive search counterparts with no shared logic. They back
//! the unit tests, the acceptance suite and the CLI self test.

use crate::localization::{CentroidPair, DbEntry};
use crate::types::Descriptor;

/// Exhaustive k-nearest-neighbor scan; returns (distance, segment id,
/// entry index) sorted ascending with the same tie rule as the index.
pub fn linear_scan_knn(
    entries: &[DbEntry],
    query: &Descriptor,
    k: usize,
    exclude_sequence: Option<u64>,
) -> Vec<(f64, u64, usize)> {
    let mut all: Vec<(f64, u64, usize)> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| exclude_sequence != Some(e.sequence_id))
        .map(|(i, e)| (query.distance(&e.descriptor), e.segment_id, i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    all.truncate(k);
    all
}

/// Exact maximum mutually-consistent subset by branch-and-bound over the
/// pairwise consistency graph. Intended for small inputs (about 25
/// matches); returns ascending indices, smallest-lexicographic among
/// maximum solutions.
pub fn max_consistent_subset(matches: &[CentroidPair], epsilon: f64) -> Vec<usize> {
    let n = matches.len();
    assert!(n <= 28, "exhaustive subset check limited to small inputs");
    let mut adj = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dq = (matches[i].query - matches[j].query).norm();
                let dt = (matches[i].target - matches[j].target).norm();
                adj[i * n + j] = (dq - dt).abs() <= epsilon;
            }
        }
    }
    let mut best: Vec<usize> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    fn grow(
        start: usize,
        n: usize,
        adj: &[bool],
        current: &mut Vec<usize>,
        best: &mut Vec<usize>,
    ) {
        if current.len() > best.len() {
            *best = current.clone();
        }
        if current.len() + (n - start) <= best.len() {
            return;
        }
        for v in start..n {
            if current.iter().all(|m| adj[m * n + v]) {
                current.push(v);
                grow(v + 1, n, adj, current, best);
                current.pop();
            }
        }
    }
    grow(0, n, &adj, &mut current, &mut best);
    best
}
