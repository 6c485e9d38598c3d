//! Descriptor matching and metric loop closure.
//!
//! Candidates come from an exact k-nearest-neighbor search over the
//! descriptor database (a vantage-point tree with triangle-inequality
//! pruning; results are identical to a linear scan). The 25 NN policy
//! passes all candidates to geometric verification; the 1 NN policy keeps
//! only first neighbors passing the ratio test. Verification grows the
//! largest mutually-consistent match set under pairwise centroid-distance
//! preservation, and the pose comes from the closed-form rigid alignment
//! of the surviving correspondences.

use crate::types::{Descriptor, Mat3, PoseSE3, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocError {
    #[error("pose estimation needs at least 3 correspondences, got {0}")]
    TooFewPairs(usize),
    #[error("degenerate correspondence geometry")]
    DegenerateGeometry,
    #[error("localization queried with an empty database")]
    EmptyDatabase,
}

// ---------------------------------------------------------------------------
// Database and k-NN search
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct DbEntry {
    pub segment_id: u64,
    pub sequence_id: u64,
    pub descriptor: Descriptor,
    pub centroid: Vec3,
    /// Ground-truth object id, carried for evaluation only.
    pub truth_id: Option<i64>,
}

#[derive(Clone, Debug)]
struct VpNode {
    pivot: usize,
    radius: f64,
    inside: Option<Box<VpNode>>,
    outside: Option<Box<VpNode>>,
}

/// Descriptor database with an exact metric index.
#[derive(Clone, Debug)]
pub struct SegmentDb {
    entries: Vec<DbEntry>,
    root: Option<Box<VpNode>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchCandidate {
    pub query_id: u64,
    pub target_segment: u64,
    /// Index of the matched entry in the database.
    pub target_entry: usize,
    pub distance: f64,
    /// 1-based neighbor rank.
    pub rank: usize,
}

impl SegmentDb {
    pub fn new(entries: Vec<DbEntry>) -> Self {
        let mut indices: Vec<usize> = (0..entries.len()).collect();
        let root = build_vp(&entries, &mut indices);
        Self { entries, root }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DbEntry] {
        &self.entries
    }
}

fn build_vp(entries: &[DbEntry], indices: &mut [usize]) -> Option<Box<VpNode>> {
    if indices.is_empty() {
        return None;
    }
    let pivot = indices[0];
    let rest = &mut indices[1..];
    if rest.is_empty() {
        return Some(Box::new(VpNode {
            pivot,
            radius: 0.0,
            inside: None,
            outside: None,
        }));
    }
    let pd = &entries[pivot].descriptor;
    rest.sort_by(|a, b| {
        let da = entries[*a].descriptor.distance(pd);
        let db = entries[*b].descriptor.distance(pd);
        da.total_cmp(&db).then(a.cmp(b))
    });
    let mid = rest.len() / 2;
    let radius = entries[rest[mid]].descriptor.distance(pd);
    let (inside_slice, outside_slice) = rest.split_at_mut(mid);
    let inside = build_vp(entries, inside_slice);
    let outside = build_vp(entries, outside_slice);
    Some(Box::new(VpNode {
        pivot,
        radius,
        inside,
        outside,
    }))
}

/// Candidate ordering: distance, then segment id, then entry index.
type HeapKey = (f64, u64, usize);

struct BestK {
    k: usize,
    // Max-heap on the key; the worst kept candidate is on top.
    heap: std::collections::BinaryHeap<HeapOrd>,
}

#[derive(PartialEq)]
struct HeapOrd(HeapKey);

impl Eq for HeapOrd {}

impl PartialOrd for HeapOrd {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapOrd {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
             .0
            .total_cmp(&other.0 .0)
            .then(self.0 .1.cmp(&other.0 .1))
            .then(self.0 .2.cmp(&other.0 .2))
    }
}

impl BestK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: std::collections::BinaryHeap::new(),
        }
    }

    fn offer(&mut self, key: HeapKey) {
        if self.heap.len() < self.k {
            self.heap.push(HeapOrd(key));
        } else if let Some(top) = self.heap.peek() {
            if HeapOrd(key) < *top {
                self.heap.pop();
                self.heap.push(HeapOrd(key));
            }
        }
    }

    fn worst(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |t| t.0 .0)
        }
    }

    fn sorted(self) -> Vec<HeapKey> {
        let mut v: Vec<HeapKey> = self.heap.into_iter().map(|h| h.0).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        v
    }
}

fn search_vp(
    entries: &[DbEntry],
    node: &VpNode,
    query: &Descriptor,
    exclude_sequence: Option<u64>,
    best: &mut BestK,
) {
    let e = &entries[node.pivot];
    let d = query.distance(&e.descriptor);
    if exclude_sequence != Some(e.sequence_id) {
        best.offer((d, e.segment_id, node.pivot));
    }
    let (near, far) = if d < node.radius {
        (&node.inside, &node.outside)
    } else {
        (&node.outside, &node.inside)
    };
    if let Some(n) = near {
        search_vp(entries, n, query, exclude_sequence, best);
    }
    // The far side can only contain candidates when the query ball crosses
    // the pivot's radius boundary; equality must recurse so distance ties
    // resolve by id like the linear scan.
    if let Some(f) = far {
        if (d - node.radius).abs() <= best.worst() {
            search_vp(entries, f, query, exclude_sequence, best);
        }
    }
}

/// Exact k nearest entries by descriptor distance, excluding entries of
/// `exclude_sequence`; sorted ascending with ties broken by segment id.
pub fn knn_query(
    db: &SegmentDb,
    query_id: u64,
    query: &Descriptor,
    k: usize,
    exclude_sequence: Option<u64>,
) -> Vec<MatchCandidate> {
    assert!(k >= 1, "k must be at least 1");
    let Some(root) = &db.root else {
        return Vec::new();
    };
    let mut best = BestK::new(k);
    search_vp(&db.entries, root, query, exclude_sequence, &mut best);
    best.sorted()
        .into_iter()
        .enumerate()
        .map(|(i, (distance, target_segment, target_entry))| MatchCandidate {
            query_id,
            target_segment,
            target_entry,
            distance,
            rank: i + 1,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Ratio test
// ---------------------------------------------------------------------------

pub const RATIO_FACTOR: f64 = 1.2;

/// Accepts the first nearest neighbor iff its distance times `factor` is
/// below the second-nearest distance. A single candidate is accepted.
pub fn ratio_test(candidates: &[MatchCandidate], factor: f64) -> Option<&MatchCandidate> {
    debug_assert!(candidates.windows(2).all(|w| w[0].distance <= w[1].distance));
    match candidates {
        [] => None,
        [only] => Some(only),
        [first, second, ..] => {
            if first.distance * factor < second.distance {
                Some(first)
            } else {
                None
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Consistency clustering
// ---------------------------------------------------------------------------

/// A match as a pair of centroids: query-map and target-map coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentroidPair {
    pub query: Vec3,
    pub target: Vec3,
}

fn consistent(a: &CentroidPair, b: &CentroidPair, epsilon: f64) -> bool {
    let dq = (a.query - b.query).norm();
    let dt = (a.target - b.target).norm();
    (dq - dt).abs() <= epsilon
}

/// Largest greedily-grown mutually consistent subset: seeded from the
/// highest-degree vertex of the pairwise consistency graph, adding
/// vertices consistent with all current members. Returns indices into
/// `matches` (ascending), or `None` when the best set is smaller than
/// `min_size`. The result does not depend on input order.
pub fn consistency_clustering(
    matches: &[CentroidPair],
    epsilon: f64,
    min_size: usize,
) -> Option<Vec<usize>> {
    if matches.len() < min_size {
        return None;
    }
    // Canonical ordering makes tie-breaking independent of input order.
    let mut canon: Vec<usize> = (0..matches.len()).collect();
    let key = |i: usize| {
        let m = &matches[i];
        [
            m.query.x, m.query.y, m.query.z, m.target.x, m.target.y, m.target.z,
        ]
    };
    canon.sort_by(|a, b| {
        let (ka, kb) = (key(*a), key(*b));
        for (x, y) in ka.iter().zip(kb.iter()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        a.cmp(b)
    });
    let n = canon.len();
    let mut adj = vec![false; n * n];
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if consistent(&matches[canon[i]], &matches[canon[j]], epsilon) {
                adj[i * n + j] = true;
                adj[j * n + i] = true;
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    let seed = (0..n)
        .max_by(|a, b| degree[*a].cmp(&degree[*b]).then(b.cmp(a)))
        .expect("non-empty");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| degree[*b].cmp(&degree[*a]).then(a.cmp(b)));
    let mut members = vec![seed];
    for v in order {
        if v == seed {
            continue;
        }
        if members.iter().all(|m| adj[m * n + v]) {
            members.push(v);
        }
    }
    if members.len() < min_size {
        return None;
    }
    let mut result: Vec<usize> = members.into_iter().map(|i| canon[i]).collect();
    result.sort_unstable();
    Some(result)
}

// ---------------------------------------------------------------------------
// Pose estimation
// ---------------------------------------------------------------------------

/// Closed-form least-squares rigid alignment mapping query centroids onto
/// target centroids (cross-covariance SVD with a reflection guard).
/// Returns the pose and the RMS residual.
pub fn estimate_pose(pairs: &[CentroidPair]) -> Result<(PoseSE3, f64), LocError> {
    if pairs.len() < 3 {
        return Err(LocError::TooFewPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut qc = Vec3::zeros();
    let mut tc = Vec3::zeros();
    for p in pairs {
        qc += p.query;
        tc += p.target;
    }
    qc /= n;
    tc /= n;
    let mut h = Mat3::zeros();
    for p in pairs {
        h += (p.query - qc) * (p.target - tc).transpose();
    }
    let svd = h.svd(true, true);
    // Collinear correspondences leave the second singular value at zero.
    let s = svd.singular_values;
    if s[1] <= 1e-9 * s[0].max(f64::MIN_POSITIVE) {
        return Err(LocError::DegenerateGeometry);
    }
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut rotation = v_t.transpose() * u.transpose();
    if rotation.determinant() < 0.0 {
        let mut v = v_t.transpose();
        for i in 0..3 {
            v[(i, 2)] = -v[(i, 2)];
        }
        rotation = v * u.transpose();
    }
    let translation = tc - rotation * qc;
    let pose = PoseSE3::new(crate::types::nearest_rotation(&rotation), translation, 0.0)
        .expect("orthonormalized rotation");
    let mut sq = 0.0;
    for p in pairs {
        sq += (pose.transform_point(&p.query) - p.target).norm_squared();
    }
    Ok((pose, (sq / n).sqrt()))
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchPolicy {
    /// Fetch 25 nearest neighbors per query segment, all kept.
    TwentyFiveNn,
    /// Keep only first nearest neighbors passing the 1.2 ratio test.
    OneNnRatio,
}

impl MatchPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            MatchPolicy::TwentyFiveNn => "25nn",
            MatchPolicy::OneNnRatio => "1nn",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LocalizeParams {
    pub policy: MatchPolicy,
    pub k: usize,
    pub ratio: f64,
    pub epsilon: f64,
    pub min_cluster: usize,
}

impl LocalizeParams {
    pub fn for_policy(policy: MatchPolicy) -> Self {
        Self {
            policy,
            k: 25,
            ratio: RATIO_FACTOR,
            epsilon: 0.4,
            min_cluster: 4,
        }
    }
}

/// A described segment of the local map.
#[derive(Clone, Debug)]
pub struct QuerySegment {
    pub segment_id: u64,
    pub sequence_id: u64,
    pub descriptor: Descriptor,
    pub centroid: Vec3,
}

#[derive(Clone, Debug)]
pub struct LoopClosure {
    /// Pose mapping the local (query) map frame onto the target map frame.
    pub pose: PoseSE3,
    pub inliers: Vec<MatchCandidate>,
    pub rms: f64,
    pub timestamp: f64,
    /// Translational error against ground truth; evaluation only.
    pub error_m: Option<f64>,
}

/// Matches the local segments against the database under the given policy
/// and verifies candidates geometrically. `None` when no consistent
/// cluster of the required size exists.
pub fn localize(
    query_segments: &[QuerySegment],
    db: &SegmentDb,
    params: &LocalizeParams,
    timestamp: f64,
) -> Result<Option<LoopClosure>, LocError> {
    if db.is_empty() {
        return Err(LocError::EmptyDatabase);
    }
    let mut matches: Vec<MatchCandidate> = Vec::new();
    let mut pairs: Vec<CentroidPair> = Vec::new();
    for q in query_segments {
        match params.policy {
            MatchPolicy::TwentyFiveNn => {
                for c in knn_query(db, q.segment_id, &q.descriptor, params.k, Some(q.sequence_id))
                {
                    pairs.push(CentroidPair {
                        query: q.centroid,
                        target: db.entries[c.target_entry].centroid,
                    });
                    matches.push(c);
                }
            }
            MatchPolicy::OneNnRatio => {
                let cands =
                    knn_query(db, q.segment_id, &q.descriptor, 2, Some(q.sequence_id));
                if let Some(c) = ratio_test(&cands, params.ratio) {
                    pairs.push(CentroidPair {
                        query: q.centroid,
                        target: db.entries[c.target_entry].centroid,
                    });
                    matches.push(c.clone());
                }
            }
        }
    }
    if pairs.len() < params.min_cluster {
        return Ok(None);
    }
    let Some(inlier_idx) = consistency_clustering(&pairs, params.epsilon, params.min_cluster)
    else {
        return Ok(None);
    };
    let inlier_pairs: Vec<CentroidPair> = inlier_idx.iter().map(|i| pairs[*i]).collect();
    let (pose, rms) = estimate_pose(&inlier_pairs)?;
    Ok(Some(LoopClosure {
        pose: pose.with_timestamp(timestamp),
        inliers: inlier_idx.into_iter().map(|i| matches[i].clone()).collect(),
        rms,
        timestamp,
        error_m: None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use crate::rng::Pcg32;
    use crate::types::DESCRIPTOR_DIM;

    fn random_descriptor(rng: &mut Pcg32) -> Descriptor {
        let v: Vec<f64> = (0..DESCRIPTOR_DIM).map(|_| rng.normal(0.0, 1.0)).collect();
        Descriptor::new(&v).unwrap()
    }

    fn random_db(rng: &mut Pcg32, n: usize, sequences: u64) -> SegmentDb {
        let entries: Vec<DbEntry> = (0..n)
            .map(|i| DbEntry {
                segment_id: i as u64,
                sequence_id: i as u64 % sequences,
                descriptor: random_descriptor(rng),
                centroid: Vec3::new(
                    rng.uniform(-50.0, 50.0),
                    rng.uniform(-50.0, 50.0),
                    rng.uniform(0.0, 4.0),
                ),
                truth_id: None,
            })
            .collect();
        SegmentDb::new(entries)
    }

    #[test]
    fn knn_exact_match_has_rank_one_distance_zero() {
        let mut rng = Pcg32::new(1);
        let db = random_db(&mut rng, 64, 1);
        let q = db.entries()[17].descriptor.clone();
        let res = knn_query(&db, 99, &q, 3, None);
        assert_eq!(res[0].target_segment, 17);
        assert_eq!(res[0].distance, 0.0);
        assert_eq!(res[0].rank, 1);
    }

    #[test]
    fn knn_with_large_k_returns_everything() {
        let mut rng = Pcg32::new(2);
        let db = random_db(&mut rng, 10, 1);
        let q = random_descriptor(&mut rng);
        let res = knn_query(&db, 0, &q, 99, None);
        assert_eq!(res.len(), 10);
        for w in res.windows(2) {
            assert!(w[0].distance <= w[1].distance);
        }
    }

    #[test]
    fn knn_equals_linear_scan_oracle() {
        let mut rng = Pcg32::new(3);
        let db = random_db(&mut rng, 500, 3);
        for trial in 0..1000 {
            let q = random_descriptor(&mut rng);
            let exclude = if trial % 2 == 0 { Some(trial as u64 % 3) } else { None };
            for k in [1usize, 2, 25] {
                let got = knn_query(&db, 0, &q, k, exclude);
                let want = oracles::linear_scan_knn(db.entries(), &q, k, exclude);
                assert_eq!(got.len(), want.len());
                for (g, (d, seg, entry)) in got.iter().zip(want.iter()) {
                    assert_eq!(g.target_entry, *entry, "trial {trial} k {k}");
                    assert_eq!(g.target_segment, *seg);
                    assert_eq!(g.distance, *d);
                }
            }
        }
    }

    #[test]
    fn knn_on_empty_db_is_empty() {
        let db = SegmentDb::new(Vec::new());
        let mut rng = Pcg32::new(4);
        assert!(knn_query(&db, 0, &random_descriptor(&mut rng), 5, None).is_empty());
    }

    fn cand(d: f64) -> MatchCandidate {
        MatchCandidate {
            query_id: 0,
            target_segment: 1,
            target_entry: 0,
            distance: d,
            rank: 1,
        }
    }

    #[test]
    fn ratio_test_rule_application() {
        // 1.0 * 1.2 < 1.3: accept.
        let c = [cand(1.0), cand(1.3)];
        assert!(ratio_test(&c, 1.2).is_some());
        // 1.0 * 1.2 >= 1.1: reject.
        let c = [cand(1.0), cand(1.1)];
        assert!(ratio_test(&c, 1.2).is_none());
        // Exact duplicate with d1 = 0 is accepted.
        let c = [cand(0.0), cand(0.7)];
        assert!(ratio_test(&c, 1.2).is_some());
        // A single candidate is accepted.
        let c = [cand(2.0)];
        assert!(ratio_test(&c, 1.2).is_some());
        assert!(ratio_test(&[], 1.2).is_none());
    }

    #[test]
    fn ratio_test_is_scale_invariant() {
        let mut rng = Pcg32::new(5);
        for _ in 0..100 {
            let d1 = rng.uniform(0.1, 2.0);
            let d2 = d1 + rng.uniform(0.0, 2.0);
            let s = rng.uniform(0.01, 50.0);
            let a = ratio_test(&[cand(d1), cand(d2)], 1.2).is_some();
            let b = ratio_test(&[cand(d1 * s), cand(d2 * s)], 1.2).is_some();
            assert_eq!(a, b);
        }
    }

    fn rigid_pairs(rng: &mut Pcg32, n: usize) -> (PoseSE3, Vec<CentroidPair>) {
        let axis = Vec3::new(
            rng.normal(0.0, 1.0),
            rng.normal(0.0, 1.0),
            rng.normal(0.0, 1.0),
        )
        .normalize();
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            rng.uniform(-3.0, 3.0),
        )
        .matrix()
        .to_owned();
        let pose = PoseSE3::new(
            rot,
            Vec3::new(
                rng.uniform(-30.0, 30.0),
                rng.uniform(-30.0, 30.0),
                rng.uniform(-3.0, 3.0),
            ),
            0.0,
        )
        .unwrap();
        let pairs: Vec<CentroidPair> = (0..n)
            .map(|_| {
                let q = Vec3::new(
                    rng.uniform(-20.0, 20.0),
                    rng.uniform(-20.0, 20.0),
                    rng.uniform(0.0, 5.0),
                );
                CentroidPair {
                    query: q,
                    target: pose.transform_point(&q),
                }
            })
            .collect();
        (pose, pairs)
    }

    #[test]
    fn clustering_keeps_all_rigid_matches() {
        let mut rng = Pcg32::new(6);
        let (_, pairs) = rigid_pairs(&mut rng, 12);
        let got = consistency_clustering(&pairs, 0.4, 4).unwrap();
        assert_eq!(got, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn clustering_recovers_planted_inliers_vs_exhaustive() {
        let mut rng = Pcg32::new(7);
        let (_, mut pairs) = rigid_pairs(&mut rng, 6);
        for _ in 0..14 {
            pairs.push(CentroidPair {
                query: Vec3::new(
                    rng.uniform(-50.0, 50.0),
                    rng.uniform(-50.0, 50.0),
                    rng.uniform(0.0, 100.0),
                ),
                target: Vec3::new(
                    rng.uniform(-50.0, 50.0),
                    rng.uniform(-50.0, 50.0),
                    rng.uniform(0.0, 100.0),
                ),
            });
        }
        let got = consistency_clustering(&pairs, 0.4, 4).unwrap();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
        // Exhaustive maximum consistent subset agrees.
        let exhaustive = oracles::max_consistent_subset(&pairs, 0.4);
        assert_eq!(got, exhaustive);
    }

    #[test]
    fn clustering_below_min_size_is_none() {
        let mut rng = Pcg32::new(8);
        let (_, pairs) = rigid_pairs(&mut rng, 3);
        assert!(consistency_clustering(&pairs, 0.4, 4).is_none());
    }

    #[test]
    fn clustering_is_input_order_invariant() {
        let mut rng = Pcg32::new(9);
        let (_, mut pairs) = rigid_pairs(&mut rng, 5);
        for _ in 0..9 {
            pairs.push(CentroidPair {
                query: Vec3::new(rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0), 0.0),
                target: Vec3::new(rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0), 0.0),
            });
        }
        let base: std::collections::BTreeSet<usize> =
            consistency_clustering(&pairs, 0.4, 4).unwrap().into_iter().collect();
        let base_pairs: Vec<CentroidPair> = base.iter().map(|i| pairs[*i]).collect();
        for seed in 0..5 {
            let mut perm: Vec<usize> = (0..pairs.len()).collect();
            Pcg32::new(seed).shuffle(&mut perm);
            let shuffled: Vec<CentroidPair> = perm.iter().map(|i| pairs[*i]).collect();
            let got = consistency_clustering(&shuffled, 0.4, 4).unwrap();
            let got_pairs: Vec<CentroidPair> = got.iter().map(|i| shuffled[*i]).collect();
            // Same match set regardless of order.
            assert_eq!(got_pairs.len(), base_pairs.len());
            for p in &got_pairs {
                assert!(base_pairs.iter().any(|b| b == p));
            }
        }
    }

    #[test]
    fn pose_identity_for_identity_correspondences() {
        let mut rng = Pcg32::new(10);
        let pairs: Vec<CentroidPair> = (0..8)
            .map(|_| {
                let p = Vec3::new(
                    rng.uniform(-10.0, 10.0),
                    rng.uniform(-10.0, 10.0),
                    rng.uniform(-10.0, 10.0),
                );
                CentroidPair { query: p, target: p }
            })
            .collect();
        let (pose, rms) = estimate_pose(&pairs).unwrap();
        assert!((pose.rotation() - Mat3::identity()).abs().max() < 1e-12);
        assert!(pose.translation().norm() < 1e-12);
        assert!(rms < 1e-12);
    }

    #[test]
    fn pose_recovers_random_transforms_noiselessly() {
        let mut rng = Pcg32::new(11);
        for _ in 0..50 {
            let (truth, pairs) = rigid_pairs(&mut rng, 10);
            let (pose, rms) = estimate_pose(&pairs).unwrap();
            assert!((pose.rotation() - truth.rotation()).abs().max() < 1e-9);
            assert!((pose.translation() - truth.translation()).norm() < 1e-9);
            assert!(rms < 1e-9);
        }
    }

    #[test]
    fn pose_with_centroid_noise_is_accurate() {
        let mut rng = Pcg32::new(12);
        let mut errors: Vec<f64> = Vec::new();
        for _ in 0..100 {
            let (truth, mut pairs) = rigid_pairs(&mut rng, 10);
            for p in &mut pairs {
                p.target += Vec3::new(
                    rng.normal(0.0, 0.05),
                    rng.normal(0.0, 0.05),
                    rng.normal(0.0, 0.05),
                );
            }
            let (pose, _) = estimate_pose(&pairs).unwrap();
            errors.push((pose.translation() - truth.translation()).norm());
        }
        errors.sort_by(f64::total_cmp);
        let median = errors[errors.len() / 2];
        assert!(median < 0.05, "median translation error {median}");
    }

    #[test]
    fn pose_equivariance_under_common_rigid_motion() {
        let mut rng = Pcg32::new(13);
        let (_, pairs) = rigid_pairs(&mut rng, 9);
        let (pose, _) = estimate_pose(&pairs).unwrap();
        let (extra, _) = rigid_pairs(&mut rng, 3);
        // Move the query side by an extra rigid transform g: the estimate
        // becomes pose o g^-1.
        let moved: Vec<CentroidPair> = pairs
            .iter()
            .map(|p| CentroidPair {
                query: extra.transform_point(&p.query),
                target: p.target,
            })
            .collect();
        let (pose2, _) = estimate_pose(&moved).unwrap();
        let expect = pose.compose(&extra.inverse());
        assert!((pose2.rotation() - expect.rotation()).abs().max() < 1e-9);
        assert!((pose2.translation() - expect.translation()).norm() < 1e-9);
    }

    #[test]
    fn collinear_pairs_are_degenerate() {
        let pairs: Vec<CentroidPair> = (0..5)
            .map(|i| {
                let p = Vec3::new(i as f64, 2.0 * i as f64, 0.0);
                CentroidPair { query: p, target: p }
            })
            .collect();
        assert!(matches!(
            estimate_pose(&pairs),
            Err(LocError::DegenerateGeometry)
        ));
        assert!(matches!(
            estimate_pose(&pairs[..2]),
            Err(LocError::TooFewPairs(2))
        ));
    }

    #[test]
    fn localize_empty_db_errors() {
        let db = SegmentDb::new(Vec::new());
        let params = LocalizeParams::for_policy(MatchPolicy::OneNnRatio);
        assert!(matches!(
            localize(&[], &db, &params, 0.0),
            Err(LocError::EmptyDatabase)
        ));
    }
}
