//! Incremental Euclidean segmentation and voxelization.
//!
//! Clustering is a connected-component search on the fixed-radius graph
//! after ground removal. The incremental store keeps every component
//! (including those below the reporting threshold) so that the result of
//! feeding scans one by one matches batch clustering of the union cloud.
//! Point lists are append-only, which lets callers reconstruct the point
//! set at any past observation from the recorded point count.

use crate::types::{Observation, Segment, Vec3};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Voxel edge used to deduplicate points entering a segment, meters.
pub const DEDUP_VOXEL: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct ClusterParams {
    pub radius: f64,
    pub min_points: usize,
    /// Points with z below this height are treated as ground and dropped.
    pub ground_z: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            radius: 0.2,
            min_points: 100,
            ground_z: 0.3,
        }
    }
}

fn cell_of(p: &Vec3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Batch connected-component clustering. Components with fewer than
/// `min_points` points are discarded; segment ids equal the minimum
/// original point index of the component.
pub fn euclidean_cluster(points: &[Vec3], params: &ClusterParams) -> Vec<Segment> {
    let kept: Vec<(usize, Vec3)> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.z >= params.ground_z)
        .map(|(i, p)| (i, *p))
        .collect();
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (k, (_, p)) in kept.iter().enumerate() {
        grid.entry(cell_of(p, params.radius)).or_default().push(k);
    }
    let r2 = params.radius * params.radius;
    let mut visited = vec![false; kept.len()];
    let mut segments = Vec::new();
    for start in 0..kept.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = vec![start];
        let mut members = vec![start];
        while let Some(k) = queue.pop() {
            let p = kept[k].1;
            let (cx, cy, cz) = cell_of(&p, params.radius);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &other in bucket {
                            if !visited[other]
                                && (kept[other].1 - p).norm_squared() <= r2
                            {
                                visited[other] = true;
                                queue.push(other);
                                members.push(other);
                            }
                        }
                    }
                }
            }
        }
        if members.len() < params.min_points {
            continue;
        }
        let id = members.iter().map(|k| kept[*k].0).min().expect("non-empty") as u64;
        let mut pts: Vec<(usize, Vec3)> = members.iter().map(|k| kept[*k]).collect();
        pts.sort_by_key(|(orig, _)| *orig);
        let seg = Segment::new(id, pts.into_iter().map(|(_, p)| p).collect(), vec![], None)
            .expect("non-empty cluster");
        segments.push(seg);
    }
    segments.sort_by_key(|s| s.id());
    segments
}

// ---------------------------------------------------------------------------
// Incremental store
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct StoreSegment {
    /// Append-only point list; the prefix of length `observations[i].point_count`
    /// is the state at observation `i`.
    points: Vec<Vec3>,
    observations: Vec<Observation>,
    dedup: HashSet<(i64, i64, i64)>,
}

/// Single-writer incremental segment store.
#[derive(Clone, Debug)]
pub struct SegmentStore {
    params: ClusterParams,
    clusters: BTreeMap<u64, StoreSegment>,
    /// Spatial index over all stored points: cell -> (cluster id, point).
    grid: HashMap<(i64, i64, i64), Vec<(u64, Vec3)>>,
    next_id: u64,
}

impl SegmentStore {
    pub fn new(params: ClusterParams) -> Self {
        Self {
            params,
            clusters: BTreeMap::new(),
            grid: HashMap::new(),
            next_id: 0,
        }
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    /// Ids of segments at or above the reporting threshold.
    pub fn segment_ids(&self) -> Vec<u64> {
        self.clusters
            .iter()
            .filter(|(_, c)| c.points.len() >= self.params.min_points)
            .map(|(id, _)| *id)
            .collect()
    }

    /// Current state of one segment (threshold not applied).
    pub fn segment(&self, id: u64) -> Option<Segment> {
        let c = self.clusters.get(&id)?;
        Segment::new(id, c.points.clone(), c.observations.clone(), None).ok()
    }

    /// Point prefix of a segment at a given observation index.
    pub fn segment_at_observation(&self, id: u64, obs_index: usize) -> Option<Segment> {
        let c = self.clusters.get(&id)?;
        let obs = c.observations.get(..=obs_index)?;
        let count = obs[obs_index].point_count;
        Segment::new(id, c.points[..count].to_vec(), obs.to_vec(), None).ok()
    }

    pub fn observations(&self, id: u64) -> Option<&[Observation]> {
        self.clusters.get(&id).map(|c| c.observations.as_slice())
    }

    pub fn point_count(&self, id: u64) -> usize {
        self.clusters.get(&id).map_or(0, |c| c.points.len())
    }

    /// Feeds one scan's points (map frame) into the store. Points join an
    /// existing cluster when within `radius` of any member, bridge points
    /// merge clusters (the lower id survives), and every touched cluster
    /// gets an observation appended. Returns the ids of touched clusters
    /// that meet the reporting threshold.
    pub fn update(&mut self, points: &[Vec3], timestamp: f64) -> Vec<u64> {
        let kept: Vec<Vec3> = points
            .iter()
            .filter(|p| p.z >= self.params.ground_z)
            .copied()
            .collect();
        let r2 = self.params.radius * self.params.radius;

        // Union-find over new points.
        let mut parent: Vec<usize> = (0..kept.len()).collect();
        fn find(parent: &mut [usize], i: usize) -> usize {
            let mut root = i;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = i;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        let mut new_grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (k, p) in kept.iter().enumerate() {
            new_grid.entry(cell_of(p, self.params.radius)).or_default().push(k);
        }
        // New-new links.
        for (k, p) in kept.iter().enumerate() {
            let (cx, cy, cz) = cell_of(p, self.params.radius);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = new_grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &other in bucket {
                            if other > k && (kept[other] - p).norm_squared() <= r2 {
                                let (ra, rb) = (find(&mut parent, k), find(&mut parent, other));
                                if ra != rb {
                                    parent[ra.max(rb)] = ra.min(rb);
                                }
                            }
                        }
                    }
                }
            }
        }
        // New-existing links: per new point, the set of touched cluster ids.
        let mut touched_by_point: Vec<Vec<u64>> = vec![Vec::new(); kept.len()];
        for (k, p) in kept.iter().enumerate() {
            let (cx, cy, cz) = cell_of(p, self.params.radius);
            let mut touched: Vec<u64> = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = self.grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for (cid, q) in bucket {
                            if (q - p).norm_squared() <= r2 && !touched.contains(cid) {
                                touched.push(*cid);
                            }
                        }
                    }
                }
            }
            touched_by_point[k] = touched;
        }

        // Group new points by root and gather the union of touched clusters.
        let mut groups: BTreeMap<usize, (Vec<usize>, Vec<u64>)> = BTreeMap::new();
        for (k, touched) in touched_by_point.iter().enumerate() {
            let root = find(&mut parent, k);
            let entry = groups.entry(root).or_default();
            entry.0.push(k);
            for cid in touched {
                if !entry.1.contains(cid) {
                    entry.1.push(*cid);
                }
            }
        }

        // Earlier groups may merge a cluster away before a later group
        // references it; aliases map stale ids to their survivor.
        let mut alias: BTreeMap<u64, u64> = BTreeMap::new();
        let resolve = |alias: &BTreeMap<u64, u64>, mut id: u64| {
            while let Some(next) = alias.get(&id) {
                id = *next;
            }
            id
        };

        let mut touched_clusters: Vec<u64> = Vec::new();
        for (_, (members, cluster_ids)) in groups {
            let mut cluster_ids: Vec<u64> = cluster_ids
                .into_iter()
                .map(|id| resolve(&alias, id))
                .collect();
            cluster_ids.sort_unstable();
            cluster_ids.dedup();
            let target = if cluster_ids.is_empty() {
                let id = self.next_id;
                self.next_id += 1;
                self.clusters.insert(
                    id,
                    StoreSegment {
                        points: Vec::new(),
                        observations: Vec::new(),
                        dedup: HashSet::new(),
                    },
                );
                id
            } else {
                // Merge all touched clusters into the lowest id.
                let target = cluster_ids[0];
                for cid in cluster_ids[1..].iter() {
                    self.merge_into(target, *cid);
                    alias.insert(*cid, target);
                }
                target
            };
            let cluster = self.clusters.get_mut(&target).expect("target exists");
            for k in members {
                let p = kept[k];
                let key = cell_of(&p, DEDUP_VOXEL);
                if cluster.dedup.insert(key) {
                    cluster.points.push(p);
                    self.grid
                        .entry(cell_of(&p, self.params.radius))
                        .or_default()
                        .push((target, p));
                }
            }
            if !touched_clusters.contains(&target) {
                touched_clusters.push(target);
            }
        }

        // Observation history for every touched cluster; targets recorded
        // early may have been merged away by a later group.
        let mut final_touched: Vec<u64> = touched_clusters
            .into_iter()
            .map(|id| resolve(&alias, id))
            .collect();
        final_touched.sort_unstable();
        final_touched.dedup();
        for cid in &final_touched {
            let cluster = self.clusters.get_mut(cid).expect("touched exists");
            cluster.observations.push(Observation {
                timestamp,
                point_count: cluster.points.len(),
            });
        }
        final_touched
            .into_iter()
            .filter(|id| self.clusters[id].points.len() >= self.params.min_points)
            .collect()
    }

    fn merge_into(&mut self, target: u64, source: u64) {
        debug_assert!(target < source);
        let src = self.clusters.remove(&source).expect("source exists");
        // Re-home the spatial index entries of the source.
        for p in &src.points {
            if let Some(bucket) = self.grid.get_mut(&cell_of(p, self.params.radius)) {
                for entry in bucket.iter_mut() {
                    if entry.0 == source {
                        entry.0 = target;
                    }
                }
            }
        }
        // Only the merge target's history is retained; the source's counts
        // are not comparable with the target's monotone sequence.
        let dst = self.clusters.get_mut(&target).expect("target exists");
        for p in src.points {
            let key = cell_of(&p, DEDUP_VOXEL);
            if dst.dedup.insert(key) {
                dst.points.push(p);
            }
        }
    }
}

/// Dumps the store's reportable segments as `segments_%06d.csv` with rows
/// `segment_id,x,y,z`, named by the scan index of the state.
pub fn write_segment_dump(
    dir: &std::path::Path,
    scan_index: usize,
    store: &SegmentStore,
) -> std::io::Result<std::path::PathBuf> {
    use std::fmt::Write as _;
    let mut out = String::from("segment_id,x,y,z\n");
    for id in store.segment_ids() {
        let seg = store.segment(id).expect("reported segment exists");
        for p in seg.points() {
            writeln!(out, "{id},{},{},{}", p.x, p.y, p.z).expect("string write");
        }
    }
    let path = dir.join(format!("segments_{scan_index:06}.csv"));
    std::fs::write(&path, out)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Voxelization
// ---------------------------------------------------------------------------

pub const VOXEL_NX: usize = 32;
pub const VOXEL_NY: usize = 32;
pub const VOXEL_NZ: usize = 16;

/// Occupancy grid of a segment, centered on its centroid and isotropically
/// scaled so the bounding box fits.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub occupancy: Vec<f64>,
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl VoxelGrid {
    #[inline]
    pub fn idx(x: usize, y: usize, z: usize) -> usize {
        (x * VOXEL_NY + y) * VOXEL_NZ + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.occupancy[Self::idx(x, y, z)]
    }
}

/// Voxelizes a segment: points are taken relative to the centroid, scaled
/// isotropically so the half-extents fit 32x32x16, counted per voxel and
/// normalized by the maximum count.
pub fn voxelize(segment: &Segment) -> VoxelGrid {
    let c = segment.centroid();
    let mut half = Vec3::zeros();
    for p in segment.points() {
        let d = p - c;
        half.x = half.x.max(d.x.abs());
        half.y = half.y.max(d.y.abs());
        half.z = half.z.max(d.z.abs());
    }
    let hx = VOXEL_NX as f64 / 2.0;
    let hy = VOXEL_NY as f64 / 2.0;
    let hz = VOXEL_NZ as f64 / 2.0;
    let mut scale = f64::INFINITY; // voxels per meter
    if half.x > 0.0 {
        scale = scale.min(hx / half.x);
    }
    if half.y > 0.0 {
        scale = scale.min(hy / half.y);
    }
    if half.z > 0.0 {
        scale = scale.min(hz / half.z);
    }
    let degenerate = !scale.is_finite();
    if degenerate {
        scale = 1.0;
    }
    let mut counts = vec![0usize; VOXEL_NX * VOXEL_NY * VOXEL_NZ];
    for p in segment.points() {
        let d = (p - c) * scale;
        let xi = ((d.x + hx).floor() as i64).clamp(0, VOXEL_NX as i64 - 1) as usize;
        let yi = ((d.y + hy).floor() as i64).clamp(0, VOXEL_NY as i64 - 1) as usize;
        let zi = ((d.z + hz).floor() as i64).clamp(0, VOXEL_NZ as i64 - 1) as usize;
        counts[VoxelGrid::idx(xi, yi, zi)] += 1;
    }
    let max = *counts.iter().max().expect("non-empty grid") as f64;
    let voxel_size = 1.0 / scale;
    VoxelGrid {
        occupancy: counts.iter().map(|n| *n as f64 / max).collect(),
        voxel_size,
        origin: c - Vec3::new(hx, hy, hz) * voxel_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Pcg32;

    fn blob(rng: &mut Pcg32, center: Vec3, n: usize, spread: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                center
                    + Vec3::new(
                        rng.uniform(-spread, spread),
                        rng.uniform(-spread, spread),
                        rng.uniform(-spread, spread),
                    )
            })
            .collect()
    }

    fn dense_blob(center: Vec3, n: usize) -> Vec<Vec3> {
        // Points chained within the clustering radius, spaced well above
        // the dedup voxel.
        (0..n)
            .map(|i| center + Vec3::new(0.15 * i as f64, 0.0, 0.0))
            .collect()
    }

    #[test]
    fn two_separated_blobs_give_two_segments() {
        let params = ClusterParams {
            radius: 0.2,
            min_points: 5,
            ground_z: -10.0,
        };
        let mut pts = dense_blob(Vec3::new(0.0, 0.0, 1.0), 10);
        pts.extend(dense_blob(Vec3::new(10.0 * 0.2 + 2.0, 0.0, 1.0), 10));
        let segs = euclidean_cluster(&pts, &params);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].points().len(), 10);
    }

    #[test]
    fn chained_points_form_one_segment() {
        let params = ClusterParams {
            radius: 0.2,
            min_points: 5,
            ground_z: -10.0,
        };
        let pts = dense_blob(Vec3::new(0.0, 0.0, 1.0), 50);
        let segs = euclidean_cluster(&pts, &params);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].points().len(), 50);
    }

    #[test]
    fn undersized_cluster_is_discarded() {
        let params = ClusterParams {
            radius: 0.2,
            min_points: 10,
            ground_z: -10.0,
        };
        let pts = dense_blob(Vec3::new(0.0, 0.0, 1.0), 9);
        assert!(euclidean_cluster(&pts, &params).is_empty());
    }

    #[test]
    fn ground_points_are_removed_first() {
        let params = ClusterParams {
            radius: 0.5,
            min_points: 3,
            ground_z: 0.3,
        };
        let mut pts = dense_blob(Vec3::new(0.0, 0.0, 1.0), 5);
        // Ground carpet that would bridge everything if kept.
        for i in 0..100 {
            pts.push(Vec3::new(i as f64 * 0.1, 0.0, 0.05));
        }
        let segs = euclidean_cluster(&pts, &params);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].points().len(), 5);
    }

    #[test]
    fn incremental_far_points_become_new_segments() {
        let params = ClusterParams {
            radius: 0.2,
            min_points: 5,
            ground_z: -10.0,
        };
        let mut store = SegmentStore::new(params);
        let a = dense_blob(Vec3::new(0.0, 0.0, 1.0), 10);
        let ids0 = store.update(&a, 0.0);
        assert_eq!(ids0.len(), 1);
        let b = dense_blob(Vec3::new(50.0, 0.0, 1.0), 10);
        let ids1 = store.update(&b, 1.0);
        assert_eq!(ids1.len(), 1);
        assert_ne!(ids0[0], ids1[0]);
        assert_eq!(store.point_count(ids0[0]), 10);
    }

    #[test]
    fn bridge_point_merges_keeping_lower_id() {
        let params = ClusterParams {
            radius: 0.2,
            min_points: 3,
            ground_z: -10.0,
        };
        let mut store = SegmentStore::new(params);
        let a = dense_blob(Vec3::new(0.0, 0.0, 1.0), 5); // spans x 0..0.6
        let b = dense_blob(Vec3::new(0.9, 0.0, 1.0), 5); // spans x 0.9..1.5
        let ids_a = store.update(&a, 0.0);
        let ids_b = store.update(&b, 1.0);
        assert_ne!(ids_a[0], ids_b[0]);
        // Bridge at x = 0.75 reaches both ends (0.15 to either side).
        let bridge = vec![Vec3::new(0.75, 0.0, 1.0)];
        let ids = store.update(&bridge, 2.0);
        assert_eq!(ids, vec![ids_a[0].min(ids_b[0])]);
        assert_eq!(store.point_count(ids[0]), 11);
        assert!(store.segment(ids_a[0].max(ids_b[0])).is_none());
    }

    #[test]
    fn refeeding_identical_scan_keeps_counts() {
        let params = ClusterParams {
            radius: 0.3,
            min_points: 5,
            ground_z: -10.0,
        };
        let mut rng = Pcg32::new(3);
        let pts = blob(&mut rng, Vec3::new(0.0, 0.0, 2.0), 60, 0.8);
        let mut store = SegmentStore::new(params);
        let ids = store.update(&pts, 0.0);
        let count = store.point_count(ids[0]);
        let ids2 = store.update(&pts, 1.0);
        assert_eq!(ids, ids2);
        assert_eq!(store.point_count(ids[0]), count);
        // Second observation appended with an equal count.
        let obs = store.observations(ids[0]).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].point_count, obs[1].point_count);
    }

    #[test]
    fn incremental_matches_batch_on_union() {
        let params = ClusterParams {
            radius: 0.25,
            min_points: 8,
            ground_z: 0.0,
        };
        let mut rng = Pcg32::new(17);
        let centers = [
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(8.0, 3.0, 1.5),
            Vec3::new(-6.0, 7.0, 2.5),
        ];
        let scans: Vec<Vec<Vec3>> = (0..4)
            .map(|_| {
                let mut scan = Vec::new();
                for c in centers {
                    scan.extend(blob(&mut rng, c, 25, 0.6));
                }
                scan
            })
            .collect();
        let mut store = SegmentStore::new(params.clone());
        for (i, scan) in scans.iter().enumerate() {
            store.update(scan, i as f64);
        }
        // Batch clustering over the deduplicated union.
        let mut union: Vec<Vec3> = Vec::new();
        let mut dedup = HashSet::new();
        for scan in &scans {
            for p in scan {
                if p.z >= params.ground_z && dedup.insert(cell_of(p, DEDUP_VOXEL)) {
                    union.push(*p);
                }
            }
        }
        let batch = euclidean_cluster(&union, &params);
        let inc_ids = store.segment_ids();
        assert_eq!(batch.len(), inc_ids.len());
        let mut batch_sizes: Vec<usize> = batch.iter().map(|s| s.points().len()).collect();
        let mut inc_sizes: Vec<usize> = inc_ids
            .iter()
            .map(|id| store.point_count(*id))
            .collect();
        batch_sizes.sort_unstable();
        inc_sizes.sort_unstable();
        assert_eq!(batch_sizes, inc_sizes);
    }

    #[test]
    fn completeness_is_monotone_over_history() {
        let params = ClusterParams {
            radius: 0.3,
            min_points: 5,
            ground_z: -10.0,
        };
        let mut rng = Pcg32::new(8);
        let mut store = SegmentStore::new(params);
        for k in 0..5 {
            let pts = blob(&mut rng, Vec3::new(0.2 * k as f64, 0.0, 2.0), 30, 0.5);
            store.update(&pts, k as f64);
        }
        let id = store.segment_ids()[0];
        let fin = store.segment(id).unwrap();
        let mut last = 0.0;
        for (i, _) in store.observations(id).unwrap().iter().enumerate() {
            let at = store.segment_at_observation(id, i).unwrap();
            let c = crate::types::completeness(&at, &fin).unwrap().value();
            assert!(c >= last);
            last = c;
        }
        assert_eq!(last, 1.0);
    }

    // -- voxelize ------------------------------------------------------------

    #[test]
    fn single_point_occupies_center_voxel() {
        let seg = Segment::new(0, vec![Vec3::new(4.0, -2.0, 7.0)], vec![], None).unwrap();
        let v = voxelize(&seg);
        assert_eq!(v.get(16, 16, 8), 1.0);
        assert_eq!(v.occupancy.iter().filter(|o| **o > 0.0).count(), 1);
    }

    #[test]
    fn uniform_cube_has_flat_interior_occupancy() {
        // Regular lattice of points in a cube; occupancy of interior voxels
        // is near-constant.
        let mut pts = Vec::new();
        let n = 24;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    pts.push(Vec3::new(
                        x as f64 / (n - 1) as f64 * 2.0,
                        y as f64 / (n - 1) as f64 * 2.0,
                        z as f64 / (n - 1) as f64 * 2.0,
                    ));
                }
            }
        }
        let seg = Segment::new(0, pts, vec![], None).unwrap();
        let v = voxelize(&seg);
        // z half-extent limits the scale; interior voxels along x,y span
        // the middle 16 cells.
        let mut vals = Vec::new();
        for x in 9..23 {
            for y in 9..23 {
                for z in 1..15 {
                    vals.push(v.get(x, y, z));
                }
            }
        }
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 =
            vals.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / vals.len() as f64;
        assert!(mean > 0.0);
        assert!(var < 0.1, "interior occupancy variance {var}");
    }

    #[test]
    fn voxelize_is_translation_invariant() {
        // Dyadic coordinates so the translated centroid math is exact.
        let mut rng = Pcg32::new(10);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| {
                Vec3::new(
                    (rng.below(64) as f64) * 0.125,
                    (rng.below(64) as f64) * 0.125,
                    (rng.below(32) as f64) * 0.125,
                )
            })
            .collect();
        let t = Vec3::new(128.0, -64.0, 32.0);
        let moved: Vec<Vec3> = pts.iter().map(|p| p + t).collect();
        let a = voxelize(&Segment::new(0, pts, vec![], None).unwrap());
        let b = voxelize(&Segment::new(0, moved, vec![], None).unwrap());
        assert_eq!(a.occupancy, b.occupancy);
        assert!(a.occupancy.iter().all(|o| (0.0..=1.0).contains(o)));
    }
}
