//! End-to-end orchestration: scans through segmentation, view synthesis,
//! description, matching and evaluation. Shared by the CLI and the
//! integration tests.
//!
//! Per-scan intensity/range images are stored once and shared; each
//! (segment, scan) view keeps only its mask. Descriptor databases come in
//! two layouts: one entry per described observation (rank evaluation) and
//! one entry per segment at its final observation (localization).

use crate::attention::{
    attention_score, channel_masks, descriptor_weights, scorecam_heatmap, DistanceNorm, Heatmap,
};
use crate::imaging::{compute_mask_points, ProjectionMargins};
use crate::localization::{
    localize, DbEntry, LocalizeParams, LoopClosure, MatchPolicy, QuerySegment, SegmentDb,
};
use crate::log_debug;
use crate::net::{
    forward, normalize_inputs, select_view_by, train, voxels_to_feat, DatasetStats, NetError,
    NetParams, TrainConfig, TrainOutcome, TrainSample, ViewQuery, VisualTensor,
};
use crate::segmentation::{voxelize, ClusterParams, SegmentStore};
use crate::synth::{simulate_scan, ScanConfig, Scenario, SequenceSpec, SynthError};
use crate::types::{Descriptor, Grid2, PoseSE3, Vec3, VisualView};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error(transparent)]
    Loc(#[from] crate::localization::LocError),
    #[error(transparent)]
    Attention(#[from] crate::attention::AttentionError),
    #[error(transparent)]
    Type(#[from] crate::types::TypeError),
    #[error("training produced no usable samples")]
    NoTrainingData,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub scan: ScanConfig,
    pub cluster: ClusterParams,
    pub margins: ProjectionMargins,
    pub range_tolerance: f64,
    /// Cap on training views per segment (evenly subsampled).
    pub max_train_views: usize,
    /// Cap on described observations per segment (evenly subsampled).
    pub max_observations: usize,
    /// Dilation radius of the attention score neighborhood, pixels.
    pub attention_dilation: usize,
    /// Standard deviation of injected pose translation noise, meters.
    pub pose_noise_trans: f64,
    /// Standard deviation of injected pose rotation noise, radians.
    pub pose_noise_rot: f64,
    pub noise_seed: u64,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scan: ScanConfig::default(),
            cluster: ClusterParams {
                radius: 0.35,
                min_points: 60,
                ground_z: 0.3,
            },
            margins: ProjectionMargins::default(),
            range_tolerance: 0.2,
            max_train_views: 8,
            max_observations: 12,
            attention_dilation: 5,
            pose_noise_trans: 0.0,
            pose_noise_rot: 0.0,
            noise_seed: 0,
            threads: 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Sequence processing
// ---------------------------------------------------------------------------

/// Shared per-scan images.
#[derive(Clone, Debug)]
pub struct ScanImages {
    pub intensity: Grid2<f64>,
    pub range: Grid2<f64>,
    pub timestamp: f64,
}

/// A (segment, scan) view holding only its mask; images are shared.
#[derive(Clone, Debug)]
pub struct StoredView {
    pub scan_index: usize,
    pub timestamp: f64,
    pub mask: Grid2<u8>,
    pub mask_area: usize,
    /// Index into the segment's observation history.
    pub obs_index: usize,
}

#[derive(Debug)]
pub struct ProcessedSequence {
    pub sequence_id: u64,
    pub store: SegmentStore,
    pub images: Vec<Arc<ScanImages>>,
    pub scan_times: Vec<f64>,
    /// Time-sorted views per segment id.
    pub views: BTreeMap<u64, Vec<StoredView>>,
    /// Majority ground-truth object id per segment.
    pub truth: BTreeMap<u64, i64>,
    /// Segments touched per scan index.
    pub touched_per_scan: Vec<Vec<u64>>,
}

impl ProcessedSequence {
    pub fn materialize_view(&self, v: &StoredView) -> VisualView {
        let img = &self.images[v.scan_index];
        VisualView {
            intensity: img.intensity.clone(),
            range: img.range.clone(),
            mask: v.mask.clone(),
            timestamp: v.timestamp,
            mask_area: v.mask_area,
        }
    }
}

fn point_key(p: &Vec3) -> (u64, u64, u64) {
    (p.x.to_bits(), p.y.to_bits(), p.z.to_bits())
}

fn perturbed_pose(pose: &PoseSE3, cfg: &PipelineConfig, rng: &mut crate::rng::Pcg32) -> PoseSE3 {
    if cfg.pose_noise_trans == 0.0 && cfg.pose_noise_rot == 0.0 {
        return *pose;
    }
    let dt = Vec3::new(
        rng.normal(0.0, cfg.pose_noise_trans),
        rng.normal(0.0, cfg.pose_noise_trans),
        rng.normal(0.0, cfg.pose_noise_trans * 0.2),
    );
    let axis = Vec3::new(
        rng.normal(0.0, 1.0),
        rng.normal(0.0, 1.0),
        rng.normal(0.0, 1.0),
    )
    .normalize();
    let angle = rng.normal(0.0, cfg.pose_noise_rot);
    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        .matrix()
        .to_owned();
    let noise = PoseSE3::new(rot, dt, pose.timestamp()).expect("noise pose");
    pose.compose(&noise)
}

/// Incremental sequence processor: feed scans one at a time, then finish.
pub struct SequenceProcessor {
    cfg: PipelineConfig,
    sequence_id: u64,
    store: SegmentStore,
    images: Vec<Arc<ScanImages>>,
    scan_times: Vec<f64>,
    views: BTreeMap<u64, Vec<StoredView>>,
    label_of_point: std::collections::HashMap<(u64, u64, u64), i64>,
    touched_per_scan: Vec<Vec<u64>>,
    noise_rng: crate::rng::Pcg32,
}

impl SequenceProcessor {
    pub fn new(sequence_id: u64, cfg: &PipelineConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            sequence_id,
            store: SegmentStore::new(cfg.cluster.clone()),
            images: Vec::new(),
            scan_times: Vec::new(),
            views: BTreeMap::new(),
            label_of_point: std::collections::HashMap::new(),
            touched_per_scan: Vec::new(),
            noise_rng: crate::rng::Pcg32::new(crate::rng::derive_seed(
                cfg.noise_seed,
                &format!("pose-noise-{sequence_id}"),
            )),
        }
    }

    pub fn push_scan(&mut self, scan: &crate::synth::SimulatedScan) -> Result<(), PipelineError> {
        let cfg = &self.cfg;
        let i = self.images.len();
        let t0 = scan.t0;
        let pose0 = perturbed_pose(&scan.pose0, cfg, &mut self.noise_rng);
        // Map-frame points.
        let points_world: Vec<Vec3> = scan
            .points_grid
            .iter()
            .map(|p| pose0.transform_point(p))
            .collect();
        for (p, label) in points_world.iter().zip(scan.point_object_ids.iter()) {
            if p.z >= cfg.cluster.ground_z {
                self.label_of_point.insert(point_key(p), *label);
            }
        }
        let touched = self.store.update(&points_world, t0);
        let max_range = cfg.scan.max_range;
        for id in &touched {
            let seg = self.store.segment(*id).expect("touched segment exists");
            if (pose0.translation() - seg.centroid()).norm() > max_range + 40.0 {
                continue;
            }
            // Segment points into the grid frame, skipping points the
            // sensor cannot see from here.
            let mut pts: Vec<Vec3> = seg
                .points()
                .iter()
                .map(|p| pose0.inverse_transform_point(p))
                .filter(|p| p.norm() <= max_range)
                .collect();
            if pts.len() > 6000 {
                let stride = pts.len().div_ceil(6000);
                pts = pts.into_iter().step_by(stride).collect();
            }
            if pts.is_empty() {
                continue;
            }
            let mask = compute_mask_points(&pts, &scan.grid, &cfg.margins, cfg.range_tolerance)?;
            let mask_area = mask.data().iter().filter(|m| **m != 0).count();
            if mask_area == 0 {
                continue;
            }
            let obs_index = self.store.observations(*id).expect("history").len() - 1;
            self.views.entry(*id).or_default().push(StoredView {
                scan_index: i,
                timestamp: t0,
                mask,
                mask_area,
                obs_index,
            });
        }
        self.images.push(Arc::new(ScanImages {
            intensity: Grid2::from_data(
                cfg.scan.height,
                cfg.scan.width,
                scan.grid.intensities().to_vec(),
            ),
            range: Grid2::from_data(cfg.scan.height, cfg.scan.width, scan.grid.ranges().to_vec()),
            timestamp: t0,
        }));
        self.scan_times.push(t0);
        self.touched_per_scan.push(touched);
        Ok(())
    }

    pub fn finish(self) -> ProcessedSequence {
        // Majority ground-truth label per segment.
        let mut truth = BTreeMap::new();
        for id in self.store.segment_ids() {
            let seg = self.store.segment(id).expect("segment exists");
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for p in seg.points() {
                if let Some(label) = self.label_of_point.get(&point_key(p)) {
                    *counts.entry(*label).or_insert(0) += 1;
                }
            }
            if let Some((label, _)) = counts.iter().max_by_key(|(_, n)| **n) {
                truth.insert(id, *label);
            }
        }
        ProcessedSequence {
            sequence_id: self.sequence_id,
            store: self.store,
            images: self.images,
            scan_times: self.scan_times,
            views: self.views,
            truth,
            touched_per_scan: self.touched_per_scan,
        }
    }
}

/// Streams the scans of one sequence through the segment store, computing
/// aligned masks for every touched segment.
pub fn process_sequence(
    world: &crate::synth::World,
    seq: &SequenceSpec,
    period: f64,
    cfg: &PipelineConfig,
) -> Result<ProcessedSequence, PipelineError> {
    let mut proc = SequenceProcessor::new(seq.id, cfg);
    for i in 0..seq.scan_count {
        let t0 = seq.scan_start(i);
        let scan = simulate_scan(world, &seq.trajectory, t0, period, &cfg.scan, cfg.threads)?;
        proc.push_scan(&scan)?;
    }
    Ok(proc.finish())
}

/// Processes already materialized scans (archive playback).
pub fn process_loaded(
    sequence_id: u64,
    scans: &[crate::synth::SimulatedScan],
    cfg: &PipelineConfig,
) -> Result<ProcessedSequence, PipelineError> {
    let mut proc = SequenceProcessor::new(sequence_id, cfg);
    for scan in scans {
        proc.push_scan(scan)?;
    }
    Ok(proc.finish())
}

// ---------------------------------------------------------------------------
// Training data and description
// ---------------------------------------------------------------------------

/// Maps ground-truth object ids to dense class indices.
#[derive(Clone, Debug, Default)]
pub struct ClassMap {
    pub truth_to_class: BTreeMap<i64, usize>,
}

impl ClassMap {
    pub fn class_of(&self, truth: i64) -> Option<usize> {
        self.truth_to_class.get(&truth).copied()
    }

    pub fn len(&self) -> usize {
        self.truth_to_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth_to_class.is_empty()
    }
}

fn evenly_spaced(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    (0..cap)
        .map(|k| k * (n - 1) / (cap - 1).max(1))
        .collect()
}

/// Builds the classification training set from a processed sequence:
/// train-mode view selection per observation, capped per segment.
pub fn build_training_set(
    seq: &ProcessedSequence,
    cfg: &PipelineConfig,
) -> Result<(Vec<TrainSample>, ClassMap, DatasetStats), PipelineError> {
    // Classes: ground-truth ids of segments with at least one usable view.
    let mut class_map = ClassMap::default();
    let mut usable: BTreeMap<u64, Vec<&StoredView>> = BTreeMap::new();
    for (id, views) in &seq.views {
        let good: Vec<&StoredView> = views
            .iter()
            .filter(|v| v.mask_area >= crate::net::MIN_MASK_AREA)
            .collect();
        if good.is_empty() {
            continue;
        }
        let Some(truth) = seq.truth.get(id) else {
            continue;
        };
        usable.insert(*id, good);
        let next = class_map.truth_to_class.len();
        class_map.truth_to_class.entry(*truth).or_insert(next);
    }
    if class_map.len() < 2 {
        return Err(PipelineError::NoTrainingData);
    }
    // Dataset statistics over the selected training views.
    let mut stat_views: Vec<VisualView> = Vec::new();
    let mut raw_samples: Vec<(u64, usize, usize)> = Vec::new(); // (segment, view idx within usable, class)
    for (id, good) in &usable {
        let truth = seq.truth[id];
        let class = class_map.class_of(truth).expect("class registered");
        for k in evenly_spaced(good.len(), cfg.max_train_views) {
            raw_samples.push((*id, k, class));
        }
    }
    for (id, k, _) in &raw_samples {
        stat_views.push(seq.materialize_view(usable[id][*k]));
    }
    let stats = DatasetStats::from_views(stat_views.iter());
    let mut samples = Vec::with_capacity(raw_samples.len());
    for ((id, k, class), view) in raw_samples.iter().zip(stat_views.iter()) {
        let stored = usable[id][*k];
        let seg = seq
            .store
            .segment_at_observation(*id, stored.obs_index)
            .expect("observation prefix");
        let voxels = voxels_to_feat(&voxelize(&seg));
        samples.push(TrainSample {
            voxels,
            visual: normalize_inputs(view, &stats),
            class: *class,
        });
    }
    if samples.is_empty() {
        return Err(PipelineError::NoTrainingData);
    }
    Ok((samples, class_map, stats))
}

/// One described segment observation.
#[derive(Clone, Debug)]
pub struct DescribedObservation {
    pub segment_id: u64,
    pub sequence_id: u64,
    pub obs_index: usize,
    pub timestamp: f64,
    pub completeness: f64,
    pub mask_area: usize,
    pub centroid: Vec3,
    pub truth_id: i64,
    pub descriptor: Descriptor,
}

/// Describes segment observations in test mode (best view so far), capped
/// per segment, skipping observations without a usable view.
pub fn describe_observations(
    seq: &ProcessedSequence,
    params: &NetParams<f32>,
    stats: &DatasetStats,
    cfg: &PipelineConfig,
) -> Result<Vec<DescribedObservation>, PipelineError> {
    let mut out = Vec::new();
    for (id, views) in &seq.views {
        let Some(truth) = seq.truth.get(id).copied() else {
            continue;
        };
        let final_seg = seq.store.segment(*id).expect("segment exists");
        let n_obs = seq.store.observations(*id).expect("history").len();
        for obs_index in evenly_spaced(n_obs, cfg.max_observations) {
            let so_far: Vec<&StoredView> = views
                .iter()
                .filter(|v| v.obs_index <= obs_index)
                .collect();
            let Some(best) =
                select_view_by(&so_far, ViewQuery::Test, |v| (v.timestamp, v.mask_area))
            else {
                continue;
            };
            let seg = seq
                .store
                .segment_at_observation(*id, obs_index)
                .expect("observation prefix");
            let completeness = crate::types::completeness(&seg, &final_seg)?.value();
            let view = seq.materialize_view(best);
            let tensor = normalize_inputs(&view, stats);
            let voxels = voxels_to_feat(&voxelize(&seg));
            let fwd = forward(params, &voxels, &tensor.0)?;
            out.push(DescribedObservation {
                segment_id: *id,
                sequence_id: seq.sequence_id,
                obs_index,
                timestamp: seq.store.observations(*id).expect("history")[obs_index].timestamp,
                completeness,
                mask_area: best.mask_area,
                centroid: *seg.centroid(),
                truth_id: truth,
                descriptor: crate::net::descriptor_from_output(&fwd.descriptor)?,
            });
        }
    }
    Ok(out)
}

/// Database with one entry per described observation (rank evaluation).
pub fn rank_database(observations: &[DescribedObservation]) -> SegmentDb {
    SegmentDb::new(
        observations
            .iter()
            .map(|o| DbEntry {
                segment_id: o.segment_id,
                sequence_id: o.sequence_id,
                descriptor: o.descriptor.clone(),
                centroid: o.centroid,
                truth_id: Some(o.truth_id),
            })
            .collect(),
    )
}

/// Database with one entry per segment at its most complete observation
/// (localization).
pub fn localization_database(observations: &[DescribedObservation]) -> SegmentDb {
    let mut last: BTreeMap<u64, &DescribedObservation> = BTreeMap::new();
    for o in observations {
        match last.get(&o.segment_id) {
            Some(prev) if prev.obs_index >= o.obs_index => {}
            _ => {
                last.insert(o.segment_id, o);
            }
        }
    }
    SegmentDb::new(
        last.values()
            .map(|o| DbEntry {
                segment_id: o.segment_id,
                sequence_id: o.sequence_id,
                descriptor: o.descriptor.clone(),
                centroid: o.centroid,
                truth_id: Some(o.truth_id),
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Localization over a query sequence
// ---------------------------------------------------------------------------

/// Runs localization once per query scan: the local map consists of the
/// segments touched by that scan, each described at its latest observation
/// up to the scan. Both maps live in the world frame, so the ground-truth
/// relative pose is the identity and the translational error is the norm
/// of the estimated translation.
pub fn localize_sequence(
    query: &ProcessedSequence,
    query_obs: &[DescribedObservation],
    db: &SegmentDb,
    policy: MatchPolicy,
) -> Result<Vec<LoopClosure>, PipelineError> {
    localize_sequence_with(query, query_obs, db, &LocalizeParams::for_policy(policy))
}

/// `localize_sequence` with explicit matching parameters.
pub fn localize_sequence_with(
    query: &ProcessedSequence,
    query_obs: &[DescribedObservation],
    db: &SegmentDb,
    params: &LocalizeParams,
) -> Result<Vec<LoopClosure>, PipelineError> {
    // Latest described observation per segment up to a scan time.
    let mut by_segment: BTreeMap<u64, Vec<&DescribedObservation>> = BTreeMap::new();
    for o in query_obs {
        by_segment.entry(o.segment_id).or_default().push(o);
    }
    let mut closures = Vec::new();
    for (scan_idx, touched) in query.touched_per_scan.iter().enumerate() {
        let t = query.scan_times[scan_idx];
        let mut local: Vec<QuerySegment> = Vec::new();
        for id in touched {
            let Some(obs_list) = by_segment.get(id) else {
                continue;
            };
            let Some(best) = obs_list
                .iter()
                .filter(|o| o.timestamp <= t)
                .max_by(|a, b| {
                    a.obs_index
                        .cmp(&b.obs_index)
                })
            else {
                continue;
            };
            local.push(QuerySegment {
                segment_id: *id,
                sequence_id: query.sequence_id,
                descriptor: best.descriptor.clone(),
                centroid: best.centroid,
            });
        }
        if local.len() < params.min_cluster {
            continue;
        }
        match localize(&local, db, params, t) {
            Ok(Some(mut closure)) => {
                closure.error_m = Some(closure.pose.translation().norm());
                closures.push(closure);
            }
            Ok(None) => {}
            Err(crate::localization::LocError::DegenerateGeometry) => {
                log_debug!("degenerate closure geometry at t={t}, skipped");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(closures)
}

// ---------------------------------------------------------------------------
// Attention analysis over described segments
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SegmentAttention {
    pub segment_id: u64,
    pub score: f64,
    pub heatmap: Heatmap,
    pub view: VisualView,
}

/// Heatmap and attention score of each segment's final described
/// observation, using the descriptor-output channel weighting.
pub fn attention_for_segments(
    seq: &ProcessedSequence,
    observations: &[DescribedObservation],
    params: &NetParams<f32>,
    stats: &DatasetStats,
    cfg: &PipelineConfig,
) -> Result<Vec<SegmentAttention>, PipelineError> {
    let mut last: BTreeMap<u64, &DescribedObservation> = BTreeMap::new();
    for o in observations {
        match last.get(&o.segment_id) {
            Some(prev) if prev.obs_index >= o.obs_index => {}
            _ => {
                last.insert(o.segment_id, o);
            }
        }
    }
    let mut out = Vec::new();
    for (id, obs) in last {
        let views = &seq.views[&id];
        let so_far: Vec<&StoredView> = views
            .iter()
            .filter(|v| v.obs_index <= obs.obs_index)
            .collect();
        let Some(best) = select_view_by(&so_far, ViewQuery::Test, |v| (v.timestamp, v.mask_area))
        else {
            continue;
        };
        let view = seq.materialize_view(best);
        let tensor: VisualTensor = normalize_inputs(&view, stats);
        let seg = seq
            .store
            .segment_at_observation(id, obs.obs_index)
            .expect("observation prefix");
        let voxels = voxels_to_feat(&voxelize(&seg));
        let fwd = forward(params, &voxels, &tensor.0)?;
        let masks = channel_masks(&fwd.spatial, cfg.scan.height, cfg.scan.width);
        let weights = descriptor_weights(&tensor, &voxels, &masks, params, DistanceNorm::L2)?;
        let heatmap = scorecam_heatmap(&weights, &fwd.spatial, cfg.scan.height, cfg.scan.width);
        let score = attention_score(&heatmap, &view.mask, cfg.attention_dilation)?;
        out.push(SegmentAttention {
            segment_id: id,
            score,
            heatmap,
            view,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Whole-experiment driver
// ---------------------------------------------------------------------------

pub struct ExperimentOutput {
    pub train_outcome: TrainOutcome,
    pub class_map: ClassMap,
    pub stats: DatasetStats,
    pub db_sequence: ProcessedSequence,
    pub query_sequence: ProcessedSequence,
    pub db_observations: Vec<DescribedObservation>,
    pub query_observations: Vec<DescribedObservation>,
    /// (completeness, rank) per query observation.
    pub ranks: Vec<(f64, Option<usize>)>,
    pub closures_25nn: Vec<LoopClosure>,
    pub closures_1nn: Vec<LoopClosure>,
}

/// Runs the full experiment on a two-sequence scenario: train on the
/// database pass, describe both passes, evaluate ranks against the
/// per-observation database and run both localization policies.
pub fn run_experiment(
    scenario: &Scenario,
    cfg: &PipelineConfig,
    train_cfg: &TrainConfig,
) -> Result<ExperimentOutput, PipelineError> {
    assert!(scenario.sequences.len() >= 2, "need db and query sequences");
    let db_seq = process_sequence(&scenario.world, &scenario.sequences[0], scenario.period, cfg)?;
    let query_seq =
        process_sequence(&scenario.world, &scenario.sequences[1], scenario.period, cfg)?;
    let (samples, class_map, stats) = build_training_set(&db_seq, cfg)?;
    log_debug!(
        "training on {} samples over {} classes",
        samples.len(),
        class_map.len()
    );
    let train_outcome = train(&samples, train_cfg)?;
    let params = &train_outcome.params;
    let db_observations = describe_observations(&db_seq, params, &stats, cfg)?;
    let query_observations = describe_observations(&query_seq, params, &stats, cfg)?;
    let rank_db = rank_database(&db_observations);
    let ranks: Vec<(f64, Option<usize>)> = query_observations
        .iter()
        .map(|o| {
            (
                o.completeness,
                crate::evaluation::rank_of(
                    &rank_db,
                    &o.descriptor,
                    o.truth_id,
                    Some(query_seq.sequence_id),
                ),
            )
        })
        .collect();
    let loc_db = localization_database(&db_observations);
    let closures_25nn = localize_sequence(
        &query_seq,
        &query_observations,
        &loc_db,
        MatchPolicy::TwentyFiveNn,
    )?;
    let closures_1nn = localize_sequence(
        &query_seq,
        &query_observations,
        &loc_db,
        MatchPolicy::OneNnRatio,
    )?;
    Ok(ExperimentOutput {
        train_outcome,
        class_map,
        stats,
        db_sequence: db_seq,
        query_sequence: query_seq,
        db_observations,
        query_observations,
        ranks,
        closures_25nn,
        closures_1nn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{corridor, CorridorConfig};

    fn tiny_config() -> PipelineConfig {
        PipelineConfig {
            scan: ScanConfig {
                height: 32,
                width: 64,
                ..ScanConfig::default()
            },
            cluster: ClusterParams {
                radius: 0.5,
                min_points: 20,
                ground_z: 0.3,
            },
            max_train_views: 4,
            max_observations: 5,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn sequence_processing_finds_segments_with_views() {
        let scenario = corridor(
            31,
            &CorridorConfig {
                n_objects: 10,
                scan_count: 12,
                ..CorridorConfig::default()
            },
        )
        .unwrap();
        let cfg = tiny_config();
        let seq =
            process_sequence(&scenario.world, &scenario.sequences[0], scenario.period, &cfg)
                .unwrap();
        assert!(!seq.store.segment_ids().is_empty());
        assert!(!seq.views.is_empty());
        // Views are time-sorted and reference valid scans.
        for views in seq.views.values() {
            for w in views.windows(2) {
                assert!(w[0].timestamp <= w[1].timestamp);
            }
            for v in views {
                assert!(v.scan_index < seq.images.len());
            }
        }
        // Truth labels identify world objects.
        for truth in seq.truth.values() {
            assert!(*truth >= 1);
        }
    }

    #[test]
    fn observation_prefixes_have_monotone_completeness() {
        let scenario = corridor(
            32,
            &CorridorConfig {
                n_objects: 8,
                scan_count: 10,
                ..CorridorConfig::default()
            },
        )
        .unwrap();
        let cfg = tiny_config();
        let seq =
            process_sequence(&scenario.world, &scenario.sequences[0], scenario.period, &cfg)
                .unwrap();
        for id in seq.store.segment_ids() {
            let fin = seq.store.segment(id).unwrap();
            let mut last = 0.0;
            for k in 0..seq.store.observations(id).unwrap().len() {
                let at = seq.store.segment_at_observation(id, k).unwrap();
                let c = crate::types::completeness(&at, &fin).unwrap().value();
                assert!(c >= last);
                last = c;
            }
        }
    }
}
