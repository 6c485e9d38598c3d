//! Shared helpers: building configurations from parsed flags, loading
//! archives and checkpoints, writing run artifacts.

use crate::args::{Args, CliError};
use segloc::imaging::ProjectionMargins;
use segloc::net::{DatasetStats, NetParams, TrainConfig};
use segloc::pipeline::{ClassMap, DescribedObservation, PipelineConfig, ProcessedSequence};
use segloc::segmentation::ClusterParams;
use segloc::synth::{
    aliased_stress, corridor, read_scan_archive, CorridorConfig, Scenario, ScanConfig,
    STRESS_MAX_RANGE,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn scan_config(args: &Args) -> Result<ScanConfig, CliError> {
    let default = ScanConfig::default();
    Ok(ScanConfig {
        height: args.get("height", default.height)?,
        width: args.get("width", default.width)?,
        max_range: args.get("max_range", default.max_range)?,
        ..default
    })
}

pub fn pipeline_config(args: &Args) -> Result<PipelineConfig, CliError> {
    let default = PipelineConfig::default();
    Ok(PipelineConfig {
        scan: scan_config(args)?,
        cluster: ClusterParams {
            radius: args.get("radius", default.cluster.radius)?,
            min_points: args.get("min_points", default.cluster.min_points)?,
            ground_z: args.get("ground_z", default.cluster.ground_z)?,
        },
        margins: ProjectionMargins {
            rows: args.get("margin_rows", default.margins.rows)?,
            cols: args.get("margin_cols", default.margins.cols)?,
        },
        range_tolerance: args.get("range_tolerance", default.range_tolerance)?,
        max_train_views: args.get("max_train_views", default.max_train_views)?,
        max_observations: args.get("max_observations", default.max_observations)?,
        attention_dilation: args.get("dilation", default.attention_dilation)?,
        pose_noise_trans: args.get("pose_noise_trans", 0.0)?,
        pose_noise_rot: args.get("pose_noise_rot", 0.0)?,
        noise_seed: args.get("seed", 1u64)?,
        threads: args.get("threads", 1usize)?,
    })
}

pub fn train_config(args: &Args) -> Result<TrainConfig, CliError> {
    let default = TrainConfig::default();
    Ok(TrainConfig {
        learning_rate: args.get("lr", default.learning_rate)?,
        batch_size: args.get("batch", default.batch_size)?,
        epochs: args.get("epochs", default.epochs)?,
        seed: args.get("seed", 1u64)?,
        validation_fraction: args.get("val_fraction", default.validation_fraction)?,
        threads: args.get("threads", 1usize)?,
    })
}

pub fn build_scenario(args: &Args) -> Result<Scenario, CliError> {
    let seed: u64 = args.get("seed", 1)?;
    match args.get_str("scenario").unwrap_or("corridor") {
        "corridor" => {
            let default = CorridorConfig::default();
            corridor(
                seed,
                &CorridorConfig {
                    n_objects: args.get("n_objects", default.n_objects)?,
                    aliasing: args.get_bool("aliasing", default.aliasing)?,
                    speed: args.get("speed", default.speed)?,
                    scan_count: args.get("scan_count", default.scan_count)?,
                    period: args.get("period", default.period)?,
                    query_offset: args.get("query_offset", default.query_offset)?,
                    sensor_height: default.sensor_height,
                },
            )
            .map_err(data_err)
        }
        "aliased_stress" => aliased_stress(seed).map_err(data_err),
        other => Err(CliError::Usage(format!("unknown scenario `{other}`"))),
    }
}

/// The stress scenario relies on a shorter maximum range to keep the
/// query-only plaza out of the database pass.
pub fn scenario_scan_config(args: &Args) -> Result<ScanConfig, CliError> {
    let mut cfg = scan_config(args)?;
    if args.get_str("scenario") == Some("aliased_stress") && args.get_str("max_range").is_none() {
        cfg.max_range = STRESS_MAX_RANGE;
    }
    Ok(cfg)
}

/// Loads and processes a sequence archive; the archive's grid geometry is
/// adopted into `cfg` so downstream stages agree with the data.
pub fn load_processed(
    dir: &Path,
    cfg: &mut PipelineConfig,
) -> Result<ProcessedSequence, CliError> {
    let archive = read_scan_archive(dir).map_err(data_err)?;
    cfg.scan = archive.config.clone();
    segloc::pipeline::process_loaded(archive.sequence_id, &archive.scans, cfg).map_err(data_err)
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

pub fn write_stats(path: &Path, stats: &DatasetStats) -> Result<(), CliError> {
    std::fs::write(
        path,
        format!(
            "intensity_mean={}\nintensity_std={}\n",
            stats.mean, stats.std
        ),
    )
    .map_err(data_err)
}

pub fn read_stats(path: &Path) -> Result<DatasetStats, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read stats {}: {e}", path.display())))?;
    let mut mean = None;
    let mut std = None;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "intensity_mean" => mean = v.trim().parse().ok(),
                "intensity_std" => std = v.trim().parse().ok(),
                _ => {}
            }
        }
    }
    match (mean, std) {
        (Some(mean), Some(std)) => Ok(DatasetStats { mean, std }),
        _ => Err(CliError::Data(format!(
            "stats file {} is incomplete",
            path.display()
        ))),
    }
}

pub fn stats_path_for(args: &Args, net_path: &Path) -> PathBuf {
    match args.get_str("stats") {
        Some(p) => PathBuf::from(p),
        None => net_path.with_file_name("stats.txt"),
    }
}

pub fn load_net(args: &Args) -> Result<(NetParams<f32>, DatasetStats), CliError> {
    let net_path = args.require_path("net")?;
    let params = segloc::net::load_checkpoint(&net_path).map_err(data_err)?;
    let stats = read_stats(&stats_path_for(args, &net_path))?;
    Ok((params, stats))
}

pub fn write_classes(path: &Path, classes: &ClassMap) -> Result<(), CliError> {
    let mut out = String::from("class_index,truth_id\n");
    let mut rows: Vec<(usize, i64)> = classes
        .truth_to_class
        .iter()
        .map(|(truth, class)| (*class, *truth))
        .collect();
    rows.sort_unstable();
    for (class, truth) in rows {
        writeln!(out, "{class},{truth}").expect("string write");
    }
    std::fs::write(path, out).map_err(data_err)
}

pub fn descriptors_csv(observations: &[DescribedObservation]) -> String {
    let mut out = String::from(
        "segment_id,sequence_id,obs_index,timestamp,completeness,mask_area,cx,cy,cz,truth_id",
    );
    for i in 0..segloc::types::DESCRIPTOR_DIM {
        write!(out, ",d{i}").expect("string write");
    }
    out.push('\n');
    for o in observations {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            o.segment_id,
            o.sequence_id,
            o.obs_index,
            o.timestamp,
            o.completeness,
            o.mask_area,
            o.centroid.x,
            o.centroid.y,
            o.centroid.z,
            o.truth_id
        )
        .expect("string write");
        for v in o.descriptor.as_slice() {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn ensure_out_dir(args: &Args) -> Result<PathBuf, CliError> {
    let out = args.require_path("out")?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

pub fn write_manifest(out: &Path, args: &Args, extra: &[(String, String)]) -> Result<(), CliError> {
    let mut entries = args.manifest_entries();
    entries.extend_from_slice(extra);
    segloc::evaluation::write_manifest(&out.join("manifest.txt"), &entries).map_err(data_err)
}
