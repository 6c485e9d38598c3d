//! Subcommand implementations.

use crate::args::{Args, CliError};
use crate::common::*;
use segloc::evaluation::{
    attention_table_csv, attention_vs_rank, closure_log_csv, closure_stats, histogram_svg,
    line_plot_svg, rank_of, rank_table_csv, rank_vs_completeness,
};
use segloc::localization::MatchPolicy;
use segloc::log_info;
use segloc::net::NetError;
use segloc::pipeline::{
    attention_for_segments, build_training_set, describe_observations, localization_database,
    rank_database,
};
use segloc::synth::{simulate_scan, write_scan_archive};
use std::fmt::Write as _;

fn numeric_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn train_err(e: NetError) -> CliError {
    match e {
        NetError::NonFiniteLoss { .. } | NetError::NonFinite(_) => numeric_err(e),
        other => CliError::Data(other.to_string()),
    }
}

/// Numeric failures exit 3; everything else is a data error.
fn pipeline_err(e: segloc::pipeline::PipelineError) -> CliError {
    match e {
        segloc::pipeline::PipelineError::Net(n) => train_err(n),
        segloc::pipeline::PipelineError::Loc(l) => numeric_err(l),
        other => CliError::Data(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(args: &Args) -> Result<(), CliError> {
    let out = ensure_out_dir(args)?;
    let scenario = build_scenario(args)?;
    let scan_cfg = scenario_scan_config(args)?;
    let threads: usize = args.get("threads", 1)?;
    for seq in &scenario.sequences {
        let dir = out.join(format!("seq_{:03}", seq.id));
        let mut scans = Vec::with_capacity(seq.scan_count);
        for i in 0..seq.scan_count {
            let scan = simulate_scan(
                &scenario.world,
                &seq.trajectory,
                seq.scan_start(i),
                scenario.period,
                &scan_cfg,
                threads,
            )
            .map_err(data_err)?;
            scans.push(scan);
        }
        write_scan_archive(
            &dir,
            &scans,
            &seq.trajectory,
            &scan_cfg,
            seq.id,
            seq.t_start,
            seq.scan_interval,
        )
        .map_err(data_err)?;
        log_info!("sequence {}: {} scans written to {}", seq.id, scans.len(), dir.display());
    }
    // World summary.
    let mut world_csv = String::from("object_id,kind,x,y,z,dim1,dim2,dim3\n");
    for obj in &scenario.world.objects {
        let t = obj.pose.translation();
        match &obj.shape {
            segloc::synth::Shape::Box { half_extents } => {
                writeln!(
                    world_csv,
                    "{},box,{},{},{},{},{},{}",
                    obj.id, t.x, t.y, t.z, half_extents.x, half_extents.y, half_extents.z
                )
                .expect("string write");
            }
            segloc::synth::Shape::Cylinder {
                radius,
                half_height,
            } => {
                writeln!(
                    world_csv,
                    "{},cylinder,{},{},{},{},{},0",
                    obj.id, t.x, t.y, t.z, radius, half_height
                )
                .expect("string write");
            }
        }
    }
    std::fs::write(out.join("world.csv"), world_csv).map_err(data_err)?;
    write_manifest(
        &out,
        args,
        &[("command".into(), "synth".into()),
          ("sequences".into(), scenario.sequences.len().to_string())],
    )
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn cmd_train(args: &Args) -> Result<(), CliError> {
    let data = args.require_path("data")?;
    let out = ensure_out_dir(args)?;
    let mut cfg = pipeline_config(args)?;
    // A sequence archive carries poses.csv; otherwise expect seq_000 below.
    let seq_dir = if data.join("poses.csv").exists() {
        data.clone()
    } else {
        data.join("seq_000")
    };
    let seq = load_processed(&seq_dir, &mut cfg)?;
    let (samples, class_map, stats) = build_training_set(&seq, &cfg).map_err(data_err)?;
    log_info!(
        "training on {} samples over {} classes",
        samples.len(),
        class_map.len()
    );
    let train_cfg = train_config(args)?;
    let outcome = segloc::net::train(&samples, &train_cfg).map_err(train_err)?;
    segloc::net::save_checkpoint(&out.join("net.bin"), &outcome.params).map_err(data_err)?;
    write_stats(&out.join("stats.txt"), &stats)?;
    write_classes(&out.join("classes.csv"), &class_map)?;
    let mut history = String::from("epoch,train_loss,val_accuracy\n");
    for e in &outcome.history {
        writeln!(history, "{},{},{}", e.epoch, e.train_loss, e.val_accuracy)
            .expect("string write");
    }
    std::fs::write(out.join("training.csv"), history).map_err(data_err)?;
    log_info!(
        "best epoch {} with validation accuracy {:.3}",
        outcome.best_epoch,
        outcome.history[outcome.best_epoch].val_accuracy
    );
    write_manifest(
        &out,
        args,
        &[
            ("command".into(), "train".into()),
            ("best_epoch".into(), outcome.best_epoch.to_string()),
            ("n_samples".into(), samples.len().to_string()),
            ("n_classes".into(), class_map.len().to_string()),
        ],
    )
}

// ---------------------------------------------------------------------------
// describe
// ---------------------------------------------------------------------------

pub fn cmd_describe(args: &Args) -> Result<(), CliError> {
    let data = args.require_path("data")?;
    let out = ensure_out_dir(args)?;
    let mut cfg = pipeline_config(args)?;
    let (params, stats) = load_net(args)?;
    let seq = load_processed(&data, &mut cfg)?;
    let observations = describe_observations(&seq, &params, &stats, &cfg).map_err(pipeline_err)?;
    std::fs::write(out.join("descriptors.csv"), descriptors_csv(&observations))
        .map_err(data_err)?;
    // Final segment dump, named by the last scan of the sequence.
    let last_scan = seq.scan_times.len().saturating_sub(1);
    segloc::segmentation::write_segment_dump(&out, last_scan, &seq.store).map_err(data_err)?;
    log_info!("described {} observations", observations.len());
    write_manifest(
        &out,
        args,
        &[
            ("command".into(), "describe".into()),
            ("n_observations".into(), observations.len().to_string()),
        ],
    )
}

// ---------------------------------------------------------------------------
// localize
// ---------------------------------------------------------------------------

fn localize_params(args: &Args, policy: MatchPolicy) -> Result<segloc::localization::LocalizeParams, CliError> {
    let default = segloc::localization::LocalizeParams::for_policy(policy);
    Ok(segloc::localization::LocalizeParams {
        policy,
        k: args.get("k", default.k)?,
        ratio: args.get("ratio", default.ratio)?,
        epsilon: args.get("epsilon", default.epsilon)?,
        min_cluster: args.get("min_cluster", default.min_cluster)?,
    })
}

fn parse_policy(args: &Args) -> Result<MatchPolicy, CliError> {
    match args.get_str("policy").unwrap_or("1nn") {
        "25nn" => Ok(MatchPolicy::TwentyFiveNn),
        "1nn" => Ok(MatchPolicy::OneNnRatio),
        other => Err(CliError::Usage(format!(
            "unknown policy `{other}` (expected 25nn or 1nn)"
        ))),
    }
}

pub fn cmd_localize(args: &Args) -> Result<(), CliError> {
    let query_dir = args.require_path("data")?;
    let db_dir = args.require_path("db")?;
    let policy = parse_policy(args)?;
    let out = ensure_out_dir(args)?;
    let mut cfg = pipeline_config(args)?;
    let (params, stats) = load_net(args)?;
    let db_seq = load_processed(&db_dir, &mut cfg)?;
    let query_seq = load_processed(&query_dir, &mut cfg)?;
    let db_obs = describe_observations(&db_seq, &params, &stats, &cfg).map_err(pipeline_err)?;
    let query_obs =
        describe_observations(&query_seq, &params, &stats, &cfg).map_err(pipeline_err)?;
    let db = localization_database(&db_obs);
    let loc_params = localize_params(args, policy)?;
    let closures = segloc::pipeline::localize_sequence_with(&query_seq, &query_obs, &db, &loc_params)
        .map_err(pipeline_err)?;
    std::fs::write(
        out.join(format!("closures_{}.csv", policy.name())),
        closure_log_csv(&closures, policy.name()),
    )
    .map_err(data_err)?;
    let stats_5m = closure_stats(&closures, 5.0);
    log_info!(
        "{}: {} correct, {} incorrect closures",
        policy.name(),
        stats_5m.n_correct,
        stats_5m.n_incorrect
    );
    write_manifest(
        &out,
        args,
        &[
            ("command".into(), "localize".into()),
            ("n_closures".into(), closures.len().to_string()),
            ("n_correct".into(), stats_5m.n_correct.to_string()),
            ("n_incorrect".into(), stats_5m.n_incorrect.to_string()),
        ],
    )
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

pub fn cmd_attention(args: &Args) -> Result<(), CliError> {
    let data = args.require_path("data")?;
    let out = ensure_out_dir(args)?;
    let mut cfg = pipeline_config(args)?;
    let (params, stats) = load_net(args)?;
    let seq = load_processed(&data, &mut cfg)?;
    let observations = describe_observations(&seq, &params, &stats, &cfg).map_err(pipeline_err)?;
    let attention =
        attention_for_segments(&seq, &observations, &params, &stats, &cfg).map_err(pipeline_err)?;
    let mut scores = String::from("segment_id,attention_score\n");
    for a in &attention {
        writeln!(scores, "{},{}", a.segment_id, a.score).expect("string write");
        let base = out.join(format!("heatmap_{:06}", a.segment_id));
        segloc::attention::export_heatmap_pgm(&base.with_extension("pgm"), &a.heatmap)
            .map_err(data_err)?;
        segloc::imaging::write_grid_csv(&base.with_extension("csv"), &a.heatmap.values)
            .map_err(data_err)?;
        std::fs::write(
            base.with_extension("svg"),
            segloc::attention::overlay_svg(&a.view.intensity, &a.heatmap, &a.view.mask),
        )
        .map_err(data_err)?;
    }
    std::fs::write(out.join("attention_scores.csv"), scores).map_err(data_err)?;
    log_info!("attention maps for {} segments", attention.len());
    write_manifest(
        &out,
        args,
        &[
            ("command".into(), "attention".into()),
            ("n_segments".into(), attention.len().to_string()),
        ],
    )
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn cmd_evaluate(args: &Args) -> Result<(), CliError> {
    let data = args.require_path("data")?;
    let out = ensure_out_dir(args)?;
    let mut cfg = pipeline_config(args)?;
    let (params, stats) = load_net(args)?;
    let threshold: f64 = args.get("threshold", 5.0)?;
    let db_seq = load_processed(&data.join("seq_000"), &mut cfg)?;
    let query_seq = load_processed(&data.join("seq_001"), &mut cfg)?;
    let db_obs = describe_observations(&db_seq, &params, &stats, &cfg).map_err(pipeline_err)?;
    let query_obs =
        describe_observations(&query_seq, &params, &stats, &cfg).map_err(pipeline_err)?;

    // Rank versus completeness.
    let rank_db = rank_database(&db_obs);
    let ranks: Vec<(f64, Option<usize>)> = query_obs
        .iter()
        .map(|o| {
            (
                o.completeness,
                rank_of(
                    &rank_db,
                    &o.descriptor,
                    o.truth_id,
                    Some(query_seq.sequence_id),
                ),
            )
        })
        .collect();
    let table = rank_vs_completeness(&ranks, 10);
    std::fs::write(out.join("rank_vs_completeness.csv"), rank_table_csv(&table))
        .map_err(data_err)?;
    let series: Vec<(f64, f64)> = table
        .iter()
        .filter(|b| b.n > 0 && b.median.is_finite())
        .map(|b| ((b.lo + b.hi) / 2.0, b.median))
        .collect();
    std::fs::write(
        out.join("rank_plot.svg"),
        line_plot_svg(&series, "median rank vs completeness", "completeness", "rank"),
    )
    .map_err(data_err)?;

    // Closures under both policies.
    let loc_db = localization_database(&db_obs);
    let mut stats_rows = String::from("policy,n_correct,n_incorrect,mean_correct_error_m\n");
    for policy in [MatchPolicy::TwentyFiveNn, MatchPolicy::OneNnRatio] {
        let loc_params = localize_params(args, policy)?;
        let closures =
            segloc::pipeline::localize_sequence_with(&query_seq, &query_obs, &loc_db, &loc_params)
                .map_err(pipeline_err)?;
        std::fs::write(
            out.join(format!("closures_{}.csv", policy.name())),
            closure_log_csv(&closures, policy.name()),
        )
        .map_err(data_err)?;
        let errors: Vec<f64> = closures.iter().filter_map(|c| c.error_m).collect();
        std::fs::write(
            out.join(format!("closure_errors_{}.svg", policy.name())),
            histogram_svg(
                &errors,
                20,
                &format!("closure translational errors ({})", policy.name()),
                "error [m]",
            ),
        )
        .map_err(data_err)?;
        let times: Vec<(f64, f64)> = closures
            .iter()
            .filter_map(|c| c.error_m.map(|e| (c.timestamp, e)))
            .collect();
        std::fs::write(
            out.join(format!("closure_errors_time_{}.svg", policy.name())),
            line_plot_svg(
                &times,
                &format!("closure error over time ({})", policy.name()),
                "t [s]",
                "error [m]",
            ),
        )
        .map_err(data_err)?;
        let s = closure_stats(&closures, threshold);
        writeln!(
            stats_rows,
            "{},{},{},{}",
            policy.name(),
            s.n_correct,
            s.n_incorrect,
            s.mean_correct_error
                .map_or("n/a".to_string(), |e| format!("{e}")),
        )
        .expect("string write");
    }
    std::fs::write(out.join("closure_stats.csv"), stats_rows).map_err(data_err)?;

    // Attention score versus rank.
    let attention = attention_for_segments(&query_seq, &query_obs, &params, &stats, &cfg)
        .map_err(pipeline_err)?;
    let mut final_rank: std::collections::BTreeMap<u64, Option<usize>> =
        std::collections::BTreeMap::new();
    for (o, (_, r)) in query_obs.iter().zip(ranks.iter()) {
        final_rank.insert(o.segment_id, *r);
    }
    let joined: Vec<(Option<usize>, f64)> = attention
        .iter()
        .filter(|a| a.score.is_finite())
        .map(|a| (final_rank.get(&a.segment_id).copied().flatten(), a.score))
        .collect();
    let att_table = attention_vs_rank(&joined, 10);
    std::fs::write(out.join("attention_vs_rank.csv"), attention_table_csv(&att_table))
        .map_err(data_err)?;
    let att_series: Vec<(f64, f64)> = att_table
        .iter()
        .filter(|b| b.n > 0 && b.mean_score.is_finite())
        .map(|b| (b.bin as f64, b.mean_score))
        .collect();
    std::fs::write(
        out.join("attention_plot.svg"),
        line_plot_svg(
            &att_series,
            "attention score vs rank bin",
            "rank bin",
            "score",
        ),
    )
    .map_err(data_err)?;
    // Overlay examples: best and worst ranked segments with attention.
    let mut ranked: Vec<(&segloc::pipeline::SegmentAttention, usize)> = attention
        .iter()
        .filter_map(|a| {
            final_rank
                .get(&a.segment_id)
                .copied()
                .flatten()
                .map(|r| (a, r))
        })
        .collect();
    ranked.sort_by_key(|(a, r)| (*r, a.segment_id));
    for (tag, item) in [("best", ranked.first()), ("worst", ranked.last())] {
        if let Some((a, _)) = item {
            std::fs::write(
                out.join(format!("attention_overlay_{tag}.svg")),
                segloc::attention::overlay_svg(&a.view.intensity, &a.heatmap, &a.view.mask),
            )
            .map_err(data_err)?;
        }
    }
    write_manifest(
        &out,
        args,
        &[
            ("command".into(), "evaluate".into()),
            ("n_db_observations".into(), db_obs.len().to_string()),
            ("n_query_observations".into(), query_obs.len().to_string()),
        ],
    )
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

pub fn cmd_selftest(args: &Args) -> Result<(), CliError> {
    let threads: usize = args.get("threads", 1)?;
    // 1. Windowed projection equals the exhaustive argmin on a fast scan.
    let world = segloc::synth::generate_world(11, &segloc::synth::WorldConfig::default())
        .map_err(data_err)?;
    let traj = segloc::synth::Trajectory::linear(
        segloc::types::Vec3::new(0.0, 0.0, 1.8),
        segloc::types::Vec3::new(12.0, 0.0, 0.0),
        0.0,
        1.0,
    );
    let scan_cfg = segloc::synth::ScanConfig::default();
    let scan =
        simulate_scan(&world, &traj, 0.0, 0.1, &scan_cfg, threads).map_err(data_err)?;
    let margins = segloc::imaging::ProjectionMargins::default();
    for (i, p) in scan.points_grid.iter().enumerate() {
        let aligned = segloc::imaging::aligned_project(p, &scan.grid, &margins)
            .map_err(numeric_err)?;
        let brute = segloc::imaging::brute_force_project(p, &scan.grid).map_err(numeric_err)?;
        if aligned != brute {
            return Err(CliError::Numeric(format!(
                "projection oracle mismatch at point {i}: {aligned:?} vs {brute:?}"
            )));
        }
    }
    println!(
        "selftest: projection oracle over {} points ... ok",
        scan.points_grid.len()
    );

    // 2. Gradient check against central finite differences, f64 mode.
    let config = segloc::net::NetConfig::new(16, 32, 3).map_err(numeric_err)?;
    let params = segloc::net::NetParams::<f64>::init(config, 4242);
    let mut rng = segloc::rng::Pcg32::new(7);
    let mut voxels = segloc::net::Feat3::<f64>::zeros(1, 32, 32, 16);
    for v in voxels.data.iter_mut() {
        *v = if rng.next_f64() < 0.2 { rng.next_f64() } else { 0.0 };
    }
    let mut visual = segloc::net::Feat2::<f64>::zeros(3, 16, 32);
    for v in visual.data.iter_mut() {
        *v = rng.normal(0.0, 1.0);
    }
    let report = segloc::net::gradient_check(&params, &voxels, &visual, 1, 200, 1e-5, 99)
        .map_err(numeric_err)?;
    if report.max_rel_err >= 1e-4 || report.max_abs_near_zero >= 1e-8 {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {}, near-zero abs {}",
            report.max_rel_err, report.max_abs_near_zero
        )));
    }
    println!(
        "selftest: gradient check ({} relative, {} near-zero) ... ok",
        report.n_checked, report.n_near_zero
    );

    // 3. k-NN index equals the linear-scan oracle.
    let entries: Vec<segloc::localization::DbEntry> = (0..300)
        .map(|i| {
            let v: Vec<f64> = (0..segloc::types::DESCRIPTOR_DIM)
                .map(|_| rng.normal(0.0, 1.0))
                .collect();
            segloc::localization::DbEntry {
                segment_id: i as u64,
                sequence_id: i as u64 % 2,
                descriptor: segloc::types::Descriptor::new(&v).expect("finite"),
                centroid: segloc::types::Vec3::zeros(),
                truth_id: None,
            }
        })
        .collect();
    let db = segloc::localization::SegmentDb::new(entries);
    for q in 0..200 {
        let v: Vec<f64> = (0..segloc::types::DESCRIPTOR_DIM)
            .map(|_| rng.normal(0.0, 1.0))
            .collect();
        let query = segloc::types::Descriptor::new(&v).expect("finite");
        for k in [1usize, 2, 25] {
            let got = segloc::localization::knn_query(&db, 0, &query, k, Some(0));
            let want = segloc::oracles::linear_scan_knn(db.entries(), &query, k, Some(0));
            let matches = got.len() == want.len()
                && got
                    .iter()
                    .zip(want.iter())
                    .all(|(g, w)| g.target_entry == w.2 && g.distance == w.0);
            if !matches {
                return Err(CliError::Numeric(format!(
                    "knn oracle mismatch for query {q}, k={k}"
                )));
            }
        }
    }
    println!("selftest: knn linear-scan oracle (200 queries) ... ok");
    Ok(())
}
