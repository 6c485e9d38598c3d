//! Cross-module invariants exercised on simulated scans.

use segloc::imaging::{
    build_visual_view, compute_mask_points, compute_mask_simple, export_mask_pgm, id_mask,
    mask_iou, read_grid_csv, read_pgm, write_grid_csv, ProjectionMargins,
};
use segloc::synth::{generate_world, simulate_scan, ScanConfig, Trajectory, WorldConfig, GROUND_ID};
use segloc::types::{Grid2, Vec3};
use std::collections::BTreeMap;

/// Simple-projection masks fall behind aligned masks under motion.
#[test]
fn simple_masks_lose_to_aligned_masks_at_speed() {
    let world = generate_world(
        12,
        &WorldConfig {
            n_objects: 10,
            x_range: (-20.0, 40.0),
            ..WorldConfig::default()
        },
    )
    .unwrap();
    let cfg = ScanConfig {
        width: 512,
        ..ScanConfig::default()
    };
    let traj = Trajectory::linear(
        Vec3::new(-5.0, 0.0, 1.8),
        Vec3::new(10.0, 0.0, 0.0),
        0.0,
        4.0,
    );
    let scans: Vec<_> = (0..8)
        .map(|i| simulate_scan(&world, &traj, 0.4 * i as f64, 0.1, &cfg, 1).unwrap())
        .collect();
    let mut world_points: BTreeMap<i64, Vec<Vec3>> = BTreeMap::new();
    for scan in &scans {
        for (k, id) in scan.point_object_ids.iter().enumerate() {
            if *id != GROUND_ID {
                world_points.entry(*id).or_default().push(scan.point_world(k));
            }
        }
    }
    // Accumulated clouds carry inter-scan sampling noise at mask borders,
    // so individual (segment, scan) pairs may flip slightly either way;
    // the aggregate must favor the aligned projection clearly.
    let margins = ProjectionMargins::default();
    let mut aligned_better = 0usize;
    let mut naive_better = 0usize;
    let mut compared = 0usize;
    let mut sum_aligned = 0.0;
    let mut sum_naive = 0.0;
    for scan in &scans {
        for (id, pts) in &world_points {
            let truth = id_mask(&scan.pixel_object_ids, *id);
            if truth.data().iter().filter(|m| **m != 0).count() < 80 {
                continue;
            }
            let grid_pts: Vec<Vec3> = pts
                .iter()
                .map(|p| scan.pose0.inverse_transform_point(p))
                .collect();
            let aligned = compute_mask_points(&grid_pts, &scan.grid, &margins, 0.2).unwrap();
            let naive = compute_mask_simple(&grid_pts, &scan.grid, 0.2).unwrap();
            let iou_a = mask_iou(&aligned, &truth);
            let iou_n = mask_iou(&naive, &truth);
            compared += 1;
            sum_aligned += iou_a;
            sum_naive += iou_n;
            if iou_a > iou_n {
                aligned_better += 1;
            } else if iou_n > iou_a + 0.02 {
                naive_better += 1;
            }
            // Mask pixels are always a subset of pixels with returns.
            for (m, r) in aligned.data().iter().zip(scan.grid.ranges().iter()) {
                assert!(*m == 0 || *r > 0.0);
            }
        }
    }
    assert!(compared >= 20, "only {compared} (segment, scan) pairs");
    assert_eq!(
        naive_better, 0,
        "naive beat aligned by more than noise on {naive_better} pairs"
    );
    assert!(
        aligned_better * 2 > compared,
        "aligned strictly better in only {aligned_better}/{compared} cases"
    );
    assert!(
        sum_aligned > sum_naive,
        "mean IoU aligned {:.4} vs naive {:.4}",
        sum_aligned / compared as f64,
        sum_naive / compared as f64
    );
}

/// A visual view survives the exact CSV exporters bit for bit, and PGM
/// files re-read and re-write byte-identically.
#[test]
fn visual_view_round_trips_through_exporters() {
    let world = generate_world(14, &WorldConfig::default()).unwrap();
    let cfg = ScanConfig::default();
    let traj = Trajectory::linear(Vec3::new(0.0, 0.0, 1.8), Vec3::new(6.0, 0.0, 0.0), 0.0, 1.0);
    let scan = simulate_scan(&world, &traj, 0.0, 0.1, &cfg, 1).unwrap();
    let mask = compute_mask_points(
        &scan.points_grid,
        &scan.grid,
        &ProjectionMargins::default(),
        0.2,
    )
    .unwrap();
    let view = build_visual_view(&scan.grid, mask).unwrap();
    let dir = std::env::temp_dir().join(format!("segloc_view_rt_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    // Exact CSV round trip.
    let ipath = dir.join("intensity.csv");
    let rpath = dir.join("range.csv");
    write_grid_csv(&ipath, &view.intensity).unwrap();
    write_grid_csv(&rpath, &view.range).unwrap();
    assert_eq!(read_grid_csv(&ipath).unwrap(), view.intensity);
    assert_eq!(read_grid_csv(&rpath).unwrap(), view.range);
    // Mask PGM: write, read, write again byte-identically.
    let m1 = dir.join("mask1.pgm");
    let m2 = dir.join("mask2.pgm");
    export_mask_pgm(&m1, &view.mask).unwrap();
    let (maxval, img) = read_pgm(&m1).unwrap();
    assert_eq!(maxval, 255);
    let back = Grid2::from_data(
        img.height(),
        img.width(),
        img.data().iter().map(|v| u8::from(*v != 0)).collect(),
    );
    assert_eq!(back, view.mask);
    export_mask_pgm(&m2, &back).unwrap();
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
}
