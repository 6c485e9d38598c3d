//! Evaluation metrics and report emission: retrieval rank versus segment
//! completeness, loop-closure correctness at a distance threshold, and
//! attention score versus rank, all written as CSV tables and SVG plots.

use crate::localization::{knn_query, LoopClosure, SegmentDb};
use crate::log_info;
use crate::svg::SvgDoc;
use crate::types::Descriptor;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, content: &str) -> Result<(), ReportError> {
    std::fs::write(path, content).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Rank
// ---------------------------------------------------------------------------

/// 1-based position of the first neighbor that is another observation of
/// the same ground-truth segment, excluding same-sequence entries.
/// `None` when no other observation exists in the database.
pub fn rank_of(
    db: &SegmentDb,
    query: &Descriptor,
    truth_id: i64,
    exclude_sequence: Option<u64>,
) -> Option<usize> {
    let all = knn_query(db, 0, query, db.len().max(1), exclude_sequence);
    all.iter()
        .find(|c| db.entries()[c.target_entry].truth_id == Some(truth_id))
        .map(|c| c.rank)
}

#[derive(Clone, Debug)]
pub struct RankBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub n_unreached: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Mean over reachable queries only.
    pub mean_finite: Option<f64>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

/// Groups queries into equal-width completeness bins over (0, 1] and
/// reports per-bin rank statistics. Unreached queries enter the order
/// statistics as +infinity.
pub fn rank_vs_completeness(items: &[(f64, Option<usize>)], bins: usize) -> Vec<RankBin> {
    assert!(bins >= 1);
    let mut table = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let mut ranks: Vec<f64> = items
            .iter()
            .filter(|(c, _)| *c > lo && *c <= hi)
            .map(|(_, r)| r.map_or(f64::INFINITY, |v| v as f64))
            .collect();
        ranks.sort_by(f64::total_cmp);
        let n = ranks.len();
        let n_unreached = ranks.iter().filter(|r| r.is_infinite()).count();
        let finite: Vec<f64> = ranks.iter().copied().filter(|r| r.is_finite()).collect();
        table.push(RankBin {
            lo,
            hi,
            n,
            n_unreached,
            median: percentile(&ranks, 0.5),
            q1: percentile(&ranks, 0.25),
            q3: percentile(&ranks, 0.75),
            mean_finite: if finite.is_empty() {
                None
            } else {
                Some(finite.iter().sum::<f64>() / finite.len() as f64)
            },
        });
    }
    table
}

fn fmt_stat(v: f64) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn rank_table_csv(table: &[RankBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,n,n_unreached,median_rank,q1,q3,mean_rank\n");
    for b in table {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.lo,
            b.hi,
            b.n,
            b.n_unreached,
            fmt_stat(b.median),
            fmt_stat(b.q1),
            fmt_stat(b.q3),
            b.mean_finite.map_or("n/a".to_string(), |m| format!("{m}")),
        )
        .expect("string write");
    }
    out
}

// ---------------------------------------------------------------------------
// Closures
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureStats {
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// Mean translational error of correct closures; `None` when there are
    /// none.
    pub mean_correct_error: Option<f64>,
    /// Closures without ground truth, excluded with a warning.
    pub n_excluded: usize,
}

/// Counts closures against the correctness threshold (5 m in the
/// experiments). Closures without a ground-truth error are excluded.
pub fn closure_stats(closures: &[LoopClosure], threshold: f64) -> ClosureStats {
    let mut stats = ClosureStats {
        n_correct: 0,
        n_incorrect: 0,
        mean_correct_error: None,
        n_excluded: 0,
    };
    let mut err_sum = 0.0;
    for c in closures {
        match c.error_m {
            Some(e) if e <= threshold => {
                stats.n_correct += 1;
                err_sum += e;
            }
            Some(_) => stats.n_incorrect += 1,
            None => {
                stats.n_excluded += 1;
                log_info!(
                    "closure at t={} has no ground truth; excluded from stats",
                    c.timestamp
                );
            }
        }
    }
    if stats.n_correct > 0 {
        stats.mean_correct_error = Some(err_sum / stats.n_correct as f64);
    }
    stats
}

/// Closure log with the documented schema:
/// `timestamp,tx,ty,tz,err_m,n_inliers,policy`.
pub fn closure_log_csv(closures: &[LoopClosure], policy: &str) -> String {
    let mut out = String::from("timestamp,tx,ty,tz,err_m,n_inliers,policy\n");
    for c in closures {
        let t = c.pose.translation();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.timestamp,
            t.x,
            t.y,
            t.z,
            c.error_m.map_or("n/a".to_string(), |e| format!("{e}")),
            c.inliers.len(),
            policy
        )
        .expect("string write");
    }
    out
}

// ---------------------------------------------------------------------------
// Attention versus rank
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct AttentionBin {
    pub bin: usize,
    pub n: usize,
    pub mean_score: f64,
}

/// Sorts segments by rank (unreached last), splits them into up to `bins`
/// equal-count bins and reports the mean attention score per bin. With
/// fewer segments than bins, fewer bins are produced.
pub fn attention_vs_rank(items: &[(Option<usize>, f64)], bins: usize) -> Vec<AttentionBin> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|i| (items[*i].0.map_or(usize::MAX, |r| r), *i));
    let n = items.len();
    let bins = bins.min(n.max(1));
    if n < bins {
        log_info!("attention_vs_rank: only {n} segments for {bins} bins");
    }
    let mut out = Vec::with_capacity(bins);
    let base = n / bins;
    let extra = n % bins;
    let mut start = 0usize;
    for b in 0..bins {
        let len = base + usize::from(b < extra);
        let slice = &order[start..start + len];
        start += len;
        let mean = if slice.is_empty() {
            f64::NAN
        } else {
            slice.iter().map(|i| items[*i].1).sum::<f64>() / slice.len() as f64
        };
        out.push(AttentionBin {
            bin: b,
            n: len,
            mean_score: mean,
        });
    }
    out
}

pub fn attention_table_csv(table: &[AttentionBin]) -> String {
    let mut out = String::from("bin,n,mean_attention_score\n");
    for b in table {
        writeln!(out, "{},{},{}", b.bin, b.n, fmt_stat(b.mean_score)).expect("string write");
    }
    out
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

/// Line plot of (x, y) series with axes and labels.
pub fn line_plot_svg(series: &[(f64, f64)], title: &str, x_label: &str, y_label: &str) -> String {
    let (w, h) = (480.0, 320.0);
    let (ml, mr, mt, mb) = (56.0, 16.0, 28.0, 44.0);
    let mut doc = SvgDoc::new(w, h);
    doc.text(ml, mt - 10.0, 13.0, title);
    doc.line(ml, h - mb, w - mr, h - mb, "#000000", 1.0);
    doc.line(ml, mt, ml, h - mb, "#000000", 1.0);
    doc.text(w / 2.0 - 20.0, h - 8.0, 11.0, x_label);
    doc.text(4.0, mt - 8.0, 11.0, y_label);
    let finite: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if !finite.is_empty() {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (x, y) in &finite {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
        let py = |y: f64| (h - mb) - (y - y0) / (y1 - y0) * (h - mt - mb);
        let pts: Vec<(f64, f64)> = finite.iter().map(|(x, y)| (px(*x), py(*y))).collect();
        doc.path(&pts, "#1f77b4", 1.5);
        for (x, y) in &pts {
            doc.rect(x - 1.5, y - 1.5, 3.0, 3.0, "#1f77b4", 1.0);
        }
        doc.text(ml - 4.0, h - mb + 14.0, 9.0, &format!("{x0:.2}"));
        doc.text(w - mr - 24.0, h - mb + 14.0, 9.0, &format!("{x1:.2}"));
        doc.text(4.0, h - mb + 2.0, 9.0, &format!("{y0:.2}"));
        doc.text(4.0, mt + 10.0, 9.0, &format!("{y1:.2}"));
    }
    doc.finish()
}

/// Histogram of values with the given bin count.
pub fn histogram_svg(values: &[f64], bins: usize, title: &str, x_label: &str) -> String {
    let (w, h) = (480.0, 320.0);
    let (ml, mr, mt, mb) = (56.0, 16.0, 28.0, 44.0);
    let mut doc = SvgDoc::new(w, h);
    doc.text(ml, mt - 10.0, 13.0, title);
    doc.line(ml, h - mb, w - mr, h - mb, "#000000", 1.0);
    doc.line(ml, mt, ml, h - mb, "#000000", 1.0);
    doc.text(w / 2.0 - 20.0, h - 8.0, 11.0, x_label);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if !finite.is_empty() && bins > 0 {
        let lo = finite.iter().copied().fold(f64::MAX, f64::min);
        let hi = finite.iter().copied().fold(f64::MIN, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in &finite {
            let b = (((v - lo) / span) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let max_count = counts.iter().copied().max().unwrap_or(1).max(1);
        let bw = (w - ml - mr) / bins as f64;
        for (b, count) in counts.iter().enumerate() {
            let bh = (h - mt - mb) * *count as f64 / max_count as f64;
            doc.rect(ml + b as f64 * bw, h - mb - bh, bw - 1.0, bh, "#ff7f0e", 1.0);
        }
        doc.text(ml - 4.0, h - mb + 14.0, 9.0, &format!("{lo:.2}"));
        doc.text(w - mr - 24.0, h - mb + 14.0, 9.0, &format!("{hi:.2}"));
        doc.text(4.0, mt + 10.0, 9.0, &format!("{max_count}"));
    }
    doc.finish()
}

/// Writes a run manifest: sorted key=value lines capturing parameters and
/// seeds.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<(), ReportError> {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort();
    let mut out = String::from("# run manifest\n");
    for (k, v) in sorted {
        writeln!(out, "{k}={v}").expect("string write");
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{DbEntry, SegmentDb};
    use crate::rng::Pcg32;
    use crate::types::{Vec3, DESCRIPTOR_DIM};

    fn desc(seed: u64) -> Descriptor {
        let mut rng = Pcg32::new(seed);
        let v: Vec<f64> = (0..DESCRIPTOR_DIM).map(|_| rng.normal(0.0, 1.0)).collect();
        Descriptor::new(&v).unwrap()
    }

    fn entry(seed: u64, segment_id: u64, sequence_id: u64, truth: i64) -> DbEntry {
        DbEntry {
            segment_id,
            sequence_id,
            descriptor: desc(seed),
            centroid: Vec3::zeros(),
            truth_id: Some(truth),
        }
    }

    #[test]
    fn rank_of_positions() {
        // Query equals entry 0's descriptor (truth 7): rank 1.
        let db = SegmentDb::new(vec![
            entry(1, 0, 0, 7),
            entry(2, 1, 0, 8),
            entry(3, 2, 0, 9),
        ]);
        assert_eq!(rank_of(&db, &desc(1), 7, None), Some(1));
        // Nearest two are other objects: the correct match ranks third.
        let q = desc(2);
        let r = rank_of(&db, &q, 9, None);
        assert!(r.is_some());
        let all = crate::localization::knn_query(&db, 0, &q, 3, None);
        let expect = all
            .iter()
            .position(|c| db.entries()[c.target_entry].truth_id == Some(9))
            .unwrap()
            + 1;
        assert_eq!(r, Some(expect));
        // Absent truth id: unbounded.
        assert_eq!(rank_of(&db, &desc(1), 42, None), None);
    }

    #[test]
    fn rank_bins_with_all_rank_one() {
        let items: Vec<(f64, Option<usize>)> =
            (0..40).map(|i| (0.1 + 0.02 * i as f64, Some(1))).collect();
        let table = rank_vs_completeness(&items, 5);
        for b in &table {
            if b.n > 0 {
                assert_eq!(b.median, 1.0);
            }
        }
    }

    #[test]
    fn rank_bins_count_unreached_as_infinite() {
        let items = vec![(0.9, None), (0.9, None), (0.95, Some(2))];
        let table = rank_vs_completeness(&items, 1);
        assert_eq!(table[0].n, 3);
        assert_eq!(table[0].n_unreached, 2);
        assert!(table[0].median.is_infinite());
        assert_eq!(table[0].mean_finite, Some(2.0));
        // Empty bin renders with n = 0.
        let table = rank_vs_completeness(&[], 2);
        assert_eq!(table[0].n, 0);
        let csv = rank_table_csv(&table);
        assert!(csv.lines().count() == 3);
        assert!(csv.contains("n/a"));
    }

    #[test]
    fn closure_stats_examples() {
        let mk = |err: Option<f64>| LoopClosure {
            pose: crate::types::PoseSE3::identity(),
            inliers: Vec::new(),
            rms: 0.0,
            timestamp: 0.0,
            error_m: err,
        };
        let s = closure_stats(&[mk(Some(0.2))], 5.0);
        assert_eq!((s.n_correct, s.n_incorrect), (1, 0));
        assert_eq!(s.mean_correct_error, Some(0.2));
        let s = closure_stats(&[mk(Some(0.3)), mk(Some(6.0))], 5.0);
        assert_eq!((s.n_correct, s.n_incorrect), (1, 1));
        assert_eq!(s.mean_correct_error, Some(0.3));
        let s = closure_stats(&[], 5.0);
        assert_eq!((s.n_correct, s.n_incorrect), (0, 0));
        assert!(s.mean_correct_error.is_none());
        // Missing ground truth is excluded, not counted.
        let s = closure_stats(&[mk(None), mk(Some(1.0))], 5.0);
        assert_eq!(s.n_excluded, 1);
        assert_eq!(s.n_correct, 1);
    }

    #[test]
    fn closure_stats_are_order_invariant() {
        let mk = |err: f64| LoopClosure {
            pose: crate::types::PoseSE3::identity(),
            inliers: Vec::new(),
            rms: 0.0,
            timestamp: 0.0,
            error_m: Some(err),
        };
        let a = vec![mk(0.1), mk(7.0), mk(2.0), mk(0.4)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(closure_stats(&a, 5.0), closure_stats(&b, 5.0));
    }

    #[test]
    fn attention_bins_split_equally_and_follow_rank_order() {
        // Scores inversely related to rank give strictly decreasing means.
        let items: Vec<(Option<usize>, f64)> =
            (1..=30).map(|r| (Some(r), 1.0 / r as f64)).collect();
        let table = attention_vs_rank(&items, 10);
        assert_eq!(table.len(), 10);
        assert!(table.iter().all(|b| b.n == 3));
        for w in table.windows(2) {
            assert!(w[0].mean_score > w[1].mean_score);
        }
        // Flat scores give a flat table.
        let items: Vec<(Option<usize>, f64)> = (1..=20).map(|r| (Some(r), 0.5)).collect();
        let table = attention_vs_rank(&items, 10);
        assert!(table.iter().all(|b| (b.mean_score - 0.5).abs() < 1e-12));
        // Fewer segments than bins.
        let items = vec![(Some(1), 0.5), (Some(2), 0.7)];
        let table = attention_vs_rank(&items, 10);
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn plots_are_well_formed_svg() {
        let series: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (i * i) as f64)).collect();
        let text = line_plot_svg(&series, "ranks", "completeness", "median rank");
        crate::svg::check_svg(&text).unwrap();
        let hist = histogram_svg(&[0.1, 0.2, 0.2, 5.0, 7.5], 8, "errors", "m");
        crate::svg::check_svg(&hist).unwrap();
        // Degenerate inputs still produce valid documents.
        crate::svg::check_svg(&line_plot_svg(&[], "empty", "x", "y")).unwrap();
        crate::svg::check_svg(&histogram_svg(&[], 5, "empty", "x")).unwrap();
    }

    #[test]
    fn closure_log_matches_schema() {
        let c = LoopClosure {
            pose: crate::types::PoseSE3::from_translation(Vec3::new(1.0, 2.0, 3.0), 4.5),
            inliers: Vec::new(),
            rms: 0.0,
            timestamp: 4.5,
            error_m: Some(0.25),
        };
        let csv = closure_log_csv(&[c], "1nn");
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "timestamp,tx,ty,tz,err_m,n_inliers,policy"
        );
        assert_eq!(lines.next().unwrap(), "4.5,1,2,3,0.25,0,1nn");
    }
}
