//! Network input preparation: view selection, normalization, rotation
//! augmentation.

use super::tensor::{Feat2, Feat3};
use crate::log_info;
use crate::segmentation::VoxelGrid;
use crate::types::VisualView;

/// Views with a mask smaller than this never reach the network.
pub const MIN_MASK_AREA: usize = 50;

/// Normalized 3-channel input: standardized intensity, standardized range,
/// binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualTensor(pub Feat2<f32>);

impl VisualTensor {
    pub fn height(&self) -> usize {
        self.0.h
    }

    pub fn width(&self) -> usize {
        self.0.w
    }
}

/// Dataset-wide intensity statistics used by [`normalize_inputs`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub mean: f64,
    pub std: f64,
}

impl DatasetStats {
    /// Mean and standard deviation of the intensity channel over every
    /// pixel of the given views.
    pub fn from_views<'a>(views: impl Iterator<Item = &'a VisualView>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for v in views {
            for x in v.intensity.data() {
                n += 1;
                sum += x;
                sumsq += x * x;
            }
        }
        if n == 0 {
            return Self { mean: 0.0, std: 1.0 };
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        Self {
            mean,
            std: var.sqrt().max(1e-6),
        }
    }
}

/// Builds the 3-channel input tensor: intensity standardized with the
/// dataset statistics, range standardized with the mean and deviation of
/// the mask pixels (applied to the whole channel), mask copied through.
pub fn normalize_inputs(view: &VisualView, stats: &DatasetStats) -> VisualTensor {
    assert!(view.mask_area > 0, "normalize_inputs needs a non-empty mask");
    let (h, w) = (view.intensity.height(), view.intensity.width());
    let mut data = Vec::with_capacity(3 * h * w);
    for v in view.intensity.data() {
        data.push(((v - stats.mean) / stats.std) as f32);
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut n = 0usize;
    for (r, m) in view.range.data().iter().zip(view.mask.data().iter()) {
        if *m != 0 {
            sum += r;
            sumsq += r * r;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let mut std = (sumsq / n as f64 - mean * mean).max(0.0).sqrt();
    if std == 0.0 {
        log_info!("range deviation over mask is zero; clamping to 1e-6");
        std = 1e-6;
    }
    for r in view.range.data() {
        data.push(((r - mean) / std) as f32);
    }
    for m in view.mask.data() {
        data.push(if *m != 0 { 1.0 } else { 0.0 });
    }
    VisualTensor(Feat2::from_data(3, h, w, data))
}

/// View selection mode.
#[derive(Clone, Copy, Debug)]
pub enum ViewQuery {
    /// Training uses the view captured at the queried observation time.
    Train { observation_time: f64 },
    /// Testing uses the view with the largest mask seen so far.
    Test,
}

/// View selection rule over any carrier type: train mode returns the view
/// at the queried observation time, test mode the largest mask seen so
/// far; both return `None` when the best candidate's mask is below
/// [`MIN_MASK_AREA`]. `meta` must yield (timestamp, mask_area).
pub fn select_view_by<T>(
    views: &[T],
    query: ViewQuery,
    meta: impl Fn(&T) -> (f64, usize),
) -> Option<&T> {
    let candidate = match query {
        ViewQuery::Train { observation_time } => {
            views.iter().find(|v| meta(v).0 == observation_time)
        }
        ViewQuery::Test => views.iter().fold(None::<&T>, |best, v| match best {
            Some(b) if meta(b).1 >= meta(v).1 => Some(b),
            _ => Some(v),
        }),
    };
    candidate.filter(|v| meta(v).1 >= MIN_MASK_AREA)
}

/// Selects the view to describe a segment with, or `None` when the best
/// candidate's mask is below [`MIN_MASK_AREA`]. `views` must be time-sorted.
pub fn select_view(views: &[VisualView], query: ViewQuery) -> Option<&VisualView> {
    debug_assert!(views.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    select_view_by(views, query, |v| (v.timestamp, v.mask_area))
}

/// Circularly shifts all three channels right by `shift` columns.
pub fn augment_rotate(tensor: &VisualTensor, shift: usize) -> VisualTensor {
    let f = &tensor.0;
    assert!(shift < f.w, "shift {} out of range {}", shift, f.w);
    if shift == 0 {
        return tensor.clone();
    }
    let mut out = Feat2::zeros(f.c, f.h, f.w);
    for c in 0..f.c {
        for y in 0..f.h {
            let src = (c * f.h + y) * f.w;
            let dst = src;
            for x in 0..f.w {
                out.data[dst + (x + shift) % f.w] = f.data[src + x];
            }
        }
    }
    VisualTensor(out)
}

/// Converts a voxel occupancy grid into the 1-channel f32 tensor the
/// geometry branch consumes.
pub fn voxels_to_feat(grid: &VoxelGrid) -> Feat3<f32> {
    Feat3::from_fn(
        1,
        crate::segmentation::VOXEL_NX,
        crate::segmentation::VOXEL_NY,
        crate::segmentation::VOXEL_NZ,
        |_, x, y, z| grid.get(x, y, z) as f32,
    )
}
