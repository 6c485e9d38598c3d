//! Score-based class activation heatmaps and the segment attention score.
//!
//! The spatial activation maps of the last visual convolution are turned
//! into input-sized masks; each channel's weight is either the softmax
//! probability of a target class when the masked input is forwarded
//! (classification variant) or the inverse distance between the masked
//! descriptor and the unmasked one (descriptor variant). The weighted sum
//! of upsampled activations, clipped at zero and min-max normalized, is
//! the attention heatmap.

use crate::net::{forward, Feat2, Feat3, NetError, NetParams, VisualTensor};
use crate::types::Grid2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("target class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("attention score needs a non-empty mask")]
    EmptyMask,
    #[error("attention score needs a non-empty complement")]
    EmptyComplement,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Normalized attention heatmap over the input image.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub values: Grid2<f64>,
    pub source_layer: &'static str,
}

/// Norm used for descriptor distances in the channel weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceNorm {
    L2,
    L1,
}

// ---------------------------------------------------------------------------
// Upsampling and channel masks
// ---------------------------------------------------------------------------

/// Bilinear upsample of one channel to the target size (pixel centers
/// aligned).
pub fn upsample_bilinear(src: &[f64], sh: usize, sw: usize, th: usize, tw: usize) -> Grid2<f64> {
    let mut out = Grid2::filled(th, tw, 0.0);
    for ty in 0..th {
        let sy = ((ty as f64 + 0.5) * sh as f64 / th as f64 - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for tx in 0..tw {
            let sx = ((tx as f64 + 0.5) * sw as f64 / tw as f64 - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;
            let v00 = src[y0 * sw + x0];
            let v01 = src[y0 * sw + x1];
            let v10 = src[y1 * sw + x0];
            let v11 = src[y1 * sw + x1];
            let top = v00 + (v01 - v00) * fx;
            let bot = v10 + (v11 - v10) * fx;
            out.set(ty, tx, top + (bot - top) * fy);
        }
    }
    out
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo, hi)
}

/// Upsamples one activation channel to the target size and min-max
/// normalizes it to [0, 1]; a constant channel yields all zeros.
pub fn channel_mask(activation: &[f64], sh: usize, sw: usize, th: usize, tw: usize) -> Grid2<f64> {
    let mut up = upsample_bilinear(activation, sh, sw, th, tw);
    let (lo, hi) = min_max(up.data());
    if hi == lo {
        return Grid2::filled(th, tw, 0.0);
    }
    for v in up.data_mut() {
        *v = (*v - lo) / (hi - lo);
    }
    up
}

/// Channel masks of every channel of a spatial activation tensor.
pub fn channel_masks(spatial: &Feat2<f32>, th: usize, tw: usize) -> Vec<Grid2<f64>> {
    (0..spatial.c)
        .map(|c| {
            let ch: Vec<f64> = spatial.channel(c).iter().map(|v| f64::from(*v)).collect();
            channel_mask(&ch, spatial.h, spatial.w, th, tw)
        })
        .collect()
}

/// Element-wise product of the input with a mask: intensity and range
/// channels are multiplied, the binary mask channel is intersected with
/// the mask thresholded at 0.5.
pub fn mask_input(x: &VisualTensor, mask: &Grid2<f64>) -> VisualTensor {
    let f = &x.0;
    assert_eq!(mask.height(), f.h);
    assert_eq!(mask.width(), f.w);
    let hw = f.h * f.w;
    let mut data = Vec::with_capacity(3 * hw);
    for ch in 0..2 {
        for i in 0..hw {
            data.push(f.data[ch * hw + i] * mask.data()[i] as f32);
        }
    }
    for i in 0..hw {
        let keep = f.data[2 * hw + i] >= 0.5 && mask.data()[i] >= 0.5;
        data.push(if keep { 1.0 } else { 0.0 });
    }
    VisualTensor(Feat2::from_data(3, f.h, f.w, data))
}

// ---------------------------------------------------------------------------
// Channel weights
// ---------------------------------------------------------------------------

/// Classification-style weights: the softmax probability of the target
/// class when the input masked by each channel mask is forwarded.
pub fn classification_weights(
    x: &VisualTensor,
    voxels: &Feat3<f32>,
    masks: &[Grid2<f64>],
    params: &NetParams<f32>,
    target_class: usize,
) -> Result<Vec<f64>, AttentionError> {
    if target_class >= params.config.n_classes {
        return Err(AttentionError::ClassOutOfRange {
            class: target_class,
            n_classes: params.config.n_classes,
        });
    }
    let mut weights = Vec::with_capacity(masks.len());
    for m in masks {
        let masked = mask_input(x, m);
        let out = forward(params, voxels, &masked.0)?;
        let probs = crate::net::softmax(&out.logits);
        weights.push(f64::from(probs[target_class]));
    }
    Ok(weights)
}

/// Inverse-distance weights normalized to sum 1. An exact-zero distance
/// sends all weight to the first such channel.
pub fn descriptor_weights_from_distances(distances: &[f64]) -> Vec<f64> {
    if let Some(zero) = distances.iter().position(|d| *d == 0.0) {
        let mut w = vec![0.0; distances.len()];
        w[zero] = 1.0;
        return w;
    }
    let mut w: Vec<f64> = distances.iter().map(|d| 1.0 / d).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Descriptor-output weights: inverse distance between the descriptor of
/// the masked input and the descriptor of the unmodified input.
pub fn descriptor_weights(
    x: &VisualTensor,
    voxels: &Feat3<f32>,
    masks: &[Grid2<f64>],
    params: &NetParams<f32>,
    norm: DistanceNorm,
) -> Result<Vec<f64>, AttentionError> {
    let reference = forward(params, voxels, &x.0)?.descriptor;
    let mut distances = Vec::with_capacity(masks.len());
    for m in masks {
        let masked = mask_input(x, m);
        let out = forward(params, voxels, &masked.0)?;
        let d = match norm {
            DistanceNorm::L2 => reference
                .iter()
                .zip(out.descriptor.iter())
                .map(|(a, b)| {
                    let d = f64::from(a - b);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            DistanceNorm::L1 => reference
                .iter()
                .zip(out.descriptor.iter())
                .map(|(a, b)| f64::from(a - b).abs())
                .sum::<f64>(),
        };
        distances.push(d);
    }
    Ok(descriptor_weights_from_distances(&distances))
}

// ---------------------------------------------------------------------------
// Heatmaps and the attention score
// ---------------------------------------------------------------------------

/// Weighted sum of upsampled activation channels, clipped at zero and
/// min-max normalized. A constant pre-normalization map yields all zeros.
pub fn scorecam_heatmap(weights: &[f64], spatial: &Feat2<f32>, th: usize, tw: usize) -> Heatmap {
    assert_eq!(weights.len(), spatial.c, "one weight per channel");
    let mut acc = Grid2::filled(th, tw, 0.0f64);
    for (c, w) in weights.iter().enumerate() {
        let ch: Vec<f64> = spatial.channel(c).iter().map(|v| f64::from(*v)).collect();
        let up = upsample_bilinear(&ch, spatial.h, spatial.w, th, tw);
        for (a, u) in acc.data_mut().iter_mut().zip(up.data().iter()) {
            *a += w * u;
        }
    }
    for v in acc.data_mut() {
        *v = v.max(0.0);
    }
    let (lo, hi) = min_max(acc.data());
    if hi == lo {
        return Heatmap {
            values: Grid2::filled(th, tw, 0.0),
            source_layer: "vconv3",
        };
    }
    for v in acc.data_mut() {
        *v = (*v - lo) / (hi - lo);
    }
    Heatmap {
        values: acc,
        source_layer: "vconv3",
    }
}

/// Dilates a binary mask by a square radius; columns wrap, rows clamp.
pub fn dilate_mask(mask: &Grid2<u8>, radius: usize) -> Grid2<u8> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Grid2::filled(h, w, 0u8);
    let r = radius as isize;
    for y in 0..h {
        for x in 0..w {
            if *mask.get(y, x) == 0 {
                continue;
            }
            for dy in -r..=r {
                let ny = y as isize + dy;
                if ny < 0 || ny >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let nx = (x as isize + dx).rem_euclid(w as isize);
                    out.set(ny as usize, nx as usize, 1);
                }
            }
        }
    }
    out
}

/// Ratio of the mean heatmap value over the dilated mask to the mean over
/// its complement. A zero-mean complement with attention inside yields
/// +infinity ("unbounded"); an all-zero heatmap yields 1.
pub fn attention_score(
    heatmap: &Heatmap,
    mask: &Grid2<u8>,
    dilation: usize,
) -> Result<f64, AttentionError> {
    if mask.data().iter().all(|m| *m == 0) {
        return Err(AttentionError::EmptyMask);
    }
    let dilated = dilate_mask(mask, dilation);
    let mut in_sum = 0.0;
    let mut in_n = 0usize;
    let mut out_sum = 0.0;
    let mut out_n = 0usize;
    for (v, m) in heatmap.values.data().iter().zip(dilated.data().iter()) {
        if *m != 0 {
            in_sum += v;
            in_n += 1;
        } else {
            out_sum += v;
            out_n += 1;
        }
    }
    if out_n == 0 {
        return Err(AttentionError::EmptyComplement);
    }
    let in_mean = in_sum / in_n as f64;
    let out_mean = out_sum / out_n as f64;
    if out_mean == 0.0 {
        if in_mean == 0.0 {
            return Ok(1.0);
        }
        return Ok(f64::INFINITY);
    }
    Ok(in_mean / out_mean)
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// 8-bit PGM of a heatmap in [0, 1].
pub fn export_heatmap_pgm(
    path: &std::path::Path,
    heatmap: &Heatmap,
) -> Result<(), crate::imaging::ImagingError> {
    let mut bytes = format!(
        "P5\n{} {}\n255\n",
        heatmap.values.width(),
        heatmap.values.height()
    )
    .into_bytes();
    bytes.extend(
        heatmap
            .values
            .data()
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    use std::io::Write as _;
    let mut f = std::fs::File::create(path).map_err(|e| crate::imaging::ImagingError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(&bytes)
        .map_err(|e| crate::imaging::ImagingError::Io {
            path: path.display().to_string(),
            source: e,
        })
}

/// SVG overlay of a heatmap over the intensity image with a mask contour.
pub fn overlay_svg(intensity: &Grid2<f64>, heatmap: &Heatmap, mask: &Grid2<u8>) -> String {
    let (h, w) = (intensity.height(), intensity.width());
    let scale = 4.0;
    let mut doc = crate::svg::SvgDoc::new(w as f64 * scale, h as f64 * scale);
    // Grayscale background.
    for y in 0..h {
        for x in 0..w {
            let g = (intensity.get(y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
            doc.rect(
                x as f64 * scale,
                y as f64 * scale,
                scale,
                scale,
                &format!("#{g:02x}{g:02x}{g:02x}"),
                1.0,
            );
        }
    }
    // Heatmap in red with value-scaled opacity.
    for y in 0..h {
        for x in 0..w {
            let v = *heatmap.values.get(y, x);
            if v > 0.01 {
                doc.rect(
                    x as f64 * scale,
                    y as f64 * scale,
                    scale,
                    scale,
                    "#ff3300",
                    0.6 * v,
                )
            }
        }
    }
    // Mask contour: boundary edges between mask and non-mask pixels.
    let is_set = |y: isize, x: isize| -> bool {
        if y < 0 || y >= h as isize {
            return false;
        }
        let xw = x.rem_euclid(w as isize) as usize;
        *mask.get(y as usize, xw) != 0
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !is_set(y, x) {
                continue;
            }
            let (fx, fy) = (x as f64 * scale, y as f64 * scale);
            if !is_set(y - 1, x) {
                doc.line(fx, fy, fx + scale, fy, "#00ccff", 1.0);
            }
            if !is_set(y + 1, x) {
                doc.line(fx, fy + scale, fx + scale, fy + scale, "#00ccff", 1.0);
            }
            if !is_set(y, x - 1) {
                doc.line(fx, fy, fx, fy + scale, "#00ccff", 1.0);
            }
            if !is_set(y, x + 1) {
                doc.line(fx + scale, fy, fx + scale, fy + scale, "#00ccff", 1.0);
            }
        }
    }
    doc.finish()
}
