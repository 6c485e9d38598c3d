//! Two-branch descriptor network.
//!
//! Visual branch: three strided convolutions with ReLU over the 3-channel
//! view tensor, global average pool to 64 features. The post-ReLU output of
//! the last convolution is the spatial layer used for attention analysis.
//! Geometry branch: two 3-D convolutions with 2x2x2 max pooling over the
//! voxel grid, flattened into a 128-wide fully connected layer with ReLU.
//! The branches concatenate into a fully connected layer that emits the
//! 64-d descriptor; a classification head on top is used for training.

use super::layers::{
    global_avg_pool, global_avg_pool_backward, maxpool3, maxpool3_backward, relu_backward_slice,
    relu_slice, softmax_cross_entropy, Conv2d, Conv3d, Linear, MaxPool3Out,
};
use super::scalar::Scalar;
use super::tensor::{Feat2, Feat3};
use crate::rng::Pcg32;
use crate::segmentation::{VOXEL_NX, VOXEL_NY, VOXEL_NZ};
use crate::types::DESCRIPTOR_DIM;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite activation in layer `{0}`")]
    NonFinite(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("invalid network config: {0}")]
    BadConfig(String),
    #[error("training needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no usable view")]
    EmptyClass(usize),
    #[error("input shape {got} does not match config {want}")]
    ShapeMismatch { got: String, want: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const VISUAL_CHANNELS: [usize; 3] = [16, 32, 64];
pub const GEOM_CHANNELS: [usize; 2] = [8, 16];
pub const GEOM_FC: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub in_h: usize,
    pub in_w: usize,
    pub n_classes: usize,
}

impl NetConfig {
    pub fn new(in_h: usize, in_w: usize, n_classes: usize) -> Result<Self, NetError> {
        if !in_h.is_multiple_of(8) || !in_w.is_multiple_of(8) || in_h < 8 || in_w < 8 {
            return Err(NetError::BadConfig(format!(
                "image size {in_h}x{in_w} must be a multiple of 8 in both dimensions"
            )));
        }
        if n_classes < 2 {
            return Err(NetError::TooFewClasses(n_classes));
        }
        Ok(Self {
            in_h,
            in_w,
            n_classes,
        })
    }

    /// Spatial size of the attention layer (post third convolution).
    pub fn spatial_dims(&self) -> (usize, usize) {
        (self.in_h / 8, self.in_w / 8)
    }

    fn geom_flat() -> usize {
        GEOM_CHANNELS[1] * (VOXEL_NX / 4) * (VOXEL_NY / 4) * (VOXEL_NZ / 4)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<T> {
    pub config: NetConfig,
    pub vconv1: Conv2d<T>,
    pub vconv2: Conv2d<T>,
    pub vconv3: Conv2d<T>,
    pub gconv1: Conv3d<T>,
    pub gconv2: Conv3d<T>,
    pub gfc: Linear<T>,
    pub merge: Linear<T>,
    pub head: Linear<T>,
}

impl<T: Scalar> NetParams<T> {
    /// Zero-valued parameter set of the given shape.
    pub fn zeros(config: NetConfig) -> Self {
        Self {
            config,
            vconv1: Conv2d::new(3, VISUAL_CHANNELS[0], 5, 2, 2),
            vconv2: Conv2d::new(VISUAL_CHANNELS[0], VISUAL_CHANNELS[1], 5, 2, 2),
            vconv3: Conv2d::new(VISUAL_CHANNELS[1], VISUAL_CHANNELS[2], 3, 2, 1),
            gconv1: Conv3d::new(1, GEOM_CHANNELS[0], 3, 1),
            gconv2: Conv3d::new(GEOM_CHANNELS[0], GEOM_CHANNELS[1], 3, 1),
            gfc: Linear::new(NetConfig::geom_flat(), GEOM_FC),
            merge: Linear::new(GEOM_FC + VISUAL_CHANNELS[2], DESCRIPTOR_DIM),
            head: Linear::new(DESCRIPTOR_DIM, config.n_classes),
        }
    }

    /// Seeded uniform fan-in initialization; biases start at zero.
    pub fn init(config: NetConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let mut rng = Pcg32::new(seed);
        let mut fill = |w: &mut Vec<T>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = T::from_f64(rng.uniform(-bound, bound));
            }
        };
        let f1 = 3 * 25;
        fill(&mut params.vconv1.weight, f1);
        fill(&mut params.vconv2.weight, VISUAL_CHANNELS[0] * 25);
        fill(&mut params.vconv3.weight, VISUAL_CHANNELS[1] * 9);
        fill(&mut params.gconv1.weight, 27);
        fill(&mut params.gconv2.weight, GEOM_CHANNELS[0] * 27);
        fill(&mut params.gfc.weight, NetConfig::geom_flat());
        fill(&mut params.merge.weight, GEOM_FC + VISUAL_CHANNELS[2]);
        fill(&mut params.head.weight, DESCRIPTOR_DIM);
        params
    }

    /// Named views of every parameter tensor, in checkpoint order.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        vec![
            ("vconv1.weight", &self.vconv1.weight),
            ("vconv1.bias", &self.vconv1.bias),
            ("vconv2.weight", &self.vconv2.weight),
            ("vconv2.bias", &self.vconv2.bias),
            ("vconv3.weight", &self.vconv3.weight),
            ("vconv3.bias", &self.vconv3.bias),
            ("gconv1.weight", &self.gconv1.weight),
            ("gconv1.bias", &self.gconv1.bias),
            ("gconv2.weight", &self.gconv2.weight),
            ("gconv2.bias", &self.gconv2.bias),
            ("gfc.weight", &self.gfc.weight),
            ("gfc.bias", &self.gfc.bias),
            ("merge.weight", &self.merge.weight),
            ("merge.bias", &self.merge.bias),
            ("head.weight", &self.head.weight),
            ("head.bias", &self.head.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<T>)> {
        vec![
            ("vconv1.weight", &mut self.vconv1.weight),
            ("vconv1.bias", &mut self.vconv1.bias),
            ("vconv2.weight", &mut self.vconv2.weight),
            ("vconv2.bias", &mut self.vconv2.bias),
            ("vconv3.weight", &mut self.vconv3.weight),
            ("vconv3.bias", &mut self.vconv3.bias),
            ("gconv1.weight", &mut self.gconv1.weight),
            ("gconv1.bias", &mut self.gconv1.bias),
            ("gconv2.weight", &mut self.gconv2.weight),
            ("gconv2.bias", &mut self.gconv2.bias),
            ("gfc.weight", &mut self.gfc.weight),
            ("gfc.bias", &mut self.gfc.bias),
            ("merge.weight", &mut self.merge.weight),
            ("merge.bias", &mut self.merge.bias),
            ("head.weight", &mut self.head.weight),
            ("head.bias", &mut self.head.bias),
        ]
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn map_to<U: Scalar>(&self) -> NetParams<U> {
        let mut out = NetParams::<U>::zeros(self.config);
        for ((_, src), (_, dst)) in self.tensors().iter().zip(out.tensors_mut()) {
            for (s, d) in src.iter().zip(dst.iter_mut()) {
                *d = U::from_f64(s.to_f64());
            }
        }
        out
    }
}

/// Full set of intermediate activations of one forward pass.
#[derive(Debug)]
pub struct ForwardTrace<T> {
    pub v_pre1: Feat2<T>,
    pub v_act1: Feat2<T>,
    pub v_pre2: Feat2<T>,
    pub v_act2: Feat2<T>,
    pub v_pre3: Feat2<T>,
    /// Post-ReLU spatial maps of the last visual convolution.
    pub v_act3: Feat2<T>,
    pub v_pooled: Vec<T>,
    pub g_conv1: Feat3<T>,
    pub g_pool1: MaxPool3Out<T>,
    pub g_conv2: Feat3<T>,
    pub g_pool2: MaxPool3Out<T>,
    pub g_flat: Vec<T>,
    pub g_pre_fc: Vec<T>,
    pub g_fc: Vec<T>,
    pub merged_in: Vec<T>,
    pub descriptor: Vec<T>,
    pub logits: Vec<T>,
}

#[derive(Debug)]
pub struct ForwardOutput<T> {
    pub descriptor: Vec<T>,
    /// Post-ReLU spatial activation maps of the last visual convolution.
    pub spatial: Feat2<T>,
    pub logits: Vec<T>,
}

fn check_shapes<T: Scalar>(
    params: &NetParams<T>,
    voxels: &Feat3<T>,
    visual: &Feat2<T>,
) -> Result<(), NetError> {
    let want = format!(
        "visual 3x{}x{}, voxels 1x{VOXEL_NX}x{VOXEL_NY}x{VOXEL_NZ}",
        params.config.in_h, params.config.in_w
    );
    if visual.c != 3 || visual.h != params.config.in_h || visual.w != params.config.in_w {
        return Err(NetError::ShapeMismatch {
            got: format!("visual {}x{}x{}", visual.c, visual.h, visual.w),
            want,
        });
    }
    if voxels.c != 1 || voxels.nx != VOXEL_NX || voxels.ny != VOXEL_NY || voxels.nz != VOXEL_NZ {
        return Err(NetError::ShapeMismatch {
            got: format!(
                "voxels {}x{}x{}x{}",
                voxels.c, voxels.nx, voxels.ny, voxels.nz
            ),
            want,
        });
    }
    Ok(())
}

/// Forward pass keeping every intermediate needed for the backward pass.
pub fn forward_trace<T: Scalar>(
    params: &NetParams<T>,
    voxels: &Feat3<T>,
    visual: &Feat2<T>,
) -> Result<ForwardTrace<T>, NetError> {
    check_shapes(params, voxels, visual)?;
    // Visual branch.
    let v_pre1 = params.vconv1.forward(visual);
    let mut v_act1 = v_pre1.clone();
    relu_slice(&mut v_act1.data);
    let v_pre2 = params.vconv2.forward(&v_act1);
    let mut v_act2 = v_pre2.clone();
    relu_slice(&mut v_act2.data);
    let v_pre3 = params.vconv3.forward(&v_act2);
    let mut v_act3 = v_pre3.clone();
    relu_slice(&mut v_act3.data);
    let v_pooled = global_avg_pool(&v_act3);
    // Geometry branch.
    let g_conv1 = params.gconv1.forward(voxels);
    let g_pool1 = maxpool3(&g_conv1);
    let g_conv2 = params.gconv2.forward(&g_pool1.out);
    let g_pool2 = maxpool3(&g_conv2);
    let g_flat = g_pool2.out.data.clone();
    let g_pre_fc = params.gfc.forward(&g_flat);
    let mut g_fc = g_pre_fc.clone();
    relu_slice(&mut g_fc);
    // Merge.
    let mut merged_in = Vec::with_capacity(g_fc.len() + v_pooled.len());
    merged_in.extend_from_slice(&g_fc);
    merged_in.extend_from_slice(&v_pooled);
    let descriptor = params.merge.forward(&merged_in);
    let logits = params.head.forward(&descriptor);
    Ok(ForwardTrace {
        v_pre1,
        v_act1,
        v_pre2,
        v_act2,
        v_pre3,
        v_act3,
        v_pooled,
        g_conv1,
        g_pool1,
        g_conv2,
        g_pool2,
        g_flat,
        g_pre_fc,
        g_fc,
        merged_in,
        descriptor,
        logits,
    })
}

/// Inference pass with per-layer finiteness checks; errors name the first
/// layer producing a non-finite activation.
pub fn forward<T: Scalar>(
    params: &NetParams<T>,
    voxels: &Feat3<T>,
    visual: &Feat2<T>,
) -> Result<ForwardOutput<T>, NetError> {
    let trace = forward_trace(params, voxels, visual)?;
    let finite = |v: &[T]| v.iter().all(|x| x.is_finite_v());
    // Pre-activation tensors are checked: max(NaN, 0) would otherwise hide
    // a NaN inside the ReLU.
    let stages: [(&'static str, &[T]); 8] = [
        ("vconv1", &trace.v_pre1.data),
        ("vconv2", &trace.v_pre2.data),
        ("vconv3", &trace.v_pre3.data),
        ("gconv1", &trace.g_conv1.data),
        ("gconv2", &trace.g_conv2.data),
        ("gfc", &trace.g_pre_fc),
        ("merge", &trace.descriptor),
        ("head", &trace.logits),
    ];
    for (name, data) in stages {
        if !finite(data) {
            return Err(NetError::NonFinite(name));
        }
    }
    Ok(ForwardOutput {
        descriptor: trace.descriptor,
        spatial: trace.v_act3,
        logits: trace.logits,
    })
}

/// Classification loss and parameter gradients of one sample.
pub fn loss_and_grads<T: Scalar>(
    params: &NetParams<T>,
    voxels: &Feat3<T>,
    visual: &Feat2<T>,
    target: usize,
    grads: &mut NetParams<T>,
) -> Result<T, NetError> {
    let trace = forward_trace(params, voxels, visual)?;
    let (loss, glogits) = softmax_cross_entropy(&trace.logits, target);
    // Head and merge.
    let gdesc = params.head.backward(
        &trace.descriptor,
        &glogits,
        &mut grads.head.weight,
        &mut grads.head.bias,
    );
    let gmerged = params.merge.backward(
        &trace.merged_in,
        &gdesc,
        &mut grads.merge.weight,
        &mut grads.merge.bias,
    );
    let (g_gfc, g_vpool) = gmerged.split_at(GEOM_FC);
    // Geometry branch backward.
    let mut g_gfc = g_gfc.to_vec();
    relu_backward_slice(&trace.g_pre_fc, &mut g_gfc);
    let g_flat_grad = params.gfc.backward(
        &trace.g_flat,
        &g_gfc,
        &mut grads.gfc.weight,
        &mut grads.gfc.bias,
    );
    let gp2 = Feat3::from_data(
        trace.g_pool2.out.c,
        trace.g_pool2.out.nx,
        trace.g_pool2.out.ny,
        trace.g_pool2.out.nz,
        g_flat_grad,
    );
    let g_conv2_grad = maxpool3_backward(
        &trace.g_pool2,
        (
            trace.g_conv2.c,
            trace.g_conv2.nx,
            trace.g_conv2.ny,
            trace.g_conv2.nz,
        ),
        &gp2,
    );
    let g_pool1_grad = params.gconv2.backward(
        &trace.g_pool1.out,
        &g_conv2_grad,
        &mut grads.gconv2.weight,
        &mut grads.gconv2.bias,
    );
    let g_conv1_grad = maxpool3_backward(
        &trace.g_pool1,
        (
            trace.g_conv1.c,
            trace.g_conv1.nx,
            trace.g_conv1.ny,
            trace.g_conv1.nz,
        ),
        &g_pool1_grad,
    );
    params.gconv1.backward(
        voxels,
        &g_conv1_grad,
        &mut grads.gconv1.weight,
        &mut grads.gconv1.bias,
    );
    // Visual branch backward.
    let mut g3 = global_avg_pool_backward(g_vpool, trace.v_act3.c, trace.v_act3.h, trace.v_act3.w);
    relu_backward_slice(&trace.v_pre3.data, &mut g3.data);
    let mut g2 = params.vconv3.backward(
        &trace.v_act2,
        &g3,
        &mut grads.vconv3.weight,
        &mut grads.vconv3.bias,
    );
    relu_backward_slice(&trace.v_pre2.data, &mut g2.data);
    let mut g1 = params.vconv2.backward(
        &trace.v_act1,
        &g2,
        &mut grads.vconv2.weight,
        &mut grads.vconv2.bias,
    );
    relu_backward_slice(&trace.v_pre1.data, &mut g1.data);
    params.vconv1.backward(
        visual,
        &g1,
        &mut grads.vconv1.weight,
        &mut grads.vconv1.bias,
    );
    Ok(loss)
}

/// Loss only, used by the finite-difference oracle.
pub fn loss_only<T: Scalar>(
    params: &NetParams<T>,
    voxels: &Feat3<T>,
    visual: &Feat2<T>,
    target: usize,
) -> Result<T, NetError> {
    let trace = forward_trace(params, voxels, visual)?;
    Ok(softmax_cross_entropy(&trace.logits, target).0)
}
