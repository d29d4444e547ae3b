//! Fully convolutional segmentation network: layers, graph and checkpoints.

mod checkpoint;
mod layers;
mod net;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry, CHECKPOINT_FORMAT};
pub use layers::{
    bilinear_kernel, bilinear_weights, center_crop, conv2d_backward, conv2d_forward, crop_at,
    deconv_backward, deconv_forward, embed_at, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward, softmax_backward, softmax_forward, ConvGeometry, ConvGrads, DeconvGeometry,
};
pub use net::{
    build_fcn, volume_tensor, ForwardCache, Gradients, LayerSpec, Network, NetworkConfig, Param,
    ParamKind, TopConv, PRESETS,
};
pub use tensor::{Scalar, Tensor};
