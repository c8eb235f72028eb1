//! Single-stage detection head: pyramid, anchors, subnets, losses and
//! post-processing.

pub mod anchors;
pub mod boxes;
pub mod conv;
pub mod head;
pub mod loss;

pub use anchors::{generate_anchors, AnchorConfig, AnchorSet};
pub use boxes::{
    decode_box, encode_box, iou, match_anchors, nms, Anchor, Assignment, BBox, Detection,
    MatchThresholds, Truth,
};
pub use conv::{conv_forward, ConvActivation, ConvLayer, ConvStack};
pub use head::{
    box_subnet, build_pyramid, class_subnet, detection_loss, postprocess, DetectorHead,
    HeadConfig, HeadOutput, LossConfig, LossTerms, PostprocessConfig,
};
pub use loss::{focal_loss, focal_loss_grad, smooth_l1, FocalParams};
