//! Teachers supply the pseudo-ground-truth the students learn to imitate:
//! segmentation of the current and next frame, masked optical-flow
//! magnitude, direction features and relative depth.

mod features;
mod flow;
mod source;

pub use features::{direction_features, flow_to_mag_ang, mask_flow, AngleMap, DirectionFeatures};
pub use flow::estimate_dense_flow;
pub use source::{
    load_pseudo_gt, DepthSource, FlowSource, SegSource, TeacherBundle, TeacherSet, VideoTeacher,
};
