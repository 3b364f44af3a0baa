//! Depth metrics (capped-range protocol), odometry metrics (sub-sequence
//! translation/rotation errors), trajectory integration and alignment.

mod csv;
mod depth;
mod trajectory;

pub use csv::{depth_metrics_csv, odometry_csv};
pub use depth::{aggregate_depth_metrics, depth_metrics, DepthMetrics, ScaleAlign};
pub use trajectory::{
    align, default_ladder, extract_relatives, integrate_trajectory, odometry_metrics,
    read_trajectory, write_trajectory, AlignMode, LengthBucket, OdometryMetrics, Trajectory,
};
