//! Binary formats, datasets and point-cloud preprocessing.

mod bytes;
mod checkpoint;
mod cloud;
mod dataset;
mod scan;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Arch, Checkpoint, NamedTensor, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use cloud::{
    label_points, nearest_vortex_within, normalize_velocity, sample_points, CloudPoint, Label,
    PointCloud, DEFAULT_LABEL_RADIUS, DEFAULT_POINTS,
};
pub use dataset::{
    parse_manifest, render_manifest, scan_file_name, write_dataset, Dataset, MANIFEST_NAME,
};
pub use scan::{read_scan, write_scan, LidarScan, SCAN_MAGIC, SCAN_VERSION};
