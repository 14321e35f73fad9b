//! Contact pseudo-labels, feature-grid pooling and the contact loss.

mod crr;
mod grid;
pub mod kdtree;
mod labels;
mod mesh;

pub use crr::{crr_cross_entropy, CRR_WEIGHT};
pub use grid::{grid_size, project_point, window_pool, FeatureGrid, GridCell, GRID_STRIDE};
pub use kdtree::{brute_force_nearest, KdTree, Nearest};
pub use labels::{
    classify, contact_labels, nearest_distance, nearest_vertices, LabeledPointCloud, PartLabeledMesh,
    CONTACT_CLASSES, DEFAULT_CONTACT_THRESHOLD,
};
pub use mesh::stick_figure_mesh;
