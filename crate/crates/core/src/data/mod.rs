//! Synthetic scenes, automatic annotation, slicing and file formats.

pub mod annotate;
mod cube;
pub mod dataset;
mod geometry;
pub mod io;
pub mod library;
pub mod scene;
pub mod split;

pub use annotate::{annotate, AnnotateConfig};
pub use cube::HyperCube;
pub use dataset::{generate_dataset, Dataset, DatasetConfig, DatasetSlices};
pub use io::{read_cube, read_mask, write_cube, write_mask};
pub use library::{generate_library, NoiseModel, SpectralLibrary};
pub use scene::{generate_scene, Blob, LabeledScene, SceneConfig};
pub use split::{slice_scene, SceneSlice, SlicedScene};
