pub mod lod;
pub mod meshline;
pub mod mocapsim;
pub mod neurocube;
pub mod posecast;
pub mod tracking;
