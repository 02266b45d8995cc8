//! Core library for lidar-informed multi-robot visual search.
//!
//! The modules build on each other: `geometry` provides the vector map and ray
//! casting, `perception` labels lidar returns against that map, `search_map`
//! tracks what has been seen, `inspection` turns unexplained returns into places
//! to look, `waypoint_manager` decides where each robot goes next, `planner`
//! produces the coverage paths and `simulator` runs whole trials.

pub mod geometry;
pub mod inspection;
pub mod navigation;
pub mod perception;
pub mod planner;
pub mod search_map;
pub mod simulator;
pub mod waypoint_manager;
pub mod worlds;
