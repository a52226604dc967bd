pub mod comparison;
pub mod domain;
pub mod energy;
pub mod error;
pub mod io;
pub mod map;
pub mod numeric;
pub mod solver;
pub mod target;

pub use error::{Error, Result};
pub use domain::{
    build_graph_domain, build_grid_domain, AxisBox, GridLayout, GridSpec, Neighborhoods, PointCloudSpace, Region,
};
pub use map::MapState;
pub use target::{RegularBall, TargetPoint, TargetSpace};
