//! Occupancy-grid mapping and Monte Carlo localization.

mod filter;
mod mapping;
mod node;
mod particles;

pub use filter::{Slam, SlamConfig, SlamStats, SlamStep};
pub use mapping::{update_map, MappingConfig};
pub use node::SlamNode;
pub use particles::{
    apply_action_model, apply_sensor_model, low_variance_resample, systematic_indices, ActionModelConfig,
    OdometryDelta, Particle, ParticleSet, SensorModelConfig, SensorUpdate,
};
