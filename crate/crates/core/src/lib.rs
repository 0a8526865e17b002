//! Critical couplings, mean-field dynamics and phase classification of
//! driven spin ensembles coupled to single cavities and to cavity lattices.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod io;
pub mod linalg;
pub mod model;
pub mod phases;
pub mod quadrature;
pub mod stability;

pub use dynamics::{
    Boundary, CavityState, DynamicsError, IntegrationOptions, LatticeParams, LatticeState,
    SpinVariant,
};
pub use ensemble::{EnsembleError, EnsembleSpec, FrequencyDistribution, LineShape};
pub use model::{EffectiveParams, ModelError, PhysicalParams, SpinGroup};
pub use phases::{ClassifierMethod, PhaseError, PhaseLabel, PhasePoint, SweepSpec};
pub use stability::{CriticalCoupling, CriticalMethod, StabilityError};
