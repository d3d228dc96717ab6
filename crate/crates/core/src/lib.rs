//! Mean curvature flow of graphs of area-preserving diffeomorphisms of the
//! flat torus and of the round sphere, with the monitors that track
//! Lagrangian preservation, the eta comparison bound, area dissipation and
//! convergence to totally geodesic limits.

pub mod error;
pub mod flow;
pub mod generators;
pub mod grid;
pub mod observables;
pub mod sphere;
pub mod stencil;
pub mod tensor;
pub mod torus;

pub use error::{LagflowError, Result};
pub use flow::{FlowConfig, FlowResult, FlowState, ProjectionMode, Termination};
pub use generators::{generate, GeneratorSpec, Generated, ValidationReport};
pub use grid::MapGrid;
pub use observables::{comparison_bound, Curvature, ObservableRow};
pub use sphere::{run_sphere, TwistProfile};
pub use stencil::DerivativeOrder;
pub use torus::{compute_geometry, GeometryField};
