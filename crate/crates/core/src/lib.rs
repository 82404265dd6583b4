//! Numerical toolkit for area-preserving maps of the 2-torus that are
//! homotopic to the identity.
//!
//! Maps are handled through their lifts to the plane. The crate measures
//! flux and mean rotation vectors, locates and classifies periodic orbits,
//! grows stable and unstable manifold branches of hyperbolic orbits and
//! searches those branches for homoclinic crossings. Two constructive
//! perturbations are provided: a tube shear that moves the flux vector and
//! a compactly supported Hamiltonian nudge that moves one point.

// `!(x > 0.0)` guards are used to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod flux;
pub mod hamiltonian;
pub mod io;
pub mod manifold;
pub mod map;
pub mod orbits;
pub mod perturb;
pub mod scenario;
pub mod spatial;
pub mod tangle;
pub mod torus;

pub use error::{Result, TangleError};
pub use flux::{flux_across_curve, flux_report, flux_vector, mean_rotation_vector, FluxSettings, FluxVector, RotationVector};
pub use hamiltonian::{integrate_flow, stroboscopic_map, HamiltonianSpec};
pub use manifold::{branch_invariance_residual, grow_all_branches, grow_branch, BranchKind, BranchSign, GrowthSettings, ManifoldBranch};
pub use map::{LiftedMap, MapExpr, TwistProfile};
pub use orbits::{classify, find_periodic_orbits, OrbitClass, PeriodicOrbit};
pub use perturb::{flux_tuner, local_nudge, rationalize_flux, BumpProfile, NudgeSpec, TunerSpec};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioError};
pub use tangle::{accumulation_report, find_crossings, first_return, wedge_entries, Crossing, EntrySequence, WedgeRegion};
pub use torus::{ClosedCurve, LatticeVector, LiftPoint, TorusPoint};
