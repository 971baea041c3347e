//! Finite-horizon constrained MDPs whose objective and constraints mix
//! additive costs with expected products of stage-wise factors.
//!
//! The multiplicative parts are absorbed into an augmented model with one
//! binary survival bit per weighted component ([`augment`]); policies that
//! ignore the bits are characterized by occupation measures satisfying linear
//! flow constraints plus bilinear consistency rows ([`blp`]), and the
//! resulting bilinear program is searched by alternating block LPs with
//! random restarts ([`grc`]).

pub mod augment;
pub mod blp;
pub mod casegen;
pub mod error;
pub mod grc;
pub mod instances;
pub mod io;
pub mod lp;
pub mod model;
pub mod occupancy;
pub mod oracle;

pub use augment::AugmentedMdp;
pub use error::{Error, Result};
pub use model::{Cmdp, CostComponent};
pub use occupancy::{Layout, MarkovPolicy, OccupancyMeasure};
