//! Computations with quasiconvex subgroups of hyperbolic groups: words,
//! group arithmetic, coset geometry, intersections of conjugates and the
//! width and height invariants.

pub mod coset;
pub mod error;
pub mod folding;
pub mod group;
pub mod intersections;
pub mod invariants;
pub mod oracle;
pub mod subgroup;
pub mod words;

pub use error::{Error, Result};
pub use group::{BackendKind, Delta, Element, Group, GroupConfig, Limits};
pub use intersections::Finiteness;
pub use invariants::Mode;
pub use subgroup::{Budget, Membership, Subgroup, SubgroupConfig, Verdict};
pub use words::{Alphabet, Letter, Word};
