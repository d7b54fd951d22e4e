//! Index theory toolkit for closed characteristics on convex hypersurfaces.
//!
//! - [`symplectic`]: the form J, Floquet multipliers, normal-form blocks.
//! - [`iteration`]: Maslov-type index iteration, mean index, jump search.
//! - [`orbit`]: convex surfaces, closed orbits, monodromy, Conley–Zehnder index.
//! - [`ledger`]: critical type numbers, χ̂, the mean index identity, Morse counts.
//! - [`cli`]: file-driven commands behind the `sympidx` binary.

pub mod cli;
pub mod error;
pub mod iteration;
pub mod ledger;
pub mod orbit;
pub mod symplectic;

pub use error::{Error, Result};
