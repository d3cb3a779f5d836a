//! Farey fractions restricted by congruence conditions.
//!
//! Enumerates `F_M(Q)`, the fractions of the Farey sequence whose coset of
//! `Γ(m)` lies in a set `M`, and studies their gaps: exact gap statistics,
//! the coset-lifted BCZ section whose return times reproduce the gaps, and
//! Erdős–Szüsz–Turán measures computed as exact interval unions.

pub mod congruence;
pub mod error;
pub mod est;
pub mod farey;
pub mod section;
pub mod stats;
pub mod subset;

pub use error::{Error, Result};
