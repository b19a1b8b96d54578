//! Vibrational control of linear networks `ẋ = A x`.
//!
//! Sinusoidal vibrations `u sin(βt/ε)/ε` on selected edges change the
//! *averaged* network `Ā` that the system follows for small `ε`. This crate
//! works out which weights can be changed that way, designs the vibrations,
//! computes `Ā` and checks the outcome in simulation.
//!
//! Conventions: the edge `(j, i)` points from node `j` to node `i` and has
//! weight `a_ij = A[i][j]`. Node ids are 1-based everywhere in the API and in
//! files; matrix indices are 0-based.
//!
//! ```
//! use vibnet::{avg, fixtures, synth::VibrationEntry, synth::VibrationPlan, NodePair};
//!
//! let sys = fixtures::four_node_unstable();
//! let plan = VibrationPlan::new(0.04, vec![VibrationEntry::on(NodePair::new(1, 4), 4.0, 1.0)]).unwrap();
//! let a_bar = avg::averaged_closed_form(&sys, &plan).unwrap().a_bar;
//! assert_eq!(a_bar[(3, 0)], 7.0);
//! ```

pub mod avg;
pub mod error;
pub mod fixtures;
pub mod graphalg;
pub mod modanalysis;
pub mod netcore;
pub mod numerics;
pub mod perturb;
pub mod sim;
pub mod synth;

pub use nalgebra;

pub use error::{Error, Result};
pub use netcore::{Edge, NetworkSystem, NodeId, NodePair, Permutation, SignGraph};
pub use perturb::{Cluster, ClusterKind, PerturbationMatrix, StabilizationPlan, TargetChange};
pub use synth::{VibrationEntry, VibrationPlan};
