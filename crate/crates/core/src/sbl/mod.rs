//! Delay-support recovery.
//!
//! [`ClusterSbl`] couples UEs through cluster-shared row precisions with
//! soft cluster assignments; [`individual_sbl`] is the uncoupled per-UE
//! baseline. Both consume TO-calibrated CSI stacked over packets.

pub mod dictionary;
pub mod individual;
pub mod kernel;
pub mod support;
pub mod vi;

pub use dictionary::{build_dictionary, DelayBasis, Dictionary, StackedObservation};
pub use individual::{individual_sbl, individual_sbl_all, IndividualOutcome};
pub use kernel::{row_second_moments, Posterior, Solver, UeSystem, WMoments};
pub use support::{extract_support, SelectionPolicy, SupportEstimate};
pub use vi::{
    seed_responsibilities, seeding_profile, softmax, update_q_beta, update_q_gamma_eta, update_q_z_pi, ClusterSbl,
    InitMode, ViConfig, ViOutcome, ViState,
};
