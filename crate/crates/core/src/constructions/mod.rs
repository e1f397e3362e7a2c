//! The example corpus: named groups, rule elements and their certificates.

pub mod binomial;
mod factorial;
mod family;
mod grigorchuk;
mod parity;
mod separation;
mod staged;
mod typical;
mod wandering;

pub use factorial::{factorial_element, FactorialElement};
pub use family::{build_measure_family, verify_compatibility, CompatibilityReport, Exclusion, FamilyOptions, FamilyStage, MeasureFamily, RnEvidence, StageReport, VerifyOptions, DEFAULT_FAMILY_STAGES};
pub use grigorchuk::{grigorchuk, grigorchuk_machine, grigorchuk_rist_word};
pub use parity::{in_window, parity_group, DEFAULT_PARITY_SPAN};
pub use separation::{
    orthogonal_pair_element, separating_element, wlln_schedule, OrthogonalPairElement, SeparatingElement,
    SeparationStage, WllnStage, DEFAULT_LR_STATE_CAP, DEFAULT_SEPARATION_DEPTH_CAP, DEFAULT_SEPARATION_STAGES,
    DEFAULT_WLLN_DEPTH_CAP, DEFAULT_WLLN_STAGES,
};
pub use typical::{sm_elements, BifurcationProbe, BifurcationRow, SmElements, TypicalBand, DEFAULT_BAND_DEPTH_CAP};
pub use wandering::{
    conservative_nonergodic_group, dissipative_group, translation_mask, weakly_branch_nonergodic_group, BlockSchedule,
    BranchCheck, CylinderSet, DissipativeGroup, InvariantPairCheck, NonErgodicGroup, RnFlipCheck, WanderingCheck,
    WeightBlock, DEFAULT_BLOCK_CAP, DEFAULT_BLOCK_STAGES,
};
