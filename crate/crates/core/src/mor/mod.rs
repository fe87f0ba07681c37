//! Cumulative rational-Krylov reduction with pseudo-optimal ROMs and
//! certified H2 errors.

mod cure;
mod krylov;
mod pork;
mod search;

pub use cure::{
    cure_accumulate, fom_norm, is_stable, spectral_scale, CureOptions, FomNormSource, RomFamily, RomFamilyManifest,
    RomStep, StepManifest, StopReason, DENSE_NORM_LIMIT,
};
pub use krylov::{rational_krylov_basis, KrylovBasis, PencilSolver, ShiftedFactor, SylvesterBasis};
pub use pork::{pseudo_optimal_reduce, PseudoOptimalRom};
pub use search::{adaptive_shift_search, ResidualGain, SearchOptions, SearchResult, SeedGrid, ShiftObjective, ShiftPair};
