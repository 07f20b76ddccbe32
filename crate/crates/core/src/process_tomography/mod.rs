//! Process tomography, generator extraction and branch resolution.

pub mod branch;
pub mod chi;

pub use branch::{effective_rates, effective_rates_compact, effective_rates_near, resolve_branch, BranchOptions, BranchResolution, LabelBranch};
pub use chi::{chi_from_ptm, dominant_unitary, project_cp, qpt_session, reconstruct, run_qpt, ChiMatrix, DominantUnitary, QPT_PREPS};
pub mod suite;

pub use suite::{
    additivity_suite, cr_segment, expected_three_qubit_labels, qpt_rate_series, rates_vs_duration_tsv, three_qubit_qpt, track_unitaries, AdditivityOptions,
    AdditivityReport, Deviation, ProtocolResult, QptPoint, QptSeries, QptSeriesOptions, ThreeQubitReport, PROTOCOLS,
};
