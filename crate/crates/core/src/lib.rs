//! Biometric indexing over protected templates using frequent binary patterns.
//!
//! Embeddings are protected (sign binarization, BioHashing or IoM hashing),
//! each subject is filed into one bin keyed by a frequent `k`-bit pattern of
//! its templates, and searches only score the subjects in the first `t`
//! bins of the probe's own pattern ranking.

pub mod bits;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod index;
pub mod patterns;
pub mod protect;
pub mod report;
pub mod retrieve;
pub mod rng;

pub use bits::{concat, hamming_distance, xor, BinaryTemplate, Pattern, MAX_PATTERN_LEN};
pub use datagen::{generate, CharacteristicSpec, EmbeddingDataset, EmbeddingRecord, SynthSpec};
pub use error::{Error, Result};
pub use eval::{
    closed_set_run, k_sweep, open_set_run, t_sweep, workload_bounds, EvalReport, Indexing, Metrics,
    ProbeLog, ProtectedDataset, Protocol, Scenario, TPolicy, PROTECTED_FORMAT,
};
pub use index::{assign_bin, BinTable, EnrolRecord, Layout, OccupancyStats, Strategy, SubjectId};
pub use patterns::{extract_patterns, top_pattern, PatternCount, PatternList};
pub use protect::{
    biohash, iom_grp, sign_binarize, similarity, Embedding, IntegerTemplate, ProtectedTemplate,
    Protector, Scheme, SchemeConfig, SchemeKey,
};
pub use retrieve::{
    exhaustive_search, fused_score, probe_sequence, search, search_with, zscore_normalize,
    Calibration, Candidate, CandidateList, NormStats, ProbeSet, SearchOptions, VisitPlan,
};
