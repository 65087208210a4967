//! Idiom-interpretability analysis for NMT encoders: corpus handling,
//! translation labelling, activation dump I/O, attention statistics,
//! representation similarity, probing and amnesic interventions.

pub mod attnstats;
pub mod corpus;
pub mod dumpio;
pub mod error;
pub mod labeler;
pub mod metrics;
pub mod probe;
pub mod repr;

pub use attnstats::{Analysis, AttnProfile, BoxStats, CrossProfile, StatRow};
pub use corpus::{CorpusSet, GoldLabel, PieSentence, Subset, SubsetFilter};
pub use dumpio::{ActdRecord, ActivationDump, AlignmentSet, DumpStore, Tensor, Variant};
pub use error::{Error, ErrorKind, Result};
pub use labeler::{Label2, Label3, LabelSet, LiteralLexicon, TranslationLabel, TranslationRecord, TranslationSet};
pub use probe::{NullspaceProjector, Probe, ProbeConfig};
pub use repr::{CcaProjection, ProjectionBank, TokenClass};
