//! Topic-focused browsing-log analytics.
//!
//! The crate turns raw query/visit logs into an on-topic corpus, attaches
//! stance labels to pages and domains, and measures two things about the
//! people browsing that corpus:
//!
//! * how diverse the stances they are exposed to are, using normalized
//!   Shannon entropy over domain labels ([`diversity`]);
//! * how they move between stances from page to page, using Markov
//!   transition matrices and the usual family of mobility indices and
//!   matrix distances ([`transitions`]).
//!
//! Both can be compared before and after an event timestamp
//! ([`Dataset::split_by_event`]). Inter-rater agreement for the manual
//! judgments lives in [`annotation`], and [`synth`] generates seeded
//! synthetic logs with known ground truth for end-to-end checks.
//!
//! ```
//! use polarlens::transitions::{mobility_indices, TransitionMatrix};
//! use polarlens::Tier;
//!
//! let p = TransitionMatrix::identity(Tier::High);
//! let report = mobility_indices(&p).unwrap();
//! assert_eq!(report.ir, 1.0);
//! assert_eq!(report.m_svd, 0.0);
//! ```

pub mod annotation;
pub mod diversity;
mod error;
pub mod extraction;
pub mod ingest;
pub mod model;
pub mod synth;
pub mod transitions;
pub mod urlnorm;

pub use error::{Error, Result};
pub use model::{
    common_users, Dataset, HighLevel, LabelMap, LabelScope, LogRecord, QueryRecord, StanceLabel,
    Summary, Tier, Timestamp,
};
pub use urlnorm::{DomainMode, UrlNormalizer};
