//! Script direction: extraction of characters, spots and dialogue,
//! coarse-to-fine refinement of their visual profiles, and the indexed
//! project database the later stages query.

mod extract;
mod grounding;
mod index;
mod prompts;
mod refine;
mod reply;

use std::fmt;

use thiserror::Error;

use crate::backends::BackendError;
use crate::script_ir::{IrError, ProfileField};

pub use extract::{extract_elements, ExtractReply, DEFAULT_SPOT_NAME};
pub use grounding::grounded_fields;
pub use index::{content_tokens, ElementDatabase, Match, RecordKey, RecordRef, RetrievedContext, DEFAULT_WINDOW};
pub use prompts::{PromptId, PromptSet, PromptTemplate};
pub use refine::{all_targets, refine_entities, DEFAULT_ROUNDS};
pub use reply::split_reply;
pub(crate) use reply::ask;

#[derive(Debug, Error)]
pub enum DirectorError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend output violates the schema: {0}")]
    SchemaViolation(String),
    #[error("no speaker can be attributed to the line {line:?}")]
    UnattributableDialogue { line: String },
    #[error("unknown record {0}")]
    UnknownRecord(String),
    #[error("unknown dialogue segment {0}")]
    UnknownSegment(usize),
    #[error("prompt template: {0}")]
    Template(String),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Recoverable conditions that are logged rather than raised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectorEvent {
    /// Two records claim one normalized alias; the first declared keeps it.
    DuplicateAlias { alias: String, kept: RecordRef, dropped: RecordRef },
    /// The backend proposed a value contradicting the source text; the
    /// source value was kept.
    ContradictionDetected { record: String, field: ProfileField, grounded: String, proposed: String },
}

impl fmt::Display for DirectorEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectorEvent::DuplicateAlias { alias, kept, dropped } => {
                write!(f, "duplicate alias {alias:?}: kept {kept:?}, dropped {dropped:?}")
            }
            DirectorEvent::ContradictionDetected { record, field, grounded, proposed } => write!(
                f,
                "contradiction on {record}.{}: source says {grounded:?}, backend proposed {proposed:?}",
                field.key()
            ),
        }
    }
}
