use std::fmt;
use std::io;

pub const DATA: u8 = 1;
pub const USAGE: u8 = 2;
pub const INTERNAL: u8 = 3;

/// Input data that parses but is inconsistent (exit 1).
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

/// Bad arguments or a missing prerequisite (exit 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A failed self-check such as a gradient mismatch (exit 3).
#[derive(Debug)]
pub struct InternalError(pub String);

impl fmt::Display for InternalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InternalError {}

fn library_code(e: &morphnlg::Error) -> u8 {
    use morphnlg::Error as E;
    match e {
        E::Syntax { .. }
        | E::UnknownDaType(_)
        | E::UnknownSlot(_)
        | E::EmptyDa
        | E::TagLength(_)
        | E::TagAlphabet { .. }
        | E::Format { .. }
        | E::UnknownValue { .. }
        | E::MissingAssignment(_)
        | E::UnfilledPlaceholders(_)
        | E::EmptyCorpus
        | E::Json(_) => DATA,
        E::InvalidArgument(_) | E::Checkpoint(_) => USAGE,
        E::Io(io) if io.kind() == io::ErrorKind::NotFound => USAGE,
        E::Io(_) | E::NonFinite(_) | E::Shape(_) => INTERNAL,
        #[allow(unreachable_patterns)]
        _ => INTERNAL,
    }
}

/// Exit code of the first classified error in the chain.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<DataError>() {
            return DATA;
        }
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<InternalError>() {
            return INTERNAL;
        }
        if let Some(e) = cause.downcast_ref::<morphnlg::Error>() {
            return library_code(e);
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return if e.kind() == io::ErrorKind::NotFound { USAGE } else { INTERNAL };
        }
        if cause.is::<serde_json::Error>() {
            return DATA;
        }
    }
    INTERNAL
}
