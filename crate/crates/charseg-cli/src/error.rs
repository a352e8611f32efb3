//! Command failures, bucketed into the documented exit codes.
//!
//! 0 success · 2 usage (bad flags, options, config) · 3 I/O or unreadable
//! input data · 4 model/vocabulary mismatch (bad or incompatible model
//! files) · 5 training diverged · 1 anything else.

use charseg::corpus::CorpusError;
use charseg::crf::CrfError;
use charseg::embed::EmbedError;
use charseg::eval::EvalError;
use charseg::features::FeatureError;
use charseg::srn::SrnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    ModelMismatch(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::ModelMismatch(_) => 4,
            CliError::Diverged(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match &e {
            CorpusError::Io(_)
            | CorpusError::MalformedMarkup { .. }
            | CorpusError::BadBioDump { .. }
            | CorpusError::BadJsonl { .. }
            | CorpusError::InvalidDocument(_)
            | CorpusError::Doc { .. } => CliError::Io(e.to_string()),
            CorpusError::EmptyCorpus
            | CorpusError::InsufficientData { .. }
            | CorpusError::DuplicateDocId(_)
            | CorpusError::BadRatios(_)
            | CorpusError::Config(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SrnError> for CliError {
    fn from(e: SrnError) -> Self {
        match &e {
            SrnError::Io(_) => CliError::Io(e.to_string()),
            SrnError::BadModelFile(_) | SrnError::Vocabulary { .. } => {
                CliError::ModelMismatch(e.to_string())
            }
            SrnError::Diverged { .. } => CliError::Diverged(e.to_string()),
            SrnError::Config(_) | SrnError::WindowTooShort(_) | SrnError::EmptyCorpus(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match &e {
            EmbedError::Io(_) => CliError::Io(e.to_string()),
            EmbedError::KTooLarge { .. }
            | EmbedError::BadTraceFile(_)
            | EmbedError::DimensionMismatch { .. } => CliError::ModelMismatch(e.to_string()),
            EmbedError::EmptyText | EmbedError::BadQuery(_) => CliError::Usage(e.to_string()),
            EmbedError::ZeroVector | EmbedError::BadTrace(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Embed(inner) => inner.into(),
            FeatureError::Corpus(inner) => inner.into(),
            FeatureError::Io(_) | FeatureError::BadFeatureFile { .. } => {
                CliError::Io(e.to_string())
            }
            FeatureError::PosOutOfRange { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<CrfError> for CliError {
    fn from(e: CrfError) -> Self {
        match &e {
            CrfError::Io(_)
            | CrfError::UnlabeledRow { .. }
            | CrfError::EmptyDataset
            | CrfError::EmptySequence
            | CrfError::LengthMismatch { .. } => CliError::Io(e.to_string()),
            CrfError::BadModelFile(_) => CliError::ModelMismatch(e.to_string()),
            CrfError::Diverged { .. } => CliError::Diverged(e.to_string()),
            CrfError::Config(_) => CliError::Usage(e.to_string()),
        }
    }
}

/// Failure inside one learning-curve cell.
#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Crf(#[from] CrfError),
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match &e {
            EvalError::Cell { source, .. } => {
                // Surface the cell's coordinates but keep the underlying
                // error's exit class.
                let class = match source.downcast_ref::<CellError>() {
                    Some(CellError::Crf(inner)) => CliError::from(clone_class(inner)),
                    Some(CellError::Feature(_)) => CliError::Io(String::new()),
                    None => CliError::Internal(String::new()),
                };
                match class {
                    CliError::Diverged(_) => CliError::Diverged(e.to_string()),
                    CliError::ModelMismatch(_) => CliError::ModelMismatch(e.to_string()),
                    CliError::Usage(_) => CliError::Usage(e.to_string()),
                    CliError::Io(_) => CliError::Io(e.to_string()),
                    CliError::Internal(_) => CliError::Internal(e.to_string()),
                }
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// A shallow copy of a [`CrfError`] carrying only its exit classification.
fn clone_class(e: &CrfError) -> CrfError {
    match e {
        CrfError::Diverged { iteration, .. } => {
            CrfError::Diverged { iteration: *iteration, reason: String::new() }
        }
        CrfError::BadModelFile(_) => CrfError::BadModelFile(String::new()),
        CrfError::Config(_) => CrfError::Config(String::new()),
        _ => CrfError::EmptyDataset,
    }
}

/// Attach a path to a bare I/O failure.
pub fn io_ctx<'a>(
    what: &'static str,
    path: &'a std::path::Path,
) -> impl Fn(std::io::Error) -> CliError + 'a {
    move |e| CliError::Io(format!("cannot {what} {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_match_documentation() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Io("x".into()).exit_code(), 3);
        assert_eq!(CliError::ModelMismatch("x".into()).exit_code(), 4);
        assert_eq!(CliError::Diverged("x".into()).exit_code(), 5);
        assert_eq!(CliError::Internal("x".into()).exit_code(), 1);
    }

    #[test]
    fn library_errors_land_in_the_right_bucket() {
        let e: CliError = SrnError::BadModelFile("bad".into()).into();
        assert_eq!(e.exit_code(), 4);
        let e: CliError = CrfError::Diverged { iteration: 3, reason: "nan".into() }.into();
        assert_eq!(e.exit_code(), 5);
        let e: CliError = CorpusError::MalformedMarkup { offset: 9, reason: "stray".into() }.into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = CrfError::Config("bad sigma".into()).into();
        assert_eq!(e.exit_code(), 2);
    }
}
