use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use confcl::Error;

/// A failure reported to the user as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::AnnotationOutOfRange { .. } | Error::ValueOutOfRange { .. } => "value_out_of_range",
        Error::EmptyVotes => "empty_votes",
        Error::InvalidEpsilon(_) => "invalid_epsilon",
        Error::UnlabeledPair(_) => "unlabeled_pair",
        Error::DegenerateUniformity => "degenerate_uniformity",
        Error::Shape(_) => "shape",
        Error::NonFinite(_) => "non_finite",
        Error::AucUndefined { .. } => "auc_undefined",
        Error::NoReferenceLesions => "no_reference_lesions",
        Error::DimensionMismatch(_) => "dimension_mismatch",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Parse { .. } => "parse",
        Error::Diverged { .. } => "diverged",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

impl CliError {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
            file: None,
            line: None,
            offset: None,
        }
    }

    pub fn in_file(mut self, path: &Path) -> Self {
        self.file = Some(path.display().to_string());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error report serializes")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let mut out = CliError::new(kind(&e), e.to_string());
        match &e {
            Error::Parse { line, message } => {
                out.line = *line;
                out.offset = message
                    .strip_prefix("offset ")
                    .and_then(|rest| rest.split(':').next())
                    .and_then(|n| n.parse().ok());
            }
            Error::Json(j) if j.line() > 0 => out.line = Some(j.line() as u64),
            _ => {}
        }
        out
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Runs a reader on a file, tagging any failure with the file name.
pub fn read_with<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> confcl::Result<T>) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::from(Error::Io(e)).in_file(path))?;
    f(BufReader::new(file)).map_err(|e| CliError::from(e).in_file(path))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::from(Error::Io(e)).in_file(path))
}

/// Writes to a temp file in the destination directory, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| CliError::from(Error::Io(e)).in_file(path);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = NamedTempFile::new_in(&dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `text` to `path`, or prints it when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
