use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: format error: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: length error: {msg}")]
    Length { path: PathBuf, msg: String },
    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] udp_core::Error),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

/// Tags an error with the pipeline stage it came from.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
