//! Configuration layering for the command-line front end: `key=value`
//! config files, flag-over-file precedence, and the resolved-config echo
//! written alongside every run's artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// A command-line failure classified by exit code: usage errors exit with 2,
/// data errors (unreadable or malformed files) with 3, and numeric failures
/// with 4.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config keys or values, or invalid parameters.
    Usage(String),
    /// Missing, unreadable, or malformed input files.
    Data(String),
    /// A computation that failed for numerical reasons.
    Numeric(String),
}

impl CliError {
    /// The process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) | CliError::Numeric(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl From<sdkn::Error> for CliError {
    fn from(err: sdkn::Error) -> Self {
        use sdkn::Error::*;
        let msg = err.to_string();
        match err {
            InvalidParameter(_) | DimensionMismatch { .. } | NonRadialKernel(_)
            | DepthTooSmall { .. } => CliError::Usage(msg),
            Io(_) | DataFormat { .. } | ModelFormat(_) | EmptyInput => CliError::Data(msg),
            NonFinite(_) | InadmissibleKernel { .. } | SingularSystem(_)
            | NotRealizable { .. } | CenterCollision(_) | NonFiniteObjective { .. } => {
                CliError::Numeric(msg)
            }
        }
    }
}

/// The key/value pairs of one parsed config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Parses a config file: one `key=value` pair per line, `#` comments,
    /// blank lines ignored. Duplicate keys are rejected.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config file {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config file {} line {}: expected key=value, got {line:?}",
                    path.display(),
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Usage(format!(
                    "config file {} line {}: empty key",
                    path.display(),
                    idx + 1
                )));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!(
                    "config file {} line {}: duplicate key '{key}'",
                    path.display(),
                    idx + 1
                )));
            }
        }
        Ok(ConfigFile { entries })
    }
}

/// Resolves each configuration field from the highest-priority source
/// (explicit flag, then config file, then default) and records the outcome
/// for the echo file.
pub struct Resolver {
    file: ConfigFile,
    echo: Vec<(String, String)>,
}

impl Resolver {
    /// Starts a resolution, loading `config_path` when given.
    pub fn new(command: &str, config_path: Option<&Path>) -> Result<Self, CliError> {
        let file = match config_path {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        Ok(Resolver {
            file,
            echo: vec![("command".to_string(), command.to_string())],
        })
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.file.entries.remove(key)
    }

    fn record(&mut self, key: &str, value: impl fmt::Display) {
        self.echo.push((key.to_string(), value.to_string()));
    }

    fn parse_with<T>(
        &mut self,
        key: &str,
        flag: Option<T>,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        let raw = self.take_raw(key);
        if let Some(value) = flag {
            return Ok(Some(value));
        }
        match raw {
            Some(raw) => parse(&raw)
                .map(Some)
                .map_err(|msg| CliError::Usage(format!("config key '{key}': {msg}"))),
            None => Ok(None),
        }
    }

    /// A field with a default, parsed via [`FromStr`] when it comes from the
    /// config file.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let value = self
            .parse_with(key, flag, |raw| {
                raw.parse::<T>().map_err(|e| format!("cannot parse {raw:?}: {e}"))
            })?
            .unwrap_or(default);
        self.record(key, &value);
        Ok(value)
    }

    /// A field that must be supplied by a flag or the config file.
    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let value = self
            .parse_with(key, flag, |raw| {
                raw.parse::<T>().map_err(|e| format!("cannot parse {raw:?}: {e}"))
            })?
            .ok_or_else(|| CliError::Usage(format!("missing required key '{key}'")))?;
        self.record(key, &value);
        Ok(value)
    }

    /// A required path field.
    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let value = self
            .parse_with(key, flag, |raw| Ok(PathBuf::from(raw)))?
            .ok_or_else(|| CliError::Usage(format!("missing required key '{key}'")))?;
        self.record(key, value.display());
        Ok(value)
    }

    /// A path field with a default.
    pub fn path_or(&mut self, key: &str, flag: Option<PathBuf>, default: &str) -> Result<PathBuf, CliError> {
        let value = self
            .parse_with(key, flag, |raw| Ok(PathBuf::from(raw)))?
            .unwrap_or_else(|| PathBuf::from(default));
        self.record(key, value.display());
        Ok(value)
    }

    /// A comma-separated list field with a default.
    pub fn list<T>(&mut self, key: &str, flag: Option<String>, default: &[T]) -> Result<Vec<T>, CliError>
    where
        T: FromStr + fmt::Display + Clone,
        T::Err: fmt::Display,
    {
        let raw = match self.parse_with(key, flag, |raw| Ok(raw.to_string()))? {
            Some(raw) => raw,
            None => {
                let rendered = join_list(default);
                self.record(key, &rendered);
                return Ok(default.to_vec());
            }
        };
        let items = parse_list::<T>(&raw)
            .map_err(|msg| CliError::Usage(format!("key '{key}': {msg}")))?;
        self.record(key, join_list(&items));
        Ok(items)
    }

    /// A required comma-separated list field.
    pub fn required_list<T>(&mut self, key: &str, flag: Option<String>) -> Result<Vec<T>, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let raw = self
            .parse_with(key, flag, |raw| Ok(raw.to_string()))?
            .ok_or_else(|| CliError::Usage(format!("missing required key '{key}'")))?;
        let items = parse_list::<T>(&raw)
            .map_err(|msg| CliError::Usage(format!("key '{key}': {msg}")))?;
        self.record(key, join_list(&items));
        Ok(items)
    }

    /// A field mapped through a custom parser (enum-valued flags); the
    /// canonical rendering lands in the echo.
    pub fn keyword<T>(
        &mut self,
        key: &str,
        flag: Option<String>,
        default: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, CliError> {
        let raw = self
            .parse_with(key, flag, |raw| Ok(raw.to_string()))?
            .unwrap_or_else(|| default.to_string());
        let value = parse(&raw)
            .map_err(|msg| CliError::Usage(format!("key '{key}': {msg}")))?;
        self.record(key, raw.trim());
        Ok(value)
    }

    /// Rejects leftover (unknown) config keys and returns the echo lines.
    pub fn finish(self) -> Result<Echo, CliError> {
        if let Some(key) = self.file.entries.keys().next() {
            return Err(CliError::Usage(format!("unknown config key '{key}'")));
        }
        Ok(Echo { lines: self.echo })
    }
}

/// The resolved configuration of one run, written as `key=value` lines so
/// every run is self-describing and precedence is auditable.
pub struct Echo {
    lines: Vec<(String, String)>,
}

impl Echo {
    /// Writes `resolved-config.txt` into `out_dir`, creating the directory.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(format!("output directory {}: {e}", out_dir.display())))?;
        let path = out_dir.join("resolved-config.txt");
        let mut text = String::new();
        for (key, value) in &self.lines {
            text.push_str(key);
            text.push('=');
            text.push_str(value);
            text.push('\n');
        }
        std::fs::write(&path, text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn parse_list<T>(raw: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut items = Vec::new();
    for piece in raw.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(format!("empty element in list {raw:?}"));
        }
        items.push(
            piece
                .parse::<T>()
                .map_err(|e| format!("cannot parse {piece:?}: {e}"))?,
        );
    }
    Ok(items)
}

fn join_list<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
