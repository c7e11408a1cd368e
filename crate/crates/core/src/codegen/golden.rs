use std::path::{Path, PathBuf};

use similar::TextDiff;

#[derive(Debug, thiserror::Error)]
pub enum GoldenError {
    #[error("golden fixture {0} is missing")]
    Missing(PathBuf),
    #[error("output differs from golden fixture {path}:\n{diff}")]
    Mismatch { path: PathBuf, diff: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Byte-exact comparison of `text` with the fixture at `path`.
pub fn golden_check(text: &str, path: &Path) -> Result<(), GoldenError> {
    let want = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(GoldenError::Missing(path.into())),
        Err(e) => return Err(e.into()),
    };
    if want == text.as_bytes() {
        return Ok(());
    }
    let want = String::from_utf8_lossy(&want);
    let mut diff = TextDiff::from_lines(want.as_ref(), text)
        .unified_diff()
        .header("golden", "generated")
        .to_string();
    if diff.trim().is_empty() {
        diff = "(byte-level difference, e.g. trailing newline or line endings)".into();
    }
    Err(GoldenError::Mismatch { path: path.into(), diff })
}

/// Writes or replaces a fixture.
pub fn write_golden(text: &str, path: &Path) -> Result<(), GoldenError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
