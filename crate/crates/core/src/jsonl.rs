//! Line-delimited JSON helpers used by every file format in the crate.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// One non-blank line of a JSONL file with its 1-based line number.
pub(crate) struct Line<'a> {
    pub number: usize,
    pub text: &'a str,
}

pub(crate) fn lines(content: &str) -> impl Iterator<Item = Line<'_>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, text)| Line {
            number: i + 1,
            text,
        })
}

pub(crate) fn to_line<T: Serialize>(value: &T) -> String {
    // Serialization of our own types cannot fail: no non-string map keys.
    serde_json::to_string(value).expect("record serializes")
}

pub(crate) fn parse_line<T: DeserializeOwned>(line: &Line<'_>) -> Result<T, String> {
    serde_json::from_str(line.text)
        .map_err(|e| format!("line {} column {}: {e}", line.number, e.column()))
}

/// Writes `content` atomically enough for a batch tool: temp file then rename.
pub fn write_text(path: &Path, content: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub(crate) fn join_lines<I: IntoIterator<Item = String>>(lines: I) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}
