use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ctw_core::annotations::{parse_annotation_text, Annotation};
use ctw_core::geometry::is_simple;
use serde::Serialize;

/// One problem with one line of an annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub line: usize,
    pub message: String,
}

impl Violation {
    pub fn in_file(mut self, file: &Path) -> Self {
        self.file = Some(file.display().to_string());
        self
    }
}

pub const NON_SIMPLE: &str = "non-simple polygon";

/// Parses `text` and checks every region is a simple polygon. Returns the parsed
/// annotations with their line numbers, and the violations.
pub fn check_annotations(text: &str) -> (Vec<(usize, Annotation)>, Vec<Violation>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for l in parse_annotation_text(text) {
        match l.result {
            Ok(a) if is_simple(a.polygon.as_polygon()) => ok.push((l.line, a)),
            Ok(_) => bad.push(Violation {
                file: None,
                line: l.line,
                message: format!("{NON_SIMPLE}: sides intersect"),
            }),
            Err(e) => bad.push(Violation {
                file: None,
                line: l.line,
                message: e.to_string(),
            }),
        }
    }
    (ok, bad)
}

/// `.txt` files directly inside `dir`, sorted by name.
pub fn txt_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "txt") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
