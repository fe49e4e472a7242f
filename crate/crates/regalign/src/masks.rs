//! Binary mask files.
//!
//! `.txt`: one row per line, `0`/`1` (or `.`/`#`), whitespace ignored.
//! Anything else is decoded as an image; any nonzero luma is foreground.

use std::path::Path;

use regalign_core::MaskGrid;

use crate::Error;

pub fn parse_text_mask(text: &str) -> Result<MaskGrid, String> {
    let mut width = None;
    let mut cells = Vec::new();
    let mut height = 0u32;
    for (idx, line) in text.lines().enumerate() {
        let row: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
        if row.is_empty() {
            continue;
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(format!(
                    "line {}: row has {} cells, expected {w}",
                    idx + 1,
                    row.len()
                ));
            }
            _ => {}
        }
        for c in row {
            cells.push(match c {
                '1' | '#' => true,
                '0' | '.' => false,
                other => return Err(format!("line {}: unexpected cell {other:?}", idx + 1)),
            });
        }
        height += 1;
    }
    let width = width.ok_or("mask file is empty")? as u32;
    MaskGrid::new(width, height, cells).map_err(|e| e.to_string())
}

pub fn load_mask(path: &Path) -> Result<MaskGrid, Error> {
    let fail = |msg: String| Error::Mask(format!("{}: {msg}", path.display()));
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("txt"))
    {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return parse_text_mask(&text).map_err(fail);
    }
    let img = image::open(path)
        .map_err(|e| fail(e.to_string()))?
        .into_luma8();
    let (w, h) = img.dimensions();
    let cells = img.pixels().map(|p| p.0[0] != 0).collect();
    MaskGrid::new(w, h, cells).map_err(|e| fail(e.to_string()))
}
