//! Searching serialized payloads for protected formula text.

use pws_core::workbook::Workbook;

/// Every formula source in the workbook. None of them may reach a viewer or
/// limited user, whose access to formula cells is display-only at best.
pub fn formula_sources(wb: &Workbook) -> Vec<String> {
    let mut out: Vec<String> = wb
        .all_cells()
        .filter_map(|(_, c)| c.content.formula().map(|f| f.source().to_string()))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// The first source found in `payload`, raw or JSON-escaped.
pub fn find_leak<'a>(payload: &str, sources: &'a [String]) -> Option<&'a str> {
    sources.iter().map(String::as_str).find(|s| {
        let escaped = serde_json::to_string(s).expect("string serializes");
        payload.contains(s) || payload.contains(&escaped[1..escaped.len() - 1])
    })
}
