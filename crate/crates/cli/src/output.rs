//! Terminal rendering of job tables.

use hyflow_core::TableRow;

const HEADERS: [&str; 8] = ["name", "status", "progress", "kind", "host", "command", "start", "error"];

fn cells(row: &TableRow) -> [String; 8] {
    [
        row.name.clone(),
        row.status.to_string(),
        row.progress.to_string(),
        row.kind.to_string(),
        row.host.clone(),
        row.command.clone().unwrap_or_default(),
        row.tstart
            .map(|t| t.format("%Y-%m-%d %H:%M:%S").to_string())
            .unwrap_or_default(),
        row.error.clone().unwrap_or_default(),
    ]
}

/// Keeps one line per cell and bounds its width.
fn clip(cell: &str, width: usize) -> String {
    let line = cell.lines().next().unwrap_or("");
    if line.chars().count() <= width && !cell.contains('\n') {
        return line.to_string();
    }
    let mut clipped: String = line.chars().take(width.saturating_sub(3)).collect();
    clipped.push_str("...");
    clipped
}

/// Column-aligned table with a header row.
pub fn table(rows: &[TableRow]) -> String {
    const MAX: usize = 40;
    let body: Vec<[String; 8]> = rows.iter().map(|r| cells(r).map(|c| clip(&c, MAX))).collect();
    let mut widths = HEADERS.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let text: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(text.join("  ").trim_end());
        out.push('\n');
    };
    line(&HEADERS);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &body {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
