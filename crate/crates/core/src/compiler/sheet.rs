use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DiagnosticCode, Diagnostics};

pub(super) struct Row {
    /// 1-based record number; the header is row 1.
    pub number: usize,
    cells: Vec<String>,
}

pub(super) struct Sheet {
    pub name: &'static str,
    columns: HashMap<String, usize>,
    pub rows: Vec<Row>,
}

impl Sheet {
    pub fn cell<'a>(&self, row: &'a Row, column: &str) -> &'a str {
        self.columns
            .get(column)
            .and_then(|&i| row.cells.get(i))
            .map(|s| s.trim())
            .unwrap_or("")
    }

    pub fn has_column(&self, column: &str) -> bool {
        self.columns.contains_key(column)
    }
}

pub(super) struct SheetSpec {
    pub name: &'static str,
    pub required: bool,
    pub columns: &'static [&'static str],
    pub optional_columns: &'static [&'static str],
}

pub(super) fn file_name(sheet: &str) -> String {
    format!("{sheet}.csv")
}

/// Loads one sheet, reporting structural problems. Returns `None` when the
/// sheet is absent or its header row is unusable.
pub(super) fn load(dir: &Path, spec: &SheetSpec, diags: &mut Diagnostics) -> Option<Sheet> {
    let path = dir.join(file_name(spec.name));
    if !path.is_file() {
        if spec.required {
            diags.error(
                spec.name,
                0,
                "",
                DiagnosticCode::MissingSheet,
                format!("required sheet {} is missing", file_name(spec.name)),
            );
        }
        return None;
    }
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) => {
            diags.error(
                spec.name,
                0,
                "",
                DiagnosticCode::MalformedCsv,
                format!("cannot read {}: {e}", file_name(spec.name)),
            );
            return None;
        }
    };
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(&bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut records = Vec::new();
    for (i, record) in reader.byte_records().enumerate() {
        let number = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diags.error(
                    spec.name,
                    number,
                    "",
                    DiagnosticCode::MalformedCsv,
                    format!("unreadable CSV record: {e}"),
                );
                return None;
            }
        };
        let mut cells = Vec::with_capacity(record.len());
        for field in record.iter() {
            match std::str::from_utf8(field) {
                Ok(s) => cells.push(s.to_string()),
                Err(_) => {
                    diags.error(
                        spec.name,
                        number,
                        "",
                        DiagnosticCode::MalformedCsv,
                        "cell is not valid UTF-8".to_string(),
                    );
                    return None;
                }
            }
        }
        records.push(Row { number, cells });
    }

    let Some(header) = records.first() else {
        diags.error(
            spec.name,
            0,
            "",
            DiagnosticCode::MissingColumn,
            format!(
                "{} has no header row; expected {}",
                file_name(spec.name),
                spec.columns.join(",")
            ),
        );
        return None;
    };

    let mut columns = HashMap::new();
    let mut usable = true;
    for (i, raw) in header.cells.iter().enumerate() {
        let name = raw.trim().to_string();
        if name.is_empty() {
            continue;
        }
        if columns.contains_key(&name) {
            diags.error(
                spec.name,
                1,
                &name,
                DiagnosticCode::DuplicateColumn,
                format!("column `{name}` appears more than once"),
            );
            usable = false;
            continue;
        }
        if !spec.columns.contains(&name.as_str()) && !spec.optional_columns.contains(&name.as_str())
        {
            diags.warning(
                spec.name,
                1,
                &name,
                DiagnosticCode::UnknownColumn,
                format!("unknown column `{name}` is ignored"),
            );
        }
        columns.insert(name, i);
    }
    for required in spec.columns {
        if !columns.contains_key(*required) {
            diags.error(
                spec.name,
                1,
                required,
                DiagnosticCode::MissingColumn,
                format!("missing column `{required}`"),
            );
            usable = false;
        }
    }
    if !usable {
        return None;
    }

    let rows = records
        .into_iter()
        .skip(1)
        .filter(|r| r.cells.iter().any(|c| !c.trim().is_empty()))
        .collect();
    Some(Sheet {
        name: spec.name,
        columns,
        rows,
    })
}
