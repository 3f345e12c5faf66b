//! Sectioned `key = value` text shared by configuration and filter files.

use std::collections::BTreeMap;
use std::fmt;

use peakfilter_core::Mat;

/// An error tied to a file and, when known, a line (1-based; 0 means the whole file).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct InputError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}", self.file, self.line, self.message)
        } else {
            write!(f, "{}: {}", self.file, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub line: usize,
    pub entries: BTreeMap<String, Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub file: String,
    pub sections: BTreeMap<String, Section>,
}

impl Document {
    /// Parses `[section]` headers and `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, file: &str) -> Result<Self, InputError> {
        let mut doc = Document { file: file.to_string(), sections: BTreeMap::new() };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| doc.error(line, "unterminated section header"))?
                    .trim()
                    .to_string();
                if name.is_empty() {
                    return Err(doc.error(line, "empty section name"));
                }
                if doc.sections.contains_key(&name) {
                    return Err(doc.error(line, format!("section [{name}] appears twice")));
                }
                doc.sections.insert(name.clone(), Section { line, entries: BTreeMap::new() });
                current = Some(name);
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(doc.error(line, format!("expected `key = value`, found `{content}`")));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(doc.error(line, "missing key before `=`"));
            }
            let Some(section) = current.as_ref() else {
                return Err(doc.error(line, format!("`{key}` appears before any section header")));
            };
            let sec = doc.sections.get_mut(section).expect("current section exists");
            if sec.entries.contains_key(&key) {
                return Err(InputError { file: file.to_string(), line, message: format!("`{key}` is set twice in [{section}]") });
            }
            sec.entries.insert(key, Entry { value: value.trim().to_string(), line });
        }
        Ok(doc)
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> InputError {
        InputError { file: self.file.clone(), line, message: message.into() }
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn require_section(&self, name: &str) -> Result<&Section, InputError> {
        self.section(name).ok_or_else(|| self.error(0, format!("missing section [{name}]")))
    }

    /// Rejects sections and keys outside the given lists.
    pub fn check_known(&self, known: &[(&str, &[&str])]) -> Result<(), InputError> {
        for (name, sec) in &self.sections {
            let Some((_, keys)) = known.iter().find(|(n, _)| n == name) else {
                return Err(self.error(sec.line, format!("unknown section [{name}]")));
            };
            self.check_keys(name, keys)?;
        }
        Ok(())
    }

    /// Rejects keys of one section outside the given list; a missing section passes.
    pub fn check_keys(&self, section: &str, keys: &[&str]) -> Result<(), InputError> {
        let Some(sec) = self.section(section) else { return Ok(()) };
        for (key, entry) in &sec.entries {
            if !keys.contains(&key.as_str()) {
                return Err(self.error(entry.line, format!("unknown key `{key}` in [{section}]")));
            }
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.section(section).and_then(|s| s.entries.get(key))
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&Entry, InputError> {
        let sec = self.require_section(section)?;
        sec.entries.get(key).ok_or_else(|| self.error(sec.line, format!("missing `{key}` in [{section}]")))
    }

    pub fn number(&self, entry: &Entry) -> Result<f64, InputError> {
        let v: f64 = entry.value.parse().map_err(|_| self.error(entry.line, format!("`{}` is not a number", entry.value)))?;
        if !v.is_finite() {
            return Err(self.error(entry.line, format!("`{}` is not finite", entry.value)));
        }
        Ok(v)
    }

    pub fn count(&self, entry: &Entry) -> Result<usize, InputError> {
        entry
            .value
            .parse()
            .map_err(|_| self.error(entry.line, format!("`{}` is not a non-negative integer", entry.value)))
    }

    pub fn number_or(&self, section: &str, key: &str, default: f64) -> Result<f64, InputError> {
        self.get(section, key).map_or(Ok(default), |e| self.number(e))
    }

    /// Comma-separated numbers.
    pub fn list(&self, entry: &Entry) -> Result<Vec<f64>, InputError> {
        if entry.value.is_empty() {
            return Ok(Vec::new());
        }
        entry
            .value
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.error(entry.line, format!("`{s}` is not a finite number")))
            })
            .collect()
    }

    /// Rows separated by `;`, entries by `,`. An optional `RxC:` prefix fixes the shape,
    /// which is the only way to write a matrix with no rows or no columns.
    pub fn matrix(&self, entry: &Entry) -> Result<Mat, InputError> {
        let (shape, body) = match entry.value.split_once(':') {
            Some((s, b)) => (Some(s.trim()), b.trim()),
            None => (None, entry.value.as_str()),
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        if !body.is_empty() {
            for (r, row) in body.split(';').enumerate() {
                let mut vals = Vec::new();
                for item in row.split(',') {
                    let item = item.trim();
                    let v: f64 = item.parse().map_err(|_| {
                        self.error(entry.line, format!("row {}: `{item}` is not a number", r + 1))
                    })?;
                    if !v.is_finite() {
                        return Err(self.error(entry.line, format!("row {}: `{item}` is not finite", r + 1)));
                    }
                    vals.push(v);
                }
                if let Some(first) = rows.first() {
                    if first.len() != vals.len() {
                        return Err(self.error(
                            entry.line,
                            format!("row {} has {} entries, row 1 has {}", r + 1, vals.len(), first.len()),
                        ));
                    }
                }
                rows.push(vals);
            }
        }
        let found = (rows.len(), rows.first().map_or(0, Vec::len));
        let (nr, nc) = match shape {
            Some(s) => {
                let parsed = s.split_once('x').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
                let Some((nr, nc)) = parsed else {
                    return Err(self.error(entry.line, format!("bad shape prefix `{s}`, expected RxC")));
                };
                let empty = nr == 0 || nc == 0;
                if (empty && !rows.is_empty()) || (!empty && found != (nr, nc)) {
                    return Err(self.error(entry.line, format!("declared {nr}x{nc} but found {}x{}", found.0, found.1)));
                }
                (nr, nc)
            }
            None => found,
        };
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Mat::from_row_slice(nr, nc, &flat))
    }

    pub fn shaped_matrix(&self, entry: &Entry, name: &str, shape: (usize, usize)) -> Result<Mat, InputError> {
        let m = self.matrix(entry)?;
        if m.shape() != shape {
            return Err(self.error(
                entry.line,
                format!("{name} must be {}x{}, got {}x{}", shape.0, shape.1, m.nrows(), m.ncols()),
            ));
        }
        Ok(m)
    }
}

/// 17 significant digits, enough to read back the same double.
pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

/// `RxC: a, b; c, d` with exact round-trip values.
pub fn matrix(m: &Mat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| number(m[(i, j)])).collect::<Vec<_>>().join(", "))
        .collect();
    format!("{}x{}: {}", m.nrows(), m.ncols(), rows.join("; "))
}
