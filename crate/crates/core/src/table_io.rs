//! Small CSV helpers shared by the table readers and writers.
//!
//! All files carry optional leading `#` comment lines, a header row, then data.

use std::io::Read;
use std::str::FromStr;

use csv::StringRecord;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn parse_opt_f64(line: usize, field: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    f.parse()
        .map(Some)
        .map_err(|_| Error::parse(line, format!("not a number: '{f}'")))
}

/// A fully buffered CSV file with its comment preamble.
#[derive(Debug, Clone)]
pub struct CsvSource {
    pub comments: Vec<String>,
    pub headers: StringRecord,
    rows: Vec<(usize, StringRecord)>,
}

impl CsvSource {
    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let mut comments = Vec::new();
        let mut offset = 0;
        let mut skipped = 0;
        for line in text.split_inclusive('\n') {
            let t = line.trim();
            if t.starts_with('#') {
                comments.push(t.trim_start_matches('#').trim().to_string());
            } else if !t.is_empty() {
                break;
            }
            offset += line.len();
            skipped += 1;
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text[offset..].as_bytes());
        let headers = reader.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::Empty("csv header"));
        }
        let body = &text[offset..];
        let newlines: Vec<usize> = body.match_indices('\n').map(|(i, _)| i).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            // positions may point at blank lines preceding the record
            let mut byte = rec.position().map(|p| p.byte() as usize).unwrap_or(0);
            byte += body[byte..].len() - body[byte..].trim_start_matches(['\r', '\n']).len();
            let line = skipped + 1 + newlines.partition_point(|&i| i < byte);
            rows.push((line, rec));
        }
        Ok(CsvSource {
            comments,
            headers,
            rows,
        })
    }

    /// Value of a `key=value` comment line.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn meta_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.comments.iter().filter_map(move |c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn find(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| {
            self.headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(n))
        })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.find(&[name])
            .ok_or_else(|| Error::parse(1, format!("missing column '{name}'")))
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &StringRecord)> {
        self.rows.iter().map(|(l, r)| (*l, r))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn parse<T: FromStr>(&self, line: usize, row: &StringRecord, col: usize) -> Result<T> {
        let raw = row.get(col).unwrap_or("");
        raw.parse().map_err(|_| {
            Error::parse(
                line,
                format!("bad value '{raw}' in column '{}'", &self.headers[col]),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_preamble_and_rows() {
        let text = "# a=1\n# b = two\nx,y\n1,2\n\n3,4\n";
        let src = CsvSource::read(text.as_bytes()).unwrap();
        assert_eq!(src.meta("a"), Some("1"));
        assert_eq!(src.meta("b"), Some("two"));
        assert_eq!(src.len(), 2);
        let (line, row) = src.rows().nth(1).unwrap();
        assert_eq!(line, 6);
        assert_eq!(src.parse::<i32>(line, row, 1).unwrap(), 4);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [-96.66666666666667, 0.1 + 0.2, -1e-7, 12345.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(-100.0), "-100");
    }
}
