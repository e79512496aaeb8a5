//! Reader for the LIBSVM text format `label idx:val idx:val ...` with
//! 1-based, strictly ascending feature indices.

use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::{Matrix, Vector};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parses LIBSVM text into dense rows whose width is the largest index seen.
pub fn parse_libsvm(text: &str) -> Result<(Matrix, Vector)> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| parse_err(line_no, format!("bad label `{label_tok}`")))?;
        let mut entries = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("expected `index:value`, got `{tok}`")))?;
            let idx: usize = idx.parse().map_err(|_| parse_err(line_no, format!("bad index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_err(line_no, "feature indices start at 1"));
            }
            if idx <= last {
                return Err(parse_err(line_no, format!("index {idx} is not ascending (previous {last})")));
            }
            let val: f64 = val.parse().map_err(|_| parse_err(line_no, format!("bad value in `{tok}`")))?;
            last = idx;
            entries.push((idx, val));
        }
        width = width.max(last);
        labels.push(label);
        rows.push(entries);
    }
    let mut m = Matrix::zeros(rows.len(), width);
    for (r, entries) in rows.iter().enumerate() {
        for &(idx, val) in entries {
            m[(r, idx - 1)] = val;
        }
    }
    Ok((m, Vector::from_vec(labels)))
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<(Matrix, Vector)> {
    parse_libsvm(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_examples() {
        let (m, y) = parse_libsvm("1 1:0.5 3:-2\n").unwrap();
        assert_eq!(y.as_slice(), &[1.0]);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0, -2.0]);

        let (m, y) = parse_libsvm("-1\n+1 2:1\n").unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 1.0]);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_libsvm("1 1:1\n1 0:1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_libsvm("1 3:1 2:1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm("1 1:x"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm("1 1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm("abc 1:1"), Err(Error::Parse { .. })));
    }
}
