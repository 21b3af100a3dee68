//! Plain-text matrix format: a `rows cols` header line followed by one
//! whitespace-separated row per line. Values are written with 17 significant
//! digits, which round-trips every finite `f64` exactly.

use std::fmt::Write as _;

use super::Matrix;
use crate::error::{Error, Result};

pub fn write_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    write_matrix_into(m, &mut out);
    out
}

pub(crate) fn write_matrix_into(m: &Matrix, out: &mut String) {
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = content_lines(text);
    let m = parse_matrix_lines(&mut lines)?;
    if let Some((no, extra)) = lines.next() {
        return Err(Error::Parse(format!("line {no}: unexpected trailing content {extra:?}")));
    }
    Ok(m)
}

/// Non-empty, non-comment lines paired with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_matrix_lines<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Matrix> {
    let (no, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("missing matrix header".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let [r, c] = dims.as_slice() else {
        return Err(Error::Parse(format!("line {no}: expected \"rows cols\", got {header:?}")));
    };
    let rows: usize = r
        .parse()
        .map_err(|_| Error::Parse(format!("line {no}: bad row count {r:?}")))?;
    let cols: usize = c
        .parse()
        .map_err(|_| Error::Parse(format!("line {no}: bad column count {c:?}")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("matrix ended early, expected {rows} rows")))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("line {no}: bad number {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!(
                "line {no}: expected {cols} values, found {}",
                data.len() - before
            )));
        }
    }
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_shape() {
        let m = Matrix::from_rows(&[&[1.0, -0.5], &[0.1, 2.0]]);
        let text = write_matrix(&m);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("1.0000000000000000e0 -5.0000000000000000e-1"));
        assert_eq!(parse_matrix(&text).unwrap(), m);
    }

    #[test]
    fn rejects_short_rows_and_garbage() {
        assert!(parse_matrix("2 2\n1 2\n3\n").is_err());
        assert!(parse_matrix("1 1\nabc\n").is_err());
        assert!(parse_matrix("1 1\n1\n2\n").is_err());
        assert!(parse_matrix("1 1\nNaN\n").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(data in prop::collection::vec(-1e6f64..1e6, 6)) {
            let m = Matrix::from_vec(2, 3, data).unwrap();
            let back = parse_matrix(&write_matrix(&m)).unwrap();
            for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
