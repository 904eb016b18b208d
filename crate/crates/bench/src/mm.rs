//! Matrix Market (real/integer, general) and plain-text vector files.

use std::fs;
use std::io::Write;
use std::path::Path;

use scsolve_core::{DenseMatrix, DenseVector};

use crate::error::{BenchError, Result};
use crate::format::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

fn parse_banner(path: &Path, line: &str) -> Result<Layout> {
    let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    let bad = |msg: String| Err(BenchError::parse(path, 1, msg));
    if words.first().map(String::as_str) != Some("%%matrixmarket") {
        return bad("missing %%MatrixMarket banner".into());
    }
    if words.len() != 5 {
        return bad(format!("banner needs 4 fields after %%MatrixMarket, found {}", words.len() - 1));
    }
    if words[1] != "matrix" {
        return bad(format!("object {:?} is not supported, expected matrix", words[1]));
    }
    let layout = match words[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return bad(format!("unknown format {other:?}")),
    };
    match words[3].as_str() {
        "real" | "integer" | "double" => {}
        "pattern" | "complex" => return bad(format!("{} matrices are not supported, only real", words[3])),
        other => return bad(format!("unknown field {other:?}")),
    }
    match words[4].as_str() {
        "general" => {}
        "symmetric" | "skew-symmetric" | "hermitian" => {
            return bad(format!(
                "{} storage is not supported; expand the matrix to general storage first",
                words[4]
            ))
        }
        other => return bad(format!("unknown symmetry {other:?}")),
    }
    Ok(layout)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| BenchError::parse(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| BenchError::parse(path, line, format!("cannot parse {what} from {tok:?}")))
}

fn parse_value(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let v: f64 = parse_num(path, line, tok, "value")?;
    if !v.is_finite() {
        return Err(BenchError::parse(path, line, "non-finite value"));
    }
    Ok(v)
}

/// Reads a dense matrix. Coordinate entries are 1-based and duplicates are
/// summed; array entries are column-major.
pub fn read_matrix_market(path: &Path) -> Result<DenseMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_matrix_market(path, &text)
}

pub fn parse_matrix_market(path: &Path, text: &str) -> Result<DenseMatrix<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, banner) = lines
        .next()
        .ok_or_else(|| BenchError::parse(path, 1, "empty file"))?;
    let layout = parse_banner(path, banner)?;
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));

    let (size_no, size_line) = body
        .next()
        .ok_or_else(|| BenchError::parse(path, 1, "missing size line"))?;
    let mut toks = size_line.split_whitespace();
    let m: usize = parse_num(path, size_no, toks.next(), "row count")?;
    let n: usize = parse_num(path, size_no, toks.next(), "column count")?;
    let nnz = match layout {
        Layout::Coordinate => parse_num(path, size_no, toks.next(), "entry count")?,
        Layout::Array => m * n,
    };
    if toks.next().is_some() {
        return Err(BenchError::parse(path, size_no, "trailing tokens on size line"));
    }

    let mut a = DenseMatrix::zeros(m, n);
    let mut count = 0usize;
    match layout {
        Layout::Coordinate => {
            for (no, line) in body {
                if count == nnz {
                    return Err(BenchError::parse(path, no, format!("more than {nnz} entries")));
                }
                let mut t = line.split_whitespace();
                let i: usize = parse_num(path, no, t.next(), "row index")?;
                let j: usize = parse_num(path, no, t.next(), "column index")?;
                let v = parse_value(path, no, t.next())?;
                if i == 0 || i > m || j == 0 || j > n {
                    return Err(BenchError::parse(
                        path,
                        no,
                        format!("entry ({i}, {j}) outside the {m} x {n} matrix"),
                    ));
                }
                a[(i - 1, j - 1)] += v;
                count += 1;
            }
        }
        Layout::Array => {
            for (no, line) in body {
                for tok in line.split_whitespace() {
                    if count == nnz {
                        return Err(BenchError::parse(path, no, format!("more than {nnz} values")));
                    }
                    a[(count % m.max(1), count / m.max(1))] = parse_value(path, no, Some(tok))?;
                    count += 1;
                }
            }
        }
    }
    if count != nnz {
        return Err(BenchError::parse(
            path,
            text.lines().count(),
            format!("expected {nnz} entries, found {count}"),
        ));
    }
    Ok(a)
}

/// Writes `a` in array format with round-trip precision.
pub fn write_matrix_market(path: &Path, a: &DenseMatrix<f64>, comment: Option<&str>) -> Result<()> {
    let mut out = String::with_capacity(a.rows() * a.cols() * 24 + 64);
    out.push_str("%%MatrixMarket matrix array real general\n");
    if let Some(c) = comment {
        for l in c.lines() {
            out.push('%');
            out.push_str(l);
            out.push('\n');
        }
    }
    out.push_str(&format!("{} {}\n", a.rows(), a.cols()));
    for &v in a.as_slice() {
        out.push_str(&fmt_f64(v));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// One value per line; blank lines and lines starting with `%` or `#` are
/// skipped.
pub fn read_vector(path: &Path) -> Result<DenseVector<f64>> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let mut v = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') || line.starts_with('#') {
            continue;
        }
        v.push(parse_value(path, i + 1, Some(line))?);
    }
    Ok(DenseVector::new(v)?)
}

pub fn write_vector(path: &Path, v: &DenseVector<f64>) -> Result<()> {
    let mut out = String::new();
    for &x in v.as_slice() {
        out.push_str(&fmt_f64(x));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Zero-based row indices, either a selection document (JSON with an
/// `indices` field) or one index per line.
pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    if text.trim_start().starts_with('{') {
        #[derive(serde::Deserialize)]
        struct WithIndices {
            indices: Vec<usize>,
        }
        let doc: WithIndices = serde_json::from_str(&text)
            .map_err(|e| BenchError::parse(path, e.line(), e.to_string()))?;
        return Ok(doc.indices);
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') || line.starts_with('#') {
            continue;
        }
        out.push(parse_num(path, i + 1, Some(line), "row index")?);
    }
    Ok(out)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(bytes).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DenseMatrix<f64>> {
        parse_matrix_market(Path::new("t.mtx"), text)
    }

    #[test]
    fn array_two_by_two() {
        let a = parse("%%MatrixMarket matrix array real general\n% c\n2 2\n1\n3\n2\n4\n").unwrap();
        assert_eq!(a, DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap());
    }

    #[test]
    fn coordinate_duplicates_are_summed() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n2 3 3\n1 2 1.5\n2 3 -1\n1 2 2.5\n").unwrap();
        assert_eq!(a[(0, 1)], 4.0);
        assert_eq!(a[(1, 2)], -1.0);
        assert_eq!(a[(0, 0)], 0.0);
    }

    #[test]
    fn integer_field_is_read_as_real() {
        let a = parse("%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 7\n").unwrap();
        assert_eq!(a[(0, 0)], 7.0);
    }

    #[test]
    fn rejections() {
        let err = |t: &str| parse(t).unwrap_err().to_string();
        assert!(err("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").contains("complex"));
        assert!(err("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n").contains("pattern"));
        assert!(err("%%MatrixMarket matrix coordinate real symmetric\n1 1 1\n1 1 1\n").contains("symmetric"));
        assert!(err("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n").contains("outside"));
        assert!(err("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n").contains("expected 2"));
        assert!(err("%MatrixMarket matrix array real general\n1 1\n1\n").contains("banner"));
        assert!(err("%%MatrixMarket matrix array real\n1 1\n1\n").contains("4 fields"));
        assert!(err("%%MatrixMarket matrix array real general\n1 1\nx\n").contains("cannot parse"));
        assert!(err("%%MatrixMarket matrix array real general\n1 1\n1\n2\n").contains("more than"));
    }

    #[test]
    fn write_then_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        let a = DenseMatrix::from_row_slice(2, 3, &[0.1, -2e-300, 3.0, 1.0 / 3.0, 5e20, 0.0]).unwrap();
        write_matrix_market(&p, &a, Some("generated")).unwrap();
        assert_eq!(read_matrix_market(&p).unwrap(), a);

        let v = DenseVector::new(vec![1.0 / 7.0, -1e-17]).unwrap();
        let q = dir.path().join("b.txt");
        write_vector(&q, &v).unwrap();
        assert_eq!(read_vector(&q).unwrap(), v);
    }

    #[test]
    fn index_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ip.txt");
        fs::write(&p, "# rows\n3\n0\n\n7\n").unwrap();
        assert_eq!(read_indices(&p).unwrap(), vec![3, 0, 7]);
        fs::write(&p, r#"{"method": "cpqr", "indices": [2, 5]}"#).unwrap();
        assert_eq!(read_indices(&p).unwrap(), vec![2, 5]);
    }
}
