//! Matrix Market reader and writer (real/integer, general/symmetric,
//! coordinate/array).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::scalar::Real;

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

/// Reads a Matrix Market file. Symmetric storage is expanded.
pub fn read_matrix_market<T: Real>(path: impl AsRef<Path>) -> Result<SparseMatrix<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, &path.display().to_string())
}

/// Parses Matrix Market text; `name` labels diagnostics.
pub fn parse_matrix_market<T: Real>(text: &str, name: &str) -> Result<SparseMatrix<T>> {
    let err = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(err(1, format!("malformed header \"{header}\"")));
    }
    let layout = match h[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(err(1, format!("unsupported storage \"{other}\""))),
    };
    match h[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(err(1, format!("field \"{other}\" is not real"))),
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(1, format!("unsupported symmetry \"{other}\""))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| err(2, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(size_line, format!("bad size token \"{t}\""))))
        .collect::<Result<_>>()?;
    let number = |line: usize, tok: Option<&str>| -> Result<f64> {
        let tok = tok.ok_or_else(|| err(line, "missing value".into()))?;
        let v: f64 = tok.parse().map_err(|_| err(line, format!("bad number \"{tok}\"")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(line, format!("non-finite value \"{tok}\"")))
        }
    };

    let mut triplets = Vec::new();
    let (nrows, ncols) = match layout {
        Layout::Coordinate => {
            let [nr, nc, nnz] = dims[..] else {
                return Err(err(size_line, "coordinate size line needs rows, columns, entries".into()));
            };
            if symmetric && nr != nc {
                return Err(err(size_line, "symmetric matrix must be square".into()));
            }
            let mut seen = 0;
            for (line, l) in data {
                let mut it = l.split_whitespace();
                let mut index = |what: &str, bound: usize| -> Result<usize> {
                    let tok = it.next().ok_or_else(|| err(line, format!("missing {what} index")))?;
                    let v: usize = tok.parse().map_err(|_| err(line, format!("bad {what} index \"{tok}\"")))?;
                    if v == 0 || v > bound {
                        return Err(err(line, format!("{what} index {v} outside 1..={bound}")));
                    }
                    Ok(v - 1)
                };
                let i = index("row", nr)?;
                let j = index("column", nc)?;
                let v = number(line, it.next())?;
                if symmetric && j > i {
                    return Err(err(line, format!("entry ({}, {}) lies above the diagonal of symmetric storage", i + 1, j + 1)));
                }
                triplets.push((i, j, T::lit(v)));
                if symmetric && i != j {
                    triplets.push((j, i, T::lit(v)));
                }
                seen += 1;
                if seen > nnz {
                    return Err(err(line, format!("more entries than the declared {nnz}")));
                }
            }
            if seen != nnz {
                return Err(err(size_line, format!("declared {nnz} entries, found {seen}")));
            }
            (nr, nc)
        }
        Layout::Array => {
            let [nr, nc] = dims[..] else {
                return Err(err(size_line, "array size line needs rows, columns".into()));
            };
            if symmetric && nr != nc {
                return Err(err(size_line, "symmetric matrix must be square".into()));
            }
            // column-major; symmetric stores the lower triangle
            let slots: Vec<(usize, usize)> = (0..nc)
                .flat_map(|j| (if symmetric { j } else { 0 }..nr).map(move |i| (i, j)))
                .collect();
            let mut values = Vec::with_capacity(slots.len());
            let mut last_line = size_line;
            for (line, l) in data {
                for tok in l.split_whitespace() {
                    values.push((line, number(line, Some(tok))?));
                }
                last_line = line;
            }
            if values.len() != slots.len() {
                return Err(err(last_line, format!("expected {} values, found {}", slots.len(), values.len())));
            }
            for (&(i, j), &(_, v)) in slots.iter().zip(&values) {
                if v != 0.0 {
                    triplets.push((i, j, T::lit(v)));
                    if symmetric && i != j {
                        triplets.push((j, i, T::lit(v)));
                    }
                }
            }
            (nr, nc)
        }
    };
    SparseMatrix::from_triplets(nrows, ncols, &triplets)
}

/// Coordinate/general text with shortest round-trip float formatting.
pub fn format_matrix_market<T: Real>(a: &SparseMatrix<T>) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v.as_f64());
    }
    s
}

pub fn write_matrix_market<T: Real>(path: impl AsRef<Path>, a: &SparseMatrix<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix_market(a)).map_err(|e| Error::io(path, e))
}

/// Convenience for dense input/output maps.
pub fn write_dense_matrix_market<T: Real>(path: impl AsRef<Path>, a: &DMatrix<T>) -> Result<()> {
    write_matrix_market(path, &SparseMatrix::from_dense(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coordinate() {
        let a: SparseMatrix<f64> =
            parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n2 2 1\n", "t").unwrap();
        assert_eq!(a.to_dense(), DMatrix::identity(2, 2));
    }

    #[test]
    fn out_of_bounds_index() {
        let e = parse_matrix_market::<f64>("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", "t")
            .unwrap_err();
        match e {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("row index 3"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn symmetric_expansion() {
        let a: SparseMatrix<f64> = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real symmetric\n% lower triangle\n2 2 3\n1 1 2\n2 1 1\n2 2 2\n",
            "t",
        )
        .unwrap();
        assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn symmetric_array() {
        let a: SparseMatrix<f64> =
            parse_matrix_market("%%MatrixMarket matrix array real symmetric\n2 2\n2\n1\n3\n", "t").unwrap();
        assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]));
    }

    #[test]
    fn complex_field_rejected() {
        let e = parse_matrix_market::<f64>("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n", "t");
        assert!(e.unwrap_err().to_string().contains("not real"));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let d = DMatrix::from_row_slice(2, 3, &[0.1, 0.0, 1.0 / 3.0, -2.5e-300, 7.0, 0.0]);
        let a = SparseMatrix::from_dense(&d);
        let b: SparseMatrix<f64> = parse_matrix_market(&format_matrix_market(&a), "t").unwrap();
        assert_eq!(a, b);
    }
}
