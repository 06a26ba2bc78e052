//! File formats: tab-separated triplet files for sparse observations, CSV
//! for dense matrices, binary PGM for grayscale images, and a coordinate
//! format for graph matrices. All writers emit locale-independent decimal
//! text and round-trip through the matching reader.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ObservedMatrix;
use crate::scalar::{real, to_f64, Real};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_index(tok: &str, path: &Path, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{tok}`")))
}

fn parse_value<T: Real>(tok: &str, path: &Path, line: usize) -> Result<T> {
    tok.parse::<f64>()
        .map(real)
        .map_err(|_| parse_err(path, line, format!("invalid value `{tok}`")))
}

/// Writes a sparse matrix as a triplet file: header line "m n", then one
/// "row<TAB>col<TAB>value" line per observed entry, row-major, 0-based,
/// values with 9 significant digits.
pub fn save_triplets<T: Real>(path: &Path, data: &ObservedMatrix<T>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", data.m(), data.n()));
    for (i, j, v) in data.iter() {
        out.push_str(&format!("{i}\t{j}\t{v:.8e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a triplet file written by `save_triplets`. Reports malformed lines
/// with their line number; duplicate or out-of-range entries are rejected.
pub fn load_triplets<T: Real>(path: &Path) -> Result<ObservedMatrix<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))??;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(parse_err(path, 1, "header must be `m n`"));
    }
    let m = parse_index(head[0], path, 1, "row count")?;
    let n = parse_index(head[1], path, 1, "column count")?;

    let mut entries: Vec<(usize, usize, T)> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(path, lineno, "expected `row col value`"));
        }
        let i = parse_index(toks[0], path, lineno, "row index")?;
        let j = parse_index(toks[1], path, lineno, "column index")?;
        if i >= m || j >= n {
            return Err(parse_err(
                path,
                lineno,
                format!("entry ({i},{j}) out of range for {m}x{n}"),
            ));
        }
        entries.push((i, j, parse_value(toks[2], path, lineno)?));
    }
    ObservedMatrix::from_triplets(m, n, &entries)
}

/// Writes a dense matrix as CSV: header "m,n", then m comma-separated rows
/// with 17 significant digits (lossless for f64).
pub fn save_dense_csv<T: Real>(path: &Path, x: &DMatrix<T>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{},{}\n", x.nrows(), x.ncols()));
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|j| format!("{:.16e}", x[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dense CSV matrix written by `save_dense_csv`.
pub fn load_dense_csv<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))??;
    let head: Vec<&str> = header.split(',').collect();
    if head.len() != 2 {
        return Err(parse_err(path, 1, "header must be `m,n`"));
    }
    let m = parse_index(head[0].trim(), path, 1, "row count")?;
    let n = parse_index(head[1].trim(), path, 1, "column count")?;
    if m == 0 || n == 0 {
        return Err(parse_err(path, 1, "dimensions must be positive"));
    }

    let mut values: Vec<T> = Vec::with_capacity(m * n);
    let mut rows = 0usize;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != n {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {n} columns, found {}", toks.len()),
            ));
        }
        for tok in toks {
            values.push(parse_value(tok.trim(), path, lineno)?);
        }
        rows += 1;
    }
    if rows != m {
        return Err(parse_err(
            path,
            rows + 2,
            format!("expected {m} rows, found {rows}"),
        ));
    }
    Ok(DMatrix::from_row_slice(m, n, &values))
}

/// Writes a grayscale image as binary PGM (P5, maxval 255). Values are
/// rounded to the nearest integer and clamped to [0,255].
pub fn save_image<T: Real>(path: &Path, img: &DMatrix<T>) -> Result<()> {
    let (m, n) = (img.nrows(), img.ncols());
    if m == 0 || n == 0 {
        return Err(Error::Dimension("image must be non-empty".into()));
    }
    let mut bytes = format!("P5\n{n} {m}\n255\n").into_bytes();
    for i in 0..m {
        for j in 0..n {
            let x = to_f64(img[(i, j)]);
            if x.is_nan() {
                return Err(Error::InvalidData(format!("pixel ({i},{j}) is NaN")));
            }
            bytes.push(x.round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Reads a binary PGM (P5) image with maxval 255 into a matrix of pixel
/// values in [0,255].
pub fn load_image<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;

    let mut read_token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::InvalidData(format!(
                "{}: truncated header, missing {what}",
                path.display()
            )));
        }
        String::from_utf8(bytes[start..pos].to_vec())
            .map_err(|_| Error::InvalidData(format!("{}: non-ASCII header", path.display())))
    };

    let magic = read_token("magic")?;
    if magic != "P5" {
        return Err(Error::InvalidData(format!(
            "{}: expected P5 magic, found `{magic}`",
            path.display()
        )));
    }
    let n: usize = read_token("width")?
        .parse()
        .map_err(|_| Error::InvalidData(format!("{}: invalid width", path.display())))?;
    let m: usize = read_token("height")?
        .parse()
        .map_err(|_| Error::InvalidData(format!("{}: invalid height", path.display())))?;
    let maxval = read_token("maxval")?;
    if maxval != "255" {
        return Err(Error::InvalidData(format!(
            "{}: unsupported maxval {maxval}, expected 255",
            path.display()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidData(format!(
            "{}: zero image dimension",
            path.display()
        )));
    }
    // Exactly one whitespace byte separates header and payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::InvalidData(format!(
            "{}: missing header terminator",
            path.display()
        )));
    }
    pos += 1;
    let payload = &bytes[pos..];
    if payload.len() != m * n {
        return Err(Error::InvalidData(format!(
            "{}: payload has {} bytes, expected {}",
            path.display(),
            payload.len(),
            m * n
        )));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| {
        real(payload[i * n + j] as f64)
    }))
}

/// Converts masked image pixels to an observation set scaled to [0,1].
/// `pixels_from_unit` applies the inverse scaling to a completed matrix.
pub fn image_to_observed<T: Real>(
    img: &DMatrix<T>,
    mask: &[(usize, usize)],
) -> Result<ObservedMatrix<T>> {
    let peak = real::<T>(255.0);
    let entries: Vec<(usize, usize, T)> = mask
        .iter()
        .map(|&(i, j)| {
            if i >= img.nrows() || j >= img.ncols() {
                Err(Error::InvalidData(format!(
                    "mask cell ({i},{j}) outside {}x{} image",
                    img.nrows(),
                    img.ncols()
                )))
            } else {
                Ok((i, j, img[(i, j)] / peak))
            }
        })
        .collect::<Result<_>>()?;
    ObservedMatrix::from_triplets(img.nrows(), img.ncols(), &entries)
}

/// Maps a completed unit-scale matrix back to pixel scale, clamped to
/// [0,255] (rounding happens on save).
pub fn pixels_from_unit<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    let peak = real::<T>(255.0);
    x.map(|v| (v * peak).max(T::zero()).min(peak))
}

/// Writes a square matrix in coordinate form: header "n=<count>", then one
/// "i j value" line per nonzero entry (0-based, row-major, 17 significant
/// digits). Used for adjacency and Laplacian matrices.
pub fn save_coord_matrix<T: Real>(path: &Path, x: &DMatrix<T>) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::Dimension(format!(
            "coordinate format is for square matrices, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let mut out = format!("n={}\n", x.nrows());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if x[(i, j)] != T::zero() {
                out.push_str(&format!("{i} {j} {:.16e}\n", x[(i, j)]));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a coordinate-format square matrix written by `save_coord_matrix`.
pub fn load_coord_matrix<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))??;
    let n = header
        .strip_prefix("n=")
        .ok_or_else(|| parse_err(path, 1, "header must be `n=<count>`"))
        .and_then(|t| parse_index(t.trim(), path, 1, "vertex count"))?;
    if n == 0 {
        return Err(parse_err(path, 1, "vertex count must be positive"));
    }

    let mut x = DMatrix::zeros(n, n);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(path, lineno, "expected `i j value`"));
        }
        let i = parse_index(toks[0], path, lineno, "row index")?;
        let j = parse_index(toks[1], path, lineno, "column index")?;
        if i >= n || j >= n {
            return Err(parse_err(
                path,
                lineno,
                format!("entry ({i},{j}) out of range for n={n}"),
            ));
        }
        x[(i, j)] = parse_value(toks[2], path, lineno)?;
    }
    Ok(x)
}
