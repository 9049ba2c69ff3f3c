//! Plain CSV for matrices and vectors, long CSV for three-way tensors.

use std::path::Path;

use equicity::ipf::VolumeMatrix;
use equicity::tensor::{Matrix, Tensor3};

use crate::CliError;

fn reader(path: &Path, header: bool) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::from_csv(path, e))
}

fn rows(path: &Path, header: bool) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::new();
    for (i, rec) in reader(path, header)?.records().enumerate() {
        let rec = rec.map_err(|e| CliError::from_csv(path, e))?;
        let row = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CliError::validation("Csv", format!("{}: row {}: not a number: {f:?}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Row-major matrix, optionally with a header row.
pub fn read_matrix(path: &Path, header: bool) -> Result<Matrix, CliError> {
    let rows = rows(path, header)?;
    Matrix::from_rows(&rows).map_err(|e| CliError::validation("Shape", format!("{}: {e}", path.display())))
}

/// Integer volumes, voxels per (site, colour).
pub fn read_volumes(path: &Path, header: bool) -> Result<VolumeMatrix, CliError> {
    let m = read_matrix(path, header)?;
    if let Some(v) = m.as_slice().iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
        return Err(CliError::validation("Shape", format!("{}: volume {v} is not a nonnegative integer", path.display())));
    }
    let rows: Vec<Vec<u64>> = (0..m.rows()).map(|j| m.row(j).iter().map(|v| *v as u64).collect()).collect();
    VolumeMatrix::from_rows(&rows).map_err(|e| CliError::validation("Shape", e.to_string()))
}

/// All numbers of the file in reading order, so a vector can be laid out as
/// one row or one column.
pub fn read_vector(path: &Path, header: bool) -> Result<Vec<f64>, CliError> {
    Ok(rows(path, header)?.into_iter().flatten().collect())
}

/// Long format with a header naming the three index columns and `value`,
/// e.g. `actor,site,colour,value`. Every cell must appear exactly once.
pub fn read_tensor(path: &Path, axes: [&str; 3]) -> Result<Tensor3, CliError> {
    let bad = |msg: String| CliError::validation("Csv", format!("{}: {msg}", path.display()));
    let mut rdr = reader(path, true)?;
    let headers = rdr.headers().map_err(|e| CliError::from_csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| bad(format!("missing column {name:?}")))
    };
    let idx = [col(axes[0])?, col(axes[1])?, col(axes[2])?];
    let val = col("value")?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::from_csv(path, e))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let mut at = [0usize; 3];
        for (a, &c) in at.iter_mut().zip(&idx) {
            *a = field(c).parse().map_err(|_| bad(format!("bad index {:?}", field(c))))?;
        }
        let v: f64 = field(val).parse().map_err(|_| bad(format!("bad value {:?}", field(val))))?;
        cells.push((at, v));
    }
    if cells.is_empty() {
        return Err(bad("no rows".into()));
    }
    let dims: Vec<usize> = (0..3).map(|a| cells.iter().map(|(at, _)| at[a]).max().unwrap_or(0) + 1).collect();
    let (d0, d1, d2) = (dims[0], dims[1], dims[2]);
    if cells.len() != d0 * d1 * d2 {
        return Err(bad(format!("{} rows for a complete {d0}x{d1}x{d2} table", cells.len())));
    }
    let mut data = vec![None; d0 * d1 * d2];
    for ([a, b, c], v) in cells {
        if data[(a * d1 + b) * d2 + c].replace(v).is_some() {
            return Err(bad(format!("duplicate cell ({a}, {b}, {c})")));
        }
    }
    Ok(Tensor3::from_fn(d0, d1, d2, |a, b, c| data[(a * d1 + b) * d2 + c].expect("complete")))
}

/// Writes to `path`, or stdout when `None`. Floats use the shortest text
/// that reads back to the same value.
pub fn write_matrix(path: Option<&Path>, m: &Matrix, header: bool) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = (0..m.rows()).map(|i| m.row(i).iter().map(f64::to_string).collect()).collect();
    write_rows(path, m.cols(), rows, header)
}

pub fn write_volumes(path: Option<&Path>, v: &VolumeMatrix, header: bool) -> Result<(), CliError> {
    let (n, o) = v.shape();
    let rows: Vec<Vec<String>> = (0..n).map(|j| v.row(j).iter().map(u64::to_string).collect()).collect();
    write_rows(path, o, rows, header)
}

fn write_rows(path: Option<&Path>, cols: usize, rows: Vec<Vec<String>>, header: bool) -> Result<(), CliError> {
    let shown = path.unwrap_or(Path::new("<stdout>"));
    let sink: Box<dyn std::io::Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    if header {
        w.write_record((0..cols).map(|k| format!("c{k}"))).map_err(|e| CliError::from_csv(shown, e))?;
    }
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::from_csv(shown, e))?;
    }
    w.flush().map_err(|e| CliError::io(shown, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Matrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![2e-17, 7.0]]).unwrap();
        for header in [false, true] {
            write_matrix(Some(&path), &m, header).unwrap();
            assert_eq!(read_matrix(&path, header).unwrap(), m);
        }
    }

    #[test]
    fn vector_in_either_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "1\n2\n3\n").unwrap();
        assert_eq!(read_vector(&path, false).unwrap(), vec![1.0, 2.0, 3.0]);
        std::fs::write(&path, "# comment\n1, 2, 3\n").unwrap();
        assert_eq!(read_vector(&path, false).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn tensor_columns_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "value,colour,site,actor\n1,0,0,0\n2,0,0,1\n").unwrap();
        let t = read_tensor(&path, ["actor", "site", "colour"]).unwrap();
        assert_eq!(t.dims(), (2, 1, 1));
        assert_eq!(t[(1, 0, 0)], 2.0);
        std::fs::write(&path, "actor,site,colour,value\n0,0,0,1\n1,0,0,2\n1,0,0,3\n").unwrap();
        assert!(read_tensor(&path, ["actor", "site", "colour"]).is_err());
    }
}
