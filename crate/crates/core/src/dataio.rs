//! Rating, matrix and graph file formats.
//!
//! * `movielens_tab`: `user \t item \t rating \t timestamp`, 1-based ids.
//! * `csv_triplets`: `row,col,value`, 0-based ids.
//! * `dense_csv`: one matrix row per line; an empty cell is unobserved.
//!
//! Graphs are read as dense CSV adjacency matrices or `a,b,weight` edge
//! lists. Lines that are empty or start with `#` are skipped everywhere.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::WeightedGraph;
use crate::objectives::MaskedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFormat {
    MovielensTab,
    CsvTriplets,
    DenseCsv,
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_tab" => Ok(Self::MovielensTab),
            "csv_triplets" => Ok(Self::CsvTriplets),
            "dense_csv" => Ok(Self::DenseCsv),
            other => Err(Error::Config(format!("unknown rating format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFormat {
    #[default]
    DenseCsv,
    EdgeList,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {raw:?}"),
    })
}

/// Sparse entries `(row, col, value)` into a masked matrix; later
/// duplicates overwrite earlier ones.
fn assemble(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<MaskedMatrix> {
    let mut values = Array2::zeros((rows, cols));
    let mut mask = Array2::zeros((rows, cols));
    for (r, c, v) in entries {
        values[[r, c]] = v;
        mask[[r, c]] = 1.0;
    }
    MaskedMatrix::new(values, mask)
}

fn check_bounds(row: usize, col: usize, rows: usize, cols: usize) -> Result<()> {
    if row >= rows || col >= cols {
        return Err(Error::IndexOutOfBounds { row, col, rows, cols });
    }
    Ok(())
}

/// Parses ratings text of the given format into an `rows × cols` matrix.
/// For `dense_csv` the shape comes from the text and must match when given.
pub fn parse_ratings(text: &str, format: RatingFormat, shape: Option<(usize, usize)>) -> Result<MaskedMatrix> {
    match format {
        RatingFormat::DenseCsv => {
            let (values, mask) = parse_dense(text, true)?;
            if let Some(s) = shape {
                if s != values.dim() {
                    return Err(Error::ShapeMismatch(format!("declared {s:?}, file has {:?}", values.dim())));
                }
            }
            MaskedMatrix::new(values, mask)
        }
        RatingFormat::MovielensTab | RatingFormat::CsvTriplets => {
            let (rows, cols) = shape.ok_or_else(|| Error::Config("sparse rating formats need rows and cols".into()))?;
            let mut entries = Vec::new();
            for (line, l) in content_lines(text) {
                let (r, c, v) = if format == RatingFormat::MovielensTab {
                    let mut f = l.split('\t');
                    let u: usize = parse_field(f.next(), line, "user")?;
                    let i: usize = parse_field(f.next(), line, "item")?;
                    let v: f64 = parse_field(f.next(), line, "rating")?;
                    if u == 0 || i == 0 {
                        return Err(Error::Parse {
                            line,
                            message: "ids are 1-based".into(),
                        });
                    }
                    (u - 1, i - 1, v)
                } else {
                    let mut f = l.split(',');
                    let r: usize = parse_field(f.next(), line, "row")?;
                    let c: usize = parse_field(f.next(), line, "col")?;
                    let v: f64 = parse_field(f.next(), line, "value")?;
                    (r, c, v)
                };
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite value {v}"),
                    });
                }
                check_bounds(r, c, rows, cols)?;
                entries.push((r, c, v));
            }
            assemble(rows, cols, entries)
        }
    }
}

pub fn load_ratings(path: &Path, format: RatingFormat, shape: Option<(usize, usize)>) -> Result<MaskedMatrix> {
    parse_ratings(&fs::read_to_string(path)?, format, shape)
}

/// Dense CSV into values and a mask of nonempty cells. Without
/// `allow_empty`, empty cells are parse errors.
fn parse_dense(text: &str, allow_empty: bool) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (line, l) in content_lines(text) {
        let mut row = Vec::new();
        for cell in l.split(',') {
            let cell = cell.trim();
            if cell.is_empty() {
                if !allow_empty {
                    return Err(Error::Parse {
                        line,
                        message: "empty cell".into(),
                    });
                }
                row.push(None);
            } else {
                let v: f64 = parse_field(Some(cell), line, "value")?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite value {v}"),
                    });
                }
                row.push(Some(v));
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("{} cells, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let (m, n) = (rows.len(), rows.first().map_or(0, Vec::len));
    let mut values = Array2::zeros((m, n));
    let mut mask = Array2::zeros((m, n));
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                values[[i, j]] = *v;
                mask[[i, j]] = 1.0;
            }
        }
    }
    Ok((values, mask))
}

/// A fully populated dense CSV matrix.
pub fn parse_dense_matrix(text: &str) -> Result<Array2<f64>> {
    parse_dense(text, false).map(|(v, _)| v)
}

pub fn load_dense_matrix(path: &Path) -> Result<Array2<f64>> {
    parse_dense_matrix(&fs::read_to_string(path)?)
}

/// Dense similarity matrix as a graph: `(A + Aᵀ)/2` with a zero diagonal.
pub fn similarity_graph(a: &Array2<f64>) -> Result<WeightedGraph> {
    let (n, c) = a.dim();
    if n != c {
        return Err(Error::InvalidGraph(format!("similarity matrix is {n}x{c}")));
    }
    let mut sym = (a + &a.t()) / 2.0;
    sym.diag_mut().fill(0.0);
    WeightedGraph::new(sym)
}

pub fn load_similarity_graph(path: &Path) -> Result<WeightedGraph> {
    similarity_graph(&load_dense_matrix(path)?)
}

pub fn parse_edge_list(text: &str, n: usize) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let mut f = l.split(',');
        let a: usize = parse_field(f.next(), line, "source")?;
        let b: usize = parse_field(f.next(), line, "target")?;
        let w: f64 = parse_field(f.next(), line, "weight")?;
        edges.push((a, b, w));
    }
    WeightedGraph::from_edges(n, &edges)
}

pub fn load_graph(path: &Path, format: GraphFormat, n: usize) -> Result<WeightedGraph> {
    let g = match format {
        GraphFormat::DenseCsv => load_similarity_graph(path)?,
        GraphFormat::EdgeList => parse_edge_list(&fs::read_to_string(path)?, n)?,
    };
    if g.n() != n {
        return Err(Error::ShapeMismatch(format!("graph on {} vertices, expected {n}", g.n())));
    }
    Ok(g)
}

/// Dense CSV text; `mask` blanks unobserved cells.
pub fn dense_csv(values: &Array2<f64>, mask: Option<&Array2<f64>>) -> String {
    let mut out = String::new();
    for (i, row) in values.rows().into_iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, v)| match mask {
                Some(m) if m[[i, j]] == 0.0 => String::new(),
                _ => v.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Observed entries as `row,col,value` lines.
pub fn triplets_csv(data: &MaskedMatrix) -> String {
    let mut out = String::new();
    for (r, c) in data.observed() {
        out.push_str(&format!("{r},{c},{}\n", data.values()[[r, c]]));
    }
    out
}

/// Edges with `a < b` as `a,b,weight` lines.
pub fn edge_list_csv(g: &WeightedGraph) -> String {
    g.edges().map(|(a, b, w)| format!("{a},{b},{w}\n")).collect()
}

/// Writes through a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
