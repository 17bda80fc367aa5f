//! Rectangular rasters: ASCII grid I/O, binary classification with an
//! exclusion zone, and thresholding of continuous score maps.
//!
//! Georeferencing (corner coordinates, cell size) is carried through I/O but
//! never enters any metric; all downstream math is cell counting.

use std::fmt::Write as _;
use std::path::Path;

use crate::fmt::sig6;
use crate::{Error, Result};

/// Lower-left corner and cell size. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Georef {
    pub xll: f64,
    pub yll: f64,
    pub cell_size: f64,
}

impl Default for Georef {
    fn default() -> Self {
        Georef {
            xll: 0.0,
            yll: 0.0,
            cell_size: 30.0,
        }
    }
}

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Real-valued raster, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    pub georef: Georef,
    nodata: f64,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, nodata: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} values for a {rows}x{cols} grid, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|&v| v != nodata && !v.is_finite()) {
            return Err(Error::UnexpectedValue {
                value: values[i],
                index: i,
            });
        }
        Ok(Grid {
            rows,
            cols,
            georef: Georef::default(),
            nodata,
            values,
        })
    }

    pub fn with_georef(mut self, georef: Georef) -> Self {
        self.georef = georef;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn is_nodata(&self, index: usize) -> bool {
        self.values[index] == self.nodata
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == self.nodata).count()
    }

    /// Parses the six-line-header ASCII grid format.
    pub fn parse_ascii(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut header = [None::<f64>; 6];
        const KEYS: [&str; 6] = [
            "ncols",
            "nrows",
            "xllcorner",
            "yllcorner",
            "cellsize",
            "nodata_value",
        ];
        for _ in 0..6 {
            let (idx, line) = lines.next().ok_or(Error::Parse {
                line: text.lines().count() + 1,
                message: "truncated header".into(),
            })?;
            let line_no = idx + 1;
            let mut parts = line.split_whitespace();
            let (Some(key), Some(value), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("malformed header line {line:?}"),
                });
            };
            let slot = KEYS
                .iter()
                .position(|k| k.eq_ignore_ascii_case(key))
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown header key {key:?}"),
                })?;
            if header[slot].is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate header key {key:?}"),
                });
            }
            let value: f64 = value.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric header value {value:?}"),
            })?;
            header[slot] = Some(value);
        }
        let [Some(ncols), Some(nrows), Some(xll), Some(yll), Some(cell_size), Some(nodata)] =
            header
        else {
            unreachable!("six distinct keys were read")
        };
        let as_count = |v: f64, what: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Parse {
                    line: 1,
                    message: format!("{what} must be a positive integer, got {v}"),
                })
            }
        };
        let cols = as_count(ncols, "ncols")?;
        let rows = as_count(nrows, "nrows")?;

        let mut values = Vec::with_capacity(rows * cols);
        let mut data_rows = 0;
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if data_rows == rows {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("more than {rows} data rows"),
                });
            }
            let before = values.len();
            for token in line.split_whitespace() {
                let v: f64 = token
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("non-numeric value {token:?}"),
                    })?;
                values.push(v);
            }
            let found = values.len() - before;
            if found != cols {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {cols} values, found {found}"),
                });
            }
            data_rows += 1;
        }
        if data_rows != rows {
            return Err(Error::Parse {
                line: text.lines().count() + 1,
                message: format!("expected {rows} data rows, found {data_rows}"),
            });
        }
        Ok(Grid::new(rows, cols, values, nodata)?.with_georef(Georef {
            xll,
            yll,
            cell_size,
        }))
    }

    /// Canonical ASCII rendering: values with up to six significant digits,
    /// single spaces, `\n` line endings.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 4 + 128);
        let g = &self.georef;
        let _ = writeln!(out, "ncols {}", self.cols);
        let _ = writeln!(out, "nrows {}", self.rows);
        let _ = writeln!(out, "xllcorner {}", sig6(g.xll));
        let _ = writeln!(out, "yllcorner {}", sig6(g.yll));
        let _ = writeln!(out, "cellsize {}", sig6(g.cell_size));
        let _ = writeln!(out, "NODATA_value {}", sig6(self.nodata));
        for row in self.values.chunks(self.cols) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                out.push_str(&sig6(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Reads an ASCII grid file.
pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Grid::parse_ascii(&text)
}

pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, grid.to_ascii()).map_err(|e| Error::io(path, e))
}

/// A classified cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Zero,
    One,
    /// Part of the exclusionary zone; never counted.
    Excluded,
}

/// Presence/absence map with an exclusion mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl BinaryGrid {
    pub fn new(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<Self> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} cells do not fill a {rows}x{cols} grid",
                cells.len()
            )));
        }
        Ok(BinaryGrid { rows, cols, cells })
    }

    /// Builds from 0/1 integers; any other value marks the cell excluded.
    pub fn from_bits(rows: usize, cols: usize, bits: &[i8]) -> Result<Self> {
        let cells = bits
            .iter()
            .map(|&b| match b {
                0 => Cell::Zero,
                1 => Cell::One,
                _ => Cell::Excluded,
            })
            .collect();
        Self::new(rows, cols, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn count(&self, which: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == which).count()
    }

    pub fn classified_count(&self) -> usize {
        self.cells.len() - self.count(Cell::Excluded)
    }

    /// Renders as a real grid: 0, 1, and `nodata` for excluded cells.
    pub fn to_grid(&self, nodata: f64) -> Grid {
        let values = self
            .cells
            .iter()
            .map(|c| match c {
                Cell::Zero => 0.0,
                Cell::One => 1.0,
                Cell::Excluded => nodata,
            })
            .collect();
        Grid::new(self.rows, self.cols, values, nodata).expect("shape already validated")
    }
}

/// Continuous prediction surface in [0, 1]; `None` marks excluded cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    rows: usize,
    cols: usize,
    values: Vec<Option<f64>>,
}

impl ScoreGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} scores do not fill a {rows}x{cols} grid",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find_map(|(i, v)| v.filter(|s| !(0.0..=1.0).contains(s)).map(|s| (i, s)))
        {
            return Err(Error::UnexpectedValue { value: v, index: i });
        }
        Ok(ScoreGrid { rows, cols, values })
    }

    /// Nodata cells and cells flagged in `exclusion` (non-nodata, nonzero)
    /// become excluded.
    pub fn from_grid(grid: &Grid, exclusion: Option<&Grid>) -> Result<Self> {
        check_exclusion_shape(grid.shape(), exclusion)?;
        let values = (0..grid.values.len())
            .map(|i| {
                if grid.is_nodata(i) || excluded_by(exclusion, i) {
                    None
                } else {
                    Some(grid.values[i])
                }
            })
            .collect();
        Self::new(grid.rows, grid.cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn to_grid(&self, nodata: f64) -> Grid {
        let values = self.values.iter().map(|v| v.unwrap_or(nodata)).collect();
        Grid::new(self.rows, self.cols, values, nodata).expect("shape already validated")
    }
}

fn check_exclusion_shape(shape: (usize, usize), exclusion: Option<&Grid>) -> Result<()> {
    match exclusion {
        Some(ex) if ex.shape() != shape => Err(Error::ShapeMismatch {
            expected: shape,
            found: ex.shape(),
        }),
        _ => Ok(()),
    }
}

fn excluded_by(exclusion: Option<&Grid>, index: usize) -> bool {
    exclusion.is_some_and(|ex| !ex.is_nodata(index) && ex.values[index] != 0.0)
}

/// Classifies `grid` into presence/absence.
///
/// Cells that are nodata in `grid`, or nonzero (and not nodata) in
/// `exclusion`, become [`Cell::Excluded`]. Every other cell must equal
/// `one_value` or `zero_value`.
pub fn to_binary(
    grid: &Grid,
    one_value: f64,
    zero_value: f64,
    exclusion: Option<&Grid>,
) -> Result<BinaryGrid> {
    check_exclusion_shape(grid.shape(), exclusion)?;
    let cells = grid
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if grid.is_nodata(i) || excluded_by(exclusion, i) {
                Ok(Cell::Excluded)
            } else if v == one_value {
                Ok(Cell::One)
            } else if v == zero_value {
                Ok(Cell::Zero)
            } else {
                Err(Error::UnexpectedValue { value: v, index: i })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    BinaryGrid::new(grid.rows, grid.cols, cells)
}

/// How a score surface is cut into presence/absence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Cell is 1 iff its score is at least `t`.
    Value(f64),
    /// Exactly `n` cells become 1: the `n` highest scores, ties going to the
    /// lower row-major index.
    Quantity(usize),
}

pub fn threshold_scores(scores: &ScoreGrid, mode: Threshold) -> Result<BinaryGrid> {
    let cells = match mode {
        Threshold::Value(t) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
            }
            scores
                .values
                .iter()
                .map(|v| match v {
                    None => Cell::Excluded,
                    Some(s) if *s >= t => Cell::One,
                    Some(_) => Cell::Zero,
                })
                .collect()
        }
        Threshold::Quantity(n) => {
            let mut ranked: Vec<(usize, f64)> = scores
                .values
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|s| (i, s)))
                .collect();
            if n > ranked.len() {
                return Err(Error::invalid(format!(
                    "quantity {n} exceeds the {} classified cells",
                    ranked.len()
                )));
            }
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut cells: Vec<Cell> = scores
                .values
                .iter()
                .map(|v| if v.is_some() { Cell::Zero } else { Cell::Excluded })
                .collect();
            for &(i, _) in &ranked[..n] {
                cells[i] = Cell::One;
            }
            cells
        }
    };
    BinaryGrid::new(scores.rows, scores.cols, cells)
}
