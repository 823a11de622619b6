//! Binary links × paths relation used for link-failure robustness queries.
//!
//! Entry `(l, p)` is 1 when path `p` traverses link `l`. The transpose is the
//! paths × links view of the same relation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("unknown link {0:?}")]
    UnknownLink(String),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("bad matrix csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for FilterError {
    fn from(e: csv::Error) -> Self {
        FilterError::Csv(e.to_string())
    }
}

/// Which way round the labels are: rows are links (R) or paths (Rᵀ).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    LinksByPaths,
    PathsByLinks,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterMatrix {
    orientation: Orientation,
    rows: Vec<String>,
    cols: Vec<String>,
    cells: Vec<Vec<bool>>,
}

/// One path and the links it uses.
#[derive(Debug, Clone)]
pub struct PathUsage {
    pub label: String,
    pub links: Vec<String>,
}

impl PathUsage {
    pub fn new<S: Into<String>>(label: impl Into<String>, links: impl IntoIterator<Item = S>) -> Self {
        PathUsage {
            label: label.into(),
            links: links.into_iter().map(Into::into).collect(),
        }
    }
}

fn ensure_unique(labels: &[String]) -> Result<(), FilterError> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(FilterError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

impl FilterMatrix {
    /// R with `links` as rows and one column per path.
    pub fn build<S: AsRef<str>>(paths: &[PathUsage], links: &[S]) -> Result<FilterMatrix, FilterError> {
        let links: Vec<String> = links.iter().map(|l| l.as_ref().to_string()).collect();
        ensure_unique(&links)?;
        let path_labels: Vec<String> = paths.iter().map(|p| p.label.clone()).collect();
        ensure_unique(&path_labels)?;
        let index: HashMap<&str, usize> = links.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut cells = vec![vec![false; paths.len()]; links.len()];
        for (p, usage) in paths.iter().enumerate() {
            for l in &usage.links {
                let &row = index
                    .get(l.as_str())
                    .ok_or_else(|| FilterError::UnknownLink(l.clone()))?;
                cells[row][p] = true;
            }
        }
        Ok(FilterMatrix {
            orientation: Orientation::LinksByPaths,
            rows: links,
            cols: path_labels,
            cells,
        })
    }

    pub fn from_cells(
        orientation: Orientation,
        rows: Vec<String>,
        cols: Vec<String>,
        cells: Vec<Vec<bool>>,
    ) -> Result<FilterMatrix, FilterError> {
        ensure_unique(&rows)?;
        ensure_unique(&cols)?;
        if cells.len() != rows.len() || cells.iter().any(|r| r.len() != cols.len()) {
            return Err(FilterError::Csv(format!(
                "expected a {}x{} matrix",
                rows.len(),
                cols.len()
            )));
        }
        Ok(FilterMatrix {
            orientation,
            rows,
            cols,
            cells,
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn row_labels(&self) -> &[String] {
        &self.rows
    }

    pub fn col_labels(&self) -> &[String] {
        &self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row][col]
    }

    pub fn links(&self) -> &[String] {
        match self.orientation {
            Orientation::LinksByPaths => &self.rows,
            Orientation::PathsByLinks => &self.cols,
        }
    }

    pub fn paths(&self) -> &[String] {
        match self.orientation {
            Orientation::LinksByPaths => &self.cols,
            Orientation::PathsByLinks => &self.rows,
        }
    }

    /// Whether `path` uses `link`, by position in [`links`](Self::links) and
    /// [`paths`](Self::paths).
    pub fn uses(&self, link: usize, path: usize) -> bool {
        match self.orientation {
            Orientation::LinksByPaths => self.cells[link][path],
            Orientation::PathsByLinks => self.cells[path][link],
        }
    }

    pub fn transpose(&self) -> FilterMatrix {
        let cells = (0..self.cols.len())
            .map(|c| self.cells.iter().map(|row| row[c]).collect())
            .collect();
        FilterMatrix {
            orientation: match self.orientation {
                Orientation::LinksByPaths => Orientation::PathsByLinks,
                Orientation::PathsByLinks => Orientation::LinksByPaths,
            },
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            cells,
        }
    }

    /// Paths that use at least one link.
    pub fn relation_range(&self) -> BTreeSet<String> {
        (0..self.paths().len())
            .filter(|&p| (0..self.links().len()).any(|l| self.uses(l, p)))
            .map(|p| self.paths()[p].clone())
            .collect()
    }

    /// Links used by at least one path.
    pub fn relation_domain(&self) -> BTreeSet<String> {
        (0..self.links().len())
            .filter(|&l| (0..self.paths().len()).any(|p| self.uses(l, p)))
            .map(|l| self.links()[l].clone())
            .collect()
    }

    /// Paths none of whose links are in `failed`, in column order.
    pub fn surviving_paths<S: AsRef<str>>(&self, failed: &[S]) -> Result<Vec<String>, FilterError> {
        let mut dead = vec![false; self.links().len()];
        for f in failed {
            let f = f.as_ref();
            let i = self
                .links()
                .iter()
                .position(|l| l == f)
                .ok_or_else(|| FilterError::UnknownLink(f.to_string()))?;
            dead[i] = true;
        }
        Ok((0..self.paths().len())
            .filter(|&p| (0..self.links().len()).all(|l| !(dead[l] && self.uses(l, p))))
            .map(|p| self.paths()[p].clone())
            .collect())
    }

    /// CSV whose header is the corner label followed by the column labels.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FilterError> {
        let mut out = csv::Writer::from_writer(w);
        let corner = match self.orientation {
            Orientation::LinksByPaths => "R",
            Orientation::PathsByLinks => "R^T",
        };
        let mut header = vec![corner.to_string()];
        header.extend(self.cols.iter().cloned());
        out.write_record(&header)?;
        for (label, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| FilterError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Reads the layout written by [`write_csv`](Self::write_csv). A corner
    /// cell of `R^T` (or `RT`) marks a paths × links matrix; anything else is links × paths.
    pub fn read_csv<R: Read>(r: R) -> Result<FilterMatrix, FilterError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| FilterError::Csv("empty file".into()))??;
        let orientation = match header.get(0) {
            Some("R^T" | "RT") => Orientation::PathsByLinks,
            _ => Orientation::LinksByPaths,
        };
        let cols: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for rec in records {
            let rec = rec?;
            let label = rec.get(0).unwrap_or_default().to_string();
            let row = rec
                .iter()
                .skip(1)
                .map(|v| match v {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(FilterError::Csv(format!("entry {other:?} in row {label} is not 0/1"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(label);
            cells.push(row);
        }
        FilterMatrix::from_cells(orientation, rows, cols, cells)
    }
}

impl fmt::Display for FilterMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let corner = match self.orientation {
            Orientation::LinksByPaths => "R",
            Orientation::PathsByLinks => "R^T",
        };
        write!(f, "{corner}")?;
        for c in &self.cols {
            write!(f, "\t{c}")?;
        }
        writeln!(f)?;
        for (label, row) in self.rows.iter().zip(&self.cells) {
            write!(f, "{label}")?;
            for &b in row {
                write!(f, "\t{}", u8::from(b))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Paths over a star: one path per unordered client pair, each using the two
/// spoke links `L<client>`.
pub fn star_paths<S: AsRef<str>>(clients: &[S]) -> (Vec<String>, Vec<PathUsage>) {
    let links: Vec<String> = clients.iter().map(|c| format!("L{}", c.as_ref())).collect();
    let mut paths = Vec::new();
    for i in 0..clients.len() {
        for j in i + 1..clients.len() {
            paths.push(PathUsage::new(
                format!("P{}", paths.len() + 1),
                [links[i].clone(), links[j].clone()],
            ));
        }
    }
    (links, paths)
}
