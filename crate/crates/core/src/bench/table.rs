//! Result tables: rows are edge kinds, columns are architecture × node kind,
//! cells are mean best-of-seeds test accuracy in percent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::grid::CellSummary;
use crate::edges::EdgeKind;
use crate::error::{Error, Result};
use crate::features::NodeKind;
use crate::models::Architecture;
use crate::ts_io::archive_info;

/// Column order of the published tables.
pub const ARCHITECTURE_ORDER: [Architecture; 5] = [
    Architecture::ChebNet,
    Architecture::Gcn,
    Architecture::Gat,
    Architecture::Megat,
    Architecture::Stgcn,
];

/// Which datasets a table averages over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableScope {
    All,
    /// Archive problem type such as `HAR` or `EEG`.
    Type(String),
    Dataset(String),
}

impl TableScope {
    fn includes(&self, dataset: &str) -> bool {
        match self {
            TableScope::All => true,
            TableScope::Type(t) => {
                archive_info(dataset).is_some_and(|e| e.kind.eq_ignore_ascii_case(t))
            }
            TableScope::Dataset(d) => d.eq_ignore_ascii_case(dataset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub edges: Vec<EdgeKind>,
    /// Column groups in display order.
    pub columns: Vec<(Architecture, NodeKind)>,
    /// `cells[row][col]`, `None` where no run finished.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Number of datasets averaged into each cell.
    pub counts: Vec<Vec<usize>>,
}

impl ResultTable {
    /// Best edge kind in each column.
    pub fn column_best(&self, row: usize, col: usize) -> bool {
        let Some(v) = self.cells[row][col] else {
            return false;
        };
        self.cells.iter().all(|r| r[col].is_none_or(|o| o <= v))
    }

    /// Best node kind for this edge kind within the column's architecture.
    pub fn row_best(&self, row: usize, col: usize) -> bool {
        let Some(v) = self.cells[row][col] else {
            return false;
        };
        let arch = self.columns[col].0;
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, (a, _))| *a == arch)
            .all(|(j, _)| self.cells[row][j].is_none_or(|o| o <= v))
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("| Edge |");
        for (a, n) in &self.columns {
            let _ = write!(s, " {a} {n} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.columns.len()));
        s.push('\n');
        for (r, edge) in self.edges.iter().enumerate() {
            let _ = write!(s, "| {edge} |");
            for c in 0..self.columns.len() {
                let cell = match self.cells[r][c] {
                    None => "-".to_string(),
                    Some(v) => {
                        let mut t = format!("{v:.3}");
                        if self.row_best(r, c) {
                            t = format!("<u>{t}</u>");
                        }
                        if self.column_best(r, c) {
                            t = format!("**{t}**");
                        }
                        t
                    }
                };
                let _ = write!(s, " {cell} |");
            }
            s.push('\n');
        }
        s
    }

    /// Long format: edge, architecture, node, accuracy, datasets, flags.
    pub fn csv(&self) -> String {
        let mut s = String::from("edge,architecture,node,accuracy,datasets,best_edge,best_node\n");
        for (r, edge) in self.edges.iter().enumerate() {
            for (c, (a, n)) in self.columns.iter().enumerate() {
                let acc = self.cells[r][c]
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{edge},{a},{n},{acc},{},{},{}",
                    self.counts[r][c],
                    self.column_best(r, c),
                    self.row_best(r, c)
                );
            }
        }
        s
    }
}

/// Averages per-dataset best-of-seeds accuracies into the table layout.
pub fn build_table(summaries: &[CellSummary], scope: &TableScope) -> Result<ResultTable> {
    let selected: Vec<&CellSummary> = summaries
        .iter()
        .filter(|s| scope.includes(&s.key.dataset))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!("no results for {scope:?}")));
    }
    let mut sums: BTreeMap<(EdgeKind, Architecture, NodeKind), (f64, usize)> = BTreeMap::new();
    for s in &selected {
        let e = sums
            .entry((s.key.edge_kind, s.key.architecture, s.key.node_kind))
            .or_default();
        e.0 += 100.0 * s.best_accuracy;
        e.1 += 1;
    }
    let edges: Vec<EdgeKind> = EdgeKind::ALL
        .into_iter()
        .filter(|e| sums.keys().any(|k| k.0 == *e))
        .collect();
    let mut columns = Vec::new();
    for a in ARCHITECTURE_ORDER {
        for n in NodeKind::ALL {
            if sums.keys().any(|k| k.1 == a && k.2 == n) {
                columns.push((a, n));
            }
        }
    }
    let mut cells = vec![vec![None; columns.len()]; edges.len()];
    let mut counts = vec![vec![0; columns.len()]; edges.len()];
    for (r, e) in edges.iter().enumerate() {
        for (c, (a, n)) in columns.iter().enumerate() {
            if let Some((sum, k)) = sums.get(&(*e, *a, *n)) {
                cells[r][c] = Some(sum / *k as f64);
                counts[r][c] = *k;
            }
        }
    }
    Ok(ResultTable {
        edges,
        columns,
        cells,
        counts,
    })
}
