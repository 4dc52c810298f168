//! Grid execution over datasets and graph constructions, result tables and
//! exports.

mod config;
mod export;
mod grid;
mod table;

pub use config::{BenchConfig, GridSpec, DATA_ROOT_ENV};
pub use export::{
    edge_weights, export_edge_viz, features_csv, matrix_csv, matrix_pgm, zero_diagonal,
};
pub use grid::{
    load_records, record_path, run_grid, summarize, write_atomic, CellKey, CellSummary,
    GridOutcome, RunRecord,
};
pub use table::{build_table, ResultTable, TableScope, ARCHITECTURE_ORDER};
