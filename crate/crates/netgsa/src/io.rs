//! Plain-text ingestion and emission.
//!
//! Expression data travels as TSV with a gene-identifier header row and one
//! sample per subsequent row; gene sets use the GMT convention (set name,
//! description, then gene identifiers, tab-separated). All emitters produce
//! deterministic byte-for-byte output for fixed inputs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gsa::{GeneSetCollection, GeneSetResultRow, SetNetworks};
use crate::simulation::MetricsReport;
use crate::types::ExpressionMatrix;

/// Parse an expression matrix: first row gene identifiers, one sample per
/// subsequent row. Errors carry 1-based line numbers.
pub fn ingest_expression(path: &Path) -> Result<ExpressionMatrix> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: display.clone(),
        line,
        detail,
    };

    let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(parse_err(1, "empty file".into()));
    }

    let header: Vec<String> = lines[0].split('\t').map(|c| c.trim().to_string()).collect();
    let d = header.len();
    let mut seen = std::collections::BTreeSet::new();
    for (k, id) in header.iter().enumerate() {
        if id.is_empty() {
            return Err(parse_err(1, format!("header column {} is blank", k + 1)));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateGene { id: id.clone() });
        }
    }
    if lines.len() == 1 {
        return Err(parse_err(1, "no sample rows after the header".into()));
    }

    let n = lines.len() - 1;
    let mut data = Array2::<f64>::zeros((n, d));
    for (i, line) in lines[1..].iter().enumerate() {
        let line_no = i + 2;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != d {
            return Err(parse_err(
                line_no,
                format!("expected {d} columns, found {}", cells.len()),
            ));
        }
        for (j, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(parse_err(
                    line_no,
                    format!("blank cell in column {} ({})", j + 1, header[j]),
                ));
            }
            let value: f64 = cell.parse().map_err(|_| {
                parse_err(
                    line_no,
                    format!("cannot parse {cell:?} in column {} ({})", j + 1, header[j]),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    line_no,
                    format!("non-finite value {cell:?} in column {} ({})", j + 1, header[j]),
                ));
            }
            data[[i, j]] = value;
        }
    }
    ExpressionMatrix::new(data, header)
}

/// Parse a GMT gene-set file against an expression gene panel. Identifiers
/// absent from the panel are dropped with a per-set warning; sets falling
/// below `min_set_size` after dropping are excluded.
pub fn ingest_genesets(
    path: &Path,
    gene_ids: &[String],
    min_set_size: usize,
) -> Result<GeneSetCollection> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let index: HashMap<&str, usize> = gene_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut sets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or("").trim();
        if name.is_empty() {
            return Err(Error::Parse {
                path: display.clone(),
                line: i + 1,
                detail: "gene-set line with no name".into(),
            });
        }
        let _description = fields.next();
        let mut columns = Vec::new();
        let mut unknown = 0usize;
        for id in fields {
            let id = id.trim();
            if id.is_empty() {
                continue;
            }
            match index.get(id) {
                Some(&c) => columns.push(c),
                None => unknown += 1,
            }
        }
        if unknown > 0 {
            log::warn!("gene-set {name}: dropped {unknown} identifiers not in the expression panel");
        }
        sets.push((name.to_string(), columns));
    }
    if sets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "gene-set file {display} contains no sets"
        )));
    }
    GeneSetCollection::new(sets, gene_ids.len(), min_set_size)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6e}"))
}

/// Results table: one row per gene set, in the given order.
pub fn render_results(rows: &[GeneSetResultRow]) -> String {
    let mut out = String::from("geneset\tsize\tp_net_median\tp_classic\tp_combined\tfailed_splits\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            row.name,
            row.size,
            fmt_opt(row.p_net_median),
            fmt_opt(row.p_classic),
            fmt_opt(row.p_combined),
            row.failed_splits
        );
    }
    out
}

/// Metrics table: one row per evaluated method. Wall-clock seconds are
/// appended only on request, keeping the default output reproducible.
pub fn render_metrics(reports: &[MetricsReport], timing: bool) -> String {
    let mut out = String::from(
        "method\truns\tpower\tscreening_rate\tsparsity_mean\tfdr_at_level\ttpr_at_level\tfailures",
    );
    if timing {
        out.push_str("\tcpu_seconds");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method,
            r.runs,
            fmt_opt(Some(r.power)),
            fmt_opt(r.screening_rate),
            fmt_opt(r.sparsity_mean),
            fmt_opt(r.fdr_at_level),
            fmt_opt(r.tpr_at_level),
            r.failures
        );
        if timing {
            let _ = write!(out, "\t{:.6e}", r.cpu_seconds);
        }
        out.push('\n');
    }
    out
}

/// Averaged ROC curves, long format: one row per (method, point).
pub fn render_roc(reports: &[MetricsReport]) -> String {
    let mut out = String::from("method\tfpr\ttpr\n");
    for r in reports {
        if let Some(roc) = &r.roc {
            for (fpr, tpr) in roc {
                let _ = writeln!(out, "{}\t{fpr:.6e}\t{tpr:.6e}", r.method);
            }
        }
    }
    out
}

/// Per-run decisions at the 5% level, long format. `labels` names the
/// hypotheses (one per column of the decision matrices).
pub fn render_decisions(reports: &[MetricsReport], labels: &[String]) -> String {
    let mut out = String::from("method\trun\thypothesis\trejected\n");
    for r in reports {
        for (run, decisions) in r.rejections.iter().enumerate() {
            for (s, &rejected) in decisions.iter().enumerate() {
                let label = labels.get(s).map_or("?", |l| l.as_str());
                let _ = writeln!(out, "{}\t{run}\t{label}\t{}", r.method, u8::from(rejected));
            }
        }
    }
    out
}

/// One condition's median network for a set: gene-id header plus a numeric
/// matrix of absolute partial correlations.
pub fn render_network(matrix: &Array2<f64>, gene_ids: &[String]) -> String {
    let mut out = gene_ids.join("\t");
    out.push('\n');
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            if j > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{:.6e}", matrix[[i, j]]);
        }
        out.push('\n');
    }
    out
}

/// The gene identifiers covered by a named set, for network emission.
pub fn set_gene_ids(
    networks: &SetNetworks,
    sets: &GeneSetCollection,
    gene_ids: &[String],
) -> Vec<String> {
    sets.sets()
        .iter()
        .find(|s| s.name == networks.name)
        .map(|s| s.columns.iter().map(|&c| gene_ids[c].clone()).collect())
        .unwrap_or_default()
}

/// Backtest table: one row per probed set.
pub fn render_backtest(
    names: &[String],
    p_net: &[Option<f64>],
    counts: &[usize],
    repeats: usize,
) -> String {
    let mut out = String::from("geneset\tp_net_median\tbacktest_rejections\trepeats\n");
    for ((name, p), count) in names.iter().zip(p_net).zip(counts) {
        let _ = writeln!(out, "{name}\t{}\t{count}\t{repeats}", fmt_opt(*p));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsa::DEFAULT_MIN_SET_SIZE;

    fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("netgsa-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn expression_roundtrip() {
        let path = write_temp("ok.tsv", "g1\tg2\n1.0\t2.0\n3.0\t4.0\n-0.5\t6e-1\n");
        let m = ingest_expression(&path).unwrap();
        assert_eq!(m.n_samples(), 3);
        assert_eq!(m.n_genes(), 2);
        assert_eq!(m.gene_ids(), &["g1".to_string(), "g2".to_string()]);
        assert_eq!(m.data()[[2, 1]], 0.6);
    }

    #[test]
    fn expression_duplicate_header() {
        let path = write_temp("dup.tsv", "TP53\tTP53\n1.0\t2.0\n");
        let err = ingest_expression(&path).unwrap_err();
        assert!(err.to_string().contains("TP53"), "{err}");
    }

    #[test]
    fn expression_blank_cell_cites_line() {
        let path = write_temp("blank.tsv", "g1\tg2\n1.0\t2.0\n3.0\t4.0\n5.0\t\n");
        let err = ingest_expression(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":4:"), "{msg}");
        assert!(msg.contains("blank"), "{msg}");
    }

    #[test]
    fn expression_ragged_and_non_numeric() {
        let ragged = write_temp("ragged.tsv", "g1\tg2\n1.0\n");
        let err = ingest_expression(&ragged).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");

        let text = write_temp("text.tsv", "g1\tg2\n1.0\thello\n");
        let err = ingest_expression(&text).unwrap_err();
        assert!(err.to_string().contains("hello"), "{err}");

        let nan = write_temp("nan.tsv", "g1\tg2\n1.0\tNaN\n");
        assert!(ingest_expression(&nan).is_err());

        let empty = write_temp("empty.tsv", "");
        assert!(ingest_expression(&empty).is_err());
    }

    #[test]
    fn genesets_resolution_and_exclusion() {
        let ids: Vec<String> = (1..=5).map(|i| format!("G{i}")).collect();
        let path = write_temp(
            "sets.gmt",
            "SETA\tdesc\tG1\tG2\tG3\tG4\tG5\nSETB\tdesc\tG1\tG2\tG3\tG4\tG9\n",
        );
        let sets = ingest_genesets(&path, &ids, DEFAULT_MIN_SET_SIZE).unwrap();
        // SETB drops unknown G9 and falls below the size floor.
        assert_eq!(sets.len(), 1);
        assert_eq!(sets.sets()[0].name, "SETA");
        assert_eq!(sets.sets()[0].columns, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn genesets_duplicate_name_and_empty_file() {
        let ids: Vec<String> = (1..=5).map(|i| format!("G{i}")).collect();
        let dup = write_temp(
            "dupsets.gmt",
            "SETA\tdesc\tG1\tG2\tG3\tG4\tG5\nSETA\tdesc\tG1\tG2\tG3\tG4\tG5\n",
        );
        assert!(ingest_genesets(&dup, &ids, 5).is_err());

        let empty = write_temp("emptysets.gmt", "\n\n");
        assert!(ingest_genesets(&empty, &ids, 5).is_err());
    }

    #[test]
    fn results_table_formats_missing_values() {
        let rows = vec![
            GeneSetResultRow {
                name: "a".into(),
                size: 8,
                p_net_median: Some(0.0123456789),
                p_classic: None,
                p_combined: None,
                failed_splits: 0,
            },
            GeneSetResultRow {
                name: "b".into(),
                size: 6,
                p_net_median: None,
                p_classic: Some(0.5),
                p_combined: Some(0.5),
                failed_splits: 3,
            },
        ];
        let table = render_results(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(
            lines[0],
            "geneset\tsize\tp_net_median\tp_classic\tp_combined\tfailed_splits"
        );
        assert_eq!(lines[1], "a\t8\t1.234568e-2\tNA\tNA\t0");
        assert_eq!(lines[2], "b\t6\tNA\t5.000000e-1\t5.000000e-1\t3");
    }

    #[test]
    fn network_table_shape() {
        let m = Array2::from_shape_fn((2, 2), |(i, j)| (i + j) as f64 / 10.0);
        let table = render_network(&m, &["x".into(), "y".into()]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "x\ty");
        assert_eq!(lines[1], "0.000000e0\t1.000000e-1");
    }
}
