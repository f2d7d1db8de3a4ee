//! Result files: rows CSV, per-domain CSV, summaries with confidence
//! intervals and the ablation matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::grid::ResultRow;
use crate::{Error, Result};

pub const RESULTS_HEADER: [&str; 7] = [
    "dataset",
    "method",
    "n_given",
    "inter_steps",
    "seed",
    "target_acc",
    "runtime_ms",
];

pub const DOMAINS_HEADER: [&str; 8] = [
    "dataset",
    "method",
    "n_given",
    "inter_steps",
    "seed",
    "domain",
    "shift",
    "accuracy",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "dataset",
    "method",
    "n_given",
    "inter_steps",
    "n_seeds",
    "mean_pct",
    "sd_pct",
    "ci95_pct",
    "display",
];

/// How the confidence interval is computed; echoed into manifests.
pub const CI_METHOD: &str = "normal approximation: half-width = 1.96 * sample sd / sqrt(n_seeds)";

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Rows CSV with the fixed header. Runtimes are written only when `timing`
/// is set; otherwise the column holds 0 so reruns are byte-identical.
pub fn results_csv(rows: &[ResultRow], timing: bool) -> String {
    csv_text(
        &RESULTS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.method.name().to_string(),
                r.n_given.to_string(),
                r.inter_steps.to_string(),
                r.seed.to_string(),
                r.target_acc.to_string(),
                if timing { r.runtime_ms } else { 0 }.to_string(),
            ]
        }),
    )
}

/// Final-model accuracy on every training domain, one line per domain.
pub fn domains_csv(rows: &[ResultRow]) -> String {
    csv_text(
        &DOMAINS_HEADER,
        rows.iter().flat_map(|r| {
            r.domain_acc.iter().enumerate().map(move |(i, acc)| {
                vec![
                    r.dataset.clone(),
                    r.method.name().to_string(),
                    r.n_given.to_string(),
                    r.inter_steps.to_string(),
                    r.seed.to_string(),
                    i.to_string(),
                    r.shifts.get(i).map(f64::to_string).unwrap_or_default(),
                    acc.to_string(),
                ]
            })
        }),
    )
}

/// Reads a results CSV back into rows (per-domain fields left empty).
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let bad = |line: usize, detail: String| Error::config(format!("results line {line}"), detail);
    let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(bad(1, format!("expected header {}", RESULTS_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let num = |k: usize| -> Result<u64> {
            field(k)
                .parse()
                .map_err(|_| bad(line, format!("{} is not an integer: {:?}", RESULTS_HEADER[k], field(k))))
        };
        let method = Method::parse(field(1)).ok_or_else(|| bad(line, format!("unknown method {:?}", field(1))))?;
        let target_acc: f64 = field(5)
            .parse()
            .map_err(|_| bad(line, format!("target_acc is not a number: {:?}", field(5))))?;
        if !(0.0..=1.0).contains(&target_acc) {
            return Err(bad(line, format!("target_acc {target_acc} outside [0, 1]")));
        }
        rows.push(ResultRow {
            dataset: field(0).to_string(),
            method,
            n_given: num(2)? as usize,
            inter_steps: num(3)? as usize,
            seed: num(4)?,
            target_acc,
            domain_acc: Vec::new(),
            shifts: Vec::new(),
            runtime_ms: num(6)?,
            fingerprint: String::new(),
        });
    }
    Ok(rows)
}

/// Mean and 95% interval of one grid cell, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: Method,
    pub n_given: usize,
    pub inter_steps: usize,
    pub n_seeds: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
    pub half_width: f64,
}

impl SummaryRow {
    /// `"mean ± hw"` with one decimal; single-seed cells carry an `n=1` flag.
    pub fn display(&self) -> String {
        let base = format!("{:.1} ± {:.1}", self.mean, self.half_width);
        if self.n_seeds == 1 {
            format!("{base} (n=1)")
        } else {
            base
        }
    }
}

/// Groups rows by cell and computes mean, sample sd and the normal 95%
/// half-width `1.96·sd/√n`, all in percent. Pure: rows are not modified and
/// the output order is the cell order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(&str, Method, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((&r.dataset, r.method, r.n_given, r.inter_steps))
            .or_default()
            .push(100.0 * r.target_acc);
    }
    cells
        .into_iter()
        .map(|((dataset, method, n_given, inter_steps), v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                dataset: dataset.to_string(),
                method,
                n_given,
                inter_steps,
                n_seeds: v.len(),
                mean,
                sd,
                half_width: 1.96 * sd / n.sqrt(),
            }
        })
        .collect()
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    csv_text(
        &SUMMARY_HEADER,
        summary.iter().map(|s| {
            vec![
                s.dataset.clone(),
                s.method.name().to_string(),
                s.n_given.to_string(),
                s.inter_steps.to_string(),
                s.n_seeds.to_string(),
                format!("{:.4}", s.mean),
                format!("{:.4}", s.sd),
                format!("{:.4}", s.half_width),
                s.display(),
            ]
        }),
    )
}

pub fn summary_markdown(summary: &[SummaryRow]) -> String {
    let mut out = String::from("| dataset | method | n_given | inter_steps | seeds | target acc (%) |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for s in summary {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            s.dataset,
            s.method.name(),
            s.n_given,
            s.inter_steps,
            s.n_seeds,
            s.display()
        );
    }
    out
}

/// One method's `n_given × inter_steps` matrix of formatted cells; missing
/// cells read `n/a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub method: Method,
    pub n_given: Vec<usize>,
    pub inter_steps: Vec<usize>,
    /// `cells[i][j]` belongs to `n_given[i]`, `inter_steps[j]`.
    pub cells: Vec<Vec<String>>,
}

pub fn ablation_tables(
    summary: &[SummaryRow],
    methods: &[Method],
    n_given: &[usize],
    inter_steps: &[usize],
) -> Vec<AblationTable> {
    let mut methods = methods.to_vec();
    methods.sort();
    let mut n_given = n_given.to_vec();
    n_given.sort_unstable();
    let mut inter_steps = inter_steps.to_vec();
    inter_steps.sort_unstable();
    methods
        .into_iter()
        .map(|method| {
            let cells = n_given
                .iter()
                .map(|&ng| {
                    inter_steps
                        .iter()
                        .map(|&is| {
                            summary
                                .iter()
                                .find(|s| s.method == method && s.n_given == ng && s.inter_steps == is)
                                .map_or_else(|| "n/a".to_string(), SummaryRow::display)
                        })
                        .collect()
                })
                .collect();
            AblationTable {
                method,
                n_given: n_given.clone(),
                inter_steps: inter_steps.clone(),
                cells,
            }
        })
        .collect()
}

/// All tables in one CSV: `method,n_given,inter_steps=<s>…`.
pub fn ablation_csv(tables: &[AblationTable]) -> String {
    let Some(first) = tables.first() else {
        return csv_text(&["method", "n_given"], std::iter::empty());
    };
    let mut header = vec!["method".to_string(), "n_given".to_string()];
    header.extend(first.inter_steps.iter().map(|s| format!("inter_steps={s}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(
        &header,
        tables.iter().flat_map(|t| {
            t.n_given.iter().zip(&t.cells).map(move |(ng, row)| {
                let mut line = vec![t.method.name().to_string(), ng.to_string()];
                line.extend(row.iter().cloned());
                line
            })
        }),
    )
}

pub fn ablation_markdown(tables: &[AblationTable]) -> String {
    let mut out = String::new();
    for t in tables {
        let _ = writeln!(out, "### {}\n", t.method.name());
        out.push_str("| # given domains |");
        for s in &t.inter_steps {
            let _ = write!(out, " {s} inter |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(t.inter_steps.len()));
        out.push('\n');
        for (ng, row) in t.n_given.iter().zip(&t.cells) {
            let _ = write!(out, "| {ng} |");
            for c in row {
                let _ = write!(out, " {c} |");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
