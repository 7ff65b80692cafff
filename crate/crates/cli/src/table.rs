use std::path::Path;

use swinseg_metrics::MetricsReport;

use crate::error::{io_err, Result};

/// The one table writer every experiment goes through: identical schema,
/// CSV plus aligned plain text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

impl Table {
    /// Standard four-metric table from evaluation reports.
    pub fn from_metrics(title: &str, rows: &[(String, MetricsReport)]) -> Table {
        Table {
            title: title.to_string(),
            columns: ["dsc", "mpa", "miou", "hd"].map(String::from).to_vec(),
            rows: rows
                .iter()
                .map(|(label, r)| {
                    (
                        label.clone(),
                        vec![
                            format!("{:.6}", r.dice),
                            format!("{:.6}", r.mpa),
                            format!("{:.6}", r.miou),
                            format!("{:.4}", r.hausdorff),
                        ],
                    )
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, values) in &self.rows {
            out.push_str(&format!("\"{}\"", label.replace('"', "\"\"")));
            for v in values {
                out.push(',');
                out.push_str(v);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let label_width = self
            .rows
            .iter()
            .map(|(l, _)| l.len())
            .chain([3])
            .max()
            .unwrap();
        let col_widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.rows
                    .iter()
                    .map(|(_, v)| v[i].len())
                    .chain([c.len()])
                    .max()
                    .unwrap()
            })
            .collect();
        let mut out = format!("{}\n", self.title);
        out.push_str(&format!("{:<label_width$}", "row"));
        for (c, w) in self.columns.iter().zip(&col_widths) {
            out.push_str(&format!("  {:>w$}", c, w = w));
        }
        out.push('\n');
        for (label, values) in &self.rows {
            out.push_str(&format!("{:<label_width$}", label));
            for (v, w) in values.iter().zip(&col_widths) {
                out.push_str(&format!("  {:>w$}", v, w = w));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.txt` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(io_err(&csv))?;
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.to_text()).map_err(io_err(&txt))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use swinseg_metrics::{evaluate, AggregationPolicy};

    #[test]
    fn four_metric_schema_and_alignment() {
        let mask = [0u8, 1, 1, 0];
        let r = evaluate(&mask, &mask, (2, 2), 2, AggregationPolicy::default()).unwrap();
        let t = Table::from_metrics("demo", &[("a".to_string(), r.clone()), ("bb".to_string(), r)]);
        assert_eq!(t.columns, ["dsc", "mpa", "miou", "hd"]);
        let csv = t.to_csv();
        assert!(csv.starts_with("row,dsc,mpa,miou,hd\n"));
        assert_eq!(csv.lines().count(), 3);
        let text = t.to_text();
        assert!(text.contains("demo"));
        assert_eq!(text.lines().count(), 4);
    }
}
