//! The evaluation table: one row per image and metric, one column per
//! method, plus averages.

use std::fmt;

use anyhow::Result;
use sparse_sr::MetricReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    Bicubic,
    Joint,
    Decoupled,
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Column::Bicubic => "Bicubic",
            Column::Joint => "Joint",
            Column::Decoupled => "Decoupled",
        })
    }
}

/// Formats a value to 4 decimals; infinite PSNR prints as `inf`.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub struct MetricTable {
    columns: Vec<Column>,
    rows: Vec<(String, Vec<MetricReport>)>,
}

impl MetricTable {
    pub fn new(columns: Vec<Column>) -> Self {
        MetricTable { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, image: String, reports: Vec<MetricReport>) {
        assert_eq!(reports.len(), self.columns.len());
        self.rows.push((image, reports));
    }

    fn averages(&self) -> Vec<(f64, f64)> {
        let n = self.rows.len().max(1) as f64;
        (0..self.columns.len())
            .map(|c| {
                let psnr: f64 = self.rows.iter().map(|(_, r)| r[c].psnr_db).sum();
                let ssim: f64 = self.rows.iter().map(|(_, r)| r[c].ssim).sum();
                (psnr / n, ssim / n)
            })
            .collect()
    }

    /// Body cells as strings, header excluded.
    fn cells(&self) -> Vec<Vec<String>> {
        let mut out = Vec::with_capacity(2 * self.rows.len() + 2);
        for (name, reports) in &self.rows {
            let mut psnr = vec![name.clone(), "PSNR".to_string()];
            psnr.extend(reports.iter().map(|r| format_value(r.psnr_db)));
            let mut ssim = vec![name.clone(), "SSIM".to_string()];
            ssim.extend(reports.iter().map(|r| format_value(r.ssim)));
            out.push(psnr);
            out.push(ssim);
        }
        let avg = self.averages();
        let mut psnr = vec!["Average".to_string(), "PSNR".to_string()];
        psnr.extend(avg.iter().map(|a| format_value(a.0)));
        let mut ssim = vec!["Average".to_string(), "SSIM".to_string()];
        ssim.extend(avg.iter().map(|a| format_value(a.1)));
        out.push(psnr);
        out.push(ssim);
        out
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["image".to_string(), "metric".to_string()];
        h.extend(self.columns.iter().map(|c| c.to_string()));
        h
    }

    pub fn to_text(&self) -> String {
        let header = self.header();
        let cells = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| cells.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |row: &[String]| {
            let mut s = String::new();
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                if i < 2 {
                    s.push_str(&format!("{cell:<w$}", w = widths[i]));
                } else {
                    s.push_str(&format!("{cell:>w$}", w = widths[i]));
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        for row in &cells {
            out.push_str(&line(row));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for row in self.cells() {
            w.write_record(&row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}
