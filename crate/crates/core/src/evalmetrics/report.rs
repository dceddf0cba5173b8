//! Aggregation of per-pair metrics and fixed-width table rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Metrics of one compared pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    /// Index of the real image in the evaluated test split.
    pub pair_id: usize,
    pub mae_sum: f64,
    pub mse: f64,
    /// `+inf` when the pair is identical.
    pub psnr_db: f64,
}

/// Mean and sample (n - 1) standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    /// Two-pass mean / sample SD; `None` for no values, SD 0 for one value.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, sd })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_label: String,
    pub n_samples: usize,
    pub mae: Option<Stat>,
    pub mse: Option<Stat>,
    /// Over finite PSNR values only.
    pub psnr: Option<Stat>,
    pub n_infinite_psnr: usize,
    /// Pixels per compared image, for the per-pixel MAE column.
    pub pixel_count: usize,
    pub samples: Vec<MetricSample>,
}

impl MetricsReport {
    pub fn from_samples(label: impl Into<String>, samples: Vec<MetricSample>, pixel_count: usize) -> Self {
        let col = |f: fn(&MetricSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        let finite_psnr: Vec<f64> = samples.iter().map(|s| s.psnr_db).filter(|p| p.is_finite()).collect();
        let n_infinite_psnr = samples.len() - finite_psnr.len();
        let label = label.into();
        if n_infinite_psnr > 0 {
            log::warn!("{label}: {n_infinite_psnr} of {} pairs are identical (infinite PSNR) and are left out of the PSNR mean", samples.len());
        }
        Self {
            model_label: label,
            n_samples: samples.len(),
            mae: Stat::of(&col(|s| s.mae_sum)),
            mse: Stat::of(&col(|s| s.mse)),
            psnr: Stat::of(&finite_psnr),
            n_infinite_psnr,
            pixel_count,
            samples,
        }
    }

    /// A report carrying only summary statistics (no per-pair samples).
    pub fn from_summary(label: impl Into<String>, n: usize, mae: Stat, mse: Stat, psnr: Stat, pixel_count: usize) -> Self {
        Self {
            model_label: label.into(),
            n_samples: n,
            mae: Some(mae),
            mse: Some(mse),
            psnr: Some(psnr),
            n_infinite_psnr: 0,
            pixel_count,
            samples: Vec::new(),
        }
    }

    pub fn mae_mean_per_pixel(&self) -> Option<f64> {
        match (self.mae, self.pixel_count) {
            (Some(m), p) if p > 0 => Some(m.mean / p as f64),
            _ => None,
        }
    }
}

fn cell(stat: Option<Stat>, decimals: usize) -> String {
    stat.map(|s| format!("{:.*} ± {:.*}", decimals, s.mean, decimals, s.sd)).unwrap_or_default()
}

fn psnr_cell(r: &MetricsReport) -> String {
    match r.psnr {
        Some(_) => cell(r.psnr, 2),
        None if r.n_infinite_psnr > 0 => "inf".to_string(),
        None => String::new(),
    }
}

pub const CSV_HEADER: &str =
    "model,mae_mean,mae_sd,mse_mean,mse_sd,psnr_mean,psnr_sd,n,n_infinite_psnr,mae_mean_per_pixel";

/// Aligned text table (MAE and PSNR to 2 decimals, MSE to 5) and `report.csv` contents.
pub fn format_report(reports: &[MetricsReport]) -> (String, String) {
    let header = ["Model", "MAE ± SD", "MSE ± SD", "PSNR (dB) ± SD", "n"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| [r.model_label.clone(), cell(r.mae, 2), cell(r.mse, 5), psnr_cell(r), r.n_samples.to_string()])
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            s.extend(std::iter::repeat_n(' ', w - c.chars().count()));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut text = line(&header.map(String::from));
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    text.push_str(&"-".repeat(total));
    text.push('\n');
    for row in &rows {
        text.push_str(&line(row));
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let label = if r.model_label.contains([',', '"', '\n']) {
            format!("\"{}\"", r.model_label.replace('"', "\"\""))
        } else {
            r.model_label.clone()
        };
        let _ = writeln!(
            csv,
            "{label},{},{},{},{},{},{},{},{},{}",
            num(r.mae.map(|s| s.mean)),
            num(r.mae.map(|s| s.sd)),
            num(r.mse.map(|s| s.mean)),
            num(r.mse.map(|s| s.sd)),
            num(r.psnr.map(|s| s.mean)),
            num(r.psnr.map(|s| s.sd)),
            r.n_samples,
            r.n_infinite_psnr,
            num(r.mae_mean_per_pixel()),
        );
    }
    (text, csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd_uses_n_minus_one() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).unwrap().sd, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn single_report_is_header_rule_and_one_row() {
        let r = MetricsReport::from_samples(
            "m",
            vec![MetricSample { pair_id: 0, mae_sum: 1.0, mse: 0.01, psnr_db: 20.0 }],
            4,
        );
        let (text, csv) = format_report(&[r]);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("m,1,0,0.01,0,20,0,1,0,0.25"));
    }

    #[test]
    fn empty_report_renders_blanks() {
        let r = MetricsReport::from_samples("empty", vec![], 0);
        let (text, csv) = format_report(&[r]);
        assert!(text.lines().nth(2).unwrap().starts_with("empty"));
        assert_eq!(csv.lines().nth(1).unwrap(), "empty,,,,,,,0,0,");
    }

    #[test]
    fn all_identical_pairs() {
        let samples = (0..3).map(|i| MetricSample { pair_id: i, mae_sum: 0.0, mse: 0.0, psnr_db: f64::INFINITY }).collect();
        let r = MetricsReport::from_samples("id", samples, 16);
        assert_eq!(r.n_infinite_psnr, 3);
        assert!(r.psnr.is_none());
        assert!(format_report(&[r]).0.contains("inf"));
    }
}
