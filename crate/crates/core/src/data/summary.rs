use serde::{Deserialize, Serialize};

use super::ChoiceDataset;
use crate::error::Result;

/// Descriptive statistics of one raw column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub column: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub choice_shares: Vec<(String, f64)>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(ds: &ChoiceDataset) -> Summary {
    let n = ds.len();
    let rows = ds
        .columns()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut v: Vec<f64> = ds.raw_rows().iter().map(|r| r[c]).collect();
            v.sort_by(f64::total_cmp);
            if v.is_empty() {
                return SummaryRow {
                    column: name.clone(),
                    count: 0,
                    mean: f64::NAN,
                    std: f64::NAN,
                    min: f64::NAN,
                    q25: f64::NAN,
                    median: f64::NAN,
                    q75: f64::NAN,
                    max: f64::NAN,
                };
            }
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                column: name.clone(),
                count: n,
                mean,
                std,
                min: v[0],
                q25: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q75: quantile(&v, 0.75),
                max: v[n - 1],
            }
        })
        .collect();
    let choice_shares = ds
        .schema()
        .alternatives
        .iter()
        .cloned()
        .zip(ds.choice_shares())
        .collect();
    Summary { rows, choice_shares }
}

impl Summary {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table for terminals.
    pub fn pretty(&self) -> String {
        let width = self.rows.iter().map(|r| r.column.len()).max().unwrap_or(6).max(6);
        let mut s = format!(
            "{:<width$} {:>7} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "column", "count", "mean", "std", "min", "25%", "50%", "75%", "max"
        );
        for r in &self.rows {
            s += &format!(
                "{:<width$} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                r.column, r.count, r.mean, r.std, r.min, r.q25, r.median, r.q75, r.max
            );
        }
        s += "choice shares:";
        for (name, share) in &self.choice_shares {
            s += &format!(" {name}={share:.4}");
        }
        s.push('\n');
        s
    }
}
