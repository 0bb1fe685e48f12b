use serde::{Deserialize, Serialize};

use crate::data::ChoiceDataset;
use crate::engine::NestGnn;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Choice probabilities and pairwise probability ratios along a sweep of one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionCurve {
    pub variable: String,
    pub alternatives: Vec<String>,
    pub grid: Vec<f64>,
    /// `probabilities[g][i]`: alternative `i` at grid point `g`.
    pub probabilities: Vec<Vec<f64>>,
    /// Alternative pairs `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// `ratios[g][k]`: `P_i / P_j` for `pairs[k]` at grid point `g`.
    pub ratios: Vec<Vec<f64>>,
    /// Raw observation the sweep starts from.
    pub base: Vec<f64>,
    /// Grid values outside the range seen in training.
    pub out_of_range: Vec<f64>,
}

impl SubstitutionCurve {
    /// Probability of alternative `i` along the grid.
    pub fn probability_series(&self, i: usize) -> Vec<f64> {
        self.probabilities.iter().map(|p| p[i]).collect()
    }

    /// `P_i / P_j` along the grid, for any ordered pair.
    pub fn ratio_series(&self, i: usize, j: usize) -> Option<Vec<f64>> {
        if let Some(k) = self.pairs.iter().position(|&p| p == (i, j)) {
            return Some(self.ratios.iter().map(|r| r[k]).collect());
        }
        let k = self.pairs.iter().position(|&p| p == (j, i))?;
        Some(self.ratios.iter().map(|r| 1.0 / r[k]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec![self.variable.clone()];
        header.extend(self.alternatives.iter().map(|a| format!("P({a})")));
        header.extend(
            self.pairs
                .iter()
                .map(|&(i, j)| format!("{}/{}", self.alternatives[i], self.alternatives[j])),
        );
        w.write_record(&header)?;
        for (g, x) in self.grid.iter().enumerate() {
            let mut rec = vec![x.to_string()];
            rec.extend(self.probabilities[g].iter().map(f64::to_string));
            rec.extend(self.ratios[g].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// All pairs `(i, j)` with `i < j`.
pub fn alternative_pairs(j: usize) -> Vec<(usize, usize)> {
    (0..j).flat_map(|a| (a + 1..j).map(move |b| (a, b))).collect()
}

/// Sweeps `variable` over `grid` from the `base` raw observation (normally
/// the training split's raw means). `data` supplies the schema and the
/// standardizer.
pub fn substitution_curve<T: Scalar>(
    model: &NestGnn<T>,
    data: &ChoiceDataset,
    variable: &str,
    grid: &[f64],
    base: &[f64],
) -> Result<SubstitutionCurve> {
    let var = data.schema().variable(variable)?;
    let col = data
        .column_index(&var.column)
        .ok_or_else(|| Error::usage(format!("column `{}` missing from dataset", var.column)))?;
    if grid.is_empty() {
        return Err(Error::usage("substitution grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::usage("substitution grid must be finite and strictly increasing"));
    }
    if base.len() != data.columns().len() {
        return Err(Error::shape("substitution-base", &[data.columns().len()], &[base.len()]));
    }
    let out_of_range: Vec<f64> = match data.standardizer() {
        Some(st) => {
            let s = &st.stats[col];
            grid.iter().copied().filter(|&x| x < s.min || x > s.max).collect()
        }
        None => Vec::new(),
    };
    if !out_of_range.is_empty() {
        log::warn!(
            "{} of {} grid values for `{variable}` lie outside the training range",
            out_of_range.len(),
            grid.len()
        );
    }
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .map(|&x| {
            let mut r = base.to_vec();
            r[col] = x;
            r
        })
        .collect();
    let p = model.probabilities(&data.batch_from_raw::<T>(&rows, &vec![0; rows.len()])?)?;
    let j = data.schema().num_alternatives();
    let pairs = alternative_pairs(j);
    let probabilities: Vec<Vec<f64>> = (0..rows.len())
        .map(|g| p.row(g).iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    let ratios = probabilities
        .iter()
        .map(|pg| pairs.iter().map(|&(a, b)| pg[a] / pg[b]).collect())
        .collect();
    Ok(SubstitutionCurve {
        variable: var.name,
        alternatives: data.schema().alternatives.clone(),
        grid: grid.to_vec(),
        probabilities,
        pairs,
        ratios,
        base: base.to_vec(),
        out_of_range,
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::usage("grid needs at least one point")),
        1 => Ok(vec![lo]),
        _ if !(hi > lo) => Err(Error::usage(format!("grid bounds {lo}..{hi} are not increasing"))),
        _ => Ok((0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_and_grid() {
        assert_eq!(alternative_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(alternative_pairs(4).len(), 6);
        assert_eq!(linear_grid(0.0, 1.0, 5).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linear_grid(2.0, 2.0, 1).unwrap(), vec![2.0]);
        assert!(linear_grid(1.0, 0.0, 3).is_err());
    }
}
