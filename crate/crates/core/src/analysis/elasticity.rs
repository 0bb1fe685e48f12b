use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::softmax;
use crate::autodiff::{Tape, Tensor};
use crate::data::{ChoiceDataset, Variable};
use crate::engine::NestGnn;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where elasticities are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationPoint {
    /// Every observation of the split at its observed values.
    #[default]
    PerObservation,
    /// One synthetic observation at the split's raw means.
    AtMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityOptions {
    /// Central-difference step relative to the variable's raw value.
    pub relative_step: f64,
    pub point: EvaluationPoint,
}

impl Default for ElasticityOptions {
    fn default() -> Self {
        Self {
            relative_step: 1e-3,
            point: EvaluationPoint::PerObservation,
        }
    }
}

/// Mean and sample standard deviation of point elasticities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityCell {
    pub mean: f64,
    pub std: f64,
    /// Observations contributing (zero-valued ones are excluded).
    pub n: usize,
}

impl ElasticityCell {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

/// Rows are swept variables, columns are alternatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityTable {
    pub variables: Vec<String>,
    pub alternatives: Vec<String>,
    pub cells: Vec<Vec<ElasticityCell>>,
}

impl ElasticityTable {
    pub fn cell(&self, variable: &str, alternative: usize) -> Option<&ElasticityCell> {
        let r = self.variables.iter().position(|v| v == variable)?;
        self.cells[r].get(alternative)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["variable".to_string()];
        for a in &self.alternatives {
            header.push(format!("{a}_mean"));
            header.push(format!("{a}_std"));
        }
        w.write_record(&header)?;
        for (v, row) in self.variables.iter().zip(&self.cells) {
            let mut rec = vec![v.clone()];
            for c in row {
                rec.push(c.mean.to_string());
                rec.push(c.std.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `mean (std)` grid for terminals.
    pub fn pretty(&self) -> String {
        let width = self.variables.iter().map(String::len).max().unwrap_or(8).max(8);
        let mut s = format!("{:<width$}", "");
        for a in &self.alternatives {
            s += &format!(" {a:>18}");
        }
        s.push('\n');
        for (v, row) in self.variables.iter().zip(&self.cells) {
            s += &format!("{v:<width$}");
            for c in row {
                s += &format!(" {:>18}", format!("{:.3} ({:.3})", c.mean, c.std));
            }
            s.push('\n');
        }
        s
    }
}

fn evaluation_rows(data: &ChoiceDataset, point: EvaluationPoint) -> Vec<Vec<f64>> {
    match point {
        EvaluationPoint::PerObservation => data.raw_rows().to_vec(),
        EvaluationPoint::AtMean => vec![data.raw_means()],
    }
}

fn probabilities<T: Scalar>(model: &NestGnn<T>, data: &ChoiceDataset, rows: &[Vec<f64>]) -> Result<Tensor<T>> {
    let labels = vec![0; rows.len()];
    model.probabilities(&data.batch_from_raw::<T>(rows, &labels)?)
}

fn resolve(data: &ChoiceDataset, variable: &str) -> Result<(Variable, usize)> {
    let var = data.schema().variable(variable)?;
    let col = data
        .column_index(&var.column)
        .ok_or_else(|| Error::usage(format!("column `{}` missing from dataset", var.column)))?;
    Ok((var, col))
}

/// Point elasticities of every alternative's probability with respect to
/// one raw variable, by central finite difference.
pub fn elasticity_row<T: Scalar>(
    model: &NestGnn<T>,
    data: &ChoiceDataset,
    variable: &str,
    opts: &ElasticityOptions,
) -> Result<Vec<ElasticityCell>> {
    let (_, col) = resolve(data, variable)?;
    if !(opts.relative_step > 0.0) {
        return Err(Error::usage("relative step must be positive"));
    }
    let rows: Vec<Vec<f64>> = evaluation_rows(data, opts.point)
        .into_iter()
        .filter(|r| r[col] != 0.0)
        .collect();
    let j = data.schema().num_alternatives();
    if rows.is_empty() {
        return Ok(vec![ElasticityCell::from_values(&[]); j]);
    }
    let shifted = |sign: f64| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut r = r.clone();
                r[col] += sign * opts.relative_step * r[col].abs();
                r
            })
            .collect()
    };
    let p0 = probabilities(model, data, &rows)?;
    let plus = probabilities(model, data, &shifted(1.0))?;
    let minus = probabilities(model, data, &shifted(-1.0))?;
    Ok((0..j)
        .map(|i| {
            let values: Vec<f64> = rows
                .iter()
                .enumerate()
                .map(|(n, r)| {
                    let v = r[col];
                    let h = opts.relative_step * v.abs();
                    let dp = (plus.at(n, i) - minus.at(n, i)).to_f64_lossy() / (2.0 * h);
                    dp * v / p0.at(n, i).to_f64_lossy()
                })
                .collect();
            ElasticityCell::from_values(&values)
        })
        .collect())
}

/// Elasticity of alternative `alternative`'s probability with respect to `variable`.
pub fn elasticity<T: Scalar>(
    model: &NestGnn<T>,
    data: &ChoiceDataset,
    variable: &str,
    alternative: usize,
    opts: &ElasticityOptions,
) -> Result<ElasticityCell> {
    let j = data.schema().num_alternatives();
    if alternative >= j {
        return Err(Error::usage(format!("alternative {alternative} out of range for {j}")));
    }
    Ok(elasticity_row(model, data, variable, opts)?[alternative])
}

/// Every alternative-specific variable against every alternative.
pub fn elasticity_table<T: Scalar>(
    model: &NestGnn<T>,
    data: &ChoiceDataset,
    opts: &ElasticityOptions,
) -> Result<ElasticityTable> {
    let variables: Vec<String> = data.schema().variables().into_iter().map(|v| v.name).collect();
    let cells = variables
        .iter()
        .map(|v| elasticity_row(model, data, v, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ElasticityTable {
        variables,
        alternatives: data.schema().alternatives.clone(),
        cells,
    })
}

/// Per-observation elasticities from the exact gradient of the probability,
/// for cross-checking the finite-difference path.
pub fn elasticity_autodiff<T: Scalar>(
    model: &NestGnn<T>,
    data: &ChoiceDataset,
    variable: &str,
    alternative: usize,
    point: EvaluationPoint,
) -> Result<Vec<f64>> {
    let (var, col) = resolve(data, variable)?;
    let rows: Vec<Vec<f64>> = evaluation_rows(data, point)
        .into_iter()
        .filter(|r| r[col] != 0.0)
        .collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let slope = data.standardizer().map_or(1.0, |s| s.slope(col));
    let batch = data.batch_from_raw::<T>(&rows, &vec![0; rows.len()])?;
    let mut tape = Tape::new();
    let rec = model.record(&mut tape, &batch)?;
    let p = tape.softmax(rec.utilities);
    let picked = tape.pick(p, &vec![alternative; rows.len()])?;
    let total = tape.sum(picked);
    let probs = softmax(tape.value(rec.utilities));
    let grads = tape.backward(total)?;
    let x = rec.features[var.alternative];
    let g = grads.get_or_zero(x, tape.value(x).shape());
    Ok(rows
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let dp = g.at(n, var.slot).to_f64_lossy() * slope;
            dp * r[col] / probs.at(n, alternative).to_f64_lossy()
        })
        .collect())
}
