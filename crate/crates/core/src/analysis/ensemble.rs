use super::elasticity::{ElasticityCell, ElasticityTable};
use super::substitution::SubstitutionCurve;
use crate::error::{Error, Result};

/// Sum of absolute successive differences.
pub fn total_variation(series: &[f64]) -> f64 {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

fn mean_of(values: impl Iterator<Item = f64>, k: usize) -> f64 {
    values.sum::<f64>() / k as f64
}

/// Pointwise mean of member curves. Ratios are averaged as ratios, not
/// recomputed from the averaged probabilities.
pub fn ensemble_curves(curves: &[SubstitutionCurve]) -> Result<SubstitutionCurve> {
    let first = curves.first().ok_or_else(|| Error::usage("ensemble needs at least one curve"))?;
    for c in &curves[1..] {
        if c.variable != first.variable
            || c.alternatives != first.alternatives
            || c.grid != first.grid
            || c.pairs != first.pairs
        {
            return Err(Error::usage(
                "ensemble members differ in variable, alternatives, or grid",
            ));
        }
    }
    let k = curves.len();
    let g = first.grid.len();
    let probabilities = (0..g)
        .map(|p| {
            (0..first.alternatives.len())
                .map(|i| mean_of(curves.iter().map(|c| c.probabilities[p][i]), k))
                .collect()
        })
        .collect();
    let ratios = (0..g)
        .map(|p| {
            (0..first.pairs.len())
                .map(|r| mean_of(curves.iter().map(|c| c.ratios[p][r]), k))
                .collect()
        })
        .collect();
    Ok(SubstitutionCurve {
        probabilities,
        ratios,
        ..first.clone()
    })
}

/// Cell-wise mean of member tables (means and standard deviations alike).
pub fn ensemble_tables(tables: &[ElasticityTable]) -> Result<ElasticityTable> {
    let first = tables.first().ok_or_else(|| Error::usage("ensemble needs at least one table"))?;
    if tables[1..]
        .iter()
        .any(|t| t.variables != first.variables || t.alternatives != first.alternatives)
    {
        return Err(Error::usage("ensemble members differ in variables or alternatives"));
    }
    let k = tables.len();
    let cells = (0..first.variables.len())
        .map(|r| {
            (0..first.alternatives.len())
                .map(|c| ElasticityCell {
                    mean: mean_of(tables.iter().map(|t| t.cells[r][c].mean), k),
                    std: mean_of(tables.iter().map(|t| t.cells[r][c].std), k),
                    n: tables.iter().map(|t| t.cells[r][c].n).min().unwrap_or(0),
                })
                .collect()
        })
        .collect();
    Ok(ElasticityTable {
        cells,
        ..first.clone()
    })
}
