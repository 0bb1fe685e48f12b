//! Post-estimation analysis of fitted models: elasticities, substitution
//! curves, and averaging over an ensemble of top models.

mod elasticity;
mod ensemble;
mod substitution;

pub use elasticity::{
    elasticity, elasticity_autodiff, elasticity_row, elasticity_table, ElasticityCell,
    ElasticityOptions, ElasticityTable, EvaluationPoint,
};
pub use ensemble::{ensemble_curves, ensemble_tables, total_variation};
pub use substitution::{alternative_pairs, linear_grid, substitution_curve, SubstitutionCurve};
