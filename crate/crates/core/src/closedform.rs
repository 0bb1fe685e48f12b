//! Closed-form multinomial and nested logit probabilities.
//!
//! All evaluators work in the log domain and exponentiate once at the end.
//! The two nested logit routes use different arithmetic on purpose: the
//! classical route multiplies a within-nest and a nest-choice probability,
//! the message-passing route normalizes `V_i/μ_k + (μ_k - 1)·I_k` directly.

use std::ops::Index;

use crate::altgraph::AlternativeGraph;
use crate::autodiff::tensor::log_sum_exp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Deterministic utility per alternative.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityVector<T>(Vec<T>);

impl<T: Scalar> UtilityVector<T> {
    pub fn new(v: Vec<T>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::usage("empty utility vector"));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("utility {i} is not finite")));
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Nest scale factors `μ_k`, ordered like [`AlternativeGraph::nest_labels`].
#[derive(Clone, Debug, PartialEq)]
pub struct NlScaleParams<T>(Vec<T>);

impl<T: Scalar> NlScaleParams<T> {
    pub fn new(mu: Vec<T>) -> Result<Self> {
        if let Some(k) = mu.iter().position(|&m| !(m > T::zero()) || !m.is_finite()) {
            return Err(Error::Domain(format!(
                "nest scale μ[{k}] = {} must be positive and finite",
                mu[k]
            )));
        }
        Ok(Self(mu))
    }

    pub fn ones(nests: usize) -> Self {
        Self(vec![T::one(); nests])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    /// Nest positions whose scale exceeds one, outside the range consistent
    /// with random utility maximization.
    pub fn rum_inconsistent(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&k| self.0[k] > T::one()).collect()
    }
}

/// Choice probabilities; strictly positive and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector<T>(Vec<T>);

impl<T: Scalar> ProbabilityVector<T> {
    /// Exponentiates normalized log-probabilities.
    pub fn from_log(log_p: &[T]) -> Self {
        Self(log_p.iter().map(|l| l.exp()).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T> Index<usize> for ProbabilityVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

fn check_nl_inputs<T: Scalar>(
    v: &UtilityVector<T>,
    g: &AlternativeGraph,
    mu: &NlScaleParams<T>,
) -> Result<()> {
    if v.len() != g.len() {
        return Err(Error::shape("nested-logit", &[v.len()], &[g.len()]));
    }
    if mu.0.len() != g.num_nests() {
        return Err(Error::config(format!(
            "{} scale factors for {} nests",
            mu.0.len(),
            g.num_nests()
        )));
    }
    Ok(())
}

/// Inclusive value `I_k = log Σ_{j∈B_k} exp(V_j/μ_k)` for each nest.
fn inclusive_values<T: Scalar>(v: &[T], g: &AlternativeGraph, mu: &[T]) -> Vec<T> {
    g.nest_labels()
        .iter()
        .zip(mu)
        .map(|(&k, &m)| {
            let scaled: Vec<T> = g
                .nest_members(k)
                .expect("label from graph")
                .iter()
                .map(|&j| v[j] / m)
                .collect();
            log_sum_exp(&scaled)
        })
        .collect()
}

pub fn mnl_log_probabilities<T: Scalar>(v: &UtilityVector<T>) -> Vec<T> {
    let lse = log_sum_exp(&v.0);
    v.0.iter().map(|&x| x - lse).collect()
}

/// `P_i = exp(V_i) / Σ_j exp(V_j)`.
pub fn mnl_probabilities<T: Scalar>(v: &UtilityVector<T>) -> ProbabilityVector<T> {
    ProbabilityVector::from_log(&mnl_log_probabilities(v))
}

/// `log P(i|B_k) + log P(B_k)`.
pub fn nl_log_probabilities_classical<T: Scalar>(
    v: &UtilityVector<T>,
    g: &AlternativeGraph,
    mu: &NlScaleParams<T>,
) -> Result<Vec<T>> {
    check_nl_inputs(v, g, mu)?;
    let mu = &mu.0;
    let iv = inclusive_values(&v.0, g, mu);
    let nest_scores: Vec<T> = iv.iter().zip(mu).map(|(&i, &m)| m * i).collect();
    let denom = log_sum_exp(&nest_scores);
    Ok((0..v.len())
        .map(|i| {
            let k = g.nest_position(g.nest_of(i)).expect("label from graph");
            let within = v.0[i] / mu[k] - iv[k];
            let nest = nest_scores[k] - denom;
            within + nest
        })
        .collect())
}

pub fn nl_probabilities_classical<T: Scalar>(
    v: &UtilityVector<T>,
    g: &AlternativeGraph,
    mu: &NlScaleParams<T>,
) -> Result<ProbabilityVector<T>> {
    Ok(ProbabilityVector::from_log(&nl_log_probabilities_classical(v, g, mu)?))
}

/// Self utility plus the scaled nest aggregate, one score per alternative.
pub fn nl_gnn_scores<T: Scalar>(
    v: &UtilityVector<T>,
    g: &AlternativeGraph,
    mu: &NlScaleParams<T>,
) -> Result<Vec<T>> {
    check_nl_inputs(v, g, mu)?;
    let mu = &mu.0;
    let iv = inclusive_values(&v.0, g, mu);
    Ok((0..v.len())
        .map(|i| {
            let k = g.nest_position(g.nest_of(i)).expect("label from graph");
            v.0[i] / mu[k] + (mu[k] - T::one()) * iv[k]
        })
        .collect())
}

pub fn nl_log_probabilities_gnn_form<T: Scalar>(
    v: &UtilityVector<T>,
    g: &AlternativeGraph,
    mu: &NlScaleParams<T>,
) -> Result<Vec<T>> {
    let scores = nl_gnn_scores(v, g, mu)?;
    let lse = log_sum_exp(&scores);
    Ok(scores.into_iter().map(|s| s - lse).collect())
}

pub fn nl_probabilities_gnn_form<T: Scalar>(
    v: &UtilityVector<T>,
    g: &AlternativeGraph,
    mu: &NlScaleParams<T>,
) -> Result<ProbabilityVector<T>> {
    Ok(ProbabilityVector::from_log(&nl_log_probabilities_gnn_form(v, g, mu)?))
}

/// `P_i / P_j`.
pub fn probability_ratio<T: Scalar>(p: &ProbabilityVector<T>, i: usize, j: usize) -> Result<T> {
    let n = p.len();
    if i >= n || j >= n {
        return Err(Error::usage(format!(
            "ratio ({i}, {j}) out of range for {n} alternatives"
        )));
    }
    if !(p[j] > T::zero()) {
        return Err(Error::Domain(format!("P[{j}] is not positive")));
    }
    Ok(p[i] / p[j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uv(v: &[f64]) -> UtilityVector<f64> {
        UtilityVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn mnl_examples() {
        close(mnl_probabilities(&uv(&[0.0; 4])).as_slice(), &[0.25; 4], 1e-15);
        close(
            mnl_probabilities(&uv(&[2f64.ln(), 0.0, 0.0])).as_slice(),
            &[0.5, 0.25, 0.25],
            1e-15,
        );
        let p = mnl_probabilities(&uv(&[1000.0, 1000.0, 999.0]));
        assert!(p.as_slice().iter().all(|x| x.is_finite()));
        assert!((probability_ratio(&p, 0, 2).unwrap() - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn single_alternative_is_certain() {
        assert_eq!(mnl_probabilities(&uv(&[3.5])).as_slice(), &[1.0]);
        let g = AlternativeGraph::from_nest_ids(&[0]).unwrap();
        let mu = NlScaleParams::new(vec![0.4]).unwrap();
        assert_eq!(nl_probabilities_gnn_form(&uv(&[3.5]), &g, &mu).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn nl_hand_evaluated() {
        // inclusive value of nest {0,1} at μ=0.5 is sqrt(e^2 + e^1) = sqrt(10.107338)
        let g = AlternativeGraph::from_nest_ids(&[0, 0, 1]).unwrap();
        let mu = NlScaleParams::new(vec![0.5, 1.0]).unwrap();
        let expected = [0.5561, 0.2046, 0.2393];
        let c = nl_probabilities_classical(&uv(&[1.0, 0.5, 0.0]), &g, &mu).unwrap();
        let n = nl_probabilities_gnn_form(&uv(&[1.0, 0.5, 0.0]), &g, &mu).unwrap();
        close(c.as_slice(), &expected, 1e-4);
        close(n.as_slice(), &expected, 1e-4);

        let z = nl_probabilities_classical(&uv(&[0.0, 0.0, 0.0]), &g, &mu).unwrap();
        close(z.as_slice(), &[0.2929, 0.2929, 0.4142], 1e-4);
    }

    #[test]
    fn unit_scales_collapse_to_mnl() {
        let g = AlternativeGraph::from_nest_ids(&[0, 0, 1, 1]).unwrap();
        let v = uv(&[0.3, -1.0, 2.0, 0.7]);
        let mnl = mnl_probabilities(&v);
        let mu = NlScaleParams::ones(2);
        close(nl_probabilities_classical(&v, &g, &mu).unwrap().as_slice(), mnl.as_slice(), 1e-12);
        close(nl_probabilities_gnn_form(&v, &g, &mu).unwrap().as_slice(), mnl.as_slice(), 1e-12);
    }

    #[test]
    fn within_nest_ratio_matches_scaled_difference() {
        let g = AlternativeGraph::from_nest_ids(&[0, 0, 1, 1]).unwrap();
        let v = uv(&[0.3, -1.0, 2.0, 0.7]);
        let mu = NlScaleParams::new(vec![0.6, 0.8]).unwrap();
        let p = nl_probabilities_classical(&v, &g, &mu).unwrap();
        let r = probability_ratio(&p, 0, 1).unwrap();
        let expected = ((0.3 - -1.0) / 0.6f64).exp();
        assert!((r / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(NlScaleParams::new(vec![0.5, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(NlScaleParams::new(vec![-1.0]), Err(Error::Domain(_))));
        assert!(UtilityVector::new(vec![f64::NAN]).is_err());
        let g = AlternativeGraph::from_nest_ids(&[0, 0, 1]).unwrap();
        let mu = NlScaleParams::new(vec![0.5]).unwrap();
        assert!(nl_probabilities_classical(&uv(&[0.0; 3]), &g, &mu).is_err());
    }

    #[test]
    fn rum_range_flags() {
        let mu = NlScaleParams::new(vec![0.5, 1.2, 1.0]).unwrap();
        assert_eq!(mu.rum_inconsistent(), vec![1]);
    }

    #[test]
    fn uniform_ratio_is_one() {
        let p = mnl_probabilities(&uv(&[0.0; 4]));
        assert_eq!(probability_ratio(&p, 1, 3).unwrap(), 1.0);
        let p = mnl_probabilities(&uv(&[2f64.ln(), 0.0, 0.0]));
        assert!((probability_ratio(&p, 0, 1).unwrap() - 2.0).abs() < 1e-15);
        assert!(probability_ratio(&p, 0, 5).is_err());
    }
}
