//! The alternative graph: one node per choice alternative, one clique per
//! nest, and no edges between nests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct AlternativeGraph {
    names: Vec<String>,
    nest_ids: Vec<usize>,
    adjacency: Vec<Vec<bool>>,
    /// Members of each nest label, ascending.
    nests: BTreeMap<usize, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphSpec {
    names: Vec<String>,
    nest_ids: Vec<usize>,
}

impl TryFrom<GraphSpec> for AlternativeGraph {
    type Error = Error;

    fn try_from(spec: GraphSpec) -> Result<Self> {
        AlternativeGraph::new(&spec.nest_ids, &spec.names)
    }
}

impl From<AlternativeGraph> for GraphSpec {
    fn from(g: AlternativeGraph) -> Self {
        GraphSpec {
            names: g.names,
            nest_ids: g.nest_ids,
        }
    }
}

impl AlternativeGraph {
    /// Builds the clique-per-nest graph. Nest labels are arbitrary integers.
    pub fn new<S: AsRef<str>>(nest_ids: &[usize], names: &[S]) -> Result<Self> {
        if nest_ids.is_empty() {
            return Err(Error::config("alternative graph needs at least one alternative"));
        }
        if nest_ids.len() != names.len() {
            return Err(Error::config(format!(
                "{} nest ids for {} alternative names",
                nest_ids.len(),
                names.len()
            )));
        }
        let n = nest_ids.len();
        let mut nests: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &k) in nest_ids.iter().enumerate() {
            nests.entry(k).or_default().push(i);
        }
        let adjacency = (0..n)
            .map(|i| (0..n).map(|j| i != j && nest_ids[i] == nest_ids[j]).collect())
            .collect();
        Ok(Self {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            nest_ids: nest_ids.to_vec(),
            adjacency,
            nests,
        })
    }

    /// Graph with alternatives named `alt0`, `alt1`, ...
    pub fn from_nest_ids(nest_ids: &[usize]) -> Result<Self> {
        let names: Vec<String> = (0..nest_ids.len()).map(|i| format!("alt{i}")).collect();
        Self::new(nest_ids, &names)
    }

    pub fn len(&self) -> usize {
        self.nest_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nest_ids.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nest_ids(&self) -> &[usize] {
        &self.nest_ids
    }

    pub fn nest_of(&self, i: usize) -> usize {
        self.nest_ids[i]
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency[i][j])
            .collect()
    }

    /// Nest labels in ascending order.
    pub fn nest_labels(&self) -> Vec<usize> {
        self.nests.keys().copied().collect()
    }

    pub fn num_nests(&self) -> usize {
        self.nests.len()
    }

    /// Position of nest label `k` in [`Self::nest_labels`].
    pub fn nest_position(&self, k: usize) -> Option<usize> {
        self.nests.keys().position(|&l| l == k)
    }

    /// `{j : a_ij = 1} ∪ {i}`, ascending.
    pub fn closed_neighborhood(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.len() {
            return Err(Error::usage(format!(
                "alternative {i} out of range for a graph of {} alternatives",
                self.len()
            )));
        }
        Ok((0..self.len())
            .filter(|&j| j == i || self.adjacency[i][j])
            .collect())
    }

    /// Alternatives in nest `k`, ascending.
    pub fn nest_members(&self, k: usize) -> Result<&[usize]> {
        self.nests
            .get(&k)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::usage(format!("unknown nest label {k}")))
    }
}
