//! JSON descriptions of instances and update batches.
//!
//! Weights appear as JSON numbers or as decimal strings; the string form
//! keeps values like 0.1 exact in rational mode, where a float literal
//! would smuggle in its binary rounding.

use serde::Deserialize;

use crate::dynamic::UpdateBatch;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numeric::Weight;
use crate::system::{SpinSystem, SymmetricMatrix};

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum WeightLiteral {
    Number(f64),
    Text(String),
}

impl WeightLiteral {
    pub fn to_weight<W: Weight>(&self) -> Result<W> {
        match self {
            WeightLiteral::Number(x) => W::from_json_number(*x),
            WeightLiteral::Text(s) => W::from_decimal_str(s),
        }
    }
}

fn to_matrix<W: Weight>(q: usize, rows: &[Vec<WeightLiteral>]) -> Result<SymmetricMatrix<W>> {
    let rows = rows
        .iter()
        .map(|row| row.iter().map(WeightLiteral::to_weight).collect::<Result<Vec<W>>>())
        .collect::<Result<Vec<_>>>()?;
    SymmetricMatrix::new(q, rows)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ActivitySpec {
    Keyword(String),
    Explicit(Vec<Vec<WeightLiteral>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeOverrideSpec {
    pub edge: [usize; 2],
    pub matrix: Vec<Vec<WeightLiteral>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    pub default: Vec<Vec<WeightLiteral>>,
    #[serde(default)]
    pub overrides: Vec<EdgeOverrideSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub q: usize,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub b: ActivitySpec,
    #[serde(rename = "A")]
    pub interactions: InteractionSpec,
}

impl InstanceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn instantiate<W: Weight>(&self) -> Result<SpinSystem<W>> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = Graph::new(self.n, &edges)?;
        let b: Vec<Vec<W>> = match &self.b {
            ActivitySpec::Keyword(word) if word == "uniform" => {
                vec![vec![W::one(); self.q]; self.n]
            }
            ActivitySpec::Keyword(word) => {
                return Err(Error::Parse(format!(
                    "activity must be \"uniform\" or one row per vertex, got \"{word}\""
                )));
            }
            ActivitySpec::Explicit(rows) => {
                if rows.len() != self.n {
                    return Err(Error::InvalidInstance(format!(
                        "{} activity rows for {} vertices",
                        rows.len(),
                        self.n
                    )));
                }
                rows.iter()
                    .map(|row| row.iter().map(WeightLiteral::to_weight).collect())
                    .collect::<Result<_>>()?
            }
        };
        let default = to_matrix::<W>(self.q, &self.interactions.default)?;
        let mut a = vec![default; graph.m()];
        let mut seen = vec![false; graph.m()];
        for o in &self.interactions.overrides {
            let key = (o.edge[0].min(o.edge[1]), o.edge[0].max(o.edge[1]));
            let id = graph
                .edges()
                .binary_search(&key)
                .map_err(|_| Error::InvalidInstance(format!(
                    "override for absent edge ({}, {})",
                    o.edge[0], o.edge[1]
                )))?;
            if seen[id] {
                return Err(Error::DuplicateEdge { u: key.0, v: key.1 });
            }
            seen[id] = true;
            a[id] = to_matrix(self.q, &o.matrix)?;
        }
        SpinSystem::new(graph, self.q, b, a)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateVertexSpec {
    pub v: usize,
    pub b: Vec<WeightLiteral>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateEdgeSpec {
    pub edge: [usize; 2],
    pub matrix: Vec<Vec<WeightLiteral>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateSpec {
    #[serde(default)]
    pub vertices: Vec<UpdateVertexSpec>,
    #[serde(default)]
    pub edges: Vec<UpdateEdgeSpec>,
}

impl UpdateSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// `q` comes from the instance the update will apply to.
    pub fn instantiate<W: Weight>(&self, q: usize) -> Result<UpdateBatch<W>> {
        let vertices = self
            .vertices
            .iter()
            .map(|u| {
                let row = u.b.iter().map(WeightLiteral::to_weight).collect::<Result<Vec<W>>>()?;
                Ok((u.v, row))
            })
            .collect::<Result<_>>()?;
        let edges = self
            .edges
            .iter()
            .map(|e| Ok(((e.edge[0], e.edge[1]), to_matrix(q, &e.matrix)?)))
            .collect::<Result<_>>()?;
        Ok(UpdateBatch { vertices, edges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::brute_force_distribution;
    use num_rational::BigRational;

    const HARDCORE_EDGE: &str = r#"{
        "q": 2, "n": 2, "edges": [[0, 1]],
        "b": [[1, 2], [1, 2]],
        "A": {"default": [[1, 1], [1, 0]]}
    }"#;

    #[test]
    fn instance_roundtrip() {
        let sys: SpinSystem<f64> =
            InstanceSpec::from_json(HARDCORE_EDGE).unwrap().instantiate().unwrap();
        assert_eq!(sys.n(), 2);
        assert_eq!(sys.q(), 2);
        let d = brute_force_distribution(&sys).unwrap();
        assert_eq!(d.probs(), &[0.2, 0.4, 0.4]);
    }

    #[test]
    fn uniform_keyword_and_overrides() {
        let text = r#"{
            "q": 2, "n": 3, "edges": [[1, 2], [0, 1]],
            "b": "uniform",
            "A": {
                "default": [[1, 1], [1, 1]],
                "overrides": [{"edge": [2, 1], "matrix": [[2, 1], [1, 2]]}]
            }
        }"#;
        let sys: SpinSystem<f64> = InstanceSpec::from_json(text).unwrap().instantiate().unwrap();
        assert_eq!(sys.activity(0), &[1.0, 1.0]);
        // Canonical edge order is (0,1), (1,2); the override names (2,1)
        // reversed and must land on the second edge id.
        assert_eq!(*sys.interaction(0).get(0, 0), 1.0);
        assert_eq!(*sys.interaction(1).get(0, 0), 2.0);
    }

    #[test]
    fn decimal_strings_are_exact_in_rational_mode() {
        let text = r#"{
            "q": 2, "n": 1, "edges": [],
            "b": [["0.1", "0.3"]],
            "A": {"default": [[1, 1], [1, 1]]}
        }"#;
        let sys: SpinSystem<BigRational> =
            InstanceSpec::from_json(text).unwrap().instantiate().unwrap();
        assert_eq!(sys.activity(0)[0], BigRational::from_ratio(1, 10));
        let d = brute_force_distribution(&sys).unwrap();
        assert_eq!(d.probs()[0], BigRational::from_ratio(1, 4));
    }

    #[test]
    fn parse_rejections() {
        assert!(matches!(
            InstanceSpec::from_json("{\"q\": 2}"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            InstanceSpec::from_json("{\"q\": 2, \"n\": 1, \"edges\": [], \"b\": \"uniform\", \"A\": {\"default\": [[1,1],[1,1]]}, \"extra\": 0}"),
            Err(Error::Parse(_))
        ));

        let bad_keyword = r#"{
            "q": 2, "n": 1, "edges": [],
            "b": "unifrom",
            "A": {"default": [[1, 1], [1, 1]]}
        }"#;
        assert!(matches!(
            InstanceSpec::from_json(bad_keyword).unwrap().instantiate::<f64>(),
            Err(Error::Parse(_))
        ));

        let absent_edge = r#"{
            "q": 2, "n": 2, "edges": [],
            "b": "uniform",
            "A": {"default": [[1, 1], [1, 1]], "overrides": [{"edge": [0, 1], "matrix": [[1, 1], [1, 1]]}]}
        }"#;
        assert!(matches!(
            InstanceSpec::from_json(absent_edge).unwrap().instantiate::<f64>(),
            Err(Error::InvalidInstance(_))
        ));

        let doubled = r#"{
            "q": 2, "n": 2, "edges": [[0, 1]],
            "b": "uniform",
            "A": {"default": [[1, 1], [1, 1]], "overrides": [
                {"edge": [0, 1], "matrix": [[1, 1], [1, 1]]},
                {"edge": [1, 0], "matrix": [[2, 1], [1, 2]]}
            ]}
        }"#;
        assert!(matches!(
            InstanceSpec::from_json(doubled).unwrap().instantiate::<f64>(),
            Err(Error::DuplicateEdge { u: 0, v: 1 })
        ));

        let negative = r#"{
            "q": 2, "n": 1, "edges": [],
            "b": [[-1, 1]],
            "A": {"default": [[1, 1], [1, 1]]}
        }"#;
        assert!(InstanceSpec::from_json(negative).unwrap().instantiate::<f64>().is_err());
    }

    #[test]
    fn update_roundtrip() {
        let text = r#"{
            "vertices": [{"v": 1, "b": [0, 1, 1]}],
            "edges": [{"edge": [0, 2], "matrix": [[2, 1, 1], [1, 2, 1], [1, 1, 2]]}]
        }"#;
        let batch: UpdateBatch<f64> =
            UpdateSpec::from_json(text).unwrap().instantiate(3).unwrap();
        assert_eq!(batch.vertices, vec![(1, vec![0.0, 1.0, 1.0])]);
        assert_eq!(batch.edges.len(), 1);
        assert_eq!(batch.edges[0].0, (0, 2));

        let empty: UpdateBatch<f64> =
            UpdateSpec::from_json("{}").unwrap().instantiate(3).unwrap();
        assert!(empty.is_empty());
    }
}
