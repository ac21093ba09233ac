//! JSON and CSV formats.
//!
//! Numbers are read from their source text, so in exact mode a JSON `0.1` is
//! exactly one tenth. A numeric field may also be a string holding a decimal
//! or a fraction (`"1/3"`); exact-mode writers emit that string form so files
//! round-trip without rounding. Float-mode writers emit plain JSON numbers.
//!
//! Tree: `{"root": "r", "edges": [{"u": "r", "v": "a", "w": 1.5}, ...]}`
//!
//! Measure: `{"masses": {"a": 0.5, "b": 0.5}}`
//!
//! Coupling: `{"entries": [{"from": "a", "to": "b", "mass": 0.5}], "cost": 1.0}`
//!
//! Edge embedding: `{"entries": [{"edge": "a", "parent": "r", "value": 0.5}]}`
//!
//! Stochastic embedding:
//! `{"components": [{"p": 0.5, "tree": <tree>, "f": {"x": "v"}}], "source": {"labels": [...], "dist": [[...]]}}`

use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;
use serde_json::value::RawValue;
use serde_json::{json, Value};
use thiserror::Error;

use crate::measure::{DiscreteMeasure, MeasureError, PointId};
use crate::oracle::{FiniteMetric, MetricError};
use crate::scalar::Scalar;
use crate::stochastic::{EmbeddingComponent, EmbeddingError, StochasticTreeEmbedding};
use crate::tree::{MetricTree, TreeError, Vertex};
use crate::tree_ot::{Coupling, EmbeddingVector};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{context}: cannot read number {text:?}")]
    BadNumber { context: String, text: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("{0}")]
    Shape(String),
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("measure: {0}")]
    Measure(#[from] MeasureError),
    #[error("metric: {0}")]
    Metric(#[from] MetricError),
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
}

/// A dense bijection between labels and ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labels {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    /// `0`, `1`, ... as labels.
    pub fn numbered(n: usize) -> Self {
        let mut out = Self::new();
        for i in 0..n {
            out.intern(&i.to_string());
        }
        out
    }

    pub fn from_names(names: Vec<String>) -> Result<Self, FormatError> {
        let mut out = Self::new();
        for name in names {
            if out.index.contains_key(&name) {
                return Err(FormatError::Shape(format!("duplicate label {name:?}")));
            }
            out.intern(&name);
        }
        Ok(out)
    }

    /// Id of `name`, allocating the next id if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Result<usize, FormatError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| FormatError::UnknownLabel(name.to_string()))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// A tree with the labels it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTree<S> {
    pub tree: MetricTree<S>,
    pub labels: Labels,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelDoc {
    Text(String),
    Int(i64),
}

impl LabelDoc {
    fn into_string(self) -> String {
        match self {
            LabelDoc::Text(s) => s,
            LabelDoc::Int(i) => i.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct EdgeDoc {
    u: LabelDoc,
    v: LabelDoc,
    w: Box<RawValue>,
}

#[derive(Deserialize)]
struct TreeDoc {
    root: LabelDoc,
    edges: Vec<EdgeDoc>,
}

#[derive(Deserialize)]
struct MeasureDoc {
    masses: BTreeMap<String, Box<RawValue>>,
}

#[derive(Deserialize)]
struct SourceDoc {
    labels: Vec<LabelDoc>,
    dist: Vec<Vec<Box<RawValue>>>,
}

#[derive(Deserialize)]
struct ComponentDoc {
    p: Box<RawValue>,
    tree: TreeDoc,
    f: BTreeMap<String, LabelDoc>,
}

#[derive(Deserialize)]
struct EmbeddingDoc {
    components: Vec<ComponentDoc>,
    source: Option<SourceDoc>,
}

fn parse_number<S: Scalar>(raw: &RawValue, context: &str) -> Result<S, FormatError> {
    let text = raw.get().trim();
    let unquoted = match serde_json::from_str::<String>(text) {
        Ok(s) => s,
        Err(_) => text.to_string(),
    };
    S::parse_text(&unquoted).ok_or_else(|| FormatError::BadNumber {
        context: context.to_string(),
        text: text.to_string(),
    })
}

/// JSON value of a scalar: a number in float mode, an exact string otherwise.
pub fn scalar_json<S: Scalar>(x: &S) -> Value {
    if S::EXACT {
        Value::String(x.to_string())
    } else {
        json!(x.to_f64())
    }
}

fn tree_from_doc<S: Scalar>(doc: TreeDoc) -> Result<LabeledTree<S>, FormatError> {
    let mut labels = Labels::new();
    let root = labels.intern(&doc.root.into_string());
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (k, e) in doc.edges.into_iter().enumerate() {
        let u = labels.intern(&e.u.into_string());
        let v = labels.intern(&e.v.into_string());
        let w = parse_number(&e.w, &format!("edge {k} weight"))?;
        edges.push((u, v, w));
    }
    let tree = MetricTree::from_edges(&edges, root)?;
    Ok(LabeledTree { tree, labels })
}

pub fn parse_tree<S: Scalar>(text: &str) -> Result<LabeledTree<S>, FormatError> {
    tree_from_doc(serde_json::from_str(text)?)
}

pub fn tree_json<S: Scalar>(t: &MetricTree<S>, labels: &Labels) -> Value {
    let edges: Vec<Value> = t
        .edge_list()
        .into_iter()
        .map(|(u, v, w)| json!({"u": labels.name(u), "v": labels.name(v), "w": scalar_json(&w)}))
        .collect();
    json!({"root": labels.name(t.root()), "edges": edges})
}

/// Reads a measure whose labels are resolved against `labels`.
pub fn parse_measure<S: Scalar>(
    text: &str,
    labels: &Labels,
) -> Result<DiscreteMeasure<S>, FormatError> {
    let doc: MeasureDoc = serde_json::from_str(text)?;
    let mut pairs = Vec::with_capacity(doc.masses.len());
    for (name, raw) in doc.masses {
        let id = labels.id(&name)?;
        pairs.push((id, parse_number(&raw, &format!("mass of {name:?}"))?));
    }
    Ok(DiscreteMeasure::from_pairs(pairs)?)
}

pub fn measure_json<S: Scalar>(m: &DiscreteMeasure<S>, labels: &Labels) -> Value {
    let masses: serde_json::Map<String, Value> = m
        .iter()
        .map(|(p, x)| (labels.name(p).to_string(), scalar_json(x)))
        .collect();
    json!({ "masses": masses })
}

pub fn coupling_json<S: Scalar>(c: &Coupling<S>, cost: &S, labels: &Labels) -> Value {
    let entries: Vec<Value> = c
        .entries()
        .iter()
        .map(|(&(x, y), m)| {
            json!({"from": labels.name(x), "to": labels.name(y), "mass": scalar_json(m)})
        })
        .collect();
    json!({"entries": entries, "cost": scalar_json(cost)})
}

/// Reads coupling entries back as `(from, to) -> mass`.
pub fn parse_coupling_entries<S: Scalar>(
    text: &str,
    labels: &Labels,
) -> Result<BTreeMap<(PointId, PointId), S>, FormatError> {
    #[derive(Deserialize)]
    struct EntryDoc {
        from: String,
        to: String,
        mass: Box<RawValue>,
    }
    #[derive(Deserialize)]
    struct CouplingDoc {
        entries: Vec<EntryDoc>,
    }
    let doc: CouplingDoc = serde_json::from_str(text)?;
    let mut out = BTreeMap::new();
    for e in doc.entries {
        let key = (labels.id(&e.from)?, labels.id(&e.to)?);
        out.insert(key, parse_number(&e.mass, "coupling mass")?);
    }
    Ok(out)
}

pub fn embedding_vector_json<S: Scalar>(
    v: &EmbeddingVector<S>,
    t: &MetricTree<S>,
    labels: &Labels,
) -> Value {
    let entries: Vec<Value> = v
        .iter()
        .map(|(&edge, value)| {
            let parent = t.parent(edge).expect("edges are named by non-root vertices");
            json!({"edge": labels.name(edge), "parent": labels.name(parent), "value": scalar_json(value)})
        })
        .collect();
    json!({ "entries": entries })
}

fn source_json<S: Scalar>(m: &FiniteMetric<S>, labels: &Labels) -> Value {
    let dist: Vec<Vec<Value>> = m
        .rows()
        .map(|r| r.iter().map(scalar_json).collect())
        .collect();
    json!({"labels": labels.names(), "dist": dist})
}

pub fn embedding_json<S: Scalar>(e: &StochasticTreeEmbedding<S>, points: &Labels) -> Value {
    let components: Vec<Value> = e
        .components()
        .iter()
        .map(|c| {
            let vertices = Labels::numbered(c.tree.len());
            let f: serde_json::Map<String, Value> = c
                .map
                .iter()
                .enumerate()
                .map(|(x, &v)| (points.name(x).to_string(), json!(vertices.name(v))))
                .collect();
            json!({"p": scalar_json(&c.p), "tree": tree_json(&c.tree, &vertices), "f": f})
        })
        .collect();
    json!({"components": components, "source": source_json(e.source(), points)})
}

/// Reads a stochastic embedding together with its source point labels.
pub fn parse_embedding<S: Scalar>(
    text: &str,
) -> Result<(StochasticTreeEmbedding<S>, Labels), FormatError> {
    let doc: EmbeddingDoc = serde_json::from_str(text)?;
    let source = doc
        .source
        .ok_or_else(|| FormatError::Shape("embedding has no \"source\" metric".into()))?;
    let points = Labels::from_names(
        source
            .labels
            .into_iter()
            .map(LabelDoc::into_string)
            .collect(),
    )?;
    let mut rows = Vec::with_capacity(source.dist.len());
    for (i, row) in source.dist.iter().enumerate() {
        rows.push(
            row.iter()
                .map(|raw| parse_number(raw, &format!("source row {i}")))
                .collect::<Result<Vec<S>, _>>()?,
        );
    }
    let metric = FiniteMetric::new(rows)?;
    if metric.len() != points.len() {
        return Err(FormatError::Shape(format!(
            "{} source labels for {} points",
            points.len(),
            metric.len()
        )));
    }
    let mut components = Vec::with_capacity(doc.components.len());
    for (k, c) in doc.components.into_iter().enumerate() {
        let p = parse_number(&c.p, &format!("component {k} weight"))?;
        let LabeledTree { tree, labels } = tree_from_doc(c.tree)?;
        let mut map = vec![None; points.len()];
        for (point, vertex) in c.f {
            map[points.id(&point)?] = Some(labels.id(&vertex.into_string())?);
        }
        let map = map
            .into_iter()
            .enumerate()
            .map(|(x, v)| {
                v.ok_or_else(|| {
                    FormatError::Shape(format!(
                        "component {k} does not map point {:?}",
                        points.name(x)
                    ))
                })
            })
            .collect::<Result<Vec<Vertex>, _>>()?;
        components.push(EmbeddingComponent { p, tree, map });
    }
    Ok((StochasticTreeEmbedding::new(components, metric)?, points))
}

fn csv_records(text: &str) -> Result<Vec<Vec<String>>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(record.iter().map(str::to_string).collect());
    }
    Ok(out)
}

/// Splits off a header row when the first row is not entirely numeric.
fn split_header(mut rows: Vec<Vec<String>>) -> (Option<Vec<String>>, Vec<Vec<String>>) {
    let is_header = rows
        .first()
        .is_some_and(|r| r.iter().any(|f| f.parse::<f64>().is_err()));
    if is_header {
        let header = rows.remove(0);
        (Some(header), rows)
    } else {
        (None, rows)
    }
}

/// Square distance matrix, optional header row naming the points.
pub fn parse_distance_csv<S: Scalar>(text: &str) -> Result<(FiniteMetric<S>, Labels), FormatError> {
    let (header, rows) = split_header(csv_records(text)?);
    let mut matrix = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        matrix.push(
            row.iter()
                .map(|f| {
                    S::parse_text(f).ok_or_else(|| FormatError::BadNumber {
                        context: format!("row {}", i + 1),
                        text: f.clone(),
                    })
                })
                .collect::<Result<Vec<S>, _>>()?,
        );
    }
    let metric = FiniteMetric::new(matrix)?;
    let labels = match header {
        Some(h) if h.len() == metric.len() => Labels::from_names(h)?,
        Some(h) => {
            return Err(FormatError::Shape(format!(
                "header names {} points, matrix has {}",
                h.len(),
                metric.len()
            )))
        }
        None => Labels::numbered(metric.len()),
    };
    Ok((metric, labels))
}

/// Rows of coordinates (optional header); points are labelled by row index.
pub fn parse_points_csv(text: &str) -> Result<Vec<Vec<f64>>, FormatError> {
    let (_, rows) = split_header(csv_records(text)?);
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| FormatError::BadNumber {
                            context: format!("point {i}"),
                            text: f.clone(),
                        })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_ot::{optimal_coupling, tree_wasserstein};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    const STAR: &str = r#"{"root": "r", "edges": [
        {"u": "r", "v": "a", "w": 1}, {"u": "b", "v": "r", "w": 2.0}, {"u": "r", "v": "c", "w": "3"}]}"#;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn reads_star_tree() {
        let t = parse_tree::<f64>(STAR).unwrap();
        assert_eq!(t.labels.names(), &["r", "a", "b", "c"]);
        assert_eq!(t.tree.root(), 0);
        let (a, c) = (t.labels.id("a").unwrap(), t.labels.id("c").unwrap());
        assert_eq!(t.tree.path_distance(a, c).unwrap(), 4.0);
    }

    #[test]
    fn decimal_masses_are_exact() {
        let t = parse_tree::<BigRational>(STAR).unwrap();
        let m = parse_measure::<BigRational>(
            r#"{"masses": {"a": 0.1, "b": 0.2, "c": "0.7"}}"#,
            &t.labels,
        )
        .unwrap();
        assert_eq!(m.mass(1), q(1, 10));
        // 0.1 + 0.2 is not 0.3 in binary, so float mode needs the tolerance
        assert!(
            parse_measure::<f64>(r#"{"masses": {"a": 0.1, "b": 0.2, "c": 0.7}}"#, &t.labels)
                .is_ok()
        );
    }

    #[test]
    fn format_errors() {
        let t = parse_tree::<f64>(STAR).unwrap();
        assert!(matches!(
            parse_measure::<f64>(r#"{"masses": {"z": 1}}"#, &t.labels),
            Err(FormatError::UnknownLabel(_))
        ));
        assert!(matches!(
            parse_measure::<f64>(r#"{"masses": {"a": "x"}}"#, &t.labels),
            Err(FormatError::BadNumber { .. })
        ));
        assert!(matches!(
            parse_tree::<f64>(r#"{"root": "r", "edges": [{"u": "r", "v": "a", "w": -1}]}"#),
            Err(FormatError::Tree(TreeError::NonPositiveWeight { .. }))
        ));
        assert!(matches!(parse_tree::<f64>("{"), Err(FormatError::Json(_))));
    }

    #[test]
    fn coupling_round_trip() {
        let t = parse_tree::<BigRational>(STAR).unwrap();
        let mu = parse_measure(r#"{"masses": {"a": 0.5, "b": 0.5}}"#, &t.labels).unwrap();
        let nu = parse_measure(r#"{"masses": {"c": 1}}"#, &t.labels).unwrap();
        let c = optimal_coupling(&t.tree, &mu, &nu).unwrap();
        let cost = tree_wasserstein(&t.tree, &mu, &nu).unwrap();
        let doc = coupling_json(&c, &cost, &t.labels);
        assert_eq!(doc["cost"], json!("9/2"));
        let back = parse_coupling_entries::<BigRational>(&doc.to_string(), &t.labels).unwrap();
        assert_eq!(&back, c.entries());
    }

    #[test]
    fn distance_csv_with_and_without_header() {
        let (m, l) = parse_distance_csv::<f64>("x,y,z\n0,1,3\n1,0,2\n3,2,0\n").unwrap();
        assert_eq!(l.names(), &["x", "y", "z"]);
        assert_eq!(*m.dist(0, 2), 3.0);
        let (m2, l2) = parse_distance_csv::<BigRational>("0,0.5\n0.5,0\n").unwrap();
        assert_eq!(l2.names(), &["0", "1"]);
        assert_eq!(*m2.dist(0, 1), q(1, 2));
        assert!(matches!(
            parse_distance_csv::<f64>("0,1\n2,0\n"),
            Err(FormatError::Metric(MetricError::Asymmetric { .. }))
        ));
    }

    #[test]
    fn points_csv() {
        let p = parse_points_csv("x,y\n0,0\n3,4\n").unwrap();
        assert_eq!(p, vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert!(parse_points_csv("0,0\n1,nan\n").is_err());
    }

    #[test]
    fn embedding_round_trip_is_exact() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 3.0],
            vec![2.0, 2.0],
        ];
        let m = FiniteMetric::<BigRational>::from_points(&pts).unwrap();
        let e = crate::stochastic::frt_sample(&m, 7, 3).unwrap();
        let labels = Labels::numbered(4);
        let text = embedding_json(&e, &labels).to_string();
        let (back, back_labels) = parse_embedding::<BigRational>(&text).unwrap();
        assert_eq!(back_labels, labels);
        assert_eq!(back.source(), e.source());
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(
                    back.expected_distance(x, y).unwrap(),
                    e.expected_distance(x, y).unwrap()
                );
            }
        }
        assert_eq!(
            embedding_json(&back, &back_labels).to_string().len(),
            text.len()
        );
    }
}
