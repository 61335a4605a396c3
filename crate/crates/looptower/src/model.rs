//! Forney-style graphical models: variables live on edges and take values in
//! a q-ary alphabet, factors live on vertices and depend on every incident
//! edge. This module owns the data structures, the JSON document format,
//! canonical configuration indexing, and validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Refuse vertices whose dense table would exceed this many entries.
pub const MAX_TABLE_ENTRIES: u128 = 1 << 20;

/// A vertex index into [`ModelSpec::vertex_ids`]. Vertices are stored in
/// ascending id order, so index order and id order coincide.
pub type Vertex = usize;

/// An edge index into [`ModelSpec::edges`].
pub type Edge = usize;

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

/// Validation findings; empty iff the model satisfies every invariant.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn push(&mut self, severity: Severity, location: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity,
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            writeln!(f, "{:?} at {}: {}", d.severity, d.location, d.message)?;
        }
        Ok(())
    }
}

/// A discrete graphical model in Forney form.
///
/// Vertices are kept sorted ascending by id, edges sorted by their (low, high)
/// endpoint pair, and adjacency lists ascending; every canonical order in the
/// crate (table indexing, configuration enumeration, report layout) derives
/// from these.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    q: usize,
    vertex_ids: Vec<String>,
    edges: Vec<(Vertex, Vertex)>,
    adjacency: Vec<Vec<Vertex>>,
    /// Per vertex, the edge index of each adjacency slot.
    incident_edges: Vec<Vec<Edge>>,
    tables: Vec<Vec<f64>>,
    level: usize,
    positivity_required: bool,
}

impl ModelSpec {
    /// Builds a model from vertex ids, neighbor lists (any order) and tables
    /// given in canonical index order. Structural invariants (symmetry, no
    /// self-loops or parallel edges, table sizes) are enforced here; value
    /// invariants (finiteness, positivity) are reported by [`validate`].
    pub fn build(
        q: usize,
        vertices: Vec<(String, Vec<String>, Vec<f64>)>,
        level: usize,
    ) -> Result<Self> {
        if q < 1 {
            return Err(Error::Parse("alphabet size q must be >= 1".into()));
        }
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        order.sort_by(|&i, &j| vertices[i].0.cmp(&vertices[j].0));

        let vertex_ids: Vec<String> = order.iter().map(|&i| vertices[i].0.clone()).collect();
        let mut index_of: BTreeMap<&str, Vertex> = BTreeMap::new();
        for (idx, id) in vertex_ids.iter().enumerate() {
            if index_of.insert(id, idx).is_some() {
                return Err(Error::Parse(format!("duplicate vertex id {id:?}")));
            }
        }

        // Resolve neighbor lists and reorder each table from the order the
        // neighbors were given in to canonical ascending-id order.
        let mut adjacency: Vec<Vec<Vertex>> = Vec::with_capacity(vertex_ids.len());
        let mut tables: Vec<Vec<f64>> = Vec::with_capacity(vertex_ids.len());
        for &src in &order {
            let (id, neighbors, table) = &vertices[src];
            let mut given: Vec<Vertex> = Vec::with_capacity(neighbors.len());
            for n in neighbors {
                let &v = index_of
                    .get(n.as_str())
                    .ok_or_else(|| Error::Parse(format!("vertex {id:?} lists unknown neighbor {n:?}")))?;
                if vertex_ids[v] == *id {
                    return Err(Error::Parse(format!("vertex {id:?} lists itself as a neighbor")));
                }
                if given.contains(&v) {
                    return Err(Error::Parse(format!("vertex {id:?} lists neighbor {n:?} twice")));
                }
                given.push(v);
            }
            let degree = given.len();
            let expected = (q as u128).checked_pow(degree as u32);
            match expected {
                Some(e) if e <= MAX_TABLE_ENTRIES => {
                    if table.len() as u128 != e {
                        return Err(Error::Parse(format!(
                            "vertex {id:?}: table has {} entries, expected q^degree = {e}",
                            table.len()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "vertex {id:?}: q^degree exceeds the dense-table guard ({MAX_TABLE_ENTRIES})"
                    )))
                }
            }

            let mut sorted = given.clone();
            sorted.sort_unstable();
            adjacency.push(sorted.clone());
            tables.push(permute_table_axes(q, table, &given, &sorted));
        }

        // Symmetry: b under a iff a under b.
        for (a, nbrs) in adjacency.iter().enumerate() {
            for &b in nbrs {
                if !adjacency[b].contains(&a) {
                    return Err(Error::Parse(format!(
                        "asymmetric adjacency: {:?} lists {:?} but not conversely",
                        vertex_ids[a], vertex_ids[b]
                    )));
                }
            }
        }

        let mut edges: Vec<(Vertex, Vertex)> = Vec::new();
        for (a, nbrs) in adjacency.iter().enumerate() {
            for &b in nbrs {
                if a < b {
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();

        let edge_index: BTreeMap<(Vertex, Vertex), Edge> =
            edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let incident_edges = adjacency
            .iter()
            .enumerate()
            .map(|(a, nbrs)| {
                nbrs.iter()
                    .map(|&b| edge_index[&(a.min(b), a.max(b))])
                    .collect()
            })
            .collect();

        Ok(ModelSpec {
            q,
            vertex_ids,
            edges,
            adjacency,
            incident_edges,
            tables,
            level,
            positivity_required: level == 0,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn positivity_required(&self) -> bool {
        self.positivity_required
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn vertex_id(&self, v: Vertex) -> &str {
        &self.vertex_ids[v]
    }

    pub fn vertex_index(&self, id: &str) -> Option<Vertex> {
        self.vertex_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    /// Edges as (low, high) vertex pairs in canonical order.
    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_key(&self, e: Edge) -> String {
        let (u, v) = self.edges[e];
        format!("{}-{}", self.vertex_ids[u], self.vertex_ids[v])
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v]
    }

    /// Edge index of each adjacency slot of `v` (parallel to [`neighbors`]).
    pub fn incident_edges(&self, v: Vertex) -> &[Edge] {
        &self.incident_edges[v]
    }

    /// Adjacency slot of neighbor `b` at vertex `a`.
    pub fn slot_of(&self, a: Vertex, b: Vertex) -> Option<usize> {
        self.adjacency[a].iter().position(|&n| n == b)
    }

    pub fn table(&self, v: Vertex) -> &[f64] {
        &self.tables[v]
    }

    /// Unchecked table replacement; pair with [`validate`] when the result
    /// must satisfy the model invariants.
    pub fn set_table(&mut self, v: Vertex, table: Vec<f64>) {
        self.tables[v] = table;
    }

    pub fn is_positive(&self) -> bool {
        self.tables.iter().all(|t| t.iter().all(|&x| x > 0.0))
    }

    /// True when no cycle passes through the graph (every connected component
    /// is a tree).
    pub fn is_forest(&self) -> bool {
        // |E| = |V| - #components for a forest.
        let n = self.vertex_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let r = find(parent, parent[x]);
                parent[x] = r;
            }
            parent[x]
        }
        for &(u, v) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                return false;
            }
            parent[ru] = rv;
        }
        true
    }

    /// Number of entries in the local table of `v`: q^degree.
    pub fn table_len(&self, v: Vertex) -> usize {
        self.tables[v].len()
    }
}

/// Reorders a dense table whose axes follow `given` neighbor order into
/// `sorted` neighbor order (last axis fastest in both).
fn permute_table_axes(q: usize, table: &[f64], given: &[Vertex], sorted: &[Vertex]) -> Vec<f64> {
    if given == sorted {
        return table.to_vec();
    }
    let degree = given.len();
    // slot_map[k] = position in `given` of the k-th sorted neighbor
    let slot_map: Vec<usize> = sorted
        .iter()
        .map(|s| given.iter().position(|g| g == s).unwrap())
        .collect();
    let mut out = vec![0.0; table.len()];
    let mut letters = vec![0usize; degree];
    for (dst, slot) in out.iter_mut().enumerate() {
        // decode dst in sorted order, last axis fastest
        let mut rem = dst;
        for k in (0..degree).rev() {
            letters[k] = rem % q;
            rem /= q;
        }
        let mut src = 0usize;
        for g in 0..degree {
            // letter of the neighbor sitting at `given` position g
            let k = slot_map.iter().position(|&m| m == g).unwrap();
            src = src * q + letters[k];
        }
        *slot = table[src];
    }
    out
}

/// Canonical rank of a local configuration: letters follow the vertex's
/// sorted neighbor order, the last neighbor varies fastest.
pub fn local_index(model: &ModelSpec, vertex: Vertex, letters: &[usize]) -> Result<usize> {
    let degree = model.degree(vertex);
    if letters.len() != degree {
        return Err(Error::InvalidArgument(format!(
            "local configuration has {} letters, vertex {} has degree {degree}",
            letters.len(),
            model.vertex_id(vertex)
        )));
    }
    let mut idx = 0usize;
    for &l in letters {
        if l >= model.q() {
            return Err(Error::InvalidArgument(format!(
                "letter {l} out of range for alphabet size {}",
                model.q()
            )));
        }
        idx = idx * model.q() + l;
    }
    Ok(idx)
}

/// Inverse of [`local_index`].
pub fn decode_local_index(model: &ModelSpec, vertex: Vertex, mut idx: usize) -> Vec<usize> {
    let degree = model.degree(vertex);
    let mut letters = vec![0usize; degree];
    for k in (0..degree).rev() {
        letters[k] = idx % model.q();
        idx /= model.q();
    }
    letters
}

/// One letter per edge; `sigma_ab == sigma_ba` holds by construction since a
/// single value is stored per undirected edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigAssignment(pub Vec<usize>);

impl ConfigAssignment {
    pub fn zero(model: &ModelSpec) -> Self {
        ConfigAssignment(vec![0; model.edge_count()])
    }

    pub fn letter(&self, e: Edge) -> usize {
        self.0[e]
    }

    /// Local configuration of `vertex` (letters in adjacency slot order).
    pub fn local(&self, model: &ModelSpec, vertex: Vertex) -> Vec<usize> {
        model.incident_edges(vertex).iter().map(|&e| self.0[e]).collect()
    }

    /// Edges carrying a non-ground letter.
    pub fn support(&self) -> Vec<Edge> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(e, _)| e)
            .collect()
    }
}

/// Reports every invariant violation; empty iff the model is valid.
pub fn validate(model: &ModelSpec) -> Diagnostics {
    let mut diags = Diagnostics::default();
    for v in 0..model.vertex_count() {
        let id = model.vertex_id(v);
        let expected = (model.q() as u128).pow(model.degree(v) as u32);
        if model.table(v).len() as u128 != expected {
            diags.push(
                Severity::Error,
                format!("vertex {id}"),
                format!("table has {} entries, expected {expected}", model.table(v).len()),
            );
            continue;
        }
        for (i, &x) in model.table(v).iter().enumerate() {
            if !x.is_finite() {
                diags.push(
                    Severity::Error,
                    format!("vertex {id}, entry {i}"),
                    format!("non-finite table value {x}"),
                );
            } else if model.positivity_required() && x <= 0.0 {
                diags.push(
                    Severity::Error,
                    format!("vertex {id}, entry {i}"),
                    format!("level-0 tables must be strictly positive, found {x}"),
                );
            }
        }
    }
    diags
}

#[derive(Serialize, Deserialize)]
struct VertexDoc {
    id: String,
    neighbors: Vec<String>,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    q: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    level: usize,
    vertices: Vec<VertexDoc>,
}

fn is_zero(x: &usize) -> bool {
    *x == 0
}

/// Parses a model document. Neighbor lists may appear in any order in the
/// file; the table axes are taken to follow the listed order and are
/// permuted into canonical ascending-id order on load.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {}: {e}", e.line())))?;
    let model = ModelSpec::build(
        doc.q,
        doc.vertices
            .into_iter()
            .map(|v| (v.id, v.neighbors, v.table))
            .collect(),
        doc.level,
    )?;
    let diags = validate(&model);
    if !diags.is_empty() {
        return Err(Error::Validation(diags));
    }
    Ok(model)
}

/// Serializes a model canonically (vertices and neighbor lists ascending by
/// id, tables in canonical index order, float values round-trip exact).
pub fn serialize_model(model: &ModelSpec) -> String {
    let doc = ModelDoc {
        q: model.q(),
        level: model.level(),
        vertices: (0..model.vertex_count())
            .map(|v| VertexDoc {
                id: model.vertex_id(v).to_string(),
                neighbors: model
                    .neighbors(v)
                    .iter()
                    .map(|&n| model.vertex_id(n).to_string())
                    .collect(),
                table: model.table(v).to_vec(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("model serialization cannot fail");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> &'static str {
        r#"{"q": 2, "vertices": [
            {"id": "a", "neighbors": ["b"], "table": [1.0, 1.0]},
            {"id": "b", "neighbors": ["a"], "table": [1.0, 1.0]}
        ]}"#
    }

    #[test]
    fn parses_minimal_model() {
        let m = parse_model(minimal_doc()).unwrap();
        assert_eq!(m.vertex_count(), 2);
        assert_eq!(m.edge_count(), 1);
        assert_eq!(m.q(), 2);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn rejects_asymmetric_adjacency() {
        let doc = r#"{"q": 2, "vertices": [
            {"id": "a", "neighbors": ["b"], "table": [1.0, 1.0]},
            {"id": "b", "neighbors": [], "table": [1.0]}
        ]}"#;
        let err = parse_model(doc).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "got {err:?}");
        assert!(err.to_string().contains("asymmetric"));
    }

    #[test]
    fn parses_k4() {
        let ids = ["a", "b", "c", "d"];
        let vertices: Vec<(String, Vec<String>, Vec<f64>)> = ids
            .iter()
            .map(|&id| {
                let nbrs = ids.iter().filter(|&&n| n != id).map(|&n| n.to_string()).collect();
                (id.to_string(), nbrs, vec![1.0; 8])
            })
            .collect();
        let m = ModelSpec::build(2, vertices, 0).unwrap();
        assert_eq!(m.edge_count(), 6);
        assert_eq!(m.degree(0), 3);
    }

    #[test]
    fn rejects_table_length_mismatch() {
        let doc = r#"{"q": 2, "vertices": [
            {"id": "a", "neighbors": ["b"], "table": [1.0, 1.0, 1.0]},
            {"id": "b", "neighbors": ["a"], "table": [1.0, 1.0]}
        ]}"#;
        assert!(parse_model(doc).is_err());
    }

    #[test]
    fn rejects_nonpositive_level0_entry() {
        let doc = r#"{"q": 2, "vertices": [
            {"id": "a", "neighbors": ["b"], "table": [1.0, 0.0]},
            {"id": "b", "neighbors": ["a"], "table": [1.0, 1.0]}
        ]}"#;
        let err = parse_model(doc).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn local_index_conventions() {
        let ids = ["a", "b", "c", "d"];
        let vertices: Vec<(String, Vec<String>, Vec<f64>)> = ids
            .iter()
            .map(|&id| {
                let nbrs = ids.iter().filter(|&&n| n != id).map(|&n| n.to_string()).collect();
                (id.to_string(), nbrs, vec![1.0; 8])
            })
            .collect();
        let m = ModelSpec::build(2, vertices, 0).unwrap();
        assert_eq!(local_index(&m, 0, &[0, 0, 0]).unwrap(), 0);
        assert_eq!(local_index(&m, 0, &[1, 1, 1]).unwrap(), 7);
        // last neighbor varies fastest
        assert_eq!(local_index(&m, 0, &[0, 0, 1]).unwrap(), 1);
        assert!(local_index(&m, 0, &[2, 0, 0]).is_err());
        assert!(local_index(&m, 0, &[0, 0]).is_err());
    }

    #[test]
    fn local_index_q3() {
        let vertices = vec![
            ("a".to_string(), vec!["b".to_string(), "c".to_string()], vec![1.0; 9]),
            ("b".to_string(), vec!["a".to_string()], vec![1.0; 3]),
            ("c".to_string(), vec!["a".to_string()], vec![1.0; 3]),
        ];
        let m = ModelSpec::build(3, vertices, 0).unwrap();
        assert_eq!(local_index(&m, 0, &[0, 1]).unwrap(), 1);
        assert_eq!(local_index(&m, 0, &[1, 0]).unwrap(), 3);
    }

    #[test]
    fn local_index_bijective_exhaustively() {
        // all q <= 4, degree <= 4: star graphs
        for q in 1..=4usize {
            for degree in 0..=4usize {
                let mut vertices = vec![(
                    "hub".to_string(),
                    (0..degree).map(|i| format!("v{i}")).collect::<Vec<_>>(),
                    vec![1.0; q.pow(degree as u32)],
                )];
                for i in 0..degree {
                    vertices.push((format!("v{i}"), vec!["hub".to_string()], vec![1.0; q]));
                }
                let m = ModelSpec::build(q, vertices, 0).unwrap();
                let hub = m.vertex_index("hub").unwrap();
                let mut seen = vec![false; q.pow(degree as u32)];
                let mut letters = vec![0usize; degree];
                loop {
                    let idx = local_index(&m, hub, &letters).unwrap();
                    assert!(!seen[idx]);
                    seen[idx] = true;
                    assert_eq!(decode_local_index(&m, hub, idx), letters);
                    // advance odometer
                    let mut k = degree;
                    loop {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                        letters[k] += 1;
                        if letters[k] < q {
                            break;
                        }
                        letters[k] = 0;
                        if k == 0 {
                            k = usize::MAX;
                            break;
                        }
                    }
                    if k == usize::MAX || degree == 0 {
                        break;
                    }
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn neighbor_order_in_file_is_irrelevant() {
        // same model with b's table axes given in swapped neighbor order
        let canonical = r#"{"q": 2, "vertices": [
            {"id": "a", "neighbors": ["b"], "table": [1.0, 2.0]},
            {"id": "b", "neighbors": ["a", "c"], "table": [1.0, 2.0, 3.0, 4.0]},
            {"id": "c", "neighbors": ["b"], "table": [1.0, 1.0]}
        ]}"#;
        let swapped = r#"{"q": 2, "vertices": [
            {"id": "a", "neighbors": ["b"], "table": [1.0, 2.0]},
            {"id": "b", "neighbors": ["c", "a"], "table": [1.0, 3.0, 2.0, 4.0]},
            {"id": "c", "neighbors": ["b"], "table": [1.0, 1.0]}
        ]}"#;
        assert_eq!(parse_model(canonical).unwrap(), parse_model(swapped).unwrap());
    }

    #[test]
    fn serialize_round_trips() {
        let doc = r#"{"q": 3, "vertices": [
            {"id": "a", "neighbors": ["b", "c"], "table": [0.1, 0.25, 3.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]},
            {"id": "b", "neighbors": ["a"], "table": [1.5, 2.5, 0.125]},
            {"id": "c", "neighbors": ["a"], "table": [1.0, 1.0, 0.3333333333333333]}
        ]}"#;
        let m = parse_model(doc).unwrap();
        let round = parse_model(&serialize_model(&m)).unwrap();
        assert_eq!(m, round);
    }

    #[test]
    fn validate_reports_zero_entry_and_bad_length() {
        let m0 = parse_model(minimal_doc()).unwrap();
        let mut m = m0.clone();
        m.set_table(0, vec![1.0, 0.0]);
        let d = validate(&m);
        assert_eq!(d.0.len(), 1);
        assert!(d.0[0].message.contains("strictly positive"));

        let mut m = m0;
        m.set_table(1, vec![1.0; 7]);
        let d = validate(&m);
        assert_eq!(d.0.len(), 1);
        assert!(d.0[0].message.contains("expected"));
    }
}
