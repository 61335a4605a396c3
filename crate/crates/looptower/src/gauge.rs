//! Edge gauge transformations. Each undirected edge {a,b} carries a pair of
//! q x q matrices (G_ab, G_ba), row-indexed by the new variable and
//! column-indexed by the old one. The pair must satisfy the duality
//! constraint sum_s G_ab(s, s') G_ba(s, s'') = delta(s', s''), which is what
//! keeps the partition function invariant.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Edge, ModelSpec, Vertex};
use crate::{Error, Result};

/// Target duality residual when constructing gauges.
pub const CONSTRUCTION_DUALITY_TOL: f64 = 1e-12;
/// Residual accepted by consumers (trace evaluation, gauge application);
/// looser to leave headroom for accumulated floating-point error.
pub const CONSUMER_DUALITY_TOL: f64 = 1e-8;

/// Per-edge pairs of dual gauge matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSet {
    q: usize,
    edges: Vec<(Vertex, Vertex)>,
    /// Per canonical edge (u, v): (G_uv, G_vu).
    mats: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl GaugeSet {
    /// Wraps explicit matrix pairs, one per canonical edge of `model`.
    pub fn new(model: &ModelSpec, mats: Vec<(DMatrix<f64>, DMatrix<f64>)>) -> Self {
        assert_eq!(mats.len(), model.edge_count());
        GaugeSet { q: model.q(), edges: model.edges().to_vec(), mats }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn edge_count(&self) -> usize {
        self.mats.len()
    }

    /// The matrix pair of edge `e` as (G_uv, G_vu) with (u, v) canonical.
    pub fn pair(&self, e: Edge) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.mats[e].0, &self.mats[e].1)
    }

    pub fn pair_mut(&mut self, e: Edge) -> (&mut DMatrix<f64>, &mut DMatrix<f64>) {
        let p = &mut self.mats[e];
        (&mut p.0, &mut p.1)
    }

    pub fn edge_of(&self, a: Vertex, b: Vertex) -> Option<Edge> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    /// The matrix applied at vertex `a` on the edge toward `b`, i.e. G_ab.
    pub fn matrix(&self, a: Vertex, b: Vertex) -> &DMatrix<f64> {
        let e = self.edge_of(a, b).expect("matrix() called for a non-edge");
        if a < b {
            &self.mats[e].0
        } else {
            &self.mats[e].1
        }
    }

    /// Identity on every edge: the trivial element of the gauge group.
    pub fn identity(model: &ModelSpec) -> Self {
        let q = model.q();
        let mats = model
            .edges()
            .iter()
            .map(|_| (DMatrix::identity(q, q), DMatrix::identity(q, q)))
            .collect();
        GaugeSet::new(model, mats)
    }

    /// Seeded random dual pair per edge: G_uv has entries uniform in (-1, 1),
    /// resampled until |det| > 0.1, and G_vu is its inverse-transpose.
    pub fn random_dual(model: &ModelSpec, seed: u64) -> Self {
        let q = model.q();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats = model
            .edges()
            .iter()
            .map(|_| loop {
                let g = DMatrix::from_fn(q, q, |_, _| rng.gen_range(-1.0..1.0));
                if g.determinant().abs() > 0.1 {
                    let dual = g
                        .transpose()
                        .try_inverse()
                        .expect("matrix with |det| > 0.1 is invertible");
                    return (g, dual);
                }
            })
            .collect();
        GaugeSet::new(model, mats)
    }

    pub(crate) fn check_shape(&self, model: &ModelSpec) -> Result<()> {
        if self.q != model.q() || self.edges != model.edges() {
            return Err(Error::InvalidArgument(format!(
                "gauge set shaped for q={}, {} edges; model has q={}, {} edges",
                self.q,
                self.mats.len(),
                model.q(),
                model.edge_count()
            )));
        }
        Ok(())
    }

    /// JSON map from "a->b" directed-edge keys to row-major q x q matrices.
    pub fn to_json(&self, model: &ModelSpec) -> String {
        let mut map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (e, &(u, v)) in model.edges().iter().enumerate() {
            let (guv, gvu) = self.pair(e);
            map.insert(
                format!("{}->{}", model.vertex_id(u), model.vertex_id(v)),
                row_major(guv),
            );
            map.insert(
                format!("{}->{}", model.vertex_id(v), model.vertex_id(u)),
                row_major(gvu),
            );
        }
        let mut s = serde_json::to_string_pretty(&map).expect("gauge serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(model: &ModelSpec, text: &str) -> Result<Self> {
        let map: BTreeMap<String, Vec<f64>> = serde_json::from_str(text)?;
        let q = model.q();
        let mut mats = Vec::with_capacity(model.edge_count());
        for &(u, v) in model.edges() {
            let fwd = format!("{}->{}", model.vertex_id(u), model.vertex_id(v));
            let bwd = format!("{}->{}", model.vertex_id(v), model.vertex_id(u));
            let read = |key: &str| -> Result<DMatrix<f64>> {
                let rows = map
                    .get(key)
                    .ok_or_else(|| Error::Parse(format!("gauge document misses edge {key}")))?;
                if rows.len() != q * q {
                    return Err(Error::Parse(format!(
                        "gauge {key} has {} entries, expected {}",
                        rows.len(),
                        q * q
                    )));
                }
                Ok(DMatrix::from_row_slice(q, q, rows))
            };
            mats.push((read(&fwd)?, read(&bwd)?));
        }
        Ok(GaugeSet::new(model, mats))
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Worst duality violation over edges and letter pairs:
/// max |sum_s G_uv(s, s') G_vu(s, s'') - delta(s', s'')|.
pub fn check_duality(gauges: &GaugeSet) -> f64 {
    let q = gauges.q();
    let mut worst = 0.0f64;
    for e in 0..gauges.edge_count() {
        let (guv, gvu) = gauges.pair(e);
        let product = guv.transpose() * gvu;
        for i in 0..q {
            for j in 0..q {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((product[(i, j)] - target).abs());
            }
        }
    }
    worst
}

/// Applies the gauge transformation to every factor table: each incident
/// edge axis of f_a is contracted against G_ab. The result is an equivalent
/// model (same partition function) whose positivity is no longer guaranteed.
pub fn apply_gauge(model: &ModelSpec, gauges: &GaugeSet) -> Result<ModelSpec> {
    gauges.check_shape(model)?;
    let residual = check_duality(gauges);
    if residual > CONSUMER_DUALITY_TOL {
        return Err(Error::DualityViolation { residual, tol: CONSUMER_DUALITY_TOL });
    }
    let q = model.q();
    let mut out = model.clone();
    for a in 0..model.vertex_count() {
        let degree = model.degree(a);
        let mut table = model.table(a).to_vec();
        for (slot, &b) in model.neighbors(a).iter().enumerate() {
            table = contract_axis(&table, q, degree, slot, gauges.matrix(a, b));
        }
        out.set_table(a, table);
    }
    Ok(relax_positivity(out))
}

/// Rebuilds the model with the positivity requirement dropped (level >= 1).
pub(crate) fn relax_positivity(model: ModelSpec) -> ModelSpec {
    if !model.positivity_required() {
        return model;
    }
    ModelSpec::build(
        model.q(),
        (0..model.vertex_count())
            .map(|v| {
                (
                    model.vertex_id(v).to_string(),
                    model.neighbors(v).iter().map(|&n| model.vertex_id(n).to_string()).collect(),
                    model.table(v).to_vec(),
                )
            })
            .collect(),
        model.level().max(1),
    )
    .expect("relaxing positivity preserves structure")
}

/// new[.., s, ..] = sum_{s'} M(s, s') old[.., s', ..] along one axis of a
/// dense last-axis-fastest table.
fn contract_axis(table: &[f64], q: usize, degree: usize, slot: usize, m: &DMatrix<f64>) -> Vec<f64> {
    let stride = q.pow((degree - 1 - slot) as u32);
    let block = stride * q;
    let mut out = vec![0.0; table.len()];
    for base in (0..table.len()).step_by(block) {
        for inner in 0..stride {
            for s in 0..q {
                let mut acc = 0.0;
                for sp in 0..q {
                    acc += m[(s, sp)] * table[base + sp * stride + inner];
                }
                out[base + s * stride + inner] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_partition, graphic_trace, DEFAULT_MAX_TERMS};
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn identity_gauge_is_exactly_dual() {
        let m = fixtures::single_edge();
        let g = GaugeSet::identity(&m);
        assert_eq!(check_duality(&g), 0.0);
        let (guv, _) = g.pair(0);
        assert_eq!(guv[(0, 0)], 1.0);
        assert_eq!(guv[(0, 1)], 0.0);
    }

    #[test]
    fn scaled_identity_duality_residual() {
        let m = fixtures::single_edge();
        let two = DMatrix::identity(2, 2) * 2.0;
        let g = GaugeSet::new(&m, vec![(two.clone(), two)]);
        assert_eq!(check_duality(&g), 3.0);
    }

    #[test]
    fn random_dual_is_deterministic_and_dual() {
        let m = fixtures::k4_seed42();
        let g0 = GaugeSet::random_dual(&m, 0);
        let g1 = GaugeSet::random_dual(&m, 0);
        assert_eq!(g0, g1);
        for seed in 0..10 {
            let g = GaugeSet::random_dual(&m, seed);
            assert!(check_duality(&g) < CONSTRUCTION_DUALITY_TOL);
        }
    }

    #[test]
    fn apply_gauge_identity_is_noop_on_tables() {
        let m = fixtures::k4_seed42();
        let g = GaugeSet::identity(&m);
        let gauged = apply_gauge(&m, &g).unwrap();
        for a in 0..m.vertex_count() {
            assert_eq!(m.table(a), gauged.table(a));
        }
    }

    #[test]
    fn apply_gauge_preserves_partition() {
        let m = fixtures::k4_seed42();
        let z = exact_partition(&m, DEFAULT_MAX_TERMS).unwrap();
        for seed in [1u64, 7, 42] {
            let g = GaugeSet::random_dual(&m, seed);
            let gauged = apply_gauge(&m, &g).unwrap();
            let zg = exact_partition(&gauged, DEFAULT_MAX_TERMS).unwrap();
            assert_relative_eq!(zg, z, max_relative = 1e-10);
        }
    }

    #[test]
    fn apply_and_trace_routes_agree() {
        let m = fixtures::triangle_q3_seed11();
        for seed in [3u64, 9] {
            let g = GaugeSet::random_dual(&m, seed);
            let via_apply = exact_partition(&apply_gauge(&m, &g).unwrap(), DEFAULT_MAX_TERMS).unwrap();
            let via_trace = graphic_trace(&m, &g, DEFAULT_MAX_TERMS).unwrap();
            assert_relative_eq!(via_apply, via_trace, max_relative = 1e-10);
        }
    }

    #[test]
    fn letter_swap_gauge_swaps_single_edge_table() {
        // G_ab swaps letters on the a side; its dual is the same swap.
        let vertices = vec![
            ("a".to_string(), vec!["b".to_string()], vec![2.0, 5.0]),
            ("b".to_string(), vec!["a".to_string()], vec![1.0, 1.0]),
        ];
        let biased = ModelSpec::build(2, vertices, 0).unwrap();
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = GaugeSet::new(&biased, vec![(swap.clone(), swap)]);
        assert!(check_duality(&g) < 1e-15);
        let gauged = apply_gauge(&biased, &g).unwrap();
        assert_eq!(gauged.table(0), &[5.0, 2.0]);
        assert_eq!(gauged.table(1), &[1.0, 1.0]);
    }

    #[test]
    fn group_closure() {
        // applying H after G equals applying the per-edge matrix products once
        let m = fixtures::triangle_uniform();
        let g = GaugeSet::random_dual(&m, 5);
        let h = GaugeSet::random_dual(&m, 6);
        let sequential = apply_gauge(&apply_gauge(&m, &g).unwrap(), &h).unwrap();
        let mats = (0..m.edge_count())
            .map(|e| {
                let (guv, gvu) = g.pair(e);
                let (huv, hvu) = h.pair(e);
                (huv * guv, hvu * gvu)
            })
            .collect();
        let combined = apply_gauge(&m, &GaugeSet::new(&m, mats)).unwrap();
        for a in 0..m.vertex_count() {
            for (x, y) in sequential.table(a).iter().zip(combined.table(a)) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn residual_row_scaling_leaves_trace_unchanged() {
        let m = fixtures::k4_seed42();
        let z = exact_partition(&m, DEFAULT_MAX_TERMS).unwrap();
        for kappa in [0.5, 2.0] {
            let mut g = GaugeSet::random_dual(&m, 11);
            for e in 0..g.edge_count() {
                let (guv, gvu) = g.pair_mut(e);
                for j in 0..2 {
                    guv[(0, j)] *= kappa;
                    gvu[(0, j)] /= kappa;
                }
            }
            assert!(check_duality(&g) < CONSUMER_DUALITY_TOL);
            let t = graphic_trace(&m, &g, DEFAULT_MAX_TERMS).unwrap();
            assert_relative_eq!(t, z, max_relative = 1e-10);
        }
    }

    #[test]
    fn gauge_json_round_trip() {
        let m = fixtures::triangle_q3_seed11();
        let g = GaugeSet::random_dual(&m, 4);
        let text = g.to_json(&m);
        let back = GaugeSet::from_json(&m, &text).unwrap();
        assert_eq!(g, back);
    }
}
