//! Brute-force oracle: partition function, marginals and gauged graphic
//! traces by full enumeration of edge-variable configurations.
//!
//! Summation is deterministic: configurations are visited in canonical order
//! (edges in canonical order, last edge fastest) in fixed-size chunks, and
//! chunk partials are reduced in chunk order. Results do not depend on the
//! rayon worker count.

use rayon::prelude::*;

use crate::gauge::{check_duality, GaugeSet, CONSUMER_DUALITY_TOL};
use crate::model::{ConfigAssignment, ModelSpec, Vertex};
use crate::{Error, Result};

/// Default enumeration guard, in total configurations.
pub const DEFAULT_MAX_TERMS: u128 = 1 << 24;

/// Configurations per summation chunk. Fixed so that the reduction order is
/// independent of the worker count.
const CHUNK: u128 = 8192;

/// Exact quantities of a model, normalized by the partition function.
#[derive(Debug, Clone)]
pub struct ExactReport {
    pub z: f64,
    /// -ln z
    pub free_energy: f64,
    /// Per edge (canonical order), a length-q probability vector.
    pub per_edge_marginals: Vec<Vec<f64>>,
    /// Per vertex, a length-q^degree probability vector over local configs.
    pub per_vertex_marginals: Vec<Vec<f64>>,
}

/// Number of configurations to enumerate, or an error when it exceeds `limit`.
pub fn checked_term_count(model: &ModelSpec, limit: u128) -> Result<u128> {
    let terms = (model.q() as u128)
        .checked_pow(model.edge_count() as u32)
        .ok_or(Error::GuardExceeded { terms: u128::MAX, limit })?;
    if terms > limit {
        return Err(Error::GuardExceeded { terms, limit });
    }
    Ok(terms)
}

/// Visits configurations `start..end` in canonical order. `visit` receives
/// the configuration rank and the per-edge letters.
pub(crate) fn for_each_config(
    model: &ModelSpec,
    start: u128,
    end: u128,
    mut visit: impl FnMut(u128, &[usize]),
) {
    let q = model.q() as u128;
    let ne = model.edge_count();
    let mut digits = vec![0usize; ne];
    let mut rem = start;
    for k in (0..ne).rev() {
        digits[k] = (rem % q) as usize;
        rem /= q;
    }
    let mut n = start;
    while n < end {
        visit(n, &digits);
        n += 1;
        // odometer increment, last edge fastest
        for k in (0..ne).rev() {
            digits[k] += 1;
            if digits[k] < model.q() {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Weight of one configuration under per-vertex tables: the product over
/// vertices of the table entry selected by the local configuration.
#[inline]
fn config_weight(model: &ModelSpec, tables: &[Vec<f64>], digits: &[usize]) -> f64 {
    let q = model.q();
    let mut w = 1.0;
    for (a, table) in tables.iter().enumerate() {
        let mut idx = 0usize;
        for &e in model.incident_edges(a) {
            idx = idx * q + digits[e];
        }
        w *= table[idx];
    }
    w
}

/// Chunked deterministic sum of `config_weight` over all configurations.
fn enumerate_sum(model: &ModelSpec, tables: &[Vec<f64>], terms: u128) -> f64 {
    let nchunks = terms.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let start = c as u128 * CHUNK;
            let end = (start + CHUNK).min(terms);
            let mut s = 0.0;
            for_each_config(model, start, end, |_, digits| {
                s += config_weight(model, tables, digits);
            });
            s
        })
        .collect();
    partials.iter().sum()
}

/// Exact partition function by exhaustive enumeration.
pub fn exact_partition(model: &ModelSpec, max_terms: u128) -> Result<f64> {
    let terms = checked_term_count(model, max_terms)?;
    let tables: Vec<Vec<f64>> = (0..model.vertex_count()).map(|a| model.table(a).to_vec()).collect();
    Ok(enumerate_sum(model, &tables, terms))
}

/// Exact partition function, marginals, and free energy.
pub fn exact_marginals(model: &ModelSpec, max_terms: u128) -> Result<ExactReport> {
    let terms = checked_term_count(model, max_terms)?;
    let q = model.q();

    #[derive(Clone)]
    struct Acc {
        z: f64,
        edge: Vec<Vec<f64>>,
        vertex: Vec<Vec<f64>>,
    }

    let nchunks = terms.div_ceil(CHUNK);
    let fresh = || Acc {
        z: 0.0,
        edge: (0..model.edge_count()).map(|_| vec![0.0; q]).collect(),
        vertex: (0..model.vertex_count()).map(|a| vec![0.0; model.table_len(a)]).collect(),
    };
    let tables: Vec<Vec<f64>> = (0..model.vertex_count()).map(|a| model.table(a).to_vec()).collect();

    let partials: Vec<Acc> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let start = c as u128 * CHUNK;
            let end = (start + CHUNK).min(terms);
            let mut acc = fresh();
            for_each_config(model, start, end, |_, digits| {
                let w = config_weight(model, &tables, digits);
                acc.z += w;
                for (e, &l) in digits.iter().enumerate() {
                    acc.edge[e][l] += w;
                }
                for a in 0..model.vertex_count() {
                    let mut idx = 0usize;
                    for &e in model.incident_edges(a) {
                        idx = idx * q + digits[e];
                    }
                    acc.vertex[a][idx] += w;
                }
            });
            acc
        })
        .collect();

    let mut total = fresh();
    for acc in partials {
        total.z += acc.z;
        for (t, p) in total.edge.iter_mut().zip(&acc.edge) {
            for (x, y) in t.iter_mut().zip(p) {
                *x += y;
            }
        }
        for (t, p) in total.vertex.iter_mut().zip(&acc.vertex) {
            for (x, y) in t.iter_mut().zip(p) {
                *x += y;
            }
        }
    }

    let z = total.z;
    for v in total.edge.iter_mut().chain(total.vertex.iter_mut()) {
        for x in v.iter_mut() {
            *x /= z;
        }
    }
    Ok(ExactReport {
        z,
        free_energy: -z.ln(),
        per_edge_marginals: total.edge,
        per_vertex_marginals: total.vertex,
    })
}

/// The full normalized distribution p(sigma) in canonical configuration
/// order.
pub fn full_distribution(model: &ModelSpec, max_terms: u128) -> Result<Vec<f64>> {
    let terms = checked_term_count(model, max_terms)?;
    let tables: Vec<Vec<f64>> = (0..model.vertex_count()).map(|a| model.table(a).to_vec()).collect();
    let mut p = Vec::with_capacity(terms as usize);
    for_each_config(model, 0, terms, |_, digits| {
        p.push(config_weight(model, &tables, digits));
    });
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    Ok(p)
}

/// Gauged factor of one vertex: sum over the vertex's old local
/// configurations of the factor times one gauge-matrix row per incident
/// edge. `rows[k]` selects the row (new letter) for adjacency slot `k`.
pub(crate) fn gauged_vertex_value(
    model: &ModelSpec,
    gauges: &GaugeSet,
    a: Vertex,
    rows: &[usize],
) -> f64 {
    let q = model.q();
    let degree = model.degree(a);
    debug_assert_eq!(rows.len(), degree);
    let table = model.table(a);
    let mut letters = vec![0usize; degree];
    let mut sum = 0.0;
    for (idx, &f) in table.iter().enumerate() {
        let mut rem = idx;
        for k in (0..degree).rev() {
            letters[k] = rem % q;
            rem /= q;
        }
        let mut w = f;
        for (k, &b) in model.neighbors(a).iter().enumerate() {
            w *= gauges.matrix(a, b)[(rows[k], letters[k])];
        }
        sum += w;
    }
    sum
}

/// All gauged factors of one vertex, indexed by the new local configuration.
pub(crate) fn gauged_vertex_table(model: &ModelSpec, gauges: &GaugeSet, a: Vertex) -> Vec<f64> {
    let q = model.q();
    let degree = model.degree(a);
    let len = model.table_len(a);
    let mut out = Vec::with_capacity(len);
    let mut rows = vec![0usize; degree];
    for idx in 0..len {
        let mut rem = idx;
        for k in (0..degree).rev() {
            rows[k] = rem % q;
            rem /= q;
        }
        out.push(gauged_vertex_value(model, gauges, a, &rows));
    }
    out
}

/// One term of the graphic trace: the product over vertices of the gauged
/// factors evaluated at `sigma`.
pub fn trace_term(model: &ModelSpec, gauges: &GaugeSet, sigma: &ConfigAssignment) -> Result<f64> {
    if sigma.0.len() != model.edge_count() {
        return Err(Error::InvalidArgument(format!(
            "configuration has {} letters, model has {} edges",
            sigma.0.len(),
            model.edge_count()
        )));
    }
    if let Some(&l) = sigma.0.iter().find(|&&l| l >= model.q()) {
        return Err(Error::InvalidArgument(format!(
            "letter {l} out of range for alphabet size {}",
            model.q()
        )));
    }
    gauges.check_shape(model)?;
    let mut term = 1.0;
    for a in 0..model.vertex_count() {
        term *= gauged_vertex_value(model, gauges, a, &sigma.local(model, a));
    }
    Ok(term)
}

/// Sum of all trace terms. Equals the partition function for any gauge set
/// satisfying the duality constraint.
pub fn graphic_trace(model: &ModelSpec, gauges: &GaugeSet, max_terms: u128) -> Result<f64> {
    gauges.check_shape(model)?;
    let residual = check_duality(gauges);
    if residual > CONSUMER_DUALITY_TOL {
        return Err(Error::DualityViolation { residual, tol: CONSUMER_DUALITY_TOL });
    }
    let terms = checked_term_count(model, max_terms)?;
    let tables: Vec<Vec<f64>> = (0..model.vertex_count())
        .map(|a| gauged_vertex_table(model, gauges, a))
        .collect();
    Ok(enumerate_sum(model, &tables, terms))
}
