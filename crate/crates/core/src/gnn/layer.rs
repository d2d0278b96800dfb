use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::GnnError;

/// `D^-1/2 (A + I) D^-1/2` stored as neighbour lists, self loop included.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdjacency {
    /// `(j, s_ij)` for every `j` adjacent to `i` or equal to it, `j` ascending.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl NormAdjacency {
    /// `edges` are undirected; duplicates and self loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> NormAdjacency {
        let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a != b {
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for l in &mut nbrs {
            l.sort_unstable();
            l.dedup();
        }
        let deg: Vec<usize> = nbrs.iter().map(Vec::len).collect();
        let rows = nbrs
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.iter()
                    .map(|&j| (j, 1.0 / ((deg[i] * deg[j]) as f64).sqrt()))
                    .collect()
            })
            .collect();
        NormAdjacency { rows }
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// `S·M` with every row summed in an order fixed by term values, so the
    /// result does not depend on how nodes are numbered.
    pub fn propagate(&self, m: ArrayView2<f64>) -> Array2<f64> {
        let width = m.ncols();
        let mut out = Array2::zeros((m.nrows(), width));
        let mut order: Vec<(usize, f64)> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            order.clear();
            order.extend_from_slice(row);
            order.sort_by(|&(ja, sa), &(jb, sb)| {
                sa.total_cmp(&sb).then_with(|| {
                    let (ra, rb) = (m.row(ja), m.row(jb));
                    ra.iter()
                        .zip(rb.iter())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| *o != Ordering::Equal)
                        .unwrap_or(Ordering::Equal)
                })
            });
            let mut acc = out.row_mut(i);
            for &(j, s) in &order {
                acc.scaled_add(s, &m.row(j));
            }
        }
        out
    }

    /// `S·M` in plain neighbour order; `S` is symmetric so this also serves
    /// as the transpose in backpropagation.
    pub fn propagate_fast(&self, m: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((m.nrows(), m.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = out.row_mut(i);
            for &(j, s) in row {
                acc.scaled_add(s, &m.row(j));
            }
        }
        out
    }
}

/// Rows of a matrix that may be nonzero, with their values.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    pub rows: Vec<usize>,
    pub data: Array2<f64>,
}

impl NormAdjacency {
    /// `S·M` for a row-sparse `M`; the result lists every row reached.
    pub(crate) fn propagate_sparse(&self, m: &SparseRows, slot: &mut [usize]) -> SparseRows {
        let mut rows: Vec<usize> = m.rows.iter().flat_map(|&r| self.rows[r].iter().map(|&(j, _)| j)).collect();
        rows.sort_unstable();
        rows.dedup();
        for (k, &r) in rows.iter().enumerate() {
            slot[r] = k;
        }
        let mut data = Array2::zeros((rows.len(), m.data.ncols()));
        for (k, &r) in m.rows.iter().enumerate() {
            let src = m.data.row(k);
            for &(j, s) in &self.rows[r] {
                data.row_mut(slot[j]).scaled_add(s, &src);
            }
        }
        SparseRows { rows, data }
    }
}

pub(crate) fn relu_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| v.max(0.0));
}

pub(crate) fn add_bias(z: &mut Array2<f64>, b: &Array1<f64>) {
    for mut row in z.axis_iter_mut(Axis(0)) {
        row += b;
    }
}

/// `ReLU(S·H·W + b)`.
pub fn gcn_layer(
    h: &Array2<f64>,
    adj: &NormAdjacency,
    w: &Array2<f64>,
    b: &Array1<f64>,
) -> Result<Array2<f64>, GnnError> {
    if h.nrows() != adj.node_count() || h.ncols() != w.nrows() || w.ncols() != b.len() {
        return Err(GnnError::DimensionMismatch(format!(
            "H {:?}, {} nodes, W {:?}, b {}",
            h.dim(),
            adj.node_count(),
            w.dim(),
            b.len()
        )));
    }
    let mut z = adj.propagate(h.dot(w).view());
    add_bias(&mut z, b);
    relu_inplace(&mut z);
    Ok(z)
}
