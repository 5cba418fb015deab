use ndarray::{Array2, ArrayView2};

use super::TweetGraph;
use crate::{Error, Result};

/// Sparse symmetric operator `Â = D̃^{-1/2} Ã D̃^{-1/2}` with `Ã = A + I`,
/// stored in CSR form with column indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    degrees: Vec<f64>,
}

/// `Â` for `g`, with every edge weighted `alpha`.
pub fn normalize(g: &TweetGraph, alpha: f64) -> Result<NormalizedAdjacency> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "edge weight must be positive, got {alpha}"
        )));
    }
    let n = g.n();
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in g.edges() {
        neighbours[a].push(b);
        neighbours[b].push(a);
    }
    let degrees: Vec<f64> = neighbours
        .iter()
        .map(|nb| 1.0 + alpha * nb.len() as f64)
        .collect();
    let mut triplets = Vec::with_capacity(n + 2 * g.edges().len());
    for (i, nb) in neighbours.iter().enumerate() {
        triplets.push((i, i, 1.0 / degrees[i]));
        for &j in nb {
            triplets.push((i, j, alpha / (degrees[i] * degrees[j]).sqrt()));
        }
    }
    Ok(NormalizedAdjacency::from_triplets(n, triplets, degrees))
}

impl NormalizedAdjacency {
    pub(crate) fn from_triplets(
        n: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        degrees: Vec<f64>,
    ) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &triplets {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols: triplets.iter().map(|t| t.1).collect(),
            vals: triplets.iter().map(|t| t.2).collect(),
            degrees,
        }
    }

    /// The operator of an edgeless graph.
    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect(), vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `D̃_ii`, the row sums of `Ã`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for (i, j, v) in self.triplets() {
            m[[i, j]] = v;
        }
        m
    }

    /// Exact structural and numeric symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.triplets()
            .all(|(i, j, v)| self.get(j, i) == v && self.row(j).any(|(c, _)| c == i))
    }

    /// Sparse–dense product `Â · H`.
    pub fn matmul(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if h.nrows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency is {n}×{n} but features have {} rows",
                h.nrows(),
                n = self.n
            )));
        }
        let mut out = Array2::zeros((self.n, h.ncols()));
        for i in 0..self.n {
            let mut row = out.row_mut(i);
            for (j, v) in self.row(i) {
                row.scaled_add(v, &h.row(j));
            }
        }
        Ok(out)
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Shape(
                "permutation length differs from node count".into(),
            ));
        }
        let mut degrees = vec![0.0; self.n];
        for (i, &p) in perm.iter().enumerate() {
            degrees[p] = self.degrees[i];
        }
        let triplets = self
            .triplets()
            .map(|(i, j, v)| (perm[i], perm[j], v))
            .collect();
        Ok(Self::from_triplets(self.n, triplets, degrees))
    }

    /// Restricts to nodes `0..len`. Every removed node must be isolated, so
    /// the kept block is unchanged by the removal.
    pub fn leading_block(&self, len: usize) -> Result<Self> {
        if len > self.n {
            return Err(Error::Shape(format!(
                "cannot take {len} of {} nodes",
                self.n
            )));
        }
        if len == self.n {
            return Ok(self.clone());
        }
        let mut triplets = Vec::new();
        for (i, j, v) in self.triplets() {
            match (i < len, j < len) {
                (true, true) => triplets.push((i, j, v)),
                _ if i == j => {}
                _ => {
                    return Err(Error::Shape(format!(
                        "node {} beyond the first {len} is connected to another node",
                        i.max(j)
                    )))
                }
            }
        }
        Ok(Self::from_triplets(
            len,
            triplets,
            self.degrees[..len].to_vec(),
        ))
    }
}

/// Packs graphs into one block-diagonal operator. Returns the operator and
/// each graph's first row in the packed index space.
pub fn batch_graphs(graphs: &[NormalizedAdjacency]) -> Result<(NormalizedAdjacency, Vec<usize>)> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("cannot batch zero graphs".into()));
    }
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut triplets = Vec::new();
    let mut degrees = Vec::new();
    let mut offset = 0;
    for g in graphs {
        offsets.push(offset);
        triplets.extend(g.triplets().map(|(i, j, v)| (i + offset, j + offset, v)));
        degrees.extend_from_slice(&g.degrees);
        offset += g.n;
    }
    Ok((
        NormalizedAdjacency::from_triplets(offset, triplets, degrees),
        offsets,
    ))
}
