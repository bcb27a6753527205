//! Envelope Cholesky factorization under a reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

/// Symmetric matrix given by its lower triangle, row by row: `rows[i]`
/// holds `(j, value)` with `j <= i`. Duplicates are summed.
pub(crate) struct SymLower {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

/// Reverse Cuthill–McKee ordering of the sparsity graph of `a`.
/// Returns `perm` with `perm[new] = old`.
pub(crate) fn rcm_order(a: &SymLower) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in a.rows.iter().enumerate() {
        for &(j, _) in row {
            if j != i {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    let mut queue = VecDeque::new();
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `L Lᵀ` factor of a symmetric positive definite matrix in envelope
/// storage, applied through a fixed symmetric permutation.
pub(crate) struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug)]
pub(crate) struct NotPositiveDefinite;

impl EnvelopeCholesky {
    pub fn factorize(a: &SymLower, perm: Vec<usize>) -> Result<Self, NotPositiveDefinite> {
        let n = a.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in a.rows.iter().enumerate() {
            for &(j, v) in row {
                let (pi, pj) = (inv[i], inv[j]);
                let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                first[r] = first[r].min(c);
                entries[r].push((c, v));
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut values = vec![0.0; total];
        for (i, row) in entries.iter().enumerate() {
            for &(j, v) in row {
                values[start[i] + j - first[i]] += v;
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = values[start[i] + j - fi];
                for k in k0..j {
                    s -= values[start[i] + k - fi] * values[start[j] + k - fj];
                }
                values[start[i] + j - fi] = s / values[start[j + 1] - 1];
            }
            let mut d = values[start[i + 1] - 1];
            for k in fi..i {
                let l = values[start[i] + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(NotPositiveDefinite);
            }
            values[start[i + 1] - 1] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            first,
            start,
            values,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.n;
        work.clear();
        work.extend(self.perm.iter().map(|&old| b[old]));
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let mut s = work[i];
            for (k, l) in (fi..i).zip(row) {
                s -= l * work[k];
            }
            work[i] = s / row[row.len() - 1];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let xi = work[i] / row[row.len() - 1];
            work[i] = xi;
            for (k, l) in (fi..i).zip(row) {
                work[k] -= l * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = work[new];
        }
    }
}
