//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! The factorization is left-looking: columns are processed in order of
//! increasing nonzero count, each column is reduced against the already
//! computed `L` columns in a dense work vector, and the pivot row is picked
//! by threshold partial pivoting preferring sparse rows.

/// Sparse column as `(row, value)` pairs.
pub(crate) type SparseCol = Vec<(usize, f64)>;

const DROP_TOL: f64 = 1e-14;
const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug)]
pub(crate) struct Singular {
    /// Basis positions whose column could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot, one per failed position.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BasisFactor {
    m: usize,
    pivot_row: Vec<usize>,
    pivot_pos: Vec<usize>,
    l_cols: Vec<SparseCol>,
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
    work: Vec<f64>,
}

impl BasisFactor {
    /// Factorizes the basis whose column at position `k` is `cols[k]`.
    pub fn factorize(m: usize, cols: &[&SparseCol]) -> Result<BasisFactor, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut row_count = vec![0usize; m];
        for c in cols {
            for &(i, _) in c.iter() {
                row_count[i] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&k| (cols[k].len(), k));

        let mut f = BasisFactor {
            m,
            pivot_row: Vec::with_capacity(m),
            pivot_pos: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
            etas: Vec::new(),
            work: vec![0.0; m],
        };
        let mut pivot_of_row: Vec<Option<usize>> = vec![None; m];
        let mut w = vec![0.0; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut failed = Vec::new();

        for &pos in &order {
            for &(i, v) in cols[pos].iter() {
                if !in_pattern[i] {
                    in_pattern[i] = true;
                    pattern.push(i);
                }
                w[i] += v;
            }
            for p in 0..f.pivot_row.len() {
                let v = w[f.pivot_row[p]];
                if v == 0.0 {
                    continue;
                }
                for &(i, l) in &f.l_cols[p] {
                    if !in_pattern[i] {
                        in_pattern[i] = true;
                        pattern.push(i);
                    }
                    w[i] -= l * v;
                }
            }

            let mut max_abs = 0.0f64;
            for &i in &pattern {
                if pivot_of_row[i].is_none() {
                    max_abs = max_abs.max(w[i].abs());
                }
            }
            if max_abs <= SINGULAR_TOL {
                failed.push(pos);
            } else {
                let threshold = PIVOT_THRESHOLD * max_abs;
                let mut best: Option<usize> = None;
                for &i in &pattern {
                    if pivot_of_row[i].is_some() || w[i].abs() < threshold {
                        continue;
                    }
                    best = match best {
                        None => Some(i),
                        Some(b) => {
                            let better = (row_count[i], i) < (row_count[b], b);
                            Some(if better { i } else { b })
                        }
                    };
                }
                let r = best.expect("pivot candidate");
                let piv = w[r];
                let k = f.pivot_row.len();
                let mut u = Vec::new();
                let mut l = Vec::new();
                for &i in &pattern {
                    let v = w[i];
                    if v.abs() <= DROP_TOL || i == r {
                        continue;
                    }
                    match pivot_of_row[i] {
                        Some(p) => u.push((p, v)),
                        None => l.push((i, v / piv)),
                    }
                }
                pivot_of_row[r] = Some(k);
                f.pivot_row.push(r);
                f.pivot_pos.push(pos);
                f.l_cols.push(l);
                f.u_cols.push(u);
                f.u_diag.push(piv);
            }
            for &i in &pattern {
                w[i] = 0.0;
                in_pattern[i] = false;
            }
            pattern.clear();
        }

        if failed.is_empty() {
            Ok(f)
        } else {
            let rows = (0..m).filter(|&i| pivot_of_row[i].is_none()).collect();
            Err(Singular {
                positions: failed,
                rows,
            })
        }
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = rhs` in place. On entry `rhs` is indexed by row, on
    /// exit by basis position.
    pub fn ftran(&mut self, rhs: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let v = rhs[self.pivot_row[k]];
            if v == 0.0 {
                continue;
            }
            for &(i, l) in &self.l_cols[k] {
                rhs[i] -= l * v;
            }
        }
        let x = &mut self.work;
        for k in (0..m).rev() {
            let xk = rhs[self.pivot_row[k]] / self.u_diag[k];
            x[self.pivot_pos[k]] = xk;
            if xk == 0.0 {
                continue;
            }
            for &(p, u) in &self.u_cols[k] {
                rhs[self.pivot_row[p]] -= u * xk;
            }
        }
        rhs.copy_from_slice(x);
        for eta in &self.etas {
            let xr = rhs[eta.pos] / eta.pivot;
            rhs[eta.pos] = xr;
            if xr == 0.0 {
                continue;
            }
            for &(i, a) in &eta.entries {
                rhs[i] -= a * xr;
            }
        }
    }

    /// Solves `Bᵀ y = c` in place. On entry `c` is indexed by basis
    /// position, on exit by row.
    pub fn btran(&mut self, c: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(i, a) in &eta.entries {
                s -= a * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        let v = &mut self.work;
        for k in 0..m {
            let mut s = c[self.pivot_pos[k]];
            for &(p, u) in &self.u_cols[k] {
                s -= u * v[self.pivot_row[p]];
            }
            v[self.pivot_row[k]] = s / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let r = self.pivot_row[k];
            let mut s = v[r];
            for &(i, l) in &self.l_cols[k] {
                s -= l * v[i];
            }
            v[r] = s;
        }
        c.copy_from_slice(v);
    }

    /// Records the replacement of the column at `pos` by a column whose
    /// FTRAN image is `alpha` (indexed by position).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}
