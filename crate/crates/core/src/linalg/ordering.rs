//! Fill-reducing symmetric orderings.
//!
//! A permutation `perm` lists old indices in their new order: row `k` of the
//! permuted matrix is row `perm[k]` of the original.

use std::collections::VecDeque;
use std::sync::Arc;

use super::SparseMatrix;
use crate::grid::Point;

/// Ordering strategy for the sparse Cholesky factorization.
#[derive(Clone, Debug, Default)]
pub enum Ordering {
    Natural,
    /// Reverse Cuthill–McKee on the matrix graph.
    #[default]
    Rcm,
    /// Coordinate-bisection nested dissection; one point per unknown.
    NestedDissection(Arc<Vec<Point>>),
}

impl Ordering {
    pub fn permutation(&self, m: &SparseMatrix) -> Vec<usize> {
        match self {
            Ordering::Natural => (0..m.n()).collect(),
            Ordering::Rcm => reverse_cuthill_mckee(m),
            Ordering::NestedDissection(coords) => nested_dissection(m, coords),
        }
    }
}

fn neighbors(m: &SparseMatrix, i: usize) -> impl Iterator<Item = usize> + '_ {
    m.col_idx()[m.row_ptr()[i]..m.row_ptr()[i + 1]].iter().copied().filter(move |&j| j != i)
}

fn degree(m: &SparseMatrix, i: usize) -> usize {
    neighbors(m, i).count()
}

/// BFS from `start` restricted to unvisited nodes; returns the level structure.
fn bfs_levels(m: &SparseMatrix, start: usize, blocked: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; m.n()];
    seen[start] = true;
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for u in neighbors(m, v) {
                if !blocked[u] && !seen[u] {
                    seen[u] = true;
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }
    levels
}

fn pseudo_peripheral(m: &SparseMatrix, start: usize, blocked: &[bool]) -> usize {
    let mut node = start;
    let mut depth = bfs_levels(m, node, blocked).len();
    for _ in 0..8 {
        let levels = bfs_levels(m, node, blocked);
        let last = levels.last().unwrap();
        let candidate = *last.iter().min_by_key(|&&v| degree(m, v)).unwrap();
        let d = bfs_levels(m, candidate, blocked).len();
        if d <= depth {
            break;
        }
        depth = d;
        node = candidate;
    }
    node
}

/// Reverse Cuthill–McKee ordering, component by component.
pub fn reverse_cuthill_mckee(m: &SparseMatrix) -> Vec<usize> {
    let n = m.n();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree(m, i)).unwrap();
        let start = pseudo_peripheral(m, seed, &visited);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = neighbors(m, v).filter(|&u| !visited[u]).collect();
            nb.sort_by_key(|&u| degree(m, u));
            for u in nb {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

const LEAF_SIZE: usize = 48;

struct Dissector<'a> {
    m: &'a SparseMatrix,
    coords: &'a [Point],
    stamp: Vec<u32>,
    side: Vec<u8>,
    next_stamp: u32,
    out: Vec<usize>,
}

impl Dissector<'_> {
    fn fresh_stamp(&mut self, set: &[usize]) -> u32 {
        self.next_stamp += 1;
        let s = self.next_stamp;
        for &v in set {
            self.stamp[v] = s;
        }
        s
    }

    /// Boundary of the side `which` against the other side within the set.
    fn boundary(&self, set: &[usize], stamp: u32, which: u8) -> Vec<usize> {
        set.iter()
            .copied()
            .filter(|&v| {
                self.side[v] == which && neighbors(self.m, v).any(|u| self.stamp[u] == stamp && self.side[u] != which)
            })
            .collect()
    }

    fn dissect(&mut self, set: Vec<usize>) {
        if set.len() <= LEAF_SIZE {
            self.out.extend(set);
            return;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &v in &set {
            for d in 0..3 {
                lo[d] = lo[d].min(self.coords[v][d]);
                hi[d] = hi[d].max(self.coords[v][d]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        let mut values: Vec<f64> = set.iter().map(|&v| self.coords[v][axis]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        if values.len() < 2 {
            self.out.extend(set);
            return;
        }
        let stamp = self.fresh_stamp(&set);
        let mid = values.len() / 2;
        let first = mid.saturating_sub(2).max(1);
        let last = (mid + 2).min(values.len() - 1);
        let mut best: Option<(f64, Vec<usize>, f64)> = None;
        for &t in &values[first..=last] {
            for &v in &set {
                self.side[v] = u8::from(self.coords[v][axis] >= t);
            }
            let b0 = self.boundary(&set, stamp, 0);
            let b1 = self.boundary(&set, stamp, 1);
            let sep = if b0.len() <= b1.len() { b0 } else { b1 };
            let n1 = set.iter().filter(|&&v| self.side[v] == 1).count();
            let imbalance = (n1 as f64 / set.len() as f64 - 0.5).abs();
            let score = sep.len() as f64 * (1.0 + 2.0 * imbalance);
            if best.as_ref().map_or(true, |b| score < b.2) {
                best = Some((t, sep, score));
            }
        }
        let (t, sep, _) = best.unwrap();
        for &v in &set {
            self.side[v] = u8::from(self.coords[v][axis] >= t);
        }
        let stamp_sep = self.fresh_stamp(&sep);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &v in &set {
            if self.stamp[v] == stamp_sep {
                continue;
            }
            if self.side[v] == 0 {
                left.push(v);
            } else {
                right.push(v);
            }
        }
        if left.is_empty() || right.is_empty() {
            self.out.extend(set);
            return;
        }
        self.dissect(left);
        self.dissect(right);
        self.out.extend(sep);
    }
}

/// Nested dissection driven by coordinate bisection: each level splits the
/// current set by a plane normal to its longest extent and uses the smaller
/// graph boundary of the two halves as vertex separator.
pub fn nested_dissection(m: &SparseMatrix, coords: &[Point]) -> Vec<usize> {
    assert_eq!(coords.len(), m.n(), "one coordinate per unknown is required");
    let mut d = Dissector {
        m,
        coords,
        stamp: vec![0; m.n()],
        side: vec![0; m.n()],
        next_stamp: 0,
        out: Vec::with_capacity(m.n()),
    };
    d.dissect((0..m.n()).collect());
    d.out
}
