//! Time-varying weighted digraphs over the exosystem node 0 and agents
//! `1..=N`, their Laplacians, and reachability audits.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default lower bound on nonzero edge weights.
pub const DEFAULT_ALPHA_MIN: f64 = 0.1;

/// Weighted digraph on nodes `0..node_count`, node 0 being the exosystem.
///
/// `weights[(i, j)]` is the weight of the edge `j -> i`, i.e. what node `i`
/// receives from node `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDigraph<T: Real> {
    weights: DMatrix<T>,
}

impl<T: Real> WeightedDigraph<T> {
    /// Validates a weight matrix: square, nonnegative, zero diagonal, no
    /// in-edges at node 0 and every nonzero weight at least `alpha_min`.
    pub fn new(weights: DMatrix<T>, alpha_min: T) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(Error::Dimension(format!(
                "weight matrix must be square and nonempty, got {}x{}",
                n,
                weights.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if w < T::zero() {
                    return Err(Error::InvalidArgument(format!("negative weight on edge {j}->{i}")));
                }
                if w == T::zero() {
                    continue;
                }
                if i == j {
                    return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
                }
                if i == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "node 0 cannot receive edges (edge {j}->0)"
                    )));
                }
                if w < alpha_min {
                    return Err(Error::InvalidArgument(format!(
                        "weight {} on edge {j}->{i} below alpha_min {}",
                        w, alpha_min
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from `(from, to, weight)` triples.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, T)], alpha_min: T) -> Result<Self> {
        let mut w = DMatrix::zeros(node_count, node_count);
        for &(from, to, weight) in edges {
            if from >= node_count || to >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge {from}->{to} out of range for {node_count} nodes"
                )));
            }
            w[(to, from)] = weight;
        }
        Self::new(w, alpha_min)
    }

    pub fn empty(node_count: usize) -> Self {
        Self {
            weights: DMatrix::zeros(node_count, node_count),
        }
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    /// Weight `a_ij` of the edge `j -> i`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[(i, j)]
    }

    /// In-neighbors of `i` with their weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let row = self.weights.row(i);
        (0..self.node_count()).filter_map(move |j| {
            let w = row[j];
            (w != T::zero()).then_some((j, w))
        })
    }

    /// Edge list as `(from, to, weight)`, ordered by `to` then `from`.
    pub fn edges(&self) -> Vec<(usize, usize, T)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w != T::zero() {
                    out.push((j, i, w));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weights[(to, from)] != T::zero()
    }

    /// Largest weighted in-degree over all nodes.
    pub fn max_in_degree(&self) -> T {
        (0..self.node_count())
            .map(|i| self.weights.row(i).sum())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

/// Laplacian `L` and the agent-only block `L_minus` (row/column 0 removed).
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPair<T: Real> {
    pub full: DMatrix<T>,
    pub minus: DMatrix<T>,
}

/// Row-sum-zero Laplacian: `l_ii = sum_j a_ij`, `l_ij = -a_ij`.
pub fn laplacian<T: Real>(g: &WeightedDigraph<T>) -> LaplacianPair<T> {
    let n = g.node_count();
    let mut full = -g.weights().clone();
    for i in 0..n {
        let s: T = g.weights().row(i).sum();
        full[(i, i)] = s;
    }
    let minus = full.view((1, 1), (n - 1, n - 1)).into_owned();
    LaplacianPair { full, minus }
}

/// True iff every node can be reached from `root` along directed edges.
pub fn is_globally_reachable<T: Real>(g: &WeightedDigraph<T>, root: usize) -> bool {
    let n = g.node_count();
    if root >= n {
        return false;
    }
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(j) = queue.pop_front() {
        for (i, s) in seen.iter_mut().enumerate() {
            if !*s && g.has_edge(j, i) {
                *s = true;
                queue.push_back(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// One constant-topology interval of a schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<T: Real> {
    pub duration: T,
    pub graph: WeightedDigraph<T>,
}

/// Piecewise-constant topology. Segment `k` is active on the half-open
/// interval `[start_k, start_k + duration_k)`. A cyclic schedule repeats
/// forever; a non-cyclic one holds its last graph after the final segment.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologySchedule<T: Real> {
    segments: Vec<Segment<T>>,
    repeat: bool,
}

impl<T: Real> TopologySchedule<T> {
    pub fn new(segments: Vec<Segment<T>>, repeat: bool) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidArgument("schedule needs at least one segment".into()))?;
        let n = first.graph.node_count();
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "segment {k} has non-positive duration {}",
                    s.duration
                )));
            }
            if s.graph.node_count() != n {
                return Err(Error::Dimension(format!(
                    "segment {k} has {} nodes, expected {n}",
                    s.graph.node_count()
                )));
            }
        }
        Ok(Self { segments, repeat })
    }

    /// A single graph held for all time.
    pub fn constant(graph: WeightedDigraph<T>) -> Self {
        Self {
            segments: vec![Segment {
                duration: T::one(),
                graph,
            }],
            repeat: true,
        }
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn repeat(&self) -> bool {
        self.repeat
    }

    pub fn node_count(&self) -> usize {
        self.segments[0].graph.node_count()
    }

    /// Length of one pass through all segments.
    pub fn period(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.duration)
    }

    /// Index of the segment active at time `t` (`t < 0` maps to segment 0).
    pub fn segment_index_at(&self, t: T) -> usize {
        if t <= T::zero() {
            return 0;
        }
        let period = self.period();
        let local = if self.repeat {
            let cycles = (t / period).floor();
            t - cycles * period
        } else if t >= period {
            return self.segments.len() - 1;
        } else {
            t
        };
        let mut start = T::zero();
        for (k, s) in self.segments.iter().enumerate() {
            let end = start + s.duration;
            if local < end {
                return k;
            }
            start = end;
        }
        // Rounding can push `local` onto the period boundary.
        if self.repeat {
            0
        } else {
            self.segments.len() - 1
        }
    }

    pub fn graph_at(&self, t: T) -> &WeightedDigraph<T> {
        &self.segments[self.segment_index_at(t)].graph
    }

    /// Calls `f(segment_index)` for every segment instance overlapping `[t1, t2)`.
    fn for_each_segment_in(&self, t1: T, t2: T, mut f: impl FnMut(usize)) {
        let period = self.period();
        if self.repeat {
            let first_cycle = (t1 / period).floor();
            let mut base = first_cycle * period;
            while base < t2 {
                let mut start = base;
                for (k, s) in self.segments.iter().enumerate() {
                    let end = start + s.duration;
                    if start < t2 && end > t1 {
                        f(k);
                    }
                    start = end;
                }
                base += period;
            }
        } else {
            let mut start = T::zero();
            let last = self.segments.len() - 1;
            for (k, s) in self.segments.iter().enumerate() {
                let end = if k == last {
                    // last graph persists
                    t2.max(start + s.duration)
                } else {
                    start + s.duration
                };
                if start < t2 && end > t1 {
                    f(k);
                }
                start += s.duration;
            }
            if t1 < T::zero() {
                f(0);
            }
        }
    }
}

/// Union of all graphs active on `[t1, t2)`; edge weights are the maximum
/// over the contributing segments.
pub fn union_digraph<T: Real>(s: &TopologySchedule<T>, t1: T, t2: T) -> Result<WeightedDigraph<T>> {
    if !(t1 < t2) {
        return Err(Error::InvalidInterval {
            t1: t1.as_f64(),
            t2: t2.as_f64(),
        });
    }
    let n = s.node_count();
    let mut w = DMatrix::<T>::zeros(n, n);
    s.for_each_segment_in(t1, t2, |k| {
        let g = s.segments[k].graph.weights();
        w.zip_apply(g, |a, b| {
            if b > *a {
                *a = b;
            }
        });
    });
    Ok(WeightedDigraph { weights: w })
}

/// Checks that node 0 is globally reachable in the union graph of every
/// window `[t1, t1 + window)`.
///
/// Windows starting at segment boundaries are the worst case (any window
/// starting inside a segment covers a superset of segments), so a cyclic
/// schedule reduces to one check per segment. A single-segment schedule is
/// static and decidable either way. A non-cyclic multi-segment schedule says
/// nothing past its horizon and is reported as undecidable.
pub fn check_uniform_reachability<T: Real>(s: &TopologySchedule<T>, window: T) -> Result<bool> {
    if !(window > T::zero()) {
        return Err(Error::InvalidArgument(format!("window {} must be positive", window)));
    }
    if s.segments.len() == 1 {
        return Ok(is_globally_reachable(&s.segments[0].graph, 0));
    }
    if !s.repeat {
        return Err(Error::UndecidableHorizon {
            horizon: s.period().as_f64(),
        });
    }
    let mut start = T::zero();
    for seg in &s.segments {
        let u = union_digraph(s, start, start + window)?;
        if !is_globally_reachable(&u, 0) {
            return Ok(false);
        }
        start += seg.duration;
    }
    Ok(true)
}
