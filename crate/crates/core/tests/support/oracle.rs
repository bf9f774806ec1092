//! Transportation optimum by exhaustive enumeration of basic solutions.
//!
//! Every vertex of the transportation polytope is supported on a spanning tree
//! of the allowed arcs, so the minimum over feasible spanning-tree bases is the
//! LP optimum.

use remap_core::metrics::TransportProblem;

struct Search<'a> {
    edges: Vec<(usize, usize, f64)>,
    supply: &'a [f64],
    demand: &'a [f64],
    best: f64,
    chosen: Vec<usize>,
}

impl Search<'_> {
    fn nodes(&self) -> usize {
        self.supply.len() + self.demand.len()
    }

    fn recurse(&mut self, next: usize, labels: &[usize]) {
        let need = self.nodes() - 1 - self.chosen.len();
        if need == 0 {
            self.evaluate();
            return;
        }
        if self.edges.len() - next < need {
            return;
        }
        let (i, j, _) = self.edges[next];
        let (a, b) = (labels[i], labels[self.supply.len() + j]);
        if a != b {
            let merged: Vec<usize> = labels.iter().map(|&l| if l == b { a } else { l }).collect();
            self.chosen.push(next);
            self.recurse(next + 1, &merged);
            self.chosen.pop();
        }
        self.recurse(next + 1, labels);
    }

    fn evaluate(&mut self) {
        let s = self.supply.len();
        let n = self.nodes();
        let mut residual: Vec<f64> = self.supply.iter().chain(self.demand).copied().collect();
        let mut degree = vec![0usize; n];
        let tree: Vec<(usize, usize, f64)> =
            self.chosen.iter().map(|&e| (self.edges[e].0, s + self.edges[e].1, self.edges[e].2)).collect();
        for &(u, v, _) in &tree {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut used = vec![false; tree.len()];
        let mut cost = 0.0;
        for _ in 0..tree.len() {
            let (e, leaf) = (0..tree.len())
                .filter(|&e| !used[e])
                .find_map(|e| {
                    let (u, v, _) = tree[e];
                    if degree[u] == 1 {
                        Some((e, u))
                    } else if degree[v] == 1 {
                        Some((e, v))
                    } else {
                        None
                    }
                })
                .expect("a tree always has a leaf");
            let (u, v, c) = tree[e];
            let other = if leaf == u { v } else { u };
            let flow = residual[leaf];
            if flow < -1e-12 {
                return;
            }
            residual[other] -= flow;
            residual[leaf] = 0.0;
            degree[u] -= 1;
            degree[v] -= 1;
            used[e] = true;
            cost += flow * c;
        }
        if cost < self.best {
            self.best = cost;
        }
    }
}

pub fn transport_optimum(problem: &TransportProblem) -> f64 {
    let mut edges = Vec::new();
    for (i, row) in problem.cost.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if let Some(c) = c {
                edges.push((i, j, *c));
            }
        }
    }
    let mut search =
        Search { edges, supply: &problem.supply, demand: &problem.demand, best: f64::INFINITY, chosen: Vec::new() };
    let labels: Vec<usize> = (0..search.nodes()).collect();
    search.recurse(0, &labels);
    search.best
}
