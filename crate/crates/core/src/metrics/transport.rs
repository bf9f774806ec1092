//! Exact balanced transportation via successive shortest paths.

use alloc::vec;
use alloc::vec::Vec;

/// Amounts below this are treated as exhausted.
const EPS: f64 = 1e-13;

/// Balanced transportation problem; `cost[i][j] = None` forbids the arc.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportProblem {
    pub supply: Vec<f64>,
    pub demand: Vec<f64>,
    pub cost: Vec<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub objective: f64,
    pub flow: Vec<Vec<f64>>,
}

impl TransportProblem {
    /// Minimum-cost plan. Arc costs must be nonnegative and the problem feasible.
    pub fn solve(&self) -> TransportPlan {
        let s = self.supply.len();
        let t = self.demand.len();
        // nodes: 0..s sources, s..s+t sinks, then the super sink and super source
        let n = s + t + 2;
        let sink = s + t;
        let src = s + t + 1;
        let mut flow = vec![vec![0.0; t]; s];
        let mut supply = self.supply.clone();
        let mut demand = self.demand.clone();
        let mut pot = vec![0.0f64; n];
        let scale: f64 = self.supply.iter().sum::<f64>().max(1.0);

        loop {
            if supply.iter().all(|&x| x <= EPS * scale) {
                break;
            }
            // Dijkstra on reduced costs
            let mut dist = vec![f64::INFINITY; n];
            let mut prev = vec![usize::MAX; n];
            let mut done = vec![false; n];
            dist[src] = 0.0;
            loop {
                let mut u = usize::MAX;
                for v in 0..n {
                    if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                let relax = |v: usize, c: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                    if done[v] {
                        return;
                    }
                    let nd = dist[u] + c + pot[u] - pot[v];
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                    }
                };
                if u == src {
                    for i in 0..s {
                        if supply[i] > EPS * scale {
                            relax(i, 0.0, &mut dist, &mut prev);
                        }
                    }
                } else if u < s {
                    for j in 0..t {
                        if let Some(c) = self.cost[u][j] {
                            relax(s + j, c, &mut dist, &mut prev);
                        }
                    }
                } else if u < sink {
                    let j = u - s;
                    for i in 0..s {
                        if flow[i][j] > EPS * scale {
                            relax(i, -self.cost[i][j].unwrap_or(0.0), &mut dist, &mut prev);
                        }
                    }
                    if demand[j] > EPS * scale {
                        relax(sink, 0.0, &mut dist, &mut prev);
                    }
                }
            }
            if !dist[sink].is_finite() {
                // infeasible remainder
                break;
            }
            let cap = dist[sink];
            for v in 0..n {
                // Clamping keeps reduced costs nonnegative for unreached nodes.
                pot[v] += dist[v].min(cap);
            }

            // bottleneck along the path
            let mut path = Vec::new();
            let mut v = sink;
            while v != usize::MAX {
                path.push(v);
                v = prev[v];
            }
            path.pop();
            path.reverse();
            let first = path[0];
            let last_sink = path[path.len() - 2] - s;
            let mut amount = supply[first].min(demand[last_sink]);
            for w in path.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a >= s && a < sink && b < s {
                    amount = amount.min(flow[b][a - s]);
                }
            }
            for w in path.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a < s && b >= s && b < sink {
                    flow[a][b - s] += amount;
                } else if a >= s && a < sink && b < s {
                    flow[b][a - s] -= amount;
                    if flow[b][a - s] < EPS * scale {
                        flow[b][a - s] = 0.0;
                    }
                }
            }
            supply[first] -= amount;
            demand[last_sink] -= amount;
        }

        let mut objective = 0.0;
        for (i, row) in flow.iter().enumerate() {
            for (j, &f) in row.iter().enumerate() {
                if f > 0.0 {
                    objective += f * self.cost[i][j].unwrap_or(0.0);
                }
            }
        }
        TransportPlan { objective, flow }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_prefers_cheap_diagonal() {
        let p = TransportProblem {
            supply: vec![1.0, 2.0],
            demand: vec![2.0, 1.0],
            cost: vec![vec![Some(1.0), Some(0.0)], vec![Some(0.0), Some(3.0)]],
        };
        let plan = p.solve();
        assert!((plan.objective - 0.0).abs() < 1e-12);
        assert_eq!(plan.flow, vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
    }

    #[test]
    fn rerouting_needs_a_backward_arc() {
        // greedy first path 0->0 must later be undone
        let p = TransportProblem {
            supply: vec![1.0, 1.0],
            demand: vec![1.0, 1.0],
            cost: vec![vec![Some(1.0), Some(2.0)], vec![Some(1.0), Some(10.0)]],
        };
        assert!((p.solve().objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn forbidden_arcs_are_respected() {
        let p = TransportProblem {
            supply: vec![1.0, 1.0],
            demand: vec![1.0, 1.0],
            cost: vec![vec![None, Some(5.0)], vec![Some(1.0), Some(0.0)]],
        };
        let plan = p.solve();
        assert_eq!(plan.flow[0][0], 0.0);
        assert!((plan.objective - 6.0).abs() < 1e-12);
    }
}
