use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{BusId, Feeder, GridError};

/// Traversal data for sweeps over a radial feeder. Indices are positions in
/// `Feeder::buses` / `Feeder::lines`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyOrder {
    pub slack: usize,
    /// Parent bus of every bus (`None` for the slack).
    pub parent: Vec<Option<usize>>,
    /// Line connecting a bus to its parent.
    pub parent_line: Vec<Option<usize>>,
    /// Direct downstream buses, N_j^-.
    pub children: Vec<Vec<usize>>,
    /// Buses in breadth-first order from the slack.
    pub order: Vec<usize>,
    /// Upstream end of each line.
    pub line_from: Vec<usize>,
    /// Downstream end of each line.
    pub line_to: Vec<usize>,
    /// Depth of each bus (slack = 0).
    pub depth: Vec<usize>,
}

impl TopologyOrder {
    /// Bus ids in traversal order.
    pub fn order_ids(&self, feeder: &Feeder) -> Vec<BusId> {
        self.order.iter().map(|&i| feeder.buses[i].id).collect()
    }

    /// Lines on the path from `bus` up to the slack, nearest first.
    pub fn path_to_slack(&self, mut bus: usize) -> Vec<usize> {
        let mut lines = Vec::new();
        while let Some(l) = self.parent_line[bus] {
            lines.push(l);
            bus = self.line_from[l];
        }
        lines
    }

    /// Lines whose downstream end is `line`'s downstream bus's children.
    pub fn child_lines(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[bus]
            .iter()
            .map(move |&c| self.parent_line[c].expect("child has parent line"))
    }
}

/// Validates that the feeder is a tree rooted at the slack bus and returns
/// the traversal order. Children are visited in line order, so the result is
/// deterministic.
pub fn validate_radial(feeder: &Feeder) -> Result<TopologyOrder, GridError> {
    feeder.check()?;
    let n = feeder.buses.len();
    let slack = feeder.slack_index();

    let mut ends = Vec::with_capacity(feeder.lines.len());
    for l in &feeder.lines {
        let a = feeder.bus_index(l.from_bus).ok_or(GridError::UnknownBus(l.from_bus))?;
        let b = feeder.bus_index(l.to_bus).ok_or(GridError::UnknownBus(l.to_bus))?;
        if a == b {
            return Err(GridError::CycleDetected(l.from_bus));
        }
        ends.push((a, b));
    }
    let mut pairs: Vec<(usize, usize, usize)> = ends
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| (a.min(b), a.max(b), k))
        .collect();
    pairs.sort_unstable();
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            let l = &feeder.lines[w[1].2];
            return Err(GridError::DuplicateEdge(l.from_bus, l.to_bus));
        }
    }

    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(a, b)) in ends.iter().enumerate() {
        adj[a].push((b, k));
        adj[b].push((a, k));
    }

    let mut parent = vec![None; n];
    let mut parent_line = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut depth = vec![0; n];
    let mut visited = vec![false; n];
    let mut line_from = vec![0; ends.len()];
    let mut line_to = vec![0; ends.len()];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    visited[slack] = true;
    queue.push_back(slack);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, k) in &adj[u] {
            if parent_line[u] == Some(k) {
                continue;
            }
            if visited[v] {
                return Err(GridError::CycleDetected(feeder.buses[v].id));
            }
            visited[v] = true;
            parent[v] = Some(u);
            parent_line[v] = Some(k);
            depth[v] = depth[u] + 1;
            children[u].push(v);
            line_from[k] = u;
            line_to[k] = v;
            queue.push_back(v);
        }
    }
    if let Some(i) = visited.iter().position(|&v| !v) {
        return Err(GridError::DisconnectedBus(feeder.buses[i].id));
    }
    Ok(TopologyOrder {
        slack,
        parent,
        parent_line,
        children,
        order,
        line_from,
        line_to,
        depth,
    })
}
