//! Synthetic network builders used for fixtures and tests.
//!
//! Every builder produces: one entry lane per agent (fed from a boundary
//! source node), bidirectional lanes between adjacent agents, two phases
//! per agent, and one route from every entry to every agent (shortest
//! path, deterministic tie-break by index).

use super::{NetworkError, NetworkSpec};
use std::collections::VecDeque;

/// A `rows x cols` grid of signalized intersections. Lane geometry:
/// `lane_length` meters at `free_speed` m/s throughout, default sensor
/// zone.
///
/// Routes are dimension-ordered (all column movement, then all row
/// movement). That keeps the lane-successor graph acyclic, so spillback
/// can never close a circular-wait cycle: the grid cannot deadlock, no
/// matter how badly the signals are driven.
pub fn grid(rows: usize, cols: usize, lane_length: f64, free_speed: f64) -> NetworkSpec {
    assert!(rows * cols >= 1, "grid needs at least one intersection");
    let node = |r: usize, c: usize| format!("n{r}{c}");
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(((r, c), (r, c + 1)));
            }
            if r + 1 < rows {
                edges.push(((r, c), (r + 1, c)));
            }
        }
    }
    let agent_names: Vec<String> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| node(r, c)))
        .collect();
    let adjacency: Vec<(String, String)> = edges
        .iter()
        .map(|&((r0, c0), (r1, c1))| (node(r0, c0), node(r1, c1)))
        .collect();
    let idx = |r: usize, c: usize| r * cols + c;
    let mut routes = Vec::new();
    for r0 in 0..rows {
        for c0 in 0..cols {
            for r1 in 0..rows {
                for c1 in 0..cols {
                    let mut hops = Vec::new();
                    let mut c = c0;
                    while c != c1 {
                        let next = if c1 > c { c + 1 } else { c - 1 };
                        hops.push((idx(r0, c), idx(r0, next)));
                        c = next;
                    }
                    let mut r = r0;
                    while r != r1 {
                        let next = if r1 > r { r + 1 } else { r - 1 };
                        hops.push((idx(r, c1), idx(next, c1)));
                        r = next;
                    }
                    routes.push((idx(r0, c0), hops));
                }
            }
        }
    }
    build_with_routes(&agent_names, &adjacency, &routes, lane_length, free_speed, 1)
        .expect("synthetic grid must validate")
}

/// A 7-agent irregular graph: a 5-node chain with two spurs, so agent
/// degree varies between 1 and 4.
pub fn irregular7(lane_length: f64, free_speed: f64) -> NetworkSpec {
    let names: Vec<String> = (0..7).map(|i| format!("g{i}")).collect();
    let adjacency = [
        (0, 1),
        (1, 2),
        (2, 3),
        (3, 4),
        (1, 5),
        (2, 5),
        (2, 6),
    ]
    .iter()
    .map(|&(a, b)| (names[a].clone(), names[b].clone()))
    .collect::<Vec<_>>();
    build(&names, &adjacency, lane_length, free_speed, 1).expect("synthetic graph must validate")
}

/// Builds a network from an agent adjacency list with shortest-path
/// routes (BFS, deterministic tie-break). Each undirected edge becomes
/// two lanes; each agent gets an entry lane from a boundary source and
/// two phases splitting its incoming lanes.
pub fn build(
    agents: &[String],
    adjacency: &[(String, String)],
    lane_length: f64,
    free_speed: f64,
    neighbor_threshold: u32,
) -> Result<NetworkSpec, NetworkError> {
    let idx_of = |name: &str| {
        agents
            .iter()
            .position(|a| a == name)
            .expect("adjacency references unknown agent")
    };
    let n = agents.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in adjacency {
        let (i, j) = (idx_of(a), idx_of(b));
        adj[i].push(j);
        adj[j].push(i);
    }
    for neighbors in &mut adj {
        neighbors.sort_unstable();
        neighbors.dedup();
    }
    let mut routes = Vec::new();
    for start in 0..n {
        let parents = bfs_parents(&adj, start);
        for dest in 0..n {
            let mut hops = Vec::new();
            let mut cur = dest;
            let mut ok = true;
            while cur != start {
                match parents[cur] {
                    Some(p) => {
                        hops.push((p, cur));
                        cur = p;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            hops.reverse();
            routes.push((start, hops));
        }
    }
    build_with_routes(agents, adjacency, &routes, lane_length, free_speed, neighbor_threshold)
}

/// Builds a network from an adjacency list and explicit routes, each
/// given as `(entry agent, inter-agent hops)`.
pub fn build_with_routes(
    agents: &[String],
    adjacency: &[(String, String)],
    agent_routes: &[(usize, Vec<(usize, usize)>)],
    lane_length: f64,
    free_speed: f64,
    neighbor_threshold: u32,
) -> Result<NetworkSpec, NetworkError> {
    let idx_of = |name: &str| {
        agents
            .iter()
            .position(|a| a == name)
            .expect("adjacency references unknown agent")
    };
    let n = agents.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in adjacency {
        let (i, j) = (idx_of(a), idx_of(b));
        adj[i].push(j);
        adj[j].push(i);
    }
    for neighbors in &mut adj {
        neighbors.sort_unstable();
        neighbors.dedup();
    }

    // Lanes: entry lane per agent, then one lane per directed edge.
    let zone = super::DEFAULT_SENSOR_ZONE.min(lane_length);
    let mut lanes = Vec::new();
    let entry_lane = |i: usize| format!("in_{}", agents[i]);
    let edge_lane = |i: usize, j: usize| format!("{}_{}", agents[i], agents[j]);
    for (i, a) in agents.iter().enumerate() {
        lanes.push((
            entry_lane(i),
            lane_length,
            free_speed,
            format!("src_{a}"),
            a.clone(),
            zone,
        ));
    }
    for i in 0..n {
        for &j in &adj[i] {
            lanes.push((
                edge_lane(i, j),
                lane_length,
                free_speed,
                agents[i].clone(),
                agents[j].clone(),
                zone,
            ));
        }
    }

    // Two phases per agent: the entry lane plus every second inbound
    // edge, and the remaining inbound edges.
    let mut intersections = Vec::new();
    for i in 0..n {
        let mut incoming = vec![entry_lane(i)];
        for &j in &adj[i] {
            incoming.push(edge_lane(j, i));
        }
        let (mut even, mut odd) = (vec![incoming[0].clone()], Vec::new());
        for (k, lane) in incoming.iter().enumerate().skip(1) {
            if k % 2 == 1 {
                odd.push(lane.clone());
            } else {
                even.push(lane.clone());
            }
        }
        if odd.is_empty() {
            // Degree-0 agent: split the entry lane across both phases.
            odd.push(incoming[0].clone());
        }
        let phases = vec![("p0".to_string(), even), ("p1".to_string(), odd)];
        intersections.push((agents[i].clone(), incoming, phases, true));
    }

    // Routes: the entry lane of the starting agent, then the given hops.
    let routes: Vec<Vec<String>> = agent_routes
        .iter()
        .map(|(start, hops)| {
            let mut route = vec![entry_lane(*start)];
            route.extend(hops.iter().map(|&(a, b)| edge_lane(a, b)));
            route
        })
        .collect();

    NetworkSpec::from_parts(lanes, intersections, routes, neighbor_threshold)
}

fn bfs_parents(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut parents = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parents[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parents
}
