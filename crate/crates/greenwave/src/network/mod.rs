//! Static road network: lanes, signalized intersections, routes, and the
//! agent neighbor graph used for fingerprint exchange and reward sharing.
//!
//! A network is loaded once from a JSON file (see [`load_network`]) and is
//! immutable afterwards; it can be shared read-only across workers.

mod synthetic;

pub use synthetic::{build as build_synthetic, grid, irregular7};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use thiserror::Error;

/// Version tag expected in network files.
pub const NETWORK_FORMAT: u32 = 1;

/// Default wave measurement window in meters from the stop line.
pub const DEFAULT_SENSOR_ZONE: f64 = 50.0;

/// Index of a lane within [`NetworkSpec::lanes`].
pub type LaneIdx = usize;
/// Index of an intersection within [`NetworkSpec::intersections`].
pub type IntersectionIdx = usize;
/// Index of an agent within [`NetworkSpec::agents`] (declaration order).
pub type AgentIdx = usize;
/// Index of a phase within an intersection's phase list.
pub type PhaseIdx = usize;
/// Index of a route within [`NetworkSpec::routes`].
pub type RouteIdx = usize;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("network file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported network format {found}, this build reads format {expected}")]
    UnsupportedFormat { found: u32, expected: u32 },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("lane `{id}`: {reason}")]
    BadLane { id: String, reason: String },
    #[error("intersection `{id}`: {reason}")]
    BadIntersection { id: String, reason: String },
    #[error("route {index} does not chain: lane `{lane}` ends at `{to}` but lane `{next}` starts at `{from}`")]
    BrokenRoute {
        index: usize,
        lane: String,
        to: String,
        next: String,
        from: String,
    },
    #[error("route {index}: {reason}")]
    BadRoute { index: usize, reason: String },
    #[error("unknown lane id `{lane}` referenced by {referrer}")]
    UnknownLane { lane: String, referrer: String },
    #[error("agent graph is not connected: agent `{unreachable}` cannot be reached from `{start}`")]
    DisconnectedAgents { start: String, unreachable: String },
}

/// A directed road segment. `from_node`/`to_node` name the junctions it
/// connects; an intersection's id doubles as its node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    /// Length in meters, > 0.
    pub length: f64,
    /// Free-flow speed in m/s, > 0.
    pub free_speed: f64,
    pub from_node: String,
    pub to_node: String,
    /// Wave measurement window in meters from the stop line,
    /// 0 < sensor_zone <= length.
    pub sensor_zone: f64,
}

/// An assignment of right-of-way to a subset of an intersection's
/// incoming lanes. Actions select the next phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub id: String,
    pub green_lanes: Vec<LaneIdx>,
}

impl Phase {
    pub fn is_green(&self, lane: LaneIdx) -> bool {
        self.green_lanes.contains(&lane)
    }
}

/// A junction. Signalized intersections (`is_agent`) are the learning
/// agents; they need at least two phases and every incoming lane must
/// receive green in at least one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: String,
    pub incoming_lanes: Vec<LaneIdx>,
    pub phases: Vec<Phase>,
    pub is_agent: bool,
}

/// Immutable description of the road network, the agent set, and the
/// neighbor threshold for fingerprint/reward exchange.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    lanes: Vec<Lane>,
    intersections: Vec<Intersection>,
    routes: Vec<Vec<LaneIdx>>,
    neighbor_threshold: u32,
    // Derived at load time.
    agent_intersections: Vec<IntersectionIdx>,
    lane_ids: BTreeMap<String, LaneIdx>,
    intersection_ids: BTreeMap<String, IntersectionIdx>,
    /// For each lane, the intersection that lists it as incoming (its
    /// downstream signal), if any.
    lane_controller: Vec<Option<IntersectionIdx>>,
}

impl NetworkSpec {
    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, idx: LaneIdx) -> &Lane {
        &self.lanes[idx]
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn routes(&self) -> &[Vec<LaneIdx>] {
        &self.routes
    }

    pub fn route(&self, idx: RouteIdx) -> &[LaneIdx] {
        &self.routes[idx]
    }

    pub fn neighbor_threshold(&self) -> u32 {
        self.neighbor_threshold
    }

    /// Number of agents (signalized intersections).
    pub fn n_agents(&self) -> usize {
        self.agent_intersections.len()
    }

    /// Intersection behind agent `a`. Agents are numbered in declaration
    /// order of their intersections.
    pub fn agent_intersection(&self, a: AgentIdx) -> &Intersection {
        &self.intersections[self.agent_intersections[a]]
    }

    pub fn agent_id(&self, a: AgentIdx) -> &str {
        &self.agent_intersection(a).id
    }

    /// Incoming lanes of agent `a` (the lane set observed by its wave
    /// sensor), in declaration order.
    pub fn agent_lanes(&self, a: AgentIdx) -> &[LaneIdx] {
        &self.agent_intersection(a).incoming_lanes
    }

    /// Number of actions (phases) available to agent `a`.
    pub fn n_actions(&self, a: AgentIdx) -> usize {
        self.agent_intersection(a).phases.len()
    }

    pub fn lane_index(&self, id: &str) -> Option<LaneIdx> {
        self.lane_ids.get(id).copied()
    }

    pub fn intersection_index(&self, id: &str) -> Option<IntersectionIdx> {
        self.intersection_ids.get(id).copied()
    }

    /// The intersection whose stop line sits at the downstream end of
    /// `lane`, when one declares it as incoming.
    pub fn lane_controller(&self, lane: LaneIdx) -> Option<IntersectionIdx> {
        self.lane_controller[lane]
    }

    /// Agent index for an intersection, if it is one.
    pub fn agent_of_intersection(&self, node: IntersectionIdx) -> Option<AgentIdx> {
        self.agent_intersections.iter().position(|&i| i == node)
    }

    /// Direct adjacency on the agent graph: two agents are adjacent iff a
    /// lane directly connects their nodes (either direction).
    fn agent_adjacency(&self) -> Vec<BTreeSet<AgentIdx>> {
        let node_to_agent: BTreeMap<&str, AgentIdx> = (0..self.n_agents())
            .map(|a| (self.agent_id(a), a))
            .collect();
        let mut adj = vec![BTreeSet::new(); self.n_agents()];
        for lane in &self.lanes {
            if let (Some(&a), Some(&b)) = (
                node_to_agent.get(lane.from_node.as_str()),
                node_to_agent.get(lane.to_node.as_str()),
            ) {
                if a != b {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        adj
    }

    /// Hop distances from `start` to every agent on the agent graph
    /// (`None` = unreachable).
    pub fn hop_distances(&self, start: AgentIdx) -> Vec<Option<u32>> {
        let adj = self.agent_adjacency();
        bfs_distances(&adj, start)
    }

    /// Neighborhoods under the configured threshold: for each agent `i`
    /// the set `{ j != i : d(i, j) <= neighbor_threshold }` where `d`
    /// is hop distance on the agent graph. Symmetric by construction.
    pub fn neighbor_graph(&self) -> Vec<BTreeSet<AgentIdx>> {
        let adj = self.agent_adjacency();
        (0..self.n_agents())
            .map(|i| {
                let dist = bfs_distances(&adj, i);
                dist.iter()
                    .enumerate()
                    .filter(|&(j, d)| j != i && matches!(d, Some(d) if *d <= self.neighbor_threshold))
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect()
    }
}

fn bfs_distances(adj: &[BTreeSet<usize>], start: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

// ---------------------------------------------------------------------------
// File schema (format 1)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    format: u32,
    #[serde(default = "default_threshold")]
    neighbor_threshold: u32,
    lanes: Vec<LaneFile>,
    intersections: Vec<IntersectionFile>,
    routes: Vec<Vec<String>>,
}

fn default_threshold() -> u32 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct LaneFile {
    id: String,
    length: f64,
    free_speed: f64,
    from: String,
    to: String,
    #[serde(default = "default_sensor_zone")]
    sensor_zone: f64,
}

fn default_sensor_zone() -> f64 {
    DEFAULT_SENSOR_ZONE
}

#[derive(Debug, Serialize, Deserialize)]
struct IntersectionFile {
    id: String,
    incoming_lanes: Vec<String>,
    #[serde(default)]
    phases: Vec<PhaseFile>,
    #[serde(default = "default_true")]
    is_agent: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct PhaseFile {
    id: String,
    green_lanes: Vec<String>,
}

/// Loads and validates a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    let file: NetworkFile = serde_json::from_str(&text)?;
    NetworkSpec::from_file(file)
}

/// Serializes a spec back to the file schema (used by the fixture
/// generators).
pub fn save_network(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<(), NetworkError> {
    let file = spec.to_file();
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text)?;
    Ok(())
}

impl NetworkSpec {
    fn from_file(file: NetworkFile) -> Result<Self, NetworkError> {
        if file.format != NETWORK_FORMAT {
            return Err(NetworkError::UnsupportedFormat {
                found: file.format,
                expected: NETWORK_FORMAT,
            });
        }

        let mut lane_ids = BTreeMap::new();
        let mut lanes = Vec::with_capacity(file.lanes.len());
        for lf in &file.lanes {
            if lane_ids.insert(lf.id.clone(), lanes.len()).is_some() {
                return Err(NetworkError::DuplicateId(lf.id.clone()));
            }
            if lf.length <= 0.0 {
                return Err(NetworkError::BadLane {
                    id: lf.id.clone(),
                    reason: format!("length must be > 0, got {}", lf.length),
                });
            }
            if lf.free_speed <= 0.0 {
                return Err(NetworkError::BadLane {
                    id: lf.id.clone(),
                    reason: format!("free_speed must be > 0, got {}", lf.free_speed),
                });
            }
            if lf.sensor_zone <= 0.0 || lf.sensor_zone > lf.length {
                return Err(NetworkError::BadLane {
                    id: lf.id.clone(),
                    reason: format!(
                        "sensor_zone must satisfy 0 < zone <= length, got {} for length {}",
                        lf.sensor_zone, lf.length
                    ),
                });
            }
            lanes.push(Lane {
                id: lf.id.clone(),
                length: lf.length,
                free_speed: lf.free_speed,
                from_node: lf.from.clone(),
                to_node: lf.to.clone(),
                sensor_zone: lf.sensor_zone,
            });
        }

        let mut intersection_ids = BTreeMap::new();
        let mut intersections = Vec::with_capacity(file.intersections.len());
        let mut lane_controller: Vec<Option<IntersectionIdx>> = vec![None; lanes.len()];
        for inf in &file.intersections {
            let node_idx = intersections.len();
            if intersection_ids.insert(inf.id.clone(), node_idx).is_some() {
                return Err(NetworkError::DuplicateId(inf.id.clone()));
            }
            let mut incoming = Vec::with_capacity(inf.incoming_lanes.len());
            for lid in &inf.incoming_lanes {
                let &l = lane_ids.get(lid).ok_or_else(|| NetworkError::UnknownLane {
                    lane: lid.clone(),
                    referrer: format!("intersection `{}`", inf.id),
                })?;
                if lanes[l].to_node != inf.id {
                    return Err(NetworkError::BadIntersection {
                        id: inf.id.clone(),
                        reason: format!(
                            "incoming lane `{}` ends at node `{}`, not here",
                            lid, lanes[l].to_node
                        ),
                    });
                }
                if let Some(other) = lane_controller[l] {
                    return Err(NetworkError::BadIntersection {
                        id: inf.id.clone(),
                        reason: format!(
                            "lane `{}` is already incoming to `{}`",
                            lid, file.intersections[other].id
                        ),
                    });
                }
                lane_controller[l] = Some(node_idx);
                incoming.push(l);
            }
            if inf.is_agent && inf.phases.len() < 2 {
                return Err(NetworkError::BadIntersection {
                    id: inf.id.clone(),
                    reason: format!("agents need at least 2 phases, got {}", inf.phases.len()),
                });
            }
            let mut phases = Vec::with_capacity(inf.phases.len());
            let mut covered = vec![false; incoming.len()];
            for pf in &inf.phases {
                if pf.green_lanes.is_empty() {
                    return Err(NetworkError::BadIntersection {
                        id: inf.id.clone(),
                        reason: format!("phase `{}` grants green to no lane", pf.id),
                    });
                }
                let mut green = Vec::with_capacity(pf.green_lanes.len());
                for lid in &pf.green_lanes {
                    let &l = lane_ids.get(lid).ok_or_else(|| NetworkError::UnknownLane {
                        lane: lid.clone(),
                        referrer: format!("phase `{}` of intersection `{}`", pf.id, inf.id),
                    })?;
                    let pos = incoming.iter().position(|&x| x == l).ok_or_else(|| {
                        NetworkError::BadIntersection {
                            id: inf.id.clone(),
                            reason: format!(
                                "phase `{}` greens lane `{}` which is not incoming here",
                                pf.id, lid
                            ),
                        }
                    })?;
                    covered[pos] = true;
                    green.push(l);
                }
                phases.push(Phase {
                    id: pf.id.clone(),
                    green_lanes: green,
                });
            }
            if !inf.phases.is_empty() {
                if let Some(pos) = covered.iter().position(|&c| !c) {
                    return Err(NetworkError::BadIntersection {
                        id: inf.id.clone(),
                        reason: format!(
                            "incoming lane `{}` receives green in no phase",
                            lanes[incoming[pos]].id
                        ),
                    });
                }
            }
            intersections.push(Intersection {
                id: inf.id.clone(),
                incoming_lanes: incoming,
                phases,
                is_agent: inf.is_agent,
            });
        }

        let mut routes = Vec::with_capacity(file.routes.len());
        for (index, rf) in file.routes.iter().enumerate() {
            if rf.is_empty() {
                return Err(NetworkError::BadRoute {
                    index,
                    reason: "route has no lanes".into(),
                });
            }
            let mut route = Vec::with_capacity(rf.len());
            for lid in rf {
                let &l = lane_ids.get(lid).ok_or_else(|| NetworkError::UnknownLane {
                    lane: lid.clone(),
                    referrer: format!("route {index}"),
                })?;
                route.push(l);
            }
            for w in route.windows(2) {
                let (a, b) = (&lanes[w[0]], &lanes[w[1]]);
                if a.to_node != b.from_node {
                    return Err(NetworkError::BrokenRoute {
                        index,
                        lane: a.id.clone(),
                        to: a.to_node.clone(),
                        next: b.id.clone(),
                        from: b.from_node.clone(),
                    });
                }
            }
            routes.push(route);
        }

        let agent_intersections: Vec<IntersectionIdx> = intersections
            .iter()
            .enumerate()
            .filter(|(_, i)| i.is_agent)
            .map(|(idx, _)| idx)
            .collect();

        let spec = NetworkSpec {
            lanes,
            intersections,
            routes,
            neighbor_threshold: file.neighbor_threshold,
            agent_intersections,
            lane_ids,
            intersection_ids,
            lane_controller,
        };

        // The agent graph must be connected so distances and
        // neighborhoods are well-defined.
        if spec.n_agents() > 1 {
            let dist = spec.hop_distances(0);
            if let Some(a) = dist.iter().position(|d| d.is_none()) {
                return Err(NetworkError::DisconnectedAgents {
                    start: spec.agent_id(0).to_string(),
                    unreachable: spec.agent_id(a).to_string(),
                });
            }
        }

        Ok(spec)
    }

    fn to_file(&self) -> NetworkFile {
        NetworkFile {
            format: NETWORK_FORMAT,
            neighbor_threshold: self.neighbor_threshold,
            lanes: self
                .lanes
                .iter()
                .map(|l| LaneFile {
                    id: l.id.clone(),
                    length: l.length,
                    free_speed: l.free_speed,
                    from: l.from_node.clone(),
                    to: l.to_node.clone(),
                    sensor_zone: l.sensor_zone,
                })
                .collect(),
            intersections: self
                .intersections
                .iter()
                .map(|i| IntersectionFile {
                    id: i.id.clone(),
                    incoming_lanes: i
                        .incoming_lanes
                        .iter()
                        .map(|&l| self.lanes[l].id.clone())
                        .collect(),
                    phases: i
                        .phases
                        .iter()
                        .map(|p| PhaseFile {
                            id: p.id.clone(),
                            green_lanes: p
                                .green_lanes
                                .iter()
                                .map(|&l| self.lanes[l].id.clone())
                                .collect(),
                        })
                        .collect(),
                    is_agent: i.is_agent,
                })
                .collect(),
            routes: self
                .routes
                .iter()
                .map(|r| r.iter().map(|&l| self.lanes[l].id.clone()).collect())
                .collect(),
        }
    }

    /// Builds a spec directly from parts, running the same validation as
    /// the file loader.
    pub fn from_parts(
        lanes: Vec<(String, f64, f64, String, String, f64)>,
        intersections: Vec<(String, Vec<String>, Vec<(String, Vec<String>)>, bool)>,
        routes: Vec<Vec<String>>,
        neighbor_threshold: u32,
    ) -> Result<Self, NetworkError> {
        let file = NetworkFile {
            format: NETWORK_FORMAT,
            neighbor_threshold,
            lanes: lanes
                .into_iter()
                .map(|(id, length, free_speed, from, to, sensor_zone)| LaneFile {
                    id,
                    length,
                    free_speed,
                    from,
                    to,
                    sensor_zone,
                })
                .collect(),
            intersections: intersections
                .into_iter()
                .map(|(id, incoming_lanes, phases, is_agent)| IntersectionFile {
                    id,
                    incoming_lanes,
                    phases: phases
                        .into_iter()
                        .map(|(id, green_lanes)| PhaseFile { id, green_lanes })
                        .collect(),
                    is_agent,
                })
                .collect(),
            routes,
        };
        Self::from_file(file)
    }
}
