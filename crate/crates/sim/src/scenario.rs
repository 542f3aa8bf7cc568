//! Scenario documents, built-in presets and validation.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use collabsafe_core::barrier::{AgentState, ClassKGains, Obstacle};
use collabsafe_core::formation::{FormationGraph, Spring};
use collabsafe_core::Vec2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Tree,
    Clique,
    #[default]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub position: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Overrides the scenario-wide drive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringParams {
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
}

impl Default for SpringParams {
    fn default() -> Self {
        Self {
            stiffness: 3.0,
            damping: 1.0,
            rest_length: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    Pair([usize; 2]),
    Detailed {
        a: usize,
        b: usize,
        #[serde(default)]
        stiffness: Option<f64>,
        #[serde(default)]
        damping: Option<f64>,
        #[serde(default)]
        rest_length: Option<f64>,
    },
}

impl EdgeSpec {
    fn endpoints(&self) -> (usize, usize) {
        match *self {
            EdgeSpec::Pair([a, b]) => (a, b),
            EdgeSpec::Detailed { a, b, .. } => (a, b),
        }
    }

    fn spring(&self, defaults: &SpringParams) -> Spring {
        let (a, b) = self.endpoints();
        let (k, c, r) = match *self {
            EdgeSpec::Pair(_) => (None, None, None),
            EdgeSpec::Detailed {
                stiffness,
                damping,
                rest_length,
                ..
            } => (stiffness, damping, rest_length),
        };
        Spring {
            a,
            b,
            stiffness: k.unwrap_or(defaults.stiffness),
            damping: c.unwrap_or(defaults.damping),
            rest_length: r.unwrap_or(defaults.rest_length),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub position: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_name() -> String {
    "custom".to_string()
}
fn default_mass() -> f64 {
    0.5
}
fn default_radius() -> f64 {
    1.0
}
fn default_limit() -> f64 {
    20.0
}
fn default_sensing() -> f64 {
    6.0
}
fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub topology: Topology,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    /// Default mass for agents that do not set one.
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Defaults for edges that do not set their own parameters.
    #[serde(default)]
    pub spring: SpringParams,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    /// Half-width of the acceleration box `|u|∞ ≤ U`.
    #[serde(default = "default_limit")]
    pub control_limit: f64,
    #[serde(default = "default_sensing")]
    pub sensing_radius: f64,
    /// Window converting neighbor velocity requests to accelerations; defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_interval: Option<f64>,
    #[serde(default)]
    pub gains: ClassKGains,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    /// Constant acceleration added to every agent's formation control.
    #[serde(default)]
    pub drive: [f64; 2],
    /// Recorded for provenance; the simulation itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
}

/// Validated scenario in simulation form.
#[derive(Debug, Clone)]
pub struct World {
    pub graph: FormationGraph,
    pub states: Vec<AgentState>,
    pub drives: Vec<Vec2>,
    pub obstacles: Vec<Obstacle>,
    pub tau_interval: f64,
    pub steps: usize,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite(field: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SimError::config(field, "must be finite"))
    }
}

fn vec2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tree7" => Ok(tree7()),
            "clique8" => Ok(clique8()),
            "clique8-dynamic" => Ok(clique8_dynamic(0.2)),
            "clique8-fast" => Ok(clique8_dynamic(20.0)),
            _ => Err(SimError::config(
                "preset",
                format!("unknown preset `{name}` (expected tree7, clique8, clique8-dynamic or clique8-fast)"),
            )),
        }
    }

    pub fn tau_interval(&self) -> f64 {
        self.tau_interval.unwrap_or(self.dt)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<World> {
        positive("dt", self.dt)?;
        positive("duration", self.duration)?;
        positive("mass", self.mass)?;
        positive("control_limit", self.control_limit)?;
        positive("sensing_radius", self.sensing_radius)?;
        positive("tau_interval", self.tau_interval())?;
        positive("spring.stiffness", self.spring.stiffness)?;
        positive("spring.rest_length", self.spring.rest_length)?;
        if !(self.spring.damping >= 0.0) {
            return Err(SimError::config("spring.damping", "must be nonnegative"));
        }
        finite("drive", &self.drive)?;
        let n = self.agents.len();
        if n == 0 {
            return Err(SimError::config("agents", "at least one agent is required"));
        }

        let mut states = Vec::with_capacity(n);
        let mut masses = Vec::with_capacity(n);
        let mut drives = Vec::with_capacity(n);
        for (i, a) in self.agents.iter().enumerate() {
            finite(&format!("agents[{i}].position"), &a.position)?;
            finite(&format!("agents[{i}].velocity"), &a.velocity)?;
            let m = a.mass.unwrap_or(self.mass);
            positive(&format!("agents[{i}].mass"), m)?;
            let d = a.drive.unwrap_or(self.drive);
            finite(&format!("agents[{i}].drive"), &d)?;
            states.push(AgentState::new(vec2(a.position), vec2(a.velocity)));
            masses.push(m);
            drives.push(vec2(d));
        }

        let mut seen = BTreeSet::new();
        let mut springs = Vec::with_capacity(self.edges.len());
        for (e, edge) in self.edges.iter().enumerate() {
            let field = format!("edges[{e}]");
            let (a, b) = edge.endpoints();
            if a >= n || b >= n {
                return Err(SimError::config(field, format!("agent index out of range (have {n} agents)")));
            }
            if a == b {
                return Err(SimError::config(field, "self loop"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(SimError::config(field, "duplicate edge"));
            }
            let s = edge.spring(&self.spring);
            positive(&format!("{field}.stiffness"), s.stiffness)?;
            positive(&format!("{field}.rest_length"), s.rest_length)?;
            if !(s.damping >= 0.0) {
                return Err(SimError::config(format!("{field}.damping"), "must be nonnegative"));
            }
            if states[a].p == states[b].p {
                return Err(SimError::config(field, "connected agents start at the same position"));
            }
            springs.push(s);
        }
        let graph = FormationGraph::new(masses, springs)
            .map_err(|e| SimError::config("edges", e.to_string()))?;
        match self.topology {
            Topology::Tree if !graph.is_tree() => {
                return Err(SimError::config("topology", "tagged tree but edges are not a spanning tree"))
            }
            Topology::Clique if self.edges.len() != n * (n - 1) / 2 => {
                return Err(SimError::config("topology", "tagged clique but graph is not complete"))
            }
            _ => {}
        }

        let mut ids = BTreeSet::new();
        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for (k, o) in self.obstacles.iter().enumerate() {
            let field = format!("obstacles[{k}]");
            finite(&format!("{field}.position"), &o.position)?;
            finite(&format!("{field}.velocity"), &o.velocity)?;
            positive(&format!("{field}.radius"), o.radius)?;
            let id = o.id.unwrap_or(k);
            if !ids.insert(id) {
                return Err(SimError::config(format!("{field}.id"), format!("duplicate obstacle id {id}")));
            }
            obstacles.push(
                Obstacle::moving(id, vec2(o.position), vec2(o.velocity), o.radius)
                    .map_err(|e| SimError::config(field, e.to_string()))?,
            );
        }

        Ok(World {
            graph,
            states,
            drives,
            obstacles,
            tau_interval: self.tau_interval(),
            steps: self.steps(),
        })
    }
}

fn agent(x: f64, y: f64) -> AgentSpec {
    AgentSpec {
        position: [x, y],
        velocity: [0.0, 0.0],
        mass: None,
        drive: None,
    }
}

fn obstacle(x: f64, y: f64, vx: f64, vy: f64) -> ObstacleSpec {
    ObstacleSpec {
        id: None,
        position: [x, y],
        velocity: [vx, vy],
        radius: 1.0,
    }
}

fn base(name: &str, topology: Topology, duration: f64) -> Scenario {
    Scenario {
        name: name.to_string(),
        topology,
        agents: Vec::new(),
        edges: Vec::new(),
        mass: 0.5,
        spring: SpringParams::default(),
        obstacles: Vec::new(),
        control_limit: 20.0,
        sensing_radius: 6.0,
        tau_interval: None,
        gains: ClassKGains::default(),
        dt: 0.01,
        duration,
        drive: [5.0, 0.0],
        seed: 0,
    }
}

/// Seven agents on a 3 m grid, each with at most two children, driven in +x
/// toward one disc.
pub fn tree7() -> Scenario {
    let mut s = base("tree7", Topology::Tree, 20.0);
    s.agents = vec![
        agent(0.0, 0.0),
        agent(0.0, 3.0),
        agent(0.0, -3.0),
        agent(-3.0, 3.0),
        agent(0.0, 6.0),
        agent(-3.0, -3.0),
        agent(0.0, -6.0),
    ];
    s.edges = [[0, 1], [0, 2], [1, 3], [1, 4], [2, 5], [2, 6]]
        .into_iter()
        .map(EdgeSpec::Pair)
        .collect();
    s.obstacles = vec![obstacle(10.0, 0.5, 0.0, 0.0)];
    s
}

/// Circumradius of the clique presets' starting octagon.
pub const CLIQUE_RADIUS: f64 = 4.0;

fn clique_with(name: &str, obstacle_velocity: [f64; 2]) -> Scenario {
    let mut s = base(name, Topology::Clique, 40.0);
    let n = 8;
    let r = CLIQUE_RADIUS;
    s.agents = (0..n)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            agent(r * th.cos(), r * th.sin())
        })
        .collect();
    for a in 0..n {
        for b in a + 1..n {
            s.edges.push(EdgeSpec::Pair([a, b]));
        }
    }
    // the drive line runs through the middle of a gap
    s.obstacles = [-3.0, 3.0, 9.0]
        .into_iter()
        .map(|y| obstacle(10.0, y, obstacle_velocity[0], obstacle_velocity[1]))
        .collect();
    s
}

/// Eight fully connected agents on a regular octagon, driven through three
/// discs spaced 6 m apart across the path.
pub fn clique8() -> Scenario {
    clique_with("clique8", [0.0, 0.0])
}

/// `clique8` with the discs moving toward the formation at `speed` m/s.
pub fn clique8_dynamic(speed: f64) -> Scenario {
    let name = if speed > 1.0 { "clique8-fast" } else { "clique8-dynamic" };
    let mut s = clique_with(name, [-speed, 0.0]);
    if speed > 1.0 {
        // start far out, with the middle disc on the formation's centreline
        for o in &mut s.obstacles {
            o.position[0] = 60.0;
            o.position[1] -= 3.0;
        }
        s.duration = 10.0;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_preset_matches_the_parameter_list() {
        let s = Scenario::preset("tree7").unwrap();
        let w = s.build().unwrap();
        assert_eq!(w.graph.num_agents(), 7);
        assert!(w.graph.is_tree());
        assert_eq!(s.mass, 0.5);
        assert_eq!(s.obstacles[0].radius, 1.0);
        assert_eq!(s.spring, SpringParams { stiffness: 3.0, damping: 1.0, rest_length: 3.0 });
        assert_eq!(s.control_limit, 20.0);
        assert_eq!(s.dt, 0.01);
        assert_eq!(w.steps, 2000);
    }

    #[test]
    fn clique_preset_is_complete() {
        let w = Scenario::preset("clique8").unwrap().build().unwrap();
        assert_eq!(w.graph.num_agents(), 8);
        assert!((0..8).all(|i| w.graph.degree(i) == 7));
    }

    #[test]
    fn missing_dt_defaults_to_100_hz() {
        let s = Scenario::from_json(r#"{"agents":[{"position":[0,0]}],"duration":1}"#).unwrap();
        assert_eq!(s.dt, 0.01);
        assert_eq!(s.tau_interval(), 0.01);
    }

    #[test]
    fn errors_name_the_field() {
        let e = Scenario::from_json(r#"{"agents":[{"position":[0,0]}],"duration":1,"dt":-1}"#)
            .unwrap_err();
        assert!(e.to_string().contains("`dt`"), "{e}");
        let e = Scenario::from_json(
            r#"{"agents":[{"position":[0,0]},{"position":[1,0]}],"edges":[[0,5]],"duration":1}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("edges[0]"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn cyclic_tree_is_rejected() {
        let text = r#"{"topology":"tree","agents":[{"position":[0,0]},{"position":[3,0]},{"position":[0,3]}],
            "edges":[[0,1],[1,2],[2,0]],"duration":1}"#;
        let e = Scenario::from_json(text).unwrap_err();
        assert!(e.to_string().contains("topology"), "{e}");
    }

    #[test]
    fn octagon_starts_stretched() {
        let w = clique8().build().unwrap();
        for (i, x) in w.states.iter().enumerate() {
            assert!((x.p.norm() - CLIQUE_RADIUS).abs() < 1e-12);
            // rest length 3 is shorter than the 4 m spacing of the octagon, so springs pull inward
            let u = collabsafe_core::formation::formation_control(i, &w.states, &w.graph).unwrap();
            assert!(u.dot(x.p) < 0.0, "agent {i}: {u:?}");
        }
    }

    #[test]
    fn json_roundtrip() {
        let s = tree7();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}
