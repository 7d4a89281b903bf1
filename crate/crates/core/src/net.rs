//! AC/DC hybrid network, scenario and tariff data.
//!
//! Files are SI on disk. `HybridNetwork` keeps the SI records it was built
//! from (so it can be written back out) and precomputes per-unit quantities
//! and the radial orientation of every subsystem.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::HOURS;

pub const DEFAULT_V_MIN: f64 = 0.97;
pub const DEFAULT_V_MAX: f64 = 1.03;
pub const DEFAULT_I_MAX_A: f64 = 500.0;

/// Sanity band for ambient temperature in kelvin.
pub const T_EXT_BAND_K: (f64, f64) = (223.0, 333.0);

pub const KELVIN_OFFSET: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Ac,
    Dc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VscMode {
    /// Holds the DC voltage of its subsystem and sets Q on the AC side.
    UdcQ,
    Pq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum StorageKind {
    Sess,
    Mess,
}

impl std::fmt::Display for StorageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StorageKind::Sess => write!(f, "SESS"),
            StorageKind::Mess => write!(f, "MESS"),
        }
    }
}

// ---------------------------------------------------------------------------
// On-disk schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkHeader {
    #[serde(default)]
    pub name: String,
    pub base_kva: f64,
    pub ac_base_kv: f64,
    /// Pole-to-pole DC base voltage; defaults to the AC base.
    #[serde(default)]
    pub dc_base_kv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: u32,
    pub kind: BusKind,
    pub subsystem: String,
    #[serde(default)]
    pub v_min: Option<f64>,
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default)]
    pub slack: bool,
    #[serde(default)]
    pub important_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub from: u32,
    pub to: u32,
    pub r_ohm: f64,
    #[serde(default)]
    pub x_ohm: f64,
    #[serde(default)]
    pub i_max_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VscRecord {
    #[serde(default)]
    pub name: String,
    pub ac_bus: u32,
    pub dc_bus: u32,
    pub s_kva: f64,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    pub mode: VscMode,
    pub loss_coeff: f64,
}

/// Candidate storage site. Stage-1 sites carry energy/power bounds, stage-2
/// sites carry a module-count cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub node: u32,
    pub kind: StorageKind,
    #[serde(default)]
    pub e_min_kwh: f64,
    #[serde(default)]
    pub e_max_kwh: f64,
    #[serde(default)]
    pub p_min_kw: f64,
    #[serde(default)]
    pub p_max_kw: f64,
    #[serde(default)]
    pub max_modules: u32,
    #[serde(default)]
    pub colocated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub network: NetworkHeader,
    pub buses: Vec<BusRecord>,
    #[serde(default)]
    pub branches: Vec<BranchRecord>,
    #[serde(default)]
    pub vscs: Vec<VscRecord>,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

// ---------------------------------------------------------------------------
// Validated model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub subsystem: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub important_ratio: f64,
}

/// Branch oriented away from its subsystem's slack bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub kind: BusKind,
    /// Index of the sending (upstream) bus.
    pub parent: usize,
    /// Index of the receiving (downstream) bus.
    pub child: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub i_max_a: f64,
    pub r_pu: f64,
    pub x_pu: f64,
    pub i_max_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vsc {
    pub name: String,
    pub ac_bus: usize,
    pub dc_bus: usize,
    pub s_kva: f64,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    pub mode: VscMode,
    pub loss_coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub name: String,
    pub kind: BusKind,
    pub slack: usize,
    pub buses: Vec<usize>,
    /// True when the slack bus is the DC terminal of the Udc-Q converter
    /// rather than a grid connection.
    pub slack_is_converter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridNetwork {
    pub name: String,
    pub base_kva: f64,
    pub ac_base_kv: f64,
    pub dc_base_kv: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub vscs: Vec<Vsc>,
    pub placements: Vec<Placement>,
    pub subsystems: Vec<Subsystem>,
    index: HashMap<u32, usize>,
    adjacency: Vec<Vec<usize>>,
}

impl HybridNetwork {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: NetworkFile =
            toml::from_str(text).map_err(|e| CoreError::parse("network file", e.message()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: NetworkFile) -> Result<Self> {
        build_network(file)
    }

    /// Writes the network back to its on-disk schema with every default made
    /// explicit.
    pub fn to_file(&self) -> NetworkFile {
        let buses = self
            .buses
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                kind: b.kind,
                subsystem: self.subsystems[b.subsystem].name.clone(),
                v_min: Some(b.v_min),
                v_max: Some(b.v_max),
                slack: self.subsystems[b.subsystem].slack == self.bus_index(b.id).unwrap()
                    && !self.subsystems[b.subsystem].slack_is_converter,
                important_ratio: b.important_ratio,
            })
            .collect();
        let branches = self
            .branches
            .iter()
            .map(|br| BranchRecord {
                from: self.buses[br.parent].id,
                to: self.buses[br.child].id,
                r_ohm: br.r_ohm,
                x_ohm: br.x_ohm,
                i_max_a: Some(br.i_max_a),
            })
            .collect();
        let vscs = self
            .vscs
            .iter()
            .map(|v| VscRecord {
                name: v.name.clone(),
                ac_bus: self.buses[v.ac_bus].id,
                dc_bus: self.buses[v.dc_bus].id,
                s_kva: v.s_kva,
                p_max_kw: v.p_max_kw,
                q_max_kvar: v.q_max_kvar,
                mode: v.mode,
                loss_coeff: v.loss_coeff,
            })
            .collect();
        NetworkFile {
            network: NetworkHeader {
                name: self.name.clone(),
                base_kva: self.base_kva,
                ac_base_kv: self.ac_base_kv,
                dc_base_kv: Some(self.dc_base_kv),
            },
            buses,
            branches,
            vscs,
            placements: self.placements.clone(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&self.to_file()).expect("network file serializes")
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus(&self, id: u32) -> Result<&Bus> {
        self.bus_index(id)
            .map(|i| &self.buses[i])
            .ok_or(CoreError::UnknownNode(id))
    }

    /// Bus indices adjacent to `bus` (by index).
    pub fn neighbours(&self, bus: usize) -> &[usize] {
        &self.adjacency[bus]
    }

    pub fn n_ac(&self) -> usize {
        self.buses.iter().filter(|b| b.kind == BusKind::Ac).count()
    }

    pub fn n_dc(&self) -> usize {
        self.buses.iter().filter(|b| b.kind == BusKind::Dc).count()
    }

    pub fn is_slack(&self, bus: usize) -> bool {
        self.subsystems[self.buses[bus].subsystem].slack == bus
    }

    /// Slack bus that exchanges power with the upstream grid (AC slacks and
    /// DC slacks not held by a converter).
    pub fn is_grid_slack(&self, bus: usize) -> bool {
        let sub = &self.subsystems[self.buses[bus].subsystem];
        sub.slack == bus && !sub.slack_is_converter
    }

    pub fn z_base_ohm(&self, kind: BusKind) -> f64 {
        let kv = self.base_kv(kind);
        kv * kv * 1000.0 / self.base_kva
    }

    pub fn i_base_a(&self, kind: BusKind) -> f64 {
        match kind {
            BusKind::Ac => self.base_kva / (3f64.sqrt() * self.ac_base_kv),
            BusKind::Dc => self.base_kva / self.dc_base_kv,
        }
    }

    pub fn base_kv(&self, kind: BusKind) -> f64 {
        match kind {
            BusKind::Ac => self.ac_base_kv,
            BusKind::Dc => self.dc_base_kv,
        }
    }

    pub fn to_pu_power(&self, kw: f64) -> f64 {
        kw / self.base_kva
    }

    pub fn placements_of(&self, kind: StorageKind) -> impl Iterator<Item = &Placement> {
        self.placements.iter().filter(move |p| p.kind == kind)
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<HybridNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    HybridNetwork::from_toml_str(&text).map_err(|e| match e {
        CoreError::Parse { context, message } => CoreError::Parse {
            context: format!("{context} {}", path.display()),
            message,
        },
        other => other,
    })
}

fn check_finite(context: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CoreError::parse(context, "value is not finite"))
    }
}

fn build_network(file: NetworkFile) -> Result<HybridNetwork> {
    let hdr = &file.network;
    if !(hdr.base_kva > 0.0) {
        return Err(CoreError::parse("network.base_kva", "must be positive"));
    }
    if !(hdr.ac_base_kv > 0.0) {
        return Err(CoreError::parse("network.ac_base_kv", "must be positive"));
    }
    let dc_base_kv = hdr.dc_base_kv.unwrap_or(hdr.ac_base_kv);
    if !(dc_base_kv > 0.0) {
        return Err(CoreError::parse("network.dc_base_kv", "must be positive"));
    }
    if file.buses.is_empty() {
        return Err(CoreError::parse("buses", "network has no buses"));
    }

    // Subsystems in order of first appearance.
    let mut sub_names: Vec<(String, BusKind)> = Vec::new();
    let mut index = HashMap::new();
    let mut buses = Vec::with_capacity(file.buses.len());
    for (i, rec) in file.buses.iter().enumerate() {
        if index.insert(rec.id, i).is_some() {
            return Err(CoreError::Config(format!("duplicate bus id {}", rec.id)));
        }
        let v_min = rec.v_min.unwrap_or(DEFAULT_V_MIN);
        let v_max = rec.v_max.unwrap_or(DEFAULT_V_MAX);
        check_finite("buses.v_min", v_min)?;
        check_finite("buses.v_max", v_max)?;
        if !(v_min > 0.0 && v_min < v_max) {
            return Err(CoreError::Config(format!(
                "bus {}: voltage bounds must satisfy 0 < v_min < v_max (got {v_min}, {v_max})",
                rec.id
            )));
        }
        if !(0.0..=1.0).contains(&rec.important_ratio) {
            return Err(CoreError::Config(format!(
                "bus {}: important_ratio {} outside [0, 1]",
                rec.id, rec.important_ratio
            )));
        }
        let sub = match sub_names.iter().position(|(n, _)| n == &rec.subsystem) {
            Some(s) => {
                if sub_names[s].1 != rec.kind {
                    return Err(CoreError::Config(format!(
                        "subsystem {} mixes AC and DC buses (bus {})",
                        rec.subsystem, rec.id
                    )));
                }
                s
            }
            None => {
                sub_names.push((rec.subsystem.clone(), rec.kind));
                sub_names.len() - 1
            }
        };
        buses.push(Bus {
            id: rec.id,
            kind: rec.kind,
            subsystem: sub,
            v_min,
            v_max,
            important_ratio: rec.important_ratio,
        });
    }

    // Converters.
    let mut vscs = Vec::with_capacity(file.vscs.len());
    for (h, rec) in file.vscs.iter().enumerate() {
        let ac = *index.get(&rec.ac_bus).ok_or(CoreError::UnknownNode(rec.ac_bus))?;
        let dc = *index.get(&rec.dc_bus).ok_or(CoreError::UnknownNode(rec.dc_bus))?;
        if buses[ac].kind != BusKind::Ac || buses[dc].kind != BusKind::Dc {
            return Err(CoreError::Config(format!(
                "converter {h} must bridge an AC bus and a DC bus ({} -> {})",
                rec.ac_bus, rec.dc_bus
            )));
        }
        for (field, v) in [
            ("vscs.s_kva", rec.s_kva),
            ("vscs.p_max_kw", rec.p_max_kw),
            ("vscs.q_max_kvar", rec.q_max_kvar),
            ("vscs.loss_coeff", rec.loss_coeff),
        ] {
            check_finite(field, v)?;
            if v < 0.0 {
                return Err(CoreError::parse(field, "must be non-negative"));
            }
        }
        if rec.loss_coeff >= 1.0 {
            return Err(CoreError::parse("vscs.loss_coeff", "must be below 1"));
        }
        let name = if rec.name.is_empty() {
            format!("VSC{}", h + 1)
        } else {
            rec.name.clone()
        };
        vscs.push(Vsc {
            name,
            ac_bus: ac,
            dc_bus: dc,
            s_kva: rec.s_kva,
            p_max_kw: rec.p_max_kw,
            q_max_kvar: rec.q_max_kvar,
            mode: rec.mode,
            loss_coeff: rec.loss_coeff,
        });
    }
    if !vscs.is_empty() {
        let n_udc = vscs.iter().filter(|v| v.mode == VscMode::UdcQ).count();
        if n_udc != 1 {
            return Err(CoreError::Config(format!(
                "exactly one converter must run in Udc-Q mode, found {n_udc}"
            )));
        }
    }

    // Slack per subsystem.
    let mut subsystems = Vec::with_capacity(sub_names.len());
    for (s, (name, kind)) in sub_names.iter().enumerate() {
        let members: Vec<usize> = (0..buses.len()).filter(|&b| buses[b].subsystem == s).collect();
        let flagged: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&b| file.buses[b].slack)
            .collect();
        if flagged.len() > 1 {
            return Err(CoreError::Config(format!(
                "subsystem {name} declares {} slack buses",
                flagged.len()
            )));
        }
        let converter_slack = vscs
            .iter()
            .find(|v| v.mode == VscMode::UdcQ && buses[v.dc_bus].subsystem == s)
            .map(|v| v.dc_bus);
        let (slack, slack_is_converter) = match (*kind, converter_slack, flagged.first()) {
            (BusKind::Dc, Some(c), Some(&f)) if c != f => {
                return Err(CoreError::Config(format!(
                    "subsystem {name}: slack bus {} differs from the Udc-Q converter terminal {}",
                    buses[f].id, buses[c].id
                )))
            }
            (BusKind::Dc, Some(c), _) => (c, true),
            (_, _, Some(&f)) => (f, false),
            (_, _, None) => {
                return Err(CoreError::Config(format!(
                    "subsystem {name} has no slack bus"
                )))
            }
        };
        subsystems.push(Subsystem {
            name: name.clone(),
            kind: *kind,
            slack,
            buses: members,
            slack_is_converter,
        });
    }
    if vscs.iter().any(|v| v.mode == VscMode::UdcQ) {
        let dc_subs = subsystems.iter().filter(|s| s.kind == BusKind::Dc).count();
        if dc_subs > 1 {
            return Err(CoreError::Config(
                "a single Udc-Q converter cannot hold more than one DC subsystem".into(),
            ));
        }
    }

    // Branches: radiality per subsystem via union-find, then BFS orientation.
    let n = buses.len();
    let mut adjacency = vec![Vec::new(); n];
    let mut uf = UnionFind::new(n);
    let mut raw = Vec::with_capacity(file.branches.len());
    for rec in &file.branches {
        let a = *index.get(&rec.from).ok_or(CoreError::UnknownNode(rec.from))?;
        let b = *index.get(&rec.to).ok_or(CoreError::UnknownNode(rec.to))?;
        if a == b {
            return Err(CoreError::Topology {
                message: format!("branch {}-{} is a self loop", rec.from, rec.to),
                cycle: vec![rec.from],
            });
        }
        if buses[a].subsystem != buses[b].subsystem {
            return Err(CoreError::Config(format!(
                "branch {}-{} joins different subsystems",
                rec.from, rec.to
            )));
        }
        check_finite("branches.r_ohm", rec.r_ohm)?;
        check_finite("branches.x_ohm", rec.x_ohm)?;
        if rec.r_ohm < 0.0 || rec.x_ohm < 0.0 {
            return Err(CoreError::parse("branches.r_ohm", "impedance must be non-negative"));
        }
        if buses[a].kind == BusKind::Dc && rec.x_ohm != 0.0 {
            return Err(CoreError::parse("branches.x_ohm", "DC branches carry no reactance"));
        }
        let i_max = rec.i_max_a.unwrap_or(DEFAULT_I_MAX_A);
        if !(i_max > 0.0) {
            return Err(CoreError::parse("branches.i_max_a", "must be positive"));
        }
        if !uf.union(a, b) {
            let path = tree_path(&adjacency, a, b);
            let cycle = path.into_iter().map(|i| buses[i].id).collect();
            return Err(CoreError::Topology {
                message: format!("branch {}-{} closes a loop", rec.from, rec.to),
                cycle,
            });
        }
        adjacency[a].push(b);
        adjacency[b].push(a);
        raw.push((a, b, rec, i_max));
    }
    for sub in &subsystems {
        let root = uf.find(sub.slack);
        if let Some(&orphan) = sub.buses.iter().find(|&&b| uf.find(b) != root) {
            return Err(CoreError::Topology {
                message: format!(
                    "subsystem {} is not connected: bus {} unreachable from slack {}",
                    sub.name, buses[orphan].id, buses[sub.slack].id
                ),
                cycle: Vec::new(),
            });
        }
    }

    // BFS depth from each slack gives the orientation.
    let mut depth = vec![usize::MAX; n];
    for sub in &subsystems {
        let mut queue = VecDeque::from([sub.slack]);
        depth[sub.slack] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    let z_base = |kind: BusKind| {
        let kv = if kind == BusKind::Ac { hdr.ac_base_kv } else { dc_base_kv };
        kv * kv * 1000.0 / hdr.base_kva
    };
    let i_base = |kind: BusKind| match kind {
        BusKind::Ac => hdr.base_kva / (3f64.sqrt() * hdr.ac_base_kv),
        BusKind::Dc => hdr.base_kva / dc_base_kv,
    };
    let branches = raw
        .into_iter()
        .map(|(a, b, rec, i_max)| {
            let (parent, child) = if depth[a] < depth[b] { (a, b) } else { (b, a) };
            let kind = buses[a].kind;
            Branch {
                kind,
                parent,
                child,
                r_ohm: rec.r_ohm,
                x_ohm: rec.x_ohm,
                i_max_a: i_max,
                r_pu: rec.r_ohm / z_base(kind),
                x_pu: rec.x_ohm / z_base(kind),
                i_max_pu: i_max / i_base(kind),
            }
        })
        .collect();

    for p in &file.placements {
        if !index.contains_key(&p.node) {
            return Err(CoreError::UnknownNode(p.node));
        }
        for (field, v) in [
            ("placements.e_min_kwh", p.e_min_kwh),
            ("placements.e_max_kwh", p.e_max_kwh),
            ("placements.p_min_kw", p.p_min_kw),
            ("placements.p_max_kw", p.p_max_kw),
        ] {
            check_finite(field, v)?;
            if v < 0.0 {
                return Err(CoreError::parse(field, "must be non-negative"));
            }
        }
        if p.e_min_kwh > p.e_max_kwh || p.p_min_kw > p.p_max_kw {
            return Err(CoreError::Config(format!(
                "placement at node {}: lower sizing bound exceeds upper bound",
                p.node
            )));
        }
    }

    Ok(HybridNetwork {
        name: hdr.name.clone(),
        base_kva: hdr.base_kva,
        ac_base_kv: hdr.ac_base_kv,
        dc_base_kv,
        buses,
        branches,
        vscs,
        placements: file.placements,
        subsystems,
        index,
        adjacency,
    })
}

/// Path between two buses of the partially built forest.
fn tree_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut prev = vec![usize::MAX; adjacency.len()];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adjacency[u] {
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    path
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[rb] = ra;
        true
    }
}

// ---------------------------------------------------------------------------
// Tariff
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffBand {
    pub start_hour: usize,
    pub end_hour: usize,
    pub price: f64,
}

/// Piecewise-constant price schedule over one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    bands: Vec<TariffBand>,
}

impl Tariff {
    pub fn new(mut bands: Vec<TariffBand>) -> Result<Self> {
        bands.sort_by_key(|b| b.start_hour);
        let mut cursor = 0;
        for b in &bands {
            if b.start_hour != cursor || b.end_hour <= b.start_hour {
                return Err(CoreError::Config(format!(
                    "tariff bands must partition 0..24 exactly once (gap or overlap at hour {cursor})"
                )));
            }
            if !(b.price > 0.0) || !b.price.is_finite() {
                return Err(CoreError::Config(format!(
                    "tariff band {}-{} has non-positive price",
                    b.start_hour, b.end_hour
                )));
            }
            cursor = b.end_hour;
        }
        if cursor != HOURS {
            return Err(CoreError::Config(format!(
                "tariff bands end at hour {cursor}, expected {HOURS}"
            )));
        }
        Ok(Self { bands })
    }

    /// Peak 17-23 at 0.196, flat 07-17 at 0.116, off-peak 23-07 at 0.044 $/kWh.
    pub fn default_tou() -> Self {
        let band = |s, e, p| TariffBand {
            start_hour: s,
            end_hour: e,
            price: p,
        };
        Self::new(vec![
            band(0, 7, 0.044),
            band(7, 17, 0.116),
            band(17, 23, 0.196),
            band(23, 24, 0.044),
        ])
        .expect("built-in tariff is valid")
    }

    pub fn bands(&self) -> &[TariffBand] {
        &self.bands
    }

    pub fn price_at(&self, t: usize) -> Result<f64> {
        self.bands
            .iter()
            .find(|b| b.start_hour <= t && t < b.end_hour)
            .map(|b| b.price)
            .ok_or_else(|| CoreError::Domain(format!("hour {t} outside 0..{HOURS}")))
    }

    pub fn hourly(&self) -> Vec<f64> {
        (0..HOURS).map(|t| self.price_at(t).unwrap()).collect()
    }

    /// Parses `start_hour,end_hour,price` rows; a header row and `#` comments
    /// are allowed.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut bands = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CoreError::parse("tariff", e))?;
            if rec.len() != 3 {
                return Err(CoreError::parse(
                    "tariff",
                    format!("row {} has {} fields, expected 3", line + 1, rec.len()),
                ));
            }
            if line == 0 && rec[0].parse::<f64>().is_err() {
                continue;
            }
            let field = |i: usize, name: &str| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| CoreError::parse(format!("tariff.{name}"), e))
            };
            bands.push(TariffBand {
                start_hour: field(0, "start_hour")? as usize,
                end_hour: field(1, "end_hour")? as usize,
                price: field(2, "price")?,
            });
        }
        Self::new(bands)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

/// One representative day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    /// Days per year (stage 1) or days per event (stage 2) this day stands for.
    pub weight_days: u32,
    pub stage: Stage,
    pub load_p_kw: BTreeMap<u32, Vec<f64>>,
    pub load_q_kvar: BTreeMap<u32, Vec<f64>>,
    pub pv_kw: BTreeMap<u32, Vec<f64>>,
    pub price: Vec<f64>,
    pub t_ext_k: Vec<f64>,
    pub wind_ms: Vec<f64>,
}

impl Scenario {
    /// Flat day with no load or PV.
    pub fn empty(id: &str, weight_days: u32, stage: Stage, tariff: &Tariff, t_ext_k: f64) -> Self {
        Self {
            id: id.to_string(),
            weight_days,
            stage,
            load_p_kw: BTreeMap::new(),
            load_q_kvar: BTreeMap::new(),
            pv_kw: BTreeMap::new(),
            price: tariff.hourly(),
            t_ext_k: vec![t_ext_k; HOURS],
            wind_ms: vec![0.0; HOURS],
        }
    }

    pub fn load_p(&self, node: u32, t: usize) -> f64 {
        self.load_p_kw.get(&node).map_or(0.0, |v| v[t])
    }

    pub fn load_q(&self, node: u32, t: usize) -> f64 {
        self.load_q_kvar.get(&node).map_or(0.0, |v| v[t])
    }

    pub fn pv(&self, node: u32, t: usize) -> f64 {
        self.pv_kw.get(&node).map_or(0.0, |v| v[t])
    }

    pub fn load_series(&self, node: u32) -> Vec<f64> {
        self.load_p_kw
            .get(&node)
            .cloned()
            .unwrap_or_else(|| vec![0.0; HOURS])
    }

    /// Reads a one-row-per-hour table with columns `load_p_<node>`,
    /// `load_q_<node>`, `pv_<node>`, optional `price`, `temp_c`, `wind_ms`.
    /// Missing prices fall back to `tariff`.
    pub fn from_csv_str(
        text: &str,
        id: &str,
        weight_days: u32,
        stage: Stage,
        tariff: Option<&Tariff>,
    ) -> Result<Self> {
        let ctx = format!("scenario {id}");
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| CoreError::parse(&ctx, e))?
            .clone();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CoreError::parse(&ctx, e))?;
            for (c, field) in rec.iter().enumerate() {
                let v = field.parse::<f64>().map_err(|e| {
                    CoreError::parse(format!("{ctx} column {} row {}", &headers[c], row + 1), e)
                })?;
                columns[c].push(v);
            }
        }
        let mut s = Scenario {
            id: id.to_string(),
            weight_days,
            stage,
            load_p_kw: BTreeMap::new(),
            load_q_kvar: BTreeMap::new(),
            pv_kw: BTreeMap::new(),
            price: Vec::new(),
            t_ext_k: Vec::new(),
            wind_ms: Vec::new(),
        };
        let mut have_temp = false;
        for (name, col) in headers.iter().zip(columns) {
            let node = |prefix: &str| -> Result<u32> {
                name[prefix.len()..].parse::<u32>().map_err(|_| {
                    CoreError::parse(&ctx, format!("column {name}: bad node id"))
                })
            };
            if name.starts_with("load_p_") {
                s.load_p_kw.insert(node("load_p_")?, col);
            } else if name.starts_with("load_q_") {
                s.load_q_kvar.insert(node("load_q_")?, col);
            } else if name.starts_with("pv_") {
                s.pv_kw.insert(node("pv_")?, col);
            } else {
                match name {
                    "price" => s.price = col,
                    "temp_c" => {
                        have_temp = true;
                        s.t_ext_k = col.into_iter().map(|c| c + KELVIN_OFFSET).collect();
                    }
                    "temp_k" => {
                        have_temp = true;
                        s.t_ext_k = col;
                    }
                    "wind_ms" => s.wind_ms = col,
                    "hour" => {}
                    other => {
                        return Err(CoreError::parse(&ctx, format!("unknown column {other}")))
                    }
                }
            }
        }
        if !have_temp {
            return Err(CoreError::parse(&ctx, "missing column temp_c"));
        }
        if s.wind_ms.is_empty() {
            return Err(CoreError::parse(&ctx, "missing column wind_ms"));
        }
        if s.price.is_empty() {
            match tariff {
                Some(t) => s.price = t.hourly(),
                None => {
                    return Err(CoreError::parse(
                        &ctx,
                        "missing column price and no tariff supplied",
                    ))
                }
            }
        }
        Ok(s)
    }

    pub fn load_csv(
        path: impl AsRef<Path>,
        id: &str,
        weight_days: u32,
        stage: Stage,
        tariff: Option<&Tariff>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text, id, weight_days, stage, tariff)
    }

    pub fn to_csv_string(&self) -> String {
        let mut header = vec!["hour".to_string()];
        let mut cols: Vec<&Vec<f64>> = Vec::new();
        for (n, v) in &self.load_p_kw {
            header.push(format!("load_p_{n}"));
            cols.push(v);
        }
        for (n, v) in &self.load_q_kvar {
            header.push(format!("load_q_{n}"));
            cols.push(v);
        }
        for (n, v) in &self.pv_kw {
            header.push(format!("pv_{n}"));
            cols.push(v);
        }
        header.extend(["price", "temp_c", "wind_ms"].map(String::from));
        let temp_c: Vec<f64> = self.t_ext_k.iter().map(|k| k - KELVIN_OFFSET).collect();
        let mut out = header.join(",");
        out.push('\n');
        for t in 0..self.price.len() {
            let mut row = vec![t.to_string()];
            row.extend(cols.iter().map(|c| c[t].to_string()));
            row.push(self.price[t].to_string());
            row.push(temp_c[t].to_string());
            row.push(self.wind_ms[t].to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Checks a scenario against a network; returns it unchanged on success.
pub fn validate_scenario(s: Scenario, n: &HybridNetwork) -> Result<Scenario> {
    let series = |name: &str, v: &[f64]| -> Result<()> {
        if v.len() != HOURS {
            return Err(CoreError::Domain(format!(
                "scenario {}: {name} has {} entries, expected {HOURS}",
                s.id,
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::Domain(format!("scenario {}: {name} not finite", s.id)));
        }
        Ok(())
    };
    if s.weight_days < 1 {
        return Err(CoreError::Domain(format!("scenario {}: weight must be >= 1 day", s.id)));
    }
    for (label, map) in [("load_p", &s.load_p_kw), ("load_q", &s.load_q_kvar), ("pv", &s.pv_kw)] {
        for (node, v) in map {
            n.bus(*node)?;
            series(&format!("{label}_{node}"), v)?;
            if label != "load_q" && v.iter().any(|&x| x < 0.0) {
                return Err(CoreError::Domain(format!(
                    "scenario {}: negative {label} at node {node}",
                    s.id
                )));
            }
        }
    }
    for node in s.load_q_kvar.keys() {
        if n.bus(*node)?.kind == BusKind::Dc && s.load_q_kvar[node].iter().any(|&q| q != 0.0) {
            return Err(CoreError::Domain(format!(
                "scenario {}: reactive load on DC node {node}",
                s.id
            )));
        }
    }
    series("price", &s.price)?;
    if s.price.iter().any(|&p| p <= 0.0) {
        return Err(CoreError::Domain(format!("scenario {}: prices must be positive", s.id)));
    }
    series("temperature", &s.t_ext_k)?;
    if s
        .t_ext_k
        .iter()
        .any(|&k| k < T_EXT_BAND_K.0 || k > T_EXT_BAND_K.1)
    {
        return Err(CoreError::Domain(format!(
            "scenario {}: ambient temperature outside [{}, {}] K",
            s.id, T_EXT_BAND_K.0, T_EXT_BAND_K.1
        )));
    }
    series("wind", &s.wind_ms)?;
    if s.wind_ms.iter().any(|&w| w < 0.0) {
        return Err(CoreError::Domain(format!("scenario {}: negative wind speed", s.id)));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
[network]
base_kva = 1000.0
ac_base_kv = 10.0

[[buses]]
id = 1
kind = "ac"
subsystem = "ac1"
slack = true
"#;

    fn three_bus(extra: &str) -> String {
        format!(
            r#"
[network]
base_kva = 1000.0
ac_base_kv = 10.0

[[buses]]
id = 1
kind = "ac"
subsystem = "ac1"
slack = true

[[buses]]
id = 2
kind = "ac"
subsystem = "ac1"

[[buses]]
id = 3
kind = "ac"
subsystem = "ac1"

[[branches]]
from = 1
to = 2
r_ohm = 0.5
x_ohm = 0.4

[[branches]]
from = 2
to = 3
r_ohm = 0.5
x_ohm = 0.4
{extra}
"#
        )
    }

    #[test]
    fn single_bus_is_a_valid_tree() {
        let net = HybridNetwork::from_toml_str(TINY).unwrap();
        assert_eq!(net.buses.len(), 1);
        assert!(net.branches.is_empty());
        assert!(net.is_grid_slack(0));
    }

    #[test]
    fn duplicated_branch_is_a_cycle() {
        let text = three_bus(
            r#"
[[branches]]
from = 1
to = 2
r_ohm = 0.5
"#,
        );
        match HybridNetwork::from_toml_str(&text) {
            Err(CoreError::Topology { cycle, .. }) => assert_eq!(cycle, vec![1, 2]),
            other => panic!("expected topology error, got {other:?}"),
        }
    }

    #[test]
    fn longer_cycle_is_listed() {
        let text = three_bus(
            r#"
[[branches]]
from = 3
to = 1
r_ohm = 0.5
"#,
        );
        match HybridNetwork::from_toml_str(&text) {
            Err(CoreError::Topology { cycle, .. }) => assert_eq!(cycle, vec![3, 2, 1]),
            other => panic!("expected topology error, got {other:?}"),
        }
    }

    #[test]
    fn missing_slack_is_a_configuration_error() {
        let text = TINY.replace("slack = true", "");
        assert!(matches!(
            HybridNetwork::from_toml_str(&text),
            Err(CoreError::Config(_))
        ));
    }

    #[test]
    fn schema_violation_names_the_field() {
        let text = three_bus("").replace("r_ohm = 0.5\nx_ohm = 0.4\n\n[[branches]]", "x_ohm = 0.4\n\n[[branches]]");
        let err = HybridNetwork::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("r_ohm"), "{err}");
    }

    #[test]
    fn branches_are_oriented_from_slack() {
        let text = three_bus("").replace("from = 2\nto = 3", "from = 3\nto = 2");
        let net = HybridNetwork::from_toml_str(&text).unwrap();
        for br in &net.branches {
            assert!(net.buses[br.parent].id < net.buses[br.child].id);
        }
        // 0.5 ohm on a 100 ohm base.
        assert!((net.branches[0].r_pu - 0.005).abs() < 1e-12);
        assert!((net.branches[0].i_max_pu - 500.0 / (1000.0 / (3f64.sqrt() * 10.0))).abs() < 1e-9);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let net = HybridNetwork::from_toml_str(&three_bus("")).unwrap();
        for br in &net.branches {
            assert!(net.neighbours(br.parent).contains(&br.child));
            assert!(net.neighbours(br.child).contains(&br.parent));
        }
    }

    #[test]
    fn tariff_bands() {
        let t = Tariff::default_tou();
        assert_eq!(t.price_at(18).unwrap(), 0.196);
        assert_eq!(t.price_at(3).unwrap(), 0.044);
        assert_eq!(t.price_at(10).unwrap(), 0.116);
        assert_eq!(t.price_at(23).unwrap(), 0.044);
        assert!(t.price_at(24).is_err());
    }

    #[test]
    fn tariff_rejects_overlap_and_gap() {
        let band = |s, e| TariffBand {
            start_hour: s,
            end_hour: e,
            price: 0.1,
        };
        assert!(Tariff::new(vec![band(0, 12), band(11, 24)]).is_err());
        assert!(Tariff::new(vec![band(0, 12), band(13, 24)]).is_err());
        assert!(Tariff::new(vec![band(0, 12)]).is_err());
    }

    #[test]
    fn tariff_csv_with_header() {
        let t = Tariff::from_csv_str("start_hour,end_hour,price\n0,12,0.05\n12,24,0.2\n").unwrap();
        assert_eq!(t.price_at(11).unwrap(), 0.05);
        assert_eq!(t.price_at(12).unwrap(), 0.2);
    }

    #[test]
    fn scenario_validation() {
        let net = HybridNetwork::from_toml_str(&three_bus("")).unwrap();
        let tariff = Tariff::default_tou();
        let s = Scenario::empty("flat", 1, Stage::Stage1, &tariff, 280.0);
        assert!(validate_scenario(s.clone(), &net).is_ok());

        let mut bad = s.clone();
        bad.load_p_kw.insert(99, vec![1.0; HOURS]);
        assert!(matches!(validate_scenario(bad, &net), Err(CoreError::UnknownNode(99))));

        let mut short = s.clone();
        short.load_p_kw.insert(2, vec![1.0; 23]);
        assert!(validate_scenario(short, &net).is_err());

        let mut neg = s;
        neg.pv_kw.insert(3, vec![-1.0; HOURS]);
        assert!(validate_scenario(neg, &net).is_err());
    }

    #[test]
    fn scenario_csv_round_trip() {
        let tariff = Tariff::default_tou();
        let mut s = Scenario::empty("w", 180, Stage::Stage1, &tariff, 268.15);
        s.load_p_kw.insert(2, (0..HOURS).map(|t| 100.0 + t as f64).collect());
        s.load_q_kvar.insert(2, vec![20.0; HOURS]);
        s.pv_kw.insert(3, vec![0.0; HOURS]);
        let text = s.to_csv_string();
        let back = Scenario::from_csv_str(&text, "w", 180, Stage::Stage1, None).unwrap();
        assert_eq!(back.load_p_kw, s.load_p_kw);
        for (a, b) in back.t_ext_k.iter().zip(&s.t_ext_k) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
