//! Valley-free route redistribution from injection sessions across the AS
//! topology.
//!
//! Export discipline: a route learned from a customer is exported to every
//! neighbor; a route learned from a peer or provider is exported to
//! customers only. A transit injection enters its neighbor as
//! customer-learned. A bilateral-peer injection enters as peer-learned and
//! therefore descends the neighbor's customer cone, thinned per member by a
//! configurable fraction (real-world peer sessions rarely reach the whole
//! cone). Multilateral (route-server) injections barely propagate and
//! default to reaching the neighbor only.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::cones::SmfdMatrix;
use crate::rng::{hash_str, mix3};
use crate::topology::{Asn, AsTopology, LanId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropagationError {
    UnknownNeighbor(Asn),
    DuplicateSession(String),
    MismatchedInputs(String),
}

impl fmt::Display for PropagationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropagationError::UnknownNeighbor(asn) => {
                write!(f, "injection neighbor AS{asn} is not in the topology")
            }
            PropagationError::DuplicateSession(id) => {
                write!(f, "duplicate injection session id `{id}`")
            }
            PropagationError::MismatchedInputs(reason) => {
                write!(f, "mismatched inputs: {reason}")
            }
        }
    }
}

impl core::error::Error for PropagationError {}

/// How the attacker reaches the injection AS.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum InjectionVia {
    Transit,
    BilateralPeer,
    MultilateralPeer,
}

/// One injection session: the neighbor it terminates at, the session type,
/// and how many routes it carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub neighbor: Asn,
    pub via: InjectionVia,
    pub session_id: String,
    pub route_count: u64,
}

/// Route-server reach model.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum MultilateralMode {
    /// Multilateral injections reach nothing at all.
    Off,
    /// Multilateral injections reach the route-server neighbor only.
    #[default]
    DirectOnly,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    /// Probability that a bilateral-peer route reaches a given member of
    /// the peer's customer cone; 1.0 reproduces the idealized model.
    pub peer_cone_fraction: f64,
    pub multilateral_mode: MultilateralMode,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            peer_cone_fraction: 1.0,
            multilateral_mode: MultilateralMode::DirectOnly,
            seed: 0,
        }
    }
}

/// Per-AS exposure tallies.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct AsExposure {
    pub sessions_reaching: u64,
    pub routes_received: u64,
}

/// Reach of one injection, both against the whole topology and against the
/// neighbor's customer cone.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct ReachFraction {
    pub total: f64,
    pub within_cone: f64,
}

/// Aggregated simulation output. `per_as` holds only reached ASes; use
/// [`ExposureReport::sessions_reaching`] for zero-defaulting lookups.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExposureReport {
    pub per_as: BTreeMap<Asn, AsExposure>,
    pub reach_fraction: BTreeMap<String, ReachFraction>,
    pub total_ases: u64,
}

impl ExposureReport {
    pub fn sessions_reaching(&self, asn: Asn) -> u64 {
        self.per_as.get(&asn).map(|e| e.sessions_reaching).unwrap_or(0)
    }

    pub fn routes_received(&self, asn: Asn) -> u64 {
        self.per_as.get(&asn).map(|e| e.routes_received).unwrap_or(0)
    }
}

/// How an AS learned a route; customer-learned routes may be re-exported
/// anywhere, the rest only to customers.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Learned {
    PeerOrProvider,
    Customer,
}

/// The set of ASes a route reaches when it enters `entry` in `state`,
/// following the two valley-free export rules to fixpoint.
fn valley_free_reach(topology: &AsTopology, entry: Asn, state: Learned) -> BTreeSet<Asn> {
    let mut best: BTreeMap<Asn, Learned> = BTreeMap::new();
    let mut queue: VecDeque<(Asn, Learned)> = VecDeque::new();
    best.insert(entry, state);
    queue.push_back((entry, state));
    while let Some((asn, how)) = queue.pop_front() {
        let mut deliver = |to: Asn, how: Learned, queue: &mut VecDeque<(Asn, Learned)>| {
            let upgrade = match best.get(&to) {
                None => true,
                Some(prev) => how > *prev,
            };
            if upgrade {
                best.insert(to, how);
                queue.push_back((to, how));
            }
        };
        // Exports to customers are always allowed; they receive the route
        // from a provider.
        for &c in topology.customers_of(asn) {
            deliver(c, Learned::PeerOrProvider, &mut queue);
        }
        if how == Learned::Customer {
            // Customer-learned routes also go up and sideways.
            for &p in topology.providers_of(asn) {
                deliver(p, Learned::Customer, &mut queue);
            }
            for &p in topology.peers_of(asn) {
                deliver(p, Learned::PeerOrProvider, &mut queue);
            }
        }
    }
    best.into_keys().collect()
}

/// Deterministic per-(injection, cone member) coin flip.
fn cone_member_reached(seed: u64, session_id: &str, member: Asn, fraction: f64) -> bool {
    let threshold = (fraction.clamp(0.0, 1.0) * 18_446_744_073_709_551_616.0) as u128;
    u128::from(mix3(seed, hash_str(session_id), u64::from(member.0))) < threshold
}

/// Simulates all injections and aggregates per-AS exposure.
///
/// Deterministic for a given seed. Each injection is independent, so tallies
/// are order-insensitive.
pub fn simulate(
    topology: &AsTopology,
    injections: &[Injection],
    config: &SimulationConfig,
) -> Result<ExposureReport, PropagationError> {
    let mut ids = BTreeSet::new();
    for inj in injections {
        if !topology.contains(inj.neighbor) {
            return Err(PropagationError::UnknownNeighbor(inj.neighbor));
        }
        if !ids.insert(&inj.session_id) {
            return Err(PropagationError::DuplicateSession(inj.session_id.clone()));
        }
    }

    let mut report = ExposureReport {
        total_ases: topology.ases().len() as u64,
        ..ExposureReport::default()
    };
    for inj in injections {
        let reached: BTreeSet<Asn> = match inj.via {
            InjectionVia::Transit => {
                valley_free_reach(topology, inj.neighbor, Learned::Customer)
            }
            InjectionVia::BilateralPeer => {
                let cone = valley_free_reach(topology, inj.neighbor, Learned::PeerOrProvider);
                cone.into_iter()
                    .filter(|&a| {
                        a == inj.neighbor
                            || cone_member_reached(
                                config.seed,
                                &inj.session_id,
                                a,
                                config.peer_cone_fraction,
                            )
                    })
                    .collect()
            }
            InjectionVia::MultilateralPeer => match config.multilateral_mode {
                MultilateralMode::Off => BTreeSet::new(),
                MultilateralMode::DirectOnly => BTreeSet::from([inj.neighbor]),
            },
        };
        for &asn in &reached {
            let e = report.per_as.entry(asn).or_default();
            e.sessions_reaching += 1;
            e.routes_received += inj.route_count;
        }
        let cone = valley_free_reach(topology, inj.neighbor, Learned::PeerOrProvider);
        let in_cone = reached.intersection(&cone).count();
        report.reach_fraction.insert(
            inj.session_id.clone(),
            ReachFraction {
                total: if report.total_ases == 0 {
                    0.0
                } else {
                    reached.len() as f64 / report.total_ases as f64
                },
                within_cone: in_cone as f64 / cone.len().max(1) as f64,
            },
        );
    }
    Ok(report)
}

/// ASes reached by at least `r` injection sessions.
pub fn fully_affected(report: &ExposureReport, r: u64) -> BTreeSet<Asn> {
    report
        .per_as
        .iter()
        .filter(|(_, e)| e.sessions_reaching >= r)
        .map(|(a, _)| *a)
        .collect()
}

/// Compares predicted exposure (SMFD summed over the selected LANs) against
/// simulated exposure, per AS. With `peer_cone_fraction = 1.0` and a
/// bilateral-only injection set matching the SMFD inputs, the two columns
/// are identical.
pub fn compare_to_smfd(
    report: &ExposureReport,
    smfd: &SmfdMatrix,
    selected_lans: &[LanId],
) -> Result<Vec<(Asn, u64, u64)>, PropagationError> {
    for lan in selected_lans {
        if !smfd.lan_ids().contains(lan) {
            return Err(PropagationError::MismatchedInputs(format!(
                "selected LAN `{lan}` is not in the SMFD matrix"
            )));
        }
    }
    let mut asns: BTreeSet<Asn> = smfd.asns().iter().copied().collect();
    asns.extend(report.per_as.keys().copied());
    Ok(asns
        .into_iter()
        .map(|a| {
            let predicted: u64 = selected_lans.iter().map(|l| smfd.value(a, l)).sum();
            (a, predicted, report.sessions_reaching(a))
        })
        .collect())
}
