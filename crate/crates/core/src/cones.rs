//! Customer cones, provider funnels, and session-multiplied funneling
//! degrees.
//!
//! The customer cone of an AS is itself plus everything reachable through
//! provider-to-customer edges. The provider funnel of a target is the
//! inverse: every AS whose cone contains the target. Weighting funnel
//! membership by establishable session counts per peering LAN gives the
//! session-multiplied funneling degree (SMFD) consumed by the peering
//! scenario model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::topology::{Asn, AsTopology, LanId, SessionMatrix};

/// An AS and the set of its direct and indirect customers (itself included).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CustomerCone {
    pub owner: Asn,
    pub members: BTreeSet<Asn>,
}

/// All cones of a topology plus any provider-to-customer cycles found in the
/// data. Cycles are data noise, not errors: the closure is still computed to
/// fixpoint, so every member of a cycle shares the same cone.
#[derive(Clone, Debug, Default)]
pub struct ConeSet {
    pub cones: BTreeMap<Asn, CustomerCone>,
    pub p2c_cycles: Vec<Vec<Asn>>,
}

impl ConeSet {
    pub fn cone(&self, asn: Asn) -> Option<&CustomerCone> {
        self.cones.get(&asn)
    }

    pub fn cone_size(&self, asn: Asn) -> u64 {
        self.cones.get(&asn).map(|c| c.members.len() as u64).unwrap_or(1)
    }
}

/// Computes the recursive customer cone of every AS as the transitive
/// closure over provider-to-customer edges.
pub fn customer_cones(topology: &AsTopology) -> ConeSet {
    let nodes: Vec<Asn> = topology.ases().iter().copied().collect();
    let index: BTreeMap<Asn, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let succs: Vec<Vec<usize>> = nodes
        .iter()
        .map(|a| topology.customers_of(*a).iter().map(|c| index[c]).collect())
        .collect();

    let scc = tarjan(&succs);

    // Components come out of Tarjan in reverse topological order, so every
    // successor component is finished before its predecessors.
    let mut comp_cones: Vec<BTreeSet<Asn>> = Vec::with_capacity(scc.components.len());
    let mut cycles = Vec::new();
    for members in &scc.components {
        let mut cone: BTreeSet<Asn> = members.iter().map(|&i| nodes[i]).collect();
        for &i in members {
            for &s in &succs[i] {
                let sc = scc.component_of[s];
                if sc != scc.component_of[i] {
                    cone.extend(comp_cones[sc].iter().copied());
                }
            }
        }
        if members.len() > 1 {
            let mut cycle: Vec<Asn> = members.iter().map(|&i| nodes[i]).collect();
            cycle.sort_unstable();
            cycles.push(cycle);
        }
        comp_cones.push(cone);
    }
    cycles.sort();

    let cones = nodes
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            (a, CustomerCone { owner: a, members: comp_cones[scc.component_of[i]].clone() })
        })
        .collect();
    ConeSet { cones, p2c_cycles: cycles }
}

/// Computes cones from observed AS paths instead of the recursive closure:
/// when an AS exported a route to a peer or provider, everything behind it
/// on that path is in its customer cone. Paths are read collector-side
/// first, origin last; the first hop is treated as exported to a peer.
/// Adjacent path pairs with no known relationship contribute nothing.
pub fn path_observed_cones(topology: &AsTopology, paths: &[Vec<Asn>]) -> ConeSet {
    let mut members: BTreeMap<Asn, BTreeSet<Asn>> = BTreeMap::new();
    for asn in topology.ases() {
        members.insert(*asn, BTreeSet::from([*asn]));
    }
    for path in paths {
        for (pos, &asn) in path.iter().enumerate() {
            let exported_up = if pos == 0 {
                true
            } else {
                let prev = path[pos - 1];
                topology.providers_of(asn).contains(&prev)
                    || topology.peers_of(asn).contains(&prev)
            };
            if exported_up {
                members.entry(asn).or_default().extend(path[pos + 1..].iter().copied());
            }
        }
    }
    let cones = members
        .into_iter()
        .map(|(owner, mut m)| {
            m.insert(owner);
            (owner, CustomerCone { owner, members: m })
        })
        .collect();
    ConeSet { cones, p2c_cycles: Vec::new() }
}

struct SccResult {
    /// Each component's node indices; components in reverse topological order.
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
}

/// Iterative Tarjan over an adjacency list.
fn tarjan(succs: &[Vec<usize>]) -> SccResult {
    const UNSET: usize = usize::MAX;
    let n = succs.len();
    let mut index = alloc::vec![UNSET; n];
    let mut lowlink = alloc::vec![0usize; n];
    let mut on_stack = alloc::vec![false; n];
    let mut component_of = alloc::vec![UNSET; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0usize;

    // (node, next successor position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != UNSET {
            continue;
        }
        call.push((start, 0));
        index[start] = counter;
        lowlink[start] = counter;
        counter += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < succs[v].len() {
                let w = succs[v][*next];
                *next += 1;
                if index[w] == UNSET {
                    index[w] = counter;
                    lowlink[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        component_of[w] = components.len();
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }
    SccResult { components, component_of }
}

/// Every AS whose customer cone contains the target, target included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProviderFunnel {
    pub target: Asn,
    pub members: BTreeSet<Asn>,
}

impl ProviderFunnel {
    /// Funneling degree: the size of the funnel.
    pub fn degree(&self) -> u64 {
        self.members.len() as u64
    }
}

/// Inverts customer cones into provider funnels.
pub fn provider_funnels(cones: &ConeSet) -> BTreeMap<Asn, ProviderFunnel> {
    let mut funnels: BTreeMap<Asn, ProviderFunnel> = cones
        .cones
        .keys()
        .map(|&t| (t, ProviderFunnel { target: t, members: BTreeSet::new() }))
        .collect();
    for (owner, cone) in &cones.cones {
        for target in &cone.members {
            funnels
                .entry(*target)
                .or_insert_with(|| ProviderFunnel { target: *target, members: BTreeSet::new() })
                .members
                .insert(*owner);
        }
    }
    funnels
}

/// Funneling degree restricted to the AS set `s`.
pub fn restricted_fd(funnel: &ProviderFunnel, s: &BTreeSet<Asn>) -> u64 {
    funnel.members.intersection(s).count() as u64
}

/// Session-multiplied funneling degrees: for each (AS, LAN) pair, the total
/// number of sessions that injection ASes inside that AS's provider funnel
/// can establish on the LAN. Zero entries are not stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SmfdMatrix {
    f: BTreeMap<(Asn, LanId), u64>,
    pub injection_set: BTreeSet<Asn>,
    asns: Vec<Asn>,
    lan_ids: Vec<LanId>,
}

impl SmfdMatrix {
    pub fn value(&self, asn: Asn, lan: &LanId) -> u64 {
        self.f.get(&(asn, lan.clone())).copied().unwrap_or(0)
    }

    pub fn row_sum(&self, asn: Asn) -> u64 {
        self.f.iter().filter(|((a, _), _)| *a == asn).map(|(_, v)| *v).sum()
    }

    pub fn asns(&self) -> &[Asn] {
        &self.asns
    }

    pub fn lan_ids(&self) -> &[LanId] {
        &self.lan_ids
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (Asn, &LanId, u64)> {
        self.f.iter().map(|((a, l), v)| (*a, l, *v))
    }

    /// ASes with at least one non-zero entry, ascending.
    pub fn nonzero_asns(&self) -> Vec<Asn> {
        let mut out: Vec<Asn> = self.f.keys().map(|(a, _)| *a).collect();
        out.dedup();
        out
    }

    /// Builds a matrix from explicit entries, for synthetic inputs.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (Asn, LanId, u64)>,
        injection_set: BTreeSet<Asn>,
    ) -> SmfdMatrix {
        let mut f = BTreeMap::new();
        let mut asns = BTreeSet::new();
        let mut lan_ids = BTreeSet::new();
        for (a, l, v) in entries {
            asns.insert(a);
            lan_ids.insert(l.clone());
            if v > 0 {
                f.insert((a, l), v);
            }
        }
        SmfdMatrix {
            f,
            injection_set,
            asns: asns.into_iter().collect(),
            lan_ids: lan_ids.into_iter().collect(),
        }
    }
}

/// Computes the SMFD matrix for a candidate injection set.
///
/// Injection ASes absent from the session matrix contribute nothing and are
/// returned in the second element. ASes without a computed funnel (present
/// only in LAN data) are treated as funnels containing just themselves.
pub fn smfd_matrix(
    funnels: &BTreeMap<Asn, ProviderFunnel>,
    sessions: &SessionMatrix,
    injection_set: &BTreeSet<Asn>,
) -> (SmfdMatrix, Vec<Asn>) {
    let known: BTreeSet<Asn> = sessions.asns().iter().copied().collect();
    let unknown: Vec<Asn> = injection_set.difference(&known).copied().collect();

    let mut asns: BTreeSet<Asn> = funnels.keys().copied().collect();
    asns.extend(sessions.asns().iter().copied());

    let mut f = BTreeMap::new();
    for &a in &asns {
        let in_funnel = |i: &Asn| match funnels.get(&a) {
            Some(funnel) => funnel.members.contains(i),
            None => *i == a,
        };
        for lan in sessions.lan_ids() {
            let total: u64 = injection_set
                .iter()
                .filter(|i| in_funnel(i))
                .map(|&i| sessions.omega(i, lan))
                .sum();
            if total > 0 {
                f.insert((a, lan.clone()), total);
            }
        }
    }
    (
        SmfdMatrix {
            f,
            injection_set: injection_set.clone(),
            asns: asns.into_iter().collect(),
            lan_ids: sessions.lan_ids().to_vec(),
        },
        unknown,
    )
}

/// Ranks injection candidates by the product of customer-cone size and total
/// session count, descending; ties break toward the lower ASN. Returns the
/// top `k`.
pub fn rank_injection_candidates(
    cones: &ConeSet,
    sessions: &SessionMatrix,
    k: usize,
) -> Vec<Asn> {
    let mut ranked: Vec<(u128, Asn)> = sessions
        .asns()
        .iter()
        .map(|&a| (u128::from(cones.cone_size(a)) * u128::from(sessions.row_sum(a)), a))
        .collect();
    ranked.sort_by(|(pa, aa), (pb, ab)| pb.cmp(pa).then(aa.cmp(ab)));
    ranked.into_iter().take(k).map(|(_, a)| a).collect()
}
