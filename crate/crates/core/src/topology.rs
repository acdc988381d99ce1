//! AS-level topology and peering-LAN ingestion.
//!
//! Relationships arrive as pipe-delimited text (`asn1|asn2|rel` with `-1` for
//! provider-to-customer and `0` for peer-to-peer), LAN membership as CSV
//! triplets. Both loaders validate and de-duplicate; everything they produce
//! is immutable afterwards and safe to share between threads.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv6Addr;
use core::str::FromStr;

/// Autonomous system number.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Asn(pub u32);

impl Asn {
    /// AS_TRANS, reserved for 2-to-4-byte ASN migration; not usable as an
    /// attack origin.
    pub const RESERVED_TRANS: Asn = Asn(23456);
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Business relationship between two ASes. Sibling relationships are not
/// represented.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Relationship {
    ProviderToCustomer,
    PeerToPeer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyError {
    MalformedLine { line: usize, reason: String },
    ConflictingRelationship { a: Asn, b: Asn, line: usize },
    SelfLoop { asn: Asn, line: usize },
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::MalformedLine { line, reason } => {
                write!(f, "malformed line {line}: {reason}")
            }
            TopologyError::ConflictingRelationship { a, b, line } => {
                write!(f, "line {line}: conflicting relationship for pair ({a}, {b})")
            }
            TopologyError::SelfLoop { asn, line } => {
                write!(f, "line {line}: self-loop on AS{asn}")
            }
        }
    }
}

impl core::error::Error for TopologyError {}

/// AS graph with provider-to-customer and peer-to-peer edges.
///
/// Invariants: no self-loops, at most one relationship per unordered AS
/// pair, and every edge endpoint is a member of [`AsTopology::ases`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AsTopology {
    ases: BTreeSet<Asn>,
    /// Stored as (provider, customer).
    p2c: BTreeSet<(Asn, Asn)>,
    /// Stored with the numerically smaller AS first.
    p2p: BTreeSet<(Asn, Asn)>,
    customers: BTreeMap<Asn, Vec<Asn>>,
    providers: BTreeMap<Asn, Vec<Asn>>,
    peers: BTreeMap<Asn, Vec<Asn>>,
}

impl AsTopology {
    /// Builds a topology from explicit edges; `ProviderToCustomer` edges are
    /// read as (provider, customer). Duplicate consistent edges are folded,
    /// contradictions are errors. The reported `line` is the 1-based index
    /// into the edge list.
    pub fn from_edges(
        edges: impl IntoIterator<Item = (Asn, Asn, Relationship)>,
    ) -> Result<Self, TopologyError> {
        let mut b = Builder::default();
        for (i, (a, z, rel)) in edges.into_iter().enumerate() {
            b.insert(a, z, rel, i + 1)?;
        }
        Ok(b.finish())
    }

    /// Parses a relationship export: one `asn1|asn2|rel` entry per line,
    /// `rel` -1 (asn1 is provider of asn2) or 0 (peers), `#` comments and
    /// blank lines ignored.
    pub fn load_relationships(source: &str) -> Result<Self, TopologyError> {
        let mut b = Builder::default();
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('|');
            let (a, z, rel) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(z), Some(r), None) => (a, z, r),
                _ => {
                    return Err(TopologyError::MalformedLine {
                        line: line_no,
                        reason: "expected `asn1|asn2|rel`".to_string(),
                    })
                }
            };
            let a = parse_asn(a, line_no)?;
            let z = parse_asn(z, line_no)?;
            let rel = match rel.trim() {
                "-1" => Relationship::ProviderToCustomer,
                "0" => Relationship::PeerToPeer,
                other => {
                    return Err(TopologyError::MalformedLine {
                        line: line_no,
                        reason: format!("unknown relationship label `{other}`"),
                    })
                }
            };
            b.insert(a, z, rel, line_no)?;
        }
        Ok(b.finish())
    }

    /// Renders the topology back into the relationship line format, sorted.
    /// Reloading the output yields an identical edge set.
    pub fn to_relationship_lines(&self) -> String {
        let mut out = String::new();
        for (p, c) in &self.p2c {
            out.push_str(&format!("{p}|{c}|-1\n"));
        }
        for (a, b) in &self.p2p {
            out.push_str(&format!("{a}|{b}|0\n"));
        }
        out
    }

    pub fn ases(&self) -> &BTreeSet<Asn> {
        &self.ases
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.ases.contains(&asn)
    }

    pub fn p2c_edges(&self) -> &BTreeSet<(Asn, Asn)> {
        &self.p2c
    }

    pub fn p2p_edges(&self) -> &BTreeSet<(Asn, Asn)> {
        &self.p2p
    }

    /// Direct customers of `asn`, ascending.
    pub fn customers_of(&self, asn: Asn) -> &[Asn] {
        self.customers.get(&asn).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Direct providers of `asn`, ascending.
    pub fn providers_of(&self, asn: Asn) -> &[Asn] {
        self.providers.get(&asn).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Settlement-free peers of `asn`, ascending.
    pub fn peers_of(&self, asn: Asn) -> &[Asn] {
        self.peers.get(&asn).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn parse_asn(field: &str, line: usize) -> Result<Asn, TopologyError> {
    let value: u32 = field.trim().parse().map_err(|_| TopologyError::MalformedLine {
        line,
        reason: format!("invalid AS number `{}`", field.trim()),
    })?;
    if value == 0 {
        return Err(TopologyError::MalformedLine {
            line,
            reason: "AS number must be positive".to_string(),
        });
    }
    Ok(Asn(value))
}

#[derive(Default)]
struct Builder {
    p2c: BTreeSet<(Asn, Asn)>,
    p2p: BTreeSet<(Asn, Asn)>,
}

impl Builder {
    fn insert(
        &mut self,
        a: Asn,
        z: Asn,
        rel: Relationship,
        line: usize,
    ) -> Result<(), TopologyError> {
        if a == z {
            return Err(TopologyError::SelfLoop { asn: a, line });
        }
        let pair = (a.min(z), a.max(z));
        let peer_known = self.p2p.contains(&pair);
        let p2c_forward = self.p2c.contains(&(a, z));
        let p2c_reverse = self.p2c.contains(&(z, a));
        match rel {
            Relationship::ProviderToCustomer => {
                if peer_known || p2c_reverse {
                    return Err(TopologyError::ConflictingRelationship { a, b: z, line });
                }
                self.p2c.insert((a, z));
            }
            Relationship::PeerToPeer => {
                if p2c_forward || p2c_reverse {
                    return Err(TopologyError::ConflictingRelationship { a, b: z, line });
                }
                self.p2p.insert(pair);
            }
        }
        Ok(())
    }

    fn finish(self) -> AsTopology {
        let mut ases = BTreeSet::new();
        let mut customers: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
        let mut providers: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
        let mut peers: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
        for &(p, c) in &self.p2c {
            ases.insert(p);
            ases.insert(c);
            customers.entry(p).or_default().push(c);
            providers.entry(c).or_default().push(p);
        }
        for &(a, b) in &self.p2p {
            ases.insert(a);
            ases.insert(b);
            peers.entry(a).or_default().push(b);
            peers.entry(b).or_default().push(a);
        }
        for list in customers.values_mut().chain(providers.values_mut()).chain(peers.values_mut())
        {
            list.sort_unstable();
            list.dedup();
        }
        AsTopology { ases, p2c: self.p2c, p2p: self.p2p, customers, providers, peers }
    }
}

/// Identifier of an IXP peering LAN, opaque to this crate.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct LanId(pub String);

impl fmt::Display for LanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LanId {
    fn from(s: &str) -> Self {
        LanId(s.to_string())
    }
}

/// Membership of one peering LAN: the distinct (ASN, interface address)
/// pairs seen on it after exact de-duplication of input triplets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeeringLan {
    pub id: LanId,
    pub members: BTreeSet<(Asn, Ipv6Addr)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanError {
    MalformedLine { line: usize, reason: String },
    InvalidAddress { line: usize, address: String },
}

impl fmt::Display for LanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanError::MalformedLine { line, reason } => {
                write!(f, "malformed line {line}: {reason}")
            }
            LanError::InvalidAddress { line, address } => {
                write!(f, "line {line}: invalid IPv6 address `{address}`")
            }
        }
    }
}

impl core::error::Error for LanError {}

/// Parses `lan_id,asn,ipv6_address` CSV (header required). Exact duplicate
/// triplets count once; returns one [`PeeringLan`] per distinct LAN id,
/// sorted by id.
pub fn load_peering_lans(source: &str) -> Result<Vec<PeeringLan>, LanError> {
    let mut lans: BTreeMap<LanId, BTreeSet<(Asn, Ipv6Addr)>> = BTreeMap::new();
    let mut saw_header = false;
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != "lan_id,asn,ipv6_address" {
                return Err(LanError::MalformedLine {
                    line: line_no,
                    reason: "expected header `lan_id,asn,ipv6_address`".to_string(),
                });
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let (lan, asn, addr) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(l), Some(a), Some(ip), None) => (l.trim(), a.trim(), ip.trim()),
            _ => {
                return Err(LanError::MalformedLine {
                    line: line_no,
                    reason: "expected three comma-separated fields".to_string(),
                })
            }
        };
        if lan.is_empty() {
            return Err(LanError::MalformedLine {
                line: line_no,
                reason: "empty lan_id".to_string(),
            });
        }
        let asn: u32 = asn.parse().map_err(|_| LanError::MalformedLine {
            line: line_no,
            reason: format!("invalid AS number `{asn}`"),
        })?;
        if asn == 0 {
            return Err(LanError::MalformedLine {
                line: line_no,
                reason: "AS number must be positive".to_string(),
            });
        }
        let address = Ipv6Addr::from_str(addr).map_err(|_| LanError::InvalidAddress {
            line: line_no,
            address: addr.to_string(),
        })?;
        lans.entry(LanId(lan.to_string())).or_default().insert((Asn(asn), address));
    }
    Ok(lans.into_iter().map(|(id, members)| PeeringLan { id, members }).collect())
}

/// Session matrix ω: for each (AS, peering LAN) pair, the number of distinct
/// sessions that can be established, i.e. the count of distinct interface
/// addresses that AS has on that LAN. Absent entries are zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionMatrix {
    omega: BTreeMap<(Asn, LanId), u64>,
    asns: Vec<Asn>,
    lan_ids: Vec<LanId>,
}

impl SessionMatrix {
    /// Builds the matrix from LAN membership. LANs with duplicate ids are
    /// merged. Row and column orders are ascending.
    pub fn build(lans: &[PeeringLan]) -> SessionMatrix {
        let mut merged: BTreeMap<&LanId, BTreeSet<(Asn, Ipv6Addr)>> = BTreeMap::new();
        for lan in lans {
            merged.entry(&lan.id).or_default().extend(lan.members.iter().copied());
        }
        let mut omega: BTreeMap<(Asn, LanId), u64> = BTreeMap::new();
        let mut asns = BTreeSet::new();
        for (id, members) in &merged {
            for (asn, _) in members {
                asns.insert(*asn);
                *omega.entry((*asn, (*id).clone())).or_insert(0) += 1;
            }
        }
        SessionMatrix {
            omega,
            asns: asns.into_iter().collect(),
            lan_ids: merged.keys().map(|id| (*id).clone()).collect(),
        }
    }

    /// Builds a matrix directly from (AS, LAN, count) entries; zero counts
    /// are dropped. Intended for synthetic inputs.
    pub fn from_entries(entries: impl IntoIterator<Item = (Asn, LanId, u64)>) -> SessionMatrix {
        let mut omega = BTreeMap::new();
        let mut asns = BTreeSet::new();
        let mut lan_ids = BTreeSet::new();
        for (a, l, w) in entries {
            asns.insert(a);
            lan_ids.insert(l.clone());
            if w > 0 {
                omega.insert((a, l), w);
            }
        }
        SessionMatrix {
            omega,
            asns: asns.into_iter().collect(),
            lan_ids: lan_ids.into_iter().collect(),
        }
    }

    pub fn omega(&self, asn: Asn, lan: &LanId) -> u64 {
        self.omega.get(&(asn, lan.clone())).copied().unwrap_or(0)
    }

    pub fn row_sum(&self, asn: Asn) -> u64 {
        self.omega.iter().filter(|((a, _), _)| *a == asn).map(|(_, w)| *w).sum()
    }

    pub fn col_sum(&self, lan: &LanId) -> u64 {
        self.omega.iter().filter(|((_, l), _)| l == lan).map(|(_, w)| *w).sum()
    }

    /// Sum over all entries; equals the number of distinct ingested triplets
    /// when built from LAN membership.
    pub fn total(&self) -> u64 {
        self.omega.values().sum()
    }

    pub fn asns(&self) -> &[Asn] {
        &self.asns
    }

    pub fn lan_ids(&self) -> &[LanId] {
        &self.lan_ids
    }

    /// Non-zero entries in (ASN, LAN) order.
    pub fn nonzero(&self) -> impl Iterator<Item = (Asn, &LanId, u64)> {
        self.omega.iter().map(|((a, l), w)| (*a, l, *w))
    }
}

/// ASes present in LAN membership but absent from the relationship data.
/// They stay in the session matrix; this lists them for validation output.
pub fn orphan_asns(topology: &AsTopology, lans: &[PeeringLan]) -> Vec<Asn> {
    let mut orphans = BTreeSet::new();
    for lan in lans {
        for (asn, _) in &lan.members {
            if !topology.contains(*asn) {
                orphans.insert(*asn);
            }
        }
    }
    orphans.into_iter().collect()
}
