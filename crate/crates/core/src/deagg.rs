//! IPv6 prefix de-aggregation: sub-prefix enumeration, non-aggregatable
//! per-session schedules, timed announcement streams, and aggregation-hint
//! analysis.
//!
//! A parent prefix of length `P` split down to `max_len` yields
//! `2^(max_len - P + 1) - 1` distinct routes. A schedule distributes those
//! routes over BGP sessions so that no session carries an aggregatable
//! combination: no two prefixes that merge into one shorter prefix, and no
//! prefix together with a prefix covering it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv6Addr;
use core::str::FromStr;

use crate::rng::SplitMix;
use crate::topology::Asn;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeaggError {
    /// Prefix length or enumeration bounds out of order / out of range.
    InvalidRange { reason: String },
    /// Prefix text did not parse.
    InvalidPrefix { input: String },
    /// Address has bits set below the prefix length.
    HostBitsSet { input: String },
    /// Every session has a zero limit (or there are no sessions).
    NoCapacity,
    /// Origin pool is empty.
    EmptyOriginPool,
    /// AS_TRANS (or zero) cannot originate announcements.
    ReservedOrigin(Asn),
    /// Session ids within one schedule must be unique.
    DuplicateSession(String),
    /// Stream generation parameter outside its documented range.
    ParameterOutOfRange { name: &'static str, value: u64 },
}

impl fmt::Display for DeaggError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeaggError::InvalidRange { reason } => write!(f, "invalid range: {reason}"),
            DeaggError::InvalidPrefix { input } => write!(f, "invalid IPv6 prefix `{input}`"),
            DeaggError::HostBitsSet { input } => {
                write!(f, "prefix `{input}` has bits set beyond its length")
            }
            DeaggError::NoCapacity => write!(f, "no session capacity available"),
            DeaggError::EmptyOriginPool => write!(f, "origin pool must not be empty"),
            DeaggError::ReservedOrigin(asn) => {
                write!(f, "AS{asn} is reserved and cannot be used as an origin")
            }
            DeaggError::DuplicateSession(id) => write!(f, "duplicate session id `{id}`"),
            DeaggError::ParameterOutOfRange { name, value } => {
                write!(f, "parameter {name}={value} out of range")
            }
        }
    }
}

impl core::error::Error for DeaggError {}

/// An IPv6 prefix in canonical form: all bits below the prefix length are
/// zero. Ordered by (address, length).
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ipv6Prefix {
    addr: u128,
    len: u8,
}

impl Ipv6Prefix {
    pub fn new(addr: Ipv6Addr, len: u8) -> Result<Self, DeaggError> {
        Self::from_raw(addr.to_bits(), len)
    }

    pub fn from_raw(addr: u128, len: u8) -> Result<Self, DeaggError> {
        if len > 128 {
            return Err(DeaggError::InvalidRange {
                reason: format!("prefix length {len} exceeds 128"),
            });
        }
        if addr & !mask(len) != 0 {
            return Err(DeaggError::HostBitsSet {
                input: format!("{}/{}", Ipv6Addr::from_bits(addr), len),
            });
        }
        Ok(Ipv6Prefix { addr, len })
    }

    pub fn addr(&self) -> Ipv6Addr {
        Ipv6Addr::from_bits(self.addr)
    }

    pub fn addr_bits(&self) -> u128 {
        self.addr
    }

    /// Prefix length in bits.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    /// True when `other` lies inside this prefix (equality included).
    pub fn contains(&self, other: &Ipv6Prefix) -> bool {
        self.len <= other.len && other.addr & mask(self.len) == self.addr
    }

    /// The same-length prefix differing only in the last prefix bit, i.e.
    /// the one this prefix would merge with.
    pub fn sibling(&self) -> Option<Ipv6Prefix> {
        if self.len == 0 {
            return None;
        }
        Some(Ipv6Prefix { addr: self.addr ^ (1u128 << (128 - self.len)), len: self.len })
    }

    /// The prefix truncated to `len` bits; `len` must not exceed the own
    /// length.
    pub fn truncate(&self, len: u8) -> Option<Ipv6Prefix> {
        if len > self.len {
            return None;
        }
        Some(Ipv6Prefix { addr: self.addr & mask(len), len })
    }

    /// First address after this prefix's span, if it does not wrap.
    fn end(&self) -> Option<u128> {
        if self.len == 0 {
            return None;
        }
        self.addr.checked_add(1u128 << (128 - self.len))
    }
}

fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - len)
    }
}

impl fmt::Display for Ipv6Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr(), self.len)
    }
}

impl fmt::Debug for Ipv6Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Ipv6Prefix {
    type Err = DeaggError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| DeaggError::InvalidPrefix { input: s.to_string() })?;
        let addr = Ipv6Addr::from_str(addr.trim())
            .map_err(|_| DeaggError::InvalidPrefix { input: s.to_string() })?;
        let len: u8 = len
            .trim()
            .parse()
            .map_err(|_| DeaggError::InvalidPrefix { input: s.to_string() })?;
        Ipv6Prefix::new(addr, len)
    }
}

/// Whether and how two prefixes could be aggregated by a router on the path.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Same length, differing in the last prefix bit; merge into the value.
    Siblings(Ipv6Prefix),
    /// One strictly contains the other; the value is the covering prefix.
    Covering(Ipv6Prefix),
    None,
}

/// Classifies a prefix pair: mergeable siblings, strict covering, or neither.
pub fn can_aggregate(a: Ipv6Prefix, b: Ipv6Prefix) -> Aggregation {
    if a.len() == b.len() && a.len() > 0 && a.sibling() == Some(b) {
        let merged = Ipv6Prefix { addr: a.addr & mask(a.len - 1), len: a.len - 1 };
        return Aggregation::Siblings(merged);
    }
    if a.len() < b.len() && a.contains(&b) {
        return Aggregation::Covering(a);
    }
    if b.len() < a.len() && b.contains(&a) {
        return Aggregation::Covering(b);
    }
    Aggregation::None
}

/// Number of distinct routes a parent prefix can source when split into all
/// sub-prefixes of length `parent.len()..=max_len`: `2^(C+1) - 1` with
/// `C = max_len - parent.len()`.
pub fn count_subroutes(parent: Ipv6Prefix, max_len: u8) -> Result<u128, DeaggError> {
    let c = check_range(parent, max_len)?;
    Ok((1u128 << (c + 1)) - 1)
}

fn check_range(parent: Ipv6Prefix, max_len: u8) -> Result<u32, DeaggError> {
    if max_len < parent.len() || max_len > 128 {
        return Err(DeaggError::InvalidRange {
            reason: format!("max_len {max_len} outside {}..=128", parent.len()),
        });
    }
    let c = u32::from(max_len - parent.len());
    if c >= 128 {
        return Err(DeaggError::InvalidRange {
            reason: "route count exceeds the supported range".to_string(),
        });
    }
    Ok(c)
}

/// Lazily enumerates every sub-prefix of `parent` with length up to
/// `max_len`, each exactly once, in (length ascending, address ascending)
/// order. The stream length equals [`count_subroutes`].
pub fn enumerate_subprefixes(
    parent: Ipv6Prefix,
    max_len: u8,
) -> Result<SubprefixIter, DeaggError> {
    check_range(parent, max_len)?;
    Ok(SubprefixIter { parent, max_len, len: parent.len(), idx: 0, done: false })
}

#[derive(Clone, Debug)]
pub struct SubprefixIter {
    parent: Ipv6Prefix,
    max_len: u8,
    len: u8,
    idx: u128,
    done: bool,
}

impl Iterator for SubprefixIter {
    type Item = Ipv6Prefix;

    fn next(&mut self) -> Option<Ipv6Prefix> {
        if self.done {
            return None;
        }
        let level = u32::from(self.len - self.parent.len());
        let out = Ipv6Prefix { addr: self.parent.addr | (self.idx << (128 - self.len)), len: self.len };
        self.idx += 1;
        if self.idx == 1u128 << level {
            if self.len == self.max_len {
                self.done = true;
            } else {
                self.len += 1;
                self.idx = 0;
            }
        }
        Some(out)
    }
}

/// One BGP session an attacker controls, with its accepted-prefix budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionSpec {
    pub id: String,
    pub limit: usize,
}

/// Announce/withdraw pacing for one group cycle: announce, wait for
/// convergence, withdraw, wait out damping penalties, repeat.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ScheduleTiming {
    pub converge_wait_secs: u64,
    pub post_withdraw_wait_secs: u64,
}

impl Default for ScheduleTiming {
    fn default() -> Self {
        ScheduleTiming { converge_wait_secs: 1800, post_withdraw_wait_secs: 5400 }
    }
}

impl ScheduleTiming {
    pub fn cycle_secs(&self) -> u64 {
        self.converge_wait_secs + self.post_withdraw_wait_secs
    }
}

/// Prefixes and origins assigned to one session, in announcement order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionAssignment {
    pub limit: usize,
    pub prefixes: Vec<Ipv6Prefix>,
    pub origins: Vec<Asn>,
}

/// Per-session prefix assignments plus the grouping and timing that turn
/// them into a timed stream.
///
/// Invariants (checked by [`verify_schedule`]): within one group no prefix
/// appears on two sessions; within one session no mergeable sibling pair, no
/// covering pair, and no more prefixes than the session limit. Across
/// groups, prefix reuse is allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnouncementSchedule {
    pub parent: Ipv6Prefix,
    pub assignments: BTreeMap<String, SessionAssignment>,
    pub origin_pool: Vec<Asn>,
    pub groups: Vec<Vec<String>>,
    pub timing: ScheduleTiming,
}

impl AnnouncementSchedule {
    /// Total number of assigned prefixes across all sessions.
    pub fn total_prefixes(&self) -> usize {
        self.assignments.values().map(|a| a.prefixes.len()).sum()
    }
}

/// Builds a schedule by assigning sub-prefixes of `parent` to sessions.
///
/// Candidates are offered deepest-first (length descending, address
/// ascending) to sessions in round-robin order; a session that is full or
/// would end up with an aggregatable pair is skipped. Deepest-first packing
/// keeps short prefixes from blocking an entire session's address space, so
/// capacity fills close to the theoretical maximum. Origins rotate through
/// `origin_pool` per placed prefix. The result always passes
/// [`verify_schedule`].
pub fn build_schedule(
    parent: Ipv6Prefix,
    sessions: &[SessionSpec],
    origin_pool: &[Asn],
    max_len: u8,
) -> Result<AnnouncementSchedule, DeaggError> {
    check_range(parent, max_len)?;
    if origin_pool.is_empty() {
        return Err(DeaggError::EmptyOriginPool);
    }
    if let Some(asn) = origin_pool.iter().find(|a| **a == Asn::RESERVED_TRANS || a.0 == 0) {
        return Err(DeaggError::ReservedOrigin(*asn));
    }
    if sessions.iter().all(|s| s.limit == 0) {
        return Err(DeaggError::NoCapacity);
    }
    let mut seen = BTreeSet::new();
    for s in sessions {
        if !seen.insert(&s.id) {
            return Err(DeaggError::DuplicateSession(s.id.clone()));
        }
    }

    struct Slot {
        limit: usize,
        chosen: BTreeSet<Ipv6Prefix>,
        prefixes: Vec<Ipv6Prefix>,
        origins: Vec<Asn>,
    }
    let mut slots: Vec<Slot> = sessions
        .iter()
        .map(|s| Slot {
            limit: s.limit,
            chosen: BTreeSet::new(),
            prefixes: Vec::new(),
            origins: Vec::new(),
        })
        .collect();

    let mut open = slots.iter().filter(|s| s.limit > 0).count();
    let mut cursor = 0usize;
    let mut placed = 0usize;

    'outer: for len in (parent.len()..=max_len).rev() {
        let level_count = 1u128 << u32::from(len - parent.len());
        let mut idx = 0u128;
        while idx < level_count {
            if open == 0 {
                break 'outer;
            }
            let candidate = Ipv6Prefix { addr: parent.addr | (idx << (128 - len)), len };
            idx += 1;
            for attempt in 0..slots.len() {
                let si = (cursor + attempt) % slots.len();
                let slot = &mut slots[si];
                if slot.prefixes.len() >= slot.limit {
                    continue;
                }
                if conflicts(&slot.chosen, candidate) {
                    continue;
                }
                slot.chosen.insert(candidate);
                slot.prefixes.push(candidate);
                slot.origins.push(origin_pool[placed % origin_pool.len()]);
                placed += 1;
                if slot.prefixes.len() == slot.limit {
                    open -= 1;
                }
                cursor = (si + 1) % slots.len();
                break;
            }
        }
    }

    let assignments = sessions
        .iter()
        .zip(slots)
        .map(|(spec, slot)| {
            (
                spec.id.clone(),
                SessionAssignment {
                    limit: spec.limit,
                    prefixes: slot.prefixes,
                    origins: slot.origins,
                },
            )
        })
        .collect();
    Ok(AnnouncementSchedule {
        parent,
        assignments,
        origin_pool: origin_pool.to_vec(),
        groups: vec![sessions.iter().map(|s| s.id.clone()).collect()],
        timing: ScheduleTiming::default(),
    })
}

/// True when adding `candidate` to `chosen` would create a duplicate, a
/// mergeable sibling pair, or a covering pair.
fn conflicts(chosen: &BTreeSet<Ipv6Prefix>, candidate: Ipv6Prefix) -> bool {
    if chosen.contains(&candidate) {
        return true;
    }
    if let Some(sib) = candidate.sibling() {
        if chosen.contains(&sib) {
            return true;
        }
    }
    // A chosen prefix covering the candidate.
    for len in 0..candidate.len() {
        if let Some(anc) = candidate.truncate(len) {
            if chosen.contains(&anc) {
                return true;
            }
        }
    }
    // A chosen prefix covered by the candidate: any member whose address
    // falls inside the candidate's span is a descendant.
    match candidate.end() {
        Some(end) => chosen
            .range(Ipv6Prefix { addr: candidate.addr, len: 0 }..Ipv6Prefix { addr: end, len: 0 })
            .next()
            .is_some(),
        None => !chosen.is_empty(),
    }
}

/// One violation found in a schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleViolation {
    CrossSession { group: usize, prefix: Ipv6Prefix, sessions: (String, String) },
    SiblingPair { session: String, a: Ipv6Prefix, b: Ipv6Prefix },
    CoveringPair { session: String, covering: Ipv6Prefix, covered: Ipv6Prefix },
    DuplicateInSession { session: String, prefix: Ipv6Prefix },
    OverLimit { session: String, count: usize, limit: usize },
    OriginCountMismatch { session: String },
    UnknownSessionInGroup { group: usize, session: String },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleViolation::CrossSession { group, prefix, sessions } => write!(
                f,
                "group {group}: prefix {prefix} on sessions `{}` and `{}`",
                sessions.0, sessions.1
            ),
            ScheduleViolation::SiblingPair { session, a, b } => {
                write!(f, "session `{session}`: mergeable siblings {a} and {b}")
            }
            ScheduleViolation::CoveringPair { session, covering, covered } => {
                write!(f, "session `{session}`: {covering} covers {covered}")
            }
            ScheduleViolation::DuplicateInSession { session, prefix } => {
                write!(f, "session `{session}`: duplicate prefix {prefix}")
            }
            ScheduleViolation::OverLimit { session, count, limit } => {
                write!(f, "session `{session}`: {count} prefixes exceed limit {limit}")
            }
            ScheduleViolation::OriginCountMismatch { session } => {
                write!(f, "session `{session}`: origin list length differs from prefix list")
            }
            ScheduleViolation::UnknownSessionInGroup { group, session } => {
                write!(f, "group {group}: unknown session `{session}`")
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ScheduleReport {
    pub ok: bool,
    pub violations: Vec<ScheduleViolation>,
}

/// Checks every schedule invariant and enumerates all violations.
pub fn verify_schedule(schedule: &AnnouncementSchedule) -> ScheduleReport {
    let mut violations = Vec::new();

    for (id, a) in &schedule.assignments {
        if a.origins.len() != a.prefixes.len() {
            violations.push(ScheduleViolation::OriginCountMismatch { session: id.clone() });
        }
        if a.prefixes.len() > a.limit {
            violations.push(ScheduleViolation::OverLimit {
                session: id.clone(),
                count: a.prefixes.len(),
                limit: a.limit,
            });
        }
        let mut set = BTreeSet::new();
        for p in &a.prefixes {
            if !set.insert(*p) {
                violations.push(ScheduleViolation::DuplicateInSession {
                    session: id.clone(),
                    prefix: *p,
                });
            }
        }
        for p in &set {
            if let Some(sib) = p.sibling() {
                if *p < sib && set.contains(&sib) {
                    violations.push(ScheduleViolation::SiblingPair {
                        session: id.clone(),
                        a: *p,
                        b: sib,
                    });
                }
            }
            for len in 0..p.len() {
                if let Some(anc) = p.truncate(len) {
                    if set.contains(&anc) {
                        violations.push(ScheduleViolation::CoveringPair {
                            session: id.clone(),
                            covering: anc,
                            covered: *p,
                        });
                    }
                }
            }
        }
    }

    for (gi, group) in schedule.groups.iter().enumerate() {
        let mut owner: BTreeMap<Ipv6Prefix, &String> = BTreeMap::new();
        for sid in group {
            let Some(a) = schedule.assignments.get(sid) else {
                violations.push(ScheduleViolation::UnknownSessionInGroup {
                    group: gi,
                    session: sid.clone(),
                });
                continue;
            };
            for p in &a.prefixes {
                match owner.get(p) {
                    Some(first) if *first != sid => {
                        violations.push(ScheduleViolation::CrossSession {
                            group: gi,
                            prefix: *p,
                            sessions: ((*first).clone(), sid.clone()),
                        });
                    }
                    Some(_) => {}
                    None => {
                        owner.insert(*p, sid);
                    }
                }
            }
        }
    }

    ScheduleReport { ok: violations.is_empty(), violations }
}

/// Attribute profile of generated announcements.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum StreamMode {
    /// Shortest possible AS path (the origin alone), no communities.
    BestCase,
    /// Maximum-length AS path and maximum large-community count.
    WorstCase,
}

/// Parameters for stream generation. Path length and community count are
/// capped at 255 entries; the defaults match the largest values a stateless
/// speaker will emit in practice.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct StreamParams {
    pub path_len: u16,
    pub n_comms: u16,
    pub cycles: u32,
    pub seed: u64,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams { path_len: 251, n_comms: 251, cycles: 1, seed: 0 }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RouteAction {
    Announce,
    Withdraw,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SegmentKind {
    Sequence,
    Set,
}

/// One AS-path segment; `Set` segments mark aggregated non-matching tails.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct AsPathSegment {
    pub kind: SegmentKind,
    pub asns: Vec<Asn>,
}

impl AsPathSegment {
    pub fn sequence(asns: Vec<Asn>) -> Self {
        AsPathSegment { kind: SegmentKind::Sequence, asns }
    }
}

/// One timed announce or withdraw on one session. Withdraws carry no path
/// and no communities; the origin of an announcement equals the last ASN of
/// its path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteEvent {
    pub timestamp_secs: u64,
    pub session_id: String,
    pub action: RouteAction,
    pub prefix: Ipv6Prefix,
    pub path: Vec<AsPathSegment>,
    pub large_communities: Vec<(u32, u32, u32)>,
    pub origin: Asn,
    pub atomic_aggregate: bool,
    pub aggregator: Option<(Asn, u32)>,
}

impl RouteEvent {
    /// Total number of ASNs across all path segments.
    pub fn path_asn_count(&self) -> usize {
        self.path.iter().map(|s| s.asns.len()).sum()
    }
}

/// Turns a schedule into a timed event stream.
///
/// Per group: all announces at the group start, all withdraws after the
/// convergence wait, and the next group starts one full cycle later. With
/// `cycles > 1` the whole group rotation repeats. Deterministic for a given
/// seed; events arrive in timestamp order.
pub fn generate_stream(
    schedule: &AnnouncementSchedule,
    mode: StreamMode,
    params: StreamParams,
) -> Result<StreamIter, DeaggError> {
    if params.path_len == 0 || params.path_len > 255 {
        return Err(DeaggError::ParameterOutOfRange {
            name: "path_len",
            value: u64::from(params.path_len),
        });
    }
    if params.n_comms > 255 {
        return Err(DeaggError::ParameterOutOfRange {
            name: "n_comms",
            value: u64::from(params.n_comms),
        });
    }
    Ok(StreamIter {
        schedule: schedule.clone(),
        mode,
        params,
        cycle: 0,
        group: 0,
        phase: RouteAction::Announce,
        session_in_group: 0,
        prefix_in_session: 0,
        rng: SplitMix::new(params.seed),
        done: schedule.groups.is_empty() || params.cycles == 0,
    })
}

#[derive(Clone, Debug)]
pub struct StreamIter {
    schedule: AnnouncementSchedule,
    mode: StreamMode,
    params: StreamParams,
    cycle: u32,
    group: usize,
    phase: RouteAction,
    session_in_group: usize,
    prefix_in_session: usize,
    rng: SplitMix,
    done: bool,
}

impl StreamIter {
    fn current(&mut self) -> Option<RouteEvent> {
        let group = &self.schedule.groups[self.group];
        loop {
            let sid = group.get(self.session_in_group)?;
            match self.schedule.assignments.get(sid) {
                Some(a) if self.prefix_in_session < a.prefixes.len() => {
                    let prefix = a.prefixes[self.prefix_in_session];
                    let origin = a.origins[self.prefix_in_session];
                    let sid = sid.clone();
                    let slot = (u64::from(self.cycle) * self.schedule.groups.len() as u64
                        + self.group as u64)
                        * self.schedule.timing.cycle_secs();
                    let converge = self.schedule.timing.converge_wait_secs;
                    let (ts, path, comms) = match self.phase {
                        RouteAction::Announce => {
                            let (p, c) = self.attributes(origin);
                            (slot, p, c)
                        }
                        RouteAction::Withdraw => (slot + converge, Vec::new(), Vec::new()),
                    };
                    self.prefix_in_session += 1;
                    return Some(RouteEvent {
                        timestamp_secs: ts,
                        session_id: sid,
                        action: self.phase,
                        prefix,
                        path,
                        large_communities: comms,
                        origin,
                        atomic_aggregate: false,
                        aggregator: None,
                    });
                }
                _ => {
                    self.session_in_group += 1;
                    self.prefix_in_session = 0;
                    if self.session_in_group >= group.len() {
                        return None;
                    }
                }
            }
        }
    }

    fn attributes(&mut self, origin: Asn) -> (Vec<AsPathSegment>, Vec<(u32, u32, u32)>) {
        match self.mode {
            StreamMode::BestCase => (vec![AsPathSegment::sequence(vec![origin])], Vec::new()),
            StreamMode::WorstCase => {
                let mut asns = Vec::with_capacity(usize::from(self.params.path_len));
                for _ in 0..self.params.path_len - 1 {
                    asns.push(Asn(self.rng.next_u32().max(1)));
                }
                asns.push(origin);
                let comms = (0..u32::from(self.params.n_comms))
                    .map(|k| (origin.0, k, self.rng.next_u32()))
                    .collect();
                (vec![AsPathSegment::sequence(asns)], comms)
            }
        }
    }

    fn advance_phase(&mut self) {
        self.session_in_group = 0;
        self.prefix_in_session = 0;
        match self.phase {
            RouteAction::Announce => self.phase = RouteAction::Withdraw,
            RouteAction::Withdraw => {
                self.phase = RouteAction::Announce;
                self.group += 1;
                if self.group >= self.schedule.groups.len() {
                    self.group = 0;
                    self.cycle += 1;
                    if self.cycle >= self.params.cycles {
                        self.done = true;
                    }
                }
            }
        }
    }
}

impl Iterator for StreamIter {
    type Item = RouteEvent;

    fn next(&mut self) -> Option<RouteEvent> {
        while !self.done {
            if let Some(ev) = self.current() {
                return Some(ev);
            }
            self.advance_phase();
        }
        None
    }
}

/// Hint counters for one scope.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct HintCounts {
    pub total: u64,
    pub as_set: u64,
    pub atomic: u64,
    pub aggregator: u64,
    pub any_hint: u64,
}

/// Aggregation-hint table over three scopes: route occurrences
/// ((prefix, path) pairs), distinct paths, and distinct prefixes. In the
/// path and prefix scopes an entity counts toward a hint column when at
/// least one of its routes carried that hint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HintTable {
    pub routes: HintCounts,
    pub paths: HintCounts,
    pub prefixes: HintCounts,
}

const HINT_AS_SET: u8 = 1;
const HINT_ATOMIC: u8 = 2;
const HINT_AGGREGATOR: u8 = 4;

/// Scans announce events for the three aggregation hints: AS_SET segments,
/// the ATOMIC_AGGREGATE flag, and the AGGREGATOR attribute. Withdraws are
/// ignored.
pub fn analyze_aggregation_hints(events: impl IntoIterator<Item = RouteEvent>) -> HintTable {
    let mut routes = HintCounts::default();
    let mut paths: BTreeMap<Vec<AsPathSegment>, u8> = BTreeMap::new();
    let mut prefixes: BTreeMap<Ipv6Prefix, u8> = BTreeMap::new();

    for ev in events {
        if ev.action != RouteAction::Announce {
            continue;
        }
        let mut flags = 0u8;
        if ev.path.iter().any(|s| s.kind == SegmentKind::Set) {
            flags |= HINT_AS_SET;
        }
        if ev.atomic_aggregate {
            flags |= HINT_ATOMIC;
        }
        if ev.aggregator.is_some() {
            flags |= HINT_AGGREGATOR;
        }
        routes.total += 1;
        routes.as_set += u64::from(flags & HINT_AS_SET != 0);
        routes.atomic += u64::from(flags & HINT_ATOMIC != 0);
        routes.aggregator += u64::from(flags & HINT_AGGREGATOR != 0);
        routes.any_hint += u64::from(flags != 0);
        *paths.entry(ev.path).or_insert(0) |= flags;
        *prefixes.entry(ev.prefix).or_insert(0) |= flags;
    }

    fn fold<K>(m: &BTreeMap<K, u8>) -> HintCounts {
        let mut c = HintCounts { total: m.len() as u64, ..HintCounts::default() };
        for flags in m.values() {
            c.as_set += u64::from(flags & HINT_AS_SET != 0);
            c.atomic += u64::from(flags & HINT_ATOMIC != 0);
            c.aggregator += u64::from(flags & HINT_AGGREGATOR != 0);
            c.any_hint += u64::from(*flags != 0);
        }
        c
    }

    HintTable { routes, paths: fold(&paths), prefixes: fold(&prefixes) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pfx(s: &str) -> Ipv6Prefix {
        s.parse().unwrap()
    }

    #[test]
    fn count_matches_headline_values() {
        assert_eq!(count_subroutes(pfx("2a10:cc40::/29"), 48).unwrap(), 1_048_575);
        assert_eq!(count_subroutes(pfx("2001:db8::/46"), 48).unwrap(), 7);
        assert_eq!(count_subroutes(pfx("2001:db8::/48"), 48).unwrap(), 1);
    }

    #[test]
    fn count_rejects_bad_ranges() {
        assert!(count_subroutes(pfx("2001:db8::/48"), 40).is_err());
        assert!(count_subroutes(pfx("::/0"), 128).is_err());
    }

    #[test]
    fn enumerate_46_in_order() {
        let got: Vec<Ipv6Prefix> =
            enumerate_subprefixes(pfx("2001:db8::/46"), 48).unwrap().collect();
        let want = [
            "2001:db8::/46",
            "2001:db8::/47",
            "2001:db8:2::/47",
            "2001:db8::/48",
            "2001:db8:1::/48",
            "2001:db8:2::/48",
            "2001:db8:3::/48",
        ];
        assert_eq!(got, want.iter().map(|s| pfx(s)).collect::<Vec<_>>());
    }

    #[test]
    fn enumerate_degenerate_range_is_parent() {
        let got: Vec<Ipv6Prefix> =
            enumerate_subprefixes(pfx("2001:db8::/48"), 48).unwrap().collect();
        assert_eq!(got, [pfx("2001:db8::/48")]);
    }

    #[test]
    fn enumerate_matches_index_arithmetic_oracle() {
        // Independent oracle: build the set from all (len, index) pairs.
        let parent = pfx("2001:db8:a500::/40");
        let max_len = 46u8;
        let mut oracle = BTreeSet::new();
        for len in 40..=max_len {
            for idx in 0u128..(1 << (len - 40)) {
                oracle.insert(
                    Ipv6Prefix::from_raw(parent.addr_bits() | (idx << (128 - len)), len).unwrap(),
                );
            }
        }
        let got: BTreeSet<Ipv6Prefix> = enumerate_subprefixes(parent, max_len).unwrap().collect();
        assert_eq!(got, oracle);
        assert_eq!(got.len() as u128, count_subroutes(parent, max_len).unwrap());
    }

    #[test]
    fn aggregation_verdicts() {
        // Consecutive same-length prefixes that merge.
        assert_eq!(
            can_aggregate(pfx("2001:db8:c::/48"), pfx("2001:db8:d::/48")),
            Aggregation::Siblings(pfx("2001:db8:c::/47"))
        );
        // Covering pair.
        assert_eq!(
            can_aggregate(pfx("2001:db8:c::/47"), pfx("2001:db8:c::/48")),
            Aggregation::Covering(pfx("2001:db8:c::/47"))
        );
        // Disjoint.
        assert_eq!(can_aggregate(pfx("2001:db8::/48"), pfx("2001:db9::/48")), Aggregation::None);
        // Consecutive but straddling a merge boundary.
        assert_eq!(
            can_aggregate(pfx("2001:db8:1::/48"), pfx("2001:db8:2::/48")),
            Aggregation::None
        );
        // Equal prefixes are neither siblings nor strictly covering.
        assert_eq!(can_aggregate(pfx("2001:db8::/48"), pfx("2001:db8::/48")), Aggregation::None);
    }

    #[test]
    fn prefix_text_round_trip_and_validation() {
        assert_eq!(pfx("2001:DB8::/32").to_string(), "2001:db8::/32");
        assert!(matches!(
            "2001:db8::1/32".parse::<Ipv6Prefix>(),
            Err(DeaggError::HostBitsSet { .. })
        ));
        assert!(matches!(
            "2001:db8::/200".parse::<Ipv6Prefix>(),
            Err(DeaggError::InvalidRange { .. })
        ));
        assert!(matches!("nonsense".parse::<Ipv6Prefix>(), Err(DeaggError::InvalidPrefix { .. })));
    }

    fn session(id: &str, limit: usize) -> SessionSpec {
        SessionSpec { id: id.into(), limit }
    }

    /// Exhaustive oracle: the largest subset of a small universe with no
    /// mergeable sibling pair and no covering pair.
    fn max_conflict_free_subset(universe: &[Ipv6Prefix]) -> usize {
        let n = universe.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let subset: Vec<Ipv6Prefix> =
                (0..n).filter(|i| mask & (1 << i) != 0).map(|i| universe[i]).collect();
            let ok = subset.iter().enumerate().all(|(i, a)| {
                subset[i + 1..].iter().all(|b| can_aggregate(*a, *b) == Aggregation::None)
            });
            if ok {
                best = best.max(subset.len());
            }
        }
        best
    }

    #[test]
    fn single_session_packs_to_the_combinatorial_maximum() {
        let parent = pfx("2001:db8::/46");
        let schedule = build_schedule(parent, &[session("s1", 7)], &[Asn(65001)], 48).unwrap();
        let universe: Vec<Ipv6Prefix> = enumerate_subprefixes(parent, 48).unwrap().collect();
        let oracle = max_conflict_free_subset(&universe);
        assert_eq!(oracle, 2);
        let got = &schedule.assignments["s1"];
        assert_eq!(got.prefixes.len(), oracle);
        assert_eq!(got.prefixes, [pfx("2001:db8::/48"), pfx("2001:db8:2::/48")]);
        assert!(verify_schedule(&schedule).ok);
    }

    #[test]
    fn two_sessions_get_disjoint_prefixes() {
        let schedule = build_schedule(
            pfx("2001:db8::/47"),
            &[session("a", 1), session("b", 1)],
            &[Asn(65001)],
            48,
        )
        .unwrap();
        let a = &schedule.assignments["a"].prefixes;
        let b = &schedule.assignments["b"].prefixes;
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
        assert_ne!(a[0], b[0]);
        assert!(verify_schedule(&schedule).ok);
    }

    #[test]
    fn build_schedule_input_validation() {
        let parent = pfx("2001:db8::/46");
        assert_eq!(
            build_schedule(parent, &[session("s", 0)], &[Asn(1)], 48),
            Err(DeaggError::NoCapacity)
        );
        assert_eq!(
            build_schedule(parent, &[session("s", 1)], &[], 48),
            Err(DeaggError::EmptyOriginPool)
        );
        assert_eq!(
            build_schedule(parent, &[session("s", 1)], &[Asn::RESERVED_TRANS], 48),
            Err(DeaggError::ReservedOrigin(Asn(23456)))
        );
        assert_eq!(
            build_schedule(parent, &[session("s", 1), session("s", 2)], &[Asn(1)], 48),
            Err(DeaggError::DuplicateSession("s".into()))
        );
    }

    #[test]
    fn origins_rotate_through_pool() {
        let schedule = build_schedule(
            pfx("2001:db8::/44"),
            &[session("s1", 4), session("s2", 4)],
            &[Asn(65001), Asn(65002)],
            48,
        )
        .unwrap();
        let all_origins: Vec<Asn> =
            schedule.assignments.values().flat_map(|a| a.origins.iter().copied()).collect();
        assert!(all_origins.contains(&Asn(65001)));
        assert!(all_origins.contains(&Asn(65002)));
        assert!(verify_schedule(&schedule).ok);
    }

    #[test]
    fn verify_flags_planted_violations() {
        let mut schedule = build_schedule(
            pfx("2001:db8::/46"),
            &[session("s1", 8), session("s2", 8)],
            &[Asn(65001)],
            48,
        )
        .unwrap();
        // Sibling pair in one session.
        let a = schedule.assignments.get_mut("s1").unwrap();
        a.prefixes = vec![pfx("2001:db8:c::/48"), pfx("2001:db8:d::/48")];
        a.origins = vec![Asn(65001), Asn(65001)];
        // Same prefix on both sessions of one group.
        let b = schedule.assignments.get_mut("s2").unwrap();
        b.prefixes = vec![pfx("2001:db8:c::/48")];
        b.origins = vec![Asn(65001)];
        let report = verify_schedule(&schedule);
        assert!(!report.ok);
        assert!(report.violations.iter().any(|v| matches!(v, ScheduleViolation::SiblingPair { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::CrossSession { .. })));
    }

    #[test]
    fn verify_flags_covering_and_limit() {
        let mut schedule =
            build_schedule(pfx("2001:db8::/46"), &[session("s1", 1)], &[Asn(65001)], 48).unwrap();
        let a = schedule.assignments.get_mut("s1").unwrap();
        a.prefixes = vec![pfx("2001:db8::/47"), pfx("2001:db8::/48")];
        a.origins = vec![Asn(65001), Asn(65001)];
        let report = verify_schedule(&schedule);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::CoveringPair { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::OverLimit { count: 2, limit: 1, .. })));
    }

    #[test]
    fn built_schedules_have_no_aggregatable_pairs() {
        let schedule = build_schedule(
            pfx("2001:db8::/40"),
            &[session("s1", 40), session("s2", 40), session("s3", 40)],
            &[Asn(65001), Asn(65002)],
            48,
        )
        .unwrap();
        assert!(verify_schedule(&schedule).ok);
        for a in schedule.assignments.values() {
            for (i, p) in a.prefixes.iter().enumerate() {
                for q in &a.prefixes[i + 1..] {
                    assert_eq!(can_aggregate(*p, *q), Aggregation::None);
                }
            }
        }
    }

    #[test]
    fn best_case_stream_events_and_timing() {
        let schedule =
            build_schedule(pfx("2001:db8::/48"), &[session("s1", 1)], &[Asn(65001)], 48).unwrap();
        let events: Vec<RouteEvent> =
            generate_stream(&schedule, StreamMode::BestCase, StreamParams::default())
                .unwrap()
                .collect();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].action, RouteAction::Announce);
        assert_eq!(events[0].timestamp_secs, 0);
        assert_eq!(events[0].path_asn_count(), 1);
        assert_eq!(events[0].origin, Asn(65001));
        assert!(events[0].large_communities.is_empty());
        assert_eq!(events[1].action, RouteAction::Withdraw);
        assert_eq!(events[1].timestamp_secs, 1800);
        assert!(events[1].path.is_empty());
    }

    #[test]
    fn worst_case_defaults_fill_attributes() {
        let schedule =
            build_schedule(pfx("2001:db8::/47"), &[session("s1", 2)], &[Asn(65001)], 48).unwrap();
        let events: Vec<RouteEvent> =
            generate_stream(&schedule, StreamMode::WorstCase, StreamParams::default())
                .unwrap()
                .collect();
        for ev in events.iter().filter(|e| e.action == RouteAction::Announce) {
            assert_eq!(ev.path_asn_count(), 251);
            assert_eq!(ev.large_communities.len(), 251);
            assert_eq!(ev.path.last().unwrap().asns.last(), Some(&ev.origin));
            let distinct: BTreeSet<_> = ev.large_communities.iter().collect();
            assert_eq!(distinct.len(), 251);
        }
    }

    #[test]
    fn group_and_cycle_timing() {
        let mut schedule = build_schedule(
            pfx("2001:db8::/47"),
            &[session("a", 1), session("b", 1)],
            &[Asn(65001)],
            48,
        )
        .unwrap();
        schedule.groups = vec![vec!["a".into()], vec!["b".into()]];
        let params = StreamParams { cycles: 2, ..StreamParams::default() };
        let events: Vec<RouteEvent> =
            generate_stream(&schedule, StreamMode::BestCase, params).unwrap().collect();
        let announce_times: Vec<u64> = events
            .iter()
            .filter(|e| e.action == RouteAction::Announce)
            .map(|e| e.timestamp_secs)
            .collect();
        // Second group starts one 30+90 minute cycle in; cycle two repeats.
        assert_eq!(announce_times, [0, 7200, 14400, 21600]);
    }

    #[test]
    fn stream_is_deterministic_for_a_seed() {
        let schedule = build_schedule(
            pfx("2001:db8::/44"),
            &[session("s1", 5), session("s2", 5)],
            &[Asn(65001)],
            48,
        )
        .unwrap();
        let p = StreamParams { seed: 7, ..StreamParams::default() };
        let a: Vec<RouteEvent> = generate_stream(&schedule, StreamMode::WorstCase, p)
            .unwrap()
            .collect();
        let b: Vec<RouteEvent> = generate_stream(&schedule, StreamMode::WorstCase, p)
            .unwrap()
            .collect();
        assert_eq!(a, b);
        let other = StreamParams { seed: 8, ..StreamParams::default() };
        let c: Vec<RouteEvent> = generate_stream(&schedule, StreamMode::WorstCase, other)
            .unwrap()
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn stream_parameter_validation() {
        let schedule =
            build_schedule(pfx("2001:db8::/48"), &[session("s1", 1)], &[Asn(65001)], 48).unwrap();
        let bad = StreamParams { path_len: 0, ..StreamParams::default() };
        assert!(matches!(
            generate_stream(&schedule, StreamMode::BestCase, bad),
            Err(DeaggError::ParameterOutOfRange { name: "path_len", .. })
        ));
        let bad = StreamParams { n_comms: 300, ..StreamParams::default() };
        assert!(matches!(
            generate_stream(&schedule, StreamMode::BestCase, bad),
            Err(DeaggError::ParameterOutOfRange { name: "n_comms", .. })
        ));
    }

    fn bare_announce(prefix: &str, path: Vec<AsPathSegment>) -> RouteEvent {
        RouteEvent {
            timestamp_secs: 0,
            session_id: "s".into(),
            action: RouteAction::Announce,
            prefix: pfx(prefix),
            path,
            large_communities: Vec::new(),
            origin: Asn(65001),
            atomic_aggregate: false,
            aggregator: None,
        }
    }

    #[test]
    fn hint_analysis_empty_stream() {
        let table = analyze_aggregation_hints(Vec::new());
        assert_eq!(table, HintTable::default());
    }

    #[test]
    fn hint_analysis_counts_each_hint_kind() {
        let seq = vec![AsPathSegment::sequence(vec![Asn(65001)])];
        let with_set = vec![
            AsPathSegment::sequence(vec![Asn(65002)]),
            AsPathSegment { kind: SegmentKind::Set, asns: vec![Asn(1), Asn(2)] },
        ];
        let mut atomic = bare_announce("2001:db8:1::/48", seq.clone());
        atomic.atomic_aggregate = true;
        let events = vec![
            bare_announce("2001:db8::/48", with_set),
            atomic,
            bare_announce("2001:db8:2::/48", seq),
        ];
        let table = analyze_aggregation_hints(events);
        assert_eq!(table.routes.total, 3);
        assert_eq!(table.routes.as_set, 1);
        assert_eq!(table.routes.atomic, 1);
        assert_eq!(table.routes.aggregator, 0);
        assert_eq!(table.routes.any_hint, 2);
        // Three distinct prefixes; the plain sequence path is shared by the
        // atomic and the clean announce, so only two distinct paths.
        assert_eq!(table.prefixes.total, 3);
        assert_eq!(table.prefixes.any_hint, 2);
        assert_eq!(table.paths.total, 2);
        assert_eq!(table.paths.atomic, 1);
        assert_eq!(table.paths.as_set, 1);
        assert_eq!(table.paths.any_hint, 2);
    }

    #[test]
    fn hint_analysis_dedupes_paths_and_prefixes() {
        let seq = vec![AsPathSegment::sequence(vec![Asn(65001)])];
        let mut hinted = bare_announce("2001:db8::/48", seq.clone());
        hinted.aggregator = Some((Asn(65009), 1));
        // Same prefix and same path announced twice, once hinted.
        let events = vec![bare_announce("2001:db8::/48", seq), hinted];
        let table = analyze_aggregation_hints(events);
        assert_eq!(table.routes.total, 2);
        assert_eq!(table.routes.aggregator, 1);
        assert_eq!(table.paths.total, 1);
        assert_eq!(table.paths.aggregator, 1);
        assert_eq!(table.prefixes.total, 1);
        assert_eq!(table.prefixes.any_hint, 1);
    }
}
