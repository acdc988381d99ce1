//! Stateful ingress-filter pipeline implementing the candidate defenses
//! against distributed prefix flooding: static and dynamically growing
//! per-session limits, per-origin and per-covering-block limits, and
//! delayed acceptance of prefixes not covered by known address blocks.
//!
//! Rules run in a fixed order (per-session, dynamic, per-origin, per-block,
//! delayed acceptance); the first rule that fires decides the event.
//! Withdrawing an accepted prefix decrements every counter it incremented.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::deagg::{
    generate_stream, AnnouncementSchedule, DeaggError, Ipv6Prefix, RouteAction, RouteEvent,
    StreamMode, StreamParams,
};
use crate::rib::{RibError, RibSim, RouterProfile, Shedding};
use crate::topology::Asn;

/// What happens on a per-session limit hit.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LimitMode {
    /// Log and accept anyway.
    Warn,
    /// Stop accepting new prefixes; existing ones stay updatable.
    Cap,
    /// Tear the session down and purge its routes.
    Drop,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PerSessionLimit {
    pub limit: u64,
    pub mode: LimitMode,
}

/// Per-session limit that grows with yesterday's accepted count.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DynamicLimit {
    /// Growth factor over the previous day's accepted-prefix count.
    pub factor: f64,
    pub day_length_secs: u64,
    /// Limit for day zero, and the lower bound afterwards.
    pub floor: u64,
}

impl Default for DynamicLimit {
    fn default() -> Self {
        DynamicLimit { factor: 1.5, day_length_secs: 86_400, floor: 100 }
    }
}

/// Cap on distinct accepted prefixes per covering block.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PerBlockLimit {
    /// Covering blocks are prefixes truncated to this length (29 or 32).
    pub block_len: u8,
    pub limit: u64,
}

/// Delay acceptance of prefixes not covered by an already-known block.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PgBgpConfig {
    pub delay_secs: u64,
    /// Known covering blocks; grows as delayed prefixes are admitted.
    pub history: BTreeSet<Ipv6Prefix>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DefenseConfig {
    pub per_session: Option<PerSessionLimit>,
    pub dynamic: Option<DynamicLimit>,
    pub per_origin: Option<u64>,
    pub per_block: Option<PerBlockLimit>,
    pub pgbgp: Option<PgBgpConfig>,
}

impl DefenseConfig {
    pub fn is_empty(&self) -> bool {
        self.per_session.is_none()
            && self.dynamic.is_none()
            && self.per_origin.is_none()
            && self.per_block.is_none()
            && self.pgbgp.is_none()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleId {
    PerSession,
    Dynamic,
    PerOrigin,
    PerBlock,
    PgBgp,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleId::PerSession => "per_session",
            RuleId::Dynamic => "dynamic",
            RuleId::PerOrigin => "per_origin",
            RuleId::PerBlock => "per_block",
            RuleId::PgBgp => "pgbgp",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    Delay,
    SessionDropped,
    Warned,
}

impl Verdict {
    /// True when the event enters the downstream table.
    pub fn admits(&self) -> bool {
        matches!(self, Verdict::Accept | Verdict::Warned)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::Delay => "delay",
            Verdict::SessionDropped => "session_dropped",
            Verdict::Warned => "warned",
        })
    }
}

/// The pipeline's decision for one event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterDecision {
    pub timestamp_secs: u64,
    pub session_id: String,
    pub action: RouteAction,
    pub prefix: Ipv6Prefix,
    pub verdict: Verdict,
    pub rule: Option<RuleId>,
    pub detail: String,
}

/// Aggregate counters. Every announce maps to exactly one of
/// `accepted_routes` (which includes warned-but-accepted ones), `rejected`,
/// `delayed`, or `sessions_dropped`; withdraws are tracked separately.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DefenseStats {
    pub accepted_routes: u64,
    pub rejected: u64,
    pub delayed: u64,
    /// Announce events answered with `SessionDropped`.
    pub sessions_dropped: u64,
    pub withdrawals: u64,
    pub peak_distinct_prefixes: u64,
    pub per_rule_counts: BTreeMap<String, u64>,
    pub dropped_session_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DefenseError {
    NonMonotonicTimestamps { previous: u64, current: u64 },
}

impl fmt::Display for DefenseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefenseError::NonMonotonicTimestamps { previous, current } => {
                write!(f, "timestamp {current} precedes {previous}")
            }
        }
    }
}

impl core::error::Error for DefenseError {}

#[derive(Clone, Debug, Default)]
struct SessionState {
    /// Accepted prefixes with the origin they were accepted under.
    accepted: BTreeMap<Ipv6Prefix, Asn>,
    dropped: bool,
    day: u64,
    day_limit: u64,
    day_initialized: bool,
}

/// Stateful filter pipeline; feed events in timestamp order via
/// [`DefensePipeline::push`].
#[derive(Clone, Debug)]
pub struct DefensePipeline {
    config: DefenseConfig,
    sessions: BTreeMap<String, SessionState>,
    /// Per origin: accepted prefixes with a session refcount.
    origin_counts: BTreeMap<Asn, BTreeMap<Ipv6Prefix, u32>>,
    /// Per covering block: accepted prefixes with a session refcount.
    block_counts: BTreeMap<Ipv6Prefix, BTreeMap<Ipv6Prefix, u32>>,
    /// All accepted prefixes with a session refcount.
    distinct: BTreeMap<Ipv6Prefix, u32>,
    pgbgp_history: BTreeSet<Ipv6Prefix>,
    pgbgp_pending: BTreeMap<Ipv6Prefix, u64>,
    stats: DefenseStats,
    last_ts: Option<u64>,
}

impl DefensePipeline {
    pub fn new(config: DefenseConfig) -> Self {
        let pgbgp_history = config.pgbgp.as_ref().map(|p| p.history.clone()).unwrap_or_default();
        DefensePipeline {
            config,
            sessions: BTreeMap::new(),
            origin_counts: BTreeMap::new(),
            block_counts: BTreeMap::new(),
            distinct: BTreeMap::new(),
            pgbgp_history,
            pgbgp_pending: BTreeMap::new(),
            stats: DefenseStats::default(),
            last_ts: None,
        }
    }

    pub fn stats(&self) -> &DefenseStats {
        &self.stats
    }

    pub fn into_stats(self) -> DefenseStats {
        self.stats
    }

    /// Number of distinct prefixes currently accepted.
    pub fn distinct_prefixes(&self) -> u64 {
        self.distinct.len() as u64
    }

    pub fn push(&mut self, event: &RouteEvent) -> Result<FilterDecision, DefenseError> {
        if let Some(prev) = self.last_ts {
            if event.timestamp_secs < prev {
                return Err(DefenseError::NonMonotonicTimestamps {
                    previous: prev,
                    current: event.timestamp_secs,
                });
            }
        }
        self.last_ts = Some(event.timestamp_secs);
        let decision = match event.action {
            RouteAction::Announce => self.announce(event),
            RouteAction::Withdraw => self.withdraw(event),
        };
        if let Some(rule) = decision.rule {
            *self.stats.per_rule_counts.entry(rule.to_string()).or_insert(0) += 1;
        }
        Ok(decision)
    }

    fn decision(
        event: &RouteEvent,
        verdict: Verdict,
        rule: Option<RuleId>,
        detail: String,
    ) -> FilterDecision {
        FilterDecision {
            timestamp_secs: event.timestamp_secs,
            session_id: event.session_id.clone(),
            action: event.action,
            prefix: event.prefix,
            verdict,
            rule,
            detail,
        }
    }

    fn announce(&mut self, event: &RouteEvent) -> FilterDecision {
        let ts = event.timestamp_secs;
        let prefix = event.prefix;
        let origin = event.origin;

        if self.sessions.get(&event.session_id).map(|s| s.dropped).unwrap_or(false) {
            self.stats.sessions_dropped += 1;
            return Self::decision(
                event,
                Verdict::SessionDropped,
                Some(RuleId::PerSession),
                "session previously dropped".to_string(),
            );
        }
        let session = self.sessions.entry(event.session_id.clone()).or_default();
        let is_new = !session.accepted.contains_key(&prefix);

        // Rule 1: static per-session limit.
        if let Some(ps) = self.config.per_session {
            if is_new && session.accepted.len() as u64 >= ps.limit {
                match ps.mode {
                    LimitMode::Warn => {
                        self.accept(event, is_new);
                        self.stats.accepted_routes += 1;
                        return Self::decision(
                            event,
                            Verdict::Warned,
                            Some(RuleId::PerSession),
                            format!("session beyond its {}-prefix limit", ps.limit),
                        );
                    }
                    LimitMode::Cap => {
                        self.stats.rejected += 1;
                        return Self::decision(
                            event,
                            Verdict::Reject,
                            Some(RuleId::PerSession),
                            format!("capped at {} prefixes", ps.limit),
                        );
                    }
                    LimitMode::Drop => {
                        self.drop_session(&event.session_id);
                        self.stats.sessions_dropped += 1;
                        return Self::decision(
                            event,
                            Verdict::SessionDropped,
                            Some(RuleId::PerSession),
                            format!("session dropped at {} prefixes", ps.limit),
                        );
                    }
                }
            }
        }

        // Rule 2: dynamically growing per-session limit.
        if let Some(dyn_cfg) = self.config.dynamic {
            let session = self.sessions.get_mut(&event.session_id).expect("session exists");
            let day = ts / dyn_cfg.day_length_secs.max(1);
            if !session.day_initialized {
                session.day = day;
                session.day_limit = dyn_cfg.floor;
                session.day_initialized = true;
            } else if day > session.day {
                let grown = (dyn_cfg.factor * session.accepted.len() as f64) as u64;
                session.day_limit = grown.max(dyn_cfg.floor);
                session.day = day;
            }
            if is_new && session.accepted.len() as u64 >= session.day_limit {
                self.stats.rejected += 1;
                let limit = session.day_limit;
                return Self::decision(
                    event,
                    Verdict::Reject,
                    Some(RuleId::Dynamic),
                    format!("today's limit is {limit}"),
                );
            }
        }

        // Rule 3: distinct prefixes per origin AS.
        if let Some(limit) = self.config.per_origin {
            let known = self
                .origin_counts
                .get(&origin)
                .map(|m| (m.len() as u64, m.contains_key(&prefix)))
                .unwrap_or((0, false));
            if !known.1 && known.0 >= limit {
                self.stats.rejected += 1;
                return Self::decision(
                    event,
                    Verdict::Reject,
                    Some(RuleId::PerOrigin),
                    format!("origin AS{origin} at its {limit}-prefix limit"),
                );
            }
        }

        // Rule 4: distinct prefixes per covering block.
        if let Some(pb) = self.config.per_block {
            let block = block_of(prefix, pb.block_len);
            let known = self
                .block_counts
                .get(&block)
                .map(|m| (m.len() as u64, m.contains_key(&prefix)))
                .unwrap_or((0, false));
            if !known.1 && known.0 >= pb.limit {
                self.stats.rejected += 1;
                return Self::decision(
                    event,
                    Verdict::Reject,
                    Some(RuleId::PerBlock),
                    format!("block {block} at its {}-prefix limit", pb.limit),
                );
            }
        }

        // Rule 5: delayed acceptance of unfamiliar prefixes.
        if let Some(pg) = &self.config.pgbgp {
            let covered = (0..=prefix.len()).any(|l| {
                prefix.truncate(l).map(|t| self.pgbgp_history.contains(&t)).unwrap_or(false)
            });
            if !covered {
                let first_seen = *self.pgbgp_pending.entry(prefix).or_insert(ts);
                if ts.saturating_sub(first_seen) < pg.delay_secs {
                    self.stats.delayed += 1;
                    return Self::decision(
                        event,
                        Verdict::Delay,
                        Some(RuleId::PgBgp),
                        format!("unfamiliar prefix pending since {first_seen}"),
                    );
                }
                self.pgbgp_pending.remove(&prefix);
                self.pgbgp_history.insert(prefix);
                self.accept(event, is_new);
                self.stats.accepted_routes += 1;
                return Self::decision(
                    event,
                    Verdict::Accept,
                    Some(RuleId::PgBgp),
                    "admitted after delay".to_string(),
                );
            }
        }

        self.accept(event, is_new);
        self.stats.accepted_routes += 1;
        Self::decision(event, Verdict::Accept, None, String::new())
    }

    fn accept(&mut self, event: &RouteEvent, is_new: bool) {
        let prefix = event.prefix;
        let origin = event.origin;
        let block_len = self.config.per_block.map(|pb| pb.block_len);
        let session = self.sessions.get_mut(&event.session_id).expect("session exists");
        if is_new {
            session.accepted.insert(prefix, origin);
            *self.distinct.entry(prefix).or_insert(0) += 1;
            self.stats.peak_distinct_prefixes =
                self.stats.peak_distinct_prefixes.max(self.distinct.len() as u64);
            *self.origin_counts.entry(origin).or_default().entry(prefix).or_insert(0) += 1;
            if let Some(block_len) = block_len {
                let block = block_of(prefix, block_len);
                *self.block_counts.entry(block).or_default().entry(prefix).or_insert(0) += 1;
            }
        } else {
            // Attribute update; re-home the origin refcount if it moved.
            let old = session.accepted.insert(prefix, origin).expect("existing prefix");
            if old != origin {
                decrement(&mut self.origin_counts, old, prefix);
                *self.origin_counts.entry(origin).or_default().entry(prefix).or_insert(0) += 1;
            }
        }
    }

    fn withdraw(&mut self, event: &RouteEvent) -> FilterDecision {
        self.stats.withdrawals += 1;
        if self.sessions.get(&event.session_id).map(|s| s.dropped).unwrap_or(false) {
            return Self::decision(
                event,
                Verdict::SessionDropped,
                Some(RuleId::PerSession),
                "session previously dropped".to_string(),
            );
        }
        let removed = self
            .sessions
            .get_mut(&event.session_id)
            .and_then(|s| s.accepted.remove(&event.prefix));
        if let Some(origin) = removed {
            self.release(event.prefix, origin);
        } else {
            // Withdraw of a never-accepted prefix also cancels any pending
            // delayed acceptance.
            self.pgbgp_pending.remove(&event.prefix);
        }
        Self::decision(event, Verdict::Accept, None, String::new())
    }

    /// Undoes the counters one accepted (prefix, origin) binding holds.
    fn release(&mut self, prefix: Ipv6Prefix, origin: Asn) {
        if let Some(count) = self.distinct.get_mut(&prefix) {
            *count -= 1;
            if *count == 0 {
                self.distinct.remove(&prefix);
            }
        }
        decrement(&mut self.origin_counts, origin, prefix);
        if let Some(pb) = self.config.per_block {
            let block = block_of(prefix, pb.block_len);
            if let Some(prefixes) = self.block_counts.get_mut(&block) {
                if let Some(count) = prefixes.get_mut(&prefix) {
                    *count -= 1;
                    if *count == 0 {
                        prefixes.remove(&prefix);
                    }
                }
                if prefixes.is_empty() {
                    self.block_counts.remove(&block);
                }
            }
        }
    }

    fn drop_session(&mut self, session_id: &str) {
        let Some(session) = self.sessions.get_mut(session_id) else { return };
        session.dropped = true;
        let held: Vec<(Ipv6Prefix, Asn)> =
            session.accepted.iter().map(|(p, o)| (*p, *o)).collect();
        session.accepted.clear();
        for (prefix, origin) in held {
            self.release(prefix, origin);
        }
        self.stats.dropped_session_ids.push(session_id.to_string());
    }
}

fn decrement(counts: &mut BTreeMap<Asn, BTreeMap<Ipv6Prefix, u32>>, key: Asn, prefix: Ipv6Prefix) {
    if let Some(prefixes) = counts.get_mut(&key) {
        if let Some(count) = prefixes.get_mut(&prefix) {
            *count -= 1;
            if *count == 0 {
                prefixes.remove(&prefix);
            }
        }
        if prefixes.is_empty() {
            counts.remove(&key);
        }
    }
}

/// Covering block of a prefix: the prefix truncated to `block_len`, or the
/// prefix itself when it is already shorter.
fn block_of(prefix: Ipv6Prefix, block_len: u8) -> Ipv6Prefix {
    prefix.truncate(block_len.min(prefix.len())).expect("truncation within length")
}

/// Runs a whole stream through a fresh pipeline.
pub fn evaluate(
    events: impl IntoIterator<Item = RouteEvent>,
    config: &DefenseConfig,
) -> Result<(Vec<FilterDecision>, DefenseStats), DefenseError> {
    let mut pipeline = DefensePipeline::new(config.clone());
    let mut decisions = Vec::new();
    for event in events {
        decisions.push(pipeline.push(&event)?);
    }
    Ok((decisions, pipeline.into_stats()))
}

/// Outcome of running a generated attack stream through a defense config
/// into a router profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackOutcome {
    pub peak_rib_bytes: u64,
    pub exhausted: bool,
    /// Announcements admitted by the defense pipeline.
    pub accepted_routes: u64,
    /// Largest simultaneous route count inside the router.
    pub peak_rib_routes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackError {
    Stream(DeaggError),
    Defense(DefenseError),
    Rib(RibError),
}

impl fmt::Display for AttackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackError::Stream(e) => write!(f, "stream generation: {e}"),
            AttackError::Defense(e) => write!(f, "defense evaluation: {e}"),
            AttackError::Rib(e) => write!(f, "rib simulation: {e}"),
        }
    }
}

impl core::error::Error for AttackError {}

impl From<DeaggError> for AttackError {
    fn from(e: DeaggError) -> Self {
        AttackError::Stream(e)
    }
}

impl From<DefenseError> for AttackError {
    fn from(e: DefenseError) -> Self {
        AttackError::Defense(e)
    }
}

impl From<RibError> for AttackError {
    fn from(e: RibError) -> Self {
        AttackError::Rib(e)
    }
}

/// Generates the schedule's stream, filters it through the defense config,
/// and feeds only admitted events into a RIB simulation of `profile`.
/// Events stream through one at a time, so million-route schedules run in
/// bounded memory.
pub fn attack_vs_defense(
    schedule: &AnnouncementSchedule,
    config: &DefenseConfig,
    profile: &RouterProfile,
    mode: StreamMode,
    params: StreamParams,
    shedding: Shedding,
) -> Result<AttackOutcome, AttackError> {
    let mut pipeline = DefensePipeline::new(config.clone());
    let mut rib = RibSim::new(profile.clone(), shedding);
    for event in generate_stream(schedule, mode, params)? {
        let decision = pipeline.push(&event)?;
        if decision.verdict.admits() {
            rib.push(&event)?;
        }
    }
    let state = rib.state();
    Ok(AttackOutcome {
        peak_rib_bytes: state.peak_bytes,
        exhausted: state.exhausted,
        accepted_routes: pipeline.stats().accepted_routes,
        peak_rib_routes: state.peak_routes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deagg::{build_schedule, SessionSpec};
    use alloc::vec;

    fn pfx(s: &str) -> Ipv6Prefix {
        s.parse().unwrap()
    }

    fn nth_prefix(i: u64) -> Ipv6Prefix {
        Ipv6Prefix::from_raw((0x2a10_cc40u128 << 96) | (i as u128) << 80, 48).unwrap()
    }

    fn announce(session: &str, prefix: Ipv6Prefix, ts: u64, origin: u32) -> RouteEvent {
        RouteEvent {
            timestamp_secs: ts,
            session_id: session.into(),
            action: RouteAction::Announce,
            prefix,
            path: vec![crate::deagg::AsPathSegment::sequence(vec![Asn(origin)])],
            large_communities: Vec::new(),
            origin: Asn(origin),
            atomic_aggregate: false,
            aggregator: None,
        }
    }

    fn withdraw(session: &str, prefix: Ipv6Prefix, ts: u64) -> RouteEvent {
        RouteEvent {
            timestamp_secs: ts,
            session_id: session.into(),
            action: RouteAction::Withdraw,
            prefix,
            path: Vec::new(),
            large_communities: Vec::new(),
            origin: Asn(0),
            atomic_aggregate: false,
            aggregator: None,
        }
    }

    fn session_only(limit: u64, mode: LimitMode) -> DefenseConfig {
        DefenseConfig {
            per_session: Some(PerSessionLimit { limit, mode }),
            ..DefenseConfig::default()
        }
    }

    #[test]
    fn drop_mode_kills_the_session_and_its_routes() {
        let config = session_only(100, LimitMode::Drop);
        let events: Vec<RouteEvent> =
            (0..101).map(|i| announce("s1", nth_prefix(i), i, 65001)).collect();
        let (decisions, stats) = evaluate(events, &config).unwrap();
        assert_eq!(decisions[..100].iter().filter(|d| d.verdict == Verdict::Accept).count(), 100);
        assert_eq!(decisions[100].verdict, Verdict::SessionDropped);
        assert_eq!(stats.accepted_routes, 100);
        assert_eq!(stats.sessions_dropped, 1);
        assert_eq!(stats.dropped_session_ids, ["s1"]);
    }

    #[test]
    fn session_hunting_evades_per_session_limits() {
        // 1000 prefixes over 10 sessions of limit 100: everything passes.
        let config = session_only(100, LimitMode::Drop);
        let events: Vec<RouteEvent> = (0..1000)
            .map(|i| announce(&format!("s{}", i % 10), nth_prefix(i), i, 65001))
            .collect();
        let (_, stats) = evaluate(events, &config).unwrap();
        assert_eq!(stats.accepted_routes, 1000);
        assert_eq!(stats.sessions_dropped, 0);
    }

    #[test]
    fn cap_mode_rejects_new_but_updates_existing() {
        let config = session_only(2, LimitMode::Cap);
        let events = vec![
            announce("s1", nth_prefix(0), 0, 65001),
            announce("s1", nth_prefix(1), 1, 65001),
            announce("s1", nth_prefix(2), 2, 65001),
            // Re-announce of an accepted prefix still passes.
            announce("s1", nth_prefix(0), 3, 65001),
        ];
        let (decisions, stats) = evaluate(events, &config).unwrap();
        assert_eq!(decisions[2].verdict, Verdict::Reject);
        assert_eq!(decisions[2].rule, Some(RuleId::PerSession));
        assert_eq!(decisions[3].verdict, Verdict::Accept);
        assert_eq!(stats.rejected, 1);
        assert_eq!(stats.accepted_routes, 3);
    }

    #[test]
    fn warn_mode_accepts_and_flags() {
        let config = session_only(1, LimitMode::Warn);
        let events = vec![
            announce("s1", nth_prefix(0), 0, 65001),
            announce("s1", nth_prefix(1), 1, 65001),
        ];
        let (decisions, stats) = evaluate(events, &config).unwrap();
        assert_eq!(decisions[1].verdict, Verdict::Warned);
        assert_eq!(stats.accepted_routes, 2);
        assert_eq!(stats.peak_distinct_prefixes, 2);
    }

    #[test]
    fn per_origin_limit_binds_across_sessions() {
        let config = DefenseConfig { per_origin: Some(3870), ..DefenseConfig::default() };
        let events: Vec<RouteEvent> = (0..3871)
            .map(|i| announce(&format!("s{}", i % 4), nth_prefix(i), i, 65001))
            .collect();
        let (decisions, stats) = evaluate(events, &config).unwrap();
        assert_eq!(stats.accepted_routes, 3870);
        assert_eq!(decisions[3870].verdict, Verdict::Reject);
        assert_eq!(decisions[3870].rule, Some(RuleId::PerOrigin));
        // A different origin is unaffected.
        let mut pipeline = DefensePipeline::new(config);
        for i in 0..3871 {
            pipeline.push(&announce("s1", nth_prefix(i), i, 65001)).unwrap();
        }
        let d = pipeline.push(&announce("s1", nth_prefix(9999), 4000, 65002)).unwrap();
        assert_eq!(d.verdict, Verdict::Accept);
    }

    #[test]
    fn per_block_limit_counts_more_specifics() {
        let config = DefenseConfig {
            per_block: Some(PerBlockLimit { block_len: 29, limit: 9807 }),
            ..DefenseConfig::default()
        };
        // All prefixes share one covering /29.
        let events: Vec<RouteEvent> =
            (0..9808).map(|i| announce("s1", nth_prefix(i), i, 65001)).collect();
        let (decisions, stats) = evaluate(events, &config).unwrap();
        assert_eq!(stats.accepted_routes, 9807);
        assert_eq!(decisions[9807].verdict, Verdict::Reject);
        assert_eq!(decisions[9807].rule, Some(RuleId::PerBlock));
    }

    #[test]
    fn pgbgp_passes_covered_and_delays_unfamiliar() {
        let config = DefenseConfig {
            pgbgp: Some(PgBgpConfig {
                delay_secs: 600,
                history: BTreeSet::from([pfx("2001:db8::/32")]),
            }),
            ..DefenseConfig::default()
        };
        let mut pipeline = DefensePipeline::new(config);
        // Covered by history: accepted immediately.
        let d = pipeline.push(&announce("s1", pfx("2001:db8:1::/48"), 0, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Accept);
        // Unfamiliar: delayed, then admitted once the delay has passed.
        let d = pipeline.push(&announce("s1", pfx("2a10::/48"), 0, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Delay);
        assert_eq!(d.rule, Some(RuleId::PgBgp));
        let d = pipeline.push(&announce("s1", pfx("2a10::/48"), 300, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Delay);
        let d = pipeline.push(&announce("s1", pfx("2a10::/48"), 600, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Accept);
        assert_eq!(d.rule, Some(RuleId::PgBgp));
        // Admission taught the pipeline the block: instant accept now.
        let d = pipeline.push(&announce("s2", pfx("2a10::/48"), 601, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Accept);
        assert_eq!(d.rule, None);
    }

    #[test]
    fn withdraw_decrements_every_counter() {
        let config = DefenseConfig {
            per_origin: Some(1),
            per_block: Some(PerBlockLimit { block_len: 29, limit: 1 }),
            ..DefenseConfig::default()
        };
        let mut pipeline = DefensePipeline::new(config);
        pipeline.push(&announce("s1", nth_prefix(0), 0, 65001)).unwrap();
        // Both limits are saturated.
        let d = pipeline.push(&announce("s1", nth_prefix(1), 1, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Reject);
        // Withdraw frees them again.
        pipeline.push(&withdraw("s1", nth_prefix(0), 2)).unwrap();
        let d = pipeline.push(&announce("s1", nth_prefix(1), 3, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Accept);
        assert_eq!(pipeline.distinct_prefixes(), 1);
        assert_eq!(pipeline.stats().withdrawals, 1);
    }

    #[test]
    fn dynamic_limit_grows_with_yesterday() {
        let config = DefenseConfig {
            dynamic: Some(DynamicLimit { factor: 1.5, day_length_secs: 100, floor: 2 }),
            ..DefenseConfig::default()
        };
        let mut pipeline = DefensePipeline::new(config);
        // Day 0: floor of 2.
        assert!(pipeline.push(&announce("s1", nth_prefix(0), 0, 65001)).unwrap().verdict.admits());
        assert!(pipeline.push(&announce("s1", nth_prefix(1), 1, 65001)).unwrap().verdict.admits());
        let d = pipeline.push(&announce("s1", nth_prefix(2), 2, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Reject);
        assert_eq!(d.rule, Some(RuleId::Dynamic));
        // Day 1: limit grows to 1.5 * 2 = 3 held prefixes, so one more fits.
        assert!(pipeline
            .push(&announce("s1", nth_prefix(3), 100, 65001))
            .unwrap()
            .verdict
            .admits());
        let d = pipeline.push(&announce("s1", nth_prefix(4), 101, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Reject);
        // Day 2: 1.5 * 3 = 4.5, truncated to 4.
        assert!(pipeline
            .push(&announce("s1", nth_prefix(5), 200, 65001))
            .unwrap()
            .verdict
            .admits());
        let d = pipeline.push(&announce("s1", nth_prefix(6), 201, 65001)).unwrap();
        assert_eq!(d.verdict, Verdict::Reject);
    }

    #[test]
    fn dynamic_floor_applies_when_history_shrinks() {
        let config = DefenseConfig {
            dynamic: Some(DynamicLimit { factor: 1.5, day_length_secs: 100, floor: 2 }),
            ..DefenseConfig::default()
        };
        let mut pipeline = DefensePipeline::new(config);
        pipeline.push(&announce("s1", nth_prefix(0), 0, 65001)).unwrap();
        pipeline.push(&withdraw("s1", nth_prefix(0), 1)).unwrap();
        // Day 1 with an empty table: 1.5 * 0 < floor, so floor holds.
        assert!(pipeline
            .push(&announce("s1", nth_prefix(1), 100, 65001))
            .unwrap()
            .verdict
            .admits());
        assert!(pipeline
            .push(&announce("s1", nth_prefix(2), 101, 65001))
            .unwrap()
            .verdict
            .admits());
        assert_eq!(
            pipeline.push(&announce("s1", nth_prefix(3), 102, 65001)).unwrap().verdict,
            Verdict::Reject
        );
    }

    #[test]
    fn rule_order_per_session_fires_before_per_origin() {
        let config = DefenseConfig {
            per_session: Some(PerSessionLimit { limit: 1, mode: LimitMode::Cap }),
            per_origin: Some(1),
            ..DefenseConfig::default()
        };
        let mut pipeline = DefensePipeline::new(config);
        pipeline.push(&announce("s1", nth_prefix(0), 0, 65001)).unwrap();
        // Both rules would fire; per-session owns the decision.
        let d = pipeline.push(&announce("s1", nth_prefix(1), 1, 65001)).unwrap();
        assert_eq!(d.rule, Some(RuleId::PerSession));
    }

    #[test]
    fn decisions_are_deterministic() {
        let config = DefenseConfig {
            per_session: Some(PerSessionLimit { limit: 3, mode: LimitMode::Cap }),
            per_origin: Some(5),
            ..DefenseConfig::default()
        };
        let events: Vec<RouteEvent> = (0..50)
            .map(|i| announce(&format!("s{}", i % 3), nth_prefix(i % 10), i, 65001 + (i % 2) as u32))
            .collect();
        let (a, sa) = evaluate(events.clone(), &config).unwrap();
        let (b, sb) = evaluate(events, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_monotonic_timestamps_rejected() {
        let config = DefenseConfig::default();
        let events = vec![
            announce("s1", nth_prefix(0), 10, 65001),
            announce("s1", nth_prefix(1), 9, 65001),
        ];
        assert_eq!(
            evaluate(events, &config),
            Err(DefenseError::NonMonotonicTimestamps { previous: 10, current: 9 })
        );
    }

    #[test]
    fn attack_outcomes_with_and_without_defense() {
        // Small parent: 1023 prefixes over 4 sessions, tiny router.
        let parent = pfx("2a10:cc40::/39");
        let sessions: Vec<SessionSpec> =
            (0..4).map(|i| SessionSpec { id: format!("s{i}"), limit: 300 }).collect();
        let schedule = build_schedule(parent, &sessions, &[Asn(65001)], 48).unwrap();
        let profile = RouterProfile::new("tiny", 500 * crate::rib::route_size_lower_bound(1, 0));

        let undefended = attack_vs_defense(
            &schedule,
            &DefenseConfig::default(),
            &profile,
            StreamMode::BestCase,
            StreamParams::default(),
            Shedding::None,
        )
        .unwrap();
        assert!(undefended.exhausted);
        assert_eq!(undefended.peak_rib_routes, 500);

        let defended = attack_vs_defense(
            &schedule,
            &session_only(100, LimitMode::Drop),
            &profile,
            StreamMode::BestCase,
            StreamParams::default(),
            Shedding::None,
        )
        .unwrap();
        assert!(!defended.exhausted);
        assert!(defended.accepted_routes <= 400);
    }

    #[test]
    fn per_block_against_single_block_schedule() {
        let parent = pfx("2a10:cc40::/40");
        let sessions: Vec<SessionSpec> =
            (0..4).map(|i| SessionSpec { id: format!("s{i}"), limit: 200 }).collect();
        let schedule = build_schedule(parent, &sessions, &[Asn(65001)], 48).unwrap();
        let profile = RouterProfile::new("big", u64::MAX);
        let config = DefenseConfig {
            per_block: Some(PerBlockLimit { block_len: 29, limit: 100 }),
            ..DefenseConfig::default()
        };
        let outcome = attack_vs_defense(
            &schedule,
            &config,
            &profile,
            StreamMode::BestCase,
            StreamParams::default(),
            Shedding::None,
        )
        .unwrap();
        // Every prefix lives under one /29, so at most 100 ever pass.
        assert!(outcome.accepted_routes <= 100);
    }
}
