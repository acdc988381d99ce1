//! Serde DTOs for every file the tool reads or writes, with conversions to
//! and from core types. Formats are line-oriented JSON or CSV so outputs
//! stay greppable and diff-friendly; map-like structures use ordered keys
//! so reruns are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use kirinlab_core::deagg::{
    AnnouncementSchedule, AsPathSegment, HintTable, Ipv6Prefix, RouteAction, RouteEvent,
    ScheduleTiming, SegmentKind, SessionAssignment,
};
use kirinlab_core::defense::{
    DefenseConfig, DefenseStats, DynamicLimit, FilterDecision, LimitMode, PerBlockLimit,
    PerSessionLimit, PgBgpConfig,
};
use kirinlab_core::ilp::{Cmp, IlpModel, IlpSolution, Sense, Status, SweepParams};
use kirinlab_core::propagation::{ExposureReport, Injection, InjectionVia};
use kirinlab_core::rib::{AlertThresholds, RibState, RouterProfile, TimelineEvent};
use kirinlab_core::topology::Asn;

/// One route event as a JSON Lines record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventLine {
    pub ts: u64,
    pub session: String,
    pub action: String,
    pub prefix: String,
    pub path: Vec<SegmentLine>,
    pub large_communities: Vec<(u32, u32, u32)>,
    pub origin: u32,
    pub atomic_aggregate: bool,
    pub aggregator: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentLine {
    pub kind: String,
    pub asns: Vec<u32>,
}

impl From<&RouteEvent> for EventLine {
    fn from(ev: &RouteEvent) -> Self {
        EventLine {
            ts: ev.timestamp_secs,
            session: ev.session_id.clone(),
            action: match ev.action {
                RouteAction::Announce => "announce".into(),
                RouteAction::Withdraw => "withdraw".into(),
            },
            prefix: ev.prefix.to_string(),
            path: ev
                .path
                .iter()
                .map(|s| SegmentLine {
                    kind: match s.kind {
                        SegmentKind::Sequence => "sequence".into(),
                        SegmentKind::Set => "set".into(),
                    },
                    asns: s.asns.iter().map(|a| a.0).collect(),
                })
                .collect(),
            large_communities: ev.large_communities.clone(),
            origin: ev.origin.0,
            atomic_aggregate: ev.atomic_aggregate,
            aggregator: ev.aggregator.map(|(a, id)| (a.0, id)),
        }
    }
}

impl EventLine {
    pub fn into_event(self) -> Result<RouteEvent> {
        let action = match self.action.as_str() {
            "announce" => RouteAction::Announce,
            "withdraw" => RouteAction::Withdraw,
            other => bail!("unknown action `{other}`"),
        };
        let path = self
            .path
            .into_iter()
            .map(|s| {
                let kind = match s.kind.as_str() {
                    "sequence" => SegmentKind::Sequence,
                    "set" => SegmentKind::Set,
                    other => bail!("unknown segment kind `{other}`"),
                };
                Ok(AsPathSegment { kind, asns: s.asns.into_iter().map(Asn).collect() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RouteEvent {
            timestamp_secs: self.ts,
            session_id: self.session,
            action,
            prefix: Ipv6Prefix::from_str(&self.prefix)
                .map_err(|e| anyhow!("bad prefix: {e}"))?,
            path,
            large_communities: self.large_communities,
            origin: Asn(self.origin),
            atomic_aggregate: self.atomic_aggregate,
            aggregator: self.aggregator.map(|(a, id)| (Asn(a), id)),
        })
    }
}

/// Streaming JSONL reader: parses one event per non-empty line.
pub fn parse_event_lines(
    reader: impl std::io::BufRead,
) -> impl Iterator<Item = Result<RouteEvent>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(anyhow!("line {}: {e}", i + 1))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(
            serde_json::from_str::<EventLine>(&l)
                .with_context(|| format!("line {}", i + 1))
                .and_then(EventLine::into_event),
        ),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub parent: String,
    pub sessions: Vec<ScheduleSessionFile>,
    pub groups: Vec<Vec<String>>,
    pub timing: TimingFile,
    pub origin_pool: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSessionFile {
    pub id: String,
    pub limit: usize,
    pub prefixes: Vec<String>,
    pub origins: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingFile {
    pub converge_wait_secs: u64,
    pub post_withdraw_wait_secs: u64,
}

impl From<&AnnouncementSchedule> for ScheduleFile {
    fn from(s: &AnnouncementSchedule) -> Self {
        ScheduleFile {
            parent: s.parent.to_string(),
            sessions: s
                .assignments
                .iter()
                .map(|(id, a)| ScheduleSessionFile {
                    id: id.clone(),
                    limit: a.limit,
                    prefixes: a.prefixes.iter().map(|p| p.to_string()).collect(),
                    origins: a.origins.iter().map(|o| o.0).collect(),
                })
                .collect(),
            groups: s.groups.clone(),
            timing: TimingFile {
                converge_wait_secs: s.timing.converge_wait_secs,
                post_withdraw_wait_secs: s.timing.post_withdraw_wait_secs,
            },
            origin_pool: s.origin_pool.iter().map(|o| o.0).collect(),
        }
    }
}

impl ScheduleFile {
    pub fn into_schedule(self) -> Result<AnnouncementSchedule> {
        let parent =
            Ipv6Prefix::from_str(&self.parent).map_err(|e| anyhow!("bad parent: {e}"))?;
        let mut assignments = BTreeMap::new();
        for s in self.sessions {
            let prefixes = s
                .prefixes
                .iter()
                .map(|p| Ipv6Prefix::from_str(p).map_err(|e| anyhow!("bad prefix: {e}")))
                .collect::<Result<Vec<_>>>()?;
            assignments.insert(
                s.id,
                SessionAssignment {
                    limit: s.limit,
                    prefixes,
                    origins: s.origins.into_iter().map(Asn).collect(),
                },
            );
        }
        Ok(AnnouncementSchedule {
            parent,
            assignments,
            origin_pool: self.origin_pool.into_iter().map(Asn).collect(),
            groups: self.groups,
            timing: ScheduleTiming {
                converge_wait_secs: self.timing.converge_wait_secs,
                post_withdraw_wait_secs: self.timing.post_withdraw_wait_secs,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub name: String,
    pub rib_capacity_bytes: u64,
    pub thresholds: ThresholdsFile,
    pub per_session_prefix_limit: Option<u64>,
    pub baseline_route_count: u64,
    pub baseline_route_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub minor: f64,
    pub severe: f64,
    pub critical: f64,
}

impl From<&RouterProfile> for ProfileFile {
    fn from(p: &RouterProfile) -> Self {
        ProfileFile {
            name: p.name.clone(),
            rib_capacity_bytes: p.rib_capacity_bytes,
            thresholds: ThresholdsFile {
                minor: p.alert_thresholds.minor,
                severe: p.alert_thresholds.severe,
                critical: p.alert_thresholds.critical,
            },
            per_session_prefix_limit: p.per_session_prefix_limit,
            baseline_route_count: p.baseline_route_count,
            baseline_route_bytes: p.baseline_route_bytes,
        }
    }
}

impl ProfileFile {
    pub fn into_profile(self) -> Result<RouterProfile> {
        let thresholds = AlertThresholds {
            minor: self.thresholds.minor,
            severe: self.thresholds.severe,
            critical: self.thresholds.critical,
        };
        if !thresholds.is_valid() {
            bail!("thresholds must satisfy minor < severe < critical <= 1.0");
        }
        Ok(RouterProfile {
            name: self.name,
            rib_capacity_bytes: self.rib_capacity_bytes,
            alert_thresholds: thresholds,
            per_session_prefix_limit: self.per_session_prefix_limit,
            baseline_route_count: self.baseline_route_count,
            baseline_route_bytes: self.baseline_route_bytes,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DefenseConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_session: Option<PerSessionFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<DynamicFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_origin: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_block: Option<PerBlockFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pgbgp: Option<PgBgpFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerSessionFile {
    pub limit: u64,
    pub mode: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicFile {
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default = "default_day_length")]
    pub day_length_secs: u64,
    #[serde(default = "default_floor")]
    pub floor: u64,
}

fn default_factor() -> f64 {
    1.5
}

fn default_day_length() -> u64 {
    86_400
}

fn default_floor() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerBlockFile {
    pub block_len: u8,
    pub limit: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgBgpFile {
    pub delay_secs: u64,
    #[serde(default)]
    pub history: Vec<String>,
}

impl DefenseConfigFile {
    pub fn into_config(self) -> Result<DefenseConfig> {
        let per_session = self
            .per_session
            .map(|ps| {
                let mode = match ps.mode.as_str() {
                    "warn" => LimitMode::Warn,
                    "cap" => LimitMode::Cap,
                    "drop" => LimitMode::Drop,
                    other => bail!("unknown per-session mode `{other}`"),
                };
                if ps.limit == 0 {
                    bail!("per-session limit must be positive");
                }
                Ok(PerSessionLimit { limit: ps.limit, mode })
            })
            .transpose()?;
        let dynamic = self
            .dynamic
            .map(|d| {
                if d.factor <= 1.0 {
                    bail!("dynamic factor must exceed 1");
                }
                Ok(DynamicLimit {
                    factor: d.factor,
                    day_length_secs: d.day_length_secs,
                    floor: d.floor,
                })
            })
            .transpose()?;
        let per_block = self
            .per_block
            .map(|pb| {
                if !matches!(pb.block_len, 29 | 32) {
                    bail!("block_len must be 29 or 32");
                }
                if pb.limit == 0 {
                    bail!("per-block limit must be positive");
                }
                Ok(PerBlockLimit { block_len: pb.block_len, limit: pb.limit })
            })
            .transpose()?;
        let pgbgp = self
            .pgbgp
            .map(|p| -> Result<PgBgpConfig> {
                let history = p
                    .history
                    .iter()
                    .map(|s| Ipv6Prefix::from_str(s).map_err(|e| anyhow!("bad history: {e}")))
                    .collect::<Result<BTreeSet<_>>>()?;
                Ok(PgBgpConfig { delay_secs: p.delay_secs, history })
            })
            .transpose()?;
        Ok(DefenseConfig { per_session, dynamic, per_origin: self.per_origin, per_block, pgbgp })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionFile {
    pub neighbor: u32,
    pub via: String,
    pub session_id: String,
    #[serde(default)]
    pub route_count: u64,
}

pub fn parse_injections(text: &str) -> Result<Vec<Injection>> {
    let raw: Vec<InjectionFile> = serde_json::from_str(text).context("injections JSON")?;
    raw.into_iter()
        .map(|i| {
            let via = match i.via.as_str() {
                "transit" => InjectionVia::Transit,
                "bilateral" => InjectionVia::BilateralPeer,
                "multilateral" => InjectionVia::MultilateralPeer,
                other => bail!("unknown injection type `{other}`"),
            };
            Ok(Injection {
                neighbor: Asn(i.neighbor),
                via,
                session_id: i.session_id,
                route_count: i.route_count,
            })
        })
        .collect()
}

/// Validation summary for `topo validate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ases: u64,
    pub p2c_edges: u64,
    pub p2p_edges: u64,
    pub lans: u64,
    pub triplets: u64,
    pub orphan_asns: Vec<u32>,
}

/// Model dump: variables, objective, constraints with named coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDump {
    pub vars: Vec<String>,
    pub objective: ObjectiveDump,
    pub constraints: Vec<ConstraintDump>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveDump {
    pub sense: String,
    pub coeffs: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintDump {
    pub coeffs: BTreeMap<String, i64>,
    pub cmp: String,
    pub rhs: i64,
}

impl From<&IlpModel> for ModelDump {
    fn from(m: &IlpModel) -> Self {
        ModelDump {
            vars: m.var_names().to_vec(),
            objective: ObjectiveDump {
                sense: match m.sense() {
                    Sense::Maximize => "maximize".into(),
                    Sense::Minimize => "minimize".into(),
                },
                coeffs: m
                    .objective()
                    .iter()
                    .map(|&(v, c)| (m.var_name(v).to_string(), c))
                    .collect(),
            },
            constraints: m
                .constraints()
                .iter()
                .map(|con| ConstraintDump {
                    coeffs: con
                        .terms
                        .iter()
                        .map(|&(v, c)| (m.var_name(v).to_string(), c))
                        .collect(),
                    cmp: match con.cmp {
                        Cmp::Le => "<=".into(),
                        Cmp::Ge => ">=".into(),
                    },
                    rhs: con.rhs,
                })
                .collect(),
        }
    }
}

/// One sweep CSV row: `scenario,param1,param2,objective,status,wall_time`.
/// The objective column is empty for infeasible points.
pub fn sweep_csv(points: &[(SweepParams, IlpSolution)]) -> String {
    let mut out = String::from("scenario,param1,param2,objective,status,wall_time\n");
    for (params, sol) in points {
        let (p1, p2) = params.values();
        let objective = match sol.status {
            Status::Infeasible => String::new(),
            _ => sol.objective_value.to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            params.scenario(),
            p1,
            p2,
            objective,
            sol.status,
            sol.wall_time_secs
        ));
    }
    out
}

/// Exposure CSV: `asn,sessions_reaching,routes_received`.
pub fn exposure_csv(report: &ExposureReport) -> String {
    let mut out = String::from("asn,sessions_reaching,routes_received\n");
    for (asn, e) in &report.per_as {
        out.push_str(&format!("{},{},{}\n", asn, e.sessions_reaching, e.routes_received));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ExposureSummary {
    pub total_ases: u64,
    pub reached_ases: u64,
    pub injections: BTreeMap<String, ReachFractionFile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachFractionFile {
    pub total: f64,
    pub within_cone: f64,
}

impl From<&ExposureReport> for ExposureSummary {
    fn from(r: &ExposureReport) -> Self {
        ExposureSummary {
            total_ases: r.total_ases,
            reached_ases: r.per_as.len() as u64,
            injections: r
                .reach_fraction
                .iter()
                .map(|(id, f)| {
                    (
                        id.clone(),
                        ReachFractionFile { total: f.total, within_cone: f.within_cone },
                    )
                })
                .collect(),
        }
    }
}

/// Decision JSONL record: `{ts, session, prefix, verdict, rule}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionLine {
    pub ts: u64,
    pub session: String,
    pub prefix: String,
    pub action: String,
    pub verdict: String,
    pub rule: Option<String>,
}

impl From<&FilterDecision> for DecisionLine {
    fn from(d: &FilterDecision) -> Self {
        DecisionLine {
            ts: d.timestamp_secs,
            session: d.session_id.clone(),
            prefix: d.prefix.to_string(),
            action: match d.action {
                RouteAction::Announce => "announce".into(),
                RouteAction::Withdraw => "withdraw".into(),
            },
            verdict: d.verdict.to_string(),
            rule: d.rule.map(|r| r.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DefenseStatsFile {
    pub accepted_routes: u64,
    pub rejected: u64,
    pub delayed: u64,
    pub sessions_dropped: u64,
    pub withdrawals: u64,
    pub peak_distinct_prefixes: u64,
    pub per_rule_counts: BTreeMap<String, u64>,
    pub dropped_session_ids: Vec<String>,
}

impl From<&DefenseStats> for DefenseStatsFile {
    fn from(s: &DefenseStats) -> Self {
        DefenseStatsFile {
            accepted_routes: s.accepted_routes,
            rejected: s.rejected,
            delayed: s.delayed,
            sessions_dropped: s.sessions_dropped,
            withdrawals: s.withdrawals,
            peak_distinct_prefixes: s.peak_distinct_prefixes,
            per_rule_counts: s.per_rule_counts.clone(),
            dropped_session_ids: s.dropped_session_ids.clone(),
        }
    }
}

/// Timeline JSONL record: `{ts, event, detail}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineLine {
    pub ts: u64,
    pub event: String,
    pub detail: String,
}

impl From<&TimelineEvent> for TimelineLine {
    fn from(t: &TimelineEvent) -> Self {
        TimelineLine { ts: t.timestamp_secs, event: t.kind.to_string(), detail: t.detail.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RibSummary {
    pub profile: String,
    pub total_bytes: u64,
    pub peak_bytes: u64,
    pub alert_level: String,
    pub exhausted: bool,
    pub accepted_routes: u64,
    pub peak_routes: u64,
    pub rejected_announcements: u64,
    pub unknown_withdrawals: u64,
    pub dropped_sessions: Vec<String>,
}

impl RibSummary {
    pub fn new(profile: &RouterProfile, state: &RibState) -> Self {
        RibSummary {
            profile: profile.name.clone(),
            total_bytes: state.total_bytes,
            peak_bytes: state.peak_bytes,
            alert_level: state.alert_level.to_string(),
            exhausted: state.exhausted,
            accepted_routes: state.accepted_routes,
            peak_routes: state.peak_routes,
            rejected_announcements: state.rejected_announcements,
            unknown_withdrawals: state.unknown_withdrawals,
            dropped_sessions: state.dropped_sessions.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HintCountsFile {
    pub total: u64,
    pub as_set: u64,
    pub atomic: u64,
    pub aggregator: u64,
    pub any_hint: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HintTableFile {
    pub routes: HintCountsFile,
    pub paths: HintCountsFile,
    pub prefixes: HintCountsFile,
}

impl From<&HintTable> for HintTableFile {
    fn from(t: &HintTable) -> Self {
        let conv = |c: &kirinlab_core::deagg::HintCounts| HintCountsFile {
            total: c.total,
            as_set: c.as_set,
            atomic: c.atomic,
            aggregator: c.aggregator,
            any_hint: c.any_hint,
        };
        HintTableFile {
            routes: conv(&t.routes),
            paths: conv(&t.paths),
            prefixes: conv(&t.prefixes),
        }
    }
}

/// `funnels.json`: ASN to sorted funnel member list.
pub fn funnels_json(
    funnels: &BTreeMap<Asn, kirinlab_core::cones::ProviderFunnel>,
) -> BTreeMap<u32, Vec<u32>> {
    funnels
        .iter()
        .map(|(t, f)| (t.0, f.members.iter().map(|a| a.0).collect()))
        .collect()
}
