//! 0/1 integer linear programs for the two attack scenarios, plus the
//! solvers that handle them at desk scale.
//!
//! The transit scenario maximizes obtainable sessions subject to caps on
//! chosen providers and peering LANs, coupling selection variables to
//! session variables through big-M constraints. The peering scenario
//! minimizes the number of peering LANs needed to push at least `N` ASes to
//! a session-multiplied funneling degree of at least `R`.
//!
//! Two solvers share one model representation: an exhaustive enumerator
//! (the exactness oracle) and a depth-first branch-and-bound with unit
//! propagation and an objective bound, which supports a wall-clock budget
//! and returns its best incumbent on timeout.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cones::SmfdMatrix;
use crate::topology::SessionMatrix;

/// Default big-M coupling constant; orders of magnitude above any session
/// matrix this tool is meant for.
pub const DEFAULT_BIG_M: i64 = 10_000_000_000;

/// Default solver budget: three hours.
pub const DEFAULT_TIME_LIMIT_SECS: f64 = 10_800.0;

/// Default cap on exhaustive enumeration.
pub const DEFAULT_BRUTE_FORCE_MAX_VARS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IlpError {
    /// big-M must exceed the sum of all session counts.
    BigMTooSmall { big_m: i64, total: u128 },
    /// Too many variables for exhaustive enumeration.
    TooLarge { vars: usize, max_vars: usize },
    /// Sweep points mix scenarios or solution shapes.
    IncomparableSweep,
}

impl fmt::Display for IlpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IlpError::BigMTooSmall { big_m, total } => {
                write!(f, "big-M {big_m} does not exceed the session total {total}")
            }
            IlpError::TooLarge { vars, max_vars } => {
                write!(f, "{vars} variables exceed the enumeration cap of {max_vars}")
            }
            IlpError::IncomparableSweep => write!(f, "sweep points are not comparable"),
        }
    }
}

impl core::error::Error for IlpError {}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
        })
    }
}

/// A linear constraint over binary variables, `sum(coeff * var) cmp rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub terms: Vec<(usize, i64)>,
    pub cmp: Cmp,
    pub rhs: i64,
}

/// Scenario tag and parameter echo carried by built models.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SweepParams {
    Transit { l_max: u64, p_max: u64 },
    Peering { n: u64, r: u64 },
}

impl SweepParams {
    pub fn scenario(&self) -> &'static str {
        match self {
            SweepParams::Transit { .. } => "transit",
            SweepParams::Peering { .. } => "peering",
        }
    }

    pub fn values(&self) -> (u64, u64) {
        match *self {
            SweepParams::Transit { l_max, p_max } => (l_max, p_max),
            SweepParams::Peering { n, r } => (n, r),
        }
    }
}

/// A 0/1 integer linear program: named binary variables, one linear
/// objective, and linear constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IlpModel {
    vars: Vec<String>,
    sense: Sense,
    objective: Vec<(usize, i64)>,
    constraints: Vec<Constraint>,
    pub scenario: Option<SweepParams>,
}

impl IlpModel {
    pub fn new(sense: Sense) -> Self {
        IlpModel {
            vars: Vec::new(),
            sense,
            objective: Vec::new(),
            constraints: Vec::new(),
            scenario: None,
        }
    }

    pub fn add_var(&mut self, name: String) -> usize {
        debug_assert!(!self.vars.contains(&name), "duplicate variable {name}");
        self.vars.push(name);
        self.vars.len() - 1
    }

    pub fn set_objective_term(&mut self, var: usize, coeff: i64) {
        debug_assert!(var < self.vars.len());
        if coeff != 0 {
            self.objective.push((var, coeff));
        }
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, i64)>, cmp: Cmp, rhs: i64) {
        debug_assert!(terms.iter().all(|(v, _)| *v < self.vars.len()));
        let terms: Vec<(usize, i64)> = terms.into_iter().filter(|(_, c)| *c != 0).collect();
        self.constraints.push(Constraint { terms, cmp, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_name(&self, idx: usize) -> &str {
        &self.vars[idx]
    }

    pub fn var_names(&self) -> &[String] {
        &self.vars
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[(usize, i64)] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Objective value at a full assignment.
    pub fn objective_value(&self, assignment: &[bool]) -> i64 {
        self.objective
            .iter()
            .map(|&(v, c)| if assignment[v] { c } else { 0 })
            .sum()
    }

    /// True when the assignment satisfies every constraint.
    pub fn is_feasible(&self, assignment: &[bool]) -> bool {
        assignment.len() == self.vars.len()
            && self.constraints.iter().all(|con| {
                let lhs: i64 =
                    con.terms.iter().map(|&(v, c)| if assignment[v] { c } else { 0 }).sum();
                match con.cmp {
                    Cmp::Le => lhs <= con.rhs,
                    Cmp::Ge => lhs >= con.rhs,
                }
            })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    FeasibleTimeout,
    Infeasible,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::FeasibleTimeout => "feasible_timeout",
            Status::Infeasible => "infeasible",
        })
    }
}

/// Solver output. When the status is not `Infeasible`, the assignment
/// satisfies every constraint and `objective_value` is the objective
/// evaluated at it.
#[derive(Clone, Debug, PartialEq)]
pub struct IlpSolution {
    pub assignment: Vec<bool>,
    pub objective_value: i64,
    pub status: Status,
    pub wall_time_secs: f64,
}

impl IlpSolution {
    /// Names of variables set to one, in declaration order.
    pub fn selected<'m>(&self, model: &'m IlpModel) -> Vec<&'m str> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .map(|(i, _)| model.var_name(i))
            .collect()
    }
}

/// Builds the transit-scenario model over a session matrix: maximize the
/// total sessions `sum(omega * d)` subject to at most `l_max` chosen LANs,
/// at most `p_max` chosen providers, and big-M constraints zeroing each
/// AS row / LAN column unless its selector is on.
pub fn build_transit_model(
    sessions: &SessionMatrix,
    l_max: u64,
    p_max: u64,
    big_m: i64,
) -> Result<IlpModel, IlpError> {
    let total: u128 = sessions.nonzero().map(|(_, _, w)| u128::from(w)).sum();
    if big_m <= 0 || (big_m as u128) <= total {
        return Err(IlpError::BigMTooSmall { big_m, total });
    }
    let mut model = IlpModel::new(Sense::Maximize);
    model.scenario = Some(SweepParams::Transit { l_max, p_max });

    let mut d_vars: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let asns = sessions.asns();
    let lans = sessions.lan_ids();
    for (ai, a) in asns.iter().enumerate() {
        for (li, l) in lans.iter().enumerate() {
            if sessions.omega(*a, l) > 0 {
                let v = model.add_var(format!("d_{a}_{l}"));
                d_vars.insert((ai, li), v);
            }
        }
    }
    let cl_vars: Vec<usize> =
        lans.iter().map(|l| model.add_var(format!("cl_{l}"))).collect();
    let cp_vars: Vec<usize> =
        asns.iter().map(|a| model.add_var(format!("cp_{a}"))).collect();

    for (&(ai, li), &v) in &d_vars {
        let w = sessions.omega(asns[ai], &lans[li]);
        model.set_objective_term(v, i64::try_from(w).expect("session count fits i64"));
    }

    model.add_constraint(
        cl_vars.iter().map(|&v| (v, 1)).collect(),
        Cmp::Le,
        i64::try_from(l_max).unwrap_or(i64::MAX),
    );
    model.add_constraint(
        cp_vars.iter().map(|&v| (v, 1)).collect(),
        Cmp::Le,
        i64::try_from(p_max).unwrap_or(i64::MAX),
    );

    for (ai, a) in asns.iter().enumerate() {
        let mut terms: Vec<(usize, i64)> = Vec::new();
        for (li, l) in lans.iter().enumerate() {
            if let Some(&v) = d_vars.get(&(ai, li)) {
                terms.push((v, i64::try_from(sessions.omega(*a, l)).unwrap()));
            }
        }
        if terms.is_empty() {
            continue;
        }
        terms.push((cp_vars[ai], -big_m));
        model.add_constraint(terms, Cmp::Le, 0);
    }
    for (li, l) in lans.iter().enumerate() {
        let mut terms: Vec<(usize, i64)> = Vec::new();
        for (ai, a) in asns.iter().enumerate() {
            if let Some(&v) = d_vars.get(&(ai, li)) {
                terms.push((v, i64::try_from(sessions.omega(*a, l)).unwrap()));
            }
        }
        if terms.is_empty() {
            continue;
        }
        terms.push((cl_vars[li], -big_m));
        model.add_constraint(terms, Cmp::Le, 0);
    }
    Ok(model)
}

/// Tight alternative to [`DEFAULT_BIG_M`]: one more than the session total.
pub fn tight_big_m(sessions: &SessionMatrix) -> i64 {
    let total: u128 = sessions.nonzero().map(|(_, _, w)| u128::from(w)).sum();
    i64::try_from(total + 1).unwrap_or(i64::MAX)
}

/// Builds the peering-scenario model over an SMFD matrix: minimize the
/// number of joined LANs `sum(d)` such that at least `n` ASes have a
/// combined SMFD of at least `r` across the chosen LANs. ASes whose SMFD
/// row is all zero get no coverage variable. An unsatisfiable `n` yields an
/// infeasible model, which is a legal solver outcome rather than an error.
pub fn build_peering_model(smfd: &SmfdMatrix, n: u64, r: u64) -> IlpModel {
    let mut model = IlpModel::new(Sense::Minimize);
    model.scenario = Some(SweepParams::Peering { n, r });

    let lans = smfd.lan_ids().to_vec();
    let d_vars: Vec<usize> =
        lans.iter().map(|l| model.add_var(format!("d_{l}"))).collect();
    for &v in &d_vars {
        model.set_objective_term(v, 1);
    }

    let covered = smfd.nonzero_asns();
    let mut c_vars = Vec::with_capacity(covered.len());
    for a in &covered {
        c_vars.push(model.add_var(format!("c_{a}")));
    }

    model.add_constraint(
        c_vars.iter().map(|&v| (v, 1)).collect(),
        Cmp::Ge,
        i64::try_from(n).unwrap_or(i64::MAX),
    );

    let r_i64 = i64::try_from(r).unwrap_or(i64::MAX);
    for (a, &cv) in covered.iter().zip(&c_vars) {
        let mut terms: Vec<(usize, i64)> = Vec::new();
        for (li, l) in lans.iter().enumerate() {
            let f = smfd.value(*a, l);
            if f > 0 {
                terms.push((d_vars[li], i64::try_from(f).unwrap()));
            }
        }
        terms.push((cv, -r_i64));
        model.add_constraint(terms, Cmp::Ge, 0);
    }
    model
}

/// Exhaustively enumerates all assignments (gray-code order, incremental
/// evaluation) and returns the optimum, breaking objective ties toward the
/// lexicographically smallest assignment in variable order. The exactness
/// oracle for [`branch_and_bound_solve`].
pub fn brute_force_solve(model: &IlpModel, max_vars: usize) -> Result<IlpSolution, IlpError> {
    let n = model.num_vars();
    if n > max_vars {
        return Err(IlpError::TooLarge { vars: n, max_vars });
    }

    let mut var_cons: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    for (ci, con) in model.constraints().iter().enumerate() {
        for &(v, c) in &con.terms {
            var_cons[v].push((ci, c));
        }
    }
    let mut obj_coeff = vec![0i64; n];
    for &(v, c) in model.objective() {
        obj_coeff[v] += c;
    }

    let mut lhs: Vec<i64> = vec![0; model.constraints().len()];
    let satisfied = |lhs: i64, con: &Constraint| match con.cmp {
        Cmp::Le => lhs <= con.rhs,
        Cmp::Ge => lhs >= con.rhs,
    };
    let mut violations = model
        .constraints()
        .iter()
        .filter(|con| !satisfied(0, con))
        .count();

    let mut assignment = vec![false; n];
    let mut objective = 0i64;
    let mut best: Option<(i64, Vec<bool>)> = None;

    let better = |obj: i64, assignment: &[bool], best: &Option<(i64, Vec<bool>)>| match best {
        None => true,
        Some((b, a)) => match model.sense() {
            Sense::Maximize if obj != *b => obj > *b,
            Sense::Minimize if obj != *b => obj < *b,
            _ => assignment < a.as_slice(),
        },
    };

    if violations == 0 {
        best = Some((0, assignment.clone()));
    }

    for k in 1u64..(1u64 << n) {
        let v = k.trailing_zeros() as usize;
        let now_set = !assignment[v];
        assignment[v] = now_set;
        let sign = if now_set { 1 } else { -1 };
        objective += sign * obj_coeff[v];
        for &(ci, c) in &var_cons[v] {
            let was = satisfied(lhs[ci], &model.constraints()[ci]);
            lhs[ci] += sign * c;
            let is = satisfied(lhs[ci], &model.constraints()[ci]);
            match (was, is) {
                (true, false) => violations += 1,
                (false, true) => violations -= 1,
                _ => {}
            }
        }
        if violations == 0 && better(objective, &assignment, &best) {
            best = Some((objective, assignment.clone()));
        }
    }

    Ok(match best {
        Some((objective_value, assignment)) => IlpSolution {
            assignment,
            objective_value,
            status: Status::Optimal,
            wall_time_secs: 0.0,
        },
        None => IlpSolution {
            assignment: Vec::new(),
            objective_value: 0,
            status: Status::Infeasible,
            wall_time_secs: 0.0,
        },
    })
}

/// Depth-first branch-and-bound.
///
/// Branching follows the largest absolute coefficient anywhere in the model
/// (objective or constraints), breaking ties by variable name; the preferred
/// value is 1 when maximizing and 0 when minimizing. Each node runs unit
/// propagation (forced assignments from constraint interval bounds) and is
/// pruned against an objective bound from the free variables' best possible
/// contributions.
///
/// `clock` reports elapsed seconds; once it reaches `time_limit_secs` the
/// best incumbent is returned as `FeasibleTimeout`. The search never stops
/// before it holds an incumbent or has proven infeasibility, so a zero
/// budget still yields the trivial all-zeros incumbent whenever that is
/// feasible. Exhausting the space yields `Optimal` or `Infeasible`.
pub fn branch_and_bound_solve(
    model: &IlpModel,
    time_limit_secs: f64,
    clock: &mut dyn FnMut() -> f64,
) -> IlpSolution {
    let n = model.num_vars();
    let mut solver = BnB::new(model);

    // Free incumbent: the all-zeros assignment, when feasible.
    let zeros = vec![false; n];
    if model.is_feasible(&zeros) {
        solver.best = Some((0, zeros));
    }

    if solver.best.is_none() || clock() < time_limit_secs {
        solver.search(model, time_limit_secs, clock);
    }

    let wall_time_secs = clock();
    match solver.best {
        Some((objective_value, assignment)) => IlpSolution {
            assignment,
            objective_value,
            status: if solver.exhausted { Status::Optimal } else { Status::FeasibleTimeout },
            wall_time_secs,
        },
        None => IlpSolution {
            assignment: Vec::new(),
            objective_value: 0,
            status: Status::Infeasible,
            wall_time_secs,
        },
    }
}

struct BnB {
    sense: Sense,
    var_cons: Vec<Vec<(usize, i64)>>,
    obj_coeff: Vec<i64>,
    fixed: Vec<i64>,
    pos_free: Vec<i64>,
    neg_free: Vec<i64>,
    obj_fixed: i64,
    obj_pos_free: i64,
    obj_neg_free: i64,
    assignment: Vec<Option<bool>>,
    trail: Vec<usize>,
    n_assigned: usize,
    branch_order: Vec<usize>,
    groups: Vec<LinkGroup>,
    best: Option<(i64, Vec<bool>)>,
    exhausted: bool,
}

struct Frame {
    var: usize,
    mark: usize,
    flipped: bool,
}

/// A budgeted selector family: a cardinality constraint `sum(sel) <= rhs`
/// whose selectors each gate a payload of objective-carrying variables
/// through a `sum(payload) - M*sel <= 0` coupling. Grants a much tighter
/// maximization bound than the free-coefficient box: at most `rhs`
/// selectors can open, so at most the `rhs` best payload pots count.
struct LinkGroup {
    budget_rhs: i64,
    /// (selector var, payload vars with positive objective coefficients).
    selectors: Vec<(usize, Vec<usize>)>,
}

/// Detects budgeted selector families in a generic model.
fn detect_link_groups(model: &IlpModel, obj_coeff: &[i64]) -> Vec<LinkGroup> {
    if model.sense() != Sense::Maximize {
        return Vec::new();
    }
    // Selector -> payload from coupling constraints: Le, rhs 0, exactly one
    // negative term, all other terms positive.
    let mut payload_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for con in model.constraints() {
        if con.cmp != Cmp::Le || con.rhs != 0 {
            continue;
        }
        let negatives: Vec<usize> =
            con.terms.iter().filter(|(_, c)| *c < 0).map(|(v, _)| *v).collect();
        if negatives.len() != 1 || con.terms.iter().any(|(_, c)| *c == 0) {
            continue;
        }
        let payload: Vec<usize> = con
            .terms
            .iter()
            .filter(|(v, c)| *c > 0 && obj_coeff[*v] > 0)
            .map(|(v, _)| *v)
            .collect();
        // One coupling constraint per selector; bail out on a second.
        if payload_of.insert(negatives[0], payload).is_some() {
            return Vec::new();
        }
    }
    let mut groups = Vec::new();
    for con in model.constraints() {
        if con.cmp != Cmp::Le || con.rhs < 0 || con.terms.is_empty() {
            continue;
        }
        if !con.terms.iter().all(|(v, c)| *c == 1 && payload_of.contains_key(v)) {
            continue;
        }
        // Within one group every payload var may be gated only once, or
        // the bound would double-count it.
        let mut seen = BTreeMap::new();
        let mut ok = true;
        for (v, _) in &con.terms {
            for p in &payload_of[v] {
                if seen.insert(*p, ()).is_some() {
                    ok = false;
                }
            }
        }
        if !ok {
            continue;
        }
        groups.push(LinkGroup {
            budget_rhs: con.rhs,
            selectors: con
                .terms
                .iter()
                .map(|(v, _)| (*v, payload_of[v].clone()))
                .collect(),
        });
    }
    groups
}

impl BnB {
    fn new(model: &IlpModel) -> Self {
        let n = model.num_vars();
        let mut var_cons: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        for (ci, con) in model.constraints().iter().enumerate() {
            for &(v, c) in &con.terms {
                var_cons[v].push((ci, c));
            }
        }
        let mut obj_coeff = vec![0i64; n];
        for &(v, c) in model.objective() {
            obj_coeff[v] += c;
        }
        let mut pos_free = vec![0i64; model.constraints().len()];
        let mut neg_free = vec![0i64; model.constraints().len()];
        for (ci, con) in model.constraints().iter().enumerate() {
            for &(_, c) in &con.terms {
                if c > 0 {
                    pos_free[ci] += c;
                } else {
                    neg_free[ci] += c;
                }
            }
        }
        let obj_pos_free = obj_coeff.iter().filter(|c| **c > 0).sum();
        let obj_neg_free = obj_coeff.iter().filter(|c| **c < 0).sum();

        let mut weight = vec![0i64; n];
        for (v, w) in weight.iter_mut().enumerate() {
            *w = obj_coeff[v].abs();
        }
        for con in model.constraints() {
            for &(v, c) in &con.terms {
                weight[v] = weight[v].max(c.abs());
            }
        }
        let mut branch_order: Vec<usize> = (0..n).collect();
        branch_order
            .sort_by(|&a, &b| weight[b].cmp(&weight[a]).then(model.var_name(a).cmp(model.var_name(b))));

        let groups = detect_link_groups(model, &obj_coeff);
        BnB {
            sense: model.sense(),
            var_cons,
            obj_coeff,
            fixed: vec![0; model.constraints().len()],
            pos_free,
            neg_free,
            obj_fixed: 0,
            obj_pos_free,
            obj_neg_free,
            assignment: vec![None; n],
            trail: Vec::new(),
            n_assigned: 0,
            branch_order,
            groups,
            best: None,
            exhausted: false,
        }
    }

    fn assign(&mut self, var: usize, value: bool) {
        self.assignment[var] = Some(value);
        self.trail.push(var);
        self.n_assigned += 1;
        for &(ci, c) in &self.var_cons[var] {
            if c > 0 {
                self.pos_free[ci] -= c;
            } else {
                self.neg_free[ci] -= c;
            }
            if value {
                self.fixed[ci] += c;
            }
        }
        let oc = self.obj_coeff[var];
        if oc > 0 {
            self.obj_pos_free -= oc;
        } else if oc < 0 {
            self.obj_neg_free -= oc;
        }
        if value {
            self.obj_fixed += oc;
        }
    }

    fn unassign(&mut self, var: usize) {
        let value = self.assignment[var].take().expect("unassign of free var");
        self.n_assigned -= 1;
        for &(ci, c) in &self.var_cons[var] {
            if c > 0 {
                self.pos_free[ci] += c;
            } else {
                self.neg_free[ci] += c;
            }
            if value {
                self.fixed[ci] -= c;
            }
        }
        let oc = self.obj_coeff[var];
        if oc > 0 {
            self.obj_pos_free += oc;
        } else if oc < 0 {
            self.obj_neg_free += oc;
        }
        if value {
            self.obj_fixed -= oc;
        }
    }

    /// Interval-based feasibility check plus forced assignments, to
    /// fixpoint. Returns false on conflict.
    fn propagate(&mut self, model: &IlpModel) -> bool {
        loop {
            let mut changed = false;
            for (ci, con) in model.constraints().iter().enumerate() {
                let min = self.fixed[ci] + self.neg_free[ci];
                let max = self.fixed[ci] + self.pos_free[ci];
                match con.cmp {
                    Cmp::Le if min > con.rhs => return false,
                    Cmp::Ge if max < con.rhs => return false,
                    _ => {}
                }
                for &(v, c) in &con.terms {
                    if self.assignment[v].is_some() {
                        continue;
                    }
                    let min = self.fixed[ci] + self.neg_free[ci];
                    let max = self.fixed[ci] + self.pos_free[ci];
                    match con.cmp {
                        Cmp::Le => {
                            if c > 0 && min + c > con.rhs {
                                self.assign(v, false);
                                changed = true;
                            } else if c < 0 && min - c > con.rhs {
                                self.assign(v, true);
                                changed = true;
                            }
                        }
                        Cmp::Ge => {
                            if c > 0 && max - c < con.rhs {
                                self.assign(v, true);
                                changed = true;
                            } else if c < 0 && max + c < con.rhs {
                                self.assign(v, false);
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// True when no completion of the current node can beat the incumbent.
    fn bound_pruned(&self, model: &IlpModel) -> bool {
        let Some((best, _)) = &self.best else { return false };
        match model.sense() {
            Sense::Maximize => {
                let mut ub = self.obj_fixed + self.obj_pos_free;
                for group in &self.groups {
                    if ub <= *best {
                        break;
                    }
                    ub = ub.min(self.group_bound(group));
                }
                ub <= *best
            }
            Sense::Minimize => self.obj_fixed + self.obj_neg_free >= *best,
        }
    }

    /// Upper bound through one selector family: payloads behind a selector
    /// fixed to zero contribute nothing, open selectors contribute fully,
    /// and of the undecided selectors only the best `budget` many count.
    fn group_bound(&self, group: &LinkGroup) -> i64 {
        let pot = |payload: &[usize]| -> i64 {
            payload
                .iter()
                .filter(|v| self.assignment[**v].is_none())
                .map(|v| self.obj_coeff[*v])
                .sum()
        };
        let mut budget = group.budget_rhs;
        let mut linked_free_total = 0i64;
        let mut open_contrib = 0i64;
        let mut candidate_pots: Vec<i64> = Vec::new();
        for (sel, payload) in &group.selectors {
            let p = pot(payload);
            linked_free_total += p;
            match self.assignment[*sel] {
                Some(true) => {
                    budget -= 1;
                    open_contrib += p;
                }
                Some(false) => {}
                None => candidate_pots.push(p),
            }
        }
        if budget < 0 {
            // Cardinality already violated; propagation will prune.
            return i64::MIN;
        }
        candidate_pots.sort_unstable_by(|a, b| b.cmp(a));
        let undecided_contrib: i64 = candidate_pots.iter().take(budget as usize).sum();
        let unlinked = self.obj_pos_free - linked_free_total;
        self.obj_fixed + unlinked + open_contrib + undecided_contrib
    }

    fn update_incumbent(&mut self) {
        let objective = self.obj_fixed;
        let improved = match &self.best {
            None => true,
            Some((b, _)) => match self.sense {
                Sense::Maximize => objective > *b,
                Sense::Minimize => objective < *b,
            },
        };
        if improved {
            let full: Vec<bool> =
                self.assignment.iter().map(|v| v.expect("full assignment")).collect();
            self.best = Some((objective, full));
        }
    }

    fn search(&mut self, model: &IlpModel, time_limit_secs: f64, clock: &mut dyn FnMut() -> f64) {
        let preferred = match model.sense() {
            Sense::Maximize => true,
            Sense::Minimize => false,
        };
        let mut frames: Vec<Frame> = Vec::new();
        let mut steps: u64 = 0;

        'search: loop {
            steps += 1;
            if steps.is_multiple_of(512) && self.best.is_some() && clock() >= time_limit_secs {
                return; // FeasibleTimeout
            }
            // Extend the current node: propagate, prune, record, or branch.
            if self.propagate(model) && !self.bound_pruned(model) {
                if self.n_assigned < self.assignment.len() {
                    let var = *self
                        .branch_order
                        .iter()
                        .find(|v| self.assignment[**v].is_none())
                        .expect("free variable exists");
                    frames.push(Frame { var, mark: self.trail.len(), flipped: false });
                    self.assign(var, preferred);
                    continue 'search;
                }
                self.update_incumbent();
                if clock() >= time_limit_secs {
                    return;
                }
            }
            // Backtrack to the deepest frame with an untried value.
            loop {
                let Some(top) = frames.last_mut() else {
                    self.exhausted = true;
                    return;
                };
                while self.trail.len() > top.mark {
                    let v = self.trail.pop().expect("trail non-empty");
                    self.unassign(v);
                }
                if !top.flipped {
                    top.flipped = true;
                    let var = top.var;
                    self.assign(var, !preferred);
                    continue 'search;
                }
                frames.pop();
            }
        }
    }
}

/// Copies results from optimal sweep points to dominated timed-out points.
///
/// Transit points are refined from optimal points with component-wise
/// smaller-or-equal (`l_max`, `p_max`) and a larger objective: any selection
/// feasible under tighter caps stays feasible when caps grow. Peering
/// points are refined from optimal points with component-wise
/// larger-or-equal (`n`, `r`) and a smaller LAN count: a selection that
/// pushes more ASes past a higher degree also satisfies the weaker demand.
/// Optimal entries are never overwritten.
pub fn refine_sweep(
    points: &[(SweepParams, IlpSolution)],
) -> Result<Vec<(SweepParams, IlpSolution)>, IlpError> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let transit = matches!(points[0].0, SweepParams::Transit { .. });
    if points
        .iter()
        .any(|(p, _)| matches!(p, SweepParams::Transit { .. }) != transit)
    {
        return Err(IlpError::IncomparableSweep);
    }

    let mut out: Vec<(SweepParams, IlpSolution)> = Vec::with_capacity(points.len());
    for (params, solution) in points {
        let mut refined = solution.clone();
        if solution.status == Status::FeasibleTimeout {
            for (src_params, src) in points {
                if src.status != Status::Optimal {
                    continue;
                }
                if src.assignment.len() != solution.assignment.len() {
                    return Err(IlpError::IncomparableSweep);
                }
                let (pa, pb) = params.values();
                let (sa, sb) = src_params.values();
                let (dominates, better) = if transit {
                    (sa <= pa && sb <= pb, src.objective_value > refined.objective_value)
                } else {
                    (sa >= pa && sb >= pb, src.objective_value < refined.objective_value)
                };
                if dominates && better {
                    refined = IlpSolution {
                        assignment: src.assignment.clone(),
                        objective_value: src.objective_value,
                        status: Status::FeasibleTimeout,
                        wall_time_secs: solution.wall_time_secs,
                    };
                }
            }
        }
        out.push((*params, refined));
    }
    Ok(out)
}
