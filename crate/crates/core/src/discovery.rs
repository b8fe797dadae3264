//! Region discovery: walk a search pattern, and wherever the network's KKT
//! violation exceeds the tolerance, infer the adjacent active set from the
//! current region's mapping and grow the network.

use std::fmt;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::kkt_scalar;
use crate::model::{ClosedFormModel, RootTerm, SignRule};
use crate::oracle::{brute_force_solve, inequality_residuals, is_feasible, ORACLE_MAX_M2};
use crate::pattern::SearchPattern;
use crate::problem::{ActiveSet, MpQpProblem, ParameterPoint};
use crate::real::Real;
use crate::solve::{assemble_active_jacobian, factorize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Add,
    Drop,
}

/// A single-constraint change of the active set; `constraint` is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub kind: TransitionKind,
    pub constraint: usize,
}

impl Transition {
    pub fn apply(&self, set: &ActiveSet) -> ActiveSet {
        match self.kind {
            TransitionKind::Add => set.with_row(self.constraint - 1),
            TransitionKind::Drop => set.without_row(self.constraint - 1),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TransitionKind::Add => write!(f, "add {}", self.constraint),
            TransitionKind::Drop => write!(f, "drop {}", self.constraint),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvedPolicy {
    #[default]
    Abort,
    /// Log the point and continue with the next one.
    Skip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscoveryOptions {
    /// KKT tolerance; the precision default is used when unset.
    pub tol: Option<f64>,
    /// Root active set; the oracle is asked when unset.
    pub initial_active_set: Option<ActiveSet>,
    /// Ask the oracle whether a violating point is feasible before resolving it.
    pub check_feasibility: bool,
    pub max_halvings: usize,
    pub max_expansions_per_point: usize,
    pub on_unresolved: UnresolvedPolicy,
    pub sign_rule: SignRule,
    pub root_term: RootTerm,
    /// Undo an expansion when it makes an earlier passing point fail.
    pub guard_regressions: bool,
}

impl Default for DiscoveryOptions {
    fn default() -> Self {
        DiscoveryOptions {
            tol: None,
            initial_active_set: None,
            check_feasibility: true,
            max_halvings: 20,
            max_expansions_per_point: 64,
            on_unresolved: UnresolvedPolicy::Abort,
            sign_rule: SignRule::PerEntry,
            root_term: RootTerm::Rectified,
            guard_regressions: true,
        }
    }
}

/// One record of the discovery log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Init {
        region: usize,
        active_set: ActiveSet,
        kkt: f64,
    },
    Point {
        direction: usize,
        point: usize,
        kkt: f64,
        region: usize,
    },
    Expand {
        direction: usize,
        point: usize,
        kkt: f64,
        kind: TransitionKind,
        constraint: usize,
        region: usize,
        parent: usize,
        active_set: ActiveSet,
    },
    Rejected {
        direction: usize,
        point: usize,
        active_set: ActiveSet,
        parent: usize,
        broken: usize,
    },
    Infeasible {
        direction: usize,
        point: usize,
        kkt: f64,
    },
    Unresolved {
        direction: usize,
        point: usize,
        kkt: f64,
        reason: String,
    },
    EndDirection {
        direction: usize,
        points: usize,
    },
}

#[derive(Clone, Debug)]
pub struct DiscoveryOutcome<T: Real> {
    pub model: ClosedFormModel<T>,
    pub log: Vec<LogEvent>,
    pub tol: f64,
    pub passing_points: usize,
    pub infeasible_points: usize,
    /// `(direction, point)` pairs left unresolved under [`UnresolvedPolicy::Skip`].
    pub unresolved: Vec<(usize, usize)>,
    /// Active sets whose expansion was undone because it broke earlier points.
    pub rejected: Vec<ActiveSet>,
    pub oracle_calls: usize,
}

impl<T: Real> DiscoveryOutcome<T> {
    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("log serializes") + "\n")
            .collect()
    }
}

fn noise_floor<T: Real>() -> f64 {
    1e3 * T::epsilon().to_f64_lossless()
}

/// Candidate transitions out of `region` at `theta`, scored by normalized magnitude.
fn candidates<T: Real>(
    problem: &MpQpProblem,
    model: &ClosedFormModel<T>,
    region: usize,
    theta: &ParameterPoint,
) -> Vec<(Transition, f64)> {
    let sol = model.region_solution(region, theta).to_f64();
    let set = &model.regions()[region].active_set;
    let floor = noise_floor::<T>();
    let mut out = Vec::new();
    for (k, (r, s)) in inequality_residuals(problem, &sol.x, theta)
        .into_iter()
        .enumerate()
    {
        if !set.contains_row(k) && r / s > floor {
            out.push((
                Transition {
                    kind: TransitionKind::Add,
                    constraint: k + 1,
                },
                r / s,
            ));
        }
    }
    let mu_scale = 1.0 + sol.mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in set.rows() {
        let score = -sol.mu[k] / mu_scale;
        if score > floor {
            out.push((
                Transition {
                    kind: TransitionKind::Drop,
                    constraint: k + 1,
                },
                score,
            ));
        }
    }
    out
}

/// Whether `set` can carry a region: within the degrees of freedom left by the equalities and with a nonsingular Jacobian.
fn admissible(problem: &MpQpProblem, set: &ActiveSet) -> bool {
    set.len() + problem.m1() <= problem.n()
        && factorize(&assemble_active_jacobian::<f64>(problem, set)).is_ok()
}

fn strongest(cands: &[(Transition, f64)]) -> Option<Transition> {
    let mut best: Option<(Transition, f64)> = None;
    for &(t, s) in cands {
        let better = match best {
            None => true,
            Some((bt, bs)) => {
                s > bs
                    || (s == bs && t.kind == TransitionKind::Add && bt.kind == TransitionKind::Drop)
            }
        };
        if better {
            best = Some((t, s));
        }
    }
    best.map(|b| b.0)
}

/// Infers the transition out of `region` that explains a KKT violation at `theta`.
///
/// Add candidates are inequality rows violated by the region's primal map,
/// Drop candidates are active rows whose multiplier turned negative. Moves to
/// sets with a singular Jacobian are discarded. The largest normalized
/// magnitude wins, with Add preferred on exact ties.
pub fn identify_transition<T: Real>(
    problem: &MpQpProblem,
    model: &ClosedFormModel<T>,
    region: usize,
    theta: &ParameterPoint,
) -> Result<Transition> {
    if region >= model.len() {
        return Err(Error::UnknownRegion(region));
    }
    let from = &model.regions()[region].active_set;
    let cands: Vec<_> = candidates(problem, model, region, theta)
        .into_iter()
        .filter(|(t, _)| admissible(problem, &t.apply(from)))
        .collect();
    strongest(&cands).ok_or_else(|| Error::UnresolvableTransition {
        direction: 0,
        point: 0,
        reason: format!(
            "no constraint is violated and no multiplier is negative in region {region}"
        ),
    })
}

struct Walker<'a, T: Real> {
    problem: &'a MpQpProblem,
    model: ClosedFormModel<T>,
    opts: &'a DiscoveryOptions,
    tol: f64,
    log: Vec<LogEvent>,
    oracle_calls: usize,
    passed: Vec<ParameterPoint>,
    rejected: Vec<ActiveSet>,
}

enum Resolution {
    Resolved,
    Failed(String),
}

impl<T: Real> Walker<'_, T> {
    fn kkt(&self, theta: &ParameterPoint) -> f64 {
        kkt_scalar(self.problem, &self.model.forward(theta), theta)
    }

    fn passes(&self, theta: &ParameterPoint) -> bool {
        self.kkt(theta) <= self.tol
    }

    fn broken_points(&self) -> usize {
        self.passed.par_iter().filter(|t| !self.passes(t)).count()
    }

    fn resolve(
        &mut self,
        direction: usize,
        point: usize,
        lo: &ParameterPoint,
        hi: &ParameterPoint,
    ) -> Result<Resolution> {
        let mut lo = lo.clone();
        for _ in 0..self.opts.max_expansions_per_point {
            if self.passes(hi) {
                return Ok(Resolution::Resolved);
            }
            let mut a = lo.clone();
            let mut b = hi.clone();
            let mut region = self.model.classify(&a);
            let mut halvings = 0;
            let choice = loop {
                let from = &self.model.regions()[region].active_set;
                let cands: Vec<_> = candidates(self.problem, &self.model, region, &b)
                    .into_iter()
                    .filter(|(t, _)| admissible(self.problem, &t.apply(from)))
                    .collect();
                let next = strongest(&cands)
                    .map(|t| (t, t.apply(&self.model.regions()[region].active_set)));
                let fresh = next.as_ref().is_some_and(|(_, s)| {
                    self.model.find_region(s).is_none() && !self.rejected.contains(s)
                });
                if (cands.len() == 1 && fresh) || halvings >= self.opts.max_halvings {
                    break next.filter(|_| fresh);
                }
                let mid = a.lerp(&b, 0.5);
                if self.passes(&mid) {
                    a = mid;
                    region = self.model.classify(&a);
                } else {
                    b = mid;
                }
                halvings += 1;
            };
            let Some((transition, set)) = choice else {
                return Ok(Resolution::Failed(format!(
                    "no unregistered single-constraint neighbour of region {region} ({}) explains the violation after {halvings} halvings",
                    self.model.regions()[region].active_set
                )));
            };
            let kkt = self.kkt(&b);
            let id = self.model.expand(self.problem, region, &set, &b)?;
            if self.opts.guard_regressions {
                let broken = self.broken_points();
                if broken > 0 {
                    self.model.truncate(id);
                    warn!("direction {direction} point {point}: {set} from region {region} would break {broken} earlier points");
                    self.log.push(LogEvent::Rejected {
                        direction,
                        point,
                        active_set: set.clone(),
                        parent: region,
                        broken,
                    });
                    self.rejected.push(set.clone());
                    return Ok(Resolution::Failed(format!(
                        "expansion to {set} breaks {broken} earlier points"
                    )));
                }
            }
            debug!("direction {direction} point {point}: {transition} from region {region} gives region {id} {set}");
            self.log.push(LogEvent::Expand {
                direction,
                point,
                kkt,
                kind: transition.kind,
                constraint: transition.constraint,
                region: id,
                parent: region,
                active_set: set,
            });
            if self.passes(&b) {
                lo = b;
            }
        }
        Ok(Resolution::Failed("expansion limit reached".into()))
    }
}

/// Grows a closed-form model over `pattern`, starting from the region containing `theta0`.
///
/// The oracle identifies the root region; every further region is inferred
/// from the mapping of the region it borders. When feasibility checking is on,
/// the oracle is also consulted at violating points to stop a direction at the
/// edge of the feasible set.
pub fn discover<T: Real>(
    problem: &MpQpProblem,
    theta0: &ParameterPoint,
    pattern: &SearchPattern,
    opts: &DiscoveryOptions,
) -> Result<DiscoveryOutcome<T>> {
    theta0.check(problem)?;
    pattern.validate(problem)?;
    let tol = opts.tol.unwrap_or(T::PRECISION.default_tol());
    if !(tol > 0.0) {
        return Err(Error::InvalidPattern(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let oracle_ok = problem.m2() <= ORACLE_MAX_M2;
    let mut oracle_calls = 0;
    let root = match &opts.initial_active_set {
        Some(s) => s.clone(),
        None => {
            oracle_calls += 1;
            match brute_force_solve(problem, theta0) {
                Ok(s) => s.active_set,
                Err(Error::Infeasible) => return Err(Error::InfeasibleStart),
                Err(e) => return Err(e),
            }
        }
    };
    let model = ClosedFormModel::<T>::new(problem, &root, theta0, opts.sign_rule)?
        .with_root_term(opts.root_term);
    let mut w = Walker {
        problem,
        model,
        opts,
        tol,
        log: Vec::new(),
        oracle_calls,
        passed: Vec::new(),
        rejected: Vec::new(),
    };
    let k0 = w.kkt(theta0);
    if k0 > tol {
        return Err(Error::InfeasibleStart);
    }
    info!("root region {root} at theta0, kkt {k0:.3e}");
    w.log.push(LogEvent::Init {
        region: 0,
        active_set: root,
        kkt: k0,
    });

    let (mut passing, mut infeasible) = (0, 0);
    let mut unresolved = Vec::new();
    for (di, dir) in pattern.directions.iter().enumerate() {
        let mut lo: Option<ParameterPoint> = None;
        let mut visited = 0;
        for pi in 0..=dir.max_steps {
            let theta = dir.point(pi);
            visited += 1;
            let kkt = w.kkt(&theta);
            if kkt <= tol {
                passing += 1;
                w.log.push(LogEvent::Point {
                    direction: di,
                    point: pi,
                    kkt,
                    region: w.model.classify(&theta),
                });
                w.passed.push(theta.clone());
                lo = Some(theta);
                continue;
            }
            if opts.check_feasibility && oracle_ok {
                w.oracle_calls += 1;
                if !is_feasible(problem, &theta) {
                    infeasible += 1;
                    w.log.push(LogEvent::Infeasible {
                        direction: di,
                        point: pi,
                        kkt,
                    });
                    break;
                }
            }
            let from = lo.clone().unwrap_or_else(|| theta0.clone());
            match w.resolve(di, pi, &from, &theta)? {
                Resolution::Resolved => {
                    passing += 1;
                    let kkt = w.kkt(&theta);
                    w.log.push(LogEvent::Point {
                        direction: di,
                        point: pi,
                        kkt,
                        region: w.model.classify(&theta),
                    });
                    w.passed.push(theta.clone());
                    lo = Some(theta);
                }
                Resolution::Failed(reason) => {
                    warn!("direction {di} point {pi}: {reason}");
                    w.log.push(LogEvent::Unresolved {
                        direction: di,
                        point: pi,
                        kkt,
                        reason: reason.clone(),
                    });
                    match opts.on_unresolved {
                        UnresolvedPolicy::Abort => {
                            return Err(Error::UnresolvableTransition {
                                direction: di,
                                point: pi,
                                reason,
                            });
                        }
                        UnresolvedPolicy::Skip => unresolved.push((di, pi)),
                    }
                }
            }
        }
        w.log.push(LogEvent::EndDirection {
            direction: di,
            points: visited,
        });
    }

    assign_witnesses(&mut w, pattern);
    info!("discovery finished with {} regions", w.model.len());
    Ok(DiscoveryOutcome {
        model: w.model,
        log: w.log,
        tol,
        passing_points: passing,
        infeasible_points: infeasible,
        unresolved,
        rejected: w.rejected,
        oracle_calls: w.oracle_calls,
    })
}

/// Moves each region's witness to the first pattern point the final network assigns to it.
fn assign_witnesses<T: Real>(w: &mut Walker<'_, T>, pattern: &SearchPattern) {
    let mut assigned = vec![false; w.model.len()];
    assigned[0] = true;
    for dir in &pattern.directions {
        for theta in dir.points() {
            if assigned.iter().all(|&a| a) {
                return;
            }
            let r = w.model.classify(&theta);
            if !assigned[r] && w.passes(&theta) {
                assigned[r] = true;
                w.model.set_witness(r, theta);
            }
        }
    }
}

/// A pair of consecutive sweep points whose regions differ by more than one constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionViolation {
    pub direction: usize,
    pub point: usize,
    pub from: ActiveSet,
    pub to: ActiveSet,
    /// More constraints are tight at the crossing than there are degrees of
    /// freedom, so linear independence of the active rows fails there.
    pub degenerate: bool,
}

impl TransitionViolation {
    fn new(
        problem: &MpQpProblem,
        direction: usize,
        point: usize,
        from: ActiveSet,
        to: ActiveSet,
    ) -> Self {
        let tight = (from.len() + to.len() + from.symmetric_difference(&to).len()) / 2;
        let degenerate = tight + problem.m1() > problem.n();
        TransitionViolation {
            direction,
            point,
            from,
            to,
            degenerate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionAudit {
    pub pairs_checked: usize,
    pub region_changes: usize,
    /// Changes that looked like multi-constraint jumps until the step was halved.
    pub resolved_by_halving: usize,
    pub violations: Vec<TransitionViolation>,
}

impl TransitionAudit {
    /// Violations at crossings where the active rows stay linearly independent.
    pub fn regular_violations(&self) -> usize {
        self.violations.iter().filter(|v| !v.degenerate).count()
    }

    pub fn degenerate_violations(&self) -> usize {
        self.violations.iter().filter(|v| v.degenerate).count()
    }
}

/// Checks that consecutive region changes along every direction swap a single constraint.
///
/// A jump of two or more constraints between neighbouring points is bisected up
/// to `max_halvings` times; it counts as a violation only if a multi-constraint
/// jump survives at the finest step.
pub fn audit_transitions<T: Real>(
    problem: &MpQpProblem,
    model: &ClosedFormModel<T>,
    pattern: &SearchPattern,
    tol: f64,
    max_halvings: usize,
) -> TransitionAudit {
    let mut audit = TransitionAudit::default();
    let passes = |t: &ParameterPoint| kkt_scalar(problem, &model.forward(t), t) <= tol;
    let set_of = |t: &ParameterPoint| model.regions()[model.classify(t)].active_set.clone();
    for (di, dir) in pattern.directions.iter().enumerate() {
        let mut prev: Option<(ParameterPoint, ActiveSet)> = None;
        for pi in 0..=dir.max_steps {
            let theta = dir.point(pi);
            if !passes(&theta) {
                prev = None;
                continue;
            }
            let set = set_of(&theta);
            if let Some((pt, ps)) = &prev {
                audit.pairs_checked += 1;
                if ps != &set {
                    audit.region_changes += 1;
                    if ps.symmetric_difference(&set).len() > 1 {
                        match refine(&|t| Some(set_of(t)), pt, ps, &theta, &set, max_halvings) {
                            Ok(()) => audit.resolved_by_halving += 1,
                            Err((from, to)) => {
                                warn!("direction {di} point {pi}: region jump {from} -> {to}");
                                audit
                                    .violations
                                    .push(TransitionViolation::new(problem, di, pi, from, to));
                            }
                        }
                    }
                }
            }
            prev = Some((theta, set));
        }
    }
    audit
}

/// Same audit against the oracle's active sets, i.e. the problem's own
/// transition structure along the pattern rather than the model's.
///
/// Infeasible points break the chain. Midpoints the oracle cannot solve are
/// left unrefined and reported as violations.
pub fn audit_oracle_transitions(
    problem: &MpQpProblem,
    pattern: &SearchPattern,
    max_halvings: usize,
) -> Result<TransitionAudit> {
    if problem.m2() > ORACLE_MAX_M2 {
        return Err(Error::OracleTooLarge {
            m2: problem.m2(),
            limit: ORACLE_MAX_M2,
        });
    }
    let set_of = |t: &ParameterPoint| brute_force_solve(problem, t).ok().map(|o| o.active_set);
    let mut audit = TransitionAudit::default();
    for (di, dir) in pattern.directions.iter().enumerate() {
        let sets: Vec<Option<ActiveSet>> = (0..=dir.max_steps)
            .into_par_iter()
            .map(|pi| set_of(&dir.point(pi)))
            .collect();
        for pi in 1..sets.len() {
            let (Some(ps), Some(set)) = (&sets[pi - 1], &sets[pi]) else {
                continue;
            };
            audit.pairs_checked += 1;
            if ps == set {
                continue;
            }
            audit.region_changes += 1;
            if ps.symmetric_difference(set).len() > 1 {
                match refine(
                    &set_of,
                    &dir.point(pi - 1),
                    ps,
                    &dir.point(pi),
                    set,
                    max_halvings,
                ) {
                    Ok(()) => audit.resolved_by_halving += 1,
                    Err((from, to)) => {
                        debug!("direction {di} point {pi}: oracle active set jumps {from} -> {to}");
                        audit
                            .violations
                            .push(TransitionViolation::new(problem, di, pi, from, to));
                    }
                }
            }
        }
    }
    Ok(audit)
}

fn refine(
    set_of: &dyn Fn(&ParameterPoint) -> Option<ActiveSet>,
    a: &ParameterPoint,
    sa: &ActiveSet,
    b: &ParameterPoint,
    sb: &ActiveSet,
    depth: usize,
) -> std::result::Result<(), (ActiveSet, ActiveSet)> {
    if sa.symmetric_difference(sb).len() <= 1 {
        return Ok(());
    }
    if depth == 0 {
        return Err((sa.clone(), sb.clone()));
    }
    let mid = a.lerp(b, 0.5);
    let Some(sm) = set_of(&mid) else {
        return Err((sa.clone(), sb.clone()));
    };
    refine(set_of, a, sa, &mid, &sm, depth - 1)?;
    refine(set_of, &mid, &sm, b, sb, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strongest_prefers_add_on_ties() {
        let add = Transition {
            kind: TransitionKind::Add,
            constraint: 2,
        };
        let drop = Transition {
            kind: TransitionKind::Drop,
            constraint: 1,
        };
        assert_eq!(strongest(&[(drop, 0.5), (add, 0.5)]), Some(add));
        assert_eq!(strongest(&[(drop, 0.6), (add, 0.5)]), Some(drop));
        assert_eq!(strongest(&[]), None);
    }

    #[test]
    fn transition_applies_to_sets() {
        let s = ActiveSet::new(vec![3, 4], 6).unwrap();
        assert_eq!(
            Transition {
                kind: TransitionKind::Add,
                constraint: 1
            }
            .apply(&s)
            .to_string(),
            "{1,3,4}"
        );
        assert_eq!(
            Transition {
                kind: TransitionKind::Drop,
                constraint: 3
            }
            .apply(&s)
            .to_string(),
            "{4}"
        );
    }

    #[test]
    fn violation_degeneracy_counts_union_against_freedom() {
        let p = crate::fixtures::transport_2d();
        let set = |v: &[usize]| ActiveSet::new(v.to_vec(), 6).unwrap();
        assert!(!TransitionViolation::new(&p, 0, 0, set(&[3, 4]), set(&[1, 5])).degenerate);
        assert!(TransitionViolation::new(&p, 0, 0, set(&[1, 3, 4]), set(&[3, 4, 5, 6])).degenerate);
    }
}
