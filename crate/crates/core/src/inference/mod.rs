//! Exact constrained inference over one event.
//!
//! The objective for trigger type `E` and roles `r_1..r_m` is
//!
//! ```text
//! lambda * max(m, 1) * f(t, E) + sum_j f(a_j, r_j)
//! ```
//!
//! subject to: one type per trigger (C1), one role per argument (C2),
//! distinct roles within an event (C3, optional), every role belongs to the
//! trigger's event type (C4), and every argument's entity type is admissible
//! for its role (C5).
//!
//! [`solve`] fixes each candidate event type in turn; what remains is a
//! maximum-weight bipartite assignment of arguments to that type's roles,
//! solved with the Hungarian algorithm. [`brute_force_solve`] enumerates every
//! assignment and is the reference the solver is tested against.
//!
//! Both share one selection rule, so they agree on ties:
//!
//! 1. With unassigned arguments allowed, only assignments using the fewest
//!    `NONE` roles (over all event types) compete.
//! 2. The event type is the smallest id whose best objective is within
//!    [`tie_tolerance`] of the overall best.
//! 3. The roles are the lexicographically smallest sequence (argument order,
//!    `NONE` after every real role) whose argument sum is within
//!    [`tie_tolerance`] of that event type's best argument sum.

mod assignment;
mod check;
mod oracle;

pub use check::{check_constraints, Violation};
pub use oracle::{brute_force_solve, BRUTE_FORCE_LIMIT};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mentions::EventMention;
use crate::ontology::Ontology;
use crate::scoring::{rank_with_first, ScoreMatrix};

pub const DEFAULT_LAMBDA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Trigger weight; must be positive.
    pub lambda: f64,
    pub enforce_distinct_roles: bool,
    pub allow_unassigned_arguments: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            lambda: DEFAULT_LAMBDA,
            enforce_distinct_roles: true,
            allow_unassigned_arguments: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.lambda.is_finite() && self.lambda > 0.0 {
            Ok(())
        } else {
            Err(InferenceError::InvalidLambda(self.lambda))
        }
    }
}

/// The constraint families of the inference problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintClass {
    /// C1: exactly one type per trigger.
    OneTypePerTrigger,
    /// C2: exactly one role per argument.
    OneRolePerArgument,
    /// C3: arguments of one event take different roles.
    DistinctRoles,
    /// C4: roles must belong to the chosen event type.
    EventRoleCompatibility,
    /// C5: argument entity types must be admissible for their roles.
    EntityType,
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintClass::OneTypePerTrigger => "C1 (one type per trigger)",
            ConstraintClass::OneRolePerArgument => "C2 (one role per argument)",
            ConstraintClass::DistinctRoles => "C3 (distinct roles)",
            ConstraintClass::EventRoleCompatibility => "C4 (event/role compatibility)",
            ConstraintClass::EntityType => "C5 (entity type)",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("event \"{event_id}\" is infeasible: no assignment satisfies {}", join(.binding))]
    Infeasible {
        event_id: String,
        binding: Vec<ConstraintClass>,
    },
    #[error("event \"{event_id}\": score matrix has no score for {what} \"{id}\"")]
    MissingScore {
        event_id: String,
        what: &'static str,
        id: String,
    },
    #[error("event \"{event_id}\": score matrix has {found} argument rows for {expected} arguments")]
    ArgumentCountMismatch {
        event_id: String,
        expected: usize,
        found: usize,
    },
    #[error("event \"{event_id}\": score for \"{id}\" is not finite")]
    NonFiniteScore { event_id: String, id: String },
    #[error("invalid lambda {0}: must be positive and finite")]
    InvalidLambda(f64),
    #[error("instance too large for exhaustive search ({points} assignments, limit {limit})")]
    InstanceTooLarge { points: f64, limit: f64 },
}

fn join(classes: &[ConstraintClass]) -> String {
    classes
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" together with ")
}

/// The joint decision for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedEvent {
    pub event_id: String,
    pub trigger_type: String,
    /// Role per argument; `None` is the reserved unassigned role.
    pub argument_roles: Vec<Option<String>>,
    pub objective_value: f64,
    /// Chosen type first, then the rest by descending raw score.
    pub trigger_ranking: Vec<(String, f64)>,
    /// Per argument: chosen role first, then the rest by descending raw score.
    pub role_rankings: Vec<Vec<(String, f64)>>,
}

/// `lambda * max(m, 1) * trigger_score + sum_j role_score_j`, summed left to right.
pub fn objective(lambda: f64, num_arguments: usize, trigger_score: f64, argument_sum: f64) -> f64 {
    lambda * num_arguments.max(1) as f64 * trigger_score + argument_sum
}

/// Two objective values closer than this are treated as tied.
pub fn tie_tolerance(value: f64) -> f64 {
    1e-9 * value.abs().max(1.0)
}

/// Indexed view of one event: ontology ids in lexicographic order and the
/// scores and admissibility flags the solver needs.
#[derive(Debug, Clone)]
pub(crate) struct Instance<'a> {
    pub event_id: &'a str,
    pub event_ids: Vec<&'a str>,
    pub role_ids: Vec<&'a str>,
    pub trigger: Vec<f64>,
    /// `args[j][k]`: score of argument j for role k.
    pub args: Vec<Vec<f64>>,
    /// Role indices of each event type, ascending.
    pub compatible: Vec<Vec<usize>>,
    /// `admissible[j][k]`: entity type of argument j fits role k.
    pub admissible: Vec<Vec<bool>>,
}

impl<'a> Instance<'a> {
    pub fn new(
        event: &'a EventMention,
        scores: &ScoreMatrix,
        ontology: &'a Ontology,
    ) -> Result<Self, InferenceError> {
        let event_id = event.event_id.as_str();
        let m = event.arguments.len();
        if scores.argument_scores.len() != m {
            return Err(InferenceError::ArgumentCountMismatch {
                event_id: event_id.to_string(),
                expected: m,
                found: scores.argument_scores.len(),
            });
        }
        let lookup = |map: &std::collections::BTreeMap<String, f64>, id: &str, what| {
            let s = *map.get(id).ok_or_else(|| InferenceError::MissingScore {
                event_id: event_id.to_string(),
                what,
                id: id.to_string(),
            })?;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(InferenceError::NonFiniteScore {
                    event_id: event_id.to_string(),
                    id: id.to_string(),
                })
            }
        };

        let event_ids: Vec<&str> = ontology.event_types().map(|e| e.id.as_str()).collect();
        let role_ids: Vec<&str> = ontology.role_types().map(|r| r.id.as_str()).collect();
        let trigger = event_ids
            .iter()
            .map(|id| lookup(&scores.trigger_scores, id, "event type"))
            .collect::<Result<Vec<_>, _>>()?;
        let args = scores
            .argument_scores
            .iter()
            .map(|row| {
                role_ids
                    .iter()
                    .map(|id| lookup(row, id, "role type"))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let compatible = ontology
            .event_types()
            .map(|e| {
                let mut ks: Vec<usize> = e
                    .roles
                    .iter()
                    .map(|r| role_ids.binary_search(&r.as_str()).expect("validated ontology"))
                    .collect();
                ks.sort_unstable();
                ks
            })
            .collect();
        let admissible = event
            .arguments
            .iter()
            .map(|a| {
                ontology
                    .role_types()
                    .map(|r| r.admits(a.entity_type.as_deref()))
                    .collect()
            })
            .collect();

        Ok(Instance {
            event_id,
            event_ids,
            role_ids,
            trigger,
            args,
            compatible,
            admissible,
        })
    }

    pub fn num_arguments(&self) -> usize {
        self.args.len()
    }
}

/// Best way to finish an assignment: how many arguments stay unassigned and
/// the summed score of the assigned ones.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Completion {
    unassigned: usize,
    sum: f64,
}

struct Solver<'i, 'a> {
    inst: &'i Instance<'a>,
    distinct: bool,
    relax_entities: bool,
}

impl Solver<'_, '_> {
    fn admissible(&self, j: usize, k: usize) -> bool {
        self.relax_entities || self.inst.admissible[j][k]
    }

    /// Max-cardinality, then max-weight, assignment of `args` to `roles`.
    fn complete(&self, args: &[usize], roles: &[usize]) -> Completion {
        if args.is_empty() {
            return Completion {
                unassigned: 0,
                sum: 0.0,
            };
        }
        if !self.distinct {
            let mut unassigned = 0;
            let mut sum = 0.0;
            for &j in args {
                let best = roles
                    .iter()
                    .filter(|&&k| self.admissible(j, k))
                    .map(|&k| self.inst.args[j][k])
                    .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
                match best {
                    Some(s) => sum += s,
                    None => unassigned += 1,
                }
            }
            return Completion { unassigned, sum };
        }

        // Forbidden pairs and the padding columns cost `big`, which exceeds
        // any achievable difference in real score, so the optimum first
        // minimizes how many arguments stay unassigned.
        let spread: f64 = args
            .iter()
            .map(|&j| roles.iter().map(|&k| self.inst.args[j][k].abs()).fold(0.0, f64::max))
            .sum();
        let big = 1.0 + 2.0 * spread;
        let cols = roles.len() + args.len();
        let cost: Vec<Vec<f64>> = args
            .iter()
            .map(|&j| {
                (0..cols)
                    .map(|c| match roles.get(c) {
                        Some(&k) if self.admissible(j, k) => -self.inst.args[j][k],
                        _ => big,
                    })
                    .collect()
            })
            .collect();
        let chosen = assignment::min_cost_assignment(&cost);

        let mut unassigned = 0;
        let mut sum = 0.0;
        for (row, &j) in args.iter().enumerate() {
            match roles.get(chosen[row]) {
                Some(&k) if self.admissible(j, k) => sum += self.inst.args[j][k],
                _ => unassigned += 1,
            }
        }
        Completion { unassigned, sum }
    }

    fn best_for_trigger(&self, i: usize) -> Completion {
        let args: Vec<usize> = (0..self.inst.num_arguments()).collect();
        self.complete(&args, &self.inst.compatible[i])
    }

    fn feasible(&self) -> bool {
        (0..self.inst.event_ids.len()).any(|i| self.best_for_trigger(i).unassigned == 0)
    }

    /// Lexicographically smallest role sequence for trigger `i` with exactly
    /// `target.unassigned` unassigned arguments and a sum within tolerance of
    /// `target.sum`.
    fn fix_roles(&self, i: usize, target: Completion, allow_none: bool) -> Vec<Option<usize>> {
        let m = self.inst.num_arguments();
        let threshold = target.sum - tie_tolerance(target.sum);
        let compatible = &self.inst.compatible[i];
        let mut used = vec![false; self.inst.role_ids.len()];
        let mut roles = Vec::with_capacity(m);
        let mut prefix_sum = 0.0;
        let mut prefix_none = 0;

        for j in 0..m {
            let rest: Vec<usize> = (j + 1..m).collect();
            let mut candidates: Vec<Option<usize>> = compatible
                .iter()
                .filter(|&&k| self.admissible(j, k) && !(self.distinct && used[k]))
                .map(|&k| Some(k))
                .collect();
            if allow_none {
                candidates.push(None);
            }

            let mut fallback: Option<(Option<usize>, usize, f64)> = None;
            let mut accepted = None;
            for cand in candidates {
                let available: Vec<usize> = compatible
                    .iter()
                    .copied()
                    .filter(|&k| !(self.distinct && (used[k] || Some(k) == cand)))
                    .collect();
                let tail = self.complete(&rest, &available);
                let none_count = prefix_none + usize::from(cand.is_none()) + tail.unassigned;
                let value = prefix_sum + cand.map_or(0.0, |k| self.inst.args[j][k]) + tail.sum;
                if none_count == target.unassigned && value >= threshold {
                    accepted = Some(cand);
                    break;
                }
                let better = match fallback {
                    None => true,
                    Some((_, n, v)) => none_count < n || (none_count == n && value > v),
                };
                if better {
                    fallback = Some((cand, none_count, value));
                }
            }
            let cand = accepted.unwrap_or_else(|| {
                debug_assert!(false, "no candidate reached the optimum for argument {j}");
                fallback.expect("at least one candidate").0
            });
            match cand {
                Some(k) => {
                    prefix_sum += self.inst.args[j][k];
                    used[k] = true;
                }
                None => prefix_none += 1,
            }
            roles.push(cand);
        }
        roles
    }
}

/// Relaxes C3 and C5 to find which constraint families make an event
/// infeasible. `feasible(relax_distinct, relax_entities)`.
pub(crate) fn diagnose(feasible: impl Fn(bool, bool) -> bool) -> Vec<ConstraintClass> {
    if feasible(true, false) {
        vec![ConstraintClass::DistinctRoles]
    } else if feasible(false, true) {
        vec![ConstraintClass::EntityType]
    } else if feasible(true, true) {
        vec![ConstraintClass::DistinctRoles, ConstraintClass::EntityType]
    } else {
        vec![ConstraintClass::EventRoleCompatibility]
    }
}

/// Picks the event type from per-type optima, applying the shared tie rule.
/// `best[i]` is `None` when type `i` has no admissible assignment.
pub(crate) fn select_trigger(
    inst: &Instance<'_>,
    lambda: f64,
    best: &[Option<(usize, f64)>],
) -> Option<usize> {
    let fewest = best.iter().flatten().map(|&(u, _)| u).min()?;
    let m = inst.num_arguments();
    let objectives: Vec<Option<f64>> = best
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            Some((u, s)) if *u == fewest => Some(objective(lambda, m, inst.trigger[i], *s)),
            _ => None,
        })
        .collect();
    let top = objectives.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = top - tie_tolerance(top);
    objectives.iter().position(|o| o.is_some_and(|v| v >= threshold))
}

pub(crate) fn build_typed_event(
    inst: &Instance<'_>,
    scores: &ScoreMatrix,
    lambda: f64,
    trigger: usize,
    roles: &[Option<usize>],
) -> TypedEvent {
    let mut sum = 0.0;
    for (j, r) in roles.iter().enumerate() {
        if let Some(k) = r {
            sum += inst.args[j][*k];
        }
    }
    let trigger_type = inst.event_ids[trigger].to_string();
    let argument_roles: Vec<Option<String>> = roles
        .iter()
        .map(|r| r.map(|k| inst.role_ids[k].to_string()))
        .collect();
    TypedEvent {
        event_id: inst.event_id.to_string(),
        objective_value: objective(lambda, inst.num_arguments(), inst.trigger[trigger], sum),
        trigger_ranking: rank_with_first(&scores.trigger_scores, Some(&trigger_type)),
        role_rankings: scores
            .argument_scores
            .iter()
            .zip(&argument_roles)
            .map(|(row, r)| rank_with_first(row, r.as_deref()))
            .collect(),
        trigger_type,
        argument_roles,
    }
}

/// Exact maximizer of the constrained objective for one event.
pub fn solve(
    event: &EventMention,
    scores: &ScoreMatrix,
    ontology: &Ontology,
    config: &InferenceConfig,
) -> Result<TypedEvent, InferenceError> {
    config.validate()?;
    let inst = Instance::new(event, scores, ontology)?;
    let solver = Solver {
        inst: &inst,
        distinct: config.enforce_distinct_roles,
        relax_entities: false,
    };

    let per_trigger: Vec<Completion> = (0..inst.event_ids.len())
        .map(|i| solver.best_for_trigger(i))
        .collect();
    let best: Vec<Option<(usize, f64)>> = per_trigger
        .iter()
        .map(|c| (config.allow_unassigned_arguments || c.unassigned == 0).then_some((c.unassigned, c.sum)))
        .collect();

    let Some(trigger) = select_trigger(&inst, config.lambda, &best) else {
        let binding = diagnose(|relax_distinct, relax_entities| {
            Solver {
                inst: &inst,
                distinct: config.enforce_distinct_roles && !relax_distinct,
                relax_entities,
            }
            .feasible()
        });
        return Err(InferenceError::Infeasible {
            event_id: event.event_id.clone(),
            binding,
        });
    };

    let roles = solver.fix_roles(trigger, per_trigger[trigger], config.allow_unassigned_arguments);
    Ok(build_typed_event(&inst, scores, config.lambda, trigger, &roles))
}
