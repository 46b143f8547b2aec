//! Exhaustive reference solver.

use crate::mentions::EventMention;
use crate::ontology::Ontology;
use crate::scoring::ScoreMatrix;

use super::{
    build_typed_event, diagnose, select_trigger, tie_tolerance, InferenceConfig, InferenceError, Instance,
    TypedEvent,
};

/// Largest `|E| * (|R| + 1)^m` the oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

struct Enumerator<'a, 'i> {
    inst: &'i Instance<'a>,
    event: &'a EventMention,
    ontology: &'a Ontology,
}

impl Enumerator<'_, '_> {
    /// Checks the constraints straight against the ontology.
    fn admits(&self, trigger: usize, roles: &[Option<usize>], distinct: bool, relax_entities: bool) -> bool {
        let event_type = self.inst.event_ids[trigger];
        for (j, r) in roles.iter().enumerate() {
            let Some(k) = *r else { continue };
            let role = self.inst.role_ids[k];
            if !self.ontology.compatible(event_type, role).unwrap_or(false) {
                return false;
            }
            let entity = self.event.arguments[j].entity_type.as_deref();
            if !relax_entities && !self.ontology.entity_admissible(role, entity).unwrap_or(false) {
                return false;
            }
            if distinct && roles[..j].contains(&Some(k)) {
                return false;
            }
        }
        true
    }

    /// Visits every role tuple in lexicographic order: role ids ascending,
    /// then `None` when allowed.
    fn for_each(&self, allow_none: bool, mut visit: impl FnMut(&[Option<usize>]) -> bool) {
        let m = self.inst.num_arguments();
        let choices = self.inst.role_ids.len() + usize::from(allow_none);
        if m > 0 && choices == 0 {
            return;
        }
        let decode = |d: usize| if d < self.inst.role_ids.len() { Some(d) } else { None };
        let mut digits = vec![0usize; m];
        let mut roles: Vec<Option<usize>> = vec![None; m];
        loop {
            for (r, &d) in roles.iter_mut().zip(&digits) {
                *r = decode(d);
            }
            if !visit(&roles) {
                return;
            }
            // odometer, last argument fastest
            let mut pos = m;
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < choices {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    fn arg_sum(&self, roles: &[Option<usize>]) -> f64 {
        let mut sum = 0.0;
        for (j, r) in roles.iter().enumerate() {
            if let Some(k) = r {
                sum += self.inst.args[j][*k];
            }
        }
        sum
    }
}

/// Enumerates every assignment and applies the same selection rule as
/// [`super::solve`].
pub fn brute_force_solve(
    event: &EventMention,
    scores: &ScoreMatrix,
    ontology: &Ontology,
    config: &InferenceConfig,
) -> Result<TypedEvent, InferenceError> {
    config.validate()?;
    let inst = Instance::new(event, scores, ontology)?;
    let m = inst.num_arguments();
    let allow_none = config.allow_unassigned_arguments;
    let choices = inst.role_ids.len() + usize::from(allow_none);
    let points = inst.event_ids.len() as f64 * (choices as f64).powi(m as i32);
    if points > BRUTE_FORCE_LIMIT {
        return Err(InferenceError::InstanceTooLarge {
            points,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let en = Enumerator {
        inst: &inst,
        event,
        ontology,
    };
    let distinct = config.enforce_distinct_roles;

    let best: Vec<Option<(usize, f64)>> = (0..inst.event_ids.len())
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            en.for_each(allow_none, |roles| {
                if en.admits(i, roles, distinct, false) {
                    let none = roles.iter().filter(|r| r.is_none()).count();
                    let sum = en.arg_sum(roles);
                    best = match best {
                        Some((u, s)) if u < none || (u == none && s >= sum) => Some((u, s)),
                        _ => Some((none, sum)),
                    };
                }
                true
            });
            best
        })
        .collect();

    let Some(trigger) = select_trigger(&inst, config.lambda, &best) else {
        let binding = diagnose(|relax_distinct, relax_entities| {
            (0..inst.event_ids.len()).any(|i| {
                let mut found = false;
                en.for_each(false, |roles| {
                    found = en.admits(i, roles, distinct && !relax_distinct, relax_entities);
                    !found
                });
                found
            })
        });
        return Err(InferenceError::Infeasible {
            event_id: event.event_id.clone(),
            binding,
        });
    };

    let (target_none, target_sum) = best[trigger].expect("selected trigger is feasible");
    let threshold = target_sum - tie_tolerance(target_sum);
    let mut chosen = None;
    en.for_each(allow_none, |roles| {
        let hit = en.admits(trigger, roles, distinct, false)
            && roles.iter().filter(|r| r.is_none()).count() == target_none
            && en.arg_sum(roles) >= threshold;
        if hit {
            chosen = Some(roles.to_vec());
        }
        !hit
    });
    let roles = chosen.expect("the optimum itself passes the threshold");
    debug_assert_eq!(roles.len(), m);
    Ok(build_typed_event(&inst, scores, config.lambda, trigger, &roles))
}
