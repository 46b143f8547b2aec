//! Post-hoc verification of a [`TypedEvent`] against the constraints.

use std::collections::BTreeSet;

use crate::mentions::EventMention;
use crate::ontology::Ontology;

use super::{ConstraintClass, InferenceConfig, TypedEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub class: ConstraintClass,
    pub detail: String,
}

/// Lists every constraint the decision breaks; empty means valid.
pub fn check_constraints(
    event: &EventMention,
    ontology: &Ontology,
    config: &InferenceConfig,
    typed: &TypedEvent,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |class, detail: String| out.push(Violation { class, detail });

    let event_type = ontology.event_type(&typed.trigger_type);
    if event_type.is_none() {
        flag(
            ConstraintClass::OneTypePerTrigger,
            format!("trigger type \"{}\" is not an event type", typed.trigger_type),
        );
    }
    if typed.argument_roles.len() != event.arguments.len() {
        flag(
            ConstraintClass::OneRolePerArgument,
            format!(
                "{} roles for {} arguments",
                typed.argument_roles.len(),
                event.arguments.len()
            ),
        );
        return out;
    }

    let mut seen = BTreeSet::new();
    for (j, (role, arg)) in typed.argument_roles.iter().zip(&event.arguments).enumerate() {
        let Some(role) = role else {
            if !config.allow_unassigned_arguments {
                flag(ConstraintClass::OneRolePerArgument, format!("argument {j} has no role"));
            }
            continue;
        };
        let Some(role_type) = ontology.role_type(role) else {
            flag(
                ConstraintClass::OneRolePerArgument,
                format!("argument {j} has unknown role \"{role}\""),
            );
            continue;
        };
        if config.enforce_distinct_roles && !seen.insert(role.as_str()) {
            flag(ConstraintClass::DistinctRoles, format!("role \"{role}\" used twice"));
        }
        if let Some(ev) = event_type {
            if !ev.has_role(role) {
                flag(
                    ConstraintClass::EventRoleCompatibility,
                    format!("role \"{role}\" does not belong to \"{}\"", ev.id),
                );
            }
        }
        if !role_type.admits(arg.entity_type.as_deref()) {
            flag(
                ConstraintClass::EntityType,
                format!(
                    "argument {j} entity type {:?} not admissible for \"{role}\"",
                    arg.entity_type
                ),
            );
        }
    }
    out
}
