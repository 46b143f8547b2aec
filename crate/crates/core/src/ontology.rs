//! Event ontology: event types, their role types, and the entity types each
//! role accepts.
//!
//! The ontology is loaded from a small human-editable document (JSON, or TOML
//! when the file extension is `.toml`) with three top-level arrays:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "entity_types": [{"id": "PER"}, {"id": "GPE"}],
//!   "role_types": [{"id": "Attacker", "label": "attacker", "permitted_entities": ["PER", "GPE"]}],
//!   "event_types": [{"id": "Conflict:Attack", "label": "attack", "roles": ["Attacker"]}]
//! }
//! ```
//!
//! Ids are case-sensitive. Event and role ids share one namespace because
//! anchor dumps key clusters by bare label id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Major schema version understood by this loader.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cannot read ontology {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ontology document: {0}")]
    Parse(String),
    #[error("unsupported ontology schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("ontology has no event types")]
    NoEventTypes,
    #[error("empty {0} id")]
    EmptyId(&'static str),
    #[error("duplicate {kind} id \"{id}\"")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{kind} \"{id}\" has an empty label")]
    EmptyLabel { kind: &'static str, id: String },
    #[error("event type \"{event}\" references undeclared role \"{role}\"")]
    UndeclaredRole { event: String, role: String },
    #[error("event type \"{event}\" lists role \"{role}\" more than once")]
    RepeatedRole { event: String, role: String },
    #[error("role type \"{role}\" permits undeclared entity type \"{entity}\"")]
    UndeclaredEntity { role: String, entity: String },
    #[error("id \"{0}\" is declared both as an event type and as a role type")]
    AmbiguousId(String),
    #[error("unknown event type \"{0}\"")]
    UnknownEvent(String),
    #[error("unknown role type \"{0}\"")]
    UnknownRole(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityType {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleType {
    pub id: String,
    /// Word used to look up anchor sentences (e.g. "attacker").
    pub label: String,
    /// Entity types allowed to fill this role. Empty means unconstrained.
    #[serde(default)]
    pub permitted_entities: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventType {
    pub id: String,
    /// Anchor head word (e.g. "attack").
    pub label: String,
    /// Role ids in document order.
    #[serde(default)]
    pub roles: Vec<String>,
}

impl EventType {
    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }
}

impl RoleType {
    /// Whether an argument with the given entity type (or none) may fill this role.
    pub fn admits(&self, entity: Option<&str>) -> bool {
        match entity {
            None => true,
            Some(_) if self.permitted_entities.is_empty() => true,
            Some(e) => self.permitted_entities.contains(e),
        }
    }
}

/// On-disk shape of an ontology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyDocument {
    pub schema_version: u32,
    #[serde(default)]
    pub entity_types: Vec<EntityType>,
    #[serde(default)]
    pub role_types: Vec<RoleType>,
    #[serde(default)]
    pub event_types: Vec<EventType>,
}

/// A validated ontology. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    event_types: BTreeMap<String, EventType>,
    role_types: BTreeMap<String, RoleType>,
    entity_types: BTreeSet<String>,
}

impl Ontology {
    pub fn from_document(doc: OntologyDocument) -> Result<Self, OntologyError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(OntologyError::UnsupportedVersion(doc.schema_version));
        }
        if doc.event_types.is_empty() {
            return Err(OntologyError::NoEventTypes);
        }

        let mut entity_types = BTreeSet::new();
        for e in doc.entity_types {
            if e.id.is_empty() {
                return Err(OntologyError::EmptyId("entity type"));
            }
            if !entity_types.insert(e.id.clone()) {
                return Err(OntologyError::DuplicateId {
                    kind: "entity type",
                    id: e.id,
                });
            }
        }

        let mut role_types = BTreeMap::new();
        for r in doc.role_types {
            if r.id.is_empty() {
                return Err(OntologyError::EmptyId("role type"));
            }
            if r.label.trim().is_empty() {
                return Err(OntologyError::EmptyLabel {
                    kind: "role type",
                    id: r.id,
                });
            }
            if let Some(bad) = r.permitted_entities.iter().find(|e| !entity_types.contains(*e)) {
                return Err(OntologyError::UndeclaredEntity {
                    role: r.id.clone(),
                    entity: bad.clone(),
                });
            }
            if role_types.contains_key(&r.id) {
                return Err(OntologyError::DuplicateId {
                    kind: "role type",
                    id: r.id,
                });
            }
            role_types.insert(r.id.clone(), r);
        }

        let mut event_types = BTreeMap::new();
        for ev in doc.event_types {
            if ev.id.is_empty() {
                return Err(OntologyError::EmptyId("event type"));
            }
            if ev.label.trim().is_empty() {
                return Err(OntologyError::EmptyLabel {
                    kind: "event type",
                    id: ev.id,
                });
            }
            if role_types.contains_key(&ev.id) {
                return Err(OntologyError::AmbiguousId(ev.id));
            }
            let mut seen = BTreeSet::new();
            for role in &ev.roles {
                if !role_types.contains_key(role) {
                    return Err(OntologyError::UndeclaredRole {
                        event: ev.id.clone(),
                        role: role.clone(),
                    });
                }
                if !seen.insert(role) {
                    return Err(OntologyError::RepeatedRole {
                        event: ev.id.clone(),
                        role: role.clone(),
                    });
                }
            }
            if event_types.contains_key(&ev.id) {
                return Err(OntologyError::DuplicateId {
                    kind: "event type",
                    id: ev.id,
                });
            }
            event_types.insert(ev.id.clone(), ev);
        }

        let ontology = Ontology {
            event_types,
            role_types,
            entity_types,
        };
        for role in ontology.unreferenced_roles() {
            log::warn!("role type \"{role}\" is not used by any event type");
        }
        Ok(ontology)
    }

    pub fn from_json_str(text: &str) -> Result<Self, OntologyError> {
        let doc: OntologyDocument =
            serde_json::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, OntologyError> {
        let doc: OntologyDocument =
            toml::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Loads an ontology document, choosing TOML for `.toml` files and JSON otherwise.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| OntologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn to_document(&self) -> OntologyDocument {
        OntologyDocument {
            schema_version: SCHEMA_VERSION,
            entity_types: self
                .entity_types
                .iter()
                .map(|id| EntityType { id: id.clone() })
                .collect(),
            role_types: self.role_types.values().cloned().collect(),
            event_types: self.event_types.values().cloned().collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("ontology serializes")
    }

    /// Event types in lexicographic id order.
    pub fn event_types(&self) -> impl Iterator<Item = &EventType> {
        self.event_types.values()
    }

    /// Role types in lexicographic id order.
    pub fn role_types(&self) -> impl Iterator<Item = &RoleType> {
        self.role_types.values()
    }

    pub fn entity_types(&self) -> impl Iterator<Item = &str> {
        self.entity_types.iter().map(String::as_str)
    }

    pub fn event_type(&self, id: &str) -> Option<&EventType> {
        self.event_types.get(id)
    }

    pub fn role_type(&self, id: &str) -> Option<&RoleType> {
        self.role_types.get(id)
    }

    pub fn has_entity_type(&self, id: &str) -> bool {
        self.entity_types.contains(id)
    }

    pub fn num_event_types(&self) -> usize {
        self.event_types.len()
    }

    pub fn num_role_types(&self) -> usize {
        self.role_types.len()
    }

    /// True iff `role` is one of the roles of `event`.
    pub fn compatible(&self, event: &str, role: &str) -> Result<bool, OntologyError> {
        let ev = self
            .event_types
            .get(event)
            .ok_or_else(|| OntologyError::UnknownEvent(event.to_string()))?;
        if !self.role_types.contains_key(role) {
            return Err(OntologyError::UnknownRole(role.to_string()));
        }
        Ok(ev.has_role(role))
    }

    /// True iff an argument of entity type `entity` may fill `role`. An absent
    /// entity type, or a role with no declared constraints, always passes.
    pub fn entity_admissible(&self, role: &str, entity: Option<&str>) -> Result<bool, OntologyError> {
        let r = self
            .role_types
            .get(role)
            .ok_or_else(|| OntologyError::UnknownRole(role.to_string()))?;
        Ok(r.admits(entity))
    }

    pub fn unreferenced_roles(&self) -> Vec<&str> {
        self.role_types
            .keys()
            .filter(|r| !self.event_types.values().any(|e| e.has_role(r)))
            .map(String::as_str)
            .collect()
    }

    /// Builds the sub-ontology restricted to the given event types, keeping
    /// every role and entity type.
    pub fn restrict_events<'a>(
        &self,
        keep: impl IntoIterator<Item = &'a str>,
    ) -> Result<Ontology, OntologyError> {
        let mut event_types = BTreeMap::new();
        for id in keep {
            let ev = self
                .event_types
                .get(id)
                .ok_or_else(|| OntologyError::UnknownEvent(id.to_string()))?;
            event_types.insert(id.to_string(), ev.clone());
        }
        if event_types.is_empty() {
            return Err(OntologyError::NoEventTypes);
        }
        Ok(Ontology {
            event_types,
            role_types: self.role_types.clone(),
            entity_types: self.entity_types.clone(),
        })
    }
}
