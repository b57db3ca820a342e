// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

use super::entity::{DataType, Entity};
use crate::Id;

/// Read access to stored entities, as needed to walk reference chains.
pub trait EntityStore {
    /// Looks up an entity (top-level or nested item) by id. Returns the
    /// entity's reference and, for nested items, the enclosing collection.
    fn lookup(&self, id: Id) -> Option<StoredLink>;
    fn is_slide(&self, id: Id) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoredLink {
    pub data_type: DataType,
    pub reference: Option<Id>,
    pub parent: Option<Id>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainLink {
    Entity { id: Id, data_type: DataType },
    Slide { id: Id },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("NOT_FOUND: {0}")]
    NotFound(Id),
    #[error("CYCLE_DETECTED at {0}")]
    CycleDetected(Id),
}

impl ResolveError {
    pub fn code(&self) -> &'static str {
        match self {
            ResolveError::NotFound(_) => "NOT_FOUND",
            ResolveError::CycleDetected(_) => "CYCLE_DETECTED",
        }
    }
}

/// Follows `reference` fields (falling back to the enclosing collection for
/// unreferenced items) from `id` up to its root, normally a slide.
pub fn resolve_reference(id: Id, store: &impl EntityStore) -> Result<Vec<ChainLink>, ResolveError> {
    let mut chain = Vec::new();
    let mut seen = HashSet::new();
    let mut current = Some(id);
    while let Some(cur) = current {
        if !seen.insert(cur) {
            return Err(ResolveError::CycleDetected(cur));
        }
        if store.is_slide(cur) {
            chain.push(ChainLink::Slide { id: cur });
            break;
        }
        let link = store.lookup(cur).ok_or(ResolveError::NotFound(cur))?;
        chain.push(ChainLink::Entity { id: cur, data_type: link.data_type });
        current = link.reference.or(link.parent);
    }
    Ok(chain)
}

/// In-memory entity index; nested collection items are indexed individually.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    slides: BTreeSet<Id>,
    links: HashMap<Id, StoredLink>,
    entities: HashMap<Id, Entity>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_slide(&mut self, id: Id) {
        self.slides.insert(id);
    }

    /// Indexes the entity and its items. Entities without an id are skipped.
    pub fn insert(&mut self, entity: Entity) {
        self.index(&entity, None);
        if let Some(id) = entity.id() {
            self.entities.insert(id, entity);
        }
    }

    fn index(&mut self, entity: &Entity, parent: Option<Id>) {
        let Some(id) = entity.id() else { return };
        self.links.insert(id, StoredLink { data_type: entity.data_type(), reference: entity.reference(), parent });
        if let Entity::Collection(c) = entity {
            for item in &c.items {
                self.index(item, Some(id));
            }
        }
    }

    pub fn get(&self, id: Id) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn contains(&self, id: Id) -> bool {
        self.links.contains_key(&id) || self.slides.contains(&id)
    }
}

impl EntityStore for MemoryStore {
    fn lookup(&self, id: Id) -> Option<StoredLink> {
        self.links.get(&id).copied()
    }

    fn is_slide(&self, id: Id) -> bool {
        self.slides.contains(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Annotation, ClassValue};

    #[test]
    fn chains() {
        let slide = Id::from_bytes([1; 16]);
        let mut store = MemoryStore::new();
        store.add_slide(slide);
        let mut point = Entity::from(Annotation::point(1, 2, slide));
        point.set_id(Id::from_bytes([2; 16]));
        let mut class = Entity::from(ClassValue::new("a.b.classes.c", Id::from_bytes([2; 16])));
        class.set_id(Id::from_bytes([3; 16]));
        store.insert(point);
        store.insert(class);

        let chain = resolve_reference(Id::from_bytes([3; 16]), &store).unwrap();
        assert_eq!(chain.len(), 3);
        assert_eq!(chain.last(), Some(&ChainLink::Slide { id: slide }));
        assert_eq!(resolve_reference(slide, &store).unwrap(), vec![ChainLink::Slide { id: slide }]);
        assert_eq!(
            resolve_reference(Id::from_bytes([4; 16]), &store),
            Err(ResolveError::NotFound(Id::from_bytes([4; 16])))
        );
    }

    #[test]
    fn cycles() {
        let (a, b) = (Id::from_bytes([5; 16]), Id::from_bytes([6; 16]));
        let mut store = MemoryStore::new();
        let mut ea = Entity::from(ClassValue::new("x", b));
        ea.set_id(a);
        let mut eb = Entity::from(ClassValue::new("x", a));
        eb.set_id(b);
        store.insert(ea);
        store.insert(eb);
        assert!(matches!(resolve_reference(a, &store), Err(ResolveError::CycleDetected(_))));
    }
}
