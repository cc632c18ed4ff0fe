use std::collections::{BTreeSet, HashMap};

use super::{Entity, ModelError, Relation, RelationKey};

/// Result of [`KnowledgeGraph::insert_entity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityInsert {
    /// A new node was appended at this position.
    Inserted(usize),
    /// The key already existed; provenance was unioned into this node.
    Unified(usize),
}

impl EntityInsert {
    pub fn position(self) -> usize {
        match self {
            Self::Inserted(i) | Self::Unified(i) => i,
        }
    }
}

/// Result of [`KnowledgeGraph::insert_relation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationInsert {
    Inserted(usize),
    Unified(usize),
}

impl RelationInsert {
    pub fn position(self) -> usize {
        match self {
            Self::Inserted(i) | Self::Unified(i) => i,
        }
    }
}

/// The global entity and relation sets.
///
/// Entities and relations keep insertion order; positions are stable because
/// nothing is removed except through [`KnowledgeGraph::prune_isolated`].
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    dimension: usize,
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    // canonical key or alias -> entity position
    entity_index: HashMap<String, usize>,
    // key triple (predicate may be an alias) -> relation position
    relation_index: HashMap<RelationKey, usize>,
}

impl KnowledgeGraph {
    pub fn new(dimension: usize) -> Result<Self, ModelError> {
        if dimension == 0 {
            return Err(ModelError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            entities: Vec::new(),
            relations: Vec::new(),
            entity_index: HashMap::new(),
            relation_index: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }

    /// Position of the entity whose key or alias equals `key`.
    pub fn entity_position(&self, key: &str) -> Option<usize> {
        self.entity_index.get(key).copied()
    }

    pub fn entity(&self, key: &str) -> Option<&Entity> {
        self.entity_position(key).map(|i| &self.entities[i])
    }

    pub fn relation_position(&self, key: &RelationKey) -> Option<usize> {
        self.relation_index.get(key).copied()
    }

    /// Relations from `subject_key` to `object_key`, in insertion order.
    pub fn relations_between<'a>(
        &'a self,
        subject_key: &'a str,
        object_key: &'a str,
    ) -> impl Iterator<Item = (usize, &'a Relation)> + 'a {
        self.relations
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.subject_key == subject_key && r.object_key == object_key)
    }

    fn check_dimension(&self, found: Option<usize>) -> Result<(), ModelError> {
        match found {
            Some(found) if found != self.dimension => Err(ModelError::DimensionMismatch {
                expected: self.dimension,
                found,
            }),
            _ => Ok(()),
        }
    }

    /// Adds an entity, or unions its provenance into the entity that already
    /// owns its key (or has it as an alias).
    pub fn insert_entity(&mut self, entity: Entity) -> Result<EntityInsert, ModelError> {
        self.check_dimension(entity.embedding.as_ref().map(|e| e.dim()))?;
        if let Some(pos) = self.entity_position(&entity.key) {
            self.entities[pos].provenance.extend(entity.provenance);
            return Ok(EntityInsert::Unified(pos));
        }
        if let Some(alias) = entity
            .aliases
            .iter()
            .find(|a| self.entity_index.contains_key(*a))
        {
            return Err(ModelError::DuplicateEntity(alias.clone()));
        }
        let pos = self.entities.len();
        self.entity_index.insert(entity.key.clone(), pos);
        for alias in &entity.aliases {
            self.entity_index.insert(alias.clone(), pos);
        }
        self.entities.push(entity);
        Ok(EntityInsert::Inserted(pos))
    }

    /// Records that `alias_key` resolves to the entity at `position`, and
    /// unions `provenance` into it. Existing keys and aliases are left alone.
    pub fn unify_entity(
        &mut self,
        position: usize,
        alias_key: &str,
        provenance: &BTreeSet<String>,
    ) {
        let entity = &mut self.entities[position];
        entity.provenance.extend(provenance.iter().cloned());
        if !self.entity_index.contains_key(alias_key) {
            entity.aliases.insert(alias_key.to_string());
            self.entity_index.insert(alias_key.to_string(), position);
        }
    }

    /// Adds a relation, or unions provenance into the relation with the same
    /// key triple. Endpoints are resolved through entity aliases, so the
    /// stored relation always points at canonical entity keys.
    pub fn insert_relation(
        &mut self,
        mut relation: Relation,
    ) -> Result<RelationInsert, ModelError> {
        self.check_dimension(relation.embedding.as_ref().map(|e| e.dim()))?;
        let subject = self
            .entity(&relation.subject_key)
            .ok_or_else(|| ModelError::DanglingEndpoint(relation.subject_key.clone()))?
            .key
            .clone();
        let object = self
            .entity(&relation.object_key)
            .ok_or_else(|| ModelError::DanglingEndpoint(relation.object_key.clone()))?
            .key
            .clone();
        relation.subject_key = subject;
        relation.object_key = object;

        let key = relation.key();
        if let Some(pos) = self.relation_position(&key) {
            self.relations[pos].provenance.extend(relation.provenance);
            return Ok(RelationInsert::Unified(pos));
        }
        let pos = self.relations.len();
        for alias in &relation.aliases {
            let alias_key = RelationKey::new(&key.subject, alias, &key.object);
            if self.relation_index.contains_key(&alias_key) {
                return Err(ModelError::DuplicateRelation(
                    alias_key.subject,
                    alias_key.predicate,
                    alias_key.object,
                ));
            }
            self.relation_index.insert(alias_key, pos);
        }
        self.relation_index.insert(key, pos);
        self.relations.push(relation);
        Ok(RelationInsert::Inserted(pos))
    }

    /// Records that `predicate_key` between the same endpoints resolves to the
    /// relation at `position`, and unions `provenance` into it.
    pub fn unify_relation(
        &mut self,
        position: usize,
        predicate_key: &str,
        provenance: &BTreeSet<String>,
    ) {
        let relation = &mut self.relations[position];
        relation.provenance.extend(provenance.iter().cloned());
        let alias = RelationKey::new(&relation.subject_key, predicate_key, &relation.object_key);
        if let std::collections::hash_map::Entry::Vacant(slot) = self.relation_index.entry(alias) {
            relation.aliases.insert(predicate_key.to_string());
            slot.insert(position);
        }
    }

    /// Removes entities that no relation references. Returns how many were removed.
    pub fn prune_isolated(&mut self) -> usize {
        let referenced: BTreeSet<&str> = self
            .relations
            .iter()
            .flat_map(|r| [r.subject_key.as_str(), r.object_key.as_str()])
            .collect();
        let keep: Vec<Entity> = self
            .entities
            .iter()
            .filter(|e| referenced.contains(e.key.as_str()))
            .cloned()
            .collect();
        let removed = self.entities.len() - keep.len();
        if removed > 0 {
            self.entities = keep;
            self.entity_index = self
                .entities
                .iter()
                .enumerate()
                .flat_map(|(i, e)| {
                    std::iter::once((e.key.clone(), i))
                        .chain(e.aliases.iter().map(move |a| (a.clone(), i)))
                })
                .collect();
        }
        removed
    }

    /// Checks every graph invariant from scratch.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut keys = BTreeSet::new();
        for entity in &self.entities {
            if entity.key != super::canonicalize(&entity.name) {
                return Err(ModelError::NonCanonicalKey {
                    name: entity.name.clone(),
                    key: entity.key.clone(),
                });
            }
            self.check_dimension(entity.embedding.as_ref().map(|e| e.dim()))?;
            for k in std::iter::once(&entity.key).chain(&entity.aliases) {
                if !keys.insert(k.as_str()) {
                    return Err(ModelError::DuplicateEntity(k.clone()));
                }
            }
        }
        let mut triples = BTreeSet::new();
        for relation in &self.relations {
            for endpoint in [&relation.subject_key, &relation.object_key] {
                if !self.entities.iter().any(|e| &e.key == endpoint) {
                    return Err(ModelError::DanglingEndpoint(endpoint.clone()));
                }
            }
            self.check_dimension(relation.embedding.as_ref().map(|e| e.dim()))?;
            for p in std::iter::once(&relation.predicate_key).chain(&relation.aliases) {
                let key = RelationKey::new(&relation.subject_key, p, &relation.object_key);
                if !triples.insert(key.clone()) {
                    return Err(ModelError::DuplicateRelation(
                        key.subject,
                        key.predicate,
                        key.object,
                    ));
                }
            }
        }
        Ok(())
    }
}
