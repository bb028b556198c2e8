//! Knowledge graph storage, runtime patient linking and per-step action spaces.
//!
//! The graph is loaded from a line-oriented text file:
//!
//! ```text
//! # comment
//! entity<TAB>hypertension<TAB>disease
//! entity<TAB>obesity<TAB>risk_factor
//! triplet<TAB>obesity<TAB>causes<TAB>hypertension
//! ```
//!
//! Every entity receives a self-loop at load time. The patient is not part of
//! the stored graph: [`LinkedGraph`] attaches it through `have` edges for the
//! lifetime of one prediction or rollout.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved name of the patient-to-entity relation.
pub const HAVE_RELATION: &str = "have";
/// Reserved name of the entity-to-itself relation.
pub const SELF_LOOP_RELATION: &str = "self_loop";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<KgError>,
    },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unknown entity kind `{0}` (expected disease, disease_category or risk_factor)")]
    UnknownKind(String),
    #[error("duplicate entity name `{0}`")]
    DuplicateEntity(String),
    #[error("triplet references unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("relation name `{0}` is reserved")]
    ReservedRelation(String),
    #[error("empty name")]
    EmptyName,
    #[error("duplicate triplet ({head}, {relation}, {tail})")]
    DuplicateTriplet {
        head: String,
        relation: String,
        tail: String,
    },
    #[error("knowledge graph has no entities")]
    NoEntities,
    #[error("patient character vector has length {got}, graph has {expected} entities")]
    LengthMismatch { expected: usize, got: usize },
    #[error("patient has no connection to KG")]
    NoConnection,
    #[error("action tail {tail} out of range for {m} entities")]
    TailOutOfRange { tail: usize, m: usize },
    #[error("entity id {0} out of range")]
    EntityOutOfRange(usize),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl KgError {
    fn at(self, line: usize) -> Self {
        KgError::AtLine {
            line,
            source: Box::new(self),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub usize);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Disease,
    DiseaseCategory,
    RiskFactor,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Disease => "disease",
            EntityKind::DiseaseCategory => "disease_category",
            EntityKind::RiskFactor => "risk_factor",
        }
    }
}

impl FromStr for EntityKind {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disease" => Ok(EntityKind::Disease),
            "disease_category" => Ok(EntityKind::DiseaseCategory),
            "risk_factor" => Ok(EntityKind::RiskFactor),
            other => Err(KgError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub kind: EntityKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationOrigin {
    Domain,
    Have,
    SelfLoop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationType {
    pub id: RelationId,
    pub name: String,
    pub origin: RelationOrigin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// One outgoing edge: the relation taken and the entity it lands on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Action {
    pub fn new(relation: RelationId, tail: EntityId) -> Self {
        Self { relation, tail }
    }
}

/// A walker position: the patient entity or a KG entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Patient,
    Entity(EntityId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct KgCounts {
    pub entities: usize,
    pub diseases: usize,
    pub categories: usize,
    pub risk_factors: usize,
    pub domain_relation_types: usize,
    pub domain_triplets: usize,
    /// (head, tail) pairs joined by more than one relation type.
    pub parallel_edges: usize,
}

/// Incremental construction of a [`KnowledgeGraph`]; used by the file loader
/// and by code that builds graphs programmatically.
#[derive(Debug, Default)]
pub struct KgBuilder {
    entities: Vec<Entity>,
    by_name: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_by_name: HashMap<String, RelationId>,
    triplets: Vec<Triplet>,
    seen: HashSet<Triplet>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, name: &str, kind: EntityKind) -> Result<EntityId, KgError> {
        if name.is_empty() {
            return Err(KgError::EmptyName);
        }
        if self.by_name.contains_key(name) {
            return Err(KgError::DuplicateEntity(name.to_string()));
        }
        let id = EntityId(self.entities.len());
        self.entities.push(Entity {
            id,
            name: name.to_string(),
            kind,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_triplet(&mut self, head: &str, relation: &str, tail: &str) -> Result<(), KgError> {
        if relation.is_empty() {
            return Err(KgError::EmptyName);
        }
        if relation == HAVE_RELATION || relation == SELF_LOOP_RELATION {
            return Err(KgError::ReservedRelation(relation.to_string()));
        }
        let h = *self
            .by_name
            .get(head)
            .ok_or_else(|| KgError::UnknownEntity(head.to_string()))?;
        let t = *self
            .by_name
            .get(tail)
            .ok_or_else(|| KgError::UnknownEntity(tail.to_string()))?;
        let r = match self.relation_by_name.get(relation) {
            Some(&r) => r,
            None => {
                let r = RelationId(self.relation_names.len());
                self.relation_names.push(relation.to_string());
                self.relation_by_name.insert(relation.to_string(), r);
                r
            }
        };
        let triplet = Triplet {
            head: h,
            relation: r,
            tail: t,
        };
        if !self.seen.insert(triplet) {
            return Err(KgError::DuplicateTriplet {
                head: head.to_string(),
                relation: relation.to_string(),
                tail: tail.to_string(),
            });
        }
        self.triplets.push(triplet);
        Ok(())
    }

    /// Finalizes the graph: appends the `have` and `self_loop` relation types
    /// after all domain relations and inserts one self-loop per entity.
    pub fn build(self) -> Result<KnowledgeGraph, KgError> {
        if self.entities.is_empty() {
            return Err(KgError::NoEntities);
        }
        let mut relations: Vec<RelationType> = self
            .relation_names
            .into_iter()
            .enumerate()
            .map(|(i, name)| RelationType {
                id: RelationId(i),
                name,
                origin: RelationOrigin::Domain,
            })
            .collect();
        let domain_triplets = self.triplets.len();
        let have = RelationId(relations.len());
        relations.push(RelationType {
            id: have,
            name: HAVE_RELATION.to_string(),
            origin: RelationOrigin::Have,
        });
        let self_loop = RelationId(relations.len());
        relations.push(RelationType {
            id: self_loop,
            name: SELF_LOOP_RELATION.to_string(),
            origin: RelationOrigin::SelfLoop,
        });

        let m = self.entities.len();
        let mut triplets = self.triplets;
        triplets.extend((0..m).map(|i| Triplet {
            head: EntityId(i),
            relation: self_loop,
            tail: EntityId(i),
        }));

        let mut adjacency = vec![Vec::new(); m];
        for t in &triplets {
            adjacency[t.head.0].push(Action::new(t.relation, t.tail));
        }
        for edges in &mut adjacency {
            edges.sort_by_key(|a| (a.tail, a.relation));
        }

        let diseases: Vec<EntityId> = self
            .entities
            .iter()
            .filter(|e| e.kind == EntityKind::Disease)
            .map(|e| e.id)
            .collect();
        let mut disease_index = vec![None; m];
        for (i, d) in diseases.iter().enumerate() {
            disease_index[d.0] = Some(i);
        }

        Ok(KnowledgeGraph {
            entities: self.entities,
            by_name: self.by_name,
            relations,
            triplets,
            domain_triplets,
            adjacency,
            have,
            self_loop,
            diseases,
            disease_index,
        })
    }
}

/// Typed medical-concept graph with self-loops on every entity.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    by_name: HashMap<String, EntityId>,
    relations: Vec<RelationType>,
    triplets: Vec<Triplet>,
    domain_triplets: usize,
    adjacency: Vec<Vec<Action>>,
    have: RelationId,
    self_loop: RelationId,
    diseases: Vec<EntityId>,
    disease_index: Vec<Option<usize>>,
}

impl KnowledgeGraph {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, KgError> {
        let mut builder = KgBuilder::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            let res = match fields.as_slice() {
                ["entity", name, kind] => kind
                    .parse::<EntityKind>()
                    .and_then(|k| builder.add_entity(name, k))
                    .map(|_| ()),
                ["triplet", head, relation, tail] => builder.add_triplet(head, relation, tail),
                _ => Err(KgError::Malformed(trimmed.to_string())),
            };
            res.map_err(|e| e.at(line))?;
        }
        builder.build()
    }

    /// Serializes back to the text format (self-loops are implicit).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            out.push_str(&format!("entity\t{}\t{}\n", e.name, e.kind.as_str()));
        }
        for t in self.domain_triplets() {
            out.push_str(&format!(
                "triplet\t{}\t{}\t{}\n",
                self.entities[t.head.0].name, self.relations[t.relation.0].name, self.entities[t.tail.0].name
            ));
        }
        out
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.0]
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn relation(&self, id: RelationId) -> &RelationType {
        &self.relations[id.0]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.by_name.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.iter().find(|r| r.name == name).map(|r| r.id)
    }

    pub fn have_relation(&self) -> RelationId {
        self.have
    }

    pub fn self_loop_relation(&self) -> RelationId {
        self.self_loop
    }

    /// All stored triplets, self-loops included.
    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn domain_triplets(&self) -> &[Triplet] {
        &self.triplets[..self.domain_triplets]
    }

    /// Outgoing `(relation, tail)` edges ordered by tail, then relation.
    pub fn outgoing(&self, id: EntityId) -> &[Action] {
        &self.adjacency[id.0]
    }

    pub fn is_disease(&self, id: EntityId) -> bool {
        self.entities[id.0].kind == EntityKind::Disease
    }

    /// Disease entities in ascending id order; position in this list is the
    /// index into prediction vectors.
    pub fn diseases(&self) -> &[EntityId] {
        &self.diseases
    }

    pub fn disease_count(&self) -> usize {
        self.diseases.len()
    }

    pub fn disease_index(&self, id: EntityId) -> Option<usize> {
        self.disease_index.get(id.0).copied().flatten()
    }

    pub fn counts(&self) -> KgCounts {
        let mut c = KgCounts {
            entities: self.entities.len(),
            domain_relation_types: self.relations.len() - 2,
            domain_triplets: self.domain_triplets,
            ..Default::default()
        };
        for e in &self.entities {
            match e.kind {
                EntityKind::Disease => c.diseases += 1,
                EntityKind::DiseaseCategory => c.categories += 1,
                EntityKind::RiskFactor => c.risk_factors += 1,
            }
        }
        for edges in &self.adjacency {
            c.parallel_edges += edges.windows(2).filter(|w| w[0].tail == w[1].tail).count();
        }
        c
    }

    /// Attaches a patient whose character vector marks the entities it has.
    pub fn link_patient(&self, characters: &[bool]) -> Result<LinkedGraph<'_>, KgError> {
        if characters.len() != self.entity_count() {
            return Err(KgError::LengthMismatch {
                expected: self.entity_count(),
                got: characters.len(),
            });
        }
        let links: Vec<EntityId> = characters
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| EntityId(i))
            .collect();
        if links.is_empty() {
            return Err(KgError::NoConnection);
        }
        Ok(LinkedGraph { base: self, links })
    }

    /// Same as [`link_patient`](Self::link_patient) from a list of linked ids.
    pub fn link_entities(&self, ids: &[EntityId]) -> Result<LinkedGraph<'_>, KgError> {
        let mut characters = vec![false; self.entity_count()];
        for id in ids {
            *characters
                .get_mut(id.0)
                .ok_or(KgError::EntityOutOfRange(id.0))? = true;
        }
        self.link_patient(&characters)
    }
}

/// The knowledge graph plus one patient entity and its `have` edges.
#[derive(Clone, Debug)]
pub struct LinkedGraph<'a> {
    base: &'a KnowledgeGraph,
    links: Vec<EntityId>,
}

impl<'a> LinkedGraph<'a> {
    pub fn base(&self) -> &'a KnowledgeGraph {
        self.base
    }

    /// Linked entity ids, ascending.
    pub fn patient_links(&self) -> &[EntityId] {
        &self.links
    }

    /// Legal actions at `current`.
    ///
    /// From the patient these are the `have` edges. From an entity they are
    /// its outgoing edges minus any that land on an already visited entity;
    /// the self-loop is always kept. Ordered by tail id, then relation id.
    /// `visited` lists the entities walked before `current`.
    pub fn action_space(&self, current: Node, visited: &[EntityId]) -> Vec<Action> {
        match current {
            Node::Patient => self
                .links
                .iter()
                .map(|&e| Action::new(self.base.have, e))
                .collect(),
            Node::Entity(id) => self
                .base
                .outgoing(id)
                .iter()
                .filter(|a| a.relation == self.base.self_loop || !visited.contains(&a.tail))
                .copied()
                .collect(),
        }
    }
}

/// Two relations reaching the same tail from one head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Collision {
    pub tail: EntityId,
    pub kept: RelationId,
    pub dropped: RelationId,
}

/// The action space reorganized into an entity-indexed mask.
///
/// The policy is indexed by tail entity, so at most one relation per tail can
/// survive; the lowest relation id wins and the rest are reported.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMask {
    relation: Vec<Option<RelationId>>,
    count: usize,
    collisions: Vec<Collision>,
}

impl ActionMask {
    pub fn from_actions(space: &[Action], m: usize) -> Result<Self, KgError> {
        let mut relation: Vec<Option<RelationId>> = vec![None; m];
        let mut collisions = Vec::new();
        let mut count = 0;
        for a in space {
            let slot = relation
                .get_mut(a.tail.0)
                .ok_or(KgError::TailOutOfRange { tail: a.tail.0, m })?;
            match slot {
                None => {
                    *slot = Some(a.relation);
                    count += 1;
                }
                Some(existing) => {
                    let (kept, dropped) = if a.relation < *existing {
                        (a.relation, *existing)
                    } else {
                        (*existing, a.relation)
                    };
                    *existing = kept;
                    log::debug!("parallel edges to {}: kept {kept}, dropped {dropped}", a.tail);
                    collisions.push(Collision {
                        tail: a.tail,
                        kept,
                        dropped,
                    });
                }
            }
        }
        Ok(Self {
            relation,
            count,
            collisions,
        })
    }

    pub fn len(&self) -> usize {
        self.relation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Number of legal tails (the mask popcount).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_legal(&self, tail: usize) -> bool {
        matches!(self.relation.get(tail), Some(Some(_)))
    }

    pub fn bits(&self) -> Vec<bool> {
        self.relation.iter().map(Option::is_some).collect()
    }

    pub fn action_for(&self, tail: usize) -> Option<Action> {
        self.relation
            .get(tail)
            .copied()
            .flatten()
            .map(|r| Action::new(r, EntityId(tail)))
    }

    /// Surviving actions ordered by tail id.
    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.relation
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| Action::new(r, EntityId(i))))
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }
}

/// Binary mask of length `m`; see [`ActionMask`].
pub fn action_mask(space: &[Action], m: usize) -> Result<ActionMask, KgError> {
    ActionMask::from_actions(space, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "entity\tRF1\trisk_factor\n\
                       entity\tD1\tdisease\n\
                       entity\tD2\tdisease\n\
                       triplet\tRF1\tcauses\tD1\n\
                       triplet\tD1\tcauses\tD2\n";

    #[test]
    fn self_loops_added_on_load() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let d1 = kg.entity_id("D1").unwrap();
        let causes = kg.relation_id("causes").unwrap();
        let out = kg.outgoing(d1);
        assert_eq!(
            out,
            &[Action::new(kg.self_loop_relation(), d1), Action::new(causes, EntityId(2))]
        );
        for e in kg.entities() {
            assert!(kg
                .outgoing(e.id)
                .contains(&Action::new(kg.self_loop_relation(), e.id)));
        }
        assert_eq!(kg.counts().domain_triplets, 2);
        assert_eq!(kg.disease_count(), 2);
    }

    #[test]
    fn relation_types_have_one_have_and_one_self_loop() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let origins: Vec<_> = kg.relations().iter().map(|r| r.origin).collect();
        assert_eq!(origins.iter().filter(|o| **o == RelationOrigin::Have).count(), 1);
        assert_eq!(origins.iter().filter(|o| **o == RelationOrigin::SelfLoop).count(), 1);
    }

    #[test]
    fn empty_entity_list_is_an_error() {
        assert!(matches!(KnowledgeGraph::parse("# nothing\n"), Err(KgError::NoEntities)));
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        let dup = "entity\tA\tdisease\n# c\nentity\tA\trisk_factor\n";
        match KnowledgeGraph::parse(dup) {
            Err(KgError::AtLine { line: 3, source }) => {
                assert!(matches!(*source, KgError::DuplicateEntity(_)))
            }
            other => panic!("unexpected {other:?}"),
        }
        let dangling = "entity\tA\tdisease\ntriplet\tA\tcauses\tB\n";
        assert!(matches!(
            KnowledgeGraph::parse(dangling),
            Err(KgError::AtLine { line: 2, .. })
        ));
        let malformed = "entity\tA\n";
        assert!(KnowledgeGraph::parse(malformed).is_err());
        let bad_kind = "entity\tA\tsymptom\n";
        assert!(KnowledgeGraph::parse(bad_kind).unwrap_err().to_string().contains("symptom"));
        let dup_triplet = "entity\tA\tdisease\nentity\tB\tdisease\ntriplet\tA\tc\tB\ntriplet\tA\tc\tB\n";
        assert!(matches!(
            KnowledgeGraph::parse(dup_triplet),
            Err(KgError::AtLine { line: 4, .. })
        ));
        let reserved = "entity\tA\tdisease\ntriplet\tA\thave\tA\n";
        assert!(KnowledgeGraph::parse(reserved).is_err());
    }

    #[test]
    fn link_patient_cases() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let g = kg.link_patient(&[true, false, true]).unwrap();
        assert_eq!(g.patient_links(), &[EntityId(0), EntityId(2)]);
        assert!(matches!(
            kg.link_patient(&[false, false, false]),
            Err(KgError::NoConnection)
        ));
        let all = kg.link_patient(&[true, true, true]).unwrap();
        assert_eq!(all.patient_links().len(), 3);
        assert!(matches!(
            kg.link_patient(&[true]),
            Err(KgError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn action_space_examples() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let (rf1, d1, d2) = (EntityId(0), EntityId(1), EntityId(2));
        let causes = kg.relation_id("causes").unwrap();
        let g = kg.link_patient(&[true, true, false]).unwrap();
        assert_eq!(
            g.action_space(Node::Entity(d1), &[]),
            vec![Action::new(kg.self_loop_relation(), d1), Action::new(causes, d2)]
        );
        assert_eq!(
            g.action_space(Node::Patient, &[]),
            vec![Action::new(kg.have_relation(), rf1), Action::new(kg.have_relation(), d1)]
        );

        // D2's only domain edge points back to D1.
        let back = "entity\tD1\tdisease\nentity\tD2\tdisease\ntriplet\tD1\tc\tD2\ntriplet\tD2\tc\tD1\n";
        let kg2 = KnowledgeGraph::parse(back).unwrap();
        let g2 = kg2.link_patient(&[true, false]).unwrap();
        assert_eq!(
            g2.action_space(Node::Entity(EntityId(1)), &[EntityId(0)]),
            vec![Action::new(kg2.self_loop_relation(), EntityId(1))]
        );
    }

    #[test]
    fn mask_examples() {
        let r = RelationId(0);
        let mask = action_mask(&[Action::new(r, EntityId(1)), Action::new(r, EntityId(2))], 3).unwrap();
        assert_eq!(mask.bits(), vec![false, true, true]);
        assert!(action_mask(&[], 3).unwrap().is_empty());
        let all: Vec<_> = (0..4).map(|i| Action::new(r, EntityId(i))).collect();
        assert_eq!(action_mask(&all, 4).unwrap().bits(), vec![true; 4]);
        assert!(action_mask(&[Action::new(r, EntityId(5))], 3).is_err());
    }

    #[test]
    fn parallel_edges_keep_lowest_relation() {
        let text = "entity\tA\tdisease\nentity\tB\tdisease\ntriplet\tA\tx\tB\ntriplet\tA\ty\tB\n";
        let kg = KnowledgeGraph::parse(text).unwrap();
        assert_eq!(kg.counts().parallel_edges, 1);
        let g = kg.link_patient(&[true, false]).unwrap();
        let space = g.action_space(Node::Entity(EntityId(0)), &[]);
        assert_eq!(space.len(), 3);
        let mask = action_mask(&space, 2).unwrap();
        assert_eq!(mask.count(), 2);
        assert_eq!(mask.collisions().len(), 1);
        assert_eq!(mask.action_for(1).unwrap().relation, kg.relation_id("x").unwrap());
    }

    #[test]
    fn text_round_trip() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let again = KnowledgeGraph::parse(&kg.to_text()).unwrap();
        assert_eq!(kg.triplets(), again.triplets());
        assert_eq!(kg.entities(), again.entities());
    }
}
