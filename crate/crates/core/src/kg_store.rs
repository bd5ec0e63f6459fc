//! Timestamped financial knowledge graph.
//!
//! Facts are `(head, relation, tail, date)` rows. A [`KnowledgeView`] exposes
//! only facts dated strictly before a cutoff, which is how samples are kept
//! from seeing knowledge that postdates their call. Anchor entities are found
//! in a token sequence by case-insensitive leftmost-longest matching and each
//! anchor contributes its one-hop facts in both directions.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub timestamp: NaiveDate,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug, Default)]
struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl SymbolTable {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }
}

/// Token-sequence trie over lowercased entity surface forms.
#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    /// Entities whose full surface form ends here, ascending by id.
    entities: Vec<EntityId>,
}

pub fn surface_tokens(surface: &str) -> Vec<String> {
    surface.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: SymbolTable,
    relations: SymbolTable,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    by_head: Vec<Vec<usize>>,
    by_tail: Vec<Vec<usize>>,
    /// Earliest fact date touching each entity; an entity is linkable in a
    /// view iff this is before the cutoff.
    first_seen: Vec<NaiveDate>,
    trie: Vec<TrieNode>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self {
            entities: SymbolTable::default(),
            relations: SymbolTable::default(),
            triples: Vec::new(),
            seen: HashSet::new(),
            by_head: Vec::new(),
            by_tail: Vec::new(),
            first_seen: Vec::new(),
            trie: vec![TrieNode::default()],
        }
    }

    /// Reads a tab-separated export. `#` lines and blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, KgError> {
        let mut kg = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(KgError::Parse {
                    line: line_no,
                    message: format!("expected 4 tab-separated columns, found {}", cols.len()),
                });
            }
            let date = NaiveDate::parse_from_str(cols[3].trim(), "%Y-%m-%d").map_err(|e| {
                KgError::Parse {
                    line: line_no,
                    message: format!("bad date {:?}: {e}", cols[3]),
                }
            })?;
            kg.insert(cols[0].trim(), cols[1].trim(), cols[2].trim(), date)
                .map_err(|message| KgError::Parse {
                    line: line_no,
                    message,
                })?;
        }
        Ok(kg)
    }

    /// Adds one fact. Returns `Ok(false)` when the exact row already exists.
    pub fn add_triple(
        &mut self,
        head: &str,
        relation: &str,
        tail: &str,
        timestamp: NaiveDate,
    ) -> Result<bool, KgError> {
        self.insert(head, relation, tail, timestamp)
            .map_err(|message| KgError::Parse { line: 0, message })
    }

    fn insert(
        &mut self,
        head: &str,
        relation: &str,
        tail: &str,
        timestamp: NaiveDate,
    ) -> Result<bool, String> {
        if head.is_empty() || tail.is_empty() {
            return Err("empty entity surface form".into());
        }
        if relation.is_empty() {
            return Err("empty relation name".into());
        }
        let head = EntityId(self.intern_entity(head));
        let tail = EntityId(self.intern_entity(tail));
        let relation = RelationId(self.relations.intern(relation));
        let triple = Triple {
            head,
            relation,
            tail,
            timestamp,
        };
        if !self.seen.insert(triple) {
            return Ok(false);
        }
        let idx = self.triples.len();
        self.triples.push(triple);
        self.by_head[head.0 as usize].push(idx);
        if tail != head {
            self.by_tail[tail.0 as usize].push(idx);
        }
        for e in [head, tail] {
            let fs = &mut self.first_seen[e.0 as usize];
            if timestamp < *fs {
                *fs = timestamp;
            }
        }
        Ok(true)
    }

    fn intern_entity(&mut self, surface: &str) -> u32 {
        let before = self.entities.names.len();
        let id = self.entities.intern(surface);
        if self.entities.names.len() > before {
            self.by_head.push(Vec::new());
            self.by_tail.push(Vec::new());
            self.first_seen.push(NaiveDate::MAX);
            let mut node = 0;
            for tok in surface_tokens(surface) {
                node = match self.trie[node].children.get(&tok) {
                    Some(&next) => next,
                    None => {
                        let next = self.trie.len();
                        self.trie.push(TrieNode::default());
                        self.trie[node].children.insert(tok, next);
                        next
                    }
                };
            }
            // ids are issued in increasing order, so the list stays sorted
            self.trie[node].entities.push(EntityId(id));
        }
        id
    }

    pub fn n_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities.names[id.0 as usize]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations.names[id.0 as usize]
    }

    pub fn entity_id(&self, surface: &str) -> Option<EntityId> {
        self.entities.index.get(surface).copied().map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.index.get(name).copied().map(RelationId)
    }

    /// Serializes back to the tab-separated load format, in load order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail),
                t.timestamp.format("%Y-%m-%d")
            ));
        }
        out
    }

    pub fn view(&self, cutoff: NaiveDate) -> KnowledgeView<'_> {
        KnowledgeView { kg: self, cutoff }
    }
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Facts strictly before `cutoff`.
#[derive(Clone, Copy, Debug)]
pub struct KnowledgeView<'a> {
    kg: &'a KnowledgeGraph,
    cutoff: NaiveDate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorMatch {
    pub entity: EntityId,
    /// Half-open range into the flattened token sequence.
    pub token_span: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgePair {
    pub anchor: EntityId,
    pub relation: RelationId,
    pub neighbor: EntityId,
    pub direction: Direction,
    /// Position of the originating anchor in the `anchors` slice passed to
    /// [`KnowledgeView::retrieve_knowledge`].
    pub anchor_index: usize,
    /// Load-order index of the underlying fact.
    pub triple_index: usize,
    pub timestamp: NaiveDate,
}

impl<'a> KnowledgeView<'a> {
    pub fn graph(&self) -> &'a KnowledgeGraph {
        self.kg
    }

    pub fn cutoff(&self) -> NaiveDate {
        self.cutoff
    }

    pub fn is_visible(&self, t: &Triple) -> bool {
        t.timestamp < self.cutoff
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, &'a Triple)> + 'a {
        let cutoff = self.cutoff;
        self.kg
            .triples
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.timestamp < cutoff)
    }

    /// An entity can anchor only if it takes part in at least one visible fact.
    pub fn is_linkable(&self, e: EntityId) -> bool {
        self.kg.first_seen[e.0 as usize] < self.cutoff
    }

    /// Leftmost-longest, case-insensitive, non-overlapping entity matches.
    ///
    /// When several linkable entities share a lowercased surface form the one
    /// with the smallest id is reported.
    pub fn link_entities<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<AnchorMatch> {
        let lowered: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        let trie = &self.kg.trie;
        let mut out = Vec::new();
        let mut start = 0;
        while start < lowered.len() {
            let mut node = 0;
            let mut best: Option<(usize, EntityId)> = None;
            for (end, tok) in lowered.iter().enumerate().skip(start) {
                match trie[node].children.get(tok) {
                    Some(&next) => node = next,
                    None => break,
                }
                if let Some(&e) = trie[node].entities.iter().find(|&&e| self.is_linkable(e)) {
                    best = Some((end + 1, e));
                }
            }
            match best {
                Some((end, entity)) => {
                    out.push(AnchorMatch {
                        entity,
                        token_span: start..end,
                    });
                    start = end;
                }
                None => start += 1,
            }
        }
        out
    }

    /// One-hop facts for each anchor, newest first (ties by load order),
    /// at most `cap_per_anchor` per anchor, concatenated in anchor order.
    ///
    /// A self-relation contributes one outgoing pair.
    pub fn retrieve_knowledge(
        &self,
        anchors: &[AnchorMatch],
        cap_per_anchor: usize,
    ) -> Vec<KnowledgePair> {
        let mut out = Vec::new();
        for (anchor_index, anchor) in anchors.iter().enumerate() {
            let e = anchor.entity.0 as usize;
            let mut hits: Vec<usize> = self.kg.by_head[e]
                .iter()
                .chain(&self.kg.by_tail[e])
                .copied()
                .filter(|&i| self.is_visible(&self.kg.triples[i]))
                .collect();
            hits.sort_by(|&a, &b| {
                let (ta, tb) = (&self.kg.triples[a], &self.kg.triples[b]);
                tb.timestamp.cmp(&ta.timestamp).then(a.cmp(&b))
            });
            hits.truncate(cap_per_anchor);
            for i in hits {
                let t = self.kg.triples[i];
                let (neighbor, direction) = if t.head == anchor.entity {
                    (t.tail, Direction::Outgoing)
                } else {
                    (t.head, Direction::Incoming)
                };
                out.push(KnowledgePair {
                    anchor: anchor.entity,
                    relation: t.relation,
                    neighbor,
                    direction,
                    anchor_index,
                    triple_index: i,
                    timestamp: t.timestamp,
                });
            }
        }
        out
    }
}
