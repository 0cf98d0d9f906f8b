//! Frame inventory: frames with definitions, lexical units, and the
//! Inheritance hierarchy used to derive sibling frames.
//!
//! A lexicon is immutable once built. Frame ids are dense and follow the
//! order in which frames appear in the source file, so embeddings and
//! indexes line up across runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense handle of a frame within one lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameId(pub usize);

impl FrameId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub id: FrameId,
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pos {
    Verb,
    Noun,
    Adjective,
    Adverb,
    Preposition,
    Numeral,
    Other,
}

impl Pos {
    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Verb => "v",
            Pos::Noun => "n",
            Pos::Adjective => "a",
            Pos::Adverb => "adv",
            Pos::Preposition => "prep",
            Pos::Numeral => "num",
            Pos::Other => "other",
        }
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v" => Ok(Pos::Verb),
            "n" => Ok(Pos::Noun),
            "a" => Ok(Pos::Adjective),
            "adv" => Ok(Pos::Adverb),
            "prep" => Ok(Pos::Preposition),
            "num" => Ok(Pos::Numeral),
            "other" => Ok(Pos::Other),
            _ => Err(Error::InvalidPos(s.to_string())),
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `lemma.pos` key, e.g. `get.v`. The lemma is stored lowercased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LemmaPos {
    lemma: String,
    pos: Pos,
}

impl LemmaPos {
    pub fn new(lemma: &str, pos: Pos) -> Result<Self> {
        let lemma = lemma.trim().to_lowercase();
        if lemma.is_empty() || lemma.chars().any(char::is_whitespace) {
            return Err(Error::InvalidLemma(lemma));
        }
        Ok(LemmaPos { lemma, pos })
    }

    pub fn parse_parts(lemma: &str, pos: &str) -> Result<Self> {
        LemmaPos::new(lemma, pos.parse()?)
    }

    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn pos(&self) -> Pos {
        self.pos
    }
}

impl fmt::Display for LemmaPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.lemma, self.pos)
    }
}

impl FromStr for LemmaPos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lemma, pos) = s
            .rsplit_once('.')
            .ok_or_else(|| Error::InvalidLemma(s.to_string()))?;
        LemmaPos::parse_parts(lemma, pos)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexicalUnit {
    pub key: LemmaPos,
    pub evoked: BTreeSet<FrameId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Inheritance,
    /// Any other FrameNet relation; parsed and kept, but carries no semantics.
    Other(String),
}

impl RelationKind {
    pub fn as_str(&self) -> &str {
        match self {
            RelationKind::Inheritance => "Inheritance",
            RelationKind::Other(s) => s,
        }
    }

    fn parse(s: &str) -> Self {
        if s == "Inheritance" {
            RelationKind::Inheritance
        } else {
            RelationKind::Other(s.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRelation {
    pub kind: RelationKind,
    pub sup: FrameId,
    pub sub: FrameId,
}

/// On-disk layout of `lexicon.json`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct LexiconFile {
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub lexical_units: Vec<LexicalUnitEntry>,
    #[serde(default)]
    pub relations: Vec<RelationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameEntry {
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LexicalUnitEntry {
    pub lemma: String,
    pub pos: String,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RelationEntry {
    pub kind: String,
    pub sup: String,
    pub sub: String,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    frames: Vec<Frame>,
    by_name: HashMap<String, FrameId>,
    lexical_units: BTreeMap<LemmaPos, LexicalUnit>,
    relations: Vec<FrameRelation>,
    parents: Vec<Vec<FrameId>>,
    children: Vec<Vec<FrameId>>,
    sibling_map: Vec<Vec<FrameId>>,
}

impl Lexicon {
    pub fn from_file_repr(file: &LexiconFile) -> Result<Lexicon> {
        let mut frames = Vec::with_capacity(file.frames.len());
        let mut by_name = HashMap::with_capacity(file.frames.len());
        for (i, entry) in file.frames.iter().enumerate() {
            let name = entry.name.trim();
            if name.is_empty() {
                return Err(Error::Parse(format!("frame #{i} has an empty name")));
            }
            if entry.definition.trim().is_empty() {
                return Err(Error::EmptyDefinition(name.to_string()));
            }
            if by_name.insert(name.to_string(), FrameId(i)).is_some() {
                return Err(Error::DuplicateFrame(name.to_string()));
            }
            frames.push(Frame {
                id: FrameId(i),
                name: name.to_string(),
                definition: entry.definition.trim().to_string(),
            });
        }
        let resolve = |name: &str| -> Result<FrameId> {
            by_name
                .get(name.trim())
                .copied()
                .ok_or_else(|| Error::UnknownFrame(name.to_string()))
        };

        let mut lexical_units = BTreeMap::new();
        for entry in &file.lexical_units {
            let key = LemmaPos::parse_parts(&entry.lemma, &entry.pos)?;
            if entry.frames.is_empty() {
                return Err(Error::EmptyLexicalUnit(key.to_string()));
            }
            let evoked = entry
                .frames
                .iter()
                .map(|n| resolve(n))
                .collect::<Result<BTreeSet<_>>>()?;
            if lexical_units.contains_key(&key) {
                return Err(Error::DuplicateLexicalUnit(key.to_string()));
            }
            lexical_units.insert(key.clone(), LexicalUnit { key, evoked });
        }

        let mut relations = Vec::with_capacity(file.relations.len());
        let mut seen = BTreeSet::new();
        for entry in &file.relations {
            let sup = resolve(&entry.sup)?;
            let sub = resolve(&entry.sub)?;
            if sup == sub {
                return Err(Error::SelfInheritance(entry.sup.clone()));
            }
            let kind = RelationKind::parse(entry.kind.trim());
            if !seen.insert((kind.as_str().to_string(), sup, sub)) {
                return Err(Error::DuplicateRelation(format!(
                    "{}({} -> {})",
                    kind.as_str(),
                    entry.sup,
                    entry.sub
                )));
            }
            relations.push(FrameRelation { kind, sup, sub });
        }

        let n = frames.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for rel in relations.iter().filter(|r| r.kind == RelationKind::Inheritance) {
            parents[rel.sub.0].push(rel.sup);
            children[rel.sup.0].push(rel.sub);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        if let Some(f) = find_cycle(&children) {
            return Err(Error::InheritanceCycle(frames[f.0].name.clone()));
        }

        let sibling_map = (0..n)
            .map(|f| derive_siblings(FrameId(f), &parents, &children))
            .collect();

        Ok(Lexicon {
            frames,
            by_name,
            lexical_units,
            relations,
            parents,
            children,
            sibling_map,
        })
    }

    pub fn to_file_repr(&self) -> LexiconFile {
        LexiconFile {
            frames: self
                .frames
                .iter()
                .map(|f| FrameEntry {
                    name: f.name.clone(),
                    definition: f.definition.clone(),
                })
                .collect(),
            lexical_units: self
                .lexical_units
                .values()
                .map(|lu| LexicalUnitEntry {
                    lemma: lu.key.lemma().to_string(),
                    pos: lu.key.pos().to_string(),
                    frames: lu.evoked.iter().map(|f| self.frames[f.0].name.clone()).collect(),
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|r| RelationEntry {
                    kind: r.kind.as_str().to_string(),
                    sup: self.frames[r.sup.0].name.clone(),
                    sub: self.frames[r.sub.0].name.clone(),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Lexicon> {
        let file: LexiconFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("lexicon: {e}")))?;
        Lexicon::from_file_repr(&file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_repr()).expect("lexicon serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = FrameId> + '_ {
        (0..self.frames.len()).map(FrameId)
    }

    pub fn frame(&self, id: FrameId) -> Result<&Frame> {
        self.frames.get(id.0).ok_or(Error::UnknownFrameId(id.0))
    }

    pub fn name(&self, id: FrameId) -> &str {
        &self.frames[id.0].name
    }

    pub fn id_of(&self, name: &str) -> Option<FrameId> {
        self.by_name.get(name).copied()
    }

    pub fn lexical_units(&self) -> impl Iterator<Item = &LexicalUnit> {
        self.lexical_units.values()
    }

    pub fn relations(&self) -> &[FrameRelation] {
        &self.relations
    }

    pub fn inheritance_pairs(&self) -> impl Iterator<Item = (FrameId, FrameId)> + '_ {
        self.relations
            .iter()
            .filter(|r| r.kind == RelationKind::Inheritance)
            .map(|r| (r.sup, r.sub))
    }

    pub fn parents_of(&self, f: FrameId) -> &[FrameId] {
        &self.parents[f.0]
    }

    pub fn children_of(&self, f: FrameId) -> &[FrameId] {
        &self.children[f.0]
    }

    /// Lexicon filtering. `None` means the LU is not registered, which is
    /// distinct from registered-but-empty (impossible after validation).
    pub fn candidates_for(&self, lu: &LemmaPos) -> Option<&BTreeSet<FrameId>> {
        self.lexical_units.get(lu).map(|u| &u.evoked)
    }

    /// Other children of every Inheritance parent of `f`, ascending by id.
    pub fn siblings_of(&self, f: FrameId) -> Result<&[FrameId]> {
        self.sibling_map
            .get(f.0)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownFrameId(f.0))
    }

    /// Input text of the frame encoder: `name | definition`.
    pub fn frame_input_text(&self, f: FrameId) -> Result<String> {
        let frame = self.frame(f)?;
        Ok(format!("{} | {}", frame.name, frame.definition))
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::from_json(&text)
}

fn derive_siblings(f: FrameId, parents: &[Vec<FrameId>], children: &[Vec<FrameId>]) -> Vec<FrameId> {
    let set: BTreeSet<FrameId> = parents[f.0]
        .iter()
        .flat_map(|p| children[p.0].iter().copied())
        .filter(|&g| g != f)
        .collect();
    set.into_iter().collect()
}

/// Returns a frame lying on a cycle of the child graph, if any.
fn find_cycle(children: &[Vec<FrameId>]) -> Option<FrameId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unseen,
        Active,
        Done,
    }
    let n = children.len();
    let mut mark = vec![Mark::Unseen; n];
    for root in 0..n {
        if mark[root] != Mark::Unseen {
            continue;
        }
        // iterative DFS: (node, next child index)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&child) = children[node].get(*next) {
                *next += 1;
                match mark[child.0] {
                    Mark::Active => return Some(child),
                    Mark::Unseen => {
                        mark[child.0] = Mark::Active;
                        stack.push((child.0, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Getting and Transition_to_a_state families of Inheritance pairs, plus
    /// a few LUs mirroring the `get.v` example.
    pub fn inheritance_table_json() -> String {
        let frames = [
            ("Getting", "A Recipient starts off without the Theme in their possession, and then comes to possess it."),
            ("Receiving", "A Donor transfers a Theme to a Recipient."),
            ("Amassing", "A Recipient accumulates a Mass_theme over time."),
            ("Commerce_buy", "A Buyer gives Money to a Seller in exchange for Goods."),
            ("Commerce_collect", "A Buyer collects goods from a Seller."),
            ("Taking", "An Agent removes a Theme from a Source so that it is in the Agent's possession."),
            ("Borrowing", "A Borrower takes possession of a Theme belonging to a Lender."),
            ("Transition_to_a_state", "An Entity undergoes a change into a Final_state."),
            ("Becoming", "An Entity ends up in a Final_state or Final_category."),
            ("Undergo_change", "An Entity changes from an Initial_category to a Final_category."),
            ("Undergo_transformation", "An Entity is transformed into a different kind of entity."),
            ("Transition_to_a_quality", "An Entity comes to have a Final_quality."),
            ("Arriving", "An object Theme moves in the direction of a Goal."),
            ("Board_vehicle", "A Traveller boards a Vehicle that they intend to use as a means of transportation either as a passenger or as a driver"),
        ];
        let relations = [
            ("Getting", "Receiving"),
            ("Getting", "Amassing"),
            ("Getting", "Commerce_buy"),
            ("Getting", "Commerce_collect"),
            ("Getting", "Taking"),
            ("Receiving", "Borrowing"),
            ("Transition_to_a_state", "Becoming"),
            ("Transition_to_a_state", "Undergo_change"),
            ("Undergo_change", "Undergo_transformation"),
            ("Becoming", "Transition_to_a_quality"),
        ];
        let file = LexiconFile {
            frames: frames
                .iter()
                .map(|(n, d)| FrameEntry {
                    name: n.to_string(),
                    definition: d.to_string(),
                })
                .collect(),
            lexical_units: vec![
                LexicalUnitEntry {
                    lemma: "get".into(),
                    pos: "v".into(),
                    frames: vec![
                        "Arriving".into(),
                        "Getting".into(),
                        "Board_vehicle".into(),
                        "Becoming".into(),
                    ],
                },
                LexicalUnitEntry {
                    lemma: "receive".into(),
                    pos: "v".into(),
                    frames: vec!["Receiving".into(), "Getting".into()],
                },
                LexicalUnitEntry {
                    lemma: "borrow".into(),
                    pos: "v".into(),
                    frames: vec!["Borrowing".into()],
                },
            ],
            relations: relations
                .iter()
                .map(|(a, b)| RelationEntry {
                    kind: "Inheritance".into(),
                    sup: a.to_string(),
                    sub: b.to_string(),
                })
                .collect(),
        };
        serde_json::to_string(&file).unwrap()
    }

    pub fn inheritance_table() -> Lexicon {
        Lexicon::from_json(&inheritance_table_json()).unwrap()
    }
}
