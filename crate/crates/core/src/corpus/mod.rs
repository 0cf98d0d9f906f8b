//! Annotated target instances, word-level tokenization, and a synthetic
//! dataset generator for desk-scale experiments.

mod synth;
mod vocab;

pub use synth::{generate_synthetic, SplitSizes, SynthConfig};
pub use vocab::{build_vocab, split_text, TokenIds, Vocab, MASK, PAD, SEP, UNK};

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{FrameId, LemmaPos, Lexicon};

/// Longest sentence (in tokens) accepted anywhere in the pipeline; bounds the
/// position-embedding table.
pub const MAX_SEQ_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Exemplar,
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Exemplar, Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Exemplar => "exemplar",
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split '{s}'")))
    }
}

/// One annotated target occurrence. The span is inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub target_start: usize,
    pub target_end: usize,
    pub lu: LemmaPos,
    pub gold: FrameId,
    pub split: Split,
}

impl Instance {
    pub fn validate(&self, lex: &Lexicon) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::InvalidSpan("empty sentence".into()));
        }
        if n > MAX_SEQ_LEN {
            return Err(Error::SequenceTooLong {
                len: n,
                max: MAX_SEQ_LEN,
            });
        }
        if self.target_start > self.target_end || self.target_end >= n {
            return Err(Error::InvalidSpan(format!(
                "[{}, {}] in a sentence of {n} tokens",
                self.target_start, self.target_end
            )));
        }
        lex.frame(self.gold)?;
        Ok(())
    }

    pub fn span(&self) -> (usize, usize) {
        (self.target_start, self.target_end)
    }

    pub fn span_len(&self) -> usize {
        self.target_end - self.target_start + 1
    }
}

/// One line of `corpus.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceRecord {
    pub tokens: Vec<String>,
    pub target_start: usize,
    pub target_end: usize,
    pub lemma: String,
    pub pos: String,
    pub gold: String,
    pub split: Split,
}

impl InstanceRecord {
    pub fn resolve(&self, lex: &Lexicon) -> Result<Instance> {
        let gold = lex
            .id_of(&self.gold)
            .ok_or_else(|| Error::UnknownFrame(self.gold.clone()))?;
        let inst = Instance {
            tokens: self.tokens.clone(),
            target_start: self.target_start,
            target_end: self.target_end,
            lu: LemmaPos::parse_parts(&self.lemma, &self.pos)?,
            gold,
            split: self.split,
        };
        inst.validate(lex)?;
        Ok(inst)
    }

    pub fn from_instance(inst: &Instance, lex: &Lexicon) -> Self {
        InstanceRecord {
            tokens: inst.tokens.clone(),
            target_start: inst.target_start,
            target_end: inst.target_end,
            lemma: inst.lu.lemma().to_string(),
            pos: inst.lu.pos().to_string(),
            gold: lex.name(inst.gold).to_string(),
            split: inst.split,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub instances: Vec<Instance>,
}

impl Corpus {
    pub fn new(instances: Vec<Instance>) -> Self {
        Corpus { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<Instance> {
        self.instances
            .iter()
            .filter(|i| i.split == split)
            .cloned()
            .collect()
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.split).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_jsonl(&self, lex: &Lexicon) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            let rec = InstanceRecord::from_instance(inst, lex);
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path, lex: &Lexicon) -> Result<()> {
        std::fs::write(path, self.to_jsonl(lex)).map_err(|e| Error::io(path, e))
    }

    pub fn from_reader(reader: impl BufRead, lex: &Lexicon) -> Result<Corpus> {
        let mut instances = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::ParseLine {
                line: line_no,
                msg: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| Error::ParseLine {
                line: line_no,
                msg: e.to_string(),
            })?;
            let inst = rec.resolve(lex).map_err(|e| Error::ParseLine {
                line: line_no,
                msg: e.to_string(),
            })?;
            instances.push(inst);
        }
        Ok(Corpus { instances })
    }
}

pub fn load_corpus(path: &Path, lex: &Lexicon) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_reader(BufReader::new(file), lex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::fixtures::inheritance_table;

    #[test]
    fn loads_board_vehicle_line() {
        let lex = inheritance_table();
        let line = r#"{"tokens":["He","got","on","the","bus"],"target_start":1,"target_end":1,"lemma":"get","pos":"v","gold":"Board_vehicle","split":"train"}"#;
        let corpus = Corpus::from_reader(line.as_bytes(), &lex).unwrap();
        assert_eq!(corpus.len(), 1);
        let inst = &corpus.instances[0];
        assert_eq!(inst.gold, lex.id_of("Board_vehicle").unwrap());
        assert_eq!(inst.lu.to_string(), "get.v");
        assert_eq!(inst.split, Split::Train);
        assert_eq!(corpus.split_counts()[&Split::Train], 1);
    }

    #[test]
    fn rejects_out_of_range_span_with_line_number() {
        let lex = inheritance_table();
        let good = r#"{"tokens":["a","b"],"target_start":0,"target_end":1,"lemma":"get","pos":"v","gold":"Getting","split":"dev"}"#;
        let bad = r#"{"tokens":["a","b"],"target_start":0,"target_end":2,"lemma":"get","pos":"v","gold":"Getting","split":"dev"}"#;
        let text = format!("{good}\n{bad}\n");
        match Corpus::from_reader(text.as_bytes(), &lex) {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
        // multiword span accepted
        let corpus = Corpus::from_reader(good.as_bytes(), &lex).unwrap();
        assert_eq!(corpus.instances[0].span_len(), 2);
    }

    #[test]
    fn rejects_unknown_gold_and_malformed() {
        let lex = inheritance_table();
        let unknown = r#"{"tokens":["a"],"target_start":0,"target_end":0,"lemma":"get","pos":"v","gold":"Nope","split":"dev"}"#;
        let err = Corpus::from_reader(unknown.as_bytes(), &lex).unwrap_err();
        assert!(err.to_string().contains("Nope"), "{err}");
        let err = Corpus::from_reader("{\"tokens\":".as_bytes(), &lex).unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 1, .. }));
    }

    #[test]
    fn rejects_overlong_sentence() {
        let lex = inheritance_table();
        let rec = InstanceRecord {
            tokens: vec!["w".to_string(); MAX_SEQ_LEN + 1],
            target_start: 0,
            target_end: 0,
            lemma: "get".into(),
            pos: "v".into(),
            gold: "Getting".into(),
            split: Split::Test,
        };
        assert!(matches!(rec.resolve(&lex), Err(Error::SequenceTooLong { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let lex = inheritance_table();
        let line = r#"{"tokens":["He","got","on","the","bus"],"target_start":1,"target_end":2,"lemma":"get","pos":"v","gold":"Board_vehicle","split":"exemplar"}"#;
        let corpus = Corpus::from_reader(line.as_bytes(), &lex).unwrap();
        assert_eq!(corpus.to_jsonl(&lex).trim_end(), line);
    }
}
