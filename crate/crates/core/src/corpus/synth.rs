//! Deterministic synthetic frame lexicon and annotated corpus.
//!
//! Frames come in families, each an Inheritance tree rooted at one frame.
//! Every frame owns one unambiguous lexical unit; the remaining LUs are
//! ambiguous and evoke 2-4 frames, alternating between frames of a single
//! family and frames drawn from different families. Ambiguous targets in the
//! train/dev/test splits carry a second, frame-specific token in the target
//! span (a particle, as in "get on" vs "get off"); exemplar sentences mostly
//! use the bare lemma, so the two data sources differ in how ambiguity is
//! resolved.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Instance, Split};
use crate::error::{Error, Result};
use crate::lexicon::{
    FrameEntry, FrameId, LemmaPos, LexicalUnitEntry, Lexicon, LexiconFile, Pos, RelationEntry,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub exemplar: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Exemplar => self.exemplar,
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.exemplar + self.train + self.dev + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_families: usize,
    pub frames_per_family: usize,
    pub lus: usize,
    pub instances_per_split: SplitSizes,
    pub seed: u64,
    /// Probability that an instance is drawn through an ambiguous LU (when
    /// its frame has one).
    #[serde(default = "default_ambiguous_rate")]
    pub ambiguous_rate: f64,
    /// Probability that an ambiguous exemplar target carries its particle.
    /// Train/dev/test ambiguous targets always do.
    #[serde(default)]
    pub exemplar_particle_rate: f64,
}

fn default_ambiguous_rate() -> f64 {
    0.3
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_families: 6,
            frames_per_family: 4,
            lus: 40,
            instances_per_split: SplitSizes {
                exemplar: 600,
                train: 300,
                dev: 60,
                test: 120,
            },
            seed: 7,
            ambiguous_rate: default_ambiguous_rate(),
            exemplar_particle_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn n_frames(&self) -> usize {
        self.n_families * self.frames_per_family
    }

    fn validate(&self) -> Result<()> {
        if self.n_families == 0 || self.frames_per_family == 0 || self.n_frames() < 2 {
            return Err(Error::Config(
                "synthetic lexicon needs at least two frames".into(),
            ));
        }
        if self.lus < self.n_frames() {
            return Err(Error::Config(format!(
                "{} lexical units cannot cover {} frames",
                self.lus,
                self.n_frames()
            )));
        }
        for (name, p) in [
            ("ambiguous_rate", self.ambiguous_rate),
            ("exemplar_particle_rate", self.exemplar_particle_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

struct WordMint {
    used: HashSet<String>,
}

impl WordMint {
    const ONSETS: [&'static str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
    ];
    const VOWELS: [&'static str; 5] = ["a", "e", "i", "o", "u"];

    fn new(reserved: &[&str]) -> Self {
        WordMint {
            used: reserved.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(Self::ONSETS[rng.gen_range(0..Self::ONSETS.len())]);
                w.push_str(Self::VOWELS[rng.gen_range(0..Self::VOWELS.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

const GLUE: [&str; 10] = [
    "a",
    "the",
    "situation",
    "where",
    "some",
    "entity",
    "in",
    "general",
    "happens",
    "like",
];

/// Builds the lexicon and corpus. Identical configs give identical output.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Lexicon, Corpus)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mint = WordMint::new(&GLUE);
    let fpf = cfg.frames_per_family;
    let n_frames = cfg.n_frames();

    let mut frames: Vec<FrameEntry> = Vec::with_capacity(n_frames);
    let mut relations = Vec::new();
    let mut member_words = Vec::with_capacity(n_frames);
    for _family in 0..cfg.n_families {
        let fam_word = mint.fresh(&mut rng);
        let fam_desc = mint.fresh(&mut rng);
        let base = frames.len();
        let parents = family_parents(fpf);
        for (j, parent_list) in parents.iter().enumerate() {
            let member = mint.fresh(&mut rng);
            let (name, definition) = if j == 0 {
                (
                    capitalize(&fam_word),
                    format!("a {fam_word} {fam_desc} situation in general where some entity {member}"),
                )
            } else {
                let d1 = mint.fresh(&mut rng);
                let d2 = mint.fresh(&mut rng);
                let parent_member: &String = &member_words[base + parent_list[0]];
                (
                    format!("{}_{}", capitalize(&fam_word), member),
                    format!(
                        "a {fam_word} {fam_desc} situation like {parent_member} where some entity {member} {d1} {d2}"
                    ),
                )
            };
            for &p in parent_list {
                relations.push(RelationEntry {
                    kind: "Inheritance".into(),
                    sup: frames[base + p].name.clone(),
                    sub: name.clone(),
                });
            }
            member_words.push(member);
            frames.push(FrameEntry { name, definition });
        }
    }

    // Lexical units: one unambiguous LU per frame, then ambiguous ones.
    let pos_cycle = [Pos::Verb, Pos::Noun, Pos::Adjective];
    let mut lu_frames: Vec<Vec<usize>> = (0..n_frames).map(|f| vec![f]).collect();
    for r in 0..cfg.lus - n_frames {
        let size = 2 + r % 3;
        let within_family = r % 2 == 0 && fpf >= 2;
        let mut chosen = if within_family {
            let fam = (r / 2) % cfg.n_families;
            let mut members: Vec<usize> = (fam * fpf..(fam + 1) * fpf).collect();
            members.shuffle(&mut rng);
            members.truncate(size.min(fpf));
            members
        } else {
            let mut fams: Vec<usize> = (0..cfg.n_families).collect();
            fams.shuffle(&mut rng);
            let mut picked: Vec<usize> = fams
                .iter()
                .take(size)
                .map(|&fam| fam * fpf + rng.gen_range(0..fpf))
                .collect();
            if picked.len() < 2 {
                // single family: fall back to any distinct frames
                let mut all: Vec<usize> = (0..n_frames).collect();
                all.shuffle(&mut rng);
                picked = all.into_iter().take(size.min(n_frames)).collect();
            }
            picked
        };
        chosen.sort_unstable();
        chosen.dedup();
        lu_frames.push(chosen);
    }
    let lu_keys: Vec<LemmaPos> = (0..lu_frames.len())
        .map(|i| LemmaPos::new(&mint.fresh(&mut rng), pos_cycle[i % pos_cycle.len()]))
        .collect::<Result<_>>()?;

    let lexical_units = lu_keys
        .iter()
        .zip(&lu_frames)
        .map(|(key, fs)| LexicalUnitEntry {
            lemma: key.lemma().to_string(),
            pos: key.pos().to_string(),
            frames: fs.iter().map(|&f| frames[f].name.clone()).collect(),
        })
        .collect();
    let lex = Lexicon::from_file_repr(&LexiconFile {
        frames,
        lexical_units,
        relations,
    })?;

    let particles: Vec<String> = (0..n_frames).map(|_| mint.fresh(&mut rng)).collect();
    let fillers: Vec<String> = (0..24).map(|_| mint.fresh(&mut rng)).collect();
    let ambiguous_for: Vec<Vec<usize>> = (0..n_frames)
        .map(|f| {
            (n_frames..lu_frames.len())
                .filter(|&lu| lu_frames[lu].contains(&f) && lu_frames[lu].len() >= 2)
                .collect()
        })
        .collect();

    let mut instances = Vec::with_capacity(cfg.instances_per_split.total());
    for split in Split::ALL {
        let count = cfg.instances_per_split.get(split);
        let mut golds: Vec<usize> = (0..count).map(|i| i % n_frames).collect();
        golds.shuffle(&mut rng);
        for gold in golds {
            let ambiguous = !ambiguous_for[gold].is_empty() && rng.gen_bool(cfg.ambiguous_rate);
            let lu = if ambiguous {
                *ambiguous_for[gold].choose(&mut rng).expect("non-empty")
            } else {
                gold
            };
            let particle = ambiguous
                && match split {
                    Split::Exemplar => rng.gen_bool(cfg.exemplar_particle_rate),
                    _ => true,
                };
            let mut tokens = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                tokens.push(fillers.choose(&mut rng).expect("fillers").clone());
            }
            let start = tokens.len();
            tokens.push(lu_keys[lu].lemma().to_string());
            if particle {
                tokens.push(particles[gold].clone());
            }
            let end = tokens.len() - 1;
            tokens.push("the".to_string());
            for _ in 0..rng.gen_range(1..=3) {
                tokens.push(fillers.choose(&mut rng).expect("fillers").clone());
            }
            instances.push(Instance {
                tokens,
                target_start: start,
                target_end: end,
                lu: lu_keys[lu].clone(),
                gold: FrameId(gold),
                split,
            });
        }
    }
    Ok((lex, Corpus::new(instances)))
}

/// Parent lists (family-local indices) for each frame of one family. Frame 0
/// is the root; the first half of the rest hang off the root, the others off
/// a first-level frame. With four or more frames the last frame also inherits
/// from a second first-level frame, so the family is a DAG rather than a tree.
fn family_parents(fpf: usize) -> Vec<Vec<usize>> {
    let mut parents = vec![Vec::new(); fpf];
    if fpf < 2 {
        return parents;
    }
    let first_level = fpf / 2;
    for (j, list) in parents.iter_mut().enumerate().skip(1) {
        if j <= first_level {
            list.push(0);
        } else {
            list.push(j - first_level);
        }
    }
    if fpf >= 4 {
        let last = fpf - 1;
        if parents[last][0] != first_level {
            parents[last].push(first_level);
        }
    }
    parents
}
