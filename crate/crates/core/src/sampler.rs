//! Batching and negative-set construction for the two contrastive objectives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::lexicon::{FrameId, Lexicon};

#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub instances: Vec<&'a Instance>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    InBatch,
    InCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Batch,
    Candidate,
    Sibling,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSet {
    pub ids: Vec<FrameId>,
    pub kind: NegativeKind,
    pub provenance: Vec<Provenance>,
}

impl NegativeSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Shuffles with `seed` and cuts consecutive chunks. A trailing chunk with
/// fewer than two instances is dropped: it would have no in-batch negatives.
pub fn make_batches(data: &[Instance], batch_size: usize, seed: u64) -> Result<Vec<Batch<'_>>> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order: Vec<&Instance> = data.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2 || batch_size == 1)
        .map(|c| Batch {
            instances: c.to_vec(),
        })
        .collect())
}

/// Gold frames of the other batch members, without the instance's own gold
/// and without repeats, in order of first occurrence.
pub fn in_batch_negatives(batch: &Batch<'_>, i: usize) -> Result<NegativeSet> {
    let own = batch
        .instances
        .get(i)
        .ok_or_else(|| Error::InvalidArgument(format!("batch index {i} out of range")))?
        .gold;
    let mut ids = Vec::new();
    for (j, inst) in batch.instances.iter().enumerate() {
        if j != i && inst.gold != own && !ids.contains(&inst.gold) {
            ids.push(inst.gold);
        }
    }
    let provenance = vec![Provenance::Batch; ids.len()];
    Ok(NegativeSet {
        ids,
        kind: NegativeKind::InBatch,
        provenance,
    })
}

/// Exactly `n` hard negatives: the LU's other candidate frames, then siblings
/// of the gold frame, then seeded random frames.
pub fn in_candidate_negatives(lex: &Lexicon, inst: &Instance, n: usize, seed: u64) -> Result<NegativeSet> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "candidate set size must be positive".into(),
        ));
    }
    if lex.len() <= n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} negatives from a lexicon of {} frames",
            lex.len()
        )));
    }
    let gold = inst.gold;
    let mut chosen = vec![false; lex.len()];
    chosen[gold.0] = true;
    let mut ids = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);

    let candidates = lex
        .candidates_for(&inst.lu)
        .map(|c| c.iter().copied().collect::<Vec<_>>())
        .unwrap_or_default();
    let ordered = candidates
        .into_iter()
        .map(|f| (f, Provenance::Candidate))
        .chain(lex.siblings_of(gold)?.iter().map(|&f| (f, Provenance::Sibling)));
    for (f, prov) in ordered {
        if ids.len() == n {
            break;
        }
        if !chosen[f.0] {
            chosen[f.0] = true;
            ids.push(f);
            provenance.push(prov);
        }
    }

    let missing = n - ids.len();
    if missing > 0 {
        let mut rest: Vec<FrameId> = lex.frame_ids().filter(|f| !chosen[f.0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (picked, _) = rest.partial_shuffle(&mut rng, missing);
        for &f in picked.iter() {
            ids.push(f);
            provenance.push(Provenance::Random);
        }
    }
    Ok(NegativeSet {
        ids,
        kind: NegativeKind::InCandidate,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::lexicon::fixtures::inheritance_table;
    use crate::lexicon::LemmaPos;
    use std::collections::HashSet;

    fn inst(gold: usize, lemma: &str) -> Instance {
        Instance {
            tokens: vec!["x".into()],
            target_start: 0,
            target_end: 0,
            lu: LemmaPos::parse_parts(lemma, "v").unwrap(),
            gold: FrameId(gold),
            split: Split::Train,
        }
    }

    #[test]
    fn batch_sizes_and_remainders() {
        let data: Vec<Instance> = (0..10).map(|i| inst(i % 3, "a")).collect();
        let sizes: Vec<usize> = make_batches(&data, 4, 1)
            .unwrap()
            .iter()
            .map(Batch::len)
            .collect();
        assert_eq!(sizes, [4, 4, 2]);
        let sizes: Vec<usize> = make_batches(&data[..5], 4, 1)
            .unwrap()
            .iter()
            .map(Batch::len)
            .collect();
        assert_eq!(sizes, [4]);
        let a = make_batches(&data, 4, 9).unwrap();
        let b = make_batches(&data, 4, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let px: Vec<*const Instance> = x.instances.iter().map(|i| *i as *const _).collect();
            let py: Vec<*const Instance> = y.instances.iter().map(|i| *i as *const _).collect();
            assert_eq!(px, py);
        }
        assert!(make_batches(&[], 4, 1).is_err());
    }

    #[test]
    fn in_batch_examples() {
        let data = [inst(0, "a"), inst(1, "a"), inst(2, "a")];
        let batch = Batch {
            instances: data.iter().collect(),
        };
        assert_eq!(
            in_batch_negatives(&batch, 0).unwrap().ids,
            [FrameId(1), FrameId(2)]
        );

        let data = [inst(0, "a"), inst(0, "a"), inst(1, "a")];
        let batch = Batch {
            instances: data.iter().collect(),
        };
        assert_eq!(in_batch_negatives(&batch, 0).unwrap().ids, [FrameId(1)]);

        let data = [inst(0, "a"), inst(0, "a")];
        let batch = Batch {
            instances: data.iter().collect(),
        };
        assert!(in_batch_negatives(&batch, 0).unwrap().is_empty());
        assert!(in_batch_negatives(&batch, 5).is_err());
    }

    #[test]
    fn receiving_candidates_then_siblings() {
        let lex = inheritance_table();
        let rec = lex.id_of("Receiving").unwrap();
        let i = Instance {
            gold: rec,
            ..inst(0, "receive")
        };
        let neg = in_candidate_negatives(&lex, &i, 5, 3).unwrap();
        let names: Vec<&str> = neg.ids.iter().map(|&f| lex.name(f)).collect();
        assert_eq!(
            names,
            [
                "Getting",
                "Amassing",
                "Commerce_buy",
                "Commerce_collect",
                "Taking"
            ]
        );
        assert_eq!(neg.provenance[0], Provenance::Candidate);
        assert!(neg.provenance[1..].iter().all(|&p| p == Provenance::Sibling));
    }

    #[test]
    fn monosemous_lu_pads_with_random_frames() {
        let lex = inheritance_table();
        let bor = lex.id_of("Borrowing").unwrap();
        let i = Instance {
            gold: bor,
            ..inst(0, "borrow")
        };
        let neg = in_candidate_negatives(&lex, &i, 3, 11).unwrap();
        assert_eq!(neg.len(), 3);
        assert!(neg.provenance.iter().all(|&p| p == Provenance::Random));
        assert!(!neg.ids.contains(&bor));
        assert_eq!(neg, in_candidate_negatives(&lex, &i, 3, 11).unwrap());
        // unknown LU behaves like an LU without other candidates
        let oov = Instance {
            gold: bor,
            ..inst(0, "zzz")
        };
        assert_eq!(in_candidate_negatives(&lex, &oov, 3, 11).unwrap().len(), 3);
    }

    #[test]
    fn truncates_long_candidate_lists() {
        let mut json = String::from(r#"{"frames":["#);
        for k in 0..20 {
            if k > 0 {
                json.push(',');
            }
            json.push_str(&format!(r#"{{"name":"F{k}","definition":"d"}}"#));
        }
        json.push_str(r#"],"lexical_units":[{"lemma":"big","pos":"v","frames":["#);
        for k in 0..18 {
            if k > 0 {
                json.push(',');
            }
            json.push_str(&format!(r#""F{k}""#));
        }
        json.push_str("]}]}");
        let lex = Lexicon::from_json(&json).unwrap();
        let neg = in_candidate_negatives(&lex, &inst(0, "big"), 15, 1).unwrap();
        let expect: Vec<FrameId> = (1..16).map(FrameId).collect();
        assert_eq!(neg.ids, expect);
        assert!(neg.provenance.iter().all(|&p| p == Provenance::Candidate));
    }

    #[test]
    fn too_small_lexicon_rejected() {
        let lex = inheritance_table();
        assert!(in_candidate_negatives(&lex, &inst(0, "get"), lex.len(), 1).is_err());
        assert!(in_candidate_negatives(&lex, &inst(0, "get"), 0, 1).is_err());
    }

    #[test]
    fn negative_sets_are_well_formed() {
        let lex = inheritance_table();
        for seed in 0..200u64 {
            let gold = (seed as usize * 7) % lex.len();
            let lemma = ["get", "receive", "borrow", "zzz"][seed as usize % 4];
            let neg = in_candidate_negatives(&lex, &inst(gold, lemma), 8, seed).unwrap();
            assert_eq!(neg.len(), 8);
            assert!(!neg.ids.contains(&FrameId(gold)));
            assert_eq!(neg.ids.iter().collect::<HashSet<_>>().len(), 8);
            assert!(neg.provenance.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
