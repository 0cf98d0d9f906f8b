//! Cosine similarity, the temperature-scaled contrastive loss shared by the
//! in-batch and in-candidate objectives, exact reverse-mode gradients through
//! pooling and both encoders, and a central finite-difference oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::GRAD_REL_FLOOR;
use crate::corpus::{Instance, TokenIds, Vocab};
use crate::encoder::{
    backward_tokens, encode_tokens, frame_ids, frame_rep, target_ids, target_rep, DualModel, Encoded,
    ModelParams, Repr,
};
use crate::error::{Error, Result};
use crate::lexicon::{FrameId, Lexicon};
use crate::linalg::{axpy, dot, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Negatives are the gold frames of the other batch members.
    InBatch,
    /// Negatives are the padded candidate set of the instance.
    InCandidate,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_batch" => Ok(Objective::InBatch),
            "in_candidate" => Ok(Objective::InCandidate),
            _ => Err(Error::InvalidArgument(format!("unknown objective '{s}'"))),
        }
    }
}

pub fn cosine(a: &Repr, b: &Repr) -> Result<f64> {
    cosine_slices(a.as_slice(), b.as_slice())
}

fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of {} vs {} dims", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine input".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `d cos(a, b) / d a = b / (|a||b|) - cos * a / |a|^2`
fn cosine_grad_wrt_first(a: &[f64], b: &[f64], cos: f64) -> Vec<f64> {
    let (na, nb) = (norm(a), norm(b));
    a.iter()
        .zip(b)
        .map(|(&x, &y)| y / (na * nb) - cos * x / (na * na))
        .collect()
}

/// Loss and its derivative with respect to each cosine, for cosines ordered
/// positive first. `-log softmax_0(cos / tau)`, via max-subtracted log-sum-exp.
pub fn contrastive_from_cosines(cosines: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    if tau.is_nan() || tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if cosines.is_empty() {
        return Err(Error::Empty("contrastive case without a positive".into()));
    }
    let logits: Vec<f64> = cosines.iter().map(|c| c / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = (max - logits[0]) + sum.ln();
    let grads = exps
        .iter()
        .enumerate()
        .map(|(k, e)| (e / sum - if k == 0 { 1.0 } else { 0.0 }) / tau)
        .collect();
    Ok((loss, grads))
}

/// Softmax over `{positive} ∪ negatives`, positive first.
pub fn contrastive_probabilities(cosines: &[f64], tau: f64) -> Vec<f64> {
    let logits: Vec<f64> = cosines.iter().map(|c| c / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone)]
pub struct ContrastiveCase {
    pub t: Repr,
    pub f_pos: Repr,
    pub negatives: Vec<Repr>,
    pub tau: f64,
}

pub fn contrastive_loss(case: &ContrastiveCase) -> Result<f64> {
    let mut cosines = Vec::with_capacity(case.negatives.len() + 1);
    cosines.push(cosine(&case.t, &case.f_pos)?);
    for n in &case.negatives {
        cosines.push(cosine(&case.t, n)?);
    }
    Ok(contrastive_from_cosines(&cosines, case.tau)?.0)
}

/// Tokenized frame inputs for every frame of a lexicon.
#[derive(Debug, Clone)]
pub struct FrameTexts {
    ids: Vec<TokenIds>,
}

impl FrameTexts {
    pub fn new(vocab: &Vocab, lex: &Lexicon) -> Result<Self> {
        let ids = lex
            .frame_ids()
            .map(|f| frame_ids(vocab, lex, f))
            .collect::<Result<_>>()?;
        Ok(FrameTexts { ids })
    }

    pub fn get(&self, f: FrameId) -> Result<&TokenIds> {
        self.ids.get(f.0).ok_or(Error::UnknownFrameId(f.0))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One instance's contribution to a contrastive loss.
#[derive(Debug, Clone)]
pub struct LossItem {
    pub target: TokenIds,
    pub span: (usize, usize),
    pub gold: FrameId,
    pub negatives: Vec<FrameId>,
}

impl LossItem {
    pub fn new(vocab: &Vocab, inst: &Instance, negatives: Vec<FrameId>) -> Result<Self> {
        Ok(LossItem {
            target: target_ids(vocab, inst, false)?,
            span: inst.span(),
            gold: inst.gold,
            negatives,
        })
    }
}

enum FrameForward {
    Encoded { enc: Encoded, repr: Repr },
    Table { repr: Repr },
}

impl FrameForward {
    fn repr(&self) -> &Repr {
        match self {
            FrameForward::Encoded { repr, .. } | FrameForward::Table { repr } => repr,
        }
    }
}

fn forward_frame(model: &DualModel, frames: &FrameTexts, f: FrameId) -> Result<FrameForward> {
    let out = if model.mode.is_lookup() {
        let table = model
            .params
            .table
            .as_ref()
            .ok_or_else(|| Error::Shape("lookup mode without a table".into()))?;
        if f.0 >= table.rows() {
            return Err(Error::UnknownFrameId(f.0));
        }
        FrameForward::Table {
            repr: Repr(table.row(f.0).to_vec()),
        }
    } else {
        let enc = encode_tokens(model.frame_params(), frames.get(f)?)?;
        let repr = frame_rep(&enc.h)?;
        FrameForward::Encoded { enc, repr }
    };
    if out.repr().norm() == 0.0 {
        return Err(Error::ZeroNorm(format!("frame {f}")));
    }
    Ok(out)
}

/// Mean contrastive loss over `items`, and (when `want_grads`) its exact
/// gradient with respect to every model tensor.
pub fn batch_loss_and_grads(
    model: &DualModel,
    frames: &FrameTexts,
    items: &[LossItem],
    tau: f64,
    want_grads: bool,
) -> Result<(f64, Option<ModelParams>)> {
    if items.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    // Each distinct frame is encoded once per call; the ordered map keeps
    // gradient accumulation order fixed.
    let mut frame_cache: BTreeMap<FrameId, FrameForward> = BTreeMap::new();
    for item in items {
        if item.negatives.contains(&item.gold) {
            return Err(Error::InvalidArgument(format!(
                "gold frame {} appears among its own negatives",
                item.gold
            )));
        }
        for &f in std::iter::once(&item.gold).chain(&item.negatives) {
            if let std::collections::btree_map::Entry::Vacant(e) = frame_cache.entry(f) {
                e.insert(forward_frame(model, frames, f)?);
            }
        }
    }

    let scale = 1.0 / items.len() as f64;
    let mut grads = want_grads.then(|| ModelParams::zeros_like(&model.params));
    let mut frame_grads: BTreeMap<FrameId, Vec<f64>> = BTreeMap::new();
    let mut total = 0.0;
    let d = model.dim();

    for item in items {
        let enc = encode_tokens(model.target_params(), &item.target)?;
        let pooled = target_rep(&enc.h, item.span)?;
        let t = pooled.repr.as_slice();
        if norm(t) == 0.0 {
            return Err(Error::ZeroNorm("target representation".into()));
        }
        let ids: Vec<FrameId> = std::iter::once(item.gold)
            .chain(item.negatives.iter().copied())
            .collect();
        let cosines = ids
            .iter()
            .map(|f| cosine_slices(t, frame_cache[f].repr().as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let (loss, dcos) = contrastive_from_cosines(&cosines, tau)?;
        total += loss;

        let Some(grads) = grads.as_mut() else {
            continue;
        };
        let mut dt = vec![0.0; d];
        for ((f, &cos), &g) in ids.iter().zip(&cosines).zip(&dcos) {
            if g == 0.0 {
                continue;
            }
            let fr = frame_cache[f].repr().as_slice();
            axpy(&mut dt, g * scale, &cosine_grad_wrt_first(t, fr, cos));
            let df = frame_grads.entry(*f).or_insert_with(|| vec![0.0; d]);
            axpy(df, g * scale, &cosine_grad_wrt_first(fr, t, cos));
        }
        let mut dh = Matrix::zeros(enc.h.rows(), d);
        for (j, &row) in pooled.argmax.iter().enumerate() {
            dh[(row, j)] += dt[j];
        }
        backward_tokens(model.target_params(), &enc, &dh, &mut grads.target);
    }

    if let Some(grads) = grads.as_mut() {
        for (f, df) in &frame_grads {
            match &frame_cache[f] {
                FrameForward::Table { .. } => {
                    let table = grads.table.as_mut().expect("lookup grads carry a table");
                    axpy(table.row_mut(f.0), 1.0, df);
                }
                FrameForward::Encoded { enc, .. } => {
                    let m = enc.h.rows();
                    let mut dh = Matrix::zeros(m, d);
                    for i in 0..m {
                        axpy(dh.row_mut(i), 1.0 / m as f64, df);
                    }
                    let sink = if model.shared_encoders {
                        &mut grads.target
                    } else {
                        &mut grads.frame
                    };
                    backward_tokens(model.frame_params(), enc, &dh, sink);
                }
            }
        }
    }
    Ok((total * scale, grads))
}

pub fn batch_loss(model: &DualModel, frames: &FrameTexts, items: &[LossItem], tau: f64) -> Result<f64> {
    Ok(batch_loss_and_grads(model, frames, items, tau, false)?.0)
}

/// Loss and gradients for a single instance against explicit negatives.
pub fn loss_and_grads(
    model: &DualModel,
    vocab: &Vocab,
    lex: &Lexicon,
    inst: &Instance,
    negatives: &[FrameId],
    tau: f64,
) -> Result<(f64, ModelParams)> {
    let frames = FrameTexts::new(vocab, lex)?;
    let item = LossItem::new(vocab, inst, negatives.to_vec())?;
    let (loss, grads) = batch_loss_and_grads(model, &frames, &[item], tau, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in [1e-6, 1e-3], got {eps}"
        )));
    }
    Ok(())
}

/// Central differences `(f(θ+ε) - f(θ-ε)) / 2ε` for every coordinate of θ.
pub fn central_difference<F>(theta: &mut [f64], eps: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_eps(eps)?;
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = f(theta)?;
        theta[i] = orig - eps;
        let minus = f(theta)?;
        theta[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// Finite-difference gradient of [`batch_loss`] with respect to every model
/// parameter. Cost is two loss evaluations per scalar; meant for small `d`.
pub fn finite_difference_grad(
    model: &DualModel,
    frames: &FrameTexts,
    items: &[LossItem],
    tau: f64,
    eps: f64,
) -> Result<ModelParams> {
    check_eps(eps)?;
    let mut work = model.clone();
    let mut grads = ModelParams::zeros_like(&model.params);
    let n_tensors = model.params.tensors().len();
    for ti in 0..n_tensors {
        let len = work.params.tensors()[ti].len();
        for k in 0..len {
            let orig = work.params.tensors()[ti][k];
            work.params.tensors_mut()[ti][k] = orig + eps;
            let plus = batch_loss(&work, frames, items, tau)?;
            work.params.tensors_mut()[ti][k] = orig - eps;
            let minus = batch_loss(&work, frames, items, tau)?;
            work.params.tensors_mut()[ti][k] = orig;
            grads.tensors_mut()[ti][k] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// Largest entry-wise `|a - b| / max(|a|, |b|, floor)` over all tensors,
/// with the name of the tensor where it occurs.
pub fn max_relative_error(a: &ModelParams, b: &ModelParams) -> (f64, &'static str) {
    let names = a.tensor_names();
    let mut worst = (0.0, names[0]);
    for ((ta, tb), name) in a.tensors().into_iter().zip(b.tensors()).zip(names) {
        for (x, y) in ta.iter().zip(tb) {
            let denom = x.abs().max(y.abs()).max(GRAD_REL_FLOOR);
            let rel = (x - y).abs() / denom;
            if rel > worst.0 || rel.is_nan() {
                worst = (rel, name);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Corpus, Split};
    use crate::encoder::ModelMode;
    use crate::lexicon::fixtures::inheritance_table;
    use crate::lexicon::LemmaPos;
    use proptest::prelude::*;

    fn r(v: &[f64]) -> Repr {
        Repr(v.to_vec())
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&r(&[3.0, 4.0]), &r(&[3.0, 4.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&r(&[1.0, 0.0]), &r(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine(&r(&[1.0, 0.0]), &r(&[-2.0, 0.0])).unwrap(), -1.0);
        assert!(matches!(
            cosine(&r(&[0.0, 0.0]), &r(&[1.0, 0.0])),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn loss_examples() {
        let case = ContrastiveCase {
            t: r(&[1.0, 0.0]),
            f_pos: r(&[1.0, 1.0]),
            negatives: vec![],
            tau: 0.07,
        };
        assert_eq!(contrastive_loss(&case).unwrap(), 0.0);

        let tied = ContrastiveCase {
            negatives: vec![r(&[1.0, 1.0])],
            ..case.clone()
        };
        assert!((contrastive_loss(&tied).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        // -ln(e^0.9 / (e^0.9 + e^0.1 + e^-0.3)), evaluated independently
        let (loss, _) = contrastive_from_cosines(&[0.9, 0.1, -0.3], 1.0).unwrap();
        assert!((loss - 0.559_914_700_987_563_9).abs() < 1e-12, "{loss}");

        assert!(contrastive_from_cosines(&[0.9, 0.1], 0.0).is_err());
        assert!(contrastive_from_cosines(&[0.9, 0.1], -1.0).is_err());
    }

    #[test]
    fn temperature_limit_is_uniform() {
        let cos = [0.8, -0.2, 0.5, 0.1];
        let (loss, _) = contrastive_from_cosines(&cos, 1e6).unwrap();
        assert!((loss - (cos.len() as f64).ln()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn loss_properties(cos in prop::collection::vec(-1.0f64..1.0, 2..10), tau in 0.05f64..5.0, bump in 0.01f64..0.5, pick in 0usize..100) {
            let (loss, _) = contrastive_from_cosines(&cos, tau).unwrap();
            prop_assert!(loss > 0.0);
            let p = contrastive_probabilities(&cos, tau);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // raising one negative cosine raises the loss
            let k = 1 + pick % (cos.len() - 1);
            let mut higher = cos.clone();
            higher[k] += bump;
            let (loss2, _) = contrastive_from_cosines(&higher, tau).unwrap();
            prop_assert!(loss2 > loss);
        }

        #[test]
        fn cosine_scale_invariant(a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4), c in 0.01f64..100.0) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let x = cosine(&r(&a), &r(&b)).unwrap();
            let y = cosine(&r(&scaled), &r(&b)).unwrap();
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn central_difference_of_quadratic() {
        let mut theta = [3.0];
        let g = central_difference(&mut theta, 1e-4, |t| Ok(t[0] * t[0])).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        assert!(central_difference(&mut theta, 1.0, |t| Ok(t[0])).is_err());
        assert!(central_difference(&mut theta, 1e-9, |t| Ok(t[0])).is_err());
    }

    fn fixture(mode: ModelMode, d: usize) -> (Lexicon, Vocab, DualModel, Vec<Instance>) {
        let lex = inheritance_table();
        let mk = |toks: &[&str], s: usize, e: usize, lemma: &str, gold: &str| Instance {
            tokens: toks.iter().map(|t| t.to_string()).collect(),
            target_start: s,
            target_end: e,
            lu: LemmaPos::parse_parts(lemma, "v").unwrap(),
            gold: lex.id_of(gold).unwrap(),
            split: Split::Train,
        };
        let insts = vec![
            mk(&["He", "got", "on", "the", "bus"], 1, 2, "get", "Board_vehicle"),
            mk(&["She", "received", "a", "letter"], 1, 1, "receive", "Receiving"),
            mk(&["They", "borrowed", "money"], 1, 1, "borrow", "Borrowing"),
            mk(&["We", "got", "home", "late"], 1, 2, "get", "Arriving"),
        ];
        let vocab = build_vocab(&Corpus::new(insts.clone()), &lex).unwrap();
        let model = DualModel::initialise(&vocab, &lex, d, mode, false, 21).unwrap();
        (lex, vocab, model, insts)
    }

    #[test]
    fn empty_negatives_give_zero_loss_and_grads() {
        let (lex, vocab, model, insts) = fixture(ModelMode::Dual, 4);
        let (loss, grads) = loss_and_grads(&model, &vocab, &lex, &insts[0], &[], 0.07).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn gold_among_negatives_rejected() {
        let (lex, vocab, model, insts) = fixture(ModelMode::Dual, 4);
        assert!(loss_and_grads(&model, &vocab, &lex, &insts[0], &[insts[0].gold], 1.0).is_err());
    }

    #[test]
    fn untouched_embedding_rows_have_zero_grad() {
        let (lex, vocab, model, insts) = fixture(ModelMode::Dual, 4);
        let negs = [lex.id_of("Getting").unwrap()];
        let (_, grads) = loss_and_grads(&model, &vocab, &lex, &insts[1], &negs, 1.0).unwrap();
        // "late" appears in no input of this case
        let late = vocab.id("late");
        assert!(grads.target.token_emb.row(late).iter().all(|&x| x == 0.0));
        assert!(grads.frame.token_emb.row(late).iter().all(|&x| x == 0.0));
        // "received" is the target token
        let rec = vocab.id("received");
        assert!(grads.target.token_emb.row(rec).iter().any(|&x| x != 0.0));
    }

    fn check_against_fd(mode: ModelMode, shared: bool, tau: f64) {
        let (lex, vocab, mut model, insts) = fixture(mode, 6);
        model.shared_encoders = shared;
        let frames = FrameTexts::new(&vocab, &lex).unwrap();
        let golds: Vec<FrameId> = insts.iter().map(|i| i.gold).collect();
        let items: Vec<LossItem> = insts
            .iter()
            .map(|inst| {
                let negs = golds.iter().copied().filter(|&g| g != inst.gold).collect();
                LossItem::new(&vocab, inst, negs).unwrap()
            })
            .collect();
        let (_, analytic) = batch_loss_and_grads(&model, &frames, &items, tau, true).unwrap();
        let numeric = finite_difference_grad(&model, &frames, &items, tau, 1e-5).unwrap();
        let (err, at) = max_relative_error(&analytic.unwrap(), &numeric);
        assert!(err <= 1e-4, "{mode:?} shared={shared}: rel err {err} in {at}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_against_fd(ModelMode::Dual, false, 0.07);
        check_against_fd(ModelMode::Dual, true, 1.0);
        check_against_fd(ModelMode::LookupRandom, false, 0.5);
        check_against_fd(ModelMode::LookupDefinitionInit, false, 1.0);
    }
}
