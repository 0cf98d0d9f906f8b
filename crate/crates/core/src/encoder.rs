//! Target and frame encoders.
//!
//! Each encoder maps a token sequence to per-position vectors
//! `h_i = tanh(W (E[w_i] + P[i]) + b)`. A target is the element-wise max over
//! its span rows; a frame is the mean over all rows of `name | definition`.
//! The lookup-table baselines replace the frame encoder with one learnable
//! row per frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, TokenIds, Vocab, MASK, MAX_SEQ_LEN};
use crate::error::{Error, Result};
use crate::lexicon::{FrameId, Lexicon};
use crate::linalg::{dot, norm, Matrix};

pub const DEFAULT_DIM: usize = 64;
const INIT_RANGE: f64 = 0.1;

/// Learnable tensors of one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// Token embeddings, `|V| x d`.
    pub token_emb: Matrix,
    /// Position embeddings, `MAX_SEQ_LEN x d`.
    pub pos_emb: Matrix,
    /// Projection, `d x d`; row `j` produces output coordinate `j`.
    pub proj: Matrix,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, d: usize) -> Self {
        EncoderParams {
            token_emb: Matrix::zeros(vocab_size, d),
            pos_emb: Matrix::zeros(MAX_SEQ_LEN, d),
            proj: Matrix::zeros(d, d),
            bias: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.token_emb.rows()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.token_emb.as_slice(),
            self.pos_emb.as_slice(),
            self.proj.as_slice(),
            &self.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.token_emb.as_mut_slice(),
            self.pos_emb.as_mut_slice(),
            self.proj.as_mut_slice(),
            &mut self.bias,
        ]
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dim();
        let ok = d >= 2
            && self.token_emb.cols() == d
            && self.pos_emb.shape() == (MAX_SEQ_LEN, d)
            && self.proj.shape() == (d, d);
        if !ok {
            return Err(Error::Shape("encoder tensors disagree on dimension".into()));
        }
        Ok(())
    }
}

/// i.i.d. uniform(-0.1, 0.1) entries drawn in the order E, P, W, b.
pub fn init_params(vocab_size: usize, d: usize, seed: u64) -> Result<EncoderParams> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension must be at least 2, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = EncoderParams::zeros(vocab_size, d);
    for t in p.tensors_mut() {
        t.iter_mut()
            .for_each(|x| *x = rng.gen_range(-INIT_RANGE..INIT_RANGE));
    }
    Ok(p)
}

/// Encoder output for one sequence; `h` is `n x d`.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub h: Matrix,
}

pub fn encode_tokens(p: &EncoderParams, ids: &TokenIds) -> Result<Encoded> {
    let n = ids.len();
    if n == 0 {
        return Err(Error::Empty("token sequence".into()));
    }
    if n > MAX_SEQ_LEN {
        return Err(Error::SequenceTooLong {
            len: n,
            max: MAX_SEQ_LEN,
        });
    }
    let d = p.dim();
    let mut h = Matrix::zeros(n, d);
    let mut x = vec![0.0; d];
    for (i, &id) in ids.as_slice().iter().enumerate() {
        if id >= p.vocab_size() {
            return Err(Error::Shape(format!(
                "token id {id} outside vocabulary of {}",
                p.vocab_size()
            )));
        }
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = p.token_emb[(id, k)] + p.pos_emb[(i, k)];
        }
        let row = h.row_mut(i);
        for (j, out) in row.iter_mut().enumerate() {
            *out = (dot(p.proj.row(j), &x) + p.bias[j]).tanh();
        }
    }
    Ok(Encoded {
        ids: ids.0.clone(),
        h,
    })
}

/// Backpropagates `dh` (same shape as `enc.h`) into `grads`. Rows of `dh`
/// that are entirely zero are skipped.
#[allow(clippy::needless_range_loop)]
pub fn backward_tokens(p: &EncoderParams, enc: &Encoded, dh: &Matrix, grads: &mut EncoderParams) {
    let d = p.dim();
    let mut dz = vec![0.0; d];
    let mut x = vec![0.0; d];
    for (i, &id) in enc.ids.iter().enumerate() {
        let dh_row = dh.row(i);
        if dh_row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let h_row = enc.h.row(i);
        for j in 0..d {
            dz[j] = dh_row[j] * (1.0 - h_row[j] * h_row[j]);
        }
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = p.token_emb[(id, k)] + p.pos_emb[(i, k)];
        }
        for j in 0..d {
            grads.bias[j] += dz[j];
            let g_row = grads.proj.row_mut(j);
            for k in 0..d {
                g_row[k] += dz[j] * x[k];
            }
        }
        // dx = W^T dz
        for k in 0..d {
            let mut dx = 0.0;
            for j in 0..d {
                dx += p.proj[(j, k)] * dz[j];
            }
            grads.token_emb[(id, k)] += dx;
            grads.pos_emb[(i, k)] += dx;
        }
    }
}

/// Learned representation of a target or a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Repr(pub Vec<f64>);

impl Repr {
    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Max-pooled span representation together with the row chosen for each
/// coordinate (lowest row index on ties).
#[derive(Debug, Clone)]
pub struct PooledTarget {
    pub repr: Repr,
    pub argmax: Vec<usize>,
}

pub fn target_rep(h: &Matrix, span: (usize, usize)) -> Result<PooledTarget> {
    let (start, end) = span;
    if start > end || end >= h.rows() {
        return Err(Error::InvalidSpan(format!(
            "[{start}, {end}] over {} rows",
            h.rows()
        )));
    }
    let d = h.cols();
    let mut v = h.row(start).to_vec();
    let mut argmax = vec![start; d];
    for i in start + 1..=end {
        for (j, &x) in h.row(i).iter().enumerate() {
            if x > v[j] {
                v[j] = x;
                argmax[j] = i;
            }
        }
    }
    Ok(PooledTarget {
        repr: Repr(v),
        argmax,
    })
}

pub fn frame_rep(h: &Matrix) -> Result<Repr> {
    if h.rows() == 0 {
        return Err(Error::Empty("frame encoding has no rows".into()));
    }
    let mut v = vec![0.0; h.cols()];
    for row in h.iter_rows() {
        for (a, x) in v.iter_mut().zip(row) {
            *a += x;
        }
    }
    let m = h.rows() as f64;
    v.iter_mut().for_each(|a| *a /= m);
    Ok(Repr(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Learnable frame encoder over `name | definition`.
    Dual,
    /// Randomly initialised per-frame table.
    LookupRandom,
    /// Per-frame table initialised from a frozen frame encoder.
    LookupDefinitionInit,
}

impl ModelMode {
    pub fn is_lookup(self) -> bool {
        !matches!(self, ModelMode::Dual)
    }
}

impl std::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(ModelMode::Dual),
            "lookup_random" => Ok(ModelMode::LookupRandom),
            "lookup_definition_init" => Ok(ModelMode::LookupDefinitionInit),
            _ => Err(Error::InvalidArgument(format!("unknown model mode '{s}'"))),
        }
    }
}

/// All learnable tensors of a model. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub target: EncoderParams,
    pub frame: EncoderParams,
    pub table: Option<Matrix>,
}

impl ModelParams {
    pub fn zeros_like(other: &ModelParams) -> Self {
        let zeros = |p: &EncoderParams| EncoderParams::zeros(p.vocab_size(), p.dim());
        ModelParams {
            target: zeros(&other.target),
            frame: zeros(&other.frame),
            table: other.table.as_ref().map(|t| Matrix::zeros(t.rows(), t.cols())),
        }
    }

    /// Tensors in canonical order: target E, P, W, b; frame E, P, W, b; table.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(9);
        out.extend(self.target.tensors());
        out.extend(self.frame.tensors());
        if let Some(t) = &self.table {
            out.push(t.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(9);
        out.extend(self.target.tensors_mut());
        out.extend(self.frame.tensors_mut());
        if let Some(t) = &mut self.table {
            out.push(t.as_mut_slice());
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<&'static str> {
        let mut names = vec![
            "target.token_emb",
            "target.pos_emb",
            "target.proj",
            "target.bias",
            "frame.token_emb",
            "frame.pos_emb",
            "frame.proj",
            "frame.bias",
        ];
        if self.table.is_some() {
            names.push("table");
        }
        names
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Target encoder, frame encoder and (in lookup modes) the frame table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualModel {
    pub mode: ModelMode,
    /// When set, the frame side reuses the target encoder's parameters.
    pub shared_encoders: bool,
    pub params: ModelParams,
}

impl DualModel {
    pub fn new(vocab_size: usize, d: usize, mode: ModelMode, seed: u64) -> Result<Self> {
        let target = init_params(vocab_size, d, seed)?;
        let frame = init_params(vocab_size, d, seed.wrapping_add(1))?;
        Ok(DualModel {
            mode,
            shared_encoders: false,
            params: ModelParams {
                target,
                frame,
                table: None,
            },
        })
    }

    /// Builds a model of the requested mode; lookup tables are filled
    /// (randomly or from definitions) before returning.
    pub fn initialise(
        vocab: &Vocab,
        lex: &Lexicon,
        d: usize,
        mode: ModelMode,
        shared_encoders: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut m = DualModel::new(vocab.len(), d, mode, seed)?;
        m.shared_encoders = shared_encoders;
        match mode {
            ModelMode::Dual => {}
            ModelMode::LookupRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
                let mut table = Matrix::zeros(lex.len(), d);
                table
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|x| *x = rng.gen_range(-INIT_RANGE..INIT_RANGE));
                m.params.table = Some(table);
            }
            ModelMode::LookupDefinitionInit => {
                m = init_table_from_definitions(&m, vocab, lex)?;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.params.target.dim()
    }

    pub fn target_params(&self) -> &EncoderParams {
        &self.params.target
    }

    pub fn frame_params(&self) -> &EncoderParams {
        if self.shared_encoders {
            &self.params.target
        } else {
            &self.params.frame
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.target.check_shapes()?;
        self.params.frame.check_shapes()?;
        match (&self.params.table, self.mode.is_lookup()) {
            (Some(t), true) if t.cols() == self.dim() && t.is_finite() => {}
            (None, false) => {}
            _ => {
                return Err(Error::Shape(
                    "frame table must be present exactly in lookup modes".into(),
                ))
            }
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }
}

pub fn target_ids(vocab: &Vocab, inst: &Instance, masked: bool) -> Result<TokenIds> {
    let mut ids = vocab.encode_tokens(&inst.tokens)?;
    if masked {
        for id in &mut ids.0[inst.target_start..=inst.target_end] {
            *id = MASK;
        }
    }
    Ok(ids)
}

/// Tokenized `name | definition`, truncated to the position table.
pub fn frame_ids(vocab: &Vocab, lex: &Lexicon, f: FrameId) -> Result<TokenIds> {
    let mut ids = vocab.encode_text(&lex.frame_input_text(f)?)?;
    ids.0.truncate(MAX_SEQ_LEN);
    Ok(ids)
}

pub fn encode_target(m: &DualModel, vocab: &Vocab, inst: &Instance) -> Result<Repr> {
    encode_target_with(m, vocab, inst, false)
}

/// Target representation, optionally with every span token replaced by MASK.
pub fn encode_target_with(m: &DualModel, vocab: &Vocab, inst: &Instance, masked: bool) -> Result<Repr> {
    let ids = target_ids(vocab, inst, masked)?;
    let enc = encode_tokens(m.target_params(), &ids)?;
    Ok(target_rep(&enc.h, inst.span())?.repr)
}

fn encode_frame_dual(p: &EncoderParams, vocab: &Vocab, lex: &Lexicon, f: FrameId) -> Result<Repr> {
    let enc = encode_tokens(p, &frame_ids(vocab, lex, f)?)?;
    frame_rep(&enc.h)
}

pub fn encode_frame(m: &DualModel, vocab: &Vocab, lex: &Lexicon, f: FrameId) -> Result<Repr> {
    lex.frame(f)?;
    let repr = match (&m.params.table, m.mode.is_lookup()) {
        (Some(table), true) => {
            if f.0 >= table.rows() {
                return Err(Error::UnknownFrameId(f.0));
            }
            Repr(table.row(f.0).to_vec())
        }
        (None, false) => encode_frame_dual(m.frame_params(), vocab, lex, f)?,
        _ => return Err(Error::Shape("frame table inconsistent with mode".into())),
    };
    if repr.norm() == 0.0 {
        return Err(Error::ZeroNorm(format!("frame '{}'", lex.name(f))));
    }
    Ok(repr)
}

/// Fills the lookup table with the (frozen) frame encoder's outputs.
pub fn init_table_from_definitions(m: &DualModel, vocab: &Vocab, lex: &Lexicon) -> Result<DualModel> {
    if m.mode != ModelMode::LookupDefinitionInit {
        return Err(Error::InvalidArgument(
            "table initialisation from definitions requires lookup_definition_init mode".into(),
        ));
    }
    let mut table = Matrix::zeros(lex.len(), m.dim());
    for f in lex.frame_ids() {
        let r = encode_frame_dual(m.frame_params(), vocab, lex, f)?;
        if r.norm() == 0.0 {
            return Err(Error::ZeroNorm(format!("frame '{}'", lex.name(f))));
        }
        table.row_mut(f.0).copy_from_slice(&r.0);
    }
    let mut out = m.clone();
    out.params.table = Some(table);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Corpus, Split};
    use crate::lexicon::fixtures::inheritance_table;
    use crate::lexicon::LemmaPos;
    use proptest::prelude::*;

    /// Scalar re-evaluation of one encoder row, written without the
    /// matrix helpers.
    fn oracle_row(p: &EncoderParams, id: usize, pos: usize) -> Vec<f64> {
        let d = p.dim();
        let mut out = Vec::with_capacity(d);
        for j in 0..d {
            let mut z = p.bias[j];
            for k in 0..d {
                let x = p.token_emb.as_slice()[id * d + k] + p.pos_emb.as_slice()[pos * d + k];
                z += p.proj.as_slice()[j * d + k] * x;
            }
            out.push(z.tanh());
        }
        out
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn init_is_seeded() {
        let a = init_params(10, 4, 1).unwrap();
        let b = init_params(10, 4, 1).unwrap();
        let c = init_params(10, 4, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.tensors().iter().all(|t| t.iter().all(|x| x.abs() < 0.1)));
        assert!(init_params(10, 1, 1).is_err());
    }

    #[test]
    fn zero_projection_gives_zero_rows() {
        let mut p = init_params(10, 4, 3).unwrap();
        p.proj = Matrix::zeros(4, 4);
        p.bias = vec![0.0; 4];
        let enc = encode_tokens(&p, &TokenIds(vec![5, 6, 7])).unwrap();
        assert!(enc.h.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn encode_matches_scalar_oracle() {
        let p = init_params(10, 4, 1).unwrap();
        let enc = encode_tokens(&p, &TokenIds(vec![2, 3])).unwrap();
        assert_eq!(enc.h.shape(), (2, 4));
        assert!(close(enc.h.row(0), &oracle_row(&p, 2, 0), 1e-15));
        assert!(close(enc.h.row(1), &oracle_row(&p, 3, 1), 1e-15));
        let one = encode_tokens(&p, &TokenIds(vec![4])).unwrap();
        assert_eq!(one.h.shape(), (1, 4));
    }

    #[test]
    fn overlong_sequence_rejected() {
        let p = init_params(10, 4, 1).unwrap();
        let ids = TokenIds(vec![4; MAX_SEQ_LEN + 1]);
        assert!(matches!(
            encode_tokens(&p, &ids),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn max_pool_examples() {
        let h = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap();
        let t = target_rep(&h, (0, 1)).unwrap();
        assert_eq!(t.repr.0, vec![1.0, 3.0]);
        assert_eq!(t.argmax, vec![0, 1]);
        assert_eq!(target_rep(&h, (1, 1)).unwrap().repr.0, vec![0.0, 3.0]);
        assert!(target_rep(&h, (1, 0)).is_err());
        assert!(target_rep(&h, (0, 2)).is_err());
        // ties go to the lowest row
        let tie = Matrix::from_rows(&[vec![2.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(target_rep(&tie, (0, 1)).unwrap().argmax, vec![0, 0]);
    }

    #[test]
    fn mean_pool_examples() {
        let h = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(frame_rep(&h).unwrap().0, vec![1.0, 1.0]);
        let one = Matrix::from_rows(&[vec![0.5, -0.5]]).unwrap();
        assert_eq!(frame_rep(&one).unwrap().0, vec![0.5, -0.5]);
        let cancel = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(frame_rep(&cancel).unwrap().norm(), 0.0);
        assert!(frame_rep(&Matrix::zeros(0, 2)).is_err());
    }

    fn fixture() -> (Lexicon, Vocab, Instance) {
        let lex = inheritance_table();
        let inst = Instance {
            tokens: ["He", "got", "on", "the", "bus"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            target_start: 1,
            target_end: 1,
            lu: LemmaPos::parse_parts("get", "v").unwrap(),
            gold: lex.id_of("Board_vehicle").unwrap(),
            split: Split::Train,
        };
        let vocab = build_vocab(&Corpus::new(vec![inst.clone()]), &lex).unwrap();
        (lex, vocab, inst)
    }

    #[test]
    fn encode_target_matches_oracle() {
        let (lex, vocab, inst) = fixture();
        let m = DualModel::initialise(&vocab, &lex, 6, ModelMode::Dual, false, 11).unwrap();
        let t = encode_target(&m, &vocab, &inst).unwrap();
        assert!(close(
            &t.0,
            &oracle_row(&m.params.target, vocab.id("got"), 1),
            1e-15
        ));

        let masked = encode_target_with(&m, &vocab, &inst, true).unwrap();
        assert!(close(&masked.0, &oracle_row(&m.params.target, MASK, 1), 1e-15));
        assert_ne!(masked, t);
    }

    #[test]
    fn encode_frame_matches_oracle_and_modes() {
        let (lex, vocab, _) = fixture();
        let m = DualModel::initialise(&vocab, &lex, 6, ModelMode::Dual, false, 11).unwrap();
        let f = lex.id_of("Board_vehicle").unwrap();
        let ids = frame_ids(&vocab, &lex, f).unwrap();
        let rows: Vec<Vec<f64>> = ids
            .0
            .iter()
            .enumerate()
            .map(|(i, &id)| oracle_row(&m.params.frame, id, i))
            .collect();
        let mut mean = vec![0.0; 6];
        for r in &rows {
            for (a, x) in mean.iter_mut().zip(r) {
                *a += x / rows.len() as f64;
            }
        }
        let got = encode_frame(&m, &vocab, &lex, f).unwrap();
        assert!(close(&got.0, &mean, 1e-14));
        assert!(encode_frame(&m, &vocab, &lex, FrameId(lex.len())).is_err());

        let lk = DualModel::initialise(&vocab, &lex, 6, ModelMode::LookupRandom, false, 11).unwrap();
        let row3 = encode_frame(&lk, &vocab, &lex, FrameId(3)).unwrap();
        assert_eq!(row3.0, lk.params.table.as_ref().unwrap().row(3));
    }

    #[test]
    fn definition_init_table_equals_frame_encodings() {
        let (lex, vocab, _) = fixture();
        let m = DualModel::initialise(&vocab, &lex, 6, ModelMode::LookupDefinitionInit, false, 5).unwrap();
        let mut dual = m.clone();
        dual.mode = ModelMode::Dual;
        dual.params.table = None;
        for f in lex.frame_ids() {
            assert_eq!(
                encode_frame(&m, &vocab, &lex, f).unwrap(),
                encode_frame(&dual, &vocab, &lex, f).unwrap()
            );
        }
        let again = init_table_from_definitions(&m, &vocab, &lex).unwrap();
        assert_eq!(again, m);
        assert!(init_table_from_definitions(&dual, &vocab, &lex).is_err());
    }

    #[test]
    fn shared_encoders_reuse_target_params() {
        let (lex, vocab, _) = fixture();
        let m = DualModel::initialise(&vocab, &lex, 6, ModelMode::Dual, true, 5).unwrap();
        assert!(std::ptr::eq(m.frame_params(), m.target_params()));
    }

    #[test]
    fn identity_projection_ignores_context_outside_span() {
        let (lex, vocab, inst) = fixture();
        let mut m = DualModel::initialise(&vocab, &lex, 6, ModelMode::Dual, false, 3).unwrap();
        m.params.target.proj = Matrix::identity(6);
        m.params.target.bias = vec![0.0; 6];
        let mut other = inst.clone();
        other.tokens[0] = "bus".into();
        other.tokens[4] = "zzz".into();
        assert_eq!(
            encode_target(&m, &vocab, &inst).unwrap(),
            encode_target(&m, &vocab, &other).unwrap()
        );
    }

    proptest! {
        #[test]
        fn max_pool_is_order_invariant(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6), seed in 0u64..1000) {
            let h = Matrix::from_rows(&rows).unwrap();
            let mut perm: Vec<Vec<f64>> = rows.clone();
            let k = (seed as usize) % perm.len();
            perm.rotate_left(k);
            perm.reverse();
            let hp = Matrix::from_rows(&perm).unwrap();
            let n = rows.len();
            prop_assert_eq!(target_rep(&h, (0, n - 1)).unwrap().repr, target_rep(&hp, (0, n - 1)).unwrap().repr);
        }

        #[test]
        fn mean_pool_is_linear(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6), c in -4.0f64..4.0) {
            let h = Matrix::from_rows(&rows).unwrap();
            let mut scaled = h.clone();
            scaled.scale(c);
            let a = frame_rep(&scaled).unwrap();
            let b = frame_rep(&h).unwrap();
            for (x, y) in a.0.iter().zip(&b.0) {
                prop_assert!((x - c * y).abs() <= 1e-12);
            }
        }

        #[test]
        fn encoder_output_in_tanh_range(seed in 0u64..500, ids in prop::collection::vec(0usize..10, 1..12)) {
            let p = init_params(10, 5, seed).unwrap();
            let enc = encode_tokens(&p, &TokenIds(ids)).unwrap();
            prop_assert!(enc.h.as_slice().iter().all(|x| x.abs() < 1.0));
        }
    }
}
