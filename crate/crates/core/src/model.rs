//! Fixed-window feed-forward next-token model with exact per-example
//! gradients.
//!
//! Architecture: the last `window` token ids are embedded (`vocab × embed`),
//! concatenated oldest first, passed through one tanh layer of width
//! `hidden`, and projected to vocabulary logits followed by a softmax.
//!
//! Flattened parameter order: embedding table, input→hidden weights
//! (row-major, input index outer), hidden offsets, hidden→output weights
//! (row-major, hidden index outer), output offsets.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::corpus::{Corpus, Sentence, Token, Vocabulary};
use crate::error::{write_file, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub window: usize,
    pub hidden: usize,
}

impl Dims {
    pub fn new(vocab: usize, embed: usize, window: usize, hidden: usize) -> Dims {
        Dims {
            vocab,
            embed,
            window,
            hidden,
        }
    }

    fn input(&self) -> usize {
        self.window * self.embed
    }

    pub fn param_count(&self) -> usize {
        self.vocab * self.embed
            + self.input() * self.hidden
            + self.hidden
            + self.hidden * self.vocab
            + self.vocab
    }

    fn offsets(&self) -> Offsets {
        let emb = 0;
        let w1 = emb + self.vocab * self.embed;
        let b1 = w1 + self.input() * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.vocab;
        Offsets { w1, b1, w2, b2 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// All trainable tensors as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LMParams {
    dims: Dims,
    data: Vec<f64>,
}

impl LMParams {
    pub fn zeros(dims: Dims) -> LMParams {
        LMParams {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }

    /// Weights uniform in (-0.1, 0.1), offsets zero.
    pub fn init(dims: Dims, seed: u64) -> LMParams {
        let mut p = LMParams::zeros(dims);
        let o = dims.offsets();
        let mut rng = seed::rng(seed, "model-init");
        let dist = Uniform::new(-0.1, 0.1);
        for (i, x) in p.data.iter_mut().enumerate() {
            let is_offset = (o.b1..o.w2).contains(&i) || i >= o.b2;
            if !is_offset {
                *x = dist.sample(&mut rng);
            }
        }
        p
    }

    pub fn from_flat(dims: Dims, data: Vec<f64>) -> Result<LMParams> {
        if data.len() != dims.param_count() {
            return Err(Error::Shape {
                expected: dims.param_count(),
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(LMParams { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn embedding(&self, token: usize) -> &[f64] {
        let d = self.dims.embed;
        &self.data[token * d..(token + 1) * d]
    }

    pub fn embedding_mut(&mut self, token: usize) -> &mut [f64] {
        let d = self.dims.embed;
        &mut self.data[token * d..(token + 1) * d]
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.dims.vocab) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                vocab: self.dims.vocab,
            }),
            None => Ok(()),
        }
    }

    /// Left-pads with `<bos>` or keeps the most recent `window` ids.
    pub fn window_of(&self, prefix: &[usize]) -> Vec<usize> {
        let k = self.dims.window;
        if prefix.len() >= k {
            prefix[prefix.len() - k..].to_vec()
        } else {
            let mut w = vec![Vocabulary::BOS_ID; k - prefix.len()];
            w.extend_from_slice(prefix);
            w
        }
    }

    fn run(&self, window: &[usize], act: &mut Activations) {
        let Dims {
            vocab,
            embed,
            hidden,
            ..
        } = self.dims;
        let o = self.dims.offsets();
        act.x.clear();
        for &t in window {
            act.x.extend_from_slice(self.embedding(t));
        }
        act.h.clear();
        act.h.extend_from_slice(&self.data[o.b1..o.b1 + hidden]);
        for (i, &xi) in act.x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.data[o.w1 + i * hidden..o.w1 + (i + 1) * hidden];
            for (a, w) in act.h.iter_mut().zip(row) {
                *a += xi * w;
            }
        }
        for a in act.h.iter_mut() {
            *a = a.tanh();
        }
        act.logp.clear();
        act.logp.extend_from_slice(&self.data[o.b2..o.b2 + vocab]);
        for (j, &hj) in act.h.iter().enumerate() {
            let row = &self.data[o.w2 + j * vocab..o.w2 + (j + 1) * vocab];
            for (l, w) in act.logp.iter_mut().zip(row) {
                *l += hj * w;
            }
        }
        log_softmax_in_place(&mut act.logp);
        debug_assert_eq!(act.x.len(), self.dims.window * embed);
    }

    /// Next-token distribution for a context (padded or truncated to the window).
    pub fn forward(&self, context: &[usize]) -> Result<NextTokenDistribution> {
        self.check_ids(context)?;
        let mut act = Activations::default();
        self.run(&self.window_of(context), &mut act);
        Ok(NextTokenDistribution {
            probs: act.logp.iter().map(|l| l.exp()).collect(),
        })
    }

    /// `log p(target | context)` and the gradient of `-log p` added into `grad`.
    fn accumulate(&self, window: &[usize], target: usize, grad: &mut [f64], act: &mut Activations) -> f64 {
        let Dims {
            vocab,
            embed,
            hidden,
            ..
        } = self.dims;
        let o = self.dims.offsets();
        self.run(window, act);
        let loss = -act.logp[target];

        // d loss / d logits = softmax - onehot
        act.dl.clear();
        act.dl.extend(act.logp.iter().map(|l| l.exp()));
        act.dl[target] -= 1.0;

        for (g, d) in grad[o.b2..o.b2 + vocab].iter_mut().zip(&act.dl) {
            *g += d;
        }
        act.dh.clear();
        act.dh.resize(hidden, 0.0);
        for j in 0..hidden {
            let hj = act.h[j];
            let w_row = &self.data[o.w2 + j * vocab..o.w2 + (j + 1) * vocab];
            let g_row = &mut grad[o.w2 + j * vocab..o.w2 + (j + 1) * vocab];
            let mut dot = 0.0;
            for ((g, w), d) in g_row.iter_mut().zip(w_row).zip(&act.dl) {
                *g += hj * d;
                dot += w * d;
            }
            // through tanh
            act.dh[j] = dot * (1.0 - hj * hj);
        }
        for (g, d) in grad[o.b1..o.b1 + hidden].iter_mut().zip(&act.dh) {
            *g += d;
        }
        for (i, &xi) in act.x.iter().enumerate() {
            let w_row = &self.data[o.w1 + i * hidden..o.w1 + (i + 1) * hidden];
            let mut dot = 0.0;
            for (w, d) in w_row.iter().zip(&act.dh) {
                dot += w * d;
            }
            if xi != 0.0 {
                let g_row = &mut grad[o.w1 + i * hidden..o.w1 + (i + 1) * hidden];
                for (g, d) in g_row.iter_mut().zip(&act.dh) {
                    *g += xi * d;
                }
            }
            let slot = i / embed;
            let e = i % embed;
            grad[window[slot] * embed + e] += dot;
        }
        loss
    }

    /// Cross-entropy loss of one (context, target) example and its exact gradient.
    pub fn loss_and_grad(&self, context: &[usize], target: usize) -> Result<(f64, PerExampleGradient)> {
        self.check_ids(context)?;
        self.check_ids(&[target])?;
        let mut grad = vec![0.0; self.len()];
        let mut act = Activations::default();
        let loss = self.accumulate(&self.window_of(context), target, &mut grad, &mut act);
        Ok((loss, PerExampleGradient(grad)))
    }

    /// Summed next-token loss over every position of an encoded sentence,
    /// including the final `<eos>` prediction; gradient added into `grad`.
    /// Returns (loss, number of predicted tokens).
    pub fn sentence_loss_and_grad(&self, ids: &[usize], grad: &mut [f64], act: &mut Activations) -> Result<(f64, usize)> {
        self.check_ids(ids)?;
        if grad.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: grad.len(),
            });
        }
        let mut loss = 0.0;
        for t in 0..=ids.len() {
            let target = if t < ids.len() { ids[t] } else { Vocabulary::EOS_ID };
            loss += self.accumulate(&self.window_of(&ids[..t]), target, grad, act);
        }
        Ok((loss, ids.len() + 1))
    }

    /// Summed next-token loss of an encoded sentence including `<eos>`.
    pub fn sentence_loss(&self, ids: &[usize], act: &mut Activations) -> Result<(f64, usize)> {
        self.check_ids(ids)?;
        let mut loss = 0.0;
        for t in 0..=ids.len() {
            let target = if t < ids.len() { ids[t] } else { Vocabulary::EOS_ID };
            self.run(&self.window_of(&ids[..t]), act);
            loss -= act.logp[target];
        }
        Ok((loss, ids.len() + 1))
    }

    /// Writes the checkpoint layout: magic `DPLM`, u32 version, u32 V, d, k,
    /// h, then every parameter as a little-endian f64 in flatten order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [self.dims.vocab, self.dims.embed, self.dims.window, self.dims.hidden] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<LMParams> {
        let mut magic = [0u8; 4];
        let mut word = [0u8; 4];
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut header = [0u32; 5];
        for h in header.iter_mut() {
            bytes.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
            *h = u32::from_le_bytes(word);
        }
        if header[0] != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {}", header[0])));
        }
        let dims = Dims::new(header[1] as usize, header[2] as usize, header[3] as usize, header[4] as usize);
        if bytes.len() != dims.param_count() * 8 {
            return Err(bad("payload length does not match header dimensions"));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        LMParams::from_flat(dims, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<LMParams> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        LMParams::from_bytes(&bytes)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DPLM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Scratch buffers reused across forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Activations {
    x: Vec<f64>,
    h: Vec<f64>,
    logp: Vec<f64>,
    dl: Vec<f64>,
    dh: Vec<f64>,
}

fn log_softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
}

/// Flat gradient aligned with [`LMParams::flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGradient(pub Vec<f64>);

impl PerExampleGradient {
    pub fn l2(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoding {
    /// Multinomial sampling from the temperature-scaled distribution.
    Sample { temperature: f64 },
    /// Zero-temperature limit: always the most probable token.
    Greedy,
}

impl Decoding {
    pub fn label(&self) -> String {
        match self {
            Decoding::Sample { temperature } => format!("sample(t={temperature})"),
            Decoding::Greedy => "greedy".to_string(),
        }
    }
}

/// Parameters bound to the vocabulary they were trained with.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub vocab: Vocabulary,
    pub params: LMParams,
}

impl LanguageModel {
    pub fn new(vocab: Vocabulary, params: LMParams) -> Result<LanguageModel> {
        if vocab.len() != params.dims().vocab {
            return Err(Error::Shape {
                expected: params.dims().vocab,
                got: vocab.len(),
            });
        }
        Ok(LanguageModel { vocab, params })
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        self.vocab.encode(sentence)
    }

    pub fn next_token_distribution(&self, context: &Sentence) -> Result<NextTokenDistribution> {
        self.params.forward(&self.encode(context))
    }

    /// Sum of next-token log probabilities of the sentence's tokens with
    /// `<bos>` padding; the end-of-sequence prediction is not included.
    pub fn sequence_log_prob(&self, sentence: &Sentence) -> Result<f64> {
        if sentence.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let ids = self.encode(sentence);
        let mut act = Activations::default();
        let mut total = 0.0;
        for t in 0..ids.len() {
            self.params.run(&self.params.window_of(&ids[..t]), &mut act);
            total += act.logp[ids[t]];
        }
        Ok(total)
    }

    /// `exp` of the mean per-token negative log likelihood, counting each
    /// sentence's `<eos>` prediction as a token.
    pub fn perplexity(&self, corpus: &Corpus) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut act = Activations::default();
        let mut nll = 0.0;
        let mut count = 0usize;
        for s in corpus.sentences() {
            let (l, n) = self.params.sentence_loss(&self.encode(s), &mut act)?;
            nll += l;
            count += n;
        }
        Ok((nll / count as f64).exp())
    }

    /// Appends up to `n_tokens` tokens to `prompt`, stopping at `<eos>`.
    /// `<bos>` is never emitted.
    pub fn generate(&self, prompt: &Sentence, n_tokens: usize, seed: u64, decoding: Decoding) -> Result<Sentence> {
        let mut out = prompt.clone();
        let mut ids = self.encode(prompt);
        let mut rng = seed::rng(seed, "generate");
        let mut act = Activations::default();
        for _ in 0..n_tokens {
            self.params.run(&self.params.window_of(&ids), &mut act);
            let logp = &mut act.logp;
            logp[Vocabulary::BOS_ID] = f64::NEG_INFINITY;
            let next = match decoding {
                Decoding::Greedy => argmax(logp),
                Decoding::Sample { temperature } => {
                    if !(temperature > 0.0) {
                        return Err(Error::invalid("temperature must be positive"));
                    }
                    for l in logp.iter_mut() {
                        *l /= temperature;
                    }
                    log_softmax_in_place(logp);
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = argmax(logp);
                    for (i, l) in logp.iter().enumerate() {
                        acc += l.exp();
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick
                }
            };
            if next == Vocabulary::EOS_ID {
                break;
            }
            ids.push(next);
            out.push(Token::new(self.vocab.token(next).expect("id in vocabulary")));
        }
        Ok(out)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
