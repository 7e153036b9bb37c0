//! Desk-scale encoder-decoder: bidirectional GRU encoder, GRU decoder with
//! bilinear attention and input feeding, and copy scores added to the output
//! logits of every token that appears in the source.
//!
//! All parameters live in one flat `Vec<f32>`; gradients are computed per
//! example in parallel and reduced in a fixed order, so training is
//! bit-reproducible regardless of the thread count.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::linalg::{axpy, dot, matvec, matvec_t, outer_add, sigmoid, softmax_in_place};
use super::vocab::{TokenId, Vocab, BOS_ID, EOS_ID};
use super::{
    Control, EpochEnd, FitReport, OverlengthPolicy, Seq2SeqModel, SeqPair, TrainConfig,
    DEFAULT_MAX_LEN,
};
use crate::error::{Error, Result};

const CHECKPOINT_FORMAT: &str = "xabsa-toy-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;
// Examples per gradient task. Fixed so the reduction order never depends on threads.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub embed_dim: usize,
    /// Per direction; encoder states are twice this wide.
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f32,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            encoder_hidden: 32,
            decoder_hidden: 64,
            init_scale: 0.1,
            max_len: DEFAULT_MAX_LEN,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    off: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn of<'a>(&self, p: &'a [f32]) -> &'a [f32] {
        &p[self.off..self.off + self.rows * self.cols]
    }

    fn of_mut<'a>(&self, p: &'a mut [f32]) -> &'a mut [f32] {
        &mut p[self.off..self.off + self.rows * self.cols]
    }

    fn row<'a>(&self, p: &'a [f32], r: usize) -> &'a [f32] {
        let start = self.off + r * self.cols;
        &p[start..start + self.cols]
    }

    fn row_mut<'a>(&self, p: &'a mut [f32], r: usize) -> &'a mut [f32] {
        let start = self.off + r * self.cols;
        &mut p[start..start + self.cols]
    }
}

#[derive(Debug, Clone, Copy)]
struct GruBlocks {
    hidden: usize,
    wx: Block,
    wh: Block,
    bx: Block,
    bh: Block,
}

struct Alloc(usize);

impl Alloc {
    fn block(&mut self, rows: usize, cols: usize) -> Block {
        let b = Block {
            off: self.0,
            rows,
            cols,
        };
        self.0 += rows * cols;
        b
    }

    fn gru(&mut self, input: usize, hidden: usize) -> GruBlocks {
        GruBlocks {
            hidden,
            wx: self.block(3 * hidden, input),
            wh: self.block(3 * hidden, hidden),
            bx: self.block(3 * hidden, 1),
            bh: self.block(3 * hidden, 1),
        }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    enc_hidden: usize,
    dec_hidden: usize,
    emb: Block,
    enc_fwd: GruBlocks,
    enc_bwd: GruBlocks,
    init_w: Block,
    init_b: Block,
    dec: GruBlocks,
    attn: Block,
    copy: Block,
    comb_w: Block,
    comb_b: Block,
    out_w: Block,
    out_b: Block,
    len: usize,
}

impl Layout {
    fn new(vocab: usize, cfg: &ToyConfig) -> Self {
        let mut alloc = Alloc(0);
        let (e, he, hd) = (cfg.embed_dim, cfg.encoder_hidden, cfg.decoder_hidden);
        let d = 2 * he;
        let enc_fwd = alloc.gru(e, he);
        let enc_bwd = alloc.gru(e, he);
        let dec = alloc.gru(e + d, hd);
        let emb = alloc.block(vocab, e);
        let init_w = alloc.block(hd, d);
        let init_b = alloc.block(hd, 1);
        let attn = alloc.block(hd, d);
        let copy = alloc.block(hd, d);
        let comb_w = alloc.block(hd, hd + d);
        let comb_b = alloc.block(hd, 1);
        let out_w = alloc.block(vocab, hd);
        let out_b = alloc.block(vocab, 1);
        Self {
            embed: e,
            enc_hidden: he,
            dec_hidden: hd,
            emb,
            enc_fwd,
            enc_bwd,
            init_w,
            init_b,
            dec,
            attn,
            copy,
            comb_w,
            comb_b,
            out_w,
            out_b,
            len: alloc.0,
        }
    }

    fn enc_dim(&self) -> usize {
        2 * self.enc_hidden
    }
}

#[derive(Debug, Clone)]
struct GruStep {
    x: Vec<f32>,
    h_prev: Vec<f32>,
    r: Vec<f32>,
    z: Vec<f32>,
    n: Vec<f32>,
    hn: Vec<f32>,
    h: Vec<f32>,
}

fn gru_forward(p: &[f32], g: &GruBlocks, x: Vec<f32>, h_prev: Vec<f32>) -> GruStep {
    let hs = g.hidden;
    let mut gx = g.bx.of(p).to_vec();
    matvec(g.wx.of(p), g.wx.cols, &x, &mut gx);
    let mut gh = g.bh.of(p).to_vec();
    matvec(g.wh.of(p), g.wh.cols, &h_prev, &mut gh);
    let mut r = vec![0.0; hs];
    let mut z = vec![0.0; hs];
    let mut n = vec![0.0; hs];
    let mut h = vec![0.0; hs];
    let hn = gh[2 * hs..].to_vec();
    for k in 0..hs {
        r[k] = sigmoid(gx[k] + gh[k]);
        z[k] = sigmoid(gx[hs + k] + gh[hs + k]);
        n[k] = (gx[2 * hs + k] + r[k] * hn[k]).tanh();
        h[k] = (1.0 - z[k]) * n[k] + z[k] * h_prev[k];
    }
    GruStep {
        x,
        h_prev,
        r,
        z,
        n,
        hn,
        h,
    }
}

/// Accumulates parameter gradients into `grad`, adds the input gradient into
/// `dx` and overwrites `dh_prev`.
fn gru_backward(
    p: &[f32],
    grad: &mut [f32],
    g: &GruBlocks,
    s: &GruStep,
    dh: &[f32],
    dx: &mut [f32],
    dh_prev: &mut [f32],
) {
    let hs = g.hidden;
    let mut dgx = vec![0.0; 3 * hs];
    let mut dgh = vec![0.0; 3 * hs];
    for k in 0..hs {
        let (r, z, n) = (s.r[k], s.z[k], s.n[k]);
        let dn = dh[k] * (1.0 - z);
        let dz = dh[k] * (s.h_prev[k] - n);
        dh_prev[k] = dh[k] * z;
        let dn_pre = dn * (1.0 - n * n);
        let dr = dn_pre * s.hn[k];
        let dz_pre = dz * z * (1.0 - z);
        let dr_pre = dr * r * (1.0 - r);
        dgx[k] = dr_pre;
        dgx[hs + k] = dz_pre;
        dgx[2 * hs + k] = dn_pre;
        dgh[k] = dr_pre;
        dgh[hs + k] = dz_pre;
        dgh[2 * hs + k] = dn_pre * r;
    }
    outer_add(g.wx.of_mut(grad), g.wx.cols, &dgx, &s.x);
    axpy(1.0, &dgx, g.bx.of_mut(grad));
    matvec_t(g.wx.of(p), g.wx.cols, &dgx, dx);
    outer_add(g.wh.of_mut(grad), g.wh.cols, &dgh, &s.h_prev);
    axpy(1.0, &dgh, g.bh.of_mut(grad));
    matvec_t(g.wh.of(p), g.wh.cols, &dgh, dh_prev);
}

#[derive(Debug)]
struct Encoded {
    src: Vec<TokenId>,
    fwd: Vec<GruStep>,
    bwd: Vec<GruStep>,
    /// `len x enc_dim`, row-major.
    states: Vec<f32>,
    /// `len x dec_hidden`
    keys: Vec<f32>,
    /// `len x dec_hidden`
    copies: Vec<f32>,
    mean: Vec<f32>,
    h0: Vec<f32>,
}

#[derive(Debug)]
struct DecStep {
    prev: TokenId,
    gru: GruStep,
    alpha: Vec<f32>,
    ctx: Vec<f32>,
    o: Vec<f32>,
    logits: Vec<f32>,
}

/// Decoder position for one source sequence.
#[derive(Debug, Clone)]
pub struct ToyState {
    enc: Arc<Encoded>,
    h: Vec<f32>,
    ctx: Vec<f32>,
    logits: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct ToyBackbone {
    config: ToyConfig,
    vocab: Vocab,
    layout: Arc<Layout>,
    params: Vec<f32>,
}

impl ToyBackbone {
    pub fn new(vocab: Vocab, config: ToyConfig) -> Self {
        let layout = Layout::new(vocab.len(), &config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let s = config.init_scale;
        let params = (0..layout.len).map(|_| rng.gen_range(-s..=s)).collect();
        let mut model = Self {
            config,
            vocab,
            layout: Arc::new(layout),
            params,
        };
        model.zero_output_bias();
        model
    }

    fn zero_output_bias(&mut self) {
        let b = self.layout.out_b;
        b.of_mut(&mut self.params).fill(0.0);
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f32] {
        &self.params
    }

    fn encode(&self, src: &[TokenId]) -> Encoded {
        let l = &*self.layout;
        let p = &self.params[..];
        let mut ids = src.to_vec();
        ids.push(EOS_ID);
        let len = ids.len();
        let he = l.enc_hidden;
        let d = l.enc_dim();

        let mut fwd = Vec::with_capacity(len);
        let mut h = vec![0.0; he];
        for &id in &ids {
            let step = gru_forward(p, &l.enc_fwd, l.emb.row(p, id).to_vec(), h);
            h = step.h.clone();
            fwd.push(step);
        }
        let mut bwd = Vec::with_capacity(len);
        let mut h = vec![0.0; he];
        for &id in ids.iter().rev() {
            let step = gru_forward(p, &l.enc_bwd, l.emb.row(p, id).to_vec(), h);
            h = step.h.clone();
            bwd.push(step);
        }
        bwd.reverse();

        let mut states = vec![0.0; len * d];
        for i in 0..len {
            states[i * d..i * d + he].copy_from_slice(&fwd[i].h);
            states[i * d + he..(i + 1) * d].copy_from_slice(&bwd[i].h);
        }
        let mut mean = vec![0.0; d];
        for row in states.chunks_exact(d) {
            axpy(1.0 / len as f32, row, &mut mean);
        }
        let mut h0 = l.init_b.of(p).to_vec();
        matvec(l.init_w.of(p), d, &mean, &mut h0);
        h0.iter_mut().for_each(|v| *v = v.tanh());

        let hd = l.dec_hidden;
        let mut keys = vec![0.0; len * hd];
        let mut copies = vec![0.0; len * hd];
        for i in 0..len {
            let s = &states[i * d..(i + 1) * d];
            matvec(l.attn.of(p), d, s, &mut keys[i * hd..(i + 1) * hd]);
            matvec(l.copy.of(p), d, s, &mut copies[i * hd..(i + 1) * hd]);
        }
        Encoded {
            src: ids,
            fwd,
            bwd,
            states,
            keys,
            copies,
            mean,
            h0,
        }
    }

    fn decoder_step(&self, enc: &Encoded, prev: TokenId, h_prev: Vec<f32>, ctx_prev: &[f32]) -> DecStep {
        let l = &*self.layout;
        let p = &self.params[..];
        let (hd, d) = (l.dec_hidden, l.enc_dim());
        let mut x = Vec::with_capacity(l.embed + d);
        x.extend_from_slice(l.emb.row(p, prev));
        x.extend_from_slice(ctx_prev);
        let gru = gru_forward(p, &l.dec, x, h_prev);
        let h = &gru.h;

        let mut alpha: Vec<f32> = enc.keys.chunks_exact(hd).map(|k| dot(h, k)).collect();
        softmax_in_place(&mut alpha);
        let mut ctx = vec![0.0; d];
        for (a, s) in alpha.iter().zip(enc.states.chunks_exact(d)) {
            axpy(*a, s, &mut ctx);
        }

        let mut hc = Vec::with_capacity(hd + d);
        hc.extend_from_slice(h);
        hc.extend_from_slice(&ctx);
        let mut o = l.comb_b.of(p).to_vec();
        matvec(l.comb_w.of(p), hd + d, &hc, &mut o);
        o.iter_mut().for_each(|v| *v = v.tanh());

        let mut logits = l.out_b.of(p).to_vec();
        matvec(l.out_w.of(p), hd, &o, &mut logits);
        for (&id, c) in enc.src.iter().zip(enc.copies.chunks_exact(hd)) {
            logits[id] += dot(&o, c);
        }
        DecStep {
            prev,
            gru,
            alpha,
            ctx,
            o,
            logits,
        }
    }

    /// Summed NLL of `target + EOS`; adds unscaled gradients into `grad`.
    fn example_gradient(&self, pair: &SeqPair, grad: &mut [f32]) -> (f64, usize) {
        let l = &*self.layout;
        let p = &self.params[..];
        let (e, he, hd, d) = (l.embed, l.enc_hidden, l.dec_hidden, l.enc_dim());
        let enc = self.encode(&pair.source);
        let len = enc.src.len();

        let mut targets = pair.target.clone();
        targets.push(EOS_ID);
        let mut steps = Vec::with_capacity(targets.len());
        let mut h = enc.h0.clone();
        let mut ctx = vec![0.0; d];
        let mut prev = BOS_ID;
        let mut loss = 0.0f64;
        for &y in &targets {
            let mut step = self.decoder_step(&enc, prev, h, &ctx);
            softmax_in_place(&mut step.logits);
            loss -= (step.logits[y].max(1e-30) as f64).ln();
            h = step.gru.h.clone();
            ctx = step.ctx.clone();
            prev = y;
            steps.push(step);
        }

        let mut d_states = vec![0.0; len * d];
        let mut d_keys = vec![0.0; len * hd];
        let mut d_copies = vec![0.0; len * hd];
        let mut dh_next = vec![0.0; hd];
        let mut dctx_next = vec![0.0; d];
        let mut d_o = vec![0.0; hd];
        let mut dhc = vec![0.0; hd + d];
        let mut dx = vec![0.0; e + d];
        let mut hc = vec![0.0; hd + d];

        for (step, &y) in steps.iter().zip(&targets).rev() {
            let mut dlogits = step.logits.clone();
            dlogits[y] -= 1.0;

            outer_add(l.out_w.of_mut(grad), hd, &dlogits, &step.o);
            axpy(1.0, &dlogits, l.out_b.of_mut(grad));
            d_o.fill(0.0);
            matvec_t(l.out_w.of(p), hd, &dlogits, &mut d_o);
            for (i, &id) in enc.src.iter().enumerate() {
                let gi = dlogits[id];
                axpy(gi, &enc.copies[i * hd..(i + 1) * hd], &mut d_o);
                axpy(gi, &step.o, &mut d_copies[i * hd..(i + 1) * hd]);
            }
            let d_pre: Vec<f32> = d_o.iter().zip(&step.o).map(|(g, o)| g * (1.0 - o * o)).collect();
            hc[..hd].copy_from_slice(&step.gru.h);
            hc[hd..].copy_from_slice(&step.ctx);
            outer_add(l.comb_w.of_mut(grad), hd + d, &d_pre, &hc);
            axpy(1.0, &d_pre, l.comb_b.of_mut(grad));
            dhc.fill(0.0);
            matvec_t(l.comb_w.of(p), hd + d, &d_pre, &mut dhc);

            let mut dh: Vec<f32> = dhc[..hd].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let dctx: Vec<f32> = dhc[hd..].iter().zip(&dctx_next).map(|(a, b)| a + b).collect();

            let dalpha: Vec<f32> = enc.states.chunks_exact(d).map(|s| dot(&dctx, s)).collect();
            let weighted: f32 = step.alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
            for i in 0..len {
                let a = step.alpha[i];
                axpy(a, &dctx, &mut d_states[i * d..(i + 1) * d]);
                let ds = a * (dalpha[i] - weighted);
                axpy(ds, &enc.keys[i * hd..(i + 1) * hd], &mut dh);
                axpy(ds, &step.gru.h, &mut d_keys[i * hd..(i + 1) * hd]);
            }

            dx.fill(0.0);
            gru_backward(p, grad, &l.dec, &step.gru, &dh, &mut dx, &mut dh_next);
            axpy(1.0, &dx[..e], l.emb.row_mut(grad, step.prev));
            dctx_next.copy_from_slice(&dx[e..]);
        }

        let d_pre0: Vec<f32> = dh_next.iter().zip(&enc.h0).map(|(g, h)| g * (1.0 - h * h)).collect();
        outer_add(l.init_w.of_mut(grad), d, &d_pre0, &enc.mean);
        axpy(1.0, &d_pre0, l.init_b.of_mut(grad));
        let mut d_mean = vec![0.0; d];
        matvec_t(l.init_w.of(p), d, &d_pre0, &mut d_mean);

        for i in 0..len {
            let s = &enc.states[i * d..(i + 1) * d];
            let ds = &mut d_states[i * d..(i + 1) * d];
            axpy(1.0 / len as f32, &d_mean, ds);
            let dk = &d_keys[i * hd..(i + 1) * hd];
            outer_add(l.attn.of_mut(grad), d, dk, s);
            matvec_t(l.attn.of(p), d, dk, ds);
            let dc = &d_copies[i * hd..(i + 1) * hd];
            outer_add(l.copy.of_mut(grad), d, dc, s);
            matvec_t(l.copy.of(p), d, dc, ds);
        }

        let mut dh = vec![0.0; he];
        let mut dh_prev = vec![0.0; he];
        let mut dxe = vec![0.0; e];
        for i in (0..len).rev() {
            axpy(1.0, &d_states[i * d..i * d + he], &mut dh);
            dxe.fill(0.0);
            gru_backward(p, grad, &l.enc_fwd, &enc.fwd[i], &dh, &mut dxe, &mut dh_prev);
            axpy(1.0, &dxe, l.emb.row_mut(grad, enc.src[i]));
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        dh.fill(0.0);
        for i in 0..len {
            axpy(1.0, &d_states[i * d + he..(i + 1) * d], &mut dh);
            dxe.fill(0.0);
            gru_backward(p, grad, &l.enc_bwd, &enc.bwd[i], &dh, &mut dxe, &mut dh_prev);
            axpy(1.0, &dxe, l.emb.row_mut(grad, enc.src[i]));
            std::mem::swap(&mut dh, &mut dh_prev);
        }

        (loss, targets.len())
    }

    /// Mean token NLL and its gradient over `batch`.
    fn batch_gradient(&self, batch: &[&SeqPair]) -> (f64, usize, Vec<f32>) {
        let n = self.params.len();
        let parts: Vec<(f64, usize, Vec<f32>)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0f32; n];
                let mut loss = 0.0;
                let mut tokens = 0;
                for pair in chunk {
                    let (l, t) = self.example_gradient(pair, &mut g);
                    loss += l;
                    tokens += t;
                }
                (loss, tokens, g)
            })
            .collect();
        let mut parts = parts.into_iter();
        let (mut loss, mut tokens, mut grad) = parts.next().expect("non-empty batch");
        for (l, t, g) in parts {
            loss += l;
            tokens += t;
            axpy(1.0, &g, &mut grad);
        }
        let scale = 1.0 / tokens as f32;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss, tokens, grad)
    }

    /// Summed NLL and token count of `pairs` under the current parameters.
    pub fn evaluate_loss(&self, pairs: &[SeqPair]) -> (f64, usize) {
        pairs
            .par_iter()
            .map(|pair| {
                let enc = self.encode(&pair.source);
                let mut h = enc.h0.clone();
                let mut ctx = vec![0.0; self.layout.enc_dim()];
                let mut prev = BOS_ID;
                let mut loss = 0.0;
                for &y in pair.target.iter().chain([&EOS_ID]) {
                    let mut step = self.decoder_step(&enc, prev, h, &ctx);
                    softmax_in_place(&mut step.logits);
                    loss -= (step.logits[y].max(1e-30) as f64).ln();
                    h = step.gru.h;
                    ctx = step.ctx;
                    prev = y;
                }
                (loss, pair.target.len() + 1)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0), |(a, b), (l, t)| (a + l, b + t))
    }

    fn prepare_pairs(&self, pairs: &[SeqPair], policy: OverlengthPolicy) -> Result<Vec<SeqPair>> {
        let max = self.config.max_len;
        let v = self.vocab.len();
        let mut truncated = 0;
        let mut out = Vec::with_capacity(pairs.len());
        for pair in pairs {
            if let Some(&bad) = pair.source.iter().chain(&pair.target).find(|&&t| t >= v) {
                return Err(Error::UnknownToken(bad));
            }
            let longest = pair.source.len().max(pair.target.len());
            if longest > max {
                if policy == OverlengthPolicy::Reject {
                    return Err(Error::SequenceTooLong { len: longest, max });
                }
                truncated += 1;
            }
            out.push(SeqPair {
                source: pair.source.iter().take(max).copied().collect(),
                target: pair.target.iter().take(max).copied().collect(),
            });
        }
        if truncated > 0 {
            warn!("truncated {truncated} training pairs to {max} tokens");
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = CheckpointManifest {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab_size: self.vocab.len(),
            parameter_count: self.params.len(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        fs::write(dir.join("vocab.json"), serde_json::to_vec(&self.vocab)?)?;
        let bytes: Vec<u8> = self.params.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join("params.bin"), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CheckpointManifest =
            serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                manifest.format, manifest.version
            )));
        }
        let vocab: Vocab = serde_json::from_slice(&fs::read(dir.join("vocab.json"))?)?;
        let bytes = fs::read(dir.join("params.bin"))?;
        let params: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let layout = Layout::new(vocab.len(), &manifest.config);
        if vocab.len() != manifest.vocab_size
            || params.len() != layout.len
            || params.len() != manifest.parameter_count
        {
            return Err(Error::Checkpoint("parameter shape mismatch".into()));
        }
        Ok(Self {
            config: manifest.config,
            vocab,
            layout: Arc::new(layout),
            params,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    format: String,
    version: u32,
    config: ToyConfig,
    vocab_size: usize,
    parameter_count: usize,
}

impl Seq2SeqModel for ToyBackbone {
    type State = ToyState;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn fresh(&self) -> Self {
        Self::new(self.vocab.clone(), self.config.clone())
    }

    fn begin(&self, source: &[TokenId]) -> Result<ToyState> {
        if let Some(&bad) = source.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(Error::UnknownToken(bad));
        }
        let source = if source.len() > self.config.max_len {
            warn!(
                "truncating a {}-token source to {}",
                source.len(),
                self.config.max_len
            );
            &source[..self.config.max_len]
        } else {
            source
        };
        let enc = Arc::new(self.encode(source));
        let ctx = vec![0.0; self.layout.enc_dim()];
        let step = self.decoder_step(&enc, BOS_ID, enc.h0.clone(), &ctx);
        Ok(ToyState {
            enc,
            h: step.gru.h,
            ctx: step.ctx,
            logits: step.logits,
        })
    }

    fn scores<'s>(&self, state: &'s ToyState) -> &'s [f32] {
        &state.logits
    }

    fn advance(&self, state: &mut ToyState, token: TokenId) -> Result<()> {
        if token >= self.vocab.len() {
            return Err(Error::UnknownToken(token));
        }
        let h = std::mem::take(&mut state.h);
        let step = self.decoder_step(&state.enc, token, h, &state.ctx);
        state.h = step.gru.h;
        state.ctx = step.ctx;
        state.logits = step.logits;
        Ok(())
    }

    fn sequence_nll(&self, pairs: &[SeqPair]) -> Result<f64> {
        let (loss, tokens) = self.evaluate_loss(&self.prepare_pairs(pairs, OverlengthPolicy::Truncate)?);
        Ok(if tokens == 0 { 0.0 } else { loss / tokens as f64 })
    }

    fn fit_observed(
        &mut self,
        pairs: &[SeqPair],
        cfg: &TrainConfig,
        observer: &mut dyn FnMut(&Self, EpochEnd) -> Control,
    ) -> Result<FitReport> {
        if pairs.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        cfg.validate()?;
        let pairs = self.prepare_pairs(pairs, cfg.overlength)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut opt = Adam::new(self.params.len(), cfg.learning_rate);
        let effective = cfg.batch_size * cfg.grad_accumulation;
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut report = FitReport::default();

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut token_sum = 0;
            for idx in order.chunks(effective) {
                let batch: Vec<&SeqPair> = idx.iter().map(|&i| &pairs[i]).collect();
                let (loss, tokens, mut grad) = self.batch_gradient(&batch);
                loss_sum += loss;
                token_sum += tokens;
                if let Some(max_norm) = cfg.max_grad_norm {
                    let norm = grad.iter().map(|g| (*g as f64) * (*g as f64)).sum::<f64>().sqrt();
                    if norm > max_norm {
                        let s = (max_norm / norm) as f32;
                        grad.iter_mut().for_each(|g| *g *= s);
                    }
                }
                opt.step(&mut self.params, &grad);
                report.optimizer_steps += 1;
            }
            let mean = loss_sum / token_sum as f64;
            report.epoch_losses.push(mean);
            if observer(self, EpochEnd { epoch, loss: mean }) == Control::Stop {
                break;
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ToyBackbone {
        let vocab = Vocab::from_words(["a", "b", "c", "d"]);
        ToyBackbone::new(
            vocab,
            ToyConfig {
                embed_dim: 5,
                encoder_hidden: 4,
                decoder_hidden: 6,
                init_scale: 0.5,
                max_len: 16,
                seed: 3,
            },
        )
    }

    // Central finite differences against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut model = tiny();
        let v = &model.vocab;
        let pair = SeqPair {
            source: v.encode(&["a", "b", "c"]),
            target: v.encode(&["<pos>", "c", "a"]),
        };
        let mut grad = vec![0.0f32; model.params.len()];
        model.example_gradient(&pair, &mut grad);

        let loss = |m: &ToyBackbone| m.evaluate_loss(std::slice::from_ref(&pair)).0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        let mut idx: Vec<usize> = (0..model.params.len()).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(400) {
            let orig = model.params[i];
            let eps = 1e-2f32;
            model.params[i] = orig + eps;
            let up = loss(&model);
            model.params[i] = orig - eps;
            let down = loss(&model);
            model.params[i] = orig;
            let numeric = (up - down) / (2.0 * eps as f64);
            let analytic = grad[i] as f64;
            let tol = 2e-3 + 2e-2 * numeric.abs().max(analytic.abs());
            assert!(
                (numeric - analytic).abs() < tol,
                "param {i}: numeric {numeric} analytic {analytic}"
            );
            checked += 1;
        }
        assert_eq!(checked, 400);
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = tiny();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = ToyBackbone::load(dir.path()).unwrap();
        assert_eq!(back.params, model.params);
        assert_eq!(back.vocab, model.vocab);
        assert_eq!(back.config, model.config);
    }

    #[test]
    fn checkpoint_rejects_shape_mismatch() {
        let model = tiny();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        fs::write(dir.path().join("params.bin"), [0u8; 8]).unwrap();
        assert!(matches!(ToyBackbone::load(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn overlength_policy() {
        let mut model = tiny();
        let pair = SeqPair {
            source: vec![10; 20],
            target: vec![11; 3],
        };
        let cfg = TrainConfig {
            epochs: 1,
            overlength: OverlengthPolicy::Reject,
            ..TrainConfig::default()
        };
        assert!(matches!(
            model.fit(std::slice::from_ref(&pair), &cfg),
            Err(Error::SequenceTooLong { len: 20, max: 16 })
        ));
        let cfg = TrainConfig {
            overlength: OverlengthPolicy::Truncate,
            ..cfg
        };
        assert!(model.fit(&[pair], &cfg).is_ok());
    }
}
