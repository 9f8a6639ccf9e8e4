use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::inputs::PreparedQuery;
use super::{Bank, NormStats, QueryInputs};
use crate::dataprep::TrainingExample;
use crate::error::{shape_err, Error, Result};
use crate::gru::{gru_backward_acc, gru_forward_unchecked, GruCache, GruParams};
use crate::numkit::{dot, Mat, Rng};

/// Number of exogenous features per decoder step.
pub const DEC_EXO_WIDTH: usize = 4;
/// Number of features per encoder step.
pub const ENC_INPUT_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Unidirectional decoder.
    Edu,
    /// Bidirectional decoder.
    Edb,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Edu => "edu",
            ModelKind::Edb => "edb",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edu" => Ok(ModelKind::Edu),
            "edb" => Ok(ModelKind::Edb),
            other => Err(Error::Usage(format!("unknown model kind '{other}' (expected edu or edb)"))),
        }
    }
}

/// Affine layer `y = W·x + b`, with `b` stored as a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Mat,
    pub b: Mat,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Mat::zeros(out, inp),
            b: Mat::zeros(out, 1),
        }
    }

    pub fn xavier(out: usize, inp: usize, rng: &mut Rng) -> Self {
        Self {
            w: Mat::xavier(out, inp, rng),
            b: Mat::zeros(out, 1),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.data.clone();
        self.w.matvec_acc(x, &mut y);
        y
    }
}

/// Every trainable matrix of an encoder-decoder model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct EdParams {
    pub encoder: GruParams,
    /// Append-block embedding: `tanh(W·E_a + b)` gives the decoder initial state.
    pub embed: Dense,
    pub dec_fwd: GruParams,
    pub dec_bwd: Option<GruParams>,
    /// Output map from decoder state to one normalized travel time.
    pub out: Dense,
}

impl EdParams {
    pub fn zeros_like(&self) -> Self {
        let z = |g: &GruParams| GruParams::zeros(g.hidden(), g.input());
        Self {
            encoder: z(&self.encoder),
            embed: Dense::zeros(self.embed.w.rows, self.embed.w.cols),
            dec_fwd: z(&self.dec_fwd),
            dec_bwd: self.dec_bwd.as_ref().map(z),
            out: Dense::zeros(self.out.w.rows, self.out.w.cols),
        }
    }

    /// Matrices in a fixed order shared by `mats_mut` and `named`.
    pub fn mats(&self) -> Vec<&Mat> {
        let mut v: Vec<&Mat> = self.encoder.mats().to_vec();
        v.push(&self.embed.w);
        v.push(&self.embed.b);
        v.extend(self.dec_fwd.mats());
        if let Some(b) = &self.dec_bwd {
            v.extend(b.mats());
        }
        v.push(&self.out.w);
        v.push(&self.out.b);
        v
    }

    pub fn mats_mut(&mut self) -> Vec<&mut Mat> {
        let mut v: Vec<&mut Mat> = self.encoder.mats_mut().into_iter().collect();
        v.push(&mut self.embed.w);
        v.push(&mut self.embed.b);
        v.extend(self.dec_fwd.mats_mut());
        if let Some(b) = &mut self.dec_bwd {
            v.extend(b.mats_mut());
        }
        v.push(&mut self.out.w);
        v.push(&mut self.out.b);
        v
    }

    pub fn names(&self) -> Vec<String> {
        let gru = ["Wz", "Wr", "W", "Uz", "Ur", "U"];
        let mut v: Vec<String> = gru.iter().map(|n| format!("encoder.{n}")).collect();
        v.push("embed.w".into());
        v.push("embed.b".into());
        v.extend(gru.iter().map(|n| format!("dec_fwd.{n}")));
        if self.dec_bwd.is_some() {
            v.extend(gru.iter().map(|n| format!("dec_bwd.{n}")));
        }
        v.push("out.w".into());
        v.push("out.b".into());
        v
    }

    pub fn named(&self) -> BTreeMap<String, Mat> {
        self.names().into_iter().zip(self.mats().into_iter().cloned()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.mats().iter().map(|m| m.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.mats().iter().flat_map(|m| m.data.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_params() {
            return Err(shape_err("flat parameter vector", self.num_params(), x.len()));
        }
        let mut off = 0;
        for m in self.mats_mut() {
            let n = m.len();
            m.data.copy_from_slice(&x[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        for m in self.mats_mut() {
            m.fill(v);
        }
    }

    pub fn add_assign(&mut self, other: &EdParams) {
        for (a, b) in self.mats_mut().into_iter().zip(other.mats()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.mats_mut() {
            m.scale(s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.mats().iter().all(|m| m.all_finite())
    }
}

/// Layer widths of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub enc_hidden: usize,
    /// Decoder state width per direction.
    pub dec_hidden: usize,
    /// One-hot width, equal to the number of positions in the bank.
    pub position_width: usize,
}

impl ModelDims {
    pub fn context_width(&self) -> usize {
        self.enc_hidden + self.position_width + 1
    }

    pub fn decoder_input_width(&self) -> usize {
        DEC_EXO_WIDTH + self.context_width()
    }
}

/// Encoder GRU, append block, (uni|bi)directional decoder GRU and output map.
#[derive(Debug, Clone, PartialEq)]
pub struct EdModel {
    pub kind: ModelKind,
    pub bank: Bank,
    pub dims: ModelDims,
    pub params: EdParams,
    pub norm: NormStats,
}

/// Append-block output `E_a = [h_enc ; onehot(m - m_lo) ; t_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub ea: Vec<f64>,
    pub(crate) enc_caches: Vec<GruCache>,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub ctx: Context,
    pub h0: Vec<f64>,
    pub fwd: Vec<GruCache>,
    /// Indexed by decoder step, like `fwd`.
    pub bwd: Vec<GruCache>,
    pub states: Vec<Vec<f64>>,
    /// Normalized outputs.
    pub outputs: Vec<f64>,
}

/// Gradient of a scalar function of the outputs with respect to everything.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub params: EdParams,
    /// Gradient with respect to each normalized decoder exogenous input.
    pub dec_inputs: Vec<[f64; DEC_EXO_WIDTH]>,
    /// Gradient with respect to each normalized encoder input.
    pub enc_inputs: Vec<[f64; ENC_INPUT_WIDTH]>,
}

impl EdModel {
    /// Fresh model with Glorot-uniform weights and zero biases.
    pub fn new(kind: ModelKind, bank: Bank, enc_hidden: usize, dec_hidden: usize, norm: NormStats, rng: &mut Rng) -> Self {
        let dims = ModelDims {
            enc_hidden,
            dec_hidden,
            position_width: bank.len(),
        };
        let din = dims.decoder_input_width();
        let params = EdParams {
            encoder: GruParams::xavier(enc_hidden, ENC_INPUT_WIDTH, rng),
            embed: Dense::xavier(dec_hidden, dims.context_width(), rng),
            dec_fwd: GruParams::xavier(dec_hidden, din, rng),
            dec_bwd: match kind {
                ModelKind::Edu => None,
                ModelKind::Edb => Some(GruParams::xavier(dec_hidden, din, rng)),
            },
            out: Dense::xavier(1, state_width(kind, dec_hidden), rng),
        };
        Self {
            kind,
            bank,
            dims,
            params,
            norm,
        }
    }

    /// Same architecture with every weight set to zero.
    pub fn zeroed(kind: ModelKind, bank: Bank, enc_hidden: usize, dec_hidden: usize, norm: NormStats) -> Self {
        let mut m = Self::new(kind, bank, enc_hidden, dec_hidden, norm, &mut Rng::new(0));
        m.params.fill(0.0);
        m
    }

    pub fn state_width(&self) -> usize {
        state_width(self.kind, self.dims.dec_hidden)
    }

    /// Parameters of everything downstream of `E_a`: embed, decoder cell(s), output map.
    pub fn decoder_param_count(&self) -> usize {
        let p = &self.params;
        p.embed.w.len()
            + p.embed.b.len()
            + p.dec_fwd.num_params()
            + p.dec_bwd.as_ref().map_or(0, |b| b.num_params())
            + p.out.w.len()
            + p.out.b.len()
    }

    /// Checks internal consistency of kind, dims and weight shapes.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        p.encoder.validate()?;
        p.dec_fwd.validate()?;
        if p.encoder.input() != ENC_INPUT_WIDTH || p.encoder.hidden() != self.dims.enc_hidden {
            return Err(shape_err(
                "encoder",
                format!("{}x{}", self.dims.enc_hidden, ENC_INPUT_WIDTH),
                format!("{}x{}", p.encoder.hidden(), p.encoder.input()),
            ));
        }
        if self.dims.position_width != self.bank.len() {
            return Err(shape_err("position one-hot width", self.bank.len(), self.dims.position_width));
        }
        let (h, din) = (self.dims.dec_hidden, self.dims.decoder_input_width());
        if p.dec_fwd.hidden() != h || p.dec_fwd.input() != din {
            return Err(shape_err(
                "forward decoder",
                format!("{h}x{din}"),
                format!("{}x{}", p.dec_fwd.hidden(), p.dec_fwd.input()),
            ));
        }
        match (self.kind, &p.dec_bwd) {
            (ModelKind::Edu, None) => {}
            (ModelKind::Edb, Some(b)) => {
                b.validate()?;
                if b.hidden() != h || b.input() != din {
                    return Err(shape_err(
                        "backward decoder",
                        format!("{h}x{din}"),
                        format!("{}x{}", b.hidden(), b.input()),
                    ));
                }
            }
            (kind, b) => {
                return Err(Error::Usage(format!(
                    "{kind} model with backward decoder present = {}",
                    b.is_some()
                )));
            }
        }
        if p.embed.w.rows != h || p.embed.w.cols != self.dims.context_width() || p.embed.b.rows != h || p.embed.b.cols != 1 {
            return Err(shape_err(
                "append embed",
                format!("{h}x{}", self.dims.context_width()),
                format!("{}x{}", p.embed.w.rows, p.embed.w.cols),
            ));
        }
        let sw = self.state_width();
        if p.out.w.rows != 1 || p.out.w.cols != sw || p.out.b.len() != 1 {
            return Err(shape_err(
                "output map",
                format!("1x{sw}"),
                format!("{}x{}", p.out.w.rows, p.out.w.cols),
            ));
        }
        Ok(())
    }

    fn check_query(&self, q: &QueryInputs) -> Result<()> {
        if !self.bank.contains(q.m) {
            return Err(Error::Usage(format!("position m={} outside model bank {}", q.m, self.bank)));
        }
        if q.enc_seq.len() != q.m {
            return Err(shape_err("encoder sequence length", q.m, q.enc_seq.len()));
        }
        if q.dec_seq.is_empty() {
            return Err(Error::Usage("decoder sequence is empty (K = 0)".into()));
        }
        Ok(())
    }

    /// Runs the encoder and builds the append-block context `E_a`.
    pub fn encode(&self, q: &QueryInputs) -> Result<Context> {
        if !self.bank.contains(q.m) {
            return Err(Error::Usage(format!("position m={} outside model bank {}", q.m, self.bank)));
        }
        if q.enc_seq.len() != q.m {
            return Err(shape_err("encoder sequence length", q.m, q.enc_seq.len()));
        }
        Ok(self.encode_prepared(&PreparedQuery::new(q, &self.norm)))
    }

    pub(crate) fn encode_prepared(&self, q: &PreparedQuery) -> Context {
        let enc = &self.params.encoder;
        let mut h = vec![0.0; self.dims.enc_hidden];
        let mut caches = Vec::with_capacity(q.enc.len());
        for step in &q.enc {
            let (hn, c) = gru_forward_unchecked(enc, &h, step);
            caches.push(c);
            h = hn;
        }
        let mut ea = h;
        let mut onehot = vec![0.0; self.dims.position_width];
        onehot[q.m - self.bank.lo] = 1.0;
        ea.extend(onehot);
        ea.push(q.t_c);
        Context { ea, enc_caches: caches }
    }

    fn decoder_input(&self, exo: &[f64; DEC_EXO_WIDTH], ea: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(DEC_EXO_WIDTH + ea.len());
        u.extend_from_slice(exo);
        u.extend_from_slice(ea);
        u
    }

    pub(crate) fn forward_prepared(&self, q: &PreparedQuery) -> Trace {
        let ctx = self.encode_prepared(q);
        self.decode_prepared(ctx, &q.dec)
    }

    fn decode_prepared(&self, ctx: Context, dec: &[[f64; DEC_EXO_WIDTH]]) -> Trace {
        let p = &self.params;
        let h0: Vec<f64> = p.embed.apply(&ctx.ea).into_iter().map(f64::tanh).collect();
        let k = dec.len();
        let inputs: Vec<Vec<f64>> = dec.iter().map(|d| self.decoder_input(d, &ctx.ea)).collect();

        let mut fwd = Vec::with_capacity(k);
        let mut h = h0.clone();
        for u in &inputs {
            let (hn, c) = gru_forward_unchecked(&p.dec_fwd, &h, u);
            fwd.push(c);
            h = hn;
        }

        let mut bwd = Vec::new();
        if let Some(pb) = &p.dec_bwd {
            let mut rev = Vec::with_capacity(k);
            let mut h = h0.clone();
            for u in inputs.iter().rev() {
                let (hn, c) = gru_forward_unchecked(pb, &h, u);
                rev.push(c);
                h = hn;
            }
            rev.reverse();
            bwd = rev;
        }

        let states: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let mut s = fwd[i].h.clone();
                if let Some(b) = bwd.get(i) {
                    s.extend_from_slice(&b.h);
                }
                s
            })
            .collect();
        let w = p.out.w.row(0);
        let b = p.out.b.data[0];
        let outputs = states.iter().map(|s| dot(w, s) + b).collect();
        Trace {
            ctx,
            h0,
            fwd,
            bwd,
            states,
            outputs,
        }
    }

    /// Unidirectional decoding from an existing context. Returns seconds.
    pub fn decode_uni(&self, ctx: &Context, q: &QueryInputs) -> Result<Vec<f64>> {
        if self.kind != ModelKind::Edu {
            return Err(Error::Usage("decode_uni called on a bidirectional model".into()));
        }
        self.decode_checked(ctx, q)
    }

    /// Bidirectional decoding from an existing context. Returns seconds.
    pub fn decode_bi(&self, ctx: &Context, q: &QueryInputs) -> Result<Vec<f64>> {
        if self.kind != ModelKind::Edb {
            return Err(Error::Usage("decode_bi called on a unidirectional model".into()));
        }
        self.decode_checked(ctx, q)
    }

    fn decode_checked(&self, ctx: &Context, q: &QueryInputs) -> Result<Vec<f64>> {
        if q.dec_seq.is_empty() {
            return Err(Error::Usage("decoder sequence is empty (K = 0)".into()));
        }
        if ctx.ea.len() != self.dims.context_width() {
            return Err(shape_err("context width", self.dims.context_width(), ctx.ea.len()));
        }
        let pq = PreparedQuery::new(q, &self.norm);
        let trace = self.decode_prepared(ctx.clone(), &pq.dec);
        Ok(self.denormalize(&trace.outputs))
    }

    fn denormalize(&self, outputs: &[f64]) -> Vec<f64> {
        outputs.iter().map(|&y| self.norm.target.invert(y)).collect()
    }

    /// Predicted travel times (seconds) for sections `m+1 ..= N_s`.
    pub fn predict(&self, q: &QueryInputs) -> Result<Vec<f64>> {
        self.check_query(q)?;
        let pq = PreparedQuery::new(q, &self.norm);
        Ok(self.denormalize(&self.forward_prepared(&pq).outputs))
    }

    /// Predictions in normalized target units.
    pub fn predict_normalized(&self, q: &QueryInputs) -> Result<Vec<f64>> {
        self.check_query(q)?;
        Ok(self.forward_prepared(&PreparedQuery::new(q, &self.norm)).outputs)
    }

    /// MSE training loss of one example.
    pub fn example_loss(&self, ex: &TrainingExample) -> Result<f64> {
        let y = self.predict_normalized(&ex.inputs)?;
        let t = self.normalized_targets(ex)?;
        mse(&y, &t)
    }

    pub(crate) fn normalized_targets(&self, ex: &TrainingExample) -> Result<Vec<f64>> {
        if ex.targets.len() != ex.inputs.dec_seq.len() {
            return Err(shape_err("target length", ex.inputs.dec_seq.len(), ex.targets.len()));
        }
        Ok(ex.targets.iter().map(|&t| self.norm.target.apply(t)).collect())
    }

    /// Exact gradient of the example's MSE loss with respect to every parameter.
    pub fn model_backward(&self, ex: &TrainingExample) -> Result<(f64, EdParams)> {
        self.check_query(&ex.inputs)?;
        let t = self.normalized_targets(ex)?;
        let pq = PreparedQuery::new(&ex.inputs, &self.norm);
        let mut grads = self.params.zeros_like();
        let loss = self.accumulate_example_grad(&pq, &t, &mut grads);
        Ok((loss, grads))
    }

    /// Forward + backward on a prepared example, adding into `grads`. Returns the loss.
    pub(crate) fn accumulate_example_grad(&self, q: &PreparedQuery, targets: &[f64], grads: &mut EdParams) -> f64 {
        let trace = self.forward_prepared(q);
        let k = targets.len() as f64;
        let mut loss = 0.0;
        let dy: Vec<f64> = trace
            .outputs
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let e = y - t;
                loss += e * e;
                2.0 * e / k
            })
            .collect();
        self.backward_trace(&trace, &dy, grads);
        loss / k
    }

    /// Gradient of `Σ dy_i · output_i` (normalized outputs) with respect to
    /// parameters and normalized inputs.
    pub fn output_gradients(&self, q: &QueryInputs, dy: &[f64]) -> Result<ModelGrads> {
        self.check_query(q)?;
        if dy.len() != q.dec_seq.len() {
            return Err(shape_err("output gradient length", q.dec_seq.len(), dy.len()));
        }
        let pq = PreparedQuery::new(q, &self.norm);
        let trace = self.forward_prepared(&pq);
        let mut grads = self.params.zeros_like();
        let (dec_inputs, enc_inputs) = self.backward_trace(&trace, dy, &mut grads);
        Ok(ModelGrads {
            params: grads,
            dec_inputs,
            enc_inputs,
        })
    }

    /// Backpropagates output gradients `dy` through the whole unrolled model.
    #[allow(clippy::type_complexity)]
    fn backward_trace(&self, tr: &Trace, dy: &[f64], g: &mut EdParams) -> (Vec<[f64; DEC_EXO_WIDTH]>, Vec<[f64; ENC_INPUT_WIDTH]>) {
        let p = &self.params;
        let h = self.dims.dec_hidden;
        let k = dy.len();
        let cw = self.dims.context_width();
        let mut d_ea = vec![0.0; cw];
        let mut dh0 = vec![0.0; h];
        let mut d_exo = vec![[0.0; DEC_EXO_WIDTH]; k];
        let mut du = vec![0.0; DEC_EXO_WIDTH + cw];

        // output map
        let wout = p.out.w.row(0).to_vec();
        let mut ds: Vec<Vec<f64>> = Vec::with_capacity(k);
        for i in 0..k {
            g.out.w.outer_acc(&dy[i..i + 1], &tr.states[i]);
            g.out.b.data[0] += dy[i];
            ds.push(wout.iter().map(|w| w * dy[i]).collect());
        }

        let mut collect_du = |du: &mut Vec<f64>, step: usize, d_ea: &mut Vec<f64>| {
            for c in 0..DEC_EXO_WIDTH {
                d_exo[step][c] += du[c];
            }
            for c in 0..cw {
                d_ea[c] += du[DEC_EXO_WIDTH + c];
            }
            du.iter_mut().for_each(|v| *v = 0.0);
        };

        // forward chain: h_i = f1(h_{i-1}, u_i), walked right to left
        let mut carry = vec![0.0; h];
        for i in (0..k).rev() {
            let dh: Vec<f64> = ds[i][..h].iter().zip(&carry).map(|(a, b)| a + b).collect();
            carry.iter_mut().for_each(|v| *v = 0.0);
            gru_backward_acc(&p.dec_fwd, &tr.fwd[i], &dh, &mut g.dec_fwd, &mut carry, &mut du);
            collect_du(&mut du, i, &mut d_ea);
        }
        dh0.iter_mut().zip(&carry).for_each(|(a, b)| *a += b);

        // backward chain: h_i = f2(h_{i+1}, u_i), walked left to right
        if let (Some(pb), Some(gb)) = (&p.dec_bwd, &mut g.dec_bwd) {
            let mut carry = vec![0.0; h];
            for i in 0..k {
                let dh: Vec<f64> = ds[i][h..].iter().zip(&carry).map(|(a, b)| a + b).collect();
                carry.iter_mut().for_each(|v| *v = 0.0);
                gru_backward_acc(pb, &tr.bwd[i], &dh, gb, &mut carry, &mut du);
                collect_du(&mut du, i, &mut d_ea);
            }
            dh0.iter_mut().zip(&carry).for_each(|(a, b)| *a += b);
        }

        // append embed: h0 = tanh(We·ea + be)
        let da: Vec<f64> = dh0.iter().zip(&tr.h0).map(|(d, y)| d * (1.0 - y * y)).collect();
        g.embed.w.outer_acc(&da, &tr.ctx.ea);
        for (b, d) in g.embed.b.data.iter_mut().zip(&da) {
            *b += d;
        }
        p.embed.w.t_matvec_acc(&da, &mut d_ea);

        // encoder, from the last unrolled step back to the first
        let he = self.dims.enc_hidden;
        let mut carry = d_ea[..he].to_vec();
        let m = tr.ctx.enc_caches.len();
        let mut d_enc = vec![[0.0; ENC_INPUT_WIDTH]; m];
        let mut du_enc = vec![0.0; ENC_INPUT_WIDTH];
        for t in (0..m).rev() {
            let mut dh_prev = vec![0.0; he];
            gru_backward_acc(&p.encoder, &tr.ctx.enc_caches[t], &carry, &mut g.encoder, &mut dh_prev, &mut du_enc);
            d_enc[t].copy_from_slice(&du_enc);
            du_enc.iter_mut().for_each(|v| *v = 0.0);
            carry = dh_prev;
        }
        (d_exo, d_enc)
    }
}

fn state_width(kind: ModelKind, dec_hidden: usize) -> usize {
    match kind {
        ModelKind::Edu => dec_hidden,
        ModelKind::Edb => 2 * dec_hidden,
    }
}

/// Mean squared error over `K ≥ 1` components.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(shape_err("loss operands", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::Usage("loss over zero components".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}
