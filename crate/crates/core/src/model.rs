//! TransBiLSTM: patch embedding, transformer encoders, stacked BiLSTMs and
//! a per-class sigmoid head.
//!
//! The input `T×D` is cut into `ceil(T/P)` non-overlapping patches (the
//! tail is zero-padded), each flattened to `P·D` and projected to
//! `d_model`. Every encoder computes
//!
//! ```text
//! n   = LayerNorm(x + Attention(x))
//! out = n + Dropout(Dense2(Dropout(ReLU(Dense1(n)))))
//! ```
//!
//! The head emits one row of three logits per patch; probabilities are
//! repeated over the timesteps of their patch.

use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSetId, Standardization};
use crate::nn::attention::AttentionCache;
use crate::nn::dropout::DropoutMask;
use crate::nn::lstm::BiLstmCache;
use crate::nn::norm::LayerNormCache;
use crate::nn::param::{count_params, join, Parameters};
use crate::nn::{
    dropout_forward, relu, relu_backward, sigmoid, BiLstm, Dense, LayerNorm, Mode, MultiHeadAttention, ParamContainer,
    Tensor,
};
use crate::rng::{derive_seed, seeded};

pub const N_CLASSES: usize = 3;

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]` so they stay
/// strictly between 0 and 1 after a saturated sigmoid.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransBiLstmConfig {
    pub input_dim: usize,
    pub patch_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub ffn_units: usize,
    pub n_encoder_layers: usize,
    pub n_bilstm_layers: usize,
    /// Concatenated width of both directions; each direction has half.
    pub bilstm_out: usize,
    pub dropout_rate: f64,
}

impl TransBiLstmConfig {
    /// Full-size architecture: 5 encoders with 6 heads of width 320, three
    /// BiLSTM layers of 320 outputs, patches of 15 timesteps.
    pub fn full(input_dim: usize) -> Self {
        Self {
            input_dim,
            patch_len: 15,
            d_model: 320,
            n_heads: 6,
            d_head: 320,
            ffn_units: 320,
            n_encoder_layers: 5,
            n_bilstm_layers: 3,
            bilstm_out: 320,
            dropout_rate: 0.1,
        }
    }

    /// Desk-scale architecture used for the synthetic corpus.
    pub fn toy(input_dim: usize) -> Self {
        Self {
            input_dim,
            patch_len: 4,
            d_model: 32,
            n_heads: 2,
            d_head: 16,
            ffn_units: 32,
            n_encoder_layers: 1,
            n_bilstm_layers: 1,
            bilstm_out: 32,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_dim", self.input_dim),
            ("patch_len", self.patch_len),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("ffn_units", self.ffn_units),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_bilstm_layers", self.n_bilstm_layers),
            ("bilstm_out", self.bilstm_out),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::validation(format!("model config: {name} must be >= 1")));
        }
        if !self.bilstm_out.is_multiple_of(2) {
            return Err(Error::validation(format!(
                "model config: bilstm_out must be even, got {}",
                self.bilstm_out
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::validation(format!(
                "model config: dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn embedding_param_count(&self) -> usize {
        Dense::param_count(self.patch_len * self.input_dim, self.d_model)
    }

    pub fn encoder_param_count(&self) -> usize {
        MultiHeadAttention::param_count(self.d_model, self.n_heads, self.d_head)
            + 2 * self.d_model
            + Dense::param_count(self.d_model, self.ffn_units)
            + Dense::param_count(self.ffn_units, self.d_model)
    }

    pub fn bilstm_param_count(&self) -> usize {
        let h = self.bilstm_out / 2;
        (0..self.n_bilstm_layers)
            .map(|l| BiLstm::param_count(if l == 0 { self.d_model } else { self.bilstm_out }, h))
            .sum()
    }

    pub fn head_param_count(&self) -> usize {
        Dense::param_count(self.bilstm_out, N_CLASSES)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        self.embedding_param_count()
            + self.n_encoder_layers * self.encoder_param_count()
            + self.bilstm_param_count()
            + self.head_param_count()
    }
}

pub fn param_count(config: &TransBiLstmConfig) -> usize {
    config.param_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub norm: LayerNorm,
    pub ffn1: Dense,
    pub ffn2: Dense,
}

impl Parameters for EncoderLayer {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.attention.named_params(&join(prefix, "attention"), out);
        self.norm.named_params(&join(prefix, "norm"), out);
        self.ffn1.named_params(&join(prefix, "ffn1"), out);
        self.ffn2.named_params(&join(prefix, "ffn2"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.attention.params_mut(out);
        self.norm.params_mut(out);
        self.ffn1.params_mut(out);
        self.ffn2.params_mut(out);
    }
}

struct EncoderCache {
    input: Tensor,
    attention: AttentionCache,
    norm: LayerNormCache,
    normed: Tensor,
    ffn1_pre: Tensor,
    ffn1_drop: DropoutMask,
    ffn1_out: Tensor,
    ffn2_drop: DropoutMask,
}

impl EncoderLayer {
    fn forward(&self, x: &Tensor, rate: f64, mode: Mode, seed: u64) -> Result<(Tensor, EncoderCache)> {
        let (a, attention) = self.attention.forward(x)?;
        let mut s = x.clone();
        s.add_assign(&a);
        let (normed, norm) = self.norm.forward(&s)?;
        let ffn1_pre = self.ffn1.apply(&normed);
        let (ffn1_out, ffn1_drop) = dropout_forward(&relu(&ffn1_pre), rate, mode, derive_seed(seed, 0))?;
        let (mut out, ffn2_drop) = dropout_forward(&self.ffn2.apply(&ffn1_out), rate, mode, derive_seed(seed, 1))?;
        out.add_assign(&normed);
        Ok((
            out,
            EncoderCache {
                input: x.clone(),
                attention,
                norm,
                normed,
                ffn1_pre,
                ffn1_drop,
                ffn1_out,
                ffn2_drop,
            },
        ))
    }

    fn backward(&self, cache: &EncoderCache, dy: &Tensor, grad: &mut EncoderLayer) -> Tensor {
        let dh2 = cache.ffn2_drop.backward(dy);
        let dd1 = self.ffn2.backward(&cache.ffn1_out, &dh2, &mut grad.ffn2);
        let dh1 = relu_backward(&cache.ffn1_pre, &cache.ffn1_drop.backward(&dd1));
        let mut dn = self.ffn1.backward(&cache.normed, &dh1, &mut grad.ffn1);
        dn.add_assign(dy);
        let ds = self.norm.backward(&cache.norm, &dn, &mut grad.norm);
        let mut dx = self.attention.backward(&cache.attention, &ds, &mut grad.attention);
        dx.add_assign(&ds);
        debug_assert_eq!(dx.shape(), cache.input.shape());
        dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransBiLstm {
    pub config: TransBiLstmConfig,
    pub embed: Dense,
    pub encoders: Vec<EncoderLayer>,
    pub bilstms: Vec<BiLstm>,
    pub head: Dense,
}

impl Parameters for TransBiLstm {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.embed.named_params(&join(prefix, "embed"), out);
        for (i, e) in self.encoders.iter().enumerate() {
            e.named_params(&join(prefix, &format!("encoder{i}")), out);
        }
        for (i, b) in self.bilstms.iter().enumerate() {
            b.named_params(&join(prefix, &format!("bilstm{i}")), out);
        }
        self.head.named_params(&join(prefix, "head"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.embed.params_mut(out);
        for e in &mut self.encoders {
            e.params_mut(out);
        }
        for b in &mut self.bilstms {
            b.params_mut(out);
        }
        self.head.params_mut(out);
    }
}

/// Intermediate values of one forward pass, consumed by
/// [`TransBiLstm::backward`].
pub struct ForwardCache {
    patches: Tensor,
    encoders: Vec<EncoderCache>,
    bilstm_inputs: Vec<Tensor>,
    bilstms: Vec<BiLstmCache>,
    head_input: Tensor,
}

/// Glorot-uniform weights, zero biases, unit layer-norm gains, LSTM
/// forget-gate biases of 1.
pub fn init_model(config: &TransBiLstmConfig, seed: u64) -> Result<TransBiLstm> {
    config.validate()?;
    let mut rng = seeded(seed);
    let c = config;
    let embed = Dense::glorot(c.patch_len * c.input_dim, c.d_model, &mut rng);
    let encoders = (0..c.n_encoder_layers)
        .map(|_| EncoderLayer {
            attention: MultiHeadAttention::glorot(c.d_model, c.n_heads, c.d_head, &mut rng),
            norm: LayerNorm::new(c.d_model),
            ffn1: Dense::glorot(c.d_model, c.ffn_units, &mut rng),
            ffn2: Dense::glorot(c.ffn_units, c.d_model, &mut rng),
        })
        .collect();
    let bilstms = (0..c.n_bilstm_layers)
        .map(|l| {
            let d_in = if l == 0 { c.d_model } else { c.bilstm_out };
            BiLstm::init(d_in, c.bilstm_out / 2, &mut rng)
        })
        .collect();
    let head = Dense::glorot(c.bilstm_out, N_CLASSES, &mut rng);
    Ok(TransBiLstm {
        config: config.clone(),
        embed,
        encoders,
        bilstms,
        head,
    })
}

/// Number of patches covering `t` timesteps.
pub fn patch_count(t: usize, patch_len: usize) -> usize {
    t.div_ceil(patch_len).max(1)
}

/// `T×D` → `ceil(T/P) × (P·D)`, zero-padding the tail.
pub fn patchify(features: &Tensor, patch_len: usize) -> Tensor {
    let (t, d) = (features.rows(), features.cols());
    let n = patch_count(t, patch_len);
    let mut out = Tensor::zeros(vec![n, patch_len * d]);
    let src = features.data();
    out.data_mut()[..t * d].copy_from_slice(&src[..t * d]);
    out
}

/// Per-patch majority targets over the first `valid` rows of `labels`
/// (ties count as positive) and the mask of patches holding at least one
/// valid row.
pub fn patch_targets(labels: &Tensor, valid: usize, patch_len: usize) -> (Tensor, Vec<bool>) {
    let n = patch_count(labels.rows(), patch_len);
    let mut targets = Tensor::zeros(vec![n, N_CLASSES]);
    let mut mask = vec![false; n];
    for (p, m) in mask.iter_mut().enumerate() {
        let start = p * patch_len;
        let end = ((p + 1) * patch_len).min(valid);
        if start >= end {
            continue;
        }
        *m = true;
        let len = end - start;
        for c in 0..N_CLASSES {
            let positives = (start..end).filter(|&i| labels.get(i, c) >= 0.5).count();
            if 2 * positives >= len {
                targets.set(p, c, 1.0);
            }
        }
    }
    (targets, mask)
}

fn expand_patches(probs: &Tensor, t: usize, patch_len: usize) -> Tensor {
    let mut out = Tensor::zeros(vec![t, N_CLASSES]);
    for i in 0..t {
        out.row_mut(i).copy_from_slice(probs.row(i / patch_len));
    }
    out
}

impl TransBiLstm {
    pub fn param_count(&self) -> usize {
        count_params(self)
    }

    fn check_input(&self, features: &Tensor) -> Result<()> {
        if features.shape().len() != 2 || features.cols() != self.config.input_dim {
            return Err(Error::shape(format!(
                "model expects T×{} features, got {:?}",
                self.config.input_dim,
                features.shape()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::shape("model input has no timesteps"));
        }
        Ok(())
    }

    /// Per-patch logits (`ceil(T/P) × 3`) with the cache for backward.
    pub fn forward_logits(&self, features: &Tensor, mode: Mode, seed: u64) -> Result<(Tensor, ForwardCache)> {
        self.check_input(features)?;
        let patches = patchify(features, self.config.patch_len);
        let mut x = self.embed.apply(&patches);
        let mut encoders = Vec::with_capacity(self.encoders.len());
        for (l, enc) in self.encoders.iter().enumerate() {
            let (y, cache) = enc.forward(&x, self.config.dropout_rate, mode, derive_seed(seed, l as u64))?;
            encoders.push(cache);
            x = y;
        }
        let mut bilstm_inputs = Vec::with_capacity(self.bilstms.len());
        let mut bilstms = Vec::with_capacity(self.bilstms.len());
        for layer in &self.bilstms {
            let (y, cache) = layer.forward(&x)?;
            bilstm_inputs.push(x);
            bilstms.push(cache);
            x = y;
        }
        let logits = self.head.apply(&x);
        if !logits.all_finite() {
            return Err(Error::Numeric("model produced non-finite logits".into()));
        }
        Ok((
            logits,
            ForwardCache {
                patches,
                encoders,
                bilstm_inputs,
                bilstms,
                head_input: x,
            },
        ))
    }

    /// Gradients of all parameters given `dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> TransBiLstm {
        let mut grad = crate::nn::param::zeros_like(self);
        let mut dx = self.head.backward(&cache.head_input, dlogits, &mut grad.head);
        for l in (0..self.bilstms.len()).rev() {
            debug_assert_eq!(cache.bilstm_inputs[l].rows(), dx.rows());
            dx = self.bilstms[l].backward_pass(&cache.bilstms[l], &dx, &mut grad.bilstms[l]);
        }
        for l in (0..self.encoders.len()).rev() {
            dx = self.encoders[l].backward(&cache.encoders[l], &dx, &mut grad.encoders[l]);
        }
        self.embed.backward(&cache.patches, &dx, &mut grad.embed);
        grad
    }

    /// Per-timestep probabilities (`T×3`), each patch's output repeated over
    /// its timesteps. Inputs shorter than one patch are padded with a
    /// warning.
    pub fn forward(&self, features: &Tensor, mode: Mode, seed: u64) -> Result<Tensor> {
        self.check_input(features)?;
        if features.rows() < self.config.patch_len {
            warn!(
                "input of {} timesteps is shorter than one patch ({}); zero-padding",
                features.rows(),
                self.config.patch_len
            );
        }
        let (logits, _) = self.forward_logits(features, mode, seed)?;
        let probs = logits.map(|z| sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR));
        Ok(expand_patches(&probs, features.rows(), self.config.patch_len))
    }

    /// Evaluates independent trials in parallel; output `i` belongs to
    /// input `i`.
    pub fn forward_batch(&self, batch: &[Tensor], mode: Mode, seed: u64) -> Result<Vec<Tensor>> {
        batch
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.forward(x, mode, derive_seed(seed, i as u64)))
            .collect()
    }

    /// Mean per-patch binary cross-entropy on one window, and its gradient.
    /// Only the first `valid` rows of the window are real data.
    pub fn loss_and_gradient(
        &self,
        features: &Tensor,
        labels: &Tensor,
        valid: usize,
        mode: Mode,
        seed: u64,
    ) -> Result<(f64, TransBiLstm)> {
        if labels.rows() != features.rows() || labels.cols() != N_CLASSES {
            return Err(Error::shape(format!(
                "labels {:?} do not match features {:?}",
                labels.shape(),
                features.shape()
            )));
        }
        let (logits, cache) = self.forward_logits(features, mode, seed)?;
        let (targets, mask) = patch_targets(labels, valid.min(features.rows()), self.config.patch_len);
        let (loss, dlogits) = crate::nn::loss::bce_with_logits(&logits, &targets, &mask);
        Ok((loss, self.backward(&cache, &dlogits)))
    }
}

/// Architecture used by the full-model gradient check (939 parameters).
pub fn gradcheck_config() -> TransBiLstmConfig {
    TransBiLstmConfig {
        input_dim: 3,
        patch_len: 2,
        d_model: 8,
        n_heads: 2,
        d_head: 4,
        ffn_units: 8,
        n_encoder_layers: 1,
        n_bilstm_layers: 1,
        bilstm_out: 8,
        dropout_rate: 0.1,
    }
}

/// Finite-difference check of every parameter gradient of a freshly
/// initialized model under the training loss on a random 7-step window
/// (the last patch is half padding). Dropout runs in training mode with a
/// fixed seed so the loss is a deterministic function of the parameters.
pub fn check_model_gradients(config: &TransBiLstmConfig, seed: u64) -> Result<f64> {
    use rand::Rng as _;

    let model = init_model(config, seed)?;
    let mut rng = seeded(derive_seed(seed, 1));
    let t = 4 * config.patch_len - 1;
    let x = Tensor::from_vec(
        vec![t, config.input_dim],
        (0..t * config.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let y = Tensor::from_vec(
        vec![t, N_CLASSES],
        (0..t * N_CLASSES).map(|_| f64::from(rng.random_bool(0.4))).collect(),
    )?;
    let dropout_seed = derive_seed(seed, 2);
    let (_, grad) = model.loss_and_gradient(&x, &y, t, Mode::Train, dropout_seed)?;
    let mut probe = model.clone();
    crate::nn::gradcheck::gradient_check(
        |theta| {
            crate::nn::param::assign_flat(&mut probe, theta);
            probe
                .loss_and_gradient(&x, &y, t, Mode::Train, dropout_seed)
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        },
        &crate::nn::param::flatten(&model),
        &crate::nn::param::flatten(&grad),
        crate::nn::gradcheck::DEFAULT_EPS,
    )
}

/// Serialized trained model: architecture, parameters and the feature
/// layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub config: TransBiLstmConfig,
    pub feature_set: FeatureSetId,
    pub columns: Vec<String>,
    pub fingerprint: String,
    pub standardization: Option<Standardization>,
    pub params: ParamContainer,
}

impl ModelCheckpoint {
    pub fn new(
        model: &TransBiLstm,
        feature_set: FeatureSetId,
        columns: Vec<String>,
        standardization: Option<Standardization>,
    ) -> Result<Self> {
        if columns.len() != model.config.input_dim {
            return Err(Error::shape(format!(
                "{} feature columns for a model with input_dim {}",
                columns.len(),
                model.config.input_dim
            )));
        }
        Ok(Self {
            config: model.config.clone(),
            fingerprint: crate::features::fingerprint(feature_set, &columns),
            feature_set,
            columns,
            standardization,
            params: ParamContainer::from_params(model),
        })
    }

    pub fn model(&self) -> Result<TransBiLstm> {
        let mut model = init_model(&self.config, 0)?;
        self.params.load_into(&mut model)?;
        Ok(model)
    }

    pub fn check_fingerprint(&self, expected: &str) -> Result<()> {
        if self.fingerprint != expected {
            return Err(Error::integrity(format!(
                "feature fingerprint mismatch: checkpoint has {}, input has {expected}",
                self.fingerprint
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint; with `expected_fingerprint` set, a checkpoint
    /// trained on a different feature layout is rejected.
    pub fn load(path: &Path, expected_fingerprint: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        let recomputed = crate::features::fingerprint(ckpt.feature_set, &ckpt.columns);
        if recomputed != ckpt.fingerprint {
            return Err(Error::integrity(format!(
                "checkpoint {} has an inconsistent fingerprint",
                path.display()
            )));
        }
        if let Some(expected) = expected_fingerprint {
            ckpt.check_fingerprint(expected)?;
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::named;

    fn small() -> TransBiLstmConfig {
        TransBiLstmConfig {
            input_dim: 3,
            patch_len: 2,
            d_model: 8,
            n_heads: 1,
            d_head: 8,
            ffn_units: 8,
            n_encoder_layers: 1,
            n_bilstm_layers: 1,
            bilstm_out: 8,
            dropout_rate: 0.1,
        }
    }

    #[test]
    fn small_param_count_by_hand() {
        // embed 6·8+8; attention q,v,o 3·(8·8+8) + k 8·8; norm 16;
        // ffn 2·(8·8+8); bilstm 2·4·4·(8+4+1); head 8·3+3
        let expected = 56 + (216 + 64) + 16 + 144 + 416 + 27;
        assert_eq!(param_count(&small()), expected);
        assert_eq!(init_model(&small(), 1).unwrap().param_count(), expected);
    }

    #[test]
    fn init_is_deterministic_and_biases_follow_scheme() {
        let a = init_model(&small(), 7).unwrap();
        assert_eq!(a, init_model(&small(), 7).unwrap());
        for (name, t) in named(&a) {
            if name.ends_with("bias") && !name.contains("bilstm") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        let h = 4;
        let bias = a.bilstms[0].forward.bias.data();
        assert!(bias[h..2 * h].iter().all(|&v| v == 1.0));
        assert!(bias[..h].iter().chain(&bias[2 * h..]).all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_configs() {
        let mut c = small();
        c.bilstm_out = 7;
        assert!(init_model(&c, 0).is_err());
        c = small();
        c.n_heads = 0;
        assert!(c.validate().is_err());
        c = small();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn patch_expansion() {
        let mut c = small();
        c.patch_len = 5;
        let m = init_model(&c, 3).unwrap();
        let x = Tensor::from_vec(vec![10, 3], (0..30).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let y = m.forward(&x, Mode::Eval, 0).unwrap();
        assert_eq!(y.shape(), &[10, 3]);
        for i in 1..5 {
            assert_eq!(y.row(i), y.row(0));
            assert_eq!(y.row(5 + i), y.row(5));
        }
        assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(y, m.forward(&x, Mode::Eval, 99).unwrap());
    }

    #[test]
    fn short_input_is_one_patch() {
        let m = init_model(&small(), 3).unwrap();
        let x = Tensor::filled(vec![1, 3], 0.5);
        assert_eq!(m.forward(&x, Mode::Eval, 0).unwrap().shape(), &[1, 3]);
    }

    #[test]
    fn input_width_mismatch() {
        let m = init_model(&small(), 3).unwrap();
        assert!(matches!(m.forward(&Tensor::zeros(vec![4, 4]), Mode::Eval, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn patch_targets_majority_and_mask() {
        let labels = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let (t, m) = patch_targets(&labels, 5, 2);
        assert_eq!(m, vec![true, true, true]);
        assert_eq!(t.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(t.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(t.row(2), &[0.0, 1.0, 0.0]);
        let (_, m) = patch_targets(&labels, 2, 2);
        assert_eq!(m, vec![true, false, false]);
    }

    #[test]
    fn full_model_gradients() {
        assert!(gradcheck_config().param_count() <= 5000);
        for seed in 0..3 {
            let err = check_model_gradients(&gradcheck_config(), seed).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err:e}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_and_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = init_model(&small(), 5).unwrap();
        let cols = crate::features::feature_columns(FeatureSetId::A, 0);
        let ckpt = ModelCheckpoint::new(&m, FeatureSetId::A, cols.clone(), None).unwrap();
        ckpt.save(&path).unwrap();
        let loaded = ModelCheckpoint::load(&path, Some(&ckpt.fingerprint)).unwrap();
        assert_eq!(loaded.model().unwrap(), m);
        let other = crate::features::fingerprint(FeatureSetId::B, &crate::features::feature_columns(FeatureSetId::B, 0));
        assert!(matches!(ModelCheckpoint::load(&path, Some(&other)), Err(Error::Integrity(_))));
    }
}
