//! Extraction network: encoder, separator with clue injection, mask decoder,
//! plus the audio, visual and mixture cluenets and reliability predictors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tse_autodiff::{ConvSpec, Graph, NormMode, ParamStore, Real, Tensor, Var};

use crate::config::{FusionMode, ModelConfig};
use crate::corruption::MaskSpec;
use crate::error::{CoreError, Result};
use crate::fusion::{self, AttentionParams, FusionOutput, FusionVars};
use crate::objectives::Predictions;

/// One example's clues plus the corruption that produced them.
#[derive(Clone, Debug, Default)]
pub struct ClueBundle {
    /// Enrollment waveform.
    pub audio: Option<Vec<f32>>,
    /// Visual features, `[T_v, D_v]` row-major.
    pub visual: Option<Tensor<f32>>,
    pub mask: Option<MaskSpec>,
    pub snr_db: Option<f64>,
}

impl ClueBundle {
    pub fn new(audio: Vec<f32>, visual: Tensor<f32>) -> Self {
        ClueBundle { audio: Some(audio), visual: Some(visual), mask: None, snr_db: None }
    }
}

/// Replaces the learned fusion, for baselines and pass-through checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FusionOverride {
    /// Constant attention weights `(audio, visual)`.
    Weights([f64; 2]),
    /// Fused clue of all ones.
    Ones,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForwardOptions {
    pub fusion_override: Option<FusionOverride>,
    /// Also run the reliability predictors.
    pub predict: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// Extracted waveform `[1, T]`.
    pub estimate: Var,
    pub fusion: FusionVars,
    /// `[D_e, 1]`
    pub z_audio: Option<Var>,
    /// `[D_e, T_e]`
    pub z_visual: Option<Var>,
    /// `[D_e, T_e]`
    pub z_mix: Option<Var>,
    pub predictions: Predictions,
    pub frames: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Visual,
}

/// Configuration plus every trainable parameter.
#[derive(Clone, Debug)]
pub struct ExtractionModel<F: Real> {
    config: ModelConfig,
    params: ParamStore<F>,
}

fn param_shapes(c: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (n, l, b, h, p, d) = (c.encoder_channels, c.encoder_kernel, c.bottleneck, c.hidden, c.block_kernel, c.embed_dim);
    let mut v: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| v.push((name, shape, init));
    push("encoder.w".into(), vec![n, 1, l], Init::Fan(l));
    push("separator.norm.g".into(), vec![n], Init::Const(1.0));
    push("separator.norm.b".into(), vec![n], Init::Const(0.0));
    push("separator.bottleneck.w".into(), vec![b, n], Init::Fan(n));
    push("separator.bottleneck.b".into(), vec![b], Init::Const(0.0));
    for i in 0..c.total_blocks() {
        let s = format!("separator.block{i}");
        push(format!("{s}.in.w"), vec![h, b], Init::Fan(b));
        push(format!("{s}.in.b"), vec![h], Init::Const(0.0));
        push(format!("{s}.prelu1"), vec![1], Init::Const(0.25));
        push(format!("{s}.norm1.g"), vec![h], Init::Const(1.0));
        push(format!("{s}.norm1.b"), vec![h], Init::Const(0.0));
        push(format!("{s}.dconv.w"), vec![h, p], Init::Fan(p));
        push(format!("{s}.dconv.b"), vec![h], Init::Const(0.0));
        push(format!("{s}.prelu2"), vec![1], Init::Const(0.25));
        push(format!("{s}.norm2.g"), vec![h], Init::Const(1.0));
        push(format!("{s}.norm2.b"), vec![h], Init::Const(0.0));
        push(format!("{s}.out.w"), vec![b, h], Init::Fan(h));
        push(format!("{s}.out.b"), vec![b], Init::Const(0.0));
    }
    push("mask.prelu".into(), vec![1], Init::Const(0.25));
    push("mask.w".into(), vec![n, b], Init::Fan(b));
    push("mask.b".into(), vec![n], Init::Const(0.0));
    push("decoder.w".into(), vec![n, 1, l], Init::Fan(n));

    push("audio_clue.encoder.w".into(), vec![n, 1, l], Init::Fan(l));
    for (prefix, input) in [("audio_clue", n), ("visual_clue", c.visual_dim), ("mix_embed", b)] {
        let mut cin = input;
        for (j, &k) in c.clue_kernels.iter().enumerate() {
            push(format!("{prefix}.conv{j}.w"), vec![d, cin, k], Init::Fan(cin * k));
            push(format!("{prefix}.conv{j}.b"), vec![d], Init::Const(0.0));
            push(format!("{prefix}.prelu{j}"), vec![1], Init::Const(0.25));
            push(format!("{prefix}.norm{j}.g"), vec![d], Init::Const(1.0));
            push(format!("{prefix}.norm{j}.b"), vec![d], Init::Const(0.0));
            cin = d;
        }
        push(format!("{prefix}.proj.w"), vec![d, d], Init::Fan(d));
        push(format!("{prefix}.proj.b"), vec![d], Init::Const(0.0));
    }
    for (name, shape) in AttentionParams::shapes(d) {
        let init = if name.ends_with(".b") { Init::Const(0.0) } else { Init::Fan(d) };
        push(name, shape, init);
    }
    let hp = c.predictor_width();
    for m in ["audio", "visual"] {
        let s = format!("predict.{m}");
        push(format!("{s}.l1.w"), vec![hp, d], Init::Fan(d));
        push(format!("{s}.l1.b"), vec![hp], Init::Const(0.0));
        push(format!("{s}.l2.w"), vec![hp, hp], Init::Fan(hp));
        push(format!("{s}.l2.b"), vec![hp], Init::Const(0.0));
        push(format!("{s}.l3.w"), vec![1, hp], Init::Fan(hp));
        push(format!("{s}.l3.b"), vec![1], Init::Const(0.0));
    }
    v
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Const(f64),
    /// Normal with variance 1 / fan_in.
    Fan(usize),
}

impl<F: Real> ExtractionModel<F> {
    /// Fresh model with seeded random weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape, init) in param_shapes(&config) {
            let value = match init {
                Init::Const(c) => Tensor::full(&shape, F::c(c)),
                Init::Fan(fan) => Tensor::randn(&shape, 1.0 / (fan as f64).sqrt(), &mut rng),
            };
            params.add(name, value)?;
        }
        Ok(ExtractionModel { config, params })
    }

    /// Wrap existing parameters; names and shapes must match the config.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != params.len() {
            return Err(CoreError::Format(format!("expected {} parameters, found {}", expected.len(), params.len())));
        }
        for ((name, shape, _), p) in expected.iter().zip(params.iter()) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(CoreError::Format(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(ExtractionModel { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<F> {
        self.params
    }

    /// Same model with a different fusion and multitask mode; parameters are
    /// shared by all modes.
    pub fn set_modes(&mut self, fusion: FusionMode, multitask: crate::config::MultitaskMode) {
        self.config.fusion_mode = fusion;
        self.config.multitask_mode = multitask;
    }

    pub fn cast<G: Real>(&self) -> ExtractionModel<G> {
        ExtractionModel { config: self.config.clone(), params: self.params.cast() }
    }

    fn p(&self, g: &mut Graph<F>, name: &str) -> Result<Var> {
        Ok(g.param_named(&self.params, name)?)
    }

    fn check_len(&self, what: &'static str, len: usize) -> Result<usize> {
        self.config.frames_for(len).ok_or(CoreError::TooShort { what, min: self.config.encoder_kernel, got: len })
    }

    fn waveform(&self, g: &mut Graph<F>, samples: &[F], what: &'static str) -> Result<Var> {
        self.check_len(what, samples.len())?;
        Ok(g.constant(Tensor::new(vec![1, samples.len()], samples.to_vec())?))
    }

    fn encoder(&self, g: &mut Graph<F>, wave: Var, weight: &str) -> Result<Var> {
        let w = self.p(g, weight)?;
        let y = g.conv1d(wave, w, None, ConvSpec::new(self.config.hop(), 0, 1))?;
        Ok(g.relu(y)?)
    }

    /// Rectified encoder representation `[N, T_e]` of a `[1, T]` waveform.
    pub fn encode(&self, g: &mut Graph<F>, mixture: &[F]) -> Result<Var> {
        let wave = self.waveform(g, mixture, "mixture")?;
        self.encoder(g, wave, "encoder.w")
    }

    /// Conv stack shared by the cluenets: edge-padded same-length convs, each
    /// followed by PReLU and per-frame layer norm, then a frame-wise linear.
    fn clue_stack(&self, g: &mut Graph<F>, x: Var, prefix: &str) -> Result<Var> {
        let mut h = x;
        for (j, &k) in self.config.clue_kernels.iter().enumerate() {
            let padded = edge_pad(g, h, (k - 1) / 2)?;
            let w = self.p(g, &format!("{prefix}.conv{j}.w"))?;
            let b = self.p(g, &format!("{prefix}.conv{j}.b"))?;
            h = g.conv1d(padded, w, Some(b), ConvSpec::new(1, 0, 1))?;
            let a = self.p(g, &format!("{prefix}.prelu{j}"))?;
            h = g.prelu(h, a)?;
            let gamma = self.p(g, &format!("{prefix}.norm{j}.g"))?;
            let beta = self.p(g, &format!("{prefix}.norm{j}.b"))?;
            h = g.layer_norm(h, gamma, beta, NormMode::PerFrame)?;
        }
        let w = self.p(g, &format!("{prefix}.proj.w"))?;
        let b = self.p(g, &format!("{prefix}.proj.b"))?;
        Ok(g.linear(h, w, Some(b))?)
    }

    /// Time-averaged audio clue embedding `[D_e, 1]`.
    pub fn audio_cluenet(&self, g: &mut Graph<F>, clue: &[F]) -> Result<Var> {
        let wave = self.waveform(g, clue, "audio clue")?;
        let enc = self.encoder(g, wave, "audio_clue.encoder.w")?;
        let h = self.clue_stack(g, enc, "audio_clue")?;
        let m = g.mean(h, Some(1))?;
        Ok(g.reshape(m, &[self.config.embed_dim, 1])?)
    }

    /// Visual clue embedding upsampled to `frames` encoder frames, `[D_e, T_e]`.
    /// `visual` is `[T_v, D_v]`.
    pub fn visual_cluenet(&self, g: &mut Graph<F>, visual: &Tensor<F>, frames: usize) -> Result<Var> {
        let s = visual.shape();
        if s.len() != 2 || s[1] != self.config.visual_dim || s[0] == 0 {
            return Err(CoreError::Shape(format!(
                "visual clue must be [T_v >= 1, {}], got {s:?}",
                self.config.visual_dim
            )));
        }
        let (tv, dv) = (s[0], s[1]);
        let mut cm = vec![F::zero(); tv * dv];
        for t in 0..tv {
            for c in 0..dv {
                cm[c * tv + t] = visual.data()[t * dv + c];
            }
        }
        let x = g.constant(Tensor::new(vec![dv, tv], cm)?);
        let h = self.clue_stack(g, x, "visual_clue")?;
        Ok(g.upsample_repeat(h, frames.div_ceil(tv).max(1), frames)?)
    }

    /// Frame-wise mixture embedding `[D_e, T_e]` of the separator state at the
    /// fusion point.
    pub fn mixture_embed(&self, g: &mut Graph<F>, y_prime: Var) -> Result<Var> {
        self.clue_stack(g, y_prime, "mix_embed")
    }

    /// Reliability in (0, 1) for each column of `embedding` (`[D_e, T]`).
    pub fn clue_condition_predict(&self, g: &mut Graph<F>, embedding: Var, which: Modality) -> Result<Var> {
        let m = match which {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        };
        let mut h = embedding;
        for layer in 1..=3 {
            let w = self.p(g, &format!("predict.{m}.l{layer}.w"))?;
            let b = self.p(g, &format!("predict.{m}.l{layer}.b"))?;
            h = g.linear(h, w, Some(b))?;
            h = if layer < 3 { g.relu(h)? } else { g.sigmoid(h)? };
        }
        Ok(h)
    }

    fn block(&self, g: &mut Graph<F>, x: Var, i: usize) -> Result<Var> {
        let s = format!("separator.block{i}");
        let dilation = 1usize << (i % self.config.blocks);
        let w = self.p(g, &format!("{s}.in.w"))?;
        let b = self.p(g, &format!("{s}.in.b"))?;
        let mut h = g.linear(x, w, Some(b))?;
        let a = self.p(g, &format!("{s}.prelu1"))?;
        h = g.prelu(h, a)?;
        let (gm, bt) = (self.p(g, &format!("{s}.norm1.g"))?, self.p(g, &format!("{s}.norm1.b"))?);
        h = g.layer_norm(h, gm, bt, NormMode::Global)?;
        let w = self.p(g, &format!("{s}.dconv.w"))?;
        let b = self.p(g, &format!("{s}.dconv.b"))?;
        let pad = dilation * (self.config.block_kernel - 1) / 2;
        h = g.depthwise_conv1d(h, w, Some(b), ConvSpec::new(1, pad, dilation))?;
        let a = self.p(g, &format!("{s}.prelu2"))?;
        h = g.prelu(h, a)?;
        let (gm, bt) = (self.p(g, &format!("{s}.norm2.g"))?, self.p(g, &format!("{s}.norm2.b"))?);
        h = g.layer_norm(h, gm, bt, NormMode::Global)?;
        let w = self.p(g, &format!("{s}.out.w"))?;
        let b = self.p(g, &format!("{s}.out.b"))?;
        h = g.linear(h, w, Some(b))?;
        Ok(g.add(x, h)?)
    }

    fn fuse(
        &self,
        g: &mut Graph<F>,
        y_prime: Var,
        z_a: Option<Var>,
        z_v: Option<Var>,
        opts: &ForwardOptions,
    ) -> Result<(FusionVars, Option<Var>)> {
        let t = g.shape(y_prime)[1];
        let d = self.config.embed_dim;
        let mode = self.config.fusion_mode;
        let need = |z: Option<Var>, clue: &'static str, mode: &'static str| {
            z.ok_or(CoreError::MissingClue { mode, clue })
        };
        let ones_t = |g: &mut Graph<F>| g.constant(Tensor::full(&[1, t], F::one()));
        let constant_weights = |g: &mut Graph<F>, w: [f64; 2]| -> Result<Var> {
            let mut v = vec![w[0]; t];
            v.extend(std::iter::repeat(w[1]).take(t));
            Ok(g.constant(Tensor::from_f64(&[2, t], &v)?))
        };
        match opts.fusion_override {
            Some(FusionOverride::Ones) => {
                let fused = g.constant(Tensor::full(&[d, t], F::one()));
                let weights = constant_weights(g, [0.5, 0.5])?;
                let scale = ones_t(g);
                return Ok((FusionVars { fused, weights, scale }, None));
            }
            Some(FusionOverride::Weights(w)) => {
                let (za, zv) = (need(z_a, "audio", "forced")?, need(z_v, "visual", "forced")?);
                return Ok((fusion::forced_fuse(g, za, zv, w)?, None));
            }
            None => {}
        }
        match mode {
            FusionMode::Audio => {
                let za = need(z_a, "audio", "audio")?;
                let o = ones_t(g);
                let fused = g.mul(za, o)?;
                let weights = constant_weights(g, [1.0, 0.0])?;
                let scale = ones_t(g);
                Ok((FusionVars { fused, weights, scale }, None))
            }
            FusionMode::Visual => {
                let fused = need(z_v, "visual", "visual")?;
                let weights = constant_weights(g, [0.0, 1.0])?;
                let scale = ones_t(g);
                Ok((FusionVars { fused, weights, scale }, None))
            }
            FusionMode::Sum => {
                let (za, zv) = (need(z_a, "audio", "sum")?, need(z_v, "visual", "sum")?);
                Ok((fusion::summation_fuse(g, za, zv)?, None))
            }
            FusionMode::Attention | FusionMode::NormAttention => {
                let name = mode.as_str();
                let (za, zv) = (need(z_a, "audio", name)?, need(z_v, "visual", name)?);
                let zm = self.mixture_embed(g, y_prime)?;
                let p = AttentionParams::bind(g, &self.params, self.config.epsilon_sharpen)?;
                let f = if mode == FusionMode::Attention {
                    fusion::attention_fuse(g, za, zv, zm, &p)?
                } else {
                    fusion::normalized_attention_fuse(g, za, zv, zm, &p)?
                };
                Ok((f, Some(zm)))
            }
        }
    }

    /// Full forward pass recorded into `g`.
    pub fn forward(
        &self,
        g: &mut Graph<F>,
        mixture: &[F],
        clues: &ClueBundle,
        opts: &ForwardOptions,
    ) -> Result<ForwardVars> {
        let c = &self.config;
        let frames = self.check_len("mixture", mixture.len())?;
        let y = self.encode(g, mixture)?;

        let mode = c.fusion_mode;
        let learned = opts.fusion_override.is_none();
        let forced_weights = matches!(opts.fusion_override, Some(FusionOverride::Weights(_)));
        let want_audio = opts.predict || forced_weights || (learned && mode.uses_audio());
        let want_visual = opts.predict || forced_weights || (learned && mode.uses_visual());
        let z_audio = match (&clues.audio, want_audio) {
            (Some(a), true) => {
                let a: Vec<F> = a.iter().map(|&x| F::c(x as f64)).collect();
                Some(self.audio_cluenet(g, &a)?)
            }
            _ => None,
        };
        let z_visual = match (&clues.visual, want_visual) {
            (Some(v), true) => Some(self.visual_cluenet(g, &v.cast(), frames)?),
            _ => None,
        };

        let gamma = self.p(g, "separator.norm.g")?;
        let beta = self.p(g, "separator.norm.b")?;
        let mut x = g.layer_norm(y, gamma, beta, NormMode::Global)?;
        let w = self.p(g, "separator.bottleneck.w")?;
        let b = self.p(g, "separator.bottleneck.b")?;
        x = g.linear(x, w, Some(b))?;

        let mut fusion_out = None;
        let mut z_mix = None;
        for i in 0..c.total_blocks() {
            if i == c.fuse_after_blocks {
                let (f, zm) = self.fuse(g, x, z_audio, z_visual, opts)?;
                x = inject_clue(g, x, f.fused)?;
                fusion_out = Some(f);
                z_mix = zm;
            }
            x = self.block(g, x, i)?;
        }
        let fusion = fusion_out.expect("fuse_after_blocks validated below total blocks");

        let a = self.p(g, "mask.prelu")?;
        let mut m = g.prelu(x, a)?;
        let w = self.p(g, "mask.w")?;
        let b = self.p(g, "mask.b")?;
        m = g.linear(m, w, Some(b))?;
        m = g.sigmoid(m)?;
        let masked = g.mul(m, y)?;
        let w = self.p(g, "decoder.w")?;
        let wave = g.transposed_conv1d(masked, w, None, c.hop())?;
        let estimate = g.pad_trim(wave, mixture.len())?;

        let mut predictions = Predictions::default();
        if opts.predict {
            if let Some(za) = z_audio {
                predictions.audio = Some(self.clue_condition_predict(g, za, Modality::Audio)?);
            }
            if let Some(zv) = z_visual {
                predictions.visual = Some(self.clue_condition_predict(g, zv, Modality::Visual)?);
            }
        }
        Ok(ForwardVars { estimate, fusion, z_audio, z_visual, z_mix, predictions, frames })
    }

    /// Extract the target waveform; output length equals input length.
    pub fn extract(&self, mixture: &[F], clues: &ClueBundle) -> Result<(Vec<F>, FusionOutput<F>)> {
        self.extract_with(mixture, clues, &ForwardOptions::default())
    }

    pub fn extract_with(
        &self,
        mixture: &[F],
        clues: &ClueBundle,
        opts: &ForwardOptions,
    ) -> Result<(Vec<F>, FusionOutput<F>)> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, mixture, clues, opts)?;
        let fusion = out.fusion.output(&g);
        Ok((g.value(out.estimate).data().to_vec(), fusion))
    }
}

/// `X' = Y' * Z` elementwise; shapes must match exactly.
pub fn inject_clue<F: Real>(g: &mut Graph<F>, y_prime: Var, z_av: Var) -> Result<Var> {
    if g.shape(y_prime) != g.shape(z_av) {
        return Err(CoreError::Shape(format!(
            "inject_clue: representation {:?} vs clue {:?}",
            g.shape(y_prime),
            g.shape(z_av)
        )));
    }
    Ok(g.mul(y_prime, z_av)?)
}

/// Repeat the first and last frame `pad` times on each side.
fn edge_pad<F: Real>(g: &mut Graph<F>, x: Var, pad: usize) -> Result<Var> {
    if pad == 0 {
        return Ok(x);
    }
    let t = g.shape(x)[1];
    let first = g.slice(x, 1, 0, 1)?;
    let last = g.slice(x, 1, t - 1, 1)?;
    let mut parts = vec![first; pad];
    parts.push(x);
    parts.extend(std::iter::repeat(last).take(pad));
    Ok(g.concat(&parts, 1)?)
}
