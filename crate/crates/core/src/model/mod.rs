//! The stacked attention network: question encoder, region projection, `K`
//! attention layers with query refinement, and the answer classifier.

mod attention;
mod checkpoint;

pub use attention::{
    aggregate_and_refine, attention_step, classify, predict_answer, AttentionLayerParams, ClassifierParams,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SanError};
use crate::image::{feature_columns, project_regions, ImageProjection, RegionFeatureMap};
use crate::params::{Bound, ParamStore};
use crate::question::{EncoderKind, LstmParams, QuestionEncoder, TextCnnParams, DEFAULT_FILTERS};
use crate::train::{dropout, Mode};

pub const MAX_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    /// Number of attention layers `K`.
    pub layers: usize,
    pub vocab_size: usize,
    pub answer_count: usize,
    /// Raw region feature length `d_raw`.
    pub raw_dim: usize,
    pub embed_dim: usize,
    /// LSTM hidden size; the model dimension `d` for the LSTM encoder.
    pub hidden: usize,
    /// CNN filters per window size; their sum is `d` for the CNN encoder.
    pub cnn_filters: [usize; 3],
    /// Attention hidden size `k`; `None` means `k = d`.
    pub attn_hidden: Option<usize>,
    pub forget_bias_one: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Lstm,
            layers: 2,
            vocab_size: 2,
            answer_count: 2,
            raw_dim: 16,
            embed_dim: 64,
            hidden: 64,
            cnn_filters: DEFAULT_FILTERS,
            attn_hidden: None,
            forget_bias_one: false,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Model dimension `d` shared by `v_Q`, the projected regions and `u^k`.
    pub fn dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Lstm => self.hidden,
            EncoderKind::Cnn => self.cnn_filters.iter().sum(),
        }
    }

    pub fn attention_hidden(&self) -> usize {
        self.attn_hidden.unwrap_or_else(|| self.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SanError::Config(m));
        if !(1..=MAX_LAYERS).contains(&self.layers) {
            return bad(format!("layers must be in 1..={MAX_LAYERS}, got {}", self.layers));
        }
        if self.answer_count < 2 {
            return bad(format!("need at least 2 answers, got {}", self.answer_count));
        }
        if self.vocab_size < 2 {
            return bad("vocabulary must hold at least PAD and UNK".into());
        }
        if self.raw_dim == 0 || self.embed_dim == 0 || self.dim() == 0 || self.attention_hidden() == 0 {
            return bad("all dimensions must be positive".into());
        }
        if self.encoder == EncoderKind::Cnn && self.cnn_filters.contains(&0) {
            return bad("every CNN window needs at least one filter".into());
        }
        Ok(())
    }

    /// `SAN(K, LSTM)` / `SAN(K, CNN)`.
    pub fn tag(&self) -> String {
        format!("SAN({}, {})", self.layers, self.encoder.as_str().to_uppercase())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let filters = self.cnn_filters.map(|f| f.to_string()).join(",");
        vec![
            ("encoder".into(), self.encoder.as_str().into()),
            ("layers".into(), self.layers.to_string()),
            ("vocab_size".into(), self.vocab_size.to_string()),
            ("answer_count".into(), self.answer_count.to_string()),
            ("raw_dim".into(), self.raw_dim.to_string()),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("cnn_filters".into(), filters),
            ("attn_hidden".into(), self.attn_hidden.map_or("auto".into(), |k| k.to_string())),
            ("forget_bias_one".into(), self.forget_bias_one.to_string()),
            ("init_seed".into(), self.init_seed.to_string()),
        ]
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| SanError::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "encoder" => self.encoder = EncoderKind::parse(value)?,
            "layers" => self.layers = num(key, value)?,
            "vocab_size" => self.vocab_size = num(key, value)?,
            "answer_count" => self.answer_count = num(key, value)?,
            "raw_dim" => self.raw_dim = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "cnn_filters" => {
                let parts: Vec<usize> = value.split(',').map(|p| num(key, p)).collect::<Result<_>>()?;
                self.cnn_filters = parts
                    .try_into()
                    .map_err(|_| SanError::Config(format!("cnn_filters needs three counts, got {value:?}")))?;
            }
            "attn_hidden" => self.attn_hidden = if value.trim() == "auto" { None } else { Some(num(key, value)?) },
            "forget_bias_one" => self.forget_bias_one = num(key, value)?,
            "init_seed" => self.init_seed = num(key, value)?,
            other => return Err(SanError::Config(format!("unknown model key {other:?}"))),
        }
        Ok(())
    }
}

/// Every learnable parameter of a SAN plus the handles that name them.
#[derive(Debug, Clone, PartialEq)]
pub struct SanModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: QuestionEncoder,
    pub projection: ImageProjection,
    pub layers: Vec<AttentionLayerParams>,
    pub classifier: ClassifierParams,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub v_q: Var,
    pub v_i: Var,
    /// `u^0`: the question vector after dropout (equal to `v_q` in eval mode).
    pub u0: Var,
    pub layers: Vec<LayerVars>,
    pub logits: Var,
    pub p_ans: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub p: Var,
    pub v_tilde: Var,
    pub u: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub p: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub u: Vec<f64>,
}

/// Attention distributions and query vectors of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    /// `u^0`.
    pub v_q: Vec<f64>,
    pub layers: Vec<LayerTrace>,
    pub p_ans: Vec<f64>,
}

impl ForwardVars {
    pub fn trace(&self, tape: &Tape<'_>) -> AttentionTrace {
        let data = |v: Var| tape.value(v).data().to_vec();
        AttentionTrace {
            v_q: data(self.u0),
            layers: self
                .layers
                .iter()
                .map(|l| LayerTrace { p: data(l.p), v_tilde: data(l.v_tilde), u: data(l.u) })
                .collect(),
            p_ans: data(self.p_ans),
        }
    }
}

impl SanModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let encoder = match config.encoder {
            EncoderKind::Lstm => QuestionEncoder::Lstm(LstmParams::init(
                &mut store,
                config.vocab_size,
                config.embed_dim,
                config.hidden,
                config.forget_bias_one,
                &mut rng,
            )),
            EncoderKind::Cnn => QuestionEncoder::Cnn(TextCnnParams::init(
                &mut store,
                config.vocab_size,
                config.embed_dim,
                config.cnn_filters,
                &mut rng,
            )),
        };
        let d = config.dim();
        let projection = ImageProjection::init(&mut store, config.raw_dim, d, &mut rng);
        let layers = (0..config.layers)
            .map(|k| AttentionLayerParams::init(&mut store, k, d, config.attention_hidden(), &mut rng))
            .collect();
        let classifier = ClassifierParams::init(&mut store, d, config.answer_count, &mut rng);
        Ok(SanModel { config, store, encoder, projection, layers, classifier })
    }

    pub fn tag(&self) -> String {
        self.config.tag()
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, requires_grad: bool) -> Bound {
        self.store.bind(tape, requires_grad)
    }

    /// Encoder → projection → `K` × (attend, aggregate, refine) → classifier.
    ///
    /// In [`Mode::Train`] dropout is applied to `v_Q` and to `u^K`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<'_>,
        bound: &Bound,
        features: &RegionFeatureMap,
        tokens: &[usize],
        mask: usize,
        mode: &mut Mode<'_>,
    ) -> Result<ForwardVars> {
        if features.raw_dim() != self.config.raw_dim {
            return Err(SanError::dim(
                "forward",
                format!("features have {} raw dims, model expects {}", features.raw_dim(), self.config.raw_dim),
            ));
        }
        let v_q = self.encoder.encode(tape, bound, tokens, mask)?;
        let u0 = dropout(tape, v_q, mode)?;
        let f_cols = feature_columns(tape, features);
        let v_i = project_regions(tape, bound, &self.projection, f_cols)?;

        let mut u = u0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let p = attention_step(tape, bound, layer, v_i, u)?;
            let (v_tilde, next) = aggregate_and_refine(tape, v_i, p, u)?;
            u = next;
            layers.push(LayerVars { p, v_tilde, u });
        }
        let u_out = dropout(tape, u, mode)?;
        let (logits, p_ans) = classify(tape, bound, &self.classifier, u_out)?;
        Ok(ForwardVars { v_q, v_i, u0, layers, logits, p_ans })
    }

    /// Evaluation-mode forward pass returning `p_ans` and the attention trace.
    pub fn forward(
        &self,
        features: &RegionFeatureMap,
        tokens: &[usize],
        mask: usize,
    ) -> Result<(Vec<f64>, AttentionTrace)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let vars = self.forward_on_tape(&mut tape, &bound, features, tokens, mask, &mut Mode::Eval)?;
        let trace = vars.trace(&tape);
        Ok((trace.p_ans.clone(), trace))
    }

    pub fn predict(&self, features: &RegionFeatureMap, tokens: &[usize], mask: usize) -> Result<usize> {
        let (p_ans, _) = self.forward(features, tokens, mask)?;
        predict_answer(&p_ans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn config_pairs_round_trip() {
        let cfg = ModelConfig {
            encoder: EncoderKind::Cnn,
            layers: 3,
            vocab_size: 30,
            answer_count: 15,
            cnn_filters: [4, 6, 8],
            attn_hidden: Some(7),
            ..ModelConfig::default()
        };
        let pairs = cfg.to_pairs();
        let back = ModelConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.dim(), 18);
        assert_eq!(cfg.tag(), "SAN(3, CNN)");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ModelConfig { layers: 5, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.layers = 0;
        assert!(cfg.validate().is_err());
        cfg.layers = 1;
        cfg.answer_count = 1;
        assert!(cfg.validate().is_err());
        assert!(cfg.set("bogus", "1").is_err());
    }

    #[test]
    fn parameter_layout_is_independent_per_layer() {
        let cfg =
            ModelConfig { layers: 2, vocab_size: 10, answer_count: 4, hidden: 6, embed_dim: 5, ..Default::default() };
        let model = SanModel::new(cfg).unwrap();
        assert_ne!(model.layers[0].w_ia, model.layers[1].w_ia);
        assert_eq!(model.store.get(model.layers[1].w_qa).shape(), &[6, 6]);
        assert_eq!(model.store.get(model.classifier.w_u).shape(), &[4, 6]);
        assert_eq!(model.store.get(model.layers[0].b_p).shape(), &[1, 1]);
    }

    #[test]
    fn single_layer_matches_manual_composition() {
        let cfg = ModelConfig {
            layers: 1,
            vocab_size: 10,
            answer_count: 4,
            hidden: 5,
            embed_dim: 3,
            raw_dim: 6,
            ..Default::default()
        };
        let model = SanModel::new(cfg).unwrap();
        let features = RegionFeatureMap::new(crate::autodiff::tests_support::random_matrix(9, 6, 4)).unwrap();
        let tokens = [2, 5, 7];
        let (p_ans, trace) = model.forward(&features, &tokens, 3).unwrap();

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let v_q = model.encoder.encode(&mut tape, &bound, &tokens, 3).unwrap();
        let cols = tape.constant(features.features().transpose());
        let v_i = project_regions(&mut tape, &bound, &model.projection, cols).unwrap();
        let p = attention_step(&mut tape, &bound, &model.layers[0], v_i, v_q).unwrap();
        let (_, u) = aggregate_and_refine(&mut tape, v_i, p, v_q).unwrap();
        let (_, manual) = classify(&mut tape, &bound, &model.classifier, u).unwrap();

        assert_eq!(tape.value(manual).data(), p_ans.as_slice());
        assert_eq!(tape.value(p).data(), trace.layers[0].p.as_slice());
        assert_eq!(tape.value(v_q).data(), trace.v_q.as_slice());
    }

    #[test]
    fn forward_checks_feature_width() {
        let cfg = ModelConfig {
            layers: 1,
            vocab_size: 10,
            answer_count: 4,
            hidden: 5,
            embed_dim: 3,
            raw_dim: 6,
            ..Default::default()
        };
        let model = SanModel::new(cfg).unwrap();
        let features = RegionFeatureMap::new(Tensor::zeros(&[4, 5])).unwrap();
        assert!(matches!(model.forward(&features, &[2], 1), Err(SanError::Dimension { .. })));
    }
}
