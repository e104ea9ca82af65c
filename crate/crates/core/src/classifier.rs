//! The classification model: a convolutional backbone with its final layer
//! replaced by global average pooling, a dense two-class layer and softmax.
//!
//! Two backbones share the architecture machinery. `toy` (three conv stages)
//! trains from scratch in minutes on a CPU and exists so the full pipeline
//! and its checks run without any external weights. `large_pretrained` (five
//! stages, 256 feature channels, 224×224 input) requires a pretrained weight
//! file and fails to build without one.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::imgproc::{letterbox, load_rgb};
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, max_pool2, max_pool2_backward, relu, relu_backward,
    softmax, weights, Adam, Conv2d, Dense, FeatureMap,
};

pub const TOY_CHANNELS: [usize; 3] = [12, 24, 48];
pub const LARGE_CHANNELS: [usize; 5] = [16, 32, 64, 128, 256];
const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    LargePretrained,
    Toy,
}

impl Backbone {
    pub fn stage_channels(&self) -> &'static [usize] {
        match self {
            Backbone::Toy => &TOY_CHANNELS,
            Backbone::LargePretrained => &LARGE_CHANNELS,
        }
    }

    /// Channels of the feature-map tap (the last stage's output).
    pub fn feature_channels(&self) -> usize {
        *self.stage_channels().last().expect("non-empty backbone")
    }

    pub fn default_image_side(&self) -> usize {
        match self {
            Backbone::Toy => 64,
            Backbone::LargePretrained => 224,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    KlDivergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub backbone: Backbone,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// `(height, width)`; the model input is square, so both must match.
    pub image_size: (usize, usize),
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Backbone weight file, required for `large_pretrained`.
    #[serde(default)]
    pub pretrained_weights: Option<PathBuf>,
    /// Decoupled weight decay applied by the optimizer (0 disables it).
    #[serde(default)]
    pub weight_decay: f64,
    /// Pad color used when letterboxing inputs; keep equal to the face-cut
    /// fill so the border carries no extra signal.
    #[serde(default)]
    pub pad_fill: [u8; 3],
}

fn default_num_classes() -> usize {
    2
}
fn default_epochs() -> usize {
    10
}
fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}
fn default_batch_size() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    1e-4
}

impl ClassifierConfig {
    pub fn for_backbone(backbone: Backbone) -> Self {
        let side = backbone.default_image_side();
        Self {
            backbone,
            num_classes: default_num_classes(),
            epochs: default_epochs(),
            loss: default_loss(),
            batch_size: default_batch_size(),
            image_size: (side, side),
            learning_rate: default_learning_rate(),
            seed: 0,
            pretrained_weights: None,
            weight_decay: 0.0,
            pad_fill: [0, 0, 0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let (h, w) = self.image_size;
        if h == 0 || w == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        if h != w {
            return Err(Error::Config("image_size must be square".into()));
        }
        let div = 1 << self.backbone.stage_channels().len();
        if h % div != 0 {
            return Err(Error::Config(format!(
                "image side {h} must be divisible by {div} for this backbone"
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Softmax class probabilities, in `class_names` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs {
    pub probs: Vec<f64>,
}

impl ClassProbs {
    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .expect("non-empty probabilities")
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochStats {
    pub fn is_finite(&self) -> bool {
        self.train_loss.is_finite()
            && self.train_acc.is_finite()
            && self.val_loss.is_finite()
            && self.val_acc.is_finite()
    }
}

#[derive(Debug)]
struct ConvNet {
    stages: Vec<Conv2d>,
    head: Dense,
}

struct Trace {
    /// `inputs[i]` feeds stage i; `inputs.last()` is the feature tap.
    inputs: Vec<FeatureMap>,
    pre: Vec<FeatureMap>,
    argmax: Vec<Vec<usize>>,
    gap: Vec<f64>,
    probs: Vec<f64>,
}

/// Parameter gradients, mirroring the network layout.
pub struct Grads {
    pub stage_weights: Vec<Vec<f64>>,
    pub stage_biases: Vec<Vec<f64>>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl ConvNet {
    fn new(stage_channels: &[usize], num_classes: usize, rng: &mut ChaCha12Rng) -> Self {
        let mut stages = Vec::with_capacity(stage_channels.len());
        let mut in_ch = INPUT_CHANNELS;
        for &out_ch in stage_channels {
            stages.push(Conv2d::init(in_ch, out_ch, rng));
            in_ch = out_ch;
        }
        let head = Dense::init(in_ch, num_classes, rng);
        Self { stages, head }
    }

    fn forward_features(&self, input: &FeatureMap) -> FeatureMap {
        let mut x = input.clone();
        for conv in &self.stages {
            let (pooled, _) = max_pool2(&relu(&conv.forward(&x)));
            x = pooled;
        }
        x
    }

    fn head_forward(&self, features: &FeatureMap) -> (Vec<f64>, Vec<f64>) {
        let gap = global_avg_pool(features);
        let logits = self.head.forward(&gap);
        (gap, logits)
    }

    fn forward_trace(&self, input: &FeatureMap) -> Trace {
        let mut inputs = vec![input.clone()];
        let mut pre = Vec::with_capacity(self.stages.len());
        let mut argmax = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            let conv_out = conv.forward(inputs.last().expect("at least the input"));
            let activated = relu(&conv_out);
            let (pooled, idx) = max_pool2(&activated);
            pre.push(conv_out);
            argmax.push(idx);
            inputs.push(pooled);
        }
        let features = inputs.last().expect("tap present");
        let (gap, logits) = self.head_forward(features);
        let probs = softmax(&logits);
        Trace {
            inputs,
            pre,
            argmax,
            gap,
            probs,
        }
    }

    fn zero_grads(&self) -> Grads {
        Grads {
            stage_weights: self.stages.iter().map(|s| vec![0.0; s.weight.len()]).collect(),
            stage_biases: self.stages.iter().map(|s| vec![0.0; s.bias.len()]).collect(),
            head_weight: vec![0.0; self.head.weight.len()],
            head_bias: vec![0.0; self.head.bias.len()],
        }
    }

    /// Backpropagate a logit gradient through the whole network,
    /// accumulating parameter gradients.
    fn backward(&self, trace: &Trace, grad_logits: &[f64], grads: &mut Grads) {
        let grad_gap = self.head.backward(
            &trace.gap,
            grad_logits,
            &mut grads.head_weight,
            &mut grads.head_bias,
        );
        let features = trace.inputs.last().expect("tap present");
        let mut grad = global_avg_pool_backward((features.channels, features.h, features.w), &grad_gap);
        for (i, conv) in self.stages.iter().enumerate().rev() {
            let pre = &trace.pre[i];
            let grad_activated = max_pool2_backward((pre.channels, pre.h, pre.w), &trace.argmax[i], &grad);
            let grad_conv = relu_backward(pre, &grad_activated);
            grad = conv.backward(
                &trace.inputs[i],
                &grad_conv,
                &mut grads.stage_weights[i],
                &mut grads.stage_biases[i],
            );
        }
    }

    fn named_tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.weight"), s.weight.clone()));
            out.push((format!("stage{i}.bias"), s.bias.clone()));
        }
        out.push(("head.weight".into(), self.head.weight.clone()));
        out.push(("head.bias".into(), self.head.bias.clone()));
        out
    }

    /// Install backbone tensors from a pretrained weight file; the head is
    /// left as initialized.
    fn load_backbone(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        for (name, data) in tensors {
            if name.starts_with("head.") {
                continue;
            }
            let (idx, field) = parse_stage_name(name)?;
            let stage = self
                .stages
                .get_mut(idx)
                .ok_or_else(|| Error::WeightLoad(format!("unknown tensor `{name}`")))?;
            let slot = match field {
                "weight" => &mut stage.weight,
                "bias" => &mut stage.bias,
                _ => return Err(Error::WeightLoad(format!("unknown tensor `{name}`"))),
            };
            if slot.len() != data.len() {
                return Err(Error::WeightLoad(format!(
                    "tensor `{name}` has {} values, expected {}",
                    data.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(data);
        }
        Ok(())
    }

    fn load_all(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        self.load_backbone(tensors)?;
        for (name, data) in tensors {
            let slot = match name.as_str() {
                "head.weight" => &mut self.head.weight,
                "head.bias" => &mut self.head.bias,
                _ => continue,
            };
            if slot.len() != data.len() {
                return Err(Error::WeightLoad(format!("tensor `{name}` size mismatch")));
            }
            slot.copy_from_slice(data);
        }
        Ok(())
    }
}

fn parse_stage_name(name: &str) -> Result<(usize, &str)> {
    let rest = name
        .strip_prefix("stage")
        .ok_or_else(|| Error::WeightLoad(format!("unknown tensor `{name}`")))?;
    let (idx, field) = rest
        .split_once('.')
        .ok_or_else(|| Error::WeightLoad(format!("unknown tensor `{name}`")))?;
    let idx = idx
        .parse()
        .map_err(|_| Error::WeightLoad(format!("unknown tensor `{name}`")))?;
    Ok((idx, field))
}

/// An initialized (possibly untrained) model.
#[derive(Debug)]
pub struct Model {
    pub config: ClassifierConfig,
    pub class_names: Vec<String>,
    net: ConvNet,
}

/// Build the model for `config`: backbone stages (pretrained weights loaded
/// for `large_pretrained`), global average pooling, a dense `num_classes`
/// layer and softmax. The feature-map and logit taps stay exposed for the
/// explanation stage.
pub fn build_model(config: ClassifierConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut net = ConvNet::new(config.backbone.stage_channels(), config.num_classes, &mut rng);
    if config.backbone == Backbone::LargePretrained {
        let path = config.pretrained_weights.as_deref().ok_or_else(|| {
            Error::WeightLoad("large_pretrained requires `pretrained_weights`".into())
        })?;
        let tensors = weights::load_tensors(path)?;
        net.load_backbone(&tensors)?;
    }
    let class_names = default_class_names(config.num_classes);
    Ok(Model {
        config,
        class_names,
        net,
    })
}

fn default_class_names(num_classes: usize) -> Vec<String> {
    if num_classes == 2 {
        vec!["with_mask".into(), "without_mask".into()]
    } else {
        (0..num_classes).map(|i| format!("class_{i}")).collect()
    }
}

impl Model {
    /// Letterbox, normalize to [0, 1] and lay out channel-major.
    pub fn prepare_image(&self, img: &RgbImage) -> FeatureMap {
        let side = self.config.image_size.0;
        let (canvas, _) = letterbox(img, side as u32, Rgb(self.config.pad_fill));
        let mut map = FeatureMap::zeros(INPUT_CHANNELS, side, side);
        for (x, y, px) in canvas.enumerate_pixels() {
            for c in 0..INPUT_CHANNELS {
                map.data[(c * side + y as usize) * side + x as usize] = f64::from(px.0[c]) / 255.0;
            }
        }
        map
    }

    pub fn forward_probs(&self, input: &FeatureMap) -> Vec<f64> {
        let features = self.net.forward_features(input);
        let (_, logits) = self.net.head_forward(&features);
        softmax(&logits)
    }

    /// Feature-map tap: the last convolutional stage's output.
    pub fn forward_features(&self, input: &FeatureMap) -> FeatureMap {
        self.net.forward_features(input)
    }

    /// Pre-softmax logits computed from a (possibly perturbed) feature map.
    pub fn logits_from_features(&self, features: &FeatureMap) -> Vec<f64> {
        self.net.head_forward(features).1
    }

    /// Gradient of the pre-softmax logit for `class_idx` with respect to the
    /// feature-map tap, obtained by running the head backward.
    pub fn feature_gradient(&self, features: &FeatureMap, class_idx: usize) -> FeatureMap {
        let mut grad_logits = vec![0.0; self.config.num_classes];
        grad_logits[class_idx] = 1.0;
        let mut sink_w = vec![0.0; self.net.head.weight.len()];
        let mut sink_b = vec![0.0; self.net.head.bias.len()];
        let gap = global_avg_pool(features);
        let grad_gap = self.net.head.backward(&gap, &grad_logits, &mut sink_w, &mut sink_b);
        global_avg_pool_backward((features.channels, features.h, features.w), &grad_gap)
    }

    pub fn predict(&self, image: &RgbImage) -> ClassProbs {
        let probs = self.forward_probs(&self.prepare_image(image));
        ClassProbs { probs }
    }

    pub fn predict_path(&self, path: &Path) -> Result<ClassProbs> {
        Ok(self.predict(&load_rgb(path)?))
    }

    /// Predict a batch of files; results are in input order.
    pub fn predict_batch(&self, paths: &[PathBuf]) -> Result<Vec<ClassProbs>> {
        paths.iter().map(|p| self.predict_path(p)).collect()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Label(name.to_string()))
    }

    pub fn dense_head(&self) -> &Dense {
        &self.net.head
    }

    /// Mutable access to the dense head, for gradient-check style probing.
    pub fn dense_head_mut(&mut self) -> &mut Dense {
        &mut self.net.head
    }

    pub fn head_parameter_count(&self) -> usize {
        self.net.head.num_params()
    }

    /// Mean loss over prepared samples, without any update.
    pub fn dataset_loss(&self, samples: &[(FeatureMap, usize)]) -> f64 {
        let total: f64 = samples
            .iter()
            .map(|(input, target)| {
                let trace = self.net.forward_trace(input);
                loss_value(self.config.loss, &trace.probs, *target)
            })
            .sum();
        total / samples.len() as f64
    }

    /// Gradients of the mean loss over `samples` with respect to every
    /// parameter.
    pub fn loss_gradients(&self, samples: &[(FeatureMap, usize)]) -> Grads {
        let mut grads = self.net.zero_grads();
        let scale = 1.0 / samples.len() as f64;
        for (input, target) in samples {
            let trace = self.net.forward_trace(input);
            let grad_logits = loss_logit_gradient(&trace.probs, *target, scale);
            self.net.backward(&trace, &grad_logits, &mut grads);
        }
        grads
    }

    fn save_weights(&self, path: &Path) -> Result<()> {
        let tensors = self.net.named_tensors();
        let refs: Vec<(&str, &[f64])> = tensors
            .iter()
            .map(|(n, d)| (n.as_str(), d.as_slice()))
            .collect();
        weights::save_tensors(path, &refs)
    }
}

/// Per-class softmax cross-entropy or KL divergence against a one-hot
/// target. For one-hot targets the two coincide (the target entropy is 0).
pub fn loss_value(kind: LossKind, probs: &[f64], target: usize) -> f64 {
    let p = probs[target].max(1e-12);
    match kind {
        LossKind::CrossEntropy => -p.ln(),
        // Σ t·(ln t − ln p) with t one-hot: 1·(ln 1 − ln p).
        LossKind::KlDivergence => 1.0_f64.ln() - p.ln(),
    }
}

/// d loss / d logits for either loss: softmax minus one-hot target.
fn loss_logit_gradient(probs: &[f64], target: usize, scale: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - if i == target { 1.0 } else { 0.0 }) * scale)
        .collect()
}

/// A trained model with its per-epoch history.
#[derive(Debug)]
pub struct TrainedModel {
    pub model: Model,
    pub history: Vec<EpochStats>,
}

/// Train on the manifest's train split, validating each epoch on the val
/// split. Deterministic for a fixed seed: data order, initialization and all
/// arithmetic follow seeded, single-threaded paths.
pub fn train(model: Model, manifest: &DatasetManifest) -> Result<TrainedModel> {
    let config = model.config.clone();
    let train_set = load_split(&model, manifest, Split::Train)?;
    let val_set = load_split(&model, manifest, Split::Val)?;

    let mut model = model;
    let param_sizes: Vec<usize> = model
        .net
        .stages
        .iter()
        .flat_map(|s| [s.weight.len(), s.bias.len()])
        .chain([model.net.head.weight.len(), model.net.head.bias.len()])
        .collect();
    let mut adam = Adam::new(config.learning_rate, &param_sizes).with_weight_decay(config.weight_decay);
    let mut order_rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        indices.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in indices.chunks(config.batch_size) {
            let mut grads = model.net.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (input, target) = &train_set[i];
                let trace = model.net.forward_trace(input);
                loss_sum += loss_value(config.loss, &trace.probs, *target);
                if argmax(&trace.probs) == *target {
                    correct += 1;
                }
                let grad_logits = loss_logit_gradient(&trace.probs, *target, scale);
                model.net.backward(&trace, &grad_logits, &mut grads);
            }
            apply_step(&mut adam, &mut model.net, &grads);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let train_acc = correct as f64 / train_set.len() as f64;
        let (val_loss, val_acc) = evaluate_set(&model, &val_set);
        let stats = EpochStats {
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        };
        if !stats.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::info!(
            "epoch {}/{}: train_loss {train_loss:.4} train_acc {train_acc:.4} \
             val_loss {val_loss:.4} val_acc {val_acc:.4}",
            epoch + 1,
            config.epochs
        );
        history.push(stats);
    }
    Ok(TrainedModel { model, history })
}

fn apply_step(adam: &mut Adam, net: &mut ConvNet, grads: &Grads) {
    let mut params: Vec<&mut [f64]> = Vec::new();
    let mut grad_refs: Vec<&[f64]> = Vec::new();
    for (i, stage) in net.stages.iter_mut().enumerate() {
        params.push(&mut stage.weight);
        grad_refs.push(&grads.stage_weights[i]);
        params.push(&mut stage.bias);
        grad_refs.push(&grads.stage_biases[i]);
    }
    params.push(&mut net.head.weight);
    grad_refs.push(&grads.head_weight);
    params.push(&mut net.head.bias);
    grad_refs.push(&grads.head_bias);
    adam.step(&mut params, &grad_refs);
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite values"))
        .map(|(i, _)| i)
        .expect("non-empty")
}

fn evaluate_set(model: &Model, samples: &[(FeatureMap, usize)]) -> (f64, f64) {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (input, target) in samples {
        let probs = model.forward_probs(input);
        loss_sum += loss_value(model.config.loss, &probs, *target);
        if argmax(&probs) == *target {
            correct += 1;
        }
    }
    (loss_sum / samples.len() as f64, correct as f64 / samples.len() as f64)
}

fn load_split(model: &Model, manifest: &DatasetManifest, split: Split) -> Result<Vec<(FeatureMap, usize)>> {
    let records: Vec<&SampleRecord> = manifest
        .records_in(split)
        .filter(|r| r.has_file())
        .collect();
    if records.is_empty() {
        return Err(Error::Data(format!("{} split is empty", split.as_str())));
    }
    records
        .iter()
        .map(|rec| {
            let img = load_rgb(&rec.path)?;
            let target = model.class_index(rec.label.dir_name())?;
            Ok((model.prepare_image(&img), target))
        })
        .collect()
}

const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    config: ClassifierConfig,
    class_names: Vec<String>,
}

impl TrainedModel {
    pub fn predict(&self, image: &RgbImage) -> ClassProbs {
        self.model.predict(image)
    }

    /// Write `config.json`, `history.csv` and `weights.bin` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ModelMeta {
            config: self.model.config.clone(),
            class_names: self.model.class_names.clone(),
        };
        let meta_json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::Data(format!("serialize config: {e}")))?;
        let config_path = dir.join("config.json");
        std::fs::write(&config_path, meta_json).map_err(|e| Error::io(&config_path, e))?;

        let mut csv_text = String::from(HISTORY_HEADER);
        csv_text.push('\n');
        for (i, s) in self.history.iter().enumerate() {
            csv_text.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                s.train_loss,
                s.train_acc,
                s.val_loss,
                s.val_acc
            ));
        }
        let history_path = dir.join("history.csv");
        std::fs::write(&history_path, csv_text).map_err(|e| Error::io(&history_path, e))?;

        self.model.save_weights(&dir.join("weights.bin"))
    }

    /// Load a model directory written by [`TrainedModel::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let config_path = dir.join("config.json");
        let meta_text =
            std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let meta: ModelMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
            path: config_path.clone(),
            reason: e.to_string(),
        })?;
        meta.config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(meta.config.seed);
        let mut net = ConvNet::new(
            meta.config.backbone.stage_channels(),
            meta.config.num_classes,
            &mut rng,
        );
        let tensors = weights::load_tensors(&dir.join("weights.bin"))?;
        net.load_all(&tensors)?;

        let history_path = dir.join("history.csv");
        let history_text =
            std::fs::read_to_string(&history_path).map_err(|e| Error::io(&history_path, e))?;
        let history = parse_history(&history_text, &history_path)?;
        Ok(TrainedModel {
            model: Model {
                config: meta.config,
                class_names: meta.class_names,
                net,
            },
            history,
        })
    }
}

pub fn parse_history(text: &str, path: &Path) -> Result<Vec<EpochStats>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != HISTORY_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: format!("unexpected history header `{header}`"),
        });
    }
    let mut history = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                reason: format!("bad history row `{line}`"),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                reason: format!("bad number `{s}`"),
            })
        };
        history.push(EpochStats {
            train_loss: parse(fields[1])?,
            train_acc: parse(fields[2])?,
            val_loss: parse(fields[3])?,
            val_acc: parse(fields[4])?,
        });
    }
    if history.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: "history has no epochs".into(),
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> ClassifierConfig {
        ClassifierConfig {
            seed: 3,
            ..ClassifierConfig::for_backbone(Backbone::Toy)
        }
    }

    #[test]
    fn output_vector_length_equals_num_classes() {
        let model = build_model(toy_config()).unwrap();
        let img = RgbImage::new(64, 64);
        let probs = model.predict(&img);
        assert_eq!(probs.probs.len(), 2);
    }

    #[test]
    fn softmax_output_sums_to_one() {
        let model = build_model(toy_config()).unwrap();
        let img = RgbImage::from_fn(50, 70, |x, y| Rgb([x as u8, y as u8, 128]));
        let probs = model.predict(&img);
        assert!((probs.probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert!(probs.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn toy_feature_tap_halves_per_pooling_stage() {
        let model = build_model(toy_config()).unwrap();
        let input = model.prepare_image(&RgbImage::new(64, 64));
        let features = model.forward_features(&input);
        // Three pooling stages: 64 / 2^3.
        assert_eq!((features.h, features.w), (8, 8));
        assert_eq!(features.channels, 48);
    }

    #[test]
    fn large_backbone_without_weights_is_weight_load_error() {
        let config = ClassifierConfig::for_backbone(Backbone::LargePretrained);
        let err = build_model(config).unwrap_err();
        assert!(matches!(err, Error::WeightLoad(_)));
    }

    #[test]
    fn large_backbone_head_parameter_count() {
        // Synthesize a backbone weight file, then count GAP+dense head params.
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("backbone.bin");
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let donor = ConvNet::new(&LARGE_CHANNELS, 2, &mut rng);
        let tensors: Vec<(String, Vec<f64>)> = donor
            .named_tensors()
            .into_iter()
            .filter(|(n, _)| !n.starts_with("head."))
            .collect();
        let refs: Vec<(&str, &[f64])> = tensors.iter().map(|(n, d)| (n.as_str(), d.as_slice())).collect();
        weights::save_tensors(&path, &refs).unwrap();

        let config = ClassifierConfig {
            pretrained_weights: Some(path),
            ..ClassifierConfig::for_backbone(Backbone::LargePretrained)
        };
        let model = build_model(config).unwrap();
        let channels = Backbone::LargePretrained.feature_channels();
        assert_eq!(model.head_parameter_count(), channels * 2 + 2);
    }

    #[test]
    fn loss_kinds_agree_on_one_hot_targets() {
        let probs = vec![0.7, 0.3];
        let ce = loss_value(LossKind::CrossEntropy, &probs, 0);
        let kl = loss_value(LossKind::KlDivergence, &probs, 0);
        assert!((ce - kl).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_non_square_and_indivisible_sizes() {
        let mut config = toy_config();
        config.image_size = (64, 32);
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.image_size = (60, 60);
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn identical_seeds_build_identical_models() {
        let a = build_model(toy_config()).unwrap();
        let b = build_model(toy_config()).unwrap();
        assert_eq!(a.net.head.weight, b.net.head.weight);
        assert_eq!(a.net.stages[0].weight, b.net.stages[0].weight);
    }

    fn solid_color_dataset(dir: &Path, n_per_class: usize) -> DatasetManifest {
        use crate::dataset::{Label, RecordSource, SampleRecord};
        let mut records = Vec::new();
        for (label, color) in [
            (Label::WithMask, Rgb([40u8, 90, 210])),
            (Label::WithoutMask, Rgb([60u8, 200, 70])),
        ] {
            let class_dir = dir.join(label.dir_name());
            std::fs::create_dir_all(&class_dir).unwrap();
            for i in 0..n_per_class {
                let px = Rgb([
                    color.0[0].wrapping_add(i as u8),
                    color.0[1],
                    color.0[2].wrapping_sub(i as u8),
                ]);
                let path = class_dir.join(format!("img_{i:03}.png"));
                RgbImage::from_pixel(32, 32, px).save(&path).unwrap();
                records.push(SampleRecord {
                    path: path.clone(),
                    label,
                    split: None,
                    face_found: true,
                    landmark_source: RecordSource::None,
                    source_path: path,
                });
            }
        }
        crate::dataset::split_dataset(
            &DatasetManifest {
                records,
                seed: None,
                ratios: None,
            },
            5,
            (0.6, 0.2, 0.2),
        )
        .unwrap()
    }

    fn smoke_config(epochs: usize) -> ClassifierConfig {
        ClassifierConfig {
            epochs,
            batch_size: 8,
            learning_rate: 1e-2,
            image_size: (32, 32),
            seed: 9,
            ..ClassifierConfig::for_backbone(Backbone::Toy)
        }
    }

    #[test]
    fn separable_colors_train_to_high_accuracy() {
        let dir = tempfile::TempDir::new().unwrap();
        let manifest = solid_color_dataset(dir.path(), 16);
        let trained = train(build_model(smoke_config(4)).unwrap(), &manifest).unwrap();
        let last = trained.history.last().unwrap();
        assert!(last.train_acc >= 0.95, "train accuracy {}", last.train_acc);
        assert!(trained.history.iter().all(|s| s.is_finite()));

        // A training image classifies as its own label.
        let rec = manifest
            .records_in(Split::Train)
            .next()
            .expect("train split non-empty");
        let probs = trained.model.predict_path(&rec.path).unwrap();
        let predicted = &trained.model.class_names[probs.argmax()];
        assert_eq!(predicted, rec.label.dir_name());

        // Batch prediction preserves input order.
        let paths: Vec<PathBuf> = manifest.records.iter().take(5).map(|r| r.path.clone()).collect();
        let batch = trained.model.predict_batch(&paths).unwrap();
        assert_eq!(batch.len(), 5);
        for (one, of_batch) in paths.iter().zip(&batch) {
            assert_eq!(trained.model.predict_path(one).unwrap(), *of_batch);
        }
    }

    #[test]
    fn one_epoch_yields_one_history_entry() {
        let dir = tempfile::TempDir::new().unwrap();
        let manifest = solid_color_dataset(dir.path(), 6);
        let trained = train(build_model(smoke_config(1)).unwrap(), &manifest).unwrap();
        assert_eq!(trained.history.len(), 1);
    }

    #[test]
    fn empty_split_is_a_data_error() {
        let dir = tempfile::TempDir::new().unwrap();
        let mut manifest = solid_color_dataset(dir.path(), 6);
        for rec in &mut manifest.records {
            if rec.split == Some(Split::Val) {
                rec.split = None;
            }
        }
        let err = train(build_model(smoke_config(1)).unwrap(), &manifest).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn saved_model_reloads_and_predicts_identically() {
        let dir = tempfile::TempDir::new().unwrap();
        let manifest = solid_color_dataset(dir.path(), 6);
        let trained = train(build_model(smoke_config(2)).unwrap(), &manifest).unwrap();
        let model_dir = dir.path().join("model");
        trained.save(&model_dir).unwrap();
        assert!(model_dir.join("config.json").is_file());
        assert!(model_dir.join("history.csv").is_file());
        assert!(model_dir.join("weights.bin").is_file());

        let reloaded = TrainedModel::load(&model_dir).unwrap();
        assert_eq!(reloaded.history.len(), trained.history.len());
        let img = RgbImage::from_pixel(32, 32, Rgb([40, 90, 210]));
        assert_eq!(reloaded.predict(&img), trained.predict(&img));
    }

    #[test]
    fn history_parser_rejects_empty_and_garbled_input() {
        let path = Path::new("history.csv");
        assert!(parse_history("", path).is_err());
        assert!(parse_history(HISTORY_HEADER, path).is_err());
        assert!(parse_history("nonsense\n1,2,3,4,5", path).is_err());
        let ok = parse_history(&format!("{HISTORY_HEADER}\n1,0.5,0.9,0.6,0.8\n"), path).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].train_acc, 0.9);
    }
}
