//! Pipeline configuration file (TOML). Every section and field is optional;
//! command-line flags override file values, which override built-in
//! defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use facecut_core::classifier::{Backbone, ClassifierConfig, LossKind};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub landmarks: LandmarksSection,
    pub facecut: FacecutSection,
    pub dataset: DatasetSection,
    pub classifier: ClassifierSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandmarksSection {
    pub provider: Option<ProviderKind>,
    pub predictor_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Predictor,
    Sidecar,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FacecutSection {
    pub include_point_zero: Option<bool>,
    pub fill: Option<[u8; 3]>,
    pub no_face: Option<NoFaceArg>,
    pub faces: Option<FacesArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoFaceArg {
    Skip,
    Passthrough,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FacesArg {
    Largest,
    All,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub seed: Option<u64>,
    pub ratios: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub backbone: Option<BackboneArg>,
    pub num_classes: Option<usize>,
    pub epochs: Option<usize>,
    pub loss: Option<LossArg>,
    pub batch_size: Option<usize>,
    pub image_size: Option<(usize, usize)>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub pretrained_weights: Option<PathBuf>,
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackboneArg {
    Toy,
    Large,
}

impl From<BackboneArg> for Backbone {
    fn from(arg: BackboneArg) -> Self {
        match arg {
            BackboneArg::Toy => Backbone::Toy,
            BackboneArg::Large => Backbone::LargePretrained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LossArg {
    #[serde(rename = "cross_entropy")]
    Xent,
    #[serde(rename = "kl_divergence")]
    Kl,
}

impl From<LossArg> for LossKind {
    fn from(arg: LossArg) -> Self {
        match arg {
            LossArg::Xent => LossKind::CrossEntropy,
            LossArg::Kl => LossKind::KlDivergence,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub out_dir: Option<PathBuf>,
    pub alpha: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn load_opt(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Effective classifier config: backbone defaults, overlaid with the
    /// config file section, overlaid with any flag values the caller merged
    /// into the section beforehand.
    pub fn classifier_config(&self, fill: [u8; 3]) -> ClassifierConfig {
        let section = &self.classifier;
        let backbone: Backbone = section.backbone.map(Into::into).unwrap_or(Backbone::Toy);
        let mut config = ClassifierConfig::for_backbone(backbone);
        if let Some(v) = section.num_classes {
            config.num_classes = v;
        }
        if let Some(v) = section.epochs {
            config.epochs = v;
        }
        if let Some(v) = section.loss {
            config.loss = v.into();
        }
        if let Some(v) = section.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = section.image_size {
            config.image_size = v;
        }
        if let Some(v) = section.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = section.seed {
            config.seed = v;
        }
        if let Some(v) = section.weight_decay {
            config.weight_decay = v;
        }
        config.pretrained_weights = section.pretrained_weights.clone();
        config.pad_fill = fill;
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let config: PipelineConfig = toml::from_str("").unwrap();
        assert!(config.landmarks.provider.is_none());
        assert!(config.dataset.ratios.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("[facecut]\nfil = [0,0,0]\n").unwrap_err();
        assert!(err.to_string().contains("fil"));
        assert!(toml::from_str::<PipelineConfig>("[nonsense]\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let config: PipelineConfig = toml::from_str(
            r#"
            [landmarks]
            provider = "sidecar"

            [facecut]
            include_point_zero = true
            fill = [10, 20, 30]
            no_face = "passthrough"
            faces = "all"

            [dataset]
            seed = 9
            ratios = [0.6, 0.2, 0.2]

            [classifier]
            backbone = "toy"
            epochs = 3
            loss = "kl_divergence"
            image_size = [64, 64]

            [report]
            alpha = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(config.landmarks.provider, Some(ProviderKind::Sidecar));
        assert_eq!(config.facecut.fill, Some([10, 20, 30]));
        assert_eq!(config.facecut.no_face, Some(NoFaceArg::Passthrough));
        assert_eq!(config.dataset.seed, Some(9));
        let cc = config.classifier_config([0, 0, 0]);
        assert_eq!(cc.epochs, 3);
        assert_eq!(cc.loss, LossKind::KlDivergence);
        assert_eq!(config.report.alpha, Some(0.5));
    }
}
