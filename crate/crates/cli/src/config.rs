//! Run configuration: one flat `key = value` file per run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use motionsync::bundle::{parse_dims, KeyValues};
use motionsync::data::{BlockDims, Retained, WhiteningConfig};
use motionsync::pipeline::DescriptorConfig;
use motionsync::sae::SaeTrainConfig;
use motionsync::skmeans::TrainConfig;
use motionsync::{Error, Mode, Result};

/// A value that can live in a config file.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(u64, i64, usize, bool);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if !v.is_finite() {
            return Err("value must be finite".into());
        }
        Ok(v)
    }

    fn render(&self) -> String {
        // Debug output is the shortest form that parses back exactly.
        format!("{self:?}")
    }
}

impl ConfigValue for BlockDims {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_dims(s).ok_or_else(|| format!("expected TxHxW with positive extents, got {s:?}"))
    }

    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for Mode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Mode::parse(s).ok_or_else(|| format!("expected pair or sequence, got {s:?}"))
    }

    fn render(&self) -> String {
        self.as_str().to_string()
    }
}

macro_rules! run_config {
    ($( $field:ident : $ty:ty = $default:expr => $key:literal, $doc:literal; )*) => {
        /// Every tunable of a run. Field docs double as the comments of
        /// [`RunConfig::to_text`].
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( #[doc = $doc] pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn set_key(&mut self, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
                match key {
                    $( $key => Some(<$ty as ConfigValue>::parse_value(value).map(|v| self.$field = v)), )*
                    _ => None,
                }
            }

            /// Serialise every key with its current value.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(
                    let _ = writeln!(s, "# {}", $doc);
                    let _ = writeln!(s, "{} = {}", $key, ConfigValue::render(&self.$field));
                )*
                s
            }

            /// `(key, rendered value)` pairs in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$( ($key, ConfigValue::render(&self.$field)), )*]
            }
        }
    };
}

run_config! {
    seed: u64 = 0 => "seed", "master seed; every stochastic step derives from it";
    data_count: usize = 50_000 => "data.count", "number of generated patches or clips";
    data_dims: BlockDims = BlockDims::new(10, 16, 16) => "data.dims", "patch or clip extent TxHxW";
    data_max_shift: usize = 1 => "data.max_shift", "largest per-frame shift for translating patches";
    data_speed: usize = 1 => "data.speed", "pixels per frame for direction clips";
    data_source_count: usize = 100 => "data.source_count", "number of synthetic source images";
    data_source_size: usize = 64 => "data.source_size", "side length of each source image";
    sinusoid_n: usize = 64 => "data.sinusoid_n", "sinusoid length";
    sinusoid_freq: f64 = 0.0625 => "data.sinusoid_freq", "sinusoid frequency in cycles per sample";
    sinusoid_phase: f64 = 0.0 => "data.sinusoid_phase", "sinusoid phase in radians";
    sinusoid_shift: i64 = 4 => "data.sinusoid_shift", "circular shift of the second sinusoid";
    whitening_variance: f64 = 0.99 => "whitening.variance", "variance fraction retained when whitening.dims is 0";
    whitening_dims: usize = 0 => "whitening.dims", "fixed number of retained dimensions (0 uses whitening.variance)";
    whitening_floor: f64 = 1e-8 => "whitening.eigenvalue_floor", "eigenvalue floor relative to the largest eigenvalue";
    whitening_max_samples: usize = 10_000 => "whitening.max_samples", "patches used to fit the whitening (seeded subsample)";
    model_units: usize = 300 => "model.units", "hidden units Q";
    model_mode: Mode = Mode::Sequence => "model.mode", "pair or sequence";
    sk_eta: f64 = 0.01 => "skmeans.eta", "initial step size";
    sk_epochs: usize = 5 => "skmeans.epochs", "training epochs";
    sk_normalize_every: usize = 1000 => "skmeans.normalize_every", "updates between row re-normalisations";
    sk_eta_decay: f64 = 0.95 => "skmeans.eta_decay", "step-size multiplier per epoch";
    sk_normalize_inputs: bool = true => "skmeans.normalize_inputs", "scale training samples to unit norm";
    sae_lambda: f64 = 0.5 => "sae.lambda", "contraction weight";
    sae_tied: bool = false => "sae.tied", "tie the two banks in pair mode";
    sae_bias: bool = false => "sae.bias", "learn a hidden bias";
    sae_learning_rate: f64 = 1.0 => "sae.learning_rate", "momentum SGD step";
    sae_momentum: f64 = 0.9 => "sae.momentum", "momentum coefficient";
    sae_batch_size: usize = 128 => "sae.batch_size", "mini-batch size";
    sae_epochs: usize = 20 => "sae.epochs", "training epochs";
    sae_normalize_inputs: bool = true => "sae.normalize_inputs", "scale training samples to unit norm";
    super_dims: BlockDims = BlockDims::new(14, 20, 20) => "pipeline.super_dims", "super-block extent";
    sub_dims: BlockDims = BlockDims::new(10, 16, 16) => "pipeline.sub_dims", "sub-block extent";
    sub_stride: usize = 4 => "pipeline.sub_stride", "sub-block stride on every axis";
    overlap: f64 = 0.5 => "pipeline.overlap", "super-block overlap fraction";
    pca_dims: usize = 100 => "pipeline.pca_dims", "descriptor PCA dimensions";
    vocab_size: usize = 3000 => "pipeline.vocab_size", "vocabulary size";
    vocab_iterations: usize = 50 => "pipeline.vocab_iterations", "Lloyd iterations for the vocabulary";
    pooling: bool = false => "pipeline.pooling", "insert the pooling layer between inference and concatenation";
    pooling_centroids: usize = 500 => "pipeline.pooling_centroids", "pooling-layer centroids";
    pooling_samples: usize = 20_000 => "pipeline.pooling_samples", "hidden vectors used to fit the pooling layer";
    knn_k: usize = 5 => "pipeline.knn_k", "neighbours for k-NN";
    unit_norm_inputs: bool = true => "pipeline.unit_norm_inputs", "scale whitened sub blocks to unit norm before inference";
    viz_gap: usize = 1 => "viz.gap", "pixels between mosaic tiles";
}

impl RunConfig {
    /// Parse config text. Keys not set keep their defaults; unknown keys,
    /// duplicates and bad values are errors naming the line.
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let kv = KeyValues::parse(text, path)?;
        let mut cfg = Self::default();
        for key in kv.keys() {
            let line = kv.line_of(key);
            let value = kv.get(key)?;
            match cfg.set_key(key, value) {
                None => return Err(kv.error(line, format!("unknown key {key:?}"))),
                Some(Err(e)) => return Err(kv.error(line, format!("{key}: {e}"))),
                Some(Ok(())) => {}
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn whitening(&self) -> WhiteningConfig {
        WhiteningConfig {
            retained: if self.whitening_dims > 0 {
                Retained::Dims(self.whitening_dims)
            } else {
                Retained::Variance(self.whitening_variance)
            },
            eigenvalue_floor: self.whitening_floor,
        }
    }

    pub fn skmeans(&self) -> TrainConfig {
        TrainConfig {
            eta: self.sk_eta,
            epochs: self.sk_epochs,
            seed: motionsync::rng::derive(self.seed, 1),
            normalize_every: self.sk_normalize_every,
            eta_decay: self.sk_eta_decay,
            normalize_inputs: self.sk_normalize_inputs,
        }
    }

    pub fn sae(&self) -> SaeTrainConfig {
        SaeTrainConfig {
            learning_rate: self.sae_learning_rate,
            momentum: self.sae_momentum,
            batch_size: self.sae_batch_size,
            epochs: self.sae_epochs,
            seed: motionsync::rng::derive(self.seed, 1),
            normalize_inputs: self.sae_normalize_inputs,
        }
    }

    pub fn descriptor(&self) -> DescriptorConfig {
        DescriptorConfig {
            super_dims: self.super_dims,
            sub_dims: self.sub_dims,
            sub_stride: self.sub_stride,
            overlap_fraction: self.overlap,
            descriptor_pca_dims: self.pca_dims,
            vocab_size: self.vocab_size,
            vocab_iterations: self.vocab_iterations,
            pooling_centroids: self.pooling_centroids,
            knn_k: self.knn_k,
            unit_norm_inputs: self.unit_norm_inputs,
        }
    }
}
