//! Flat `key = value` run configuration.
//!
//! Every key can be set from a file or overridden by a command-line flag of
//! the same name (`n_far` ↔ `--n-far`). [`RunConfig::echo`] writes every key
//! with its resolved value; reading the echo back gives an equal config.

use std::path::{Path, PathBuf};

use udp_core::nn::{AdamConfig, Placement};
use udp_core::trainer::{Regularizer, StepMode, TrainConfig};
use udp_core::udp::{UdpVariant, Whitening};
use udp_core::Normalization;

use crate::error::{io_err, Error, Result};

/// A value that can be written to and read from a config line.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! via_fromstr {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("'{s}': {e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
via_fromstr!(usize, u64, f64, bool);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

/// Empty means unset.
impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map(T::render).unwrap_or_default()
    }
}

/// Comma-separated; empty is the empty list.
impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(",")
    }
}

/// Enums with fixed spellings.
macro_rules! named_enum {
    ($t:ty { $($name:literal => $v:expr),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($v),)*
                    _ => Err(format!("'{s}' is not one of: {}", [$($name),*].join(", "))),
                }
            }
            fn render(&self) -> String {
                $(if *self == $v { return $name.to_string(); })*
                unreachable!()
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PurityKind {
    Majority,
    Matched,
}

named_enum!(DataFormat { "idx" => DataFormat::Idx, "csv" => DataFormat::Csv });
named_enum!(PurityKind { "majority" => PurityKind::Majority, "matched" => PurityKind::Matched });
named_enum!(Normalization {
    "none" => Normalization::None,
    "unit_range" => Normalization::UnitRange,
    "zscore" => Normalization::ZScore,
});
named_enum!(UdpVariant { "udp" => UdpVariant::Original, "improved_udp" => UdpVariant::Improved });
named_enum!(Whitening { "local" => Whitening::Local, "denominator" => Whitening::Denominator });
named_enum!(Placement {
    "output" => Placement::Output,
    "middle" => Placement::Middle,
    "auxiliary" => Placement::Auxiliary,
});
named_enum!(Regularizer {
    "udp" => Regularizer::Udp,
    "laplacian" => Regularizer::Laplacian,
    "none" => Regularizer::None,
});
named_enum!(StepMode { "alternating" => StepMode::Alternating, "combined" => StepMode::Combined });

macro_rules! run_config {
    ($($(#[doc = $doc:literal])+ $field:ident: $ty:ty = $default:expr;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])+ pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// One-line description of each key, in [`Self::KEYS`] order.
            pub const HELP: &'static [&'static str] = &[$(concat!($($doc),+)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $(stringify!($field) => {
                        self.$field = ConfigValue::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $(stringify!($field) => Some(self.$field.render()),)*
                    _ => None,
                }
            }
        }
    };
}

run_config! {
    /// Input format: idx or csv.
    format: DataFormat = DataFormat::Csv;
    /// IDX image file.
    images: Option<PathBuf> = None;
    /// IDX label file.
    labels: Option<PathBuf> = None;
    /// CSV data file.
    csv: Option<PathBuf> = None;
    /// Whether the CSV ends with a label column.
    csv_labels: bool = true;
    /// Optional external IDX test images.
    test_images: Option<PathBuf> = None;
    /// Optional external IDX test labels.
    test_labels: Option<PathBuf> = None;
    /// Optional external CSV test set.
    test_csv: Option<PathBuf> = None;
    /// Classes to keep, relabeled densely in this order; empty keeps all.
    classes: Vec<usize> = Vec::new();
    /// Rows to draw without replacement before anything else; empty keeps all.
    subsample: Option<usize> = None;
    /// none, unit_range or zscore (applied to each set separately).
    normalize: Normalization = Normalization::None;
    /// Nearest neighbors per point.
    k: usize = 10;
    /// Farthest points per point.
    n_far: usize = 50;
    /// Kernel width in squared-distance units.
    t: f64 = 4.0;
    /// udp (local/nonlocal) or improved_udp (local/distant).
    method: UdpVariant = UdpVariant::Improved;
    /// Projection dimension.
    dims: usize = 2;
    /// Scatter whitened by Cholesky: local or denominator.
    whitening: Whitening = Whitening::Local;
    /// Ridge added before Cholesky; empty means 1e-8 * trace / d.
    ridge: Option<f64> = None;
    /// Largest M for the all-pairs nonlocal scatter.
    nonlocal_cap: usize = udp_core::udp::DEFAULT_NONLOCAL_CAP;
    /// k-means cluster count; empty means the class count.
    clusters: Option<usize> = None;
    /// k-means restarts.
    restarts: usize = udp_core::eval::DEFAULT_RESTARTS;
    /// Purity flavor: majority or matched (Hungarian).
    purity: PurityKind = PurityKind::Majority;
    /// Labeled training rows (class-balanced).
    n_labeled: usize = 100;
    /// Unlabeled training rows.
    n_unlabeled: usize = 2000;
    /// Hidden layer widths.
    hidden: Vec<usize> = vec![128, 64];
    /// Embedding placement: output, middle or auxiliary.
    placement: Placement = Placement::Output;
    /// Unsupervised term: udp, laplacian or none.
    regularizer: Regularizer = Regularizer::Udp;
    /// Weight of the unsupervised term.
    lambda: f64 = 0.5;
    /// Labeled rows per supervised step.
    labeled_batch: usize = 10;
    /// Anchors per unsupervised step.
    anchors_per_step: usize = 16;
    /// Neighbors sampled per anchor; empty means k.
    neighbor_samples: Option<usize> = None;
    /// Distant points sampled per anchor; empty means min(n_far, 10).
    distant_samples: Option<usize> = None;
    /// Passes over the labeled set.
    epochs: usize = 30;
    /// Iteration count; overrides epochs when set.
    iterations: Option<usize> = None;
    /// Adam learning rate.
    lr: f64 = 1e-3;
    /// Adam beta1.
    beta1: f64 = 0.9;
    /// Adam beta2.
    beta2: f64 = 0.999;
    /// Adam epsilon.
    adam_eps: f64 = 1e-8;
    /// L2 weight decay.
    weight_decay: f64 = 0.0;
    /// alternating or combined optimizer steps.
    step_mode: StepMode = StepMode::Alternating;
    /// Guard added to the ratio denominator.
    ratio_eps: f64 = 1e-12;
    /// Sweep grid over lambda.
    sweep_lambda: Vec<f64> = Vec::new();
    /// Sweep grid over t.
    sweep_t: Vec<f64> = Vec::new();
    /// Checkpoint to embed with (export).
    model: Option<PathBuf> = None;
    /// Projection basis CSV to embed with (export).
    basis: Option<PathBuf> = None;
    /// Seed for every random choice.
    seed: u64 = 0;
    /// Output directory.
    out: PathBuf = PathBuf::from("out");
    /// Graph cache directory; empty disables caching.
    cache_dir: Option<PathBuf> = None;
    /// CSV that metrics rows are appended to, outside the run directory.
    results: Option<PathBuf> = None;
}

impl RunConfig {
    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: n + 1,
                msg: format!("expected 'key = value', got '{raw}'"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: n + 1,
                    msg: format!("'{key}' set twice"),
                });
            }
            self.set(key, value).map_err(|e| Error::Parse {
                path: origin.into(),
                line: n + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Every key with its value, one per line.
    pub fn echo(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap()))
            .collect()
    }

    pub fn flag_name(key: &str) -> String {
        key.replace('_', "-")
    }

    /// Paths the selected data format needs.
    pub fn validate_data(&self) -> Result<()> {
        let need = |p: &Option<PathBuf>, key: &str| -> Result<()> {
            match p {
                None => Err(Error::Config(format!(
                    "{key} is required for format {}",
                    self.format.render()
                ))),
                Some(p) if !p.exists() => Err(Error::Config(format!("{key}: {} does not exist", p.display()))),
                Some(_) => Ok(()),
            }
        };
        let optional = |p: &Option<PathBuf>, key: &str| -> Result<()> {
            match p {
                Some(p) if !p.exists() => Err(Error::Config(format!("{key}: {} does not exist", p.display()))),
                _ => Ok(()),
            }
        };
        match self.format {
            DataFormat::Idx => {
                need(&self.images, "images")?;
                need(&self.labels, "labels")?;
                if self.test_images.is_some() != self.test_labels.is_some() {
                    return Err(Error::Config("test_images and test_labels go together".into()));
                }
                optional(&self.test_images, "test_images")?;
                optional(&self.test_labels, "test_labels")
            }
            DataFormat::Csv => {
                need(&self.csv, "csv")?;
                optional(&self.test_csv, "test_csv")
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::for_graph(self.k, self.n_far, self.t);
        t.lambda = self.lambda;
        t.placement = self.placement;
        t.regularizer = self.regularizer;
        t.labeled_batch = self.labeled_batch;
        t.anchors_per_step = self.anchors_per_step;
        if let Some(n) = self.neighbor_samples {
            t.neighbor_samples = n;
        }
        if let Some(n) = self.distant_samples {
            t.distant_samples = n;
        }
        t.epochs = self.epochs;
        t.iterations = self.iterations;
        t.adam = AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        };
        t.step_mode = self.step_mode;
        t.ratio_eps = self.ratio_eps;
        t.seed = self.seed;
        t
    }
}

/// Renders any [`ConfigValue`]; used for result tables.
pub fn render<T: ConfigValue>(v: &T) -> String {
    v.render()
}

/// Parses a single value outside a config.
pub fn parse<T: ConfigValue>(s: &str) -> Result<T> {
    T::parse_value(s).map_err(Error::Config)
}
