//! Run configuration: one flat record filled from an optional TOML file and
//! overridden field by field by command-line flags.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use hokme::{Error, Result};

#[derive(Args, Deserialize, Debug, Default, Clone)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct Opts {
    /// Flat TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,

    /// First dataset (JSON-lines file or directory of CSV files).
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub z: Option<PathBuf>,
    /// Datasets for `kpc`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<PathBuf>>,
    /// Bag datasets for `dr-fit` / training bags for `dr-predict`.
    #[arg(long, value_delimiter = ',')]
    pub bags: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub labels: Option<Vec<f64>>,
    /// Bags to predict for `dr-predict`.
    #[arg(long = "new", value_delimiter = ',')]
    pub new_bags: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub model: Option<PathBuf>,

    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub refinement: Option<usize>,
    /// `series` or `explicit`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Prepend `scale * t` as a coordinate before any kernel evaluation.
    #[arg(long)]
    pub time_augment: Option<f64>,
    /// `biased` or `unbiased`.
    #[arg(long)]
    pub variant: Option<String>,

    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// `threshold` or `permutation` for `ci`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_cond_size: Option<usize>,
    #[arg(long)]
    pub product_kernel: Option<bool>,
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub level_zero: Option<bool>,

    #[arg(long, value_delimiter = ',')]
    pub cv_orders: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub cv_sigmas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub cv_ridges: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Where `dr-fit` writes the cross-validation table.
    #[arg(long)]
    pub cv_out: Option<PathBuf>,

    /// Generator for `gen`: fig3_left, fig3_right, fig3_mixture, brownian,
    /// fbm, spring_chain.
    #[arg(long)]
    pub kind: Option<String>,
    /// Number of sample paths (episodes for spring_chain).
    #[arg(long)]
    pub m: Option<usize>,
    /// Branch parameter of fig3_left / fig3_mixture.
    #[arg(long)]
    pub branch: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub bodies: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,

    /// Output file (directory for CSV datasets and spring systems).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Null samples of `test2` as CSV.
    #[arg(long)]
    pub null_out: Option<PathBuf>,
    /// json or csv (gram also accepts bin).
    #[arg(long)]
    pub format: Option<String>,
    /// `gram`: full prefix field (true) or terminal values only.
    #[arg(long)]
    pub full: Option<bool>,
}

macro_rules! overlay {
    ($a:ident, $b:ident; $($f:ident),* $(,)?) => {
        Opts { config: $a.config, $($f: $a.$f.or($b.$f)),* }
    };
}

impl Opts {
    /// Flags first, then the config file, then defaults.
    pub fn resolve(self) -> Result<Opts> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<Opts>(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?
            }
            None => Opts::default(),
        };
        let a = self;
        let b = file;
        Ok(overlay!(a, b;
            threads, x, y, z, inputs, bags, labels, new_bags, model,
            order, lambda, refinement, scheme, time_augment, variant,
            sigma, ridge, epsilon, alpha, level, mode, permutations, seed,
            max_cond_size, product_kernel, normalize, level_zero,
            cv_orders, cv_sigmas, cv_ridges, folds, cv_out,
            kind, m, branch, theta, dim, hurst, grid_points, horizon, bodies, noise,
            out, null_out, format, full,
        ))
    }

    pub fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
        v.clone().ok_or_else(|| Error::InvalidArgument(format!("missing required option `{name}`")))
    }
}
