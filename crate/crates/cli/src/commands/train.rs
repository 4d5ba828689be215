//! `nvf train`: JSON config plus flag overrides (flags win), checkpoint and
//! CSV log outputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use nvf_core::error::{NvfError, Result};
use nvf_core::io::save_checkpoint;
use nvf_core::model::{ModelConfig, VectorFieldModel};
use nvf_core::train::{records_to_csv, train, TrainConfig};

use crate::manifest::RunManifest;
use crate::util::load_mesh_spec;

/// On-disk training configuration. Every field is optional; flags override.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFileConfig {
    /// Full architecture; omit to use the preset.
    pub model: Option<ModelConfig>,
    /// "default" or "small"; ignored when `model` is given.
    pub model_preset: Option<String>,
    pub train: TrainConfig,
    /// Mesh specs: paths or fixture:<name>.
    pub dataset: Vec<String>,
    pub out_checkpoint: Option<PathBuf>,
    pub out_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Mesh specs (repeatable); overrides the config's dataset.
    #[arg(long = "dataset")]
    pub dataset: Vec<String>,

    #[arg(long)]
    pub out_checkpoint: Option<PathBuf>,

    #[arg(long)]
    pub out_log: Option<PathBuf>,

    /// Architecture preset: "default" (D=256) or "small" (D=64).
    #[arg(long)]
    pub model_preset: Option<String>,

    /// Rescale dataset meshes into the unit cube.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,

    /// Base learning rate [default: 0.001].
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Learning-rate decay factor [default: 0.3].
    #[arg(long)]
    pub decay_factor: Option<f64>,

    /// Decay epochs, comma-separated [default: 30,70,120].
    #[arg(long, value_delimiter = ',')]
    pub decay_epochs: Option<Vec<usize>>,

    /// Commitment loss weight [default: 0.001].
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Clouds per optimization step [default: 4].
    #[arg(long)]
    pub clouds_per_step: Option<usize>,

    /// Queries per cloud per step [default: 512].
    #[arg(long)]
    pub queries_per_cloud: Option<usize>,

    /// Training epochs [default: 150].
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Optimization steps per epoch [default: 8].
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,

    /// RNG seed for init, sampling, and batching [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Quantize embeddings through the codebook [default: true].
    #[arg(long)]
    pub codebook: Option<bool>,

    /// Train the scalar-distance baseline [default: false].
    #[arg(long)]
    pub baseline: Option<bool>,

    /// Surface points per input cloud [default: 2048].
    #[arg(long)]
    pub cloud_points: Option<usize>,

    /// Labeled query pool per mesh [default: 16384].
    #[arg(long)]
    pub query_pool: Option<usize>,

    /// Near-surface noise scales, comma-separated [default: 0.003,0.01,0.03].
    #[arg(long, value_delimiter = ',')]
    pub noise_sigmas: Option<Vec<f64>>,

    /// Uniform query fraction [default: 0.05].
    #[arg(long)]
    pub uniform_fraction: Option<f64>,

    /// Re-seed long-unused codes [default: true].
    #[arg(long)]
    pub dead_code_revival: Option<bool>,
}

fn resolve(args: &TrainArgs) -> Result<TrainFileConfig> {
    let mut file_config: TrainFileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| NvfError::format(format!("bad config {}: {e}", path.display())))?
        }
        None => TrainFileConfig::default(),
    };

    let t = &mut file_config.train;
    macro_rules! take {
        ($field:ident, $target:expr) => {
            if let Some(v) = args.$field.clone() {
                $target = v;
            }
        };
    }
    take!(learning_rate, t.learning_rate);
    take!(decay_factor, t.decay_factor);
    take!(decay_epochs, t.decay_epochs);
    take!(lambda, t.lambda);
    take!(clouds_per_step, t.clouds_per_step);
    take!(queries_per_cloud, t.queries_per_cloud);
    take!(epochs, t.epochs);
    take!(steps_per_epoch, t.steps_per_epoch);
    take!(seed, t.seed);
    take!(codebook, t.use_codebook);
    take!(baseline, t.baseline_mode);
    take!(cloud_points, t.cloud_points);
    take!(query_pool, t.query_pool_per_mesh);
    take!(noise_sigmas, t.noise_sigmas);
    take!(uniform_fraction, t.uniform_fraction);
    take!(dead_code_revival, t.dead_code_revival);

    if !args.dataset.is_empty() {
        file_config.dataset = args.dataset.clone();
    }
    if let Some(p) = &args.out_checkpoint {
        file_config.out_checkpoint = Some(p.clone());
    }
    if let Some(p) = &args.model_preset {
        file_config.model_preset = Some(p.clone());
    }
    if let Some(p) = &args.out_log {
        file_config.out_log = Some(p.clone());
    }
    Ok(file_config)
}

fn model_config(resolved: &TrainFileConfig) -> Result<ModelConfig> {
    let mut config = match &resolved.model {
        Some(m) => m.clone(),
        None => match resolved.model_preset.as_deref() {
            None | Some("default") => ModelConfig::default(),
            Some("small") => ModelConfig::small(),
            Some(other) => {
                return Err(NvfError::invalid(format!(
                    "unknown model preset '{other}' (default, small)"
                )))
            }
        },
    };
    if resolved.train.baseline_mode {
        config = config.into_baseline();
    }
    config.use_codebook = resolved.train.use_codebook;
    Ok(config)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let resolved = resolve(&args)?;
    if resolved.dataset.is_empty() {
        return Err(NvfError::invalid(
            "no dataset given (use --dataset or the config file)",
        ));
    }
    let out_checkpoint =
        resolved.out_checkpoint.clone().unwrap_or_else(|| PathBuf::from("model.nvfm"));
    let out_log = resolved.out_log.clone().unwrap_or_else(|| PathBuf::from("train_log.csv"));

    let mut meshes = Vec::new();
    let mut mesh_labels = Vec::new();
    let mut mesh_hashes = Vec::new();
    for spec in &resolved.dataset {
        let (mesh, label, bytes) = load_mesh_spec(spec, args.normalize)?;
        meshes.push(mesh);
        mesh_labels.push(label);
        mesh_hashes.push(bytes);
    }

    let config = model_config(&resolved)?;
    let mut model: VectorFieldModel<f32> =
        VectorFieldModel::init(config, resolved.train.seed)?;
    let records = train(&mut model, &meshes, &resolved.train)?;

    let file = File::create(&out_checkpoint)?;
    save_checkpoint(&model, &mut BufWriter::new(file))?;
    fs::write(&out_log, records_to_csv(&records))?;

    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({
            "model": model.config,
            "train": resolved.train,
            "dataset": resolved.dataset,
            "normalize": args.normalize,
        }),
        resolved.train.seed,
    );
    for (label, bytes) in mesh_labels.iter().zip(&mesh_hashes) {
        manifest.hash_bytes(&format!("mesh:{label}"), bytes);
    }
    if let Some(cfg) = &args.config {
        manifest.hash_file("config", cfg)?;
    }
    manifest.output(&out_checkpoint);
    manifest.output(&out_log);
    manifest.write_beside(&out_checkpoint)?;

    let last = records.last().expect("at least one epoch");
    println!(
        "train: {} epochs on {:?}; final displacement loss {:.6} -> {}",
        records.len(),
        mesh_labels,
        last.displacement_loss,
        out_checkpoint.display()
    );
    Ok(())
}
