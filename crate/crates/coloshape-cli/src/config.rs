//! Configuration: defaults, optional TOML file, and flag overrides.
//!
//! Precedence is flags > file > defaults. The config file path comes from
//! `--config` or, failing that, the `COLOSHAPE_CONFIG` environment
//! variable.

use std::path::{Path, PathBuf};

use coloshape::estimator::SmootherParams;
use coloshape::forest::ForestParams;
use coloshape::geometry::{Mat3, Point3, RigidTransform};
use coloshape::registration::IcpParams;
use coloshape::simulator::{self, InsertionConfig, PhantomConfig};
use serde::Deserialize;

use crate::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "COLOSHAPE_CONFIG";

pub const DEFAULT_INSERTIONS: usize = 7;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub smoother: SmootherSection,
    #[serde(default)]
    pub icp: IcpSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub insertions: Option<usize>,
    pub frames: Option<usize>,
    pub frame_rate: Option<f64>,
    pub kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub max_marker_displacement: Option<f64>,
    pub noise_scope: Option<f64>,
    pub noise_marker: Option<f64>,
    pub seed: Option<u64>,
    pub markers: Option<usize>,
    pub scope_points: Option<usize>,
    pub sensor_spacing: Option<f64>,
    pub surface_radius: Option<f64>,
    pub centerline_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: Option<bool>,
    pub seed: Option<u64>,
    pub center_features: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmootherSection {
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcpSection {
    pub max_iterations: Option<usize>,
    pub convergence_tol: Option<f64>,
    /// Optional initial registration guess: row-major 3x3 rotation.
    pub initial_rotation: Option<[[f64; 3]; 3]>,
    pub initial_translation: Option<[f64; 3]>,
}

/// Load the config file named by `--config` or the environment; absent
/// both, return defaults.
pub fn load_file_config(flag: Option<&Path>) -> Result<FileConfig, CliError> {
    let path: Option<PathBuf> = match flag {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
    };
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Fully resolved simulate settings.
#[derive(Debug, Clone)]
pub struct SimulateSettings {
    pub insertions: usize,
    pub seed: u64,
    pub phantom: PhantomConfig<f64>,
    pub insertion: InsertionConfig<f64>,
}

/// Flag-level overrides for simulate (a subset of the file options).
#[derive(Debug, Clone, Default)]
pub struct SimulateOverrides {
    pub insertions: Option<usize>,
    pub frames: Option<usize>,
    pub seed: Option<u64>,
    pub kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub noise_scope: Option<f64>,
    pub noise_marker: Option<f64>,
    pub markers: Option<usize>,
    pub scope_points: Option<usize>,
}

pub fn resolve_simulate(file: &SimulateSection, flags: &SimulateOverrides) -> SimulateSettings {
    let mut phantom = PhantomConfig::<f64>::default();
    if let Some(v) = file.centerline_samples {
        phantom.n_centerline_samples = v;
    }
    if let Some(v) = flags.markers.or(file.markers) {
        phantom.marker_count = v;
    }
    if let Some(v) = flags.scope_points.or(file.scope_points) {
        phantom.scope_point_count = v;
    }
    if let Some(v) = file.sensor_spacing {
        phantom.sensor_spacing = v;
    }
    if let Some(v) = file.surface_radius {
        phantom.surface_radius = v;
    }

    let mut insertion = InsertionConfig::<f64>::default();
    if let Some(v) = flags.frames.or(file.frames) {
        insertion.n_frames = v;
    }
    if let Some(v) = file.frame_rate {
        insertion.frame_rate = v;
    }
    if let Some(v) = flags.kappa.or(file.kappa) {
        insertion.coupling_strength = v;
    }
    if let Some(v) = flags.lambda.or(file.lambda) {
        insertion.coupling_decay = v;
    }
    if let Some(v) = file.max_marker_displacement {
        insertion.max_marker_displacement = v;
    }
    if let Some(v) = flags.noise_scope.or(file.noise_scope) {
        insertion.noise_sigma_scope = v;
    }
    if let Some(v) = flags.noise_marker.or(file.noise_marker) {
        insertion.noise_sigma_marker = v;
    }

    let seed = flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    insertion.seed = seed;

    SimulateSettings {
        insertions: flags.insertions.or(file.insertions).unwrap_or(DEFAULT_INSERTIONS),
        seed,
        phantom,
        insertion,
    }
}

/// Flag-level overrides for training.
#[derive(Debug, Clone, Default)]
pub struct ForestOverrides {
    pub n_trees: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub no_bootstrap: bool,
    pub seed: Option<u64>,
    pub center_features: bool,
}

pub fn resolve_forest(file: &ForestSection, flags: &ForestOverrides) -> (ForestParams, bool) {
    let mut p = ForestParams {
        seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        ..ForestParams::default()
    };
    if let Some(v) = flags.n_trees.or(file.n_trees) {
        p.n_trees = v;
    }
    if let Some(v) = flags.min_samples_leaf.or(file.min_samples_leaf) {
        p.min_samples_leaf = v;
    }
    if let Some(v) = flags.mtry.or(file.mtry) {
        p.mtry = Some(v);
    }
    if let Some(v) = flags.max_depth.or(file.max_depth) {
        p.max_depth = Some(v);
    }
    if flags.no_bootstrap {
        p.bootstrap = false;
    } else if let Some(v) = file.bootstrap {
        p.bootstrap = v;
    }
    let center = flags.center_features || file.center_features.unwrap_or(false);
    (p, center)
}

pub fn resolve_smoother(file: &SmootherSection, window_flag: Option<usize>) -> SmootherParams {
    let mut p = SmootherParams::default();
    if let Some(w) = window_flag.or(file.window) {
        p.window = w;
    }
    p
}

/// Flag-level ICP overrides.
#[derive(Debug, Clone, Default)]
pub struct IcpOverrides {
    pub max_iterations: Option<usize>,
    pub convergence_tol: Option<f64>,
}

pub fn resolve_icp(file: &IcpSection, flags: &IcpOverrides) -> Result<IcpParams<f64>, CliError> {
    let mut p = IcpParams::<f64>::default();
    if let Some(v) = flags.max_iterations.or(file.max_iterations) {
        p.max_iterations = v;
    }
    if let Some(v) = flags.convergence_tol.or(file.convergence_tol) {
        p.convergence_tol = v;
    }
    match (file.initial_rotation, file.initial_translation) {
        (None, None) => {}
        (rot, trans) => {
            let rot = rot.unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
            let t = trans.unwrap_or([0.0, 0.0, 0.0]);
            p.initial_transform =
                RigidTransform::new(Mat3::new(rot), Point3::new(t[0], t[1], t[2])).map_err(
                    |e| CliError::Config(format!("icp.initial_rotation/translation: {e}")),
                )?;
        }
    }
    Ok(p)
}

/// Per-insertion seed for sequence `k` under master seed `seed`.
pub fn insertion_seed(seed: u64, k: usize) -> u64 {
    coloshape::rng::derive_seed(seed, &[k as u64])
}

/// Provenance echo matching what `simulate` writes for insertion `k`.
pub fn provenance_for(
    settings: &SimulateSettings,
    k: usize,
) -> coloshape::dataio::SimulatorProvenance<f64> {
    let mut insertion = settings.insertion.clone();
    insertion.seed = insertion_seed(settings.seed, k);
    coloshape::dataio::SimulatorProvenance {
        phantom: settings.phantom.clone(),
        insertion,
    }
}

/// Regenerate the registration target from a provenance echo.
pub fn registration_target_from(
    provenance: &coloshape::dataio::SimulatorProvenance<f64>,
) -> Result<Vec<Point3<f64>>, coloshape::Error> {
    let phantom = simulator::generate_phantom(&provenance.phantom)?;
    Ok(phantom.centerline().to_vec())
}
