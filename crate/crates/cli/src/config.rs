//! Pipeline configuration.
//!
//! The config file is JSON. Every field is optional and falls back to the
//! documented default, so `{}` (or no file at all) selects the reference
//! settings. Unknown keys are rejected to catch typos early.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use synbench_core::{
    AssembleOptions, Error, FitnessWeights, GaParams, GenomeConfig, Result, SynthesisOptions,
    WarpModel,
};

/// Genetic-algorithm controls. Mirrors [`GaParams`]; `mutation_rate` left
/// null selects 1/genome-length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: Option<f64>,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub epsilon: f64,
}

impl Default for GaSection {
    fn default() -> Self {
        let p = GaParams::default();
        GaSection {
            population: p.population,
            generations: p.generations,
            crossover_rate: p.crossover_rate,
            mutation_rate: p.mutation_rate,
            tournament_size: p.tournament_size,
            elite_count: p.elite_count,
            epsilon: p.epsilon,
        }
    }
}

impl From<GaSection> for GaParams {
    fn from(s: GaSection) -> GaParams {
        GaParams {
            population: s.population,
            generations: s.generations,
            crossover_rate: s.crossover_rate,
            mutation_rate: s.mutation_rate,
            tournament_size: s.tournament_size,
            elite_count: s.elite_count,
            epsilon: s.epsilon,
        }
    }
}

/// Chromosome encoding controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenomeSection {
    pub bits_per_node: u32,
    pub channel_granularity: u64,
}

impl Default for GenomeSection {
    fn default() -> Self {
        let g = GenomeConfig::default();
        GenomeSection { bits_per_node: g.bits_per_node, channel_granularity: g.channel_granularity }
    }
}

impl From<GenomeSection> for GenomeConfig {
    fn from(s: GenomeSection) -> GenomeConfig {
        GenomeConfig { bits_per_node: s.bits_per_node, channel_granularity: s.channel_granularity }
    }
}

/// Weights of the MAC and warp error terms; must be non-negative and sum
/// to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessSection {
    pub mac_weight: f64,
    pub wp_weight: f64,
}

impl Default for FitnessSection {
    fn default() -> Self {
        let w = FitnessWeights::default();
        FitnessSection { mac_weight: w.mac, wp_weight: w.wp }
    }
}

impl From<FitnessSection> for FitnessWeights {
    fn from(s: FitnessSection) -> FitnessWeights {
        FitnessWeights { mac: s.mac_weight, wp: s.wp_weight }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModelSection {
    pub warp_model_id: String,
}

impl Default for CostModelSection {
    fn default() -> Self {
        CostModelSection { warp_model_id: WarpModel::default().id().to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    /// Merge radius as a fraction of log(2); 0 keeps distinct input sizes
    /// apart.
    pub merge_tolerance: f64,
    /// Proportional shrink applied to bin counts and targets after
    /// clustering; 1 is the identity.
    pub scale_factor: f64,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection { merge_tolerance: 0.0, scale_factor: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblerSection {
    pub num_classes: u64,
    pub image_channels: u64,
}

impl Default for AssemblerSection {
    fn default() -> Self {
        let a = AssembleOptions::default();
        AssemblerSection { num_classes: a.num_classes, image_channels: a.image_channels }
    }
}

/// Every tunable of the pipeline, grouped by stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Report gate: any group whose combined fitness error exceeds this
    /// makes the run exit with code 2.
    pub fail_threshold: f64,
    pub ga: GaSection,
    pub genome: GenomeSection,
    pub fitness: FitnessSection,
    pub cost_model: CostModelSection,
    pub clustering: ClusteringSection,
    pub assembler: AssemblerSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            fail_threshold: 0.0119,
            ga: GaSection::default(),
            genome: GenomeSection::default(),
            fitness: FitnessSection::default(),
            cost_model: CostModelSection::default(),
            clustering: ClusteringSection::default(),
            assembler: AssemblerSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads and validates a config file; `None` selects all defaults.
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        if !path.exists() {
            return Err(Error::InvalidInput(format!("config not found: {}", path.display())));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: invalid config: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ga_params().validate()?;
        self.genome_config().validate()?;
        self.fitness_weights().validate()?;
        self.warp_model()?;
        let t = self.clustering.merge_tolerance;
        if !t.is_finite() || !(0.0..1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("merge_tolerance must be in [0, 1), got {t}")));
        }
        let s = self.clustering.scale_factor;
        if !s.is_finite() || !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidInput(format!("scale_factor must be in (0, 1], got {s}")));
        }
        if !self.fail_threshold.is_finite() || self.fail_threshold < 0.0 {
            return Err(Error::InvalidInput(format!(
                "fail_threshold must be finite and non-negative, got {}",
                self.fail_threshold
            )));
        }
        if self.assembler.num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be positive".into()));
        }
        if self.assembler.image_channels == 0 {
            return Err(Error::InvalidInput("image_channels must be positive".into()));
        }
        Ok(())
    }

    pub fn ga_params(&self) -> GaParams {
        self.ga.into()
    }

    pub fn genome_config(&self) -> GenomeConfig {
        self.genome.into()
    }

    pub fn fitness_weights(&self) -> FitnessWeights {
        self.fitness.into()
    }

    pub fn warp_model(&self) -> Result<WarpModel> {
        self.cost_model.warp_model_id.parse()
    }

    pub fn synthesis_options(&self) -> Result<SynthesisOptions> {
        Ok(SynthesisOptions {
            genome: self.genome_config(),
            ga: self.ga_params(),
            weights: self.fitness_weights(),
            warp_model: self.warp_model()?,
            image_channels: self.assembler.image_channels,
            seed: self.seed,
        })
    }

    pub fn assemble_options(&self) -> Result<AssembleOptions> {
        Ok(AssembleOptions {
            num_classes: self.assembler.num_classes,
            image_channels: self.assembler.image_channels,
            warp_model: self.warp_model()?,
            seed: self.seed,
        })
    }
}
