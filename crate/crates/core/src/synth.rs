//! Per-group channel search: a seeded generational genetic algorithm
//! minimizes the weighted relative MAC/warp error against each group's
//! profiled targets. Groups evolve in order because every group's conv
//! input width depends on the channel counts chosen upstream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSet, GroupSpec, GroupTargets};
use crate::cost::{group_cost, CostVector, WarpModel};
use crate::error::{Error, Result};
use crate::genome::{Genome, GenomeConfig, GenomeLayout};
use crate::graph::{route_tensor, GroupPlan};

/// Relative weight of the MAC and warp error terms. The canonical fitness
/// splits them evenly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub mac: f64,
    pub wp: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights { mac: 0.5, wp: 0.5 }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<()> {
        if !self.mac.is_finite() || !self.wp.is_finite() || self.mac < 0.0 || self.wp < 0.0 {
            return Err(Error::invalid("fitness weights must be finite and non-negative"));
        }
        if (self.mac + self.wp - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "fitness weights must sum to 1, got {}",
                self.mac + self.wp
            )));
        }
        Ok(())
    }
}

/// A scored cost vector: the combined value plus both raw error terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    pub value: f64,
    pub mac_err: f64,
    pub wp_err: f64,
}

/// Weighted relative distance between an achieved cost and the target.
///
/// Each term is `|achieved - target| / target`; a zero target is only
/// meaningful when its weight is zero (the term then drops out).
pub fn fitness(
    achieved: CostVector,
    targets: &GroupTargets,
    weights: &FitnessWeights,
) -> Result<FitnessValue> {
    weights.validate()?;
    let term = |actual: u64, target: u64, weight: f64, label: &str| -> Result<f64> {
        if target == 0 {
            if weight > 0.0 {
                return Err(Error::invalid(format!("{label} target is zero")));
            }
            return Ok(0.0);
        }
        Ok(actual.abs_diff(target) as f64 / target as f64)
    };
    let mac_err = term(achieved.mac, targets.mac_real, weights.mac, "mac")?;
    let wp_err = term(achieved.wp, targets.wp_real, weights.wp, "warp")?;
    let mut value = 0.0;
    if weights.mac > 0.0 {
        value += weights.mac * mac_err;
    }
    if weights.wp > 0.0 {
        value += weights.wp * wp_err;
    }
    Ok(FitnessValue { value, mac_err, wp_err })
}

/// Genetic algorithm controls. Defaults follow the reference run:
/// 64 individuals for 500 generations, single-point crossover at 0.9,
/// per-bit mutation at 1/genome-length, tournament of 3, two elites,
/// early stop once the best fitness drops to 1e-4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-bit mutation probability; `None` selects 1/genome-length.
    pub mutation_rate: Option<f64>,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub epsilon: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 64,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: None,
            tournament_size: 3,
            elite_count: 2,
            epsilon: 1e-4,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("population must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::invalid("crossover_rate must be within [0, 1]"));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::invalid("mutation_rate must be within [0, 1]"));
            }
        }
        if self.tournament_size == 0 {
            return Err(Error::invalid("tournament_size must be at least 1"));
        }
        if self.elite_count >= self.population {
            return Err(Error::invalid("elite_count must be smaller than the population"));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Decodes a genome into channel counts and prices the group exactly as
/// the assembler will realize it.
pub fn evaluate_genome(
    group: &GroupSpec,
    layout: &GenomeLayout,
    genome: &Genome,
    input_channels: u64,
    model: WarpModel,
) -> Result<(Vec<u64>, CostVector)> {
    let channels = layout.decode(genome)?;
    let plan = GroupPlan::new(group);
    let shapes = plan.conv_shapes((group.center_h, group.center_w), input_channels, &channels)?;
    let with_count: Vec<_> = shapes.into_iter().map(|s| (s, 1)).collect();
    let cost = group_cost(&with_count, model)?;
    Ok((channels, cost))
}

/// The winning individual of one group's run.
#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub genome: Genome,
    pub channels: Vec<u64>,
    pub achieved: CostVector,
    pub fitness: FitnessValue,
    /// Best fitness value per generation; entry 0 is the initial population.
    pub history: Vec<f64>,
}

struct Individual {
    genome: Genome,
    value: f64,
    detail: Option<(Vec<u64>, CostVector, FitnessValue)>,
}

/// Runs the seeded GA for one group. Identical inputs and seed always
/// produce an identical outcome.
#[allow(clippy::too_many_arguments)]
pub fn evolve_group(
    group: &GroupSpec,
    targets: &GroupTargets,
    input_channels: u64,
    genome_config: GenomeConfig,
    params: &GaParams,
    weights: &FitnessWeights,
    model: WarpModel,
    seed: u64,
) -> Result<EvolveOutcome> {
    params.validate()?;
    weights.validate()?;
    if weights.mac > 0.0 && targets.mac_real == 0 {
        return Err(Error::invalid("mac target is zero"));
    }
    if weights.wp > 0.0 && targets.wp_real == 0 {
        return Err(Error::invalid("warp target is zero"));
    }
    let layout = GenomeLayout::for_group(group, genome_config)?;
    let len = layout.genome_len();
    if len == 0 {
        return Err(Error::invalid("group has no conv slots to evolve"));
    }
    let mutation_rate = params.mutation_rate.unwrap_or(1.0 / len as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let score = |genome: Genome| -> Individual {
        match evaluate_genome(group, &layout, &genome, input_channels, model)
            .and_then(|(channels, cost)| Ok((channels, cost, fitness(cost, targets, weights)?)))
        {
            Ok((channels, cost, fit)) => Individual {
                genome,
                value: fit.value,
                detail: Some((channels, cost, fit)),
            },
            // Out-of-range decodes (possible only with extreme configs)
            // lose every tournament instead of aborting the run.
            Err(_) => Individual { genome, value: f64::INFINITY, detail: None },
        }
    };

    let mut population: Vec<Individual> = (0..params.population)
        .map(|_| score(Genome::random(len, &mut rng)))
        .collect();

    let ranking = |population: &[Individual]| -> Vec<usize> {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            population[a]
                .value
                .partial_cmp(&population[b].value)
                .expect("fitness is never NaN")
                .then(a.cmp(&b))
        });
        order
    };

    let mut history = vec![population[ranking(&population)[0]].value];

    for _ in 0..params.generations {
        if *history.last().expect("history is non-empty") <= params.epsilon {
            break;
        }
        let order = ranking(&population);
        let mut next: Vec<Individual> = order[..params.elite_count]
            .iter()
            .map(|&i| Individual {
                genome: population[i].genome.clone(),
                value: population[i].value,
                detail: population[i].detail.clone(),
            })
            .collect();
        while next.len() < params.population {
            let p1 = tournament(&population, params.tournament_size, &mut rng);
            let p2 = tournament(&population, params.tournament_size, &mut rng);
            let (mut c1, mut c2) = crossover(
                &population[p1].genome,
                &population[p2].genome,
                params.crossover_rate,
                &mut rng,
            );
            mutate(&mut c1, mutation_rate, &mut rng);
            next.push(score(c1));
            if next.len() < params.population {
                mutate(&mut c2, mutation_rate, &mut rng);
                next.push(score(c2));
            }
        }
        population = next;
        history.push(population[ranking(&population)[0]].value);
    }

    let best = &population[ranking(&population)[0]];
    let Some((channels, achieved, fit)) = best.detail.clone() else {
        return Err(Error::invalid(
            "no genome decoded to a valid network; widen the channel range",
        ));
    };
    Ok(EvolveOutcome { genome: best.genome.clone(), channels, achieved, fitness: fit, history })
}

/// Tournament selection: the best of `size` uniform draws, ties resolved
/// toward the lower population index.
fn tournament<R: Rng>(population: &[Individual], size: usize, rng: &mut R) -> usize {
    let mut winner = rng.random_range(0..population.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..population.len());
        if population[challenger].value < population[winner].value
            || (population[challenger].value == population[winner].value && challenger < winner)
        {
            winner = challenger;
        }
    }
    winner
}

/// Single-point crossover with the given probability; otherwise the
/// parents pass through unchanged.
fn crossover<R: Rng>(a: &Genome, b: &Genome, rate: f64, rng: &mut R) -> (Genome, Genome) {
    let len = a.len();
    if len >= 2 && rng.random::<f64>() < rate {
        let point = rng.random_range(1..len);
        let mut c1 = a.bits[..point].to_vec();
        c1.extend_from_slice(&b.bits[point..]);
        let mut c2 = b.bits[..point].to_vec();
        c2.extend_from_slice(&a.bits[point..]);
        (Genome { bits: c1 }, Genome { bits: c2 })
    } else {
        (a.clone(), b.clone())
    }
}

fn mutate<R: Rng>(genome: &mut Genome, rate: f64, rng: &mut R) {
    for bit in &mut genome.bits {
        if rng.random::<f64>() < rate {
            *bit = !*bit;
        }
    }
}

/// Everything that shapes a full synthesis run.
#[derive(Clone, Copy, Debug)]
pub struct SynthesisOptions {
    pub genome: GenomeConfig,
    pub ga: GaParams,
    pub weights: FitnessWeights,
    pub warp_model: WarpModel,
    pub image_channels: u64,
    /// Base seed; group i (zero-based) evolves with `seed + i`.
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            genome: GenomeConfig::default(),
            ga: GaParams::default(),
            weights: FitnessWeights::default(),
            warp_model: WarpModel::OutputThreadV1,
            image_channels: 3,
            seed: 0,
        }
    }
}

/// One group's synthesis record.
#[derive(Clone, Debug)]
pub struct GroupSynthesis {
    pub channels: Vec<u64>,
    pub genome: Genome,
    pub achieved: CostVector,
    pub fitness: FitnessValue,
    pub history: Vec<f64>,
    /// Conv input width the group was evolved against (sum of arriving
    /// tensor channels).
    pub input_channels: u64,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub groups: Vec<GroupSynthesis>,
}

impl SynthesisResult {
    pub fn assignments(&self) -> Vec<Vec<u64>> {
        self.groups.iter().map(|g| g.channels.clone()).collect()
    }
}

/// Evolves every group in network order, threading achieved channel widths
/// forward along the same routes the assembler will use.
pub fn synthesize(cs: &ClusterSet, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    cs.validate()?;
    let centers = cs.centers();
    let mut arrivals: Vec<Vec<u64>> = vec![Vec::new(); cs.groups.len()];
    arrivals[0].push(opts.image_channels);
    let mut groups = Vec::with_capacity(cs.groups.len());

    for (gi, group) in cs.groups.iter().enumerate() {
        let number = gi + 1;
        if arrivals[gi].is_empty() {
            return Err(Error::construction(format!("group {number} receives no input tensor")));
        }
        let input_channels = arrivals[gi].iter().sum();
        let outcome = evolve_group(
            group,
            &cs.targets[gi],
            input_channels,
            opts.genome,
            &opts.ga,
            &opts.weights,
            opts.warp_model,
            opts.seed.wrapping_add(gi as u64),
        )?;

        let plan = GroupPlan::new(group);
        let shapes =
            plan.conv_shapes((group.center_h, group.center_w), input_channels, &outcome.channels)?;
        for slot in plan.outgoing_slots() {
            let (h, w) = (shapes[slot].out_h(), shapes[slot].out_w());
            match route_tensor(&centers, gi, h, w) {
                Some(t) => arrivals[t].push(outcome.channels[slot]),
                None if gi + 1 == cs.groups.len() => {}
                None => {
                    return Err(Error::construction(format!(
                        "a {h}x{w} tensor from group {number} is smaller than every remaining group center"
                    )))
                }
            }
        }

        groups.push(GroupSynthesis {
            channels: outcome.channels,
            genome: outcome.genome,
            achieved: outcome.achieved,
            fitness: outcome.fitness,
            history: outcome.history,
            input_channels,
        });
    }
    Ok(SynthesisResult { groups })
}
