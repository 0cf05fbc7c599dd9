//! The generational loop of one society: found a population, allocate labor
//! and fertility, pair agents by similar tastes, breed, apply mortality and
//! repeat until the society fails, hits the population cap, or runs out of
//! generations.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::economy::{self, Agent, Preferences, SocietyParams, DAY_HOURS};
use crate::error::{Error, Result};
use crate::metrics;
use crate::stochastics::{Purpose, RngStream};
use crate::strategies::{self, AllocationOptions, StrategyKind};

/// Offspring alpha is kept in `[EDGE, 1 - EDGE]`, sigma in `[0, 1 - EDGE]`.
const EDGE: f64 = 0.01;
/// Hazards above this are certain death.
const CERTAIN_DEATH: f64 = 0.9999;

/// Society-level settings shared by every society of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocietyConfig {
    pub initial_population: usize,
    /// Rate of the exponential draw behind `gamma - 1`.
    pub gamma_rate: f64,
    pub mortality_mid: f64,
    pub mortality_scale: f64,
    pub k_max: u32,
    pub mutation_sd: f64,
    pub population_cap: usize,
    pub allocation: AllocationOptions,
}

impl Default for SocietyConfig {
    fn default() -> Self {
        Self {
            initial_population: 100,
            gamma_rate: 1.0,
            mortality_mid: 240.0,
            mortality_scale: 60.0,
            k_max: 10,
            mutation_sd: 0.02,
            population_cap: 5000,
            allocation: AllocationOptions::default(),
        }
    }
}

/// Aggregates of one completed generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    /// Living agents that took part in the generation (before mortality).
    pub population: u64,
    pub births: u64,
    pub deaths: u64,
    pub total_labor: f64,
    /// `total_labor ^ gamma`.
    pub total_output: f64,
    pub mean_consumption: f64,
    pub consumption_cv: Option<f64>,
    pub consumption_skewness: Option<f64>,
    pub min_utility: f64,
    pub mean_utility: f64,
    pub mean_fertility: f64,
    pub failed: bool,
    pub capped: bool,
}

impl GenerationRecord {
    pub fn empty(generation: u32) -> Self {
        Self {
            generation,
            population: 0,
            births: 0,
            deaths: 0,
            total_labor: 0.0,
            total_output: 0.0,
            mean_consumption: 0.0,
            consumption_cv: None,
            consumption_skewness: None,
            min_utility: 0.0,
            mean_utility: 0.0,
            mean_fertility: 0.0,
            failed: false,
            capped: false,
        }
    }

    pub fn total_consumption(&self) -> f64 {
        self.population as f64 * self.mean_consumption
    }
}

#[derive(Debug, Clone)]
struct Streams {
    optimizer: RngStream,
    reproduction: RngStream,
    mutation: RngStream,
    mortality: RngStream,
}

#[derive(Debug, Clone)]
pub struct Society {
    pub society_index: u64,
    pub strategy: StrategyKind,
    pub params: SocietyParams,
    /// Living agents, ordered by id.
    pub agents: Vec<Agent>,
    pub generation: u32,
    pub prev_total_labor: f64,
    pub failed: bool,
    pub capped: bool,
    config: SocietyConfig,
    next_id: u64,
    last_consumptions: Vec<f64>,
    streams: Streams,
}

/// Founds society `index`. The founding draws (tastes and gamma) depend only on
/// the seed and the index, so every strategy starts from the same population.
pub fn found_society(index: u64, strategy: StrategyKind, config: &SocietyConfig, master_seed: u64) -> Result<Society> {
    let mut proposal = RngStream::for_purpose(master_seed, 0, index, Purpose::Proposal);
    let gamma = 1.0 + proposal.exponential(config.gamma_rate)?;
    let params = SocietyParams {
        gamma,
        mortality_mid: config.mortality_mid,
        mortality_scale: config.mortality_scale,
        k_max: config.k_max,
        initial_population: config.initial_population,
    };
    params.validate()?;
    let mut agents = Vec::with_capacity(config.initial_population);
    for id in 0..config.initial_population as u64 {
        agents.push(Agent::newborn(id, draw_preferences(&mut proposal), 0));
    }
    let tag = strategy.tag();
    let stream = |p| RngStream::for_purpose(master_seed, tag, index, p);
    Ok(Society {
        society_index: index,
        strategy,
        params,
        prev_total_labor: config.allocation.myopic_floor_hours * config.initial_population as f64,
        agents,
        generation: 0,
        failed: false,
        capped: false,
        config: *config,
        next_id: config.initial_population as u64,
        last_consumptions: Vec::new(),
        streams: Streams {
            optimizer: stream(Purpose::Optimizer),
            reproduction: stream(Purpose::Reproduction),
            mutation: stream(Purpose::Mutation),
            mortality: stream(Purpose::Mortality),
        },
    })
}

/// alpha and sigma from U(0,1), redrawn on the measure-zero boundary values.
fn draw_preferences(rng: &mut RngStream) -> Preferences {
    loop {
        let alpha = rng.uniform01();
        let sigma = rng.uniform01();
        if let Ok(p) = Preferences::new(alpha, sigma) {
            return p;
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct PairKey {
    dist2: f64,
    lo: u64,
    hi: u64,
}

impl Eq for PairKey {}

impl Ord for PairKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.lo.cmp(&other.lo)).then(self.hi.cmp(&other.hi))
    }
}

impl PartialOrd for PairKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn pair_key(a: &Agent, b: &Agent) -> PairKey {
    let da = a.prefs.alpha() - b.prefs.alpha();
    let ds = a.prefs.sigma() - b.prefs.sigma();
    PairKey { dist2: da * da + ds * ds, lo: a.id.min(b.id), hi: a.id.max(b.id) }
}

/// Greedy similarity mating: repeatedly pairs the two closest unpaired agents
/// in (alpha, sigma) space, ties broken by the lower ids. Returns index pairs
/// into `agents`; with an odd count one agent stays single.
pub fn mate_pairs(agents: &[Agent]) -> Vec<(usize, usize)> {
    let n = agents.len();
    let mut paired = vec![false; n];
    let nearest = |i: usize, paired: &[bool]| -> Option<(PairKey, usize)> {
        (0..n).filter(|&j| j != i && !paired[j]).map(|j| (pair_key(&agents[i], &agents[j]), j)).min_by_key(|e| e.0)
    };
    // each unpaired agent's entry names its nearest unpaired partner; an entry
    // goes stale only when that partner gets paired, since the pool only shrinks
    let mut heap: BinaryHeap<Reverse<(PairKey, usize, usize)>> =
        (0..n).filter_map(|i| nearest(i, &paired).map(|(k, j)| Reverse((k, i, j)))).collect();
    let mut pairs = Vec::with_capacity(n / 2);
    while let Some(Reverse((_, i, j))) = heap.pop() {
        if paired[i] {
            continue;
        }
        if paired[j] {
            if let Some((k, j2)) = nearest(i, &paired) {
                heap.push(Reverse((k, i, j2)));
            }
            continue;
        }
        paired[i] = true;
        paired[j] = true;
        pairs.push(if agents[i].id < agents[j].id { (i, j) } else { (j, i) });
    }
    pairs
}

/// Children of one pair: Poisson((k_i + k_j)/2) of them, each with the
/// parents' mean tastes plus Gaussian mutation.
pub fn reproduce(
    pair: (&Agent, &Agent),
    mutation_sd: f64,
    reproduction: &mut RngStream,
    mutation: &mut RngStream,
    next_id: &mut u64,
    birth_generation: u32,
) -> Result<Vec<Agent>> {
    let (a, b) = pair;
    let count = reproduction.poisson((f64::from(a.fertility) + f64::from(b.fertility)) / 2.0)?;
    let alpha = (a.prefs.alpha() + b.prefs.alpha()) / 2.0;
    let sigma = (a.prefs.sigma() + b.prefs.sigma()) / 2.0;
    (0..count)
        .map(|_| {
            let child_alpha = (alpha + mutation.gaussian(0.0, mutation_sd)?).clamp(EDGE, 1.0 - EDGE);
            let child_sigma = (sigma + mutation.gaussian(0.0, mutation_sd)?).clamp(0.0, 1.0 - EDGE);
            let id = *next_id;
            *next_id += 1;
            Ok(Agent::newborn(id, Preferences::new(child_alpha, child_sigma)?, birth_generation))
        })
        .collect()
}

/// Kills each agent with probability equal to their mortality hazard and
/// drops the dead from the roster. Returns the number of deaths.
pub fn apply_mortality(agents: &mut Vec<Agent>, params: &SocietyParams, rng: &mut RngStream) -> Result<u64> {
    let mut deaths = 0;
    for agent in agents.iter_mut() {
        let p = economy::mortality(agent.cumulative_labor, params);
        let dies = if p > CERTAIN_DEATH { true } else { rng.bernoulli(p)? };
        if dies {
            agent.alive = false;
            deaths += 1;
        }
    }
    agents.retain(|a| a.alive);
    Ok(deaths)
}

fn check_roster(society: &Society) -> Result<()> {
    let ordered = society.agents.windows(2).all(|w| w[0].id < w[1].id);
    if !ordered || society.agents.iter().any(|a| !a.alive) {
        return Err(Error::Invariant(format!(
            "society {}: roster holds a dead or duplicated agent at generation {}",
            society.society_index, society.generation
        )));
    }
    Ok(())
}

impl Society {
    /// Consumption of every agent in the most recent generation.
    pub fn last_consumptions(&self) -> &[f64] {
        &self.last_consumptions
    }

    pub fn config(&self) -> &SocietyConfig {
        &self.config
    }

    pub fn is_finished(&self) -> bool {
        self.failed || self.capped
    }

    pub fn step_generation(&mut self) -> Result<GenerationRecord> {
        if self.failed {
            return Err(Error::State(format!("society {} has failed", self.society_index)));
        }
        if self.capped {
            return Err(Error::State(format!("society {} reached the population cap", self.society_index)));
        }
        check_roster(self)?;
        let alloc = strategies::allocate(
            self.strategy,
            &self.agents,
            &self.params,
            self.prev_total_labor,
            &self.config.allocation,
            &mut self.streams.optimizer,
        )?;
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let labor = alloc.labor[i];
            agent.labor = labor;
            agent.leisure = DAY_HOURS - labor;
            agent.cumulative_labor += labor;
            agent.fertility = alloc.fertility[i];
            agent.consumption = alloc.consumptions[i];
        }

        let n = self.agents.len();
        let total_labor: f64 = alloc.labor.iter().sum();
        let mut record = GenerationRecord {
            generation: self.generation,
            population: n as u64,
            births: 0,
            deaths: 0,
            total_labor,
            total_output: total_labor.powf(self.params.gamma),
            mean_consumption: alloc.consumptions.iter().sum::<f64>() / n as f64,
            consumption_cv: metrics::coefficient_of_variation(&alloc.consumptions).ok(),
            consumption_skewness: metrics::skewness(&alloc.consumptions).ok(),
            min_utility: alloc.utilities.iter().cloned().fold(f64::INFINITY, f64::min),
            mean_utility: alloc.utilities.iter().sum::<f64>() / n as f64,
            mean_fertility: alloc.fertility.iter().map(|&k| f64::from(k)).sum::<f64>() / n as f64,
            failed: false,
            capped: false,
        };

        let mut children = Vec::new();
        for (i, j) in mate_pairs(&self.agents) {
            children.extend(reproduce(
                (&self.agents[i], &self.agents[j]),
                self.config.mutation_sd,
                &mut self.streams.reproduction,
                &mut self.streams.mutation,
                &mut self.next_id,
                self.generation + 1,
            )?);
        }
        let deaths = apply_mortality(&mut self.agents, &self.params, &mut self.streams.mortality)?;
        let births = children.len() as u64;
        self.agents.extend(children);

        let expected = n as u64 - deaths + births;
        if self.agents.len() as u64 != expected {
            return Err(Error::Invariant(format!(
                "society {}: population {} after generation {} but {n} - {deaths} + {births} = {expected}",
                self.society_index,
                self.agents.len(),
                self.generation
            )));
        }
        record.births = births;
        record.deaths = deaths;
        self.generation += 1;
        self.prev_total_labor = total_labor;
        self.last_consumptions = alloc.consumptions;
        if self.agents.len() < 2 {
            self.failed = true;
        } else if self.agents.len() > self.config.population_cap {
            self.capped = true;
        }
        record.failed = self.failed;
        record.capped = self.capped;
        check_roster(self)?;
        Ok(record)
    }
}

/// Steps `society` until it has produced `max_generations` records, failed,
/// or hit the population cap. `on_generation` sees every record together with
/// that generation's consumption cross-section.
pub fn run_society_with(
    society: &mut Society,
    max_generations: u32,
    mut on_generation: impl FnMut(&GenerationRecord, &[f64]),
) -> Result<Vec<GenerationRecord>> {
    if max_generations == 0 {
        return Err(Error::param("max_generations", "must be >= 1"));
    }
    let mut records = Vec::new();
    while records.len() < max_generations as usize && !society.is_finished() {
        let record = society.step_generation()?;
        on_generation(&record, society.last_consumptions());
        records.push(record);
    }
    Ok(records)
}

pub fn run_society(society: &mut Society, max_generations: u32) -> Result<Vec<GenerationRecord>> {
    run_society_with(society, max_generations, |_, _| {})
}
