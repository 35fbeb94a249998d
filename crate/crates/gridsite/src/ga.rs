//! Seeded genetic algorithm over device locations and P/Q sizes.
//!
//! Genomes hold one slot per device: a bus gene over the non-slack buses and
//! continuous p/q genes. Selection and variation run on a single
//! deterministic RNG stream; fitness evaluation fans out across a rayon pool
//! and is pure, so results do not depend on worker count. Offspring are
//! repaired inside the evaluator before they are scored.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceKind, DevicePlacement};
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::objectives::{Candidate, DeviceLimits, Evaluator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub seed: u64,
    /// Total installable active power shared by all devices (kW).
    pub h_kw: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 100,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            tournament_size: 3,
            elitism: 2,
            seed: 42,
            h_kw: 1000.0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must be at least 2".into()));
        }
        if self.elitism >= self.population {
            return Err(Error::Config("elitism must be smaller than the population".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config("crossover_rate must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config("mutation_rate must be in [0, 1]".into()));
        }
        if self.tournament_size == 0 {
            return Err(Error::Config("tournament_size must be at least 1".into()));
        }
        if !self.h_kw.is_finite() || self.h_kw < 0.0 {
            return Err(Error::Config("h_kw must be non-negative".into()));
        }
        Ok(())
    }
}

/// Fixed device counts of a case: the first `n_wt` slots decode to wind
/// turbines, the rest to batteries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLayout {
    pub n_wt: usize,
    pub n_bess: usize,
}

impl SlotLayout {
    pub fn len(&self) -> usize {
        self.n_wt + self.n_bess
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self, slot: usize) -> DeviceKind {
        if slot < self.n_wt {
            DeviceKind::Wt
        } else {
            DeviceKind::Bess
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gene {
    pub bus: u32,
    pub p_kw: f64,
    pub q_kvar: f64,
}

pub type Genome = Vec<Gene>;

/// A genome together with its scored candidate.
#[derive(Debug, Clone)]
pub struct EvaluatedGenome {
    pub genome: Genome,
    pub candidate: Candidate,
}

#[derive(Debug, Clone)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_genome: Genome,
}

/// Per-generation best/mean fitness history.
#[derive(Debug, Clone, Default)]
pub struct GaTrace {
    pub generations: Vec<GenerationStats>,
}

impl GaTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,best,mean\n");
        for row in &self.generations {
            out.push_str(&format!("{},{},{}\n", row.generation, row.best_fitness, row.mean_fitness));
        }
        out
    }

    pub fn best_final(&self) -> Option<f64> {
        self.generations.last().map(|g| g.best_fitness)
    }
}

/// Anything that can score a plan. Implementations must be pure: the same
/// placements always produce the same candidate.
pub trait FitnessEvaluator: Sync {
    fn evaluate(&self, placements: Vec<DevicePlacement>) -> Candidate;
}

impl FitnessEvaluator for Evaluator {
    fn evaluate(&self, placements: Vec<DevicePlacement>) -> Candidate {
        self.try_evaluate(placements)
            .expect("placements decode to known non-slack buses")
    }
}

type CacheKey = Vec<(u32, i64, i64)>;

fn quantize(genome: &Genome) -> CacheKey {
    genome
        .iter()
        .map(|g| (g.bus, (g.p_kw * 1e6).round() as i64, (g.q_kvar * 1e6).round() as i64))
        .collect()
}

pub struct GeneticAlgorithm<'a, E: FitnessEvaluator> {
    cfg: GaConfig,
    layout: SlotLayout,
    limits: DeviceLimits,
    bus_pool: Vec<u32>,
    evaluator: &'a E,
    rng: ChaCha8Rng,
    cache: HashMap<CacheKey, Candidate>,
}

impl<'a, E: FitnessEvaluator> GeneticAlgorithm<'a, E> {
    pub fn new(
        cfg: GaConfig,
        layout: SlotLayout,
        net: &NetworkModel,
        limits: DeviceLimits,
        evaluator: &'a E,
    ) -> Result<Self> {
        cfg.validate()?;
        let bus_pool = net.non_slack_ids();
        if bus_pool.is_empty() && !layout.is_empty() {
            return Err(Error::Config("no non-slack buses to place devices on".into()));
        }
        let seed = cfg.seed;
        Ok(GeneticAlgorithm {
            cfg,
            layout,
            limits,
            bus_pool,
            evaluator,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: HashMap::new(),
        })
    }

    fn q_bounds(&self, kind: DeviceKind) -> (f64, f64) {
        match kind {
            DeviceKind::Wt => (-self.limits.chart.q_cap_kvar, self.limits.chart.q_cap_kvar),
            DeviceKind::Bess => (self.limits.bess.q_min_kvar, self.limits.bess.q_max_kvar),
        }
    }

    fn random_gene(&mut self, kind: DeviceKind) -> Gene {
        let bus = self.bus_pool[self.rng.random_range(0..self.bus_pool.len())];
        let p_kw = self.rng.random::<f64>() * self.cfg.h_kw;
        let (lo, hi) = self.q_bounds(kind);
        let q_kvar = lo + self.rng.random::<f64>() * (hi - lo);
        Gene { bus, p_kw, q_kvar }
    }

    /// Uniform-random genomes; deterministic under the configured seed.
    pub fn init_population(&mut self) -> Vec<Genome> {
        (0..self.cfg.population)
            .map(|_| (0..self.layout.len()).map(|slot| self.random_gene(self.layout.kind(slot))).collect())
            .collect()
    }

    pub fn decode(&self, genome: &Genome) -> Vec<DevicePlacement> {
        genome
            .iter()
            .enumerate()
            .map(|(slot, gene)| DevicePlacement {
                kind: self.layout.kind(slot),
                bus: gene.bus,
                p_kw: gene.p_kw,
                q_kvar: gene.q_kvar,
            })
            .collect()
    }

    /// Scores a batch, reusing cached results for genomes already seen
    /// (p/q quantized to 1e-6). Fresh genomes are evaluated in parallel.
    pub fn evaluate_population(&mut self, genomes: &[Genome]) -> Vec<EvaluatedGenome> {
        let keys: Vec<CacheKey> = genomes.iter().map(quantize).collect();
        let mut candidates: Vec<Option<Candidate>> =
            keys.iter().map(|k| self.cache.get(k).cloned()).collect();

        let missing: Vec<usize> =
            candidates.iter().enumerate().filter(|(_, c)| c.is_none()).map(|(i, _)| i).collect();
        let evaluator = self.evaluator;
        let decoded: Vec<(usize, Vec<DevicePlacement>)> =
            missing.iter().map(|&i| (i, self.decode(&genomes[i]))).collect();
        let fresh: Vec<(usize, Candidate)> = decoded
            .into_par_iter()
            .map(|(i, placements)| (i, evaluator.evaluate(placements)))
            .collect();
        for (i, candidate) in fresh {
            self.cache.insert(keys[i].clone(), candidate.clone());
            candidates[i] = Some(candidate);
        }

        genomes
            .iter()
            .zip(candidates)
            .map(|(genome, candidate)| EvaluatedGenome {
                genome: genome.clone(),
                candidate: candidate.expect("every genome evaluated"),
            })
            .collect()
    }

    fn tournament(&mut self, population: &[EvaluatedGenome]) -> usize {
        let picks: Vec<usize> = (0..self.cfg.tournament_size)
            .map(|_| self.rng.random_range(0..population.len()))
            .collect();
        picks
            .into_iter()
            .min_by(|&a, &b| {
                population[a]
                    .candidate
                    .fitness
                    .total_cmp(&population[b].candidate.fitness)
                    .then(a.cmp(&b))
            })
            .expect("tournament_size is at least 1")
    }

    fn uniform_crossover(&mut self, a: &Genome, b: &Genome) -> (Genome, Genome) {
        let mut child_a = Vec::with_capacity(a.len());
        let mut child_b = Vec::with_capacity(b.len());
        for (ga, gb) in a.iter().zip(b) {
            if self.rng.random_bool(0.5) {
                child_a.push(gb.clone());
                child_b.push(ga.clone());
            } else {
                child_a.push(ga.clone());
                child_b.push(gb.clone());
            }
        }
        (child_a, child_b)
    }

    fn mutate(&mut self, genome: &mut Genome) {
        let rate = self.cfg.mutation_rate;
        let h = self.cfg.h_kw;
        for (slot, gene) in genome.iter_mut().enumerate() {
            let kind = self.layout.kind(slot);
            if self.rng.random_bool(rate) {
                gene.bus = self.bus_pool[self.rng.random_range(0..self.bus_pool.len())];
            }
            if self.rng.random_bool(rate) {
                let sigma = 0.1 * h;
                if sigma > 0.0 {
                    let step = Normal::new(0.0, sigma).expect("positive sigma").sample(&mut self.rng);
                    gene.p_kw = (gene.p_kw + step).clamp(0.0, h);
                }
            }
            if self.rng.random_bool(rate) {
                let (lo, hi) = match kind {
                    DeviceKind::Wt => (-self.limits.chart.q_cap_kvar, self.limits.chart.q_cap_kvar),
                    DeviceKind::Bess => (self.limits.bess.q_min_kvar, self.limits.bess.q_max_kvar),
                };
                let sigma = 0.1 * (hi - lo);
                if sigma > 0.0 {
                    let step = Normal::new(0.0, sigma).expect("positive sigma").sample(&mut self.rng);
                    gene.q_kvar = (gene.q_kvar + step).clamp(lo, hi);
                }
            }
        }
    }

    fn stats(&self, generation: usize, population: &[EvaluatedGenome]) -> GenerationStats {
        let best = population
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.candidate.fitness.total_cmp(&b.candidate.fitness).then(i.cmp(j)))
            .expect("population is non-empty");
        let mean = population.iter().map(|e| e.candidate.fitness).sum::<f64>()
            / population.len() as f64;
        GenerationStats {
            generation,
            best_fitness: best.1.candidate.fitness,
            mean_fitness: mean,
            best_genome: best.1.genome.clone(),
        }
    }

    /// One generation: stats of the incoming population, then elitism,
    /// tournament selection, uniform slot crossover, and clipped
    /// Gaussian/reset mutation, with the offspring evaluated.
    pub fn evolve_step(
        &mut self,
        population: &[EvaluatedGenome],
        generation: usize,
    ) -> (Vec<EvaluatedGenome>, GenerationStats) {
        let stats = self.stats(generation, population);

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            population[a]
                .candidate
                .fitness
                .total_cmp(&population[b].candidate.fitness)
                .then(a.cmp(&b))
        });

        let mut next: Vec<Genome> = order
            .iter()
            .take(self.cfg.elitism)
            .map(|&i| population[i].genome.clone())
            .collect();
        while next.len() < self.cfg.population {
            let a = self.tournament(population);
            let b = self.tournament(population);
            let (mut child_a, mut child_b) = if self.rng.random_bool(self.cfg.crossover_rate) {
                self.uniform_crossover(&population[a].genome, &population[b].genome)
            } else {
                (population[a].genome.clone(), population[b].genome.clone())
            };
            self.mutate(&mut child_a);
            self.mutate(&mut child_b);
            next.push(child_a);
            if next.len() < self.cfg.population {
                next.push(child_b);
            }
        }

        (self.evaluate_population(&next), stats)
    }

    /// Full run: returns the best candidate ever evaluated and the trace
    /// (one row per generation, including the initial population).
    pub fn run(&mut self) -> Result<(Candidate, GaTrace)> {
        let genomes = self.init_population();
        let mut population = self.evaluate_population(&genomes);
        let mut trace = GaTrace::default();
        let mut best: Option<Candidate> = None;

        for generation in 0..=self.cfg.generations {
            let best_now = population
                .iter()
                .min_by(|a, b| a.candidate.fitness.total_cmp(&b.candidate.fitness))
                .expect("population is non-empty");
            if best.as_ref().is_none_or(|b| best_now.candidate.fitness < b.fitness) {
                best = Some(best_now.candidate.clone());
            }
            if generation == self.cfg.generations {
                trace.generations.push(self.stats(generation, &population));
                break;
            }
            let (next, stats) = self.evolve_step(&population, generation);
            trace.generations.push(stats);
            population = next;
        }

        Ok((best.expect("at least one generation evaluated"), trace))
    }
}

/// Convenience wrapper building the algorithm and running it to completion.
pub fn run<E: FitnessEvaluator>(
    cfg: &GaConfig,
    layout: SlotLayout,
    net: &NetworkModel,
    limits: DeviceLimits,
    evaluator: &E,
) -> Result<(Candidate, GaTrace)> {
    GeneticAlgorithm::new(cfg.clone(), layout, net, limits, evaluator)?.run()
}
