//! Intent-guided genetic search over pass sequences.
//!
//! The mutation operator draws replacement (and inserted) passes from a soft
//! probabilistic mixture of a uniform exploration term and a strategic term
//! built from the strategist's category weights and the global pass-benefit
//! prior:
//!
//!     P(p) = ε·(1/|V|) + (1−ε)·(w_cat(p)·E[b(p)]) / Z
//!
//! with Z normalizing the strategic term over V and negative benefits clamped
//! to zero. Every pass keeps probability ≥ ε/|V|, so the search remains
//! ergodic and can recover from a misleading intent. When Z = 0 the strategic
//! term degenerates to uniform.
//!
//! The GA itself is a conventional elitist generational loop: tournament
//! selection (size 3), one-point crossover, per-gene replacement mutation plus
//! length-bounded insertion/deletion, best-ever retention, and a seeded RNG
//! confined to the coordinator so runs are bit-reproducible.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CycleCount, ProgramHandle};
use crate::error::{Error, Result};
use crate::passes::{PassCategory, PassId, PassSequence, Vocabulary};
use crate::prior::BenefitTable;

/// Category weights w_c derived from the strategist's sequence; sums to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntentDistribution {
    pub weights: BTreeMap<PassCategory, f64>,
}

impl IntentDistribution {
    pub fn uniform() -> Self {
        let w = 1.0 / PassCategory::ALL.len() as f64;
        Self {
            weights: PassCategory::ALL.iter().map(|c| (*c, w)).collect(),
        }
    }

    pub fn weight(&self, cat: PassCategory) -> f64 {
        self.weights.get(&cat).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Replacement-pass sampling distribution over V.
#[derive(Debug, Clone)]
pub struct MutationDistribution {
    entries: Vec<(PassId, f64)>,
    cumulative: Vec<f64>,
    pub epsilon: f64,
}

impl MutationDistribution {
    pub fn probabilities(&self) -> &[(PassId, f64)] {
        &self.entries
    }

    pub fn probability_of(&self, pass: &PassId) -> f64 {
        self.entries
            .iter()
            .find(|(p, _)| p == pass)
            .map(|(_, q)| *q)
            .unwrap_or(0.0)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> &PassId {
        let x: f64 = rng.gen();
        let idx = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&x).unwrap())
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        &self.entries[idx.min(self.entries.len() - 1)].0
    }
}

/// The ε-mixed mutation distribution over the vocabulary.
///
/// Preconditions: `intent` sums to 1 and `epsilon` ∈ [0, 1]. Benefits enter
/// clamped at zero; Z = Σ w_cat(p)·E[b(p)]⁺ over V, and Z = 0 falls back to a
/// uniform strategic term so the operator stays total.
pub fn mutation_distribution(
    intent: &IntentDistribution,
    benefits: &BenefitTable,
    epsilon: f64,
    vocab: &Vocabulary,
) -> MutationDistribution {
    let n = vocab.len() as f64;
    let strategic_mass: Vec<f64> = vocab
        .flags()
        .iter()
        .map(|p| intent.weight(vocab.category_of(p)) * benefits.expected_clamped(p))
        .collect();
    let z: f64 = strategic_mass.iter().sum();

    let uniform = 1.0 / n;
    let entries: Vec<(PassId, f64)> = vocab
        .flags()
        .iter()
        .zip(&strategic_mass)
        .map(|(p, mass)| {
            let strategic = if z > 0.0 { mass / z } else { uniform };
            (p.clone(), epsilon * uniform + (1.0 - epsilon) * strategic)
        })
        .collect();

    let mut cumulative = Vec::with_capacity(entries.len());
    let mut acc = 0.0;
    for (_, q) in &entries {
        acc += q;
        cumulative.push(acc);
    }
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0; // guard the sampler against accumulated rounding
    }
    MutationDistribution {
        entries,
        cumulative,
        epsilon,
    }
}

/// I_O3: relative cycle reduction against the -O3 baseline. Negative when
/// the tuned sequence regresses.
pub fn improvement(c_o3: CycleCount, c_opt: CycleCount) -> f64 {
    (c_o3.get() as f64 - c_opt.get() as f64) / c_o3.get() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: u32,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub max_sequence_length: usize,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 32,
            generations: 25,
            crossover_rate: 0.8,
            mutation_rate: 0.2,
            max_sequence_length: 40,
            epsilon: 0.1,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("epsilon", self.epsilon),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.population_size == 0 {
            return Err(Error::Config("population_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Index into the seed list the best individual descends from.
    pub sample_index: usize,
    /// Generation at which the best-ever individual was found (0 = seeds).
    pub generation: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_sequence: PassSequence,
    pub best_cycles: CycleCount,
    /// I_O3 of the best sequence.
    pub improvement: f64,
    pub provenance: Provenance,
    pub evaluations_used: u64,
}

#[derive(Clone)]
struct Individual {
    seq: PassSequence,
    /// Seed index this individual's lineage started from (crossover children
    /// inherit the first parent's origin).
    origin: usize,
}

/// Elitist generational GA.
///
/// The population starts from the seeds, padded with mutated seed copies up
/// to `population_size`. Fitness is the cycle count (failures score worst);
/// only total backend outage propagates as an error. Identical inputs,
/// config, and seed produce identical results.
pub fn tune(
    backend: &Backend,
    program: &ProgramHandle,
    seeds: &[PassSequence],
    intent: &IntentDistribution,
    benefits: &BenefitTable,
    cfg: &GaConfig,
    vocab: &Vocabulary,
) -> Result<TuneResult> {
    if seeds.is_empty() {
        return Err(Error::Config("tune requires at least one seed".into()));
    }
    cfg.validate()?;
    let dist = mutation_distribution(intent, benefits, cfg.epsilon, vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let c_o3 = backend.baseline_o3_cycles(program)?;

    let mut population: Vec<Individual> = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| Individual {
            seq: truncate(s.clone(), cfg.max_sequence_length),
            origin: i,
        })
        .collect();
    while population.len() < cfg.population_size {
        let i = rng.gen_range(0..seeds.len());
        let mut child = Individual {
            seq: truncate(seeds[i].clone(), cfg.max_sequence_length),
            origin: i,
        };
        mutate(&mut child.seq, &dist, cfg, &mut rng);
        population.push(child);
    }

    let mut evaluations_used = 0u64;
    let mut fitness = evaluate_population(backend, program, &population, &mut evaluations_used)?;

    let best_idx = argmin(&fitness);
    let mut best = population[best_idx].clone();
    let mut best_cycles = fitness[best_idx];
    let mut provenance = Provenance {
        sample_index: best.origin,
        generation: 0,
    };

    for gen in 1..=cfg.generations {
        let mut next: Vec<Individual> = Vec::with_capacity(cfg.population_size);
        next.push(best.clone()); // elitism
        while next.len() < cfg.population_size.max(1) {
            let p1 = tournament(&population, &fitness, &mut rng);
            let p2 = tournament(&population, &fitness, &mut rng);
            let mut child = if rng.gen::<f64>() < cfg.crossover_rate {
                crossover(&population[p1], &population[p2], cfg, &mut rng)
            } else {
                population[p1].clone()
            };
            mutate(&mut child.seq, &dist, cfg, &mut rng);
            next.push(child);
        }
        population = next;
        fitness = evaluate_population(backend, program, &population, &mut evaluations_used)?;
        let idx = argmin(&fitness);
        if fitness[idx] < best_cycles {
            best = population[idx].clone();
            best_cycles = fitness[idx];
            provenance = Provenance {
                sample_index: best.origin,
                generation: gen,
            };
        }
    }

    if best_cycles == CycleCount::WORST {
        return Err(Error::Compile(format!(
            "every candidate failed to evaluate for {}",
            program.id
        )));
    }
    Ok(TuneResult {
        best_sequence: best.seq,
        best_cycles,
        improvement: improvement(c_o3, best_cycles),
        provenance,
        evaluations_used,
    })
}

fn evaluate_population(
    backend: &Backend,
    program: &ProgramHandle,
    population: &[Individual],
    evaluations_used: &mut u64,
) -> Result<Vec<CycleCount>> {
    *evaluations_used += population.len() as u64;
    population
        .par_iter()
        .map(|ind| {
            Ok(backend
                .evaluate(program, &ind.seq)?
                .cycles()
                .unwrap_or(CycleCount::WORST))
        })
        .collect()
}

fn argmin(fitness: &[CycleCount]) -> usize {
    let mut best = 0;
    for i in 1..fitness.len() {
        if fitness[i] < fitness[best] {
            best = i;
        }
    }
    best
}

fn tournament(population: &[Individual], fitness: &[CycleCount], rng: &mut ChaCha8Rng) -> usize {
    let mut winner = rng.gen_range(0..population.len());
    for _ in 0..2 {
        let challenger = rng.gen_range(0..population.len());
        if fitness[challenger] < fitness[winner] {
            winner = challenger;
        }
    }
    winner
}

fn crossover(
    a: &Individual,
    b: &Individual,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
) -> Individual {
    let cut_a = rng.gen_range(0..=a.seq.len());
    let cut_b = rng.gen_range(0..=b.seq.len());
    let mut passes: Vec<PassId> = a.seq.passes()[..cut_a].to_vec();
    passes.extend_from_slice(&b.seq.passes()[cut_b..]);
    Individual {
        seq: truncate(PassSequence::new(passes), cfg.max_sequence_length),
        origin: a.origin,
    }
}

fn mutate(seq: &mut PassSequence, dist: &MutationDistribution, cfg: &GaConfig, rng: &mut ChaCha8Rng) {
    let mut passes: Vec<PassId> = seq.passes().to_vec();
    for gene in passes.iter_mut() {
        if rng.gen::<f64>() < cfg.mutation_rate {
            *gene = dist.sample(rng).clone();
        }
    }
    if passes.len() < cfg.max_sequence_length && rng.gen::<f64>() < cfg.mutation_rate {
        let at = rng.gen_range(0..=passes.len());
        passes.insert(at, dist.sample(rng).clone());
    }
    if !passes.is_empty() && rng.gen::<f64>() < cfg.mutation_rate {
        let at = rng.gen_range(0..passes.len());
        passes.remove(at);
    }
    *seq = PassSequence::new(passes);
}

fn truncate(seq: PassSequence, max_len: usize) -> PassSequence {
    if seq.len() <= max_len {
        seq
    } else {
        seq.prefix(max_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::synthetic::{SyntheticBackend, SyntheticCorpus, SYNTHETIC_VOCAB_TSV};
    use crate::backend::EvalCache;

    fn demo() -> (Backend, Vocabulary) {
        let corpus: SyntheticCorpus = serde_json::from_str(include_str!(
            "../../../data/synthetic/demo_corpus.json"
        ))
        .unwrap();
        let raw = SyntheticBackend::from_corpus(&corpus, "").unwrap();
        (
            Backend::new(Box::new(raw), EvalCache::in_memory()),
            Vocabulary::parse(SYNTHETIC_VOCAB_TSV).unwrap(),
        )
    }

    fn seq(vocab: &Vocabulary, flags: &[&str]) -> PassSequence {
        vocab
            .validate_sequence(&flags.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn epsilon_one_is_exactly_uniform() {
        let (_, vocab) = demo();
        let mut benefits = BenefitTable::zeros(&vocab);
        let p = vocab.validate("--sy-loop").unwrap();
        benefits.passes.get_mut(&p).unwrap().expected_benefit = 5.0;
        let dist = mutation_distribution(&IntentDistribution::uniform(), &benefits, 1.0, &vocab);
        let uniform = 1.0 / vocab.len() as f64;
        for (_, q) in dist.probabilities() {
            assert_eq!(*q, uniform);
        }
    }

    #[test]
    fn two_pass_worked_mixture() {
        // |V|=2, eps=0.5, all intent weight on p1's category, E[b(p1)]=1 and
        // p2 in another category: P(p1)=0.75, P(p2)=0.25
        let vocab = Vocabulary::parse("--a\tLoop\n--b\tScalar\n").unwrap();
        let a = vocab.validate("--a").unwrap();
        let b = vocab.validate("--b").unwrap();
        let mut benefits = BenefitTable::zeros(&vocab);
        benefits.passes.get_mut(&a).unwrap().expected_benefit = 1.0;
        let mut intent = IntentDistribution::uniform();
        for (c, w) in intent.weights.iter_mut() {
            *w = if *c == PassCategory::Loop { 1.0 } else { 0.0 };
        }
        let dist = mutation_distribution(&intent, &benefits, 0.5, &vocab);
        assert!((dist.probability_of(&a) - 0.75).abs() < 1e-12);
        assert!((dist.probability_of(&b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_strategic_mass_degenerates_to_uniform() {
        let (_, vocab) = demo();
        let benefits = BenefitTable::zeros(&vocab);
        let dist = mutation_distribution(&IntentDistribution::uniform(), &benefits, 0.2, &vocab);
        let uniform = 1.0 / vocab.len() as f64;
        for (_, q) in dist.probabilities() {
            assert!((q - uniform).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_benefits_are_clamped_not_propagated() {
        let (_, vocab) = demo();
        let mut benefits = BenefitTable::zeros(&vocab);
        let good = vocab.validate("--sy-loop").unwrap();
        let bad = vocab.validate("--sy-cf").unwrap();
        benefits.passes.get_mut(&good).unwrap().expected_benefit = 0.5;
        benefits.passes.get_mut(&bad).unwrap().expected_benefit = -2.0;
        let dist = mutation_distribution(&IntentDistribution::uniform(), &benefits, 0.1, &vocab);
        let floor = 0.1 / vocab.len() as f64;
        for (_, q) in dist.probabilities() {
            assert!(*q >= floor);
            assert!(*q >= 0.0);
        }
        // the harmful pass sits exactly on the exploration floor
        assert!((dist.probability_of(&bad) - floor).abs() < 1e-15);
    }

    #[test]
    fn improvement_metric_examples() {
        assert_eq!(improvement(CycleCount(1000), CycleCount(756)), 0.244);
        assert_eq!(improvement(CycleCount(100), CycleCount(100)), 0.0);
        assert_eq!(improvement(CycleCount(100), CycleCount(110)), -0.1);
    }

    #[test]
    fn seeded_optimum_is_returned_unchanged() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy1");
        let optimum = seq(&vocab, &["--sy-loop", "--sy-vec", "--sy-vec"]);
        let cfg = GaConfig {
            population_size: 8,
            generations: 5,
            max_sequence_length: 3,
            rng_seed: 42,
            ..Default::default()
        };
        let result = tune(
            &backend,
            &p,
            &[optimum.clone()],
            &IntentDistribution::uniform(),
            &BenefitTable::zeros(&vocab),
            &cfg,
            &vocab,
        )
        .unwrap();
        assert_eq!(result.best_cycles, CycleCount(585));
        assert_eq!(result.best_sequence, optimum);
    }

    #[test]
    fn zero_generations_returns_best_of_seed_population() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy0");
        let seeds = vec![
            seq(&vocab, &["--sy-scalar"]),       // 900
            seq(&vocab, &["--sy-mem"]),          // 850
            seq(&vocab, &["--noop-pass"]),       // 1000
        ];
        let cfg = GaConfig {
            population_size: 3,
            generations: 0,
            rng_seed: 7,
            ..Default::default()
        };
        let result = tune(
            &backend,
            &p,
            &seeds,
            &IntentDistribution::uniform(),
            &BenefitTable::zeros(&vocab),
            &cfg,
            &vocab,
        )
        .unwrap();
        assert_eq!(result.best_cycles, CycleCount(850));
        assert_eq!(result.provenance.sample_index, 1);
        assert_eq!(result.provenance.generation, 0);
        assert_eq!(result.evaluations_used, 3);
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy4");
        let seeds = vec![seq(&vocab, &["--sy-mem"])];
        let cfg = GaConfig {
            population_size: 12,
            generations: 8,
            max_sequence_length: 6,
            rng_seed: 99,
            ..Default::default()
        };
        let run = || {
            tune(
                &backend,
                &p,
                &seeds,
                &IntentDistribution::uniform(),
                &BenefitTable::zeros(&vocab),
                &cfg,
                &vocab,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn budget_accounting_holds() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy5");
        let seeds = vec![seq(&vocab, &["--sy-scalar"]), seq(&vocab, &["--sy-cf"])];
        let cfg = GaConfig {
            population_size: 10,
            generations: 6,
            rng_seed: 3,
            ..Default::default()
        };
        let result = tune(
            &backend,
            &p,
            &seeds,
            &IntentDistribution::uniform(),
            &BenefitTable::zeros(&vocab),
            &cfg,
            &vocab,
        )
        .unwrap();
        let bound = cfg.population_size as u64 * (cfg.generations as u64 + 1) + seeds.len() as u64;
        assert!(result.evaluations_used <= bound);
        // best never worse than the best seed (850 * ... seed --sy-scalar = 1380)
        let seed_cycles = backend
            .evaluate(&p, &seeds[0])
            .unwrap()
            .require_cycles()
            .unwrap();
        assert!(result.best_cycles <= seed_cycles);
    }
}
