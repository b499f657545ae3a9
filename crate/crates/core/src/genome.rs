//! Binary chromosomes, the population matrix, the fitness table and the genetic
//! operators.
//!
//! A chromosome holds one bit per unit of the actor's gated hidden layer. The
//! population matrix stacks `N` chromosomes; row `i` gates the policy of actor
//! `i`. Reproduction uses strong elitism: the elite row is carried over
//! bit-exactly and never crossed or mutated.

use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chromosome {
    genes: Vec<bool>,
}

impl Chromosome {
    pub fn new(genes: Vec<bool>) -> Self {
        Self { genes }
    }

    pub fn ones(len: usize) -> Self {
        Self::new(vec![true; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![false; len])
    }

    /// Each gene independently open with probability `keep_prob`.
    pub fn random<R: Rng + ?Sized>(len: usize, keep_prob: f64, rng: &mut R) -> Self {
        Self::new((0..len).map(|_| rng.random_bool(keep_prob)).collect())
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn genes(&self) -> &[bool] {
        &self.genes
    }

    pub fn count_ones(&self) -> usize {
        self.genes.iter().filter(|&&g| g).count()
    }

    /// The gate vector multiplied into the gated hidden layer.
    pub fn to_gate(&self) -> Vec<f64> {
        self.genes.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect()
    }

    pub fn hamming(&self, other: &Chromosome) -> usize {
        self.genes.iter().zip(&other.genes).filter(|(a, b)| a != b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneticConfig {
    pub population_size: usize,
    pub keep_prob: f64,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub num_parents: usize,
}

impl GeneticConfig {
    /// Truncation size used when none is configured: a quarter of the
    /// population, never fewer than two.
    pub fn default_num_parents(population_size: usize) -> usize {
        (population_size / 4).max(2).min(population_size.max(1))
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, p) in [
            ("keep_prob", self.keep_prob),
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("`{name}` = {p} must lie in [0, 1]"));
            }
        }
        if self.population_size < 1 {
            errs.push("`population_size` must be at least 1".to_string());
        }
        if self.population_size >= 2 && (self.num_parents < 2 || self.num_parents > self.population_size) {
            errs.push(format!(
                "`num_parents` = {} must lie in [2, population_size = {}]",
                self.num_parents, self.population_size
            ));
        }
        errs
    }
}

/// The `N x G` matrix of chromosomes plus the designated elite row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    rows: Vec<Chromosome>,
    elite: usize,
}

impl Population {
    /// Builds a population from explicit rows. All rows must share one length.
    pub fn from_rows(rows: Vec<Chromosome>, elite: usize) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::config("population_size", "must be at least 1"));
        };
        let width = first.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::shape(format!(
                "population row {bad} has {} genes, row 0 has {width}",
                rows[bad].len()
            )));
        }
        if elite >= rows.len() {
            return Err(Error::IndexOutOfRange {
                index: elite,
                len: rows.len(),
            });
        }
        Ok(Self { rows, elite })
    }

    /// Degenerate population with every gate open.
    pub fn all_ones(n: usize, width: usize) -> Self {
        Self {
            rows: vec![Chromosome::ones(width); n.max(1)],
            elite: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Chromosome] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Chromosome {
        &self.rows[i]
    }

    pub fn elite(&self) -> usize {
        self.elite
    }

    pub fn elite_chromosome(&self) -> &Chromosome {
        &self.rows[self.elite]
    }

    pub fn set_elite(&mut self, elite: usize) -> Result<()> {
        if elite >= self.rows.len() {
            return Err(Error::IndexOutOfRange {
                index: elite,
                len: self.rows.len(),
            });
        }
        self.elite = elite;
        Ok(())
    }

    /// Fraction of open gates over the whole matrix.
    pub fn open_fraction(&self) -> f64 {
        let ones: usize = self.rows.iter().map(Chromosome::count_ones).sum();
        ones as f64 / (self.rows.len() * self.width()) as f64
    }

    pub fn snapshot(&self, generation: usize) -> PopulationSnapshot {
        PopulationSnapshot {
            generation,
            elite: self.elite,
            rows: self
                .rows
                .iter()
                .map(|r| r.genes().iter().map(|&g| u8::from(g)).collect())
                .collect(),
        }
    }
}

/// JSON form of a population: `{"generation", "elite", "rows": [[0|1, ...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSnapshot {
    pub generation: usize,
    pub elite: usize,
    pub rows: Vec<Vec<u8>>,
}

impl PopulationSnapshot {
    pub fn to_population(&self) -> Result<Population> {
        let mut rows = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let genes = row
                .iter()
                .map(|&g| match g {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Artifact(format!(
                        "population row {i} holds gene value {other}; genes must be 0 or 1"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(Chromosome::new(genes));
        }
        Population::from_rows(rows, self.elite)
    }
}

/// Initial population: every gene independently open with probability
/// `keep_prob`; row 0 is the first elite.
pub fn init_population<R: Rng + ?Sized>(n: usize, width: usize, keep_prob: f64, rng: &mut R) -> Result<Population> {
    if n < 1 {
        return Err(Error::config("population_size", "must be at least 1"));
    }
    if width < 1 {
        return Err(Error::config("gated layer width", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&keep_prob) {
        return Err(Error::config("keep_prob", format!("= {keep_prob} must lie in [0, 1]")));
    }
    let rows = (0..n).map(|_| Chromosome::random(width, keep_prob, rng)).collect();
    Ok(Population { rows, elite: 0 })
}

/// Completed-episode returns per individual for the current generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitnessTable {
    scores: Vec<Vec<f64>>,
}

impl FitnessTable {
    pub fn new(n: usize) -> Self {
        Self {
            scores: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn record(&mut self, individual: usize, episode_return: f64) -> Result<()> {
        let len = self.scores.len();
        let slot = self
            .scores
            .get_mut(individual)
            .ok_or(Error::IndexOutOfRange { index: individual, len })?;
        slot.push(episode_return);
        Ok(())
    }

    pub fn scores(&self, individual: usize) -> &[f64] {
        &self.scores[individual]
    }

    pub fn episodes(&self, individual: usize) -> usize {
        self.scores[individual].len()
    }

    pub fn min_episodes(&self) -> usize {
        self.scores.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Mean episodic score, `None` while the individual has no completed episode.
    pub fn fitness(&self, individual: usize) -> Option<f64> {
        let s = &self.scores[individual];
        if s.is_empty() {
            None
        } else {
            Some(s.iter().sum::<f64>() / s.len() as f64)
        }
    }

    pub fn fitness_vector(&self) -> Vec<Option<f64>> {
        (0..self.scores.len()).map(|i| self.fitness(i)).collect()
    }

    pub fn clear(&mut self) {
        self.scores.iter_mut().for_each(Vec::clear);
    }
}

/// Argmax of fitness over individuals with a defined fitness.
///
/// Ties keep `current_elite`, then fall to the lowest index. Returns
/// `current_elite` (with a warning) when no fitness is defined.
pub fn elite_index(table: &FitnessTable, current_elite: usize) -> usize {
    let fitness = table.fitness_vector();
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in fitness.iter().enumerate() {
        let Some(f) = *f else { continue };
        match best {
            None => best = Some((i, f)),
            Some((_, bf)) if f > bf => best = Some((i, f)),
            _ => {}
        }
    }
    match best {
        None => {
            warn!("no individual completed an episode this generation; elite {current_elite} retained");
            current_elite
        }
        Some((idx, bf)) => match fitness.get(current_elite).copied().flatten() {
            Some(cf) if cf == bf => current_elite,
            _ => idx,
        },
    }
}

/// Truncation selection: the `num_parents` fittest individuals, fittest first,
/// ties by ascending index. Clamped to the number of defined fitnesses.
pub fn select_parents(table: &FitnessTable, num_parents: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = table
        .fitness_vector()
        .into_iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|f| (i, f)))
        .collect();
    // stable sort keeps ascending index among equal fitness
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(num_parents);
    ranked.into_iter().map(|(i, _)| i).collect()
}

/// Per-gene parent choice for a uniform crossover: `true` takes the gene from `a`.
pub fn crossover_mask<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| rng.random_bool(0.5)).collect()
}

pub fn crossover_with_mask(a: &Chromosome, b: &Chromosome, mask: &[bool]) -> Result<Chromosome> {
    if a.len() != b.len() || a.len() != mask.len() {
        return Err(Error::shape(format!(
            "crossover of chromosomes with lengths {} and {} (mask {})",
            a.len(),
            b.len(),
            mask.len()
        )));
    }
    let genes = mask
        .iter()
        .zip(a.genes().iter().zip(b.genes()))
        .map(|(&from_a, (&ga, &gb))| if from_a { ga } else { gb })
        .collect();
    Ok(Chromosome::new(genes))
}

/// Uniform crossover: each child gene comes from `a` or `b` with probability 0.5.
pub fn crossover<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> Result<Chromosome> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "crossover of chromosomes with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mask = crossover_mask(a.len(), rng);
    crossover_with_mask(a, b, &mask)
}

/// Flips each gene independently with probability `mutation_prob`.
pub fn mutate<R: Rng + ?Sized>(c: &Chromosome, mutation_prob: f64, rng: &mut R) -> Chromosome {
    let genes = c.genes().iter().map(|&g| g ^ rng.random_bool(mutation_prob)).collect();
    Chromosome::new(genes)
}

/// How one non-elite row of the next generation was produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offspring {
    pub row: usize,
    pub first_parent: usize,
    pub second_parent: Option<usize>,
    pub crossed: bool,
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub population: Population,
    pub elite: usize,
    pub parents: Vec<usize>,
    pub offspring: Vec<Offspring>,
    /// No individual had a defined fitness; the previous population was kept.
    pub retained: bool,
}

/// Builds the next generation.
///
/// The elite (argmax fitness) keeps its row unchanged. A non-elite row that
/// is itself a selected parent acts as its own first parent; any other row
/// draws its first parent uniformly from the selected parents. The second
/// parent is a distinct selected parent drawn uniformly. With probability
/// `crossover_prob` the child is their uniform crossover, else a copy of the
/// first parent; either way the child is then mutated.
pub fn next_generation<R: Rng + ?Sized>(
    pop: &Population,
    table: &FitnessTable,
    cfg: &GeneticConfig,
    rng: &mut R,
) -> Result<Reproduction> {
    if table.len() != pop.len() {
        return Err(Error::shape(format!(
            "fitness table has {} rows, population has {}",
            table.len(),
            pop.len()
        )));
    }
    let parents = select_parents(table, cfg.num_parents);
    if parents.is_empty() {
        warn!("all fitness values undefined; population retained");
        return Ok(Reproduction {
            population: pop.clone(),
            elite: pop.elite(),
            parents,
            offspring: Vec::new(),
            retained: true,
        });
    }
    let elite = elite_index(table, pop.elite());

    let mut rows = pop.rows().to_vec();
    let mut offspring = Vec::with_capacity(pop.len().saturating_sub(1));
    for (row, slot) in rows.iter_mut().enumerate() {
        if row == elite {
            continue;
        }
        let first = if parents.contains(&row) {
            row
        } else {
            *parents.choose(rng).expect("non-empty parents")
        };
        let partners: Vec<usize> = parents.iter().copied().filter(|&p| p != first).collect();
        let second = partners.choose(rng).copied();
        let crossed = second.is_some() && rng.random_bool(cfg.crossover_prob);
        let child = match (crossed, second) {
            (true, Some(s)) => crossover(pop.row(first), pop.row(s), rng)?,
            _ => pop.row(first).clone(),
        };
        *slot = mutate(&child, cfg.mutation_prob, rng);
        offspring.push(Offspring {
            row,
            first_parent: first,
            second_parent: second,
            crossed,
        });
    }
    Ok(Reproduction {
        population: Population { rows, elite },
        elite,
        parents,
        offspring,
        retained: false,
    })
}

/// Ablation: every non-elite row replaced by a fresh random gate at
/// `keep_prob`; the best-scoring row of the finished generation stays elite.
pub fn random_regeneration<R: Rng + ?Sized>(
    pop: &Population,
    table: &FitnessTable,
    keep_prob: f64,
    rng: &mut R,
) -> Result<Reproduction> {
    if table.len() != pop.len() {
        return Err(Error::shape(format!(
            "fitness table has {} rows, population has {}",
            table.len(),
            pop.len()
        )));
    }
    let retained = table.fitness_vector().iter().all(Option::is_none);
    let elite = elite_index(table, pop.elite());
    let width = pop.width();
    let rows = (0..pop.len())
        .map(|i| {
            if i == elite {
                pop.row(i).clone()
            } else {
                Chromosome::random(width, keep_prob, rng)
            }
        })
        .collect();
    Ok(Reproduction {
        population: Population { rows, elite },
        elite,
        parents: vec![elite],
        offspring: Vec::new(),
        retained,
    })
}
