//! Genetic fitting of personality-prompt mixture weights.
//!
//! A genome holds one gene in `[0, 1]` per persona. Decoded onto the simplex
//! it says how often each persona's vote is drawn, and its fitness is the mean
//! earth mover's similarity between the resulting mixture and the human vote
//! distribution over the training items.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{label_counts, VoteDistribution};
use crate::distmath::{emd_probs, ems_from_emd};
use crate::error::{Error, Result};
use crate::labels::LabelScheme;
use crate::prompting::{PersonaVotes, Trait};
use crate::seed::derive_seed;
use crate::split::{complement, kfold_indices};

pub const N_GENES: usize = Trait::ALL.len();

/// Raw genes, one per persona in [`Trait::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    genes: [f64; N_GENES],
}

impl WeightVector {
    /// Genes must be finite and nonnegative. The GA itself keeps them in
    /// `[0, 1]`, but decoding only needs nonnegativity.
    pub fn new(genes: [f64; N_GENES]) -> Result<Self> {
        if let Some(g) = genes.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::InvalidParameter(format!("gene {g} must be finite and >= 0")));
        }
        Ok(WeightVector { genes })
    }

    /// The P-EQ point.
    pub fn equal() -> Self {
        WeightVector { genes: [0.5; N_GENES] }
    }

    pub fn genes(&self) -> &[f64; N_GENES] {
        &self.genes
    }

    /// Projects onto the simplex: `w / sum(w)`, or uniform when every gene is zero.
    pub fn decode(&self) -> [f64; N_GENES] {
        let total: f64 = self.genes.iter().sum();
        if total <= 0.0 {
            return [1.0 / N_GENES as f64; N_GENES];
        }
        self.genes.map(|g| g / total)
    }

    /// Decoded weights keyed by trait code.
    pub fn by_trait(&self) -> BTreeMap<String, f64> {
        Trait::ALL
            .iter()
            .zip(self.decode())
            .map(|(t, w)| (t.code().to_string(), w))
            .collect()
    }
}

/// What each persona contributes to the mixture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureSource {
    /// The one-hot of the persona's majority vote.
    #[default]
    Majority,
    /// The persona's full sample distribution (ablation).
    Samples,
}

fn persona_rows(persona: &PersonaVotes, source: MixtureSource) -> Result<Vec<Vec<f64>>> {
    persona.validate()?;
    let k = persona.scheme.size();
    persona
        .traits
        .iter()
        .map(|tv| match source {
            MixtureSource::Majority => {
                let mut row = vec![0.0; k];
                row[tv.majority.index()] = 1.0;
                Ok(row)
            }
            MixtureSource::Samples => {
                let counts = label_counts(&tv.samples, persona.scheme)?;
                let n = tv.samples.len() as f64;
                Ok(counts.into_iter().map(|c| c as f64 / n).collect())
            }
        })
        .collect()
}

fn mix(decoded: &[f64; N_GENES], rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut probs = vec![0.0; k];
    for (w, row) in decoded.iter().zip(rows) {
        for (p, r) in probs.iter_mut().zip(row) {
            *p += w * r;
        }
    }
    probs
}

/// `sum_t decode(w)_t * onehot(majority_t)`.
pub fn mixture_distribution(
    weights: &WeightVector,
    persona: &PersonaVotes,
    scheme: LabelScheme,
) -> Result<VoteDistribution> {
    mixture_with_source(weights, persona, scheme, MixtureSource::Majority)
}

pub fn mixture_with_source(
    weights: &WeightVector,
    persona: &PersonaVotes,
    scheme: LabelScheme,
    source: MixtureSource,
) -> Result<VoteDistribution> {
    if persona.scheme != scheme {
        return Err(Error::SchemeMismatch {
            left: persona.scheme.to_string(),
            right: scheme.to_string(),
        });
    }
    let rows = persona_rows(persona, source)?;
    VoteDistribution::from_weights(scheme, mix(&weights.decode(), &rows, scheme.size()))
}

/// One training or test item: persona votes paired with the human distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FitItem {
    pub persona: PersonaVotes,
    pub human: VoteDistribution,
}

/// Joins persona votes and human distributions for `ids`, failing on any gap.
pub fn fit_items(
    ids: &[String],
    persona_by_item: &BTreeMap<String, PersonaVotes>,
    human_by_item: &BTreeMap<String, VoteDistribution>,
) -> Result<Vec<FitItem>> {
    ids.iter()
        .map(|id| {
            let persona = persona_by_item
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("no persona votes for item `{id}`")))?;
            let human = human_by_item
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("no human distribution for item `{id}`")))?;
            if persona.scheme != human.scheme() {
                return Err(Error::SchemeMismatch {
                    left: persona.scheme.to_string(),
                    right: human.scheme().to_string(),
                });
            }
            Ok(FitItem {
                persona: persona.clone(),
                human: human.clone(),
            })
        })
        .collect()
}

/// Items reduced to the numbers fitness needs.
struct Prepared {
    k: usize,
    items: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl Prepared {
    fn new(items: &[FitItem], source: MixtureSource) -> Result<Self> {
        let first = items
            .first()
            .ok_or(Error::EmptyInput("fitness needs at least one item"))?;
        let scheme = first.human.scheme();
        let items = items
            .iter()
            .map(|it| {
                if it.persona.scheme != scheme || it.human.scheme() != scheme {
                    return Err(Error::SchemeMismatch {
                        left: scheme.to_string(),
                        right: it.persona.scheme.to_string(),
                    });
                }
                Ok((persona_rows(&it.persona, source)?, it.human.probs().to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            k: scheme.size(),
            items,
        })
    }

    fn fitness(&self, weights: &WeightVector) -> f64 {
        let decoded = weights.decode();
        let mut total = 0.0;
        for (rows, human) in &self.items {
            let mut mixed = mix(&decoded, rows, self.k);
            let s: f64 = mixed.iter().sum();
            mixed.iter_mut().for_each(|p| *p /= s);
            // inputs are normalized by construction
            let d = emd_probs(&mixed, human).unwrap_or(f64::INFINITY);
            total += ems_from_emd(d);
        }
        total / self.items.len() as f64
    }
}

/// Mean EMS between the weighted mixture and the human distribution.
pub fn fitness(weights: &WeightVector, items: &[FitItem], source: MixtureSource) -> Result<f64> {
    Ok(Prepared::new(items, source)?.fitness(weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    Tournament { k: usize },
    RouletteWheel,
    Rank,
}

impl Selection {
    pub fn label(&self) -> String {
        match self {
            Selection::Tournament { k } => format!("tournament{k}"),
            Selection::RouletteWheel => "roulette_wheel".into(),
            Selection::Rank => "rank".into(),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Crossover {
    SinglePoint,
    TwoPoint,
    /// Each gene comes from the second parent with probability `p`.
    Uniform { p: f64 },
}

impl Crossover {
    pub fn label(&self) -> String {
        match self {
            Crossover::SinglePoint => "single_point".into(),
            Crossover::TwoPoint => "two_point".into(),
            Crossover::Uniform { p } => format!("uniform{p}"),
        }
    }
}

impl fmt::Display for Crossover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub generations: usize,
    pub population: usize,
    pub mating_parents: usize,
    pub selection: Selection,
    pub crossover: Crossover,
    pub mutation_rate: f64,
    pub seed: u64,
    pub source: MixtureSource,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            generations: 8,
            population: 256,
            mating_parents: 128,
            selection: Selection::Tournament { k: 4 },
            crossover: Crossover::Uniform { p: 0.5 },
            mutation_rate: 0.1,
            seed: 0,
            source: MixtureSource::Majority,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::GaConfig(m));
        if self.generations < 1 {
            return fail("generations must be >= 1".into());
        }
        if self.mating_parents < 2 || self.population < self.mating_parents {
            return fail(format!(
                "need population >= mating_parents >= 2, got {} and {}",
                self.population, self.mating_parents
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return fail(format!("mutation_rate {} outside [0, 1]", self.mutation_rate));
        }
        if let Selection::Tournament { k } = self.selection {
            if k < 1 {
                return fail("tournament size must be >= 1".into());
            }
        }
        if let Crossover::Uniform { p } = self.crossover {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("uniform crossover probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaRun {
    pub best: WeightVector,
    pub best_fitness: f64,
    /// Best fitness seen up to and including each generation.
    pub history: Vec<f64>,
}

/// Index of the fittest genome; ties go to the lowest index.
fn argmax(fitness: &[f64]) -> usize {
    let mut best = 0;
    for (i, f) in fitness.iter().enumerate() {
        if *f > fitness[best] {
            best = i;
        }
    }
    best
}

fn select_parents(
    selection: Selection,
    fitness: &[f64],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = fitness.len();
    match selection {
        Selection::Tournament { k } => (0..count)
            .map(|_| {
                let mut winner = rng.random_range(0..n);
                for _ in 1..k {
                    let c = rng.random_range(0..n);
                    if fitness[c] > fitness[winner] || (fitness[c] == fitness[winner] && c < winner) {
                        winner = c;
                    }
                }
                winner
            })
            .collect(),
        Selection::RouletteWheel => spin(fitness, count, rng),
        Selection::Rank => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)));
            let mut rank_weight = vec![0.0; n];
            for (r, &i) in order.iter().enumerate() {
                rank_weight[i] = (r + 1) as f64;
            }
            spin(&rank_weight, count, rng)
        }
    }
}

/// Sampling with replacement, probability proportional to `weights`.
fn spin(weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w.max(0.0);
        cumulative.push(acc);
    }
    (0..count)
        .map(|_| {
            if acc <= 0.0 {
                return rng.random_range(0..weights.len());
            }
            let target = rng.random::<f64>() * acc;
            cumulative
                .partition_point(|c| *c <= target)
                .min(weights.len() - 1)
        })
        .collect()
}

fn crossover(
    op: Crossover,
    a: &[f64; N_GENES],
    b: &[f64; N_GENES],
    rng: &mut ChaCha8Rng,
) -> [f64; N_GENES] {
    let mut child = *a;
    match op {
        Crossover::SinglePoint => {
            let cut = rng.random_range(1..N_GENES);
            child[cut..].copy_from_slice(&b[cut..]);
        }
        Crossover::TwoPoint => {
            let x = rng.random_range(1..N_GENES);
            let y = rng.random_range(1..N_GENES);
            let (lo, hi) = (x.min(y), x.max(y));
            child[lo..hi].copy_from_slice(&b[lo..hi]);
        }
        Crossover::Uniform { p } => {
            for (c, g) in child.iter_mut().zip(b) {
                if rng.random::<f64>() < p {
                    *c = *g;
                }
            }
        }
    }
    child
}

/// Evolves mixture weights on `items`.
///
/// The first genome of the initial population is the equal-weight point, so
/// the result is never worse than P-EQ. Selected parents survive unchanged
/// and the current best is always among them.
pub fn run_ga(config: &GaConfig, items: &[FitItem]) -> Result<GaRun> {
    config.validate()?;
    let prepared = Prepared::new(items, config.source)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut population: Vec<[f64; N_GENES]> = Vec::with_capacity(config.population);
    population.push(*WeightVector::equal().genes());
    while population.len() < config.population {
        population.push(std::array::from_fn(|_| rng.random::<f64>()));
    }
    let evaluate = |genomes: &[[f64; N_GENES]]| -> Vec<f64> {
        genomes
            .par_iter()
            .map(|g| prepared.fitness(&WeightVector { genes: *g }))
            .collect()
    };
    let mut fitness = evaluate(&population);

    let mut history = Vec::with_capacity(config.generations);
    let mut best_genes = population[0];
    let mut best_fitness = f64::NEG_INFINITY;

    for generation in 0..config.generations {
        let top = argmax(&fitness);
        if fitness[top] > best_fitness {
            best_fitness = fitness[top];
            best_genes = population[top];
        }
        history.push(best_fitness);
        log::debug!("generation {generation}: best fitness {best_fitness:.6}");
        if generation + 1 == config.generations {
            break;
        }

        let mut parents = select_parents(config.selection, &fitness, config.mating_parents, &mut rng);
        if !parents.contains(&top) {
            parents[0] = top;
        }

        let mut next: Vec<[f64; N_GENES]> = parents.iter().map(|&i| population[i]).collect();
        let mut next_fitness: Vec<f64> = parents.iter().map(|&i| fitness[i]).collect();
        let mut offspring = Vec::with_capacity(config.population - parents.len());
        while next.len() + offspring.len() < config.population {
            let a = &population[parents[rng.random_range(0..parents.len())]];
            let b = &population[parents[rng.random_range(0..parents.len())]];
            let mut child = crossover(config.crossover, a, b, &mut rng);
            for gene in child.iter_mut() {
                if rng.random::<f64>() < config.mutation_rate {
                    *gene = rng.random::<f64>();
                }
            }
            offspring.push(child);
        }
        next_fitness.extend(evaluate(&offspring));
        next.extend(offspring);
        population = next;
        fitness = next_fitness;
    }

    Ok(GaRun {
        best: WeightVector { genes: best_genes },
        best_fitness,
        history,
    })
}

/// Selection by crossover grid searched per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaGrid {
    pub selections: Vec<Selection>,
    pub crossovers: Vec<Crossover>,
}

impl Default for GaGrid {
    fn default() -> Self {
        GaGrid {
            selections: vec![
                Selection::Tournament { k: 4 },
                Selection::RouletteWheel,
                Selection::Rank,
            ],
            crossovers: vec![
                Crossover::SinglePoint,
                Crossover::TwoPoint,
                Crossover::Uniform { p: 0.5 },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaCell {
    pub selection: Selection,
    pub crossover: Crossover,
}

impl GaCell {
    pub fn label(&self) -> String {
        format!("{}/{}", self.selection, self.crossover)
    }
}

impl GaGrid {
    /// Cells in declared order: selections outer, crossovers inner.
    pub fn cells(&self) -> Vec<GaCell> {
        self.selections
            .iter()
            .flat_map(|&selection| {
                self.crossovers
                    .iter()
                    .map(move |&crossover| GaCell { selection, crossover })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: GaCell,
    pub train_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cell: GaCell,
    pub run: GaRun,
    pub test_ems: f64,
    /// Every cell's final training fitness, in grid order.
    pub cells: Vec<CellOutcome>,
}

/// Seed for one grid cell, derived from the base config's seed.
pub fn cell_seed(base_seed: u64, cell: &GaCell) -> u64 {
    derive_seed(base_seed, &["ga-cell", &cell.selection.label(), &cell.crossover.label()])
}

/// Runs the GA once per grid cell on `train`, keeps the cell with the
/// highest training fitness (first cell on ties) and scores it on `test`.
pub fn grid_search_ga(
    train: &[FitItem],
    test: &[FitItem],
    grid: &GaGrid,
    base: &GaConfig,
) -> Result<GridResult> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::GaConfig("GA grid has no cells".into()));
    }
    let runs = cells
        .par_iter()
        .map(|cell| {
            let config = GaConfig {
                selection: cell.selection,
                crossover: cell.crossover,
                seed: cell_seed(base.seed, cell),
                ..*base
            };
            run_ga(&config, train).map_err(|e| e.in_stage(format!("GA cell {}", cell.label())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut chosen = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.best_fitness > runs[chosen].best_fitness {
            chosen = i;
        }
    }
    let test_ems = fitness(&runs[chosen].best, test, base.source)?;
    let outcomes = cells
        .iter()
        .zip(&runs)
        .map(|(cell, run)| CellOutcome {
            cell: *cell,
            train_fitness: run.best_fitness,
        })
        .collect();
    Ok(GridResult {
        cell: cells[chosen],
        run: runs.into_iter().nth(chosen).expect("chosen index is in range"),
        test_ems,
        cells: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Seeded shuffle followed by contiguous chunking into `k` test folds.
///
/// Training ids keep the input order.
pub fn kfold_split(item_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut unique = item_ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != item_ids.len() {
        return Err(Error::InvalidInput("duplicate item ids in k-fold split".into()));
    }
    let folds = kfold_indices(item_ids.len(), k, seed)?
        .into_iter()
        .enumerate()
        .map(|(index, chunk)| Fold {
            index,
            test: chunk.iter().map(|&i| item_ids[i].clone()).collect(),
            train: complement(item_ids.len(), &chunk)
                .into_iter()
                .map(|i| item_ids[i].clone())
                .collect(),
        })
        .collect();
    Ok(FoldPlan { k, seed, folds })
}

/// One line of `weights.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsRecord {
    pub fold: usize,
    pub cell: CellLabels,
    /// Decoded weights keyed by trait code.
    pub weights: BTreeMap<String, f64>,
    /// Raw genes, kept so fitness can be recomputed bit for bit.
    pub genes: Vec<f64>,
    pub train_fitness: f64,
    pub test_ems: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabels {
    pub selection: String,
    pub crossover: String,
}

impl WeightsRecord {
    pub fn weight_vector(&self) -> Result<WeightVector> {
        let genes: [f64; N_GENES] = self.genes.as_slice().try_into().map_err(|_| {
            Error::InvalidInput(format!("fold {} has {} genes, expected {N_GENES}", self.fold, self.genes.len()))
        })?;
        WeightVector::new(genes)
    }

    pub fn from_grid(fold: usize, result: &GridResult) -> Self {
        WeightsRecord {
            fold,
            cell: CellLabels {
                selection: result.cell.selection.label(),
                crossover: result.cell.crossover.label(),
            },
            weights: result.run.best.by_trait(),
            genes: result.run.best.genes().to_vec(),
            train_fitness: result.run.best_fitness,
            test_ems: result.test_ems,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Label;
    use proptest::prelude::*;

    fn persona_with(item: &str, majorities: [Label; N_GENES]) -> PersonaVotes {
        let samples = Trait::ALL
            .iter()
            .zip(majorities)
            .map(|(t, l)| (*t, vec![l; 10]))
            .collect();
        PersonaVotes::from_samples(item, majorities[0].scheme(), samples).unwrap()
    }

    #[test]
    fn decode_examples() {
        let zero = WeightVector::new([0.0; N_GENES]).unwrap();
        assert_eq!(zero.decode(), [0.1; N_GENES]);
        let mut g = [0.0; N_GENES];
        g[0] = 2.0;
        g[1] = 1.0;
        let w = WeightVector::new(g).unwrap().decode();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(WeightVector::new([-0.1; N_GENES]).is_err());
    }

    #[test]
    fn mixture_examples() {
        use Label::*;
        let p = persona_with("i", [A, A, A, A, A, B, B, B, B, B]);
        let eq = mixture_distribution(&WeightVector::equal(), &p, LabelScheme::SixWay).unwrap();
        for (got, want) in eq.probs().iter().zip([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let p = persona_with("i", [A, B, C, D, E, F, A, B, C, D]);
        let mut g = [0.0; N_GENES];
        g[5] = 1.0;
        let single = mixture_distribution(&WeightVector::new(g).unwrap(), &p, LabelScheme::SixWay).unwrap();
        assert_eq!(single, VoteDistribution::onehot(F));

        let mut g = [0.0; N_GENES];
        g[0] = 2.0;
        g[1] = 1.0;
        let m = mixture_distribution(&WeightVector::new(g).unwrap(), &p, LabelScheme::SixWay).unwrap();
        let want = [2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0];
        for (got, w) in m.probs().iter().zip(want) {
            assert!((got - w).abs() < 1e-12);
        }

        let mut broken = p.clone();
        broken.traits.pop();
        assert!(matches!(
            mixture_distribution(&WeightVector::equal(), &broken, LabelScheme::SixWay),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn fitness_examples() {
        use Label::*;
        let p = persona_with("i", [A, A, A, A, A, B, B, B, B, B]);
        let same = FitItem {
            persona: p.clone(),
            human: VoteDistribution::new(LabelScheme::SixWay, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap(),
        };
        let eq = WeightVector::equal();
        assert!((fitness(&eq, &[same.clone()], MixtureSource::Majority).unwrap() - 1.0).abs() < 1e-12);
        // mixture [.5,.5,0..] vs [0,.5,.5,0..]: EMD 1
        let shifted = FitItem {
            persona: p,
            human: VoteDistribution::new(LabelScheme::SixWay, vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0]).unwrap(),
        };
        let one = fitness(&eq, &[shifted.clone()], MixtureSource::Majority).unwrap();
        assert!((one - 0.01).abs() < 1e-12);
        let two = fitness(&eq, &[same, shifted], MixtureSource::Majority).unwrap();
        assert!((two - 0.505).abs() < 1e-12);
        assert!(fitness(&eq, &[], MixtureSource::Majority).is_err());
    }

    #[test]
    fn fit_items_reports_missing() {
        let ids = vec!["x".to_string()];
        let err = fit_items(&ids, &BTreeMap::new(), &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = [
            GaConfig { generations: 0, ..GaConfig::default() },
            GaConfig { mating_parents: 1, population: 1, ..GaConfig::default() },
            GaConfig { mating_parents: 300, ..GaConfig::default() },
            GaConfig { mutation_rate: 1.5, ..GaConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::GaConfig(_))), "{c:?}");
        }
    }

    fn small_items() -> Vec<FitItem> {
        use Label::*;
        let majorities = [
            [A, B, C, D, E, F, A, B, C, D],
            [F, E, D, C, B, A, F, E, D, C],
            [C, C, A, F, E, B, D, A, B, F],
        ];
        majorities
            .iter()
            .enumerate()
            .map(|(i, m)| FitItem {
                persona: persona_with(&format!("i{i}"), *m),
                human: VoteDistribution::new(LabelScheme::SixWay, vec![0.1, 0.1, 0.3, 0.3, 0.1, 0.1]).unwrap(),
            })
            .collect()
    }

    #[test]
    fn run_ga_is_deterministic_and_monotone() {
        let items = small_items();
        let config = GaConfig {
            population: 32,
            mating_parents: 16,
            seed: 9,
            ..GaConfig::default()
        };
        let a = run_ga(&config, &items).unwrap();
        let b = run_ga(&config, &items).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 8);
        assert!(a.history.windows(2).all(|w| w[0] <= w[1]));
        let peq = fitness(&WeightVector::equal(), &items, MixtureSource::Majority).unwrap();
        assert!(a.best_fitness >= peq);
        assert_eq!(a.best_fitness, fitness(&a.best, &items, MixtureSource::Majority).unwrap());
    }

    #[test]
    fn run_ga_independent_of_thread_count() {
        let items = small_items();
        let config = GaConfig {
            population: 40,
            mating_parents: 10,
            selection: Selection::Rank,
            crossover: Crossover::TwoPoint,
            seed: 4,
            ..GaConfig::default()
        };
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| run_ga(&config, &items).unwrap());
        let b = wide.install(|| run_ga(&config, &items).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn grid_search_contract() {
        let items = small_items();
        let base = GaConfig {
            population: 16,
            mating_parents: 8,
            generations: 3,
            seed: 2,
            ..GaConfig::default()
        };
        let grid = GaGrid::default();
        let result = grid_search_ga(&items, &items[..1], &grid, &base).unwrap();
        assert_eq!(result.cells.len(), 9);
        assert!(result.cells.iter().all(|c| c.train_fitness <= result.run.best_fitness));
        let first_best = result
            .cells
            .iter()
            .find(|c| c.train_fitness == result.run.best_fitness)
            .unwrap();
        assert_eq!(first_best.cell, result.cell);

        let single = GaGrid {
            selections: vec![Selection::Rank],
            crossovers: vec![Crossover::SinglePoint],
        };
        let one = grid_search_ga(&items, &items, &single, &base).unwrap();
        let cell = single.cells()[0];
        let direct = run_ga(
            &GaConfig {
                selection: cell.selection,
                crossover: cell.crossover,
                seed: cell_seed(base.seed, &cell),
                ..base
            },
            &items,
        )
        .unwrap();
        assert_eq!(one.run, direct);
        let empty = GaGrid {
            selections: vec![],
            crossovers: vec![Crossover::TwoPoint],
        };
        assert!(grid_search_ga(&items, &items, &empty, &base).is_err());
    }

    #[test]
    fn kfold_examples() {
        let ids: Vec<String> = (0..45).map(|i| format!("item{i:02}")).collect();
        let plan = kfold_split(&ids, 5, 11).unwrap();
        assert!(plan.folds.iter().all(|f| f.test.len() == 9 && f.train.len() == 36));
        let mut all: Vec<String> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort();
        assert_eq!(all, ids);
        assert_eq!(plan, kfold_split(&ids, 5, 11).unwrap());
        assert!(kfold_split(&ids[..3], 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn decode_lies_on_simplex(genes in prop::array::uniform10(0.0f64..1.0), zero_mask in 0u16..1024) {
            let mut g = genes;
            for (i, v) in g.iter_mut().enumerate() {
                if zero_mask & (1 << i) != 0 { *v = 0.0; }
            }
            let d = WeightVector::new(g).unwrap().decode();
            prop_assert!(d.iter().all(|w| *w >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn kfold_is_balanced_partition(n in 2usize..80, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
            let plan = kfold_split(&ids, k, seed).unwrap();
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<String> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
            all.sort();
            let mut want = ids.clone();
            want.sort();
            prop_assert_eq!(all, want);
            for f in &plan.folds {
                prop_assert_eq!(f.train.len() + f.test.len(), n);
            }
        }

        #[test]
        fn mixture_is_linear_in_decoded_weights(
            a in prop::array::uniform10(0.01f64..1.0),
            b in prop::array::uniform10(0.01f64..1.0),
            t in 0.0f64..1.0,
        ) {
            use Label::*;
            let p = persona_with("i", [A, B, C, D, E, F, A, C, E, B]);
            let (wa, wb) = (WeightVector::new(a).unwrap(), WeightVector::new(b).unwrap());
            let (da, db) = (wa.decode(), wb.decode());
            let blend: [f64; N_GENES] = std::array::from_fn(|i| t * da[i] + (1.0 - t) * db[i]);
            let mb = mixture_distribution(&WeightVector::new(blend).unwrap(), &p, LabelScheme::SixWay).unwrap();
            let ma = mixture_distribution(&wa, &p, LabelScheme::SixWay).unwrap();
            let mbb = mixture_distribution(&wb, &p, LabelScheme::SixWay).unwrap();
            for i in 0..6 {
                let lin = t * ma.probs()[i] + (1.0 - t) * mbb.probs()[i];
                prop_assert!((mb.probs()[i] - lin).abs() < 1e-12);
            }
        }
    }
}
