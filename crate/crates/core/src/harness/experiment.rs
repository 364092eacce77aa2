//! Fitting, evaluation, classical baselines, dataset statistics and the
//! report they add up to. Everything here is a pure function of its inputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{
    gold_label, majority_label, ordinal_mean, ordinal_variance, to_distribution, Item, ItemType, Phase,
    VoteDistribution, VoteSet,
};
use crate::distmath::{baseline_distribution, ems, BaselineSpec};
use crate::error::{Error, Result};
use crate::ga::{
    fit_items, fitness, grid_search_ga, kfold_split, mixture_with_source, CellLabels, CellOutcome, FitItem,
    FoldPlan, GaConfig, WeightVector, WeightsRecord,
};
use crate::labels::{Label, LabelScheme};
use crate::ml::{grid_search_cv, Family, Matrix, Metric, RidgeModel, Task};
use crate::prompting::{ModelVotes, PersonaVotes};
use crate::seed::derive_seed;
use crate::split::kfold_indices;
use crate::survey::{ParticipantRecord, QcDecision};
use crate::text::{extract_base_features, EncodeMode, Encoder, FeatureVector, Lexicon, NgramLM};

use super::stats::{feature_tau_matrix, label_histogram_delta, label_shift_flows, participant_votes, FlowMatrix, HistogramDelta, TauMatrix};
use super::{Encoding, ExperimentConfig};

/// Seed of the shared k-fold plan.
pub fn fold_seed(seed: u64) -> u64 {
    derive_seed(seed, &["folds"])
}

/// Seed of the GA runs of one fold.
pub fn ga_fold_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, &["ga-fold", &fold.to_string()])
}

/// Items, votes and features joined per item, ready for fitting.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub scheme: LabelScheme,
    pub phase: Phase,
    /// Evaluated items in input order; attention checks are left out.
    pub ids: Vec<String>,
    pub items: BTreeMap<String, Item>,
    /// Human votes for the configured phase, in `scheme`.
    pub human: BTreeMap<String, VoteSet>,
    pub human_dist: BTreeMap<String, VoteDistribution>,
    /// Six-way human votes for both phases, keyed by (item, phase).
    pub human_six: BTreeMap<(String, Phase), VoteSet>,
    pub persona: BTreeMap<String, PersonaVotes>,
    pub base: BTreeMap<String, Vec<Label>>,
    pub features: BTreeMap<String, FeatureVector>,
}

impl ExperimentData {
    /// Joins the inputs. Every non-check item needs human votes for `phase`
    /// and persona votes; base votes are needed when `need_base` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        items: &[Item],
        human_votes: &[VoteSet],
        model_votes: BTreeMap<String, ModelVotes>,
        scheme: LabelScheme,
        phase: Phase,
        need_base: bool,
        lm: &NgramLM,
        lexicon: &Lexicon,
    ) -> Result<Self> {
        crate::data::validate_items(items)?;
        let mut human_six = BTreeMap::new();
        for v in human_votes {
            if v.scheme != LabelScheme::SixWay {
                return Err(Error::SchemeMismatch {
                    left: LabelScheme::SixWay.to_string(),
                    right: v.scheme.to_string(),
                });
            }
            if human_six.insert((v.item_id.clone(), v.phase), v.clone()).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate human votes for `{}` phase {}",
                    v.item_id, v.phase
                )));
            }
        }
        let known: BTreeSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
        if let Some((id, _)) = human_six.keys().find(|(id, _)| !known.contains(id.as_str())) {
            return Err(Error::InvalidInput(format!("human votes for unknown item `{id}`")));
        }
        if let Some(id) = model_votes.keys().find(|id| !known.contains(id.as_str())) {
            return Err(Error::InvalidInput(format!("model votes for unknown item `{id}`")));
        }

        let mut data = ExperimentData {
            scheme,
            phase,
            ids: Vec::new(),
            items: BTreeMap::new(),
            human: BTreeMap::new(),
            human_dist: BTreeMap::new(),
            human_six,
            persona: BTreeMap::new(),
            base: BTreeMap::new(),
            features: BTreeMap::new(),
        };
        let mut missing = Vec::new();
        for item in items.iter().filter(|i| i.item_type != ItemType::AttentionCheck) {
            let id = &item.id;
            let votes = data.human_six.get(&(id.clone(), phase)).filter(|v| !v.votes.is_empty());
            let model = model_votes.get(id);
            let persona = model.and_then(|m| m.persona.as_ref());
            let base = model.and_then(|m| m.base.as_ref());
            let (Some(votes), Some(persona)) = (votes, persona) else {
                missing.push(format!(
                    "{id} ({})",
                    match (votes.is_some(), persona.is_some()) {
                        (false, false) => "no human or persona votes",
                        (false, true) => "no human votes",
                        _ => "no persona votes",
                    }
                ));
                continue;
            };
            if need_base && base.is_none() {
                missing.push(format!("{id} (no base votes)"));
                continue;
            }
            if persona.scheme != scheme {
                return Err(Error::SchemeMismatch {
                    left: scheme.to_string(),
                    right: persona.scheme.to_string(),
                });
            }
            let human = votes.in_scheme(scheme)?;
            data.human_dist.insert(id.clone(), to_distribution(&human)?);
            data.human.insert(id.clone(), human);
            data.persona.insert(id.clone(), persona.clone());
            if let Some(b) = base {
                data.base.insert(id.clone(), b.clone());
            }
            data.features.insert(
                id.clone(),
                extract_base_features(item, lm, lexicon).map_err(|e| e.in_stage(format!("features of `{id}`")))?,
            );
            data.items.insert(id.clone(), item.clone());
            data.ids.push(id.clone());
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!("incomplete inputs: {}", missing.join(", "))));
        }
        if data.ids.is_empty() {
            return Err(Error::EmptyInput("no items to evaluate"));
        }
        Ok(data)
    }

    fn fit_items(&self, ids: &[String]) -> Result<Vec<FitItem>> {
        fit_items(ids, &self.persona, &self.human_dist)
    }
}

/// GA output for all folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub plan: FoldPlan,
    pub weights: Vec<WeightsRecord>,
    pub details: Vec<FoldFit>,
}

/// Per-fold search trace: every grid cell's training fitness and the
/// chosen run's best fitness per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub fold: usize,
    pub cells: Vec<CellOutcome>,
    pub history: Vec<f64>,
}

pub fn fit(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<FitOutput> {
    let plan = kfold_split(&data.ids, cfg.folds, fold_seed(cfg.seed)).map_err(|e| e.in_stage("k-fold split"))?;
    let mut weights = Vec::new();
    let mut details = Vec::new();
    for fold in &plan.folds {
        let stage = |e: Error| e.in_stage(format!("fit fold {}", fold.index));
        let train = data.fit_items(&fold.train).map_err(stage)?;
        let test = data.fit_items(&fold.test).map_err(stage)?;
        let base = GaConfig {
            seed: ga_fold_seed(cfg.seed, fold.index),
            ..cfg.ga
        };
        let result = grid_search_ga(&train, &test, &cfg.ga_grid, &base).map_err(stage)?;
        log::info!(
            "fold {}: cell {} train {:.4} test {:.4}",
            fold.index,
            result.cell.label(),
            result.run.best_fitness,
            result.test_ems
        );
        weights.push(WeightsRecord::from_grid(fold.index, &result));
        details.push(FoldFit {
            fold: fold.index,
            cells: result.cells.clone(),
            history: result.run.history.clone(),
        });
    }
    Ok(FitOutput { plan, weights, details })
}

/// Metric values of one fold keyed by method name.
pub type Scores = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEval {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub cell: CellLabels,
    pub weights: BTreeMap<String, f64>,
    /// Mean EMS on the training items.
    pub train_ems: Scores,
    /// Mean EMS on the test items.
    pub test_ems: Scores,
    /// Gold-label accuracy on the test items.
    pub accuracy: Scores,
    /// RMSE of predicted vote variance on the test items.
    pub variance_rmse: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub train_ems: Scores,
    pub test_ems: Scores,
    pub accuracy: Scores,
    pub variance_rmse: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub scheme: LabelScheme,
    pub phase: Phase,
    pub folds: Vec<FoldEval>,
    /// Means over folds.
    pub summary: EvalSummary,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Label with the highest probability, first on ties.
fn argmax_label(d: &VoteDistribution) -> Label {
    let probs = d.probs();
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    d.scheme().labels()[best]
}

fn mean_ems<'a>(pairs: impl Iterator<Item = (VoteDistribution, &'a VoteDistribution)>) -> Result<f64> {
    let scores = pairs.map(|(p, h)| ems(&p, h)).collect::<Result<Vec<_>>>()?;
    Ok(mean(&scores))
}

fn rmse(pairs: &[(f64, f64)]) -> f64 {
    (pairs.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// Predicts each test item's human mean and spread from its base features
/// with two ridge fits on the training items.
fn parametric_baseline(
    data: &ExperimentData,
    train: &[String],
    test: &[String],
    lambda: f64,
) -> Result<Vec<VoteDistribution>> {
    let rows = |ids: &[String]| -> Result<Matrix> {
        Matrix::from_rows(&ids.iter().map(|id| data.features[id].to_vec()).collect::<Vec<_>>())
    };
    let (xtr, xte) = (rows(train)?, rows(test)?);
    let means: Vec<f64> = train.iter().map(|id| data.human_dist[id].mean_ordinal()).collect();
    let stds: Vec<f64> = train.iter().map(|id| data.human_dist[id].variance_ordinal().sqrt()).collect();
    // features span very different ranges, so standardize before the penalty
    let scaler = crate::ml::Standardizer::fit(&xtr);
    let (xtr, xte) = (scaler.transform(&xtr), scaler.transform(&xte));
    let m = RidgeModel::fit(&xtr, &means, lambda, true)?.predict(&xte)?;
    let s = RidgeModel::fit(&xtr, &stds, lambda, true)?.predict(&xte)?;
    m.into_iter()
        .zip(s)
        .map(|(mean, std)| {
            baseline_distribution(
                BaselineSpec::NormalAroundStats {
                    mean,
                    std: std.max(0.0),
                },
                data.scheme,
            )
        })
        .collect()
}

/// Scores every method on every fold, recomputing P-GA from the stored genes.
pub fn evaluate(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    plan: &FoldPlan,
    weights: &[WeightsRecord],
) -> Result<EvalOutput> {
    let planned: BTreeSet<&String> = plan.folds.iter().flat_map(|f| &f.test).collect();
    let have: BTreeSet<&String> = data.ids.iter().collect();
    if planned != have {
        return Err(Error::Config("fold plan does not cover the same items as the inputs; rerun fit-ga".into()));
    }
    if weights.len() != plan.folds.len() {
        return Err(Error::Config(format!(
            "{} weight records for {} folds",
            weights.len(),
            plan.folds.len()
        )));
    }
    let scheme = data.scheme;
    let source = cfg.ga.source;
    let baselines = cfg.baselines;
    let mut folds = Vec::new();
    for (fold, rec) in plan.folds.iter().zip(weights) {
        if rec.fold != fold.index {
            return Err(Error::Config(format!("weights record {} out of order", rec.fold)));
        }
        let stage = |e: Error| e.in_stage(format!("eval fold {}", fold.index));
        let train = data.fit_items(&fold.train).map_err(stage)?;
        let test = data.fit_items(&fold.test).map_err(stage)?;
        let w = rec.weight_vector().map_err(stage)?;
        let eq = WeightVector::equal();

        let mut train_ems = Scores::new();
        let ga_train = fitness(&w, &train, source).map_err(stage)?;
        if ga_train.to_bits() != rec.train_fitness.to_bits() {
            return Err(Error::InvalidInput(format!(
                "fold {}: stored training fitness {} differs from recomputed {ga_train}",
                fold.index, rec.train_fitness
            )));
        }
        train_ems.insert("p_ga".into(), ga_train);
        train_ems.insert("p_eq".into(), fitness(&eq, &train, source).map_err(stage)?);

        let mut test_ems = Scores::new();
        test_ems.insert("p_ga".into(), fitness(&w, &test, source).map_err(stage)?);
        test_ems.insert("p_eq".into(), fitness(&eq, &test, source).map_err(stage)?);
        let human = |id: &String| &data.human_dist[id];
        let base_dist = |id: &String| VoteDistribution::from_labels(&data.base[id], scheme);
        if baselines.base_prompting {
            let d = fold.test.iter().map(|id| Ok((base_dist(id)?, human(id)))).collect::<Result<Vec<_>>>()?;
            test_ems.insert("base".into(), mean_ems(d.into_iter()).map_err(stage)?);
        }
        if baselines.uniform {
            let u = VoteDistribution::uniform(scheme);
            test_ems.insert(
                "uniform".into(),
                mean_ems(fold.test.iter().map(|id| (u.clone(), human(id)))).map_err(stage)?,
            );
        }
        if baselines.normal {
            // one normal fitted to all training votes pooled together
            let pooled: Vec<f64> = fold
                .train
                .iter()
                .flat_map(|id| data.human[id].votes.iter().map(|l| (l.index() + 1) as f64))
                .collect();
            let mu = mean(&pooled);
            let sd = (pooled.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / pooled.len() as f64).sqrt();
            let d = baseline_distribution(BaselineSpec::NormalAroundStats { mean: mu, std: sd }, scheme)?;
            test_ems.insert(
                "normal".into(),
                mean_ems(fold.test.iter().map(|id| (d.clone(), human(id)))).map_err(stage)?,
            );
        }
        if baselines.ml_parametric {
            let preds =
                parametric_baseline(data, &fold.train, &fold.test, cfg.ml.parametric_lambda).map_err(stage)?;
            test_ems.insert(
                "ml_parametric".into(),
                mean_ems(preds.into_iter().zip(fold.test.iter().map(human))).map_err(stage)?,
            );
        }

        let gold = |id: &String| gold_label(&data.human[id]);
        let mixture = |wv: &WeightVector, id: &String| mixture_with_source(wv, &data.persona[id], scheme, source);
        let acc = |pred: &dyn Fn(&String) -> Result<Label>| -> Result<f64> {
            let mut hits = 0;
            for id in &fold.test {
                if pred(id)? == gold(id)? {
                    hits += 1;
                }
            }
            Ok(hits as f64 / fold.test.len() as f64)
        };
        let mut accuracy = Scores::new();
        accuracy.insert("p_ga".into(), acc(&|id| Ok(argmax_label(&mixture(&w, id)?)))?);
        accuracy.insert("p_eq".into(), acc(&|id| Ok(argmax_label(&mixture(&eq, id)?)))?);
        if baselines.base_prompting {
            accuracy.insert("base".into(), acc(&|id| majority_label(&data.base[id], scheme))?);
        }
        let train_gold = fold.train.iter().map(gold).collect::<Result<Vec<_>>>()?;
        let majority = majority_label(&train_gold, scheme)?;
        accuracy.insert("majority_class".into(), acc(&|_| Ok(majority))?);

        let truth = |id: &String| ordinal_variance(&data.human[id]);
        let var_rmse = |pred: &dyn Fn(&String) -> Result<f64>| -> Result<f64> {
            let pairs = fold.test.iter().map(|id| Ok((pred(id)?, truth(id)?))).collect::<Result<Vec<_>>>()?;
            Ok(rmse(&pairs))
        };
        let mut variance_rmse = Scores::new();
        variance_rmse.insert("p_ga".into(), var_rmse(&|id| Ok(mixture(&w, id)?.variance_ordinal()))?);
        variance_rmse.insert("p_eq".into(), var_rmse(&|id| Ok(mixture(&eq, id)?.variance_ordinal()))?);
        if baselines.base_prompting {
            variance_rmse.insert("base".into(), var_rmse(&|id| Ok(base_dist(id)?.variance_ordinal()))?);
        }
        let train_var = fold.train.iter().map(truth).collect::<Result<Vec<_>>>()?;
        let (mv, md) = (mean(&train_var), median(&train_var));
        variance_rmse.insert("mean".into(), var_rmse(&|_| Ok(mv))?);
        variance_rmse.insert("median".into(), var_rmse(&|_| Ok(md))?);

        folds.push(FoldEval {
            fold: fold.index,
            n_train: fold.train.len(),
            n_test: fold.test.len(),
            cell: rec.cell.clone(),
            weights: rec.weights.clone(),
            train_ems,
            test_ems,
            accuracy,
            variance_rmse,
        });
    }
    let avg = |get: fn(&FoldEval) -> &Scores| -> Scores {
        let mut out = Scores::new();
        for key in get(&folds[0]).keys() {
            let vals: Vec<f64> = folds.iter().map(|f| get(f)[key]).collect();
            out.insert(key.clone(), mean(&vals));
        }
        out
    };
    let summary = EvalSummary {
        train_ems: avg(|f| &f.train_ems),
        test_ems: avg(|f| &f.test_ems),
        accuracy: avg(|f| &f.accuracy),
        variance_rmse: avg(|f| &f.variance_rmse),
    };
    Ok(EvalOutput {
        scheme,
        phase: data.phase,
        folds,
        summary,
    })
}

/// Best grid cell of one model family on one task and encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlRow {
    pub task: String,
    pub metric: Metric,
    pub encoding: Encoding,
    pub family: Family,
    pub best: String,
    pub mean: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlBaselineReport {
    pub folds: usize,
    pub n_items: usize,
    pub rows: Vec<MlRow>,
}

/// Text of an item as seen by the bag-of-words encoders.
fn item_text(item: &Item) -> String {
    format!("{} {}", item.premise, item.conclusion)
}

/// Feature matrix of `data.ids` under `encoding`. The word vocabulary is
/// fitted on all evaluated items.
pub fn feature_matrix(data: &ExperimentData, encoding: Encoding, stopwords: &BTreeSet<String>) -> Result<Matrix> {
    let base = Matrix::from_rows(&data.ids.iter().map(|id| data.features[id].to_vec()).collect::<Vec<_>>())?;
    let mode = match encoding {
        Encoding::Base => return Ok(base),
        Encoding::Counts => EncodeMode::Counts,
        Encoding::Tfidf => EncodeMode::TfIdf,
    };
    let docs: Vec<String> = data.ids.iter().map(|id| item_text(&data.items[id])).collect();
    let words = Encoder::fit(&docs, mode, stopwords)?.transform(&docs);
    base.hstack(&words)
}

/// Grid-searched classical models on gold-label classification and
/// vote-variance regression, cross-validated on the GA's fold plan.
pub fn ml_baseline(cfg: &ExperimentConfig, data: &ExperimentData, stopwords: &BTreeSet<String>) -> Result<MlBaselineReport> {
    let folds = kfold_indices(data.ids.len(), cfg.folds, fold_seed(cfg.seed))?;
    let classes = data.scheme.size();
    let gold: Vec<f64> = data
        .ids
        .iter()
        .map(|id| gold_label(&data.human[id]).map(|l| l.index() as f64))
        .collect::<Result<_>>()?;
    let variance: Vec<f64> = data
        .ids
        .iter()
        .map(|id| ordinal_variance(&data.human[id]))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &encoding in &cfg.ml.encodings {
        let x = feature_matrix(data, encoding, stopwords)?;
        let tasks = [
            ("gold_label", Task::Classification { classes }, Metric::Accuracy, &cfg.ml.classifiers, &gold),
            ("variance", Task::Regression, Metric::Rmse, &cfg.ml.regressors, &variance),
        ];
        for (task_name, task, metric, families, y) in tasks {
            for &family in families {
                let stage = format!("ml {task_name} {} {family}", encoding.name());
                let report = grid_search_cv(&cfg.ml_grid(family), &x, y, task, &folds, metric)
                    .map_err(|e| e.in_stage(stage.clone()))?;
                let best = report.best_cell();
                log::info!("{stage}: {} = {:.4}", best.label, best.mean);
                rows.push(MlRow {
                    task: task_name.into(),
                    metric,
                    encoding,
                    family,
                    best: best.label.clone(),
                    mean: best.mean,
                    fold_scores: best.fold_scores.clone(),
                });
            }
        }
    }
    Ok(MlBaselineReport {
        folds: cfg.folds,
        n_items: data.ids.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_items: usize,
    pub items_per_type: BTreeMap<ItemType, usize>,
    pub votes_per_phase: BTreeMap<Phase, usize>,
    /// Six-way label shares per phase over all evaluated items.
    pub histogram: HistogramDelta,
    pub participants: Option<ParticipantSummary>,
    /// Phase 1 to phase 2 label flows per item type, over kept participants.
    pub flows: Option<BTreeMap<ItemType, FlowMatrix>>,
    /// Kendall tau among item features and mean votes, with p-values.
    pub tau: TauMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub total: usize,
    pub kept: usize,
    pub excluded_incomplete: usize,
    pub excluded_attention: usize,
}

/// Statistics of the evaluated items and, when given, the survey records.
pub fn dataset_stats(
    data: &ExperimentData,
    survey: Option<(&[ParticipantRecord], &[(String, QcDecision)])>,
) -> Result<DatasetStats> {
    let mut items_per_type = BTreeMap::new();
    for id in &data.ids {
        *items_per_type.entry(data.items[id].item_type).or_insert(0) += 1;
    }
    let six = |phase: Phase| -> Result<Vec<&VoteSet>> {
        data.ids
            .iter()
            .map(|id| {
                data.human_six
                    .get(&(id.clone(), phase))
                    .ok_or_else(|| Error::InvalidInput(format!("no phase {phase} votes for `{id}`")))
            })
            .collect()
    };
    let (p1, p2) = (six(Phase::System1)?, six(Phase::System2)?);
    let flat = |sets: &[&VoteSet]| sets.iter().flat_map(|v| v.votes.iter().copied()).collect::<Vec<Label>>();
    let (l1, l2) = (flat(&p1), flat(&p2));
    let histogram = label_histogram_delta(&l1, &l2)?;
    let votes_per_phase = [(Phase::System1, l1.len()), (Phase::System2, l2.len())].into_iter().collect();

    let (participants, flows) = match survey {
        None => (None, None),
        Some((records, decisions)) => {
            let keep: BTreeSet<&str> = decisions
                .iter()
                .filter(|(_, d)| d.is_keep())
                .map(|(id, _)| id.as_str())
                .collect();
            let evaluated: BTreeSet<&str> = data.ids.iter().map(String::as_str).collect();
            let kept: Vec<ParticipantRecord> = records
                .iter()
                .filter(|r| keep.contains(r.participant_id.as_str()))
                .map(|r| ParticipantRecord {
                    responses: r
                        .responses
                        .iter()
                        .filter(|x| evaluated.contains(x.item_id.as_str()))
                        .cloned()
                        .collect(),
                    ..r.clone()
                })
                .collect();
            let (v1, v2) = participant_votes(&kept);
            let types = data.ids.iter().map(|id| (id.clone(), data.items[id].item_type)).collect();
            let flows = label_shift_flows(&v1, &v2, &types)?;
            // rows must add up to the phase 1 label counts
            let mut row_totals = [0u64; 6];
            for m in flows.values() {
                for (i, row) in m.iter().enumerate() {
                    row_totals[i] += row.iter().sum::<u64>();
                }
            }
            let mut counts = [0u64; 6];
            for v in &v1 {
                counts[v.label.index()] += 1;
            }
            if row_totals != counts {
                return Err(Error::InvalidInput("flow rows do not sum to phase 1 label counts".into()));
            }
            let mut summary = ParticipantSummary {
                total: records.len(),
                kept: 0,
                excluded_incomplete: 0,
                excluded_attention: 0,
            };
            for (_, d) in decisions {
                match d {
                    QcDecision::Keep { .. } => summary.kept += 1,
                    QcDecision::Exclude(crate::survey::ExcludeReason::Incomplete) => summary.excluded_incomplete += 1,
                    QcDecision::Exclude(_) => summary.excluded_attention += 1,
                }
            }
            (Some(summary), Some(flows))
        }
    };

    let mut names: Vec<String> = FeatureVector::NAMES.iter().map(|s| s.to_string()).collect();
    names.push("phase1_mean".into());
    names.push("phase2_mean".into());
    let mut columns = vec![Vec::with_capacity(data.ids.len()); names.len()];
    for (i, id) in data.ids.iter().enumerate() {
        let mut row = data.features[id].to_vec();
        row.push(ordinal_mean(p1[i])?);
        row.push(ordinal_mean(p2[i])?);
        for (c, v) in columns.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let tau = if data.ids.len() >= 2 {
        feature_tau_matrix(&names, &columns)?
    } else {
        TauMatrix {
            entries: vec![vec![None; names.len()]; names.len()],
            names,
        }
    };
    Ok(DatasetStats {
        n_items: data.ids.len(),
        items_per_type,
        votes_per_phase,
        histogram,
        participants,
        flows,
        tau,
    })
}

/// Settings echoed into the report so it stands on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    pub scheme: LabelScheme,
    pub phase: Phase,
    pub folds: usize,
    pub ga: GaConfig,
    pub ga_cells: Vec<String>,
}

impl RunSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        RunSettings {
            seed: cfg.seed,
            scheme: cfg.scheme,
            phase: cfg.phase,
            folds: cfg.folds,
            ga: cfg.ga,
            ga_cells: cfg.ga_grid.cells().iter().map(|c| c.label()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub settings: RunSettings,
    pub n_items: usize,
    pub folds: Vec<FoldEval>,
    pub summary: EvalSummary,
    pub weights: Vec<WeightsRecord>,
    pub ml_baseline: Option<MlBaselineReport>,
    pub dataset: DatasetStats,
}

impl ExperimentReport {
    pub fn new(
        cfg: &ExperimentConfig,
        eval: EvalOutput,
        weights: Vec<WeightsRecord>,
        ml_baseline: Option<MlBaselineReport>,
        dataset: DatasetStats,
    ) -> Result<Self> {
        let report = ExperimentReport {
            settings: RunSettings::from_config(cfg),
            n_items: dataset.n_items,
            folds: eval.folds,
            summary: eval.summary,
            weights,
            ml_baseline,
            dataset,
        };
        report.check()?;
        Ok(report)
    }

    /// Every EMS in the report lies in (0, 1].
    pub fn check(&self) -> Result<()> {
        let ems_maps = self
            .folds
            .iter()
            .flat_map(|f| [&f.train_ems, &f.test_ems])
            .chain([&self.summary.train_ems, &self.summary.test_ems]);
        for m in ems_maps {
            for (k, v) in m {
                if !(*v > 0.0 && *v <= 1.0) {
                    return Err(Error::InvalidInput(format!("EMS `{k}` = {v} outside (0, 1]")));
                }
            }
        }
        for w in &self.weights {
            for v in [w.train_fitness, w.test_ems] {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::InvalidInput(format!("fold {} EMS {v} outside (0, 1]", w.fold)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{Trait, TraitVotes};

    fn persona_all(id: &str, labels: [Label; 10]) -> PersonaVotes {
        PersonaVotes {
            item_id: id.into(),
            scheme: LabelScheme::SixWay,
            traits: Trait::ALL
                .iter()
                .zip(labels)
                .map(|(t, l)| TraitVotes {
                    persona: *t,
                    samples: vec![l; 10],
                    majority: l,
                })
                .collect(),
        }
    }

    /// Twenty items where the first persona always matches the humans.
    fn oracle_data() -> ExperimentData {
        let six = LabelScheme::SixWay.labels();
        let mut items = Vec::new();
        let mut human = Vec::new();
        let mut model = BTreeMap::new();
        for i in 0..20 {
            let id = format!("item{i:02}");
            let truth = six[i % 6];
            let other = six[(i + 3) % 6];
            items.push(
                Item::new(&id, ItemType::Fallacy, format!("Premise number {i} is here."), "The conclusion follows.")
                    .unwrap(),
            );
            for phase in [Phase::System1, Phase::System2] {
                human.push(VoteSet::new(&id, phase, LabelScheme::SixWay, vec![truth; 12]).unwrap());
            }
            let mut labels = [other; 10];
            labels[0] = truth;
            model.insert(
                id.clone(),
                ModelVotes {
                    base: Some(vec![other; 10]),
                    persona: Some(persona_all(&id, labels)),
                },
            );
        }
        let mut lm = NgramLM::new(2).unwrap();
        lm.train(&items.iter().map(|i| i.premise.clone()).collect::<Vec<_>>()).unwrap();
        ExperimentData::assemble(
            &items,
            &human,
            model,
            LabelScheme::SixWay,
            Phase::System1,
            true,
            &lm,
            &Lexicon::bundled(),
        )
        .unwrap()
    }

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.ga.population = 64;
        cfg.ga.mating_parents = 32;
        cfg
    }

    #[test]
    fn exact_persona_beats_equal_weights_on_every_fold() {
        let cfg = small_cfg();
        let data = oracle_data();
        let fit = fit(&cfg, &data).unwrap();
        assert_eq!(fit.weights.len(), 5);
        let eval = evaluate(&cfg, &data, &fit.plan, &fit.weights).unwrap();
        assert_eq!(eval.folds.len(), 5);
        for f in &eval.folds {
            assert!(f.test_ems["p_ga"] >= f.test_ems["p_eq"], "{f:?}");
            assert!(f.train_ems["p_ga"] >= f.train_ems["p_eq"]);
            assert!(f.test_ems.values().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }

    #[test]
    fn tampered_weights_are_caught() {
        let cfg = small_cfg();
        let data = oracle_data();
        let mut fit = fit(&cfg, &data).unwrap();
        fit.weights[2].train_fitness += 1e-9;
        assert!(evaluate(&cfg, &data, &fit.plan, &fit.weights).is_err());
    }

    #[test]
    fn missing_persona_votes_is_a_config_error() {
        let item = Item::new("x", ItemType::Fallacy, "a b.", "c d.").unwrap();
        let votes = vec![VoteSet::new("x", Phase::System1, LabelScheme::SixWay, vec![Label::A]).unwrap()];
        let lm = NgramLM::new(1).unwrap();
        let err = ExperimentData::assemble(
            &[item],
            &votes,
            BTreeMap::new(),
            LabelScheme::SixWay,
            Phase::System1,
            false,
            &lm,
            &Lexicon::bundled(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn dataset_stats_on_constant_votes() {
        let data = oracle_data();
        let stats = dataset_stats(&data, None).unwrap();
        assert_eq!(stats.n_items, 20);
        assert!(stats.histogram.delta_pp.iter().all(|d| *d == 0.0));
        assert_eq!(stats.tau.names.len(), 9);
    }
}
