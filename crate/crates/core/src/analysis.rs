//! Interpretability analyses: which cut points actually partition the data,
//! which features a trained tree ignores, how stable that is across seeds,
//! and how the resulting feature ranking compares with CART's.

use crate::cart::{fit_cart, CartModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::DndtModel;
use crate::train::{derive_seed, fit_with_validation, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

/// Activity of every cut point of a trained model against a dataset.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ActiveCutpoints {
    /// Per feature, per sorted cut point: does it separate the data?
    pub flags: Vec<Vec<bool>>,
    pub per_feature_active: Vec<usize>,
    pub per_feature_fraction: Vec<f64>,
    /// Active cut points over all cut points.
    pub active_fraction: f64,
}

impl ActiveCutpoints {
    /// A feature is ignored when none of its cut points is active: every
    /// instance falls in the same bin, so the tree never branches on it.
    pub fn ignored_features(&self) -> Vec<bool> {
        self.flags
            .iter()
            .map(|f| f.iter().all(|&a| !a))
            .collect()
    }
}

/// A cut point is active when it separates the dataset: at least one value at
/// or below it and at least one above. Evaluated against the data the model
/// was trained on.
pub fn active_cutpoints(model: &DndtModel, dataset: &Dataset) -> Result<ActiveCutpoints> {
    if dataset.n_instances() == 0 {
        return Err(Error::EmptyDataset(
            "cut point activity needs at least one instance".into(),
        ));
    }
    if dataset.n_features() != model.n_features() {
        return Err(Error::ShapeMismatch {
            op: "active_cutpoints",
            lhs: vec![dataset.n_features()],
            rhs: vec![model.n_features()],
        });
    }
    let mut flags = Vec::with_capacity(model.n_features());
    for (d, binner) in model.binners().iter().enumerate() {
        let col = dataset.feature_column(d);
        let feature_flags: Vec<bool> = binner
            .sorted_cutpoints()
            .iter()
            .map(|&cut| {
                let below = col.iter().any(|&x| x <= cut);
                let above = col.iter().any(|&x| x > cut);
                below && above
            })
            .collect();
        flags.push(feature_flags);
    }
    let per_feature_active: Vec<usize> = flags
        .iter()
        .map(|f| f.iter().filter(|&&a| a).count())
        .collect();
    let per_feature_fraction: Vec<f64> = flags
        .iter()
        .zip(&per_feature_active)
        .map(|(f, &a)| a as f64 / f.len() as f64)
        .collect();
    let total: usize = flags.iter().map(Vec::len).sum();
    let active: usize = per_feature_active.iter().sum();
    Ok(ActiveCutpoints {
        flags,
        per_feature_active,
        per_feature_fraction,
        active_fraction: active as f64 / total as f64,
    })
}

/// Per-feature ignored flags for one trained model; see
/// [`ActiveCutpoints::ignored_features`].
pub fn ignored_features(model: &DndtModel, dataset: &Dataset) -> Result<Vec<bool>> {
    Ok(active_cutpoints(model, dataset)?.ignored_features())
}

/// Importance from repeated training: how often each feature ends up ignored
/// across independently seeded runs. Low ignore rate means the feature keeps
/// earning its cut points.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ImportanceReport {
    pub ignore_rate_percent: Vec<f64>,
    /// Features ordered most important first: ascending ignore rate, ties
    /// broken by feature index.
    pub ranking: Vec<usize>,
    pub n_runs: usize,
}

pub fn dndt_importance(
    dataset: &Dataset,
    config: &TrainConfig,
    n_runs: usize,
) -> Result<ImportanceReport> {
    if n_runs == 0 {
        return Err(Error::InvalidConfig("importance needs at least one run".into()));
    }
    let per_run: Vec<Vec<bool>> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut run_config = config.clone();
            run_config.seed = derive_seed(config.seed, run as u64);
            let outcome = fit_with_validation(dataset, None, &run_config)?;
            ignored_features(&outcome.model, dataset)
        })
        .collect::<Result<_>>()?;
    let ignore_rate_percent: Vec<f64> = (0..dataset.n_features())
        .map(|d| {
            let ignored = per_run.iter().filter(|run| run[d]).count();
            100.0 * ignored as f64 / n_runs as f64
        })
        .collect();
    Ok(ImportanceReport {
        ranking: rank_ascending(&ignore_rate_percent),
        ignore_rate_percent,
        n_runs,
    })
}

/// Feature indices ordered by ascending value, ties broken by index.
fn rank_ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Feature indices ordered by descending value, ties broken by index. The
/// usual reading: importance scores in, "most important first" out.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Positions of each item in an ordering: `positions[item] = rank`.
fn ordering_to_ranks(ordering: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0usize; ordering.len()];
    for (rank, &item) in ordering.iter().enumerate() {
        ranks[item] = rank;
    }
    ranks
}

/// Kendall rank correlation (tau-a): concordant minus discordant pairs over
/// n(n-1)/2. Inputs are rank vectors, `rank_x[i]` being item i's position.
pub fn kendall_tau(rank_a: &[usize], rank_b: &[usize]) -> Result<f64> {
    if rank_a.len() != rank_b.len() {
        return Err(Error::ShapeMismatch {
            op: "kendall_tau",
            lhs: vec![rank_a.len()],
            rhs: vec![rank_b.len()],
        });
    }
    let n = rank_a.len();
    if n < 2 {
        return Err(Error::InvalidOperation {
            op: "kendall_tau",
            message: format!("need at least 2 items, got {}", n),
        });
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let da = rank_a[i] as i64 - rank_a[j] as i64;
            let db = rank_b[i] as i64 - rank_b[j] as i64;
            let sign = (da.signum()) * (db.signum());
            if sign > 0 {
                concordant += 1;
            } else if sign < 0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((concordant - discordant) as f64 / pairs)
}

/// One cut point budget evaluated over several seeded train/test splits.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepPoint {
    pub cutpoints_per_feature: usize,
    pub test_accuracies: Vec<f64>,
    pub mean_test_accuracy: f64,
    /// Active cut point fraction per run, measured on the training split.
    pub active_fractions: Vec<f64>,
    pub mean_active_fraction: f64,
}

/// Sweep cut point budgets: for each count and each of `n_seeds` derived
/// seeds, hold out a stratified test slice, train, and measure test accuracy
/// plus the trained model's active cut point fraction.
pub fn cutpoint_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    cutpoint_counts: &[usize],
    n_seeds: usize,
) -> Result<Vec<SweepPoint>> {
    if cutpoint_counts.is_empty() || n_seeds == 0 {
        return Err(Error::InvalidConfig(
            "sweep needs at least one cut point count and one seed".into(),
        ));
    }
    if base.validation_split == 0.0 {
        return Err(Error::InvalidConfig(
            "sweep measures held-out accuracy; validation split must be above zero".into(),
        ));
    }
    cutpoint_counts
        .iter()
        .map(|&count| {
            let runs: Vec<(f64, f64)> = (0..n_seeds)
                .into_par_iter()
                .map(|s| {
                    let mut config = base.clone();
                    config.cutpoints_per_feature = count;
                    config.seed = derive_seed(base.seed, ((count as u64) << 32) | s as u64);
                    let (train, test) = dataset
                        .stratified_split(1.0 - config.validation_split, config.seed)?;
                    let outcome = fit_with_validation(&train, None, &config)?;
                    let acc = outcome.model.accuracy(&test)?;
                    let active = active_cutpoints(&outcome.model, &train)?.active_fraction;
                    Ok((acc, active))
                })
                .collect::<Result<_>>()?;
            let test_accuracies: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let active_fractions: Vec<f64> = runs.iter().map(|r| r.1).collect();
            Ok(SweepPoint {
                cutpoints_per_feature: count,
                mean_test_accuracy: mean(&test_accuracies),
                mean_active_fraction: mean(&active_fractions),
                test_accuracies,
                active_fractions,
            })
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Combined interpretability report for one dataset: cut point activity of a
/// reference model, multi-run ignore rates, and the ranking comparison with
/// CART.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub feature_names: Vec<String>,
    pub active: ActiveCutpoints,
    pub ignored: Vec<bool>,
    pub ignore_rate_percent: Vec<f64>,
    /// Most important first.
    pub ranking: Vec<usize>,
    pub cart_importance: Vec<f64>,
    pub cart_ranking: Vec<usize>,
    /// Rank agreement between the two orderings, in [-1, 1].
    pub kendall_tau: f64,
    pub n_runs: usize,
}

impl AnalysisReport {
    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Per-feature summary table.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "feature,name,active_cutpoints,total_cutpoints,ignored,ignore_rate_percent,rank,cart_importance,cart_rank\n",
        );
        let ranks = ordering_to_ranks(&self.ranking);
        let cart_ranks = ordering_to_ranks(&self.cart_ranking);
        for d in 0..self.feature_names.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                d,
                self.feature_names[d],
                self.active.per_feature_active[d],
                self.active.flags[d].len(),
                self.ignored[d],
                self.ignore_rate_percent[d],
                ranks[d],
                self.cart_importance[d],
                cart_ranks[d],
            ));
        }
        out
    }
}

/// Run the full analysis: one reference fit at the base seed for cut point
/// activity, `n_runs` derived-seed fits for ignore rates, and a CART fit on
/// the same data for the ranking comparison.
pub fn analyze(dataset: &Dataset, config: &TrainConfig, n_runs: usize) -> Result<AnalysisReport> {
    let reference = fit_with_validation(dataset, None, config)?;
    let active = active_cutpoints(&reference.model, dataset)?;
    let ignored = active.ignored_features();
    let importance = dndt_importance(dataset, config, n_runs)?;
    let cart = fit_cart(dataset, None)?;
    let cart_importance = cart.gini_importance();
    let cart_ranking = rank_descending(&cart_importance);
    let tau = kendall_tau(
        &ordering_to_ranks(&importance.ranking),
        &ordering_to_ranks(&cart_ranking),
    )?;
    Ok(AnalysisReport {
        feature_names: dataset.feature_names().to_vec(),
        active,
        ignored,
        ignore_rate_percent: importance.ignore_rate_percent,
        ranking: importance.ranking,
        cart_importance,
        cart_ranking,
        kendall_tau: tau,
        n_runs,
    })
}

/// Convenience for comparing a trained DNDT ranking with a CART model fitted
/// elsewhere: tau between "most important first" orderings.
pub fn ranking_agreement(dndt_ranking: &[usize], cart: &CartModel) -> Result<f64> {
    let cart_ranking = rank_descending(&cart.gini_importance());
    kendall_tau(
        &ordering_to_ranks(dndt_ranking),
        &ordering_to_ranks(&cart_ranking),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::SoftBinner;
    use crate::data::FeatureRange;
    use approx::assert_relative_eq;

    fn model_with_cuts(cuts: Vec<Vec<f64>>) -> DndtModel {
        let n = cuts.len();
        let binners: Vec<SoftBinner> = cuts
            .into_iter()
            .map(|c| SoftBinner::new(c, 0.1).unwrap())
            .collect();
        let leaves: usize = binners.iter().map(|b| b.n_bins()).product();
        DndtModel::new(
            binners,
            vec![0.0; leaves * 2],
            2,
            (0..n).map(|d| format!("f{}", d)).collect(),
            vec!["a".into(), "b".into()],
            vec![FeatureRange { min: 0.0, max: 1.0 }; n],
        )
        .unwrap()
    }

    fn two_feature_data() -> Dataset {
        Dataset::from_parts(
            vec![0.1, 0.5, 0.4, 0.5, 0.9, 0.5, 0.3, 0.5],
            vec![0, 1, 0, 1],
            vec!["f0".into(), "f1".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .mark_unit_normalized()
    }

    #[test]
    fn cutpoint_is_active_only_when_it_separates_data() {
        // f0 values {0.1, 0.4, 0.9, 0.3}; f1 constant 0.5.
        let ds = two_feature_data();
        let model = model_with_cuts(vec![vec![0.35, 0.95], vec![0.5, 0.2]]);
        let active = active_cutpoints(&model, &ds).unwrap();
        // f0: 0.35 separates {0.1,0.3} from {0.4,0.9}; 0.95 has nothing above.
        assert_eq!(active.flags[0], vec![true, false]);
        // f1: 0.2 has nothing at or below; 0.5 has nothing above.
        assert_eq!(active.flags[1], vec![false, false]);
        assert_eq!(active.per_feature_active, vec![1, 0]);
        assert_relative_eq!(active.per_feature_fraction[0], 0.5);
        assert_relative_eq!(active.active_fraction, 0.25);
        assert_eq!(active.ignored_features(), vec![false, true]);
        assert_eq!(ignored_features(&model, &ds).unwrap(), vec![false, true]);
    }

    #[test]
    fn boundary_value_counts_as_below() {
        // A cut point exactly at a data value: that value sits at or below.
        let ds = Dataset::from_parts(
            vec![0.5, 0.7],
            vec![0, 1],
            vec!["f0".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .mark_unit_normalized();
        let model = model_with_cuts(vec![vec![0.5]]);
        let active = active_cutpoints(&model, &ds).unwrap();
        assert_eq!(active.flags[0], vec![true]);
    }

    #[test]
    fn kendall_tau_hits_the_endpoints_and_a_hand_value() {
        assert_relative_eq!(kendall_tau(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_relative_eq!(kendall_tau(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap(), -1.0);
        // One swapped pair out of three: (2 - 1) / 3.
        assert_relative_eq!(
            kendall_tau(&[0, 1, 2], &[0, 2, 1]).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-15
        );
        assert!(kendall_tau(&[0], &[0]).is_err());
        assert!(kendall_tau(&[0, 1], &[0, 1, 2]).is_err());
    }

    #[test]
    fn tied_ranks_count_as_neither_concordant_nor_discordant() {
        // Items 1 and 2 tie in the first ranking: pair (1,2) contributes 0,
        // pairs with item 0 stay concordant -> tau = 2/3.
        assert_relative_eq!(
            kendall_tau(&[0, 1, 1], &[0, 1, 2]).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn rankings_order_and_break_ties_by_index() {
        assert_eq!(rank_ascending(&[30.0, 10.0, 10.0, 20.0]), vec![1, 2, 3, 0]);
        assert_eq!(rank_descending(&[0.1, 0.4, 0.4, 0.2]), vec![1, 2, 3, 0]);
        assert_eq!(ordering_to_ranks(&[2, 0, 1]), vec![1, 2, 0]);
    }

    /// Feature 1 separates the classes; feature 0 is constant and can never
    /// host an active cut point.
    fn signal_and_dead_feature() -> Dataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            x.push(0.5);
            x.push(0.2 + 0.6 * class as f64 + 0.001 * (i % 7) as f64);
            y.push(class);
        }
        Dataset::from_parts(
            x,
            y,
            vec!["dead".into(), "signal".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .mark_unit_normalized()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn importance_separates_signal_from_dead_features() {
        let ds = signal_and_dead_feature();
        let report = dndt_importance(&ds, &quick_config(), 4).unwrap();
        assert_eq!(report.n_runs, 4);
        assert_relative_eq!(report.ignore_rate_percent[0], 100.0);
        assert!(report.ignore_rate_percent[1] < 100.0);
        assert_eq!(report.ranking, vec![1, 0]);
    }

    #[test]
    fn analyze_combines_activity_importance_and_cart_agreement() {
        let ds = signal_and_dead_feature();
        let report = analyze(&ds, &quick_config(), 4).unwrap();
        assert_eq!(report.ignored, vec![true, false]);
        assert_eq!(report.ranking, vec![1, 0]);
        // CART can only split the signal feature.
        assert_eq!(report.cart_ranking, vec![1, 0]);
        assert_relative_eq!(report.kendall_tau, 1.0);
        let json = report.to_json_pretty().unwrap();
        assert!(json.contains("kendall_tau"));
        let csv = report.to_csv_string();
        assert_eq!(csv.trim_end().lines().count(), 3);
        assert!(csv.contains("signal"));
    }

    #[test]
    fn survival_data_mostly_ignores_the_first_two_features() {
        // On the bundled survival dataset only the node count carries much
        // signal; repeated feature-study fits should discard age and year in
        // most runs while keeping the node count.
        let ds = crate::data::builtin("haberman").unwrap().dataset;
        let (norm, _) = ds.normalize();
        let config = TrainConfig::feature_study(norm.n_instances());
        let report = dndt_importance(&norm, &config, 10).unwrap();
        let rates = &report.ignore_rate_percent;
        assert!(rates[0] >= 70.0, "age ignore rate {}", rates[0]);
        assert!(rates[1] >= 70.0, "year ignore rate {}", rates[1]);
        assert!(rates[2] < rates[0] && rates[2] < rates[1]);
        assert_ne!(*report.ranking.last().unwrap(), 2);
    }

    #[test]
    fn sweep_reports_each_budget_deterministically() {
        let ds = signal_and_dead_feature();
        let points = cutpoint_sweep(&ds, &quick_config(), &[1, 2], 3).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].cutpoints_per_feature, 1);
        assert_eq!(points[0].test_accuracies.len(), 3);
        for p in &points {
            assert!((0.0..=1.0).contains(&p.mean_test_accuracy));
            assert!((0.0..=1.0).contains(&p.mean_active_fraction));
        }
        let again = cutpoint_sweep(&ds, &quick_config(), &[1, 2], 3).unwrap();
        assert_eq!(points, again);
        assert!(cutpoint_sweep(&ds, &quick_config(), &[], 3).is_err());
        assert!(dndt_importance(&ds, &quick_config(), 0).is_err());
    }
}
