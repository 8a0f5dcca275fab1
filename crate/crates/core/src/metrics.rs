//! Leave-one-out ranking metrics, relevance thresholds and plot-data export.
//!
//! Every company with a held-out well gets a top-k list computed against its
//! training wells. Hit rate and reciprocal rank look for the held-out well in
//! that list. Precision and recall need a notion of relevance, which comes in
//! two flavours (see [`RelevanceMode`]).

use std::fmt;
use std::str::FromStr;

use crate::dataset::{Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::fm::FmModel;
use crate::ranker::{popularity_from_counts, score_all_wells, top_k, RankedList};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_BINS: usize = 20;

/// How the relevance cut-off is derived from a vector of scores.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThresholdSpec {
    #[default]
    Median,
    Fixed(f64),
    /// Linear-interpolated quantile, `q` in `[0, 1]`.
    Quantile(f64),
}

impl FromStr for ThresholdSpec {
    type Err = Error;

    /// `median`, `fixed:<value>` or `quantile:<q>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::Config(format!(
                "threshold {s:?}: expected median, fixed:<x> or quantile:<q>"
            ))
        };
        if s.eq_ignore_ascii_case("median") {
            return Ok(ThresholdSpec::Median);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "fixed" if value.is_finite() => Ok(ThresholdSpec::Fixed(value)),
            "quantile" if (0.0..=1.0).contains(&value) => Ok(ThresholdSpec::Quantile(value)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Median => f.write_str("median"),
            ThresholdSpec::Fixed(x) => write!(f, "fixed:{x:?}"),
            ThresholdSpec::Quantile(q) => write!(f, "quantile:{q:?}"),
        }
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Cut-off for `scores` under `spec`. The median of an even count is the
/// mean of the middle pair.
pub fn relevance_threshold(scores: &[f64], spec: ThresholdSpec) -> Result<f64> {
    if let ThresholdSpec::Fixed(x) = spec {
        return Ok(x);
    }
    if scores.is_empty() {
        return Err(Error::Evaluation(
            "threshold of an empty score vector".into(),
        ));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(match spec {
        ThresholdSpec::Median => {
            let m = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[m]
            } else {
                (sorted[m - 1] + sorted[m]) / 2.0
            }
        }
        ThresholdSpec::Quantile(q) => quantile_sorted(&sorted, q),
        ThresholdSpec::Fixed(_) => unreachable!(),
    })
}

/// What counts as a relevant well for precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelevanceMode {
    /// A candidate is relevant when its model score reaches the company's
    /// threshold, computed over all of that company's candidate scores.
    #[default]
    Score,
    /// Only the held-out well is relevant.
    Holdout,
}

impl FromStr for RelevanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "score" => Ok(RelevanceMode::Score),
            "holdout" => Ok(RelevanceMode::Holdout),
            _ => Err(Error::Config(format!(
                "relevance mode {s:?}: expected score or holdout"
            ))),
        }
    }
}

impl fmt::Display for RelevanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelevanceMode::Score => "score",
            RelevanceMode::Holdout => "holdout",
        })
    }
}

/// A company's top-k list next to the well that was withheld from it.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutRanking {
    pub held_out: usize,
    pub list: RankedList,
    /// Scores of every candidate (wells outside the company's training set),
    /// as `(well, score)`. Empty for rankers without model scores.
    pub candidates: Vec<(usize, f64)>,
}

impl HoldoutRanking {
    pub fn company(&self) -> usize {
        self.list.company
    }

    pub fn rank(&self) -> Option<usize> {
        self.list.rank_of(self.held_out)
    }
}

/// Rankings for every holdout entry, scored by `model` against the split's
/// training interactions.
pub fn rank_holdout(
    model: &FmModel,
    data: &Dataset,
    split: &SplitPair,
    k: usize,
) -> Result<Vec<HoldoutRanking>> {
    check_eval_inputs(split, k)?;
    let train = data.with_interactions(split.train.clone())?;
    split
        .holdout
        .iter()
        .map(|&(u, held_out)| {
            let scores = score_all_wells(model, &train, u)?;
            let candidates: Vec<(usize, f64)> = scores
                .into_iter()
                .enumerate()
                .filter(|&(w, _)| !split.train.contains(u, w))
                .collect();
            Ok(HoldoutRanking {
                held_out,
                list: RankedList {
                    company: u,
                    entries: top_k(candidates.clone(), k),
                },
                candidates,
            })
        })
        .collect()
}

/// Popularity-baseline rankings over the same split.
pub fn rank_holdout_by_popularity(split: &SplitPair, k: usize) -> Result<Vec<HoldoutRanking>> {
    check_eval_inputs(split, k)?;
    let counts = split.train.well_counts();
    Ok(split
        .holdout
        .iter()
        .map(|&(u, held_out)| HoldoutRanking {
            held_out,
            list: popularity_from_counts(&split.train, &counts, u, k),
            candidates: Vec::new(),
        })
        .collect())
}

fn check_eval_inputs(split: &SplitPair, k: usize) -> Result<()> {
    if split.holdout.is_empty() {
        return Err(Error::Evaluation("holdout set is empty".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    Ok(())
}

/// `1 / rank` of `well` in `list`, or 0 when absent.
pub fn reciprocal_rank(list: &RankedList, well: usize) -> f64 {
    list.rank_of(well).map_or(0.0, |r| 1.0 / r as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Fraction of rankings that contain their held-out well.
pub fn hit_rate_of(rankings: &[HoldoutRanking]) -> Result<f64> {
    mean(
        rankings
            .iter()
            .map(|r| f64::from(u8::from(r.rank().is_some()))),
    )
    .ok_or_else(|| Error::Evaluation("no rankings to evaluate".into()))
}

pub fn mean_reciprocal_rank_of(rankings: &[HoldoutRanking]) -> Result<f64> {
    mean(
        rankings
            .iter()
            .map(|r| reciprocal_rank(&r.list, r.held_out)),
    )
    .ok_or_else(|| Error::Evaluation("no rankings to evaluate".into()))
}

pub fn hit_rate(model: &FmModel, data: &Dataset, split: &SplitPair, k: usize) -> Result<f64> {
    hit_rate_of(&rank_holdout(model, data, split, k)?)
}

pub fn mean_reciprocal_rank(
    model: &FmModel,
    data: &Dataset,
    split: &SplitPair,
    k: usize,
) -> Result<f64> {
    mean_reciprocal_rank_of(&rank_holdout(model, data, split, k)?)
}

/// Relevance counts for one company.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevanceCounts {
    pub threshold: Option<f64>,
    /// Relevant wells among the top-k.
    pub relevant_in_list: usize,
    /// Relevant wells among all candidates.
    pub relevant_total: usize,
}

pub fn relevance_counts(
    ranking: &HoldoutRanking,
    spec: ThresholdSpec,
    mode: RelevanceMode,
) -> Result<RelevanceCounts> {
    match mode {
        RelevanceMode::Holdout => Ok(RelevanceCounts {
            threshold: None,
            relevant_in_list: usize::from(ranking.rank().is_some()),
            relevant_total: 1,
        }),
        RelevanceMode::Score => {
            if ranking.candidates.is_empty() {
                return Err(Error::Evaluation(format!(
                    "company {} has no candidate scores",
                    ranking.company()
                )));
            }
            let scores: Vec<f64> = ranking.candidates.iter().map(|&(_, s)| s).collect();
            let threshold = relevance_threshold(&scores, spec)?;
            Ok(RelevanceCounts {
                threshold: Some(threshold),
                relevant_in_list: ranking
                    .list
                    .entries
                    .iter()
                    .filter(|&&(_, s)| s >= threshold)
                    .count(),
                relevant_total: scores.iter().filter(|&&s| s >= threshold).count(),
            })
        }
    }
}

pub fn precision_at_k(
    model: &FmModel,
    data: &Dataset,
    split: &SplitPair,
    k: usize,
    spec: ThresholdSpec,
    mode: RelevanceMode,
) -> Result<f64> {
    Ok(evaluate(model, data, split, k, spec, mode)?.precision_at_k)
}

pub fn recall_at_k(
    model: &FmModel,
    data: &Dataset,
    split: &SplitPair,
    k: usize,
    spec: ThresholdSpec,
    mode: RelevanceMode,
) -> Result<f64> {
    Ok(evaluate(model, data, split, k, spec, mode)?.recall_at_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanyEval {
    pub company: usize,
    pub held_out: usize,
    pub rank: Option<usize>,
    pub reciprocal_rank: f64,
    pub precision: f64,
    /// `None` when the company had no relevant wells and was skipped.
    pub recall: Option<f64>,
    pub threshold: Option<f64>,
}

impl CompanyEval {
    pub fn hit(&self) -> bool {
        self.rank.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hit_rate: f64,
    pub mean_reciprocal_rank: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub threshold_spec: ThresholdSpec,
    pub relevance_mode: RelevanceMode,
    /// Mean of the per-company thresholds (score mode only).
    pub mean_threshold: Option<f64>,
    /// Companies left out of recall for having no relevant wells.
    pub recall_skipped: usize,
    pub per_company: Vec<CompanyEval>,
}

/// Builds the report from precomputed rankings.
pub fn report_from_rankings(
    rankings: &[HoldoutRanking],
    k: usize,
    spec: ThresholdSpec,
    mode: RelevanceMode,
) -> Result<EvalReport> {
    if rankings.is_empty() {
        return Err(Error::Evaluation("holdout set is empty".into()));
    }
    let mut per_company = Vec::with_capacity(rankings.len());
    for r in rankings {
        let counts = relevance_counts(r, spec, mode)?;
        per_company.push(CompanyEval {
            company: r.company(),
            held_out: r.held_out,
            rank: r.rank(),
            reciprocal_rank: reciprocal_rank(&r.list, r.held_out),
            precision: counts.relevant_in_list as f64 / k as f64,
            recall: (counts.relevant_total > 0)
                .then(|| counts.relevant_in_list as f64 / counts.relevant_total as f64),
            threshold: counts.threshold,
        });
    }
    let recall_skipped = per_company.iter().filter(|c| c.recall.is_none()).count();
    let recall_at_k = mean(per_company.iter().filter_map(|c| c.recall)).ok_or_else(|| {
        Error::Evaluation("every company has zero relevant wells; recall is undefined".into())
    })?;
    Ok(EvalReport {
        hit_rate: mean(per_company.iter().map(|c| f64::from(u8::from(c.hit())))).unwrap(),
        mean_reciprocal_rank: mean(per_company.iter().map(|c| c.reciprocal_rank)).unwrap(),
        precision_at_k: mean(per_company.iter().map(|c| c.precision)).unwrap(),
        recall_at_k,
        k,
        threshold_spec: spec,
        relevance_mode: mode,
        mean_threshold: mean(per_company.iter().filter_map(|c| c.threshold)),
        recall_skipped,
        per_company,
    })
}

/// All four metrics for `model` on `split`.
pub fn evaluate(
    model: &FmModel,
    data: &Dataset,
    split: &SplitPair,
    k: usize,
    spec: ThresholdSpec,
    mode: RelevanceMode,
) -> Result<EvalReport> {
    let rankings = rank_holdout(model, data, split, k)?;
    report_from_rankings(&rankings, k, spec, mode)
}

impl EvalReport {
    /// Human-readable summary, metrics in the order hit rate, reciprocal
    /// rank, precision, recall.
    pub fn to_table(&self) -> String {
        let threshold = match self.mean_threshold {
            Some(t) => format!("{} (mean {t:.6})", self.threshold_spec),
            None => self.threshold_spec.to_string(),
        };
        format!(
            "metric            value\n\
             hit rate@{k:<8} {:.3}\n\
             reciprocal rank   {:.3}\n\
             precision@{k:<7} {:.3}\n\
             recall@{k:<10} {:.3}\n\
             companies         {}\n\
             relevance         {} / threshold {}\n\
             recall skipped    {}\n",
            self.hit_rate,
            self.mean_reciprocal_rank,
            self.precision_at_k,
            self.recall_at_k,
            self.per_company.len(),
            self.relevance_mode,
            threshold,
            self.recall_skipped,
            k = self.k,
        )
    }

    /// `metric,value` rows in table order.
    pub fn summary_csv(&self) -> String {
        format!(
            "metric,value\nhit_rate,{:?}\nreciprocal_rank,{:?}\nprecision,{:?}\nrecall,{:?}\n",
            self.hit_rate, self.mean_reciprocal_rank, self.precision_at_k, self.recall_at_k
        )
    }

    /// One row per evaluated company; ids are resolved through `ids`.
    pub fn per_company_csv(&self, ids: &crate::dataset::InteractionSet) -> String {
        let mut out = String::from(
            "operator_id,holdout_api_number,rank,hit,reciprocal_rank,precision,recall,threshold\n",
        );
        for c in &self.per_company {
            let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{:?},{:?},{},{}\n",
                ids.company_id(c.company),
                ids.well_id(c.held_out),
                c.rank.map(|r| r.to_string()).unwrap_or_default(),
                u8::from(c.hit()),
                c.reciprocal_rank,
                c.precision,
                opt(c.recall),
                opt(c.threshold),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Desirability {
    Desirable,
    Undesirable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdClassification {
    pub threshold: f64,
    /// `(well, score, class)`, in input order.
    pub wells: Vec<(usize, f64, Desirability)>,
}

impl ThresholdClassification {
    pub fn desirable_count(&self) -> usize {
        self.wells
            .iter()
            .filter(|w| w.2 == Desirability::Desirable)
            .count()
    }

    pub fn undesirable_count(&self) -> usize {
        self.wells.len() - self.desirable_count()
    }
}

/// Labels well `i` (score `scores[i]`) desirable iff its score is at least
/// `threshold`.
pub fn classify_wells(scores: &[f64], threshold: f64) -> ThresholdClassification {
    ThresholdClassification {
        threshold,
        wells: scores
            .iter()
            .enumerate()
            .map(|(w, &s)| {
                let class = if s >= threshold {
                    Desirability::Desirable
                } else {
                    Desirability::Undesirable
                };
                (w, s, class)
            })
            .collect(),
    }
}

/// `api_number,score,class` rows in well order.
pub fn classification_csv(
    classification: &ThresholdClassification,
    ids: &crate::dataset::InteractionSet,
) -> String {
    let mut out = String::from("api_number,score,class\n");
    for &(w, score, class) in &classification.wells {
        let label = match class {
            Desirability::Desirable => "desirable",
            Desirability::Undesirable => "undesirable",
        };
        out.push_str(&format!("{},{:?},{label}\n", ids.well_id(w), score));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall of "score >= t" for every distinct score `t`,
/// from the highest threshold down.
pub fn pr_curve(scores: &[f64], relevant: &[bool]) -> Result<Vec<PrPoint>> {
    if scores.len() != relevant.len() {
        return Err(Error::Mismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            relevant.len()
        )));
    }
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 || positives == relevant.len() {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut idx = 0;
    while idx < order.len() {
        let t = scores[order[idx]];
        while idx < order.len() && scores[order[idx]] == t {
            if relevant[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        points.push(PrPoint {
            threshold: t,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,recall,precision\n");
    for p in points {
        out.push_str(&format!(
            "{:?},{:?},{:?}\n",
            p.threshold, p.recall, p.precision
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub desirable: usize,
    pub undesirable: usize,
}

/// Equal-width score histogram per class over `[min, max]`. A constant score
/// vector yields a single bin.
pub fn class_separation_export(
    classification: &ThresholdClassification,
    bins: usize,
) -> Result<Vec<HistogramBin>> {
    if classification.wells.is_empty() {
        return Err(Error::Evaluation("no wells to bin".into()));
    }
    if bins == 0 {
        return Err(Error::Config("bin count must be >= 1".into()));
    }
    let (min, max) = classification
        .wells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
            (lo.min(w.1), hi.max(w.1))
        });
    let bins = if max > min { bins } else { 1 };
    let width = (max - min) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: min + width * b as f64,
            hi: if b + 1 == bins {
                max
            } else {
                min + width * (b + 1) as f64
            },
            desirable: 0,
            undesirable: 0,
        })
        .collect();
    for &(_, s, class) in &classification.wells {
        let b = if width > 0.0 {
            (((s - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        match class {
            Desirability::Desirable => out[b].desirable += 1,
            Desirability::Undesirable => out[b].undesirable += 1,
        }
    }
    Ok(out)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,desirable_count,undesirable_count\n");
    for b in bins {
        out.push_str(&format!(
            "{:?},{:?},{},{}\n",
            b.lo, b.hi, b.desirable, b.undesirable
        ));
    }
    out
}
