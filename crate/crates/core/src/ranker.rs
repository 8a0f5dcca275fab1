//! Top-k well recommendations per company.

use std::cmp::Ordering;

use crate::dataset::{Dataset, InteractionSet};
use crate::error::{Error, Result};
use crate::fm::FmModel;

/// Wells for one company, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub company: usize,
    /// `(well, score)` with scores non-increasing and ties by ascending well.
    pub entries: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn wells(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(w, _)| w)
    }

    /// One-based rank of `well`, if listed.
    pub fn rank_of(&self, well: usize) -> Option<usize> {
        self.entries
            .iter()
            .position(|&(w, _)| w == well)
            .map(|p| p + 1)
    }
}

fn by_score_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Keeps the best `k` candidates in ranking order.
pub fn top_k(mut candidates: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if candidates.len() > k && k > 0 {
        candidates.select_nth_unstable_by(k - 1, by_score_then_index);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_score_then_index);
    candidates.truncate(k);
    candidates
}

/// Scores every well in the catalog for company `u`.
///
/// The company's bias and factor contributions are computed once; each well
/// then costs `O(k * (1 + A))`. Terms are accumulated in the same order as
/// [`FmModel::score`], so the result matches it bit for bit.
pub fn score_all_wells(model: &FmModel, data: &Dataset, u: usize) -> Result<Vec<f64>> {
    let n_companies = data.n_companies();
    let n_wells = data.n_wells();
    if u >= n_companies {
        return Err(Error::Index {
            what: "company",
            index: u,
            limit: n_companies,
        });
    }
    if model.n() != data.n_features() {
        return Err(Error::Mismatch(format!(
            "model has {} features, data encodes {}",
            model.n(),
            data.n_features()
        )));
    }
    let k = model.k();
    let aux_base = n_companies + n_wells;
    let company_linear = model.w0 + model.w[u];
    let company_factors = model.factors(u);

    let mut scores = Vec::with_capacity(n_wells);
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for well in 0..n_wells {
        let slot = n_companies + well;
        let aux = data.features.row(well);
        let mut linear = company_linear + model.w[slot];
        for (a, &x) in aux.iter().enumerate() {
            if x != 0.0 {
                linear += model.w[aux_base + a] * x;
            }
        }
        for f in 0..k {
            sum[f] = company_factors[f];
            sum_sq[f] = company_factors[f] * company_factors[f];
        }
        for (f, &v) in model.factors(slot).iter().enumerate() {
            sum[f] += v;
            sum_sq[f] += v * v;
        }
        for (a, &x) in aux.iter().enumerate() {
            if x != 0.0 {
                for (f, &v) in model.factors(aux_base + a).iter().enumerate() {
                    let t = v * x;
                    sum[f] += t;
                    sum_sq[f] += t * t;
                }
            }
        }
        let mut pairwise = 0.0;
        for f in 0..k {
            pairwise += sum[f] * sum[f] - sum_sq[f];
        }
        scores.push(linear + 0.5 * pairwise);
    }
    Ok(scores)
}

/// Per-well score averaged over every company.
pub fn mean_well_scores(model: &FmModel, data: &Dataset) -> Result<Vec<f64>> {
    let mut total = vec![0.0; data.n_wells()];
    for u in 0..data.n_companies() {
        for (t, s) in total.iter_mut().zip(score_all_wells(model, data, u)?) {
            *t += s;
        }
    }
    let n = data.n_companies() as f64;
    Ok(total.into_iter().map(|t| t / n).collect())
}

/// Best `k` wells for company `u`. With `exclude_observed`, wells the company
/// already has in `data.interactions` are not candidates.
pub fn recommend_top_k(
    model: &FmModel,
    data: &Dataset,
    u: usize,
    k: usize,
    exclude_observed: bool,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let scores = score_all_wells(model, data, u)?;
    let candidates = scores
        .into_iter()
        .enumerate()
        .filter(|&(w, _)| !(exclude_observed && data.interactions.contains(u, w)))
        .collect();
    Ok(RankedList {
        company: u,
        entries: top_k(candidates, k),
    })
}

/// Recommendations for every company, ordered by company index.
pub fn recommend_all(
    model: &FmModel,
    data: &Dataset,
    k: usize,
    exclude_observed: bool,
) -> Result<Vec<RankedList>> {
    (0..data.n_companies())
        .map(|u| recommend_top_k(model, data, u, k, exclude_observed))
        .collect()
}

/// Wells ranked by how many companies interacted with them in `train`,
/// skipping wells `u` already has. The score is the interaction count.
pub fn popularity_baseline(train: &InteractionSet, u: usize, k: usize) -> RankedList {
    let counts = train.well_counts();
    popularity_from_counts(train, &counts, u, k)
}

pub(crate) fn popularity_from_counts(
    train: &InteractionSet,
    counts: &[usize],
    u: usize,
    k: usize,
) -> RankedList {
    let candidates = counts
        .iter()
        .enumerate()
        .filter(|&(w, _)| !train.contains(u, w))
        .map(|(w, &c)| (w, c as f64))
        .collect();
    RankedList {
        company: u,
        entries: top_k(candidates, k),
    }
}

/// How many lists each well appears in.
pub fn recommendation_frequency(lists: &[RankedList], n_wells: usize) -> Vec<usize> {
    let mut freq = vec![0; n_wells];
    for list in lists {
        for w in list.wells() {
            freq[w] += 1;
        }
    }
    freq
}

/// `operator_id,rank,api_number,score`, scores in shortest round-trip form.
pub fn recommendations_csv(lists: &[RankedList], ids: &InteractionSet) -> String {
    let mut out = String::from("operator_id,rank,api_number,score\n");
    for list in lists {
        for (rank, &(well, score)) in list.entries.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:?}\n",
                ids.company_id(list.company),
                rank + 1,
                ids.well_id(well),
                score
            ));
        }
    }
    out
}
