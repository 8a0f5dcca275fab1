//! Pairwise learning-to-rank for the factorization machine.
//!
//! Both losses work on triples `(u, i, j)`: company `u`, a well `i` it has
//! interacted with and a well `j` it has not. With `d = f(u,i) - f(u,j)`,
//! the per-triple objective is `ln sigmoid(d) - lambda |theta|^2` and is
//! maximized by stochastic gradient ascent. BPR draws one triple per update.
//! WARP keeps drawing negatives for a fixed positive until one violates the
//! unit margin and weights the update by the estimated rank of the positive.
//!
//! Updates can be clipped: when `max_step_norm` is positive, the data term
//! of each step is rescaled to at most that L2 norm.

use rand::Rng;

use crate::config::{LossKind, Schedule, TrainConfig};
use crate::dataset::{Dataset, EncodedRow, InteractionSet};
use crate::error::{Error, Result};
use crate::fm::{log_sigmoid, sigmoid, FmModel};
use crate::rng::{seeded, ModelRng};

/// Number of seeded triples the per-epoch objective is measured on.
pub const PROBE_SIZE: usize = 1000;
const PROBE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Margin a negative must come within to count as a WARP violation.
pub const WARP_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleSample {
    pub u: usize,
    /// Observed well.
    pub i: usize,
    /// Unobserved well.
    pub j: usize,
}

/// Draws triples from companies that have both observed and unobserved wells.
#[derive(Debug, Clone)]
pub struct TripleSampler<'a> {
    train: &'a InteractionSet,
    eligible: Vec<usize>,
}

impl<'a> TripleSampler<'a> {
    pub fn new(train: &'a InteractionSet) -> Result<Self> {
        let n_wells = train.n_wells();
        let eligible: Vec<usize> = (0..train.n_companies())
            .filter(|&c| {
                let owned = train.observed(c).len();
                owned >= 1 && owned < n_wells
            })
            .collect();
        if eligible.is_empty() {
            return Err(Error::Saturated);
        }
        Ok(TripleSampler { train, eligible })
    }

    pub fn eligible_companies(&self) -> &[usize] {
        &self.eligible
    }

    /// Uniform eligible company, then a uniform observed well of it.
    pub fn sample_positive(&self, rng: &mut ModelRng) -> (usize, usize) {
        let u = self.eligible[rng.random_range(0..self.eligible.len())];
        let wells = self.train.observed(u);
        (u, wells[rng.random_range(0..wells.len())])
    }

    /// Uniform well not observed for `u`, by rejection. `u` must not own the
    /// whole catalog.
    pub fn sample_negative(&self, u: usize, rng: &mut ModelRng) -> usize {
        let n_wells = self.train.n_wells();
        debug_assert!(self.train.observed(u).len() < n_wells);
        loop {
            let j = rng.random_range(0..n_wells);
            if !self.train.contains(u, j) {
                return j;
            }
        }
    }

    pub fn sample(&self, rng: &mut ModelRng) -> TripleSample {
        let (u, i) = self.sample_positive(rng);
        let j = self.sample_negative(u, rng);
        TripleSample { u, i, j }
    }

    /// Wells `u` has not interacted with.
    pub fn negative_count(&self, u: usize) -> usize {
        self.train.n_wells() - self.train.observed(u).len()
    }
}

/// One triple from a fresh sampler over `train`.
pub fn sample_triple(train: &InteractionSet, rng: &mut ModelRng) -> Result<TripleSample> {
    Ok(TripleSampler::new(train)?.sample(rng))
}

/// `sum ln sigmoid(d_uij) - lambda |theta|^2` over `triples`.
pub fn bpr_objective(
    model: &FmModel,
    data: &Dataset,
    triples: &[TripleSample],
    lambda: f64,
) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::Evaluation(
            "objective needs at least one triple".into(),
        ));
    }
    let mut total = 0.0;
    for t in triples {
        total += log_sigmoid(model.utility_diff(data, t.u, t.i, t.j)?);
    }
    Ok(total - lambda * model.squared_norm())
}

/// Partial derivatives of `d = f(x_i) - f(x_j)` over the union of both rows'
/// nonzero features. Every other parameter has zero derivative, including
/// the global bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub d: f64,
    pub features: Vec<usize>,
    /// `dd/dw_p`, aligned with `features`.
    pub linear: Vec<f64>,
    /// `dd/dv_pf`, row-major `features.len() x k`.
    pub factors: Vec<f64>,
}

fn factor_sums(model: &FmModel, x: &EncodedRow) -> Vec<f64> {
    let mut sums = vec![0.0; model.k()];
    for (p, xp) in x.iter() {
        for (s, v) in sums.iter_mut().zip(model.factors(p)) {
            *s += v * xp;
        }
    }
    sums
}

/// Merges two sparse rows into `(feature, x_i, x_j)` triples.
fn merge_rows(a: &EncodedRow, b: &EncodedRow) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::with_capacity(a.nnz() + b.nnz());
    let (mut ia, mut ib) = (0, 0);
    while ia < a.nnz() || ib < b.nnz() {
        let pa = a.indices.get(ia).copied().unwrap_or(usize::MAX);
        let pb = b.indices.get(ib).copied().unwrap_or(usize::MAX);
        if pa == pb {
            out.push((pa, a.values[ia], b.values[ib]));
            ia += 1;
            ib += 1;
        } else if pa < pb {
            out.push((pa, a.values[ia], 0.0));
            ia += 1;
        } else {
            out.push((pb, 0.0, b.values[ib]));
            ib += 1;
        }
    }
    out
}

pub fn pair_gradient(model: &FmModel, xi: &EncodedRow, xj: &EncodedRow) -> Result<PairGradient> {
    let d = model.score(xi)? - model.score(xj)?;
    let k = model.k();
    let si = factor_sums(model, xi);
    let sj = factor_sums(model, xj);
    let merged = merge_rows(xi, xj);
    let mut features = Vec::with_capacity(merged.len());
    let mut linear = Vec::with_capacity(merged.len());
    let mut factors = Vec::with_capacity(merged.len() * k);
    for (p, a, b) in merged {
        features.push(p);
        linear.push(a - b);
        for (f, &v) in model.factors(p).iter().enumerate() {
            factors.push(a * (si[f] - v * a) - b * (sj[f] - v * b));
        }
    }
    Ok(PairGradient {
        d,
        features,
        linear,
        factors,
    })
}

fn triple_gradient(model: &FmModel, data: &Dataset, t: &TripleSample) -> Result<PairGradient> {
    if t.i == t.j {
        return Err(Error::DegeneratePair(t.i));
    }
    let xi = data.encode(t.u, t.i)?;
    let xj = data.encode(t.u, t.j)?;
    pair_gradient(model, &xi, &xj)
}

/// Step size, L2 weight and optional clipping for one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub eta: f64,
    pub lambda: f64,
    /// When set, the data term `eta * g * grad d` is rescaled so its L2 norm
    /// does not exceed this value. The regularization term is never clipped.
    pub max_norm: Option<f64>,
}

impl StepParams {
    pub fn new(eta: f64, lambda: f64) -> Self {
        StepParams {
            eta,
            lambda,
            max_norm: None,
        }
    }

    pub fn from_config(config: &TrainConfig, eta: f64) -> Self {
        StepParams {
            eta,
            lambda: config.regularization,
            max_norm: (config.max_step_norm > 0.0).then_some(config.max_step_norm),
        }
    }

    fn scaled(self, factor: f64) -> Self {
        StepParams {
            eta: self.eta * factor,
            ..self
        }
    }
}

/// Ascent step `theta_p += eta * (g * dd/dtheta_p - 2 lambda theta_p)` on
/// every parameter the gradient touches.
fn apply_update(model: &mut FmModel, grad: &PairGradient, g: f64, step: StepParams) {
    let k = model.k();
    let StepParams { eta, lambda, .. } = step;
    let mut g = g;
    if let Some(max_norm) = step.max_norm {
        let norm = grad
            .linear
            .iter()
            .chain(&grad.factors)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            * eta
            * g;
        if norm > max_norm {
            g *= max_norm / norm;
        }
    }
    for (slot, &p) in grad.features.iter().enumerate() {
        let w = &mut model.w[p];
        *w += eta * (g * grad.linear[slot] - 2.0 * lambda * *w);
        let dv = &grad.factors[slot * k..(slot + 1) * k];
        for (v, &dvf) in model.factors_mut(p).iter_mut().zip(dv) {
            *v += eta * (g * dvf - 2.0 * lambda * *v);
        }
    }
}

/// One BPR update with multiplier `g = sigmoid(-d)`. Returns `d` as it was
/// before the update.
pub fn bpr_step(
    model: &mut FmModel,
    data: &Dataset,
    triple: &TripleSample,
    step: StepParams,
) -> Result<f64> {
    let grad = triple_gradient(model, data, triple)?;
    if !grad.d.is_finite() {
        return Err(Error::Numeric {
            epoch: 0,
            message: format!(
                "utility difference is {} for company {}, wells {} / {}",
                grad.d, triple.u, triple.i, triple.j
            ),
        });
    }
    apply_update(model, &grad, sigmoid(-grad.d), step);
    Ok(grad.d)
}

/// `ln(floor(negatives / draws) + 1)`: the WARP rank weight after the first
/// violation at draw number `draws`.
pub fn warp_weight(negatives: usize, draws: usize) -> f64 {
    ((negatives / draws.max(1)) as f64 + 1.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpOutcome {
    /// Negatives drawn.
    pub sampled: usize,
    /// Drawn negatives that scored at or above the positive.
    pub misordered: usize,
    /// Rank weight of the applied update, `None` when nothing violated.
    pub weight: Option<f64>,
}

/// One WARP update for the observed pair `(u, i)`.
pub fn warp_step(
    model: &mut FmModel,
    data: &Dataset,
    sampler: &TripleSampler<'_>,
    (u, i): (usize, usize),
    max_samples: usize,
    step: StepParams,
    rng: &mut ModelRng,
) -> Result<WarpOutcome> {
    let negatives = sampler.negative_count(u);
    if negatives == 0 {
        return Err(Error::Saturated);
    }
    let positive = model.score_pair(data, u, i)?;
    let mut misordered = 0;
    for draw in 1..=max_samples {
        let j = sampler.sample_negative(u, rng);
        let negative = model.score_pair(data, u, j)?;
        if negative >= positive {
            misordered += 1;
        }
        if negative + WARP_MARGIN > positive {
            let weight = warp_weight(negatives, draw);
            bpr_step(model, data, &TripleSample { u, i, j }, step.scaled(weight))?;
            return Ok(WarpOutcome {
                sampled: draw,
                misordered,
                weight: Some(weight),
            });
        }
    }
    Ok(WarpOutcome {
        sampled: max_samples,
        misordered,
        weight: None,
    })
}

/// Learning rate for zero-based epoch `t`.
pub fn lr_schedule(eta0: f64, t: usize, schedule: Schedule, exponent: f64) -> f64 {
    match schedule {
        Schedule::Constant => eta0,
        Schedule::InvScaling => eta0 / ((t + 1) as f64).powf(exponent),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Probe-set objective divided by the probe size.
    pub objective: f64,
    pub learning_rate: f64,
    /// Fraction of sampled pairs with `d <= 0`.
    pub violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    /// Probe objective of the freshly initialized model.
    pub initial_objective: f64,
    pub epochs: Vec<EpochStats>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_objective(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_objective, |e| e.objective)
    }

    /// `epoch,objective,learning_rate,violation_rate` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,objective,learning_rate,violation_rate\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                e.epoch, e.objective, e.learning_rate, e.violation_rate
            ));
        }
        out
    }
}

/// Fixed triples the objective is tracked on, independent of the update
/// stream.
pub fn probe_triples(sampler: &TripleSampler<'_>, seed: u64, size: usize) -> Vec<TripleSample> {
    let mut rng = seeded(seed ^ PROBE_SEED_SALT);
    (0..size).map(|_| sampler.sample(&mut rng)).collect()
}

fn with_epoch(err: Error, epoch: usize) -> Error {
    match err {
        Error::Numeric { message, .. } => Error::Numeric { epoch, message },
        other => other,
    }
}

/// Trains a fresh model on `data.interactions`. Each epoch performs one
/// update per training pair at the epoch's scheduled rate.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(FmModel, LossTrace)> {
    train_with_callback(data, config, |_| {})
}

/// [`train`] that reports each finished epoch.
pub fn train_with_callback(
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(FmModel, LossTrace)> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let mut model = FmModel::init_with_rng(data.n_features(), config, &mut rng)?;
    let sampler = TripleSampler::new(&data.interactions)?;
    let probe = probe_triples(&sampler, config.seed, PROBE_SIZE);
    let lambda = config.regularization;
    let probe_objective = |m: &FmModel| -> Result<f64> {
        Ok(bpr_objective(m, data, &probe, lambda)? / probe.len() as f64)
    };

    let mut trace = LossTrace {
        initial_objective: probe_objective(&model)?,
        epochs: Vec::with_capacity(config.epochs),
    };
    let steps = data.interactions.len();
    for epoch in 0..config.epochs {
        let eta = lr_schedule(
            config.learning_rate,
            epoch,
            config.schedule,
            config.schedule_exponent,
        );
        let step = StepParams::from_config(config, eta);
        let mut compared = 0usize;
        let mut violated = 0usize;
        for _ in 0..steps {
            match config.loss {
                LossKind::Bpr => {
                    let triple = sampler.sample(&mut rng);
                    let d = bpr_step(&mut model, data, &triple, step)
                        .map_err(|e| with_epoch(e, epoch))?;
                    compared += 1;
                    violated += usize::from(d <= 0.0);
                }
                LossKind::Warp => {
                    let positive = sampler.sample_positive(&mut rng);
                    let outcome = warp_step(
                        &mut model,
                        data,
                        &sampler,
                        positive,
                        config.max_samples,
                        step,
                        &mut rng,
                    )
                    .map_err(|e| with_epoch(e, epoch))?;
                    compared += outcome.sampled;
                    violated += outcome.misordered;
                }
            }
        }
        if !model.all_finite() {
            return Err(Error::Numeric {
                epoch,
                message: "model parameters became non-finite".into(),
            });
        }
        let stats = EpochStats {
            epoch,
            objective: probe_objective(&model)?,
            learning_rate: eta,
            violation_rate: if compared == 0 {
                0.0
            } else {
                violated as f64 / compared as f64
            },
        };
        on_epoch(&stats);
        trace.epochs.push(stats);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::WellFeatureTable;
    use crate::fm::init_model;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn tiny_dataset() -> Dataset {
        let set = InteractionSet::from_pairs(
            ids("c", 3),
            ids("w", 5),
            [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3)],
        )
        .unwrap();
        let table = WellFeatureTable::new(
            vec!["a".into(), "b".into()],
            5,
            vec![1.0, 0.0, -1.0, 2.0, 0.5, 0.5, 3.0, -2.0, 0.0, 1.0],
        )
        .unwrap()
        .standardize();
        Dataset::new(set, table).unwrap()
    }

    #[test]
    fn sampled_negatives_are_unobserved() {
        let data = tiny_dataset();
        let sampler = TripleSampler::new(&data.interactions).unwrap();
        let mut rng = seeded(3);
        for _ in 0..10_000 {
            let t = sampler.sample(&mut rng);
            assert!(data.interactions.contains(t.u, t.i));
            assert!(!data.interactions.contains(t.u, t.j));
        }
    }

    #[test]
    fn saturated_company_is_skipped() {
        let set =
            InteractionSet::from_pairs(ids("c", 2), ids("w", 3), [(0, 0), (0, 1), (0, 2), (1, 1)])
                .unwrap();
        let sampler = TripleSampler::new(&set).unwrap();
        assert_eq!(sampler.eligible_companies(), [1]);
        let mut rng = seeded(0);
        for _ in 0..200 {
            assert_eq!(sampler.sample(&mut rng).u, 1);
        }

        let full = InteractionSet::from_pairs(ids("c", 1), ids("w", 2), [(0, 0), (0, 1)]).unwrap();
        assert!(matches!(TripleSampler::new(&full), Err(Error::Saturated)));
    }

    #[test]
    fn triple_stream_is_seeded() {
        let data = tiny_dataset();
        let draw = |seed| {
            let mut rng = seeded(seed);
            (0..50)
                .map(|_| sample_triple(&data.interactions, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn objective_at_zero_difference() {
        let data = tiny_dataset();
        let model = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        let t = TripleSample { u: 0, i: 0, j: 2 };
        let obj = bpr_objective(&model, &data, &[t], 0.0).unwrap();
        assert!((obj - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_is_linear_in_lambda() {
        let data = tiny_dataset();
        let model = init_model(
            data.n_features(),
            &TrainConfig {
                factors: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let triples = [
            TripleSample { u: 0, i: 0, j: 2 },
            TripleSample { u: 1, i: 2, j: 4 },
        ];
        let a = bpr_objective(&model, &data, &triples, 0.1).unwrap();
        let b = bpr_objective(&model, &data, &triples, 0.2).unwrap();
        assert!((a - b - 0.1 * model.squared_norm()).abs() < 1e-12);
        assert!(a <= -0.1 * model.squared_norm());
    }

    #[test]
    fn bpr_step_at_zero_difference_uses_half_multiplier() {
        let data = tiny_dataset();
        let mut model = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        let t = TripleSample { u: 0, i: 0, j: 2 };
        let d = bpr_step(&mut model, &data, &t, StepParams::new(1.0, 0.0)).unwrap();
        assert_eq!(d, 0.0);
        // dd/dw for the observed well's one-hot slot is +1.
        assert_eq!(model.w[3], 0.5);
        assert_eq!(model.w[3 + 2], -0.5);
        assert_eq!(model.w[0], 0.0);
    }

    #[test]
    fn clipped_step_has_bounded_norm() {
        let data = tiny_dataset();
        let mut model = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        let t = TripleSample { u: 0, i: 0, j: 2 };
        let step = StepParams {
            max_norm: Some(0.1),
            ..StepParams::new(1.0, 0.0)
        };
        bpr_step(&mut model, &data, &t, step).unwrap();
        let norm = model.w.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((norm - 0.1).abs() < 1e-12, "{norm}");
        assert!(model.w[3] > 0.0 && model.w[5] < 0.0);

        let mut loose = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        let step = StepParams {
            max_norm: Some(100.0),
            ..StepParams::new(1.0, 0.0)
        };
        bpr_step(&mut loose, &data, &t, step).unwrap();
        assert_eq!(loose.w[3], 0.5);
    }

    #[test]
    fn degenerate_triple_is_rejected() {
        let data = tiny_dataset();
        let mut model = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        let t = TripleSample { u: 0, i: 1, j: 1 };
        assert!(matches!(
            bpr_step(&mut model, &data, &t, StepParams::new(0.1, 0.0)),
            Err(Error::DegeneratePair(1))
        ));
    }

    #[test]
    fn warp_weights() {
        assert!((warp_weight(100, 1) - 101f64.ln()).abs() < 1e-15);
        assert!((warp_weight(100, 3) - 34f64.ln()).abs() < 1e-15);
        assert_eq!(warp_weight(2, 5), 0.0);
    }

    #[test]
    fn warp_without_violation_leaves_model_untouched() {
        let data = tiny_dataset();
        let mut model = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        // Company 0's first well is far above every other well.
        model.w[3] = 10.0;
        let before = model.clone();
        let sampler = TripleSampler::new(&data.interactions).unwrap();
        let mut rng = seeded(5);
        let out = warp_step(
            &mut model,
            &data,
            &sampler,
            (0, 0),
            20,
            StepParams::new(0.1, 0.1),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.weight, None);
        assert_eq!(out.sampled, 20);
        assert_eq!(model, before);
    }

    #[test]
    fn warp_violation_on_first_draw_uses_full_rank_weight() {
        let data = tiny_dataset();
        let mut model = FmModel::zeros(data.n_features(), 2, TrainConfig::default());
        let sampler = TripleSampler::new(&data.interactions).unwrap();
        let mut rng = seeded(5);
        let out = warp_step(
            &mut model,
            &data,
            &sampler,
            (0, 0),
            20,
            StepParams::new(0.1, 0.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.sampled, 1);
        // Company 0 has 3 unobserved wells.
        assert_eq!(out.weight, Some(4f64.ln()));
        assert!((model.w[3] - 0.1 * 4f64.ln() * 0.5).abs() < 1e-15);
    }

    #[test]
    fn schedules() {
        for t in [0, 1, 7, 100] {
            assert_eq!(lr_schedule(0.1, t, Schedule::Constant, 0.25), 0.1);
        }
        assert_eq!(lr_schedule(0.1, 0, Schedule::InvScaling, 0.25), 0.1);
        assert!((lr_schedule(0.1, 15, Schedule::InvScaling, 0.25) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let data = tiny_dataset();
        let config = TrainConfig {
            epochs: 0,
            factors: 4,
            ..Default::default()
        };
        let (model, trace) = train(&data, &config).unwrap();
        assert_eq!(model, init_model(data.n_features(), &config).unwrap());
        assert!(trace.is_empty());
    }

    #[test]
    fn trace_has_one_row_per_epoch() {
        let data = tiny_dataset();
        for loss in [LossKind::Bpr, LossKind::Warp] {
            let config = TrainConfig {
                epochs: 4,
                factors: 3,
                loss,
                ..Default::default()
            };
            let (model, trace) = train(&data, &config).unwrap();
            assert_eq!(trace.len(), 4);
            assert!(model.all_finite());
            assert_eq!(trace.to_csv().lines().count(), 5);
        }
    }
}
