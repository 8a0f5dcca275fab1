//! Interaction and well-attribute ingestion, sparse row encoding and
//! leave-one-out splitting.
//!
//! Every training sample is laid out as one wide sparse row: a one-hot
//! company block, a one-hot well block, then the standardized auxiliary well
//! attributes (production, elevation, ownership duration, plus any extra
//! numeric columns the caller asks for).

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const OPERATOR_COLUMN: &str = "operator_id";
pub const API_COLUMN: &str = "api_number";

/// Auxiliary columns read from the well attribute file, in design order.
pub const BASE_FEATURE_COLUMNS: [&str; 3] = ["production", "elevation", "duration_days"];

/// Observed (company, well) pairs plus the id <-> index maps for both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    company_ids: Vec<String>,
    well_ids: Vec<String>,
    company_lookup: HashMap<String, usize>,
    well_lookup: HashMap<String, usize>,
    pairs: Vec<(usize, usize)>,
    observed: Vec<Vec<usize>>,
    duplicates: usize,
}

impl InteractionSet {
    /// Builds a set from already-indexed pairs. Duplicate pairs are collapsed
    /// and counted; the first occurrence fixes the pair order.
    pub fn from_pairs(
        company_ids: Vec<String>,
        well_ids: Vec<String>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let company_lookup = build_lookup(&company_ids, "company")?;
        let well_lookup = build_lookup(&well_ids, "well")?;
        let mut observed = vec![Vec::new(); company_ids.len()];
        let mut kept = Vec::new();
        let mut duplicates = 0;
        for (c, w) in pairs {
            if c >= company_ids.len() {
                return Err(Error::Index {
                    what: "company",
                    index: c,
                    limit: company_ids.len(),
                });
            }
            if w >= well_ids.len() {
                return Err(Error::Index {
                    what: "well",
                    index: w,
                    limit: well_ids.len(),
                });
            }
            let wells: &mut Vec<usize> = &mut observed[c];
            match wells.binary_search(&w) {
                Ok(_) => duplicates += 1,
                Err(pos) => {
                    wells.insert(pos, w);
                    kept.push((c, w));
                }
            }
        }
        Ok(InteractionSet {
            company_ids,
            well_ids,
            company_lookup,
            well_lookup,
            pairs: kept,
            observed,
            duplicates,
        })
    }

    pub fn n_companies(&self) -> usize {
        self.company_ids.len()
    }

    pub fn n_wells(&self) -> usize {
        self.well_ids.len()
    }

    /// Distinct pairs in first-appearance order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Wells observed for a company, ascending.
    pub fn observed(&self, company: usize) -> &[usize] {
        &self.observed[company]
    }

    pub fn contains(&self, company: usize, well: usize) -> bool {
        self.observed
            .get(company)
            .is_some_and(|wells| wells.binary_search(&well).is_ok())
    }

    /// Number of duplicate lines collapsed while building the set.
    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    pub fn company_ids(&self) -> &[String] {
        &self.company_ids
    }

    pub fn well_ids(&self) -> &[String] {
        &self.well_ids
    }

    pub fn company_id(&self, company: usize) -> &str {
        &self.company_ids[company]
    }

    pub fn well_id(&self, well: usize) -> &str {
        &self.well_ids[well]
    }

    pub fn company_index(&self, id: &str) -> Option<usize> {
        self.company_lookup.get(id).copied()
    }

    pub fn well_index(&self, id: &str) -> Option<usize> {
        self.well_lookup.get(id).copied()
    }

    /// Interaction count per well.
    pub fn well_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_wells()];
        for &(_, w) in &self.pairs {
            counts[w] += 1;
        }
        counts
    }

    /// Same catalog, different pairs.
    fn with_pairs(&self, pairs: Vec<(usize, usize)>) -> InteractionSet {
        let mut observed = vec![Vec::new(); self.n_companies()];
        for &(c, w) in &pairs {
            observed[c].push(w);
        }
        for wells in &mut observed {
            wells.sort_unstable();
        }
        InteractionSet {
            company_ids: self.company_ids.clone(),
            well_ids: self.well_ids.clone(),
            company_lookup: self.company_lookup.clone(),
            well_lookup: self.well_lookup.clone(),
            pairs,
            observed,
            duplicates: 0,
        }
    }
}

fn build_lookup(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut lookup = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if lookup.insert(id.clone(), i).is_some() {
            return Err(Error::Config(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(lookup)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column_position(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: format!("missing required column {name:?}"),
        })
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads `operator_id,api_number` pairs. Companies and wells are indexed in
/// order of first appearance.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionSet> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let op_col = column_position(&headers, OPERATOR_COLUMN, path)?;
    let api_col = column_position(&headers, API_COLUMN, path)?;

    let mut company_ids = Vec::new();
    let mut well_ids = Vec::new();
    let mut companies: HashMap<String, usize> = HashMap::new();
    let mut wells: HashMap<String, usize> = HashMap::new();
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize, name: &str| -> Result<String> {
            match record.get(col) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("empty {name}"),
                }),
            }
        };
        let op = field(op_col, OPERATOR_COLUMN)?;
        let api = field(api_col, API_COLUMN)?;
        let c = *companies.entry(op.clone()).or_insert_with(|| {
            company_ids.push(op);
            company_ids.len() - 1
        });
        let w = *wells.entry(api.clone()).or_insert_with(|| {
            well_ids.push(api);
            well_ids.len() - 1
        });
        pairs.push((c, w));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{} has no interaction rows",
            path.display()
        )));
    }
    let set = InteractionSet::from_pairs(company_ids, well_ids, pairs)?;
    if set.duplicate_count() > 0 {
        log::warn!(
            "{}: collapsed {} duplicate interaction(s)",
            path.display(),
            set.duplicate_count()
        );
    }
    Ok(set)
}

/// Mean and sample standard deviation of one feature column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScaler {
    pub mean: f64,
    /// Zero for constant columns, which standardize to all zeros.
    pub std_dev: f64,
}

impl ColumnScaler {
    pub fn fit(column: &[f64]) -> Self {
        let n = column.len();
        if n == 0 {
            return ColumnScaler {
                mean: 0.0,
                std_dev: 0.0,
            };
        }
        let mean = column.iter().sum::<f64>() / n as f64;
        let constant = column.iter().all(|&x| x == column[0]);
        if constant || n < 2 {
            return ColumnScaler { mean, std_dev: 0.0 };
        }
        let ss: f64 = column.iter().map(|&x| (x - mean) * (x - mean)).sum();
        ColumnScaler {
            mean,
            std_dev: (ss / (n - 1) as f64).sqrt(),
        }
    }

    pub fn transform(&self, x: f64) -> f64 {
        if self.std_dev == 0.0 {
            0.0
        } else {
            (x - self.mean) / self.std_dev
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std_dev + self.mean
    }
}

/// Auxiliary numeric attributes, one row per well index.
#[derive(Debug, Clone, PartialEq)]
pub struct WellFeatureTable {
    columns: Vec<String>,
    values: Vec<f64>,
    n_wells: usize,
    scalers: Option<Vec<ColumnScaler>>,
}

impl WellFeatureTable {
    /// `values` is row-major, `n_wells x columns.len()`.
    pub fn new(columns: Vec<String>, n_wells: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_wells * columns.len() {
            return Err(Error::Mismatch(format!(
                "feature table expects {} values ({} wells x {} columns), got {}",
                n_wells * columns.len(),
                n_wells,
                columns.len(),
                values.len()
            )));
        }
        Ok(WellFeatureTable {
            columns,
            values,
            n_wells,
            scalers: None,
        })
    }

    /// A table with no auxiliary columns.
    pub fn empty(n_wells: usize) -> Self {
        WellFeatureTable {
            columns: Vec::new(),
            values: Vec::new(),
            n_wells,
            scalers: None,
        }
    }

    pub fn n_wells(&self) -> usize {
        self.n_wells
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, well: usize) -> &[f64] {
        let a = self.columns.len();
        &self.values[well * a..(well + 1) * a]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_wells).map(|w| self.row(w)[col]).collect()
    }

    /// Present once the table has been standardized.
    pub fn scalers(&self) -> Option<&[ColumnScaler]> {
        self.scalers.as_deref()
    }

    /// Z-scores every column with its sample standard deviation.
    pub fn standardize(&self) -> WellFeatureTable {
        let scalers: Vec<ColumnScaler> = (0..self.n_columns())
            .map(|c| ColumnScaler::fit(&self.column(c)))
            .collect();
        let values = self
            .values
            .chunks(self.n_columns().max(1))
            .flat_map(|row| row.iter().zip(&scalers).map(|(&x, s)| s.transform(x)))
            .collect();
        WellFeatureTable {
            columns: self.columns.clone(),
            values,
            n_wells: self.n_wells,
            scalers: Some(scalers),
        }
    }

    /// Undoes [`standardize`](Self::standardize); returns `self` unchanged
    /// when the table holds raw values.
    pub fn unstandardize(&self) -> WellFeatureTable {
        let Some(scalers) = &self.scalers else {
            return self.clone();
        };
        let values = self
            .values
            .chunks(self.n_columns().max(1))
            .flat_map(|row| row.iter().zip(scalers).map(|(&z, s)| s.inverse(z)))
            .collect();
        WellFeatureTable {
            columns: self.columns.clone(),
            values,
            n_wells: self.n_wells,
            scalers: None,
        }
    }
}

/// Reads the base attribute columns for every well in `interactions`.
pub fn load_well_features(
    path: impl AsRef<Path>,
    interactions: &InteractionSet,
) -> Result<WellFeatureTable> {
    load_well_features_with_extra(path, interactions, &[])
}

/// Like [`load_well_features`], appending `extra` numeric columns after the
/// base ones.
pub fn load_well_features_with_extra(
    path: impl AsRef<Path>,
    interactions: &InteractionSet,
    extra: &[String],
) -> Result<WellFeatureTable> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let api_col = column_position(&headers, API_COLUMN, path)?;
    let columns: Vec<String> = BASE_FEATURE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(extra.iter().cloned())
        .collect();
    let positions = columns
        .iter()
        .map(|c| column_position(&headers, c, path))
        .collect::<Result<Vec<_>>>()?;

    let a = columns.len();
    let n_wells = interactions.n_wells();
    let mut values = vec![0.0; n_wells * a];
    let mut seen = vec![false; n_wells];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let api = record.get(api_col).unwrap_or("");
        // Rows for wells nobody interacted with are outside the catalog.
        let Some(w) = interactions.well_index(api) else {
            continue;
        };
        if seen[w] {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate row for well {api}"),
            });
        }
        seen[w] = true;
        for (slot, (&pos, name)) in positions.iter().zip(&columns).enumerate() {
            let cell = record.get(pos).unwrap_or("");
            let x: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {name}: {cell:?} is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {name}: {cell:?} is not finite"),
                });
            }
            values[w * a + slot] = x;
        }
    }
    let missing: Vec<String> = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(w, _)| interactions.well_id(w).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    WellFeatureTable::new(columns, n_wells, values)
}

/// One sparse design row. Indices are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl EncodedRow {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for (i, x) in self.iter() {
            dense[i] = x;
        }
        dense
    }
}

/// Lays out `(company, well)` as `[company one-hot | well one-hot | aux]`.
/// Zero auxiliary values are left out of the sparse form.
pub fn encode_row(
    company: usize,
    well: usize,
    n_companies: usize,
    table: &WellFeatureTable,
) -> Result<EncodedRow> {
    let n_wells = table.n_wells();
    if company >= n_companies {
        return Err(Error::Index {
            what: "company",
            index: company,
            limit: n_companies,
        });
    }
    if well >= n_wells {
        return Err(Error::Index {
            what: "well",
            index: well,
            limit: n_wells,
        });
    }
    let aux_base = n_companies + n_wells;
    let aux = table.row(well);
    let mut indices = Vec::with_capacity(2 + aux.len());
    let mut values = Vec::with_capacity(2 + aux.len());
    indices.push(company);
    values.push(1.0);
    indices.push(n_companies + well);
    values.push(1.0);
    for (a, &x) in aux.iter().enumerate() {
        if x != 0.0 {
            indices.push(aux_base + a);
            values.push(x);
        }
    }
    Ok(EncodedRow {
        indices,
        values,
        dim: aux_base + aux.len(),
    })
}

/// Interactions plus standardized well attributes over the same catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interactions: InteractionSet,
    pub features: WellFeatureTable,
}

impl Dataset {
    pub fn new(interactions: InteractionSet, features: WellFeatureTable) -> Result<Self> {
        if features.n_wells() != interactions.n_wells() {
            return Err(Error::Mismatch(format!(
                "{} feature rows for {} wells",
                features.n_wells(),
                interactions.n_wells()
            )));
        }
        Ok(Dataset {
            interactions,
            features,
        })
    }

    /// Loads both files and standardizes the attributes.
    pub fn load(
        interactions: impl AsRef<Path>,
        wells: impl AsRef<Path>,
        extra_columns: &[String],
    ) -> Result<Self> {
        let set = load_interactions(interactions)?;
        let table = load_well_features_with_extra(wells, &set, extra_columns)?;
        Dataset::new(set, table.standardize())
    }

    /// Swaps in a different interaction set over the same catalog, e.g. the
    /// training half of a split.
    pub fn with_interactions(&self, interactions: InteractionSet) -> Result<Self> {
        Dataset::new(interactions, self.features.clone())
    }

    pub fn n_companies(&self) -> usize {
        self.interactions.n_companies()
    }

    pub fn n_wells(&self) -> usize {
        self.interactions.n_wells()
    }

    pub fn n_aux(&self) -> usize {
        self.features.n_columns()
    }

    /// Design dimensionality `C + I + A`.
    pub fn n_features(&self) -> usize {
        self.n_companies() + self.n_wells() + self.n_aux()
    }

    pub fn encode(&self, company: usize, well: usize) -> Result<EncodedRow> {
        encode_row(company, well, self.n_companies(), &self.features)
    }
}

/// Training pairs plus one held-out well per eligible company.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: InteractionSet,
    /// Ordered by company index.
    pub holdout: Vec<(usize, usize)>,
}

/// Withholds one uniformly chosen pair from every company that has at least
/// two. Single-pair companies stay entirely in `train`.
pub fn split_leave_one_out(interactions: &InteractionSet, seed: u64) -> SplitPair {
    let mut rng = seeded(seed);
    let mut holdout = Vec::new();
    for c in 0..interactions.n_companies() {
        let wells = interactions.observed(c);
        if wells.len() >= 2 {
            let pick = wells[rng.random_range(0..wells.len())];
            holdout.push((c, pick));
        }
    }
    let mut held = vec![None; interactions.n_companies()];
    for &(c, w) in &holdout {
        held[c] = Some(w);
    }
    let train_pairs = interactions
        .pairs()
        .iter()
        .copied()
        .filter(|&(c, w)| held[c] != Some(w))
        .collect();
    SplitPair {
        train: interactions.with_pairs(train_pairs),
        holdout,
    }
}
