//! Synthetic company-well data with a planted two-cluster preference
//! structure. Used by the acceptance suite, the benchmarks and the bundled
//! example fixture.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, InteractionSet, WellFeatureTable, BASE_FEATURE_COLUMNS};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Shape of the planted dataset.
///
/// Companies alternate between clusters. Wells are split into equal
/// contiguous blocks, one per cluster; the first `core_wells` of each block
/// are the wells that cluster prefers. Every company takes
/// `interactions_per_company - noise_interactions` wells from its cluster's
/// core and the rest uniformly from the remaining catalog. Elevation is
/// shifted per cluster block so the auxiliary columns carry cluster signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub companies: usize,
    pub wells: usize,
    pub clusters: usize,
    pub interactions_per_company: usize,
    pub core_wells: usize,
    pub noise_interactions: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            companies: 50,
            wells: 200,
            clusters: 2,
            interactions_per_company: 20,
            core_wells: 25,
            noise_interactions: 2,
        }
    }
}

impl PlantedConfig {
    fn validate(&self) -> Result<()> {
        let block = self.wells / self.clusters.max(1);
        if self.clusters == 0 || self.companies == 0 || block == 0 {
            return Err(Error::Config(
                "planted data needs companies, wells and clusters".into(),
            ));
        }
        if self.core_wells > block {
            return Err(Error::Config("core_wells exceeds the cluster block".into()));
        }
        if self.noise_interactions > self.interactions_per_company
            || self.interactions_per_company - self.noise_interactions > self.core_wells
            || self.noise_interactions > self.wells - self.core_wells
        {
            return Err(Error::Config(
                "interaction counts do not fit the well blocks".into(),
            ));
        }
        Ok(())
    }

    pub fn cluster_of_company(&self, company: usize) -> usize {
        company % self.clusters
    }

    /// Cluster block a well index falls in.
    pub fn cluster_of_well(&self, well: usize) -> usize {
        (well / (self.wells / self.clusters)).min(self.clusters - 1)
    }

    pub fn core_range(&self, cluster: usize) -> std::ops::Range<usize> {
        let start = cluster * (self.wells / self.clusters);
        start..start + self.core_wells
    }
}

/// Raw interactions and unscaled well attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedData {
    pub config: PlantedConfig,
    pub interactions: InteractionSet,
    pub features: WellFeatureTable,
}

impl PlantedData {
    /// Dataset with standardized attributes over the full well catalog.
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.interactions.clone(), self.features.standardize())
    }

    /// Contents of `interactions.csv`.
    pub fn interactions_csv(&self) -> String {
        let mut out = String::from("operator_id,api_number\n");
        for &(c, w) in self.interactions.pairs() {
            let _ = writeln!(
                out,
                "{},{}",
                self.interactions.company_id(c),
                self.interactions.well_id(w)
            );
        }
        out
    }

    /// Contents of `wells.csv`, one row per catalog well.
    pub fn wells_csv(&self) -> String {
        let mut out = format!("api_number,{}\n", BASE_FEATURE_COLUMNS.join(","));
        for w in 0..self.features.n_wells() {
            let row = self.features.row(w);
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.interactions.well_id(w),
                row[0],
                row[1],
                row[2]
            );
        }
        out
    }
}

pub fn company_id(index: usize) -> String {
    format!("OP{:04}", index + 1)
}

pub fn well_api(index: usize) -> String {
    format!("31-{:03}-{:05}", 1 + index % 61, index + 1)
}

pub fn planted(config: &PlantedConfig, seed: u64) -> Result<PlantedData> {
    config.validate()?;
    let mut rng = seeded(seed);
    let mut pairs = Vec::with_capacity(config.companies * config.interactions_per_company);
    let from_core = config.interactions_per_company - config.noise_interactions;
    for c in 0..config.companies {
        let core = config.core_range(config.cluster_of_company(c));
        let mut wells: Vec<usize> = sample(&mut rng, core.len(), from_core)
            .into_iter()
            .map(|i| core.start + i)
            .collect();
        let outside: Vec<usize> = (0..config.wells).filter(|w| !core.contains(w)).collect();
        wells.extend(
            sample(&mut rng, outside.len(), config.noise_interactions)
                .into_iter()
                .map(|i| outside[i]),
        );
        pairs.extend(wells.into_iter().map(|w| (c, w)));
    }
    let interactions = InteractionSet::from_pairs(
        (0..config.companies).map(company_id).collect(),
        (0..config.wells).map(well_api).collect(),
        pairs,
    )?;

    let production = Normal::new(8.0, 1.0).expect("valid normal");
    let elevation_noise = Normal::new(0.0, 60.0).expect("valid normal");
    let mut values = Vec::with_capacity(config.wells * 3);
    for w in 0..config.wells {
        let cluster = config.cluster_of_well(w) as f64;
        // Rounded so the CSV form parses back to the same values.
        let prod = (production.sample(&mut rng) as f64).exp().round();
        let elev = (300.0 + 400.0 * cluster + elevation_noise.sample(&mut rng)).round();
        let duration = rng.random_range(30..7300) as f64;
        values.extend([prod, elev, duration]);
    }
    let features = WellFeatureTable::new(
        BASE_FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        config.wells,
        values,
    )?;
    Ok(PlantedData {
        config: config.clone(),
        interactions,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_matches_config() {
        let data = planted(&PlantedConfig::default(), 1).unwrap();
        assert_eq!(data.interactions.n_companies(), 50);
        assert_eq!(data.interactions.n_wells(), 200);
        assert_eq!(data.interactions.len(), 1000);
        for c in 0..50 {
            let owned = data.interactions.observed(c);
            assert_eq!(owned.len(), 20);
            let core = data.config.core_range(data.config.cluster_of_company(c));
            assert_eq!(owned.iter().filter(|w| core.contains(w)).count(), 18);
        }
        assert_eq!(data, planted(&PlantedConfig::default(), 1).unwrap());
    }

    #[test]
    fn impossible_shapes_are_rejected() {
        let bad = PlantedConfig {
            core_wells: 10,
            ..Default::default()
        };
        assert!(planted(&bad, 0).is_err());
    }
}
