//! Bundled figure recipes and stand-in datasets.

use std::path::Path;

use pobandit_core::datasets::synthetic_logistic_dataset;
use pobandit_core::model::random_unit_sphere;
use pobandit_core::rng::RandomStream;

use crate::config::{ConfigError, ScenarioSpec};
use crate::csvio::{self, LoadError, LoadedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

const FIG1: &[&str] = &[
    include_str!("../configs/fig1_d10.toml"),
    include_str!("../configs/fig1_d20.toml"),
    include_str!("../configs/fig1_d40.toml"),
    include_str!("../configs/fig1_d80.toml"),
];
const FIG2: &[&str] = &[
    include_str!("../configs/fig2_dx10.toml"),
    include_str!("../configs/fig2_dx20.toml"),
    include_str!("../configs/fig2_dx40.toml"),
];
const FIG3: &[&str] = &[
    include_str!("../configs/fig3_n10.toml"),
    include_str!("../configs/fig3_n20.toml"),
    include_str!("../configs/fig3_n30.toml"),
];
const FIG4: &[&str] = &[include_str!("../configs/fig4_egg.toml"), include_str!("../configs/fig4_eye.toml")];

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }

    pub fn specs(self) -> Result<Vec<ScenarioSpec>, ConfigError> {
        let docs = match self {
            Figure::Fig1 => FIG1,
            Figure::Fig2 => FIG2,
            Figure::Fig3 => FIG3,
            Figure::Fig4 => FIG4,
        };
        docs.iter().map(|d| ScenarioSpec::from_toml(d)).collect()
    }
}

/// A stand-in dataset drawn from a known multinomial logistic model.
#[derive(Debug, Clone, Copy)]
pub struct StandIn {
    pub name: &'static str,
    pub features: usize,
    pub classes: usize,
    pub rows: usize,
    pub seed: u64,
    /// Norm of each class coefficient vector.
    pub radius: f64,
}

pub const STAND_INS: [StandIn; 2] = [
    StandIn { name: "egg", features: 14, classes: 2, rows: 2000, seed: 14, radius: 2.0 },
    StandIn { name: "eye", features: 26, classes: 3, rows: 2000, seed: 26, radius: 2.0 },
];

const EGG_CSV: &str = include_str!("../data/egg.csv");
const EYE_CSV: &str = include_str!("../data/eye.csv");

impl StandIn {
    pub fn find(name: &str) -> Option<StandIn> {
        STAND_INS.iter().copied().find(|s| s.name == name)
    }

    /// Regenerates the rows shipped under `data/<name>.csv`.
    pub fn generate(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = RandomStream::from_seed(self.seed);
        let mu: Vec<Vec<f64>> = (0..self.classes).map(|_| random_unit_sphere(self.features, self.radius, &mut rng)).collect();
        synthetic_logistic_dataset(self.rows, &mu, &mut rng)
    }

    fn bundled_csv(&self) -> &'static str {
        match self.name {
            "egg" => EGG_CSV,
            _ => EYE_CSV,
        }
    }
}

/// Loads a dataset from a path, or from the embedded stand-ins when the path
/// is `bundled:<name>`.
pub fn load_dataset(path: &Path, label: &str) -> Result<LoadedDataset, LoadError> {
    if let Some(name) = path.to_str().and_then(|p| p.strip_prefix("bundled:")) {
        let standin = StandIn::find(name).ok_or_else(|| LoadError::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such bundled dataset"),
        })?;
        return csvio::read_csv(standin.bundled_csv().as_bytes(), label);
    }
    csvio::load_csv(path, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_parses() {
        for fig in [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4] {
            let specs = fig.specs().unwrap();
            assert!(!specs.is_empty());
            for s in specs {
                assert!(s.experiment.starts_with(fig.name()));
            }
        }
    }

    #[test]
    fn bundled_datasets_load() {
        let egg = load_dataset(Path::new("bundled:egg"), "label").unwrap();
        assert_eq!((egg.data.d_x(), egg.data.num_classes()), (14, 2));
        let eye = load_dataset(Path::new("bundled:eye"), "label").unwrap();
        assert_eq!((eye.data.d_x(), eye.data.num_classes()), (26, 3));
        assert!(load_dataset(Path::new("bundled:nope"), "label").is_err());
    }

    #[test]
    fn bundled_files_match_generator() {
        for s in STAND_INS {
            let (features, labels) = s.generate();
            let loaded = csvio::read_csv(s.bundled_csv().as_bytes(), "label").unwrap();
            assert_eq!(loaded.data.len(), s.rows);
            assert_eq!(loaded.data.labels(), &labels[..]);
            assert_eq!(loaded.data.d_x(), features[0].len());
        }
    }
}
