//! Parameter sets and training splits for the three public benchmark scenes.

use crate::error::{Result, SmsbError};
use crate::io::DEFAULT_PALETTE;
use crate::pipeline::{FitParams, SplitSpec};
use crate::select::MaskMode;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub width: usize,
    pub height: usize,
    /// Band count after removing the noisy bands.
    pub bands: usize,
    pub group_size: usize,
    pub block_count: usize,
    pub atoms: usize,
    pub active_blocks: usize,
    pub class_names: &'static [&'static str],
    pub train_per_class: &'static [usize],
    pub test_per_class: &'static [usize],
}

impl Preset {
    pub fn fit_params(&self) -> FitParams {
        FitParams::new(
            self.group_size,
            self.block_count,
            self.atoms,
            MaskMode::TopN(self.active_blocks),
        )
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec::PerClass(self.train_per_class.to_vec())
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn colors(&self) -> Vec<[u8; 3]> {
        DEFAULT_PALETTE[..self.class_count()].to_vec()
    }
}

pub const INDIAN_PINES: Preset = Preset {
    name: "indian-pines",
    width: 145,
    height: 145,
    bands: 200,
    group_size: 12,
    block_count: 10,
    atoms: 28,
    active_blocks: 8,
    class_names: &[
        "Alfalfa",
        "Corn-no till",
        "Corn-min till",
        "Corn",
        "Grass/pasture-mowed",
        "Grass-trees",
        "Grass/pasture",
        "Hay-windrowed",
        "Oats",
        "Soybean-no till",
        "Soybean-min till",
        "Soybean-clean till",
        "Wheat",
        "Woods",
        "Bldg-grass-trees-drives",
        "Stone-steel-towers",
    ],
    train_per_class: &[6, 153, 84, 28, 48, 64, 4, 48, 4, 96, 170, 63, 18, 100, 48, 8],
    test_per_class: &[40, 1275, 746, 245, 435, 666, 24, 430, 16, 876, 2285, 530, 187, 1165, 338, 85],
};

pub const PAVIA_UNIVERSITY: Preset = Preset {
    name: "pavia-university",
    width: 340,
    height: 610,
    bands: 103,
    group_size: 13,
    block_count: 10,
    atoms: 40,
    active_blocks: 8,
    class_names: &[
        "Asphalt",
        "Meadows",
        "Gravel",
        "Trees",
        "Painted metal sheets",
        "Bare Soil",
        "Bitumen",
        "Self-Blocking Bricks",
        "Shadows",
    ],
    train_per_class: &[548, 540, 392, 524, 265, 532, 375, 514, 231],
    test_per_class: &[6083, 18109, 1707, 2540, 1080, 4497, 955, 3168, 716],
};

pub const SALINAS: Preset = Preset {
    name: "salinas",
    width: 217,
    height: 512,
    bands: 204,
    group_size: 32,
    block_count: 7,
    atoms: 29,
    active_blocks: 7,
    class_names: &[
        "Brocoli-green-weeds-1",
        "Brocoli-green-weeds-2",
        "Fallow",
        "Fallow-rough-plow",
        "Fallow-smooth",
        "Stubble",
        "Celery",
        "Grapes-untrained",
        "Soil-vinyard-develop",
        "Corn-senesced-green-weeds",
        "Lettuce-romaine-4wk",
        "Lettuce-romaine-5wk",
        "Lettuce-romaine-6wk",
        "Lettuce-romaine-7wk",
        "Vinyard-untrained",
        "Vinyard-vertical-trellis",
    ],
    train_per_class: &[201, 372, 197, 139, 268, 396, 358, 1127, 620, 328, 107, 192, 91, 107, 326, 180],
    test_per_class: &[1808, 3354, 1779, 1255, 2410, 3563, 3221, 10144, 5583, 2950, 961, 1735, 825, 963, 6942, 1627],
};

pub const ALL: [&Preset; 3] = [&INDIAN_PINES, &PAVIA_UNIVERSITY, &SALINAS];

pub fn preset(name: &str) -> Result<&'static Preset> {
    ALL.iter().copied().find(|p| p.name == name).ok_or_else(|| {
        SmsbError::Config(format!(
            "unknown preset `{name}` (known: {})",
            ALL.map(|p| p.name).join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::plan_partition_dims;

    #[test]
    fn tables_are_consistent() {
        for p in ALL {
            assert_eq!(p.train_per_class.len(), p.class_count());
            assert_eq!(p.test_per_class.len(), p.class_count());
            assert!(p.active_blocks <= p.block_count);
            let plan = plan_partition_dims(p.width, p.height, p.bands, p.group_size, p.block_count).unwrap();
            assert_eq!(plan.block_size() * p.block_count + plan.trimmed_bands(), p.bands);
        }
    }

    #[test]
    fn trimming_per_scene() {
        let t = |p: &Preset| {
            plan_partition_dims(p.width, p.height, p.bands, p.group_size, p.block_count)
                .unwrap()
                .trimmed_bands()
        };
        assert_eq!(t(&INDIAN_PINES), 0);
        assert_eq!(t(&PAVIA_UNIVERSITY), 3);
        assert_eq!(t(&SALINAS), 1);
    }

    #[test]
    fn lookup() {
        assert_eq!(preset("indian-pines").unwrap().atoms, 28);
        assert!(preset("houston").is_err());
    }
}
