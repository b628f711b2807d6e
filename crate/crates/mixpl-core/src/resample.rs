//! Labeled resampling: repeat-factor oversampling of tail categories.
//!
//! `r(c) = 1 / f(c)^power` where `f(c)` is the fraction of labeled images
//! containing category `c`; each image repeats by the max over its
//! categories. Fractional repeats materialize by stochastic rounding, so the
//! expected multiplicity equals `r(I)` exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{CategoryId, DatasetIndex, ImageId};
use crate::error::{Error, Result};

/// Per-category frequencies and the resulting repeat factors.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatPlan {
    pub power: f64,
    pub frequency: BTreeMap<CategoryId, f64>,
    pub category_repeat: BTreeMap<CategoryId, f64>,
    pub image_repeat: BTreeMap<ImageId, f64>,
    /// Categories with no labeled images; they cannot be resampled.
    pub unresamplable: Vec<CategoryId>,
}

/// Fraction of labeled images containing each category. Categories that
/// appear in no image are excluded and reported separately.
pub fn category_frequency(
    labeled: &DatasetIndex,
) -> Result<(BTreeMap<CategoryId, f64>, Vec<CategoryId>)> {
    if labeled.is_empty() {
        return Err(Error::Resample("labeled split is empty".into()));
    }
    let n = labeled.len() as f64;
    let mut freq = BTreeMap::new();
    let mut excluded = Vec::new();
    for &c in labeled.categories().keys() {
        let count = labeled
            .images_with_category(c)
            .map(|s| s.len())
            .unwrap_or(0);
        if count == 0 {
            excluded.push(c);
        } else {
            freq.insert(c, count as f64 / n);
        }
    }
    Ok((freq, excluded))
}

/// Apply the repeat-factor formulas. Images with no annotations get
/// `r(I) = 1`.
pub fn repeat_factors(
    labeled: &DatasetIndex,
    frequency: &BTreeMap<CategoryId, f64>,
    power: f64,
) -> Result<(BTreeMap<CategoryId, f64>, BTreeMap<ImageId, f64>)> {
    if !(0.0..=1.0).contains(&power) {
        return Err(Error::Resample(format!("power {power} outside [0, 1]")));
    }
    let category_repeat: BTreeMap<CategoryId, f64> = frequency
        .iter()
        .map(|(&c, &f)| (c, 1.0 / f.powf(power)))
        .collect();
    let image_repeat = labeled
        .images()
        .iter()
        .map(|img| {
            let r = img
                .categories()
                .iter()
                .filter_map(|c| category_repeat.get(c))
                .fold(1.0f64, |acc, &r| acc.max(r));
            (img.id, r)
        })
        .collect();
    Ok((category_repeat, image_repeat))
}

impl RepeatPlan {
    /// Build the full plan for a labeled split.
    pub fn build(labeled: &DatasetIndex, power: f64) -> Result<RepeatPlan> {
        let (frequency, unresamplable) = category_frequency(labeled)?;
        let (category_repeat, image_repeat) = repeat_factors(labeled, &frequency, power)?;
        Ok(RepeatPlan {
            power,
            frequency,
            category_repeat,
            image_repeat,
            unresamplable,
        })
    }

    /// Materialize one epoch: each image appears `floor(r)` times plus one
    /// more with probability `frac(r)`, shuffled.
    pub fn build_epoch(&self, rng: &mut ChaCha8Rng) -> Vec<ImageId> {
        let mut order = Vec::new();
        for (&id, &r) in &self.image_repeat {
            let mut copies = r.floor() as usize;
            if rng.random_bool((r - r.floor()).clamp(0.0, 1.0)) {
                copies += 1;
            }
            order.extend(std::iter::repeat_n(id, copies));
        }
        order.shuffle(rng);
        order
    }
}
