//! Mixed-type similarity between survey instances and few-shot example
//! selection (targeted top-k or uniform random).
//!
//! The total similarity is a weighted sum of four group components:
//! sociodemographic, numeric trip, categorical trip and additional
//! variables. Categorical groups average exact matching (nominal) and
//! discrete proximity (ordinal); the numeric group uses inverse Euclidean
//! distance over min-max scaled values. Attributes missing on either side
//! are skipped, and a component with nothing to compare is dropped with the
//! remaining weights renormalized.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{
    AttributeGroup, AttributeKind, AttributeSchema, ChoiceInstance, NumericNormalizer, Value,
};

/// Default number of in-context examples.
pub const DEFAULT_K: usize = 5;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("invalid similarity weights: {0}")]
    InvalidWeights(String),
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no attribute of group {0:?} is present on both instances")]
    UndefinedComponent(AttributeGroup),
    #[error("every weighted similarity component is undefined for this pair")]
    AllComponentsUndefined,
    #[error("pool of {pool} instances cannot supply {k} examples")]
    PoolTooSmall { pool: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub socio: f64,
    pub trip_num: f64,
    pub trip_cat: f64,
    pub additional: f64,
}

impl SimilarityWeights {
    /// Default weights for the Swissmetro survey.
    pub const SWISSMETRO: SimilarityWeights = SimilarityWeights {
        socio: 0.35,
        trip_num: 0.30,
        trip_cat: 0.15,
        additional: 0.20,
    };

    pub fn new(socio: f64, trip_num: f64, trip_cat: f64, additional: f64) -> Result<Self, SimilarityError> {
        let w = Self { socio, trip_num, trip_cat, additional };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        let all = [self.socio, self.trip_num, self.trip_cat, self.additional];
        if all.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(SimilarityError::InvalidWeights(format!(
                "each weight must lie in [0, 1], got {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(SimilarityError::InvalidWeights(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, group: AttributeGroup) -> f64 {
        match group {
            AttributeGroup::Socio => self.socio,
            AttributeGroup::TripNum => self.trip_num,
            AttributeGroup::TripCat => self.trip_cat,
            AttributeGroup::Additional => self.additional,
        }
    }
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self::SWISSMETRO
    }
}

/// Per-component scores of one comparison. `None` marks a component with
/// no comparable attribute; it takes no part in the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub socio: Option<f64>,
    pub trip_num: Option<f64>,
    pub trip_cat: Option<f64>,
    pub additional: Option<f64>,
    pub total: f64,
}

impl SimilarityBreakdown {
    pub fn component(&self, group: AttributeGroup) -> Option<f64> {
        match group {
            AttributeGroup::Socio => self.socio,
            AttributeGroup::TripNum => self.trip_num,
            AttributeGroup::TripCat => self.trip_cat,
            AttributeGroup::Additional => self.additional,
        }
    }
}

/// Discrete proximity of two ordinal levels.
pub fn ordinal_similarity(a: usize, b: usize) -> f64 {
    match a.abs_diff(b) {
        0 => 1.0,
        1 => 0.5,
        _ => 0.0,
    }
}

/// `1 / (1 + ||x - y||)` over scaled vectors.
pub fn numeric_group_similarity(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    if x.len() != y.len() {
        return Err(SimilarityError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let dist = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 / (1.0 + dist))
}

/// Mean per-attribute score over the categorical attributes of `group`
/// that are present on both instances.
pub fn categorical_group_similarity(
    a: &ChoiceInstance,
    b: &ChoiceInstance,
    schema: &AttributeSchema,
    group: AttributeGroup,
) -> Result<f64, SimilarityError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for attr in schema.group(group).filter(|a| a.is_categorical()) {
        let (Value::Level(x), Value::Level(y)) = (a.value(&attr.name), b.value(&attr.name)) else {
            continue;
        };
        sum += match attr.kind {
            AttributeKind::Ordinal => ordinal_similarity(x, y),
            _ => f64::from(u8::from(x == y)),
        };
        n += 1;
    }
    if n == 0 {
        return Err(SimilarityError::UndefinedComponent(group));
    }
    Ok(sum / n as f64)
}

/// One selected example: its position in the pool and how it scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub index: usize,
    pub similarity: SimilarityBreakdown,
}

/// Similarity over one schema with fitted weights and scaling.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityModel<'a> {
    schema: &'a AttributeSchema,
    weights: SimilarityWeights,
    normalizer: &'a NumericNormalizer,
}

impl<'a> SimilarityModel<'a> {
    pub fn new(
        schema: &'a AttributeSchema,
        weights: SimilarityWeights,
        normalizer: &'a NumericNormalizer,
    ) -> Self {
        Self { schema, weights, normalizer }
    }

    pub fn weights(&self) -> SimilarityWeights {
        self.weights
    }

    /// Numeric component over the continuous attributes present on both
    /// instances; `None` when there are none.
    pub fn numeric_component(&self, a: &ChoiceInstance, b: &ChoiceInstance) -> Option<f64> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for attr in self.schema.group(AttributeGroup::TripNum) {
            let (Value::Number(va), Value::Number(vb)) = (a.value(&attr.name), b.value(&attr.name)) else {
                continue;
            };
            // Attributes absent from the normalizer were never fitted; skip.
            let (Some(sa), Some(sb)) = (
                self.normalizer.scale(&attr.name, va),
                self.normalizer.scale(&attr.name, vb),
            ) else {
                continue;
            };
            x.push(sa);
            y.push(sb);
        }
        if x.is_empty() {
            return None;
        }
        numeric_group_similarity(&x, &y).ok()
    }

    /// Categorical levels and scaled continuous values in schema order,
    /// computed once per instance so repeated comparisons avoid lookups.
    pub fn encode(&self, inst: &ChoiceInstance) -> EncodedInstance {
        let mut levels: [Vec<Option<usize>>; 4] = Default::default();
        let mut numbers = Vec::new();
        for (slot, g) in AttributeGroup::ALL.into_iter().enumerate() {
            if g == AttributeGroup::TripNum {
                for attr in self.schema.group(g) {
                    numbers.push(match inst.value(&attr.name) {
                        Value::Number(v) => self.normalizer.scale(&attr.name, v),
                        _ => None,
                    });
                }
            } else {
                for attr in self.schema.group(g).filter(|a| a.is_categorical()) {
                    levels[slot].push(match inst.value(&attr.name) {
                        Value::Level(l) => Some(l),
                        _ => None,
                    });
                }
            }
        }
        EncodedInstance { levels, numbers }
    }

    fn categorical_encoded(&self, slot: usize, a: &EncodedInstance, b: &EncodedInstance) -> Option<f64> {
        let g = AttributeGroup::ALL[slot];
        let mut sum = 0.0;
        let mut n = 0usize;
        let attrs = self.schema.group(g).filter(|a| a.is_categorical());
        for ((attr, x), y) in attrs.zip(&a.levels[slot]).zip(&b.levels[slot]) {
            let (Some(x), Some(y)) = (x, y) else { continue };
            sum += match attr.kind {
                AttributeKind::Ordinal => ordinal_similarity(*x, *y),
                _ => f64::from(u8::from(x == y)),
            };
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }

    fn numeric_encoded(a: &EncodedInstance, b: &EncodedInstance) -> Option<f64> {
        let mut sq = 0.0;
        let mut n = 0usize;
        for (x, y) in a.numbers.iter().zip(&b.numbers) {
            let (Some(x), Some(y)) = (x, y) else { continue };
            sq += (x - y) * (x - y);
            n += 1;
        }
        (n > 0).then(|| 1.0 / (1.0 + sq.sqrt()))
    }

    /// Weighted total over two instances encoded by this model.
    pub fn total_encoded(&self, a: &EncodedInstance, b: &EncodedInstance) -> Result<SimilarityBreakdown, SimilarityError> {
        let mut bd = SimilarityBreakdown {
            socio: self.categorical_encoded(0, a, b),
            trip_num: Self::numeric_encoded(a, b),
            trip_cat: self.categorical_encoded(2, a, b),
            additional: self.categorical_encoded(3, a, b),
            total: 0.0,
        };
        let mut weighted = 0.0;
        let mut weight_sum = 0.0;
        for g in AttributeGroup::ALL {
            if let Some(s) = bd.component(g) {
                weighted += self.weights.get(g) * s;
                weight_sum += self.weights.get(g);
            }
        }
        if weight_sum <= 0.0 {
            return Err(SimilarityError::AllComponentsUndefined);
        }
        bd.total = (weighted / weight_sum).clamp(0.0, 1.0);
        Ok(bd)
    }

    pub fn total(&self, a: &ChoiceInstance, b: &ChoiceInstance) -> Result<SimilarityBreakdown, SimilarityError> {
        self.total_encoded(&self.encode(a), &self.encode(b))
    }

    /// The `k` most similar pool members, best first; equal totals keep
    /// pool order.
    pub fn select_targeted(
        &self,
        test: &ChoiceInstance,
        pool: &[ChoiceInstance],
        k: usize,
    ) -> Result<Vec<Scored>, SimilarityError> {
        let encoded: Vec<EncodedInstance> = pool.iter().map(|p| self.encode(p)).collect();
        self.select_targeted_encoded(&self.encode(test), &encoded, k)
    }

    /// [`Self::select_targeted`] over a pool encoded once up front.
    pub fn select_targeted_encoded(
        &self,
        test: &EncodedInstance,
        pool: &[EncodedInstance],
        k: usize,
    ) -> Result<Vec<Scored>, SimilarityError> {
        if pool.len() < k {
            return Err(SimilarityError::PoolTooSmall { pool: pool.len(), k });
        }
        let mut scored = pool
            .iter()
            .enumerate()
            .map(|(index, cand)| Ok(Scored { index, similarity: self.total_encoded(test, cand)? }))
            .collect::<Result<Vec<_>, SimilarityError>>()?;
        // stable sort keeps earlier pool entries ahead on ties
        scored.sort_by(|x, y| y.similarity.total.total_cmp(&x.similarity.total));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Instance values prepared by [`SimilarityModel::encode`]; only
/// comparable with encodings from a model over the same schema and
/// scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    levels: [Vec<Option<usize>>; 4],
    numbers: Vec<Option<f64>>,
}

/// How in-context examples are chosen for a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotType {
    Zeroshot,
    FewshotRandom,
    FewshotTargeted,
}

impl ShotType {
    pub const ALL: [ShotType; 3] = [ShotType::Zeroshot, ShotType::FewshotRandom, ShotType::FewshotTargeted];

    pub fn as_str(&self) -> &'static str {
        match self {
            ShotType::Zeroshot => "zeroshot",
            ShotType::FewshotRandom => "fewshot_random",
            ShotType::FewshotTargeted => "fewshot_targeted",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            ShotType::Zeroshot => "Zero-Shot",
            ShotType::FewshotRandom => "Random Few-Shot",
            ShotType::FewshotTargeted => "Targeted Few-Shot",
        }
    }
}

impl std::fmt::Display for ShotType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `k` distinct pool indices drawn uniformly without replacement.
pub fn select_random(pool_len: usize, k: usize, seed: u64) -> Result<Vec<usize>, SimilarityError> {
    if pool_len < k {
        return Err(SimilarityError::PoolTooSmall { pool: pool_len, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, pool_len, k).into_vec())
}

/// Per-agent seed so every synthetic commuter gets its own draw.
pub fn derive_seed(run_seed: u64, fingerprint: &str, agent_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(fingerprint.as_bytes());
    h.update([0u8]);
    h.update(agent_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
