use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ChoiceInstance, DatasetError};

pub const DEFAULT_N_RESPONDENTS: usize = 100;
pub const DEFAULT_N_TEST: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestSplit {
    /// Every scenario of the sampled respondents, in file order.
    pub train: Vec<ChoiceInstance>,
    /// Rows sampled from the remaining respondents, in file order.
    pub test: Vec<ChoiceInstance>,
    pub seed: u64,
}

/// Samples `n_respondents` respondents for the example pool and `n_test`
/// rows uniformly from everyone else.
pub fn split_train_test(
    data: &[ChoiceInstance],
    n_respondents: usize,
    n_test: usize,
    seed: u64,
) -> Result<TrainTestSplit, DatasetError> {
    if n_respondents == 0 || n_test == 0 {
        return Err(DatasetError::Sizing(
            "both the respondent pool and the test set must be non-empty".into(),
        ));
    }
    let mut respondents: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for d in data {
        if seen.insert(d.respondent.as_str()) {
            respondents.push(&d.respondent);
        }
    }
    if n_respondents > respondents.len() {
        return Err(DatasetError::Sizing(format!(
            "requested {n_respondents} training respondents but the dataset has {}",
            respondents.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: HashSet<&str> = index::sample(&mut rng, respondents.len(), n_respondents)
        .into_iter()
        .map(|i| respondents[i])
        .collect();

    let (train, rest): (Vec<&ChoiceInstance>, Vec<&ChoiceInstance>) =
        data.iter().partition(|d| picked.contains(d.respondent.as_str()));
    if n_test > rest.len() {
        return Err(DatasetError::Sizing(format!(
            "requested {n_test} test rows but only {} rows remain outside the training pool",
            rest.len()
        )));
    }
    let mut test_idx = index::sample(&mut rng, rest.len(), n_test).into_vec();
    test_idx.sort_unstable();

    Ok(TrainTestSplit {
        train: train.into_iter().cloned().collect(),
        test: test_idx.into_iter().map(|i| rest[i].clone()).collect(),
        seed,
    })
}
