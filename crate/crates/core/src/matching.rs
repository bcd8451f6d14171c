//! Brute-force Hamming matching between binary feature sets.

use serde::{Deserialize, Serialize};

use crate::orb::{Descriptor256, FeatureSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub query_idx: usize,
    pub train_idx: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Largest Hamming distance (bits) a match may have to count as good.
    pub good_distance_max: u32,
    /// Keep only mutual nearest neighbours.
    pub cross_check: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            good_distance_max: 64,
            cross_check: true,
        }
    }
}

#[inline]
pub fn hamming(a: &Descriptor256, b: &Descriptor256) -> u32 {
    let (a, b) = (a.words(), b.words());
    (a[0] ^ b[0]).count_ones()
        + (a[1] ^ b[1]).count_ones()
        + (a[2] ^ b[2]).count_ones()
        + (a[3] ^ b[3]).count_ones()
}

/// Full |query| x |train| distance table, row-major by query.
fn distance_table(query: &[[u64; 4]], train: &[[u64; 4]]) -> Vec<u32> {
    let mut table = Vec::with_capacity(query.len() * train.len());
    for q in query {
        for t in train {
            table.push(
                (q[0] ^ t[0]).count_ones()
                    + (q[1] ^ t[1]).count_ones()
                    + (q[2] ^ t[2]).count_ones()
                    + (q[3] ^ t[3]).count_ones(),
            );
        }
    }
    table
}

fn words(set: &FeatureSet) -> Vec<[u64; 4]> {
    set.descriptors().map(Descriptor256::words).collect()
}

/// Index and value of the minimum, first index on ties.
fn argmin(values: impl Iterator<Item = u32>) -> Option<(usize, u32)> {
    values.enumerate().fold(None, |best, (i, d)| match best {
        Some((_, bd)) if bd <= d => best,
        _ => Some((i, d)),
    })
}

fn nearest_from_table(table: &[u32], n_query: usize, n_train: usize) -> Vec<Match> {
    if n_train == 0 {
        return Vec::new();
    }
    (0..n_query)
        .map(|q| {
            let row = &table[q * n_train..(q + 1) * n_train];
            let (train_idx, distance) = argmin(row.iter().copied()).expect("non-empty row");
            Match {
                query_idx: q,
                train_idx,
                distance,
            }
        })
        .collect()
}

fn cross_checked_from_table(table: &[u32], n_query: usize, n_train: usize) -> Vec<Match> {
    if n_query == 0 || n_train == 0 {
        return Vec::new();
    }
    let backward: Vec<usize> = (0..n_train)
        .map(|t| {
            argmin((0..n_query).map(|q| table[q * n_train + t]))
                .expect("non-empty column")
                .0
        })
        .collect();
    nearest_from_table(table, n_query, n_train)
        .into_iter()
        .filter(|m| backward[m.train_idx] == m.query_idx)
        .collect()
}

/// Nearest train feature for every query feature; ties go to the lowest
/// train index.
pub fn nearest_matches(query: &FeatureSet, train: &FeatureSet) -> Vec<Match> {
    let table = distance_table(&words(query), &words(train));
    nearest_from_table(&table, query.len(), train.len())
}

/// Mutual nearest neighbours: `q -> t` survives iff `q` is also the nearest
/// query feature of `t` under the same tie rule.
pub fn cross_checked(query: &FeatureSet, train: &FeatureSet) -> Vec<Match> {
    let table = distance_table(&words(query), &words(train));
    cross_checked_from_table(&table, query.len(), train.len())
}

/// Lowe-style ratio test over the two nearest train features. Not used by the
/// classifier, which relies on cross-checking.
pub fn ratio_test_matches(query: &FeatureSet, train: &FeatureSet, ratio: f64) -> Vec<Match> {
    let mut out = Vec::new();
    for (query_idx, q) in query.descriptors().enumerate() {
        let distances: Vec<u32> = train.descriptors().map(|t| hamming(q, t)).collect();
        let Some((train_idx, distance)) = argmin(distances.iter().copied()) else {
            continue;
        };
        let second = distances
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != train_idx)
            .map(|(_, &d)| d)
            .min();
        if second.is_none_or(|s| (distance as f64) < ratio * s as f64) {
            out.push(Match {
                query_idx,
                train_idx,
                distance,
            });
        }
    }
    out
}

/// Good matches between a test set and one reference: cross-checked (or plain
/// nearest when cross-checking is off) with distance `<= good_distance_max`.
pub fn good_matches(test: &FeatureSet, reference: &FeatureSet, params: &MatchParams) -> Vec<Match> {
    let table = distance_table(&words(test), &words(reference));
    let candidates = if params.cross_check {
        cross_checked_from_table(&table, test.len(), reference.len())
    } else {
        nearest_from_table(&table, test.len(), reference.len())
    };
    candidates
        .into_iter()
        .filter(|m| m.distance <= params.good_distance_max)
        .collect()
}

pub fn good_match_count(test: &FeatureSet, reference: &FeatureSet, params: &MatchParams) -> usize {
    good_matches(test, reference, params).len()
}
