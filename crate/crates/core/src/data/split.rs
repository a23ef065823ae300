use std::fmt;
use std::io;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::patch::Patch;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub patch_id: usize,
    pub scene_id: usize,
    pub row: usize,
    pub col: usize,
    pub split: Split,
}

/// Assignment of every patch to train/val/test, ordered by patch id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub seed: u64,
    pub entries: Vec<SplitEntry>,
}

/// Shuffles patches with `seed` and cuts the permutation into
/// `round(r₀·n)` train, `round(r₁·n)` val and the remainder test.
///
/// `keys` lists `(scene_id, row, col)` per patch; patch ids are positions.
pub fn split_dataset(keys: &[(usize, usize, usize)], ratios: (f64, f64, f64), seed: u64) -> Result<SplitManifest> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n = keys.len();
    if n < 10 {
        return Err(Error::data(format!("need at least 10 patches to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let mut split = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        split[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let entries = keys
        .iter()
        .enumerate()
        .map(|(patch_id, &(scene_id, row, col))| SplitEntry {
            patch_id,
            scene_id,
            row,
            col,
            split: split[patch_id],
        })
        .collect();
    Ok(SplitManifest { seed, entries })
}

impl SplitManifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn ids(&self, split: Split) -> Vec<usize> {
        self.entries.iter().filter(|e| e.split == split).map(|e| e.patch_id).collect()
    }

    /// Header `patch_id,scene_id,row,col,split`, one row per patch.
    pub fn write_csv(&self, w: impl io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for e in &self.entries {
            csv.serialize(e)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl io::Read, seed: u64) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(r);
        let entries = csv.deserialize().collect::<Result<Vec<SplitEntry>, _>>()?;
        if entries.iter().enumerate().any(|(i, e)| e.patch_id != i) {
            return Err(Error::data("split manifest patch ids must be 0..n in order"));
        }
        Ok(Self { seed, entries })
    }

    /// Borrows the patches of one split. `patches` is indexed by patch id.
    pub fn partition<'a>(&self, patches: &'a [Patch], split: Split) -> Result<Partition<'a>> {
        if patches.len() != self.entries.len() {
            return Err(Error::dim(format!(
                "manifest lists {} patches, got {}",
                self.entries.len(),
                patches.len()
            )));
        }
        Ok(Partition {
            split,
            patches: self.ids(split).into_iter().map(|i| &patches[i]).collect(),
        })
    }
}

/// Read-only view of the patches in one split. Only obtainable from a
/// [`SplitManifest`], so consumers can insist on a particular split.
pub struct Partition<'a> {
    split: Split,
    patches: Vec<&'a Patch>,
}

impl<'a> Partition<'a> {
    pub fn split(&self) -> Split {
        self.split
    }

    pub fn patches(&self) -> &[&'a Patch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}
