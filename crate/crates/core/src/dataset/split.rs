use sha2::{Digest, Sha256};

use super::{DatasetError, ManifestRow, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.9,
            val: 0.05,
            test: 0.05,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, DatasetError> {
        let r = Self { train, val, test };
        let all = [train, val, test];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Ratios(all));
        }
        Ok(r)
    }
}

/// Uniform value in `[0, 1)` from a hash of the scene key.
fn scene_unit(k: usize, scene_id: u32) -> f64 {
    let digest = Sha256::digest(format!("k{k}/scene{scene_id:04}").as_bytes());
    let v = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (v >> 11) as f64 / (1u64 << 53) as f64
}

/// Split of a scene; every pose of the scene lands in the same split.
pub fn split_of(k: usize, scene_id: u32, ratios: &SplitRatios) -> Split {
    let u = scene_unit(k, scene_id);
    if u < ratios.train {
        Split::Train
    } else if u < ratios.train + ratios.val {
        Split::Val
    } else if ratios.test > 0.0 {
        Split::Test
    } else if ratios.val > 0.0 {
        Split::Val
    } else {
        Split::Train
    }
}

pub fn split_assign(mut rows: Vec<ManifestRow>, ratios: &SplitRatios) -> Vec<ManifestRow> {
    for row in &mut rows {
        row.split = split_of(row.k, row.scene_id, ratios);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_train_ratio() {
        let r = SplitRatios::new(1.0, 0.0, 0.0).unwrap();
        assert!((0..500).all(|s| split_of(3, s, &r) == Split::Train));
    }

    #[test]
    fn ratios_must_sum_to_one() {
        assert!(SplitRatios::new(0.5, 0.2, 0.2).is_err());
        assert!(SplitRatios::new(1.2, -0.2, 0.0).is_err());
    }
}
