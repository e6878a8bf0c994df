//! JSON parameter checkpoints: a map from parameter name to shape and values.
//! Values are written with shortest round-trip formatting, so loading
//! restores every `f64` bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NumArray, ParamSet};
use crate::error::{ReqError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub type ParamMap = BTreeMap<String, ParamRecord>;

impl ParamSet {
    pub fn to_map(&self) -> ParamMap {
        self.iter()
            .map(|(name, v)| {
                (
                    name.to_string(),
                    ParamRecord {
                        shape: v.shape().to_vec(),
                        values: v.values().to_vec(),
                    },
                )
            })
            .collect()
    }

    /// Overwrites every parameter from `map`. Every name must be present with
    /// a matching shape.
    pub fn load_map(&mut self, map: &ParamMap) -> Result<()> {
        let names = self.names().to_vec();
        for (i, name) in names.iter().enumerate() {
            let record = map.get(name).ok_or_else(|| ReqError::Unknown {
                kind: "checkpoint parameter",
                name: name.clone(),
            })?;
            let loaded = NumArray::new(record.shape.clone(), record.values.clone())?;
            let slot = self.get_mut(i);
            if slot.shape() != loaded.shape() {
                return Err(ReqError::shape(
                    "checkpoint",
                    "parameter size",
                    slot.len(),
                    loaded.len(),
                ));
            }
            *slot = loaded;
        }
        Ok(())
    }
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    fs::write(path, serde_json::to_string(&params.to_map())?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamMap> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let n = values.len();
            let params = ParamSet::new(vec![("w".into(), NumArray::vector(values))]);
            let text = serde_json::to_string(&params.to_map()).unwrap();
            let map: ParamMap = serde_json::from_str(&text).unwrap();
            let mut restored = ParamSet::new(vec![("w".into(), NumArray::zeros(&[n]))]);
            restored.load_map(&map).unwrap();
            for (a, b) in params.flatten().iter().zip(restored.flatten()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn file_round_trip_and_missing_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let params = ParamSet::new(vec![
            ("a".into(), NumArray::vector(vec![0.1, 1.0 / 3.0])),
            (
                "b".into(),
                NumArray::matrix(1, 2, vec![-2.5e-300, 7.0]).unwrap(),
            ),
        ]);
        save_params(&path, &params).unwrap();
        let map = load_params(&path).unwrap();
        let mut restored = ParamSet::new(vec![
            ("a".into(), NumArray::zeros(&[2])),
            ("b".into(), NumArray::zeros(&[1, 2])),
        ]);
        restored.load_map(&map).unwrap();
        assert_eq!(restored.flatten(), params.flatten());

        let mut other = ParamSet::new(vec![("c".into(), NumArray::zeros(&[1]))]);
        assert!(other.load_map(&map).is_err());
    }
}
