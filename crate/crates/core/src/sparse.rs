//! Serde helper storing a mostly-zero vector as its length plus non-zero
//! entries.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Sparse {
    len: usize,
    nonzero: BTreeMap<usize, f64>,
}

pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    Sparse {
        len: v.len(),
        nonzero: v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i, *x))
            .collect(),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let sp = Sparse::deserialize(d)?;
    let mut v = vec![0.0; sp.len];
    for (i, x) in sp.nonzero {
        if i >= sp.len {
            return Err(serde::de::Error::custom(format!(
                "sparse index {i} out of range {}",
                sp.len
            )));
        }
        v[i] = x;
    }
    Ok(v)
}
