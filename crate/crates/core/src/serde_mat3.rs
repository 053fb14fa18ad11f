//! Row-major `[[f64; 3]; 3]` serde representation for `Matrix3`.

use nalgebra::Matrix3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
    crate::mat3_to_rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
    let rows = <[[f64; 3]; 3]>::deserialize(d)?;
    Ok(crate::mat3_from_rows(rows))
}
