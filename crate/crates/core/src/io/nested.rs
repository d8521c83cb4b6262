//! Serializes a tensor as nested JSON arrays (`[[..], [..]]`), recovering
//! the shape from the nesting on the way back.

use serde::de::Error as _;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::autodiff::Tensor;
use crate::scalar::Scalar;

struct Nested<'a, S> {
    shape: &'a [usize],
    data: &'a [S],
}

impl<S: Scalar> Serialize for Nested<'_, S> {
    fn serialize<Z: Serializer>(&self, ser: Z) -> Result<Z::Ok, Z::Error> {
        match self.shape.split_first() {
            None => self.data[0].serialize(ser),
            Some((&n, rest)) => {
                let step: usize = rest.iter().product();
                let mut seq = ser.serialize_seq(Some(n))?;
                for i in 0..n {
                    seq.serialize_element(&Nested {
                        shape: rest,
                        data: &self.data[i * step..(i + 1) * step],
                    })?;
                }
                seq.end()
            }
        }
    }
}

pub fn serialize<S: Scalar, Z: Serializer>(t: &Tensor<S>, ser: Z) -> Result<Z::Ok, Z::Error> {
    Nested {
        shape: t.shape(),
        data: t.data(),
    }
    .serialize(ser)
}

pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(de: D) -> Result<Tensor<S>, D::Error> {
    let v = Value::deserialize(de)?;
    let mut shape = Vec::new();
    let mut probe = &v;
    while let Value::Array(items) = probe {
        shape.push(items.len());
        match items.first() {
            Some(first) => probe = first,
            None => break,
        }
    }
    let mut data = Vec::with_capacity(shape.iter().product());
    walk::<S, D::Error>(&v, &shape, &mut data)?;
    Tensor::new(shape, data).map_err(D::Error::custom)
}

fn walk<S: Scalar, E: serde::de::Error>(v: &Value, shape: &[usize], out: &mut Vec<S>) -> Result<(), E> {
    match (v, shape.split_first()) {
        (Value::Array(items), Some((&n, rest))) if items.len() == n => {
            for item in items {
                walk(item, rest, out)?;
            }
            Ok(())
        }
        (Value::Array(_), _) => Err(E::custom("ragged nested array")),
        (scalar, None) => {
            out.push(S::deserialize(scalar).map_err(E::custom)?);
            Ok(())
        }
        (_, Some(_)) => Err(E::custom("ragged nested array")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Wrap {
        #[serde(with = "super")]
        t: Tensor<f64>,
    }

    #[test]
    fn roundtrip_rank3() {
        let data: Vec<f64> = (0..24).map(|i| i as f64 * 0.1 + 1e-17).collect();
        let w = Wrap {
            t: Tensor::new(vec![2, 3, 4], data).unwrap(),
        };
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.starts_with(r#"{"t":[[["#));
        assert_eq!(serde_json::from_str::<Wrap>(&s).unwrap(), w);
        assert!(serde_json::from_str::<Wrap>(r#"{"t":[[1.0,2.0],[3.0]]}"#).is_err());
    }
}
