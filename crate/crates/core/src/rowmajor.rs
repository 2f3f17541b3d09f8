//! Serde adapters storing `nalgebra` matrices as row-major nested arrays.
//!
//! Ragged rows are rejected while the rows are being read, so a JSON parser
//! reports the position of the offending row.

use std::fmt;
use std::marker::PhantomData;

use nalgebra::{DMatrix, DVector};
use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Real;

struct Rows<'a, T: Real>(&'a DMatrix<T>);

impl<T: Real> Serialize for Rows<'_, T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m = self.0;
        let mut seq = s.serialize_seq(Some(m.nrows()))?;
        for r in 0..m.nrows() {
            let row: Vec<T> = m.row(r).iter().copied().collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

struct RowsVisitor<T>(PhantomData<T>);

impl<'de, T: Real> Visitor<'de> for RowsVisitor<T> {
    type Value = DMatrix<T>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a non-empty row-major array of equal-length numeric rows")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
        let mut data: Vec<T> = Vec::new();
        let mut ncols: Option<usize> = None;
        let mut nrows = 0usize;
        while let Some(row) = seq.next_element::<Vec<T>>()? {
            match ncols {
                None => ncols = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(de::Error::custom(format!(
                        "matrix row {} has {} entries, expected {}",
                        nrows,
                        row.len(),
                        n
                    )))
                }
                _ => {}
            }
            data.extend(row);
            nrows += 1;
        }
        if nrows == 0 {
            return Err(de::Error::custom("matrix has no rows"));
        }
        Ok(DMatrix::from_row_slice(nrows, ncols.unwrap_or(0), &data))
    }
}

struct MatrixDe<T: Real>(DMatrix<T>);

impl<'de, T: Real> Deserialize<'de> for MatrixDe<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_seq(RowsVisitor(PhantomData)).map(MatrixDe)
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(m: &DMatrix<T>, s: S) -> Result<S::Ok, S::Error> {
        Rows(m).serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<DMatrix<T>, D::Error> {
        MatrixDe::deserialize(d).map(|m| m.0)
    }
}

pub mod matrix_seq {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(ms: &[DMatrix<T>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(ms.len()))?;
        for m in ms {
            seq.serialize_element(&Rows(m))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<DMatrix<T>>, D::Error> {
        let v: Vec<MatrixDe<T>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|m| m.0).collect())
    }
}

pub mod vector_seq {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(vs: &[DVector<T>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(vs.len()))?;
        for v in vs {
            let flat: Vec<T> = v.iter().copied().collect();
            seq.serialize_element(&flat)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<DVector<T>>, D::Error> {
        let v: Vec<Vec<T>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(DVector::from_vec).collect())
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(v: &DVector<T>, s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<T> = v.iter().copied().collect();
        flat.serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<DVector<T>, D::Error> {
        Ok(DVector::from_vec(Vec::deserialize(d)?))
    }
}
