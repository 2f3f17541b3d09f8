use nalgebra::RealField;
use num_traits::ToPrimitive;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the numerical core is written against: `f32` or `f64`.
pub trait Real:
    RealField + Copy + ToPrimitive + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
