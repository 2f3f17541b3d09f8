//! Generalization bounds for families of certified LPV systems, empirical
//! Rademacher complexity, and Monte-Carlo checks of the bounds.
//!
//! Every logarithm is natural.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

pub mod experiment;
pub mod rademacher;

pub use experiment::{gap_experiment, GapExperimentConfig, GapReport, TrialRecord};
pub use rademacher::{empirical_rademacher, RademacherEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Absolute,
}

/// Elementwise loss with `l(y, y) = 0` and Lipschitz constant `k_ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LossSpec<T: Real> {
    pub kind: LossKind,
    #[serde(rename = "K_ell")]
    pub k_ell: T,
}

impl<T: Real> LossSpec<T> {
    pub fn absolute() -> Self {
        LossSpec {
            kind: LossKind::Absolute,
            k_ell: T::one(),
        }
    }

    pub fn eval(&self, prediction: T, target: T) -> T {
        match self.kind {
            LossKind::Absolute => (prediction - target).abs(),
        }
    }
}

/// Data and hypothesis-family constants entering every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundInputs<T: Real> {
    /// Largest weighted H2 norm in the family.
    pub c1: T,
    /// Almost-sure bound on the labels.
    pub c2: T,
    #[serde(rename = "L_u")]
    pub l_u: T,
    #[serde(rename = "K_u")]
    pub k_u: T,
    pub n_p: usize,
    #[serde(rename = "K_ell")]
    pub k_ell: T,
    #[serde(rename = "T")]
    pub horizon: T,
}

impl<T: Real> BoundInputs<T> {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("c1", self.c1),
            ("c2", self.c2),
            ("L_u", self.l_u),
            ("K_u", self.k_u),
            ("K_ell", self.k_ell),
            ("T", self.horizon),
        ];
        for (name, v) in named {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {}",
                    v.to_f64_lossy()
                )));
            }
        }
        Ok(())
    }

    /// `c4 = L_u K_ell c1 (n_p + 1)`.
    pub fn c4(&self) -> T {
        self.l_u * self.k_ell * self.c1 * T::from_count(self.n_p + 1)
    }

    /// `c3 = max(2 K_ell c2, 2 K_ell c1 L_u (n_p + 1))`.
    pub fn c3(&self) -> T {
        let two = T::lit(2.0);
        (two * self.k_ell * self.c2).max(two * self.k_ell * self.c1 * self.l_u * T::from_count(self.n_p + 1))
    }
}

/// Capacity of the scheduling-map class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiCapacity {
    /// Finitely many scheduling maps.
    Finite(usize),
    /// VC dimension `d_T` of the scheduling-map class.
    Vc(usize),
}

fn check_sample(n: usize, delta: Option<f64>) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count N must be at least 1".into()));
    }
    if let Some(d) = delta {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence delta = {d} must lie in (0, 1)"
            )));
        }
    }
    Ok(())
}

/// Loss bound `B(T) = 2 K_ell max(c2, L_u c1)`.
pub fn b_t<T: Real>(inp: &BoundInputs<T>) -> T {
    T::lit(2.0) * inp.k_ell * inp.c2.max(inp.l_u * inp.c1)
}

/// `(c3, R)` with `R = (c3 / sqrt N)(2 + sqrt(2 ln(4/delta)))`.
pub fn bound_main<T: Real>(inp: &BoundInputs<T>, n: usize, delta: T) -> Result<(T, T)> {
    check_sample(n, Some(delta.to_f64_lossy()))?;
    let c3 = inp.c3();
    let log_term = (T::lit(2.0) * (T::lit(4.0) / delta).ln()).sqrt();
    Ok((c3, c3 / T::from_count(n).sqrt() * (T::lit(2.0) + log_term)))
}

/// `c4 / sqrt N`, the bound on the Rademacher complexity of the loss class.
pub fn rademacher_bound<T: Real>(inp: &BoundInputs<T>, n: usize) -> Result<T> {
    check_sample(n, None)?;
    Ok(inp.c4() / T::from_count(n).sqrt())
}

/// Bound for a family of scheduling maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PhiBound<T: Real> {
    pub value: T,
    /// VC case only: last term with `N` instead of `sqrt N` under the radical.
    pub n_variant: Option<T>,
    pub warnings: Vec<String>,
}

/// Bound uniform over scheduling maps.
///
/// Finite class:
/// `2 card K_ell c1 L_u (n_p+1)/sqrt N + B(T) sqrt(2 ln(2/delta)/N)`.
///
/// VC class:
/// `sqrt2 B(T)(2 + sqrt(d ln(2eN/d))) + 2 K_ell c1 L_u (n_p+1)/sqrt N
///  + B(T) sqrt(2 ln(2/delta)/sqrt N)`; the `N`-denominator form of the
/// last term is reported as `n_variant`.
pub fn bound_vc<T: Real>(
    inp: &BoundInputs<T>,
    n: usize,
    delta: T,
    phi: PhiCapacity,
) -> Result<PhiBound<T>> {
    check_sample(n, Some(delta.to_f64_lossy()))?;
    let nf = T::from_count(n);
    let two = T::lit(2.0);
    let bt = b_t(inp);
    let lip = two * inp.k_ell * inp.c1 * inp.l_u * T::from_count(inp.n_p + 1) / nf.sqrt();
    let conf = two * (two / delta).ln();
    match phi {
        PhiCapacity::Finite(card) => {
            if card == 0 {
                return Err(Error::InvalidArgument("card(Phi) must be at least 1".into()));
            }
            Ok(PhiBound {
                value: T::from_count(card) * lip + bt * (conf / nf).sqrt(),
                n_variant: None,
                warnings: Vec::new(),
            })
        }
        PhiCapacity::Vc(d) => {
            if d == 0 {
                return Err(Error::InvalidArgument("VC dimension d_T must be at least 1".into()));
            }
            let df = T::from_count(d);
            let mut warnings = Vec::new();
            let mut growth = (two * T::e() * nf / df).ln();
            if growth < T::zero() {
                warnings.push(format!(
                    "d_T = {d} exceeds 2eN = {:.3}; log term clamped at 0",
                    2.0 * std::f64::consts::E * n as f64
                ));
                growth = T::zero();
            }
            let capacity = two.sqrt() * bt * (two + (growth * df).sqrt());
            Ok(PhiBound {
                value: capacity + lip + bt * (conf / nf.sqrt()).sqrt(),
                n_variant: Some(capacity + lip + bt * (conf / nf).sqrt()),
                warnings,
            })
        }
    }
}

/// All constants and bound values for one `(inputs, N, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundReport<T: Real> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
    #[serde(rename = "K_ell")]
    pub k_ell: T,
    #[serde(rename = "L_u")]
    pub l_u: T,
    #[serde(rename = "K_u")]
    pub k_u: T,
    pub n_p: usize,
    #[serde(rename = "B_T")]
    pub b_t: T,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: T,
    #[serde(rename = "R_main")]
    pub r_main: T,
    #[serde(rename = "R_rademacher")]
    pub r_rademacher: T,
    #[serde(rename = "R_phi_finite")]
    pub r_phi_finite: Option<T>,
    #[serde(rename = "R_phi_vc")]
    pub r_phi_vc: Option<T>,
    #[serde(rename = "R_phi_vc_n_variant")]
    pub r_phi_vc_n_variant: Option<T>,
    /// Formula used for each reported value.
    pub provenance: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

pub fn bound_report<T: Real>(
    inp: &BoundInputs<T>,
    n: usize,
    delta: T,
    card_phi: Option<usize>,
    vc_dim: Option<usize>,
) -> Result<BoundReport<T>> {
    inp.validate()?;
    let (c3, r_main) = bound_main(inp, n, delta)?;
    let mut warnings = Vec::new();
    let r_phi_finite = card_phi
        .map(|c| bound_vc(inp, n, delta, PhiCapacity::Finite(c)))
        .transpose()?
        .map(|b| b.value);
    let vc = vc_dim
        .map(|d| bound_vc(inp, n, delta, PhiCapacity::Vc(d)))
        .transpose()?;
    if let Some(v) = &vc {
        warnings.extend(v.warnings.iter().cloned());
    }
    let mut provenance = BTreeMap::new();
    for (k, v) in [
        ("c3", "max(2 K_ell c2, 2 K_ell c1 L_u (n_p+1))"),
        ("c4", "L_u K_ell c1 (n_p+1)"),
        ("B_T", "2 K_ell max(c2, L_u c1)"),
        ("R_main", "c3/sqrt(N) (2 + sqrt(2 ln(4/delta)))"),
        ("R_rademacher", "c4/sqrt(N)"),
        (
            "R_phi_finite",
            "2 card K_ell c1 L_u (n_p+1)/sqrt(N) + B_T sqrt(2 ln(2/delta)/N)",
        ),
        (
            "R_phi_vc",
            "sqrt(2) B_T (2 + sqrt(d ln(2eN/d))) + 2 K_ell c1 L_u (n_p+1)/sqrt(N) + B_T sqrt(2 ln(2/delta)/sqrt(N))",
        ),
        (
            "R_phi_vc_n_variant",
            "as R_phi_vc with N in place of sqrt(N) in the last radical",
        ),
        ("log", "natural logarithm throughout"),
    ] {
        provenance.insert(k.to_string(), v.to_string());
    }
    Ok(BoundReport {
        c1: inp.c1,
        c2: inp.c2,
        c3,
        c4: inp.c4(),
        k_ell: inp.k_ell,
        l_u: inp.l_u,
        k_u: inp.k_u,
        n_p: inp.n_p,
        b_t: b_t(inp),
        n,
        delta,
        r_main,
        r_rademacher: rademacher_bound(inp, n)?,
        r_phi_finite,
        r_phi_vc: vc.as_ref().map(|v| v.value),
        r_phi_vc_n_variant: vc.and_then(|v| v.n_variant),
        provenance,
        warnings,
    })
}
