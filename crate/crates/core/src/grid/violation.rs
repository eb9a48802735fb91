use super::{GridError, Limits, PowerFlowSolution};
use crate::math::relu;

/// Aggregate limit violations of a power-flow state.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ViolationTerms {
    /// Σ over- and under-voltage, p.u.
    pub v: f64,
    /// Σ current above thermal limit, A
    pub ol: f64,
    /// Σ reverse flow beyond the floor, kW
    pub rpf: f64,
}

/// Element-wise limit comparison summed per constraint family.
pub fn violation_terms(sol: &PowerFlowSolution, limits: &Limits) -> Result<ViolationTerms, GridError> {
    limits.check(sol.i.len())?;
    let v = sol
        .v
        .iter()
        .map(|&v| relu(v - limits.v_max) + relu(limits.v_min - v))
        .sum();
    let ol = sol.i.iter().zip(&limits.i_max).map(|(&i, &imax)| relu(i - imax)).sum();
    let rpf = sol
        .p_flow
        .iter()
        .zip(&limits.p_min)
        .map(|(&p, &pmin)| relu(pmin - p))
        .sum();
    Ok(ViolationTerms { v, ol, rpf })
}
