//! The `report-transition` subcommand: order-of-magnitude arithmetic for
//! where the collapse threshold puts the quantum-to-classical boundary.
//!
//! Everything here is exact integer bookkeeping on powers of ten. With M
//! particles each needing 10^e occupied cells, the critical volume exponent
//! is M*e. If only a fraction 1/k of the particles carries the spreading,
//! each must cover 10^(e*k) cells, i.e. 10^(e*k/dims) cells per axis; at a
//! cell of 10^cell_exp centimetres that is a linear spread of
//! 10^(e*k/dims + cell_exp) cm. Non-divisible combinations have no
//! integer-exponent answer and are reported as such rather than rounded.

use qcollapse_core::ccqm::{critical_volume_exponent, spread_distance_exponent_cm};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct TransitionRow {
    /// The fraction of the M particles sharing the spreading is 1/divisor.
    pub divisor: u32,
    pub sharing_particles: f64,
    /// Occupied-cell exponent each sharing particle must reach.
    pub spread_exponent: u64,
    /// Linear spread as a power of ten in centimetres; `None` when the
    /// spread exponent does not divide evenly across the axes.
    pub distance_cm_exponent: Option<i64>,
    pub distance_km_exponent: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct TransitionReport {
    pub m: u32,
    pub e: u32,
    pub dims: u32,
    pub cell_exponent_cm: i64,
    pub vc_exponent: u64,
    pub rows: Vec<TransitionRow>,
}

pub fn transition_report(
    m: u32,
    e: u32,
    dims: u32,
    cell_exponent_cm: i64,
) -> Result<TransitionReport, CliError> {
    if m == 0 || e == 0 {
        return Err(CliError::Constraint(
            "report-transition needs M >= 1 particles and e >= 1".to_string(),
        ));
    }
    if dims == 0 || dims > 3 {
        return Err(CliError::Constraint(format!("dims must be 1..=3, got {dims}")));
    }
    let vc_exponent = critical_volume_exponent(e, m);
    let rows = [1u32, 2, 3]
        .into_iter()
        .map(|divisor| {
            // vc_exponent * divisor / m = e * divisor exactly, by construction
            let spread_exponent = vc_exponent * divisor as u64 / m as u64;
            let distance_cm_exponent =
                spread_distance_exponent_cm(spread_exponent, dims, cell_exponent_cm).ok();
            TransitionRow {
                divisor,
                sharing_particles: m as f64 / divisor as f64,
                spread_exponent,
                distance_cm_exponent,
                distance_km_exponent: distance_cm_exponent.map(|cm| cm - 5),
            }
        })
        .collect();
    Ok(TransitionReport { m, e, dims, cell_exponent_cm, vc_exponent, rows })
}

impl TransitionReport {
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "divisor": r.divisor,
                    "sharing_particles": r.sharing_particles,
                    "spread_exponent": r.spread_exponent,
                    "distance_cm_exponent": r.distance_cm_exponent,
                    "distance_km_exponent": r.distance_km_exponent,
                })
            })
            .collect();
        serde_json::json!({
            "m": self.m,
            "e": self.e,
            "dims": self.dims,
            "cell_exponent_cm": self.cell_exponent_cm,
            "vc_exponent": self.vc_exponent,
            "rows": rows,
        })
        .to_string()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "critical volume: 10^{} cells  (M = {} particles, 10^{} cells each, {}D, \
             cell = 10^{} cm)\n",
            self.vc_exponent, self.m, self.e, self.dims, self.cell_exponent_cm
        );
        out.push_str("sharing      particles      spread/particle   linear spread\n");
        for r in &self.rows {
            let share = match r.divisor {
                1 => "all".to_string(),
                d => format!("1/{d}"),
            };
            let distance = match (r.distance_cm_exponent, r.distance_km_exponent) {
                (Some(cm), Some(km)) => format!("10^{cm} cm = 10^{km} km"),
                _ => "not an integer exponent".to_string(),
            };
            let particles = if r.sharing_particles.fract() == 0.0 {
                format!("{}", r.sharing_particles as u64)
            } else {
                format!("{:.1}", r.sharing_particles)
            };
            out.push_str(&format!(
                "{share:<12} {particles:<14} 10^{:<14} {distance}\n",
                r.spread_exponent
            ));
        }
        out
    }
}
