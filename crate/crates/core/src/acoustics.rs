//! Parametric sound-propagation field.
//!
//! Signal loss (dB) as a deterministic closed form of horizontal range and
//! receiver depth for a fixed-depth emitter: spherical-spreading term,
//! linear absorption, and a range-periodic modulation shaped by the depth of
//! both ends of the path. Values are clamped to `[loss_floor, loss_ceiling]`
//! so the field is total — every geometry has a finite cost.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic signal-loss field for one emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationField {
    /// Emitter depth (m).
    pub source_depth: f64,
    /// Sea floor depth (m); receiver depths live in `[0, water_depth]`.
    pub water_depth: f64,
    /// Constant offset (dB).
    pub base_offset: f64,
    /// Spreading loss per decade of range (dB).
    pub spreading_coeff: f64,
    /// Absorption (dB per km).
    pub absorption: f64,
    /// Amplitude of the range-periodic modulation (dB).
    pub modulation_amp: f64,
    /// Range period of the modulation (m).
    pub cz_period: f64,
    /// Lower clamp (dB).
    pub loss_floor: f64,
    /// Upper clamp (dB).
    pub loss_ceiling: f64,
}

impl Default for PropagationField {
    fn default() -> Self {
        PropagationField {
            source_depth: 500.0,
            water_depth: 1000.0,
            base_offset: 40.0,
            spreading_coeff: 20.0,
            absorption: 0.3,
            modulation_amp: 25.0,
            cz_period: 35_000.0,
            loss_floor: 80.0,
            loss_ceiling: 200.0,
        }
    }
}

impl PropagationField {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_floor < self.loss_ceiling) {
            return Err(Error::Config(format!(
                "loss_floor ({}) must be below loss_ceiling ({})",
                self.loss_floor, self.loss_ceiling
            )));
        }
        if !(self.water_depth > 0.0) {
            return Err(Error::Config("water_depth must be positive".into()));
        }
        if self.source_depth < 0.0 || self.source_depth > self.water_depth {
            return Err(Error::Config(format!(
                "source_depth {} outside [0, {}]",
                self.source_depth, self.water_depth
            )));
        }
        if self.cz_period <= 0.0 {
            return Err(Error::Config("cz_period must be positive".into()));
        }
        Ok(())
    }

    /// Signal loss (dB) at a horizontal range and receiver depth.
    pub fn loss_at(&self, range: f64, receiver_depth: f64) -> Result<f64> {
        if range < 0.0 {
            return Err(Error::Domain(format!("negative range {range}")));
        }
        if receiver_depth < 0.0 || receiver_depth > self.water_depth {
            return Err(Error::Domain(format!(
                "receiver depth {} outside [0, {}]",
                receiver_depth, self.water_depth
            )));
        }
        Ok(self.loss_value(range, receiver_depth))
    }

    /// The closed form without the domain checks. Callers must have already
    /// validated `range >= 0` and `receiver_depth` within the water column.
    pub(crate) fn loss_value(&self, range: f64, receiver_depth: f64) -> f64 {
        use std::f64::consts::{PI, TAU};
        let spreading = self.spreading_coeff * range.max(1.0).log10();
        let absorption = self.absorption * range / 1000.0;
        let modulation = self.modulation_amp
            * (TAU * range / self.cz_period).cos()
            * (PI * receiver_depth / self.water_depth).sin()
            * (PI * self.source_depth / self.water_depth).sin();
        let raw = self.base_offset + spreading + absorption + modulation;
        raw.clamp(self.loss_floor, self.loss_ceiling)
    }
}

/// Loss sampled on a uniform (depth x range) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDiagram {
    /// Range axis (m), `n_r` uniform points over `[0, range_max]`.
    pub range_axis: Vec<f64>,
    /// Depth axis (m), `n_z` uniform points over `[0, water_depth]`.
    pub depth_axis: Vec<f64>,
    /// `values[i][j]` = loss at `(depth_axis[i], range_axis[j])`.
    pub values: Vec<Vec<f64>>,
}

/// Sample the field on a grid, optionally saturating (min) at `saturation` dB.
/// Pass `f64::INFINITY` for an unsaturated diagram.
pub fn render_diagram(
    field: &PropagationField,
    range_max: f64,
    n_r: usize,
    n_z: usize,
    saturation: f64,
) -> Result<LossDiagram> {
    if n_r < 2 || n_z < 2 {
        return Err(Error::Config(format!(
            "diagram needs at least a 2x2 grid, got {n_z}x{n_r}"
        )));
    }
    if range_max <= 0.0 {
        return Err(Error::Config("range_max must be positive".into()));
    }
    field.validate()?;
    let range_axis: Vec<f64> = (0..n_r)
        .map(|j| range_max * j as f64 / (n_r - 1) as f64)
        .collect();
    let depth_axis: Vec<f64> = (0..n_z)
        .map(|i| field.water_depth * i as f64 / (n_z - 1) as f64)
        .collect();
    let values = depth_axis
        .iter()
        .map(|&z| {
            range_axis
                .iter()
                .map(|&r| field.loss_value(r, z).min(saturation))
                .collect()
        })
        .collect();
    Ok(LossDiagram {
        range_axis,
        depth_axis,
        values,
    })
}

/// Write a diagram as CSV: first row the range axis, first column the depth
/// axis, every cell in dB with two decimals.
pub fn write_diagram_csv<W: Write>(diagram: &LossDiagram, mut out: W) -> Result<()> {
    let header: Vec<String> = std::iter::once(String::new())
        .chain(diagram.range_axis.iter().map(|r| format!("{r:.2}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (z, row) in diagram.depth_axis.iter().zip(&diagram.values) {
        let cells: Vec<String> = std::iter::once(format!("{z:.2}"))
            .chain(row.iter().map(|v| format!("{v:.2}")))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
