//! Model parameters: bandwidths, buffer capacities, energy and area
//! coefficients, and the system topology description.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::BufferCaps;

/// Per-engine datapath and buffer bandwidths, in bytes (or MACs) per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bandwidths {
    pub mac_per_cycle: f64,
    pub pe_buffer: f64,
    pub core_buffer: f64,
    pub chiplet_buffer: f64,
    /// Core buffer to one PE.
    pub pe_link: f64,
    /// Chiplet buffer to one core.
    pub core_link: f64,
}

impl Default for Bandwidths {
    fn default() -> Self {
        Self {
            mac_per_cycle: 1.0,
            pe_buffer: 8.0,
            core_buffer: 32.0,
            chiplet_buffer: 128.0,
            pe_link: 4.0,
            core_link: 16.0,
        }
    }
}

/// Energy per operation or per byte, in picojoules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyCoeffs {
    /// Per 8-bit MAC; scaled by operand width.
    pub mac: f64,
    pub pe_buffer: f64,
    pub core_buffer: f64,
    pub chiplet_buffer: f64,
    pub dram: f64,
    /// Die-to-die per byte per hop, indexed by packaging kind.
    pub d2d: [f64; 3],
    /// Per epilogue operation.
    pub epilogue: f64,
}

impl Default for EnergyCoeffs {
    fn default() -> Self {
        Self {
            mac: 0.5,
            pe_buffer: 0.05,
            core_buffer: 0.8,
            chiplet_buffer: 6.48,
            dram: 70.0,
            d2d: [6.4, 2.0, 2.0],
            epilogue: 0.5,
        }
    }
}

/// Silicon area coefficients in mm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaCoeffs {
    pub pe: f64,
    pub sram_per_kib: f64,
    pub router: f64,
    pub core_overhead: f64,
    pub chiplet_overhead: f64,
}

impl Default for AreaCoeffs {
    fn default() -> Self {
        Self {
            pe: 0.0025,
            sram_per_kib: 0.0015,
            router: 0.1,
            core_overhead: 0.01,
            chiplet_overhead: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub bandwidth: Bandwidths,
    pub buffer_caps: BufferCaps,
    pub energy: EnergyCoeffs,
    pub area: AreaCoeffs,
    /// Router traversal delay per hop, cycles.
    pub t_s: f64,
    /// Aggregate DRAM bandwidth over all memory controllers, bytes/cycle.
    pub dram_bw: f64,
    pub clock_ghz: f64,
    /// Fixed link bandwidth; `None` applies the hotspot rule.
    pub link_bw: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidths::default(),
            buffer_caps: BufferCaps {
                chiplet: 4 << 20,
                core: 256 << 10,
                pe: 4 << 10,
            },
            energy: EnergyCoeffs::default(),
            area: AreaCoeffs::default(),
            t_s: 4.0,
            dram_bw: 64.0,
            clock_ghz: 1.0,
            link_bw: None,
        }
    }
}

impl ModelParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(Error::from_json)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bandwidth;
        let positive = [
            ("bandwidth.mac_per_cycle", b.mac_per_cycle),
            ("bandwidth.pe_buffer", b.pe_buffer),
            ("bandwidth.core_buffer", b.core_buffer),
            ("bandwidth.chiplet_buffer", b.chiplet_buffer),
            ("bandwidth.pe_link", b.pe_link),
            ("bandwidth.core_link", b.core_link),
            ("dram_bw", self.dram_bw),
            ("clock_ghz", self.clock_ghz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.t_s >= 0.0) {
            return Err(Error::Config("t_s must be non-negative".into()));
        }
        if let Some(bw) = self.link_bw {
            if !(bw > 0.0) {
                return Err(Error::Config("link_bw must be positive".into()));
            }
        }
        let e = &self.energy;
        let coeffs = [
            e.mac,
            e.pe_buffer,
            e.core_buffer,
            e.chiplet_buffer,
            e.dram,
            e.epilogue,
        ];
        if coeffs.iter().chain(&e.d2d).any(|&c| !(c >= 0.0)) {
            return Err(Error::Config(
                "energy coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override_keeps_defaults() {
        let p = ModelParams::from_json(r#"{"t_s": 1, "energy": {"dram": 100}}"#).unwrap();
        assert_eq!(p.t_s, 1.0);
        assert_eq!(p.energy.dram, 100.0);
        assert_eq!(p.energy.mac, 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelParams::from_json(r#"{"dram_bw": 0}"#).is_err());
        assert!(ModelParams::from_json(r#"{"nope": 1}"#).is_err());
    }
}
