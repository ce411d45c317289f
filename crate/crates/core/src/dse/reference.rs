//! Published implementation results used as comparison targets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArchShape, ClockSpec, ProblemShape};

use super::config::ArchSection;

/// The reference file shipped with the crate.
pub const BUNDLED_REFERENCE: &str = include_str!("../../data/reference.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSet {
    pub version: u32,
    /// DSP blocks left for the kernel on the board.
    pub dsp_available: usize,
    pub designs: Vec<ReferenceRecord>,
}

/// One implemented design and what was measured on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRecord {
    pub id: String,
    pub pes: usize,
    pub arch: ArchSection,
    pub dsps: usize,
    pub fitter_failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmax_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_peak_gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1_i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1_j: Option<usize>,
    /// Set when the design is reported but left out of pass/fail, with the reason.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
    #[serde(default)]
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement {
    pub d2_i: usize,
    pub d2_j: usize,
    pub d2_k: usize,
    pub t_flops_gflops: f64,
    pub e_d: f64,
}

impl Measurement {
    pub fn problem(&self) -> ProblemShape {
        ProblemShape::new(self.d2_i, self.d2_j, self.d2_k)
    }
}

impl ReferenceRecord {
    pub fn shape(&self) -> Result<ArchShape> {
        let a = self.arch;
        ArchShape::new(a.d0_i, a.d0_j, a.d0_k, a.d_p)
    }

    pub fn clock(&self) -> Option<ClockSpec> {
        self.fmax_mhz.map(|f| ClockSpec { fmax_mhz: f })
    }

    pub fn d1(&self) -> Option<(usize, usize)> {
        self.d1_i.zip(self.d1_j)
    }

    pub fn measurement_for(&self, problem: &ProblemShape) -> Option<(usize, &Measurement)> {
        self.measurements.iter().enumerate().find(|(_, m)| m.problem() == *problem)
    }
}

impl ReferenceSet {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_REFERENCE).expect("bundled reference data is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        for r in &self.designs {
            r.shape()?;
            if !r.fitter_failed && (r.fmax_mhz.is_none() || r.t_peak_gflops.is_none()) {
                return Err(Error::Config(format!(
                    "design {} has no fmax or peak but is not marked as fitter failed",
                    r.id
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ReferenceRecord> {
        self.designs.iter().find(|r| r.id == id)
    }

    /// Records with the given architecture that were successfully built.
    pub fn for_shape(&self, shape: &ArchShape) -> Option<&ReferenceRecord> {
        self.designs
            .iter()
            .find(|r| !r.fitter_failed && r.shape().map(|s| s == *shape).unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parses() {
        let set = ReferenceSet::bundled();
        let ids: Vec<_> = set.designs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C", "D", "E", "F", "G", "H", "I", "L", "M", "N"]);
        let c = set.get("C").unwrap();
        assert_eq!((c.dsps, c.pes, c.fmax_mhz, c.t_peak_gflops), (4704, 4704, Some(368.0), Some(3462.0)));
        assert!(c.excluded.is_some());
        assert!(set.get("A").unwrap().fitter_failed);
        let f = set.get("F").unwrap();
        assert_eq!(f.measurements[5].d2_j, 20480);
        assert_eq!(f.measurements[5].t_flops_gflops, 3536.0);
    }

    #[test]
    fn each_built_design_has_six_sizes() {
        for r in ReferenceSet::bundled().designs.iter().filter(|r| !r.fitter_failed) {
            assert_eq!(r.measurements.len(), 6, "{}", r.id);
            assert!(r.measurements.windows(2).all(|w| w[0].d2_i < w[1].d2_i));
        }
    }

    #[test]
    fn rejects_incomplete_records() {
        let text = r#"{"version": 1, "dsp_available": 1, "designs": [
            {"id": "X", "pes": 1, "arch": {"d0_i": 1, "d0_j": 1, "d0_k": 1, "d_p": 1},
             "dsps": 1, "fitter_failed": false}]}"#;
        assert!(ReferenceSet::from_json(text).is_err());
    }
}
