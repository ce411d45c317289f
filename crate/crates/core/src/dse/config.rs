//! JSON configuration of a single design point and problem.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ArchShape, ClockSpec, LatencyProfile, MemorySpec, ProblemShape, DEFAULT_BANK_BANDWIDTH_MB_S,
};

use super::DesignPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub arch: ArchSection,
    pub clock: ClockSection,
    #[serde(default)]
    pub memory: MemorySection,
    #[serde(default, skip_serializing_if = "BlockingSection::is_empty")]
    pub blocking: BlockingSection,
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    pub d0_i: usize,
    pub d0_j: usize,
    pub d0_k: usize,
    pub d_p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub fmax_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    #[serde(default = "default_bank")]
    pub bank_mb_s: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default = "default_true")]
    pub lsu_pow2: bool,
}

fn default_bank() -> f64 {
    DEFAULT_BANK_BANDWIDTH_MB_S
}

fn default_efficiency() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for MemorySection {
    fn default() -> Self {
        Self { bank_mb_s: default_bank(), efficiency: default_efficiency(), lsu_pow2: true }
    }
}

/// Optional first-level block sizes and read widths. Omitted values fall back
/// to the reuse-derived defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1_i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1_j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_ga: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_gb: Option<usize>,
}

impl BlockingSection {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub d2_i: usize,
    pub d2_j: usize,
    pub d2_k: usize,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn shape(&self) -> ArchShape {
        let a = self.arch;
        ArchShape { d0_i: a.d0_i, d0_j: a.d0_j, d0_k: a.d0_k, d_p: a.d_p }
    }

    pub fn clock(&self) -> ClockSpec {
        ClockSpec { fmax_mhz: self.clock.fmax_mhz }
    }

    pub fn memory(&self) -> MemorySpec {
        MemorySpec {
            bank_bandwidth_mb_s: self.memory.bank_mb_s,
            efficiency: self.memory.efficiency,
            lsu_pow2: self.memory.lsu_pow2,
        }
    }

    pub fn problem(&self) -> ProblemShape {
        let p = self.problem;
        ProblemShape::new(p.d2_i, p.d2_j, p.d2_k)
    }

    pub fn latency(&self) -> Result<LatencyProfile> {
        let lat = self.latency.clone().unwrap_or_default();
        lat.validate()?;
        Ok(lat)
    }

    /// Builds the design point. Invalid shapes, clocks or memories are hard
    /// errors; a plan that cannot be built yields an infeasible point.
    pub fn design_point(&self) -> Result<DesignPoint> {
        let shape = self.shape();
        shape.validate()?;
        let clock = self.clock();
        clock.validate()?;
        let mem = self.memory();
        mem.validate()?;
        let b = self.blocking;
        let d1 = match (b.d1_i, b.d1_j) {
            (Some(i), Some(j)) => Some((i, j)),
            (None, None) => None,
            _ => {
                return Err(Error::Config("blocking needs both d1_i and d1_j, or neither".into()))
            }
        };
        let widths = match (b.b_ga, b.b_gb) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(Error::Config("blocking needs both b_ga and b_gb, or neither".into())),
        };
        Ok(DesignPoint::build(shape, clock, mem, d1, widths))
    }

    /// Config describing `point` and `problem`, with the plan spelled out.
    pub fn from_point(point: &DesignPoint, problem: &ProblemShape) -> Self {
        let s = point.shape;
        let blocking = match &point.plan {
            Some(p) => BlockingSection {
                d1_i: Some(p.d1_i),
                d1_j: Some(p.d1_j),
                b_ga: Some(p.b_ga),
                b_gb: Some(p.b_gb),
            },
            None => BlockingSection::default(),
        };
        Self {
            arch: ArchSection { d0_i: s.d0_i, d0_j: s.d0_j, d0_k: s.d0_k, d_p: s.d_p },
            clock: ClockSection { fmax_mhz: point.clock.fmax_mhz },
            memory: MemorySection {
                bank_mb_s: point.mem.bank_bandwidth_mb_s,
                efficiency: point.mem.efficiency,
                lsu_pow2: point.mem.lsu_pow2,
            },
            blocking,
            problem: ProblemSection { d2_i: problem.d2_i, d2_j: problem.d2_j, d2_k: problem.d2_k },
            latency: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const G: &str = r#"{
        "arch": {"d0_i": 64, "d0_j": 32, "d0_k": 2, "d_p": 2},
        "clock": {"fmax_mhz": 398},
        "problem": {"d2_i": 512, "d2_j": 512, "d2_k": 512}
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = Config::from_json(G).unwrap();
        assert_eq!(cfg.memory, MemorySection::default());
        let p = cfg.design_point().unwrap();
        assert!(p.feasible);
        let plan = p.plan.unwrap();
        assert_eq!((plan.d1_i, plan.d1_j, plan.r_a, plan.r_b), (512, 512, 16, 8));
        assert_eq!(cfg.latency().unwrap(), LatencyProfile::default());
    }

    #[test]
    fn override_and_widths() {
        let text = r#"{
            "arch": {"d0_i": 28, "d0_j": 28, "d0_k": 6, "d_p": 1},
            "clock": {"fmax_mhz": 368},
            "memory": {"bank_mb_s": 19200, "efficiency": 0.9},
            "blocking": {"d1_i": 672, "d1_j": 672},
            "problem": {"d2_i": 672, "d2_j": 672, "d2_k": 672}
        }"#;
        let p = Config::from_json(text).unwrap().design_point().unwrap();
        let plan = p.plan.unwrap();
        assert_eq!((plan.r_a, plan.b_ga), (24, 7));
        assert_eq!(p.mem.efficiency, 0.9);
    }

    #[test]
    fn errors() {
        assert!(Config::from_json(r#"{"arch": {}}"#).is_err());
        let unknown = G.replace("\"clock\"", "\"clocks\"");
        assert!(Config::from_json(&unknown).is_err());
        let half = G.replace(
            "\"problem\"",
            "\"blocking\": {\"d1_i\": 512}, \"problem\"",
        );
        let cfg = Config::from_json(&half).unwrap();
        assert!(matches!(cfg.design_point(), Err(Error::Config(_))));
        let slow = G.replace("398", "100");
        assert!(matches!(
            Config::from_json(&slow).unwrap().design_point(),
            Err(Error::UnsupportedTier(_))
        ));
    }

    fn round_trip(point: &DesignPoint) {
        let problem = ProblemShape::cube(64);
        let text = Config::from_point(point, &problem).to_json().unwrap();
        let back = Config::from_json(&text).unwrap();
        assert_eq!(&back.design_point().unwrap(), point);
        assert_eq!(back.problem(), problem);
    }

    #[test]
    fn reference_designs_round_trip() {
        let mem = MemorySpec::default();
        let f = ArchShape::new(70, 32, 2, 2).unwrap();
        round_trip(&DesignPoint::build(f, ClockSpec::new(410.0).unwrap(), mem, Some((560, 640)), None));
        let c = ArchShape::new(28, 28, 6, 1).unwrap();
        round_trip(&DesignPoint::build(c, ClockSpec::new(368.0).unwrap(), mem, Some((672, 672)), None));
        let g = ArchShape::new(64, 32, 2, 2).unwrap();
        round_trip(&DesignPoint::build(g, ClockSpec::new(398.0).unwrap(), mem, None, None));
    }

    proptest! {
        #[test]
        fn any_feasible_point_round_trips(
            d0_i in 1usize..40, d0_j in 1usize..40, d0_k in 1usize..8,
            fmax in 151.0f64..600.0, efficiency in 0.1f64..1.0,
        ) {
            let shape = ArchShape::new(d0_i, d0_j, d0_k, 1).unwrap();
            let mem = MemorySpec::new(19200.0, efficiency, true).unwrap();
            let point = DesignPoint::build(shape, ClockSpec::new(fmax).unwrap(), mem, None, None);
            prop_assume!(point.feasible);
            round_trip(&point);
        }
    }

    #[test]
    fn infeasible_override_is_data() {
        let text = G.replace("\"problem\"", "\"blocking\": {\"d1_i\": 64, \"d1_j\": 32}, \"problem\"");
        let p = Config::from_json(&text).unwrap().design_point().unwrap();
        assert!(!p.feasible);
        assert!(p.plan.is_none());
        assert!(!p.violations.is_empty());
    }
}
