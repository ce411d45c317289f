//! Side-by-side comparison of model output and the reference measurements.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{dsp_count, pe_count, MemorySpec, ProblemShape};
use crate::perf::{c_percent, t_peak};

use super::reference::{ReferenceRecord, ReferenceSet};
use super::DesignPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Pass,
    Fail,
    /// Reported but not judged.
    Excluded,
    /// Nothing to compare against.
    NoReference,
}

impl RowStatus {
    pub fn label(self) -> &'static str {
        match self {
            RowStatus::Pass => "pass",
            RowStatus::Fail => "FAIL",
            RowStatus::Excluded => "excluded",
            RowStatus::NoReference => "no-reference",
        }
    }
}

/// Allowed gap between the predicted compute fraction and measured efficiency.
///
/// The smallest measured size of each design carries the most fixed overhead
/// and gets the loose bound. Sizes with at least `large_ratio` first-level
/// blocks along `i` get the tight bound; sizes in between get `intermediate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub smallest: f64,
    pub intermediate: f64,
    pub large: f64,
    pub large_ratio: f64,
    /// Allowed gap on peak throughput, in GFLOPS.
    pub peak_gflops: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self { smallest: 0.05, intermediate: 0.05, large: 0.02, large_ratio: 4.0, peak_gflops: 1.0 }
    }
}

impl TolerancePolicy {
    fn for_size(&self, index: usize, ratio: f64) -> f64 {
        if index == 0 {
            self.smallest
        } else if ratio >= self.large_ratio {
            self.large
        } else {
            self.intermediate
        }
    }
}

/// Resource and peak-throughput row for one built design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub id: String,
    pub n_dsp: usize,
    pub dsp_ref: usize,
    pub n_pe: usize,
    pub pe_ref: usize,
    pub fmax_mhz: f64,
    pub t_peak_gflops: f64,
    pub t_peak_ref: f64,
    pub status: RowStatus,
}

/// Predicted compute fraction against measured efficiency at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub id: String,
    pub problem: ProblemShape,
    /// `d2_i / d1_i`.
    pub ratio: f64,
    pub predicted: f64,
    pub measured: Option<f64>,
    pub delta: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub peak: Vec<PeakRow>,
    pub efficiency: Vec<EfficiencyRow>,
}

impl CompareReport {
    /// True when no judged row failed.
    pub fn all_pass(&self) -> bool {
        self.peak.iter().all(|r| r.status != RowStatus::Fail)
            && self.efficiency.iter().all(|r| r.status != RowStatus::Fail)
    }

    pub fn failures(&self) -> usize {
        self.peak.iter().filter(|r| r.status == RowStatus::Fail).count()
            + self.efficiency.iter().filter(|r| r.status == RowStatus::Fail).count()
    }
}

fn peak_row(r: &ReferenceRecord, policy: &TolerancePolicy) -> Result<Option<PeakRow>> {
    let (Some(clock), Some(t_ref)) = (r.clock(), r.t_peak_gflops) else {
        return Ok(None);
    };
    let shape = r.shape()?;
    let n_dsp = dsp_count(&shape);
    let n_pe = pe_count(&shape)?;
    let peak = t_peak(n_dsp, &clock) / 1e9;
    let ok = n_dsp == r.dsps && n_pe == r.pes && (peak - t_ref).abs() <= policy.peak_gflops;
    Ok(Some(PeakRow {
        id: r.id.clone(),
        n_dsp,
        dsp_ref: r.dsps,
        n_pe,
        pe_ref: r.pes,
        fmax_mhz: clock.fmax_mhz,
        t_peak_gflops: peak,
        t_peak_ref: t_ref,
        status: if ok { RowStatus::Pass } else { RowStatus::Fail },
    }))
}

fn efficiency_row(
    id: &str,
    point: &DesignPoint,
    problem: &ProblemShape,
    reference: Option<(usize, f64)>,
    excluded: bool,
    policy: &TolerancePolicy,
) -> Result<EfficiencyRow> {
    let plan = point.feasible_plan()?;
    let predicted = c_percent(&point.shape, plan, problem, &point.clock)?;
    let ratio = problem.d2_i as f64 / plan.d1_i as f64;
    let mut row = EfficiencyRow {
        id: id.to_string(),
        problem: *problem,
        ratio,
        predicted,
        measured: None,
        delta: None,
        tolerance: None,
        status: RowStatus::NoReference,
    };
    if let Some((index, e_d)) = reference {
        let delta = (predicted - e_d).abs();
        let tol = policy.for_size(index, ratio);
        row.measured = Some(e_d);
        row.delta = Some(delta);
        row.tolerance = Some(tol);
        // Small slack so that a gap equal to the bound is not lost to rounding.
        row.status = if excluded {
            RowStatus::Excluded
        } else if delta <= tol + 1e-9 {
            RowStatus::Pass
        } else {
            RowStatus::Fail
        };
    }
    Ok(row)
}

/// Compares every built design in `refs` against the model at its own clock
/// and blocking.
pub fn compare(refs: &ReferenceSet, policy: &TolerancePolicy) -> Result<CompareReport> {
    let mut report = CompareReport::default();
    for r in refs.designs.iter().filter(|r| !r.fitter_failed) {
        if let Some(row) = peak_row(r, policy)? {
            report.peak.push(row);
        }
        let Some(clock) = r.clock() else { continue };
        let point = DesignPoint::build(r.shape()?, clock, MemorySpec::default(), r.d1(), None);
        for (index, m) in r.measurements.iter().enumerate() {
            report.efficiency.push(efficiency_row(
                &r.id,
                &point,
                &m.problem(),
                Some((index, m.e_d)),
                r.excluded.is_some(),
                policy,
            )?);
        }
    }
    Ok(report)
}

/// Compares user design points against the reference records with the same
/// architecture. Points without a matching record or size are reported as
/// having no reference.
pub fn compare_points(
    items: &[(DesignPoint, ProblemShape)],
    refs: &ReferenceSet,
    policy: &TolerancePolicy,
) -> Result<CompareReport> {
    let mut report = CompareReport::default();
    for (point, problem) in items {
        let record = refs.for_shape(&point.shape);
        let id = record.map_or_else(|| point.shape.to_string(), |r| r.id.clone());
        let reference = record
            .and_then(|r| r.measurement_for(problem))
            .map(|(index, m)| (index, m.e_d));
        let excluded = record.is_some_and(|r| r.excluded.is_some());
        report.efficiency.push(efficiency_row(&id, point, problem, reference, excluded, policy)?);
    }
    Ok(report)
}
