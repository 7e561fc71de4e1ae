//! Held-out evaluation: per-marker errors against ground truth, with the
//! rest-shape (training-mean) baseline for comparison.

use coloshape::error::Error;
use coloshape::estimator::{ShapeRegressor, SmootherParams};
use coloshape::registration::IcpParams;
use coloshape::shapes::InsertionSequence;
use std::fmt::Write as _;

use crate::pipeline::{run_guarded, PipelineStep};

pub const REPORT_MAGIC: &str = "coloshape.report";
pub const REPORT_VERSION: u32 = 1;

/// Errors of one evaluation run. All distances in mm.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub sequence_id: String,
    pub trained_on: Vec<String>,
    pub model_seed: u64,
    pub frames: usize,
    pub markers: usize,
    pub window: usize,
    pub icp_max_iterations: usize,
    pub icp_convergence_tol: f64,
    pub per_marker_mean: Vec<f64>,
    pub per_marker_rmse: Vec<f64>,
    pub baseline_per_marker_mean: Vec<f64>,
    pub overall_mean: f64,
    pub baseline_overall_mean: f64,
    /// (frame, marker, error) for every pair, frame-major.
    pub trace: Vec<(usize, usize, f64)>,
}

impl EvaluationReport {
    pub fn ratio(&self) -> f64 {
        self.overall_mean / self.baseline_overall_mean
    }

    /// The consistency invariant: the overall mean must equal the mean of
    /// the per-frame per-marker trace.
    pub fn is_consistent(&self) -> bool {
        let from_trace: f64 =
            self.trace.iter().map(|(_, _, e)| *e).sum::<f64>() / self.trace.len() as f64;
        (from_trace - self.overall_mean).abs() <= 1e-9
    }
}

/// Evaluate a model on a sequence with ground truth in every frame.
/// Returns the report and the per-frame pipeline steps (for export).
pub fn evaluate(
    model: &ShapeRegressor<f64>,
    seq: &InsertionSequence<f64>,
    icp_params: &IcpParams<f64>,
    smoother: &SmootherParams,
) -> Result<(EvaluationReport, Vec<PipelineStep>), Error> {
    let markers = model.markers();
    for frame in &seq.frames {
        let colon = frame.colon.as_ref().ok_or_else(|| {
            Error::invalid_input(format!(
                "evaluate: sequence {} frame {} has no ground truth",
                seq.id, frame.t
            ))
        })?;
        if colon.len() != markers {
            return Err(Error::invalid_input(format!(
                "evaluate: sequence {} has {} markers, model expects {markers}",
                seq.id,
                colon.len()
            )));
        }
    }

    let scopes: Vec<_> = seq.frames.iter().map(|f| f.scope.clone()).collect();
    let target = &model.meta.registration_target;
    let steps = run_guarded(model, &scopes, target, icp_params, smoother)?;

    let frames = seq.frames.len();
    let mut trace = Vec::with_capacity(frames * markers);
    let mut marker_sum = vec![0.0f64; markers];
    let mut marker_sumsq = vec![0.0f64; markers];
    let mut baseline_sum = vec![0.0f64; markers];
    for (k, (step, frame)) in steps.iter().zip(&seq.frames).enumerate() {
        let truth = frame.colon.as_ref().unwrap();
        for m in 0..markers {
            let err = step.smoothed.points()[m].distance(&truth.points()[m]);
            trace.push((k, m, err));
            marker_sum[m] += err;
            marker_sumsq[m] += err * err;
            baseline_sum[m] += model.meta.marker_means[m].distance(&truth.points()[m]);
        }
    }

    let nf = frames as f64;
    let per_marker_mean: Vec<f64> = marker_sum.iter().map(|s| s / nf).collect();
    let per_marker_rmse: Vec<f64> = marker_sumsq.iter().map(|s| (s / nf).sqrt()).collect();
    let baseline_per_marker_mean: Vec<f64> = baseline_sum.iter().map(|s| s / nf).collect();
    let overall_mean = trace.iter().map(|(_, _, e)| *e).sum::<f64>() / trace.len() as f64;
    let baseline_overall_mean =
        baseline_sum.iter().sum::<f64>() / (frames * markers) as f64;

    let report = EvaluationReport {
        sequence_id: seq.id.clone(),
        trained_on: model.meta.sequence_ids.clone(),
        model_seed: model.meta.seed,
        frames,
        markers,
        window: smoother.window,
        icp_max_iterations: icp_params.max_iterations,
        icp_convergence_tol: icp_params.convergence_tol,
        per_marker_mean,
        per_marker_rmse,
        baseline_per_marker_mean,
        overall_mean,
        baseline_overall_mean,
        trace,
    };
    debug_assert!(report.is_consistent());
    Ok((report, steps))
}

/// Render the full report, trace included. Contains no filesystem paths,
/// so identical runs produce identical bytes.
pub fn report_to_string(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{REPORT_MAGIC} {REPORT_VERSION}");
    let _ = writeln!(out, "sequence {}", r.sequence_id);
    let _ = writeln!(out, "trained_on {}", r.trained_on.join(","));
    let _ = writeln!(out, "model_seed {}", r.model_seed);
    let _ = writeln!(out, "frames {}", r.frames);
    let _ = writeln!(out, "markers {}", r.markers);
    let _ = writeln!(out, "window {}", r.window);
    let _ = writeln!(out, "icp_max_iterations {}", r.icp_max_iterations);
    let _ = writeln!(out, "icp_convergence_tol {}", r.icp_convergence_tol);
    for m in 0..r.markers {
        let _ = writeln!(
            out,
            "marker {m} mean {} rmse {} baseline_mean {}",
            r.per_marker_mean[m], r.per_marker_rmse[m], r.baseline_per_marker_mean[m]
        );
    }
    let _ = writeln!(
        out,
        "overall mean {} baseline_mean {} ratio {}",
        r.overall_mean,
        r.baseline_overall_mean,
        r.ratio()
    );
    for (f, m, e) in &r.trace {
        let _ = writeln!(out, "trace {f} {m} {e}");
    }
    out.push_str("end\n");
    out
}

/// The human-facing summary (everything but the trace).
pub fn report_summary(r: &EvaluationReport) -> String {
    let full = report_to_string(r);
    full.lines()
        .filter(|l| !l.starts_with("trace "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}
