//! The five pipeline commands: simulate, train, estimate, evaluate, loo.

use std::path::{Path, PathBuf};

use coloshape::dataio::{
    export_estimates, load_model, load_sequence, save_model, save_sequence, EstimateFrame,
    SimulatorProvenance,
};
use coloshape::error::Error;
use coloshape::estimator::{train_shape_regressor, EstimatorConfig, SmootherParams};
use coloshape::forest::ForestParams;
use coloshape::geometry::Point3;
use coloshape::registration::IcpParams;
use coloshape::shapes::{FeatureConfig, InsertionSequence};
use coloshape::simulator::{generate_phantom, simulate_insertion};

use crate::config::{insertion_seed, provenance_for, registration_target_from, SimulateSettings};
use crate::eval::{evaluate, report_summary, report_to_string, EvaluationReport};
use crate::pipeline::{register_sequence, run_guarded};
use crate::CliError;

type P = Point3<f64>;

/// Training sets smaller than this draw a warning.
const SMALL_TRAINING_SET: usize = 30;

fn sequence_file_name(k: usize) -> String {
    format!("insertion_{k:03}.seq")
}

/// Write `settings.insertions` simulated sequences into `out`, one file
/// per insertion, each under its derived per-insertion seed.
pub fn cmd_simulate(settings: &SimulateSettings, out: &Path) -> Result<(), CliError> {
    // Anything invalid here came from configuration.
    let phantom = generate_phantom(&settings.phantom).map_err(config_err)?;
    std::fs::create_dir_all(out).map_err(|e| {
        CliError::Config(format!("cannot create output directory {}: {e}", out.display()))
    })?;

    println!(
        "phantom: arc length {:.1} mm, {} centerline samples, {} markers, {} scope points",
        phantom.total_length(),
        phantom.centerline().len(),
        settings.phantom.marker_count,
        settings.phantom.scope_point_count
    );
    for k in 0..settings.insertions {
        let mut cfg = settings.insertion.clone();
        cfg.seed = insertion_seed(settings.seed, k);
        let id = format!("insertion_{k:03}");
        let seq = simulate_insertion(&phantom, &cfg, &id).map_err(config_err)?;
        let path = out.join(sequence_file_name(k));
        let provenance = provenance_for(settings, k);
        save_sequence(&seq, Some(&provenance), &path)?;
        println!(
            "wrote {} ({} frames at {} Hz, seed {})",
            path.display(),
            seq.len(),
            seq.frame_rate,
            cfg.seed
        );
    }
    Ok(())
}

fn config_err(e: Error) -> CliError {
    match e {
        Error::InvalidInput(detail) => CliError::Config(detail),
        other => CliError::Core(other),
    }
}

/// Load sequences and cross-check N/M consistency, naming offending files.
fn load_training_set(
    paths: &[PathBuf],
) -> Result<(Vec<InsertionSequence<f64>>, Vec<Option<SimulatorProvenance<f64>>>), CliError> {
    if paths.is_empty() {
        return Err(CliError::Config("no sequence files given".into()));
    }
    let mut seqs = Vec::with_capacity(paths.len());
    let mut provs = Vec::with_capacity(paths.len());
    for path in paths {
        let (seq, prov) = load_sequence::<f64>(path)?;
        seqs.push(seq);
        provs.push(prov);
    }
    let n = seqs[0].scope_points();
    let m = seqs[0].markers();
    for (i, seq) in seqs.iter().enumerate() {
        if seq.scope_points() != n || seq.markers() != m {
            return Err(CliError::Core(Error::invalid_input(format!(
                "sequence files disagree on shape sizes: {} has N={} M={:?}, {} has N={n} M={m:?}",
                paths[i].display(),
                seq.scope_points(),
                seq.markers(),
                paths[0].display(),
            ))));
        }
    }
    Ok((seqs, provs))
}

/// Pick the registration target: the phantom centerline regenerated from
/// the first provenance echo, or the mean training colon shape when no
/// echo is present.
fn registration_target(
    seqs: &[InsertionSequence<f64>],
    provs: &[Option<SimulatorProvenance<f64>>],
) -> Result<Vec<P>, CliError> {
    if let Some(prov) = provs.iter().flatten().next() {
        return Ok(registration_target_from(prov)?);
    }
    eprintln!(
        "note: no simulator provenance in the training sequences; \
         registering against the mean training colon shape"
    );
    let m = seqs[0]
        .markers()
        .ok_or_else(|| CliError::Core(Error::invalid_input("training sequences have no colon shapes")))?;
    let mut sums = vec![P::zero(); m];
    let mut count = 0usize;
    for seq in seqs {
        for frame in &seq.frames {
            if let Some(colon) = &frame.colon {
                for (s, p) in sums.iter_mut().zip(colon.points()) {
                    *s = *s + *p;
                }
                count += 1;
            }
        }
    }
    Ok(sums.into_iter().map(|s| s / count as f64).collect())
}

/// Train a model on the given sequences and save it.
pub fn cmd_train(
    paths: &[PathBuf],
    params: &ForestParams,
    center_features: bool,
    icp_params: &IcpParams<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let (seqs, provs) = load_training_set(paths)?;
    let target = registration_target(&seqs, &provs)?;

    let registered: Vec<InsertionSequence<f64>> = seqs
        .iter()
        .map(|s| register_sequence(s, &target, icp_params))
        .collect::<Result<_, _>>()?;

    let config = EstimatorConfig {
        feature: FeatureConfig {
            center: center_features,
        },
    };
    let mut model = train_shape_regressor(&registered, params, &config)?;
    model.meta.registration_target = target;

    let n_samples: usize = registered.iter().map(|s| s.len()).sum();
    if n_samples < SMALL_TRAINING_SET {
        eprintln!(
            "warning: small training set ({n_samples} frames); expect a degenerate model"
        );
    }
    save_model(&model, out)?;

    println!(
        "trained {} regressors of {} trees each on {n_samples} frames per marker",
        model.markers(),
        params.n_trees
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// Run the online pipeline over a sequence and export plot-ready rows.
pub fn cmd_estimate(
    model_path: &Path,
    sequence_path: &Path,
    smoother: &SmootherParams,
    icp_params: &IcpParams<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model::<f64>(model_path)?;
    let (seq, _) = load_sequence::<f64>(sequence_path)?;
    let scopes: Vec<_> = seq.frames.iter().map(|f| f.scope.clone()).collect();
    let steps = run_guarded(
        &model,
        &scopes,
        &model.meta.registration_target,
        icp_params,
        smoother,
    )?;

    let frames: Vec<EstimateFrame<f64>> = steps
        .iter()
        .zip(&seq.frames)
        .map(|(step, frame)| EstimateFrame {
            scope: step.registered_scope.clone(),
            estimate: step.smoothed.clone(),
            truth: frame.colon.clone(),
        })
        .collect();
    export_estimates(&frames, out)?;

    let coasted = steps.iter().filter(|s| s.coasted).count();
    println!(
        "estimated {} frames ({} with held registration), wrote {}",
        steps.len(),
        coasted,
        out.display()
    );
    Ok(())
}

/// Evaluate a model against a ground-truth sequence; print the summary
/// and optionally write the full report.
pub fn cmd_evaluate(
    model_path: &Path,
    sequence_path: &Path,
    smoother: &SmootherParams,
    icp_params: &IcpParams<f64>,
    report_path: Option<&Path>,
) -> Result<EvaluationReport, CliError> {
    let model = load_model::<f64>(model_path)?;
    let (seq, _) = load_sequence::<f64>(sequence_path)?;
    let (report, _) = evaluate(&model, &seq, icp_params, smoother)?;
    print!("{}", report_summary(&report));
    if let Some(path) = report_path {
        std::fs::write(path, report_to_string(&report)).map_err(Error::Io)?;
        println!("wrote {}", path.display());
    }
    Ok(report)
}

/// Leave-one-insertion-out over all supplied sequences. Each fold trains
/// on the others, writes fold artifacts, and is summarized at the end.
pub fn cmd_loo(
    paths: &[PathBuf],
    params: &ForestParams,
    center_features: bool,
    smoother: &SmootherParams,
    icp_params: &IcpParams<f64>,
    out: &Path,
) -> Result<(), CliError> {
    if paths.len() < 2 {
        return Err(CliError::Config(
            "leave-one-out needs at least 2 sequence files".into(),
        ));
    }
    let (seqs, provs) = load_training_set(paths)?;
    std::fs::create_dir_all(out).map_err(Error::Io)?;

    let config = EstimatorConfig {
        feature: FeatureConfig {
            center: center_features,
        },
    };

    let mut fold_reports: Vec<EvaluationReport> = Vec::with_capacity(seqs.len());
    for held_out in 0..seqs.len() {
        let train_seqs: Vec<InsertionSequence<f64>> = seqs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_out)
            .map(|(_, s)| s.clone())
            .collect();
        let train_provs: Vec<Option<SimulatorProvenance<f64>>> = provs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_out)
            .map(|(_, p)| p.clone())
            .collect();

        let target = registration_target(&train_seqs, &train_provs)?;
        let registered: Vec<InsertionSequence<f64>> = train_seqs
            .iter()
            .map(|s| register_sequence(s, &target, icp_params))
            .collect::<Result<_, _>>()?;
        let mut model = train_shape_regressor(&registered, params, &config)?;
        model.meta.registration_target = target;

        let fold_dir = out.join(format!("fold_{held_out}"));
        std::fs::create_dir_all(&fold_dir).map_err(Error::Io)?;
        save_model(&model, &fold_dir.join("model.csm"))?;

        let test = &seqs[held_out];
        let (report, steps) = evaluate(&model, test, icp_params, smoother)?;
        let frames: Vec<EstimateFrame<f64>> = steps
            .iter()
            .zip(&test.frames)
            .map(|(step, frame)| EstimateFrame {
                scope: step.registered_scope.clone(),
                estimate: step.smoothed.clone(),
                truth: frame.colon.clone(),
            })
            .collect();
        export_estimates(&frames, &fold_dir.join("estimates.csv"))?;
        std::fs::write(fold_dir.join("report.txt"), report_to_string(&report))
            .map_err(Error::Io)?;

        println!(
            "fold {held_out}: test {} mean {:.4} mm baseline {:.4} mm ratio {:.4}",
            report.sequence_id,
            report.overall_mean,
            report.baseline_overall_mean,
            report.ratio()
        );
        fold_reports.push(report);
    }

    let summary = loo_summary(&fold_reports);
    std::fs::write(out.join("summary.txt"), &summary).map_err(Error::Io)?;
    print!("{summary}");
    Ok(())
}

/// Aggregate means weight folds by frame count (equivalently: the mean
/// over every per-frame per-marker error across folds).
pub fn loo_summary(reports: &[EvaluationReport]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "coloshape.loo-summary 1");
    let _ = writeln!(out, "folds {}", reports.len());
    let mut err_weighted = 0.0;
    let mut base_weighted = 0.0;
    let mut total_frames = 0usize;
    for (k, r) in reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "fold {k} test {} frames {} mean {} baseline_mean {} ratio {}",
            r.sequence_id,
            r.frames,
            r.overall_mean,
            r.baseline_overall_mean,
            r.ratio()
        );
        err_weighted += r.overall_mean * r.frames as f64;
        base_weighted += r.baseline_overall_mean * r.frames as f64;
        total_frames += r.frames;
    }
    let agg = err_weighted / total_frames as f64;
    let base = base_weighted / total_frames as f64;
    let _ = writeln!(out, "aggregate mean {agg} baseline_mean {base} ratio {}", agg / base);
    out.push_str("end\n");
    out
}
