//! Registration-guarded estimation pipeline used by the commands.
//!
//! The library's online pipeline propagates degenerate-geometry errors;
//! for file-driven runs that is too brittle. Near the end of a withdrawal
//! the remaining scope points clamp onto the anus and stop determining a
//! rigid transform, so this wrapper holds the last successful registration
//! for such frames (identity before the first success), the way a tracker
//! coasts through a dropout.

use coloshape::error::Error;
use coloshape::estimator::{
    estimate_colon_shape, register_scope, smooth_estimates, ShapeRegressor, SmootherParams,
};
use coloshape::geometry::{apply_transform, Point3, RigidTransform};
use coloshape::registration::IcpParams;
use coloshape::shapes::{ColonShape, InsertionSequence, ScopeShape};

type P = Point3<f64>;

/// One output frame of the guarded pipeline.
#[derive(Debug, Clone)]
pub struct PipelineStep {
    pub registered_scope: ScopeShape<f64>,
    pub raw_estimate: ColonShape<f64>,
    pub smoothed: ColonShape<f64>,
    /// True when this frame reused the previous transform because its
    /// geometry was degenerate.
    pub coasted: bool,
}

/// Register each frame (holding the last transform over degenerate
/// frames), estimate, and smooth. Output length equals input length.
pub fn run_guarded(
    model: &ShapeRegressor<f64>,
    scopes: &[ScopeShape<f64>],
    target: &[P],
    icp_params: &IcpParams<f64>,
    smoother: &SmootherParams,
) -> Result<Vec<PipelineStep>, Error> {
    if scopes.is_empty() {
        return Err(Error::invalid_input("pipeline: empty scope stream"));
    }
    let mut last_transform = RigidTransform::<f64>::identity();
    let mut history: Vec<ColonShape<f64>> = Vec::with_capacity(scopes.len());
    let mut steps = Vec::with_capacity(scopes.len());

    for (k, scope) in scopes.iter().enumerate() {
        let (registered, coasted) = match register_scope(scope, target, icp_params) {
            Ok((registered, result)) => {
                last_transform = result.transform;
                (registered, false)
            }
            Err(Error::DegenerateGeometry { .. }) => {
                let pts = apply_transform(&last_transform, scope.points())?;
                (ScopeShape::new(pts)?, true)
            }
            Err(other) => {
                return Err(match other {
                    Error::InvalidInput(detail) => {
                        Error::invalid_input(format!("frame {k}: {detail}"))
                    }
                    e => e,
                })
            }
        };
        let raw = estimate_colon_shape(model, &registered)?;
        history.push(raw.clone());
        let smoothed = smooth_estimates(&history, smoother)?;
        steps.push(PipelineStep {
            registered_scope: registered,
            raw_estimate: raw,
            smoothed,
            coasted,
        });
    }
    Ok(steps)
}

/// Register the scope shapes of a training sequence in place, using the
/// same guarded policy as estimation so train- and test-time features go
/// through one deterministic map.
pub fn register_sequence(
    seq: &InsertionSequence<f64>,
    target: &[P],
    icp_params: &IcpParams<f64>,
) -> Result<InsertionSequence<f64>, Error> {
    let mut last_transform = RigidTransform::<f64>::identity();
    let mut frames = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        let registered = match register_scope(&frame.scope, target, icp_params) {
            Ok((registered, result)) => {
                last_transform = result.transform;
                registered
            }
            Err(Error::DegenerateGeometry { .. }) => {
                ScopeShape::new(apply_transform(&last_transform, frame.scope.points())?)?
            }
            Err(other) => return Err(other),
        };
        frames.push(coloshape::shapes::Frame {
            t: frame.t,
            timestamp: frame.timestamp,
            scope: registered,
            colon: frame.colon.clone(),
        });
    }
    InsertionSequence::new(seq.id.clone(), seq.frame_rate, frames)
}
