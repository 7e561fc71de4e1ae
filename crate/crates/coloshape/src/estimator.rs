//! The bank of per-marker regressors: training on paired sequences and
//! smoothed online estimation.
//!
//! One forest per colon marker maps the flattened scope coordinates to
//! that marker's 3-D position. Training pools every frame of every
//! training insertion. Estimation assumes the scope shape is already in
//! the reference frame; [`run_online`] wires the per-frame ICP
//! registration and the causal moving-average smoother around it.

use crate::error::{Error, Result};
use crate::forest::{self, Forest, ForestParams, Sample};
use crate::geometry::{apply_transform, Point3};
use crate::registration::{icp, IcpParams, IcpResult};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::shapes::{featurize_with, ColonShape, FeatureConfig, InsertionSequence, ScopeShape};

pub const DEFAULT_SMOOTHER_WINDOW: usize = 5;

/// Estimator-level configuration (feature encoding options).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorConfig {
    pub feature: FeatureConfig,
}

/// Provenance and context captured at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta<T> {
    pub sequence_ids: Vec<String>,
    pub seed: u64,
    pub forest_params: ForestParams,
    pub feature_config: FeatureConfig,
    /// Per-marker mean position over the pooled training frames; doubles
    /// as the rest-shape baseline predictor during evaluation.
    pub marker_means: Vec<Point3<T>>,
    /// Reference points that estimation-time ICP aligns the scope against.
    /// Populated by the pipeline that assembles the model; empty means the
    /// caller supplies a target.
    pub registration_target: Vec<Point3<T>>,
}

/// A bank of M trained forests, one per colon marker.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRegressor<T> {
    forests: Vec<Forest<T>>,
    n_scope_points: usize,
    pub meta: TrainingMeta<T>,
}

impl<T: Real> ShapeRegressor<T> {
    /// Assemble from parts, enforcing the shared-dimension invariants.
    /// Used by model deserialization.
    pub fn from_parts(
        forests: Vec<Forest<T>>,
        n_scope_points: usize,
        meta: TrainingMeta<T>,
    ) -> Result<Self> {
        if forests.is_empty() {
            return Err(Error::invalid_input("shape regressor: no forests"));
        }
        if n_scope_points == 0 {
            return Err(Error::invalid_input("shape regressor: zero scope points"));
        }
        let want = 3 * n_scope_points;
        for (m, f) in forests.iter().enumerate() {
            if f.feature_dim != want {
                return Err(Error::invalid_input(format!(
                    "shape regressor: forest {m} expects {} features, scope implies {want}",
                    f.feature_dim
                )));
            }
        }
        if meta.marker_means.len() != forests.len() {
            return Err(Error::invalid_input(
                "shape regressor: marker mean count differs from forest count",
            ));
        }
        Ok(ShapeRegressor {
            forests,
            n_scope_points,
            meta,
        })
    }

    pub fn forests(&self) -> &[Forest<T>] {
        &self.forests
    }

    /// Marker count M.
    pub fn markers(&self) -> usize {
        self.forests.len()
    }

    /// Scope point count N.
    pub fn n_scope_points(&self) -> usize {
        self.n_scope_points
    }
}

/// Train one forest per marker on the pooled frames of the training
/// insertions. Per-marker forest seeds derive from `(params.seed, m)`.
pub fn train_shape_regressor<T: Real>(
    training: &[InsertionSequence<T>],
    params: &ForestParams,
    config: &EstimatorConfig,
) -> Result<ShapeRegressor<T>> {
    if training.is_empty() {
        return Err(Error::invalid_input("training: no sequences"));
    }
    for seq in training {
        seq.check_invariants()?;
    }

    let n = training[0].scope_points();
    let m = training[0]
        .markers()
        .ok_or_else(|| Error::invalid_input(format!(
            "training: sequence {} has no colon shapes",
            training[0].id
        )))?;
    for seq in training {
        if seq.scope_points() != n {
            return Err(Error::invalid_input(format!(
                "training: sequence {} has {} scope points, {} has {n}",
                seq.id,
                seq.scope_points(),
                training[0].id
            )));
        }
        if seq.markers() != Some(m) {
            return Err(Error::invalid_input(format!(
                "training: sequence {} marker count differs from {}",
                seq.id, training[0].id
            )));
        }
        for frame in &seq.frames {
            if frame.colon.is_none() {
                return Err(Error::invalid_input(format!(
                    "training: sequence {} frame {} is missing its colon shape",
                    seq.id, frame.t
                )));
            }
        }
    }

    // Pool features once; each marker's samples pair them with that
    // marker's positions.
    let mut features: Vec<Vec<T>> = Vec::new();
    let mut targets: Vec<Vec<Point3<T>>> = vec![Vec::new(); m];
    for seq in training {
        for frame in &seq.frames {
            features.push(featurize_with(&frame.scope, &config.feature).values().to_vec());
            let colon = frame.colon.as_ref().unwrap();
            for (mk, p) in colon.points().iter().enumerate() {
                targets[mk].push(*p);
            }
        }
    }
    let n_samples = features.len();
    let inv = T::one() / T::from_usize(n_samples).unwrap();

    let mut forests = Vec::with_capacity(m);
    let mut marker_means = Vec::with_capacity(m);
    for mk in 0..m {
        let samples: Vec<Sample<T>> = features
            .iter()
            .cloned()
            .zip(targets[mk].iter().copied())
            .collect();
        let marker_params = ForestParams {
            seed: derive_seed(params.seed, &[mk as u64]),
            ..*params
        };
        forests.push(forest::train_forest(&samples, &marker_params)?);
        marker_means.push(
            targets[mk]
                .iter()
                .fold(Point3::zero(), |acc, p| acc + *p)
                * inv,
        );
    }

    ShapeRegressor::from_parts(
        forests,
        n,
        TrainingMeta {
            sequence_ids: training.iter().map(|s| s.id.clone()).collect(),
            seed: params.seed,
            forest_params: *params,
            feature_config: config.feature,
            marker_means,
            registration_target: Vec::new(),
        },
    )
}

/// Predict the colon shape for a scope shape already expressed in the
/// reference frame.
pub fn estimate_colon_shape<T: Real>(
    r: &ShapeRegressor<T>,
    scope: &ScopeShape<T>,
) -> Result<ColonShape<T>> {
    if scope.len() != r.n_scope_points {
        return Err(Error::invalid_input(format!(
            "estimate: scope has {} points, regressor expects {}",
            scope.len(),
            r.n_scope_points
        )));
    }
    let features = featurize_with(scope, &r.meta.feature_config);
    let points = r
        .forests
        .iter()
        .map(|f| forest::predict(f, features.values()))
        .collect::<Result<Vec<_>>>()?;
    ColonShape::new(points)
}

/// How estimates are smoothed over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothingMode {
    /// Average over the trailing window only; usable live.
    #[default]
    Causal,
}

/// Time-series smoothing controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherParams {
    /// Number of trailing frames averaged.
    pub window: usize,
    pub mode: SmoothingMode,
}

impl Default for SmootherParams {
    fn default() -> Self {
        SmootherParams {
            window: DEFAULT_SMOOTHER_WINDOW,
            mode: SmoothingMode::Causal,
        }
    }
}

/// Per-marker, per-coordinate causal moving average over the trailing
/// `min(window, |history|)` shapes; returns the smoothed newest shape.
pub fn smooth_estimates<T: Real>(
    history: &[ColonShape<T>],
    params: &SmootherParams,
) -> Result<ColonShape<T>> {
    if history.is_empty() {
        return Err(Error::invalid_input("smooth: empty history"));
    }
    if params.window < 1 {
        return Err(Error::invalid_input("smooth: window must be >= 1"));
    }
    let m = history[0].len();
    if history.iter().any(|s| s.len() != m) {
        return Err(Error::invalid_input("smooth: inconsistent marker counts"));
    }
    let w = params.window.min(history.len());
    let tail = &history[history.len() - w..];
    let inv_w = T::one() / T::from_usize(w).unwrap();
    let points = (0..m)
        .map(|mk| {
            tail.iter()
                .fold(Point3::zero(), |acc, shape| acc + shape.points()[mk])
                * inv_w
        })
        .collect();
    ColonShape::new(points)
}

/// ICP-register a scope shape against reference points.
pub fn register_scope<T: Real>(
    scope: &ScopeShape<T>,
    target: &[Point3<T>],
    params: &IcpParams<T>,
) -> Result<(ScopeShape<T>, IcpResult<T>)> {
    let result = icp(scope.points(), target, params)?;
    let registered = apply_transform(&result.transform, scope.points())?;
    Ok((ScopeShape::new(registered)?, result))
}

/// One frame of the online pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStep<T> {
    pub registered_scope: ScopeShape<T>,
    pub raw_estimate: ColonShape<T>,
    pub smoothed: ColonShape<T>,
    pub icp: IcpResult<T>,
}

/// Full online pipeline with per-frame details: register each scope shape
/// against `icp_target`, estimate, and smooth against the accumulated
/// history of raw estimates. Frame k's output depends only on frames <= k.
pub fn run_online_trace<T: Real>(
    r: &ShapeRegressor<T>,
    scope_stream: &[ScopeShape<T>],
    icp_target: &[Point3<T>],
    icp_params: &IcpParams<T>,
    smoother_params: &SmootherParams,
) -> Result<Vec<OnlineStep<T>>> {
    if scope_stream.is_empty() {
        return Err(Error::invalid_input("run_online: empty scope stream"));
    }
    let mut history: Vec<ColonShape<T>> = Vec::with_capacity(scope_stream.len());
    let mut steps = Vec::with_capacity(scope_stream.len());
    for (k, scope) in scope_stream.iter().enumerate() {
        let (registered, icp_result) =
            register_scope(scope, icp_target, icp_params).map_err(|e| match e {
                Error::DegenerateGeometry { detail, iteration } => Error::DegenerateGeometry {
                    detail: format!("frame {k}: {detail}"),
                    iteration,
                },
                other => other,
            })?;
        let raw = estimate_colon_shape(r, &registered)?;
        history.push(raw.clone());
        let smoothed = smooth_estimates(&history, smoother_params)?;
        steps.push(OnlineStep {
            registered_scope: registered,
            raw_estimate: raw,
            smoothed,
            icp: icp_result,
        });
    }
    Ok(steps)
}

/// Smoothed estimates only; see [`run_online_trace`].
pub fn run_online<T: Real>(
    r: &ShapeRegressor<T>,
    scope_stream: &[ScopeShape<T>],
    icp_target: &[Point3<T>],
    icp_params: &IcpParams<T>,
    smoother_params: &SmootherParams,
) -> Result<Vec<ColonShape<T>>> {
    Ok(
        run_online_trace(r, scope_stream, icp_target, icp_params, smoother_params)?
            .into_iter()
            .map(|s| s.smoothed)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::Frame;
    use rand::Rng;

    type P = Point3<f64>;

    fn scope_of(points: Vec<P>) -> ScopeShape<f64> {
        ScopeShape::new(points).unwrap()
    }

    fn colon_of(points: Vec<P>) -> ColonShape<f64> {
        ColonShape::new(points).unwrap()
    }

    /// A small synthetic training sequence: scope swings along x, markers
    /// track deterministic functions of it.
    fn toy_sequence(id: &str, frames: usize, seed: u64) -> InsertionSequence<f64> {
        let mut rng = crate::rng::substream(seed, &[99]);
        let mk = |t: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let a = t as f64 * 3.0 + rng.gen_range(-0.01..0.01);
            Frame {
                t,
                timestamp: t as f64 / 6.0,
                scope: scope_of(vec![
                    P::new(a, 0.0, 5.0),
                    P::new(a + 20.0, 9.0, 12.0),
                    P::new(a + 40.0, 3.0, 5.0),
                ]),
                colon: Some(colon_of(vec![
                    P::new(a * 0.5, 50.0, 0.0),
                    P::new(a * 0.5 + 60.0, 55.0, 0.0),
                ])),
            }
        };
        let frames = (0..frames).map(|t| mk(t, &mut rng)).collect();
        InsertionSequence::new(id.into(), 6.0, frames).unwrap()
    }

    fn exact_params(seed: u64) -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: Some(9),
            bootstrap: false,
            seed,
        }
    }

    #[test]
    fn trains_one_forest_per_marker() {
        let seqs = vec![toy_sequence("a", 20, 0), toy_sequence("b", 20, 1)];
        let r = train_shape_regressor(
            &seqs,
            &ForestParams {
                n_trees: 7,
                seed: 5,
                ..ForestParams::default()
            },
            &EstimatorConfig::default(),
        )
        .unwrap();
        assert_eq!(r.markers(), 2);
        assert_eq!(r.n_scope_points(), 3);
        assert!(r.forests().iter().all(|f| f.trees.len() == 7));
        assert_eq!(r.meta.sequence_ids, vec!["a", "b"]);
        assert_eq!(r.meta.marker_means.len(), 2);
    }

    #[test]
    fn rigid_colon_always_predicts_rest_markers() {
        // Colon never moves; every prediction collapses to the fixed
        // marker positions.
        let fixed = vec![P::new(10.0, 50.0, 0.0), P::new(70.0, 55.0, 0.0)];
        let frames: Vec<Frame<f64>> = (0..15)
            .map(|t| Frame {
                t,
                timestamp: t as f64,
                scope: scope_of(vec![
                    P::new(t as f64 * 5.0, 0.0, 0.0),
                    P::new(t as f64 * 5.0 + 20.0, 3.0, 0.0),
                    P::new(t as f64 * 5.0 + 40.0, 6.0, 0.0),
                ]),
                colon: Some(colon_of(fixed.clone())),
            })
            .collect();
        let seq = InsertionSequence::new("rigid".into(), 6.0, frames).unwrap();
        let r = train_shape_regressor(
            &[seq],
            &ForestParams {
                n_trees: 5,
                seed: 2,
                ..ForestParams::default()
            },
            &EstimatorConfig::default(),
        )
        .unwrap();

        let probe = scope_of(vec![
            P::new(-100.0, 0.0, 0.0),
            P::new(0.0, 100.0, 0.0),
            P::new(100.0, -100.0, 0.0),
        ]);
        let est = estimate_colon_shape(&r, &probe).unwrap();
        assert_eq!(est.points(), fixed.as_slice());
    }

    #[test]
    fn memorizes_training_frames_with_exact_settings() {
        let seq = toy_sequence("mem", 25, 3);
        let r = train_shape_regressor(&[seq.clone()], &exact_params(4), &EstimatorConfig::default())
            .unwrap();
        for frame in &seq.frames {
            let est = estimate_colon_shape(&r, &frame.scope).unwrap();
            let truth = frame.colon.as_ref().unwrap();
            for (e, t) in est.points().iter().zip(truth.points()) {
                assert!(e.distance(t) < 1e-12);
            }
        }
    }

    #[test]
    fn duplicating_training_set_is_invariant() {
        // Leaf-size limits scale with duplication, so pin
        // min_samples_leaf = 1 alongside mtry = D and no bagging.
        let seq = toy_sequence("dup", 20, 6);
        let once = train_shape_regressor(
            &[seq.clone()],
            &exact_params(7),
            &EstimatorConfig::default(),
        )
        .unwrap();
        let mut twice_seq = seq.clone();
        twice_seq.id = "dup2".into();
        let twice = train_shape_regressor(
            &[seq.clone(), twice_seq],
            &exact_params(7),
            &EstimatorConfig::default(),
        )
        .unwrap();

        let mut rng = crate::rng::substream(8, &[0]);
        for _ in 0..30 {
            let base = rng.gen_range(-10.0..80.0);
            let probe = scope_of(vec![
                P::new(base, 0.0, 5.0),
                P::new(base + 20.0, 4.0, 5.0),
                P::new(base + 40.0, 8.0, 5.0),
            ]);
            let a = estimate_colon_shape(&once, &probe).unwrap();
            let b = estimate_colon_shape(&twice, &probe).unwrap();
            for (pa, pb) in a.points().iter().zip(b.points()) {
                assert!(pa.distance(pb) < 1e-9);
            }
        }
    }

    #[test]
    fn estimates_stay_in_per_marker_training_boxes() {
        let seqs = vec![toy_sequence("box", 30, 10)];
        let r = train_shape_regressor(
            &seqs,
            &ForestParams {
                n_trees: 10,
                seed: 11,
                ..ForestParams::default()
            },
            &EstimatorConfig::default(),
        )
        .unwrap();

        // Per-marker bounding boxes of the training targets.
        let mut lo = vec![P::new(f64::INFINITY, f64::INFINITY, f64::INFINITY); 2];
        let mut hi = vec![P::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY); 2];
        for f in &seqs[0].frames {
            for (mk, p) in f.colon.as_ref().unwrap().points().iter().enumerate() {
                lo[mk] = P::new(lo[mk].x.min(p.x), lo[mk].y.min(p.y), lo[mk].z.min(p.z));
                hi[mk] = P::new(hi[mk].x.max(p.x), hi[mk].y.max(p.y), hi[mk].z.max(p.z));
            }
        }

        let mut rng = crate::rng::substream(12, &[0]);
        for _ in 0..50 {
            let probe = scope_of(
                (0..3)
                    .map(|_| {
                        P::new(
                            rng.gen_range(-200.0..200.0),
                            rng.gen_range(-200.0..200.0),
                            rng.gen_range(-200.0..200.0),
                        )
                    })
                    .collect(),
            );
            let est = estimate_colon_shape(&r, &probe).unwrap();
            for (mk, p) in est.points().iter().enumerate() {
                let eps = 1e-9;
                assert!(p.x >= lo[mk].x - eps && p.x <= hi[mk].x + eps);
                assert!(p.y >= lo[mk].y - eps && p.y <= hi[mk].y + eps);
                assert!(p.z >= lo[mk].z - eps && p.z <= hi[mk].z + eps);
            }
        }
    }

    #[test]
    fn training_rejects_missing_colon_and_mismatched_n() {
        let mut seq = toy_sequence("bad", 5, 20);
        seq.frames[3].colon = None;
        let err = train_shape_regressor(
            &[seq],
            &ForestParams::default(),
            &EstimatorConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("frame 3"));

        let a = toy_sequence("a", 5, 21);
        let mut b = toy_sequence("b", 5, 22);
        for f in &mut b.frames {
            let mut pts = f.scope.points().to_vec();
            pts.push(P::new(0.0, 0.0, 0.0));
            f.scope = scope_of(pts);
        }
        let err = train_shape_regressor(
            &[a, b],
            &ForestParams::default(),
            &EstimatorConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains('b'));
    }

    #[test]
    fn smoother_examples() {
        let c = |x: f64| colon_of(vec![P::new(x, 0.0, 0.0)]);
        let params = SmootherParams {
            window: 2,
            ..SmootherParams::default()
        };

        // Two-point mean.
        let out = smooth_estimates(&[c(0.0), c(4.0)], &params).unwrap();
        assert_eq!(out.points()[0].x, 2.0);

        // Single-element history is the identity.
        let out = smooth_estimates(&[c(3.0)], &params).unwrap();
        assert_eq!(out.points()[0].x, 3.0);

        // Constant history is a fixed point.
        let hist = vec![c(7.0); 9];
        let out = smooth_estimates(&hist, &SmootherParams::default()).unwrap();
        assert_eq!(out.points()[0].x, 7.0);

        // Inconsistent M rejected.
        let bad = vec![c(0.0), colon_of(vec![P::zero(), P::zero()])];
        assert!(smooth_estimates(&bad, &SmootherParams::default()).is_err());
    }

    #[test]
    fn smoother_is_linear() {
        let mut rng = crate::rng::substream(30, &[0]);
        let mut shapes = |n: usize| -> Vec<ColonShape<f64>> {
            (0..n)
                .map(|_| {
                    colon_of(
                        (0..3)
                            .map(|_| {
                                P::new(
                                    rng.gen_range(-10.0..10.0),
                                    rng.gen_range(-10.0..10.0),
                                    rng.gen_range(-10.0..10.0),
                                )
                            })
                            .collect(),
                    )
                })
                .collect()
        };
        let h1 = shapes(8);
        let h2 = shapes(8);
        let (a, b) = (0.7, -1.3);

        let combo: Vec<ColonShape<f64>> = h1
            .iter()
            .zip(&h2)
            .map(|(s1, s2)| {
                colon_of(
                    s1.points()
                        .iter()
                        .zip(s2.points())
                        .map(|(p1, p2)| *p1 * a + *p2 * b)
                        .collect(),
                )
            })
            .collect();

        let params = SmootherParams::default();
        let sc = smooth_estimates(&combo, &params).unwrap();
        let s1 = smooth_estimates(&h1, &params).unwrap();
        let s2 = smooth_estimates(&h2, &params).unwrap();
        for ((pc, p1), p2) in sc.points().iter().zip(s1.points()).zip(s2.points()) {
            let expect = *p1 * a + *p2 * b;
            assert!(pc.distance(&expect) < 1e-12);
        }
    }

    /// Shared fixture for the online-pipeline tests.
    fn online_fixture() -> (ShapeRegressor<f64>, Vec<ScopeShape<f64>>, Vec<P>) {
        let seq = toy_sequence("online", 30, 40);
        let r = train_shape_regressor(
            &[seq.clone()],
            &ForestParams {
                n_trees: 5,
                seed: 41,
                ..ForestParams::default()
            },
            &EstimatorConfig::default(),
        )
        .unwrap();
        // Register against the pooled training scope points.
        let target: Vec<P> = seq
            .frames
            .iter()
            .flat_map(|f| f.scope.points().to_vec())
            .collect();
        let stream: Vec<ScopeShape<f64>> = seq.frames.iter().map(|f| f.scope.clone()).collect();
        (r, stream, target)
    }

    #[test]
    fn window_one_equals_raw_estimates() {
        let (r, stream, target) = online_fixture();
        let icp_params = IcpParams::default();
        let raw_window = SmootherParams {
            window: 1,
            ..SmootherParams::default()
        };
        let steps =
            run_online_trace(&r, &stream, &target, &icp_params, &raw_window).unwrap();
        assert_eq!(steps.len(), stream.len());
        for step in &steps {
            assert_eq!(step.smoothed, step.raw_estimate);
        }
    }

    #[test]
    fn identical_stream_settles_immediately() {
        let (r, stream, target) = online_fixture();
        let same = vec![stream[4].clone(); 8];
        let params = SmootherParams::default();
        let outs = run_online(&r, &same, &target, &IcpParams::default(), &params).unwrap();
        // Averaging k identical values rounds per window size, so the
        // settling is exact to the ulp, bitwise once the window fills.
        for o in &outs[1..] {
            for (p, q) in o.points().iter().zip(outs[0].points()) {
                assert!(p.distance(q) < 1e-12);
            }
        }
        for o in &outs[params.window..] {
            assert_eq!(o, &outs[params.window - 1]);
        }
    }

    #[test]
    fn truncating_stream_preserves_prefix() {
        let (r, stream, target) = online_fixture();
        let icp_params = IcpParams::default();
        let smoother = SmootherParams::default();
        let full = run_online(&r, &stream, &target, &icp_params, &smoother).unwrap();
        let cut = run_online(&r, &stream[..12], &target, &icp_params, &smoother).unwrap();
        assert_eq!(&full[..12], &cut[..]);
    }

    #[test]
    fn degenerate_icp_error_names_frame() {
        let (r, stream, _) = online_fixture();
        let degenerate_target = vec![P::new(1.0, 2.0, 3.0); 5];
        let err = run_online(
            &r,
            &stream,
            &degenerate_target,
            &IcpParams::default(),
            &SmootherParams::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("frame 0"), "{err}");
    }
}
