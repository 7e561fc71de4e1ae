//! Shape and sequence data model, plus featurization of scope shapes for
//! regression.
//!
//! A scope shape is an ordered list of N points along the instrument, tip
//! first. A colon shape is an ordered list of M marker points along the
//! colon centerline, cecum to anus. Counts are run-time configuration;
//! the defaults are N = 6 and M = 12.

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scalar::Real;

/// Default number of scope points per frame.
pub const DEFAULT_SCOPE_POINTS: usize = 6;
/// Default number of colon markers per frame.
pub const DEFAULT_MARKERS: usize = 12;
/// Default frame-to-frame jump threshold flagged by [`validate_sequence`].
pub const DEFAULT_JUMP_THRESHOLD_MM: f64 = 50.0;

fn check_points<T: Real>(points: &[Point3<T>], what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid_input(format!("{what}: empty point list")));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::invalid_input(format!(
            "{what}: non-finite point at index {i}"
        )));
    }
    Ok(())
}

/// Ordered instrument points, index 0 = tip (cecum side), last = base
/// (anus side).
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeShape<T> {
    points: Vec<Point3<T>>,
}

impl<T: Real> ScopeShape<T> {
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        check_points(&points, "scope shape")?;
        Ok(ScopeShape { points })
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Ordered colon marker points, index 0 nearest the cecum, last nearest
/// the anus.
#[derive(Debug, Clone, PartialEq)]
pub struct ColonShape<T> {
    points: Vec<Point3<T>>,
}

impl<T: Real> ColonShape<T> {
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        check_points(&points, "colon shape")?;
        Ok(ColonShape { points })
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One captured time step: a scope shape plus, during training capture,
/// the simultaneous colon shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub t: usize,
    /// Seconds from sequence start.
    pub timestamp: T,
    pub scope: ScopeShape<T>,
    /// Absent at estimation time.
    pub colon: Option<ColonShape<T>>,
}

/// A time-indexed recording of one instrument insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct InsertionSequence<T> {
    pub id: String,
    /// Capture rate in Hz.
    pub frame_rate: T,
    pub frames: Vec<Frame<T>>,
}

impl<T: Real> InsertionSequence<T> {
    /// Checked constructor; enforces the sequence invariants.
    pub fn new(id: String, frame_rate: T, frames: Vec<Frame<T>>) -> Result<Self> {
        let seq = Self::from_parts_unchecked(id, frame_rate, frames);
        seq.check_invariants()?;
        Ok(seq)
    }

    /// Builds without validation. For ingest paths that validate separately
    /// and for tests that need deliberately broken sequences.
    pub fn from_parts_unchecked(id: String, frame_rate: T, frames: Vec<Frame<T>>) -> Self {
        InsertionSequence {
            id,
            frame_rate,
            frames,
        }
    }

    /// Hard invariants: at least one frame, positive frame rate, constant
    /// N and M, finite points, strictly increasing timestamps.
    pub fn check_invariants(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::invalid_input(format!(
                "sequence {}: no frames",
                self.id
            )));
        }
        if !(self.frame_rate > T::zero()) || !self.frame_rate.is_finite() {
            return Err(Error::invalid_input(format!(
                "sequence {}: frame rate must be positive and finite",
                self.id
            )));
        }
        let n = self.frames[0].scope.len();
        let m = self.frames.iter().find_map(|f| f.colon.as_ref().map(|c| c.len()));
        for (i, frame) in self.frames.iter().enumerate() {
            check_points(frame.scope.points(), "scope shape")
                .map_err(|_| self.frame_err(i, "non-finite or empty scope shape"))?;
            if frame.scope.len() != n {
                return Err(self.frame_err(i, "scope point count differs from first frame"));
            }
            if let Some(colon) = &frame.colon {
                check_points(colon.points(), "colon shape")
                    .map_err(|_| self.frame_err(i, "non-finite or empty colon shape"))?;
                if Some(colon.len()) != m {
                    return Err(self.frame_err(i, "marker count differs across frames"));
                }
            }
            if !frame.timestamp.is_finite() {
                return Err(self.frame_err(i, "non-finite timestamp"));
            }
            if i > 0 && !(frame.timestamp > self.frames[i - 1].timestamp) {
                return Err(self.frame_err(i, "timestamps not strictly increasing"));
            }
        }
        Ok(())
    }

    fn frame_err(&self, frame: usize, msg: &str) -> Error {
        Error::invalid_input(format!("sequence {} frame {frame}: {msg}", self.id))
    }

    /// Scope point count N.
    pub fn scope_points(&self) -> usize {
        self.frames.first().map_or(0, |f| f.scope.len())
    }

    /// Marker count M, when any frame carries a colon shape.
    pub fn markers(&self) -> Option<usize> {
        self.frames.iter().find_map(|f| f.colon.as_ref().map(|c| c.len()))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Flattened scope coordinates fed to the regressors; length 3N.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.len() % 3 != 0 {
            return Err(Error::invalid_input(format!(
                "feature vector length {} is not a positive multiple of 3",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("feature vector has non-finite value"));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Feature encoding options. Coordinates are used raw by default; the
/// centering switch subtracts the shape centroid first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureConfig {
    pub center: bool,
}

/// Flatten a scope shape to (x1,y1,z1,...,xN,yN,zN).
pub fn featurize<T: Real>(scope: &ScopeShape<T>) -> FeatureVector<T> {
    featurize_with(scope, &FeatureConfig::default())
}

/// Flatten with explicit encoding options.
pub fn featurize_with<T: Real>(scope: &ScopeShape<T>, cfg: &FeatureConfig) -> FeatureVector<T> {
    let offset = if cfg.center {
        Point3::centroid(scope.points())
    } else {
        Point3::zero()
    };
    let mut values = Vec::with_capacity(scope.len() * 3);
    for p in scope.points() {
        let q = *p - offset;
        values.push(q.x);
        values.push(q.y);
        values.push(q.z);
    }
    // Shape invariants guarantee finiteness.
    FeatureVector { values }
}

/// Invert the default (uncentered) encoding.
pub fn defeaturize<T: Real>(features: &FeatureVector<T>) -> ScopeShape<T> {
    let points = features
        .values()
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect();
    ScopeShape { points }
}

/// What [`validate_sequence`] found.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceIssue {
    /// A scope point moved more than the threshold between frames.
    ScopeJump {
        frame: usize,
        point: usize,
        distance: f64,
    },
    /// A marker moved more than the threshold between frames.
    MarkerJump {
        frame: usize,
        marker: usize,
        distance: f64,
    },
    /// Timestamp not strictly greater than the previous frame's.
    TimestampOrder { frame: usize },
    /// Any hard invariant violation, reported rather than raised.
    Invariant { detail: String },
}

/// Report-only screening result; an empty issue list means clean.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<SequenceIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Screening parameters for [`validate_sequence`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationParams<T> {
    /// Frame-to-frame displacement above which a point is flagged, mm.
    pub jump_threshold: T,
}

impl<T: Real> Default for ValidationParams<T> {
    fn default() -> Self {
        ValidationParams {
            jump_threshold: T::from_f64_const(DEFAULT_JUMP_THRESHOLD_MM),
        }
    }
}

/// Flags suspicious frames without mutating anything: per-point jumps above
/// the threshold, non-monotone timestamps, and invariant violations.
pub fn validate_sequence<T: Real>(
    seq: &InsertionSequence<T>,
    params: &ValidationParams<T>,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    if let Err(e) = seq.check_invariants() {
        report.issues.push(SequenceIssue::Invariant {
            detail: e.to_string(),
        });
    }

    for i in 1..seq.frames.len() {
        let (prev, cur) = (&seq.frames[i - 1], &seq.frames[i]);
        if !(cur.timestamp > prev.timestamp) {
            report.issues.push(SequenceIssue::TimestampOrder { frame: i });
        }
        for (j, (p, q)) in prev
            .scope
            .points()
            .iter()
            .zip(cur.scope.points())
            .enumerate()
        {
            let d = p.distance(q);
            if d > params.jump_threshold {
                report.issues.push(SequenceIssue::ScopeJump {
                    frame: i,
                    point: j,
                    distance: d.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if let (Some(pc), Some(cc)) = (&prev.colon, &cur.colon) {
            for (j, (p, q)) in pc.points().iter().zip(cc.points()).enumerate() {
                let d = p.distance(q);
                if d > params.jump_threshold {
                    report.issues.push(SequenceIssue::MarkerJump {
                        frame: i,
                        marker: j,
                        distance: d.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point3<f64>;

    fn scope(points: &[(f64, f64, f64)]) -> ScopeShape<f64> {
        ScopeShape::new(points.iter().map(|&(x, y, z)| P::new(x, y, z)).collect()).unwrap()
    }

    fn frame(t: usize, ts: f64, s: ScopeShape<f64>, c: Option<ColonShape<f64>>) -> Frame<f64> {
        Frame {
            t,
            timestamp: ts,
            scope: s,
            colon: c,
        }
    }

    #[test]
    fn featurize_flattens_in_order() {
        let s = scope(&[(0.0, 0.0, 0.0), (1.0, 2.0, 3.0)]);
        let f = featurize(&s);
        assert_eq!(f.values(), &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn featurize_zero_shape_is_zero_vector() {
        let s = scope(&[(0.0, 0.0, 0.0); 4]);
        let f = featurize(&s);
        assert_eq!(f.len(), 12);
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn featurize_round_trips_exactly() {
        let s = scope(&[(1.5, -2.25, 3.125), (4.0, 5.5, -6.75), (0.1, 0.2, 0.3)]);
        assert_eq!(defeaturize(&featurize(&s)), s);
    }

    #[test]
    fn centered_featurization_subtracts_centroid() {
        let s = scope(&[(0.0, 0.0, 0.0), (2.0, 4.0, 6.0)]);
        let f = featurize_with(&s, &FeatureConfig { center: true });
        assert_eq!(f.values(), &[-1.0, -2.0, -3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn sequence_invariants_enforced() {
        let s = scope(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let ok = InsertionSequence::new(
            "t".into(),
            6.0,
            vec![
                frame(0, 0.0, s.clone(), None),
                frame(1, 0.5, s.clone(), None),
            ],
        );
        assert!(ok.is_ok());

        // Duplicate timestamp.
        let bad = InsertionSequence::new(
            "t".into(),
            6.0,
            vec![
                frame(0, 0.0, s.clone(), None),
                frame(1, 0.0, s.clone(), None),
            ],
        );
        assert!(bad.is_err());

        // Mismatched N.
        let bad = InsertionSequence::new(
            "t".into(),
            6.0,
            vec![
                frame(0, 0.0, s.clone(), None),
                frame(1, 0.5, scope(&[(0.0, 0.0, 0.0)]), None),
            ],
        );
        assert!(bad.is_err());

        // Empty.
        assert!(InsertionSequence::<f64>::new("t".into(), 6.0, vec![]).is_err());
    }

    fn clean_sequence(frames: usize) -> InsertionSequence<f64> {
        let mk = |t: usize| {
            let base = t as f64;
            frame(
                t,
                t as f64 / 6.0,
                scope(&[(base, 0.0, 0.0), (base + 10.0, 0.0, 0.0)]),
                Some(
                    ColonShape::new(vec![P::new(base, 50.0, 0.0), P::new(base, 60.0, 0.0)])
                        .unwrap(),
                ),
            )
        };
        InsertionSequence::new("clean".into(), 6.0, (0..frames).map(mk).collect()).unwrap()
    }

    #[test]
    fn validate_clean_sequence_is_empty() {
        let report = validate_sequence(&clean_sequence(10), &ValidationParams::default());
        assert!(report.is_clean());
    }

    #[test]
    fn validate_flags_teleported_marker() {
        let mut seq = clean_sequence(10);
        // Teleport marker 1 in the final frame so exactly one jump exists.
        let last = seq.frames.last_mut().unwrap();
        let mut pts = last.colon.take().unwrap().points().to_vec();
        pts[1] = pts[1] + P::new(200.0, 0.0, 0.0);
        last.colon = Some(ColonShape::new(pts).unwrap());

        let report = validate_sequence(&seq, &ValidationParams::default());
        assert_eq!(report.issues.len(), 1);
        match &report.issues[0] {
            SequenceIssue::MarkerJump { frame, marker, distance } => {
                assert_eq!(*frame, 9);
                assert_eq!(*marker, 1);
                assert!(*distance > 199.0);
            }
            other => panic!("unexpected issue {other:?}"),
        }
    }

    #[test]
    fn validate_flags_duplicate_timestamp() {
        let mut seq = clean_sequence(5);
        seq.frames[3].timestamp = seq.frames[2].timestamp;
        let seq = InsertionSequence::from_parts_unchecked(seq.id, seq.frame_rate, seq.frames);
        let report = validate_sequence(&seq, &ValidationParams::default());
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, SequenceIssue::TimestampOrder { frame: 3 })));
        // The invariant breach is also surfaced.
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, SequenceIssue::Invariant { .. })));
    }
}
