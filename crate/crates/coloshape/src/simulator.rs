//! Deterministic synthetic phantom: a colon-like centerline with surface
//! markers, plus an insertion simulator that produces paired
//! (scope, colon) sequences with deformation coupled to the scope pose.
//!
//! The instrument withdraws tip-first along the centerline. The inserted
//! section straightens toward the tip-to-anus chord in high-curvature
//! regions (scopes tension the colon), and each marker is pulled toward
//! the nearest scope point with exponentially decaying strength. Noise is
//! drawn from per-(frame, point) substreams, so sequences are bitwise
//! reproducible for a given seed.

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::rng::substream;
use crate::scalar::Real;
use crate::shapes::{ColonShape, Frame, InsertionSequence, ScopeShape};

pub const DEFAULT_CENTERLINE_SAMPLES: usize = 200;
pub const DEFAULT_SENSOR_SPACING_MM: f64 = 80.0;
pub const DEFAULT_SURFACE_RADIUS_MM: f64 = 20.0;
pub const DEFAULT_FRAMES: usize = 300;
pub const DEFAULT_FRAME_RATE_HZ: f64 = 6.0;
pub const DEFAULT_COUPLING_STRENGTH: f64 = 0.5;
pub const DEFAULT_COUPLING_DECAY_MM: f64 = 60.0;
pub const DEFAULT_MAX_MARKER_DISPLACEMENT_MM: f64 = 40.0;
pub const DEFAULT_NOISE_SIGMA_SCOPE_MM: f64 = 0.5;
pub const DEFAULT_NOISE_SIGMA_MARKER_MM: f64 = 1.0;

/// Curvature scale (1/mm) at which the straightening blend reaches half
/// its configured strength; a 200 mm bend radius.
const CURVATURE_REF: f64 = 0.005;

/// Dense sampling step along the inserted section, mm.
const PATH_STEP_MM: f64 = 2.0;

/// Sub-intervals per spline segment in the arc-length table.
const ARC_TABLE_SUB: usize = 128;

const LANE_SCOPE_NOISE: u64 = 10;
const LANE_MARKER_NOISE: u64 = 11;

/// Uniform Catmull-Rom spline through control points, with an arc-length
/// parameterization accurate to well below a micrometer at phantom scale.
#[derive(Debug, Clone)]
pub struct CenterlineCurve<T> {
    /// Per-segment cubic coefficients: c(u) = k0 + k1 u + k2 u^2 + k3 u^3.
    segments: Vec<[Point3<T>; 4]>,
    /// Cumulative arc length at each of `segments * ARC_TABLE_SUB + 1`
    /// uniform parameter knots.
    cum_arc: Vec<T>,
    total: T,
}

impl<T: Real> CenterlineCurve<T> {
    pub fn from_control_points(control: &[Point3<T>]) -> Result<Self> {
        if control.len() < 2 {
            return Err(Error::invalid_input(
                "rest_curve: need at least 2 control points",
            ));
        }
        if control.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid_input("rest_curve: non-finite control point"));
        }

        // Phantom end points mirror the boundary so the spline spans every
        // control point.
        let k = control.len();
        let first = control[0] * T::from_f64_const(2.0) - control[1];
        let last = control[k - 1] * T::from_f64_const(2.0) - control[k - 2];

        let pt = |i: isize| -> Point3<T> {
            if i < 0 {
                first
            } else if i as usize >= k {
                last
            } else {
                control[i as usize]
            }
        };

        let half = T::from_f64_const(0.5);
        let segments: Vec<[Point3<T>; 4]> = (0..k - 1)
            .map(|i| {
                let (p0, p1, p2, p3) = (
                    pt(i as isize - 1),
                    pt(i as isize),
                    pt(i as isize + 1),
                    pt(i as isize + 2),
                );
                let two = T::from_f64_const(2.0);
                let three = T::from_f64_const(3.0);
                let four = T::from_f64_const(4.0);
                let five = T::from_f64_const(5.0);
                [
                    p1 * two * half,
                    (p2 - p0) * half,
                    (p0 * two - p1 * five + p2 * four - p3) * half,
                    (p1 * three - p0 - p2 * three + p3) * half,
                ]
            })
            .collect();

        let mut curve = CenterlineCurve {
            segments,
            cum_arc: Vec::new(),
            total: T::zero(),
        };
        curve.build_arc_table();
        if !(curve.total > T::zero()) {
            return Err(Error::invalid_input(
                "rest_curve: degenerate curve with zero arc length",
            ));
        }
        Ok(curve)
    }

    fn position_local(&self, seg: usize, u: T) -> Point3<T> {
        let [k0, k1, k2, k3] = self.segments[seg];
        k0 + (k1 + (k2 + k3 * u) * u) * u
    }

    fn velocity_local(&self, seg: usize, u: T) -> Point3<T> {
        let [_, k1, k2, k3] = self.segments[seg];
        let two = T::from_f64_const(2.0);
        let three = T::from_f64_const(3.0);
        k1 + (k2 * two + k3 * three * u) * u
    }

    fn speed_local(&self, seg: usize, u: T) -> T {
        self.velocity_local(seg, u).norm()
    }

    /// Simpson's rule over [u0, u1] within one segment.
    fn arc_simpson(&self, seg: usize, u0: T, u1: T, panels: usize) -> T {
        let n = T::from_usize(panels).unwrap();
        let h = (u1 - u0) / n;
        let six = T::from_f64_const(6.0);
        let four = T::from_f64_const(4.0);
        let half = T::from_f64_const(0.5);
        let mut acc = T::zero();
        for p in 0..panels {
            let a = u0 + h * T::from_usize(p).unwrap();
            let b = a + h;
            let m = (a + b) * half;
            acc += (self.speed_local(seg, a)
                + self.speed_local(seg, m) * four
                + self.speed_local(seg, b))
                * h
                / six;
        }
        acc
    }

    fn build_arc_table(&mut self) {
        let sub = ARC_TABLE_SUB;
        let mut cum = Vec::with_capacity(self.segments.len() * sub + 1);
        cum.push(T::zero());
        let mut acc = T::zero();
        for seg in 0..self.segments.len() {
            for j in 0..sub {
                let u0 = T::from_usize(j).unwrap() / T::from_usize(sub).unwrap();
                let u1 = T::from_usize(j + 1).unwrap() / T::from_usize(sub).unwrap();
                acc += self.arc_simpson(seg, u0, u1, 2);
                cum.push(acc);
            }
        }
        self.total = acc;
        self.cum_arc = cum;
    }

    /// Total arc length, mm.
    pub fn total_length(&self) -> T {
        self.total
    }

    /// Segment index and local parameter at arc position `s` from the
    /// curve start (clamped to [0, total]).
    fn param_at_arc(&self, s: T) -> (usize, T) {
        let s = s.max(T::zero()).min(self.total);
        let sub = ARC_TABLE_SUB;
        // Binary search for the bracketing knot interval.
        let mut lo = 0usize;
        let mut hi = self.cum_arc.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum_arc[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg = (lo / sub).min(self.segments.len() - 1);
        let j = lo - seg * sub;
        let sub_t = T::from_usize(sub).unwrap();
        let u_lo = T::from_usize(j).unwrap() / sub_t;
        let u_hi = T::from_usize(j + 1).unwrap() / sub_t;

        // Newton on g(u) = arc(u_lo -> u) - (s - cum[lo]) with a bisection
        // guard; the root may sit exactly on a knot.
        let want = s - self.cum_arc[lo];
        let knot_span = self.cum_arc[hi] - self.cum_arc[lo];
        if !(knot_span > T::zero()) || want <= T::zero() {
            return (seg, u_lo);
        }
        let mut a = u_lo;
        let mut b = u_hi;
        let mut u = u_lo + (want / knot_span) * (u_hi - u_lo);
        let tol = self.total * T::epsilon() * T::from_f64_const(8.0);
        for _ in 0..12 {
            let g = self.arc_simpson(seg, u_lo, u, 2) - want;
            if g.abs() <= tol {
                break;
            }
            if g > T::zero() {
                b = u;
            } else {
                a = u;
            }
            let dg = self.speed_local(seg, u);
            let next = if dg > T::zero() { u - g / dg } else { u };
            u = if next >= a && next <= b {
                next
            } else {
                (a + b) * T::from_f64_const(0.5)
            };
        }
        (seg, u)
    }

    /// Point at arc position `s` from the curve start.
    pub fn position_at_arc(&self, s: T) -> Point3<T> {
        let (seg, u) = self.param_at_arc(s);
        self.position_local(seg, u)
    }

    /// Unit tangent at arc position `s`.
    pub fn tangent_at_arc(&self, s: T) -> Point3<T> {
        let (seg, u) = self.param_at_arc(s);
        self.velocity_local(seg, u)
            .normalized()
            .unwrap_or(Point3::new(T::one(), T::zero(), T::zero()))
    }
}

/// Geometry of the synthetic phantom.
#[derive(Debug, Clone)]
pub struct PhantomConfig<T> {
    pub n_centerline_samples: usize,
    /// Control points of the rest centerline, cecum first, mm.
    pub rest_curve: Vec<Point3<T>>,
    pub marker_count: usize,
    pub scope_point_count: usize,
    /// Distance between consecutive scope sensors along the instrument, mm.
    pub sensor_spacing: T,
    /// Outward offset of surface markers from the centerline, mm.
    pub surface_radius: T,
}

/// Default rest centerline: a four-bend, mostly planar curve (ascending,
/// transverse, descending, sigmoid) with a gentle out-of-plane
/// perturbation, roughly 1.5 m of arc.
pub fn default_rest_curve<T: Real>() -> Vec<Point3<T>> {
    let pts = [
        (0.0, 0.0, 0.0),
        (-10.0, 160.0, 12.0),
        (0.0, 330.0, 25.0),
        (70.0, 420.0, 35.0),
        (200.0, 440.0, 45.0),
        (330.0, 420.0, 30.0),
        (395.0, 330.0, 18.0),
        (405.0, 160.0, 8.0),
        (395.0, -10.0, 0.0),
        (330.0, -80.0, -12.0),
        (275.0, -25.0, -18.0),
        (220.0, -95.0, -8.0),
        (160.0, -130.0, 0.0),
    ];
    pts.iter()
        .map(|&(x, y, z)| {
            Point3::new(
                T::from_f64_const(x),
                T::from_f64_const(y),
                T::from_f64_const(z),
            )
        })
        .collect()
}

impl<T: Real> Default for PhantomConfig<T> {
    fn default() -> Self {
        PhantomConfig {
            n_centerline_samples: DEFAULT_CENTERLINE_SAMPLES,
            rest_curve: default_rest_curve(),
            marker_count: crate::shapes::DEFAULT_MARKERS,
            scope_point_count: crate::shapes::DEFAULT_SCOPE_POINTS,
            sensor_spacing: T::from_f64_const(DEFAULT_SENSOR_SPACING_MM),
            surface_radius: T::from_f64_const(DEFAULT_SURFACE_RADIUS_MM),
        }
    }
}

impl<T: Real> PhantomConfig<T> {
    fn check(&self) -> Result<()> {
        if self.n_centerline_samples < 2 {
            return Err(Error::invalid_input(
                "n_centerline_samples: must be at least 2",
            ));
        }
        if self.marker_count < 2 {
            return Err(Error::invalid_input("marker_count: must be at least 2"));
        }
        if self.scope_point_count < 2 {
            return Err(Error::invalid_input(
                "scope_point_count: must be at least 2",
            ));
        }
        if !(self.sensor_spacing > T::zero()) {
            return Err(Error::invalid_input("sensor_spacing: must be positive"));
        }
        if self.surface_radius < T::zero() {
            return Err(Error::invalid_input("surface_radius: must be >= 0"));
        }
        Ok(())
    }
}

/// Instrument travel direction over a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Cecum to anus; tip depth decreases.
    #[default]
    Withdrawal,
    /// Anus to cecum; tip depth increases.
    Insertion,
}

/// One simulated insertion run.
#[derive(Debug, Clone)]
pub struct InsertionConfig<T> {
    pub n_frames: usize,
    pub frame_rate: T,
    pub direction: Direction,
    /// Deformation coupling strength, 0 to 1.
    pub coupling_strength: T,
    /// Exponential decay length of the marker-to-scope coupling, mm.
    pub coupling_decay: T,
    pub max_marker_displacement: T,
    pub noise_sigma_scope: T,
    pub noise_sigma_marker: T,
    pub seed: u64,
}

impl<T: Real> Default for InsertionConfig<T> {
    fn default() -> Self {
        InsertionConfig {
            n_frames: DEFAULT_FRAMES,
            frame_rate: T::from_f64_const(DEFAULT_FRAME_RATE_HZ),
            direction: Direction::Withdrawal,
            coupling_strength: T::from_f64_const(DEFAULT_COUPLING_STRENGTH),
            coupling_decay: T::from_f64_const(DEFAULT_COUPLING_DECAY_MM),
            max_marker_displacement: T::from_f64_const(DEFAULT_MAX_MARKER_DISPLACEMENT_MM),
            noise_sigma_scope: T::from_f64_const(DEFAULT_NOISE_SIGMA_SCOPE_MM),
            noise_sigma_marker: T::from_f64_const(DEFAULT_NOISE_SIGMA_MARKER_MM),
            seed: 0,
        }
    }
}

impl<T: Real> InsertionConfig<T> {
    fn check(&self) -> Result<()> {
        if self.n_frames < 1 {
            return Err(Error::invalid_input("n_frames: must be at least 1"));
        }
        if !(self.frame_rate > T::zero()) || !self.frame_rate.is_finite() {
            return Err(Error::invalid_input("frame_rate: must be positive"));
        }
        let k = self.coupling_strength;
        if !(k >= T::zero() && k <= T::one()) {
            return Err(Error::invalid_input(
                "coupling_strength: must lie in [0, 1]",
            ));
        }
        if self.coupling_decay < T::zero() {
            return Err(Error::invalid_input("coupling_decay: must be >= 0"));
        }
        if self.max_marker_displacement < T::zero() {
            return Err(Error::invalid_input(
                "max_marker_displacement: must be >= 0",
            ));
        }
        if self.noise_sigma_scope < T::zero() || self.noise_sigma_marker < T::zero() {
            return Err(Error::invalid_input("noise sigma: must be >= 0"));
        }
        Ok(())
    }
}

/// A generated phantom: centerline samples, rest markers, and the curve
/// they came from.
#[derive(Debug, Clone)]
pub struct Phantom<T> {
    config: PhantomConfig<T>,
    curve: CenterlineCurve<T>,
    centerline: Vec<Point3<T>>,
    rest_colon: ColonShape<T>,
    marker_stations: Vec<T>,
}

impl<T: Real> Phantom<T> {
    /// Centerline samples, uniform by arc length, cecum first.
    pub fn centerline(&self) -> &[Point3<T>] {
        &self.centerline
    }

    /// Undeformed marker positions, cecum first.
    pub fn rest_colon(&self) -> &ColonShape<T> {
        &self.rest_colon
    }

    /// Arc positions of the markers from the cecum end, mm.
    pub fn marker_stations(&self) -> &[T] {
        &self.marker_stations
    }

    pub fn curve(&self) -> &CenterlineCurve<T> {
        &self.curve
    }

    pub fn config(&self) -> &PhantomConfig<T> {
        &self.config
    }

    pub fn total_length(&self) -> T {
        self.curve.total_length()
    }
}

/// Marker offset direction: vertical, projected perpendicular to the local
/// tangent (markers sit on the upper surface, where the depth camera sees
/// them). Falls back to x if the tangent is vertical.
fn surface_normal<T: Real>(tangent: Point3<T>) -> Point3<T> {
    let up = Point3::new(T::zero(), T::zero(), T::one());
    let proj = up - tangent * up.dot(&tangent);
    if let Some(n) = proj.normalized() {
        if n.norm() > T::from_f64_const(0.5) {
            return n;
        }
    }
    let alt = Point3::new(T::one(), T::zero(), T::zero());
    let proj = alt - tangent * alt.dot(&tangent);
    proj.normalized().unwrap_or(alt)
}

/// Build the phantom: sample the centerline uniformly by arc length and
/// place markers at equal arc stations, offset outward by the surface
/// radius. Marker 0 sits at the cecum end.
pub fn generate_phantom<T: Real>(cfg: &PhantomConfig<T>) -> Result<Phantom<T>> {
    cfg.check()?;
    let curve = CenterlineCurve::from_control_points(&cfg.rest_curve)?;
    let total = curve.total_length();

    let n = cfg.n_centerline_samples;
    let centerline: Vec<Point3<T>> = (0..n)
        .map(|i| {
            let s = total * T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap();
            curve.position_at_arc(s)
        })
        .collect();

    let m = cfg.marker_count;
    let marker_stations: Vec<T> = (0..m)
        .map(|i| total * T::from_usize(i).unwrap() / T::from_usize(m - 1).unwrap())
        .collect();
    let markers: Vec<Point3<T>> = marker_stations
        .iter()
        .map(|&s| {
            let c = curve.position_at_arc(s);
            let normal = surface_normal(curve.tangent_at_arc(s));
            c + normal * cfg.surface_radius
        })
        .collect();

    Ok(Phantom {
        config: cfg.clone(),
        curve,
        centerline,
        rest_colon: ColonShape::new(markers)?,
        marker_stations,
    })
}

/// The noise-free scope shape at insertion depth `depth` (arc distance of
/// the tip from the anus end): the inserted centerline section blended
/// toward the tip-anus chord where the rest curve bends, then N sensor
/// positions walked back from the tip at fixed spacing. Sensors past the
/// anus clamp to the anus end. Tip first.
pub fn scope_at_depth<T: Real>(
    phantom: &Phantom<T>,
    coupling_strength: T,
    depth: T,
) -> Vec<Point3<T>> {
    let total = phantom.curve.total_length();
    let depth = depth.max(T::zero()).min(total);
    let a_tip = total - depth;
    let anus = phantom.curve.position_at_arc(total);
    let tip = phantom.curve.position_at_arc(a_tip);

    // Dense uniform-arc sampling of the inserted rest section, tip first.
    let step = T::from_f64_const(PATH_STEP_MM);
    let n_steps = ((depth / step).to_usize().unwrap_or(0)).max(1);
    let ds = depth / T::from_usize(n_steps).unwrap();
    let section: Vec<Point3<T>> = (0..=n_steps)
        .map(|j| phantom.curve.position_at_arc(a_tip + ds * T::from_usize(j).unwrap()))
        .collect();

    // Discrete curvature per sample: turn angle over arc step.
    let mut curvature = vec![T::zero(); section.len()];
    for j in 1..section.len().saturating_sub(1) {
        let a = section[j] - section[j - 1];
        let b = section[j + 1] - section[j];
        if let (Some(ua), Some(ub)) = (a.normalized(), b.normalized()) {
            let cosang = ua.dot(&ub).max(-T::one()).min(T::one());
            curvature[j] = cosang.acos() / ds;
        }
    }
    if curvature.len() > 2 {
        curvature[0] = curvature[1];
        let last = curvature.len() - 1;
        curvature[last] = curvature[last - 1];
    }

    // Blend toward the chord; weight grows with local curvature.
    let chord = anus - tip;
    let chord_len2 = chord.norm_squared();
    let c_ref = T::from_f64_const(CURVATURE_REF);
    let path: Vec<Point3<T>> = section
        .iter()
        .zip(&curvature)
        .map(|(p, &c)| {
            if chord_len2 <= T::zero() {
                return *p;
            }
            let w = coupling_strength * (c / (c + c_ref));
            let t_proj = ((*p - tip).dot(&chord) / chord_len2)
                .max(T::zero())
                .min(T::one());
            let proj = tip + chord * t_proj;
            *p + (proj - *p) * w
        })
        .collect();

    // Cumulative arc along the blended path.
    let mut cum = Vec::with_capacity(path.len());
    let mut acc = T::zero();
    cum.push(T::zero());
    for w in path.windows(2) {
        acc += (w[1] - w[0]).norm();
        cum.push(acc);
    }
    let path_len = acc;

    // Sensors at fixed spacing back from the tip.
    let n_pts = phantom.config.scope_point_count;
    let spacing = phantom.config.sensor_spacing;
    (0..n_pts)
        .map(|i| {
            let want = spacing * T::from_usize(i).unwrap();
            if want >= path_len {
                return *path.last().unwrap();
            }
            let mut lo = 0usize;
            let mut hi = cum.len() - 1;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if cum[mid] <= want {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let seg_len = cum[hi] - cum[lo];
            if seg_len <= T::zero() {
                return path[lo];
            }
            let f = (want - cum[lo]) / seg_len;
            path[lo] + (path[hi] - path[lo]) * f
        })
        .collect()
}

/// Tip depth at frame `t`: linear from the full arc length down to zero
/// for withdrawal, the reverse for insertion.
fn tip_depth<T: Real>(total: T, cfg: &InsertionConfig<T>, t: usize) -> T {
    if cfg.n_frames == 1 {
        return match cfg.direction {
            Direction::Withdrawal => total,
            Direction::Insertion => T::zero(),
        };
    }
    let frac = T::from_usize(t).unwrap() / T::from_usize(cfg.n_frames - 1).unwrap();
    match cfg.direction {
        Direction::Withdrawal => total * (T::one() - frac),
        Direction::Insertion => total * frac,
    }
}

/// Simulate one insertion: per frame, place the scope, pull each marker
/// toward its nearest scope point with exponentially decaying strength
/// (clipped to the displacement cap), then add per-point Gaussian noise.
pub fn simulate_insertion<T: Real>(
    phantom: &Phantom<T>,
    cfg: &InsertionConfig<T>,
    id: &str,
) -> Result<InsertionSequence<T>>
where
    StandardNormal: Distribution<T>,
{
    cfg.check()?;
    let total = phantom.curve.total_length();
    let rest = phantom.rest_colon.points();

    let mut frames = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let depth = tip_depth(total, cfg, t);
        let scope_clean = scope_at_depth(phantom, cfg.coupling_strength, depth);

        // Marker displacement toward the nearest scope point.
        let markers_clean: Vec<Point3<T>> = rest
            .iter()
            .map(|r| {
                let nearest = scope_clean
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        r.distance(a)
                            .partial_cmp(&r.distance(b))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap();
                let to_scope = nearest - *r;
                let dist = to_scope.norm();
                let weight = if cfg.coupling_decay > T::zero() {
                    (-dist / cfg.coupling_decay).exp()
                } else if dist == T::zero() {
                    T::one()
                } else {
                    T::zero()
                };
                let mut disp = to_scope * (cfg.coupling_strength * weight);
                let mag = disp.norm();
                if mag > cfg.max_marker_displacement && mag > T::zero() {
                    disp = disp * (cfg.max_marker_displacement / mag);
                }
                *r + disp
            })
            .collect();

        let scope: Vec<Point3<T>> = scope_clean
            .iter()
            .enumerate()
            .map(|(i, p)| {
                add_noise(*p, cfg.noise_sigma_scope, cfg.seed, LANE_SCOPE_NOISE, t, i)
            })
            .collect();
        let markers: Vec<Point3<T>> = markers_clean
            .iter()
            .enumerate()
            .map(|(i, p)| {
                add_noise(*p, cfg.noise_sigma_marker, cfg.seed, LANE_MARKER_NOISE, t, i)
            })
            .collect();

        frames.push(Frame {
            t,
            timestamp: T::from_usize(t).unwrap() / cfg.frame_rate,
            scope: ScopeShape::new(scope)?,
            colon: Some(ColonShape::new(markers)?),
        });
    }

    InsertionSequence::new(id.to_string(), cfg.frame_rate, frames)
}

fn add_noise<T: Real>(
    p: Point3<T>,
    sigma: T,
    seed: u64,
    lane: u64,
    t: usize,
    point_index: usize,
) -> Point3<T>
where
    StandardNormal: Distribution<T>,
{
    if sigma <= T::zero() {
        return p;
    }
    let mut rng = substream(seed, &[lane, t as u64, point_index as u64]);
    let normal = Normal::new(T::zero(), sigma).expect("sigma checked non-negative");
    Point3::new(
        p.x + normal.sample(&mut rng),
        p.y + normal.sample(&mut rng),
        p.z + normal.sample(&mut rng),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point3<f64>;

    fn straight_line_config(length: f64) -> PhantomConfig<f64> {
        PhantomConfig {
            rest_curve: vec![
                P::new(0.0, 0.0, 0.0),
                P::new(length / 3.0, 0.0, 0.0),
                P::new(2.0 * length / 3.0, 0.0, 0.0),
                P::new(length, 0.0, 0.0),
            ],
            ..PhantomConfig::default()
        }
    }

    #[test]
    fn straight_line_markers_at_equal_stations() {
        let phantom = generate_phantom(&straight_line_config(1100.0)).unwrap();
        assert!((phantom.total_length() - 1100.0).abs() < 1e-9);
        for (i, marker) in phantom.rest_colon().points().iter().enumerate() {
            let want = 100.0 * i as f64;
            assert!(
                (marker.x - want).abs() < 1e-9,
                "marker {i} at x = {}, want {want}",
                marker.x
            );
            // Offset by the surface radius, perpendicular to the line.
            assert!((marker.z - 20.0).abs() < 1e-9);
            assert!(marker.y.abs() < 1e-9);
        }
    }

    #[test]
    fn phantom_generation_is_deterministic() {
        let cfg = PhantomConfig::<f64>::default();
        let a = generate_phantom(&cfg).unwrap();
        let b = generate_phantom(&cfg).unwrap();
        assert_eq!(a.centerline(), b.centerline());
        assert_eq!(a.rest_colon(), b.rest_colon());
    }

    #[test]
    fn default_phantom_scale_is_plausible() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let total = phantom.total_length();
        assert!(
            (1300.0..1800.0).contains(&total),
            "default arc length {total}"
        );
        assert_eq!(phantom.centerline().len(), 200);
        assert_eq!(phantom.rest_colon().len(), 12);
    }

    #[test]
    fn uncoupled_noise_free_insertion_keeps_rest_shape() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let cfg = InsertionConfig {
            n_frames: 40,
            coupling_strength: 0.0,
            noise_sigma_scope: 0.0,
            noise_sigma_marker: 0.0,
            ..InsertionConfig::default()
        };
        let seq = simulate_insertion(&phantom, &cfg, "rigid").unwrap();
        for frame in &seq.frames {
            assert_eq!(
                frame.colon.as_ref().unwrap().points(),
                phantom.rest_colon().points()
            );
        }
    }

    #[test]
    fn uncoupled_tip_lies_on_centerline_at_depth() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let total = phantom.total_length();
        let cfg = InsertionConfig {
            n_frames: 25,
            coupling_strength: 0.0,
            noise_sigma_scope: 0.0,
            noise_sigma_marker: 0.0,
            ..InsertionConfig::default()
        };
        let seq = simulate_insertion(&phantom, &cfg, "tips").unwrap();
        for (t, frame) in seq.frames.iter().enumerate() {
            let depth = total * (1.0 - t as f64 / 24.0);
            let expect = phantom.curve().position_at_arc(total - depth);
            let tip = frame.scope.points()[0];
            assert!(
                tip.distance(&expect) < 1e-6,
                "frame {t}: tip off centerline by {}",
                tip.distance(&expect)
            );
        }
    }

    #[test]
    fn marker_displacement_never_exceeds_cap() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        for &kappa in &[0.3, 0.7, 1.0] {
            let cfg = InsertionConfig {
                n_frames: 30,
                coupling_strength: kappa,
                max_marker_displacement: 25.0,
                noise_sigma_scope: 0.0,
                noise_sigma_marker: 0.0,
                ..InsertionConfig::default()
            };
            let seq = simulate_insertion(&phantom, &cfg, "cap").unwrap();
            for frame in &seq.frames {
                let scope = frame.scope.points();
                for (m, (p, r)) in frame
                    .colon
                    .as_ref()
                    .unwrap()
                    .points()
                    .iter()
                    .zip(phantom.rest_colon().points())
                    .enumerate()
                {
                    let disp = p.distance(r);
                    assert!(
                        disp <= 25.0 + 1e-9,
                        "frame {} marker {m} displaced {disp}",
                        frame.t
                    );
                    // Also bounded by kappa times the rest distance to the
                    // nearest scope point (exp factor <= 1).
                    let d_scope = scope
                        .iter()
                        .map(|s| r.distance(s))
                        .fold(f64::INFINITY, f64::min);
                    assert!(disp <= kappa * d_scope + 1e-9);
                }
            }
        }
    }

    #[test]
    fn tip_depth_is_monotone_non_increasing_on_withdrawal() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let total = phantom.total_length();
        let cfg = InsertionConfig::<f64>::default();
        let mut prev = f64::INFINITY;
        for t in 0..cfg.n_frames {
            let d = tip_depth(total, &cfg, t);
            assert!(d <= prev);
            prev = d;
        }
        assert_eq!(tip_depth(total, &cfg, 0), total);
        assert_eq!(tip_depth(total, &cfg, cfg.n_frames - 1), 0.0);
    }

    #[test]
    fn same_seed_reproduces_bitwise_different_seed_differs() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let cfg = InsertionConfig {
            n_frames: 10,
            seed: 42,
            ..InsertionConfig::default()
        };
        let a = simulate_insertion(&phantom, &cfg, "s").unwrap();
        let b = simulate_insertion(&phantom, &cfg, "s").unwrap();
        assert_eq!(a, b);

        let c = simulate_insertion(
            &phantom,
            &InsertionConfig {
                seed: 43,
                ..cfg
            },
            "s",
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn emitted_frames_honor_shape_invariants() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let cfg = InsertionConfig {
            n_frames: 50,
            seed: 7,
            ..InsertionConfig::default()
        };
        let seq = simulate_insertion(&phantom, &cfg, "inv").unwrap();
        assert!(seq.check_invariants().is_ok());
        assert_eq!(seq.scope_points(), 6);
        assert_eq!(seq.markers(), Some(12));
        assert_eq!(seq.len(), 50);
    }

    #[test]
    fn single_frame_and_insertion_direction() {
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let cfg = InsertionConfig {
            n_frames: 1,
            noise_sigma_scope: 0.0,
            noise_sigma_marker: 0.0,
            ..InsertionConfig::default()
        };
        let seq = simulate_insertion(&phantom, &cfg, "one").unwrap();
        assert_eq!(seq.len(), 1);

        let ins = InsertionConfig {
            n_frames: 10,
            direction: Direction::Insertion,
            noise_sigma_scope: 0.0,
            noise_sigma_marker: 0.0,
            ..InsertionConfig::default()
        };
        let seq = simulate_insertion(&phantom, &ins, "fwd").unwrap();
        // Tip starts at the anus and ends at the cecum.
        let total = phantom.total_length();
        let first_tip = seq.frames[0].scope.points()[0];
        let last_tip = seq.frames[9].scope.points()[0];
        assert!(first_tip.distance(&phantom.curve().position_at_arc(total)) < 1e-6);
        assert!(last_tip.distance(&phantom.curve().position_at_arc(0.0)) < 1e-6);
    }

    #[test]
    fn config_validation_names_fields() {
        let mut cfg = PhantomConfig::<f64>::default();
        cfg.marker_count = 1;
        let err = generate_phantom(&cfg).unwrap_err();
        assert!(err.to_string().contains("marker_count"));

        let bad = InsertionConfig {
            coupling_strength: 1.5,
            ..InsertionConfig::default()
        };
        let phantom = generate_phantom(&PhantomConfig::<f64>::default()).unwrap();
        let err = simulate_insertion(&phantom, &bad, "x").unwrap_err();
        assert!(err.to_string().contains("coupling_strength"));

        // A single repeated control point has no arc length.
        let degenerate = PhantomConfig {
            rest_curve: vec![P::new(1.0, 1.0, 1.0); 4],
            ..PhantomConfig::default()
        };
        assert!(generate_phantom(&degenerate).is_err());
    }
}
