//! Persistence for sequences, trained models, and estimation outputs.
//!
//! All formats are line-oriented text with explicit version fields and
//! declared units (mm). Numbers serialize through `Display`, which emits
//! the shortest decimal that parses back to the identical value, so every
//! round-trip is value-exact and the files diff cleanly.
//!
//! Sequence file (`coloshape.sequence 1`):
//! ```text
//! coloshape.sequence 1
//! id insertion_000
//! frame_rate 6
//! scope_points 6
//! markers 12
//! units mm
//! simulator key=value ...        (optional provenance echo)
//! frames 300
//! frame <t> <timestamp> scope <3N floats> [colon <3M floats>]
//! ...
//! end
//! ```
//!
//! Model file (`coloshape.model 1`): header key/value lines, per-marker
//! baseline means, the ICP registration target, then each forest as
//! pre-order node lines (`S <feature> <threshold>` / `L <x> <y> <z> <n>`).
//!
//! Estimates file: CSV with header `role,frame,point,x,y,z`, role one of
//! `scope`, `estimate`, `truth`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{ShapeRegressor, TrainingMeta};
use crate::forest::{Forest, ForestParams, TreeNode};
use crate::geometry::Point3;
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::shapes::{ColonShape, FeatureConfig, Frame, InsertionSequence, ScopeShape};
use crate::simulator::{Direction, InsertionConfig, PhantomConfig};

pub const SEQUENCE_MAGIC: &str = "coloshape.sequence";
pub const MODEL_MAGIC: &str = "coloshape.model";
pub const SEQUENCE_VERSION: u32 = 1;
pub const MODEL_VERSION: u32 = 1;

/// Simulator settings echoed into sequence headers so downstream commands
/// can regenerate the phantom (for the ICP registration target) and audit
/// provenance.
#[derive(Debug, Clone)]
pub struct SimulatorProvenance<T> {
    pub phantom: PhantomConfig<T>,
    pub insertion: InsertionConfig<T>,
}

/// One exported estimation frame.
#[derive(Debug, Clone)]
pub struct EstimateFrame<T> {
    pub scope: ScopeShape<T>,
    pub estimate: ColonShape<T>,
    pub truth: Option<ColonShape<T>>,
}

/// A parsed row of an estimates file.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow<T> {
    pub role: String,
    pub frame: usize,
    pub point: usize,
    pub position: Point3<T>,
}

// ---------------------------------------------------------------------
// Line cursor with 1-based line numbers for error reporting.

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            lines: text.lines().enumerate(),
        }
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(Error::Parse {
                line: 0,
                detail: "unexpected end of file (truncated?)".into(),
            }),
        }
    }

    /// Next line, which must start with `key` followed by a value.
    fn expect_kv(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next()?;
        match line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(value) => Ok((n, value)),
            None => Err(Error::Parse {
                line: n,
                detail: format!("expected '{key} <value>', got '{line}'"),
            }),
        }
    }
}

fn parse_num<F: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<F> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        detail: format!("invalid {what}: '{tok}'"),
    })
}

fn check_magic(line: &str, magic: &str, kind: &'static str, version: u32) -> Result<()> {
    let mut it = line.split_whitespace();
    let (m, v) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
    if m != magic {
        return Err(Error::Parse {
            line: 1,
            detail: format!("not a {kind} file (header '{line}')"),
        });
    }
    if v != version.to_string() {
        return Err(Error::UnsupportedVersion {
            kind,
            found: v.to_string(),
            supported: version,
        });
    }
    Ok(())
}

fn fmt_points<T: Real>(out: &mut String, pts: &[Point3<T>]) {
    for p in pts {
        let _ = write!(out, " {} {} {}", p.x, p.y, p.z);
    }
}

fn take_points<'a, T: Real>(
    toks: &mut std::slice::Iter<'a, &'a str>,
    count: usize,
    line: usize,
    what: &str,
) -> Result<Vec<Point3<T>>> {
    let mut pts = Vec::with_capacity(count);
    for i in 0..count {
        let mut c = [T::zero(); 3];
        for coord in &mut c {
            let tok = toks.next().ok_or_else(|| Error::Parse {
                line,
                detail: format!("{what}: expected {count} points, ran out at point {i}"),
            })?;
            *coord = parse_num(tok, line, "coordinate")?;
        }
        pts.push(Point3::new(c[0], c[1], c[2]));
    }
    Ok(pts)
}

// ---------------------------------------------------------------------
// Simulator provenance echo.

fn points_to_field<T: Real>(pts: &[Point3<T>]) -> String {
    pts.iter()
        .map(|p| format!("{},{},{}", p.x, p.y, p.z))
        .collect::<Vec<_>>()
        .join(";")
}

fn points_from_field<T: Real>(s: &str, line: usize) -> Result<Vec<Point3<T>>> {
    s.split(';')
        .map(|triple| {
            let c: Vec<&str> = triple.split(',').collect();
            if c.len() != 3 {
                return Err(Error::Parse {
                    line,
                    detail: format!("bad point triple '{triple}'"),
                });
            }
            Ok(Point3::new(
                parse_num(c[0], line, "coordinate")?,
                parse_num(c[1], line, "coordinate")?,
                parse_num(c[2], line, "coordinate")?,
            ))
        })
        .collect()
}

fn provenance_to_line<T: Real>(p: &SimulatorProvenance<T>) -> String {
    let dir = match p.insertion.direction {
        Direction::Withdrawal => "withdrawal",
        Direction::Insertion => "insertion",
    };
    format!(
        "simulator n_centerline_samples={} marker_count={} scope_point_count={} \
         sensor_spacing={} surface_radius={} rest_curve={} n_frames={} frame_rate={} \
         direction={dir} kappa={} lambda={} max_marker_displacement={} noise_scope={} \
         noise_marker={} seed={}",
        p.phantom.n_centerline_samples,
        p.phantom.marker_count,
        p.phantom.scope_point_count,
        p.phantom.sensor_spacing,
        p.phantom.surface_radius,
        points_to_field(&p.phantom.rest_curve),
        p.insertion.n_frames,
        p.insertion.frame_rate,
        p.insertion.coupling_strength,
        p.insertion.coupling_decay,
        p.insertion.max_marker_displacement,
        p.insertion.noise_sigma_scope,
        p.insertion.noise_sigma_marker,
        p.insertion.seed,
    )
}

fn provenance_from_line<T: Real>(value: &str, line: usize) -> Result<SimulatorProvenance<T>> {
    let mut phantom = PhantomConfig::<T>::default();
    let mut insertion = InsertionConfig::<T>::default();
    for field in value.split_whitespace() {
        let (key, val) = field.split_once('=').ok_or_else(|| Error::Parse {
            line,
            detail: format!("bad simulator field '{field}'"),
        })?;
        match key {
            "n_centerline_samples" => phantom.n_centerline_samples = parse_num(val, line, key)?,
            "marker_count" => phantom.marker_count = parse_num(val, line, key)?,
            "scope_point_count" => phantom.scope_point_count = parse_num(val, line, key)?,
            "sensor_spacing" => phantom.sensor_spacing = parse_num(val, line, key)?,
            "surface_radius" => phantom.surface_radius = parse_num(val, line, key)?,
            "rest_curve" => phantom.rest_curve = points_from_field(val, line)?,
            "n_frames" => insertion.n_frames = parse_num(val, line, key)?,
            "frame_rate" => insertion.frame_rate = parse_num(val, line, key)?,
            "direction" => {
                insertion.direction = match val {
                    "withdrawal" => Direction::Withdrawal,
                    "insertion" => Direction::Insertion,
                    other => {
                        return Err(Error::Parse {
                            line,
                            detail: format!("unknown direction '{other}'"),
                        })
                    }
                }
            }
            "kappa" => insertion.coupling_strength = parse_num(val, line, key)?,
            "lambda" => insertion.coupling_decay = parse_num(val, line, key)?,
            "max_marker_displacement" => {
                insertion.max_marker_displacement = parse_num(val, line, key)?
            }
            "noise_scope" => insertion.noise_sigma_scope = parse_num(val, line, key)?,
            "noise_marker" => insertion.noise_sigma_marker = parse_num(val, line, key)?,
            "seed" => insertion.seed = parse_num(val, line, key)?,
            other => {
                return Err(Error::Parse {
                    line,
                    detail: format!("unknown simulator field '{other}'"),
                })
            }
        }
    }
    Ok(SimulatorProvenance { phantom, insertion })
}

// ---------------------------------------------------------------------
// Sequences.

/// Serialize a sequence (with optional simulator provenance) to a string.
pub fn sequence_to_string<T: Real>(
    seq: &InsertionSequence<T>,
    provenance: Option<&SimulatorProvenance<T>>,
) -> Result<String> {
    seq.check_invariants()?;
    if seq.id.contains(char::is_whitespace) || seq.id.contains(',') || seq.id.is_empty() {
        return Err(Error::invalid_input(format!(
            "sequence id '{}' must be non-empty without spaces or commas",
            seq.id
        )));
    }
    let markers = seq.markers().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{SEQUENCE_MAGIC} {SEQUENCE_VERSION}");
    let _ = writeln!(out, "id {}", seq.id);
    let _ = writeln!(out, "frame_rate {}", seq.frame_rate);
    let _ = writeln!(out, "scope_points {}", seq.scope_points());
    let _ = writeln!(out, "markers {markers}");
    let _ = writeln!(out, "units mm");
    if let Some(p) = provenance {
        let _ = writeln!(out, "{}", provenance_to_line(p));
    }
    let _ = writeln!(out, "frames {}", seq.len());
    for frame in &seq.frames {
        let _ = write!(out, "frame {} {}", frame.t, frame.timestamp);
        out.push_str(" scope");
        fmt_points(&mut out, frame.scope.points());
        if let Some(colon) = &frame.colon {
            out.push_str(" colon");
            fmt_points(&mut out, colon.points());
        }
        out.push('\n');
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn save_sequence<T: Real>(
    seq: &InsertionSequence<T>,
    provenance: Option<&SimulatorProvenance<T>>,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, sequence_to_string(seq, provenance)?)?;
    Ok(())
}

/// Parse a sequence file. Returns the sequence and, when present, the
/// simulator provenance echo.
pub fn sequence_from_string<T: Real>(
    text: &str,
) -> Result<(InsertionSequence<T>, Option<SimulatorProvenance<T>>)> {
    let mut cur = Cursor::new(text);
    let (_, magic_line) = cur.next()?;
    check_magic(magic_line, SEQUENCE_MAGIC, "sequence", SEQUENCE_VERSION)?;

    let (_, id) = cur.expect_kv("id")?;
    let (n_line, rate) = cur.expect_kv("frame_rate")?;
    let frame_rate: T = parse_num(rate, n_line, "frame_rate")?;
    let (n_line, sp) = cur.expect_kv("scope_points")?;
    let scope_points: usize = parse_num(sp, n_line, "scope_points")?;
    let (n_line, mk) = cur.expect_kv("markers")?;
    let markers: usize = parse_num(mk, n_line, "markers")?;
    let (n_line, units) = cur.expect_kv("units")?;
    if units != "mm" {
        return Err(Error::Parse {
            line: n_line,
            detail: format!("unsupported units '{units}', expected mm"),
        });
    }

    // Optional provenance, then the frame count.
    let (mut n_line, mut line) = cur.next()?;
    let provenance = if let Some(value) = line.strip_prefix("simulator ") {
        let p = provenance_from_line(value, n_line)?;
        let (l, v) = cur.next()?;
        n_line = l;
        line = v;
        Some(p)
    } else {
        None
    };
    let count_str = line.strip_prefix("frames ").ok_or_else(|| Error::Parse {
        line: n_line,
        detail: format!("expected 'frames <count>', got '{line}'"),
    })?;
    let n_frames: usize = parse_num(count_str, n_line, "frame count")?;

    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let (line_no, line) = cur.next()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let mut it = toks.iter();
        if it.next() != Some(&"frame") {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("frame record {k}: expected 'frame ...', got '{line}'"),
            });
        }
        let t: usize = parse_num(
            it.next().ok_or_else(|| Error::Parse {
                line: line_no,
                detail: format!("frame record {k}: missing index"),
            })?,
            line_no,
            "frame index",
        )?;
        let timestamp: T = parse_num(
            it.next().ok_or_else(|| Error::Parse {
                line: line_no,
                detail: format!("frame record {k}: missing timestamp"),
            })?,
            line_no,
            "timestamp",
        )?;
        if it.next() != Some(&"scope") {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("frame record {k}: expected 'scope' section"),
            });
        }
        let scope_pts =
            take_points::<T>(&mut it, scope_points, line_no, &format!("frame record {k} scope"))?;
        let colon = match it.next() {
            None => None,
            Some(&"colon") => {
                if markers == 0 {
                    return Err(Error::Parse {
                        line: line_no,
                        detail: format!(
                            "frame record {k}: colon data in a sequence with markers 0"
                        ),
                    });
                }
                let pts =
                    take_points::<T>(&mut it, markers, line_no, &format!("frame record {k} colon"))?;
                Some(ColonShape::new(pts).map_err(|e| Error::Parse {
                    line: line_no,
                    detail: format!("frame record {k}: {e}"),
                })?)
            }
            Some(other) => {
                return Err(Error::Parse {
                    line: line_no,
                    detail: format!("frame record {k}: unexpected token '{other}'"),
                })
            }
        };
        if let Some(extra) = it.next() {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("frame record {k}: trailing token '{extra}'"),
            });
        }
        frames.push(Frame {
            t,
            timestamp,
            scope: ScopeShape::new(scope_pts).map_err(|e| Error::Parse {
                line: line_no,
                detail: format!("frame record {k}: {e}"),
            })?,
            colon,
        });
    }
    let (line_no, line) = cur.next()?;
    if line != "end" {
        return Err(Error::Parse {
            line: line_no,
            detail: format!("expected 'end', got '{line}'"),
        });
    }

    let seq = InsertionSequence::new(id.to_string(), frame_rate, frames)?;
    Ok((seq, provenance))
}

pub fn load_sequence<T: Real>(
    path: &Path,
) -> Result<(InsertionSequence<T>, Option<SimulatorProvenance<T>>)> {
    let text = std::fs::read_to_string(path)?;
    sequence_from_string(&text)
}

// ---------------------------------------------------------------------
// Models.

fn opt_to_str(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn opt_from_str(s: &str, line: usize, what: &str) -> Result<Option<usize>> {
    if s == "none" {
        Ok(None)
    } else {
        Ok(Some(parse_num(s, line, what)?))
    }
}

fn write_node<T: Real>(out: &mut String, node: &TreeNode<T>) {
    match node {
        TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(out, "S {feature_index} {threshold}");
            write_node(out, left);
            write_node(out, right);
        }
        TreeNode::Leaf { mean, n_samples } => {
            let _ = writeln!(out, "L {} {} {} {n_samples}", mean.x, mean.y, mean.z);
        }
    }
}

/// Serialize a trained model to a string.
pub fn model_to_string<T: Real>(r: &ShapeRegressor<T>) -> Result<String> {
    for id in &r.meta.sequence_ids {
        if id.contains(char::is_whitespace) || id.contains(',') || id.is_empty() {
            return Err(Error::invalid_input(format!(
                "sequence id '{id}' must be non-empty without spaces or commas"
            )));
        }
    }
    let p = &r.meta.forest_params;
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
    let _ = writeln!(out, "scope_points {}", r.n_scope_points());
    let _ = writeln!(out, "markers {}", r.markers());
    let _ = writeln!(out, "feature_dim {}", 3 * r.n_scope_points());
    let _ = writeln!(out, "seed {}", r.meta.seed);
    let _ = writeln!(out, "n_trees {}", p.n_trees);
    let _ = writeln!(out, "max_depth {}", opt_to_str(p.max_depth));
    let _ = writeln!(out, "min_samples_leaf {}", p.min_samples_leaf);
    let _ = writeln!(out, "mtry {}", opt_to_str(p.mtry));
    let _ = writeln!(out, "bootstrap {}", p.bootstrap);
    let _ = writeln!(out, "center_features {}", r.meta.feature_config.center);
    let _ = writeln!(out, "trained_on {}", r.meta.sequence_ids.join(","));
    for (m, mean) in r.meta.marker_means.iter().enumerate() {
        let _ = writeln!(out, "marker_mean {m} {} {} {}", mean.x, mean.y, mean.z);
    }
    let _ = writeln!(
        out,
        "icp_target {}",
        if r.meta.registration_target.is_empty() {
            "none".to_string()
        } else {
            points_to_field(&r.meta.registration_target)
        }
    );
    for (m, forest) in r.forests().iter().enumerate() {
        let _ = writeln!(out, "forest {m} seed {}", forest.params.seed);
        for (t, tree) in forest.trees.iter().enumerate() {
            let _ = writeln!(out, "tree {t} nodes {}", tree.node_count());
            write_node(&mut out, tree);
        }
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn save_model<T: Real>(r: &ShapeRegressor<T>, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(r)?)?;
    Ok(())
}

/// Rebuild one tree from `count` pre-order node lines.
fn read_tree<T: Real>(cur: &mut Cursor, count: usize) -> Result<TreeNode<T>> {
    if count == 0 {
        return Err(Error::StructuralIntegrity("tree with zero nodes".into()));
    }
    let mut consumed = 0usize;
    let node = read_node(cur, &mut consumed, count)?;
    if consumed != count {
        return Err(Error::StructuralIntegrity(format!(
            "tree declared {count} nodes but reconstructed from {consumed}"
        )));
    }
    Ok(node)
}

fn read_node<T: Real>(cur: &mut Cursor, consumed: &mut usize, limit: usize) -> Result<TreeNode<T>> {
    if *consumed >= limit {
        return Err(Error::StructuralIntegrity(format!(
            "tree needs more than its declared {limit} nodes (split missing a child)"
        )));
    }
    let (line_no, line) = cur.next().map_err(|_| {
        Error::StructuralIntegrity("node list ends inside a tree".into())
    })?;
    *consumed += 1;
    let toks: Vec<&str> = line.split_whitespace().collect();
    match toks.as_slice() {
        ["S", feature, threshold] => {
            let feature_index: usize = parse_num(feature, line_no, "feature index")?;
            let threshold: T = parse_num(threshold, line_no, "threshold")?;
            let left = read_node(cur, consumed, limit)?;
            let right = read_node(cur, consumed, limit)?;
            Ok(TreeNode::Split {
                feature_index,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        ["L", x, y, z, n] => Ok(TreeNode::Leaf {
            mean: Point3::new(
                parse_num(x, line_no, "leaf mean")?,
                parse_num(y, line_no, "leaf mean")?,
                parse_num(z, line_no, "leaf mean")?,
            ),
            n_samples: parse_num(n, line_no, "leaf sample count")?,
        }),
        _ => Err(Error::Parse {
            line: line_no,
            detail: format!("expected node line, got '{line}'"),
        }),
    }
}

/// Parse a model file.
pub fn model_from_string<T: Real>(text: &str) -> Result<ShapeRegressor<T>> {
    let mut cur = Cursor::new(text);
    let (_, magic_line) = cur.next()?;
    check_magic(magic_line, MODEL_MAGIC, "model", MODEL_VERSION)?;

    let (l, v) = cur.expect_kv("scope_points")?;
    let scope_points: usize = parse_num(v, l, "scope_points")?;
    let (l, v) = cur.expect_kv("markers")?;
    let markers: usize = parse_num(v, l, "markers")?;
    let (l, v) = cur.expect_kv("feature_dim")?;
    let feature_dim: usize = parse_num(v, l, "feature_dim")?;
    if feature_dim != 3 * scope_points {
        return Err(Error::StructuralIntegrity(format!(
            "feature_dim {feature_dim} does not match 3 x scope_points {scope_points}"
        )));
    }
    let (l, v) = cur.expect_kv("seed")?;
    let seed: u64 = parse_num(v, l, "seed")?;
    let (l, v) = cur.expect_kv("n_trees")?;
    let n_trees: usize = parse_num(v, l, "n_trees")?;
    let (l, v) = cur.expect_kv("max_depth")?;
    let max_depth = opt_from_str(v, l, "max_depth")?;
    let (l, v) = cur.expect_kv("min_samples_leaf")?;
    let min_samples_leaf: usize = parse_num(v, l, "min_samples_leaf")?;
    let (l, v) = cur.expect_kv("mtry")?;
    let mtry = opt_from_str(v, l, "mtry")?;
    let (l, v) = cur.expect_kv("bootstrap")?;
    let bootstrap: bool = parse_num(v, l, "bootstrap")?;
    let (l, v) = cur.expect_kv("center_features")?;
    let center: bool = parse_num(v, l, "center_features")?;
    let (_, v) = cur.expect_kv("trained_on")?;
    let sequence_ids: Vec<String> = if v.is_empty() {
        Vec::new()
    } else {
        v.split(',').map(str::to_string).collect()
    };

    let mut marker_means = Vec::with_capacity(markers);
    for m in 0..markers {
        let (l, v) = cur.expect_kv(&format!("marker_mean {m}"))?;
        let toks: Vec<&str> = v.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: l,
                detail: format!("marker_mean {m}: expected 3 coordinates"),
            });
        }
        marker_means.push(Point3::new(
            parse_num(toks[0], l, "marker mean")?,
            parse_num(toks[1], l, "marker mean")?,
            parse_num(toks[2], l, "marker mean")?,
        ));
    }

    let (l, v) = cur.expect_kv("icp_target")?;
    let registration_target = if v == "none" {
        Vec::new()
    } else {
        points_from_field::<T>(v, l)?
    };

    let params = ForestParams {
        n_trees,
        max_depth,
        min_samples_leaf,
        mtry,
        bootstrap,
        seed,
    };

    let mut forests = Vec::with_capacity(markers);
    for m in 0..markers {
        let (l, v) = cur.expect_kv(&format!("forest {m}"))?;
        let forest_seed: u64 = match v.strip_prefix("seed ") {
            Some(s) => parse_num(s, l, "forest seed")?,
            None => {
                return Err(Error::Parse {
                    line: l,
                    detail: format!("forest {m}: expected 'seed <value>'"),
                })
            }
        };
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let (l, v) = cur.expect_kv(&format!("tree {t}"))?;
            let count: usize = match v.strip_prefix("nodes ") {
                Some(s) => parse_num(s, l, "node count")?,
                None => {
                    return Err(Error::Parse {
                        line: l,
                        detail: format!("tree {t}: expected 'nodes <count>'"),
                    })
                }
            };
            trees.push(read_tree::<T>(&mut cur, count)?);
        }
        forests.push(Forest {
            params: ForestParams {
                seed: forest_seed,
                ..params
            },
            trees,
            feature_dim,
        });
    }
    let (line_no, line) = cur.next()?;
    if line != "end" {
        return Err(Error::Parse {
            line: line_no,
            detail: format!("expected 'end', got '{line}'"),
        });
    }

    ShapeRegressor::from_parts(
        forests,
        scope_points,
        TrainingMeta {
            sequence_ids,
            seed,
            forest_params: params,
            feature_config: FeatureConfig { center },
            marker_means,
            registration_target,
        },
    )
}

pub fn load_model<T: Real>(path: &Path) -> Result<ShapeRegressor<T>> {
    let text = std::fs::read_to_string(path)?;
    model_from_string(&text)
}

/// Per-marker seed as written by the trainer; exposed so loaders can
/// verify a model file against its declared top-level seed.
pub fn marker_seed(seed: u64, marker: usize) -> u64 {
    derive_seed(seed, &[marker as u64])
}

// ---------------------------------------------------------------------
// Estimates export.

/// Write plot-ready rows: one per (frame, point) with a role tag.
pub fn estimates_to_string<T: Real>(frames: &[EstimateFrame<T>]) -> Result<String> {
    let mut out = String::from("role,frame,point,x,y,z\n");
    for (k, f) in frames.iter().enumerate() {
        for (i, p) in f.scope.points().iter().enumerate() {
            let _ = writeln!(out, "scope,{k},{i},{},{},{}", p.x, p.y, p.z);
        }
        for (i, p) in f.estimate.points().iter().enumerate() {
            let _ = writeln!(out, "estimate,{k},{i},{},{},{}", p.x, p.y, p.z);
        }
        if let Some(truth) = &f.truth {
            for (i, p) in truth.points().iter().enumerate() {
                let _ = writeln!(out, "truth,{k},{i},{},{},{}", p.x, p.y, p.z);
            }
        }
    }
    Ok(out)
}

pub fn export_estimates<T: Real>(frames: &[EstimateFrame<T>], path: &Path) -> Result<()> {
    std::fs::write(path, estimates_to_string(frames)?)?;
    Ok(())
}

/// Parse an estimates file back into rows.
pub fn estimates_from_string<T: Real>(text: &str) -> Result<Vec<EstimateRow<T>>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "role,frame,point,x,y,z")) => {}
        Some((_, other)) => {
            return Err(Error::Parse {
                line: 1,
                detail: format!("unexpected estimates header '{other}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                detail: "empty estimates file".into(),
            })
        }
    }
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("expected 6 fields, got {}", toks.len()),
            });
        }
        rows.push(EstimateRow {
            role: toks[0].to_string(),
            frame: parse_num(toks[1], line_no, "frame")?,
            point: parse_num(toks[2], line_no, "point")?,
            position: Point3::new(
                parse_num(toks[3], line_no, "x")?,
                parse_num(toks[4], line_no, "y")?,
                parse_num(toks[5], line_no, "z")?,
            ),
        });
    }
    Ok(rows)
}

pub fn load_estimates<T: Real>(path: &Path) -> Result<Vec<EstimateRow<T>>> {
    let text = std::fs::read_to_string(path)?;
    estimates_from_string(&text)
}
