//! JSON and CSV export with stable float formatting, and loaders for map,
//! Hamiltonian and curve documents.
//!
//! Floats are written in shortest round-trip form; integral values below
//! 10¹⁵ in magnitude are written without a fractional part.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::{Result, TangleError};
use crate::hamiltonian::HamiltonianSpec;
use crate::manifold::ManifoldBranch;
use crate::map::{LiftedMap, MapExpr};
use crate::tangle::{Crossing, EntrySequence};
use crate::torus::{ClosedCurve, LatticeVector, LiftPoint};

const INTEGRAL_LIMIT: f64 = 1e15;

/// Wraps a serde_json formatter and replaces its float output.
pub struct StableFormatter<F>(pub F);

fn write_stable_f64<W: ?Sized + Write>(w: &mut W, v: f64) -> io::Result<()> {
    if v.is_finite() && v.trunc() == v && v.abs() < INTEGRAL_LIMIT {
        write!(w, "{}", v as i64)
    } else {
        CompactFormatter.write_f64(w, v)
    }
}

impl<F: Formatter> Formatter for StableFormatter<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write_stable_f64(w, v)
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write_stable_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn serialize_with<T: Serialize + ?Sized, F: Formatter>(v: &T, f: F) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, StableFormatter(f));
    v.serialize(&mut ser).map_err(|e| TangleError::parse("json export", e))?;
    String::from_utf8(buf).map_err(|e| TangleError::parse("json export", e))
}

/// Single-line JSON.
pub fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    serialize_with(v, CompactFormatter)
}

/// Indented JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let mut s = serialize_with(v, PrettyFormatter::with_indent(b"  "))?;
    s.push('\n');
    Ok(s)
}

/// A float as it appears in JSON and CSV output.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = Vec::with_capacity(24);
    write_stable_f64(&mut buf, v).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("float output is ASCII")
}

pub fn from_json<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| TangleError::parse(context, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| TangleError::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| TangleError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| TangleError::io(path, e))
}

pub fn parse_map(text: &str, context: &str) -> Result<LiftedMap> {
    LiftedMap::try_from_expr(from_json::<MapExpr>(text, context)?)
}

pub fn load_map(path: &Path) -> Result<LiftedMap> {
    parse_map(&read_text(path)?, &path.display().to_string())
}

pub fn save_map(path: &Path, f: &LiftedMap) -> Result<()> {
    write_text(path, &to_json_pretty(f)?)
}

pub fn load_hamiltonian(path: &Path) -> Result<HamiltonianSpec> {
    from_json(&read_text(path)?, &path.display().to_string())
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

pub fn curve_csv(c: &ClosedCurve) -> String {
    let mut out = format!("# class {} {}\nX,Y\n", c.class().m, c.class().n);
    for p in c.vertices() {
        push_row(&mut out, &[p.x, p.y]);
    }
    out
}

/// Parses a curve CSV. A `# class m n` line is checked against the
/// vertices; without one the class is inferred.
pub fn parse_curve_csv(text: &str, context: &str) -> Result<ClosedCurve> {
    let mut class = None;
    let mut vertices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let words: Vec<&str> = rest.split_whitespace().collect();
            if words.first() == Some(&"class") {
                let parsed = match words[1..] {
                    [m, n] => m.parse::<i64>().ok().zip(n.parse::<i64>().ok()),
                    _ => None,
                };
                let (m, n) = parsed
                    .ok_or_else(|| TangleError::parse(context, format!("line {}: bad class header", lineno + 1)))?;
                class = Some(LatticeVector::new(m, n));
            }
            continue;
        }
        if line.eq_ignore_ascii_case("x,y") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let coords = match fields[..] {
            [x, y, ..] => x.parse::<f64>().ok().zip(y.parse::<f64>().ok()),
            _ => None,
        };
        let (x, y) = coords.ok_or_else(|| TangleError::parse(context, format!("line {}: expected X,Y", lineno + 1)))?;
        vertices.push(LiftPoint::new(x, y));
    }
    match class {
        Some(c) => ClosedCurve::new(vertices, c),
        None => ClosedCurve::from_vertices(vertices),
    }
}

pub fn load_curve(path: &Path) -> Result<ClosedCurve> {
    parse_curve_csv(&read_text(path)?, &path.display().to_string())
}

pub fn branch_csv(b: &ManifoldBranch) -> String {
    let base = b.orbit.base;
    let mut out = format!(
        "# orbit {} {} period {} kind {} sign {}\nX,Y,arclen\n",
        fmt_f64(base.x()),
        fmt_f64(base.y()),
        b.orbit.period,
        b.kind,
        b.sign
    );
    for (p, s) in b.polyline.iter().zip(&b.arclen) {
        push_row(&mut out, &[p.x, p.y, *s]);
    }
    out
}

/// Crossings in the given order, which [`crate::tangle::find_crossings`]
/// makes increasing in `u_param`.
pub fn crossings_csv(crossings: &[Crossing]) -> String {
    let mut out = String::from(
        "# crossings\nu_param,s_param,x,y,lift_x,lift_y,angle,orient,u_segment,s_segment,offset_m,offset_n\n",
    );
    for c in crossings {
        push_row(&mut out, &[c.u_param, c.s_param, c.point.x(), c.point.y(), c.lift[0], c.lift[1], c.angle]);
        out.pop();
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            c.orient, c.u_segment, c.s_segment, c.lattice_offset.m, c.lattice_offset.n
        );
    }
    out
}

pub fn entries_csv(seq: &EntrySequence) -> String {
    let mut out = String::from("# wedge entries\narclen,chart_x,chart_y,lift_x,lift_y,class_m,class_n\n");
    for e in &seq.entries {
        push_row(&mut out, &[e.arclen, e.chart[0], e.chart[1], e.lift[0], e.lift[1]]);
        out.pop();
        let _ = writeln!(out, ",{},{}", e.class.m, e.class.n);
    }
    out
}
