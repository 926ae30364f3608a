//! Configuration-driven command line entry point.
//!
//! Every run is reproducible: all randomness flows from the configured seed,
//! report bodies are rendered through [`crate::report`]'s deterministic
//! formatting, and the worker count changes only how work is scheduled —
//! never the bytes of a report.  Volatile data (wall time, timestamp) is
//! confined to the manifest file.
//!
//! Exit codes: `0` pass/complete, `2` refusal or inconclusive verdict (with
//! a recorded reason), `1` error.

use crate::covering::{self, CheckConfig, PhiSliceMap, Verdict};
use crate::deform;
use crate::grassmann::GrassmannPoint;
use crate::holonomy;
use crate::ifs::{self, CertifyOutcome, IFSSpec, IfsMap, IfsPrimitive};
use crate::report::{fmt_f64, Report};
use crate::skew::{
    build_loop_family, FiberField, FiberManifold, FiberPoint, FiberPrimitive, ModPoint,
    ModulatedPrimitive, Modulation, SkewProduct,
};
use crate::spectral::{
    check_anosov, classify_skew_product, spectral_summary, SpectralSummary,
    ToralAutomorphism,
};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn parse(line: usize, col: usize, message: impl Into<String>) -> Self {
        CliError::Parse { line, col, message: message.into() }
    }

    fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Known configuration keys with their validation ranges; any other key is
/// rejected at parse time.
const KNOWN_KEYS: &[&str] = &[
    "seed", "tol", "grid_step", "eps", "eps_light", "tol_angle", "n", "n_max",
    "samples", "workers", "theta", "sigma", "h", "b", "n0", "e_grid", "x_grid",
    "reps", "depth", "l", "k0", "y", "y2", "x", "ds", "stream",
];

/// A validated run configuration: subcommand, input path, and the merged
/// key-value store (defaults < command line < config file, with the
/// override rule enforced during the merge).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: String,
    pub input: PathBuf,
    pub out_dir: PathBuf,
    values: BTreeMap<String, String>,
}

fn default_values() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for (k, v) in [
        ("seed", "0"),
        ("tol", "1e-8"),
        ("grid_step", "0.05"),
        ("eps", "1e-3"),
        ("tol_angle", "1e-3"),
        ("n", "100000"),
        ("n_max", "1000000"),
        ("samples", "10000"),
        ("workers", "1"),
        ("theta", "0.75"),
        ("sigma", "0.02"),
        ("h", "1e-4"),
        ("b", "1"),
        ("n0", "6"),
        ("e_grid", "33"),
        ("x_grid", "3"),
        ("reps", "4"),
        ("depth", "400"),
        ("l", "1"),
        ("stream", "0"),
        ("y", "0.33 0.71"),
        ("y2", ""),
        ("x", ""),
        ("ds", ""),
        ("eps_light", ""),
        ("k0", ""),
    ] {
        m.insert(k.to_string(), v.to_string());
    }
    m
}

impl RunConfig {
    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn get_u64(&self, key: &str) -> Result<u64, CliError> {
        self.raw(key)
            .parse()
            .map_err(|_| CliError::run(format!("key {key}: expected integer, got {:?}", self.raw(key))))
    }

    fn get_usize(&self, key: &str) -> Result<usize, CliError> {
        Ok(self.get_u64(key)? as usize)
    }

    fn get_f64(&self, key: &str) -> Result<f64, CliError> {
        self.raw(key)
            .parse()
            .map_err(|_| CliError::run(format!("key {key}: expected number, got {:?}", self.raw(key))))
    }

    fn get_floats(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.raw(key)
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| CliError::run(format!("key {key}: bad number {t:?}")))
            })
            .collect()
    }

    /// Range validation for every numeric key, applied once after merging.
    fn validate(&self) -> Result<(), CliError> {
        let in_unit = |k: &str| -> Result<(), CliError> {
            let v = self.get_f64(k)?;
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::run(format!("key {k}: {v} outside (0, 1)")));
            }
            Ok(())
        };
        for k in ["tol", "grid_step", "eps", "tol_angle", "theta", "h"] {
            in_unit(k)?;
        }
        let sigma = self.get_f64("sigma")?;
        if !(sigma > 0.0 && sigma <= 0.0833) {
            return Err(CliError::run(format!("key sigma: {sigma} outside (0, 0.0833]")));
        }
        let workers = self.get_usize("workers")?;
        if !(1..=64).contains(&workers) {
            return Err(CliError::run(format!("key workers: {workers} outside 1..=64")));
        }
        for k in ["n", "n_max", "samples", "n0", "e_grid", "x_grid", "reps", "b"] {
            if self.get_u64(k)? == 0 {
                return Err(CliError::run(format!("key {k} must be positive")));
            }
        }
        let depth = self.get_u64("depth")?;
        if !(1..=10_000).contains(&depth) {
            return Err(CliError::run(format!("key depth: {depth} outside 1..=10000")));
        }
        if !self.raw("ds").is_empty() && self.get_floats("ds")?.len() % 2 != 0 {
            return Err(CliError::run("key ds: expected an even number of rates"));
        }
        Ok(())
    }

    /// Normalized echo of the configuration: sorted keys, one per line.
    fn echo(&self) -> String {
        let mut out = String::from("schema 1\n");
        for (k, v) in &self.values {
            if !v.is_empty() {
                out.push_str(&format!("{k} {v}\n"));
            }
        }
        out
    }
}

/// Parse a config file: `schema 1` first, then `key value…` lines; `#`
/// starts a comment.  Unknown keys are rejected with their position.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    let mut saw_schema = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap();
        let col = raw_line.find(key).map(|c| c + 1).unwrap_or(1);
        let rest = tokens.collect::<Vec<_>>().join(" ");
        if !saw_schema {
            if key != "schema" || rest != "1" {
                return Err(CliError::parse(line_no, col, "expected `schema 1` header"));
            }
            saw_schema = true;
            continue;
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::parse(line_no, col, format!("unknown key {key:?}")));
        }
        out.insert(key.to_string(), rest);
    }
    if !saw_schema {
        return Err(CliError::parse(1, 1, "empty config: missing `schema 1` header"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Skew-product and IFS description files
// ---------------------------------------------------------------------------

/// A line-oriented token cursor with positions for error reporting.
struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().collect(), pos: 0 }
    }

    /// Next non-empty, non-comment line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.lines.len() {
            let raw = self.lines[self.pos];
            self.pos += 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some((self.pos, line));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), CliError> {
        self.next()
            .ok_or_else(|| CliError::parse(self.lines.len() + 1, 1, format!("expected {what}")))
    }
}

fn parse_f64(tok: &str, line: usize, col: usize) -> Result<f64, CliError> {
    tok.parse()
        .map_err(|_| CliError::parse(line, col, format!("expected number, got {tok:?}")))
}

fn parse_usize(tok: &str, line: usize, col: usize) -> Result<usize, CliError> {
    tok.parse()
        .map_err(|_| CliError::parse(line, col, format!("expected index, got {tok:?}")))
}

/// Read a `d × d` matrix of numbers from the next `d` lines.
fn read_matrix_rows(lines: &mut Lines, d: usize) -> Result<Vec<f64>, CliError> {
    let mut entries = Vec::with_capacity(d * d);
    for _ in 0..d {
        let (ln, row) = lines.expect("matrix row")?;
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != d {
            return Err(CliError::parse(ln, 1, format!("expected {d} entries, got {}", toks.len())));
        }
        for (c, t) in toks.iter().enumerate() {
            entries.push(parse_f64(t, ln, c + 1)?);
        }
    }
    Ok(entries)
}

/// A parsed skew-product description file.
pub struct SkewFile {
    pub skew: SkewProduct,
    pub deformation: Option<DeformSection>,
    /// Normalized echo of the description, emitted into the report.
    pub normalized: String,
}

/// Optional deformation section: a field dictionary and a bump radius.
pub struct DeformSection {
    pub fields: Vec<FiberField>,
    pub radius: f64,
}

fn parse_field(toks: &[&str], ln: usize) -> Result<FiberField, CliError> {
    match toks {
        ["constant", rest @ ..] if !rest.is_empty() => Ok(FiberField::Constant(
            rest.iter()
                .enumerate()
                .map(|(i, t)| parse_f64(t, ln, i + 2))
                .collect::<Result<_, _>>()?,
        )),
        ["trig", comp, dep, freq, phase, amp] => Ok(FiberField::TrigCell {
            comp: parse_usize(comp, ln, 2)?,
            dep: parse_usize(dep, ln, 3)?,
            freq: freq
                .parse()
                .map_err(|_| CliError::parse(ln, 4, "expected integer frequency"))?,
            phase: parse_f64(phase, ln, 5)?,
            amp: parse_f64(amp, ln, 6)?,
        }),
        ["sphere-rotation", a, b, rate] => Ok(FiberField::SphereRotation {
            axis_a: parse_usize(a, ln, 2)?,
            axis_b: parse_usize(b, ln, 3)?,
            rate: parse_f64(rate, ln, 4)?,
        }),
        _ => Err(CliError::parse(ln, 1, format!("unknown field spec {:?}", toks.join(" ")))),
    }
}

/// Parse one fiber-primitive spec; `lines` supplies follow-up matrix rows
/// for `linear`.
fn parse_primitive(
    toks: &[&str],
    ln: usize,
    lines: &mut Lines,
) -> Result<FiberPrimitive, CliError> {
    match toks {
        ["linear", d] => {
            let d = parse_usize(d, ln, 2)?;
            let entries = read_matrix_rows(lines, d)?;
            let ints: Vec<i64> = entries.iter().map(|&e| e.round() as i64).collect();
            if entries.iter().zip(&ints).any(|(&e, &i)| (e - i as f64).abs() > 1e-9) {
                return Err(CliError::parse(ln, 1, "linear primitive needs integer entries"));
            }
            Ok(FiberPrimitive::Linear(
                ToralAutomorphism::new(d, ints).map_err(|e| CliError::parse(ln, 1, e.to_string()))?,
            ))
        }
        ["translation", rest @ ..] if !rest.is_empty() => Ok(FiberPrimitive::Translation {
            amount: rest
                .iter()
                .enumerate()
                .map(|(i, t)| parse_f64(t, ln, i + 2))
                .collect::<Result<_, _>>()?,
        }),
        ["shear", from, to, strength] => Ok(FiberPrimitive::Shear {
            from: parse_usize(from, ln, 2)?,
            to: parse_usize(to, ln, 3)?,
            strength: parse_f64(strength, ln, 4)?,
        }),
        ["flow", time, rest @ ..] => Ok(FiberPrimitive::Flow {
            field: parse_field(rest, ln)?,
            time: parse_f64(time, ln, 2)?,
        }),
        ["sphere-rotation", a, b, angle] => Ok(FiberPrimitive::SphereRotation {
            axis_a: parse_usize(a, ln, 2)?,
            axis_b: parse_usize(b, ln, 3)?,
            angle: parse_f64(angle, ln, 4)?,
        }),
        _ => Err(CliError::parse(ln, 1, format!("unknown primitive {:?}", toks.join(" ")))),
    }
}

fn render_field(f: &FiberField) -> String {
    match f {
        FiberField::Constant(v) => {
            format!("constant {}", v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" "))
        }
        FiberField::TrigCell { comp, dep, freq, phase, amp } => {
            format!("trig {comp} {dep} {freq} {} {}", fmt_f64(*phase), fmt_f64(*amp))
        }
        FiberField::SphereRotation { axis_a, axis_b, rate } => {
            format!("sphere-rotation {axis_a} {axis_b} {}", fmt_f64(*rate))
        }
        FiberField::Sum(fs) => fs.iter().map(render_field).collect::<Vec<_>>().join(" + "),
    }
}

fn render_primitive(p: &FiberPrimitive) -> String {
    match p {
        FiberPrimitive::Linear(a) => format!("linear {}", a.to_text().replace('\n', " ")),
        FiberPrimitive::Translation { amount } => format!(
            "translation {}",
            amount.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
        ),
        FiberPrimitive::Shear { from, to, strength } => {
            format!("shear {from} {to} {}", fmt_f64(*strength))
        }
        FiberPrimitive::Flow { field, time } => {
            format!("flow {} {}", fmt_f64(*time), render_field(field))
        }
        FiberPrimitive::SphereRotation { axis_a, axis_b, angle } => {
            format!("sphere-rotation {axis_a} {axis_b} {}", fmt_f64(*angle))
        }
    }
}

/// Parse a skew-product description file:
///
/// ```text
/// schema 1
/// base 2
/// 1 1
/// 1 0
/// manifold torus 2
/// primitive translation 0.171 0.093
/// modulate bump 0.2 0.3 0.1        # center… radius, applies to previous
/// deformation
/// radius 0.0025
/// field constant 1.0 0.0
/// end
/// ```
pub fn parse_skew_file(text: &str) -> Result<SkewFile, CliError> {
    let mut lines = Lines::new(text);
    let (ln, first) = lines.expect("`schema 1` header")?;
    if first != "schema 1" {
        return Err(CliError::parse(ln, 1, "expected `schema 1` header"));
    }
    let mut base: Option<ToralAutomorphism> = None;
    let mut manifold: Option<FiberManifold> = None;
    let mut primitives: Vec<ModulatedPrimitive> = Vec::new();
    let mut deformation: Option<DeformSection> = None;

    while let Some((ln, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["base", d] => {
                let d = parse_usize(d, ln, 2)?;
                let entries = read_matrix_rows(&mut lines, d)?;
                let ints: Vec<i64> = entries.iter().map(|&e| e.round() as i64).collect();
                if entries.iter().zip(&ints).any(|(&e, &i)| (e - i as f64).abs() > 1e-9) {
                    return Err(CliError::parse(ln, 1, "base matrix needs integer entries"));
                }
                base = Some(
                    ToralAutomorphism::new(d, ints)
                        .map_err(|e| CliError::parse(ln, 1, e.to_string()))?,
                );
            }
            ["manifold", kind, c] => {
                let c = parse_usize(c, ln, 3)?;
                manifold = Some(match *kind {
                    "torus" => FiberManifold::Torus(c),
                    "sphere" => FiberManifold::Sphere(c),
                    _ => return Err(CliError::parse(ln, 2, "manifold must be torus or sphere")),
                });
            }
            ["primitive", rest @ ..] => {
                let p = parse_primitive(rest, ln, &mut lines)?;
                primitives.push(ModulatedPrimitive::plain(p));
            }
            ["modulate", rest @ ..] => {
                let last = primitives
                    .last_mut()
                    .ok_or_else(|| CliError::parse(ln, 1, "modulate needs a preceding primitive"))?;
                let (spec, at_image) = match rest.split_last() {
                    Some((&"at-image", head)) => (head, true),
                    _ => (rest, false),
                };
                last.modulation = match spec {
                    ["bump", args @ ..] if args.len() >= 2 => {
                        let nums: Vec<f64> = args
                            .iter()
                            .enumerate()
                            .map(|(i, t)| parse_f64(t, ln, i + 2))
                            .collect::<Result<_, _>>()?;
                        let (radius, center) = nums.split_last().unwrap();
                        Modulation::Bump { center: center.to_vec(), radius: *radius }
                    }
                    ["cosine", args @ ..] if args.len() >= 2 => {
                        let (phase, freqs) = args.split_last().unwrap();
                        Modulation::Cosine {
                            freq: freqs
                                .iter()
                                .map(|t| {
                                    t.parse().map_err(|_| {
                                        CliError::parse(ln, 2, "cosine needs integer frequencies")
                                    })
                                })
                                .collect::<Result<_, _>>()?,
                            phase: parse_f64(phase, ln, rest.len())?,
                        }
                    }
                    _ => return Err(CliError::parse(ln, 2, "unknown modulation")),
                };
                last.mod_point = if at_image { ModPoint::Image } else { ModPoint::Source };
            }
            ["deformation"] => {
                let mut fields = Vec::new();
                let mut radius: Option<f64> = None;
                loop {
                    let (ln2, line2) = lines.expect("deformation entry or `end`")?;
                    let t: Vec<&str> = line2.split_whitespace().collect();
                    match t.as_slice() {
                        ["end"] => break,
                        ["radius", r] => radius = Some(parse_f64(r, ln2, 2)?),
                        ["field", rest @ ..] => fields.push(parse_field(rest, ln2)?),
                        _ => return Err(CliError::parse(ln2, 1, "unknown deformation entry")),
                    }
                }
                let radius = radius
                    .ok_or_else(|| CliError::parse(ln, 1, "deformation section needs a radius"))?;
                if fields.is_empty() {
                    return Err(CliError::parse(ln, 1, "deformation section needs fields"));
                }
                deformation = Some(DeformSection { fields, radius });
            }
            _ => return Err(CliError::parse(ln, 1, format!("unknown directive {:?}", toks[0]))),
        }
    }

    let base = base.ok_or_else(|| CliError::parse(1, 1, "missing `base` matrix"))?;
    let manifold = manifold.ok_or_else(|| CliError::parse(1, 1, "missing `manifold`"))?;
    let skew = SkewProduct::new(base, manifold, primitives)
        .map_err(|e| CliError::parse(1, 1, e.to_string()))?;

    // Normalized echo.
    let mut normalized = String::from("schema 1\n");
    normalized.push_str(&format!("base {}\n", skew.base().dim()));
    // `to_text` leads with the dimension line, which `base <d>` already
    // carries.
    for row in skew.base().to_text().lines().skip(1) {
        normalized.push_str(row);
        normalized.push('\n');
    }
    normalized.push_str(&match skew.manifold() {
        FiberManifold::Torus(c) => format!("manifold torus {c}\n"),
        FiberManifold::Sphere(c) => format!("manifold sphere {c}\n"),
    });
    for p in skew.primitives() {
        normalized.push_str(&format!("primitive {}\n", render_primitive(&p.primitive)));
        match &p.modulation {
            Modulation::None => {}
            Modulation::Bump { center, radius } => {
                normalized.push_str(&format!(
                    "modulate bump {} {}{}\n",
                    center.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" "),
                    fmt_f64(*radius),
                    if p.mod_point == ModPoint::Image { " at-image" } else { "" }
                ));
            }
            Modulation::Cosine { freq, phase } => {
                normalized.push_str(&format!(
                    "modulate cosine {} {}{}\n",
                    freq.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
                    fmt_f64(*phase),
                    if p.mod_point == ModPoint::Image { " at-image" } else { "" }
                ));
            }
        }
    }
    if let Some(ds) = &deformation {
        normalized.push_str("deformation\n");
        normalized.push_str(&format!("radius {}\n", fmt_f64(ds.radius)));
        for f in &ds.fields {
            normalized.push_str(&format!("field {}\n", render_field(f)));
        }
        normalized.push_str("end\n");
    }

    Ok(SkewFile { skew, deformation, normalized })
}

/// Parse an IFS description file: `schema 1`, `manifold`, optional `seed`,
/// then `map … end` blocks sharing the fiber-primitive grammar plus
/// `general <d>` for arbitrary real matrices.
pub fn parse_ifs_file(text: &str, seed_override: u64) -> Result<IFSSpec, CliError> {
    let mut lines = Lines::new(text);
    let (ln, first) = lines.expect("`schema 1` header")?;
    if first != "schema 1" {
        return Err(CliError::parse(ln, 1, "expected `schema 1` header"));
    }
    let mut manifold: Option<FiberManifold> = None;
    let mut seed = seed_override;
    let mut maps: Vec<IfsMap> = Vec::new();

    while let Some((ln, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["manifold", kind, c] => {
                let c = parse_usize(c, ln, 3)?;
                manifold = Some(match *kind {
                    "torus" => FiberManifold::Torus(c),
                    "sphere" => FiberManifold::Sphere(c),
                    _ => return Err(CliError::parse(ln, 2, "manifold must be torus or sphere")),
                });
            }
            ["seed", s] => {
                seed = s
                    .parse()
                    .map_err(|_| CliError::parse(ln, 2, "expected integer seed"))?;
            }
            ["map"] => {
                let mut map: IfsMap = Vec::new();
                loop {
                    let (ln2, line2) = lines.expect("map primitive or `end`")?;
                    let t: Vec<&str> = line2.split_whitespace().collect();
                    match t.as_slice() {
                        ["end"] => break,
                        ["general", d] => {
                            let d = parse_usize(d, ln2, 2)?;
                            let entries = read_matrix_rows(&mut lines, d)?;
                            map.push(IfsPrimitive::GeneralLinear(
                                nalgebra::DMatrix::from_row_slice(d, d, &entries),
                            ));
                        }
                        rest => map.push(IfsPrimitive::Fiber(parse_primitive(
                            rest, ln2, &mut lines,
                        )?)),
                    }
                }
                if map.is_empty() {
                    return Err(CliError::parse(ln, 1, "empty map block"));
                }
                maps.push(map);
            }
            _ => return Err(CliError::parse(ln, 1, format!("unknown directive {:?}", toks[0]))),
        }
    }
    let manifold = manifold.ok_or_else(|| CliError::parse(1, 1, "missing `manifold`"))?;
    if maps.is_empty() {
        return Err(CliError::parse(1, 1, "IFS needs at least one map"));
    }
    Ok(IFSSpec { maps, manifold, seed })
}

// ---------------------------------------------------------------------------
// Subcommand pipelines
// ---------------------------------------------------------------------------

/// Outcome of one pipeline run: the exit status and the report body.
pub struct RunOutcome {
    pub exit: i32,
    pub report: Report,
}

fn default_fiber_point(m: FiberManifold, coords: &[f64]) -> FiberPoint {
    match m {
        FiberManifold::Torus(c) => {
            if coords.is_empty() {
                FiberPoint::torus(&vec![0.5; c])
            } else {
                FiberPoint::torus(coords)
            }
        }
        FiberManifold::Sphere(c) => {
            if coords.is_empty() {
                let mut v = vec![0.0; c + 1];
                v[c] = 1.0;
                FiberPoint::Sphere(v)
            } else {
                let n: f64 = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
                FiberPoint::Sphere(coords.iter().map(|x| x / n).collect())
            }
        }
    }
}

fn summary_section(r: &mut Report, name: &str, s: &SpectralSummary) {
    r.section(name);
    r.kv_u("dim", s.dim() as u64);
    r.kv_u("b", s.b.unwrap_or(0) as u64);
    for (i, &l) in s.log_moduli.iter().enumerate() {
        r.row(&[format!("log_modulus_{i}"), fmt_f64(l)]);
    }
    r.kv_f("chi_bar", s.chi_bar);
    r.kv_f("chi_hat", s.chi_hat);
}

fn run_certify_matrix(_cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let a = ToralAutomorphism::parse(text).map_err(CliError::run)?;
    let s = spectral_summary(&a);
    let mut r = Report::new("certify-matrix");
    r.section("matrix");
    r.kv("normalized", &a.to_text().replace('\n', " "));
    summary_section(&mut r, "spectral", &s);
    r.kv("anosov", if check_anosov(&a) { "true" } else { "false" });
    Ok(RunOutcome { exit: 0, report: r })
}

fn run_classify_skew(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let file = parse_skew_file(text)?;
    let base = spectral_summary(file.skew.base());
    // Fiber rates: the product of linear fiber primitives, or isometric
    // (all-unit moduli) when none are present.
    let d = file.skew.manifold().chart_dim();
    let mut fiber_mat = nalgebra::DMatrix::<f64>::identity(d, d);
    for p in file.skew.primitives() {
        if let FiberPrimitive::Linear(a) = &p.primitive {
            fiber_mat = a.as_dmatrix() * fiber_mat;
        }
    }
    let fiber = SpectralSummary::from_log_moduli(
        fiber_mat.complex_eigenvalues().iter().map(|z| z.norm().ln()).collect(),
    );
    let ds_flat = cfg.get_floats("ds")?;
    if ds_flat.is_empty() {
        return Err(CliError::run(
            "classify-skew needs center dominated-splitting rates: set `ds lo1 hi1 [lo2 hi2 …]`",
        ));
    }
    let ds: Vec<(f64, f64)> = ds_flat.chunks(2).map(|p| (p[0], p[1])).collect();
    let l = cfg.get_u64("l")? as u32;
    let rep = classify_skew_product(&base, &fiber, &ds, l).map_err(CliError::run)?;

    let mut r = Report::new("classify-skew");
    r.section("input");
    for line in file.normalized.lines() {
        r.row(&[line.to_string()]);
    }
    summary_section(&mut r, "base", &base);
    summary_section(&mut r, "fiber", &fiber);
    r.section("checks");
    r.row(&["name".into(), "lhs".into(), "rhs".into(), "margin".into(), "verdict".into()]);
    for c in &rep.checks {
        r.row(&[
            c.name.clone(),
            fmt_f64(c.lhs),
            fmt_f64(c.rhs),
            fmt_f64(c.margin),
            if c.holds { "pass".into() } else { "fail".into() },
        ]);
    }
    r.section("classes");
    r.kv("in_u1", if rep.in_u1 { "true" } else { "false" });
    r.kv("in_u2", if rep.in_u2 { "true" } else { "false" });
    r.kv("fiber_in_ds2", if rep.fiber_in_ds2 { "true" } else { "false" });
    r.kv("center_bunched", if rep.center_bunched { "true" } else { "false" });
    let exit = if rep.in_u1 || rep.in_u2 {
        0
    } else {
        r.kv("reason", "no class membership certified");
        2
    };
    Ok(RunOutcome { exit, report: r })
}

fn run_holonomy(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let file = parse_skew_file(text)?;
    let tol = cfg.get_f64("tol")?;
    let y1 = cfg.get_floats("y")?;
    let y2 = {
        let given = cfg.get_floats("y2")?;
        if given.is_empty() {
            // Default leaf-mate: a short step along the unstable direction.
            let (_, e_u) = crate::skew::base_splitting(file.skew.base()).map_err(CliError::run)?;
            let dir: Vec<f64> = e_u.frame().column(0).iter().map(|&c| 0.05 * c).collect();
            crate::torus::add(&y1, &dir)
        } else {
            given
        }
    };
    let z = default_fiber_point(file.skew.manifold(), &cfg.get_floats("x")?);

    let mut r = Report::new("holonomy");
    r.section("input");
    for line in file.normalized.lines() {
        r.row(&[line.to_string()]);
    }
    r.section("unstable-holonomy");
    r.kv("y1", &y1.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" "));
    r.kv("y2", &y2.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" "));
    r.kv_f("tol", tol);
    match holonomy::unstable_holonomy(&file.skew, &y1, &y2, &z, tol) {
        Ok(res) => {
            r.kv(
                "image",
                &res.point.coords().iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" "),
            );
            r.kv_u("depth", res.depth as u64);
            r.kv_f("error_estimate", res.error_estimate);
            Ok(RunOutcome { exit: 0, report: r })
        }
        Err(e @ (holonomy::HolonomyError::NoConvergence { .. }
        | holonomy::HolonomyError::NotOnUnstableLeaf { .. }
        | holonomy::HolonomyError::NotOnStableLeaf { .. })) => {
            r.kv("refusal", &e.to_string());
            Ok(RunOutcome { exit: 2, report: r })
        }
        Err(e) => Err(CliError::run(e)),
    }
}

fn run_accessibility(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let file = parse_skew_file(text)?;
    let c = file.skew.manifold().dim();
    let theta = cfg.get_f64("theta")?;
    let k0 = if cfg.raw("k0").is_empty() {
        covering::k0_from_theta(c, theta).map_err(CliError::run)?
    } else {
        cfg.get_usize("k0")?
    };
    let eps_light = if cfg.raw("eps_light").is_empty() {
        0.45 / (c as f64).sqrt()
    } else {
        cfg.get_f64("eps_light")?
    };
    let cov = covering::build_covering(c, eps_light, k0).map_err(CliError::run)?;
    let fam = build_loop_family(file.skew.base(), &cfg.get_floats("y")?, cfg.get_f64("sigma")?)
        .map_err(CliError::run)?;
    let x0 = default_fiber_point(file.skew.manifold(), &cfg.get_floats("x")?);
    let tol = cfg.get_f64("tol")?;
    let map = PhiSliceMap { f: &file.skew, fam: &fam, x0, tol };
    let check = covering::stable_value_check(
        &map,
        &cov,
        cfg.get_f64("grid_step")?,
        tol,
        &CheckConfig::new(theta),
    )
    .map_err(CliError::run)?;

    let mut r = Report::new("accessibility");
    r.section("input");
    for line in file.normalized.lines() {
        r.row(&[line.to_string()]);
    }
    r.section("covering");
    r.kv_u("k0", cov.k0 as u64);
    r.kv_u("k1", cov.k1 as u64);
    r.kv_f("eps_light", cov.eps_light);
    r.kv_f("c_min", cov.c_min);
    r.kv_f("max_diameter", cov.max_diameter);
    r.section("stable-value");
    r.kv_f("delta", check.delta);
    r.kv_f("holder_constant", check.holder_constant);
    r.kv_f("grid_step", check.grid_step);
    r.kv("exhaustive", if check.exhaustive { "true" } else { "false" });
    r.section("margins");
    r.row(&["axis".into(), "values".into(), "separation".into(), "verdict".into()]);
    for m in &check.margins {
        r.row(&[
            m.axis.to_string(),
            m.values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(","),
            fmt_f64(m.separation),
            format!("{:?}", m.verdict).to_lowercase(),
        ]);
    }
    r.section("verdict");
    r.kv("verdict", &format!("{:?}", check.verdict).to_lowercase());
    if let Some(w) = &check.witness {
        r.kv("witness_axis", &w.axis.to_string());
        r.kv(
            "witness_values",
            &w.values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(","),
        );
        r.kv_f("witness_separation", w.separation);
    }
    let exit = if check.verdict == Verdict::Pass { 0 } else { 2 };
    Ok(RunOutcome { exit, report: r })
}

fn run_deform_verify(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let file = parse_skew_file(text)?;
    let section = file
        .deformation
        .as_ref()
        .ok_or_else(|| CliError::run("deform-verify needs a `deformation` section"))?;
    let y = cfg.get_floats("y")?;
    let sigma = cfg.get_f64("sigma")?;
    let fam = build_loop_family(file.skew.base(), &y, sigma).map_err(CliError::run)?;
    let gamma = fam.loop_at(0.5 * fam.c0_inv * sigma);
    let v = deform::build_deformation(
        std::slice::from_ref(&gamma),
        section.radius,
        &section.fields,
    )
    .map_err(CliError::run)?;
    let x = default_fiber_point(file.skew.manifold(), &cfg.get_floats("x")?);
    let h = cfg.get_f64("h")?;
    let tol = cfg.get_f64("tol")?;
    let linear = deform::verify_linear_approx(&file.skew, &v, &gamma, &x, h, tol)
        .map_err(CliError::run)?;
    let apriori = deform::verify_apriori(
        &file.skew,
        &v,
        &gamma.y,
        &gamma.legs[0],
        std::slice::from_ref(&x),
        h,
        tol,
    )
    .map_err(CliError::run)?;

    let mut r = Report::new("deform-verify");
    r.section("input");
    for line in file.normalized.lines() {
        r.row(&[line.to_string()]);
    }
    r.section("linear-approx");
    r.row(&["param".into(), "fd_norm".into(), "predicted_norm".into(), "residual".into()]);
    for i in 0..linear.residuals.len() {
        r.row(&[
            i.to_string(),
            fmt_f64(linear.fd_norms[i]),
            fmt_f64(linear.predicted_norms[i]),
            fmt_f64(linear.residuals[i]),
        ]);
    }
    r.kv_f("max_residual", linear.max_residual);
    r.section("apriori");
    r.kv_f("sup_derivative", apriori.sup_derivative);
    r.kv_f("sup_derivative_half", apriori.sup_derivative_half);
    r.kv_f("ratio", apriori.ratio);
    r.kv("linear_scaling_ok", if apriori.linear_scaling_ok { "true" } else { "false" });
    let exit = if apriori.linear_scaling_ok { 0 } else { 2 };
    Ok(RunOutcome { exit, report: r })
}

fn chart_sample_points(m: FiberManifold, per_axis: usize, seed: u64) -> Vec<FiberPoint> {
    match m {
        FiberManifold::Torus(c) => {
            // Low-discrepancy lattice: per_axis points per dimension via a
            // Kronecker sequence keeps the count linear, not exponential.
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..per_axis.max(1))
                .map(|_| FiberPoint::torus(&(0..c).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<_>>()))
                .collect()
        }
        FiberManifold::Sphere(c) => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..per_axis.max(1))
                .map(|_| {
                    let v: Vec<f64> = (0..c + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    FiberPoint::Sphere(v.iter().map(|x| x / n).collect())
                })
                .collect()
        }
    }
}

fn grassmann_kv(r: &mut Report, key: &str, e: &GrassmannPoint) {
    let flat: Vec<String> = e.frame().iter().map(|&v| fmt_f64(v)).collect();
    r.kv(key, &flat.join(" "));
}

fn run_certify(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let spec = parse_ifs_file(text, cfg.get_u64("seed")?)?;
    let b = cfg.get_usize("b")?;
    let n0 = cfg.get_usize("n0")?;
    let xs = chart_sample_points(spec.manifold, cfg.get_usize("x_grid")?, spec.seed ^ 0xa11ce);
    let outcome = ifs::certify_uniformity(
        &spec,
        b,
        n0,
        &xs,
        cfg.get_usize("e_grid")?,
        cfg.get_usize("samples")?,
    )
    .map_err(CliError::run)?;

    let mut r = Report::new("certify");
    r.section("ifs");
    r.kv_u("maps", spec.maps.len() as u64);
    r.kv_u("seed", spec.seed);
    match outcome {
        CertifyOutcome::Certified(c) => {
            r.section("certificate");
            r.kv_u("n0", c.n0 as u64);
            r.kv_u("b", c.b as u64);
            r.kv_f("kappa1", c.kappa1);
            r.kv_f("kappa2", c.kappa2);
            r.kv_u("grid_points", c.grid_points as u64);
            r.kv_u("grid_subspaces", c.grid_subspaces as u64);
            r.kv_u("samples", c.samples as u64);
            r.kv("method", c.method);
            r.kv("enumerated", if c.enumerated { "true" } else { "false" });
            r.kv_f("worst_c_over_n0", c.worst_c_over_n0);
            r.kv_f("worst_c_stderr", c.worst_c_stderr);
            r.kv_f("worst_d_over_n0", c.worst_d_over_n0);
            r.kv_f("worst_d_stderr", c.worst_d_stderr);
            r.kv(
                "worst_x",
                &c.worst_x.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" "),
            );
            grassmann_kv(&mut r, "worst_e", &c.worst_e);
            Ok(RunOutcome { exit: 0, report: r })
        }
        CertifyOutcome::Refused(rf) => {
            r.section("refusal");
            r.kv("reason", &rf.reason);
            r.kv(
                "witness_x",
                &rf.witness_x.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" "),
            );
            grassmann_kv(&mut r, "witness_e", &rf.witness_e);
            r.kv_f("c_over_n0", rf.c_over_n0);
            r.kv_f("d_over_n0", rf.d_over_n0);
            Ok(RunOutcome { exit: 2, report: r })
        }
    }
}

fn run_lyapunov(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let spec = parse_ifs_file(text, cfg.get_u64("seed")?)?;
    let n = cfg.get_u64("n")? as usize;
    let reps = cfg.get_usize("reps")?;
    let x0 = default_fiber_point(spec.manifold, &cfg.get_floats("x")?);
    // Streams are computed in parallel but collected by index, so the
    // worker count cannot reorder the report.
    let spectra: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|stream| ifs::lyapunov_spectrum(&spec, &x0, n, stream))
        .collect();
    let d = spec.manifold.chart_dim();
    let mut r = Report::new("lyapunov");
    r.section("ifs");
    r.kv_u("maps", spec.maps.len() as u64);
    r.kv_u("seed", spec.seed);
    r.kv_u("n", n as u64);
    r.section("spectra");
    let mut header = vec!["stream".to_string()];
    header.extend((0..d).map(|i| format!("lambda_{i}")));
    r.row(&header);
    for (s, lam) in spectra.iter().enumerate() {
        let mut row = vec![s.to_string()];
        row.extend(lam.iter().map(|&l| fmt_f64(l)));
        r.row(&row);
    }
    r.section("mean");
    for i in 0..d {
        let mean = spectra.iter().map(|l| l[i]).sum::<f64>() / reps as f64;
        r.kv_f(&format!("lambda_{i}"), mean);
    }
    let sum: f64 = spectra.iter().flat_map(|l| l.iter()).sum::<f64>() / reps as f64;
    r.kv_f("sum", sum);
    Ok(RunOutcome { exit: 0, report: r })
}

fn run_density(cfg: &RunConfig, text: &str) -> Result<RunOutcome, CliError> {
    let spec = parse_ifs_file(text, cfg.get_u64("seed")?)?;
    let x0 = default_fiber_point(spec.manifold, &cfg.get_floats("x")?);
    let rep = ifs::orbit_density(
        &spec,
        &x0,
        cfg.get_u64("n")?,
        cfg.get_f64("eps")?,
        cfg.get_u64("stream")?,
    )
    .map_err(CliError::run)?;
    let mut r = Report::new("density");
    r.section("coverage");
    r.kv_u("cells_total", rep.cells_total);
    r.kv_u("cells_visited", rep.cells_visited);
    r.kv_f("coverage", rep.coverage);
    match rep.largest_unvisited_ball {
        Some(b) => r.kv_f("largest_unvisited_ball", b),
        None => r.kv("largest_unvisited_ball", "skipped"),
    }
    r.section("first-hit");
    r.row(&["time_bin".into(), "new_cells".into()]);
    for (i, &c) in rep.first_hit_bins.iter().enumerate() {
        r.row(&[i.to_string(), c.to_string()]);
    }
    Ok(RunOutcome { exit: 0, report: r })
}

/// Execute the configured pipeline against the already-read input text.
pub fn run(cfg: &RunConfig, input_text: &str) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let workers = cfg.get_usize("workers")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(CliError::run)?;
    pool.install(|| match cfg.subcommand.as_str() {
        "certify-matrix" => run_certify_matrix(cfg, input_text),
        "classify-skew" => run_classify_skew(cfg, input_text),
        "holonomy" => run_holonomy(cfg, input_text),
        "accessibility" => run_accessibility(cfg, input_text),
        "deform-verify" => run_deform_verify(cfg, input_text),
        "certify" => run_certify(cfg, input_text),
        "lyapunov" => run_lyapunov(cfg, input_text),
        "density" => run_density(cfg, input_text),
        other => Err(CliError::run(format!("unknown subcommand {other:?}"))),
    })
}

// ---------------------------------------------------------------------------
// Argument parsing and the binary entry point
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(name = "phdyn", version, about = "Partially hyperbolic skew-product verification")]
struct Cli {
    /// Config file (`schema 1` + `key value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Let config-file values override conflicting command line flags.
    #[arg(long, global = true)]
    allow_override: bool,
    /// Output directory for report and manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (must not affect report bytes).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Additional `key=value` settings mirroring config keys.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Spectral summary of an integer matrix file.
    CertifyMatrix { input: PathBuf },
    /// Class membership checks of a skew-product file.
    ClassifySkew { input: PathBuf },
    /// Unstable holonomy with a-posteriori error control.
    Holonomy { input: PathBuf },
    /// Covering construction and stable-value accessibility check.
    Accessibility { input: PathBuf },
    /// Deformation derivative verification.
    DeformVerify { input: PathBuf },
    /// IFS uniformity certification.
    Certify { input: PathBuf },
    /// Lyapunov spectra by QR accumulation.
    Lyapunov { input: PathBuf },
    /// Orbit-density diagnostics.
    Density { input: PathBuf },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::CertifyMatrix { .. } => "certify-matrix",
            Cmd::ClassifySkew { .. } => "classify-skew",
            Cmd::Holonomy { .. } => "holonomy",
            Cmd::Accessibility { .. } => "accessibility",
            Cmd::DeformVerify { .. } => "deform-verify",
            Cmd::Certify { .. } => "certify",
            Cmd::Lyapunov { .. } => "lyapunov",
            Cmd::Density { .. } => "density",
        }
    }

    fn input(&self) -> &Path {
        match self {
            Cmd::CertifyMatrix { input }
            | Cmd::ClassifySkew { input }
            | Cmd::Holonomy { input }
            | Cmd::Accessibility { input }
            | Cmd::DeformVerify { input }
            | Cmd::Certify { input }
            | Cmd::Lyapunov { input }
            | Cmd::Density { input } => input,
        }
    }
}

/// Merge defaults, command line settings, and the config file into a
/// validated [`RunConfig`].  A key set on both the command line and in the
/// config file with different values is a conflict: an error unless
/// `--allow-override` is given, in which case the config file wins.
pub fn build_config(
    subcommand: &str,
    input: &Path,
    out_dir: &Path,
    cli_sets: &BTreeMap<String, String>,
    file_sets: &BTreeMap<String, String>,
    allow_override: bool,
) -> Result<RunConfig, CliError> {
    let mut values = default_values();
    for (k, v) in cli_sets {
        if !KNOWN_KEYS.contains(&k.as_str()) {
            return Err(CliError::run(format!("unknown key {k:?}")));
        }
        values.insert(k.clone(), v.clone());
    }
    for (k, v) in file_sets {
        if let Some(cli_v) = cli_sets.get(k) {
            if cli_v != v && !allow_override {
                return Err(CliError::run(format!(
                    "key {k:?} set to {cli_v:?} on the command line and {v:?} in the config \
                     file; pass --allow-override to let the config file win"
                )));
            }
        }
        values.insert(k.clone(), v.clone());
    }
    let cfg = RunConfig {
        subcommand: subcommand.to_string(),
        input: input.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        values,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    format!("{:x}", h.finalize())
}

/// Binary entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn main_inner(cli: Cli) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let mut cli_sets = BTreeMap::new();
    if let Some(s) = cli.seed {
        cli_sets.insert("seed".to_string(), s.to_string());
    }
    if let Some(w) = cli.workers {
        cli_sets.insert("workers".to_string(), w.to_string());
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::run(format!("--set needs KEY=VALUE, got {kv:?}")))?;
        cli_sets.insert(k.trim().to_string(), v.trim().replace(',', " "));
    }
    let file_sets = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    // Output directory: flag, else the PHDYN_OUT environment override, else
    // the current directory.
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("PHDYN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let cfg = build_config(
        cli.cmd.name(),
        cli.cmd.input(),
        &out_dir,
        &cli_sets,
        &file_sets,
        cli.allow_override,
    )?;

    let input_text = std::fs::read_to_string(&cfg.input).map_err(|e| CliError::Io {
        path: cfg.input.display().to_string(),
        source: e,
    })?;
    let outcome = run(&cfg, &input_text)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Io {
        path: cfg.out_dir.display().to_string(),
        source: e,
    })?;
    let report_path = cfg.out_dir.join(format!("{}-report.txt", cfg.subcommand));
    std::fs::write(&report_path, outcome.report.render()).map_err(|e| CliError::Io {
        path: report_path.display().to_string(),
        source: e,
    })?;

    // Manifest: the only file holding volatile data.
    let wall_ms = started.elapsed().as_millis();
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = format!(
        "manifest\nversion\t{}\nsubcommand\t{}\ninput\t{}\ninput_sha256\t{}\n\
         config_sha256\t{}\nseed\t{}\nworkers\t{}\nexit\t{}\nwall_ms\t{}\ntimestamp_unix\t{}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.subcommand,
        cfg.input.display(),
        sha256_hex(input_text.as_bytes()),
        sha256_hex(cfg.echo().as_bytes()),
        cfg.raw("seed"),
        cfg.raw("workers"),
        outcome.exit,
        wall_ms,
        timestamp,
    );
    let manifest_path = cfg.out_dir.join(format!("{}-manifest.txt", cfg.subcommand));
    std::fs::write(&manifest_path, manifest).map_err(|e| CliError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;

    Ok(outcome.exit)
}
