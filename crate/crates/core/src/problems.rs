//! Problem definitions: built-in examples, a line-oriented text format and a
//! 2-D grid evaluator.
//!
//! File format (blank lines and `#` comments ignored):
//!
//! ```text
//! kind: linear-sof | affine | delay
//! name: <string>
//! params <n>                      # delay only
//! matrix A <rows> <cols>          # linear-sof: A, B, C
//! <row-major entries, one row per line>
//! matrix A0 <rows> <cols>         # affine: base matrix ...
//! direction <k> <rows> <cols>     # ... and one block per parameter
//! term <j> tau <delay>            # delay: term 0 has tau 0, followed by
//! matrix A <rows> <cols>          #   its base matrix and optional
//! direction <k> <rows> <cols>     #   direction blocks (missing ones are zero)
//! fixed <param-index> <value>     # optional, repeatable
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{dmatrix, DMatrix, DVector};

use crate::delay::{DelayFamily, DelayTerm};
use crate::error::{Error, Result};
use crate::family::{sof_family, MatrixFamily};
use crate::numeric::{CMatrix, CVector, EigenTriple};
use crate::solver::SpectralModel;

pub const BUILTINS: [&str; 2] = ["fig1-2d", "delay3-feedback"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    LinearSof,
    Affine,
    Delay,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::LinearSof => "linear-sof",
            ProblemKind::Affine => "affine",
            ProblemKind::Delay => "delay",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "linear-sof" => Some(ProblemKind::LinearSof),
            "affine" => Some(ProblemKind::Affine),
            "delay" => Some(ProblemKind::Delay),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTermSpec {
    pub tau: f64,
    pub base: DMatrix<f64>,
    pub directions: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `F(x) = A + B X C` with `X` filled row-major from `x`.
    LinearSof {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    },
    Affine {
        base: DMatrix<f64>,
        directions: Vec<DMatrix<f64>>,
    },
    Delay {
        params: usize,
        terms: Vec<DelayTermSpec>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub payload: Payload,
    /// Parameter index (before fixing) to fixed value.
    pub fixed: BTreeMap<usize, f64>,
}

/// A built problem ready for the solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(MatrixFamily),
    Delay(DelayFamily),
}

impl SpectralModel for Model {
    fn n_params(&self) -> usize {
        match self {
            Model::Linear(f) => SpectralModel::n_params(f),
            Model::Delay(f) => SpectralModel::n_params(f),
        }
    }

    fn spectrum(&self, x: &DVector<f64>) -> Result<Vec<EigenTriple>> {
        match self {
            Model::Linear(f) => f.spectrum(x),
            Model::Delay(f) => f.spectrum(x),
        }
    }

    fn abscissa(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            Model::Linear(f) => f.abscissa(x),
            Model::Delay(f) => f.abscissa(x),
        }
    }

    fn gradient(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CVector> {
        match self {
            Model::Linear(f) => f.gradient(x, t),
            Model::Delay(f) => f.gradient(x, t),
        }
    }

    fn hessian(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CMatrix> {
        match self {
            Model::Linear(f) => f.hessian(x, t),
            Model::Delay(f) => f.hessian(x, t),
        }
    }
}

impl ProblemSpec {
    pub fn kind(&self) -> ProblemKind {
        match self.payload {
            Payload::LinearSof { .. } => ProblemKind::LinearSof,
            Payload::Affine { .. } => ProblemKind::Affine,
            Payload::Delay { .. } => ProblemKind::Delay,
        }
    }

    /// Parameter count before fixing.
    pub fn total_params(&self) -> usize {
        match &self.payload {
            Payload::LinearSof { b, c, .. } => b.ncols() * c.nrows(),
            Payload::Affine { directions, .. } => directions.len(),
            Payload::Delay { params, .. } => *params,
        }
    }

    /// Free parameter count.
    pub fn n_params(&self) -> usize {
        self.total_params() - self.fixed.len()
    }

    /// Validate and build the family with fixed entries removed.
    pub fn model(&self) -> Result<Model> {
        let fixed: Vec<(usize, f64)> = self.fixed.iter().map(|(&k, &v)| (k, v)).collect();
        match &self.payload {
            Payload::LinearSof { a, b, c } => Ok(Model::Linear(sof_family(a, b, c)?.with_fixed(&fixed)?)),
            Payload::Affine { base, directions } => {
                Ok(Model::Linear(MatrixFamily::new(base.clone(), directions.clone())?.with_fixed(&fixed)?))
            }
            Payload::Delay { params, terms } => {
                let terms = terms
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        if t.directions.len() != *params {
                            return Err(Error::DimensionMismatch(format!(
                                "term {j} has {} directions, expected {params}",
                                t.directions.len()
                            )));
                        }
                        Ok(DelayTerm {
                            family: MatrixFamily::new(t.base.clone(), t.directions.clone())?,
                            tau: t.tau,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Model::Delay(DelayFamily::new(terms)?.with_fixed(&fixed)?))
            }
        }
    }
}

/// Built-in problems by name; see [`BUILTINS`].
pub fn builtin(name: &str) -> Result<ProblemSpec> {
    match name {
        "fig1-2d" => Ok(ProblemSpec {
            name: name.into(),
            payload: Payload::LinearSof {
                a: dmatrix![
                    0.1, -0.03, 0.2;
                    0.2, 0.05, 0.01;
                    -0.06, 0.2, 0.07
                ],
                b: dmatrix![-0.5; -1.0; 0.5],
                c: DMatrix::identity(3, 3),
            },
            fixed: BTreeMap::from([(2, 1.4)]),
        }),
        "delay3-feedback" => {
            let b = nalgebra::dvector![-0.1, -0.2, 0.1];
            let directions = (0..3)
                .map(|k| {
                    let mut d = DMatrix::zeros(3, 3);
                    d.set_column(k, &b);
                    d
                })
                .collect();
            Ok(ProblemSpec {
                name: name.into(),
                payload: Payload::Delay {
                    params: 3,
                    terms: vec![
                        DelayTermSpec {
                            tau: 0.0,
                            base: dmatrix![
                                -0.08, -0.03, 0.2;
                                0.2, -0.04, -0.005;
                                -0.06, -0.2, -0.07
                            ],
                            directions: vec![DMatrix::zeros(3, 3); 3],
                        },
                        DelayTermSpec {
                            tau: 5.0,
                            base: DMatrix::zeros(3, 3),
                            directions,
                        },
                    ],
                },
                fixed: BTreeMap::new(),
            })
        }
        _ => Err(Error::UnknownBuiltin(name.into())),
    }
}

fn write_matrix(out: &mut String, header: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{header} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Render `spec` in the text format. Numbers use shortest round-trip form.
pub fn to_text(spec: &ProblemSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind: {}", spec.kind().as_str());
    let _ = writeln!(out, "name: {}", spec.name);
    match &spec.payload {
        Payload::LinearSof { a, b, c } => {
            write_matrix(&mut out, "matrix A", a);
            write_matrix(&mut out, "matrix B", b);
            write_matrix(&mut out, "matrix C", c);
        }
        Payload::Affine { base, directions } => {
            write_matrix(&mut out, "matrix A0", base);
            for (k, d) in directions.iter().enumerate() {
                write_matrix(&mut out, &format!("direction {k}"), d);
            }
        }
        Payload::Delay { params, terms } => {
            let _ = writeln!(out, "params {params}");
            for (j, t) in terms.iter().enumerate() {
                let _ = writeln!(out, "term {j} tau {:?}", t.tau);
                write_matrix(&mut out, "matrix A", &t.base);
                for (k, d) in t.directions.iter().enumerate() {
                    write_matrix(&mut out, &format!("direction {k}"), d);
                }
            }
        }
    }
    for (k, v) in &spec.fixed {
        let _ = writeln!(out, "fixed {k} {v:?}");
    }
    out
}

pub fn save(spec: &ProblemSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_text(spec))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    from_text(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: Vec<(usize, &'a str)>,
    pos: usize,
    total: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let inner: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Lines {
            inner,
            pos: 0,
            total: text.lines().count(),
        }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.inner.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let l = self.peek();
        self.pos += 1;
        l
    }

    fn eof_line(&self) -> usize {
        self.total.max(1)
    }
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("invalid {what} `{tok}`")))
}

/// Read a `<rows> <cols>` block body after its header tokens.
fn read_block(lines: &mut Lines, line: usize, label: &str, mut dims: std::str::SplitWhitespace) -> Result<DMatrix<f64>> {
    let rows: usize = parse_num(line, dims.next(), &format!("row count of {label}"))?;
    let cols: usize = parse_num(line, dims.next(), &format!("column count of {label}"))?;
    if let Some(extra) = dims.next() {
        return Err(perr(line, format!("unexpected token `{extra}` after {label} header")));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let (ln, text) = lines
            .next()
            .ok_or_else(|| perr(lines.eof_line(), format!("{label}: missing row {} of {rows}", r + 1)))?;
        let vals: Vec<&str> = text.split_whitespace().collect();
        if vals.len() != cols {
            return Err(perr(ln, format!("{label}: row {} has {} entries, expected {cols}", r + 1, vals.len())));
        }
        for (c, v) in vals.iter().enumerate() {
            m[(r, c)] = parse_num(ln, Some(v), &format!("{label} entry"))?;
        }
    }
    Ok(m)
}

fn header_field<'a>(lines: &mut Lines<'a>, key: &str) -> Result<(usize, &'a str)> {
    let (ln, text) = lines
        .next()
        .ok_or_else(|| perr(lines.eof_line(), format!("missing field `{key}`")))?;
    let value = text
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(':'))
        .ok_or_else(|| perr(ln, format!("expected `{key}:`")))?;
    Ok((ln, value.trim()))
}

fn collect_directions(found: BTreeMap<usize, DMatrix<f64>>, count: usize, line: usize, dims: (usize, usize)) -> Result<Vec<DMatrix<f64>>> {
    if let Some(&k) = found.keys().find(|&&k| k >= count) {
        return Err(perr(line, format!("direction {k} exceeds parameter count {count}")));
    }
    Ok((0..count)
        .map(|k| found.get(&k).cloned().unwrap_or_else(|| DMatrix::zeros(dims.0, dims.1)))
        .collect())
}

/// Parse the text format.
pub fn from_text(text: &str) -> Result<ProblemSpec> {
    let mut lines = Lines::new(text);
    let (kind_line, kind) = header_field(&mut lines, "kind")?;
    let kind = ProblemKind::parse(kind).ok_or_else(|| perr(kind_line, format!("unknown kind `{kind}`")))?;
    let (_, name) = header_field(&mut lines, "name")?;

    let mut matrices: BTreeMap<String, (usize, DMatrix<f64>)> = BTreeMap::new();
    let mut directions: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    let mut params: Option<usize> = None;
    // (tau, base, directions) per delay term, in order
    let mut terms: Vec<(f64, Option<DMatrix<f64>>, BTreeMap<usize, DMatrix<f64>>)> = Vec::new();
    let mut fixed = BTreeMap::new();

    while let Some((ln, text)) = lines.next() {
        let mut toks = text.split_whitespace();
        match toks.next().unwrap_or("") {
            "matrix" => {
                let label = toks.next().ok_or_else(|| perr(ln, "missing matrix name"))?.to_string();
                let m = read_block(&mut lines, ln, &format!("matrix {label}"), toks)?;
                if kind == ProblemKind::Delay {
                    let term = terms.last_mut().ok_or_else(|| perr(ln, "matrix before any `term` line"))?;
                    if label != "A" || term.1.is_some() {
                        return Err(perr(ln, format!("unexpected matrix {label} in delay term")));
                    }
                    term.1 = Some(m);
                } else {
                    let allowed: &[&str] = if kind == ProblemKind::LinearSof { &["A", "B", "C"] } else { &["A0"] };
                    if !allowed.contains(&label.as_str()) {
                        return Err(perr(ln, format!("unexpected matrix {label} for kind {}", kind.as_str())));
                    }
                    if matrices.insert(label.clone(), (ln, m)).is_some() {
                        return Err(perr(ln, format!("duplicate matrix {label}")));
                    }
                }
            }
            "direction" => {
                if kind == ProblemKind::LinearSof {
                    return Err(perr(ln, "direction blocks are not used by linear-sof"));
                }
                let k: usize = parse_num(ln, toks.next(), "direction index")?;
                let m = read_block(&mut lines, ln, &format!("direction {k}"), toks)?;
                let target = if kind == ProblemKind::Delay {
                    &mut terms.last_mut().ok_or_else(|| perr(ln, "direction before any `term` line"))?.2
                } else {
                    &mut directions
                };
                if target.insert(k, m).is_some() {
                    return Err(perr(ln, format!("duplicate direction {k}")));
                }
            }
            "term" if kind == ProblemKind::Delay => {
                let j: usize = parse_num(ln, toks.next(), "term index")?;
                if j != terms.len() {
                    return Err(perr(ln, format!("expected term {}, found term {j}", terms.len())));
                }
                if toks.next() != Some("tau") {
                    return Err(perr(ln, "missing field `tau`"));
                }
                let tau: f64 = parse_num(ln, toks.next(), "tau")?;
                terms.push((tau, None, BTreeMap::new()));
            }
            "params" if kind == ProblemKind::Delay => {
                params = Some(parse_num(ln, toks.next(), "parameter count")?);
            }
            "fixed" => {
                let k: usize = parse_num(ln, toks.next(), "fixed parameter index")?;
                let v: f64 = parse_num(ln, toks.next(), "fixed value")?;
                if fixed.insert(k, v).is_some() {
                    return Err(perr(ln, format!("parameter {k} fixed twice")));
                }
            }
            other => return Err(perr(ln, format!("unrecognized line starting with `{other}`"))),
        }
    }

    let eof = lines.eof_line();
    let mut take = |label: &str| {
        matrices
            .remove(label)
            .map(|(_, m)| m)
            .ok_or_else(|| perr(eof, format!("missing field `matrix {label}`")))
    };
    let payload = match kind {
        ProblemKind::LinearSof => Payload::LinearSof {
            a: take("A")?,
            b: take("B")?,
            c: take("C")?,
        },
        ProblemKind::Affine => {
            let base = take("A0")?;
            let count = directions.keys().next_back().map_or(0, |k| k + 1);
            if let Some(missing) = (0..count).find(|k| !directions.contains_key(k)) {
                return Err(perr(eof, format!("missing field `direction {missing}`")));
            }
            Payload::Affine {
                base,
                directions: directions.into_values().collect(),
            }
        }
        ProblemKind::Delay => {
            let params = params.ok_or_else(|| perr(eof, "missing field `params`"))?;
            if terms.is_empty() {
                return Err(perr(eof, "missing field `term 0`"));
            }
            let terms = terms
                .into_iter()
                .enumerate()
                .map(|(j, (tau, base, dirs))| {
                    let base = base.ok_or_else(|| perr(eof, format!("missing field `matrix A` in term {j}")))?;
                    let dims = base.shape();
                    Ok(DelayTermSpec {
                        tau,
                        directions: collect_directions(dirs, params, eof, dims)?,
                        base,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Payload::Delay { params, terms }
        }
    };
    let spec = ProblemSpec {
        name: name.to_string(),
        payload,
        fixed,
    };
    spec.model()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x1: f64,
    pub x2: f64,
    pub alpha: f64,
}

fn axis(range: (f64, f64), resolution: usize) -> Vec<f64> {
    if resolution == 1 {
        return vec![0.5 * (range.0 + range.1)];
    }
    let step = (range.1 - range.0) / (resolution - 1) as f64;
    (0..resolution).map(|i| range.0 + i as f64 * step).collect()
}

/// Evaluate the abscissa on a `resolution x resolution` grid, `x1` outer.
/// Resolution 1 evaluates the midpoint only.
pub fn grid_eval(model: &dyn SpectralModel, x1: (f64, f64), x2: (f64, f64), resolution: usize) -> Result<Vec<GridPoint>> {
    if model.n_params() != 2 {
        return Err(Error::InvalidInput(format!(
            "grid evaluation needs 2 free parameters, problem has {}",
            model.n_params()
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let (xs, ys) = (axis(x1, resolution), axis(x2, resolution));
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &a in &xs {
        for &b in &ys {
            let alpha = model.abscissa(&DVector::from_vec(vec![a, b]))?;
            out.push(GridPoint { x1: a, x2: b, alpha });
        }
    }
    Ok(out)
}

/// Grid point with the smallest abscissa (first on ties).
pub fn grid_min(points: &[GridPoint]) -> Option<GridPoint> {
    points.iter().copied().reduce(|a, b| if b.alpha < a.alpha { b } else { a })
}

pub fn write_grid_tsv(mut w: impl Write, points: &[GridPoint]) -> Result<()> {
    writeln!(w, "x1\tx2\talpha")?;
    for p in points {
        writeln!(w, "{:?}\t{:?}\t{:?}", p.x1, p.x2, p.alpha)?;
    }
    Ok(())
}
