//! JSON problem and solution files.
//!
//! Matrices are row-major lists of rows. Higher-degree terms are blocks of
//! `{exponents, coeff}` records; problem-term exponents run over the concatenated
//! `(x, u)`, solution exponents over `x` only. Component and channel indices are
//! 1-based. Floats are written in shortest round-trip form, so parse → serialize →
//! parse is exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{InvertibilityCertificate, Method, NonlinearProblem, SeriesSolution};
use crate::linalg::{from_rows, to_rows, Mat};
use crate::lqr::AREData;
use crate::poly::{HomPoly, MultiIndex, PolySeries};
use crate::sare::{LQGBData, SAREResult, Status};
use crate::sdre::{Schedule, TimeVaryingProblem};

pub const SCHEMA_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

/// Linear-quadratic-bilinear data of one problem (or one table node).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    #[serde(default)]
    pub alpha: f64,
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    /// Defaults to zero.
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Rows>,
    #[serde(rename = "C", default)]
    pub c: Vec<Rows>,
    #[serde(rename = "D", default)]
    pub d: Vec<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    F,
    Gamma,
    L,
}

/// One homogeneous part of `f_i`, `γ_{k,i}` or `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermBlock {
    pub block: BlockKind,
    /// Noise channel (1-based), `gamma` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<usize>,
    /// Vector component (1-based), `f` and `gamma` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub degree: usize,
    pub records: Vec<Record>,
}

/// A homogeneous polynomial, optionally tagged with a component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub degree: usize,
    pub records: Vec<Record>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalBlock {
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(default)]
    pub pi: Vec<PolyBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableNode {
    pub t: f64,
    #[serde(flatten)]
    pub data: LinearBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    #[serde(flatten)]
    pub linear: LinearBlock,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalBlock>,
    /// Time table of linear data; higher-degree terms stay as given above.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<TableNode>,
}

/// Pretty JSON with arrays of scalars and small records kept on one line, so matrix
/// rows and term records read (and diff) as rows.
pub fn to_text<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("file types always serialize");
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    out
}

fn is_flat(v: &serde_json::Value) -> bool {
    use serde_json::Value;
    match v {
        Value::Array(a) => a.iter().all(|x| !x.is_array() && !x.is_object()),
        Value::Object(o) => o.values().all(|x| !x.is_object() && (!x.is_array() || is_flat(x))),
        _ => true,
    }
}

fn write_flat(v: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match v {
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_flat(x, out);
            }
            out.push(']');
        }
        Value::Object(o) => {
            out.push('{');
            for (i, (k, x)) in o.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&serde_json::to_string(k).expect("keys serialize"));
                out.push_str(": ");
                write_flat(x, out);
            }
            out.push('}');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalars serialize")),
    }
}

fn write_value(v: &serde_json::Value, indent: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |k: usize| "  ".repeat(k);
    if is_flat(v) {
        write_flat(v, out);
        return;
    }
    match v {
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(o) => {
            out.push_str("{\n");
            for (i, (k, x)) in o.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("keys serialize"));
                out.push_str(": ");
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < o.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        _ => unreachable!("scalars are flat"),
    }
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Parse(format!("{name}: {e}")))
}

fn matrix(name: &str, rows: &Rows, nr: usize, nc: usize) -> Result<Mat> {
    if rows.len() != nr {
        return Err(Error::Parse(format!("{name}: {} rows, expected {nr}", rows.len())));
    }
    field(name, from_rows(rows, nc))
}

fn records_to_hom(name: &str, nvars: usize, degree: usize, records: &[Record]) -> Result<HomPoly> {
    let mut p = HomPoly::zero(nvars, degree);
    for (i, rec) in records.iter().enumerate() {
        if rec.exponents.len() != nvars {
            return Err(Error::Parse(format!(
                "{name}.records[{i}]: {} exponents, expected {nvars}",
                rec.exponents.len()
            )));
        }
        let sum: u32 = rec.exponents.iter().sum();
        if sum as usize != degree {
            return Err(Error::Parse(format!(
                "{name}.records[{i}]: exponents sum to {sum} but the block degree is {degree}"
            )));
        }
        if !rec.coeff.is_finite() {
            return Err(Error::Parse(format!("{name}.records[{i}]: coefficient is not finite")));
        }
        p.add_term(MultiIndex::new(rec.exponents.clone()), rec.coeff);
    }
    Ok(p)
}

fn hom_to_records(p: &HomPoly) -> Vec<Record> {
    p.terms()
        .map(|(idx, c)| Record {
            exponents: idx.exponents().to_vec(),
            coeff: c,
        })
        .collect()
}

impl LinearBlock {
    pub fn from_lqgb(lin: &LQGBData) -> Self {
        let b = &lin.base;
        let zero_s = b.cross_cost.iter().all(|v| *v == 0.0);
        Self {
            alpha: b.discount,
            f: to_rows(&b.drift),
            g: to_rows(&b.input),
            q: to_rows(&b.state_cost),
            r: to_rows(&b.control_cost),
            s: (!zero_s).then(|| to_rows(&b.cross_cost)),
            c: lin.state_noise.iter().map(to_rows).collect(),
            d: lin.control_noise.iter().map(to_rows).collect(),
        }
    }

    /// Builds and validates the data; `prefix` labels diagnostics.
    pub fn to_lqgb(&self, prefix: &str, n: usize, m: usize, r: usize) -> Result<LQGBData> {
        let f = matrix(&format!("{prefix}F"), &self.f, n, n)?;
        let g = matrix(&format!("{prefix}G"), &self.g, n, m)?;
        let q = matrix(&format!("{prefix}Q"), &self.q, n, n)?;
        let rr = matrix(&format!("{prefix}R"), &self.r, m, m)?;
        let s = match &self.s {
            Some(s) => matrix(&format!("{prefix}S"), s, n, m)?,
            None => Mat::zeros(n, m),
        };
        if self.c.len() != r || self.d.len() != r {
            return Err(Error::Parse(format!(
                "{prefix}C/D: {} and {} noise matrices, expected r = {r} each",
                self.c.len(),
                self.d.len()
            )));
        }
        let c = (0..r)
            .map(|k| matrix(&format!("{prefix}C[{}]", k + 1), &self.c[k], n, n))
            .collect::<Result<Vec<_>>>()?;
        let d = (0..r)
            .map(|k| matrix(&format!("{prefix}D[{}]", k + 1), &self.d[k], n, m))
            .collect::<Result<Vec<_>>>()?;
        let label = if prefix.is_empty() { "data" } else { prefix.trim_end_matches('.') };
        let base = field(label, AREData::new(f, g, q, rr, s, self.alpha))?;
        field(label, LQGBData::new(base, c, d))
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("problem file: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        to_text(self)
    }

    pub fn from_lqgb(lin: &LQGBData) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: None,
            n: lin.n(),
            m: lin.m(),
            r: lin.channels(),
            linear: LinearBlock::from_lqgb(lin),
            terms: Vec::new(),
            degree_cap: None,
            horizon: None,
            terminal: None,
            table: Vec::new(),
        }
    }

    pub fn from_nonlinear(problem: &NonlinearProblem) -> Self {
        let mut file = Self::from_lqgb(&problem.lin);
        file.degree_cap = Some(problem.degree_cap);
        let mut push = |block, channel, component, s: &PolySeries| {
            for part in s.parts() {
                file.terms.push(TermBlock {
                    block,
                    channel,
                    component,
                    degree: part.degree(),
                    records: hom_to_records(part),
                });
            }
        };
        for (i, s) in problem.f_hi.iter().enumerate() {
            push(BlockKind::F, None, Some(i + 1), s);
        }
        for (k, g) in problem.gamma_hi.iter().enumerate() {
            for (i, s) in g.iter().enumerate() {
                push(BlockKind::Gamma, Some(k + 1), Some(i + 1), s);
            }
        }
        push(BlockKind::L, None, None, &problem.l_hi);
        file
    }

    pub fn from_time_varying(problem: &TimeVaryingProblem) -> Self {
        let (mut file, table) = match &problem.schedule {
            Schedule::Constant(p) => (Self::from_nonlinear(p), Vec::new()),
            Schedule::Tabulated { times, nodes } => (
                Self::from_nonlinear(&nodes[0]),
                times
                    .iter()
                    .zip(nodes)
                    .map(|(&t, node)| TableNode {
                        t,
                        data: LinearBlock::from_lqgb(&node.lin),
                    })
                    .collect(),
            ),
        };
        file.table = table;
        file.horizon = Some(problem.horizon);
        file.terminal = Some(TerminalBlock {
            p: to_rows(&problem.terminal_p),
            pi: problem
                .terminal_hi
                .values()
                .map(|p| PolyBlock {
                    component: None,
                    degree: p.degree(),
                    records: hom_to_records(p),
                })
                .collect(),
        });
        file
    }

    pub fn lqgb(&self) -> Result<LQGBData> {
        self.linear.to_lqgb("", self.n, self.m, self.r)
    }

    /// `degree_cap` overrides the file's; without either the cap is 2.
    pub fn nonlinear(&self, degree_cap: Option<usize>) -> Result<NonlinearProblem> {
        let lin = self.lqgb()?;
        self.nonlinear_with(lin, degree_cap)
    }

    fn nonlinear_with(&self, lin: LQGBData, degree_cap: Option<usize>) -> Result<NonlinearProblem> {
        let (n, m, r) = (self.n, self.m, self.r);
        let nv = n + m;
        let mut f_hi = vec![PolySeries::zero(nv); n];
        let mut gamma_hi = vec![vec![PolySeries::zero(nv); n]; r];
        let mut l_hi = PolySeries::zero(nv);
        for (i, t) in self.terms.iter().enumerate() {
            let name = format!("terms[{i}]");
            let hom = records_to_hom(&name, nv, t.degree, &t.records)?;
            let component = |limit: usize| -> Result<usize> {
                match t.component {
                    Some(c) if (1..=limit).contains(&c) => Ok(c - 1),
                    other => Err(Error::Parse(format!(
                        "{name}: component {other:?} is not in 1..={limit}"
                    ))),
                }
            };
            let target = match t.block {
                BlockKind::F => &mut f_hi[component(n)?],
                BlockKind::Gamma => {
                    let k = match t.channel {
                        Some(k) if (1..=r).contains(&k) => k - 1,
                        other => {
                            return Err(Error::Parse(format!("{name}: channel {other:?} is not in 1..={r}")))
                        }
                    };
                    &mut gamma_hi[k][component(n)?]
                }
                BlockKind::L => {
                    if t.component.is_some() || t.channel.is_some() {
                        return Err(Error::Parse(format!("{name}: l is scalar and takes no component or channel")));
                    }
                    &mut l_hi
                }
            };
            field(&name, target.add_hom(&hom))?;
        }
        let cap = degree_cap.or(self.degree_cap).unwrap_or(2);
        NonlinearProblem::new(lin, f_hi, gamma_hi, l_hi, cap)
    }

    /// `horizon` overrides the file's; terminal data default to zero.
    pub fn time_varying(&self, horizon: Option<f64>) -> Result<TimeVaryingProblem> {
        let base = self.nonlinear(None)?;
        let horizon = horizon
            .or(self.horizon)
            .ok_or_else(|| Error::Parse("no horizon in the file or on the command line".into()))?;
        let n = self.n;
        let (terminal_p, terminal_hi) = match &self.terminal {
            None => (Mat::zeros(n, n), BTreeMap::new()),
            Some(term) => {
                let p = matrix("terminal.P", &term.p, n, n)?;
                let mut hi = BTreeMap::new();
                for (i, b) in term.pi.iter().enumerate() {
                    let name = format!("terminal.pi[{i}]");
                    let hom = records_to_hom(&name, n, b.degree, &b.records)?;
                    if hi.insert(b.degree, hom).is_some() {
                        return Err(Error::Parse(format!("{name}: degree {} given twice", b.degree)));
                    }
                }
                (p, hi)
            }
        };
        let schedule = if self.table.is_empty() {
            Schedule::Constant(Box::new(base))
        } else {
            let mut times = Vec::new();
            let mut nodes = Vec::new();
            for (i, node) in self.table.iter().enumerate() {
                let lin = node.data.to_lqgb(&format!("table[{i}]."), n, self.m, self.r)?;
                times.push(node.t);
                nodes.push(self.nonlinear_with(lin, None)?);
            }
            Schedule::tabulated(times, nodes)?
        };
        TimeVaryingProblem::new(schedule, horizon, terminal_p, terminal_hi)
    }
}

/// Computed cost and feedback: the SARE kernel and gain, plus the series
/// corrections when the HJB solver produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    pub status: Status,
    pub iterations: usize,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_cap: Option<usize>,
    /// `π^[d]` for d ≥ 3, exponents over `x`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pi: Vec<PolyBlock>,
    /// `κ_j^[d]` for d ≥ 2, tagged with the control component.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kappa: Vec<PolyBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<InvertibilityCertificate>,
}

impl SolutionFile {
    pub fn from_sare(res: &SAREResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: res.p.nrows(),
            m: res.k.nrows(),
            status: res.status,
            iterations: res.iterations,
            p: to_rows(&res.p),
            k: to_rows(&res.k),
            failure: res.failure.clone(),
            method: None,
            degree_cap: None,
            pi: Vec::new(),
            kappa: Vec::new(),
            certificates: Vec::new(),
        }
    }

    pub fn from_series(sol: &SeriesSolution) -> Self {
        let pi = sol
            .pi_hi
            .values()
            .map(|p| PolyBlock {
                component: None,
                degree: p.degree(),
                records: hom_to_records(p),
            })
            .collect();
        let kappa = sol
            .kappa_hi
            .values()
            .flat_map(|parts| {
                parts.iter().enumerate().map(|(j, p)| PolyBlock {
                    component: Some(j + 1),
                    degree: p.degree(),
                    records: hom_to_records(p),
                })
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            n: sol.n(),
            m: sol.m(),
            status: sol.sare_status,
            iterations: sol.sare_iterations,
            p: to_rows(&sol.p),
            k: to_rows(&sol.k),
            failure: None,
            method: Some(sol.method),
            degree_cap: Some(sol.degree_cap),
            pi,
            kappa,
            certificates: sol.certificates.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: SolutionFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("solution file: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        to_text(self)
    }

    pub fn to_solution(&self) -> Result<SeriesSolution> {
        let (n, m) = (self.n, self.m);
        let p = matrix("P", &self.p, n, n)?;
        let k = matrix("K", &self.k, m, n)?;
        let mut pi_hi = BTreeMap::new();
        for (i, b) in self.pi.iter().enumerate() {
            let hom = records_to_hom(&format!("pi[{i}]"), n, b.degree, &b.records)?;
            pi_hi.insert(b.degree, hom);
        }
        let mut kappa_hi: BTreeMap<usize, Vec<HomPoly>> = BTreeMap::new();
        for (i, b) in self.kappa.iter().enumerate() {
            let name = format!("kappa[{i}]");
            let j = match b.component {
                Some(j) if (1..=m).contains(&j) => j - 1,
                other => return Err(Error::Parse(format!("{name}: component {other:?} is not in 1..={m}"))),
            };
            let hom = records_to_hom(&name, n, b.degree, &b.records)?;
            kappa_hi
                .entry(b.degree)
                .or_insert_with(|| vec![HomPoly::zero(n, b.degree); m])[j] = hom;
        }
        let cap = self
            .degree_cap
            .unwrap_or_else(|| pi_hi.keys().copied().max().unwrap_or(2));
        Ok(SeriesSolution {
            p,
            k,
            pi_hi,
            kappa_hi,
            certificates: self.certificates.clone(),
            sare_status: self.status,
            sare_iterations: self.iterations,
            method: self.method.unwrap_or(Method::Direct),
            degree_cap: cap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{pendulum, two_state, PendulumVariant};
    use crate::hjb::{solve_hjb_series, SeriesOptions};
    use crate::sare::sare_iterate;

    #[test]
    fn nonlinear_problem_round_trips_exactly() {
        let p = pendulum(PendulumVariant::Dynamics, 6).unwrap();
        let text = ProblemFile::from_nonlinear(&p).to_json();
        let back = ProblemFile::parse(&text).unwrap();
        assert_eq!(back.nonlinear(None).unwrap(), p);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn cross_term_and_discount_survive() {
        let mut lin = two_state(1.0, 0.1);
        lin.base.discount = 0.1 + 0.2; // not exactly representable as written
        let back = ProblemFile::parse(&ProblemFile::from_lqgb(&lin).to_json()).unwrap();
        assert_eq!(back.lqgb().unwrap(), lin);
    }

    #[test]
    fn solution_round_trips() {
        let p = pendulum(PendulumVariant::Dynamics, 4).unwrap();
        let sol = solve_hjb_series(&p, &SeriesOptions::default()).unwrap();
        let back = SolutionFile::parse(&SolutionFile::from_series(&sol).to_json())
            .unwrap()
            .to_solution()
            .unwrap();
        assert_eq!(back, sol);
        let sare = sare_iterate(&two_state(0.0, 0.1), 1e-9, 100).unwrap();
        let s = SolutionFile::from_sare(&sare).to_solution().unwrap();
        assert_eq!((s.p, s.k), (sare.p, sare.k));
    }

    #[test]
    fn time_varying_round_trips() {
        let nodes = vec![
            pendulum(PendulumVariant::Dynamics, 3).unwrap(),
            pendulum(PendulumVariant::PrintedMatrices, 3).unwrap(),
        ];
        let mut hi = BTreeMap::new();
        hi.insert(3, HomPoly::monomial(MultiIndex::new(vec![1, 2]), -0.25));
        let tv = TimeVaryingProblem::new(
            Schedule::tabulated(vec![0.0, 1.5], nodes).unwrap(),
            2.0,
            Mat::identity(2, 2),
            hi,
        )
        .unwrap();
        let back = ProblemFile::parse(&ProblemFile::from_time_varying(&tv).to_json())
            .unwrap()
            .time_varying(None)
            .unwrap();
        assert_eq!(back, tv);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let mut file = ProblemFile::from_nonlinear(&pendulum(PendulumVariant::Dynamics, 4).unwrap());
        file.linear.g[1].push(0.0);
        let msg = file.lqgb().unwrap_err().to_string();
        assert!(msg.starts_with("G: ") && msg.contains("row 1 has 2 entries"), "{msg}");

        let mut file = ProblemFile::from_nonlinear(&pendulum(PendulumVariant::Dynamics, 4).unwrap());
        file.terms[0].records[0].exponents = vec![1, 1, 0];
        let msg = file.nonlinear(None).unwrap_err().to_string();
        assert!(msg.contains("terms[0].records[0]: exponents sum to 2"), "{msg}");

        let mut file = ProblemFile::from_lqgb(&two_state(0.0, 0.1));
        file.linear.c.pop();
        assert!(file.lqgb().unwrap_err().to_string().contains("expected r = 2"));

        let bad = ProblemFile::from_lqgb(&two_state(0.0, 0.1)).to_json().replace("\"F\"", "\"Fx\"");
        let msg = ProblemFile::parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");

        let v2 = ProblemFile::from_lqgb(&two_state(0.0, 0.1))
            .to_json()
            .replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(ProblemFile::parse(&v2).unwrap_err().to_string().contains("schema_version 2"));
    }
}
