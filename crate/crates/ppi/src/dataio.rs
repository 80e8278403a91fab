//! Dataset model and CSV plumbing.
//!
//! A dataset holds a labeled part (autorater score f plus human label y)
//! and an unlabeled part (f only), under one of four label kinds. Token
//! labels are stored as small codes: abstain {n, y, u} -> {0, 1, 2} and
//! side-by-side {w, l, t} -> {0, 1, 2}. Human labels stay binary under the
//! abstain kind.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};

/// Domain of the f (and, except for abstain3, y) columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Real-valued scores and labels.
    Real,
    /// 0/1 scores and labels.
    Binary,
    /// f in {n, y, u}; human y stays 0/1.
    Abstain3,
    /// f and y in {w, l, t}.
    Sxs3,
}

impl LabelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(LabelKind::Real),
            "binary" => Ok(LabelKind::Binary),
            "abstain3" => Ok(LabelKind::Abstain3),
            "sxs3" => Ok(LabelKind::Sxs3),
            _ => Err(Error::InvalidArgument(format!("unknown label kind {s:?}"))),
        }
    }
}

/// A cell value: a real number, or a coded token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Real(f64),
    Code(u8),
}

impl Value {
    pub fn as_real(&self) -> Result<f64> {
        match self {
            Value::Real(v) => Ok(*v),
            Value::Code(_) => Err(Error::DataOther("expected a real value, found a token".into())),
        }
    }

    pub fn as_code(&self) -> Result<u8> {
        match self {
            Value::Code(c) => Ok(*c),
            Value::Real(_) => Err(Error::DataOther("expected a token, found a real value".into())),
        }
    }
}

pub const ABSTAIN_TOKENS: [&str; 3] = ["n", "y", "u"];
pub const SXS_TOKENS: [&str; 3] = ["w", "l", "t"];

pub fn abstain_code(token: &str) -> Option<u8> {
    ABSTAIN_TOKENS.iter().position(|&t| t == token).map(|i| i as u8)
}

pub fn sxs_code(token: &str) -> Option<u8> {
    SXS_TOKENS.iter().position(|&t| t == token).map(|i| i as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub id: Option<String>,
    pub f: Value,
    pub y: Value,
    /// Binary stand-in metric used by the backoff transform.
    pub fallback: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledRecord {
    pub id: Option<String>,
    pub f: Value,
    pub fallback: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labeled: Vec<LabeledRecord>,
    pub unlabeled: Vec<UnlabeledRecord>,
    pub kind: LabelKind,
}

/// Token-to-real mapping for abstaining autorater scores.
#[derive(Debug, Clone, Copy)]
pub struct Linearization {
    pub n: f64,
    pub y: f64,
    pub u: f64,
}

impl Linearization {
    /// n = 0, y = 1, u = 1/2.
    pub fn natural() -> Self {
        Linearization { n: 0.0, y: 1.0, u: 0.5 }
    }

    /// n = -1, y = +1, u = 0.
    pub fn signed() -> Self {
        Linearization { n: -1.0, y: 1.0, u: 0.0 }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(Self::natural()),
            "signed" => Ok(Self::signed()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown linearization scheme {s:?} (expected natural or signed)"
            ))),
        }
    }

    fn apply(&self, code: u8) -> f64 {
        match code {
            0 => self.n,
            1 => self.y,
            _ => self.u,
        }
    }
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn big_n(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labeled.is_empty() || self.unlabeled.is_empty() {
            return Err(Error::DataOther("both parts must be non-empty".into()));
        }
        let labeled_ids: BTreeSet<&str> =
            self.labeled.iter().filter_map(|r| r.id.as_deref()).collect();
        for r in &self.unlabeled {
            if let Some(id) = r.id.as_deref() {
                if labeled_ids.contains(id) {
                    return Err(Error::DataOther(format!(
                        "id {id:?} appears in both the labeled and unlabeled parts"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Labeled (f, y) as reals. Valid for real and binary kinds.
    pub fn fy_real(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut fs = Vec::with_capacity(self.labeled.len());
        let mut ys = Vec::with_capacity(self.labeled.len());
        for r in &self.labeled {
            fs.push(r.f.as_real()?);
            ys.push(r.y.as_real()?);
        }
        Ok((fs, ys))
    }

    pub fn unlabeled_f_real(&self) -> Result<Vec<f64>> {
        self.unlabeled.iter().map(|r| r.f.as_real()).collect()
    }

    /// Labeled (a, h) pairs with both coded 0/1. Valid for the binary kind.
    pub fn labeled_ah_binary(&self) -> Result<Vec<(u8, u8)>> {
        self.labeled
            .iter()
            .map(|r| Ok((r.f.as_real()? as u8, r.y.as_real()? as u8)))
            .collect()
    }

    pub fn unlabeled_a_binary(&self) -> Result<Vec<u8>> {
        self.unlabeled.iter().map(|r| Ok(r.f.as_real()? as u8)).collect()
    }

    /// Labeled (a, h) with a in {0=n, 1=y, 2=u} and binary h.
    pub fn labeled_ah_abstain(&self) -> Result<Vec<(u8, u8)>> {
        self.labeled
            .iter()
            .map(|r| Ok((r.f.as_code()?, r.y.as_real()? as u8)))
            .collect()
    }

    /// Labeled (a, h) with both in {0=w, 1=l, 2=t}.
    pub fn labeled_ah_sxs(&self) -> Result<Vec<(u8, u8)>> {
        self.labeled.iter().map(|r| Ok((r.f.as_code()?, r.y.as_code()?))).collect()
    }

    /// Unlabeled a codes (abstain3 or sxs3 kinds).
    pub fn unlabeled_a_codes(&self) -> Result<Vec<u8>> {
        self.unlabeled.iter().map(|r| r.f.as_code()).collect()
    }
}

fn parse_value(kind: LabelKind, raw: &str, column: &str, row: usize) -> Result<Value> {
    let bad = |msg: String| Error::Data { row, msg };
    match kind {
        LabelKind::Real => {
            let v: f64 = raw
                .parse()
                .map_err(|_| bad(format!("column {column}: {raw:?} is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("column {column}: {raw:?} is not finite")));
            }
            Ok(Value::Real(v))
        }
        LabelKind::Binary => match raw {
            "0" => Ok(Value::Real(0.0)),
            "1" => Ok(Value::Real(1.0)),
            _ => Err(bad(format!("column {column}: {raw:?} is not 0 or 1"))),
        },
        LabelKind::Abstain3 => abstain_code(raw)
            .map(Value::Code)
            .ok_or_else(|| bad(format!("column {column}: {raw:?} is not one of n, y, u"))),
        LabelKind::Sxs3 => sxs_code(raw)
            .map(Value::Code)
            .ok_or_else(|| bad(format!("column {column}: {raw:?} is not one of w, l, t"))),
    }
}

/// Human labels stay binary under the abstain kind; elsewhere y shares
/// the f domain.
fn y_kind(kind: LabelKind) -> LabelKind {
    match kind {
        LabelKind::Abstain3 => LabelKind::Binary,
        k => k,
    }
}

fn parse_fallback(raw: &str, row: usize) -> Result<f64> {
    match raw {
        "0" => Ok(0.0),
        "1" => Ok(1.0),
        _ => Err(Error::Data { row, msg: format!("column fallback: {raw:?} is not 0 or 1") }),
    }
}

struct Columns {
    id: Option<usize>,
    f: usize,
    y: Option<usize>,
    fallback: Option<usize>,
}

fn resolve_columns(headers: &csv::StringRecord, need_y: bool, path: &Path) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let f = find("f").ok_or_else(|| {
        Error::DataOther(format!("{}: missing required column f", path.display()))
    })?;
    let y = find("y");
    if need_y && y.is_none() {
        return Err(Error::DataOther(format!("{}: missing required column y", path.display())));
    }
    Ok(Columns { id: find("id"), f, y, fallback: find("fallback") })
}

fn get<'a>(record: &'a csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<&'a str> {
    record
        .get(idx)
        .ok_or_else(|| Error::Data { row, msg: format!("missing value in column {name}") })
}

fn check_duplicate(seen: &mut BTreeSet<String>, id: &Option<String>, row: usize) -> Result<()> {
    if let Some(id) = id {
        if !seen.insert(id.clone()) {
            return Err(Error::Data { row, msg: format!("duplicate id {id:?}") });
        }
    }
    Ok(())
}

/// Load just the labeled part of a dataset (pool files for subsampling
/// experiments). Row numbers in errors count the header as row 1.
pub fn load_labeled_csv(labeled_path: &Path, kind: LabelKind) -> Result<Vec<LabeledRecord>> {
    let mut labeled = Vec::new();
    let mut reader = csv::Reader::from_path(labeled_path)?;
    let cols = resolve_columns(reader.headers()?, true, labeled_path)?;
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let id = cols.id.map(|c| get(&record, c, "id", row).map(str::to_string)).transpose()?;
        check_duplicate(&mut seen, &id, row)?;
        let f = parse_value(kind, get(&record, cols.f, "f", row)?, "f", row)?;
        let y = parse_value(y_kind(kind), get(&record, cols.y.unwrap(), "y", row)?, "y", row)?;
        let fallback = cols
            .fallback
            .map(|c| parse_fallback(get(&record, c, "fallback", row)?, row))
            .transpose()?;
        labeled.push(LabeledRecord { id, f, y, fallback });
    }
    Ok(labeled)
}

/// Load a dataset from a labeled and an unlabeled CSV file. Row numbers in
/// errors count the header as row 1.
pub fn load_csv(labeled_path: &Path, unlabeled_path: &Path, kind: LabelKind) -> Result<Dataset> {
    let labeled = load_labeled_csv(labeled_path, kind)?;

    let mut unlabeled = Vec::new();
    let mut reader = csv::Reader::from_path(unlabeled_path)?;
    let cols = resolve_columns(reader.headers()?, false, unlabeled_path)?;
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let id = cols.id.map(|c| get(&record, c, "id", row).map(str::to_string)).transpose()?;
        check_duplicate(&mut seen, &id, row)?;
        let f = parse_value(kind, get(&record, cols.f, "f", row)?, "f", row)?;
        let fallback = cols
            .fallback
            .map(|c| parse_fallback(get(&record, c, "fallback", row)?, row))
            .transpose()?;
        unlabeled.push(UnlabeledRecord { id, f, fallback });
    }

    let dataset = Dataset { labeled, unlabeled, kind };
    dataset.validate()?;
    Ok(dataset)
}

fn render_value(kind: LabelKind, v: &Value) -> String {
    match (kind, v) {
        (LabelKind::Abstain3, Value::Code(c)) => ABSTAIN_TOKENS[*c as usize].to_string(),
        (LabelKind::Sxs3, Value::Code(c)) => SXS_TOKENS[*c as usize].to_string(),
        (LabelKind::Binary, Value::Real(v)) => format!("{}", *v as u8),
        (_, Value::Real(v)) => format!("{v}"),
        (_, Value::Code(c)) => format!("{c}"),
    }
}

fn render_fallback(v: f64) -> String {
    format!("{}", v as u8)
}

/// Write a dataset back to CSV. Columns mirror load_csv; id and fallback
/// columns appear only when any record carries them.
pub fn write_csv(dataset: &Dataset, labeled_path: &Path, unlabeled_path: &Path) -> Result<()> {
    let kind = dataset.kind;
    let has_id = dataset.labeled.iter().any(|r| r.id.is_some());
    let has_fb = dataset.labeled.iter().any(|r| r.fallback.is_some());
    let mut w = csv::Writer::from_path(labeled_path)?;
    let mut header = Vec::new();
    if has_id {
        header.push("id");
    }
    header.extend(["f", "y"]);
    if has_fb {
        header.push("fallback");
    }
    w.write_record(&header)?;
    for r in &dataset.labeled {
        let mut fields = Vec::new();
        if has_id {
            fields.push(r.id.clone().unwrap_or_default());
        }
        fields.push(render_value(kind, &r.f));
        fields.push(render_value(y_kind(kind), &r.y));
        if has_fb {
            fields.push(r.fallback.map(render_fallback).unwrap_or_default());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;

    let has_id = dataset.unlabeled.iter().any(|r| r.id.is_some());
    let has_fb = dataset.unlabeled.iter().any(|r| r.fallback.is_some());
    let mut w = csv::Writer::from_path(unlabeled_path)?;
    let mut header = Vec::new();
    if has_id {
        header.push("id");
    }
    header.push("f");
    if has_fb {
        header.push("fallback");
    }
    w.write_record(&header)?;
    for r in &dataset.unlabeled {
        let mut fields = Vec::new();
        if has_id {
            fields.push(r.id.clone().unwrap_or_default());
        }
        fields.push(render_value(kind, &r.f));
        if has_fb {
            fields.push(r.fallback.map(render_fallback).unwrap_or_default());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Replace abstentions by the per-record fallback metric. The result is a
/// binary dataset: n -> 0, y -> 1, u -> fallback.
pub fn backoff(dataset: &Dataset) -> Result<Dataset> {
    if dataset.kind != LabelKind::Abstain3 {
        return Err(Error::InvalidArgument("backoff requires an abstain3 dataset".into()));
    }
    let convert = |f: &Value, fallback: Option<f64>, row: usize| -> Result<Value> {
        match f.as_code()? {
            2 => match fallback {
                Some(v) => Ok(Value::Real(v)),
                None => Err(Error::Data {
                    row,
                    msg: "abstaining record has no fallback value".into(),
                }),
            },
            c => Ok(Value::Real(c as f64)),
        }
    };
    let labeled = dataset
        .labeled
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(LabeledRecord {
                id: r.id.clone(),
                f: convert(&r.f, r.fallback, i + 2)?,
                y: r.y,
                fallback: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let unlabeled = dataset
        .unlabeled
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(UnlabeledRecord {
                id: r.id.clone(),
                f: convert(&r.f, r.fallback, i + 2)?,
                fallback: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { labeled, unlabeled, kind: LabelKind::Binary })
}

/// Map abstain tokens to reals, producing a real-valued dataset.
pub fn linearize(dataset: &Dataset, mapping: &Linearization) -> Result<Dataset> {
    if dataset.kind != LabelKind::Abstain3 {
        return Err(Error::InvalidArgument("linearize requires an abstain3 dataset".into()));
    }
    let labeled = dataset
        .labeled
        .iter()
        .map(|r| {
            Ok(LabeledRecord {
                id: r.id.clone(),
                f: Value::Real(mapping.apply(r.f.as_code()?)),
                y: Value::Real(r.y.as_real()?),
                fallback: r.fallback,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let unlabeled = dataset
        .unlabeled
        .iter()
        .map(|r| {
            Ok(UnlabeledRecord {
                id: r.id.clone(),
                f: Value::Real(mapping.apply(r.f.as_code()?)),
                fallback: r.fallback,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { labeled, unlabeled, kind: LabelKind::Real })
}

/// Threshold real scores into binary ones: f >= threshold maps to 1.
/// Human labels must already be 0/1.
pub fn discretize(dataset: &Dataset, threshold: f64) -> Result<Dataset> {
    if dataset.kind != LabelKind::Real {
        return Err(Error::InvalidArgument("discretize requires a real dataset".into()));
    }
    let cut = |v: f64| Value::Real(if v >= threshold { 1.0 } else { 0.0 });
    let labeled = dataset
        .labeled
        .iter()
        .map(|r| {
            let y = r.y.as_real()?;
            if y != 0.0 && y != 1.0 {
                return Err(Error::DataOther(format!(
                    "discretize requires binary human labels, found {y}"
                )));
            }
            Ok(LabeledRecord { id: r.id.clone(), f: cut(r.f.as_real()?), y: r.y, fallback: r.fallback })
        })
        .collect::<Result<Vec<_>>>()?;
    let unlabeled = dataset
        .unlabeled
        .iter()
        .map(|r| {
            Ok(UnlabeledRecord { id: r.id.clone(), f: cut(r.f.as_real()?), fallback: r.fallback })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { labeled, unlabeled, kind: LabelKind::Binary })
}

/// Combine per-item binary ratings of two models into side-by-side labels:
/// (1, 0) -> w, (0, 1) -> l, agreement -> t. Codes follow {w, l, t} ->
/// {0, 1, 2}.
pub fn synthesize_sxs(
    model_a: &BTreeMap<String, u8>,
    model_b: &BTreeMap<String, u8>,
) -> Result<BTreeMap<String, u8>> {
    if model_a.len() != model_b.len() || model_a.keys().ne(model_b.keys()) {
        return Err(Error::DataOther("model A and model B id sets differ".into()));
    }
    let mut out = BTreeMap::new();
    for (id, &a) in model_a {
        let b = model_b[id];
        if a > 1 || b > 1 {
            return Err(Error::DataOther(format!("id {id:?}: ratings must be 0 or 1")));
        }
        let code = match (a, b) {
            (1, 0) => 0,
            (0, 1) => 1,
            _ => 2,
        };
        out.insert(id.clone(), code);
    }
    Ok(out)
}

/// JSON view of a dataset, mirroring the CSV columns.
pub fn dataset_to_json(dataset: &Dataset) -> serde_json::Value {
    let kind = dataset.kind;
    let render = |k: LabelKind, v: &Value| match v {
        Value::Real(x) => json!(x),
        Value::Code(_) => json!(render_value(k, v)),
    };
    json!({
        "label_kind": match kind {
            LabelKind::Real => "real",
            LabelKind::Binary => "binary",
            LabelKind::Abstain3 => "abstain3",
            LabelKind::Sxs3 => "sxs3",
        },
        "labeled": dataset.labeled.iter().map(|r| {
            let mut o = serde_json::Map::new();
            if let Some(id) = &r.id {
                o.insert("id".into(), json!(id));
            }
            o.insert("f".into(), render(kind, &r.f));
            o.insert("y".into(), render(y_kind(kind), &r.y));
            if let Some(fb) = r.fallback {
                o.insert("fallback".into(), json!(fb));
            }
            serde_json::Value::Object(o)
        }).collect::<Vec<_>>(),
        "unlabeled": dataset.unlabeled.iter().map(|r| {
            let mut o = serde_json::Map::new();
            if let Some(id) = &r.id {
                o.insert("id".into(), json!(id));
            }
            o.insert("f".into(), render(kind, &r.f));
            if let Some(fb) = r.fallback {
                o.insert("fallback".into(), json!(fb));
            }
            serde_json::Value::Object(o)
        }).collect::<Vec<_>>(),
    })
}
