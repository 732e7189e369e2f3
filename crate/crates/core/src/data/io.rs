//! Choice files, the catalog export, and explicit-prospect JSON lines.
//!
//! Choice CSV columns: `subject_id,mpl_id,row,accepted,chose_b,covar_<name>...`.
//! `accepted` holds the answer for contract lists and `chose_b` for the
//! others; either may be empty when the other one is filled.
//!
//! Catalog CSV columns: `mpl_id,row,option_a,option_b`, where a prospect is
//! written as `p*(t:x;t:x)+p*(t:x)`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::{load_catalog, MplCatalog};
use crate::dataset::{Dataset, DatasetBuilder, Design};
use crate::error::{Error, Result};
use crate::model::{Branch, Payment, PaymentStream, Prospect};

const COVARIATE_PREFIX: &str = "covar_";

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn format_prospect(p: &Prospect) -> String {
    p.branches()
        .iter()
        .map(|b| {
            let payments: Vec<String> = b
                .stream
                .payments()
                .iter()
                .map(|p| format!("{}:{}", p.period, p.amount))
                .collect();
            format!("{}*({})", b.probability, payments.join(";"))
        })
        .collect::<Vec<_>>()
        .join("+")
}

pub fn parse_prospect(text: &str) -> Result<Prospect> {
    let bad = |why: &str| Error::InvalidProspect(format!("`{text}`: {why}"));
    let mut branches = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut pieces = Vec::new();
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.checked_sub(1).ok_or_else(|| bad("unbalanced parentheses"))?,
            '+' if depth == 0 => {
                pieces.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    pieces.push(&text[start..]);
    for piece in pieces {
        let (prob, rest) = piece.trim().split_once('*').ok_or_else(|| bad("missing `*`"))?;
        let probability: f64 = prob.trim().parse().map_err(|_| bad("bad probability"))?;
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| bad("stream must be parenthesized"))?;
        let payments = inner
            .split(';')
            .map(|p| {
                let (t, x) = p.split_once(':').ok_or_else(|| bad("payment needs `period:amount`"))?;
                let period = t.trim().parse().map_err(|_| bad("bad period"))?;
                let amount = x.trim().parse().map_err(|_| bad("bad amount"))?;
                Ok(Payment::new(period, amount))
            })
            .collect::<Result<Vec<_>>>()?;
        branches.push(Branch {
            probability,
            stream: PaymentStream::new(payments)?,
        });
    }
    Prospect::new(branches)
}

pub fn write_catalog_to<W: Write>(writer: W, catalog: &MplCatalog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mpl_id", "row", "option_a", "option_b"])?;
    for (mpl, row, d) in catalog.iter() {
        w.write_record([
            mpl.to_string(),
            row.to_string(),
            format_prospect(&d.option_a),
            format_prospect(&d.option_b),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_catalog(path: impl AsRef<Path>, catalog: &MplCatalog) -> Result<()> {
    write_catalog_to(BufWriter::new(File::create(path)?), catalog)
}

pub fn read_catalog(path: impl AsRef<Path>) -> Result<MplCatalog> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["mpl_id", "row", "option_a", "option_b"] {
        return Err(schema(path, 1, "expected header `mpl_id,row,option_a,option_b`"));
    }
    let mut rows: BTreeMap<u8, Vec<Design>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mpl: u8 = rec[0].trim().parse().map_err(|_| schema(path, line, "bad mpl_id"))?;
        let row: usize = rec[1].trim().parse().map_err(|_| schema(path, line, "bad row"))?;
        let list = rows.entry(mpl).or_default();
        if row != list.len() + 1 {
            return Err(schema(
                path,
                line,
                format!("MPL {mpl}: expected row {}, got {row}", list.len() + 1),
            ));
        }
        let parse = |s: &str| parse_prospect(s).map_err(|e| schema(path, line, e.to_string()));
        list.push(Design {
            option_a: parse(&rec[2])?,
            option_b: parse(&rec[3])?,
        });
    }
    Ok(MplCatalog::from_rows(rows))
}

fn parse_flag(cell: &str) -> Option<bool> {
    match cell.trim() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads a choice CSV against the built-in catalog.
pub fn read_choices(path: impl AsRef<Path>) -> Result<Dataset> {
    read_choices_with(path, &load_catalog())
}

pub fn read_choices_with(path: impl AsRef<Path>, catalog: &MplCatalog) -> Result<Dataset> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (subject_col, mpl_col, row_col) = match (col("subject_id"), col("mpl_id"), col("row")) {
        (Some(s), Some(m), Some(r)) => (s, m, r),
        _ => return Err(schema(path, 1, "header needs subject_id, mpl_id and row")),
    };
    let accepted_col = col("accepted");
    let chose_b_col = col("chose_b");
    if accepted_col.is_none() && chose_b_col.is_none() {
        return Err(schema(path, 1, "header needs an `accepted` or `chose_b` column"));
    }
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.trim().strip_prefix(COVARIATE_PREFIX).map(|n| (i, n.to_string())))
        .collect();
    if let Some((i, _)) = headers.iter().enumerate().find(|(i, h)| {
        ![
            Some(subject_col),
            Some(mpl_col),
            Some(row_col),
            accepted_col,
            chose_b_col,
        ]
        .contains(&Some(*i))
            && !h.trim().starts_with(COVARIATE_PREFIX)
    }) {
        return Err(schema(path, 1, format!("unknown column `{}`", &headers[i])));
    }
    let mut b = DatasetBuilder::default().with_covariate_names(covariate_cols.iter().map(|(_, n)| n.clone()).collect());
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize| rec.get(i).unwrap_or("").trim();
        let subject = cell(subject_col);
        if subject.is_empty() {
            return Err(schema(path, line, "empty subject_id"));
        }
        let mpl: u8 = cell(mpl_col)
            .parse()
            .map_err(|_| schema(path, line, format!("bad mpl_id `{}`", cell(mpl_col))))?;
        let row: u32 = cell(row_col)
            .parse()
            .map_err(|_| schema(path, line, format!("bad row `{}`", cell(row_col))))?;
        let design = catalog
            .row(mpl, row)
            .ok_or(Error::UnknownCatalogRow { mpl_id: mpl, row })
            .map_err(|e| schema(path, line, e.to_string()))?;
        let (primary, secondary) = if catalog.is_contract_list(mpl) {
            (accepted_col, chose_b_col)
        } else {
            (chose_b_col, accepted_col)
        };
        let raw = [primary, secondary]
            .into_iter()
            .flatten()
            .map(cell)
            .find(|c| !c.is_empty())
            .ok_or_else(|| schema(path, line, "no choice recorded"))?;
        let chosen_b =
            parse_flag(raw).ok_or_else(|| schema(path, line, format!("choice must be 0 or 1, got `{raw}`")))?;
        b.push(subject, mpl, row, design.clone(), chosen_b)
            .map_err(|e| schema(path, line, e.to_string()))?;
        let cells: Vec<&str> = covariate_cols.iter().map(|(i, _)| cell(*i)).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        let values = cells
            .iter()
            .zip(&covariate_cols)
            .map(|(c, (_, name))| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| schema(path, line, format!("covariate `{name}` must be numeric, got `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        b.set_covariates(subject, values)
            .map_err(|e| schema(path, line, e.to_string()))?;
    }
    Ok(b.build())
}

/// Writes a dataset whose designs all come from the built-in catalog.
pub fn write_choices(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    write_choices_with(path, dataset, &load_catalog())
}

pub fn write_choices_with(path: impl AsRef<Path>, dataset: &Dataset, catalog: &MplCatalog) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = ["subject_id", "mpl_id", "row", "accepted", "chose_b"]
        .map(String::from)
        .to_vec();
    header.extend(
        dataset
            .covariate_names()
            .iter()
            .map(|n| format!("{COVARIATE_PREFIX}{n}")),
    );
    w.write_record(&header)?;
    for rec in dataset.records() {
        if catalog.row(rec.mpl_id, rec.row) != Some(dataset.design(rec)) {
            return Err(Error::Dataset(format!(
                "MPL {} row {} does not match the catalog; use the JSON lines format",
                rec.mpl_id, rec.row
            )));
        }
        let flag = if rec.chosen_b { "1" } else { "0" }.to_string();
        let (accepted, chose_b) = if catalog.is_contract_list(rec.mpl_id) {
            (flag, String::new())
        } else {
            (String::new(), flag)
        };
        let mut out = vec![
            dataset.subject_id(rec).to_string(),
            rec.mpl_id.to_string(),
            rec.row.to_string(),
            accepted,
            chose_b,
        ];
        match dataset.covariates(rec.subject) {
            Ok(z) => out.extend(z.iter().map(|v| v.to_string())),
            Err(_) => out.extend(dataset.covariate_names().iter().map(|_| String::new())),
        }
        w.write_record(&out)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonBranch {
    probability: f64,
    /// `[period, amount]` pairs.
    payments: Vec<(u32, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    subject_id: String,
    mpl_id: u8,
    row: u32,
    chosen_b: bool,
    option_a: Vec<JsonBranch>,
    option_b: Vec<JsonBranch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariates: Option<Vec<(String, f64)>>,
}

fn to_json_prospect(p: &Prospect) -> Vec<JsonBranch> {
    p.branches()
        .iter()
        .map(|b| JsonBranch {
            probability: b.probability,
            payments: b.stream.payments().iter().map(|p| (p.period, p.amount)).collect(),
        })
        .collect()
}

fn from_json_prospect(branches: Vec<JsonBranch>) -> Result<Prospect> {
    Prospect::new(
        branches
            .into_iter()
            .map(|b| {
                Ok(Branch {
                    probability: b.probability,
                    stream: PaymentStream::new(b.payments.into_iter().map(|(t, x)| Payment::new(t, x)).collect())?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Writes one JSON object per record with the full option payloads.
pub fn write_prospects_jsonl(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in dataset.records() {
        let design = dataset.design(rec);
        let covariates = dataset.covariates(rec.subject).ok().map(|z| {
            dataset
                .covariate_names()
                .iter()
                .cloned()
                .zip(z.iter().copied())
                .collect()
        });
        let line = JsonRecord {
            subject_id: dataset.subject_id(rec).to_string(),
            mpl_id: rec.mpl_id,
            row: rec.row,
            chosen_b: rec.chosen_b,
            option_a: to_json_prospect(&design.option_a),
            option_b: to_json_prospect(&design.option_b),
            covariates,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_prospects_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut b = DatasetBuilder::default();
    let mut names: Option<Vec<String>> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| schema(path, line_no, e.to_string()))?;
        let design = Design {
            option_a: from_json_prospect(rec.option_a).map_err(|e| schema(path, line_no, e.to_string()))?,
            option_b: from_json_prospect(rec.option_b).map_err(|e| schema(path, line_no, e.to_string()))?,
        };
        b.push(&rec.subject_id, rec.mpl_id, rec.row, design, rec.chosen_b)
            .map_err(|e| schema(path, line_no, e.to_string()))?;
        if let Some(cov) = rec.covariates {
            let these: Vec<String> = cov.iter().map(|(n, _)| n.clone()).collect();
            match &names {
                None => {
                    b = b.with_covariate_names(these.clone());
                    names = Some(these);
                }
                Some(n) if *n != these => {
                    return Err(schema(path, line_no, "covariate names differ from earlier lines"));
                }
                Some(_) => {}
            }
            b.set_covariates(&rec.subject_id, cov.into_iter().map(|(_, v)| v).collect())
                .map_err(|e| schema(path, line_no, e.to_string()))?;
        }
    }
    Ok(b.build())
}
