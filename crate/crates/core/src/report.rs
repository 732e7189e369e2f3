//! Estimate tables in CSV and plain text.
//!
//! The CSV has columns `model,parameter,estimate,se,ci_lo,ci_hi`. After the
//! parameter rows of each model come footer rows whose `parameter` is one of
//! `n`, `loglik`, `aic`, `bic`, `clusters`, `k` or `converged`, with the value
//! in the `estimate` column.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::PremiumReport;
use crate::error::{Error, Result};
use crate::estimation::{FitResult, ModelSummary, Ranked};
use crate::mixed::{MixedFit, MIXED_PARAMS};

pub const REPORT_HEADER: [&str; 6] = ["model", "parameter", "estimate", "se", "ci_lo", "ci_hi"];
const FOOTER: [&str; 7] = ["n", "loglik", "aic", "bic", "clusters", "k", "converged"];

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub parameter: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

/// One model as read back from a report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportModel {
    pub rows: Vec<ReportRow>,
    pub summary: ModelSummary,
    pub converged: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_fit_csv<W: Write>(writer: W, fits: &[(String, &FitResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for (name, fit) in fits {
        let mut rows: Vec<(String, f64, Option<f64>, Option<(f64, f64)>)> = fit
            .estimates
            .iter()
            .map(|e| (e.label.clone(), e.estimate, e.se, e.ci95))
            .collect();
        rows.extend(fit.fixed.iter().map(|(id, &v)| (id.name(), v, None, None)));
        for (label, est, se, ci) in rows {
            w.write_record([
                name.clone(),
                label,
                est.to_string(),
                opt(se),
                opt(ci.map(|c| c.0)),
                opt(ci.map(|c| c.1)),
            ])?;
        }
        let footer = [
            fit.n_obs as f64,
            fit.loglik,
            fit.aic,
            fit.bic,
            fit.n_clusters as f64,
            fit.k as f64,
            if fit.converged { 1.0 } else { 0.0 },
        ];
        for (key, v) in FOOTER.iter().zip(footer) {
            w.write_record([
                name.clone(),
                key.to_string(),
                v.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fit_report(path: impl AsRef<Path>, fits: &[(String, &FitResult)]) -> Result<()> {
    write_fit_csv(BufWriter::new(File::create(path)?), fits)
}

/// Parses a report written by [`write_fit_report`].
pub fn read_fit_report(path: impl AsRef<Path>) -> Result<Vec<ReportModel>> {
    let path = path.as_ref();
    let bad = |line: usize, message: String| Error::Schema {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(bad(1, format!("expected header `{}`", REPORT_HEADER.join(","))));
    }
    struct Partial {
        name: String,
        rows: Vec<ReportRow>,
        footer: [Option<f64>; 7],
    }
    let mut models: Vec<Partial> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<Option<f64>> {
            let c = rec.get(i).unwrap_or("").trim();
            if c.is_empty() {
                Ok(None)
            } else {
                c.parse()
                    .map(Some)
                    .map_err(|_| bad(line, format!("`{c}` is not a number")))
            }
        };
        let name = rec[0].to_string();
        if models.last().map_or(true, |m| m.name != name) {
            models.push(Partial {
                name: name.clone(),
                rows: Vec::new(),
                footer: [None; 7],
            });
        }
        let m = models.last_mut().expect("pushed above");
        let estimate = num(2)?.ok_or_else(|| bad(line, "missing estimate".into()))?;
        if let Some(k) = FOOTER.iter().position(|f| *f == &rec[1]) {
            m.footer[k] = Some(estimate);
        } else {
            let ci = match (num(4)?, num(5)?) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            };
            m.rows.push(ReportRow {
                parameter: rec[1].to_string(),
                estimate,
                se: num(3)?,
                ci,
            });
        }
    }
    models
        .into_iter()
        .map(|m| {
            let get = |k: usize| {
                m.footer[k].ok_or_else(|| bad(0, format!("model `{}` lacks the `{}` row", m.name, FOOTER[k])))
            };
            Ok(ReportModel {
                summary: ModelSummary {
                    name: m.name.clone(),
                    n_obs: get(0)? as usize,
                    loglik: get(1)?,
                    aic: get(2)?,
                    bic: get(3)?,
                    n_clusters: get(4)? as usize,
                    k: get(5)? as usize,
                },
                converged: get(6)? != 0.0,
                rows: m.rows,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

/// Human-readable estimate tables.
pub fn render_fit_text(fits: &[(String, &FitResult)]) -> String {
    let mut out = String::new();
    for (name, fit) in fits {
        let _ = writeln!(out, "Model: {name}");
        let _ = writeln!(
            out,
            "{:<22} {:>12} {:>12} {:>26}",
            "parameter", "estimate", "robust se", "95% CI"
        );
        for e in &fit.estimates {
            let ci = e
                .ci95
                .map(|(a, b)| format!("[{a:.4}, {b:.4}]"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<22} {:>12.4} {:>12} {:>26}",
                e.label,
                e.estimate,
                fmt_opt(e.se),
                ci
            );
        }
        for (id, v) in &fit.fixed {
            let _ = writeln!(out, "{:<22} {:>12.4} {:>12} {:>26}", id.name(), v, "(fixed)", "");
        }
        let _ = writeln!(
            out,
            "observations {}  clusters {}  parameters {}\nlog-likelihood {:.4}  AIC {:.4}  BIC {:.4}\nconverged {} after {} iterations ({})\n",
            fit.n_obs, fit.n_clusters, fit.k, fit.loglik, fit.aic, fit.bic, fit.converged, fit.iterations, fit.message
        );
    }
    out
}

pub fn write_fit_text(path: impl AsRef<Path>, fits: &[(String, &FitResult)]) -> Result<()> {
    std::fs::write(path, render_fit_text(fits))?;
    Ok(())
}

pub fn write_ranking<W: Write>(writer: W, ranking: &[Ranked]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank",
        "model",
        "n",
        "k",
        "loglik",
        "aic",
        "bic",
        "delta_aic",
        "delta_bic",
    ])?;
    for (i, r) in ranking.iter().enumerate() {
        let s = &r.summary;
        w.write_record([
            (i + 1).to_string(),
            s.name.clone(),
            s.n_obs.to_string(),
            s.k.to_string(),
            s.loglik.to_string(),
            s.aic.to_string(),
            s.bic.to_string(),
            r.delta_aic.to_string(),
            r.delta_bic.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_premium<W: Write>(writer: W, reports: &[PremiumReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "t",
        "T",
        "repayment",
        "indifference_principal",
        "neutral_principal",
        "premium",
    ])?;
    for r in reports {
        w.write_record([
            r.t.to_string(),
            r.big_t.to_string(),
            r.repayment.to_string(),
            r.indifference_principal.to_string(),
            r.neutral_principal.to_string(),
            r.premium.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>means.csv`, `<prefix>vcov.csv` and `<prefix>corr.csv`.
pub fn write_mixed_tables(dir: impl AsRef<Path>, prefix: &str, fit: &MixedFit) -> Result<()> {
    let dir = dir.as_ref();
    let names: Vec<String> = MIXED_PARAMS.iter().map(|p| p.name()).collect();
    let mut w = csv::Writer::from_path(dir.join(format!("{prefix}means.csv")))?;
    w.write_record(["parameter", "mean", "se", "ci_lo", "ci_hi", "sd", "sd_se"])?;
    for k in 0..5 {
        let m = fit.law.mean[k];
        let se = fit.mean_se[k];
        w.write_record([
            names[k].clone(),
            m.to_string(),
            opt(se),
            opt(se.map(|s| m - 1.96 * s)),
            opt(se.map(|s| m + 1.96 * s)),
            fit.sds[k].to_string(),
            opt(fit.sd_se[k]),
        ])?;
    }
    for (key, v) in [
        ("n", fit.n_obs as f64),
        ("loglik", fit.loglik),
        ("aic", fit.aic),
        ("bic", fit.bic),
        ("clusters", fit.n_clusters as f64),
        ("k", fit.k as f64),
        ("draws", fit.plan.n_draws as f64),
        ("converged", if fit.converged { 1.0 } else { 0.0 }),
    ] {
        w.write_record([
            key.to_string(),
            v.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()?;
    for (file, m) in [("vcov", fit.vcov()), ("corr", fit.correlations)] {
        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}{file}.csv")))?;
        let mut header = vec![String::new()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..5 {
            let mut row = vec![names[i].clone()];
            row.extend((0..5).map(|j| m[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn render_mixed_text(fit: &MixedFit) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "parameter", "mean", "se", "sd", "sd se"
    );
    for (k, p) in MIXED_PARAMS.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<10} {:>10.4} {:>10} {:>10.4} {:>10}",
            p.name(),
            fit.law.mean[k],
            fmt_opt(fit.mean_se[k]),
            fit.sds[k],
            fmt_opt(fit.sd_se[k])
        );
    }
    let _ = writeln!(out, "\ncorrelations");
    for i in 0..5 {
        let row: Vec<String> = (0..5).map(|j| format!("{:>8.4}", fit.correlations[(i, j)])).collect();
        let _ = writeln!(out, "{:<10} {}", MIXED_PARAMS[i].name(), row.join(" "));
    }
    let _ = writeln!(
        out,
        "\nobservations {}  clusters {}  draws {}\nsimulated log-likelihood {:.4}  AIC {:.4}  BIC {:.4}\nconverged {} after {} iterations ({})",
        fit.n_obs, fit.n_clusters, fit.plan.n_draws, fit.loglik, fit.aic, fit.bic, fit.converged, fit.iterations, fit.message
    );
    out
}
