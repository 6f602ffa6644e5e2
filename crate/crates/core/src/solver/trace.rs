use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One iteration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// 1-based iteration index; the record describes the step `θ_t → θ_{t+1}`.
    pub t: usize,
    /// Objective at `θ_t`.
    pub nll: f64,
    /// `D_A(θ_t, θ_{t+1})`, the complete-data KL between consecutive iterates.
    pub kl_step: f64,
    /// `D_{A*}(s(θ_t), μ_t)`.
    pub bregman_stat: f64,
    pub natural_decrement: Option<f64>,
    pub lambda_max_missing: Option<f64>,
    /// Inexact M-step certificate `Q_t(θ_{t+1}) - min Q_t`.
    pub surrogate_gap: Option<f64>,
    /// `θ_t`, when parameter storage is enabled.
    pub params: Option<Vec<f64>>,
}

impl IterRecord {
    pub(crate) fn new(t: usize, nll: f64) -> Self {
        IterRecord {
            t,
            nll,
            kl_step: f64::NAN,
            bregman_stat: f64::NAN,
            natural_decrement: None,
            lambda_max_missing: None,
            surrogate_gap: None,
            params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceStatus {
    /// Ran the requested number of iterations.
    Completed,
    /// Stopped early because the stationarity measure fell below the tolerance.
    Converged { at: usize },
    /// Stopped on an error; `final_params` holds the last valid iterate.
    Failed { at: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    /// Algorithm that produced the trace (`em`, `gem`, `online`, `map`, `gd`, `estep`).
    pub mode: String,
    /// Objective recorded in `nll` (`nll` or `map`).
    pub objective: String,
    pub seed: Option<u64>,
    /// Full configuration, for replay.
    pub config: serde_json::Value,
}

impl TraceHeader {
    pub fn new(mode: &str) -> Self {
        TraceHeader { mode: mode.into(), objective: "nll".into(), seed: None, config: serde_json::Value::Null }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub header: TraceHeader,
    pub records: Vec<IterRecord>,
    pub final_params: Vec<f64>,
    /// Objective at `final_params`, i.e. `L(θ_{T+1})`.
    pub final_nll: f64,
    pub status: TraceStatus,
    /// Free-form run events (domain-guard activations and similar).
    #[serde(default)]
    pub events: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    final_nll: f64,
    final_params: Vec<f64>,
    #[serde(flatten)]
    status: TraceStatus,
    events: Vec<String>,
}

impl EmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, TraceStatus::Failed { .. })
    }

    /// Objective values `L(θ_1), …, L(θ_T), L(θ_{T+1})`.
    pub fn objective_path(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.nll).collect();
        v.push(self.final_nll);
        v
    }

    pub fn min_bregman_stat(&self) -> f64 {
        self.records.iter().map(|r| r.bregman_stat).fold(f64::INFINITY, f64::min)
    }

    /// Header line, one line per record, then a summary line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", serde_json::json!({ "header": self.header }))?;
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        let summary = Summary {
            final_nll: self.final_nll,
            final_params: self.final_params.clone(),
            status: self.status.clone(),
            events: self.events.clone(),
        };
        writeln!(w, "{}", serde_json::json!({ "summary": summary }))?;
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        let mut summary: Option<Summary> = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line)?;
            if let Some(h) = v.get("header") {
                header = Some(serde_json::from_value(h.clone())?);
            } else if let Some(s) = v.get("summary") {
                summary = Some(serde_json::from_value(s.clone())?);
            } else {
                records.push(serde_json::from_value(v)?);
            }
        }
        let header = header.ok_or_else(|| Error::InvalidInput("trace has no header line".into()))?;
        let s = summary.ok_or_else(|| Error::InvalidInput("trace has no summary line".into()))?;
        Ok(EmTrace {
            header,
            records,
            final_params: s.final_params,
            final_nll: s.final_nll,
            status: s.status,
            events: s.events,
        })
    }

    /// Same columns as the JSONL records; parameters are `;`-separated.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "t",
            "nll",
            "kl_step",
            "bregman_stat",
            "natural_decrement",
            "lambda_max_missing",
            "surrogate_gap",
            "params",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let params = r
                .params
                .as_ref()
                .map(|p| p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            out.write_record([
                r.t.to_string(),
                r.nll.to_string(),
                r.kl_step.to_string(),
                r.bregman_stat.to_string(),
                opt(r.natural_decrement),
                opt(r.lambda_max_missing),
                opt(r.surrogate_gap),
                params,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
