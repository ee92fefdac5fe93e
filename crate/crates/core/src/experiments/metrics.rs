use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::algorithms::{StepRecord, TrainOutcome};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON has no inf/NaN; these encode them as the strings `"inf"`, `"-inf"`, `"nan"`.
mod lenient_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }

    fn to_text(x: f64) -> &'static str {
        if x.is_nan() {
            "nan"
        } else if x > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(to_text(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
        }
    }
}

/// What the `loss` column measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Suboptimality,
    TrainLoss,
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub schema_version: u32,
    pub t: u64,
    pub sim_time_s: f64,
    pub loss_kind: LossKind,
    #[serde(with = "lenient_f64")]
    pub loss: f64,
    #[serde(with = "lenient_f64::option")]
    pub eval_loss: Option<f64>,
    #[serde(with = "lenient_f64::option")]
    pub eval_accuracy: Option<f64>,
    #[serde(with = "lenient_f64")]
    pub xi: f64,
    #[serde(with = "lenient_f64")]
    pub mean_model_distance: f64,
    pub sync_count: u64,
    pub comm_seconds: f64,
}

impl MetricsRecord {
    pub fn from_step(record: &StepRecord, loss_kind: LossKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            t: record.t,
            sim_time_s: record.sim_time_s,
            loss_kind,
            loss: record.loss,
            eval_loss: record.eval_loss,
            eval_accuracy: record.eval_accuracy,
            xi: record.xi,
            mean_model_distance: record.mean_model_distance,
            sync_count: record.sync_count,
            comm_seconds: record.comm_seconds,
        }
    }
}

pub fn emit_record(record: &MetricsRecord) -> Result<String> {
    Ok(serde_json::to_string(record)?)
}

pub fn parse_record(line: &str) -> Result<MetricsRecord> {
    let record: MetricsRecord = serde_json::from_str(line)?;
    if record.schema_version != SCHEMA_VERSION {
        return Err(Error::config(
            "schema_version",
            format!("unsupported metrics schema {}", record.schema_version),
        ));
    }
    Ok(record)
}

/// Writes one record per line. Records must be strictly increasing in `t`.
pub fn write_metrics<W: Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if i > 0 && records[i - 1].t >= r.t {
            return Err(Error::invalid(
                "records",
                format!("t not increasing at index {i}"),
            ));
        }
        writeln!(out, "{}", emit_record(r)?)?;
    }
    Ok(())
}

pub fn read_metrics<R: BufRead>(input: R) -> Result<Vec<MetricsRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| parse_record(&l?))
        .collect()
}

/// End-of-run summary written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub variant: String,
    pub loss_kind: LossKind,
    /// Loss of the worker mean after the last step; `inf` when the run diverged.
    #[serde(with = "lenient_f64")]
    pub final_loss: f64,
    #[serde(with = "lenient_f64")]
    pub best_loss: f64,
    /// Suboptimality of the weighted-average iterate (theory mode only).
    #[serde(with = "lenient_f64::option")]
    pub averaged_loss: Option<f64>,
    #[serde(with = "lenient_f64::option")]
    pub final_eval_loss: Option<f64>,
    #[serde(with = "lenient_f64::option")]
    pub final_eval_accuracy: Option<f64>,
    pub total_sim_time_s: f64,
    pub comm_seconds: f64,
    pub sync_count: u64,
    pub steps_completed: u64,
    pub total_steps: u64,
    pub gradient_steps: u64,
    pub pseudo_sync_steps: u64,
    pub diverged: bool,
    pub divergence_step: Option<u64>,
    pub divergence_message: Option<String>,
}

impl Summary {
    pub fn from_outcome(
        outcome: &TrainOutcome,
        loss_kind: LossKind,
        total_steps: u64,
        averaged_loss: Option<f64>,
    ) -> Self {
        let records = &outcome.diagnostics.records;
        let best_loss = records
            .iter()
            .map(|r| r.loss)
            .filter(|l| !l.is_nan())
            .fold(f64::INFINITY, f64::min);
        let last = records.last();
        let final_loss = match (&outcome.divergence, last) {
            (None, Some(r)) => r.loss,
            _ => f64::INFINITY,
        };
        Self {
            schema_version: SCHEMA_VERSION,
            variant: outcome.variant.name().to_string(),
            loss_kind,
            final_loss,
            best_loss,
            averaged_loss,
            final_eval_loss: last.and_then(|r| r.eval_loss),
            final_eval_accuracy: last.and_then(|r| r.eval_accuracy),
            total_sim_time_s: outcome.sim_time_s,
            comm_seconds: outcome.comm_seconds(),
            sync_count: outcome.events.len() as u64,
            steps_completed: outcome.steps_completed,
            total_steps,
            gradient_steps: outcome.gradient_steps.iter().sum(),
            pseudo_sync_steps: outcome.pseudo_sync_steps.iter().sum(),
            diverged: outcome.diverged(),
            divergence_step: outcome.divergence.as_ref().map(|d| d.step),
            divergence_message: outcome.divergence.as_ref().map(|d| d.message.clone()),
        }
    }
}
