use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::aggregation::AggregatorKind;
use crate::error::Result;
use crate::federation::ProtocolTrace;
use crate::mspl::MsplConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub id: String,
    pub mean_entropy: f64,
    pub weight_unscaled: f64,
    pub weight_final: f64,
    pub sample_count: usize,
    /// Accuracy of this client's model on the target domain.
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub global_accuracy_pre: Option<f64>,
    pub global_accuracy_post: Option<f64>,
    pub entropy_accuracy_correlation: Option<f64>,
}

/// Everything recorded about one seeded pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub dataset_hash: String,
    pub target_domain: String,
    pub aggregator: AggregatorKind,
    pub adaptation: Option<MsplConfig>,
    pub per_client: Vec<ClientRow>,
    pub metrics: RunMetrics,
    pub uploads: usize,
    pub exchanges_after_aggregation: usize,
    pub trace: ProtocolTrace,
    pub config: ExperimentConfig,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Long-format CSV (`record,name,field,value`) of every numeric value,
    /// printed with 6 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["record", "name", "field", "value"]).map_err(csv_err)?;
        let mut put = |record: &str, name: &str, field: &str, value: String| {
            w.write_record([record, name, field, value.as_str()]).map_err(csv_err)
        };
        put("run", "seed", "value", self.seed.to_string())?;
        put("run", "aggregator", "value", self.aggregator.cli_name().to_string())?;
        for c in &self.per_client {
            put("client", &c.id, "mean_entropy", sig6(c.mean_entropy))?;
            put("client", &c.id, "weight_unscaled", sig6(c.weight_unscaled))?;
            put("client", &c.id, "weight_final", sig6(c.weight_final))?;
            put("client", &c.id, "sample_count", c.sample_count.to_string())?;
            put("client", &c.id, "target_accuracy", opt_sig6(c.target_accuracy))?;
        }
        let m = &self.metrics;
        put(
            "metric",
            "global_accuracy_pre",
            "value",
            opt_sig6(m.global_accuracy_pre),
        )?;
        put(
            "metric",
            "global_accuracy_post",
            "value",
            opt_sig6(m.global_accuracy_post),
        )?;
        put(
            "metric",
            "entropy_accuracy_correlation",
            "value",
            opt_sig6(m.entropy_accuracy_correlation),
        )?;
        put("protocol", "uploads", "value", self.uploads.to_string())?;
        put(
            "protocol",
            "exchanges_after_aggregation",
            "value",
            self.exchanges_after_aggregation.to_string(),
        )?;
        finish(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    /// Swept parameter value, when the table is a sweep.
    pub parameter: Option<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub per_seed: Vec<f64>,
    /// Content hash of the domains each seed ran on.
    pub dataset_hashes: Vec<String>,
}

/// Mean ± std accuracy per configuration over the evaluation seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn row(&self, name: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "parameter", "mean_accuracy", "std_accuracy", "n_seeds"])
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                opt_sig6(r.parameter),
                sig6(r.mean_accuracy),
                sig6(r.std_accuracy),
                r.per_seed.len().to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }
}

fn csv_err(e: csv::Error) -> crate::error::FudaError {
    crate::error::FudaError::Numeric(format!("csv encoding failed: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt_sig6(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

/// `v` rounded to 6 significant digits, in plain or scientific notation
/// (whichever `{}` picks after rounding).
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}
