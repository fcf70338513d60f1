//! File formats. Every CSV starts with a `# schema=...` comment line and
//! writes reals with 17 significant digits.

use std::fs;
use std::path::Path;

use chainsolve::{Method, ModelConfig, PartnerChoice, PriceFunction64, Solution64, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRICE_SCHEMA: &str = "chainsolve.price/v1";
pub const POLICY_SCHEMA: &str = "chainsolve.policy/v1";
pub const SUMMARY_SCHEMA: &str = "chainsolve.summary/v1";
pub const COMPARE_SCHEMA: &str = "chainsolve.compare/v1";

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_text(comment: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut out = format!("# {comment}\n").into_bytes();
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        let to_err = |e: csv::Error| CliError::Io(e.to_string());
        writer.write_record(header).map_err(to_err)?;
        for row in rows {
            writer.write_record(&row).map_err(to_err)?;
        }
        writer.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn price_csv(solution: &Solution64) -> Result<String, CliError> {
    let price = &solution.price;
    let comment = format!(
        "schema={PRICE_SCHEMA} method={} variant={} m={}",
        solution.method.name(),
        variant_name(solution.variant()),
        price.grid_size()
    );
    let rows = (0..=price.grid_size()).map(|i| vec![real(price.stage(i)), real(price.values()[i])]);
    csv_text(&comment, &["s", "p"], rows)
}

pub fn policy_csv(solution: &Solution64) -> Result<String, CliError> {
    let policy = &solution.policy;
    let m = solution.grid_size();
    let choice_column = match solution.variant() {
        Variant::Deterministic => "k_star",
        Variant::Stochastic => "lambda_star",
    };
    let comment = format!(
        "schema={POLICY_SCHEMA} method={} variant={} m={m}",
        solution.method.name(),
        variant_name(solution.variant())
    );
    let rows = (0..=m).map(|i| {
        let choice = match policy.choice(i) {
            PartnerChoice::Count(k) => k.to_string(),
            PartnerChoice::Effort(l) => real(l),
        };
        vec![real(solution.price.stage(i)), real(policy.t_star(i)), choice]
    });
    csv_text(&comment, &["s", "t_star", choice_column], rows)
}

pub fn variant_name(variant: Variant) -> &'static str {
    match variant {
        Variant::Deterministic => "deterministic",
        Variant::Stochastic => "stochastic",
    }
}

/// Run metadata next to the CSVs. Timing goes to stderr instead so that
/// identical runs write identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub model: ModelConfig,
    pub m: usize,
    pub method: Method,
    pub variant: Variant,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual: f64,
    pub price_at_one: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

impl Summary {
    pub fn new(model: ModelConfig, solution: &Solution64, status: SolveStatus, warnings: Vec<String>) -> Self {
        Self {
            schema: SUMMARY_SCHEMA.to_owned(),
            model,
            m: solution.grid_size(),
            method: solution.method,
            variant: solution.variant(),
            status,
            iterations: solution.iterations,
            residual: solution.residual,
            price_at_one: *solution.price.values().last().expect("nonempty grid"),
            warnings,
        }
    }
}

/// Shared-grid table with one price column per model variant.
pub fn compare_csv(labels: &[String], prices: &[PriceFunction64], method: Method, variant: Variant) -> Result<String, CliError> {
    let m = prices[0].grid_size();
    let comment = format!(
        "schema={COMPARE_SCHEMA} method={} variant={} m={m}",
        method.name(),
        variant_name(variant)
    );
    let mut header = vec!["s"];
    header.extend(labels.iter().map(String::as_str));
    let rows = (0..=m).map(|i| {
        let mut row = vec![real(prices[0].stage(i))];
        row.extend(prices.iter().map(|p| real(p.values()[i])));
        row
    });
    csv_text(&comment, &header, rows)
}
