//! Experiment report: one in-memory structure rendered three ways.
//! JSON is authoritative; CSV and markdown are derived views that never
//! recompute, only reformat stored values.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{mean, stddev};

pub const REPORT_VERSION: u32 = 1;

/// One measured (victim, attack, seed, target) cell. User-scenario runs
/// aggregate over companies per definition, so their rows carry no
/// target id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrRow {
    pub victim: String,
    pub attack: String,
    pub scenario: String,
    pub target_kind: String,
    pub injection_ratio: f64,
    pub seed: u64,
    pub target: Option<u32>,
    pub hr_before: f64,
    pub hr_after: f64,
    /// Absent iff `excluded` (zero pre-attack hit ratio).
    pub ir: Option<f64>,
    pub excluded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub victim: String,
    pub attack: String,
    pub row_count: usize,
    /// Mean of per-target IRs over non-excluded rows.
    pub mean_ir: Option<f64>,
    pub sd_ir: f64,
    pub excluded_count: usize,
    pub mean_hr_before: f64,
    pub mean_hr_after: f64,
    /// Alternative aggregation order: ratio of mean hit ratios.
    pub ir_of_mean_hr: Option<f64>,
    pub per_seed_mean_ir: Vec<(u64, Option<f64>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub victim: String,
    pub attack: String,
    pub seed: u64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// (after - before) / before.
    pub relative_shift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    /// Fully resolved configuration echo; a run is reproducible from it.
    pub config: serde_json::Value,
    pub rows: Vec<IrRow>,
    pub aggregates: Vec<Aggregate>,
    pub accuracy: Vec<AccuracyRow>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    /// Assemble a report: rows are sorted deterministically and
    /// aggregates derived per (victim, attack).
    pub fn assemble(
        config: serde_json::Value,
        mut rows: Vec<IrRow>,
        mut accuracy: Vec<AccuracyRow>,
        wall_clock_seconds: f64,
    ) -> Self {
        rows.sort_by(|a, b| {
            (&a.victim, &a.attack, a.seed, a.target).cmp(&(&b.victim, &b.attack, b.seed, b.target))
        });
        accuracy.sort_by(|a, b| {
            (&a.victim, &a.attack, a.seed).cmp(&(&b.victim, &b.attack, b.seed))
        });

        let mut keys: Vec<(String, String)> = rows
            .iter()
            .map(|r| (r.victim.clone(), r.attack.clone()))
            .collect();
        keys.sort();
        keys.dedup();

        let aggregates = keys
            .into_iter()
            .map(|(victim, attack)| {
                let group: Vec<&IrRow> = rows
                    .iter()
                    .filter(|r| r.victim == victim && r.attack == attack)
                    .collect();
                let included: Vec<f64> = group.iter().filter_map(|r| r.ir).collect();
                let excluded_count = group.iter().filter(|r| r.excluded).count();
                let hr_before: Vec<f64> = group.iter().map(|r| r.hr_before).collect();
                let hr_after: Vec<f64> = group.iter().map(|r| r.hr_after).collect();
                let mean_hr_before = mean(&hr_before);
                let mean_hr_after = mean(&hr_after);

                let mut seeds: Vec<u64> = group.iter().map(|r| r.seed).collect();
                seeds.sort_unstable();
                seeds.dedup();
                let per_seed_mean_ir = seeds
                    .into_iter()
                    .map(|seed| {
                        let vals: Vec<f64> = group
                            .iter()
                            .filter(|r| r.seed == seed)
                            .filter_map(|r| r.ir)
                            .collect();
                        let m = if vals.is_empty() { None } else { Some(mean(&vals)) };
                        (seed, m)
                    })
                    .collect();

                Aggregate {
                    victim,
                    attack,
                    row_count: group.len(),
                    mean_ir: if included.is_empty() {
                        None
                    } else {
                        Some(mean(&included))
                    },
                    sd_ir: stddev(&included),
                    excluded_count,
                    mean_hr_before,
                    mean_hr_after,
                    ir_of_mean_hr: if mean_hr_before > 0.0 {
                        Some(mean_hr_after / mean_hr_before)
                    } else {
                        None
                    },
                    per_seed_mean_ir,
                }
            })
            .collect();

        ExperimentReport {
            version: REPORT_VERSION,
            config,
            rows,
            aggregates,
            accuracy,
            wall_clock_seconds,
        }
    }

    pub fn aggregate(&self, victim: &str, attack: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.victim == victim && a.attack == attack)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<ExperimentReport> {
        let report: ExperimentReport = serde_json::from_str(text)?;
        if report.version != REPORT_VERSION {
            return Err(Error::Config(format!(
                "report version {} unsupported (expected {REPORT_VERSION})",
                report.version
            )));
        }
        Ok(report)
    }

    /// Flat per-row CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "victim,attack,target_kind,injection_ratio,seed,hr_before,hr_after,ir,excluded\n",
        );
        for r in &self.rows {
            let ir = r.ir.map(|v| format!("{v}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.victim,
                r.attack,
                r.target_kind,
                r.injection_ratio,
                r.seed,
                r.hr_before,
                r.hr_after,
                ir,
                r.excluded
            );
        }
        out
    }

    /// Markdown tables: per victim, one row per (target kind, injection
    /// ratio), one IR column per attack, straight from the aggregates.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Attack experiment report\n");

        let mut victims: Vec<&str> = self.aggregates.iter().map(|a| a.victim.as_str()).collect();
        victims.sort();
        victims.dedup();
        let mut attacks: Vec<&str> = self.aggregates.iter().map(|a| a.attack.as_str()).collect();
        attacks.sort();
        attacks.dedup();

        for victim in victims {
            let _ = writeln!(out, "\n## Victim: {victim}\n");
            let mut shapes: Vec<(String, f64)> = self
                .rows
                .iter()
                .filter(|r| r.victim == victim)
                .map(|r| (r.target_kind.clone(), r.injection_ratio))
                .collect();
            shapes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            shapes.dedup();

            let mut header = String::from("| Target | Injection |");
            let mut rule = String::from("|---|---|");
            for attack in &attacks {
                let _ = write!(header, " {attack} (mean IR@k) |");
                rule.push_str("---|");
            }
            let _ = writeln!(out, "{header}");
            let _ = writeln!(out, "{rule}");

            for (kind, ratio) in shapes {
                let mut line = format!("| {kind} | {:.2}% |", ratio * 100.0);
                for attack in &attacks {
                    let cell = self
                        .aggregate(victim, attack)
                        .and_then(|a| a.mean_ir)
                        .map(|v| format!("{v:.2}"))
                        .unwrap_or_else(|| "-".to_string());
                    let _ = write!(line, " {cell} |");
                }
                let _ = writeln!(out, "{line}");
            }

            let excluded: usize = self
                .aggregates
                .iter()
                .filter(|a| a.victim == victim)
                .map(|a| a.excluded_count)
                .sum();
            if excluded > 0 {
                let _ = writeln!(
                    out,
                    "\nExcluded rows (zero pre-attack hit ratio): {excluded}"
                );
            }
        }

        if !self.accuracy.is_empty() {
            let _ = writeln!(out, "\n## Prediction accuracy\n");
            let _ = writeln!(
                out,
                "| Victim | Attack | Seed | Before | After | Shift |\n|---|---|---|---|---|---|"
            );
            for a in &self.accuracy {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.4} | {:.4} | {:+.2}% |",
                    a.victim,
                    a.attack,
                    a.seed,
                    a.accuracy_before,
                    a.accuracy_after,
                    a.relative_shift * 100.0
                );
            }
        }
        let _ = writeln!(out, "\nWall clock: {:.1}s", self.wall_clock_seconds);
        out
    }
}
