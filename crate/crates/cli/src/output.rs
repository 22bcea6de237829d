//! Per-ε CSV time series and the study JSON.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use kinetic_lab::entropy::{EntropyReport, RESIDUAL_NAMES};
use kinetic_lab::study::{EpsilonRun, StudySummary, SCHEMA_VERSION};

/// Scalar columns ahead of the residuals, each named after its report field.
pub const SCALAR_COLUMNS: [&str; 23] = [
    "time",
    "epsilon",
    "H_over_eps2",
    "H_kinetic",
    "H_fluid",
    "split_defect",
    "quad_approx",
    "quad_error",
    "dissipation_budget",
    "dissipation_surrogate",
    "flux_budget",
    "convection",
    "convection_bound",
    "gradient_sup",
    "convection_constant",
    "gronwall_integral",
    "closure_defect",
    "ibp_defect",
    "avbv_defect",
    "bgl_slack_min",
    "majorant",
    "budget_slack",
    "R_7",
];

pub fn header() -> Vec<String> {
    SCALAR_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(RESIDUAL_NAMES.iter().filter(|n| **n != "R_7").map(|s| s.to_string()))
        .collect()
}

fn row(r: &EntropyReport) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out: Vec<String> = [
        r.time,
        r.epsilon,
        r.h_over_eps2,
        r.h_split.0,
        r.h_split.1,
        r.split_defect,
        r.quad_approx,
        r.quad_error,
        r.dissipation_budget,
    ]
    .iter()
    .map(|v| v.to_string())
    .collect();
    out.push(u8::from(r.dissipation_surrogate).to_string());
    for v in [
        r.flux_budget,
        r.convection,
        r.convection_bound,
        r.gradient_sup,
        r.convection_constant,
        r.gronwall_integral,
        r.closure_defect,
        r.ibp_defect,
        r.avbv_defect,
    ] {
        out.push(v.to_string());
    }
    out.push(opt(r.bgl_slack_min));
    out.push(r.majorant.to_string());
    out.push(r.budget_slack.to_string());
    out.push(opt(r.residual("R_7")));
    for n in RESIDUAL_NAMES.iter().filter(|n| **n != "R_7") {
        out.push(opt(r.residual(n)));
    }
    out
}

pub fn csv_name(epsilon: f64) -> String {
    format!("report_eps_{epsilon}.csv")
}

pub fn write_csv(path: &Path, reports: &[EntropyReport]) -> io::Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "# kinetic-lab entropy report, schema {SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header())?;
    for r in reports {
        w.write_record(row(r))?;
    }
    w.flush()
}

pub fn write_all(dir: &Path, runs: &[EpsilonRun], summary: &StudySummary) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in runs {
        let p = dir.join(csv_name(r.epsilon));
        write_csv(&p, &r.reports)?;
        written.push(p);
    }
    let p = dir.join("summary.json");
    let mut f = File::create(&p)?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_names_are_unique_and_cover_every_residual() {
        let h = header();
        assert_eq!(h.len(), SCALAR_COLUMNS.len() + RESIDUAL_NAMES.len() - 1);
        let set: std::collections::BTreeSet<&String> = h.iter().collect();
        assert_eq!(set.len(), h.len());
        assert!(RESIDUAL_NAMES.iter().all(|n| h.iter().any(|c| c == n)));
    }
}
