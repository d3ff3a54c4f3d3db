use std::fmt::Write as _;
use std::path::Path;

use super::config::fmt;
use super::{io_err, CliError};
use crate::analysis::{ConvergenceReport, OscillationReport, ProfileTable, SpatialReport};
use crate::solver::{PBProblem, SolveResult};

pub(super) fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn species_header(out: &mut String, prefix: &str, suffix: &str, count: usize) {
    for i in 0..count {
        let _ = write!(out, ",{prefix}{i}{suffix}");
    }
}

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let line: Vec<String> = values.into_iter().map(fmt).collect();
    out.push_str(&line.join(","));
    out.push('\n');
}

/// `phi, c0..cN, f, dfdphi`; limit tables get `_star` names and no derivative column.
pub(super) fn profile_csv(table: &ProfileTable, preamble: &str) -> String {
    let limit = table.map().lambda().is_none();
    let species = table.map().system().species();
    let mut out = preamble.to_string();
    out.push_str("phi");
    if limit {
        species_header(&mut out, "c", "_star", species);
        out.push_str(",f_star\n");
    } else {
        species_header(&mut out, "c", "", species);
        out.push_str(",f,dfdphi\n");
    }
    for r in table.rows() {
        let mut v = vec![r.phi];
        v.extend(&r.c);
        v.push(r.f);
        if !limit {
            v.push(r.df_dphi);
        }
        row(&mut out, v);
    }
    out
}

pub(super) fn solution_csv(prob: &PBProblem, sol: &SolveResult, spatial: &SpatialReport) -> String {
    let mut out = String::from("x,phi");
    species_header(&mut out, "c", "", sol.concentrations.len());
    out.push_str(",f_of_phi,spatial_dfdx\n");
    for (k, &x) in prob.grid().nodes().iter().enumerate() {
        let mut v = vec![x, sol.phi[k]];
        v.extend(sol.concentrations.iter().map(|c| c[k]));
        v.push(sol.f_nodes[k]);
        v.push(spatial.slope[k]);
        row(&mut out, v);
    }
    out
}

pub(super) fn converge_csv(report: &ConvergenceReport) -> String {
    let species = report.c_errors.first().map_or(0, Vec::len);
    let mut out = String::from("lambda,sup_phi_error");
    species_header(&mut out, "sup_c", "_error", species);
    out.push('\n');
    for (k, &l) in report.lambda_values.iter().enumerate() {
        let mut v = vec![l, report.sup_errors[k]];
        v.extend(&report.c_errors[k]);
        row(&mut out, v);
    }
    out
}

pub(super) fn oscillation_txt(report: &OscillationReport) -> String {
    let mut out = String::new();
    for (&phi, &slope) in report.extremum_locations.iter().zip(&report.extremum_slopes) {
        let _ = writeln!(out, "extremum phi={} dfdphi={}", fmt(phi), fmt(slope));
    }
    let _ = writeln!(out, "monotone={}", report.is_monotone);
    out
}
