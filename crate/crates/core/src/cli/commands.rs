use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::data::{SurveyDataset, ValidationReport, Violation};
use crate::dist::rng_stream;
use crate::error::{Error, Result};
use crate::fit::{default_prior, fit_model};
use crate::model::CodingSpec;
use crate::sim::run_scenario;

use super::args::{Profile, RunConfig};
use super::chain_io::{read_chain_file, write_chain_file};
use super::plot::{patterns_svg, probabilities_svg};
use super::report::{
    metrics_markdown, replicates_csv, summary_report, Diagnostics, ProbitDiagnostics, RunRecord, SummaryReport,
};

pub const CHAIN_FILE: &str = "chain.csv";
pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const PATTERNS_FILE: &str = "patterns.svg";
pub const PROBABILITIES_FILE: &str = "probabilities.svg";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::invalid(format!("output directory {} is not writable: {e}", dir.display())))
}

/// Reads and validates the input; any problem is written to `validation.json`
/// and returned as a validation error.
fn load_dataset(rc: &RunConfig) -> Result<SurveyDataset> {
    let input = rc.input.as_ref().ok_or_else(|| Error::invalid("no input CSV given"))?;
    let report_path = rc.out.join(VALIDATION_FILE);
    let fail = |report: ValidationReport| -> Error {
        if let Err(e) = write_json(&report_path, &report) {
            return e;
        }
        Error::Validation(report)
    };
    let shape = |message: String| ValidationReport { violations: vec![Violation::Shape { message }] };
    let mut ds = match SurveyDataset::read_csv(input, None) {
        Ok(ds) => ds,
        Err(Error::Validation(report)) => return Err(fail(report)),
        Err(e) => return Err(fail(shape(e.to_string()))),
    };
    match rc.levels.len() {
        0 => {}
        1 => ds.item_levels = vec![rc.levels[0]; ds.n_items],
        l if l == ds.n_items => ds.item_levels = rc.levels.clone(),
        l => return Err(fail(shape(format!("{l} level counts given for {} items", ds.n_items)))),
    }
    let report = ds.validate();
    if !report.is_empty() {
        return Err(fail(report));
    }
    if report_path.exists() {
        fs::remove_file(&report_path)?;
    }
    Ok(ds)
}

fn write_plots(dir: &Path, summary: &SummaryReport) -> Result<()> {
    fs::write(dir.join(PATTERNS_FILE), patterns_svg(summary))?;
    fs::write(dir.join(PROBABILITIES_FILE), probabilities_svg(summary))?;
    Ok(())
}

fn print_probabilities(summary: &SummaryReport) {
    for p in &summary.outcome_probabilities {
        let iv = &p.probability;
        println!(
            "P(y=1 | class {}, {}) = {:.4} [{:.4}, {:.4}]",
            p.class, p.profile, iv.median, iv.lower, iv.upper
        );
    }
}

/// Fits the configured model and writes the run directory.
pub fn cmd_fit(rc: &RunConfig) -> Result<SummaryReport> {
    ensure_out_dir(&rc.out)?;
    rc.mcmc.validate()?;
    let ds = load_dataset(rc)?;
    for text in &rc.profiles {
        let p = Profile::parse(text)?;
        p.covariates(&ds.covariate_names)?;
    }
    let coding = CodingSpec::full(1, ds.n_covariates);
    let prior = default_prior(&ds, &coding, &rc.mcmc);
    let start = Instant::now();
    let fit = fit_model(&ds, rc.model, &coding, &prior, &rc.mcmc, &mut rng_stream(rc.mcmc.seed, 0))?;
    let elapsed_secs = start.elapsed().as_secs_f64();

    let chain_path = rc.out.join(CHAIN_FILE);
    write_chain_file(&chain_path, &fit.chain.draws)?;
    let run = RunRecord {
        model: rc.model,
        input: rc.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        n: ds.n,
        item_levels: ds.item_levels.clone(),
        covariate_names: ds.covariate_names.clone(),
        coding: coding.with_k(fit.k_hat),
        config: rc.mcmc.clone(),
        k_hat: fit.k_hat,
        adjusted: fit.adjustment.as_ref().is_some_and(|a| a.applied),
        profiles: rc.profiles.clone(),
        probit: fit.probit.clone(),
    };
    write_json(&rc.out.join(RUN_FILE), &run)?;

    // Summaries always come from the stored chain, so `summarize` reproduces them exactly.
    let draws = read_chain_file(&chain_path)?;
    let summary = summary_report(&run, &draws, &rc.profiles)?;
    write_json(&rc.out.join(SUMMARY_FILE), &summary)?;

    let diagnostics = Diagnostics {
        model: rc.model,
        adaptive: fit.adaptive.clone(),
        n_draws: fit.chain.n_draws(),
        elapsed_secs,
        adjustment: fit.adjustment.clone(),
        unadjusted_xi: fit.unadjusted_summary.as_ref().map(|s| s.xi.clone()),
        probit: fit.probit.as_ref().map(|p| ProbitDiagnostics {
            iterations: p.iterations,
            gradient_norm: p.gradient_norm,
            df: p.df,
        }),
    };
    write_json(&rc.out.join(DIAGNOSTICS_FILE), &diagnostics)?;
    if rc.plot {
        write_plots(&rc.out, &summary)?;
    }
    print_probabilities(&summary);
    Ok(summary)
}

/// Rebuilds summary.json (and figures when `plot`) from `dir` without refitting.
/// `profiles` replaces the recorded ones when given.
pub fn cmd_summarize(dir: &Path, profiles: Option<&[String]>, plot: bool) -> Result<SummaryReport> {
    let run: RunRecord = read_json(&dir.join(RUN_FILE))?;
    let draws = read_chain_file(&dir.join(CHAIN_FILE))?;
    let profiles = profiles.unwrap_or(&run.profiles);
    let summary = summary_report(&run, &draws, profiles)?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    if plot {
        write_plots(dir, &summary)?;
    }
    print_probabilities(&summary);
    Ok(summary)
}

/// Runs a scenario and writes metrics.json, replicates.csv and metrics.md.
pub fn cmd_simulate(rc: &RunConfig) -> Result<PathBuf> {
    let spec = rc.scenario.as_ref().ok_or_else(|| Error::invalid("no scenario configured"))?;
    ensure_out_dir(&rc.out)?;
    let output = run_scenario(spec, &rc.models, &rc.mcmc)?;
    write_json(&rc.out.join("metrics.json"), &output.report)?;
    fs::write(rc.out.join("replicates.csv"), replicates_csv(&output.records)?)?;
    let md = metrics_markdown(&output.report);
    fs::write(rc.out.join("metrics.md"), &md)?;
    print!("{md}");
    Ok(rc.out.clone())
}
