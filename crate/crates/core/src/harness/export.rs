use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::campaign::{CampaignResult, FilterTrace, RunTrace};
use crate::channel::write_trace_csv;
use crate::error::Result;
use crate::gauss::GaussianBelief;
use crate::smc::write_diagnostics_csv;
use crate::Vector;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// `k, rmse_<component>...` for one filter.
pub fn write_rmse_csv<W: Write>(writer: W, result: &CampaignResult, filter: usize) -> Result<()> {
    let f = &result.filters[filter];
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["k".to_string()];
    header.extend(f.rmse.iter().map(|c| format!("rmse_{}", c.component)));
    w.write_record(&header)?;
    let steps = f.rmse.first().map_or(0, |c| c.per_step.len());
    for k in 0..steps {
        let mut row = vec![(k + 1).to_string()];
        row.extend(f.rmse.iter().map(|c| c.per_step[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `k, xhat_0.., diagP_0..` from Gaussian beliefs.
pub fn write_gaussian_csv<W: Write>(writer: W, beliefs: &[GaussianBelief]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = beliefs.first().map_or(0, |b| b.mean.len());
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|i| format!("xhat_{i}")));
    header.extend((0..n).map(|i| format!("diagP_{i}")));
    w.write_record(&header)?;
    for b in beliefs {
        let mut row = vec![b.step.to_string()];
        row.extend(b.mean.iter().map(|v| v.to_string()));
        row.extend(b.cov.diagonal().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `k, <prefix>_0..` for a state sequence starting at step `first`.
pub fn write_states_csv<W: Write>(writer: W, states: &[Vector], first: usize, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = states.first().map_or(0, |s| s.len());
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    w.write_record(&header)?;
    for (i, s) in states.iter().enumerate() {
        let mut row = vec![(first + i).to_string()];
        row.extend(s.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `rmse_<filter>.csv` per filter, `summary.json`, and `channel.csv` holding
/// the channel trace of run 0.
pub fn write_campaign(dir: &Path, result: &CampaignResult, run0: Option<&RunTrace>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in result.filters.iter().enumerate() {
        write_rmse_csv(create(&dir.join(format!("rmse_{}.csv", f.filter)))?, result, i)?;
    }
    let mut summary = create(&dir.join("summary.json"))?;
    summary.write_all(result.to_json()?.as_bytes())?;
    summary.write_all(b"\n")?;
    summary.flush()?;
    if let Some(run) = run0 {
        let nz = run.truth.measurements.first().map_or(0, |z| z.len());
        write_trace_csv(create(&dir.join("channel.csv"))?, &run.events, nz)?;
    }
    Ok(())
}

/// Per-step traces of one run: truth, channel, and each filter's estimates
/// (with `diagP` for the GAF and the delay diagnostics for the SMC).
pub fn write_run_traces(dir: &Path, run: &RunTrace, max_delay: usize) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let r = run.run;
    let mut written = Vec::new();
    let mut name = |s: String| {
        written.push(s.clone());
        dir.join(s)
    };
    write_states_csv(create(&name(format!("truth_run{r}.csv")))?, &run.truth.states, 0, "x")?;
    let nz = run.truth.measurements.first().map_or(0, |z| z.len());
    write_trace_csv(create(&name(format!("channel_run{r}.csv")))?, &run.events, nz)?;
    for (kind, out) in &run.filters {
        let Ok(out) = out else { continue };
        match &out.trace {
            FilterTrace::Gaf(t) => write_gaussian_csv(create(&name(format!("estimates_{kind}_run{r}.csv")))?, &t.beliefs)?,
            FilterTrace::Particle(t) => {
                write_states_csv(create(&name(format!("estimates_{kind}_run{r}.csv")))?, &t.estimates, 1, "xhat")?;
                if *kind == super::FilterKind::Smc {
                    write_diagnostics_csv(create(&name(format!("diagnostics_{kind}_run{r}.csv")))?, &t.steps, max_delay)?;
                }
            }
        }
    }
    Ok(written)
}
