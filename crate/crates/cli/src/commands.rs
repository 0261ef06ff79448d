use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use scatter_reversal::engine::run_experiment;
use scatter_reversal::tomography::run_tomography;
use serde::Serialize;

use crate::manifest::{set_param, Analysis, Manifest};
use crate::records::{read_records, write_records, RecordRow};
use crate::summary::{summarize, Filter, FringeSummary, Summary};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Runs the manifest: all twelve tomography settings when a tomography or
/// ellipsoid analysis is requested, otherwise the bare sequence.
pub fn run_rows(manifest: &Manifest) -> Result<Vec<RecordRow>> {
    let config = manifest.config();
    let seq = manifest.pulse_sequence()?;
    let corrected = seq.is_corrected();
    let rows = if manifest.wants(Analysis::needs_tomography) {
        run_tomography(&config, &seq)?
            .iter()
            .map(|(id, r)| RecordRow::from_shot(Some(*id), r, corrected))
            .collect()
    } else {
        run_experiment(&config, &seq)?
            .iter()
            .map(|r| RecordRow::from_shot(None, r, corrected))
            .collect()
    };
    Ok(rows)
}

fn out_dir(manifest: &Manifest) -> Result<PathBuf> {
    let dir = manifest.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

pub fn simulate(manifest: &Manifest, filter: Filter) -> Result<Summary> {
    let dir = out_dir(manifest)?;
    let rows = run_rows(manifest)?;
    let records = dir.join(RECORDS_FILE);
    write_records(&records, &rows)?;
    let summary = summarize(manifest, &rows, filter, Some(&records))?;
    summary.write(&dir.join(SUMMARY_FILE))?;
    println!(
        "{} records -> {}, summary -> {}",
        rows.len(),
        records.display(),
        dir.join(SUMMARY_FILE).display()
    );
    if let Some(t) = &summary.tomography {
        println!("identity overlap ({}): {:.4}", t.filter, t.identity_overlap);
    }
    Ok(summary)
}

/// Process tomography from a records file, or from a fresh run of the manifest.
pub fn tomo(manifest: &Manifest, records: Option<&Path>, filter: Filter) -> Result<Summary> {
    let mut manifest = manifest.clone();
    for a in [Analysis::Tomography, Analysis::Ellipsoid] {
        if !manifest.analyses.contains(&a) {
            manifest.analyses.push(a);
        }
    }
    let dir = out_dir(&manifest)?;
    let rows = match records {
        Some(path) => read_records(path)?,
        None => run_rows(&manifest)?,
    };
    let summary = summarize(&manifest, &rows, filter, records)?;
    let path = dir.join(format!("tomo_{}.json", filter.to_string().to_lowercase()));
    summary.write(&path)?;
    let t = summary.tomography.as_ref().expect("requested");
    let e = summary.ellipsoid.as_ref().expect("requested");
    println!("filter: {filter}, records used: {}", t.records_used);
    println!("identity overlap: {:.4}", t.identity_overlap);
    println!("chi (real part):");
    for row in &t.chi_re {
        println!("  {:>8.4} {:>8.4} {:>8.4} {:>8.4}", row[0], row[1], row[2], row[3]);
    }
    println!(
        "ellipsoid semi-axes: {:.4} {:.4} {:.4}, center: {:.4} {:.4} {:.4}",
        e.semi_axes[0], e.semi_axes[1], e.semi_axes[2], e.center[0], e.center[1], e.center[2]
    );
    println!("summary -> {}", path.display());
    Ok(summary)
}

#[derive(Serialize)]
struct FringeRow {
    branch: String,
    harmonic: u32,
    bin_center: f64,
    count: u64,
    ups: u64,
    p_up: Option<f64>,
    model: f64,
}

pub fn ramsey(manifest: &Manifest) -> Result<Summary> {
    let seq = manifest.pulse_sequence()?;
    let Some(basis) = seq.scatter_basis else {
        bail!("sequence `{}` has no scattering block", seq.name);
    };
    if !seq.name.starts_with("ramsey") {
        bail!("`ramsey` needs a Ramsey sequence (ramsey_HV, ramsey_45 or an inline sequence named ramsey*), got `{}`", seq.name);
    }
    let mut manifest = manifest.clone();
    manifest.analyses.retain(|a| !a.needs_tomography());
    if !manifest.analyses.iter().any(|a| matches!(a, Analysis::Fringe(_))) {
        // one double fringe in the H/V basis, single fringes otherwise
        let m = if basis.theta == 0.0 { 2 } else { 1 };
        manifest.analyses.push(Analysis::Fringe(m));
    }

    let dir = out_dir(&manifest)?;
    let rows = run_rows(&manifest)?;
    let records = dir.join(RECORDS_FILE);
    write_records(&records, &rows)?;
    let summary = summarize(&manifest, &rows, Filter::Unconditioned, Some(&records))?;
    summary.write(&dir.join(SUMMARY_FILE))?;

    let table = dir.join("fringes.csv");
    let mut w = csv::Writer::from_path(&table).with_context(|| format!("creating {}", table.display()))?;
    for f in &summary.fringes {
        for b in &f.bins {
            w.serialize(FringeRow {
                branch: format!("{:?}", f.branch),
                harmonic: f.fit.harmonic,
                bin_center: b.center,
                count: b.count,
                ups: b.ups,
                p_up: (b.count > 0).then(|| b.p_up()),
                model: f.fit.evaluate(b.center),
            })?;
        }
    }
    w.flush().with_context(|| format!("writing {}", table.display()))?;

    for FringeSummary { branch, fit, .. } in &summary.fringes {
        println!(
            "branch {branch:?}: m={} offset {:.4} amplitude {:.4} phase {:.4} contrast {:.4}",
            fit.harmonic, fit.offset, fit.amplitude, fit.phase, fit.contrast
        );
    }
    println!("fringe table -> {}", table.display());
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    records: u64,
    v_fraction: f64,
    mean_attempts: f64,
    identity_overlap: Option<f64>,
    semi_axis_1: Option<f64>,
    semi_axis_2: Option<f64>,
    semi_axis_3: Option<f64>,
    fringe_contrast_v: Option<f64>,
    fringe_contrast_h: Option<f64>,
    entanglement_fidelity: Option<f64>,
    purity_v: Option<f64>,
    purity_h: Option<f64>,
}

impl SweepRow {
    fn new(param: &str, value: f64, s: &Summary) -> Self {
        let b = &s.branch_stats;
        let heralded = (b.v + b.h) as f64;
        let axis = |k: usize| s.ellipsoid.map(|e| e.semi_axes[k]);
        let contrast = |branch| {
            s.fringes.iter().find(|f| f.branch == branch).map(|f| f.fit.contrast)
        };
        Self {
            param: param.to_string(),
            value,
            records: b.records,
            v_fraction: if heralded > 0.0 { b.v as f64 / heralded } else { 0.0 },
            mean_attempts: b.mean_attempts,
            identity_overlap: s.tomography.as_ref().map(|t| t.identity_overlap),
            semi_axis_1: axis(0),
            semi_axis_2: axis(1),
            semi_axis_3: axis(2),
            fringe_contrast_v: contrast(scatter_reversal::scattering::Branch::V),
            fringe_contrast_h: contrast(scatter_reversal::scattering::Branch::H),
            entanglement_fidelity: s.entanglement_fidelity,
            purity_v: s.post_state_purity.map(|p| p.v),
            purity_h: s.post_state_purity.map(|p| p.h),
        }
    }
}

pub fn sweep(manifest: &Manifest, param: &str, grid: &[f64], filter: Filter) -> Result<Vec<Summary>> {
    if grid.is_empty() {
        bail!("the sweep grid is empty");
    }
    let dir = out_dir(manifest)?;
    let mut summaries = Vec::with_capacity(grid.len());
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut point = manifest.clone();
        set_param(&mut point, param, value).with_context(|| format!("{param} = {value}"))?;
        let records = run_rows(&point)?;
        let summary = summarize(&point, &records, filter, None)?;
        rows.push(SweepRow::new(param, value, &summary));
        summaries.push(summary);
    }

    let table = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&table).with_context(|| format!("creating {}", table.display()))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().with_context(|| format!("writing {}", table.display()))?;
    let json = dir.join("sweep.json");
    fs::write(&json, serde_json::to_string_pretty(&summaries)? + "\n")
        .with_context(|| format!("writing {}", json.display()))?;

    for row in &rows {
        let mut parts = vec![format!("V fraction {:.4}", row.v_fraction)];
        if let Some(o) = row.identity_overlap {
            parts.push(format!("identity overlap {o:.4}"));
        }
        if let (Some(v), Some(h)) = (row.purity_v, row.purity_h) {
            parts.push(format!("post-state purity V {v:.4} H {h:.4}"));
        }
        println!("{param} = {}: {}", row.value, parts.join(", "));
    }
    println!("sweep table -> {}", table.display());
    Ok(summaries)
}
