//! Writes a [`RunRecord`] as CSV tables, SVG plots and a config echo.
//!
//! Wall times are written as `NA` unless `record_timing` is set, so two runs
//! of the same config produce identical files.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::Experiment;
use crate::metrics::fmt_float;
use crate::plot::{render, Panel, Series};
use crate::presets::OperatorKind;
use crate::runs::{
    start_label, CellRecord, RunRecord, ADP_EARLY_STOPPED, ADP_IFT, ADP_IVANOV, ADP_LIMIT,
    ADP_START, DIP_LISTA_INF, TIKHONOV_BEST,
};

pub const METRICS_HEADER: [&str; 9] = [
    "method",
    "preset",
    "operator",
    "alpha1",
    "alpha2",
    "l2_error",
    "psnr",
    "iterations",
    "wall_ms",
];

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
}

fn write_metrics(record: &RunRecord, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "metrics.csv")?;
    w.write_record(METRICS_HEADER)?;
    let timing = record.config.record_timing;
    for cell in &record.cells {
        let preset = cell.id();
        let op = cell.instance.cell.operator.name();
        for run in &cell.runs {
            let wall = if timing {
                format!("{:.3}", run.wall_ms)
            } else {
                "NA".into()
            };
            w.write_record([
                run.method.clone(),
                preset.clone(),
                op.into(),
                fmt_float(run.alpha1),
                fmt_float(run.alpha2),
                fmt_float(run.metrics.l2_error),
                fmt_float(run.metrics.psnr),
                run.iterations.to_string(),
                wall,
            ])?;
        }
        for failure in &cell.failures {
            if failure.method.starts_with("sweep(") {
                continue;
            }
            w.write_record([
                failure.method.as_str(),
                &preset,
                op,
                "NA",
                "NA",
                "NA",
                "NA",
                "NA",
                "NA",
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn signal_column(cell: &CellRecord, name: &str) -> String {
    format!("{}/{}", cell.id(), name)
}

/// Every plotted signal as one column, sampled on the common grid.
fn write_signals(record: &RunRecord, dir: &Path) -> Result<()> {
    let Some(first) = record.cells.first() else {
        return Ok(());
    };
    let grid = first.instance.truth.grid();
    let mut header = vec!["t".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for cell in &record.cells {
        let inst = &cell.instance;
        for (name, sig) in [("truth", &inst.truth), ("data", &inst.data)] {
            header.push(signal_column(cell, name));
            columns.push(sig.samples().to_vec());
        }
        for run in &cell.runs {
            header.push(signal_column(cell, &run.method));
            columns.push(run.solution.samples().to_vec());
        }
    }
    let mut w = writer(dir, "signals.csv")?;
    w.write_record(&header)?;
    for (i, t) in grid.iter().enumerate() {
        let mut row = vec![fmt_float(*t)];
        row.extend(columns.iter().map(|c| fmt_float(c[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_traces(record: &RunRecord, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "traces.csv")?;
    w.write_record(["preset", "method", "k", "loss", "residual", "l2_error"])?;
    for cell in &record.cells {
        for trace in &cell.traces {
            for k in 0..trace.loss.len() {
                let at = |v: &Vec<f64>| v.get(k).map(|x| fmt_float(*x)).unwrap_or("NA".into());
                w.write_record([
                    cell.id(),
                    trace.method.clone(),
                    k.to_string(),
                    at(&trace.loss),
                    at(&trace.residual),
                    at(&trace.l2_error),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_sweep(record: &RunRecord, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "sweep.csv")?;
    w.write_record([
        "preset",
        "operator",
        "alpha1",
        "alpha2",
        "l2_error",
        "psnr",
        "multiplier",
        "selected",
    ])?;
    for cell in &record.cells {
        for row in &cell.sweep {
            w.write_record([
                cell.id(),
                cell.instance.cell.operator.name().into(),
                fmt_float(row.alpha1),
                fmt_float(row.alpha2),
                fmt_float(row.l2_error),
                fmt_float(row.psnr),
                fmt_float(row.multiplier),
                row.selected.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_distances(record: &RunRecord, dir: &Path) -> Result<()> {
    let path = dir.join("distances.csv");
    let mut file =
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    if record.experiment == Experiment::Initvals {
        let cfg = &record.config;
        writeln!(file, "# seed = {}", cfg.seed)?;
        writeln!(file, "# preset = {}", cfg.preset)?;
        writeln!(file, "# perturbation = {}", cfg.initvals.perturbation)?;
        writeln!(
            file,
            "# perturbed_starts = {}",
            cfg.initvals.perturbed_starts
        )?;
        for (k, v) in &record.summary {
            writeln!(file, "# {k} = {v}")?;
        }
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["preset", "method_a", "method_b", "distance"])?;
    for d in &record.distances {
        w.write_record([
            d.cell.clone(),
            d.method_a.clone(),
            d.method_b.clone(),
            fmt_float(d.distance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(record: &RunRecord, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "summary.csv")?;
    w.write_record(["key", "value"])?;
    for cell in &record.cells {
        w.write_record([
            format!("{}/data_psnr", cell.id()),
            fmt_float(cell.instance.data_psnr),
        ])?;
    }
    for (k, v) in &record.summary {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

fn write_failures(record: &RunRecord, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "failures.csv")?;
    w.write_record(["preset", "method", "message"])?;
    for cell in &record.cells {
        for f in &cell.failures {
            w.write_record([cell.id(), f.method.clone(), f.message.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn grid_xs(cell: &CellRecord) -> Vec<f64> {
    cell.instance.truth.grid().to_vec()
}

fn signal_series(cell: &CellRecord, method: &str, dashed: bool) -> Option<Series> {
    let run = cell.run(method)?;
    let s = Series::new(method, grid_xs(cell), run.solution.samples().to_vec());
    Some(if dashed { s.dashed() } else { s })
}

fn truth_series(cell: &CellRecord) -> Series {
    Series::new(
        "truth",
        grid_xs(cell),
        cell.instance.truth.samples().to_vec(),
    )
}

fn figure1_plot(record: &RunRecord) -> Option<String> {
    let cell = record.cells.first()?;
    let mut overlay =
        Panel::new(format!("{}: reconstructions", cell.id())).with(truth_series(cell));
    for m in [ADP_START, ADP_EARLY_STOPPED, ADP_LIMIT, TIKHONOV_BEST] {
        overlay = overlay.with(signal_series(cell, m, m == TIKHONOV_BEST)?);
    }
    let mut errors = Panel::new("L2 error along the ADP descent");
    if let Some(trace) = cell.traces.iter().find(|t| t.method == ADP_IFT) {
        let ks: Vec<f64> = (0..trace.l2_error.len()).map(|k| k as f64).collect();
        errors = errors.with(Series::new(
            "adp iterate",
            ks.clone(),
            trace.l2_error.clone(),
        ));
        if let Some(tik) = cell.run(TIKHONOV_BEST) {
            let level = vec![tik.metrics.l2_error; ks.len()];
            errors = errors.with(Series::new(TIKHONOV_BEST, ks, level).dashed());
        }
    }
    Some(render(
        "ADP descent against Tikhonov",
        &[overlay, errors],
        2,
    ))
}

fn grid_plot(record: &RunRecord, op: OperatorKind) -> Option<String> {
    let cells: Vec<&CellRecord> = record
        .cells
        .iter()
        .filter(|c| c.instance.cell.operator == op)
        .collect();
    if cells.is_empty() {
        return None;
    }
    let mut panels = Vec::new();
    for cell in cells {
        let inst = &cell.instance;
        let xs = grid_xs(cell);
        panels.push(
            Panel::new(format!("{}: data", cell.id()))
                .with(Series::new(
                    "data",
                    xs.clone(),
                    inst.data.samples().to_vec(),
                ))
                .with(Series::new("exact data", xs, inst.clean.samples().to_vec()).dashed()),
        );
        let mut adp = Panel::new(format!("{}: ADP", cell.id())).with(truth_series(cell));
        let mut dip = Panel::new(format!("{}: DIP", cell.id())).with(truth_series(cell));
        if let Some(s) = signal_series(cell, ADP_IVANOV, false) {
            adp = adp.with(s.clone());
            dip = dip.with(s.dashed());
        }
        if let Some(s) = signal_series(cell, ADP_IFT, false) {
            adp = adp.with(s);
        }
        for run in cell
            .runs
            .iter()
            .filter(|r| r.method.starts_with("dip_lista"))
        {
            if let Some(s) = signal_series(cell, &run.method, false) {
                dip = dip.with(s);
            }
        }
        panels.push(adp);
        panels.push(dip);
    }
    Some(render(
        &format!("Method comparison, {} operator", op.name()),
        &panels,
        3,
    ))
}

fn initvals_plot(record: &RunRecord) -> Option<String> {
    if record.cells.is_empty() {
        return None;
    }
    let mut panels = Vec::new();
    for cell in &record.cells {
        for method in [ADP_IFT, DIP_LISTA_INF] {
            let mut panel = Panel::new(format!("{}: {method}", cell.id())).with(truth_series(cell));
            if let Some(s) = signal_series(cell, ADP_IVANOV, true) {
                panel = panel.with(s);
            }
            let mut j = 0;
            while let Some(s) = signal_series(cell, &start_label(method, j), false) {
                panel = panel.with(s);
                j += 1;
            }
            panels.push(panel);
        }
    }
    Some(render("Dependence on the initial operator", &panels, 2))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes all artifacts of `record` into `dir`, creating it if needed.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_text(dir, "config.toml", &record.config.to_toml_string()?)?;
    write_metrics(record, dir)?;
    write_signals(record, dir)?;
    write_traces(record, dir)?;
    write_sweep(record, dir)?;
    write_distances(record, dir)?;
    write_summary(record, dir)?;
    write_failures(record, dir)?;
    match record.experiment {
        Experiment::Figure1 => {
            if let Some(svg) = figure1_plot(record) {
                write_text(dir, "figure1.svg", &svg)?;
            }
        }
        Experiment::Grid => {
            for op in OperatorKind::ALL {
                if let Some(svg) = grid_plot(record, op) {
                    write_text(dir, &format!("grid_{}.svg", op.name()), &svg)?;
                }
            }
        }
        Experiment::Initvals => {
            if let Some(svg) = initvals_plot(record) {
                write_text(dir, "initvals.svg", &svg)?;
            }
        }
    }
    Ok(())
}
