//! Running scenarios and sweeps to disk, and turning result directories into
//! plot-ready CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{export, ExportFormat, RunResults};
use crate::scenario::{load_scenario, presets, Scenario};
use crate::transport::log::write_events_csv;
use crate::world::{World, WorldOutput};

/// Overrides the default output root `results/`.
pub const OUT_ENV: &str = "RLCSIM_OUT";

pub fn output_root(cli: Option<&Path>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

pub fn simulate(s: &Scenario) -> Result<WorldOutput> {
    let cfg = s.world_config()?;
    let mut out = World::new(cfg)?.run();
    out.results.run.config_hash = s.config_hash();
    out.results.run.scenario = s.name.clone();
    Ok(out)
}

pub fn run_dir_name(s: &Scenario) -> String {
    format!("{}-{}-seed{}", s.name, &s.config_hash()[..12], s.seed)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

pub fn write_run(dir: &Path, s: &Scenario, out: &WorldOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("results.json"), export(&out.results, ExportFormat::Json)?)?;
    fs::write(dir.join("results.csv"), export(&out.results, ExportFormat::Csv)?)?;
    fs::write(dir.join("scenario.toml"), toml::to_string(s)?)?;
    for (i, f) in out.flows.iter().enumerate() {
        if !f.transport_events.is_empty() {
            write_events_csv(&f.transport_events, create(&dir.join(format!("flow{i}_events.csv")))?)?;
        }
        let mut w = csv::Writer::from_writer(create(&dir.join(format!("flow{i}_timeline.csv")))?);
        for row in &f.timeline {
            w.serialize(row)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(create(&dir.join(format!("flow{i}_rates.csv")))?);
        w.write_record(["t_us", "throughput_bps", "goodput_bps"])?;
        for ((t, tp), (_, gp)) in f.throughput.samples.iter().zip(&f.goodput.samples) {
            w.write_record([t.as_micros().to_string(), tp.to_string(), gp.to_string()])?;
        }
        w.flush()?;

        if !f.queue_events.is_empty() {
            let mut w = csv::Writer::from_writer(create(&dir.join(format!("flow{i}_queue.csv")))?);
            w.write_record(["t_us", "event", "seq", "size", "occupancy", "qdelay_us"])?;
            for e in &f.queue_events {
                w.write_record([
                    e.t.as_micros().to_string(),
                    e.kind.as_str().to_string(),
                    e.seq.to_string(),
                    e.size.to_string(),
                    e.occupancy.to_string(),
                    e.qdelay.map(|q| q.as_micros().to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
        if !f.qoe_log.is_empty() {
            let mut w = csv::Writer::from_writer(create(&dir.join(format!("flow{i}_qoe.csv")))?);
            w.write_record(["segment_idx", "level", "vmaf", "download_ms", "buffer_ms_after", "stall_ms_during"])?;
            for r in &f.qoe_log {
                w.write_record([
                    r.segment_idx.to_string(),
                    r.level.to_string(),
                    r.vmaf.to_string(),
                    r.download_ms.to_string(),
                    r.buffer_ms_after.to_string(),
                    r.stall_ms_during.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Simulates `s` and writes everything under `root/<name>-<hash>-seed<seed>/`.
pub fn run_to_dir(s: &Scenario, root: &Path) -> Result<(PathBuf, WorldOutput)> {
    let out = simulate(s)?;
    let dir = root.join(run_dir_name(s));
    write_run(&dir, s, &out)?;
    Ok((dir, out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    name: String,
    #[serde(default)]
    base_preset: Option<String>,
    #[serde(default)]
    base_file: Option<PathBuf>,
    #[serde(default)]
    base: Option<toml::Table>,
    /// Merged into the base before the axis is applied.
    #[serde(default)]
    base_patch: Option<toml::Table>,
    axis: String,
    values: Vec<toml::Value>,
    #[serde(default = "default_tolerance")]
    goodput_tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub name: String,
    /// Fully defaulted base scenario.
    pub base: toml::Table,
    /// Dotted key path; empty means the value is a table merged at the root.
    pub axis: String,
    pub values: Vec<toml::Value>,
    pub goodput_tolerance: f64,
    base_dir: Option<PathBuf>,
}

fn merge(dst: &mut toml::Value, src: toml::Value) {
    match (dst, src) {
        (toml::Value::Table(d), toml::Value::Table(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

impl Sweep {
    pub fn from_toml_str(src: &str, file_dir: Option<&Path>) -> Result<Self> {
        let f: SweepFile = toml::from_str(src)?;
        let (base_src, base_dir): (String, Option<PathBuf>) = match (&f.base_preset, &f.base_file, &f.base) {
            (Some(p), None, None) => (
                presets::scenario_source(p)
                    .with_context(|| format!("unknown base preset {p:?}"))?
                    .to_string(),
                None,
            ),
            (None, Some(p), None) => {
                let p = file_dir.map_or_else(|| p.clone(), |d| d.join(p));
                let src = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                (src, p.parent().map(Path::to_path_buf))
            }
            (None, None, Some(t)) => (toml::to_string(t)?, file_dir.map(Path::to_path_buf)),
            _ => bail!("sweep needs exactly one of base_preset, base_file or [base]"),
        };
        if f.values.is_empty() {
            bail!("sweep values must not be empty");
        }
        let mut base = toml::Value::Table(toml::from_str(&base_src)?);
        if let Some(patch) = f.base_patch {
            merge(&mut base, toml::Value::Table(patch));
        }
        // Round-trip through Scenario so defaults are filled in and paths can be checked.
        let full: Scenario = base.clone().try_into().context("sweep base")?;
        full.validate()?;
        let toml::Value::Table(base) = toml::Value::try_from(&full)? else {
            unreachable!("scenario serializes to a table")
        };
        let sweep = Sweep {
            name: f.name,
            base,
            axis: f.axis,
            values: f.values,
            goodput_tolerance: f.goodput_tolerance,
            base_dir,
        };
        sweep.check_axis()?;
        Ok(sweep)
    }

    fn check_axis(&self) -> Result<()> {
        if self.axis.is_empty() {
            if let Some(v) = self.values.iter().find(|v| !v.is_table()) {
                bail!("axis \"\" merges at the root, so every value must be a table (got {v})");
            }
            return Ok(());
        }
        let keys: Vec<&str> = self.axis.split('.').collect();
        let mut cur = &self.base;
        for (depth, k) in keys.iter().enumerate() {
            let last = depth + 1 == keys.len();
            match cur.get(*k) {
                Some(toml::Value::Table(t)) if !last => cur = t,
                Some(_) if last => return Ok(()),
                // Optional keys are absent until set; a typo is caught when the run is parsed.
                None if last => return Ok(()),
                _ => bail!("axis {:?} does not resolve in the base scenario at {k:?}", self.axis),
            }
        }
        Ok(())
    }

    pub fn scenario(&self, index: usize) -> Result<Scenario> {
        let mut v = toml::Value::Table(self.base.clone());
        let value = self.values[index].clone();
        if self.axis.is_empty() {
            merge(&mut v, value);
        } else {
            let mut patch = value;
            for k in self.axis.rsplit('.') {
                let mut t = toml::Table::new();
                t.insert(k.to_string(), patch);
                patch = toml::Value::Table(t);
            }
            merge(&mut v, patch);
        }
        let mut s: Scenario = v
            .try_into()
            .with_context(|| format!("sweep value #{index} ({})", self.values[index]))?;
        s.seed += index as u64;
        if let Some(d) = &self.base_dir {
            s.resolve_paths(d);
        }
        s.validate()?;
        Ok(s)
    }
}

pub fn load_sweep(target: &str) -> Result<Sweep> {
    let path = Path::new(target);
    if !path.exists() {
        if let Some(src) = presets::sweep_source(target) {
            return Sweep::from_toml_str(src, None);
        }
    }
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Sweep::from_toml_str(&src, path.parent()).with_context(|| path.display().to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: String,
    pub seed: u64,
    pub config_hash: String,
    pub aqm: String,
    pub mode: String,
    pub goodput_bps: f64,
    pub mean_srtt_us: Option<f64>,
    pub p95_srtt_us: Option<f64>,
    pub mean_qdelay_us: Option<f64>,
    pub drops_aqm: u64,
    pub drops_overflow: u64,
    pub marks: u64,
    pub best: bool,
    pub error: String,
    pub dir: String,
}

fn uniform<'a>(mut it: impl Iterator<Item = &'a str>) -> String {
    let first = it.next().unwrap_or("").to_string();
    if it.all(|x| x == first) {
        first
    } else {
        "mixed".into()
    }
}

fn row_from(index: usize, value: String, seed: u64, dir: &Path, r: &RunResults) -> SweepRow {
    SweepRow {
        index,
        value,
        seed,
        config_hash: r.run.config_hash.clone(),
        aqm: uniform(r.flows.iter().map(|f| f.aqm.as_str())),
        mode: uniform(r.flows.iter().map(|f| f.mode.as_str())),
        goodput_bps: r.aggregate.goodput_bps,
        mean_srtt_us: r.aggregate.srtt_us.map(|d| d.mean),
        p95_srtt_us: r.aggregate.srtt_us.map(|d| d.p95),
        mean_qdelay_us: r.aggregate.qdelay_us.map(|d| d.mean),
        drops_aqm: r.aggregate.drops.aqm,
        drops_overflow: r.aggregate.drops.overflow,
        marks: r.aggregate.marks,
        best: false,
        error: String::new(),
        dir: dir.display().to_string(),
    }
}

/// Lowest mean sRTT among rows whose goodput is within `tolerance` of the best goodput.
pub fn pick_best(rows: &[SweepRow], tolerance: f64) -> Option<usize> {
    let ok = || rows.iter().filter(|r| r.error.is_empty() && r.mean_srtt_us.is_some());
    let max_goodput = ok().map(|r| r.goodput_bps).fold(f64::NEG_INFINITY, f64::max);
    ok().filter(|r| r.goodput_bps >= (1.0 - tolerance) * max_goodput)
        .min_by(|a, b| a.mean_srtt_us.partial_cmp(&b.mean_srtt_us).expect("finite sRTT"))
        .map(|r| r.index)
}

/// One run per value, `jobs` at a time. Failed runs are recorded and do not stop the sweep.
pub fn run_sweep(sweep: &Sweep, root: &Path, jobs: usize) -> Result<(PathBuf, Vec<SweepRow>)> {
    let dir = root.join(&sweep.name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        (0..sweep.values.len())
            .into_par_iter()
            .map(|i| {
                let value = sweep.values[i].to_string();
                let attempt = sweep.scenario(i).and_then(|s| {
                    let (d, out) = run_to_dir(&s, &dir)?;
                    Ok(row_from(i, value.clone(), s.seed, &d, &out.results))
                });
                attempt.unwrap_or_else(|e| SweepRow {
                    index: i,
                    value,
                    error: format!("{e:#}"),
                    ..SweepRow::default()
                })
            })
            .collect()
    });
    if let Some(b) = pick_best(&rows, sweep.goodput_tolerance) {
        rows[b].best = true;
    }
    let mut w = csv::Writer::from_writer(create(&dir.join("summary.csv"))?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok((dir, rows))
}

fn find_results(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            find_results(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "results.json") {
            found.push(p.parent().expect("file has a parent").to_path_buf());
        }
    }
    Ok(())
}

const TIMELINE_VARS: [&str; 10] = [
    "cwnd_bytes",
    "bytes_in_flight",
    "srtt_us",
    "capacity_bps",
    "queue_bytes",
    "dropped_aqm",
    "dropped_overflow",
    "marked",
    "buffer_s",
    "rebuffer_s",
];

/// Writes `timeline.csv`, `scatter.csv` and `qoe.csv` under `<dir>/plotdata/`.
pub fn plotdata(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    find_results(dir, &mut runs)?;
    if runs.is_empty() {
        bail!("no results.json under {}", dir.display());
    }
    runs.sort();
    let out_dir = dir.join("plotdata");
    fs::create_dir_all(&out_dir)?;
    let paths = ["timeline.csv", "scatter.csv", "qoe.csv"].map(|n| out_dir.join(n));
    let mut timeline = csv::Writer::from_writer(create(&paths[0])?);
    let mut scatter = csv::Writer::from_writer(create(&paths[1])?);
    let mut qoe = csv::Writer::from_writer(create(&paths[2])?);
    timeline.write_record(["scenario", "run", "flow", "t_us", "variable", "value"])?;
    scatter.write_record(["scenario", "aqm", "mode", "mean_goodput_bps", "mean_srtt_us"])?;
    qoe.write_record([
        "scenario",
        "aqm",
        "mode",
        "cc",
        "flow",
        "mean_vmaf",
        "rebuffer_duration_s",
        "rebuffer_count",
        "startup_delay_s",
        "mean_level",
        "level_switch_count",
    ])?;
    for run in &runs {
        let bytes = fs::read(run.join("results.json"))?;
        let r = RunResults::from_json(&bytes).with_context(|| format!("parsing {}", run.display()))?;
        let name = r.run.scenario.as_str();
        let run_id = run.strip_prefix(dir).unwrap_or(run).display().to_string();
        let aqm = uniform(r.flows.iter().map(|f| f.aqm.as_str()));
        let mode = uniform(r.flows.iter().map(|f| f.mode.as_str()));
        let mean_goodput = r.flows.iter().map(|f| f.goodput_bps).sum::<f64>() / r.flows.len().max(1) as f64;
        scatter.write_record([
            name.to_string(),
            aqm.clone(),
            mode.clone(),
            mean_goodput.to_string(),
            r.aggregate.srtt_us.map(|d| d.mean.to_string()).unwrap_or_default(),
        ])?;
        for s in &r.sessions {
            let f = &r.flows[s.flow as usize];
            let q = &s.qoe;
            qoe.write_record([
                name.to_string(),
                f.aqm.clone(),
                f.mode.clone(),
                f.cc.clone(),
                s.flow.to_string(),
                q.mean_vmaf.to_string(),
                q.rebuffer_duration_s.to_string(),
                q.rebuffer_count.to_string(),
                q.startup_delay_s.to_string(),
                q.mean_level.to_string(),
                q.level_switch_count.to_string(),
            ])?;
        }
        for f in &r.flows {
            let path = run.join(format!("flow{}_timeline.csv", f.id));
            let Ok(mut rd) = csv::Reader::from_path(&path) else {
                continue;
            };
            let headers = rd.headers()?.clone();
            let cols: Vec<(usize, &str)> = TIMELINE_VARS
                .iter()
                .filter_map(|v| headers.iter().position(|h| h == *v).map(|i| (i, *v)))
                .collect();
            let t_col = headers.iter().position(|h| h == "t_us").context("timeline without t_us")?;
            for rec in rd.records() {
                let rec = rec?;
                for &(i, var) in &cols {
                    let val = &rec[i];
                    if !val.is_empty() {
                        timeline.write_record([name, &run_id, &f.id.to_string(), &rec[t_col], var, val])?;
                    }
                }
            }
        }
    }
    timeline.flush()?;
    scatter.flush()?;
    qoe.flush()?;
    Ok(paths.to_vec())
}

/// `presets list` output: one `name<TAB>kind` line per preset.
pub fn list_presets(mut out: impl Write) -> std::io::Result<()> {
    for (n, _) in presets::SCENARIOS {
        writeln!(out, "{n}\tscenario")?;
    }
    for (n, _) in presets::SWEEPS {
        writeln!(out, "{n}\tsweep")?;
    }
    Ok(())
}

/// Resolves a scenario argument, which may be a file or a preset name.
pub fn scenario_arg(target: &str, seed: Option<u64>) -> Result<Scenario> {
    let mut s = load_scenario(target)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}
