//! Sweep execution and result persistence.
//!
//! Every (cell, realization) pair is one job on a shared worker pool. Jobs
//! return compact summaries; all files are written afterwards by a single
//! writer, in cell and realization order, so output bytes never depend on
//! scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use recsim_core::metrics::{self, CorrelationKind};
use recsim_core::{run_realization_observed, RealizationSeeds, StepView, StrategyKind};

use crate::config::{Cell, SweepSpec};
use crate::manifest::{
    CellManifest, CellStatus, RealizationManifest, RunManifest, TeacherSummary, MANIFEST_FILE,
};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const POPULARITY_FILE: &str = "popularity.csv";
pub const CORRELATIONS_FILE: &str = "correlations.csv";
pub const SPEARMAN_FILE: &str = "correlations_spearman.csv";
pub const ZSCORES_FILE: &str = "zscores.csv";

pub const WORKERS_ENV: &str = "RECSIM_WORKERS";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's worker count.
    pub workers: Option<usize>,
    /// Overrides the config's output directory.
    pub out_dir: Option<PathBuf>,
    pub dump_teacher: bool,
    pub dump_student: bool,
    pub both_correlations: bool,
}

/// What one realization contributes to the outputs.
#[derive(Debug, Clone)]
pub struct RealizationSummary {
    pub index: usize,
    pub seeds: RealizationSeeds,
    pub brier: Vec<Option<f64>>,
    pub gini: Vec<f64>,
    pub mean_popularity: Vec<f64>,
    /// Index `t` for `t = 0..=m`.
    pub popularity: Vec<Vec<u32>>,
    pub expected_popularity: Vec<f64>,
    pub wall_clock_secs: f64,
    pub training_epochs: usize,
    dumps: Vec<(PathBuf, String)>,
}

impl RealizationSummary {
    pub fn popularity_f64(&self, t: usize) -> Vec<f64> {
        self.popularity[t].iter().map(|&x| f64::from(x)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    /// Ordered by realization index; empty when the cell failed.
    pub realizations: Vec<RealizationSummary>,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// Correlation of popularity at `t` with expected popularity, per realization.
    pub fn ground_truth_correlations(&self, kind: CorrelationKind, t: usize) -> Vec<f64> {
        self.realizations
            .iter()
            .filter_map(|r| {
                kind.compute(&r.popularity_f64(t), &r.expected_popularity)
                    .ok()
            })
            .collect()
    }

    /// Correlations of popularity at `t` over all pairs of realizations.
    pub fn inter_realization_correlations(&self, kind: CorrelationKind, t: usize) -> Vec<f64> {
        let vectors: Vec<Vec<f64>> = self
            .realizations
            .iter()
            .map(|r| r.popularity_f64(t))
            .collect();
        metrics::pairwise_correlations(kind, &vectors).unwrap_or_default()
    }

    pub fn mean_popularity_series(&self) -> Vec<Vec<f64>> {
        self.realizations
            .iter()
            .map(|r| r.mean_popularity.clone())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub spec: SweepSpec,
    pub workers: usize,
    pub cells: Vec<CellOutcome>,
}

impl SweepResults {
    pub fn cell(&self, id: &str) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| c.cell.id == id)
    }
}

/// Worker count: `RECSIM_WORKERS` if set and valid, then the override, then
/// the config.
pub fn resolve_workers(spec: &SweepSpec, flag: Option<usize>) -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .or(flag)
        .unwrap_or(spec.base.workers)
        .max(1)
}

/// Run and persist a sweep; returns the manifest that was written.
pub fn run_sweep(spec: &SweepSpec, opts: &RunOptions) -> anyhow::Result<RunManifest> {
    let workers = resolve_workers(spec, opts.workers);
    let results = execute_sweep(spec, workers, opts.dump_teacher, opts.dump_student)?;
    let out = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| spec.output_dir.clone());
    write_outputs(&results, &out, opts.both_correlations)
}

/// Run every realization of every cell on `workers` threads.
pub fn execute_sweep(
    spec: &SweepSpec,
    workers: usize,
    dump_teacher: bool,
    dump_student: bool,
) -> anyhow::Result<SweepResults> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| (0..cell.config.realizations).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    log::info!(
        "running {} realizations over {} cells on {workers} workers",
        jobs.len(),
        cells.len()
    );
    let outcomes: Vec<Result<RealizationSummary, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_job(&cells[c], r, dump_teacher, dump_student))
            .collect()
    });

    let mut per_cell: Vec<CellOutcome> = cells
        .into_iter()
        .map(|cell| CellOutcome {
            cell,
            realizations: Vec::new(),
            error: None,
        })
        .collect();
    for (&(c, _), outcome) in jobs.iter().zip(outcomes) {
        let cell = &mut per_cell[c];
        match outcome {
            Ok(summary) => cell.realizations.push(summary),
            Err(e) if cell.error.is_none() => cell.error = Some(e),
            Err(_) => {}
        }
    }
    for cell in &mut per_cell {
        if let Some(e) = &cell.error {
            log::warn!("cell {} failed: {e}", cell.cell.id);
            cell.realizations.clear();
        }
    }
    Ok(SweepResults {
        spec: spec.clone(),
        workers,
        cells: per_cell,
    })
}

fn run_job(
    cell: &Cell,
    r: usize,
    dump_teacher: bool,
    dump_student: bool,
) -> Result<RealizationSummary, String> {
    let start = Instant::now();
    let dir = PathBuf::from("dumps")
        .join(slug(&cell.id))
        .join(format!("r{r}"));
    let mut dumps = Vec::new();
    let mut observe = |view: &StepView<'_>| {
        if dump_teacher && view.timestep == 0 {
            let mut s = String::from("agent,item,prob\n");
            for ((i, j), p) in view.teacher.probs().indexed_iter() {
                let _ = writeln!(s, "{i},{j},{p}");
            }
            dumps.push((dir.join("teacher.csv"), s));
        }
        if dump_student {
            for (name, mat) in [
                ("p_hat", view.student.p_hat()),
                ("q_hat", view.student.q_hat()),
            ] {
                let mut s = String::from("row,col,value\n");
                for ((i, j), v) in mat.indexed_iter() {
                    let _ = writeln!(s, "{i},{j},{v}");
                }
                dumps.push((dir.join(format!("{name}_t{:04}.csv", view.timestep)), s));
            }
        }
    };
    let result =
        run_realization_observed(&cell.config, r, &mut observe).map_err(|e| e.to_string())?;
    log::debug!("{} r{r} done in {:.2?}", cell.id, start.elapsed());
    Ok(RealizationSummary {
        index: r,
        seeds: result.seeds,
        training_epochs: result.train_reports.iter().map(|t| t.epochs_run).sum(),
        brier: result.brier,
        gini: result.gini,
        mean_popularity: result.mean_popularity,
        popularity: result.popularity,
        expected_popularity: result.expected_popularity,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        dumps,
    })
}

/// File-system-safe form of a cell id.
pub fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if !x.is_nan() => x.to_string(),
        _ => String::new(),
    }
}

fn mean_sd(values: &[f64]) -> (String, String) {
    match values.len() {
        0 => (String::new(), String::new()),
        1 => (values[0].to_string(), String::new()),
        _ => (
            metrics::mean(values).to_string(),
            metrics::sample_sd(values).to_string(),
        ),
    }
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Write all CSVs, dumps and the manifest into `out`.
pub fn write_outputs(
    results: &SweepResults,
    out: &Path,
    both_correlations: bool,
) -> anyhow::Result<RunManifest> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let spec = &results.spec;
    let m = spec.base.m;
    let t_snap = spec.snapshot_t();
    let mut files = vec![
        TIMESERIES_FILE.to_string(),
        POPULARITY_FILE.to_string(),
        CORRELATIONS_FILE.to_string(),
    ];

    let mut ts = csv_writer(&out.join(TIMESERIES_FILE))?;
    ts.write_record([
        "cell_id",
        "realization",
        "timestep",
        "brier",
        "gini",
        "mean_popularity",
    ])?;
    let mut pop = csv_writer(&out.join(POPULARITY_FILE))?;
    pop.write_record(["cell_id", "realization", "timestep", "item", "popularity"])?;
    let mut snapshots: Vec<usize> = (0..=m).step_by(spec.popularity_stride).collect();
    if snapshots.last() != Some(&m) {
        snapshots.push(m);
    }
    for cell in &results.cells {
        for r in &cell.realizations {
            let ri = r.index.to_string();
            for t in 1..=m {
                ts.write_record([
                    cell.cell.id.as_str(),
                    &ri,
                    &t.to_string(),
                    &fmt_opt(r.brier[t - 1]),
                    &r.gini[t - 1].to_string(),
                    &r.mean_popularity[t - 1].to_string(),
                ])?;
            }
            for &t in &snapshots {
                let ts_str = t.to_string();
                for (item, p) in r.popularity[t].iter().enumerate() {
                    pop.write_record([
                        cell.cell.id.as_str(),
                        &ri,
                        &ts_str,
                        &item.to_string(),
                        &p.to_string(),
                    ])?;
                }
            }
        }
    }
    ts.flush()?;
    pop.flush()?;

    let mut kinds = vec![(CorrelationKind::Pearson, CORRELATIONS_FILE)];
    if both_correlations {
        kinds.push((CorrelationKind::Spearman, SPEARMAN_FILE));
        files.push(SPEARMAN_FILE.to_string());
    }
    for (kind, name) in kinds {
        let mut w = csv_writer(&out.join(name))?;
        w.write_record([
            "cell_id",
            "t_snapshot",
            "ground_truth_corr_mean",
            "ground_truth_corr_sd",
            "inter_realization_corr_mean",
            "inter_realization_corr_sd",
        ])?;
        for cell in results.cells.iter().filter(|c| c.ok()) {
            let (gm, gs) = mean_sd(&cell.ground_truth_correlations(kind, t_snap));
            let (im, is) = mean_sd(&cell.inter_realization_correlations(kind, t_snap));
            w.write_record([
                cell.cell.id.as_str(),
                &t_snap.to_string(),
                &gm,
                &gs,
                &im,
                &is,
            ])?;
        }
        w.flush()?;
    }

    files.push(ZSCORES_FILE.to_string());
    let mut z = csv_writer(&out.join(ZSCORES_FILE))?;
    z.write_record(["cell_a", "cell_b", "zscore"])?;
    let ok: Vec<&CellOutcome> = results.cells.iter().filter(|c| c.ok()).collect();
    for (i, a) in ok.iter().enumerate() {
        for b in &ok[i + 1..] {
            if a.cell.config.beta != b.cell.config.beta {
                continue;
            }
            let score = metrics::popularity_difference_zscore(
                &a.mean_popularity_series(),
                &b.mean_popularity_series(),
            )
            .ok();
            z.write_record([a.cell.id.as_str(), b.cell.id.as_str(), &fmt_opt(score)])?;
        }
    }
    z.flush()?;

    for cell in &results.cells {
        for r in &cell.realizations {
            for (rel, text) in &r.dumps {
                let path = out.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                files.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }

    let manifest = build_manifest(results, files);
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn build_manifest(results: &SweepResults, files: Vec<String>) -> RunManifest {
    let spec = &results.spec;
    let mut warnings = Vec::new();
    let cells = results
        .cells
        .iter()
        .map(|c| {
            let cfg = &c.cell.config;
            if let Some(e) = &c.error {
                warnings.push(format!("cell {} failed: {e}", c.cell.id));
            }
            CellManifest {
                cell_id: c.cell.id.clone(),
                beta_cond: cfg.beta.label(),
                strategy: cfg.strategy.name().to_string(),
                epsilon: match cfg.strategy {
                    StrategyKind::EpsilonGreedy(e) => e,
                    _ => 0.0,
                },
                teacher: TeacherSummary {
                    n: cfg.n,
                    m: cfg.m,
                    k: cfg.k,
                    latent_scale: cfg.latent_scale(),
                    regenerated_per_realization: cfg.regenerate_teacher,
                },
                status: if c.ok() {
                    CellStatus::Ok
                } else {
                    CellStatus::Failed
                },
                error: c.error.clone(),
                realizations: c
                    .realizations
                    .iter()
                    .map(|r| RealizationManifest {
                        index: r.index,
                        seeds: r.seeds,
                        wall_clock_secs: r.wall_clock_secs,
                        training_epochs: r.training_epochs,
                    })
                    .collect(),
            }
        })
        .collect();
    RunManifest {
        tool: "recsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::from_str(&spec.to_json()).expect("config is valid json"),
        master_seed: spec.base.master_seed,
        workers: results.workers,
        t_snapshot: spec.snapshot_t(),
        cells,
        files,
        figures: Vec::new(),
        warnings,
    }
}
