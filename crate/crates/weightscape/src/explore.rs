//! End-to-end landscape construction: dataset, basin-hopping walkers (run on
//! worker threads, merged in walker order), then transition-state
//! connection. Progress is checkpointed next to the database so an
//! interrupted run can resume.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use weightscape_core::data::{gen_checkerboard, standardize};
use weightscape_core::landscape::Fingerprint;
use weightscape_core::linalg::symmetric_eigen;
use weightscape_core::optim::{merge_walk, walk, Walk};
use weightscape_core::saddle::connect_landscape;
use weightscape_core::{Architecture, Dataset, LandscapeDatabase, NetObjective};

use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::{fsutil, store, table};

/// Dataset and architecture a run optimizes over.
#[derive(Debug, Clone)]
pub struct Problem {
    pub arch: Architecture,
    pub dataset: Dataset,
    pub l2: f64,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let d = &cfg.dataset;
        let raw = match d.source {
            DataSource::Checkerboard => {
                gen_checkerboard(d.samples, d.tiles, d.noise, cfg.dataset_seed())?
            }
            DataSource::Csv => {
                let path = d.path.as_ref().ok_or_else(|| {
                    Error::Config("dataset.path is required for csv datasets".into())
                })?;
                table::load_csv(path, &d.csv_options())?
            }
        };
        let dataset = if d.standardize {
            standardize(&raw)?
        } else {
            raw
        };
        Ok(Self {
            arch: cfg.arch()?,
            dataset,
            l2: cfg.model.l2,
        })
    }

    pub fn objective(&self) -> Result<NetObjective<'_>> {
        Ok(NetObjective::new(&self.arch, &self.dataset)?.with_l2(self.l2)?)
    }

    pub fn fingerprint(&self) -> Result<Fingerprint> {
        Ok(self.objective()?.fingerprint())
    }
}

/// Checkpoint written beside the database.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreState {
    pub fingerprint: String,
    /// Walker indices already merged.
    pub walkers_done: Vec<usize>,
    pub connected: bool,
}

pub fn state_path(db_path: &Path) -> PathBuf {
    let mut name = db_path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".state");
    db_path.with_file_name(name)
}

fn save_state(path: &Path, state: &ExploreState) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(state).expect("state serializes");
    bytes.push(b'\n');
    fsutil::write_atomic(path, &bytes)
}

fn load_state(path: &Path) -> Result<Option<ExploreState>> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fsutil::read(path)?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Worker threads for the walkers.
    pub workers: usize,
    pub resume: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExploreSummary {
    pub fingerprint: String,
    pub walkers_run: usize,
    pub quenches: usize,
    pub unconverged: usize,
    pub new_minima: usize,
    pub attempts: usize,
    pub successful_attempts: usize,
    pub minima: usize,
    pub transition_states: usize,
    pub components: usize,
    pub best_minimum: Option<u64>,
    pub best_loss: Option<f64>,
    pub best_auc: Option<f64>,
}

/// Runs the pending walkers on `workers` threads. Results come back in
/// walker order whatever the thread count.
fn run_walkers(
    obj: &NetObjective<'_>,
    cfg: &RunConfig,
    pending: &[usize],
    workers: usize,
) -> Vec<Result<Walk>> {
    let min_cfg = cfg.minimize_config();
    let slots: Mutex<Vec<Option<Result<Walk>>>> =
        Mutex::new((0..pending.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, pending.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= pending.len() {
                    break;
                }
                let w = walk(obj, &cfg.basin_config(pending[k]), &min_cfg).map_err(Error::from);
                log::info!("walker {} finished", pending[k]);
                slots.lock().expect("no panics while holding the lock")[k] = Some(w);
            });
        }
    });
    slots
        .into_inner()
        .expect("threads joined")
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

/// Lowest Hessian eigenvalue for minima that do not have one yet.
fn annotate_curvature(obj: &NetObjective<'_>, db: &mut LandscapeDatabase) -> Result<()> {
    let todo: Vec<u64> = db
        .minima()
        .iter()
        .filter(|m| m.min_hessian_eigenvalue.is_none())
        .map(|m| m.id)
        .collect();
    for id in todo {
        let params = db.minimum(id).expect("listed above").params.clone();
        let eig = symmetric_eigen(&obj.hessian(&params)?)?;
        db.minimum_mut(id)
            .expect("listed above")
            .min_hessian_eigenvalue = eig.values.first().copied();
    }
    Ok(())
}

/// Builds (or resumes) the database at `db_path`. Every attempt log line is
/// passed to `on_line`.
pub fn explore(
    cfg: &RunConfig,
    problem: &Problem,
    db_path: &Path,
    opts: ExploreOptions,
    mut on_line: impl FnMut(&str),
) -> Result<(LandscapeDatabase, ExploreSummary)> {
    let obj = problem.objective()?;
    let fp = obj.fingerprint();
    let state_file = state_path(db_path);

    let (mut db, mut state) = if db_path.exists() {
        let existing = store::load_db(db_path)?;
        if existing.fingerprint() != fp {
            return Err(Error::Runtime(format!(
                "{} belongs to a different loss surface (fingerprint {}, this configuration gives {fp}); refusing to overwrite it",
                db_path.display(),
                existing.fingerprint()
            )));
        }
        if opts.resume {
            let state = load_state(&state_file)?.unwrap_or_default();
            (existing, state)
        } else {
            (
                LandscapeDatabase::new(fp, problem.arch.clone()),
                ExploreState::default(),
            )
        }
    } else {
        (
            LandscapeDatabase::new(fp, problem.arch.clone()),
            ExploreState::default(),
        )
    };
    state.fingerprint = fp.to_string();

    let mut summary = ExploreSummary {
        fingerprint: fp.to_string(),
        ..Default::default()
    };
    let pending: Vec<usize> = (0..cfg.basin.walkers)
        .filter(|w| !state.walkers_done.contains(w))
        .collect();
    if !pending.is_empty() {
        for (index, result) in pending
            .iter()
            .zip(run_walkers(&obj, cfg, &pending, opts.workers))
        {
            let w = result?;
            let s = merge_walk(&obj, &w, &mut db)?;
            summary.walkers_run += 1;
            summary.quenches += s.steps;
            summary.unconverged += s.unconverged;
            summary.new_minima += s.new_minima;
            state.walkers_done.push(*index);
            state.walkers_done.sort_unstable();
            annotate_curvature(&obj, &mut db)?;
            store::save_db(db_path, &db)?;
            save_state(&state_file, &state)?;
        }
    }

    if !state.connected {
        if db.minima().len() >= 2 {
            let cc = cfg.connect_config(db.minima().len());
            let s = connect_landscape(&obj, &mut db, &cc, |attempt| on_line(&attempt.to_string()))?;
            summary.attempts = s.attempts;
            summary.successful_attempts = s.successes;
            summary.new_minima += s.new_minima;
            annotate_curvature(&obj, &mut db)?;
        }
        state.connected = true;
        store::save_db(db_path, &db)?;
        save_state(&state_file, &state)?;
    }

    summary.minima = db.minima().len();
    summary.transition_states = db.transition_states().len();
    summary.components = db.components().len();
    if let Some(best) = db.global_minimum() {
        summary.best_minimum = Some(best.id);
        summary.best_loss = Some(best.loss);
        summary.best_auc = Some(obj.auc(&best.params)?);
    }
    Ok((db, summary))
}
