//! Episode runner shared by `rollout` and `eval`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use narrowgap::env::protocol::{observation_batch, observation_spec};
use narrowgap::env::{
    AxisTracker, Env, EpisodeOutcome, HoverPolicy, LineClient, Policy, ResolvedConfig, SeedTrajectoryDataset,
    StepRecord, StepResult,
};
use narrowgap::planner::wilson_interval;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyKind {
    /// Constant hover thrust.
    Hover,
    /// Straight-line tracker through each gap center.
    Tracker,
    /// Actions from a policy server answering `act` requests.
    Remote,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeSummary {
    pub index: usize,
    pub seed: u64,
    pub outcome: Option<EpisodeOutcome>,
    pub steps: u64,
    #[serde(rename = "return")]
    pub total_reward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub per_episode: Vec<EpisodeSummary>,
}

impl Summary {
    fn new(per_episode: Vec<EpisodeSummary>) -> Self {
        let count = |o| per_episode.iter().filter(|e| e.outcome == Some(o)).count();
        let (successes, collisions, timeouts) =
            (count(EpisodeOutcome::Success), count(EpisodeOutcome::Collision), count(EpisodeOutcome::Timeout));
        let n = per_episode.len();
        let (ci_lo, ci_hi) = wilson_interval(successes, n);
        Self {
            episodes: n,
            successes,
            collisions,
            timeouts,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            ci_lo,
            ci_hi,
            per_episode,
        }
    }
}

/// Remote policy over one connection; batches of one env.
struct RemotePolicy {
    client: LineClient,
    cfg: Arc<ResolvedConfig>,
    last: Option<StepResult>,
}

impl RemotePolicy {
    fn action(&mut self) -> Result<[f64; 4]> {
        let obs = self.last.as_ref().context("remote policy queried before reset")?;
        let batch = observation_batch(std::slice::from_ref(obs), &observation_spec(&self.cfg))?;
        let a = self.client.act(batch)?;
        if a.shape != [1, 4] {
            bail!("policy server returned actions of shape {:?}, expected [1, 4]", a.shape);
        }
        Ok([a.data[0], a.data[1], a.data[2], a.data[3]])
    }
}

enum Driver {
    Local(Box<dyn Policy + Send>),
    Remote(RemotePolicy),
}

fn run_episode(
    env: &mut Env,
    driver: &mut Driver,
    index: usize,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<EpisodeSummary> {
    let first = env.reset(seed)?;
    if let Driver::Remote(r) = driver {
        r.last = Some(first);
    }
    let mut total = 0.0;
    let mut last: Option<StepRecord> = None;
    while !env.is_done() {
        let a = match driver {
            Driver::Local(p) => p.act(env),
            Driver::Remote(r) => r.action()?,
        };
        let (res, rec) = env.step_with_record(a)?;
        total += res.reward.total;
        if let Some(out) = log.as_deref_mut() {
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
        if let Driver::Remote(r) = driver {
            r.last = Some(res);
        }
        last = Some(rec);
    }
    Ok(EpisodeSummary {
        index,
        seed,
        outcome: last.as_ref().and_then(|r| r.outcome),
        steps: last.map_or(0, |r| r.step),
        total_reward: total,
    })
}

pub struct RunSpec<'a> {
    pub cfg: Arc<ResolvedConfig>,
    pub dataset: Arc<SeedTrajectoryDataset>,
    pub policy: PolicyKind,
    pub remote: Option<SocketAddr>,
    pub seeds: &'a [u64],
    pub workers: usize,
    /// Per-episode JSON-lines logs go here when set.
    pub log_dir: Option<&'a Path>,
}

pub fn episode_log_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join(format!("episode_{index:05}.jsonl"))
}

pub fn run(spec: &RunSpec) -> Result<Summary> {
    if let Some(dir) = spec.log_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let one = |index: usize, driver: &mut Driver| -> Result<EpisodeSummary> {
        let mut env = Env::new(spec.cfg.clone(), spec.dataset.clone());
        let seed = spec.seeds[index];
        match spec.log_dir {
            Some(dir) => {
                let path = episode_log_path(dir, index);
                let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                let s = run_episode(&mut env, driver, index, seed, Some(&mut w))?;
                w.flush()?;
                Ok(s)
            }
            None => run_episode(&mut env, driver, index, seed, None),
        }
    };
    let local = |index: usize| {
        let policy: Box<dyn Policy + Send> = match spec.policy {
            PolicyKind::Tracker => Box::new(AxisTracker::new(spec.cfg.tracking_gains())),
            _ => Box::new(HoverPolicy),
        };
        one(index, &mut Driver::Local(policy))
    };
    let per_episode = match spec.policy {
        PolicyKind::Remote => {
            // one connection, episodes in order
            let addr = spec.remote.context("--policy remote needs --remote <addr>")?;
            let mut driver = Driver::Remote(RemotePolicy {
                client: LineClient::connect(addr).with_context(|| format!("connecting to policy server {addr}"))?,
                cfg: spec.cfg.clone(),
                last: None,
            });
            (0..spec.seeds.len()).map(|i| one(i, &mut driver)).collect::<Result<Vec<_>>>()?
        }
        _ => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.workers).build()?;
            // collect keeps episode order regardless of scheduling
            pool.install(|| (0..spec.seeds.len()).into_par_iter().map(local).collect::<Result<Vec<_>>>())?
        }
    };
    Ok(Summary::new(per_episode))
}
