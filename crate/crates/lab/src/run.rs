//! Run orchestration: builds environments from a config document, executes
//! training/evaluation, and writes all per-run artifacts (manifest, CSV
//! logs, checkpoints).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crutchgait_core::env::{CrutchGaitEnv, Environment, ObsNormalizer};
use crutchgait_core::harness::{
    aggregate_cells, decode_checkpoint, encode_checkpoint, evaluate, sweep_plan, train,
    CellResult, Checkpoint, EvalSettings, EvalTrace, IterLog, MetricsReport, SweepCell,
    TrainResult,
};
use crutchgait_core::model::{build_subject_model, SubjectMeasurements};
use crutchgait_core::nn::Actor;
use crutchgait_core::pointmass::PointMassEnv;

use crate::config::{ConfigDoc, EnvKind, LoadedConfig};

/// Environments the runner can instantiate, unified behind one object.
pub enum AnyEnv {
    CrutchGait(Box<CrutchGaitEnv>),
    PointMass(PointMassEnv),
}

impl AnyEnv {
    fn as_env(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::CrutchGait(e) => e.as_mut(),
            AnyEnv::PointMass(e) => e,
        }
    }
}

/// Build the configured environment, overriding the crutch-penalty weight
/// when a sweep cell demands it.
pub fn build_env(doc: &ConfigDoc, weight_override: Option<f64>) -> Result<AnyEnv, String> {
    match doc.experiment.environment {
        EnvKind::CrutchGait => {
            let model = build_subject_model(&SubjectMeasurements::reference_subject(), &doc.model)
                .map_err(|e| e.to_string())?;
            let mut reward = doc.reward;
            if let Some(w) = weight_override {
                reward.w_crutch_reaction_force = w;
            }
            Ok(AnyEnv::CrutchGait(Box::new(CrutchGaitEnv::new(model, reward, doc.env))))
        }
        EnvKind::PointMass => Ok(AnyEnv::PointMass(PointMassEnv::new(doc.env.horizon))),
    }
}

fn eval_settings(doc: &ConfigDoc) -> EvalSettings {
    EvalSettings {
        horizon: doc.experiment.eval_horizon,
        weight: doc.experiment.eval_weight,
        cost_form: doc.reward.crutch_cost_form,
        target_velocity: doc.reward.v_des,
        target_orientation: doc.reward.orientation_target,
        seed: 0,
    }
}

/// Git-style content hash (SHA-1 over a `blob <len>\0` header plus the
/// bytes), rendered as lowercase hex.
pub fn content_hash(data: &[u8]) -> String {
    let mut blob = format!("blob {}\0", data.len()).into_bytes();
    blob.extend_from_slice(data);
    let digest = sha1(&blob);
    let mut out = String::with_capacity(40);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn sha1(data: &[u8]) -> [u8; 20] {
    let mut h: [u32; 5] = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0];
    let ml = (data.len() as u64) * 8;
    let mut msg = data.to_vec();
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&ml.to_be_bytes());
    for chunk in msg.chunks_exact(64) {
        let mut w = [0u32; 80];
        for i in 0..16 {
            w[i] = u32::from_be_bytes([
                chunk[4 * i],
                chunk[4 * i + 1],
                chunk[4 * i + 2],
                chunk[4 * i + 3],
            ]);
        }
        for i in 16..80 {
            w[i] = (w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16]).rotate_left(1);
        }
        let (mut a, mut b, mut c, mut d, mut e) = (h[0], h[1], h[2], h[3], h[4]);
        for (i, &wi) in w.iter().enumerate() {
            let (f, k) = match i {
                0..=19 => ((b & c) | ((!b) & d), 0x5A827999),
                20..=39 => (b ^ c ^ d, 0x6ED9EBA1),
                40..=59 => ((b & c) | (b & d) | (c & d), 0x8F1BBCDC),
                _ => (b ^ c ^ d, 0xCA62C1D6),
            };
            let tmp = a
                .rotate_left(5)
                .wrapping_add(f)
                .wrapping_add(e)
                .wrapping_add(k)
                .wrapping_add(wi);
            e = d;
            d = c;
            c = b.rotate_left(30);
            b = a;
            a = tmp;
        }
        h[0] = h[0].wrapping_add(a);
        h[1] = h[1].wrapping_add(b);
        h[2] = h[2].wrapping_add(c);
        h[3] = h[3].wrapping_add(d);
        h[4] = h[4].wrapping_add(e);
    }
    let mut out = [0u8; 20];
    for (i, word) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Verbatim config file contents.
    pub config_snapshot: String,
    pub config_hash: String,
    pub seed: u64,
    /// Unix seconds.
    pub start_time: u64,
    pub artifacts: Vec<String>,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn write_train_log(path: &Path, logs: &[IterLog]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(IterLog::csv_header());
    out.push('\n');
    for log in logs {
        out.push_str(&log.csv_row());
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn write_eval_metrics(path: &Path, report: &MetricsReport, trace: &EvalTrace) -> io::Result<()> {
    let mut out = String::from(
        "mean_crutch_cost,mape_velocity,mape_orientation,mean_abs_lat_disp,steps,fell\n",
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        report.mean_crutch_cost,
        report.mape_velocity,
        report.mape_orientation,
        report.mean_abs_lateral_displacement,
        trace.steps,
        trace.fell
    );
    fs::write(path, out)
}

pub fn write_trajectory(path: &Path, trace: &EvalTrace) -> io::Result<()> {
    let mut out = String::from("step,com_vel_x,pitch,d_crutch_r,d_crutch_l\n");
    for (t, v, pitch, d_r, d_l) in &trace.rows {
        let _ = writeln!(out, "{t},{v},{pitch},{d_r},{d_l}");
    }
    fs::write(path, out)
}

pub fn write_checkpoint_file(path: &Path, ckpt: &Checkpoint) -> io::Result<()> {
    fs::write(path, encode_checkpoint(ckpt))
}

pub fn read_checkpoint_file(path: &Path) -> Result<Checkpoint, String> {
    let data = fs::read(path).map_err(|e| format!("cannot read checkpoint: {e}"))?;
    decode_checkpoint(&data).map_err(|e| e.to_string())
}

pub struct TrainRunOutput {
    pub result: TrainResult,
    pub report: MetricsReport,
    pub trace: EvalTrace,
    pub out_dir: PathBuf,
}

/// Full training run: train, checkpoint, evaluate, and write every per-run
/// artifact into `out_dir`.
pub fn run_train(
    loaded: &LoadedConfig,
    seed: u64,
    iterations: usize,
    out_dir: &Path,
) -> Result<TrainRunOutput, String> {
    fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    let doc = &loaded.doc;
    let mut env = build_env(doc, None)?;
    let cadence = doc.experiment.checkpoint_every;
    let checkpoint_dir = out_dir.to_path_buf();
    let periodic_err: Mutex<Option<String>> = Mutex::new(None);

    let result = train(
        env.as_env(),
        doc.ppo,
        iterations,
        doc.experiment.init_std,
        seed,
        |log, learner, normalizer| {
            if cadence > 0 && (log.iter + 1) % cadence == 0 {
                let ckpt = Checkpoint {
                    actor: learner.actor.clone(),
                    critic: learner.critic.clone(),
                    normalizer: normalizer.clone(),
                };
                let path = checkpoint_dir.join(format!("checkpoint_{}", log.iter + 1));
                if let Err(e) = write_checkpoint_file(&path, &ckpt) {
                    *periodic_err.lock().unwrap() = Some(e.to_string());
                }
            }
        },
    )
    .map_err(|e| e.to_string())?;
    if let Some(e) = periodic_err.into_inner().unwrap() {
        return Err(e);
    }

    write_train_log(&out_dir.join("train_log.csv"), &result.logs)
        .map_err(|e| e.to_string())?;

    let ckpt = Checkpoint {
        actor: result.learner.actor.clone(),
        critic: result.learner.critic.clone(),
        normalizer: result.normalizer.clone(),
    };
    write_checkpoint_file(&out_dir.join(format!("checkpoint_{iterations}")), &ckpt)
        .map_err(|e| e.to_string())?;

    let (report, trace) = evaluate_checkpoint(doc, &ckpt.actor, &ckpt.normalizer, None)?;
    write_eval_metrics(&out_dir.join("eval_metrics.csv"), &report, &trace)
        .map_err(|e| e.to_string())?;
    write_trajectory(&out_dir.join("trajectory.csv"), &trace).map_err(|e| e.to_string())?;

    let manifest = RunManifest {
        config_snapshot: loaded.raw.clone(),
        config_hash: content_hash(loaded.raw.as_bytes()),
        seed,
        start_time: now_unix(),
        artifacts: vec![
            "train_log.csv".into(),
            format!("checkpoint_{iterations}"),
            "eval_metrics.csv".into(),
            "trajectory.csv".into(),
        ],
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    Ok(TrainRunOutput { result, report, trace, out_dir: out_dir.to_path_buf() })
}

/// Deterministic evaluation of a trained policy on a freshly built
/// environment with the stored normalizer statistics.
pub fn evaluate_checkpoint(
    doc: &ConfigDoc,
    actor: &Actor,
    normalizer: &ObsNormalizer,
    weight_override: Option<f64>,
) -> Result<(MetricsReport, EvalTrace), String> {
    let mut env = build_env(doc, weight_override)?;
    let e = env.as_env();
    e.set_normalizer_state(normalizer.clone());
    let settings = eval_settings(doc);
    Ok(evaluate(e, actor, &settings))
}

/// One sweep cell: train at the cell's weight and seed, evaluate with the
/// common evaluation weight.
pub fn run_cell(doc: &ConfigDoc, cell: SweepCell) -> Result<CellResult, String> {
    let mut env = build_env(doc, Some(cell.weight))?;
    let result = train(
        env.as_env(),
        doc.ppo,
        doc.experiment.iterations,
        doc.experiment.init_std,
        cell.seed,
        |_, _, _| {},
    )
    .map_err(|e| e.to_string())?;
    let (report, _) = evaluate_checkpoint(
        doc,
        &result.learner.actor,
        &result.normalizer,
        Some(cell.weight),
    )?;
    Ok(CellResult { cell, report, logs: result.logs })
}

pub struct SweepOutput {
    pub cells: Vec<CellResult>,
    pub comparison_csv: String,
    pub table5_csv: String,
}

/// Run every sweep cell with up to `parallel` worker threads. Results are
/// emitted in the canonical plan order regardless of completion order, so
/// the output is invariant to the parallelism level.
pub fn run_sweep(doc: &ConfigDoc, parallel: usize) -> Result<SweepOutput, String> {
    if doc.experiment.agent_weights.is_empty() {
        return Err("empty agent list".into());
    }
    let plan = sweep_plan(&doc.to_experiment());
    let n = plan.len();
    let results: Mutex<Vec<Option<Result<CellResult, String>>>> =
        Mutex::new(vec![None; n]);
    let next: Mutex<usize> = Mutex::new(0);

    std::thread::scope(|scope| {
        for _ in 0..parallel.max(1).min(n) {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().unwrap();
                    if *guard >= n {
                        break;
                    }
                    let i = *guard;
                    *guard += 1;
                    i
                };
                let outcome = run_cell(doc, plan[idx]);
                results.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    let mut cells = Vec::with_capacity(n);
    for slot in results.into_inner().unwrap() {
        cells.push(slot.expect("sweep cell not executed")?);
    }

    let mut comparison = String::from(
        "agent,weight,seed,mean_crutch_cost,mape_velocity,mape_orientation,mean_abs_lat_disp\n",
    );
    for r in &cells {
        let _ = writeln!(
            comparison,
            "{},{},{},{},{},{},{}",
            r.cell.agent,
            r.cell.weight,
            r.cell.seed,
            r.report.mean_crutch_cost,
            r.report.mape_velocity,
            r.report.mape_orientation,
            r.report.mean_abs_lateral_displacement
        );
    }

    let mut table5 = String::from(
        "agent,weight,mean_crutch_cost,mape_velocity,mape_orientation,mean_abs_lat_disp\n",
    );
    for (agent, weight, mean) in aggregate_cells(&cells) {
        let _ = writeln!(
            table5,
            "{},{},{},{},{},{}",
            agent,
            weight,
            mean.mean_crutch_cost,
            mean.mape_velocity,
            mean.mape_orientation,
            mean.mean_abs_lateral_displacement
        );
    }

    Ok(SweepOutput { cells, comparison_csv: comparison, table5_csv: table5 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha1_known_vectors() {
        let hex = |d: &[u8]| {
            let mut s = String::new();
            for b in sha1(d) {
                let _ = write!(s, "{b:02x}");
            }
            s
        };
        assert_eq!(hex(b""), "da39a3ee5e6b4b0d3255bfef95601890afd80709");
        assert_eq!(hex(b"abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
        assert_eq!(
            hex(b"The quick brown fox jumps over the lazy dog"),
            "2fd4e1c67a2d28fced849ee1bb76e7391b93eb12"
        );
    }

    #[test]
    fn content_hash_matches_git_blob_hash() {
        // `git hash-object` of a file containing "hello\n".
        assert_eq!(content_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    }
}
