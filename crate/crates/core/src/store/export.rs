//! CSV and JSON exports. Floats are written with 17 significant digits so
//! every value parses back to the same bits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::binary::{read_file, write_file};
use crate::error::Result;
use crate::inference::MetricsReport;
use crate::slam::{EmResult, WeightMatrix, World};
use crate::vae::LossReport;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn matrix_csv(rows: &[Vec<f64>], corner: &str) -> String {
    let n = rows.first().map_or(0, Vec::len);
    let mut s = corner.to_string();
    for j in 0..n {
        write!(s, ",{j}").expect("string write");
    }
    s.push('\n');
    for (i, row) in rows.iter().enumerate() {
        s += &i.to_string();
        for v in row {
            s.push(',');
            s += &fmt_f64(*v);
        }
        s.push('\n');
    }
    s
}

/// `(file name, contents)` of every metrics CSV, in a fixed order.
pub fn metrics_csv(report: &MetricsReport) -> Vec<(&'static str, String)> {
    let n = report.confusion.len();
    let mut confusion = "true".to_string();
    for j in 0..n {
        write!(confusion, ",pred_{j}").expect("string write");
    }
    confusion.push('\n');
    for (i, row) in report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(confusion, "{i},{}", cells.join(",")).expect("string write");
    }
    let mut pr = "recall,precision\n".to_string();
    for (r, p) in &report.pr_curve {
        writeln!(pr, "{},{}", fmt_f64(*r), fmt_f64(*p)).expect("string write");
    }
    let mut summary = "metric,value\n".to_string();
    for (k, v) in [
        ("accuracy", report.accuracy),
        ("auc", report.auc),
        ("map", report.map),
        ("retrieval_iou", report.retrieval_iou),
        ("intra_class_distance", report.intra_class_distance),
        ("inter_class_distance", report.inter_class_distance),
    ] {
        writeln!(summary, "{k},{}", fmt_f64(v)).expect("string write");
    }
    writeln!(summary, "queries,{}", report.queries).expect("string write");
    for (c, v) in report.per_class_accuracy.iter().enumerate() {
        writeln!(summary, "accuracy_class_{c},{}", fmt_f64(*v)).expect("string write");
    }
    vec![
        ("confusion.csv", confusion),
        ("distances_euclid.csv", matrix_csv(&report.distances_euclid, "class")),
        ("distances_cosine.csv", matrix_csv(&report.distances_cosine, "class")),
        ("pr_curve.csv", pr),
        ("summary.csv", summary),
    ]
}

fn write_all(dir: &Path, files: Vec<(&'static str, String)>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::file(dir, e))?;
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            write_file(&path, text.as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn export_metrics(dir: &Path, report: &MetricsReport) -> Result<Vec<PathBuf>> {
    write_all(dir, metrics_csv(report))
}

/// `t, i, j, w` rows, plus a `w_full` column when the full-likelihood weights are given.
pub fn weights_csv(reduced: &WeightMatrix, full: Option<&WeightMatrix>) -> String {
    let mut s = if full.is_some() { "t,i,j,w,w_full\n" } else { "t,i,j,w\n" }.to_string();
    for (t, frame) in reduced.weights.iter().enumerate() {
        for (i, row) in frame.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                write!(s, "{t},{i},{j},{}", fmt_f64(*w)).expect("string write");
                if let Some(f) = full {
                    write!(s, ",{}", fmt_f64(f.weights[t][i][j])).expect("string write");
                }
                s.push('\n');
            }
        }
    }
    s
}

/// Per-epoch mean loss components.
pub fn history_csv(history: &[LossReport]) -> String {
    let mut s = "epoch,kl,recon,reg,total\n".to_string();
    for (e, r) in history.iter().enumerate() {
        writeln!(s, "{e},{},{},{},{}", fmt_f64(r.kl), fmt_f64(r.recon), fmt_f64(r.reg), fmt_f64(r.total))
            .expect("string write");
    }
    s
}

/// Trajectory, per-iteration cost and summary CSVs of an EM run.
pub fn em_csv(world: &World, result: &EmResult) -> Vec<(&'static str, String)> {
    let mut traj = "t".to_string();
    for p in ["true", "odom", "em"] {
        write!(traj, ",{p}_x,{p}_y,{p}_z,{p}_yaw").expect("string write");
    }
    traj.push('\n');
    let odom = world.odometry_trajectory();
    for (t, ((a, b), c)) in world.poses.iter().zip(&odom).zip(&result.poses).enumerate() {
        traj += &t.to_string();
        for p in [a, b, c] {
            for v in [p.position[0], p.position[1], p.position[2], p.yaw] {
                traj.push(',');
                traj += &fmt_f64(v);
            }
        }
        traj.push('\n');
    }
    let mut costs = "iteration,cost\n".to_string();
    for (k, c) in result.costs.iter().enumerate() {
        writeln!(costs, "{k},{}", fmt_f64(*c)).expect("string write");
    }
    let d = &result.diagnostics;
    let mut summary = "metric,value\n".to_string();
    for (k, v) in [
        ("pose_rmse", d.pose_rmse),
        ("odometry_rmse", d.odometry_rmse),
        ("landmark_rmse", d.landmark_rmse),
        ("label_accuracy", d.label_accuracy),
        ("class_accuracy", d.class_accuracy),
        ("association_accuracy", d.association_accuracy),
    ] {
        writeln!(summary, "{k},{}", fmt_f64(v)).expect("string write");
    }
    writeln!(summary, "iterations,{}", result.iterations).expect("string write");
    writeln!(summary, "converged,{}", result.converged).expect("string write");
    vec![("trajectory.csv", traj), ("em_costs.csv", costs), ("em_summary.csv", summary)]
}

pub fn export_em(dir: &Path, world: &World, result: &EmResult) -> Result<Vec<PathBuf>> {
    write_all(dir, em_csv(world, result))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)?.as_bytes())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slam::{em_run, simulate_world, synthetic_prior_table, SlamConfig};

    fn report() -> MetricsReport {
        MetricsReport {
            confusion: vec![vec![3, 1], vec![0, 4]],
            per_class_accuracy: vec![0.75, 1.0],
            accuracy: 0.875,
            distances_euclid: vec![vec![0.0, 0.1], vec![0.1, 0.0]],
            distances_cosine: vec![vec![0.0, 1.0 / 3.0], vec![1.0 / 3.0, 0.0]],
            pr_curve: vec![],
            auc: 0.9,
            map: 0.8,
            retrieval_iou: 0.6,
            intra_class_distance: 1.0,
            inter_class_distance: 2.0,
            queries: 8,
        }
    }

    #[test]
    fn metrics_files_have_expected_shape() {
        let files = metrics_csv(&report());
        let get = |n: &str| files.iter().find(|(k, _)| *k == n).unwrap().1.clone();
        assert_eq!(get("confusion.csv"), "true,pred_0,pred_1\n0,3,1\n1,0,4\n");
        assert_eq!(get("pr_curve.csv"), "recall,precision\n");
        let cos = get("distances_cosine.csv");
        let v: f64 = cos.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v.to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn reexport_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let paths = export_metrics(dir.path(), &report()).unwrap();
        let first: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        export_metrics(dir.path(), &report()).unwrap();
        let second: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        assert_eq!(paths.len(), 5);
    }

    #[test]
    fn world_and_em_result_roundtrip_through_json() {
        let table = synthetic_prior_table(2, 2, (2, 2), 2.0, 2).unwrap();
        let config = SlamConfig { landmarks: 3, keyframes: 6, ..SlamConfig::default() };
        let world = simulate_world(&config, &table, 8).unwrap();
        let res = em_run(&world, &table, &config, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_json(&dir.path().join("world.json"), &world).unwrap();
        save_json(&dir.path().join("em.json"), &res).unwrap();
        assert_eq!(load_json::<World>(&dir.path().join("world.json")).unwrap(), world);
        assert_eq!(load_json::<EmResult>(&dir.path().join("em.json")).unwrap(), res);
        let files = em_csv(&world, &res);
        assert_eq!(files[0].1.lines().count(), 7);
    }
}
