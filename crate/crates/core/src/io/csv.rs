//! CSV formats.
//!
//! - dataset: `label,f0,f1,...` (comma), floats with 17 significant
//!   digits so write→read round-trips bit-exactly;
//! - trial list: `enroll_ids;test_id;label` with `|`-separated enrollment
//!   ids and label 1 = target / 0 = non-target (semicolon);
//! - scores: trial columns plus `score_e2e;score_cos;score_fused`;
//! - ROC operating points, training log, audit histograms, embedding
//!   dumps (comma).

use std::fs;
use std::path::Path;

use super::{atomic_write, format_f64, parse_f64, parse_usize};
use crate::audit::{AuditReport, PropertyStats};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::scoring::{RocReport, ScoredTrial, Trial};
use crate::trainer::TrainLogEntry;

pub fn save_csv_dataset(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let d = dataset.input_dim();
    let mut out = String::from("label");
    for j in 0..d {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for i in 0..dataset.len() {
        out.push_str(&dataset.labels[i].to_string());
        for &v in dataset.features.row(i) {
            out.push(',');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn load_csv_dataset(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let head_fields: Vec<&str> = header.split(',').collect();
    if head_fields.first() != Some(&"label") {
        return Err(Error::Data(format!(
            "{}: line 1: header must start with 'label', got {header:?}",
            path.display()
        )));
    }
    let width = head_fields.len() - 1;

    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width + 1 {
            return Err(Error::Data(format!(
                "{}: line {line_no}: expected {} fields, got {}",
                path.display(),
                width + 1,
                fields.len()
            )));
        }
        labels.push(parse_usize(
            fields[0],
            &format!("{}: line {line_no}", path.display()),
        )?);
        for f in &fields[1..] {
            data.push(parse_f64(f, &format!("{}: line {line_no}", path.display()))?);
        }
        rows += 1;
    }
    let features = Matrix::from_vec(rows, width, data)?;
    LabeledDataset::new(
        features,
        labels,
        path.file_name().and_then(|s| s.to_str()).unwrap_or("csv"),
    )
}

pub fn write_trials(trials: &[Trial], path: &Path) -> Result<()> {
    let mut out = String::from("enroll_ids;test_id;label\n");
    for t in trials {
        let ids: Vec<String> = t.enroll_ids.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{};{};{}\n",
            ids.join("|"),
            t.test_id,
            if t.target { 1 } else { 0 }
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn load_trials(path: &Path) -> Result<Vec<Trial>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    if header.trim() != "enroll_ids;test_id;label" {
        return Err(Error::Data(format!(
            "{}: line 1: expected header 'enroll_ids;test_id;label', got {header:?}",
            path.display()
        )));
    }
    let mut trials = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let ctx = format!("{}: line {line_no}", path.display());
        let fields: Vec<&str> = line.split(';').collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!("{ctx}: expected 3 fields, got {}", fields.len())));
        }
        let enroll_ids = fields[0]
            .split('|')
            .map(|s| parse_usize(s, &ctx))
            .collect::<Result<Vec<usize>>>()?;
        if enroll_ids.is_empty() {
            return Err(Error::Data(format!("{ctx}: empty enrollment set")));
        }
        let test_id = parse_usize(fields[1], &ctx)?;
        let target = match fields[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::Data(format!("{ctx}: label must be 1 or 0, got {other:?}"))),
        };
        trials.push(Trial {
            enroll_ids,
            test_id,
            target,
        });
    }
    Ok(trials)
}

pub fn write_scores(scored: &[ScoredTrial], path: &Path) -> Result<()> {
    let mut out = String::from("enroll_ids;test_id;label;score_e2e;score_cos;score_fused\n");
    for s in scored {
        let ids: Vec<String> = s.trial.enroll_ids.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{};{};{};{};{};{}\n",
            ids.join("|"),
            s.trial.test_id,
            if s.trial.target { 1 } else { 0 },
            format_f64(s.score_e2e),
            format_f64(s.score_cos),
            format_f64(s.score_fused)
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Operating points for several scoring methods in one file:
/// `method,threshold,far,miss`.
pub fn write_roc_reports(reports: &[(&str, &RocReport)], path: &Path) -> Result<()> {
    let mut out = String::from("method,threshold,far,miss\n");
    for (method, report) in reports {
        for p in &report.points {
            out.push_str(&format!(
                "{method},{},{},{}\n",
                format_f64(p.threshold),
                format_f64(p.far),
                format_f64(p.miss)
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// `step,epoch,loss_pair,loss_aux,loss_total,lr,val_eer,wall_time_s`;
/// `val_eer` is empty on steps without validation. The trailing wall-time
/// column is the only non-reproducible field in any output file.
pub fn write_train_log(log: &[TrainLogEntry], path: &Path) -> Result<()> {
    let mut out = String::from("step,epoch,loss_pair,loss_aux,loss_total,lr,val_eer,wall_time_s\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            e.step,
            e.epoch,
            format_f64(e.loss_pair),
            format_f64(e.loss_aux),
            format_f64(e.loss_total),
            format_f64(e.lr),
            e.val_eer.map(format_f64).unwrap_or_default(),
            e.wall_time_s
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// `label,z0,z1,...` embedding dump for external plotting.
pub fn write_embeddings(embeddings: &Matrix, labels: &[usize], path: &Path) -> Result<()> {
    if embeddings.rows() != labels.len() {
        return Err(Error::Data(format!(
            "embedding rows {} != label count {}",
            embeddings.rows(),
            labels.len()
        )));
    }
    let mut out = String::from("label");
    for j in 0..embeddings.cols() {
        out.push_str(&format!(",z{j}"));
    }
    out.push('\n');
    for i in 0..embeddings.rows() {
        out.push_str(&labels[i].to_string());
        for &v in embeddings.row(i) {
            out.push(',');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

fn histogram_csv(stats: &PropertyStats, bins: usize) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (b, &count) in stats.histogram.iter().enumerate() {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        out.push_str(&format!("{},{},{count}\n", format_f64(lo), format_f64(hi)));
    }
    out
}

/// One histogram CSV per property plus a summary CSV, all in `dir`.
pub fn write_audit_report(report: &AuditReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let props = [
        ("self_distance", &report.self_distance),
        ("symmetry_gap", &report.symmetry_gap),
        ("triangle_slack", &report.triangle_slack),
    ];
    for (name, stats) in props {
        atomic_write(
            &dir.join(format!("{name}.csv")),
            histogram_csv(stats, report.bins).as_bytes(),
        )?;
    }
    let mut summary = String::from("property,n,zeros,min,median,mean,max\n");
    for (name, stats) in props {
        summary.push_str(&format!(
            "{name},{},{},{},{},{},{}\n",
            stats.n,
            stats.zeros,
            format_f64(stats.min),
            format_f64(stats.median),
            format_f64(stats.mean),
            format_f64(stats.max)
        ));
    }
    atomic_write(&dir.join("summary.csv"), summary.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn dataset_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let mut rng = Rng::new(3);
        let features =
            Matrix::from_vec(20, 5, (0..100).map(|_| rng.normal() * 1e3).collect()).unwrap();
        let labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let ds = LabeledDataset::new(features, labels, "x").unwrap();
        save_csv_dataset(&ds, &path).unwrap();
        let back = load_csv_dataset(&path).unwrap();
        assert_eq!(ds.features, back.features);
        assert_eq!(ds.labels, back.labels);
    }

    #[test]
    fn single_row_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        fs::write(&path, "label,f0,f1\n0,1.5,2.5\n").unwrap();
        let ds = load_csv_dataset(&path).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.features.row(0), &[1.5, 2.5]);
    }

    #[test]
    fn ragged_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "label,f0,f1\n0,1.0,2.0\n1,3.0\n").unwrap();
        let err = load_csv_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn non_numeric_cell_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "label,f0\n0,abc\n").unwrap();
        let err = load_csv_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn trial_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.csv");
        let trials = vec![
            Trial {
                enroll_ids: vec![0, 3, 5],
                test_id: 7,
                target: true,
            },
            Trial {
                enroll_ids: vec![2],
                test_id: 4,
                target: false,
            },
        ];
        write_trials(&trials, &path).unwrap();
        let back = load_trials(&path).unwrap();
        assert_eq!(trials, back);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("enroll_ids;test_id;label\n0|3|5;7;1\n"));
    }

    #[test]
    fn bad_trial_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.csv");
        fs::write(&path, "enroll_ids;test_id;label\n0;1;2\n").unwrap();
        assert!(load_trials(&path).is_err());
    }
}
