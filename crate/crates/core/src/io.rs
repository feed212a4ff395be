//! Parsers and writers for every on-disk format: KITTI calibration and
//! labels, detection and grid-point CSV, fused-object records, evaluation
//! reports and the key=value configuration file.
//!
//! Parsers report 1-based line numbers. Numbers use `.` as the only decimal
//! separator; non-finite values are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::eval::{EvalReport, GroundTruthObject, Prediction};
use crate::model::{BoundingBox2D, FusedObject, GridPoint, ModelError, MotionState};
use crate::projection::{CalibrationError, CameraCalibration};

/// KITTI colour camera resolution.
pub const KITTI_IMAGE_WIDTH: u32 = 1242;
pub const KITTI_IMAGE_HEIGHT: u32 = 375;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("line {line}, column {column}: malformed number")]
    MalformedNumber { line: usize, column: usize },
    #[error("key `{key}`: expected {expected} values, got {got}")]
    WrongArity {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: malformed record ({reason})")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: {source}")]
    InvariantViolation { line: usize, source: ModelError },
    #[error("line {line}: static point with non-zero velocity")]
    StaticWithVelocity { line: usize },
    #[error("line {line}: unknown configuration key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::MalformedNumber { line, .. }
            | ParseError::MalformedRecord { line, .. }
            | ParseError::InvariantViolation { line, .. }
            | ParseError::StaticWithVelocity { line }
            | ParseError::UnknownKey { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn parse_f64(token: &str) -> Option<f64> {
    token.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn field_f64(line: usize, name: &str, token: &str) -> Result<f64, ParseError> {
    parse_f64(token).ok_or_else(|| malformed(line, format!("bad {name} `{}`", token.trim())))
}

fn field_frame(line: usize, token: &str) -> Result<i64, ParseError> {
    token
        .trim()
        .parse::<i64>()
        .ok()
        .filter(|f| *f >= 0)
        .ok_or_else(|| malformed(line, format!("bad frame id `{}`", token.trim())))
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        (!t.is_empty() && !t.starts_with('#')).then_some((i + 1, t))
    })
}

// ---------------------------------------------------------------- calibration

/// Values that a KITTI calibration file does not carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub image_width: u32,
    pub image_height: u32,
    pub ground_height: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            image_width: KITTI_IMAGE_WIDTH,
            image_height: KITTI_IMAGE_HEIGHT,
            ground_height: crate::DEFAULT_GROUND_HEIGHT,
        }
    }
}

/// Parses a KITTI object calibration file.
///
/// Intrinsics come from the left 3x3 block of `P2`, rectification from
/// `R0_rect` and the grid-to-camera transform from `Tr_velo_to_cam`.
/// Other keys are ignored.
pub fn parse_calibration(
    text: &str,
    opts: &CalibrationOptions,
) -> Result<CameraCalibration, ParseError> {
    let mut entries: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let Some((key, rest)) = raw.split_once(':') else {
            continue;
        };
        let key = key.trim();
        if !matches!(key, "P2" | "R0_rect" | "Tr_velo_to_cam") {
            continue;
        }
        let base = raw.len() - rest.len();
        let mut values = Vec::new();
        let mut offset = 0;
        for token in rest.split_whitespace() {
            let at = rest[offset..].find(token).map_or(offset, |p| p + offset);
            offset = at + token.len();
            let v = parse_f64(token).ok_or(ParseError::MalformedNumber {
                line: idx + 1,
                column: base + at + 1,
            })?;
            values.push(v);
        }
        entries.insert(key, values);
    }

    let get = |key: &str, expected: usize| -> Result<&Vec<f64>, ParseError> {
        let v = entries
            .get(key)
            .ok_or_else(|| ParseError::MissingKey(key.to_string()))?;
        if v.len() != expected {
            return Err(ParseError::WrongArity {
                key: key.to_string(),
                expected,
                got: v.len(),
            });
        }
        Ok(v)
    };
    let p2 = get("P2", 12)?;
    let r0 = get("R0_rect", 9)?;
    let tr = get("Tr_velo_to_cam", 12)?;

    let intrinsics = Matrix3::new(
        p2[0], p2[1], p2[2], p2[4], p2[5], p2[6], p2[8], p2[9], p2[10],
    );
    let rectification = Matrix3::from_row_slice(r0);
    let rotation = Matrix3::new(
        tr[0], tr[1], tr[2], tr[4], tr[5], tr[6], tr[8], tr[9], tr[10],
    );
    let translation = Vector3::new(tr[3], tr[7], tr[11]);
    Ok(CameraCalibration::new(
        intrinsics,
        rectification,
        rotation,
        translation,
        opts.image_width,
        opts.image_height,
        opts.ground_height,
    )?)
}

fn join<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes the three keys read by [`parse_calibration`]. `P2` gets a zero
/// fourth column.
pub fn write_calibration(calib: &CameraCalibration) -> String {
    let k = calib.intrinsics();
    let p2 = [
        k[(0, 0)], k[(0, 1)], k[(0, 2)], 0.0,
        k[(1, 0)], k[(1, 1)], k[(1, 2)], 0.0,
        k[(2, 0)], k[(2, 1)], k[(2, 2)], 0.0,
    ];
    let r = calib.rectification();
    let r0: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])).collect();
    let (rot, t) = (calib.rotation(), calib.translation());
    let tr: Vec<f64> = (0..3)
        .flat_map(|i| [rot[(i, 0)], rot[(i, 1)], rot[(i, 2)], t[i]])
        .collect();
    format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        join(&p2),
        join(&r0),
        join(&tr)
    )
}

// ----------------------------------------------------------------- detections

/// `frame_id,class_label,confidence,x_min,y_min,x_max,y_max` per line.
pub fn parse_detections(text: &str) -> Result<Vec<(i64, BoundingBox2D)>, ParseError> {
    records(text)
        .map(|(line, rec)| {
            let f: Vec<&str> = rec.split(',').collect();
            if f.len() != 7 {
                return Err(malformed(line, format!("expected 7 fields, got {}", f.len())));
            }
            let frame = field_frame(line, f[0])?;
            let label = f[1].trim();
            if label.is_empty() {
                return Err(malformed(line, "empty class label"));
            }
            let conf = field_f64(line, "confidence", f[2])?;
            let x0 = field_f64(line, "x_min", f[3])?;
            let y0 = field_f64(line, "y_min", f[4])?;
            let x1 = field_f64(line, "x_max", f[5])?;
            let y1 = field_f64(line, "y_max", f[6])?;
            let bbox = BoundingBox2D::new(label, conf, x0, y0, x1, y1)
                .map_err(|source| ParseError::InvariantViolation { line, source })?;
            Ok((frame, bbox))
        })
        .collect()
}

pub fn write_detections<'a>(dets: impl IntoIterator<Item = (i64, &'a BoundingBox2D)>) -> String {
    let mut out = String::new();
    for (frame, b) in dets {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            frame,
            b.class_label(),
            b.confidence(),
            b.x_min(),
            b.y_min(),
            b.x_max(),
            b.y_max()
        );
    }
    out
}

// ---------------------------------------------------------------- grid points

/// `frame_id,x_o,y_o,vx_o,vy_o,state` per line, state `S` or `D`.
pub fn parse_grid_points(text: &str) -> Result<Vec<(i64, GridPoint)>, ParseError> {
    records(text)
        .map(|(line, rec)| {
            let f: Vec<&str> = rec.split(',').collect();
            if f.len() != 6 {
                return Err(malformed(line, format!("expected 6 fields, got {}", f.len())));
            }
            let frame = field_frame(line, f[0])?;
            let x = field_f64(line, "x", f[1])?;
            let y = field_f64(line, "y", f[2])?;
            let vx = field_f64(line, "vx", f[3])?;
            let vy = field_f64(line, "vy", f[4])?;
            let state = match f[5].trim() {
                "S" => MotionState::Static,
                "D" => MotionState::Dynamic,
                other => return Err(malformed(line, format!("bad state `{other}`"))),
            };
            GridPoint::new(x, y, vx, vy, state)
                .map(|p| (frame, p))
                .map_err(|e| match e {
                    ModelError::StaticWithVelocity { .. } => ParseError::StaticWithVelocity { line },
                    source => ParseError::InvariantViolation { line, source },
                })
        })
        .collect()
}

pub fn write_grid_points<'a>(points: impl IntoIterator<Item = (i64, &'a GridPoint)>) -> String {
    let mut out = String::new();
    for (frame, p) in points {
        let state = match p.state() {
            MotionState::Static => 'S',
            MotionState::Dynamic => 'D',
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            frame,
            p.x(),
            p.y(),
            p.vx(),
            p.vy(),
            state
        );
    }
    out
}

// ---------------------------------------------------------------- fused output

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// One JSON object per line, fixed field order, six decimals per number.
/// `heading` is omitted for static objects.
pub fn write_fused_objects(objects: &[FusedObject]) -> String {
    let mut out = String::new();
    for o in objects {
        let b = o.source_box();
        let (x, y) = o.position();
        let (vx, vy) = o.velocity();
        let _ = write!(
            out,
            "{{\"frame_id\":{},\"class\":{},\"motion\":\"{}\",\"x\":{:.6},\"y\":{:.6},\"vx\":{:.6},\"vy\":{:.6}",
            o.frame_id(),
            json_str(o.class_label()),
            o.motion(),
            x,
            y,
            vx,
            vy
        );
        if let Some(h) = o.heading() {
            let _ = write!(out, ",\"heading\":{h:.6}");
        }
        let _ = writeln!(
            out,
            ",\"n_dynamic\":{},\"n_static\":{},\"demoted\":{},\"confidence\":{:.6},\"box\":[{:.6},{:.6},{:.6},{:.6}]}}",
            o.n_dynamic(),
            o.n_static(),
            o.demoted(),
            b.confidence(),
            b.x_min(),
            b.y_min(),
            b.x_max(),
            b.y_max()
        );
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FusedRecord {
    frame_id: i64,
    class: String,
    motion: String,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    heading: Option<f64>,
    n_dynamic: usize,
    n_static: usize,
    demoted: bool,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

pub fn parse_fused_objects(text: &str) -> Result<Vec<FusedObject>, ParseError> {
    records(text)
        .map(|(line, rec)| {
            let r: FusedRecord =
                serde_json::from_str(rec).map_err(|e| malformed(line, e.to_string()))?;
            let motion = match r.motion.as_str() {
                "static" => MotionState::Static,
                "dynamic" => MotionState::Dynamic,
                other => return Err(malformed(line, format!("bad motion `{other}`"))),
            };
            // pi prints as 3.141593, just above pi
            let heading = r.heading.map(|h| {
                if h > std::f64::consts::PI && h <= std::f64::consts::PI + 1e-6 {
                    std::f64::consts::PI
                } else {
                    h
                }
            });
            let invariant = |source| ParseError::InvariantViolation { line, source };
            let [x0, y0, x1, y1] = r.bbox;
            let bbox = BoundingBox2D::new(r.class.clone(), r.confidence, x0, y0, x1, y1)
                .map_err(invariant)?;
            FusedObject::new(
                r.class,
                motion,
                (r.x, r.y),
                (r.vx, r.vy),
                heading,
                r.n_dynamic,
                r.n_static,
                r.demoted,
                bbox,
                r.frame_id,
            )
            .map_err(invariant)
        })
        .collect()
}

// ---------------------------------------------------------------- KITTI labels

/// Parses one KITTI object label file. Type is column 1, the 2D box columns
/// 5-8; when the 3D location is present its z (camera forward axis) becomes
/// the longitudinal distance. `DontCare` rows are skipped.
pub fn parse_kitti_labels(text: &str, frame_id: i64) -> Result<Vec<GroundTruthObject>, ParseError> {
    let mut out = Vec::new();
    for (line, rec) in records(text) {
        let f: Vec<&str> = rec.split_whitespace().collect();
        if f.len() < 8 {
            return Err(malformed(line, format!("expected at least 8 columns, got {}", f.len())));
        }
        if f[0] == "DontCare" {
            continue;
        }
        let number = |col: usize| -> Result<f64, ParseError> {
            parse_f64(f[col]).ok_or_else(|| malformed(line, format!("bad number in column {}", col + 1)))
        };
        let (x0, y0, x1, y1) = (number(4)?, number(5)?, number(6)?, number(7)?);
        let distance = if f.len() >= 14 { Some(number(13)?) } else { None };
        let gt = GroundTruthObject::new(frame_id, f[0], x0, y0, x1, y1, distance)
            .map_err(|source| ParseError::InvariantViolation { line, source })?;
        out.push(gt);
    }
    Ok(out)
}

/// KITTI label lines. Objects without a distance are written with the
/// 8 leading columns only.
pub fn write_kitti_labels<'a>(gts: impl IntoIterator<Item = &'a GroundTruthObject>) -> String {
    let mut out = String::new();
    for g in gts {
        let b = &g.bbox;
        let _ = write!(
            out,
            "{} 0 0 0 {} {} {} {}",
            g.class_label,
            b.x_min(),
            b.y_min(),
            b.x_max(),
            b.y_max()
        );
        if let Some(z) = g.longitudinal_distance {
            let _ = write!(out, " 0 0 0 0 0 {z} 0");
        }
        out.push('\n');
    }
    out
}

/// Frame id from a file name such as `000042.txt`.
pub fn frame_id_from_path(path: &Path) -> Option<i64> {
    path.file_stem()?.to_str()?.parse::<i64>().ok().filter(|f| *f >= 0)
}

pub fn read_text(path: &Path) -> Result<String, ParseError> {
    std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads ground truth from a directory of per-frame `NNNNNN.txt` files, or
/// from a single label file whose numeric stem (if any) is its frame id.
pub fn read_kitti_labels(path: &Path) -> Result<Vec<GroundTruthObject>, (PathBuf, ParseError)> {
    let io_err = |source| {
        (
            path.to_path_buf(),
            ParseError::Io {
                path: path.to_path_buf(),
                source,
            },
        )
    };
    if path.is_dir() {
        let mut files: Vec<(i64, PathBuf)> = std::fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .filter_map(|p| frame_id_from_path(&p).map(|f| (f, p)))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for (frame, file) in files {
            let text = read_text(&file).map_err(|e| (file.clone(), e))?;
            out.extend(parse_kitti_labels(&text, frame).map_err(|e| (file.clone(), e))?);
        }
        Ok(out)
    } else {
        let text = read_text(path).map_err(|e| (path.to_path_buf(), e))?;
        let frame = frame_id_from_path(path).unwrap_or(0);
        parse_kitti_labels(&text, frame).map_err(|e| (path.to_path_buf(), e))
    }
}

/// Converts fused-object records into evaluation predictions.
pub fn predictions_from_fused(objects: &[FusedObject]) -> Vec<Prediction> {
    objects.iter().map(Prediction::from).collect()
}

// ---------------------------------------------------------------- eval reports

/// One JSON record per class followed by a final `mAP` record.
pub fn write_metrics_report(report: &EvalReport) -> String {
    let mut out = String::new();
    for c in &report.classes {
        let _ = writeln!(
            out,
            "{{\"class\":{},\"tp\":{},\"fp\":{},\"fn\":{},\"precision\":{:.6},\"recall\":{:.6},\"f1\":{:.6},\"ap\":{:.6}}}",
            json_str(&c.class_label),
            c.tp,
            c.fp,
            c.fn_,
            c.precision,
            c.recall,
            c.f1,
            c.ap
        );
    }
    let _ = writeln!(
        out,
        "{{\"mAP\":{:.6},\"label_mismatches\":{}}}",
        report.map,
        report.label_mismatches.len()
    );
    out
}

/// `class,confidence,recall,precision` rows in descending confidence.
pub fn write_pr_curves(report: &EvalReport) -> String {
    let mut out = String::from("class,confidence,recall,precision\n");
    for (label, curve) in &report.curves {
        for p in curve.points() {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                label, p.confidence, p.recall, p.precision
            );
        }
    }
    out
}

// ---------------------------------------------------------------- config

/// Settings read from a `key = value` file. Absent keys stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub calib: Option<PathBuf>,
    pub ground_height: Option<f64>,
    pub iou_threshold: Option<f64>,
    pub cutoff_m: Option<f64>,
    pub workers: Option<usize>,
    pub ap_method: Option<String>,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
}

pub fn parse_config(text: &str) -> Result<Config, ParseError> {
    let mut cfg = Config::default();
    for (line, rec) in records(text) {
        let (key, value) = rec
            .split_once('=')
            .ok_or_else(|| malformed(line, "expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let float = || field_f64(line, key, value);
        let int = || {
            value
                .parse::<u32>()
                .map_err(|_| malformed(line, format!("bad {key} `{value}`")))
        };
        match key {
            "calib" => cfg.calib = Some(PathBuf::from(value)),
            "ground_height" => cfg.ground_height = Some(float()?),
            "iou_threshold" => cfg.iou_threshold = Some(float()?),
            "cutoff_m" => cfg.cutoff_m = Some(float()?),
            "workers" => cfg.workers = Some(int()? as usize),
            "ap_method" => cfg.ap_method = Some(value.to_string()),
            "image_width" => cfg.image_width = Some(int()?),
            "image_height" => cfg.image_height = Some(int()?),
            _ => {
                return Err(ParseError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}

pub fn write_config(cfg: &Config) -> String {
    let mut out = String::new();
    if let Some(v) = &cfg.calib {
        let _ = writeln!(out, "calib = {}", v.display());
    }
    if let Some(v) = cfg.ground_height {
        let _ = writeln!(out, "ground_height = {v}");
    }
    if let Some(v) = cfg.iou_threshold {
        let _ = writeln!(out, "iou_threshold = {v}");
    }
    if let Some(v) = cfg.cutoff_m {
        let _ = writeln!(out, "cutoff_m = {v}");
    }
    if let Some(v) = cfg.workers {
        let _ = writeln!(out, "workers = {v}");
    }
    if let Some(v) = &cfg.ap_method {
        let _ = writeln!(out, "ap_method = {v}");
    }
    if let Some(v) = cfg.image_width {
        let _ = writeln!(out, "image_width = {v}");
    }
    if let Some(v) = cfg.image_height {
        let _ = writeln!(out, "image_height = {v}");
    }
    out
}

/// Input and output locations of one fusion run.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLayout {
    pub detections_path: PathBuf,
    pub grid_path: PathBuf,
    pub labels_path: PathBuf,
    pub calib_path: PathBuf,
    pub output_path: PathBuf,
}

impl DatasetLayout {
    /// Conventional file names inside a fixture directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            detections_path: dir.join("detections.csv"),
            grid_path: dir.join("grid.csv"),
            labels_path: dir.join("labels"),
            calib_path: dir.join("calib.txt"),
            output_path: dir.join("fused.jsonl"),
        }
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        for (name, p) in [
            ("detections_path", &self.detections_path),
            ("grid_path", &self.grid_path),
            ("labels_path", &self.labels_path),
            ("calib_path", &self.calib_path),
            ("output_path", &self.output_path),
        ] {
            if p.as_os_str().is_empty() {
                return Err(ParseError::MissingKey(name.to_string()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY_CALIB: &str = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\n\
        R0_rect: 1 0 0 0 1 0 0 0 1\n\
        Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";

    fn opts() -> CalibrationOptions {
        CalibrationOptions {
            image_width: 100,
            image_height: 100,
            ground_height: 0.0,
        }
    }

    #[test]
    fn identity_calibration() {
        let c = parse_calibration(IDENTITY_CALIB, &opts()).unwrap();
        assert_eq!(c.intrinsics(), &Matrix3::identity());
        assert_eq!(c.rectification(), &Matrix3::identity());
        assert_eq!(c.rotation(), &Matrix3::identity());
        assert_eq!(c.translation(), &Vector3::zeros());
    }

    #[test]
    fn calibration_ignores_unknown_keys() {
        let text = format!("P0: 1 2 3\ncalib_time: 09-Jan-2012 13:57:47\n{IDENTITY_CALIB}");
        assert!(parse_calibration(&text, &opts()).is_ok());
    }

    #[test]
    fn calibration_missing_key() {
        let text = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
        match parse_calibration(text, &opts()) {
            Err(ParseError::MissingKey(k)) => assert_eq!(k, "R0_rect"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calibration_malformed_number() {
        let text = IDENTITY_CALIB.replacen("P2: 1 0 0", "P2: 1 0 x", 1);
        match parse_calibration(&text, &opts()) {
            Err(ParseError::MalformedNumber { line, column }) => {
                assert_eq!(line, 1);
                assert_eq!(&text[column - 1..column], "x");
            }
            other => panic!("{other:?}"),
        }
        let comma = IDENTITY_CALIB.replacen("P2: 1 0", "P2: 1,5 0", 1);
        assert!(matches!(
            parse_calibration(&comma, &opts()),
            Err(ParseError::MalformedNumber { .. })
        ));
    }

    #[test]
    fn calibration_wrong_arity() {
        let text = IDENTITY_CALIB.replace("R0_rect: 1 0 0 0 1 0 0 0 1", "R0_rect: 1 0 0 0 1 0 0 0");
        match parse_calibration(&text, &opts()) {
            Err(ParseError::WrongArity { key, expected, got }) => {
                assert_eq!((key.as_str(), expected, got), ("R0_rect", 9, 8));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calibration_round_trip() {
        let c = parse_calibration(IDENTITY_CALIB, &opts()).unwrap();
        let again = parse_calibration(&write_calibration(&c), &opts()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn detections() {
        let d = parse_detections("# header\n\n0,car,0.95,100,40,200,120\n").unwrap();
        assert_eq!(d.len(), 1);
        let (frame, b) = &d[0];
        assert_eq!(*frame, 0);
        assert_eq!(b.class_label(), "car");
        assert_eq!(b.confidence(), 0.95);
        assert_eq!((b.x_min(), b.y_min(), b.x_max(), b.y_max()), (100.0, 40.0, 200.0, 120.0));

        assert!(matches!(
            parse_detections("0,car,1.2,100,40,200,120"),
            Err(ParseError::InvariantViolation { line: 1, .. })
        ));
        assert!(matches!(
            parse_detections("0,car,0.5,100,40,200"),
            Err(ParseError::MalformedRecord { line: 1, .. })
        ));
        assert!(matches!(
            parse_detections("0,car,0.5,100,40,200,NaN"),
            Err(ParseError::MalformedRecord { .. })
        ));
        assert!(matches!(
            parse_detections("-1,car,0.5,100,40,200,120"),
            Err(ParseError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn grid_points() {
        let g = parse_grid_points("0,12.5,-3.0,0,0,S\n0,12.5,-3.0,4.1,0.2,D\n").unwrap();
        assert_eq!(g[0].1, GridPoint::new_static(12.5, -3.0).unwrap());
        assert_eq!(
            g[1].1,
            GridPoint::new(12.5, -3.0, 4.1, 0.2, MotionState::Dynamic).unwrap()
        );
        assert!(matches!(
            parse_grid_points("0,12.5,-3.0,0,0,S\n0,1,1,2,0,S"),
            Err(ParseError::StaticWithVelocity { line: 2 })
        ));
        assert!(matches!(
            parse_grid_points("0,1,1,0,0,X"),
            Err(ParseError::MalformedRecord { .. })
        ));
        assert!(matches!(
            parse_grid_points("0,1;5,1,0,0,S"),
            Err(ParseError::MalformedRecord { .. })
        ));
    }

    fn dynamic_object() -> FusedObject {
        let b = BoundingBox2D::new("car", 0.875, 100.25, 40.5, 200.0, 120.125).unwrap();
        FusedObject::new(
            "car",
            MotionState::Dynamic,
            (12.345678, -3.5),
            (4.0, 0.25),
            Some(0.062418),
            3,
            1,
            false,
            b,
            7,
        )
        .unwrap()
    }

    #[test]
    fn fused_output() {
        assert_eq!(write_fused_objects(&[]), "");
        let b = BoundingBox2D::new("van", 0.5, 1.0, 2.0, 3.0, 4.0).unwrap();
        let s = FusedObject::new(
            "van",
            MotionState::Static,
            (1.0, 2.0),
            (0.0, 0.0),
            None,
            0,
            2,
            false,
            b,
            0,
        )
        .unwrap();
        let text = write_fused_objects(&[s]);
        assert_eq!(text.lines().count(), 1);
        assert!(!text.contains("heading"));
        assert_eq!(
            text,
            "{\"frame_id\":0,\"class\":\"van\",\"motion\":\"static\",\"x\":1.000000,\"y\":2.000000,\
             \"vx\":0.000000,\"vy\":0.000000,\"n_dynamic\":0,\"n_static\":2,\"demoted\":false,\
             \"confidence\":0.500000,\"box\":[1.000000,2.000000,3.000000,4.000000]}\n"
        );
    }

    #[test]
    fn fused_round_trip() {
        let o = dynamic_object();
        let back = parse_fused_objects(&write_fused_objects(std::slice::from_ref(&o))).unwrap();
        assert_eq!(back, vec![o]);
    }

    #[test]
    fn fused_heading_at_pi_survives_rounding() {
        let b = BoundingBox2D::new("car", 0.5, 1.0, 2.0, 3.0, 4.0).unwrap();
        let o = FusedObject::new(
            "car",
            MotionState::Dynamic,
            (1.0, 2.0),
            (-1.0, 0.0),
            Some(std::f64::consts::PI),
            1,
            0,
            false,
            b,
            0,
        )
        .unwrap();
        let back = parse_fused_objects(&write_fused_objects(&[o])).unwrap();
        assert_eq!(back[0].heading(), Some(std::f64::consts::PI));
    }

    #[test]
    fn kitti_labels() {
        let text = "dynamicCar 0.00 0 -1.57 599.41 156.40 629.75 189.25 2.85 2.63 12.34 0.47 1.49 69.44 -1.56\n\
                    DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n\
                    staticVan 0 0 0 10 20 30 40\n";
        let g = parse_kitti_labels(text, 3).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].class_label, "dynamicCar");
        assert_eq!(g[0].frame_id, 3);
        assert_eq!(g[0].bbox.x_min(), 599.41);
        assert_eq!(g[0].bbox.y_max(), 189.25);
        assert_eq!(g[0].longitudinal_distance, Some(69.44));
        assert_eq!(g[1].longitudinal_distance, None);
        assert_eq!(g[1].bbox.confidence(), 1.0);

        let again = parse_kitti_labels(&write_kitti_labels(&g), 3).unwrap();
        assert_eq!(again, g);
        assert!(parse_kitti_labels("Car 0 0 0 10 20", 0).is_err());
    }

    #[test]
    fn config_file() {
        let cfg = parse_config(
            "# run settings\ncalib = data/calib.txt\nground_height = -1.73\niou_threshold=0.7\n\
             cutoff_m = 25\nworkers = 4\nap_method = 11-point\nimage_width = 1242\nimage_height = 375\n",
        )
        .unwrap();
        assert_eq!(cfg.calib, Some(PathBuf::from("data/calib.txt")));
        assert_eq!(cfg.ground_height, Some(-1.73));
        assert_eq!(cfg.iou_threshold, Some(0.7));
        assert_eq!(cfg.cutoff_m, Some(25.0));
        assert_eq!(cfg.workers, Some(4));
        assert_eq!(cfg.ap_method.as_deref(), Some("11-point"));
        assert_eq!(parse_config(&write_config(&cfg)).unwrap(), cfg);
        assert!(matches!(
            parse_config("colour = red"),
            Err(ParseError::UnknownKey { line: 1, .. })
        ));
        assert!(parse_config("workers = many").is_err());
    }

    #[test]
    fn layout_in_dir() {
        let l = DatasetLayout::in_dir(Path::new("fx"));
        assert_eq!(l.grid_path, PathBuf::from("fx/grid.csv"));
        assert!(l.validate().is_ok());
    }
}
