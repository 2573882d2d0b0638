use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mask::MaskRef;
use super::DataprepError;
use crate::geometry::{CameraIntrinsics, PointSet3, RigidPose, Rotation3};
use crate::tensor;

pub const NUM_JOINTS: usize = 21;
pub const NUM_VERTICES: usize = 778;
pub const MANO_POSE_DIM: usize = 48;
pub const MANO_SHAPE_DIM: usize = 10;

/// Hand mesh vertices, inline or in an external tensor file (`[778, 3]`).
#[derive(Debug, Clone, PartialEq)]
pub enum VertexData {
    Inline(PointSet3),
    External(String),
}

impl VertexData {
    pub fn resolve(&self, base_dir: &Path) -> Result<PointSet3, DataprepError> {
        match self {
            VertexData::Inline(p) => Ok(p.clone()),
            VertexData::External(rel) => {
                let path = base_dir.join(rel);
                let t = tensor::load_tensors(&path)
                    .map_err(|e| DataprepError::Io {
                        path: path.clone(),
                        message: e.to_string(),
                    })?
                    .into_iter()
                    .next()
                    .map(|(_, t)| t)
                    .ok_or_else(|| DataprepError::Io {
                        path: path.clone(),
                        message: "no tensor in file".into(),
                    })?;
                let points = PointSet3::from_flat(t.data()).map_err(|e| DataprepError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                if points.len() != NUM_VERTICES {
                    return Err(DataprepError::Io {
                        path,
                        message: format!("expected {NUM_VERTICES} vertices, got {}", points.len()),
                    });
                }
                Ok(points)
            }
        }
    }
}

/// Per-frame hand annotation (or prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct HandAnnotation {
    pub joints_3d: PointSet3,
    pub joints_2d: Vec<[f64; 2]>,
    pub vertices_3d: Option<VertexData>,
    pub mano_pose: Vec<f64>,
    pub mano_shape: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub id: String,
    pub pose: Option<RigidPose>,
    /// Model-frame keypoints (box corners by default).
    pub keypoints: Option<PointSet3>,
    /// Predicted 2D keypoints, one per model keypoint.
    pub keypoints_2d: Option<Vec<[f64; 2]>>,
    pub diameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub sequence_id: String,
    pub frame_index: u64,
    pub hand: HandAnnotation,
    pub intrinsics: CameraIntrinsics,
    pub object: Option<ObjectAnnotation>,
    pub amodal_mask: Option<MaskRef>,
    pub full_mask: Option<MaskRef>,
    pub grasping: Option<bool>,
    pub occlusion: Option<f64>,
}

impl FrameRecord {
    pub fn object_pose(&self) -> Option<&RigidPose> {
        self.object.as_ref().and_then(|o| o.pose.as_ref())
    }
}

// ---- wire schema -----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum RawVertices {
    Inline(Vec<f64>),
    External { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct RawObject {
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    keypoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    keypoints_2d: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diameter: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct RawMasks {
    #[serde(skip_serializing_if = "Option::is_none")]
    amodal: Option<MaskRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    full: Option<MaskRef>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct RawLabels {
    #[serde(skip_serializing_if = "Option::is_none")]
    grasping: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    occlusion: Option<f64>,
}

/// One manifest line as written on disk; every field optional so that
/// missing fields are reported by name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct RawRecord {
    frame_id: Option<String>,
    sequence_id: Option<String>,
    frame_index: Option<i64>,
    joints_3d: Option<Vec<f64>>,
    joints_2d: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertices_3d: Option<RawVertices>,
    mano_pose: Option<Vec<f64>>,
    mano_shape: Option<Vec<f64>>,
    intrinsics: Option<RawIntrinsics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    object: Option<RawObject>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masks: Option<RawMasks>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<RawLabels>,
}

fn require<T>(value: Option<T>, line: usize, field: &str) -> Result<T, DataprepError> {
    value.ok_or_else(|| DataprepError::Schema {
        line,
        field: field.to_string(),
        message: "missing".into(),
    })
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> DataprepError {
    DataprepError::Schema {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn exact_len(v: Vec<f64>, len: usize, line: usize, field: &str) -> Result<Vec<f64>, DataprepError> {
    if v.len() != len {
        return Err(schema(
            line,
            field,
            format!("expected {len} values, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(schema(line, field, "non-finite value"));
    }
    Ok(v)
}

fn pairs(v: &[f64]) -> Vec<[f64; 2]> {
    v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

impl RawRecord {
    fn into_record(self, line: usize) -> Result<FrameRecord, DataprepError> {
        let frame_id = require(self.frame_id, line, "frame_id")?;
        let sequence_id = require(self.sequence_id, line, "sequence_id")?;
        let frame_index = require(self.frame_index, line, "frame_index")?;
        if frame_index < 0 {
            return Err(schema(line, "frame_index", "must be non-negative"));
        }
        let joints_3d = exact_len(
            require(self.joints_3d, line, "joints_3d")?,
            3 * NUM_JOINTS,
            line,
            "joints_3d",
        )?;
        let joints_2d = exact_len(
            require(self.joints_2d, line, "joints_2d")?,
            2 * NUM_JOINTS,
            line,
            "joints_2d",
        )?;
        let vertices_3d = match self.vertices_3d {
            None => None,
            Some(RawVertices::Inline(v)) => {
                let v = exact_len(v, 3 * NUM_VERTICES, line, "vertices_3d")?;
                Some(VertexData::Inline(
                    PointSet3::from_flat(&v)
                        .map_err(|e| schema(line, "vertices_3d", e.to_string()))?,
                ))
            }
            Some(RawVertices::External { path }) => Some(VertexData::External(path)),
        };
        let mano_pose = exact_len(
            require(self.mano_pose, line, "mano_pose")?,
            MANO_POSE_DIM,
            line,
            "mano_pose",
        )?;
        let mano_shape = exact_len(
            require(self.mano_shape, line, "mano_shape")?,
            MANO_SHAPE_DIM,
            line,
            "mano_shape",
        )?;
        let raw_k = require(self.intrinsics, line, "intrinsics")?;
        let intrinsics = CameraIntrinsics::new(raw_k.fx, raw_k.fy, raw_k.cx, raw_k.cy)
            .map_err(|e| schema(line, "intrinsics", e.to_string()))?;

        let object = self.object.map(|o| o.into_object(line)).transpose()?;
        let masks = self.masks.unwrap_or_default();
        let labels = self.labels.unwrap_or_default();
        if let Some(o) = labels.occlusion {
            if !(0.0..=1.0).contains(&o) {
                return Err(schema(line, "labels.occlusion", "must lie in [0, 1]"));
            }
        }
        let record = FrameRecord {
            frame_id,
            sequence_id,
            frame_index: frame_index as u64,
            hand: HandAnnotation {
                joints_3d: PointSet3::from_flat(&joints_3d)
                    .map_err(|e| schema(line, "joints_3d", e.to_string()))?,
                joints_2d: pairs(&joints_2d),
                vertices_3d,
                mano_pose,
                mano_shape,
            },
            intrinsics,
            object,
            amodal_mask: masks.amodal,
            full_mask: masks.full,
            grasping: labels.grasping,
            occlusion: labels.occlusion,
        };
        if record.grasping == Some(true) && record.object_pose().is_none() {
            return Err(schema(
                line,
                "object",
                "grasping frames need an object pose",
            ));
        }
        Ok(record)
    }

    fn from_record(r: &FrameRecord) -> Self {
        let masks = (r.amodal_mask.is_some() || r.full_mask.is_some()).then(|| RawMasks {
            amodal: r.amodal_mask.clone(),
            full: r.full_mask.clone(),
        });
        let labels = (r.grasping.is_some() || r.occlusion.is_some()).then_some(RawLabels {
            grasping: r.grasping,
            occlusion: r.occlusion,
        });
        RawRecord {
            frame_id: Some(r.frame_id.clone()),
            sequence_id: Some(r.sequence_id.clone()),
            frame_index: Some(r.frame_index as i64),
            joints_3d: Some(r.hand.joints_3d.flatten()),
            joints_2d: Some(r.hand.joints_2d.iter().flatten().copied().collect()),
            vertices_3d: r.hand.vertices_3d.as_ref().map(|v| match v {
                VertexData::Inline(p) => RawVertices::Inline(p.flatten()),
                VertexData::External(path) => RawVertices::External { path: path.clone() },
            }),
            mano_pose: Some(r.hand.mano_pose.clone()),
            mano_shape: Some(r.hand.mano_shape.clone()),
            intrinsics: Some(RawIntrinsics {
                fx: r.intrinsics.fx,
                fy: r.intrinsics.fy,
                cx: r.intrinsics.cx,
                cy: r.intrinsics.cy,
            }),
            object: r.object.as_ref().map(|o| RawObject {
                id: Some(o.id.clone()),
                rotation: o.pose.map(|p| p.rotation.to_row_major().to_vec()),
                translation: o.pose.map(|p| p.translation.to_vec()),
                keypoints: o.keypoints.as_ref().map(|k| k.flatten()),
                keypoints_2d: o
                    .keypoints_2d
                    .as_ref()
                    .map(|k| k.iter().flatten().copied().collect()),
                diameter: o.diameter,
            }),
            masks,
            labels,
        }
    }
}

impl RawObject {
    fn into_object(self, line: usize) -> Result<ObjectAnnotation, DataprepError> {
        let id = require(self.id, line, "object.id")?;
        let pose = match (self.rotation, self.translation) {
            (Some(r), Some(t)) => {
                let r = exact_len(r, 9, line, "object.rotation")?;
                let t = exact_len(t, 3, line, "object.translation")?;
                let rotation = Rotation3::from_row_major(&r)
                    .map_err(|e| schema(line, "object.rotation", e.to_string()))?;
                Some(RigidPose::new(rotation, [t[0], t[1], t[2]]))
            }
            (None, None) => None,
            (Some(_), None) => return Err(schema(line, "object.translation", "missing")),
            (None, Some(_)) => return Err(schema(line, "object.rotation", "missing")),
        };
        let keypoints = self
            .keypoints
            .map(|k| {
                PointSet3::from_flat(&k)
                    .map_err(|e| schema(line, "object.keypoints", e.to_string()))
            })
            .transpose()?;
        let keypoints_2d = match self.keypoints_2d {
            None => None,
            Some(k) => {
                if k.len() % 2 != 0 || k.iter().any(|v| !v.is_finite()) {
                    return Err(schema(
                        line,
                        "object.keypoints_2d",
                        "expected finite (u, v) pairs",
                    ));
                }
                Some(pairs(&k))
            }
        };
        if let Some(d) = self.diameter {
            if !(d > 0.0 && d.is_finite()) {
                return Err(schema(line, "object.diameter", "must be positive"));
            }
        }
        Ok(ObjectAnnotation {
            id,
            pose,
            keypoints,
            keypoints_2d,
            diameter: self.diameter,
        })
    }
}

/// One manifest line, parsed but not yet validated.
#[derive(Debug, Clone)]
pub struct ManifestLine {
    pub line: usize,
    raw: RawRecord,
}

impl ManifestLine {
    pub fn frame_id(&self) -> Option<&str> {
        self.raw.frame_id.as_deref()
    }

    pub fn validate(self) -> Result<FrameRecord, DataprepError> {
        self.raw.into_record(self.line)
    }
}

/// Parses each non-blank line as JSON without schema validation.
pub fn read_manifest_lines<R: BufRead>(reader: R) -> Result<Vec<ManifestLine>, DataprepError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| DataprepError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&text).map_err(|e| DataprepError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(ManifestLine { line: line_no, raw });
    }
    Ok(out)
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>, DataprepError> {
    read_manifest_lines(reader)?
        .into_iter()
        .map(ManifestLine::validate)
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<FrameRecord>, DataprepError> {
    let file = std::fs::File::open(path).map_err(|e| DataprepError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    read_manifest(std::io::BufReader::new(file))
}

/// Canonical single-line JSON for one record.
pub fn record_to_line(record: &FrameRecord) -> String {
    serde_json::to_string(&RawRecord::from_record(record))
        .expect("manifest records always serialize")
}

pub fn write_manifest<W: Write>(mut w: W, records: &[FrameRecord]) -> std::io::Result<()> {
    for r in records {
        w.write_all(record_to_line(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_manifest(records: &[FrameRecord], path: &Path) -> Result<(), DataprepError> {
    let io_err = |e: std::io::Error| DataprepError::Io {
        path: PathBuf::from(path),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_manifest(&mut w, records).map_err(io_err)?;
    w.flush().map_err(io_err)
}
