//! File formats: JSON documents, OBJ vertices, binary point and label
//! files, scenes and CSV reports.
//!
//! Binary points: the 8-byte magic `HOIPTS1\0`, a little-endian `u64`
//! count, then `count * 3` little-endian `f64` coordinates.
//!
//! Binary labels: the 8-byte magic `HOILBL1\0`, a little-endian `u64`
//! count, then one `u8` class per point (1..=15, where 15 is no contact).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::contact::{contact_labels, stick_figure_mesh, LabeledPointCloud, PartLabeledMesh};
use crate::ik::IkProblem;
use crate::error::{Error, Result};
use crate::kinematics::{fk, PoseState};
use crate::linalg::Vec3;
use crate::skeleton::KinematicTree;

pub const POINTS_MAGIC: &[u8; 8] = b"HOIPTS1\0";
pub const LABELS_MAGIC: &[u8; 8] = b"HOILBL1\0";
/// Environment variable naming the default skeleton file.
pub const SKELETON_ENV: &str = "HOIKIN_SKELETON";
pub const DEFAULT_BONE_SAMPLES: usize = 8;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Parses a JSON document; errors name the file, line and column.
pub fn from_json_str<D: DeserializeOwned>(text: &str, origin: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    from_json_str(&read_text(path)?, &path.display().to_string())
}

pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_bytes(path, to_json_string(value)?.as_bytes())
}

/// Vertex positions of an OBJ file; all other statements are ignored.
pub fn parse_obj(text: &str, origin: &str) -> Result<Vec<Vec3<f64>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() != Some("v") {
            continue;
        }
        let coords: Vec<&str> = it.collect();
        if coords.len() < 3 {
            return Err(Error::Parse(format!("{origin}:{}: vertex needs three coordinates", n + 1)));
        }
        let mut v = [0.0; 3];
        for (k, c) in coords[..3].iter().enumerate() {
            v[k] = c
                .parse()
                .map_err(|_| Error::Parse(format!("{origin}:{}: bad coordinate `{c}`", n + 1)))?;
        }
        let v = Vec3(v);
        if !v.is_finite() {
            return Err(Error::Parse(format!("{origin}:{}: non-finite coordinate", n + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn obj_string(points: &[Vec3<f64>]) -> String {
    points.iter().map(|p| format!("v {} {} {}\n", p.x(), p.y(), p.z())).collect()
}

pub fn read_obj(path: &Path) -> Result<Vec<Vec3<f64>>> {
    parse_obj(&read_text(path)?, &path.display().to_string())
}

pub fn write_obj(path: &Path, points: &[Vec3<f64>]) -> Result<()> {
    write_bytes(path, obj_string(points).as_bytes())
}

fn split_header<'a>(bytes: &'a [u8], magic: &[u8; 8], what: &str) -> Result<(usize, &'a [u8])> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::Parse(format!("not a {what} file (bad header)")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes"));
    let count = usize::try_from(count).map_err(|_| Error::Parse(format!("{what} count too large")))?;
    Ok((count, &bytes[16..]))
}

pub fn encode_points(points: &[Vec3<f64>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 24 * points.len());
    out.extend_from_slice(POINTS_MAGIC);
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for c in p.0 {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_points(bytes: &[u8]) -> Result<Vec<Vec3<f64>>> {
    let (count, body) = split_header(bytes, POINTS_MAGIC, "binary point")?;
    if Some(body.len()) != count.checked_mul(24) {
        return Err(Error::Parse(format!("binary point file declares {count} points but holds {} bytes", body.len())));
    }
    let coords: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    let points: Vec<Vec3<f64>> = coords.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    if !points.iter().all(Vec3::is_finite) {
        return Err(Error::Parse("binary point file contains non-finite coordinates".into()));
    }
    Ok(points)
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + labels.len());
    out.extend_from_slice(LABELS_MAGIC);
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (count, body) = split_header(bytes, LABELS_MAGIC, "binary label")?;
    if body.len() != count {
        return Err(Error::Parse(format!("binary label file declares {count} labels but holds {}", body.len())));
    }
    Ok(body.to_vec())
}

/// Reads points from `.obj`, `.json` (array of triples) or the binary format.
pub fn read_points(path: &Path) -> Result<Vec<Vec3<f64>>> {
    match extension(path).as_str() {
        "obj" => read_obj(path),
        "json" => read_json(path),
        _ => decode_points(&fs::read(path)?),
    }
}

pub fn write_points(path: &Path, points: &[Vec3<f64>]) -> Result<()> {
    match extension(path).as_str() {
        "obj" => write_obj(path, points),
        "json" => write_json(path, &points),
        _ => write_bytes(path, &encode_points(points)),
    }
}

/// Reads class or part labels from `.json` (array) or the binary format.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    match extension(path).as_str() {
        "json" => read_json(path),
        _ => decode_labels(&fs::read(path)?),
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// CSV rows `x,y,z,label` for a labelled cloud.
pub fn labels_csv(cloud: &LabeledPointCloud<f64>) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        x: f64,
        y: f64,
        z: f64,
        label: u8,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for (p, &label) in cloud.points.iter().zip(&cloud.labels) {
        w.serialize(Row { x: p.x(), y: p.y(), z: p.z(), label }).map_err(csv_error)?;
    }
    finish_csv(w)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Serializes rows to CSV with a header line.
pub fn to_csv<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    finish_csv(w)
}

pub fn from_csv<D: DeserializeOwned>(text: &str) -> Result<Vec<D>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<D>, _>>()
        .map_err(|e| Error::Parse(e.to_string()))
}

/// Point data given inline or by a path relative to the scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSource {
    Inline(Vec<Vec3<f64>>),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSource {
    Inline(Vec<u8>),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSource {
    pub vertices: PointSource,
    /// Body part (1..=14) per vertex.
    pub parts: LabelSource,
}

/// Scene description. Without an explicit human mesh, a stick-figure mesh
/// is built from the posed skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default)]
    pub skeleton: Option<PathBuf>,
    pub pose: PoseState<f64>,
    pub camera: Camera<f64>,
    pub object: PointSource,
    #[serde(default)]
    pub human_mesh: Option<MeshSource>,
    /// Contacted part to drive; defaults to the most frequent contact label.
    #[serde(default)]
    pub target_part: Option<u8>,
    /// Observed root keypoint; defaults to the projection of the posed root.
    #[serde(default)]
    pub root_2d: Option<[f64; 2]>,
    #[serde(default)]
    pub ground_truth_pose: Option<PoseState<f64>>,
    #[serde(default = "default_bone_samples")]
    pub bone_samples: usize,
}

fn default_bone_samples() -> usize {
    DEFAULT_BONE_SAMPLES
}

/// A scene with every reference loaded.
#[derive(Debug, Clone)]
pub struct Scene {
    pub tree: KinematicTree<f64>,
    pub pose: PoseState<f64>,
    pub camera: Camera<f64>,
    pub object: Vec<Vec3<f64>>,
    pub mesh: PartLabeledMesh<f64>,
    pub target_part: Option<u8>,
    pub root_2d: [f64; 2],
    pub ground_truth_pose: Option<PoseState<f64>>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_points(base: &Path, src: &PointSource) -> Result<Vec<Vec3<f64>>> {
    match src {
        PointSource::Inline(v) => Ok(v.clone()),
        PointSource::File { path } => read_points(&resolve(base, path)),
    }
}

fn load_labels(base: &Path, src: &LabelSource) -> Result<Vec<u8>> {
    match src {
        LabelSource::Inline(v) => Ok(v.clone()),
        LabelSource::File { path } => read_labels(&resolve(base, path)),
    }
}

/// Skeleton precedence: explicit path, then the scene's own reference, then
/// the environment default, then the bundled synthetic skeleton.
pub fn resolve_skeleton(explicit: Option<&Path>, from_scene: Option<&Path>) -> Result<KinematicTree<f64>> {
    if let Some(p) = explicit.or(from_scene) {
        return KinematicTree::load(p);
    }
    match std::env::var_os(SKELETON_ENV) {
        Some(p) if !p.is_empty() => KinematicTree::load(Path::new(&p)),
        _ => Ok(KinematicTree::synthetic()),
    }
}

impl Scene {
    pub fn load(path: &Path, skeleton: Option<&Path>) -> Result<Self> {
        let file: SceneFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let scene_skeleton = file.skeleton.as_ref().map(|p| resolve(base, p));
        let tree = resolve_skeleton(skeleton, scene_skeleton.as_deref())?;
        Self::from_file(file, base, tree)
    }

    pub fn from_file(file: SceneFile, base: &Path, tree: KinematicTree<f64>) -> Result<Self> {
        file.camera.validate()?;
        let posed = fk(&tree, &file.pose)?;
        let object = load_points(base, &file.object)?;
        let mesh = match &file.human_mesh {
            Some(m) => PartLabeledMesh::new(load_points(base, &m.vertices)?, load_labels(base, &m.parts)?)?,
            None => stick_figure_mesh(&tree, &posed.positions, file.bone_samples)?,
        };
        let root_2d = match file.root_2d {
            Some(r) => r,
            None => file.camera.project(&posed.positions[0])?,
        };
        if let Some(gt) = &file.ground_truth_pose {
            gt.validate(tree.joint_count())?;
        }
        Ok(Self {
            tree,
            pose: file.pose,
            camera: file.camera,
            object,
            mesh,
            target_part: file.target_part,
            root_2d,
            ground_truth_pose: file.ground_truth_pose,
        })
    }
}

impl Scene {
    /// Contact labels of the object against the human mesh.
    pub fn contact(&self, threshold: f64) -> Result<LabeledPointCloud<f64>> {
        contact_labels(&self.object, &self.mesh, threshold)
    }

    /// IK problem driving the contacted part towards its contact points.
    pub fn ik_problem(&self, threshold: f64) -> Result<IkProblem<f64>> {
        let labels = self.contact(threshold)?;
        let part = match self.target_part {
            Some(p) => p,
            None => labels
                .dominant_part()
                .ok_or_else(|| Error::invalid("no object point is in contact with the body"))?,
        };
        let target_points = labels.points_with(part);
        if target_points.is_empty() {
            return Err(Error::invalid(format!("no object point is in contact with part {part}")));
        }
        Ok(IkProblem {
            pose: self.pose.clone(),
            target_points,
            part_label: part,
            root_2d: self.root_2d,
            camera: self.camera.clone(),
        })
    }
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_round_trip() {
        let pts = vec![Vec3::new(0.1, -2.0, 3.5), Vec3::new(1e-9, 0.0, -0.25)];
        assert_eq!(parse_obj(&obj_string(&pts), "mem").unwrap(), pts);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = parse_obj("# c\nv 1 2 3\nv 1 x 3\n", "m.obj").unwrap_err().to_string();
        assert!(err.contains("m.obj:3"), "{err}");
        assert!(parse_obj("v 1 2\n", "m").is_err());
    }

    #[test]
    fn binary_points_round_trip() {
        let pts = vec![Vec3::new(0.1, -2.0, 3.5), Vec3::new(f64::MIN_POSITIVE, 0.0, -0.25)];
        let bytes = encode_points(&pts);
        assert_eq!(&bytes[..8], POINTS_MAGIC);
        assert_eq!(decode_points(&bytes).unwrap(), pts);
        assert!(decode_points(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_points(b"garbage").is_err());
    }

    #[test]
    fn binary_labels_round_trip() {
        let labels = vec![1, 15, 7];
        assert_eq!(decode_labels(&encode_labels(&labels)).unwrap(), labels);
        assert!(decode_labels(&encode_points(&[])).is_err());
    }

    #[test]
    fn scene_json_round_trip() {
        let file = SceneFile {
            skeleton: None,
            pose: PoseState::zero(24),
            camera: Camera::new(1000.0, 1000.0, 512.0, 512.0, 1024, 1024),
            object: PointSource::Inline(vec![Vec3::new(0.0, 1.0, 2.0)]),
            human_mesh: None,
            target_part: Some(5),
            root_2d: None,
            ground_truth_pose: None,
            bone_samples: 8,
        };
        let text = to_json_string(&file).unwrap();
        assert_eq!(from_json_str::<SceneFile>(&text, "mem").unwrap(), file);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = from_json_str::<SceneFile>("{\n  \"pose\": [1,\n", "scene.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scene.json") && msg.contains("line"), "{msg}");
    }
}
