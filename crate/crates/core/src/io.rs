//! On-disk formats.
//!
//! * `CCRT` tensors: magic `CCRT`, `u32` version, `u32` rank, `u64` dims,
//!   then `f64` payload in row-major order, all little-endian.
//! * `SPHTRI` triangulations: header `SPHTRI <n_vertices> <n_faces>`, one
//!   `x y z` line per vertex, one `i j k` line per face.
//! * Point-pattern CSV with header
//!   `subject_id,sphere1,x1,y1,z1,sphere2,x2,y2,z2`.
//! * Model and dataset directories: a `manifest.json` plus payload files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{ComponentDiagnostics, FitConfig, ReducedRankModel, Sparsity, WeightConvention};
use crate::geometry::{
    GridOmega, SphereId, SpherePoint, SphericalTriangulation, SplineBasisSystem, UnitVector3,
};
use crate::inference::SubnetworkCover;
use crate::kde::PointPattern;
use crate::linalg::Tensor3;
use crate::synthetic::SyntheticDataset;

pub const TENSOR_MAGIC: &[u8; 4] = b"CCRT";
pub const TENSOR_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const POINT_CSV_HEADER: [&str; 9] = ["subject_id", "sphere1", "x1", "y1", "z1", "sphere2", "x2", "y2", "z2"];

/// Dense array with row-major payload.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Resource(format!("tensor dims {dims:?} overflow")))?;
        if len != data.len() {
            return Err(Error::arg(format!("dims {dims:?} need {len} values, got {}", data.len())));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect();
        TensorFile { dims: vec![m.nrows(), m.ncols()], data }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        TensorFile { dims: vec![v.len()], data: v.as_slice().to_vec() }
    }

    /// Slices stacked along the leading axis: dims `[N, n1, n2]`.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let (r, c) = slices.first().map(|s| s.shape()).unwrap_or((0, 0));
        if slices.iter().any(|s| s.shape() != (r, c)) {
            return Err(Error::arg("slices differ in shape"));
        }
        let mut data = Vec::with_capacity(slices.len() * r * c);
        for s in slices {
            for i in 0..r {
                data.extend(s.row(i).iter());
            }
        }
        Ok(TensorFile { dims: vec![slices.len(), r, c], data })
    }

    pub fn from_tensor3(t: &Tensor3) -> Self {
        let [n1, n2, n3] = t.dims();
        let slices: Vec<DMatrix<f64>> = (0..n3).map(|k| t.slice(k).into_owned()).collect();
        let mut file = Self::from_slices(&slices).expect("equal shapes");
        file.dims = vec![n3, n1, n2];
        file
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self.dims[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(Error::arg(format!("expected a matrix, got dims {:?}", self.dims))),
        }
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        match self.dims[..] {
            [n] => Ok(DVector::from_row_slice(&self.data[..n])),
            _ => Err(Error::arg(format!("expected a vector, got dims {:?}", self.dims))),
        }
    }

    pub fn to_slices(&self) -> Result<Vec<DMatrix<f64>>> {
        match self.dims[..] {
            [n, r, c] => Ok((0..n)
                .map(|k| DMatrix::from_row_slice(r, c, &self.data[k * r * c..(k + 1) * r * c]))
                .collect()),
            _ => Err(Error::arg(format!("expected a 3-way tensor, got dims {:?}", self.dims))),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(x) = self.data.iter().find(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("refusing to write non-finite value {x}")));
        }
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(path, msg);
        if bytes.len() < 12 {
            return Err(bad(format!("file has {} bytes, shorter than the header", bytes.len())));
        }
        if &bytes[0..4] != TENSOR_MAGIC {
            return Err(bad(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != TENSOR_VERSION {
            return Err(bad(format!("unsupported tensor version {version}, expected {TENSOR_VERSION}")));
        }
        let ndim = word(8) as usize;
        let header = 12 + 8 * ndim;
        if bytes.len() < header {
            return Err(bad(format!("truncated header: {ndim} dims declared")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let at = 12 + 8 * i;
            let d = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
            dims.push(usize::try_from(d).map_err(|_| bad(format!("dimension {d} overflows")))?);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| bad(format!("dims {dims:?} overflow")))?;
        if bytes.len() - header != len {
            return Err(bad(format!(
                "payload length mismatch: dims {dims:?} need {len} bytes, found {}",
                bytes.len() - header
            )));
        }
        let data: Vec<f64> = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(bad("payload contains non-finite values".into()));
        }
        Ok(TensorFile { dims, data })
    }
}

pub fn write_tensor(path: &Path, tensor: &TensorFile) -> Result<()> {
    let bytes = tensor.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorFile::from_bytes(&bytes, path)
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_triangulation(path: &Path, tri: &SphericalTriangulation) -> Result<()> {
    let mut s = format!("SPHTRI {} {}\n", tri.num_vertices(), tri.faces().len());
    for v in tri.vertices() {
        s.push_str(&format!("{} {} {}\n", fmt_f64(v.x()), fmt_f64(v.y()), fmt_f64(v.z())));
    }
    for f in tri.faces() {
        s.push_str(&format!("{} {} {}\n", f[0], f[1], f[2]));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_triangulation(path: &Path) -> Result<SphericalTriangulation> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::format(path, msg);
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 || head[0] != "SPHTRI" {
        return Err(bad(format!("bad header {header:?}")));
    }
    let parse_count = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad count {s:?}: {e}")));
    let (nv, nf) = (parse_count(head[1])?, parse_count(head[2])?);
    let mut vertices = Vec::with_capacity(nv);
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nv {
        let (no, line) = lines.next().ok_or_else(|| bad("missing vertex lines".into()))?;
        let xyz: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", no + 1))))
            .collect::<Result<_>>()?;
        if xyz.len() != 3 {
            return Err(bad(format!("line {}: expected 3 coordinates", no + 1)));
        }
        vertices.push(UnitVector3::new(xyz[0], xyz[1], xyz[2]).map_err(|e| bad(format!("line {}: {e}", no + 1)))?);
    }
    for _ in 0..nf {
        let (no, line) = lines.next().ok_or_else(|| bad("missing face lines".into()))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| bad(format!("line {}: {e}", no + 1))))
            .collect::<Result<_>>()?;
        if idx.len() != 3 {
            return Err(bad(format!("line {}: expected 3 indices", no + 1)));
        }
        faces.push([idx[0], idx[1], idx[2]]);
    }
    if let Some((no, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(bad(format!("line {}: unexpected trailing content {extra:?}", no + 1)));
    }
    SphericalTriangulation::from_parts(vertices, faces).map_err(|e| bad(e.to_string()))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Write patterns as CSV, one row per pair.
pub fn write_points(path: &Path, patterns: &[PointPattern]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(POINT_CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for p in patterns {
        for (a, b) in &p.pairs {
            let mut row = vec![p.subject_id.to_string()];
            for q in [a, b] {
                row.push(q.sphere.label().to_string());
                row.extend([q.v.x(), q.v.y(), q.v.z()].map(fmt_f64));
            }
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read patterns grouped by subject id (ascending).
pub fn read_points(path: &Path) -> Result<Vec<PointPattern>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != POINT_CSV_HEADER {
        return Err(Error::format(path, format!("expected header {}", POINT_CSV_HEADER.join(","))));
    }
    let mut by_subject: BTreeMap<u64, Vec<(SpherePoint, SpherePoint)>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |msg: String| Error::format(path, format!("record {}: {msg}", line + 1));
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing column {}", POINT_CSV_HEADER[i])));
        let subject: u64 = field(0)?.trim().parse().map_err(|e| bad(format!("subject_id: {e}")))?;
        let point = |at: usize| -> Result<SpherePoint> {
            let label: i64 = field(at)?.trim().parse().map_err(|e| bad(format!("sphere: {e}")))?;
            let sphere = SphereId::from_label(label).map_err(|e| bad(e.to_string()))?;
            let mut xyz = [0.0; 3];
            for (k, c) in xyz.iter_mut().enumerate() {
                *c = field(at + 1 + k)?.trim().parse().map_err(|e| bad(format!("coordinate: {e}")))?;
            }
            let v = UnitVector3::new(xyz[0], xyz[1], xyz[2]).map_err(|e| bad(e.to_string()))?;
            Ok(SpherePoint::new(sphere, v))
        };
        by_subject.entry(subject).or_default().push((point(1)?, point(5)?));
    }
    Ok(by_subject.into_iter().map(|(id, pairs)| PointPattern::new(id, pairs)).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Grid as an n × 3 matrix plus the size of the sphere-1 block.
fn write_grid(path: &Path, grid: &GridOmega) -> Result<()> {
    let m = DMatrix::from_fn(grid.len(), 3, |i, j| grid.points()[i].v.as_vector()[j]);
    write_tensor(path, &TensorFile::from_matrix(&m))
}

fn read_grid(path: &Path, n1: usize) -> Result<GridOmega> {
    let m = read_tensor(path)?.to_matrix().map_err(|e| Error::format(path, e.to_string()))?;
    if m.ncols() != 3 || n1 > m.nrows() {
        return Err(Error::format(path, format!("grid shape {:?} does not fit n1 = {n1}", m.shape())));
    }
    let rows: Vec<UnitVector3> = (0..m.nrows())
        .map(|i| UnitVector3::new(m[(i, 0)], m[(i, 1)], m[(i, 2)]))
        .collect::<Result<_>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    GridOmega::new(&rows[..n1], &rows[n1..])
}

/// Relative paths of the shared geometry payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryPaths {
    pub basis1: String,
    pub basis2: String,
    pub grid: String,
    /// Grid points on sphere 1 (they come first).
    pub n1: usize,
}

fn write_geometry(dir: &Path, basis: &SplineBasisSystem, grid: &GridOmega) -> Result<GeometryPaths> {
    let paths = GeometryPaths {
        basis1: "basis1.sphtri".into(),
        basis2: "basis2.sphtri".into(),
        grid: "grid.ccrt".into(),
        n1: grid.n1(),
    };
    write_triangulation(&dir.join(&paths.basis1), basis.triangulation(SphereId::One))?;
    write_triangulation(&dir.join(&paths.basis2), basis.triangulation(SphereId::Two))?;
    write_grid(&dir.join(&paths.grid), grid)?;
    Ok(paths)
}

fn read_geometry(dir: &Path, paths: &GeometryPaths) -> Result<(SplineBasisSystem, GridOmega)> {
    let t1 = read_triangulation(&dir.join(&paths.basis1))?;
    let t2 = read_triangulation(&dir.join(&paths.basis2))?;
    let grid = read_grid(&dir.join(&paths.grid), paths.n1)?;
    Ok((SplineBasisSystem::new(t1, t2)?, grid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M1")]
    pub m1: usize,
    #[serde(rename = "M2")]
    pub m2: usize,
    pub n_subjects: usize,
    pub alpha1: f64,
    pub sparsity: Sparsity,
    pub weight_convention: WeightConvention,
    /// Inner-product weight actually used.
    pub weight: f64,
    pub seed: u64,
    pub config: FitConfig,
    pub initial_norm_sq: f64,
    pub stopped_early: bool,
    pub diagnostics: Vec<ComponentDiagnostics>,
    /// C (M × K).
    pub coefficients: String,
    /// S (N × K).
    pub scores: String,
    /// Ȳ (n × n).
    pub mean: String,
    pub geometry: GeometryPaths,
}

/// A model together with the geometry it was fitted on.
#[derive(Clone, Debug)]
pub struct StoredModel {
    pub model: ReducedRankModel,
    pub basis: SplineBasisSystem,
    pub grid: GridOmega,
}

pub fn write_model(dir: &Path, model: &ReducedRankModel, basis: &SplineBasisSystem, grid: &GridOmega) -> Result<()> {
    create_dir(dir)?;
    let geometry = write_geometry(dir, basis, grid)?;
    let manifest = ModelManifest {
        format_version: MODEL_FORMAT_VERSION,
        k: model.k(),
        m1: basis.m1(),
        m2: basis.m2(),
        n_subjects: model.n_subjects(),
        alpha1: model.config.alpha1,
        sparsity: model.config.sparsity,
        weight_convention: model.config.weight,
        weight: model.weight,
        seed: model.config.seed,
        config: model.config.clone(),
        initial_norm_sq: model.initial_norm_sq,
        stopped_early: model.stopped_early,
        diagnostics: model.diagnostics.clone(),
        coefficients: "C.ccrt".into(),
        scores: "S.ccrt".into(),
        mean: "Ybar.ccrt".into(),
        geometry,
    };
    write_tensor(&dir.join(&manifest.coefficients), &TensorFile::from_matrix(&model.c))?;
    write_tensor(&dir.join(&manifest.scores), &TensorFile::from_matrix(&model.s))?;
    write_tensor(&dir.join(&manifest.mean), &TensorFile::from_matrix(&model.ybar))?;
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn read_model(dir: &Path) -> Result<StoredModel> {
    let mpath = dir.join(MANIFEST);
    let manifest: ModelManifest = read_json(&mpath)?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::format(
            &mpath,
            format!(
                "model format version {} is not supported (this build reads version {MODEL_FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    let (basis, grid) = read_geometry(dir, &manifest.geometry)?;
    let load = |name: &str, shape: (usize, usize)| -> Result<DMatrix<f64>> {
        let path = dir.join(name);
        let m = read_tensor(&path)?.to_matrix().map_err(|e| Error::format(&path, e.to_string()))?;
        if m.shape() != shape {
            return Err(Error::format(&path, format!("shape {:?} does not match the manifest {shape:?}", m.shape())));
        }
        Ok(m)
    };
    let m = manifest.m1 + manifest.m2;
    if basis.m1() != manifest.m1 || basis.m2() != manifest.m2 {
        return Err(Error::format(&mpath, "basis files do not match M1/M2"));
    }
    let c = load(&manifest.coefficients, (m, manifest.k))?;
    let s = load(&manifest.scores, (manifest.n_subjects, manifest.k))?;
    let ybar = load(&manifest.mean, (grid.len(), grid.len()))?;
    if manifest.diagnostics.len() != manifest.k {
        return Err(Error::format(&mpath, "diagnostics do not match K"));
    }
    let model = ReducedRankModel {
        c,
        s,
        ybar,
        config: manifest.config,
        weight: manifest.weight,
        diagnostics: manifest.diagnostics,
        initial_norm_sq: manifest.initial_norm_sq,
        stopped_early: manifest.stopped_early,
    };
    Ok(StoredModel { model, basis, grid })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub scenario: String,
    /// Generator configuration as given.
    pub config: serde_json::Value,
    pub n_subjects: usize,
    /// Y (N × n × n).
    pub data: String,
    /// True coefficients (M × K_true).
    pub coefficients: String,
    /// True scores (N × K_true).
    pub scores: String,
    /// Group labels; empty for single-population data.
    pub labels: Vec<u8>,
    /// Per-subject effect sizes (N), two-group data only.
    pub group_effect: Option<String>,
    /// Grid indices of the differential pair, two-group data only.
    pub center: Option<[usize; 2]>,
    pub geometry: GeometryPaths,
}

#[derive(Clone, Debug)]
pub struct StoredDataset {
    pub manifest: DatasetManifest,
    pub y: Vec<DMatrix<f64>>,
    pub c_true: DMatrix<f64>,
    pub s_true: DMatrix<f64>,
    pub group_effect: Option<DVector<f64>>,
    pub basis: SplineBasisSystem,
    pub grid: GridOmega,
}

impl StoredDataset {
    /// The differential pair as points.
    pub fn center_points(&self) -> Option<(SpherePoint, SpherePoint)> {
        self.manifest
            .center
            .map(|[a, b]| (self.grid.points()[a], self.grid.points()[b]))
    }
}

pub fn write_dataset(
    dir: &Path,
    scenario: &str,
    config: serde_json::Value,
    data: &SyntheticDataset,
    basis: &SplineBasisSystem,
    grid: &GridOmega,
) -> Result<()> {
    create_dir(dir)?;
    let geometry = write_geometry(dir, basis, grid)?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        scenario: scenario.into(),
        config,
        n_subjects: data.y.len(),
        data: "Y.ccrt".into(),
        coefficients: "C_true.ccrt".into(),
        scores: "S_true.ccrt".into(),
        labels: data.labels.clone(),
        group_effect: data.group_effect.as_ref().map(|_| "S0.ccrt".into()),
        center: data.center.map(|c| c.index),
        geometry,
    };
    write_tensor(&dir.join(&manifest.data), &TensorFile::from_slices(&data.y)?)?;
    write_tensor(&dir.join(&manifest.coefficients), &TensorFile::from_matrix(&data.c_true))?;
    write_tensor(&dir.join(&manifest.scores), &TensorFile::from_matrix(&data.s_true))?;
    if let (Some(name), Some(s0)) = (&manifest.group_effect, &data.group_effect) {
        write_tensor(&dir.join(name), &TensorFile::from_vector(s0))?;
    }
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn read_dataset(dir: &Path) -> Result<StoredDataset> {
    let mpath = dir.join(MANIFEST);
    let manifest: DatasetManifest = read_json(&mpath)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::format(
            &mpath,
            format!(
                "dataset format version {} is not supported (this build reads version {DATASET_FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    let (basis, grid) = read_geometry(dir, &manifest.geometry)?;
    let ypath = dir.join(&manifest.data);
    let yfile = read_tensor(&ypath)?;
    let n = grid.len();
    if yfile.dims != [manifest.n_subjects, n, n] {
        return Err(Error::format(
            &ypath,
            format!("dims {:?} do not match {} subjects on a {n}-point grid", yfile.dims, manifest.n_subjects),
        ));
    }
    let y = yfile.to_slices()?;
    let matrix = |name: &str| -> Result<DMatrix<f64>> {
        let path = dir.join(name);
        read_tensor(&path)?.to_matrix().map_err(|e| Error::format(&path, e.to_string()))
    };
    let c_true = matrix(&manifest.coefficients)?;
    let s_true = matrix(&manifest.scores)?;
    let group_effect = match &manifest.group_effect {
        Some(name) => {
            let path = dir.join(name);
            Some(read_tensor(&path)?.to_vector().map_err(|e| Error::format(&path, e.to_string()))?)
        }
        None => None,
    };
    if !manifest.labels.is_empty() && manifest.labels.len() != manifest.n_subjects {
        return Err(Error::format(&mpath, "labels do not match the number of subjects"));
    }
    if let Some([a, b]) = manifest.center {
        if a >= n || b >= n {
            return Err(Error::format(&mpath, "center index outside the grid"));
        }
    }
    Ok(StoredDataset { manifest, y, c_true, s_true, group_effect, basis, grid })
}

/// Plain CSV table with a header; cells are written as given.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-sphere vertex masks of the cover: one row per rejected component and
/// basis vertex.
pub fn write_cover_csv(path: &Path, cover: &SubnetworkCover) -> Result<()> {
    let mut rows = Vec::new();
    for sup in &cover.supports {
        for s in SphereId::BOTH {
            for (v, &on) in sup.vertices[s.index()].iter().enumerate() {
                rows.push(vec![
                    sup.component.to_string(),
                    s.label().to_string(),
                    v.to_string(),
                    u8::from(on).to_string(),
                ]);
            }
        }
    }
    write_table(path, &["component", "sphere", "vertex", "supported"], &rows)
}

/// Write a serializable report as pretty JSON.
pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

/// Write text through a buffered writer.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
