//! On-disk model and dataset directories.
//!
//! A directory holds a `manifest.txt` of `key=value` lines plus one VTB
//! file per array. Manifests are written with sorted keys so equal content
//! gives equal bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{BlockDims, PatchDataset, VideoBlock, WhiteningTransform};
use crate::encoder::{FeatureEncoder, Mode};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;
use crate::pipeline::{Codebook, DescriptorPca};
use crate::sae::{ContractiveAe, SaeModel};
use crate::skmeans::{OnlineKMeans, SkMeansModel};
use crate::vtb::Tensor;

pub const MANIFEST: &str = "manifest.txt";
const FORMAT_VERSION: &str = "1";

/// Parsed `key=value` text. Blank lines and lines starting with `#` are
/// skipped; keys may not repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let mut kv = Self::new(path);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(kv.error(i + 1, format!("expected key=value, got {line:?}")));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(kv.error(i + 1, "empty key"));
            }
            if let Some((_, first)) = kv.entries.get(k) {
                return Err(kv.error(i + 1, format!("duplicate key {k:?} (first on line {first})")));
            }
            kv.entries.insert(k.to_string(), (v.to_string(), i + 1));
        }
        Ok(kv)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Manifest {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        debug_assert!(!v.contains('\n'), "manifest values are single-line");
        self.entries.insert(key.to_string(), (v, 0));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.1)
    }

    pub fn get_opt(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.0.as_str())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.get_opt(key)
            .ok_or_else(|| self.error(0, format!("missing key {key:?}")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key)?;
        v.parse()
            .map_err(|e| self.error(self.line_of(key), format!("{key}: cannot parse {v:?}: {e}")))
    }

    pub fn parse_dims(&self, key: &str) -> Result<BlockDims> {
        let v = self.get(key)?;
        parse_dims(v).ok_or_else(|| self.error(self.line_of(key), format!("{key}: expected TxHxW, got {v:?}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, (v, _)) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Parse `TxHxW`.
pub fn parse_dims(s: &str) -> Option<BlockDims> {
    let parts: Vec<usize> = s.split('x').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match parts.as_slice() {
        &[t, h, w] if t > 0 && h > 0 && w > 0 => Some(BlockDims::new(t, h, w)),
        _ => None,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_matrix(dir: &Path, name: &str, m: &RowMatrix) -> Result<()> {
    Tensor::from_matrix(m).write(dir.join(name))
}

fn write_vec(dir: &Path, name: &str, v: &[f64]) -> Result<()> {
    Tensor::f64(vec![v.len()], v.to_vec())?.write(dir.join(name))
}

fn read_matrix(dir: &Path, name: &str) -> Result<RowMatrix> {
    Tensor::read(dir.join(name))?.into_matrix()
}

fn read_vec(dir: &Path, name: &str) -> Result<Vec<f64>> {
    Ok(Tensor::read(dir.join(name))?.to_f64())
}

/// Any trained feature model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    SkMeans(SkMeansModel),
    Sae(SaeModel),
    KMeans(OnlineKMeans),
    ContractiveAe(ContractiveAe),
}

impl TrainedModel {
    /// Name used on the command line and in manifests.
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::SkMeans(_) => "skmeans",
            TrainedModel::Sae(_) => "sae",
            TrainedModel::KMeans(_) => "kmeans",
            TrainedModel::ContractiveAe(_) => "ae-baseline",
        }
    }

    pub fn encoder(&self) -> &dyn FeatureEncoder {
        match self {
            TrainedModel::SkMeans(m) => m,
            TrainedModel::Sae(m) => m,
            TrainedModel::KMeans(m) => m,
            TrainedModel::ContractiveAe(m) => m,
        }
    }

    pub fn frame_dims(&self) -> BlockDims {
        match self {
            TrainedModel::SkMeans(m) => m.frame_dims(),
            TrainedModel::Sae(m) => m.frame_dims(),
            TrainedModel::KMeans(m) => m.frame_dims(),
            TrainedModel::ContractiveAe(m) => m.frame_dims(),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            TrainedModel::SkMeans(m) => m.mode(),
            TrainedModel::Sae(m) => m.mode(),
            TrainedModel::KMeans(_) | TrainedModel::ContractiveAe(_) => Mode::Sequence,
        }
    }

    /// Filter banks in whitened space, one entry per frame bank.
    pub fn filter_banks(&self) -> Vec<&RowMatrix> {
        match self {
            TrainedModel::SkMeans(m) => {
                let (a, b) = m.banks();
                std::iter::once(a).chain(b).collect()
            }
            TrainedModel::Sae(m) => {
                let (a, b) = m.banks();
                if m.mode() == Mode::Pair && !m.is_tied() {
                    vec![a, b]
                } else {
                    vec![a]
                }
            }
            TrainedModel::KMeans(m) => vec![m.centroids()],
            TrainedModel::ContractiveAe(m) => vec![m.weights()],
        }
    }
}

/// A trained model with its preprocessing and optional descriptor stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: TrainedModel,
    pub whitening: Option<WhiteningTransform>,
    pub pca: Option<DescriptorPca>,
    pub codebook: Option<Codebook>,
    pub pooling: Option<Codebook>,
    /// Free-form provenance such as training settings.
    pub extra: BTreeMap<String, String>,
}

impl ModelBundle {
    pub fn new(model: TrainedModel, whitening: Option<WhiteningTransform>) -> Self {
        Self {
            model,
            whitening,
            pca: None,
            codebook: None,
            pooling: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        create_dir(dir)?;
        let mut kv = KeyValues::new(dir.join(MANIFEST));
        kv.set("format_version", FORMAT_VERSION);
        kv.set("kind", self.model.kind());
        kv.set("mode", self.model.mode().as_str());
        kv.set("frame_dims", self.model.frame_dims());
        kv.set("units", self.model.encoder().units());
        match &self.model {
            TrainedModel::SkMeans(m) => {
                let (a, b) = m.banks();
                match b {
                    Some(b) => {
                        write_matrix(dir, "wx.vtb", a)?;
                        write_matrix(dir, "wy.vtb", b)?;
                    }
                    None => write_matrix(dir, "w.vtb", a)?,
                }
            }
            TrainedModel::Sae(m) => {
                kv.set("lambda", m.lambda());
                kv.set("tied", m.is_tied());
                let (a, b) = m.banks();
                if m.mode() == Mode::Pair && !m.is_tied() {
                    write_matrix(dir, "wx.vtb", a)?;
                    write_matrix(dir, "wy.vtb", b)?;
                } else {
                    write_matrix(dir, "w.vtb", a)?;
                }
                kv.set("bias", m.bias().is_some());
                if let Some(b) = m.bias() {
                    write_vec(dir, "bias.vtb", b)?;
                }
            }
            TrainedModel::KMeans(m) => write_matrix(dir, "w.vtb", m.centroids())?,
            TrainedModel::ContractiveAe(m) => {
                kv.set("lambda", m.lambda());
                write_matrix(dir, "w.vtb", m.weights())?;
                write_vec(dir, "hidden_bias.vtb", m.hidden_bias())?;
                write_vec(dir, "visible_bias.vtb", m.visible_bias())?;
            }
        }
        kv.set("whitening", self.whitening.is_some());
        if let Some(w) = &self.whitening {
            kv.set("whitening.eigenvalue_floor", format!("{:e}", w.eigenvalue_floor()));
            write_vec(dir, "whitening_mean.vtb", w.mean())?;
            write_matrix(dir, "whitening_forward.vtb", w.forward())?;
            write_matrix(dir, "whitening_inverse.vtb", w.inverse())?;
            write_vec(dir, "whitening_spectrum.vtb", w.spectrum())?;
        }
        kv.set("pca", self.pca.is_some());
        if let Some(p) = &self.pca {
            write_vec(dir, "pca_mean.vtb", p.mean())?;
            write_matrix(dir, "pca_components.vtb", p.components())?;
            write_vec(dir, "pca_variances.vtb", p.variances())?;
        }
        for (name, book) in [("codebook", &self.codebook), ("pooling", &self.pooling)] {
            kv.set(name, book.is_some());
            if let Some(b) = book {
                kv.set(&format!("{name}.seed"), b.training_seed());
                write_matrix(dir, &format!("{name}.vtb"), b.centroids())?;
                write_vec(dir, &format!("{name}_objective.vtb"), b.objective())?;
            }
        }
        for (k, v) in &self.extra {
            kv.set(&format!("extra.{k}"), v);
        }
        kv.write(dir.join(MANIFEST))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let kv = KeyValues::read(dir.join(MANIFEST))?;
        let version = kv.get("format_version")?;
        if version != FORMAT_VERSION {
            return Err(kv.error(kv.line_of("format_version"), format!("unsupported format version {version}")));
        }
        let frame_dims = kv.parse_dims("frame_dims")?;
        let mode = Mode::parse(kv.get("mode")?)
            .ok_or_else(|| kv.error(kv.line_of("mode"), "mode must be pair or sequence"))?;
        let model = match kv.get("kind")? {
            "skmeans" => TrainedModel::SkMeans(match mode {
                Mode::Pair => SkMeansModel::from_pair(read_matrix(dir, "wx.vtb")?, read_matrix(dir, "wy.vtb")?, frame_dims)?,
                Mode::Sequence => SkMeansModel::from_sequence(read_matrix(dir, "w.vtb")?, frame_dims)?,
            }),
            "sae" => {
                let lambda: f64 = kv.parse_value("lambda")?;
                let tied: bool = kv.parse_value("tied")?;
                let m = match (mode, tied) {
                    (Mode::Pair, false) => {
                        SaeModel::from_pair(read_matrix(dir, "wx.vtb")?, Some(read_matrix(dir, "wy.vtb")?), lambda, frame_dims)?
                    }
                    (Mode::Pair, true) => SaeModel::from_pair(read_matrix(dir, "w.vtb")?, None, lambda, frame_dims)?,
                    (Mode::Sequence, _) => SaeModel::from_sequence(read_matrix(dir, "w.vtb")?, lambda, frame_dims)?,
                };
                let m = if kv.parse_value::<bool>("bias")? {
                    m.with_bias(Some(read_vec(dir, "bias.vtb")?))?
                } else {
                    m
                };
                TrainedModel::Sae(m)
            }
            "kmeans" => TrainedModel::KMeans(OnlineKMeans::from_centroids(read_matrix(dir, "w.vtb")?, frame_dims)?),
            "ae-baseline" => TrainedModel::ContractiveAe(ContractiveAe::from_parts(
                read_matrix(dir, "w.vtb")?,
                read_vec(dir, "hidden_bias.vtb")?,
                read_vec(dir, "visible_bias.vtb")?,
                kv.parse_value("lambda")?,
                frame_dims,
            )?),
            other => return Err(kv.error(kv.line_of("kind"), format!("unknown model kind {other:?}"))),
        };
        let units: usize = kv.parse_value("units")?;
        if units != model.encoder().units() {
            return Err(kv.error(kv.line_of("units"), format!("manifest says {units} units, weights have {}", model.encoder().units())));
        }
        let whitening = if kv.parse_value::<bool>("whitening")? {
            Some(WhiteningTransform::from_parts(
                read_vec(dir, "whitening_mean.vtb")?,
                read_matrix(dir, "whitening_forward.vtb")?,
                read_matrix(dir, "whitening_inverse.vtb")?,
                kv.parse_value("whitening.eigenvalue_floor")?,
                read_vec(dir, "whitening_spectrum.vtb")?,
            )?)
        } else {
            None
        };
        let pca = if kv.parse_value::<bool>("pca")? {
            Some(DescriptorPca::from_parts(
                read_vec(dir, "pca_mean.vtb")?,
                read_matrix(dir, "pca_components.vtb")?,
                read_vec(dir, "pca_variances.vtb")?,
            )?)
        } else {
            None
        };
        let mut books = [None, None];
        for (slot, name) in books.iter_mut().zip(["codebook", "pooling"]) {
            if kv.parse_value::<bool>(name)? {
                let seed = kv.parse_value(&format!("{name}.seed"))?;
                let book = Codebook::new(read_matrix(dir, &format!("{name}.vtb"))?, seed)?;
                *slot = Some(book.with_objective(read_vec(dir, &format!("{name}_objective.vtb"))?));
            }
        }
        let [codebook, pooling] = books;
        let extra = kv
            .keys()
            .filter_map(|k| k.strip_prefix("extra.").map(|s| (s.to_string(), kv.get_opt(k).unwrap_or("").to_string())))
            .collect();
        Ok(Self {
            model,
            whitening,
            pca,
            codebook,
            pooling,
            extra,
        })
    }
}

/// Write a dataset as `patches.vtb` (`count x T x H x W`, f32), optional
/// `labels.vtb` and a manifest. `extra` entries land in the manifest.
pub fn save_dataset(dir: impl AsRef<Path>, data: &PatchDataset, kind: &str, extra: &BTreeMap<String, String>) -> Result<()> {
    let dir = dir.as_ref();
    let dims = data
        .dims()
        .ok_or_else(|| Error::invalid("cannot save an empty dataset"))?;
    create_dir(dir)?;
    let mut values = Vec::with_capacity(data.len() * dims.len());
    for p in data.patches() {
        values.extend_from_slice(p.values());
    }
    Tensor::f32(vec![data.len(), dims.t, dims.h, dims.w], values)?.write(dir.join("patches.vtb"))?;
    let mut kv = KeyValues::new(dir.join(MANIFEST));
    kv.set("format_version", FORMAT_VERSION);
    kv.set("kind", kind);
    kv.set("count", data.len());
    kv.set("dims", dims);
    kv.set("seed", data.seed());
    kv.set("labels", data.labels().is_some());
    if let Some(l) = data.labels() {
        Tensor::f64(vec![l.len()], l.iter().map(|&v| v as f64).collect())?.write(dir.join("labels.vtb"))?;
    }
    for (k, v) in extra {
        kv.set(&format!("extra.{k}"), v);
    }
    kv.write(dir.join(MANIFEST))
}

/// Read a directory written by [`save_dataset`]; returns the dataset and
/// its manifest.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(PatchDataset, KeyValues)> {
    let dir = dir.as_ref();
    let kv = KeyValues::read(dir.join(MANIFEST))?;
    let dims = kv.parse_dims("dims")?;
    let count: usize = kv.parse_value("count")?;
    let t = Tensor::read(dir.join("patches.vtb"))?;
    if t.dims() != [count, dims.t, dims.h, dims.w] {
        return Err(Error::Format(format!(
            "patches.vtb has dims {:?}, manifest says {count} x {dims}",
            t.dims()
        )));
    }
    let values = t.to_f32();
    let patches = values
        .chunks_exact(dims.len())
        .map(|c| VideoBlock::new(dims, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let labels = if kv.parse_value::<bool>("labels")? {
        let l = Tensor::read(dir.join("labels.vtb"))?.to_f64();
        if l.len() != count {
            return Err(Error::Format(format!("{} labels for {count} patches", l.len())));
        }
        let mut out = Vec::with_capacity(count);
        for v in l {
            if !(v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                return Err(Error::Format(format!("label {v} is not a non-negative integer")));
            }
            out.push(v as u32);
        }
        Some(out)
    } else {
        None
    };
    let ds = PatchDataset::new(patches, labels, kv.parse_value("seed")?)?;
    Ok((ds, kv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_errors_name_lines() {
        let e = KeyValues::parse("# c\na=1\nbroken\n", "x").unwrap_err();
        assert!(matches!(e, Error::Manifest { line: 3, .. }));
        let e = KeyValues::parse("a=1\n a = 2\n", "x").unwrap_err();
        assert!(matches!(e, Error::Manifest { line: 2, .. }));
        let kv = KeyValues::parse("b = x=y\n\na=1\n", "x").unwrap();
        assert_eq!(kv.get("b").unwrap(), "x=y");
        assert_eq!(kv.to_text(), "a=1\nb=x=y\n");
    }

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("10x16x16"), Some(BlockDims::new(10, 16, 16)));
        assert_eq!(parse_dims("10x16"), None);
        assert_eq!(parse_dims("0x1x1"), None);
    }
}
