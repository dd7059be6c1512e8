//! Checkpoints, run configuration and metrics logs.
//!
//! Checkpoint layout: the 8-byte magic `BSICKPT\0`, a little-endian `u64`
//! header length, a JSON header, then every tensor as little-endian `f64`
//! in row-major order at the offsets listed in the header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BsiError, Result};
use crate::importance::{Policy, ProbeSettings, PruneSchedule};
use crate::model::{Activation, BasisLinear, DatasetSpec, MlpModel};
use crate::numkit::{Matrix, RNG_ALGORITHM};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BSICKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: usize,
}

impl TensorEntry {
    pub fn byte_len(&self) -> usize {
        self.shape.iter().product::<usize>() * 8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerHeader {
    pub out_dim: usize,
    pub in_dim: usize,
    pub rank: usize,
    pub aux_rank: usize,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub activation: Activation,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<LayerHeader>,
    pub rng_algorithm: String,
    pub seed: Option<u64>,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointHeader {
    pub fn payload_len(&self) -> usize {
        self.tensors.iter().map(|t| t.offset + t.byte_len()).max().unwrap_or(0)
    }
}

fn layer_tensors(l: usize, layer: &BasisLinear) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mat = |m: &Matrix| vec![m.rows(), m.cols()];
    vec![
        (format!("layer{l}.U"), mat(layer.u()), layer.u().as_slice().to_vec()),
        (format!("layer{l}.V"), mat(layer.v()), layer.v().as_slice().to_vec()),
        (format!("layer{l}.sigma"), vec![layer.rank()], layer.sigma().to_vec()),
        (format!("layer{l}.auxU"), mat(layer.aux_u()), layer.aux_u().as_slice().to_vec()),
        (format!("layer{l}.auxV"), mat(layer.aux_v()), layer.aux_v().as_slice().to_vec()),
        (
            format!("layer{l}.active"),
            vec![layer.rank()],
            layer.active().iter().map(|&a| if a { 1.0 } else { 0.0 }).collect(),
        ),
    ]
}

/// Serializes a model; `seed` is recorded for provenance only.
pub fn encode_checkpoint(model: &MlpModel, seed: Option<u64>) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        for (name, shape, data) in layer_tensors(l, layer) {
            tensors.push(TensorEntry {
                name,
                shape,
                offset: payload.len(),
            });
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        activation: model.activation(),
        layer_sizes: model.layer_sizes(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerHeader {
                out_dim: l.out_dim(),
                in_dim: l.in_dim(),
                rank: l.rank(),
                aux_rank: l.aux_rank(),
                active: l.active().to_vec(),
            })
            .collect(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        seed,
        dtype: DTYPE.to_string(),
        tensors,
    };
    let json = serde_json::to_vec_pretty(&header)
        .map_err(|e| BsiError::CorruptHeader(format!("cannot encode header: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses only the header; payload offsets follow from it alone.
pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(BsiError::CorruptHeader("missing checkpoint magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| BsiError::CorruptHeader(format!("header length {len} exceeds file size")))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| BsiError::CorruptHeader(format!("header is not valid JSON: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| BsiError::CorruptHeader("header lacks format_version".into()))?;
    if version != CHECKPOINT_VERSION as u64 {
        return Err(BsiError::UnsupportedVersion {
            found: version.min(u32::MAX as u64) as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header: CheckpointHeader =
        serde_json::from_value(value).map_err(|e| BsiError::CorruptHeader(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(BsiError::CorruptHeader(format!("unsupported dtype `{}`", header.dtype)));
    }
    Ok((header, end))
}

fn read_tensor(header: &CheckpointHeader, payload: &[u8], name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let entry = header
        .tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| BsiError::CorruptHeader(format!("tensor `{name}` missing from header")))?;
    if entry.shape != shape {
        return Err(BsiError::CorruptHeader(format!(
            "tensor `{name}` has shape {:?}, expected {shape:?}",
            entry.shape
        )));
    }
    let need = entry.byte_len();
    let available = payload.len().saturating_sub(entry.offset);
    if available < need {
        return Err(BsiError::TruncatedPayload {
            tensor: name.to_string(),
            needed: need,
            available,
        });
    }
    Ok(payload[entry.offset..entry.offset + need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(MlpModel, CheckpointHeader)> {
    let (header, start) = decode_header(bytes)?;
    let payload = &bytes[start..];
    let corrupt = |m: String| BsiError::CorruptHeader(m);
    let mut layers = Vec::with_capacity(header.layers.len());
    for (l, lh) in header.layers.iter().enumerate() {
        let (n, m, r, ra) = (lh.out_dim, lh.in_dim, lh.rank, lh.aux_rank);
        if lh.active.len() != r {
            return Err(corrupt(format!("layer {l} active mask has {} entries, rank {r}", lh.active.len())));
        }
        let u = read_tensor(&header, payload, &format!("layer{l}.U"), &[n, r])?;
        let v = read_tensor(&header, payload, &format!("layer{l}.V"), &[m, r])?;
        let sigma = read_tensor(&header, payload, &format!("layer{l}.sigma"), &[r])?;
        let aux_u = read_tensor(&header, payload, &format!("layer{l}.auxU"), &[n, ra])?;
        let aux_v = read_tensor(&header, payload, &format!("layer{l}.auxV"), &[m, ra])?;
        let active = read_tensor(&header, payload, &format!("layer{l}.active"), &[r])?;
        let mask: Vec<bool> = active.iter().map(|&a| a != 0.0).collect();
        if mask != lh.active {
            return Err(corrupt(format!("layer {l} active tensor disagrees with header mask")));
        }
        let layer = BasisLinear::from_parts(
            Matrix::new(n, r, u)?,
            Matrix::new(m, r, v)?,
            sigma,
            Matrix::new(n, ra, aux_u)?,
            Matrix::new(m, ra, aux_v)?,
            mask,
        )
        .map_err(|e| corrupt(format!("layer {l}: {e}")))?;
        layers.push(layer);
    }
    let model = MlpModel::new(layers, header.activation).map_err(|e| corrupt(e.to_string()))?;
    if model.layer_sizes() != header.layer_sizes {
        return Err(corrupt("layer_sizes disagree with layer dimensions".into()));
    }
    Ok((model, header))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| BsiError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| BsiError::io(path, e))?;
    f.write_all(bytes).map_err(|e| BsiError::io(path, e))
}

pub fn save_checkpoint(model: &MlpModel, seed: Option<u64>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_checkpoint(model, seed)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpModel> {
    Ok(load_checkpoint_with_header(path)?.0)
}

pub fn load_checkpoint_with_header(path: impl AsRef<Path>) -> Result<(MlpModel, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| BsiError::io(path, e))?;
    decode_checkpoint(&bytes)
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `[input, hidden..., classes]`.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub aux_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressConfig {
    #[serde(default)]
    pub policy: Policy,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    /// Epochs of plain fine-tuning after the last pruning round.
    #[serde(default)]
    pub finetune_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub top_k: usize,
    /// Number of leading dataset batches the Hessian is averaged over.
    pub batches: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { top_k: 8, batches: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Dimension of the synthetic matrices.
    pub n: usize,
    /// Independent estimates per (matrix, s) cell.
    pub trials: usize,
    pub probe_counts: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 32,
            trials: 400,
            probe_counts: vec![1, 4, 16, 64, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Trials for the empirical failure-rate check.
    pub trials: usize,
    pub n: usize,
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            n: 10,
            alpha: 1.0,
            eps: 0.5,
            delta: 0.1,
        }
    }
}

/// Everything a run needs, including every pruning-schedule hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub schedule: PruneSchedule,
    pub probe: ProbeSettings,
    pub compress: CompressConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` overrides to a parsed TOML table. Values are read
/// as TOML literals, falling back to plain strings.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| BsiError::InvalidConfig(format!("override `{ov}` is not key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(BsiError::InvalidConfig(format!("override key `{key}` is malformed")));
        }
        let mut cur = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = cur
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| BsiError::InvalidConfig(format!("override `{key}`: `{part}` is not a table")))?;
        }
        cur.insert(path[path.len() - 1].to_string(), parse_override_value(raw.trim()));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| BsiError::InvalidConfig(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| BsiError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| BsiError::io(path, e))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            BsiError::InvalidConfig(m) => BsiError::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| BsiError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BsiError::InvalidConfig(m));
        let sizes = &self.model.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) {
            return bad(format!("model.layer_sizes {sizes:?} needs >= 2 positive widths"));
        }
        if sizes[0] != self.dataset.dims {
            return bad(format!("model input width {} != dataset.dims {}", sizes[0], self.dataset.dims));
        }
        if *sizes.last().expect("non-empty") != self.dataset.classes {
            return bad(format!(
                "model output width {} != dataset.classes {}",
                sizes.last().expect("non-empty"),
                self.dataset.classes
            ));
        }
        if self.dataset.batch_size == 0 {
            return bad("dataset.batch_size must be >= 1".into());
        }
        for (name, lr) in [("train", self.train.learning_rate), ("compress", self.compress.learning_rate)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name}.learning_rate must be finite and >= 0"));
            }
        }
        if self.probe.num_probes == 0 {
            return bad("probe.num_probes must be >= 1".into());
        }
        if let crate::importance::Epsilon::Fixed(e) = self.probe.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("probe.epsilon {e} must lie in (0, 1)"));
            }
        }
        self.schedule.validate(self.compress.policy)
    }
}

// ---------------------------------------------------------------- metrics

pub const METRICS_HEADER: [&str; 7] = [
    "round",
    "iteration",
    "loss",
    "accuracy",
    "active_bases_total",
    "param_count",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub iteration: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub active_bases_total: usize,
    pub param_count: usize,
    pub wall_time_ms: u64,
}

/// Append-only log whose rows increase in `(round, iteration)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if (row.round, row.iteration) <= (prev.round, prev.iteration) || row.iteration < prev.iteration {
                return Err(BsiError::invalid(format!(
                    "metrics row ({}, {}) does not follow ({}, {})",
                    row.round, row.iteration, prev.round, prev.iteration
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Zeroes every wall-time entry so logs compare byte-for-byte.
    pub fn strip_timing(&mut self) {
        self.rows.iter_mut().for_each(|r| r.wall_time_ms = 0);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let csv_err = |e: csv::Error| BsiError::Csv {
            path: PathBuf::from("<memory>"),
            source: e,
        };
        w.write_record(METRICS_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| BsiError::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let csv_err = |e: csv::Error| BsiError::Csv {
            path: PathBuf::from("<memory>"),
            source: e,
        };
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().collect::<Vec<_>>() != METRICS_HEADER {
            return Err(BsiError::invalid(format!("unexpected metrics header {header:?}")));
        }
        let mut log = Self::new();
        for row in r.deserialize() {
            log.push(row.map_err(csv_err)?)?;
        }
        Ok(log)
    }
}

fn with_path(path: &Path, e: BsiError) -> BsiError {
    match e {
        BsiError::Csv { source, .. } => BsiError::Csv {
            path: path.to_path_buf(),
            source,
        },
        BsiError::InvalidInput(m) => BsiError::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn write_metrics(log: &MetricsLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = log.to_csv_string().map_err(|e| with_path(path, e))?;
    write_file(path, text.as_bytes())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BsiError::io(path, e))?;
    MetricsLog::from_csv_str(&text).map_err(|e| with_path(path, e))
}

/// Writes any serializable rows as CSV with a header taken from the fields.
pub fn write_csv_rows<T: Serialize>(rows: &[T], header: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| BsiError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| BsiError::invalid(e.to_string()))?;
    write_file(path, &bytes)
}

/// Two-column `rank,eigenvalue_magnitude` CSV.
pub fn write_spectrum_csv(pairs: &[(usize, f64)], path: impl AsRef<Path>) -> Result<()> {
    write_csv_rows(pairs, &["rank", "eigenvalue_magnitude"], path)
}

/// Writes a UTF-8 text file, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_file(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    fn model() -> MlpModel {
        let mut m = MlpModel::random(&[3, 5, 2], Activation::Gelu, 2, &mut RngStream::new(4, 2)).unwrap();
        m.layer_mut(0).prune(&[1]).unwrap();
        m
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode_checkpoint(&m, Some(9)).unwrap();
        let (back, header) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.seed, Some(9));
        assert_eq!(header.tensors[0].name, "layer0.U");
        assert_eq!(bytes.len(), 16 + (bytes.len() - 16 - header.payload_len()) + header.payload_len());
    }

    #[test]
    fn truncated_payload_names_tensor() {
        let bytes = encode_checkpoint(&model(), None).unwrap();
        let cut = &bytes[..bytes.len() - 8];
        match decode_checkpoint(cut) {
            Err(BsiError::TruncatedPayload { tensor, .. }) => assert_eq!(tensor, "layer1.active"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_and_magic_checked() {
        let bytes = encode_checkpoint(&model(), None).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(BsiError::CorruptHeader(_))));
        let (_, end) = decode_header(&bytes).unwrap();
        let text = String::from_utf8(bytes[16..end].to_vec()).unwrap();
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 7");
        let mut v = CHECKPOINT_MAGIC.to_vec();
        v.extend_from_slice(&(bumped.len() as u64).to_le_bytes());
        v.extend_from_slice(bumped.as_bytes());
        v.extend_from_slice(&bytes[end..]);
        assert!(matches!(
            decode_checkpoint(&v),
            Err(BsiError::UnsupportedVersion { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn metrics_csv_shapes() {
        let mut log = MetricsLog::new();
        assert_eq!(log.to_csv_string().unwrap(), format!("{}\n", METRICS_HEADER.join(",")));
        log.push(MetricsRow {
            round: 0,
            iteration: 0,
            loss: 0.1 + 0.2,
            accuracy: 1.0 / 3.0,
            active_bases_total: 7,
            param_count: 99,
            wall_time_ms: 5,
        })
        .unwrap();
        let text = log.to_csv_string().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(MetricsLog::from_csv_str(&text).unwrap(), log);
        let dup = log.last().unwrap().clone();
        assert!(log.push(dup).is_err());
    }

    #[test]
    fn overrides_replace_and_reject_unknown_keys() {
        let mut t: toml::Table = "[a]\nb = 1\n".parse().unwrap();
        apply_overrides(&mut t, &["a.b=2.5".into(), "c.d=hello".into()]).unwrap();
        assert_eq!(t["a"]["b"].as_float(), Some(2.5));
        assert_eq!(t["c"]["d"].as_str(), Some("hello"));
        assert!(apply_overrides(&mut t, &["novalue".into()]).is_err());
    }
}
