//! On-disk model format: a magic line, a JSON header, then tree nodes as a flat
//! little-endian binary section. The layout is described in docs/model-format.md.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::forest::{ForestModel, Node, RegressionTree};
use crate::saliency::SaliencyModel;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &str = "salmap-model";
pub const FORMAT_VERSION: u32 = 1;
pub const NODE_RECORD_BYTES: usize = 24;

const KIND_LEAF: u8 = 0;
const KIND_SPLIT: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub created_unix: u64,
    pub generator: String,
    pub seed: u64,
    pub feature_count: usize,
    pub fusion_weights: Vec<f64>,
    pub config: PipelineConfig,
    /// Node count of each tree, in binary-section order.
    pub tree_nodes: Vec<usize>,
    /// FNV-1a 64 of the binary section, hex.
    pub nodes_fnv1a: String,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn encode_nodes(forest: &ForestModel) -> Vec<u8> {
    let total: usize = forest.trees.iter().map(|t| t.nodes.len()).sum();
    let mut out = Vec::with_capacity(total * NODE_RECORD_BYTES);
    for node in forest.trees.iter().flat_map(|t| &t.nodes) {
        let (kind, feature, left, right, value) = match *node {
            Node::Split { feature, threshold, left, right } => (KIND_SPLIT, feature, left, right, threshold),
            Node::Leaf { value } => (KIND_LEAF, 0, 0, 0, value),
        };
        out.push(kind);
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&feature.to_le_bytes());
        out.extend_from_slice(&left.to_le_bytes());
        out.extend_from_slice(&right.to_le_bytes());
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

fn decode_node(rec: &[u8]) -> Result<Node> {
    let u32_at = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
    let value = f64::from_le_bytes(rec[16..24].try_into().unwrap());
    match rec[0] {
        KIND_LEAF => Ok(Node::Leaf { value }),
        KIND_SPLIT => Ok(Node::Split {
            feature: u32_at(4),
            left: u32_at(8),
            right: u32_at(12),
            threshold: value,
        }),
        k => Err(Error::ModelFormat(format!("unknown node kind {k}"))),
    }
}

pub fn write_model<W: Write>(model: &SaliencyModel, mut out: W) -> Result<()> {
    model.validate()?;
    let nodes = encode_nodes(&model.forest);
    let header = ModelHeader {
        format_version: FORMAT_VERSION,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        generator: format!("salmap {}", env!("CARGO_PKG_VERSION")),
        seed: model.forest.seed,
        feature_count: model.forest.feature_count,
        fusion_weights: model.fusion_weights.clone(),
        config: model.config.clone(),
        tree_nodes: model.forest.trees.iter().map(|t| t.nodes.len()).collect(),
        nodes_fnv1a: format!("{:016x}", fnv1a(&nodes)),
    };
    let mut text = serde_json::to_string_pretty(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    text.push('\n');
    write!(out, "{MAGIC} {FORMAT_VERSION} {}\n", text.len())?;
    out.write_all(text.as_bytes())?;
    out.write_all(&nodes)?;
    out.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<(SaliencyModel, ModelHeader)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let eol = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::ModelFormat("missing magic line".into()))?;
    let magic = std::str::from_utf8(&bytes[..eol]).map_err(|_| Error::ModelFormat("magic line is not text".into()))?;
    let parts: Vec<&str> = magic.split(' ').collect();
    if parts.len() != 3 || parts[0] != MAGIC {
        return Err(Error::ModelFormat("not a salmap model file".into()));
    }
    let version: u32 = parts[1].parse().map_err(|_| Error::ModelFormat("bad version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported format version {version}")));
    }
    let header_len: usize = parts[2].parse().map_err(|_| Error::ModelFormat("bad header length".into()))?;
    let body = &bytes[eol + 1..];
    if body.len() < header_len {
        return Err(Error::ModelFormat("truncated header".into()));
    }
    let header: ModelHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    let nodes = &body[header_len..];
    let total: usize = header.tree_nodes.iter().sum();
    if nodes.len() != total * NODE_RECORD_BYTES {
        return Err(Error::ModelFormat(format!(
            "node section has {} bytes, header promises {}",
            nodes.len(),
            total * NODE_RECORD_BYTES
        )));
    }
    if format!("{:016x}", fnv1a(nodes)) != header.nodes_fnv1a {
        return Err(Error::ModelFormat("node section checksum mismatch".into()));
    }
    let mut records = nodes.chunks_exact(NODE_RECORD_BYTES);
    let mut trees = Vec::with_capacity(header.tree_nodes.len());
    for &n in &header.tree_nodes {
        let nodes = records.by_ref().take(n).map(decode_node).collect::<Result<Vec<_>>>()?;
        trees.push(RegressionTree { nodes });
    }
    let model = SaliencyModel {
        forest: ForestModel {
            trees,
            feature_count: header.feature_count,
            seed: header.seed,
        },
        fusion_weights: header.fusion_weights.clone(),
        config: header.config.clone(),
    };
    model.validate()?;
    Ok((model, header))
}

/// Writes through a sibling temp file and renames it into place.
pub fn save_model(model: &SaliencyModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    atomic_write(path, &buf)
}

/// Writes `bytes` to a temp file in the target directory, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SaliencyModel> {
    let file = std::fs::File::open(path)?;
    Ok(read_model(std::io::BufReader::new(file))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> SaliencyModel {
        let mut config = PipelineConfig::default();
        config.multiseg.level_count = 2;
        let tree = RegressionTree {
            nodes: vec![
                Node::Split { feature: 1, threshold: 0.1 + 0.2, left: 1, right: 2 },
                Node::Leaf { value: 1.0 / 3.0 },
                Node::Leaf { value: f64::MIN_POSITIVE },
            ],
        };
        SaliencyModel {
            forest: ForestModel {
                trees: vec![tree, RegressionTree::leaf(0.7)],
                feature_count: 116,
                seed: u64::MAX - 3,
            },
            fusion_weights: vec![0.123456789012345678, -1e-300],
            config,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = toy_model();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let (back, header) = read_model(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.tree_nodes, vec![3, 1]);
        assert_eq!(back.fusion_weights[0].to_bits(), m.fusion_weights[0].to_bits());
    }

    #[test]
    fn header_is_text_and_section_sized() {
        let mut buf = Vec::new();
        write_model(&toy_model(), &mut buf).unwrap();
        let first = buf.iter().position(|&b| b == b'\n').unwrap();
        let line = std::str::from_utf8(&buf[..first]).unwrap();
        let len: usize = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(line.starts_with("salmap-model 1 "));
        assert_eq!(buf.len() - first - 1 - len, 4 * NODE_RECORD_BYTES);
    }

    #[test]
    fn corruption_detected() {
        let mut buf = Vec::new();
        write_model(&toy_model(), &mut buf).unwrap();
        let mut flipped = buf.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(read_model(&flipped[..]), Err(Error::ModelFormat(_))));
        assert!(read_model(&buf[..buf.len() - 5]).is_err());
        assert!(read_model(&b"not a model\n"[..]).is_err());
    }
}
