//! The `.chad` model archive.
//!
//! Layout: the magic bytes `CHAD`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header, then a payload of
//! little-endian `f64` values. The header holds configs, layer names and
//! kinds, and `(offset, len)` references into the payload. A trained GAN is
//! stored as an extra header section whose tensors follow the manifold's.

use std::fs;
use std::path::{Path, PathBuf};

use chad_core::generator::{DiscriminatorModel, GanTrainConfig, GeneratorModel};
use chad_core::interp::TrainedModel;
use chad_core::manifold::{ManifoldConfig, ManifoldModel};
use chad_core::nn::{Layer, LayerKind, Network};
use chad_core::PcaBasis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CHAD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Blob {
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    kind: LayerKind,
    weight: Blob,
    bias: Blob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BasisEntry {
    width: usize,
    height: usize,
    channels: usize,
    mean: Blob,
    rows: Blob,
    explained_variance: Blob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifoldEntry {
    config: ManifoldConfig,
    basis: BasisEntry,
    decoder: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GanEntry {
    config: GanTrainConfig,
    /// Last completed curriculum stage.
    stage: usize,
    size: usize,
    channels: usize,
    generator: Vec<LayerEntry>,
    discriminator: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    /// Dataset the model was trained on.
    dataset: Option<PathBuf>,
    manifold: ManifoldEntry,
    gan: Option<GanEntry>,
}

/// Everything a `.chad` file holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub model: TrainedModel,
    pub dataset: Option<PathBuf>,
    pub gan: Option<GanMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanMeta {
    pub config: GanTrainConfig,
    pub stage: usize,
}

#[derive(Default)]
struct Payload(Vec<f64>);

impl Payload {
    fn push(&mut self, values: &[f64]) -> Blob {
        let offset = self.0.len() as u64;
        self.0.extend_from_slice(values);
        Blob {
            offset,
            len: values.len() as u64,
        }
    }

    fn layers(&mut self, net: &Network) -> Vec<LayerEntry> {
        net.layers()
            .iter()
            .map(|l| LayerEntry {
                name: l.name.clone(),
                kind: l.kind.clone(),
                weight: self.push(&l.weight),
                bias: self.push(&l.bias),
            })
            .collect()
    }
}

struct Reader<'a>(&'a [f64]);

impl Reader<'_> {
    fn get(&self, blob: Blob) -> Result<Vec<f64>> {
        let start = blob.offset as usize;
        let end = start
            .checked_add(blob.len as usize)
            .filter(|&e| e <= self.0.len())
            .ok_or_else(|| Error::format("model archive", "tensor reference past the end of the payload"))?;
        Ok(self.0[start..end].to_vec())
    }

    fn network(&self, entries: &[LayerEntry]) -> Result<Network> {
        let layers = entries
            .iter()
            .map(|e| {
                let mut layer = Layer::new(e.name.clone(), e.kind.clone());
                let (w, b) = (self.get(e.weight)?, self.get(e.bias)?);
                if w.len() != layer.weight.len() || b.len() != layer.bias.len() {
                    return Err(Error::format(
                        "model archive",
                        format!("layer {} has the wrong parameter count", e.name),
                    ));
                }
                layer.weight = w;
                layer.bias = b;
                Ok(layer)
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network::new(layers);
        if !net.is_finite() {
            return Err(Error::format("model archive", "non-finite parameters"));
        }
        Ok(net)
    }
}

pub fn encode(archive: &ModelArchive) -> Result<Vec<u8>> {
    let mut payload = Payload::default();
    let m = &archive.model.manifold;
    let basis = m.basis();
    let (h, w, c) = basis.frame_shape();
    let manifold = ManifoldEntry {
        config: m.config.clone(),
        basis: BasisEntry {
            width: w,
            height: h,
            channels: c,
            mean: payload.push(basis.mean()),
            rows: payload.push(basis.rows()),
            explained_variance: payload.push(basis.explained_variance()),
        },
        decoder: payload.layers(m.decoder()),
    };
    let gan = match (&archive.model.generator, &archive.model.discriminator, &archive.gan) {
        (Some(g), Some(d), Some(meta)) => {
            let (size, channels) = g.frame_shape();
            Some(GanEntry {
                config: meta.config.clone(),
                stage: meta.stage,
                size,
                channels,
                generator: payload.layers(g.network()),
                discriminator: payload.layers(d.network()),
            })
        }
        (None, None, None) => None,
        _ => {
            return Err(Error::format(
                "model archive",
                "a GAN section needs generator, discriminator and config",
            ))
        }
    };
    let header = Header {
        format: "chad-model".into(),
        dataset: archive.dataset.clone(),
        manifold,
        gan,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format("model archive", e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * payload.0.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &payload.0 {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ModelArchive> {
    let bad = |m: &str| Error::format("model archive", m.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing CHAD signature"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if header_len > body.len() || !(body.len() - header_len).is_multiple_of(8) {
        return Err(bad("truncated archive"));
    }
    let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| bad(&e.to_string()))?;
    if header.format != "chad-model" {
        return Err(bad("not a model archive"));
    }
    let values: Vec<f64> = body[header_len..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let r = Reader(&values);
    let b = &header.manifold.basis;
    let basis = PcaBasis::from_parts(
        b.width,
        b.height,
        b.channels,
        r.get(b.mean)?,
        r.get(b.rows)?,
        r.get(b.explained_variance)?,
    )?;
    let manifold = ManifoldModel::from_parts(basis, r.network(&header.manifold.decoder)?, header.manifold.config)?;
    let (generator, discriminator, gan) = match header.gan {
        Some(g) => (
            Some(GeneratorModel::from_network(
                r.network(&g.generator)?,
                g.size,
                g.channels,
                g.config.generator.clone(),
            )?),
            Some(DiscriminatorModel::from_network(r.network(&g.discriminator)?, g.size, g.channels)?),
            Some(GanMeta {
                config: g.config,
                stage: g.stage,
            }),
        ),
        None => (None, None, None),
    };
    Ok(ModelArchive {
        model: TrainedModel {
            manifold,
            generator,
            discriminator,
        },
        dataset: header.dataset,
        gan,
    })
}

/// Writes atomically: a temporary sibling is renamed over `path`.
pub fn save(path: &Path, archive: &ModelArchive) -> Result<()> {
    let bytes = encode(archive)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("chad.tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelArchive> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
