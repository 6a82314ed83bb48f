//! Versioned binary model format shared by training and deployment.
//!
//! Layout (little-endian): magic "MNMT", format version, precision flag,
//! key-value config block, source/target/factor vocab blocks, then named
//! parameter tensors. The file is self-describing: loading needs no
//! external configuration. Strings are u32-length-prefixed UTF-8.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use minnmt_tensor::Tensor;

use crate::error::{FormatError, FormatResult};
use crate::model::{AttentionKind, CellKind, FactorSpec, ModelConfig, ModelParams};
use crate::textpipe::Vocab;

pub const MAGIC: &[u8; 4] = b"MNMT";
pub const VERSION: u32 = 1;

const MAX_STR: usize = 1 << 20;
const MAX_COUNT: u32 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    fn flag(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }

    fn from_flag(f: u8) -> FormatResult<Self> {
        match f {
            0 => Ok(Precision::F64),
            1 => Ok(Precision::F32),
            other => Err(FormatError::Corrupt { what: format!("precision flag {other}") }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SavedModel {
    pub config: ModelConfig,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub factor_vocabs: Vec<Vocab>,
    pub params: ModelParams,
    pub precision: Precision,
}

pub fn write_str(w: &mut impl Write, s: &str) -> FormatResult<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_str(r: &mut impl Read) -> FormatResult<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > MAX_STR {
        return Err(FormatError::Corrupt { what: format!("string length {len}") });
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| FormatError::Corrupt { what: "non-UTF8 string".into() })
}

fn config_entries(config: &ModelConfig) -> Vec<(String, String)> {
    let factors = config
        .factors
        .iter()
        .map(|f| format!("{}:{}", f.vocab_size, f.emb_dim))
        .collect::<Vec<_>>()
        .join(";");
    vec![
        ("num_layers".into(), config.num_layers.to_string()),
        ("rnn_size".into(), config.rnn_size.to_string()),
        ("embedding_dim".into(), config.embedding_dim.to_string()),
        ("cell".into(), config.cell.as_str().into()),
        ("attention".into(), config.attention.as_str().into()),
        ("input_feed".into(), config.input_feed.to_string()),
        ("dropout_rate".into(), config.dropout_rate.to_string()),
        ("factors".into(), factors),
    ]
}

fn config_from_entries(entries: &BTreeMap<String, String>) -> FormatResult<ModelConfig> {
    let get = |key: &str| -> FormatResult<&String> {
        entries
            .get(key)
            .ok_or_else(|| FormatError::Config { what: format!("missing config key {key:?}") })
    };
    let parse_usize = |key: &str| -> FormatResult<usize> {
        get(key)?
            .parse()
            .map_err(|_| FormatError::Config { what: format!("bad value for {key:?}") })
    };
    let factors_raw = get("factors")?;
    let mut factors = Vec::new();
    if !factors_raw.is_empty() {
        for part in factors_raw.split(';') {
            let mut it = part.split(':');
            let spec = (|| -> Option<FactorSpec> {
                let vocab_size = it.next()?.parse().ok()?;
                let emb_dim = it.next()?.parse().ok()?;
                Some(FactorSpec { vocab_size, emb_dim })
            })()
            .ok_or_else(|| FormatError::Config { what: format!("bad factor spec {part:?}") })?;
            factors.push(spec);
        }
    }
    let config = ModelConfig {
        num_layers: parse_usize("num_layers")?,
        rnn_size: parse_usize("rnn_size")?,
        embedding_dim: parse_usize("embedding_dim")?,
        cell: CellKind::parse(get("cell")?)
            .map_err(|e| FormatError::Config { what: e.to_string() })?,
        attention: AttentionKind::parse(get("attention")?)
            .map_err(|e| FormatError::Config { what: e.to_string() })?,
        input_feed: get("input_feed")? == "true",
        dropout_rate: get("dropout_rate")?
            .parse()
            .map_err(|_| FormatError::Config { what: "bad dropout_rate".into() })?,
        factors,
    };
    config.validate().map_err(|e| FormatError::Config { what: e.to_string() })?;
    Ok(config)
}

fn write_vocab(w: &mut impl Write, vocab: &Vocab) -> FormatResult<()> {
    let tokens = vocab.non_special_tokens();
    w.write_u32::<LittleEndian>(tokens.len() as u32)?;
    for t in tokens {
        write_str(w, t)?;
    }
    Ok(())
}

fn read_vocab(r: &mut impl Read) -> FormatResult<Vocab> {
    let count = r.read_u32::<LittleEndian>()?;
    if count > MAX_COUNT {
        return Err(FormatError::Corrupt { what: format!("vocab count {count}") });
    }
    let mut tokens = Vec::with_capacity(count as usize);
    for _ in 0..count {
        tokens.push(read_str(r)?);
    }
    Ok(Vocab::from_tokens(tokens))
}

fn write_tensor(w: &mut impl Write, t: &Tensor, precision: Precision) -> FormatResult<()> {
    w.write_u32::<LittleEndian>(t.shape().len() as u32)?;
    for &d in t.shape() {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    match precision {
        Precision::F64 => {
            for &v in t.data() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Precision::F32 => {
            for &v in t.data() {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read, precision: Precision) -> FormatResult<Tensor> {
    let ndim = r.read_u32::<LittleEndian>()?;
    if ndim > 8 {
        return Err(FormatError::Corrupt { what: format!("tensor rank {ndim}") });
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    let mut numel: usize = 1;
    for _ in 0..ndim {
        let d = r.read_u32::<LittleEndian>()? as usize;
        numel = numel.saturating_mul(d);
        shape.push(d);
    }
    if numel > (MAX_COUNT as usize) {
        return Err(FormatError::Corrupt { what: format!("tensor of {numel} elements") });
    }
    let mut data = Vec::with_capacity(numel);
    match precision {
        Precision::F64 => {
            for _ in 0..numel {
                data.push(r.read_f64::<LittleEndian>()?);
            }
        }
        Precision::F32 => {
            for _ in 0..numel {
                data.push(r.read_f32::<LittleEndian>()? as f64);
            }
        }
    }
    Tensor::new(shape, data).map_err(|e| FormatError::Corrupt { what: e.to_string() })
}

/// Serialize a model to any writer (checkpoints append trailing blocks).
pub fn write_model_to(w: &mut impl Write, model: &SavedModel) -> FormatResult<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(model.precision.flag())?;

    let entries = config_entries(&model.config);
    w.write_u32::<LittleEndian>(entries.len() as u32)?;
    for (k, v) in &entries {
        write_str(w, k)?;
        write_str(w, v)?;
    }

    write_vocab(w, &model.src_vocab)?;
    write_vocab(w, &model.tgt_vocab)?;
    w.write_u32::<LittleEndian>(model.factor_vocabs.len() as u32)?;
    for v in &model.factor_vocabs {
        write_vocab(w, v)?;
    }

    let named = model.params.to_named();
    w.write_u32::<LittleEndian>(named.len() as u32)?;
    for (name, tensor) in &named {
        write_str(w, name)?;
        write_tensor(w, tensor, model.precision)?;
    }
    Ok(())
}

/// Deserialize a model; leaves the reader positioned right after the model
/// block so callers can read trailing blocks.
pub fn read_model_from(r: &mut impl Read) -> FormatResult<SavedModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic { expected: "MNMT" });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(FormatError::Version { found: version, supported: VERSION });
    }
    let precision = Precision::from_flag(r.read_u8()?)?;

    let n_entries = r.read_u32::<LittleEndian>()?;
    if n_entries > 1024 {
        return Err(FormatError::Corrupt { what: format!("{n_entries} config entries") });
    }
    let mut entries = BTreeMap::new();
    for _ in 0..n_entries {
        let k = read_str(r)?;
        let v = read_str(r)?;
        entries.insert(k, v);
    }
    let config = config_from_entries(&entries)?;

    let src_vocab = read_vocab(r)?;
    let tgt_vocab = read_vocab(r)?;
    let n_factor_vocabs = r.read_u32::<LittleEndian>()?;
    if n_factor_vocabs as usize != config.factors.len() {
        return Err(FormatError::Corrupt {
            what: format!(
                "{n_factor_vocabs} factor vocabs for {} configured factors",
                config.factors.len()
            ),
        });
    }
    let mut factor_vocabs = Vec::with_capacity(n_factor_vocabs as usize);
    for (i, spec) in config.factors.iter().enumerate() {
        let v = read_vocab(r)?;
        if v.size() != spec.vocab_size {
            return Err(FormatError::Corrupt {
                what: format!("factor {i} vocab size {} != configured {}", v.size(), spec.vocab_size),
            });
        }
        factor_vocabs.push(v);
    }

    let n_params = r.read_u32::<LittleEndian>()?;
    if n_params > 4096 {
        return Err(FormatError::Corrupt { what: format!("{n_params} parameters") });
    }
    let mut named = BTreeMap::new();
    for _ in 0..n_params {
        let name = read_str(r)?;
        let tensor = read_tensor(r, precision)?;
        named.insert(name, tensor);
    }
    let params =
        ModelParams::from_named(&config, src_vocab.size(), tgt_vocab.size(), named)
            .map_err(|e| FormatError::Corrupt { what: e.to_string() })?;

    Ok(SavedModel { config, src_vocab, tgt_vocab, factor_vocabs, params, precision })
}

/// Write a file atomically: to a temporary sibling, then rename over the
/// destination.
pub fn atomic_write(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> FormatResult<()>) -> FormatResult<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_model(path: &Path, model: &SavedModel) -> FormatResult<()> {
    atomic_write(path, |w| write_model_to(w, model))
}

pub fn load_model(path: &Path) -> FormatResult<SavedModel> {
    let mut r = BufReader::new(File::open(path)?);
    read_model_from(&mut r)
}
