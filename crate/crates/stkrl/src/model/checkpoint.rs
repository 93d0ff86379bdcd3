use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encoders::{EncoderKind, EncoderParams, LstmParams, PositionFeatureTable, RnnParams};
use crate::error::{Error, Result};
use crate::kg::{WordFeatureTable, WordSource};
use crate::model::hyper::{AggregationMode, EnergyMode, HyperParams, LossMode};
use crate::model::params::ModelParams;
use crate::numerics::{NormKind, Vector};
use crate::scalar::{real, to_f64, Scalar};

/// Checkpoint layout (all integers and floats little-endian):
///
/// ```text
/// magic        8 bytes  "STKRLCKP"
/// version      1 byte   (currently 1)
/// hyper        k, k_w, k_p: u64 ×3; clip: i64; top_m: u64; margin: f64;
///              norm: u8; learning_rate: f64; batch_size: u64; epochs: u64;
///              epsilon: f64; seed: u64; energy_mode: u8; loss_mode: u8;
///              encoder: u8; aggregation: u8
/// dims         n_entities, n_relations, n_words, n_position_rows: u64 ×4
/// tables       row-major f64: entity_struct, relation, words, positions,
///              then the encoder tables (rnn: W, U, b;
///              lstm: input/forget/output/update × W, U, b)
/// word_sources n_words bytes (0 = loaded, 1 = random)
/// ```
const MAGIC: &[u8; 8] = b"STKRLCKP";
const VERSION: u8 = 1;

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    params.validate()?;
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;

    let h = &params.hyper;
    write_u64(&mut w, h.k as u64)?;
    write_u64(&mut w, h.k_w as u64)?;
    write_u64(&mut w, h.k_p as u64)?;
    w.write_all(&(h.clip_distance as i64).to_le_bytes())?;
    write_u64(&mut w, h.top_m as u64)?;
    write_f64(&mut w, h.margin)?;
    w.write_all(&[match h.norm {
        NormKind::L1 => 0u8,
        NormKind::L2 => 1,
    }])?;
    write_f64(&mut w, h.learning_rate)?;
    write_u64(&mut w, h.batch_size as u64)?;
    write_u64(&mut w, h.epochs as u64)?;
    write_f64(&mut w, h.epsilon)?;
    write_u64(&mut w, h.seed)?;
    w.write_all(&[match h.energy_mode {
        EnergyMode::Full => 0u8,
        EnergyMode::TransEOnly => 1,
    }])?;
    w.write_all(&[match h.loss_mode {
        LossMode::FourHinges => 0u8,
        LossMode::Summed => 1,
    }])?;
    w.write_all(&[match h.encoder {
        EncoderKind::Rnn => 0u8,
        EncoderKind::RnnPool => 1,
        EncoderKind::Lstm => 2,
    }])?;
    w.write_all(&[match h.aggregation {
        AggregationMode::TopM => 0u8,
        AggregationMode::Mean => 1,
    }])?;

    write_u64(&mut w, params.entity_struct.len() as u64)?;
    write_u64(&mut w, params.relation.len() as u64)?;
    write_u64(&mut w, params.words.len() as u64)?;
    write_u64(&mut w, params.positions.rows() as u64)?;

    for v in &params.entity_struct {
        write_vector(&mut w, v)?;
    }
    for v in &params.relation {
        write_vector(&mut w, v)?;
    }
    for i in 0..params.words.len() {
        write_vector(&mut w, params.words.vector(crate::kg::WordId(i as u32)))?;
    }
    for i in 0..params.positions.rows() {
        write_vector(&mut w, params.positions.row(i))?;
    }
    for (_, slice) in params.encoder.table_slices() {
        for &x in slice {
            write_f64(&mut w, to_f64(x))?;
        }
    }
    for &s in params.words.sources() {
        w.write_all(&[match s {
            WordSource::Loaded => 0u8,
            WordSource::Random => 1,
        }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let mut r = BufReader::new(File::open(path.as_ref())?);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(
            "not a model checkpoint (bad magic bytes)".into(),
        ));
    }
    let version = read_u8(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint {
            field: "version".into(),
            msg: format!("unsupported version {version}, expected {VERSION}"),
        });
    }

    let k = read_u64(&mut r, "k")? as usize;
    let k_w = read_u64(&mut r, "k_w")? as usize;
    let k_p = read_u64(&mut r, "k_p")? as usize;
    let clip = read_i64(&mut r, "clip_distance")? as i32;
    let top_m = read_u64(&mut r, "top_m")? as usize;
    let margin = read_f64(&mut r, "margin")?;
    let norm = match read_u8(&mut r, "norm")? {
        0 => NormKind::L1,
        1 => NormKind::L2,
        other => {
            return Err(Error::Checkpoint {
                field: "norm".into(),
                msg: format!("invalid norm tag {other}"),
            })
        }
    };
    let learning_rate = read_f64(&mut r, "learning_rate")?;
    let batch_size = read_u64(&mut r, "batch_size")? as usize;
    let epochs = read_u64(&mut r, "epochs")? as usize;
    let epsilon = read_f64(&mut r, "epsilon")?;
    let seed = read_u64(&mut r, "seed")?;
    let energy_mode = match read_u8(&mut r, "energy_mode")? {
        0 => EnergyMode::Full,
        1 => EnergyMode::TransEOnly,
        other => {
            return Err(Error::Checkpoint {
                field: "energy_mode".into(),
                msg: format!("invalid tag {other}"),
            })
        }
    };
    let loss_mode = match read_u8(&mut r, "loss_mode")? {
        0 => LossMode::FourHinges,
        1 => LossMode::Summed,
        other => {
            return Err(Error::Checkpoint {
                field: "loss_mode".into(),
                msg: format!("invalid tag {other}"),
            })
        }
    };
    let encoder_kind = match read_u8(&mut r, "encoder")? {
        0 => EncoderKind::Rnn,
        1 => EncoderKind::RnnPool,
        2 => EncoderKind::Lstm,
        other => {
            return Err(Error::Checkpoint {
                field: "encoder".into(),
                msg: format!("invalid tag {other}"),
            })
        }
    };
    let aggregation = match read_u8(&mut r, "aggregation")? {
        0 => AggregationMode::TopM,
        1 => AggregationMode::Mean,
        other => {
            return Err(Error::Checkpoint {
                field: "aggregation".into(),
                msg: format!("invalid tag {other}"),
            })
        }
    };
    let hyper = HyperParams {
        k,
        k_w,
        k_p,
        clip_distance: clip,
        top_m,
        margin,
        norm,
        learning_rate,
        batch_size,
        epochs,
        epsilon,
        seed,
        energy_mode,
        loss_mode,
        encoder: encoder_kind,
        aggregation,
    };
    hyper
        .validate()
        .map_err(|e| Error::Checkpoint {
            field: "hyper".into(),
            msg: e.to_string(),
        })?;

    let n_entities = read_u64(&mut r, "n_entities")? as usize;
    let n_relations = read_u64(&mut r, "n_relations")? as usize;
    let n_words = read_u64(&mut r, "n_words")? as usize;
    let n_position_rows = read_u64(&mut r, "n_position_rows")? as usize;
    if n_position_rows != (2 * clip + 1) as usize {
        return Err(Error::Checkpoint {
            field: "positions".into(),
            msg: format!(
                "{n_position_rows} rows recorded, clip distance {clip} needs {}",
                2 * clip + 1
            ),
        });
    }

    let entity_struct = read_vectors::<T>(&mut r, n_entities, k, "entity_struct")?;
    let relation = read_vectors::<T>(&mut r, n_relations, k, "relation")?;
    let word_vecs = read_vectors::<T>(&mut r, n_words, k_w, "words")?;
    let position_rows = read_vectors::<T>(&mut r, n_position_rows, k_p, "positions")?;

    let mut encoder = match encoder_kind {
        EncoderKind::Rnn | EncoderKind::RnnPool => {
            EncoderParams::Rnn(RnnParams::zeros(k, k_w + k_p))
        }
        EncoderKind::Lstm => EncoderParams::Lstm(LstmParams::zeros(k, k_w + k_p)),
    };
    for (name, slice) in encoder.table_slices_mut() {
        for x in slice.iter_mut() {
            *x = real::<T>(read_f64(&mut r, &name)?);
        }
    }

    let mut sources = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        sources.push(match read_u8(&mut r, "word_sources")? {
            0 => WordSource::Loaded,
            1 => WordSource::Random,
            other => {
                return Err(Error::Checkpoint {
                    field: "word_sources".into(),
                    msg: format!("invalid tag {other}"),
                })
            }
        });
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format(
            "checkpoint has trailing bytes after the last table".into(),
        ));
    }

    let params = ModelParams {
        entity_struct,
        relation,
        words: WordFeatureTable::from_parts(k_w, word_vecs, sources),
        positions: PositionFeatureTable::from_rows(clip, position_rows)?,
        encoder,
        hyper,
    };
    params.validate().map_err(|e| Error::Checkpoint {
        field: "tables".into(),
        msg: e.to_string(),
    })?;
    Ok(params)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_vector<T: Scalar>(w: &mut impl Write, v: &Vector<T>) -> Result<()> {
    for &x in v.as_slice() {
        write_f64(w, to_f64(x))?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], field: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Checkpoint {
                field: field.to_string(),
                msg: "file truncated".into(),
            }
        } else {
            Error::Io(e)
        }
    })
}

fn read_u8(r: &mut impl Read, field: &str) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, field)?;
    Ok(b[0])
}

fn read_u64(r: &mut impl Read, field: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, field)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64(r: &mut impl Read, field: &str) -> Result<i64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, field)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, field: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, field)?;
    Ok(f64::from_le_bytes(b))
}

fn read_vectors<T: Scalar>(
    r: &mut impl Read,
    count: usize,
    dim: usize,
    field: &str,
) -> Result<Vec<Vector<T>>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = Vector::zeros(dim);
        for i in 0..dim {
            v[i] = real::<T>(read_f64(r, field)?);
        }
        out.push(v);
    }
    Ok(out)
}
