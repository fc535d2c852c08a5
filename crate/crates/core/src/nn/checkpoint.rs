//! Binary model checkpoints.
//!
//! ```text
//! magic        b"VNCK"
//! version      u16 (1)
//! variant      u8  (0 dish-only, 1 concat, 2 gated)
//! pool_mode    u8  (0 weighted, 1 mean)
//! dim          u32
//! hidden       u32
//! attn_hidden  u32
//! dropout      f64
//! count        u64  number of parameters that follow
//! params       count * f64, tensors in declaration order
//! crc32        u32  over the parameter bytes
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FusionModel, HeadConfig, ModelError, PoolMode, Variant};

const MAGIC: &[u8; 4] = b"VNCK";
const VERSION: u16 = 1;

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::DishOnly => 0,
        Variant::Concat => 1,
        Variant::Gated => 2,
    }
}

pub fn encode_checkpoint(model: &FusionModel, mut w: impl Write) -> Result<(), ModelError> {
    let cfg = model.config();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[variant_code(model.variant())])?;
    w.write_all(&[match cfg.pool_mode {
        PoolMode::Weighted => 0,
        PoolMode::Mean => 1,
    }])?;
    for v in [cfg.dim, cfg.hidden, cfg.attn_hidden] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&cfg.dropout.to_le_bytes())?;
    let slices = model.params().slices();
    let count: usize = slices.iter().map(|s| s.len()).sum();
    w.write_all(&(count as u64).to_le_bytes())?;
    let mut crc = crc32fast::Hasher::new();
    for s in slices {
        for v in s {
            let b = v.to_le_bytes();
            crc.update(&b);
            w.write_all(&b)?;
        }
    }
    w.write_all(&crc.finalize().to_le_bytes())?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], ModelError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ModelError::Checkpoint("file truncated".into()),
        _ => ModelError::Io(e),
    })?;
    Ok(b)
}

pub fn decode_checkpoint(mut r: impl Read) -> Result<FusionModel, ModelError> {
    let bad = |m: String| ModelError::Checkpoint(m);
    if &take::<4>(&mut r)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let variant = match take::<1>(&mut r)?[0] {
        0 => Variant::DishOnly,
        1 => Variant::Concat,
        2 => Variant::Gated,
        c => return Err(bad(format!("unknown variant code {c}"))),
    };
    let pool_mode = match take::<1>(&mut r)?[0] {
        0 => PoolMode::Weighted,
        1 => PoolMode::Mean,
        c => return Err(bad(format!("unknown pool mode code {c}"))),
    };
    let dim = u32::from_le_bytes(take(&mut r)?) as usize;
    let hidden = u32::from_le_bytes(take(&mut r)?) as usize;
    let attn_hidden = u32::from_le_bytes(take(&mut r)?) as usize;
    let dropout = f64::from_le_bytes(take(&mut r)?);
    let count = u64::from_le_bytes(take(&mut r)?) as usize;
    if dim == 0 || hidden == 0 {
        return Err(bad("zero-sized layer in header".into()));
    }
    let config = HeadConfig {
        dim,
        hidden,
        attn_hidden,
        dropout,
        pool_mode,
    };
    let mut model = FusionModel::init(variant, config, 0);
    let expected = model.params().num_params();
    if expected != count {
        return Err(bad(format!("header declares {count} parameters, layout needs {expected}")));
    }
    let mut crc = crc32fast::Hasher::new();
    for s in model.params_mut().slices_mut() {
        for v in s.iter_mut() {
            let b = take::<8>(&mut r)?;
            crc.update(&b);
            *v = f64::from_le_bytes(b);
        }
    }
    let stored = u32::from_le_bytes(take(&mut r)?);
    if stored != crc.finalize() {
        return Err(bad("parameter checksum mismatch".into()));
    }
    let params = model.params().clone();
    FusionModel::from_parts(variant, config, params)
}

pub fn save_checkpoint(model: &FusionModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FusionModel, ModelError> {
    decode_checkpoint(BufReader::new(File::open(path)?))
}
