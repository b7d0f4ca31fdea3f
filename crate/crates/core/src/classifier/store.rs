//! Little-endian binary registry payload:
//!
//! ```text
//! magic "OSCR" | version u32 | dim u32 | count u32
//! count x { name_len u32 | name utf-8 | sample_count u64 | created_at u64 | dim x f64 }
//! ```

use std::io::{Read, Write};

use super::{ClassRecord, ClassRegistry, ClassifierError, FeatureVector, Result};

const MAGIC: &[u8; 4] = b"OSCR";
pub const FORMAT_VERSION: u32 = 1;
const MAX_NAME: u32 = 4096;
const MAX_DIM: u32 = 1 << 20;

pub fn save_registry<W: Write>(registry: &ClassRegistry, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(registry.dim() as u32).to_le_bytes())?;
    w.write_all(&(registry.len() as u32).to_le_bytes())?;
    for c in registry.classes() {
        w.write_all(&(c.name.len() as u32).to_le_bytes())?;
        w.write_all(c.name.as_bytes())?;
        w.write_all(&c.sample_count.to_le_bytes())?;
        w.write_all(&c.created_at.to_le_bytes())?;
        for v in c.prototype.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn u32_le<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn u64_le<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_registry<R: Read>(mut r: R) -> Result<ClassRegistry> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ClassifierError::Format("not a registry payload".into()));
    }
    let version = u32_le(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(ClassifierError::Format(format!(
            "unsupported registry version {version}"
        )));
    }
    let dim = u32_le(&mut r)?;
    if dim == 0 || dim > MAX_DIM {
        return Err(ClassifierError::Format(format!(
            "implausible feature dimension {dim}"
        )));
    }
    let count = u32_le(&mut r)?;
    let mut classes = Vec::new();
    for _ in 0..count {
        let len = u32_le(&mut r)?;
        if len > MAX_NAME {
            return Err(ClassifierError::Format(format!(
                "class name of {len} bytes"
            )));
        }
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| ClassifierError::Format("class name is not utf-8".into()))?;
        let sample_count = u64_le(&mut r)?;
        let created_at = u64_le(&mut r)?;
        let mut values = Vec::with_capacity(dim as usize);
        for _ in 0..dim {
            values.push(f64::from_bits(u64_le(&mut r)?));
        }
        let prototype =
            FeatureVector::new(values).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if sample_count == 0 {
            return Err(ClassifierError::Format(format!(
                "class {name:?} has no samples"
            )));
        }
        classes.push(ClassRecord {
            name,
            prototype,
            sample_count,
            created_at,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ClassifierError::Format(
            "trailing bytes after registry".into(),
        ));
    }
    ClassRegistry::from_parts(dim as usize, classes)
        .map_err(|e| ClassifierError::Format(e.to_string()))
}
