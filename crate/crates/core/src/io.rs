//! Little-endian binary containers shared by the CSI and feature files.
//!
//! Layout: 4-byte magic, `u32` format version, then `count`, `B`, `A`, `W`
//! as `u32`, followed by the payload.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSI_MAGIC: &[u8; 4] = b"NPOS";
pub const FEATURE_MAGIC: &[u8; 4] = b"NPOF";
pub const MODEL_MAGIC: &[u8; 4] = b"NPOM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub count: usize,
    pub shape: (usize, usize, usize),
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingInput(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn write_u32<W: Write>(out: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} exceeds u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::format(path, "unexpected end of file"))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4], path: &Path) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(|_| Error::format(path, "file too short"))?;
    if &m != magic {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&m), String::from_utf8_lossy(magic)),
        ));
    }
    let version = read_u32(r, path)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_header<W: Write>(out: &mut W, magic: &[u8; 4], h: &ContainerHeader) -> Result<()> {
    out.write_all(magic)?;
    write_u32(out, FORMAT_VERSION as usize)?;
    for v in [h.count, h.shape.0, h.shape.1, h.shape.2] {
        write_u32(out, v)?;
    }
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], path: &Path) -> Result<ContainerHeader> {
    read_magic(r, magic, path)?;
    let count = read_u32(r, path)? as usize;
    let b = read_u32(r, path)? as usize;
    let a = read_u32(r, path)? as usize;
    let w = read_u32(r, path)? as usize;
    Ok(ContainerHeader { count, shape: (b, a, w) })
}

/// Reads only the header of a container file.
pub fn peek_header(path: &Path, magic: &[u8; 4]) -> Result<ContainerHeader> {
    let mut r = open(path)?;
    read_header(&mut r, magic, path)
}
