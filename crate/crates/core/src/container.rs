//! `OVRW` tensor container.
//!
//! Layout, all integers little-endian:
//! magic `OVRW`, u32 version (1), u32 tensor count, then per tensor:
//! u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 row-major data.

use std::io::{Read, Write};

use crate::error::{OvrError, Result};

pub const MAGIC: &[u8; 4] = b"OVRW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_f64(name: &str, dims: &[usize], data: &[f64]) -> Self {
        Tensor {
            name: name.to_string(),
            dims: dims.to_vec(),
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn write_tensors<W: Write>(mut out: W, tensors: &[Tensor]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        let name = t.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| OvrError::Format(format!("tensor name too long: {}", t.name)))?;
        let rank = u8::try_from(t.dims.len())
            .map_err(|_| OvrError::Format(format!("rank too large for {}", t.name)))?;
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(OvrError::Shape(format!("tensor {} dims/data disagree", t.name)));
        }
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&[rank])?;
        for &d in &t.dims {
            let d = u32::try_from(d)
                .map_err(|_| OvrError::Format(format!("dimension too large in {}", t.name)))?;
            out.write_all(&d.to_le_bytes())?;
        }
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_tensors<R: Read>(mut input: R) -> Result<Vec<Tensor>> {
    let magic: [u8; 4] = read_array(&mut input)?;
    if &magic != MAGIC {
        return Err(OvrError::Format("bad magic, expected OVRW".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != VERSION {
        return Err(OvrError::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_array(&mut input)?);
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_array(&mut input)?) as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| OvrError::Format("tensor name is not UTF-8".into()))?;
        let [rank] = read_array::<_, 1>(&mut input)?;
        let dims = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(read_array(&mut input)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let mut raw = vec![0u8; numel * 4];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    Ok(tensors)
}
