//! The VOL1 volume file format.
//!
//! Layout: one JSON header line `{"magic":"VOL1","dims":[nx,ny,nz],"q95":q}`
//! terminated by `\n`, followed by `nx*ny*nz` little-endian IEEE-754 f32
//! values, x fastest. Writers may add extra header fields (e.g. a
//! provenance block); readers ignore unknown keys.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use otpatch_core::Volume;

use crate::error::{DataError, Result};

const MAGIC: &str = "VOL1";
// refuse to scan forever for a newline in a binary blob
const MAX_HEADER_BYTES: usize = 64 * 1024;

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    dims: [u64; 3],
    q95: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Writes a volume atomically (temp file in the same directory, renamed on
/// success), optionally embedding a provenance block in the header.
pub fn save_volume(path: &Path, v: &Volume, provenance: Option<serde_json::Value>) -> Result<()> {
    let header = Header {
        magic: MAGIC.to_string(),
        dims: [v.dims().0 as u64, v.dims().1 as u64, v.dims().2 as u64],
        q95: v.norm_q95(),
        provenance,
    };
    let tmp = path.with_extension("vol.tmp");
    {
        let file = File::create(&tmp).map_err(|e| DataError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let mut line = serde_json::to_string(&header)
            .map_err(|e| DataError::header(path, e.to_string()))?;
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| DataError::io(&tmp, e))?;
        for &val in v.voxels() {
            w.write_all(&(val as f32).to_le_bytes()).map_err(|e| DataError::io(&tmp, e))?;
        }
        w.flush().map_err(|e| DataError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Reads a VOL1 file; dims, payload size and voxel finiteness are checked.
pub fn load_volume(path: &Path) -> Result<Volume> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte).map_err(|e| DataError::io(path, e))? {
            0 => return Err(DataError::header(path, "missing newline-terminated header")),
            _ => {
                if byte[0] == b'\n' {
                    break;
                }
                line.push(byte[0]);
                if line.len() > MAX_HEADER_BYTES {
                    return Err(DataError::header(path, "header line exceeds 64 KiB"));
                }
            }
        }
    }
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| DataError::header(path, e.to_string()))?;
    if header.magic != MAGIC {
        return Err(DataError::header(path, format!("bad magic {:?}", header.magic)));
    }
    let dims = (header.dims[0] as usize, header.dims[1] as usize, header.dims[2] as usize);
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(DataError::header(path, format!("non-positive dims {:?}", header.dims)));
    }
    if !(header.q95.is_finite() && header.q95 > 0.0) {
        return Err(DataError::header(path, format!("invalid q95 {}", header.q95)));
    }
    let expected = dims.0 * dims.1 * dims.2;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| DataError::io(path, e))?;
    if payload.len() != expected * 4 {
        return Err(DataError::SizeMismatch { path: path.into(), expected, got: payload.len() / 4 });
    }
    let mut voxels = Vec::with_capacity(expected);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let val = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !val.is_finite() {
            return Err(DataError::NonFiniteVoxel { path: path.into(), index: i });
        }
        voxels.push(val);
    }
    Ok(Volume::with_q95(dims, voxels, header.q95)?)
}
