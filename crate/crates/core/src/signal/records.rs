//! Raw-tensor record files for real (pre-extracted) or synthetic data.
//!
//! One file per video: header `CMMD` + u32 version + u32 n_clips +
//! u32 image_size, then per clip the frame (row-major H x W x 3 f32
//! little-endian) followed by the waveform (f32 little-endian). The waveform
//! length is implied by the file size and validated on read.

use super::ClipPair;
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const CMMD_MAGIC: [u8; 4] = *b"CMMD";
pub const CMMD_VERSION: u32 = 1;

/// All clips of one video, as stored in a record file.
#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub image_size: usize,
    pub clips: Vec<ClipPair>,
}

pub fn write_record(path: &Path, rec: &VideoRecord) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&CMMD_MAGIC)?;
    f.write_all(&CMMD_VERSION.to_le_bytes())?;
    f.write_all(&(rec.clips.len() as u32).to_le_bytes())?;
    f.write_all(&(rec.image_size as u32).to_le_bytes())?;
    for clip in &rec.clips {
        if clip.frame.h != rec.image_size || clip.frame.w != rec.image_size {
            return Err(Error::Input(format!(
                "clip frame {}x{} does not match record image_size {}",
                clip.frame.h, clip.frame.w, rec.image_size
            )));
        }
        write_f32s(&mut f, &clip.frame.data)?;
        write_f32s(&mut f, &clip.waveform)?;
    }
    Ok(())
}

pub fn read_record(path: &Path) -> Result<VideoRecord> {
    let bytes = std::fs::read(path)?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CMMD_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != CMMD_VERSION {
        return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
    }
    let n_clips = read_u32(&mut r)? as usize;
    let image_size = read_u32(&mut r)? as usize;
    if n_clips == 0 || image_size == 0 {
        return Err(Error::Format(format!("{}: empty record", path.display())));
    }
    let frame_len = image_size * image_size * 3;
    let payload = r.len();
    if payload % 4 != 0 || (payload / 4) % n_clips != 0 {
        return Err(Error::Format(format!("{}: truncated payload", path.display())));
    }
    let per_clip = payload / 4 / n_clips;
    if per_clip < frame_len {
        return Err(Error::Format(format!("{}: clip smaller than one frame", path.display())));
    }
    let wave_len = per_clip - frame_len;
    let mut clips = Vec::with_capacity(n_clips);
    for k in 0..n_clips {
        let frame = ImageBuf::from_data(image_size, image_size, read_f32s(&mut r, frame_len)?)?;
        let waveform = read_f32s(&mut r, wave_len)?;
        clips.push(ClipPair { clip_index: k, frame, waveform });
    }
    Ok(VideoRecord { image_size, clips })
}

/// Record files in a dataset directory, sorted by name for determinism.
pub fn list_records(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().map(|e| e == "cmmd").unwrap_or(false) {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Input(format!("no .cmmd records in {}", dir.display())));
    }
    Ok(out)
}

fn write_f32s(w: &mut impl Write, vals: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(vals.len() * 4);
    for v in vals {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut &[u8], n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
