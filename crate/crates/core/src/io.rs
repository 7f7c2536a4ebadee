//! File formats: FEAT feature files and PCM16 mono WAV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::feat::{AudioBuffer, FeatureKind, FeatureMatrix};

const FEAT_MAGIC: &[u8; 4] = b"FEAT";

/// Writes a feature matrix: magic "FEAT", u32 n_frames, u32 dim (little endian),
/// then n_frames * dim little-endian f32, row-major.
pub fn write_feat(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEAT_MAGIC)?;
    w.write_all(&(m.n_frames() as u32).to_le_bytes())?;
    w.write_all(&(m.dim() as u32).to_le_bytes())?;
    for &v in m.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a FEAT file. The format carries no frame period or kind; callers get
/// the 10 ms default and `Mfcc` and may override both.
pub fn read_feat(path: &Path) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEAT_MAGIC {
        return Err(Error::Format(format!("{}: bad FEAT magic", path.display())));
    }
    let n_frames = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 {
        return Err(Error::Format(format!("{}: zero feature dimension", path.display())));
    }
    let mut data = Vec::with_capacity(n_frames * dim);
    let mut buf = [0u8; 4];
    for _ in 0..n_frames * dim {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    FeatureMatrix::from_data(data, n_frames, dim, FeatureKind::Mfcc)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

/// Reads a PCM16 mono WAV file.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut r = BufReader::new(File::open(path)?);
    let mut hdr = [0u8; 12];
    r.read_exact(&mut hdr)?;
    if &hdr[0..4] != b"RIFF" || &hdr[8..12] != b"WAVE" {
        return Err(Error::Format(format!("{}: not a RIFF/WAVE file", path.display())));
    }
    let mut sample_rate = 0u32;
    let mut channels = 0u16;
    let mut bits = 0u16;
    let mut samples: Option<Vec<f64>> = None;
    loop {
        let mut tag = [0u8; 4];
        match r.read_exact(&mut tag) {
            Ok(()) => {}
            Err(_) => break,
        }
        let size = read_u32(&mut r)? as usize;
        match &tag {
            b"fmt " => {
                let format = read_u16(&mut r)?;
                channels = read_u16(&mut r)?;
                sample_rate = read_u32(&mut r)?;
                let _byte_rate = read_u32(&mut r)?;
                let _block_align = read_u16(&mut r)?;
                bits = read_u16(&mut r)?;
                if format != 1 {
                    return Err(Error::Format("only PCM WAV is supported".into()));
                }
                // skip any fmt extension
                let consumed = 16;
                skip(&mut r, size.saturating_sub(consumed))?;
            }
            b"data" => {
                let mut raw = vec![0u8; size];
                r.read_exact(&mut raw)?;
                if bits != 16 {
                    return Err(Error::Format("only 16-bit PCM is supported".into()));
                }
                if channels != 1 {
                    return Err(Error::Format("only mono WAV is supported".into()));
                }
                let s: Vec<f64> = raw
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                samples = Some(s);
            }
            _ => skip(&mut r, size + (size & 1))?,
        }
        if samples.is_some() && sample_rate != 0 {
            break;
        }
    }
    let samples = samples.ok_or_else(|| Error::Format("WAV has no data chunk".into()))?;
    if sample_rate == 0 {
        return Err(Error::Format("WAV has no fmt chunk".into()));
    }
    AudioBuffer::new(samples, sample_rate)
}

/// Writes a PCM16 mono WAV file. Samples are clamped to [-1, 1].
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let data_len = audio.samples.len() * 2;
    w.write_all(b"RIFF")?;
    w.write_all(&((36 + data_len) as u32).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&audio.sample_rate.to_le_bytes())?;
    w.write_all(&(audio.sample_rate * 2).to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&16u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&(data_len as u32).to_le_bytes())?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn skip<R: Read>(r: &mut R, n: usize) -> Result<()> {
    std::io::copy(&mut r.take(n as u64), &mut std::io::sink())?;
    Ok(())
}
