//! Statistics checkpoint file.
//!
//! Layout (little-endian): magic "PCBS", version u16 (1), width u16, height
//! u16, window u16, frame count u64, counter flags u8 (bit 0 anti-correlation,
//! bit 1 postselection), 11 reserved bytes. Then, when enabled, the symmetry
//! center as two i64 and the postselected pixel as two u32. Counters follow
//! as u64: singles, pairs, anti-correlation counts, postselection counts.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{half_window_len, AccumulateOptions, AntiCorrCounts, CoincidenceStats, PostselectCounts, Strategy};
use crate::error::{Error, Result};
use crate::geometry::Pixel;

pub const STATS_MAGIC: &[u8; 4] = b"PCBS";
pub const STATS_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

pub fn write_stats(path: &Path, stats: &CoincidenceStats) -> Result<()> {
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    if stats.width > u16::MAX as usize || stats.height > u16::MAX as usize || stats.window > u16::MAX as usize {
        return Err(Error::domain("statistics dimensions exceed 16 bits"));
    }
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(STATS_MAGIC);
    h[4..6].copy_from_slice(&STATS_VERSION.to_le_bytes());
    h[6..8].copy_from_slice(&(stats.width as u16).to_le_bytes());
    h[8..10].copy_from_slice(&(stats.height as u16).to_le_bytes());
    h[10..12].copy_from_slice(&(stats.window as u16).to_le_bytes());
    h[12..20].copy_from_slice(&stats.n_frames.to_le_bytes());
    h[20] = stats.anticorr.is_some() as u8 | (stats.postselect.is_some() as u8) << 1;
    out.write_all(&h).map_err(io)?;
    if let Some(a) = &stats.anticorr {
        out.write_all(&a.center2.0.to_le_bytes()).map_err(io)?;
        out.write_all(&a.center2.1.to_le_bytes()).map_err(io)?;
    }
    if let Some(p) = &stats.postselect {
        out.write_all(&(p.pixel.x as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&(p.pixel.y as u32).to_le_bytes()).map_err(io)?;
    }
    let mut put = |v: &[u64]| -> Result<()> {
        for chunk in v.chunks(8192) {
            let bytes: Vec<u8> = chunk.iter().flat_map(|x| x.to_le_bytes()).collect();
            out.write_all(&bytes).map_err(io)?;
        }
        Ok(())
    };
    put(&stats.singles)?;
    put(&stats.pairs)?;
    if let Some(a) = &stats.anticorr {
        put(&a.counts)?;
    }
    if let Some(p) = &stats.postselect {
        put(&p.counts)?;
    }
    out.flush().map_err(io)
}

pub fn read_stats(path: &Path) -> Result<CoincidenceStats> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let len = file.metadata().map_err(|e| Error::io(format!("reading {}", path.display()), e))?.len();
    let mut r = BufReader::new(file);
    let fmt = |offset: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)
        .map_err(|_| fmt(0, "shorter than the 32-byte statistics header".into()))?;
    if &h[0..4] != STATS_MAGIC {
        return Err(fmt(0, "bad magic, expected \"PCBS\"".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([h[i], h[i + 1]]);
    if u16_at(4) != STATS_VERSION {
        return Err(fmt(4, format!("unsupported version {}", u16_at(4))));
    }
    let (width, height, window) = (u16_at(6) as usize, u16_at(8) as usize, u16_at(10) as usize);
    let n_frames = u64::from_le_bytes(h[12..20].try_into().unwrap());
    let flags = h[20];
    if flags & !3 != 0 {
        return Err(fmt(20, format!("unknown counter flags {flags:#x}")));
    }
    let mut offset = HEADER_LEN as u64;
    let mut read8 = |r: &mut BufReader<std::fs::File>| -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| fmt(offset, "truncated statistics file".into()))?;
        offset += 8;
        Ok(b)
    };
    let center2 = if flags & 1 != 0 {
        Some((i64::from_le_bytes(read8(&mut r)?), i64::from_le_bytes(read8(&mut r)?)))
    } else {
        None
    };
    let postselect = if flags & 2 != 0 {
        let b = read8(&mut r)?;
        Some(Pixel::new(
            u32::from_le_bytes(b[0..4].try_into().unwrap()) as usize,
            u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize,
        ))
    } else {
        None
    };
    let opts = AccumulateOptions {
        window,
        symmetry_center2: center2,
        postselect,
        strategy: Strategy::Auto,
    };
    let mut stats = CoincidenceStats::new(width, height, &opts).map_err(|e| fmt(0, e.to_string()))?;
    let p = width * height;
    let counters = p + p * half_window_len(window) + if center2.is_some() { 3 * p } else { 0 } + if postselect.is_some() { p } else { 0 };
    let expected = offset + 8 * counters as u64;
    if len != expected {
        return Err(fmt(len.min(expected), format!("file length {len} does not match header ({expected})")));
    }
    let mut fill = |dst: &mut [u64]| -> Result<()> {
        let mut buf = vec![0u8; 8 * 8192];
        for chunk in dst.chunks_mut(8192) {
            let bytes = &mut buf[..8 * chunk.len()];
            r.read_exact(bytes).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
                *v = u64::from_le_bytes(b.try_into().unwrap());
            }
        }
        Ok(())
    };
    stats.n_frames = n_frames;
    fill(&mut stats.singles)?;
    fill(&mut stats.pairs)?;
    if let Some(AntiCorrCounts { counts, .. }) = &mut stats.anticorr {
        fill(counts)?;
    }
    if let Some(PostselectCounts { counts, .. }) = &mut stats.postselect {
        fill(counts)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::BitFrame;
    use crate::jpd::accumulate;

    #[test]
    fn checkpoint_round_trip() {
        let frames: Vec<BitFrame> = (0..40)
            .map(|k| {
                let mut f = BitFrame::new(9, 6);
                for i in 0..54 {
                    if (i * 7 + k * 3) % 5 == 0 {
                        f.set(i % 9, i / 9);
                    }
                }
                f
            })
            .collect();
        let opts = AccumulateOptions {
            symmetry_center2: Some((8, 5)),
            postselect: Some(Pixel::new(2, 3)),
            ..AccumulateOptions::with_window(3)
        };
        let s = accumulate(frames.into_iter().map(Ok), 9, 6, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pcbs");
        write_stats(&path, &s).unwrap();
        assert_eq!(read_stats(&path).unwrap(), s);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_stats(&path), Err(Error::Format { .. })));
        bytes[1] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_stats(&path), Err(Error::Format { offset: 0, .. })));
    }
}
