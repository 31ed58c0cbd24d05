//! Binary detector frames and the streamed frame file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PCBF"
//!      4     2  format version (1)
//!      6     2  width
//!      8     2  height
//!     10     8  frame count
//!     18     1  threshold-applied flag
//!     19    13  reserved, zero
//!     32     .  frames, row-major, 1 bit per pixel, LSB-first within a byte,
//!               each row padded to a whole byte
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"PCBF";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 32;

/// One binarized frame, rows packed into little-endian `u64` words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitFrame {
    width: usize,
    height: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitFrame {
    pub fn new(width: usize, height: usize) -> Self {
        let words_per_row = width.div_ceil(64);
        BitFrame {
            width,
            height,
            words_per_row,
            words: vec![0; words_per_row * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn row_words(&self, y: usize) -> &[u64] {
        &self.words[y * self.words_per_row..(y + 1) * self.words_per_row]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        (self.words[y * self.words_per_row + x / 64] >> (x % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize) {
        self.words[y * self.words_per_row + x / 64] |= 1 << (x % 64);
    }

    pub fn fill(&mut self) {
        for y in 0..self.height {
            for x in 0..self.width {
                self.set(x, y);
            }
        }
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Lit pixels in row-major order.
    pub fn lit(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |y| {
            self.row_words(y).iter().enumerate().flat_map(move |(wi, &w)| {
                BitIter(w).map(move |b| (wi * 64 + b, y))
            })
        })
    }

    pub fn row_bytes(&self) -> usize {
        self.width.div_ceil(8)
    }

    pub fn encoded_len(&self) -> usize {
        self.row_bytes() * self.height
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let rb = self.row_bytes();
        for y in 0..self.height {
            let row = self.row_words(y);
            for b in 0..rb {
                out.push((row[b / 8] >> ((b % 8) * 8)) as u8);
            }
        }
    }

    pub fn decode(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let mut f = BitFrame::new(width, height);
        let rb = f.row_bytes();
        if bytes.len() != rb * height {
            return Err(Error::domain(format!(
                "frame payload of {} bytes, expected {}",
                bytes.len(),
                rb * height
            )));
        }
        let tail_bits = width % 8;
        for y in 0..height {
            let row = &bytes[y * rb..(y + 1) * rb];
            for (b, &byte) in row.iter().enumerate() {
                let byte = if b == rb - 1 && tail_bits != 0 {
                    byte & ((1u8 << tail_bits) - 1)
                } else {
                    byte
                };
                f.words[y * f.words_per_row + b / 8] |= (byte as u64) << ((b % 8) * 8);
            }
        }
        Ok(f)
    }
}

pub(crate) struct BitIter(pub u64);

impl Iterator for BitIter {
    type Item = usize;
    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let b = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub width: u16,
    pub height: u16,
    pub frame_count: u64,
    pub thresholded: bool,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; FRAME_HEADER_LEN] {
        let mut h = [0u8; FRAME_HEADER_LEN];
        h[0..4].copy_from_slice(FRAME_MAGIC);
        h[4..6].copy_from_slice(&FRAME_VERSION.to_le_bytes());
        h[6..8].copy_from_slice(&self.width.to_le_bytes());
        h[8..10].copy_from_slice(&self.height.to_le_bytes());
        h[10..18].copy_from_slice(&self.frame_count.to_le_bytes());
        h[18] = self.thresholded as u8;
        h
    }

    pub fn decode(bytes: &[u8; FRAME_HEADER_LEN], path: &Path) -> Result<Self> {
        let fmt = |offset: u64, message: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        };
        if &bytes[0..4] != FRAME_MAGIC {
            return Err(fmt(0, format!("bad magic {:?}, expected \"PCBF\"", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FRAME_VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        if bytes[18] > 1 {
            return Err(fmt(18, format!("invalid threshold flag {}", bytes[18])));
        }
        Ok(FrameHeader {
            width: u16::from_le_bytes([bytes[6], bytes[7]]),
            height: u16::from_le_bytes([bytes[8], bytes[9]]),
            frame_count: u64::from_le_bytes(bytes[10..18].try_into().unwrap()),
            thresholded: bytes[18] == 1,
        })
    }

    pub fn frame_bytes(&self) -> usize {
        (self.width as usize).div_ceil(8) * self.height as usize
    }
}

/// Streams frames to a file; the header frame count is patched on `finish`.
pub struct FrameWriter {
    out: BufWriter<File>,
    path: PathBuf,
    header: FrameHeader,
    written: u64,
    buf: Vec<u8>,
}

impl FrameWriter {
    pub fn create(path: &Path, width: usize, height: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let header = FrameHeader {
            width: width as u16,
            height: height as u16,
            frame_count: 0,
            thresholded: true,
        };
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.encode())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(FrameWriter {
            out,
            path: path.to_path_buf(),
            header,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, frame: &BitFrame) -> Result<()> {
        if frame.width() != self.header.width as usize || frame.height() != self.header.height as usize {
            return Err(Error::Frame {
                index: self.written,
                message: format!(
                    "frame is {}x{}, file is {}x{}",
                    frame.width(),
                    frame.height(),
                    self.header.width,
                    self.header.height
                ),
            });
        }
        self.buf.clear();
        frame.encode_into(&mut self.buf);
        self.out.write_all(&self.buf).map_err(|e| Error::Frame {
            index: self.written,
            message: format!("writing {}: {e}", self.path.display()),
        })?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.header.frame_count = self.written;
        let ctx = |e| Error::io(format!("finalizing {}", self.path.display()), e);
        self.out.flush().map_err(ctx)?;
        let mut file = self.out.into_inner().map_err(|e| Error::io("flushing frame file", e.into_error()))?;
        file.seek(SeekFrom::Start(0)).map_err(|e| Error::io("seeking frame file", e))?;
        file.write_all(&self.header.encode()).map_err(|e| Error::io("patching frame header", e))?;
        file.sync_all().map_err(|e| Error::io("syncing frame file", e))?;
        Ok(self.written)
    }
}

/// Sequential reader over a frame file; never holds more than one frame.
pub struct FrameReader {
    input: BufReader<File>,
    path: PathBuf,
    header: FrameHeader,
    next_index: u64,
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let len = file
            .metadata()
            .map_err(|e| Error::io(format!("stat {}", path.display()), e))?
            .len();
        let mut input = BufReader::with_capacity(1 << 20, file);
        let mut hb = [0u8; FRAME_HEADER_LEN];
        input.read_exact(&mut hb).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("file of {len} bytes is shorter than the 32-byte header"),
        })?;
        let header = FrameHeader::decode(&hb, path)?;
        let expected = FRAME_HEADER_LEN as u64 + header.frame_count * header.frame_bytes() as u64;
        if len != expected {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: len.min(expected),
                message: format!(
                    "file length {len} does not match header ({} frames of {} bytes => {expected})",
                    header.frame_count,
                    header.frame_bytes()
                ),
            });
        }
        Ok(FrameReader {
            input,
            path: path.to_path_buf(),
            header,
            next_index: 0,
            buf: vec![0; header.frame_bytes()],
        })
    }

    pub fn header(&self) -> FrameHeader {
        self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_frame(&mut self) -> Result<Option<BitFrame>> {
        if self.next_index >= self.header.frame_count {
            return Ok(None);
        }
        let offset = FRAME_HEADER_LEN as u64 + self.next_index * self.buf.len() as u64;
        self.input.read_exact(&mut self.buf).map_err(|e| Error::Format {
            path: self.path.clone(),
            offset,
            message: format!("frame {}: {e}", self.next_index),
        })?;
        self.next_index += 1;
        BitFrame::decode(self.header.width as usize, self.header.height as usize, &self.buf).map(Some)
    }
}

impl Iterator for FrameReader {
    type Item = Result<BitFrame>;
    fn next(&mut self) -> Option<Self::Item> {
        self.read_frame().transpose()
    }
}
