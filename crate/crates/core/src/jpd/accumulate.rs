use rayon::prelude::*;

use super::{half_window_len, AccumulateOptions, CoincidenceStats};
use crate::error::{Error, Result};
use crate::frame::BitFrame;

/// Pair-counting method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Bit-sliced blocks when frames are dense, lit-pixel lists otherwise.
    Auto,
    /// Per frame, each lit pixel visits the lit pixels of its half-window.
    Sparse,
    /// Frames are transposed into per-pixel bit planes of `BLOCK_FRAMES`
    /// frames; a pair count is the popcount of the AND of two planes.
    BitSliced,
}

pub const BLOCK_FRAMES: usize = 512;
const WORDS: usize = BLOCK_FRAMES / 64;
// Below this mean lit fraction per pixel, list traversal beats plane ANDs.
const DENSE_FRACTION: f64 = 0.02;

/// Streaming accumulator; frames are pushed one at a time.
pub struct Accumulator {
    stats: CoincidenceStats,
    strategy: Strategy,
    block: Vec<BitFrame>,
    planes: Vec<u64>,
    pushed: u64,
}

impl Accumulator {
    pub fn new(width: usize, height: usize, opts: &AccumulateOptions) -> Result<Self> {
        Ok(Accumulator {
            stats: CoincidenceStats::new(width, height, opts)?,
            strategy: opts.strategy,
            block: Vec::new(),
            planes: Vec::new(),
            pushed: 0,
        })
    }

    pub fn frames_seen(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, frame: &BitFrame) -> Result<()> {
        if (frame.width(), frame.height()) != (self.stats.width, self.stats.height) {
            return Err(Error::Frame {
                index: self.pushed,
                message: format!(
                    "frame is {}x{}, statistics expect {}x{}",
                    frame.width(),
                    frame.height(),
                    self.stats.width,
                    self.stats.height
                ),
            });
        }
        self.pushed += 1;
        if self.strategy == Strategy::Sparse {
            sparse_frame(&mut self.stats, frame);
        } else {
            self.block.push(frame.clone());
            if self.block.len() == BLOCK_FRAMES {
                self.flush();
            }
        }
        Ok(())
    }

    fn flush(&mut self) {
        if self.block.is_empty() {
            return;
        }
        let block = std::mem::take(&mut self.block);
        let dense = match self.strategy {
            Strategy::BitSliced => true,
            Strategy::Sparse => false,
            Strategy::Auto => {
                let lit: usize = block.iter().map(|f| f.count_ones()).sum();
                lit as f64 >= DENSE_FRACTION * (block.len() * self.stats.singles.len()) as f64
            }
        };
        if dense {
            bit_sliced_block(&mut self.stats, &block, &mut self.planes);
        } else {
            for f in &block {
                sparse_frame(&mut self.stats, f);
            }
        }
        self.block = block;
        self.block.clear();
    }

    /// Statistics of every frame pushed so far.
    pub fn snapshot(&mut self) -> &CoincidenceStats {
        self.flush();
        &self.stats
    }

    pub fn finish(mut self) -> CoincidenceStats {
        self.flush();
        self.stats
    }
}

/// Accumulates a frame sequence in one pass.
pub fn accumulate<I>(frames: I, width: usize, height: usize, opts: &AccumulateOptions) -> Result<CoincidenceStats>
where
    I: IntoIterator<Item = Result<BitFrame>>,
{
    let mut acc = Accumulator::new(width, height, opts)?;
    for f in frames {
        acc.push(&f?)?;
    }
    if acc.frames_seen() == 0 {
        return Err(Error::domain("no frames to accumulate"));
    }
    Ok(acc.finish())
}

/// Set bits of row `y` in columns `lo..=hi`.
fn row_bits(frame: &BitFrame, y: usize, lo: usize, hi: usize) -> impl Iterator<Item = usize> + '_ {
    let words = frame.row_words(y);
    let (w0, w1) = (lo / 64, hi / 64);
    (w0..=w1).flat_map(move |wi| {
        let mut word = words[wi];
        if wi == w0 {
            word &= !0u64 << (lo % 64);
        }
        if wi == w1 && hi % 64 != 63 {
            word &= (1u64 << (hi % 64 + 1)) - 1;
        }
        std::iter::from_fn(move || {
            if word == 0 {
                return None;
            }
            let b = word.trailing_zeros() as usize;
            word &= word - 1;
            Some(wi * 64 + b)
        })
    })
}

fn sparse_frame(stats: &mut CoincidenceStats, frame: &BitFrame) {
    let (w, h, win) = (stats.width, stats.height, stats.window);
    let hl = half_window_len(win);
    stats.n_frames += 1;
    let lit: Vec<(usize, usize)> = frame.lit().collect();
    for &(x, y) in &lit {
        let i = y * w + x;
        stats.singles[i] += 1;
        let base = i * hl;
        if x + 1 < w {
            for xj in row_bits(frame, y, x + 1, (x + win).min(w - 1)) {
                stats.pairs[base + xj - x - 1] += 1;
            }
        }
        let (lo, hi) = (x.saturating_sub(win), (x + win).min(w - 1));
        for dy in 1..=win.min(h - 1 - y) {
            let row_base = base + win + (dy - 1) * (2 * win + 1) + win - x;
            for xj in row_bits(frame, y + dy, lo, hi) {
                stats.pairs[row_base + xj] += 1;
            }
        }
        if let Some(a) = &mut stats.anticorr {
            let (rx, ry) = (a.center2.0 - x as i64, a.center2.1 - y as i64);
            for d in 0..3 {
                let qy = ry + d as i64 - 1;
                if rx >= 0 && qy >= 0 && (rx as usize) < w && (qy as usize) < h && frame.get(rx as usize, qy as usize) {
                    a.counts[i * 3 + d] += 1;
                }
            }
        }
    }
    if let Some(p) = &mut stats.postselect {
        if frame.get(p.pixel.x, p.pixel.y) {
            for &(x, y) in &lit {
                p.counts[y * w + x] += 1;
            }
        }
    }
}

#[inline(always)]
fn and_popcount_run(a: &[u64], run: &[u64], out: &mut [u64]) {
    for (o, b) in out.iter_mut().zip(run.chunks_exact(WORDS)) {
        let mut s = 0u32;
        for k in 0..WORDS {
            s += (a[k] & b[k]).count_ones();
        }
        *o += s as u64;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt,avx2")]
unsafe fn and_popcount_run_avx2(a: &[u64], run: &[u64], out: &mut [u64]) {
    and_popcount_run(a, run, out)
}

#[derive(Clone, Copy)]
struct Kernel {
    #[cfg(target_arch = "x86_64")]
    avx2: bool,
}

impl Kernel {
    fn detect() -> Self {
        Kernel {
            #[cfg(target_arch = "x86_64")]
            avx2: is_x86_feature_detected!("avx2") && is_x86_feature_detected!("popcnt"),
        }
    }

    #[inline]
    fn run(self, a: &[u64], run: &[u64], out: &mut [u64]) {
        #[cfg(target_arch = "x86_64")]
        if self.avx2 {
            // SAFETY: the CPU supports the enabled features (checked in detect).
            return unsafe { and_popcount_run_avx2(a, run, out) };
        }
        and_popcount_run(a, run, out)
    }
}

fn bit_sliced_block(stats: &mut CoincidenceStats, block: &[BitFrame], planes: &mut Vec<u64>) {
    let (w, h, win) = (stats.width, stats.height, stats.window);
    let hl = half_window_len(win);
    let wp = w + 2 * win;
    let hp = h + win;
    planes.clear();
    planes.resize(wp * hp * WORDS, 0);
    let plane_index = |x: usize, y: usize| (y * wp + x + win) * WORDS;
    for (f, frame) in block.iter().enumerate() {
        let (word, bit) = (f / 64, 1u64 << (f % 64));
        for (x, y) in frame.lit() {
            planes[plane_index(x, y) + word] |= bit;
        }
    }
    stats.n_frames += block.len() as u64;
    let planes: &[u64] = planes;
    let popcount = |p: usize| -> u64 { planes[p..p + WORDS].iter().map(|v| v.count_ones() as u64).sum() };
    for y in 0..h {
        for x in 0..w {
            stats.singles[y * w + x] += popcount(plane_index(x, y));
        }
    }
    let kernel = Kernel::detect();
    stats
        .pairs
        .par_chunks_mut(w * hl)
        .enumerate()
        .for_each(|(y, row_pairs)| {
            for x in 0..w {
                let pa = plane_index(x, y);
                let a = &planes[pa..pa + WORDS];
                if a.iter().all(|&v| v == 0) {
                    continue;
                }
                let out = &mut row_pairs[x * hl..(x + 1) * hl];
                let same = pa + WORDS;
                kernel.run(a, &planes[same..same + win * WORDS], &mut out[..win]);
                for dy in 1..=win {
                    let start = ((y + dy) * wp + x) * WORDS;
                    let len = (2 * win + 1) * WORDS;
                    let s0 = win + (dy - 1) * (2 * win + 1);
                    kernel.run(a, &planes[start..start + len], &mut out[s0..s0 + 2 * win + 1]);
                }
            }
        });
    let and_count = |pa: usize, pb: usize| -> u64 {
        (0..WORDS).map(|k| (planes[pa + k] & planes[pb + k]).count_ones() as u64).sum()
    };
    if let Some(a) = &mut stats.anticorr {
        for y in 0..h {
            for x in 0..w {
                let (rx, ry) = (a.center2.0 - x as i64, a.center2.1 - y as i64);
                for d in 0..3 {
                    let qy = ry + d as i64 - 1;
                    if rx >= 0 && qy >= 0 && (rx as usize) < w && (qy as usize) < h {
                        a.counts[(y * w + x) * 3 + d] += and_count(plane_index(x, y), plane_index(rx as usize, qy as usize));
                    }
                }
            }
        }
    }
    if let Some(p) = &mut stats.postselect {
        let ps = plane_index(p.pixel.x, p.pixel.y);
        for y in 0..h {
            for x in 0..w {
                p.counts[y * w + x] += and_count(ps, plane_index(x, y));
            }
        }
    }
}
