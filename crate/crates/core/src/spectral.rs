//! FFT helpers on periodic `N^d` arrays (per-axis passes over rustfft).

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Signed frequency of index `j` on `n` points, in `-n/2..n/2-1` for even `n`.
pub fn freq(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Transform along one axis of a flat array: `len` points spaced `stride`
/// apart, repeated over all other positions.
fn axis_pass(buf: &mut [Complex64], len: usize, stride: usize, fft: &Arc<dyn Fft<f64>>) {
    let block = len * stride;
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for chunk in buf.chunks_mut(block) {
        for inner in 0..stride {
            for j in 0..len {
                line[j] = chunk[inner + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for j in 0..len {
                chunk[inner + j * stride] = line[j];
            }
        }
    }
}

#[derive(Clone)]
pub struct SpatialFft {
    pub d: usize,
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl SpatialFft {
    pub fn new(d: usize, n: usize) -> Self {
        let mut p = FftPlanner::new();
        SpatialFft { d, n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    pub fn for_grid(g: &Grid) -> Self {
        Self::new(g.d, g.n)
    }

    fn cells(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        for a in 0..self.d {
            axis_pass(buf, self.n, self.n.pow((self.d - 1 - a) as u32), &self.fwd);
        }
    }

    /// Normalized inverse.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        for a in 0..self.d {
            axis_pass(buf, self.n, self.n.pow((self.d - 1 - a) as u32), &self.inv);
        }
        let s = 1.0 / self.cells() as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Integer frequency vector of a flat spectral index.
    pub fn mode(&self, mut idx: usize) -> Vec<i64> {
        let mut out = vec![0; self.d];
        for j in (0..self.d).rev() {
            out[j] = freq(idx % self.n, self.n);
            idx /= self.n;
        }
        out
    }

    /// `|k|²` per spectral index for period `l`.
    pub fn k_squared(&self, l: f64) -> Vec<f64> {
        let w = std::f64::consts::TAU / l;
        (0..self.cells()).map(|i| self.mode(i).iter().map(|&m| (w * m as f64).powi(2)).sum()).collect()
    }

    /// Mask of modes kept by the 2/3 rule: `|m_j| < n/3` on every axis.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let cut = self.n as f64 / 3.0;
        (0..self.cells()).map(|i| self.mode(i).iter().all(|&m| (m.unsigned_abs() as f64) < cut)).collect()
    }
}

/// Space-time transform of a whole field, treating time as periodic over
/// `M+1` slices.
pub struct SpaceTimeFft {
    space: SpatialFft,
    fwd_t: Arc<dyn Fft<f64>>,
    inv_t: Arc<dyn Fft<f64>>,
    slices: usize,
}

impl SpaceTimeFft {
    pub fn new(g: &Grid) -> Self {
        let mut p = FftPlanner::new();
        SpaceTimeFft {
            space: SpatialFft::for_grid(g),
            fwd_t: p.plan_fft_forward(g.m + 1),
            inv_t: p.plan_fft_inverse(g.m + 1),
            slices: g.m + 1,
        }
    }

    pub fn spatial(&self) -> &SpatialFft {
        &self.space
    }

    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let cells = x.len() / self.slices;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.par_chunks_mut(cells).for_each(|s| self.space.forward_in_place(s));
        time_pass(&mut buf, self.slices, cells, &self.fwd_t);
        buf
    }

    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        let cells = buf.len() / self.slices;
        time_pass(&mut buf, self.slices, cells, &self.inv_t);
        let s = 1.0 / self.slices as f64;
        buf.par_chunks_mut(cells).for_each(|sl| {
            self.space.inverse_in_place(sl);
            sl.iter_mut().for_each(|c| *c *= s);
        });
        buf.into_iter().map(|c| c.re).collect()
    }
}

fn time_pass(buf: &mut [Complex64], slices: usize, cells: usize, fft: &Arc<dyn Fft<f64>>) {
    const CHUNK: usize = 64;
    let lines: Vec<(usize, Vec<Complex64>)> = (0..cells)
        .into_par_iter()
        .step_by(CHUNK)
        .flat_map_iter(|start| {
            let end = (start + CHUNK).min(cells);
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            let buf = &*buf;
            (start..end)
                .map(|c| {
                    let mut line: Vec<Complex64> = (0..slices).map(|i| buf[i * cells + c]).collect();
                    fft.process_with_scratch(&mut line, &mut scratch);
                    (c, line)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for (c, line) in lines {
        for (i, v) in line.into_iter().enumerate() {
            buf[i * cells + c] = v;
        }
    }
}
