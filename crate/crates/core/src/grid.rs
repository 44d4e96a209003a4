//! Periodic parabolic grids, sampled fields and the RSF1 binary format.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub l: f64,
    pub t: f64,
    pub m: usize,
}

impl Grid {
    pub fn new(d: usize, n: usize, l: f64, t: f64, m: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Invalid(format!("dimension {d} not in 1..=3")));
        }
        if n < 2 || m < 1 || !(l > 0.0) || !(t > 0.0) || !l.is_finite() || !t.is_finite() {
            return Err(Error::Invalid(format!("bad grid N={n} M={m} L={l} T={t}")));
        }
        Ok(Grid { d, n, l, t, m })
    }

    /// Grid with `dt` as close to `ratio·dx²` as an integer step count allows.
    pub fn parabolic(d: usize, n: usize, l: f64, t: f64, ratio: f64) -> Result<Self> {
        let dx = l / n as f64;
        let m = (t / (ratio * dx * dx)).ceil().max(1.0) as usize;
        Grid::new(d, n, l, t, m)
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn dt(&self) -> f64 {
        self.t / self.m as f64
    }

    /// Points per time slice.
    pub fn cells(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        (self.m + 1) * self.cells()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.dx().powi(self.d as i32)
    }

    /// `dt` within a factor 4 of `dx²`.
    pub fn parabolic_consistent(&self) -> bool {
        let r = self.dt() / (self.dx() * self.dx());
        (0.25..=4.0).contains(&r)
    }

    pub fn spatial_index(&self, x: &[usize]) -> usize {
        x.iter().fold(0, |acc, &v| acc * self.n + v)
    }

    pub fn spatial_coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        for j in (0..self.d).rev() {
            out[j] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn same_shape(&self, o: &Grid) -> bool {
        self.d == o.d && self.n == o.n && self.m == o.m && self.l == o.l && self.t == o.t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub seed_lineage: Vec<(u64, u64)>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![0.0; grid.len()], seed_lineage: Vec::new() }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field { grid, values: vec![c; grid.len()], seed_lineage: Vec::new() }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        Ok(Field { grid, values, seed_lineage: Vec::new() })
    }

    /// Samples `f(t, x)` at the nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let cells = grid.cells();
        let (dt, dx) = (grid.dt(), grid.dx());
        let mut values = Vec::with_capacity(grid.len());
        let mut x = vec![0.0; grid.d];
        for i in 0..=grid.m {
            for c in 0..cells {
                for (j, v) in grid.spatial_coords(c).into_iter().enumerate() {
                    x[j] = v as f64 * dx;
                }
                values.push(f(i as f64 * dt, &x));
            }
        }
        Field { grid, values, seed_lineage: Vec::new() }
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let c = self.grid.cells();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.grid.cells();
        &mut self.values[i * c..(i + 1) * c]
    }

    /// Time slice nearest to `t`.
    pub fn index_of_time(&self, t: f64) -> usize {
        ((t / self.grid.dt()).round().max(0.0) as usize).min(self.grid.m)
    }

    pub fn check_grid(&self, o: &Field) -> Result<()> {
        if self.grid.same_shape(&o.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, o.grid)))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), seed_lineage: self.seed_lineage.clone() }
    }

    /// `a·self + b·o`.
    pub fn axpby(&self, a: f64, o: &Field, b: f64) -> Result<Field> {
        self.check_grid(o)?;
        let values = self.values.iter().zip(&o.values).map(|(x, y)| a * x + b * y).collect();
        let mut lineage = self.seed_lineage.clone();
        lineage.extend(o.seed_lineage.iter().copied());
        Ok(Field { grid: self.grid, values, seed_lineage: lineage })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Grid L² norm of one time slice.
    pub fn slice_l2(&self, i: usize) -> f64 {
        let vol = self.grid.dx().powi(self.grid.d as i32);
        (self.slice(i).iter().map(|v| v * v).sum::<f64>() * vol).sqrt()
    }

    pub fn slice_sup(&self, i: usize) -> f64 {
        self.slice(i).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn write_rsf1<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        let mut buf = Vec::with_capacity(32 + 8 * self.values.len());
        buf.extend_from_slice(b"RSF1");
        buf.extend_from_slice(&(g.d as u32).to_le_bytes());
        buf.extend_from_slice(&(g.n as u32).to_le_bytes());
        buf.extend_from_slice(&(g.m as u32).to_le_bytes());
        buf.extend_from_slice(&g.l.to_le_bytes());
        buf.extend_from_slice(&g.t.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_rsf1<R: Read>(mut r: R) -> Result<Field> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 32 || &bytes[..4] != b"RSF1" {
            return Err(Error::Format("missing RSF1 header".into()));
        }
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let grid = Grid::new(u(4), u(8), f(16), f(24), u(12)).map_err(|e| Error::Format(e.to_string()))?;
        let body = &bytes[32..];
        if body.len() != 8 * grid.len() {
            return Err(Error::Format(format!("expected {} values, found {} bytes", grid.len(), body.len())));
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Field { grid, values, seed_lineage: Vec::new() })
    }
}
