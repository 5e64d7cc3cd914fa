//! Lattices of dimension one and two, nearest-point quantization with a
//! bounded codebook, and basic-cell geometry.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NumericDiagnostics, Result};
use crate::quad::GaussLegendre;

/// Fixed-size storage for points of a lattice with `L <= 2`. Unused trailing
/// coordinates are zero.
pub type Vec2 = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeFamily {
    /// One-dimensional mid-tread uniform quantizer.
    Scalar,
    /// Scaled `Z^2`.
    Square,
    /// Scaled hexagonal `A2` with basis `(1, 0)`, `(1/2, sqrt(3)/2)`.
    Hexagonal,
}

impl LatticeFamily {
    pub fn dimension(self) -> usize {
        match self {
            LatticeFamily::Scalar => 1,
            _ => 2,
        }
    }

    fn unit_generator(self) -> [[f64; 2]; 2] {
        match self {
            LatticeFamily::Scalar => [[1.0, 0.0], [0.0, 0.0]],
            LatticeFamily::Square => [[1.0, 0.0], [0.0, 1.0]],
            LatticeFamily::Hexagonal => [[1.0, 0.5], [0.0, 3f64.sqrt() / 2.0]],
        }
    }
}

impl fmt::Display for LatticeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatticeFamily::Scalar => "scalar",
            LatticeFamily::Square => "square",
            LatticeFamily::Hexagonal => "hexagonal",
        })
    }
}

impl FromStr for LatticeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scalar" | "uniform" => Ok(LatticeFamily::Scalar),
            "square" | "z2" => Ok(LatticeFamily::Square),
            "hexagonal" | "hex" | "a2" => Ok(LatticeFamily::Hexagonal),
            other => Err(Error::Config(format!("unknown lattice family `{other}`"))),
        }
    }
}

/// Serializable description of a lattice quantizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub family: LatticeFamily,
    pub gamma: f64,
    pub rate: u32,
}

impl LatticeSpec {
    pub fn dimension(&self) -> usize {
        self.family.dimension()
    }

    pub fn build(&self) -> Result<Lattice> {
        Lattice::new(self.family, self.gamma, self.rate)
    }

    /// Key-value record: `dimension`, `family`, `gamma`, `rate`.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("dimension".into(), self.dimension().to_string()),
            ("family".into(), self.family.to_string()),
            ("gamma".into(), format!("{}", self.gamma)),
            ("rate".into(), self.rate.to_string()),
        ]
    }

    pub fn from_kv<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let (mut family, mut gamma, mut rate, mut dim) = (None, None, None, None);
        for (k, v) in pairs {
            let bad = || Error::Config(format!("bad value `{v}` for `{k}`"));
            match k {
                "family" => family = Some(v.parse::<LatticeFamily>()?),
                "gamma" => gamma = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
                "rate" => rate = Some(v.trim().parse::<u32>().map_err(|_| bad())?),
                "dimension" => dim = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
                _ => return Err(Error::Config(format!("unknown lattice key `{k}`"))),
            }
        }
        let family = family.ok_or_else(|| Error::Config("missing lattice family".into()))?;
        if let Some(d) = dim {
            if d != family.dimension() {
                return Err(Error::DimensionMismatch { expected: family.dimension(), got: d });
            }
        }
        Ok(LatticeSpec {
            family,
            gamma: gamma.ok_or_else(|| Error::Config("missing gamma".into()))?,
            rate: rate.ok_or_else(|| Error::Config("missing rate".into()))?,
        })
    }
}

/// Unrestricted nearest lattice point together with its integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticePoint {
    pub coords: Vec2,
    pub l: [i64; 2],
}

/// Result of quantizing with the bounded codebook.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantized {
    pub point: Vec2,
    pub index: u32,
    pub overloaded: bool,
}

#[derive(Clone, Debug)]
pub struct Lattice {
    family: Option<LatticeFamily>,
    dim: usize,
    g: [[f64; 2]; 2],
    g_inv: [[f64; 2]; 2],
    det: f64,
    gamma: f64,
    nominal_rate: u32,
    search_radius: i64,
    codebook: Vec<Vec2>,
    codebook_l: Vec<[i64; 2]>,
    index_box: i64,
    index_of: Vec<i32>,
    cell: Vec<Vec2>,
}

impl Lattice {
    /// Builds a lattice of the given family. For the scalar family the
    /// spacing is `2*gamma/2^rate`; for two-dimensional families the generator
    /// is scaled to the smallest value for which at most `4^rate` points lie
    /// within radius `gamma`.
    pub fn new(family: LatticeFamily, gamma: f64, rate: u32) -> Result<Self> {
        check_params(gamma, rate)?;
        match family {
            LatticeFamily::Scalar => Ok(Self::scalar_uniform(gamma, rate)),
            _ => {
                let unit = family.unit_generator();
                let scale = smallest_scale(&unit, gamma, rate);
                let mut lat = Self::from_generator(2, scale_matrix(&unit, scale), gamma, rate)?;
                lat.family = Some(family);
                lat.search_radius = 1;
                Ok(lat)
            }
        }
    }

    /// Mid-tread uniform scalar quantizer with `Δ = 2γ/2^R`. Levels are the
    /// multiples of `Δ` in `[-γ, γ]`, both ends included.
    ///
    /// # Panics
    /// Panics if `gamma` is not positive or `rate` is zero or above 30.
    pub fn scalar_uniform(gamma: f64, rate: u32) -> Self {
        check_params(gamma, rate).expect("scalar_uniform: invalid parameters");
        let delta = 2.0 * gamma / 2f64.powi(rate as i32);
        let mut lat = Self::from_generator(1, [[delta, 0.0], [0.0, 0.0]], gamma, rate)
            .expect("positive spacing is never singular");
        lat.family = Some(LatticeFamily::Scalar);
        lat
    }

    /// Lattice with an explicit generator (columns are basis vectors). Only
    /// the leading `dim x dim` block is used.
    pub fn from_generator(dim: usize, g: [[f64; 2]; 2], gamma: f64, rate: u32) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::Config(format!("lattice dimension must be 1 or 2, got {dim}")));
        }
        check_params(gamma, rate)?;
        let (det, g_inv) = if dim == 1 {
            (g[0][0], [[1.0 / g[0][0], 0.0], [0.0, 0.0]])
        } else {
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
            (det, inv)
        };
        let norm: f64 = g.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if !det.is_finite() || det.abs() <= 1e-12 * norm.powi(dim as i32) || norm == 0.0 {
            return Err(Error::SingularGenerator);
        }
        let mut lat = Lattice {
            family: None,
            dim,
            g,
            g_inv,
            det,
            gamma,
            nominal_rate: rate,
            search_radius: 2,
            codebook: Vec::new(),
            codebook_l: Vec::new(),
            index_box: 0,
            index_of: Vec::new(),
            cell: Vec::new(),
        };
        lat.enumerate_codebook();
        if dim == 2 {
            lat.cell = voronoi_cell(&g);
        }
        Ok(lat)
    }

    fn enumerate_codebook(&mut self) {
        let bound = l_inf_bound(&self.g, self.dim, self.gamma);
        let r2 = self.gamma * self.gamma;
        let tol = r2 * 1e-12;
        let mut pts = Vec::new();
        if self.dim == 1 {
            for l in -bound..=bound {
                let p = self.g[0][0] * l as f64;
                if p * p <= r2 + tol {
                    pts.push([l, 0]);
                }
            }
        } else {
            for l0 in -bound..=bound {
                for l1 in -bound..=bound {
                    let p = self.map([l0, l1]);
                    if p[0] * p[0] + p[1] * p[1] <= r2 + tol {
                        pts.push([l0, l1]);
                    }
                }
            }
        }
        let b = pts.iter().flat_map(|l| l.iter().map(|v| v.abs())).max().unwrap_or(0);
        let side = (2 * b + 1) as usize;
        let mut index_of = vec![-1i32; if self.dim == 1 { side } else { side * side }];
        for (i, l) in pts.iter().enumerate() {
            let slot = box_slot(self.dim, b, *l).expect("inside box by construction");
            index_of[slot] = i as i32;
        }
        self.codebook = pts.iter().map(|l| self.map(*l)).collect();
        self.codebook_l = pts;
        self.index_box = b;
        self.index_of = index_of;
    }

    #[inline]
    fn map(&self, l: [i64; 2]) -> Vec2 {
        if self.dim == 1 {
            [self.g[0][0] * l[0] as f64, 0.0]
        } else {
            let (a, b) = (l[0] as f64, l[1] as f64);
            [self.g[0][0] * a + self.g[0][1] * b, self.g[1][0] * a + self.g[1][1] * b]
        }
    }

    pub fn family(&self) -> Option<LatticeFamily> {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn generator(&self) -> [[f64; 2]; 2] {
        self.g
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Rate requested at construction.
    pub fn nominal_rate(&self) -> u32 {
        self.nominal_rate
    }

    /// Achieved rate `log2(|codebook|)/L`.
    pub fn rate(&self) -> f64 {
        (self.codebook.len() as f64).log2() / self.dim as f64
    }

    /// Scalar spacing `Δ` (L=1) or generator scale (L=2 families).
    pub fn spacing(&self) -> f64 {
        self.g[0][0]
    }

    pub fn codebook(&self) -> &[Vec2] {
        &self.codebook
    }

    pub fn codebook_coordinates(&self) -> &[[i64; 2]] {
        &self.codebook_l
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook.len()
    }

    /// Bits needed for one fixed-width codebook index.
    pub fn index_bits(&self) -> u32 {
        let n = self.codebook.len().max(1) as u64;
        64 - (n - 1).leading_zeros()
    }

    pub fn point(&self, index: u32) -> Option<Vec2> {
        self.codebook.get(index as usize).copied()
    }

    /// Codebook index of the lattice point with integer coordinates `l`.
    pub fn index_of(&self, l: [i64; 2]) -> Option<u32> {
        let slot = box_slot(self.dim, self.index_box, l)?;
        let v = self.index_of[slot];
        (v >= 0).then_some(v as u32)
    }

    /// `|det G|`.
    pub fn cell_volume(&self) -> f64 {
        self.det.abs()
    }

    /// Vertices (counter-clockwise) of the basic Voronoi cell; empty for L=1.
    pub fn cell_polygon(&self) -> &[Vec2] {
        &self.cell
    }

    /// Per-coordinate variance of a uniform point in the basic cell.
    pub fn cell_variance_per_coordinate(&self) -> f64 {
        if self.dim == 1 {
            let d = self.g[0][0];
            return d * d / 12.0;
        }
        // ∫ (x²+y²) over the polygon via the shoelace-type formula.
        let p = &self.cell;
        let mut ixx = 0.0;
        let mut iyy = 0.0;
        for k in 0..p.len() {
            let a = p[k];
            let b = p[(k + 1) % p.len()];
            let cr = a[0] * b[1] - b[0] * a[1];
            ixx += cr * (a[0] * a[0] + a[0] * b[0] + b[0] * b[0]);
            iyy += cr * (a[1] * a[1] + a[1] * b[1] + b[1] * b[1]);
        }
        (ixx + iyy) / 12.0 / self.cell_volume() / 2.0
    }

    /// Nearest point of the unrestricted lattice. Ties go to the half-up
    /// rounding rule for L=1 and to the lexicographically smallest integer
    /// vector for L=2.
    pub fn nearest_point(&self, x: &[f64]) -> LatticePoint {
        debug_assert!(x.len() >= self.dim);
        if self.dim == 1 {
            let l = (x[0] / self.g[0][0] + 0.5).floor() as i64;
            return LatticePoint { coords: self.map([l, 0]), l: [l, 0] };
        }
        let b0 = self.g_inv[0][0] * x[0] + self.g_inv[0][1] * x[1];
        let b1 = self.g_inv[1][0] * x[0] + self.g_inv[1][1] * x[1];
        let c = [b0.round() as i64, b1.round() as i64];
        let r = self.search_radius;
        let mut best = LatticePoint { coords: [f64::NAN; 2], l: [i64::MAX; 2] };
        let mut best_d = f64::INFINITY;
        for d0 in -r..=r {
            for d1 in -r..=r {
                let l = [c[0] + d0, c[1] + d1];
                let p = self.map(l);
                let (e0, e1) = (x[0] - p[0], x[1] - p[1]);
                let dist = e0 * e0 + e1 * e1;
                if dist < best_d || (dist == best_d && l < best.l) {
                    best_d = dist;
                    best = LatticePoint { coords: p, l };
                }
            }
        }
        best
    }

    /// Nearest codebook point. When the unrestricted nearest point lies
    /// outside the codebook the input is overloaded and the closest codebook
    /// point is returned instead.
    pub fn quantize_clipped(&self, x: &[f64]) -> Result<Quantized> {
        if self.codebook.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        let np = self.nearest_point(x);
        if let Some(index) = self.index_of(np.l) {
            return Ok(Quantized { point: np.coords, index, overloaded: false });
        }
        if self.dim == 1 {
            let lo = self.codebook_l[0][0];
            let hi = self.codebook_l[self.codebook_l.len() - 1][0];
            let l = np.l[0].clamp(lo, hi);
            let index = self.index_of([l, 0]).expect("clamped level is in the codebook");
            return Ok(Quantized { point: self.codebook[index as usize], index, overloaded: true });
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.codebook.iter().enumerate() {
            let (e0, e1) = (x[0] - p[0], x[1] - p[1]);
            let d = e0 * e0 + e1 * e1;
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(Quantized { point: self.codebook[best], index: best as u32, overloaded: true })
    }

    /// True when `e` quantizes to the origin.
    pub fn in_basic_cell(&self, e: &[f64]) -> bool {
        self.nearest_point(e).l == [0, 0]
    }

    /// Uniform draw from the basic cell: a uniform point of the fundamental
    /// parallelepiped minus its nearest lattice point.
    pub fn sample_cell_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let u0: f64 = rng.random();
        if self.dim == 1 {
            let u = self.g[0][0] * u0;
            let p = self.nearest_point(&[u, 0.0]);
            return [u - p.coords[0], 0.0];
        }
        let u1: f64 = rng.random();
        let u = self.map_real([u0, u1]);
        let p = self.nearest_point(&u);
        [u[0] - p.coords[0], u[1] - p.coords[1]]
    }

    #[inline]
    fn map_real(&self, a: [f64; 2]) -> Vec2 {
        [self.g[0][0] * a[0] + self.g[0][1] * a[1], self.g[1][0] * a[0] + self.g[1][1] * a[1]]
    }

    /// Characteristic function of the uniform distribution on the basic cell,
    /// by deterministic Gauss-Legendre quadrature for L=2.
    pub fn cell_cf(&self, t: &[f64]) -> Result<f64> {
        if self.dim == 1 {
            return Ok(sinc(0.5 * t[0] * self.g[0][0]));
        }
        let t = [t[0], t[1]];
        let mut n = 8;
        let mut prev = self.cell_cf_quadrature(t, n);
        let mut change = f64::INFINITY;
        while n < 1024 {
            n *= 2;
            let cur = self.cell_cf_quadrature(t, n);
            change = (cur - prev).abs();
            prev = cur;
            if change <= 1e-13 {
                return Ok(cur);
            }
        }
        Err(Error::Numeric(NumericDiagnostics {
            routine: "cell_cf quadrature",
            last_estimate: prev,
            last_change: change,
            evaluations: n * n * self.cell.len(),
        }))
    }

    fn cell_cf_quadrature(&self, t: Vec2, n: usize) -> f64 {
        let q = GaussLegendre::new(n);
        let p = &self.cell;
        let mut acc = 0.0;
        for k in 0..p.len() {
            let a = p[k];
            let b = p[(k + 1) % p.len()];
            let jac = (a[0] * b[1] - a[1] * b[0]).abs();
            let ta = t[0] * a[0] + t[1] * a[1];
            let tb = t[0] * b[0] + t[1] * b[1];
            // Duffy map of the unit square onto triangle (0, a, b).
            for (xi, wx) in q.nodes.iter().zip(&q.weights) {
                let mut inner = 0.0;
                for (eta, wy) in q.nodes.iter().zip(&q.weights) {
                    inner += wy * (xi * ((1.0 - eta) * ta + eta * tb)).cos();
                }
                acc += wx * xi * inner * jac;
            }
        }
        acc / self.cell_volume()
    }

    /// Closed-form cell characteristic function (sinc for L=1, edge sum from
    /// the divergence theorem for L=2).
    pub fn cell_cf_closed(&self, t: &[f64]) -> f64 {
        if self.dim == 1 {
            return sinc(0.5 * t[0] * self.g[0][0]);
        }
        polygon_cf(&self.cell, [t[0], t[1]]) / self.cell_volume()
    }
}

fn check_params(gamma: f64, rate: u32) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!("support radius must be positive, got {gamma}")));
    }
    if rate == 0 || rate > 30 {
        return Err(Error::Config(format!("rate must be in 1..=30, got {rate}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

pub(crate) fn polygon_area(p: &[Vec2]) -> f64 {
    let mut area = 0.0;
    for k in 0..p.len() {
        let (a, b) = (p[k], p[(k + 1) % p.len()]);
        area += 0.5 * (a[0] * b[1] - b[0] * a[1]);
    }
    area
}

/// `Re ∫_P exp(i t·x) dx` for a centrally symmetric polygon `P`.
pub(crate) fn polygon_cf(p: &[Vec2], t: Vec2) -> f64 {
    let tt = t[0] * t[0] + t[1] * t[1];
    let mut area = 0.0;
    for k in 0..p.len() {
        let a = p[k];
        let b = p[(k + 1) % p.len()];
        area += 0.5 * (a[0] * b[1] - b[0] * a[1]);
    }
    if tt < 1e-16 {
        return area;
    }
    let mut acc = 0.0;
    for k in 0..p.len() {
        let a = p[k];
        let b = p[(k + 1) % p.len()];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let tm = t[0] * m[0] + t[1] * m[1];
        let te = 0.5 * (t[0] * dx + t[1] * dy);
        acc += (t[0] * dy - t[1] * dx) * tm.sin() * sinc(te);
    }
    acc / tt
}

fn scale_matrix(g: &[[f64; 2]; 2], s: f64) -> [[f64; 2]; 2] {
    [[g[0][0] * s, g[0][1] * s], [g[1][0] * s, g[1][1] * s]]
}

fn smallest_singular(g: &[[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return g[0][0].abs();
    }
    let (a, b, c, d) = (g[0][0], g[0][1], g[1][0], g[1][1]);
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s1 - disc)).max(0.0).sqrt()
}

fn l_inf_bound(g: &[[f64; 2]; 2], dim: usize, gamma: f64) -> i64 {
    (gamma / smallest_singular(g, dim)).ceil() as i64 + 1
}

fn count_within(unit: &[[f64; 2]; 2], scale: f64, gamma: f64) -> usize {
    let g = scale_matrix(unit, scale);
    let bound = l_inf_bound(&g, 2, gamma);
    let r2 = gamma * gamma;
    let tol = r2 * 1e-12;
    let mut n = 0;
    for l0 in -bound..=bound {
        for l1 in -bound..=bound {
            let (a, b) = (l0 as f64, l1 as f64);
            let p0 = g[0][0] * a + g[0][1] * b;
            let p1 = g[1][0] * a + g[1][1] * b;
            if p0 * p0 + p1 * p1 <= r2 + tol {
                n += 1;
            }
        }
    }
    n
}

/// Smallest generator scale keeping at most `4^rate` points within `gamma`.
fn smallest_scale(unit: &[[f64; 2]; 2], gamma: f64, rate: u32) -> f64 {
    let target = 1usize << (2 * rate);
    let det = (unit[0][0] * unit[1][1] - unit[0][1] * unit[1][0]).abs();
    let guess = gamma * (std::f64::consts::PI / (target as f64 * det)).sqrt();
    let mut lo = guess * 0.25;
    let mut hi = guess * 4.0;
    while count_within(unit, lo, gamma) <= target {
        lo *= 0.5;
    }
    while count_within(unit, hi, gamma) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_within(unit, mid, gamma) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-13 * hi {
            break;
        }
    }
    hi
}

fn box_slot(dim: usize, b: i64, l: [i64; 2]) -> Option<usize> {
    let side = 2 * b + 1;
    let i0 = l[0] + b;
    if !(0..side).contains(&i0) {
        return None;
    }
    if dim == 1 {
        return (l[1] == 0).then_some(i0 as usize);
    }
    let i1 = l[1] + b;
    if !(0..side).contains(&i1) {
        return None;
    }
    Some((i0 * side + i1) as usize)
}

/// Voronoi cell of the origin by half-plane clipping of a bounding square.
fn voronoi_cell(g: &[[f64; 2]; 2]) -> Vec<Vec2> {
    let c: f64 = g.iter().flatten().map(|v| v.abs()).sum();
    let mut poly: Vec<Vec2> = vec![[-c, -c], [c, -c], [c, c], [-c, c]];
    for l0 in -2i64..=2 {
        for l1 in -2i64..=2 {
            if l0 == 0 && l1 == 0 {
                continue;
            }
            let (a, b) = (l0 as f64, l1 as f64);
            let v = [g[0][0] * a + g[0][1] * b, g[1][0] * a + g[1][1] * b];
            let h = 0.5 * (v[0] * v[0] + v[1] * v[1]);
            poly = clip(&poly, v, h);
        }
    }
    let scale = c.max(1e-300);
    let mut out: Vec<Vec2> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q: &Vec2| (q[0] - p[0]).hypot(q[1] - p[1]) > 1e-12 * scale) {
            out.push(p);
        }
    }
    while out.len() > 1 {
        let (f, l) = (out[0], out[out.len() - 1]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) > 1e-12 * scale {
            break;
        }
        out.pop();
    }
    out
}

// Keep {x : v·x <= h}.
pub(crate) fn clip(poly: &[Vec2], v: Vec2, h: f64) -> Vec<Vec2> {
    let f = |p: &Vec2| v[0] * p[0] + v[1] * p[1] - h;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (fa, fb) = (f(&a), f(&b));
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let s = fa / (fa - fb);
            out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }
    out
}
