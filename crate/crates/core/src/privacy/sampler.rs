//! Tabulated PPN samplers obtained by deconvolving the basic-cell error from
//! the target mechanism.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::Grid;
use super::MechanismSpec;
use crate::error::{Error, Result};
use crate::lattice::{clip, polygon_area, Lattice, Vec2};
use crate::quad::GaussLegendre;

/// What to do when the deconvolved noise cannot reproduce the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admission {
    /// Error unless the realized law is within `max_residual` of the target.
    Strict,
    /// Like `Strict`, but a target no larger than the cell error yields a
    /// zero-noise sampler instead of an error.
    AllowDegenerate,
    /// Never reject; the validity report carries the achieved residual.
    BestEffort,
}

impl std::fmt::Display for Admission {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Admission::Strict => "strict",
            Admission::AllowDegenerate => "allow-degenerate",
            Admission::BestEffort => "best-effort",
        })
    }
}

impl std::str::FromStr for Admission {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(Admission::Strict),
            "allow-degenerate" | "degenerate" => Ok(Admission::AllowDegenerate),
            "best-effort" => Ok(Admission::BestEffort),
            other => Err(Error::Config(format!("unknown admission mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Points per axis; defaults to `2^14` for L=1 and `2^9` for L=2.
    pub grid_points: Option<usize>,
    /// Grid half-width in target standard deviations (lower bound).
    pub support_sigmas: f64,
    /// Two-sided per-coordinate target mass allowed outside the grid.
    pub tail_mass: f64,
    /// Cell-CF magnitude below which a frequency node is interpolated.
    pub zero_threshold: f64,
    /// Clipped negative mass above which the raw inversion is not used as a
    /// starting point for refinement.
    pub max_clipped_mass: f64,
    /// Multiplicative refinement iterations; defaults to 1000 (L=1) / 80 (L=2).
    pub refine_iterations: Option<usize>,
    /// Largest accepted sup-distance between realized and target marginal CDFs.
    pub max_residual: f64,
    pub admission: Admission,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            grid_points: None,
            support_sigmas: 8.0,
            tail_mass: 1e-5,
            zero_threshold: 1e-6,
            max_clipped_mass: 1e-3,
            refine_iterations: None,
            max_residual: 2e-3,
            admission: Admission::Strict,
        }
    }
}

impl SamplerOptions {
    pub fn with_admission(admission: Admission) -> Self {
        SamplerOptions { admission, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub method: String,
    pub grid_points: usize,
    pub half_width: f64,
    pub bin_width: f64,
    pub zero_nodes: usize,
    /// Smallest density value of the raw inversion, before clipping.
    pub min_density_raw: f64,
    /// Probability mass removed by clipping negative lobes of the inversion.
    pub clipped_mass: f64,
    pub refine_iterations: usize,
    pub target_variance: f64,
    pub cell_variance: f64,
    pub required_variance: f64,
    pub achieved_variance: f64,
    /// Sup-distance between the realized marginal CDF of `n + e` and the
    /// target marginal CDF.
    pub residual: f64,
    pub degenerate: bool,
}

impl ValidityReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "grid_points={}", self.grid_points);
        let _ = writeln!(s, "half_width={:e}", self.half_width);
        let _ = writeln!(s, "bin_width={:e}", self.bin_width);
        let _ = writeln!(s, "zero_nodes={}", self.zero_nodes);
        let _ = writeln!(s, "min_density_raw={:e}", self.min_density_raw);
        let _ = writeln!(s, "clipped_mass={:e}", self.clipped_mass);
        let _ = writeln!(s, "refine_iterations={}", self.refine_iterations);
        let _ = writeln!(s, "target_variance={:e}", self.target_variance);
        let _ = writeln!(s, "cell_variance={:e}", self.cell_variance);
        let _ = writeln!(s, "required_variance={:e}", self.required_variance);
        let _ = writeln!(s, "achieved_variance={:e}", self.achieved_variance);
        let _ = writeln!(s, "residual={:e}", self.residual);
        let _ = writeln!(s, "degenerate={}", self.degenerate);
        s
    }
}

#[derive(Clone, Debug)]
enum Table {
    Degenerate,
    OneD { lo: f64, dx: f64, probs: Vec<f64>, cdf: Vec<f64> },
    TwoD { lo: f64, dx: f64, n: usize, alias: WeightedAliasIndex<f64> },
}

/// Immutable sampler of privacy-preserving noise for one mechanism and one
/// lattice. Safe to share; callers supply their own random streams.
#[derive(Clone, Debug)]
pub struct PpnSampler {
    spec: MechanismSpec,
    dim: usize,
    table: Table,
    report: ValidityReport,
}

impl PpnSampler {
    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn report(&self) -> &ValidityReport {
        &self.report
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.table, Table::Degenerate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        match &self.table {
            Table::Degenerate => [0.0; 2],
            Table::OneD { lo, dx, probs, cdf } => {
                let u: f64 = rng.random();
                let j = cdf[1..].partition_point(|&c| c <= u).min(probs.len() - 1);
                let within = if probs[j] > 0.0 { ((u - cdf[j]) / probs[j]).clamp(0.0, 1.0) } else { 0.5 };
                [lo + (j as f64 + within) * dx, 0.0]
            }
            Table::TwoD { lo, dx, n, alias } => {
                let k = alias.sample(rng);
                let (i0, i1) = (k / n, k % n);
                let u0: f64 = rng.random();
                let u1: f64 = rng.random();
                [lo + (i0 as f64 + u0) * dx, lo + (i1 as f64 + u1) * dx]
            }
        }
    }
}

const REFINE_CHUNK: usize = 100;

/// Builds the PPN sampler for `spec` on `lat`: discrete Fourier inversion of
/// target CF / cell CF, multiplicative refinement when the inversion has
/// negative lobes or misses the target, and a variance match when it helps.
pub fn build_ppn_sampler(spec: &MechanismSpec, lat: &Lattice, opts: &SamplerOptions) -> Result<PpnSampler> {
    let dim = lat.dimension();
    if spec.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: spec.dim });
    }
    let target_var = spec.variance_per_coordinate();
    let cell_var = lat.cell_variance_per_coordinate();
    let required = target_var - cell_var;
    let cell = CellMarginal::new(lat);

    if required <= 1e-12 * target_var {
        let mut report = ValidityReport {
            method: "degenerate".into(),
            grid_points: 0,
            half_width: 0.0,
            bin_width: 0.0,
            zero_nodes: 0,
            min_density_raw: f64::NAN,
            clipped_mass: f64::NAN,
            refine_iterations: 0,
            target_variance: target_var,
            cell_variance: cell_var,
            required_variance: required,
            achieved_variance: 0.0,
            residual: f64::NAN,
            degenerate: true,
        };
        let tiny = 1e-12 * cell.half_width.max(1e-300);
        report.residual = marginal_residual(spec, &cell, -0.5 * tiny, tiny, &[1.0]);
        if opts.admission == Admission::Strict {
            return Err(Error::MechanismInfeasible(format!(
                "cell error variance {cell_var:e} leaves no room for privacy noise \
                 (target {target_var:e}, required {required:e})"
            )));
        }
        return Ok(PpnSampler { spec: spec.clone(), dim, table: Table::Degenerate, report });
    }

    let sigma = target_var.sqrt();
    let cell_radius = cell.radius;
    let half = opts.support_sigmas * sigma;
    let half = half.max(spec.tail_quantile(opts.tail_mass)) + 2.0 * cell_radius;
    let n = match opts.grid_points {
        Some(n) => n.next_power_of_two().max(64),
        None if dim == 1 => {
            // keep at least four bins per cell
            let need = (2.0 * half / (0.25 * 2.0 * cell_radius)).ceil() as usize;
            need.next_power_of_two().clamp(1 << 14, 1 << 20)
        }
        None => 1 << 9,
    };
    let dx = 2.0 * half / n as f64;
    let grid = Grid::new(n, dim);
    let xs: Vec<f64> = (0..n).map(|j| (j as f64 - (n / 2) as f64) * dx).collect();

    // cell transfer function on FFT slots
    let dw = 2.0 * PI / (n as f64 * dx);
    let h_cell: Vec<f64> = (0..grid.len())
        .map(|s| {
            let t = slot_freq(&grid, s, dw);
            lat.cell_cf_closed(&t)
        })
        .collect();

    // 1. Fourier inversion
    let mut zero_nodes = 0usize;
    let mut phi_n: Vec<f64> = (0..grid.len())
        .map(|s| {
            let e = h_cell[s];
            let ratio = spec.cf(&slot_freq(&grid, s, dw)) / e;
            // no characteristic function exceeds one in magnitude
            if e.abs() < opts.zero_threshold || ratio.abs() > 1.0 {
                zero_nodes += 1;
                f64::NAN
            } else {
                ratio
            }
        })
        .collect();
    fill_zero_nodes(&grid, &mut phi_n);
    let mut buf: Vec<Complex64> = phi_n
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            let parity: usize = slot_index(&grid, s).iter().sum();
            Complex64::new(if parity % 2 == 0 { v } else { -v }, 0.0)
        })
        .collect();
    grid.forward(&mut buf);
    let norm = 1.0 / grid.len() as f64;
    let mut inv: Vec<f64> = buf.iter().map(|c| c.re * norm).collect();
    let cell_area = dx.powi(dim as i32);
    let min_density_raw = inv.iter().cloned().fold(f64::INFINITY, f64::min) / cell_area;
    let clipped_mass: f64 = inv.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    for v in inv.iter_mut() {
        *v = v.max(0.0);
    }
    normalize(&mut inv);

    let marg = Marginal { grid: &grid, xs: &xs, dx, cell: &cell };
    let mut best = marg.finish(spec, &inv, required);
    let mut method = "inversion";
    let mut iterations = 0;

    // 2. refinement
    if !(best.residual <= 0.5 * opts.max_residual) {
        let iters = opts.refine_iterations.unwrap_or(if dim == 1 { 1000 } else { 80 });
        let start = if clipped_mass <= opts.max_clipped_mass {
            inv.clone()
        } else {
            let c = (required / target_var).sqrt();
            let mut g = target_masses(spec, &grid, &xs, dx, c);
            normalize(&mut g);
            g
        };
        let f = target_masses(spec, &grid, &xs, dx, 1.0);
        let kernel_1d = (dim == 1).then(|| BoxKernel::new(0.5 * lat.spacing() / dx));
        let (margin, kernel_2d) = if dim == 1 {
            (0, Vec::new())
        } else {
            ((cell_radius / dx).ceil() as usize + 2, overlap_kernel_2d(&grid, lat, dx))
        };
        let mut refined = start;
        let mut last = f64::INFINITY;
        let cand = loop {
            let chunk = REFINE_CHUNK.min(iters - iterations);
            refined = match &kernel_1d {
                Some(k) => richardson_lucy_1d(&f, refined, k, chunk),
                None => richardson_lucy_2d(&grid, &f, refined, &kernel_2d, margin, chunk),
            };
            iterations += chunk;
            if iterations >= iters {
                break marg.finish(spec, &refined, required);
            }
            if opts.admission != Admission::BestEffort {
                // a stalled residual far above the bound will be rejected anyway
                let c = marg.finish(spec, &refined, required);
                if c.residual > 10.0 * opts.max_residual && c.residual > 0.98 * last {
                    break c;
                }
                last = c.residual;
            }
        };
        if cand.residual < best.residual || !best.residual.is_finite() {
            best = cand;
            method = "refined";
        }
    }

    let report = ValidityReport {
        method: method.into(),
        grid_points: n,
        half_width: half,
        bin_width: dx * best.scale,
        zero_nodes,
        min_density_raw,
        clipped_mass,
        refine_iterations: iterations,
        target_variance: target_var,
        cell_variance: cell_var,
        required_variance: required,
        achieved_variance: best.variance,
        residual: best.residual,
        degenerate: false,
    };
    if opts.admission != Admission::BestEffort && !(report.residual <= opts.max_residual) {
        return Err(Error::MechanismInfeasible(format!(
            "deconvolved noise misses the target by {:.3e} (> {:.1e})\n{}",
            report.residual,
            opts.max_residual,
            report.to_text()
        )));
    }

    let lo = (xs[0] - 0.5 * dx) * best.scale;
    let dxs = dx * best.scale;
    let table = if dim == 1 {
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for p in &best.probs {
            acc += p;
            cdf.push(acc);
        }
        let last = *cdf.last().unwrap();
        for c in cdf.iter_mut() {
            *c /= last;
        }
        Table::OneD { lo, dx: dxs, probs: best.probs, cdf }
    } else {
        let alias = WeightedAliasIndex::new(best.probs)
            .map_err(|e| Error::MechanismInfeasible(format!("alias table: {e}")))?;
        Table::TwoD { lo, dx: dxs, n, alias }
    };
    Ok(PpnSampler { spec: spec.clone(), dim, table, report })
}

fn slot_index(grid: &Grid, s: usize) -> [usize; 2] {
    if grid.dims == 1 {
        [s, 0]
    } else {
        [s / grid.n, s % grid.n]
    }
}

fn slot_freq(grid: &Grid, s: usize, dw: f64) -> [f64; 2] {
    let [a, b] = slot_index(grid, s);
    if grid.dims == 1 {
        [grid.signed(a) as f64 * dw, 0.0]
    } else {
        [grid.signed(a) as f64 * dw, grid.signed(b) as f64 * dw]
    }
}

/// Replaces NaN nodes by the mean of their finite axis neighbours, sweeping
/// until every node is filled.
fn fill_zero_nodes(grid: &Grid, phi: &mut [f64]) {
    let n = grid.n as i64;
    for _ in 0..64 {
        let snapshot = phi.to_vec();
        let mut missing = 0;
        for s in 0..phi.len() {
            if !snapshot[s].is_nan() {
                continue;
            }
            let [a, b] = slot_index(grid, s);
            let (a, b) = (a as i64, b as i64);
            let mut acc = 0.0;
            let mut cnt = 0;
            let mut probe = |ia: i64, ib: i64| {
                if ia >= 0 && ia < n && ib >= 0 && (grid.dims == 1 || ib < n) {
                    let idx = if grid.dims == 1 { ia as usize } else { (ia * n + ib) as usize };
                    if !snapshot[idx].is_nan() {
                        acc += snapshot[idx];
                        cnt += 1;
                    }
                }
            };
            probe(a - 1, b);
            probe(a + 1, b);
            if grid.dims == 2 {
                probe(a, b - 1);
                probe(a, b + 1);
            }
            if cnt > 0 {
                phi[s] = acc / cnt as f64;
            } else {
                missing += 1;
            }
        }
        if missing == 0 {
            return;
        }
    }
    for v in phi.iter_mut() {
        if v.is_nan() {
            *v = 0.0;
        }
    }
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        for v in p.iter_mut() {
            *v /= s;
        }
    }
}

/// Target bin masses, optionally for the law of `c * X`.
fn target_masses(spec: &MechanismSpec, grid: &Grid, xs: &[f64], dx: f64, c: f64) -> Vec<f64> {
    if grid.dims == 1 {
        return xs
            .iter()
            .map(|&x| {
                (spec.marginal_cdf((x + 0.5 * dx) / c) - spec.marginal_cdf((x - 0.5 * dx) / c)).max(0.0)
            })
            .collect();
    }
    let q = GaussLegendre::new(3);
    let n = grid.n;
    let mut out = vec![0.0; n * n];
    for i0 in 0..n {
        for i1 in 0..n {
            let mut acc = 0.0;
            for (u, wu) in q.nodes.iter().zip(&q.weights) {
                for (v, wv) in q.nodes.iter().zip(&q.weights) {
                    let p = [(xs[i0] + (u - 0.5) * dx) / c, (xs[i1] + (v - 0.5) * dx) / c];
                    acc += wu * wv * spec.density(&p);
                }
            }
            out[i0 * n + i1] = acc * dx * dx / (c * c);
        }
    }
    out
}

/// Box kernel of half-width `a` bins acting on bin-centred point masses.
struct BoxKernel {
    full: i64,
    full_w: f64,
    tails: Vec<(i64, f64)>,
}

impl BoxKernel {
    fn new(a: f64) -> Self {
        let overlap = |m: f64| ((m + 0.5).min(a) - (m - 0.5).max(-a)).max(0.0);
        let full = (a - 0.5).floor() as i64;
        let mut tails = Vec::new();
        let mut m = full + 1;
        loop {
            let w = overlap(m as f64);
            if w <= 0.0 {
                break;
            }
            tails.push((m, w / (2.0 * a)));
            m += 1;
        }
        BoxKernel { full, full_w: 1.0 / (2.0 * a), tails }
    }

    fn reach(&self) -> usize {
        self.tails.last().map(|t| t.0).unwrap_or(self.full).max(0) as usize
    }

    fn apply(&self, g: &[f64], out: &mut [f64], prefix: &mut Vec<f64>) {
        let n = g.len() as i64;
        prefix.clear();
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in g {
            acc += v;
            prefix.push(acc);
        }
        for j in 0..n {
            let mut v = 0.0;
            if self.full >= 0 {
                let lo = (j - self.full).max(0) as usize;
                let hi = (j + self.full + 1).min(n) as usize;
                v += self.full_w * (prefix[hi] - prefix[lo]);
            }
            for &(m, w) in &self.tails {
                if j - m >= 0 {
                    v += w * g[(j - m) as usize];
                }
                if j + m < n {
                    v += w * g[(j + m) as usize];
                }
            }
            out[j as usize] = v;
        }
    }
}

/// Transfer function of the exact bin-overlap kernel of the cell: a point
/// mass at a bin centre spread uniformly over the cell lands in each bin in
/// proportion to the overlap area.
fn overlap_kernel_2d(grid: &Grid, lat: &Lattice, dx: f64) -> Vec<f64> {
    let n = grid.n;
    let poly = lat.cell_polygon();
    let area = lat.cell_volume();
    let reach = (poly.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max) / dx + 0.5).ceil() as i64;
    let mut buf = vec![Complex64::default(); n * n];
    for m0 in -reach..=reach {
        for m1 in -reach..=reach {
            let (cx, cy) = (m0 as f64 * dx, m1 as f64 * dx);
            let h = 0.5 * dx;
            let mut p = poly.to_vec();
            p = clip(&p, [1.0, 0.0], cx + h);
            p = clip(&p, [-1.0, 0.0], -(cx - h));
            p = clip(&p, [0.0, 1.0], cy + h);
            p = clip(&p, [0.0, -1.0], -(cy - h));
            if p.len() < 3 {
                continue;
            }
            let w = polygon_area(&p) / area;
            let i0 = m0.rem_euclid(n as i64) as usize;
            let i1 = m1.rem_euclid(n as i64) as usize;
            buf[i0 * n + i1].re += w;
        }
    }
    grid.forward(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

fn richardson_lucy_1d(f: &[f64], mut g: Vec<f64>, k: &BoxKernel, iters: usize) -> Vec<f64> {
    let n = g.len();
    let r = k.reach();
    let interior = |i: usize| i >= r && i + r < n;
    for (i, v) in g.iter_mut().enumerate() {
        if !interior(i) {
            *v = 0.0;
        }
    }
    normalize(&mut g);
    let mut h = vec![0.0; n];
    let mut ratio = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut prefix = Vec::with_capacity(n + 1);
    for _ in 0..iters {
        k.apply(&g, &mut h, &mut prefix);
        for j in 0..n {
            ratio[j] = if h[j] > 1e-300 { f[j] / h[j] } else { 0.0 };
        }
        k.apply(&ratio, &mut c, &mut prefix);
        for i in 0..n {
            g[i] = if interior(i) { g[i] * c[i] } else { 0.0 };
        }
        normalize(&mut g);
    }
    g
}

fn richardson_lucy_2d(grid: &Grid, f: &[f64], mut g: Vec<f64>, h_cell: &[f64], margin: usize, iters: usize) -> Vec<f64> {
    let n = grid.n;
    let interior = |s: usize| {
        let (a, b) = (s / n, s % n);
        a >= margin && a + margin < n && b >= margin && b + margin < n
    };
    for (s, v) in g.iter_mut().enumerate() {
        if !interior(s) {
            *v = 0.0;
        }
    }
    normalize(&mut g);
    let len = g.len();
    let mut h = vec![0.0; len];
    let mut ratio = vec![0.0; len];
    let mut c = vec![0.0; len];
    let floor = 1e-14 / len as f64;
    for _ in 0..iters {
        grid.convolve(&g, h_cell, &mut h);
        for s in 0..len {
            ratio[s] = if f[s] > 0.0 { f[s] / h[s].max(floor) } else { 0.0 };
        }
        grid.convolve(&ratio, h_cell, &mut c);
        for s in 0..len {
            g[s] = if interior(s) { (g[s] * c[s]).max(0.0) } else { 0.0 };
        }
        normalize(&mut g);
    }
    g
}

/// Marginal of one coordinate of the uniform cell error.
pub(crate) struct CellMarginal {
    /// Box half-width (L=1) or breakpoints/chords of the projected polygon.
    pub half_width: f64,
    pub radius: f64,
    pieces: Vec<(f64, f64, f64, f64)>,
    scalar: bool,
}

impl CellMarginal {
    fn new(lat: &Lattice) -> Self {
        if lat.dimension() == 1 {
            let h = 0.5 * lat.spacing();
            return CellMarginal { half_width: h, radius: h, pieces: Vec::new(), scalar: true };
        }
        let poly = lat.cell_polygon();
        let area = lat.cell_volume();
        let radius = poly.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        let mut xs: Vec<f64> = poly.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * radius);
        let chord = |u: f64| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..poly.len() {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                let (x0, x1) = (a[0].min(b[0]), a[0].max(b[0]));
                if u < x0 - 1e-15 || u > x1 + 1e-15 {
                    continue;
                }
                let y = if (b[0] - a[0]).abs() < 1e-15 {
                    lo = lo.min(a[1].min(b[1]));
                    hi = hi.max(a[1].max(b[1]));
                    continue;
                } else {
                    a[1] + (u - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
                };
                lo = lo.min(y);
                hi = hi.max(y);
            }
            if hi > lo {
                (hi - lo) / area
            } else {
                0.0
            }
        };
        let pieces = xs
            .windows(2)
            .map(|w| {
                let (u0, u1) = (w[0], w[1]);
                let e = 1e-9 * (u1 - u0);
                (u0, u1, chord(u0 + e), chord(u1 - e))
            })
            .collect();
        CellMarginal { half_width: xs[xs.len() - 1], radius, pieces, scalar: false }
    }
}

struct Candidate {
    probs: Vec<f64>,
    scale: f64,
    variance: f64,
    residual: f64,
}

struct Marginal<'a> {
    grid: &'a Grid,
    xs: &'a [f64],
    dx: f64,
    cell: &'a CellMarginal,
}

impl Marginal<'_> {
    /// Scales the table to the required variance and measures the residual.
    fn finish(&self, spec: &MechanismSpec, probs: &[f64], required: f64) -> Candidate {
        let n = self.grid.n;
        let marg: Vec<f64> = if self.grid.dims == 1 {
            probs.to_vec()
        } else {
            (0..n).map(|i0| probs[i0 * n..(i0 + 1) * n].iter().sum()).collect()
        };
        let var_axis = |m: &[f64]| {
            let mean: f64 = m.iter().zip(self.xs).map(|(p, x)| p * x).sum();
            m.iter().zip(self.xs).map(|(p, x)| p * (x - mean) * (x - mean)).sum::<f64>()
                + self.dx * self.dx / 12.0
        };
        let mut var = var_axis(&marg);
        if self.grid.dims == 2 {
            let marg1: Vec<f64> = (0..n).map(|i1| (0..n).map(|i0| probs[i0 * n + i1]).sum()).collect();
            var = 0.5 * (var + var_axis(&marg1));
        }
        // Stretching to the exact variance is kept only when it brings the
        // law closer to the target; truncated heavy tails can make it worse.
        let matched = if var > 0.0 { (required / var).sqrt() } else { 1.0 };
        let eval = |scale: f64| {
            let lo = (self.xs[0] - 0.5 * self.dx) * scale;
            marginal_residual(spec, self.cell, lo, self.dx * scale, &marg)
        };
        let (r_matched, r_plain) = (eval(matched), eval(1.0));
        let (scale, residual) = if r_matched <= r_plain { (matched, r_matched) } else { (1.0, r_plain) };
        Candidate { probs: probs.to_vec(), scale, variance: var * scale * scale, residual }
    }
}

/// Sup-distance between the marginal CDF of `n + e` (n histogram with bins
/// `[lo + j w, lo + (j+1) w)`) and the target marginal CDF.
pub(crate) fn marginal_residual(spec: &MechanismSpec, cell: &CellMarginal, lo: f64, w: f64, masses: &[f64]) -> f64 {
    let n = masses.len();
    let mut cum = Vec::with_capacity(n + 1);
    let mut g = Vec::with_capacity(n + 1);
    cum.push(0.0);
    g.push(0.0);
    for (j, m) in masses.iter().enumerate() {
        let c0 = cum[j];
        cum.push(c0 + m);
        g.push(g[j] + w * (c0 + 0.5 * m));
    }
    let total = cum[n];
    let hi = lo + n as f64 * w;
    let big_g = |y: f64| -> f64 {
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return g[n] + total * (y - hi);
        }
        let t = (y - lo) / w;
        let j = (t.floor() as usize).min(n - 1);
        let s = y - (lo + j as f64 * w);
        g[j] + cum[j] * s + masses[j] * s * s / (2.0 * w)
    };
    let big_f = |y: f64| -> f64 {
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return total;
        }
        let t = (y - lo) / w;
        let j = (t.floor() as usize).min(n - 1);
        cum[j] + masses[j] * (t - j as f64)
    };
    let q = GaussLegendre::new(16);
    let realized = |y: f64| -> f64 {
        if cell.scalar {
            let h = cell.half_width;
            (big_g(y + h) - big_g(y - h)) / (2.0 * h)
        } else {
            let mut acc = 0.0;
            for &(u0, u1, r0, r1) in &cell.pieces {
                let len = u1 - u0;
                for (t, wt) in q.nodes.iter().zip(&q.weights) {
                    let u = u0 + t * len;
                    let rho = r0 + (r1 - r0) * t;
                    acc += wt * len * rho * big_f(y - u);
                }
            }
            acc
        }
    };
    let reach = cell.half_width;
    let points = (2 * n).clamp(2048, 1 << 16);
    let (a, b) = (lo - reach, hi + reach);
    let mut worst: f64 = 0.0;
    for k in 0..=points {
        let y = a + (b - a) * k as f64 / points as f64;
        worst = worst.max((realized(y) - spec.marginal_cdf(y)).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_table_is_a_probability_vector() {
        let lat = Lattice::scalar_uniform(9.0, 4);
        let spec = MechanismSpec::laplace(1.0, 1).unwrap();
        let s = build_ppn_sampler(&spec, &lat, &SamplerOptions::default()).unwrap();
        let Table::OneD { probs, cdf, dx, .. } = &s.table else { panic!("expected a 1-D table") };
        assert!(probs.iter().all(|p| *p >= 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(*cdf.last().unwrap(), 1.0);
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        assert!(*dx > 0.0);
    }
}
