use crate::lattice::{free_cells, is_guide_tube, Coord, LatticeLayout, CELLS, SIDE};

use super::{NeutronicsError, NeutronicsResult, SolverConfig, TwoGroupXS, XsLibrary};

/// Zero-leakage two-group multiplication factor of a single material.
pub fn analytic_kinf(xs: &TwoGroupXS) -> Result<f64, NeutronicsError> {
    let denom = xs.removal1() * xs.sa2;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(NeutronicsError::DegenerateMaterial(
            "zero removal cross section in k-infinity".into(),
        ));
    }
    Ok((xs.nu_sf1 * xs.sa2 + xs.nu_sf2 * xs.ss12) / denom)
}

/// Solution on an arbitrary pin-material grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PinGridSolution {
    pub k_eff: f64,
    pub fq: f64,
    pub fdh: f64,
    /// Raster-order pin powers, mean 1 over the power-bearing pins, zero elsewhere.
    pub pin_power: Vec<f64>,
    pub iterations: usize,
}

/// Solves the eigenproblem for a layout with the given library.
pub fn solve_diffusion(
    layout: &LatticeLayout,
    lib: &XsLibrary,
    cfg: &SolverConfig,
) -> Result<NeutronicsResult, NeutronicsError> {
    lib.validate()?;
    let materials: Vec<TwoGroupXS> = layout.cells().iter().map(|&k| *lib.get(k)).collect();
    let mask: Vec<bool> = Coord::all().map(|c| !is_guide_tube(c)).collect();
    let sol = solve_pin_grid(&materials, &mask, cfg)?;
    let pin_power = free_cells()
        .iter()
        .map(|c| sol.pin_power[c.index()])
        .collect();
    Ok(NeutronicsResult {
        k_eff: sol.k_eff,
        fq: sol.fq,
        fdh: sol.fdh,
        pin_power,
    })
}

/// Solves on a raster-ordered grid of 289 pin materials. `power_mask` marks
/// the pins over which power is normalized and peaking factors are taken.
pub fn solve_pin_grid(
    materials: &[TwoGroupXS],
    power_mask: &[bool],
    cfg: &SolverConfig,
) -> Result<PinGridSolution, NeutronicsError> {
    cfg.validate()?;
    if materials.len() != CELLS || power_mask.len() != CELLS {
        return Err(NeutronicsError::InvalidConfig(format!(
            "expected {CELLS} pin materials and mask entries"
        )));
    }
    for xs in materials {
        xs.validate()?;
    }
    if !materials.iter().any(TwoGroupXS::is_fissile) {
        return Err(NeutronicsError::DegenerateMaterial(
            "no fissile material in the lattice".into(),
        ));
    }
    if !power_mask.iter().any(|&b| b) {
        return Err(NeutronicsError::InvalidConfig("empty power mask".into()));
    }

    let mesh = Mesh::new(cfg.mesh_per_pin, cfg.pitch);
    let cell_xs: Vec<&TwoGroupXS> = (0..mesh.cells())
        .map(|i| &materials[mesh.pin_of(i)])
        .collect();

    let fast =
        BandedCholesky::factor(&mesh.operator(&cell_xs, |x| x.d1, |x| x.removal1()), mesh.n)?;
    let thermal = BandedCholesky::factor(&mesh.operator(&cell_xs, |x| x.d2, |x| x.sa2), mesh.n)?;

    let nu_sf1: Vec<f64> = cell_xs.iter().map(|x| x.nu_sf1).collect();
    let nu_sf2: Vec<f64> = cell_xs.iter().map(|x| x.nu_sf2).collect();
    let ss12: Vec<f64> = cell_xs.iter().map(|x| x.ss12).collect();

    let ncell = mesh.cells();
    let mut phi1 = vec![1.0; ncell];
    let mut phi2 = vec![1.0; ncell];
    let mut source = fission_source(&nu_sf1, &nu_sf2, &phi1, &phi2);
    let scale = normalize(&mut source);
    phi1.iter_mut().for_each(|v| *v *= scale);
    phi2.iter_mut().for_each(|v| *v *= scale);
    let mut k = 1.0;
    let mut rhs = vec![0.0; ncell];

    let mut iterations = 0;
    let (mut dk, mut ds) = (f64::INFINITY, f64::INFINITY);
    while iterations < cfg.max_iterations {
        iterations += 1;
        for (r, s) in rhs.iter_mut().zip(&source) {
            *r = s / k;
        }
        fast.solve_into(&rhs, &mut phi1);
        for ((r, p), s) in rhs.iter_mut().zip(&phi1).zip(&ss12) {
            *r = s * p;
        }
        thermal.solve_into(&rhs, &mut phi2);

        let mut next = fission_source(&nu_sf1, &nu_sf2, &phi1, &phi2);
        let total: f64 = next.iter().sum();
        // `source` sums to the cell count after normalization.
        let k_next = k * total / ncell as f64;
        let scale = normalize(&mut next);
        phi1.iter_mut().for_each(|v| *v *= scale);
        phi2.iter_mut().for_each(|v| *v *= scale);

        dk = (k_next - k).abs();
        ds = next
            .iter()
            .zip(&source)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        k = k_next;
        source = next;
        if dk < cfg.k_tolerance && ds < cfg.source_tolerance {
            return Ok(mesh.powers(k, &source, power_mask, iterations));
        }
    }
    Err(NeutronicsError::NoConvergence { iterations, dk, ds })
}

fn fission_source(nu_sf1: &[f64], nu_sf2: &[f64], phi1: &[f64], phi2: &[f64]) -> Vec<f64> {
    nu_sf1
        .iter()
        .zip(nu_sf2)
        .zip(phi1.iter().zip(phi2))
        .map(|((a, b), (p, q))| a * p + b * q)
        .collect()
}

/// Rescales `v` to mean 1 and returns the factor applied.
fn normalize(v: &mut [f64]) -> f64 {
    let total: f64 = v.iter().sum();
    let scale = v.len() as f64 / total;
    v.iter_mut().for_each(|x| *x *= scale);
    scale
}

struct Mesh {
    per_pin: usize,
    /// Cells per side.
    n: usize,
    h: f64,
}

impl Mesh {
    fn new(per_pin: usize, pitch: f64) -> Self {
        Mesh {
            per_pin,
            n: SIDE * per_pin,
            h: pitch / per_pin as f64,
        }
    }

    fn cells(&self) -> usize {
        self.n * self.n
    }

    fn pin_of(&self, cell: usize) -> usize {
        let (i, j) = (cell / self.n, cell % self.n);
        (i / self.per_pin) * SIDE + j / self.per_pin
    }

    /// Lower band of the symmetric loss operator for one group: face
    /// couplings use the harmonic mean of neighbouring diffusion
    /// coefficients, and boundary faces carry no current.
    fn operator(
        &self,
        xs: &[&TwoGroupXS],
        diffusion: impl Fn(&TwoGroupXS) -> f64,
        removal: impl Fn(&TwoGroupXS) -> f64,
    ) -> Band {
        let n = self.n;
        let mut band = Band::zeros(self.cells(), n);
        let h2 = self.h * self.h;
        let coupling = |a: usize, b: usize| {
            let (da, db) = (diffusion(xs[a]), diffusion(xs[b]));
            2.0 * da * db / ((da + db) * h2)
        };
        for (cell, &x) in xs.iter().enumerate().take(self.cells()) {
            let (i, j) = (cell / n, cell % n);
            let mut diag = removal(x);
            if j > 0 {
                let c = coupling(cell, cell - 1);
                band.set(cell, cell - 1, -c);
                diag += c;
            }
            if j + 1 < n {
                diag += coupling(cell, cell + 1);
            }
            if i > 0 {
                let c = coupling(cell, cell - n);
                band.set(cell, cell - n, -c);
                diag += c;
            }
            if i + 1 < n {
                diag += coupling(cell, cell + n);
            }
            band.set(cell, cell, diag);
        }
        band
    }

    fn powers(&self, k: f64, source: &[f64], mask: &[bool], iterations: usize) -> PinGridSolution {
        let mut pin = vec![0.0; CELLS];
        let mut peak_cell: f64 = 0.0;
        let mut cell_sum = 0.0;
        let mut cell_count = 0usize;
        for (cell, &s) in source.iter().enumerate() {
            let p = self.pin_of(cell);
            if mask[p] {
                pin[p] += s;
                peak_cell = peak_cell.max(s);
                cell_sum += s;
                cell_count += 1;
            }
        }
        let pins = mask.iter().filter(|&&b| b).count() as f64;
        let pin_mean = pin.iter().sum::<f64>() / pins;
        pin.iter_mut().for_each(|v| *v /= pin_mean);
        let fdh = pin.iter().copied().fold(0.0, f64::max);
        let fq = peak_cell / (cell_sum / cell_count as f64);
        PinGridSolution {
            k_eff: k,
            fq,
            fdh,
            pin_power: pin,
            iterations,
        }
    }
}

/// Lower band of a symmetric matrix, row-major: row `i` holds columns
/// `i - width ..= i`, with out-of-range leading entries left at zero.
struct Band {
    width: usize,
    data: Vec<f64>,
}

impl Band {
    fn zeros(rows: usize, width: usize) -> Self {
        Band {
            width,
            data: vec![0.0; rows * (width + 1)],
        }
    }

    fn pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.width);
        i * (self.width + 1) + self.width - (i - j)
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let p = self.pos(i, j);
        self.data[p] = v;
    }

    /// Row `i` restricted to columns `lo..hi` (requires `i - width <= lo`).
    fn row(&self, i: usize, lo: usize, hi: usize) -> &[f64] {
        let start = self.pos(i, lo);
        &self.data[start..start + (hi - lo)]
    }
}

/// Cholesky factor of a symmetric positive-definite banded matrix.
struct BandedCholesky {
    l: Band,
    rows: usize,
}

impl BandedCholesky {
    fn factor(a: &Band, width: usize) -> Result<Self, NeutronicsError> {
        let rows = a.data.len() / (width + 1);
        let mut l = Band::zeros(rows, width);
        for i in 0..rows {
            let lo = i.saturating_sub(width);
            for j in lo..=i {
                let dot: f64 = l
                    .row(i, lo, j)
                    .iter()
                    .zip(l.row(j, lo, j))
                    .map(|(x, y)| x * y)
                    .sum();
                let s = a.data[a.pos(i, j)] - dot;
                if i == j {
                    if !(s > 0.0) {
                        return Err(NeutronicsError::DegenerateMaterial(
                            "diffusion operator is not positive definite".into(),
                        ));
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    let d = l.data[l.pos(j, j)];
                    l.set(i, j, s / d);
                }
            }
        }
        Ok(BandedCholesky { l, rows })
    }

    fn solve_into(&self, rhs: &[f64], x: &mut [f64]) {
        let w = self.l.width;
        // L y = b
        for i in 0..self.rows {
            let lo = i.saturating_sub(w);
            let dot: f64 = self
                .l
                .row(i, lo, i)
                .iter()
                .zip(&x[lo..i])
                .map(|(a, b)| a * b)
                .sum();
            x[i] = (rhs[i] - dot) / self.l.data[self.l.pos(i, i)];
        }
        // L^T x = y, column sweep so rows of L are read contiguously.
        for i in (0..self.rows).rev() {
            x[i] /= self.l.data[self.l.pos(i, i)];
            let xi = x[i];
            let lo = i.saturating_sub(w);
            for (xp, lp) in x[lo..i].iter_mut().zip(self.l.row(i, lo, i)) {
                *xp -= lp * xi;
            }
        }
    }
}
