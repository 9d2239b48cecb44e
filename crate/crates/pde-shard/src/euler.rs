//! Data-generating solver for the 2-D linearized Euler equations.
//!
//! The perturbation state (rho', ux', uy', p') evolves around a constant
//! background (rho_c, p_c, uc) under the linear hyperbolic system
//!
//! ```text
//! d/dt rho' + div(uc rho' + rho_c u')        = 0
//! d/dt u'   + (uc . grad) u' + grad p'/rho_c = 0
//! d/dt p'   + div(uc p' + gamma p_c u')      = 0
//! ```
//!
//! discretised with local Lax-Friedrichs (Rusanov) finite-volume fluxes and
//! forward-Euler time integration on a uniform square grid. Outflow
//! boundaries: ghost cells copy the adjacent interior value for density and
//! velocity (zero-gradient) and hold zero pressure perturbation.
//!
//! Columns map to x, rows to y; cell centers sit at
//! `-extent + (index + 0.5) * dx` with `dx = 2 * extent / n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Dataset, Snapshot, Tensor3, CHANNELS, CH_P, CH_RHO, CH_UX, CH_UY};

/// Full description of one simulation run. Serializes into dataset files and
/// run metadata so every artifact records its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Grid points per direction.
    pub n: usize,
    /// Domain half-width; the square domain is [-extent, +extent]^2.
    pub extent: f64,
    /// Ratio of specific heats.
    pub gamma: f64,
    /// Background density.
    pub rho_c: f64,
    /// Background pressure.
    pub p_c: f64,
    /// Background velocity, x component.
    pub uc_x: f64,
    /// Background velocity, y component.
    pub uc_y: f64,
    /// Gaussian pulse amplitude (pressure perturbation).
    pub pulse_amp: f64,
    /// Gaussian pulse half-width at half-maximum.
    pub pulse_hw: f64,
    /// Pulse center, x.
    pub pulse_cx: f64,
    /// Pulse center, y.
    pub pulse_cy: f64,
    /// CFL number used to pick dt.
    pub cfl: f64,
    /// Number of output frames (including the initial condition).
    pub t_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n: 256,
            extent: 2.0,
            gamma: 1.4,
            rho_c: 1.0,
            p_c: 1.0,
            uc_x: 0.0,
            uc_y: 0.0,
            pulse_amp: 0.5,
            pulse_hw: 0.3,
            pulse_cx: 0.0,
            pulse_cy: 0.0,
            cfl: 0.4,
            t_steps: 1500,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.n >= 8, "n must be >= 8"),
            (self.extent > 0.0, "extent must be > 0"),
            (self.gamma > 1.0, "gamma must be > 1"),
            (self.rho_c > 0.0, "rho_c must be > 0"),
            (self.p_c > 0.0, "p_c must be > 0"),
            (self.cfl > 0.0 && self.cfl < 1.0, "cfl must be in (0, 1)"),
            (self.pulse_hw > 0.0, "pulse_hw must be > 0"),
            (self.t_steps >= 1, "t_steps must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// Cell size; the grid is uniform and square.
    pub fn dx(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    /// Time step from the CFL number: `cfl * dx / (|uc| + c)`.
    pub fn dt(&self) -> f64 {
        let bg = BackgroundState::from_config(self);
        let speed = (self.uc_x * self.uc_x + self.uc_y * self.uc_y).sqrt();
        self.cfl * self.dx() / (speed + bg.sound_speed())
    }

    /// Cell-center coordinates of grid cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let dx = self.dx();
        (
            -self.extent + (col as f64 + 0.5) * dx,
            -self.extent + (row as f64 + 0.5) * dx,
        )
    }
}

/// The constant background around which the equations are linearized,
/// carried separately so the flux kernels take only what they use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundState {
    pub rho_c: f64,
    pub p_c: f64,
    pub uc_x: f64,
    pub uc_y: f64,
    /// Ratio of specific heats; needed by the pressure flux.
    pub gamma: f64,
}

impl BackgroundState {
    pub fn from_config(cfg: &SolverConfig) -> Self {
        BackgroundState {
            rho_c: cfg.rho_c,
            p_c: cfg.p_c,
            uc_x: cfg.uc_x,
            uc_y: cfg.uc_y,
            gamma: cfg.gamma,
        }
    }

    pub fn sound_speed(&self) -> f64 {
        (self.gamma * self.p_c / self.rho_c).sqrt()
    }
}

/// Gaussian pressure pulse at rest: p' uses the half-width-at-half-maximum
/// convention `amp * exp(-ln 2 * r^2 / hw^2)`; density and velocity start
/// at zero.
pub fn initial_condition(cfg: &SolverConfig) -> Result<Snapshot> {
    cfg.validate()?;
    let n = cfg.n;
    let mut fields = Tensor3::zeros(CHANNELS, n, n);
    let ln2 = std::f64::consts::LN_2;
    let inv_hw2 = 1.0 / (cfg.pulse_hw * cfg.pulse_hw);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = cfg.cell_center(i, j);
            let r2 = (x - cfg.pulse_cx).powi(2) + (y - cfg.pulse_cy).powi(2);
            fields.set(CH_P, i, j, cfg.pulse_amp * (-ln2 * r2 * inv_hw2).exp());
        }
    }
    Snapshot::new(fields)
}

#[inline]
fn flux_x(q: [f64; 4], bg: &BackgroundState) -> [f64; 4] {
    let [rho, ux, uy, p] = q;
    [
        bg.uc_x * rho + bg.rho_c * ux,
        bg.uc_x * ux + p / bg.rho_c,
        bg.uc_x * uy,
        bg.uc_x * p + bg.gamma * bg.p_c * ux,
    ]
}

#[inline]
fn flux_y(q: [f64; 4], bg: &BackgroundState) -> [f64; 4] {
    let [rho, ux, uy, p] = q;
    [
        bg.uc_y * rho + bg.rho_c * uy,
        bg.uc_y * ux,
        bg.uc_y * uy + p / bg.rho_c,
        bg.uc_y * p + bg.gamma * bg.p_c * uy,
    ]
}

#[inline]
fn rusanov(fl: [f64; 4], fr: [f64; 4], ql: [f64; 4], qr: [f64; 4], lam: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * lam * (qr[k] - ql[k]);
    }
    out
}

#[inline]
fn cell(t: &Tensor3, i: usize, j: usize) -> [f64; 4] {
    [
        t.get(CH_RHO, i, j),
        t.get(CH_UX, i, j),
        t.get(CH_UY, i, j),
        t.get(CH_P, i, j),
    ]
}

/// Outflow ghost value next to interior cell q: zero-gradient for density
/// and velocity, zero pressure perturbation.
#[inline]
fn outflow_ghost(q: [f64; 4]) -> [f64; 4] {
    [q[0], q[1], q[2], 0.0]
}

/// Advance one forward-Euler step. Refuses time steps beyond the unsplit
/// scheme's stability limit `dx / (lam_x + lam_y)` and reports any
/// non-finite value in the updated state.
pub fn step(s: &Snapshot, bg: &BackgroundState, dx: f64, dt: f64) -> Result<Snapshot> {
    let c = bg.sound_speed();
    let lam_x = bg.uc_x.abs() + c;
    let lam_y = bg.uc_y.abs() + c;
    let limit = dx / (lam_x + lam_y);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let (h, w) = (s.h(), s.w());
    let t = s.fields();

    // Interface fluxes, x-direction: fx[(i, j)] sits between cells (i, j-1)
    // and (i, j); j runs 0..=w with ghost cells past both column edges.
    let mut fx = vec![[0.0f64; 4]; h * (w + 1)];
    for i in 0..h {
        for j in 0..=w {
            let ql = if j == 0 {
                outflow_ghost(cell(t, i, 0))
            } else {
                cell(t, i, j - 1)
            };
            let qr = if j == w {
                outflow_ghost(cell(t, i, w - 1))
            } else {
                cell(t, i, j)
            };
            fx[i * (w + 1) + j] = rusanov(flux_x(ql, bg), flux_x(qr, bg), ql, qr, lam_x);
        }
    }
    // y-direction: fy[(i, j)] sits between cells (i-1, j) and (i, j).
    let mut fy = vec![[0.0f64; 4]; (h + 1) * w];
    for i in 0..=h {
        for j in 0..w {
            let qu = if i == 0 {
                outflow_ghost(cell(t, 0, j))
            } else {
                cell(t, i - 1, j)
            };
            let qd = if i == h {
                outflow_ghost(cell(t, h - 1, j))
            } else {
                cell(t, i, j)
            };
            fy[i * w + j] = rusanov(flux_y(qu, bg), flux_y(qd, bg), qu, qd, lam_y);
        }
    }

    let r = dt / dx;
    let mut out = Tensor3::zeros(CHANNELS, h, w);
    for i in 0..h {
        for j in 0..w {
            let q = cell(t, i, j);
            let fxl = fx[i * (w + 1) + j];
            let fxr = fx[i * (w + 1) + j + 1];
            let fyu = fy[i * w + j];
            let fyd = fy[(i + 1) * w + j];
            for (k, ch) in [CH_RHO, CH_UX, CH_UY, CH_P].into_iter().enumerate() {
                // Summing the two directional differences before scaling keeps
                // the update invariant under x/y exchange.
                let div = (fxr[k] - fxl[k]) + (fyd[k] - fyu[k]);
                out.set(ch, i, j, q[k] - r * div);
            }
        }
    }
    Snapshot::new(out).map_err(|_| Error::NonFinite("solver state after step".into()))
}

/// Run the configured simulation: frame 0 is the initial condition, then
/// `t_steps - 1` solver steps. Fully deterministic.
pub fn run(cfg: &SolverConfig) -> Result<Dataset> {
    cfg.validate()?;
    let bg = BackgroundState::from_config(cfg);
    let dx = cfg.dx();
    let dt = cfg.dt();
    let mut frames = Vec::with_capacity(cfg.t_steps);
    frames.push(initial_condition(cfg)?);
    for _ in 1..cfg.t_steps {
        let next = step(frames.last().unwrap(), &bg, dx, dt)?;
        frames.push(next);
    }
    Dataset::new(frames, dt, Some(cfg.clone()))
}

/// Mirror the grid left-right (x -> -x): columns reverse and the x-velocity
/// changes sign.
pub fn reflect_cols(s: &Snapshot) -> Snapshot {
    let (h, w) = (s.h(), s.w());
    let mut out = Tensor3::zeros(CHANNELS, h, w);
    for ch in 0..CHANNELS {
        let sign = if ch == CH_UX { -1.0 } else { 1.0 };
        for i in 0..h {
            for j in 0..w {
                out.set(ch, i, j, sign * s.get(ch, i, w - 1 - j));
            }
        }
    }
    Snapshot::new(out).expect("reflection preserves finiteness")
}

/// Mirror the grid top-bottom (y -> -y): rows reverse and the y-velocity
/// changes sign.
pub fn reflect_rows(s: &Snapshot) -> Snapshot {
    let (h, w) = (s.h(), s.w());
    let mut out = Tensor3::zeros(CHANNELS, h, w);
    for ch in 0..CHANNELS {
        let sign = if ch == CH_UY { -1.0 } else { 1.0 };
        for i in 0..h {
            for j in 0..w {
                out.set(ch, i, j, sign * s.get(ch, h - 1 - i, j));
            }
        }
    }
    Snapshot::new(out).expect("reflection preserves finiteness")
}

/// Reflect about the main diagonal (x <-> y): transpose every plane and swap
/// the velocity components.
pub fn transpose(s: &Snapshot) -> Snapshot {
    let (h, w) = (s.h(), s.w());
    let mut out = Tensor3::zeros(CHANNELS, w, h);
    for ch in 0..CHANNELS {
        let src = match ch {
            c if c == CH_UX => CH_UY,
            c if c == CH_UY => CH_UX,
            c => c,
        };
        for i in 0..w {
            for j in 0..h {
                out.set(ch, i, j, s.get(src, j, i));
            }
        }
    }
    Snapshot::new(out).expect("transpose preserves finiteness")
}

/// Rotate the state by 90 degrees counterclockwise, transforming velocity
/// as a vector: (x, y) -> (-y, x), (ux, uy) -> (-uy, ux).
pub fn rotate90(s: &Snapshot) -> Snapshot {
    reflect_cols(&transpose(s))
}

/// Max-abs difference between two snapshots across all channels.
pub fn max_abs_diff(a: &Snapshot, b: &Snapshot) -> f64 {
    a.fields().max_abs_diff(b.fields())
}

/// Energy proxy `sum(p'^2 + rho_c^2 (ux'^2 + uy'^2))` used for outflow checks.
pub fn energy_proxy(s: &Snapshot, bg: &BackgroundState) -> f64 {
    let rc2 = bg.rho_c * bg.rho_c;
    let mut e = 0.0;
    for ((p, ux), uy) in s
        .fields()
        .channel(CH_P)
        .iter()
        .zip(s.fields().channel(CH_UX))
        .zip(s.fields().channel(CH_UY))
    {
        e += p * p + rc2 * (ux * ux + uy * uy);
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n: usize, t_steps: usize) -> SolverConfig {
        SolverConfig {
            n,
            t_steps,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn default_config_is_paper_scale() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.n, 256);
        assert_eq!(cfg.t_steps, 1500);
        assert_eq!(cfg.pulse_amp, 0.5);
        assert_eq!(cfg.pulse_hw, 0.3);
        assert_eq!(cfg.gamma, 1.4);
    }

    #[test]
    fn initial_condition_center_amplitude() {
        // n = 9 puts a cell center exactly at the origin.
        let cfg = small_cfg(9, 1);
        let s = initial_condition(&cfg).unwrap();
        assert_eq!(s.get(CH_P, 4, 4), 0.5);
    }

    #[test]
    fn initial_condition_half_width_is_half_max() {
        // With n = 9, extent = 2.25, dx = 0.5; pick hw = 2 dx so the cell two
        // columns right of center sits exactly one half-width away.
        let cfg = SolverConfig {
            n: 9,
            extent: 2.25,
            pulse_hw: 1.0,
            t_steps: 1,
            ..SolverConfig::default()
        };
        let s = initial_condition(&cfg).unwrap();
        assert!((s.get(CH_P, 4, 6) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn initial_condition_fluid_at_rest() {
        let cfg = small_cfg(16, 1);
        let s = initial_condition(&cfg).unwrap();
        assert!(s.fields().channel(CH_RHO).iter().all(|&v| v == 0.0));
        assert!(s.fields().channel(CH_UX).iter().all(|&v| v == 0.0));
        assert!(s.fields().channel(CH_UY).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_preserves_zero_state() {
        let cfg = small_cfg(16, 1);
        let bg = BackgroundState::from_config(&cfg);
        let s = Snapshot::zeros(16, 16);
        let next = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap();
        assert!(next.fields().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_rejects_unstable_dt() {
        let cfg = small_cfg(16, 1);
        let bg = BackgroundState::from_config(&cfg);
        let s = Snapshot::zeros(16, 16);
        let err = step(&s, &bg, cfg.dx(), cfg.dx()).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn step_reports_non_finite_state() {
        let cfg = small_cfg(16, 1);
        let bg = BackgroundState::from_config(&cfg);
        let mut fields = Tensor3::zeros(CHANNELS, 16, 16);
        for v in fields.data_mut() {
            *v = 1e308;
        }
        let s = Snapshot::new(fields).unwrap();
        let err = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn centered_pulse_keeps_dihedral_symmetry() {
        let cfg = small_cfg(32, 1);
        let bg = BackgroundState::from_config(&cfg);
        let mut s = initial_condition(&cfg).unwrap();
        for _ in 0..20 {
            s = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap();
            for t in [
                reflect_cols(&s),
                reflect_rows(&s),
                transpose(&s),
                rotate90(&s),
            ] {
                assert!(max_abs_diff(&s, &t) <= 1e-12);
            }
        }
    }

    #[test]
    fn step_is_linear_in_the_state() {
        let cfg = small_cfg(24, 1);
        let bg = BackgroundState::from_config(&cfg);
        let s = initial_condition(&cfg).unwrap();
        let base = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap();

        // Powers of two scale bit-exactly.
        let mut doubled = s.fields().clone();
        for v in doubled.data_mut() {
            *v *= 2.0;
        }
        let stepped2 = step(&Snapshot::new(doubled).unwrap(), &bg, cfg.dx(), cfg.dt()).unwrap();
        for (a, b) in stepped2.fields().iter().zip(base.fields().iter()) {
            assert_eq!(*a, 2.0 * b);
        }

        // Arbitrary scalars to rounding accuracy.
        let alpha = 0.37;
        let mut scaled = s.fields().clone();
        for v in scaled.data_mut() {
            *v *= alpha;
        }
        let stepped_a = step(&Snapshot::new(scaled).unwrap(), &bg, cfg.dx(), cfg.dt()).unwrap();
        for (a, b) in stepped_a.fields().iter().zip(base.fields().iter()) {
            assert!((a - alpha * b).abs() < 1e-14);
        }
    }

    #[test]
    fn density_change_equals_boundary_leakage() {
        // Interior fluxes telescope away, so the only way total density can
        // change is through the four outflow boundaries, where the ghost
        // state makes the density flux exactly rho_c * u_normal.
        let cfg = small_cfg(64, 1);
        let bg = BackgroundState::from_config(&cfg);
        let n = cfg.n;
        let mut s = initial_condition(&cfg).unwrap();
        for _ in 0..30 {
            let next = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap();
            let f = s.fields();
            let mut outflow = 0.0;
            for i in 0..n {
                outflow += bg.rho_c * (f.get(CH_UX, i, n - 1) - f.get(CH_UX, i, 0));
                outflow += bg.rho_c * (f.get(CH_UY, n - 1, i) - f.get(CH_UY, 0, i));
            }
            let total_before: f64 = f.channel(CH_RHO).iter().sum();
            let total_after: f64 = next.fields().channel(CH_RHO).iter().sum();
            let leak = cfg.dt() / cfg.dx() * outflow;
            assert!(
                (total_after - total_before + leak).abs() < 1e-11,
                "density change {} vs boundary leakage {}",
                total_after - total_before,
                -leak
            );
            s = next;
        }
    }

    #[test]
    fn refinement_halves_the_error_on_a_smooth_pulse() {
        // Self-convergence: compare each grid against the 2x finer one
        // restricted by cell averaging, at the same physical time.
        fn solve_to(cfg: &SolverConfig, t_end: f64) -> Snapshot {
            let bg = BackgroundState::from_config(cfg);
            let steps = (t_end / cfg.dt()).round() as usize;
            let mut s = initial_condition(cfg).unwrap();
            for _ in 0..steps {
                s = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap();
            }
            s
        }
        fn restrict(fine: &Snapshot) -> Vec<f64> {
            let n = fine.h() / 2;
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = 0.25
                        * (fine.get(CH_P, 2 * i, 2 * j)
                            + fine.get(CH_P, 2 * i + 1, 2 * j)
                            + fine.get(CH_P, 2 * i, 2 * j + 1)
                            + fine.get(CH_P, 2 * i + 1, 2 * j + 1));
                }
            }
            out
        }
        fn l1_err(coarse: &Snapshot, fine: &Snapshot) -> f64 {
            let restricted = restrict(fine);
            coarse
                .fields()
                .channel(CH_P)
                .iter()
                .zip(&restricted)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / restricted.len() as f64
        }
        // A wide pulse keeps even the coarse grid resolved, so the observed
        // order approaches the scheme's first-order limit.
        fn wide_pulse(n: usize) -> SolverConfig {
            SolverConfig {
                pulse_hw: 0.6,
                ..small_cfg(n, 1)
            }
        }
        let t_end = 0.3;
        let s64 = solve_to(&wide_pulse(64), t_end);
        let s128 = solve_to(&wide_pulse(128), t_end);
        let s256 = solve_to(&wide_pulse(256), t_end);
        let e_coarse = l1_err(&s64, &s128);
        let e_fine = l1_err(&s128, &s256);
        let slope = (e_coarse / e_fine).log2();
        assert!(
            (0.8..1.6).contains(&slope),
            "observed convergence slope {slope}"
        );
    }

    #[test]
    fn energy_proxy_decays_after_boundary_contact() {
        let cfg = small_cfg(64, 1);
        let bg = BackgroundState::from_config(&cfg);
        // Wavefront reaches the boundary after extent / c of physical time.
        let contact_step = (cfg.extent / bg.sound_speed() / cfg.dt()).ceil() as usize;
        let mut s = initial_condition(&cfg).unwrap();
        let mut e_contact = 0.0;
        for step_idx in 1..=contact_step + 120 {
            s = step(&s, &bg, cfg.dx(), cfg.dt()).unwrap();
            if step_idx == contact_step {
                e_contact = energy_proxy(&s, &bg);
            }
        }
        let e_end = energy_proxy(&s, &bg);
        assert!(e_end < e_contact);
    }

    #[test]
    fn run_with_one_step_yields_only_the_initial_condition() {
        let cfg = small_cfg(16, 1);
        let d = run(&cfg).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.frames[0], initial_condition(&cfg).unwrap());
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = small_cfg(24, 12);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
